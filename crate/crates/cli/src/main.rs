fn main() {
    std::process::exit(iprobe_cli::main_with_args(std::env::args_os()));
}
