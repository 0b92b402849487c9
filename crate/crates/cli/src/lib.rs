//! `iprobe`: the probing pipeline from bundles to correlation tables.
//!
//! Each subcommand prints a JSON summary on stdout. Failures print
//! `{"error": "invalid_input" | "internal", "message": ...}` on stderr and
//! exit with 2 or 1.

pub mod config;
pub mod error;
pub mod layout;
pub mod pipeline;
pub mod report;
pub mod synth;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{Overrides, RunConfig, CONFIG_ENV};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "iprobe", version, about = "Latent-variable intrinsic probing and cross-lingual neuron overlap")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of dimensions to select
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub layers: Option<Vec<u32>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub categories: Option<Vec<String>>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Minimum lemma frequency per split
    #[arg(long, global = true)]
    pub threshold: Option<usize>,
    /// Worker threads (0 = one per core)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory for `run`
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            k: self.k,
            layers: self.layers.clone(),
            categories: self.categories.clone(),
            alpha: self.alpha,
            threshold: self.threshold,
            jobs: self.jobs,
            out: self.out.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the effective configuration as TOML
    Config,
    /// Write a synthetic study (planted bundles and a metrics file)
    Synth(SynthArgs),
    /// Split a raw bundle by lemma and drop rare lemmas
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a probe on a prepared bundle
    Train {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Greedily select k dimensions on the dev split
    Select {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        probe: PathBuf,
        /// Path of the selection.json to write
        #[arg(long)]
        output: PathBuf,
    },
    /// Pairwise overlap matrices from a tree of selection files
    Overlap {
        #[arg(long)]
        selections: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Correlate overlap with downstream metrics
    Correlate {
        /// Directory written by `overlap`
        #[arg(long)]
        overlap: PathBuf,
        /// Defaults to `metrics` from the config
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Plot-ready tables from overlap matrices and optional metrics
    Report {
        #[arg(long)]
        overlap: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// The whole pipeline over every configured bundle
    Run,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "en,fr,de")]
    pub languages: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,3000,4000,5000,6000")]
    pub steps: Vec<u64>,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long, default_value_t = 8)]
    pub k_true: usize,
    #[arg(long, default_value_t = 100)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 2)]
    pub labels: usize,
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Leave splits unassigned so the bundles need `prepare`
    #[arg(long)]
    pub raw: bool,
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| CliError::internal(e.to_string()))
}

fn metrics_path(flag: Option<PathBuf>, cfg: &RunConfig) -> Option<PathBuf> {
    flag.or_else(|| cfg.metrics.clone())
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let cfg = RunConfig::resolve(cli.global.config.as_deref(), &cli.global.overrides())?;
    match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::Synth(a) => {
            let spec = synth::StudySpec {
                languages: a.languages,
                steps: a.steps,
                d: a.d,
                k_true: a.k_true,
                n_per_class: a.n_per_class,
                num_labels: a.labels,
                separation: a.separation,
                noise: a.noise,
                raw: a.raw,
            };
            print_json(&synth::write_study(&spec, &cfg, &a.output)?)
        }
        Command::Prepare { input, output } => print_json(&pipeline::prepare(&input, &output, &cfg)?),
        Command::Train { bundle, output } => print_json(&pipeline::train_probe(&bundle, &output, &cfg)?),
        Command::Select { bundle, probe, output } => {
            let probe_ref = Some(probe.display().to_string());
            let r = pipeline::select(&bundle, &probe, &output, &cfg, probe_ref)?;
            print_json(&serde_json::json!({
                "ordered_dims": r.ordered_dims.iter().map(|i| i + 1).collect::<Vec<_>>(),
                "final_loglik": r.final_loglik(),
            }))
        }
        Command::Overlap { selections, output } => {
            let paths = layout::find_selections(&selections)?;
            let matrices = pipeline::overlap(&paths, &output, &cfg)?;
            print_json(&serde_json::json!({ "selections": paths.len(), "matrices": matrices.len() }))
        }
        Command::Correlate { overlap, metrics, output } => {
            let metrics = metrics_path(metrics, &cfg).ok_or_else(|| CliError::invalid("no metrics file given"))?;
            let matrices = pipeline::load_matrices(&overlap, &cfg)?;
            let reports = pipeline::correlate(&matrices, &metrics, &output, &cfg)?;
            let cells: Vec<_> = reports
                .iter()
                .map(|r| serde_json::json!({ "task": r.task, "mode": r.mode, "cell": r.formatted(), "n": r.n }))
                .collect();
            print_json(&cells)
        }
        Command::Report { overlap, metrics, output } => {
            let metrics = metrics_path(metrics, &cfg);
            let matrices = pipeline::load_matrices(&overlap, &cfg)?;
            let tables = report::write_report(&matrices, metrics.as_deref(), &output, &cfg)?;
            print_json(&tables)
        }
        Command::Run => print_json(&pipeline::run(&cfg)?),
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            eprintln!("{}", CliError::invalid(e.to_string().trim_end()).to_json());
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
