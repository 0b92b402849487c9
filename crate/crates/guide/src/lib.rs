//! Compiles and runs the code blocks of the mdbook guide in `book/`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/bundles.md")]
pub mod bundles {}

#[doc = include_str!("../../../book/src/probe.md")]
pub mod probe {}

#[doc = include_str!("../../../book/src/lower-bound.md")]
pub mod lower_bound {}

#[doc = include_str!("../../../book/src/selection.md")]
pub mod selection {}

#[doc = include_str!("../../../book/src/overlap.md")]
pub mod overlap {}

#[doc = include_str!("../../../book/src/correlation.md")]
pub mod correlation {}

#[doc = include_str!("../../../book/src/synth.md")]
pub mod synth {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
