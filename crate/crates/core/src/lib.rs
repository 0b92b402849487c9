//! Latent-variable intrinsic probing of embedding dimensions.
//!
//! The crate trains a masked linear-softmax probe over word embeddings,
//! greedily selects the `k` dimensions ("neurons") that best predict a
//! morphosyntactic category, measures how much those neuron sets overlap
//! across languages, and correlates overlap trajectories across training
//! checkpoints with downstream transfer scores.
//!
//! | module | contents |
//! |---|---|
//! | [`dataset`] | bundle format, lemma-disjoint splitting, frequency filter |
//! | [`probe`] | masked softmax probe, lower-bound estimate, training |
//! | [`selection`] | greedy and exhaustive neuron selection |
//! | [`overlap`] | pairwise overlap rates, hypergeometric significance, trajectories |
//! | [`analysis`] | Pearson correlation against downstream metrics |
//! | [`synth`] | planted-signal datasets with known informative dimensions |

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod overlap;
pub mod probe;
pub mod rng;
pub mod selection;
pub mod special;
pub mod synth;

pub use dataset::{ProbeDataset, Split};
pub use error::{Error, Result};
pub use probe::{LinearProbe, Mask, TrainConfig};
pub use selection::SelectionResult;
