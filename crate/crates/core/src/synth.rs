//! Synthetic datasets with a known informative subset of dimensions.
//!
//! The generator first builds a canonical layout in which the planted
//! dimensions are columns `0..k_true`, then moves them to their target
//! positions. Two specs that differ only in `planted_dims` therefore produce
//! the same dataset up to a column permutation.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{split::pick_split, Manifest, Matrix, ProbeDataset, Record, Split, SplitRatios, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::selection::SelectionResult;

/// Stream offset for drawing random planted positions, so that they never
/// share draws with the embedding noise.
const PLACEMENT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub d: usize,
    pub k_true: usize,
    /// Target columns of the planted dimensions. `None` draws them from the seed.
    pub planted_dims: Option<Vec<usize>>,
    pub n_per_class: usize,
    pub num_labels: usize,
    /// Distance between the two values a planted dimension's class mean takes.
    pub class_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            d: 64,
            k_true: 8,
            planted_dims: None,
            n_per_class: 500,
            num_labels: 2,
            class_separation: 6.0,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be positive".into()));
        }
        if self.k_true > self.d {
            return Err(Error::KExceedsD {
                k: self.k_true,
                d: self.d,
            });
        }
        if self.num_labels < 2 {
            return Err(Error::InvalidArgument("need at least 2 labels".into()));
        }
        if !(self.class_separation.is_finite() && self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument(
                "class_separation must be finite and noise_std finite and non-negative".into(),
            ));
        }
        if let Some(dims) = &self.planted_dims {
            if dims.len() != self.k_true {
                return Err(Error::InvalidArgument(format!(
                    "planted_dims has {} entries, k_true is {}",
                    dims.len(),
                    self.k_true
                )));
            }
            let set: BTreeSet<usize> = dims.iter().copied().collect();
            if set.len() != dims.len() || set.iter().any(|&j| j >= self.d) {
                return Err(Error::InvalidArgument(format!(
                    "planted_dims must be distinct and below d = {}",
                    self.d
                )));
            }
        }
        Ok(())
    }

    /// Planted positions in canonical order.
    pub fn resolve_planted(&self) -> Vec<usize> {
        match &self.planted_dims {
            Some(dims) => dims.clone(),
            None => {
                let mut rng = seeded_rng(self.seed ^ PLACEMENT_STREAM);
                sample(&mut rng, self.d, self.k_true).into_vec()
            }
        }
    }
}

/// Class mean of canonical planted column `i` for label `c`.
fn planted_mean(i: usize, c: usize, num_labels: usize, separation: f64) -> f64 {
    if i % num_labels == c {
        separation / 2.0
    } else {
        -separation / 2.0
    }
}

/// Generates a split dataset and its ground-truth informative dimensions.
///
/// Records cycle through the labels; each has its own lemma, and each class
/// is split by the default ratios.
pub fn generate_planted(spec: &PlantedSpec) -> Result<(ProbeDataset, BTreeSet<usize>)> {
    spec.validate()?;
    let (d, k, l) = (spec.d, spec.k_true, spec.num_labels);
    let planted = spec.resolve_planted();

    // column_of[canonical] = actual column
    let mut column_of = planted.clone();
    let taken: BTreeSet<usize> = planted.iter().copied().collect();
    column_of.extend((0..d).filter(|j| !taken.contains(j)));

    let n = spec.n_per_class * l;
    let mut rng = seeded_rng(spec.seed);
    let mut data = vec![0f32; n * d];
    let mut records = Vec::with_capacity(n);
    let ratios = SplitRatios::default();
    let targets = [ratios.train, ratios.dev, ratios.test];
    let mut counts = vec![[0usize; 3]; l];
    for idx in 0..n {
        let c = idx % l;
        let row = &mut data[idx * d..(idx + 1) * d];
        for (i, &col) in column_of.iter().enumerate() {
            let mean = if i < k {
                planted_mean(i, c, l, spec.class_separation)
            } else {
                0.0
            };
            let z: f64 = StandardNormal.sample(&mut rng);
            row[col] = (mean + spec.noise_std * z) as f32;
        }
        let s = pick_split(&counts[c], &targets, spec.n_per_class);
        counts[c][s] += 1;
        records.push(Record {
            index: idx,
            form: format!("w{idx}"),
            lemma: format!("l{idx}"),
            label_id: c,
            split: Split::ASSIGNED[s],
        });
    }

    let mut sorted = planted.clone();
    sorted.sort_unstable();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        language: "synth".into(),
        category: "Planted".into(),
        layer: 0,
        checkpoint_step: 0,
        d,
        n,
        label_inventory: (0..l).map(|c| format!("label{c}")).collect(),
        source: format!(
            "planted dims {:?}, separation {}, noise {}, seed {}",
            sorted, spec.class_separation, spec.noise_std, spec.seed
        ),
    };
    let dataset = ProbeDataset::new(manifest, records, Matrix::new(n, d, data)?)?;
    Ok((dataset, planted.into_iter().collect()))
}

/// Fraction of the ground truth found among the first `|truth|` selected
/// dimensions. An empty truth counts as fully recovered.
pub fn recovery_score(selection: &SelectionResult, truth: &BTreeSet<usize>) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let hits = selection
        .ordered_dims
        .iter()
        .take(truth.len())
        .filter(|j| truth.contains(j))
        .count();
    hits as f64 / truth.len() as f64
}
