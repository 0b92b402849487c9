//! Masked linear-softmax probe.
//!
//! The probe scores a label `π` for an embedding `h` restricted to a
//! dimension subset `C` as `softmax(W · h_C)[π]`, where `h_C` zeroes every
//! dimension outside `C`. `W` has one row per label and no bias.
//!
//! Dimension indices are 0-based throughout the library. File formats that
//! expose dimension indices (`selection.json`) use 1-based indices.

mod bound;
mod io;
mod train;

use crate::dataset::{ProbeDataset, Split, SplitView};
use crate::error::{Error, Result};
use crate::special::log_sum_exp;

pub use bound::{lower_bound_estimate, LowerBound};
pub use io::{load_probe, save_probe, ProbeFile, PROBE_FILE, WEIGHTS_FILE, WEIGHTS_MAGIC};
pub use train::{sample_mask, train, TrainConfig, TrainMeta};

/// A subset of embedding dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    included: Vec<bool>,
}

impl Mask {
    pub fn full(d: usize) -> Self {
        Mask {
            included: vec![true; d],
        }
    }

    pub fn empty(d: usize) -> Self {
        Mask {
            included: vec![false; d],
        }
    }

    pub fn from_bools(included: Vec<bool>) -> Self {
        Mask { included }
    }

    /// Builds a mask over `d` dimensions from 0-based indices. Duplicates collapse.
    pub fn from_indices(d: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut m = Mask::empty(d);
        for i in indices {
            if i >= d {
                return Err(Error::InvalidArgument(format!("dimension index {i} out of range for d = {d}")));
            }
            m.included[i] = true;
        }
        Ok(m)
    }

    pub fn d(&self) -> usize {
        self.included.len()
    }

    pub fn contains(&self, dim: usize) -> bool {
        self.included.get(dim).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, dim: usize) {
        self.included[dim] = true;
    }

    pub fn len(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.included.iter().any(|&b| b)
    }

    /// Included dimensions in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        self.included
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn as_bools(&self) -> &[bool] {
        &self.included
    }

    /// `h` with every excluded dimension set to zero.
    pub fn apply(&self, h: &[f32]) -> Vec<f32> {
        h.iter()
            .zip(&self.included)
            .map(|(&v, &keep)| if keep { v } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    weights: Vec<f64>,
    labels: Vec<String>,
    d: usize,
    pub train_meta: Option<TrainMeta>,
}

impl LinearProbe {
    pub fn zeros(labels: Vec<String>, d: usize) -> Self {
        LinearProbe {
            weights: vec![0.0; labels.len() * d],
            labels,
            d,
            train_meta: None,
        }
    }

    /// `weights` is row-major, one row of length `d` per label.
    pub fn from_weights(labels: Vec<String>, d: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != labels.len() * d {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * d,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("probe weights must be finite".into()));
        }
        Ok(LinearProbe {
            weights,
            labels,
            d,
            train_meta: None,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn weight(&self, label: usize, dim: usize) -> f64 {
        self.weights[label * self.d + dim]
    }

    fn check_input(&self, h: &[f32], mask: &Mask) -> Result<()> {
        if h.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: h.len(),
            });
        }
        if mask.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: mask.d(),
            });
        }
        Ok(())
    }

    /// `W · h_C`, accumulated over dimensions in ascending order.
    pub(crate) fn logits_unchecked(&self, h: &[f32], mask: &Mask, out: &mut [f64]) {
        for (c, row) in self.weights.chunks_exact(self.d).enumerate() {
            let mut acc = 0.0;
            for ((&w, &x), &keep) in row.iter().zip(h).zip(mask.as_bools()) {
                let x = if keep { x as f64 } else { 0.0 };
                acc += w * x;
            }
            out[c] = acc;
        }
    }

    pub fn logits(&self, h: &[f32], mask: &Mask) -> Result<Vec<f64>> {
        self.check_input(h, mask)?;
        let mut out = vec![0.0; self.num_labels()];
        self.logits_unchecked(h, mask, &mut out);
        Ok(out)
    }

    /// Label distribution `softmax(W · h_C)`.
    pub fn forward(&self, h: &[f32], mask: &Mask) -> Result<Vec<f64>> {
        let logits = self.logits(h, mask)?;
        let lse = log_sum_exp(&logits);
        Ok(logits.iter().map(|z| (z - lse).exp()).collect())
    }

    /// `log p(label | h_C)`.
    pub fn log_prob(&self, h: &[f32], label: usize, mask: &Mask) -> Result<f64> {
        let logits = self.logits(h, mask)?;
        Ok(logits[label] - log_sum_exp(&logits))
    }

    /// Masked cross-entropy `−log softmax(W · h_C)[label]` for one example.
    /// Its gradient with respect to `W` is added into `grad` (row-major, same
    /// shape as the weights); `scratch` must hold `num_labels` values.
    pub fn loss_and_grad(&self, h: &[f32], label: usize, mask: &Mask, grad: &mut [f64], scratch: &mut [f64]) -> f64 {
        self.logits_unchecked(h, mask, scratch);
        let lse = log_sum_exp(scratch);
        let loss = lse - scratch[label];
        for (c, grow) in grad.chunks_exact_mut(self.d).enumerate() {
            let p = (scratch[c] - lse).exp();
            let coeff = if c == label { p - 1.0 } else { p };
            for ((g, &x), &keep) in grow.iter_mut().zip(h).zip(mask.as_bools()) {
                if keep {
                    *g += coeff * x as f64;
                }
            }
        }
        loss
    }

    pub(crate) fn check_dataset(&self, dataset: &ProbeDataset) -> Result<()> {
        if dataset.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: dataset.d(),
            });
        }
        if dataset.manifest.label_inventory != self.labels {
            return Err(Error::InconsistentMetadata(format!(
                "probe labels {:?} differ from dataset labels {:?}",
                self.labels, dataset.manifest.label_inventory
            )));
        }
        Ok(())
    }
}

/// `−Σ_n log p(π_n | h_C^(n))` over the records of `split`, summed in record order.
pub fn masked_nll(probe: &LinearProbe, dataset: &ProbeDataset, split: Split, mask: &Mask) -> Result<f64> {
    masked_nll_view(probe, &dataset.view(split), mask)
}

pub fn masked_nll_view(probe: &LinearProbe, view: &SplitView<'_>, mask: &Mask) -> Result<f64> {
    if view.is_empty() {
        return Err(Error::EmptySplit(view.split()));
    }
    probe.check_dataset(view.dataset())?;
    if mask.d() != probe.d() {
        return Err(Error::DimensionMismatch {
            expected: probe.d(),
            found: mask.d(),
        });
    }
    let mut logits = vec![0.0; probe.num_labels()];
    let mut total = 0.0;
    for (h, label) in view.examples() {
        probe.logits_unchecked(h, mask, &mut logits);
        total += log_sum_exp(&logits) - logits[label];
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Manifest, Matrix, Record, FORMAT_VERSION};
    use proptest::prelude::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("L{i}")).collect()
    }

    fn toy_dataset(rows: &[(&[f32], usize)], num_labels: usize) -> ProbeDataset {
        let d = rows[0].0.len();
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            language: "eng".into(),
            category: "Number".into(),
            layer: 0,
            checkpoint_step: 0,
            d,
            n: rows.len(),
            label_inventory: labels(num_labels),
            source: String::new(),
        };
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (_, l))| Record {
                index: i,
                form: format!("w{i}"),
                lemma: format!("w{i}"),
                label_id: *l,
                split: Split::Dev,
            })
            .collect();
        let data = rows.iter().flat_map(|(h, _)| h.iter().copied()).collect();
        ProbeDataset::new(manifest, records, Matrix::new(rows.len(), d, data).unwrap()).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform() {
        let p = LinearProbe::zeros(labels(3), 4);
        let out = p.forward(&[1.0, -2.0, 3.0, 0.5], &Mask::from_indices(4, [1, 3]).unwrap()).unwrap();
        for v in out {
            assert_eq!(v, 1.0 / 3.0);
        }
    }

    #[test]
    fn full_mask_is_plain_softmax() {
        let p = LinearProbe::from_weights(labels(2), 3, vec![0.3, -1.0, 2.0, 0.1, 0.4, -0.7]).unwrap();
        let h = [0.5f32, 1.5, -0.25];
        let z0 = 0.3 * 0.5 + -1.0 * 1.5 + 2.0 * -0.25;
        let z1 = 0.1 * 0.5 + 0.4 * 1.5 + -0.7 * -0.25;
        let p0 = 1.0 / (1.0 + f64::exp(z1 - z0));
        let out = p.forward(&h, &Mask::full(3)).unwrap();
        assert!((out[0] - p0).abs() < 1e-15);
        assert!((out[1] - (1.0 - p0)).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_masked_softmax() {
        let p = LinearProbe::from_weights(labels(2), 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = p.forward(&[3.0, 1.0], &Mask::from_indices(2, [0]).unwrap()).unwrap();
        // softmax((3, 0)) = (e^3 / (e^3 + 1), 1 / (e^3 + 1))
        assert_eq!(format!("{:.4}", out[0]), "0.9526");
        assert_eq!(format!("{:.4}", out[1]), "0.0474");
    }

    #[test]
    fn dimension_mismatch() {
        let p = LinearProbe::zeros(labels(2), 3);
        assert!(p.forward(&[1.0, 2.0], &Mask::full(3)).is_err());
        assert!(p.forward(&[1.0, 2.0, 3.0], &Mask::full(2)).is_err());
    }

    #[test]
    fn zero_probe_nll_is_n_log_two() {
        let ds = toy_dataset(&[(&[1.0, 2.0], 0), (&[-1.0, 0.0], 1), (&[0.5, 0.5], 1)], 2);
        let p = LinearProbe::zeros(labels(2), 2);
        let nll = masked_nll(&p, &ds, Split::Dev, &Mask::full(2)).unwrap();
        assert_eq!(nll, 3.0 * std::f64::consts::LN_2);
    }

    #[test]
    fn three_record_nll_by_hand() {
        let ds = toy_dataset(&[(&[1.0, 2.0], 0), (&[-1.0, 0.0], 1), (&[0.5, 4.0], 1)], 2);
        let p = LinearProbe::from_weights(labels(2), 2, vec![2.0, -1.0, 0.0, 1.0]).unwrap();
        let mask = Mask::from_indices(2, [0]).unwrap();
        // logits with dim 1 masked: (2h0, 0)
        //   rec0: (2, 0) label 0 -> ln(1 + e^-2)
        //   rec1: (-2, 0) label 1 -> ln(1 + e^-2)
        //   rec2: (1, 0) label 1 -> ln(1 + e^1)
        let want = 2.0 * (1.0 + (-2.0f64).exp()).ln() + (1.0 + 1.0f64.exp()).ln();
        let got = masked_nll(&p, &ds, Split::Dev, &mask).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn empty_split_is_an_error() {
        let ds = toy_dataset(&[(&[1.0, 2.0], 0)], 2);
        let p = LinearProbe::zeros(labels(2), 2);
        assert!(matches!(
            masked_nll(&p, &ds, Split::Train, &Mask::full(2)),
            Err(Error::EmptySplit(Split::Train))
        ));
    }

    fn instance() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f32>, Vec<bool>)> {
        (1usize..9, 2usize..5).prop_flat_map(|(d, l)| {
            (
                Just(d),
                Just(l),
                prop::collection::vec(-3.0f64..3.0, d * l),
                prop::collection::vec(-3.0f32..3.0, d),
                prop::collection::vec(any::<bool>(), d),
            )
        })
    }

    proptest! {
        #[test]
        fn forward_is_a_distribution((d, l, w, h, m) in instance()) {
            let p = LinearProbe::from_weights(labels(l), d, w).unwrap();
            let out = p.forward(&h, &Mask::from_bools(m)).unwrap();
            prop_assert!(out.iter().all(|&v| v >= 0.0));
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn masking_commutes_with_forward((d, l, w, h, m) in instance()) {
            let p = LinearProbe::from_weights(labels(l), d, w).unwrap();
            let mask = Mask::from_bools(m);
            let a = p.forward(&h, &mask).unwrap();
            let b = p.forward(&mask.apply(&h), &Mask::full(d)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
