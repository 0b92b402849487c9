use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{masked_nll_view, sample_mask, LinearProbe, TrainConfig};
use crate::dataset::{ProbeDataset, Split};
use crate::error::{Error, Result};

/// Monte Carlo estimate of the variational lower bound.
///
/// `data_term` estimates `Σ_n E_{C~q}[log p(π_n | h_n, C)]`. The prior and
/// entropy terms are per-example constants for a fixed-rate Bernoulli `q`
/// and a uniform prior over all `2^d` subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub data_term: f64,
    /// Standard error of `data_term`; `None` with a single sample.
    pub data_std_error: Option<f64>,
    /// `log p(C) = −d ln 2`.
    pub log_prior: f64,
    /// `H(q) = d · H_b(inclusion_prob)`.
    pub entropy: f64,
    pub num_examples: usize,
    pub num_samples: usize,
}

impl LowerBound {
    pub fn total(&self) -> f64 {
        self.data_term + self.num_examples as f64 * (self.log_prior + self.entropy)
    }
}

/// Binary entropy in nats.
pub(crate) fn binary_entropy(p: f64) -> f64 {
    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
}

/// Each sample draws one mask from `q` and scores every record of `split`
/// under it; the data term is the mean of those per-sample totals.
pub fn lower_bound_estimate<R: Rng + ?Sized>(
    probe: &LinearProbe,
    dataset: &ProbeDataset,
    split: Split,
    config: &TrainConfig,
    num_samples: usize,
    rng: &mut R,
) -> Result<LowerBound> {
    if num_samples == 0 {
        return Err(Error::InvalidArgument("num_samples must be at least 1".into()));
    }
    config.validate()?;
    let view = dataset.view(split).non_empty()?;
    let d = probe.d();

    // Welford running mean/variance over per-sample data terms.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for s in 0..num_samples {
        let mask = sample_mask(d, config.inclusion_prob, rng);
        let value = -masked_nll_view(probe, &view, &mask)?;
        let delta = value - mean;
        mean += delta / (s + 1) as f64;
        m2 += delta * (value - mean);
    }
    let data_std_error = (num_samples > 1).then(|| (m2 / (num_samples - 1) as f64 / num_samples as f64).sqrt());

    Ok(LowerBound {
        data_term: mean,
        data_std_error,
        log_prior: -(d as f64) * std::f64::consts::LN_2,
        entropy: d as f64 * binary_entropy(config.inclusion_prob),
        num_examples: view.len(),
        num_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{masked_nll, Mask};
    use crate::rng::seeded_rng;
    use crate::synth::{generate_planted, PlantedSpec};

    fn setup(d: usize, seed: u64) -> (LinearProbe, ProbeDataset) {
        let (ds, _) = generate_planted(&PlantedSpec {
            d,
            k_true: 2,
            planted_dims: None,
            n_per_class: 6,
            num_labels: 3,
            class_separation: 2.0,
            noise_std: 1.0,
            seed,
        })
        .unwrap();
        let mut rng = seeded_rng(seed + 100);
        let w = (0..3 * d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let probe = LinearProbe::from_weights(ds.manifest.label_inventory.clone(), d, w).unwrap();
        (probe, ds)
    }

    /// Σ_C q(C) · Σ_n log p(π_n | h_C) over all 2^d subsets.
    fn enumerate_data_term(probe: &LinearProbe, ds: &ProbeDataset, split: Split, rho: f64) -> f64 {
        let d = probe.d();
        (0u32..1 << d)
            .map(|bits| {
                let mask = Mask::from_bools((0..d).map(|j| bits >> j & 1 == 1).collect());
                let k = mask.len() as i32;
                let q = rho.powi(k) * (1.0 - rho).powi(d as i32 - k);
                -q * masked_nll(probe, ds, split, &mask).unwrap()
            })
            .sum()
    }

    #[test]
    fn entropy_for_half_rate() {
        let (probe, ds) = setup(4, 1);
        let lb = lower_bound_estimate(&probe, &ds, Split::Train, &TrainConfig::default(), 1, &mut seeded_rng(0)).unwrap();
        assert!((lb.entropy - 4.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(lb.log_prior, -4.0 * std::f64::consts::LN_2);
        assert!(lb.data_std_error.is_none());
        // at rate 1/2 the prior and entropy cancel
        assert!((lb.total() - lb.data_term).abs() < 1e-9);
    }

    #[test]
    fn single_sample_is_reproducible() {
        let (probe, ds) = setup(5, 2);
        let cfg = TrainConfig::default();
        let a = lower_bound_estimate(&probe, &ds, Split::Train, &cfg, 1, &mut seeded_rng(9)).unwrap();
        let b = lower_bound_estimate(&probe, &ds, Split::Train, &cfg, 1, &mut seeded_rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_converges_to_enumeration() {
        for (d, rho) in [(4usize, 0.5), (7, 0.3), (10, 0.5)] {
            let (probe, ds) = setup(d, d as u64);
            let cfg = TrainConfig {
                inclusion_prob: rho,
                ..Default::default()
            };
            let exact = enumerate_data_term(&probe, &ds, Split::Train, rho);
            let lb = lower_bound_estimate(&probe, &ds, Split::Train, &cfg, 20_000, &mut seeded_rng(d as u64)).unwrap();
            let se = lb.data_std_error.unwrap();
            assert!(
                (lb.data_term - exact).abs() <= 3.0 * se,
                "d={d}: mc {} exact {exact} se {se}",
                lb.data_term
            );
        }
    }
}
