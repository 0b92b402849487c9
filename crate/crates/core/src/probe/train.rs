use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LinearProbe, Mask};
use crate::dataset::SplitView;
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Hyperparameters for [`train`].
///
/// `inclusion_prob` is the fixed per-dimension Bernoulli rate of the mask
/// sampler. `patience` counts dev evaluations (one per epoch) without
/// improvement before stopping; `0` disables early stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub masks_per_example: usize,
    pub inclusion_prob: f64,
    pub seed: u64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 256,
            masks_per_example: 1,
            inclusion_prob: 0.5,
            seed: 0,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.masks_per_example == 0 {
            return bad("masks_per_example must be positive");
        }
        if !(self.inclusion_prob > 0.0 && self.inclusion_prob < 1.0) {
            return bad("inclusion_prob must lie strictly inside (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub config: TrainConfig,
    pub epochs_run: usize,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    /// Dev masked NLL (summed over records, averaged over the fixed mask set) at `best_epoch`.
    pub best_dev_nll: f64,
    /// Mean per-example masked cross-entropy over the last epoch run.
    pub final_train_loss: f64,
    pub stopped_early: bool,
}

/// Draws a mask where each of the `d` dimensions is kept independently with
/// probability `inclusion_prob`.
pub fn sample_mask<R: Rng + ?Sized>(d: usize, inclusion_prob: f64, rng: &mut R) -> Mask {
    Mask::from_bools((0..d).map(|_| rng.random::<f64>() < inclusion_prob).collect())
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

/// Trains a probe on `train_set` by minimising the masked cross-entropy under
/// Bernoulli-sampled dimension masks, keeping the weights with the lowest dev
/// masked NLL. Fully deterministic for a given `config.seed`.
///
/// The returned weights are rounded to `f32` so that a saved probe reloads to
/// the identical value.
pub fn train(train_set: &SplitView<'_>, dev_set: &SplitView<'_>, config: &TrainConfig) -> Result<LinearProbe> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptySplit(train_set.split()));
    }
    if dev_set.is_empty() {
        return Err(Error::EmptySplit(dev_set.split()));
    }
    let manifest = &train_set.dataset().manifest;
    let dev_manifest = &dev_set.dataset().manifest;
    if manifest.d != dev_manifest.d || manifest.label_inventory != dev_manifest.label_inventory {
        return Err(Error::InconsistentMetadata(
            "train and dev sets disagree on d or label inventory".into(),
        ));
    }
    manifest.validate()?;

    let d = manifest.d;
    let num_labels = manifest.num_labels();
    let mut probe = LinearProbe::zeros(manifest.label_inventory.clone(), d);
    let mut rng = seeded_rng(config.seed);
    let m = config.masks_per_example;

    let dev_masks: Vec<Mask> = (0..dev_set.len() * m)
        .map(|_| sample_mask(d, config.inclusion_prob, &mut rng))
        .collect();
    let mut scratch = vec![0.0; num_labels];
    let mut dev_nll = |probe: &LinearProbe| -> f64 {
        let mut total = 0.0;
        for (i, (h, label)) in dev_set.examples().enumerate() {
            for mask in &dev_masks[i * m..(i + 1) * m] {
                probe.logits_unchecked(h, mask, &mut scratch);
                total += crate::special::log_sum_exp(&scratch) - scratch[label];
            }
        }
        total / m as f64
    };

    let mut adam = Adam::new(num_labels * d);
    let mut grad = vec![0.0; num_labels * d];
    let mut logits = vec![0.0; num_labels];
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best_weights = probe.weights().to_vec();
    let mut best_dev = dev_nll(&probe);
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut final_train_loss = f64::NAN;
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (h, label) = train_set.example(i);
                for _ in 0..m {
                    let mask = sample_mask(d, config.inclusion_prob, &mut rng);
                    batch_loss += probe.loss_and_grad(h, label, &mask, &mut grad, &mut logits);
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence { epoch: epoch + 1, batch: b });
            }
            let scale = 1.0 / (batch.len() * m) as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(probe.weights_mut(), &grad, config.learning_rate);
            if probe.weights().iter().any(|w| !w.is_finite()) {
                return Err(Error::Divergence { epoch: epoch + 1, batch: b });
            }
            epoch_loss += batch_loss;
        }
        epochs_run = epoch + 1;
        final_train_loss = epoch_loss / (train_set.len() * m) as f64;

        let dev = dev_nll(&probe);
        if !dev.is_finite() {
            return Err(Error::Divergence { epoch: epoch + 1, batch: 0 });
        }
        if dev < best_dev {
            best_dev = dev;
            best_epoch = epoch + 1;
            best_weights.copy_from_slice(probe.weights());
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience > 0 && since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    for (w, best) in probe.weights_mut().iter_mut().zip(&best_weights) {
        *w = *best as f32 as f64;
    }
    probe.train_meta = Some(TrainMeta {
        config: config.clone(),
        epochs_run,
        best_epoch,
        best_dev_nll: best_dev,
        final_train_loss,
        stopped_early,
    });
    Ok(probe)
}
