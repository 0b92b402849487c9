//! Run configuration: built-in defaults, then a TOML file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use intrinsic_probe::dataset::{SplitRatios, DEFAULT_LEMMA_THRESHOLD};
use intrinsic_probe::selection::DEFAULT_K;
use intrinsic_probe::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "IPROBE_CONFIG";

/// Probe hyperparameters as they appear in the config file. The training
/// seed always comes from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub masks_per_example: usize,
    pub inclusion_prob: f64,
    pub patience: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSettings {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            masks_per_example: t.masks_per_example,
            inclusion_prob: t.inclusion_prob,
            patience: t.patience,
        }
    }
}

impl TrainSettings {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            masks_per_example: self.masks_per_example,
            inclusion_prob: self.inclusion_prob,
            seed,
            patience: self.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub k: usize,
    pub layers: Vec<u32>,
    pub categories: Vec<String>,
    pub alpha: f64,
    pub bonferroni: bool,
    /// Minimum per-split lemma frequency.
    pub threshold: usize,
    /// Worker threads; 0 uses one per core.
    pub jobs: usize,
    pub out: PathBuf,
    /// Directories searched recursively for bundles.
    pub bundle_roots: Vec<PathBuf>,
    /// Languages to include, in matrix order. Empty means every language found.
    pub languages: Vec<String>,
    /// Source side of the pairwise correlation.
    pub source_language: String,
    /// Model whose rows are read from the metrics file. Empty accepts the
    /// file's only model tag.
    pub model_tag: String,
    pub metrics: Option<PathBuf>,
    pub ratios: SplitRatios,
    pub train: TrainSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            k: DEFAULT_K,
            layers: vec![13, 17],
            categories: vec!["Number".into(), "Gender".into(), "POS".into()],
            alpha: 0.05,
            bonferroni: false,
            threshold: DEFAULT_LEMMA_THRESHOLD,
            jobs: 0,
            out: PathBuf::from("iprobe-out"),
            bundle_roots: Vec::new(),
            languages: Vec::new(),
            source_language: "en".into(),
            model_tag: String::new(),
            metrics: None,
            ratios: SplitRatios::default(),
            train: TrainSettings::default(),
        }
    }
}

/// Values given on the command line. `None` leaves the lower layer in place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub layers: Option<Vec<u32>>,
    pub categories: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub threshold: Option<usize>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a TOML config. Relative paths inside it are taken relative to
    /// `base` (normally the file's directory).
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::invalid(format!("config: {e}")))?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.out);
        cfg.bundle_roots.iter_mut().for_each(rebase);
        if let Some(m) = cfg.metrics.as_mut() {
            rebase(m);
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base)
    }

    /// Defaults, then the file (if any), then the overrides.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.k {
            self.k = v;
        }
        if let Some(v) = &o.layers {
            self.layers = v.clone();
        }
        if let Some(v) = &o.categories {
            self.categories = v.clone();
        }
        if let Some(v) = o.alpha {
            self.alpha = v;
        }
        if let Some(v) = o.threshold {
            self.threshold = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.k == 0 {
            return Err(CliError::invalid("k must be positive"));
        }
        if self.layers.is_empty() {
            return Err(CliError::invalid("at least one layer is required"));
        }
        if self.categories.is_empty() {
            return Err(CliError::invalid("at least one category is required"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(CliError::invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        self.ratios.validate()?;
        self.train.with_seed(self.seed).validate()?;
        for root in &self.bundle_roots {
            if !root.is_dir() {
                return Err(CliError::invalid(format!("bundle root {} does not exist", root.display())));
            }
        }
        if let Some(m) = &self.metrics {
            if !m.is_file() {
                return Err(CliError::invalid(format!("metrics file {} does not exist", m.display())));
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.with_seed(self.seed)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.k, 50);
        assert_eq!(c.layers, [13, 17]);
        assert_eq!(c.categories, ["Number", "Gender", "POS"]);
        assert_eq!(c.threshold, 20);
        assert_eq!(c.train_config(), TrainConfig::default());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml("k = 8\n[train]\nepochs = 3\n", Path::new("/cfg")).unwrap();
        assert_eq!(c.k, 8);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 256);
        assert_eq!(c.layers, [13, 17]);
        assert_eq!(c.out, Path::new("/cfg/iprobe-out"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("kk = 3\n", Path::new("")).is_err());
        assert!(RunConfig::from_toml("[train]\nseed = 3\n", Path::new("")).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.metrics = Some("/m.csv".into());
        c.out = "/o".into();
        assert_eq!(RunConfig::from_toml(&c.to_toml(), Path::new("")).unwrap(), c);
    }
}
