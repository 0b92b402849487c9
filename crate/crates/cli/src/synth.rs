//! A synthetic study: planted bundles for every (language, category, layer,
//! step) and a matching downstream metrics file.
//!
//! Within one (category, layer), each language plants `k_true` dimensions.
//! At checkpoint `t` of `T`, the first `round(k_true * (t + 1) / T)` of them
//! come from a pool shared by all languages and the rest are private to the
//! language, so cross-lingual overlap grows over training. Metrics rise with
//! the same shared fraction plus a little noise.

use std::collections::BTreeSet;
use std::path::Path;

use intrinsic_probe::dataset::{write_bundle, Split};
use intrinsic_probe::rng::seeded_rng;
use intrinsic_probe::selection::DatasetKey;
use intrinsic_probe::synth::{generate_planted, PlantedSpec};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::layout::{derive_seed, key_dir};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SYNTH_TASKS: [&str; 2] = ["pos", "xnli"];

/// Records per lemma in raw (unsplit) bundles.
const RAW_LEMMA_SIZE: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub languages: Vec<String>,
    pub steps: Vec<u64>,
    pub d: usize,
    pub k_true: usize,
    pub n_per_class: usize,
    pub num_labels: usize,
    pub separation: f64,
    pub noise: f64,
    /// Leave splits unassigned and give lemmas blocks of records, so that the
    /// bundles go through `prepare`.
    pub raw: bool,
}

impl Default for StudySpec {
    fn default() -> Self {
        StudySpec {
            languages: vec!["en".into(), "fr".into(), "de".into()],
            steps: (1..=6).map(|s| s * 1000).collect(),
            d: 64,
            k_true: 8,
            n_per_class: 100,
            num_labels: 2,
            separation: 6.0,
            noise: 1.0,
            raw: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySummary {
    pub bundles: usize,
    pub metric_rows: usize,
}

#[derive(Serialize)]
struct MetricRow<'a> {
    model_tag: &'a str,
    task: &'a str,
    target_language: &'a str,
    checkpoint_step: u64,
    metric_name: &'a str,
    value: f64,
}

fn shared_count(k: usize, t: usize, steps: usize) -> usize {
    ((k * (t + 1)) as f64 / steps as f64).round() as usize
}

/// Writes the bundles under `output/<language>/<category>/layer<L>/step<S>`
/// and `output/metrics.csv`.
pub fn write_study(spec: &StudySpec, cfg: &RunConfig, output: &Path) -> CliResult<StudySummary> {
    let langs = spec.languages.len();
    if langs == 0 || spec.steps.is_empty() {
        return Err(CliError::invalid("need at least one language and one step"));
    }
    if spec.steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::invalid("steps must be strictly increasing"));
    }
    if spec.languages.iter().collect::<BTreeSet<_>>().len() != langs {
        return Err(CliError::invalid("languages must be distinct"));
    }
    if spec.d < spec.k_true * (langs + 1) {
        return Err(CliError::invalid(format!(
            "d = {} cannot hold a shared pool plus {} private sets of {} dimensions",
            spec.d, langs, spec.k_true
        )));
    }

    let mut bundles = 0;
    for category in &cfg.categories {
        for &layer in &cfg.layers {
            let mut perm: Vec<usize> = (0..spec.d).collect();
            perm.shuffle(&mut seeded_rng(derive_seed(cfg.seed, &format!("planted/{category}/{layer}"))));
            let k = spec.k_true;
            for (li, language) in spec.languages.iter().enumerate() {
                let private = &perm[k * (li + 1)..k * (li + 2)];
                for (t, &step) in spec.steps.iter().enumerate() {
                    let s = shared_count(k, t, spec.steps.len());
                    let planted: Vec<usize> = perm[..s].iter().chain(&private[..k - s]).copied().collect();
                    let key = DatasetKey {
                        language: language.clone(),
                        category: category.clone(),
                        layer,
                        checkpoint_step: step,
                    };
                    let rel = key_dir(&key)?;
                    let (mut ds, _) = generate_planted(&PlantedSpec {
                        d: spec.d,
                        k_true: k,
                        planted_dims: Some(planted),
                        n_per_class: spec.n_per_class,
                        num_labels: spec.num_labels,
                        class_separation: spec.separation,
                        noise_std: spec.noise,
                        seed: derive_seed(cfg.seed, &format!("data/{}", rel.display())),
                    })?;
                    ds.manifest.language = key.language;
                    ds.manifest.category = key.category;
                    ds.manifest.layer = layer;
                    ds.manifest.checkpoint_step = step;
                    if spec.raw {
                        for r in &mut ds.records {
                            r.lemma = format!("l{}", r.index / RAW_LEMMA_SIZE);
                            r.split = Split::Unassigned;
                        }
                    }
                    write_bundle(&ds, output.join(rel))?;
                    bundles += 1;
                }
            }
        }
    }

    let tag = if cfg.model_tag.is_empty() {
        "synth"
    } else {
        cfg.model_tag.as_str()
    };
    let mut rng = seeded_rng(derive_seed(cfg.seed, "metrics"));
    let jitter = Normal::new(0.0, 0.01).expect("valid normal");
    let mut rows = Vec::new();
    for task in SYNTH_TASKS {
        for language in spec.languages.iter().filter(|l| **l != cfg.source_language) {
            for (t, &step) in spec.steps.iter().enumerate() {
                let shared = shared_count(spec.k_true, t, spec.steps.len()) as f64 / spec.k_true.max(1) as f64;
                rows.push((task, language.as_str(), step, 0.3 + 0.5 * shared + jitter.sample(&mut rng)));
            }
        }
    }
    let path = output.join(METRICS_FILE);
    let fail = |e: csv::Error| CliError::internal(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(fail)?;
    for &(task, lang, step, value) in &rows {
        w.serialize(MetricRow {
            model_tag: tag,
            task,
            target_language: lang,
            checkpoint_step: step,
            metric_name: "accuracy",
            value,
        })
        .map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
    Ok(StudySummary {
        bundles,
        metric_rows: rows.len(),
    })
}
