//! The pipeline stages behind each subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use intrinsic_probe::analysis::{
    correlate_average, correlate_pairwise, read_metrics_csv, write_correlation_table, CorrelationReport, MetricSeries,
};
use intrinsic_probe::dataset::{frequency_filter, lemma_disjoint_split, load_bundle, write_bundle};
use intrinsic_probe::overlap::{
    layer_average_series, load_matrix, pairwise_matrix, save_matrix, write_overlap_csv, OverlapMatrix, OverlapOptions,
    OverlapSeries, SeriesKey,
};
use intrinsic_probe::probe::{load_probe, save_probe, train};
use intrinsic_probe::selection::{greedy_select, load_selection, save_selection, DatasetKey, SelectionFile};
use intrinsic_probe::{Error, SelectionResult, Split};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::layout::{self, key_dir};
use crate::report;

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::internal(format!("{}: {e}", dir.display())))
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

/// `SOURCE_DATE_EPOCH`, if set, becomes the selection timestamp.
fn created_at() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.parse().ok()
}

fn path_string(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrepareSummary {
    pub records_in: usize,
    pub records_out: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

/// Lemma-disjoint split followed by the frequency filter.
pub fn prepare(input: &Path, output: &Path, cfg: &RunConfig) -> CliResult<PrepareSummary> {
    let raw = load_bundle(input)?;
    let split = lemma_disjoint_split(&raw, cfg.ratios, cfg.seed)?;
    let kept = frequency_filter(&split, cfg.threshold);
    let count = |s| kept.split_rows(s).len();
    let summary = PrepareSummary {
        records_in: raw.len(),
        records_out: kept.len(),
        train: count(Split::Train),
        dev: count(Split::Dev),
        test: count(Split::Test),
    };
    for s in Split::ASSIGNED {
        if kept.split_rows(s).is_empty() {
            return Err(CliError::invalid(format!(
                "{}: split `{s}` is empty after dropping lemmas seen fewer than {} times",
                input.display(),
                cfg.threshold
            )));
        }
    }
    write_bundle(&kept, output)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_nll: f64,
}

pub fn train_probe(bundle: &Path, output: &Path, cfg: &RunConfig) -> CliResult<TrainSummary> {
    let ds = load_bundle(bundle)?;
    if !ds.is_fully_split() {
        return Err(CliError::invalid(format!(
            "{} has records without a split; run `prepare` first",
            bundle.display()
        )));
    }
    let probe = train(
        &ds.view(Split::Train).non_empty()?,
        &ds.view(Split::Dev).non_empty()?,
        &cfg.train_config(),
    )?;
    save_probe(&probe, &ds.manifest, output)?;
    let meta = probe.train_meta.as_ref().expect("trained probes carry metadata");
    Ok(TrainSummary {
        epochs_run: meta.epochs_run,
        best_epoch: meta.best_epoch,
        best_dev_nll: meta.best_dev_nll,
    })
}

/// Greedy selection of `cfg.k` dimensions on the dev split.
pub fn select(
    bundle: &Path,
    probe_dir: &Path,
    output: &Path,
    cfg: &RunConfig,
    probe_ref: Option<String>,
) -> CliResult<SelectionResult> {
    let ds = load_bundle(bundle)?;
    let (probe, meta) = load_probe(probe_dir)?;
    if DatasetKey::from(&meta.manifest) != DatasetKey::from(&ds.manifest) {
        return Err(CliError::invalid(format!(
            "probe in {} was trained on a different dataset than {}",
            probe_dir.display(),
            bundle.display()
        )));
    }
    let result = greedy_select(&probe, &ds.view(Split::Dev), cfg.k)?;
    save_selection(&SelectionFile::new(&result, probe_ref, created_at()), output)?;
    Ok(result)
}

fn loaded_selections(paths: &[PathBuf], cfg: &RunConfig) -> CliResult<Vec<SelectionResult>> {
    let mut out = Vec::new();
    for p in paths {
        let (sel, _) = load_selection(p)?;
        let key = &sel.dataset_key;
        let wanted = cfg.categories.contains(&key.category)
            && cfg.layers.contains(&key.layer)
            && (cfg.languages.is_empty() || cfg.languages.contains(&key.language));
        if wanted {
            out.push(sel);
        }
    }
    Ok(out)
}

/// Builds one overlap matrix per (category, layer, step) from the given
/// selection files and writes `overlap.csv` plus `matrices/*.json`.
pub fn overlap(selection_paths: &[PathBuf], output: &Path, cfg: &RunConfig) -> CliResult<Vec<OverlapMatrix>> {
    let selections = loaded_selections(selection_paths, cfg)?;
    let mut groups: BTreeMap<(String, u32, u64), BTreeMap<String, SelectionResult>> = BTreeMap::new();
    for sel in selections {
        let key = sel.dataset_key.clone();
        let group = groups.entry((key.category.clone(), key.layer, key.checkpoint_step)).or_default();
        if group.insert(key.language.clone(), sel).is_some() {
            return Err(CliError::invalid(format!(
                "two selections for ({}, {}, layer {}, step {})",
                key.language, key.category, key.layer, key.checkpoint_step
            )));
        }
    }

    let options = OverlapOptions {
        alpha: cfg.alpha,
        bonferroni: cfg.bonferroni,
    };
    let mut matrices = Vec::new();
    for (_, mut by_lang) in groups {
        let order: Vec<String> = if cfg.languages.is_empty() {
            by_lang.keys().cloned().collect()
        } else {
            cfg.languages.iter().filter(|l| by_lang.contains_key(*l)).cloned().collect()
        };
        if order.len() < 2 {
            continue;
        }
        let entries: Vec<(String, SelectionResult)> = order
            .into_iter()
            .map(|l| {
                let s = by_lang.remove(&l).expect("language present");
                (l, s)
            })
            .collect();
        matrices.push(pairwise_matrix(&entries, options)?);
    }
    if matrices.is_empty() {
        return Err(CliError::invalid(
            "no (category, layer, step) has selections from two or more languages",
        ));
    }

    let matrix_dir = output.join(layout::MATRICES_DIR);
    create_dir(&matrix_dir)?;
    write_overlap_csv(&matrices, output.join(layout::OVERLAP_CSV))?;
    for m in &matrices {
        save_matrix(m, matrix_dir.join(layout::matrix_file_name(&m.category, m.layer, m.checkpoint_step)?))?;
    }
    Ok(matrices)
}

/// Reads `matrices/*.json` from an overlap directory, keeping the configured
/// categories and layers.
pub fn load_matrices(overlap_dir: &Path, cfg: &RunConfig) -> CliResult<Vec<OverlapMatrix>> {
    let dir = overlap_dir.join(layout::MATRICES_DIR);
    let entries = fs::read_dir(&dir).map_err(|e| CliError::invalid(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let m = load_matrix(&p)?;
        if cfg.categories.contains(&m.category) && cfg.layers.contains(&m.layer) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::invalid(format!(
            "{} holds no matrices for categories {:?} and layers {:?}",
            dir.display(),
            cfg.categories,
            cfg.layers
        )));
    }
    out.sort_by(|a, b| (&a.category, a.layer, a.checkpoint_step).cmp(&(&b.category, b.layer, b.checkpoint_step)));
    Ok(out)
}

pub(crate) fn by_category(matrices: &[OverlapMatrix]) -> BTreeMap<String, Vec<OverlapMatrix>> {
    let mut out: BTreeMap<String, Vec<OverlapMatrix>> = BTreeMap::new();
    for m in matrices {
        out.entry(m.category.clone()).or_default().push(m.clone());
    }
    out
}

/// Layer-averaged overlap per category, then averaged over categories at the
/// steps every category covers.
pub fn combined_series(matrices: &[OverlapMatrix], layers: &[u32], pair: Option<(&str, &str)>) -> CliResult<OverlapSeries> {
    let per_category: Vec<OverlapSeries> = by_category(matrices)
        .values()
        .map(|ms| layer_average_series(ms, layers, pair))
        .collect::<Result<_, Error>>()?;
    let mut sums: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for s in &per_category {
        for &(step, v) in &s.points {
            let e = sums.entry(step).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let points = sums
        .into_iter()
        .filter(|(_, (_, n))| *n == per_category.len())
        .map(|(step, (sum, n))| (step, sum / n as f64))
        .collect();
    Ok(OverlapSeries {
        key: SeriesKey {
            category: per_category.iter().map(|s| s.key.category.as_str()).collect::<Vec<_>>().join("+"),
            layers: layers.to_vec(),
            pair: pair.map(|(a, b)| (a.to_string(), b.to_string())),
        },
        points,
    })
}

/// Metric rows for the configured model, grouped by task.
pub fn metrics_by_task(path: &Path, cfg: &RunConfig) -> CliResult<(String, BTreeMap<String, Vec<MetricSeries>>)> {
    let all = read_metrics_csv(path)?;
    let tags: BTreeSet<&str> = all.iter().map(|m| m.model_tag.as_str()).collect();
    let tag = if cfg.model_tag.is_empty() {
        match tags.len() {
            1 => tags.into_iter().next().expect("one tag").to_string(),
            0 => return Err(CliError::invalid(format!("{} has no rows", path.display()))),
            _ => {
                return Err(CliError::invalid(format!(
                    "{} holds several model tags {tags:?}; set model_tag",
                    path.display()
                )))
            }
        }
    } else if tags.contains(cfg.model_tag.as_str()) {
        cfg.model_tag.clone()
    } else {
        return Err(CliError::invalid(format!(
            "{} has no rows for model_tag `{}`",
            path.display(),
            cfg.model_tag
        )));
    };
    let mut out: BTreeMap<String, Vec<MetricSeries>> = BTreeMap::new();
    for m in all.into_iter().filter(|m| m.model_tag == tag) {
        out.entry(m.task.clone()).or_default().push(m);
    }
    Ok((tag, out))
}

/// Source-to-target overlap series for every target language that appears
/// in the matrices.
pub(crate) fn pair_series(
    matrices: &[OverlapMatrix],
    cfg: &RunConfig,
    targets: &BTreeSet<&str>,
) -> CliResult<BTreeMap<String, OverlapSeries>> {
    let src = cfg.source_language.as_str();
    let present: BTreeSet<&str> = matrices
        .iter()
        .flat_map(|m| m.languages.iter().map(String::as_str))
        .collect();
    if !present.contains(src) {
        return Err(CliError::invalid(format!(
            "source language `{src}` is missing from the overlap matrices"
        )));
    }
    let mut out = BTreeMap::new();
    for &t in targets {
        if t != src && present.contains(t) {
            out.insert(t.to_string(), combined_series(matrices, &cfg.layers, Some((src, t)))?);
        }
    }
    Ok(out)
}

/// Average and pairwise correlations for every task in the metrics file.
pub fn correlate(matrices: &[OverlapMatrix], metrics: &Path, output: &Path, cfg: &RunConfig) -> CliResult<Vec<CorrelationReport>> {
    let (_, tasks) = metrics_by_task(metrics, cfg)?;
    let average = combined_series(matrices, &cfg.layers, None)?;
    let mut reports = Vec::new();
    for series in tasks.values() {
        let targets: Vec<MetricSeries> = series
            .iter()
            .filter(|m| m.target_language != cfg.source_language)
            .cloned()
            .collect();
        reports.push(correlate_average(&average, &targets)?);
        let names: BTreeSet<&str> = targets.iter().map(|m| m.target_language.as_str()).collect();
        let pairs = pair_series(matrices, cfg, &names)?;
        reports.push(correlate_pairwise(&pairs, &targets)?);
    }
    create_dir(output)?;
    write_json(&reports, &output.join(layout::CORRELATION_JSON))?;
    write_correlation_table(&reports, output.join(layout::TABLE_CSV))?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub datasets: usize,
    pub prepared: usize,
    pub matrices: usize,
    pub correlations: usize,
    pub report_tables: Vec<String>,
}

struct Job<'a> {
    key: &'a DatasetKey,
    bundle: &'a Path,
}

fn run_job(job: &Job<'_>, cfg: &RunConfig) -> CliResult<(bool, PathBuf)> {
    let rel = key_dir(job.key)?;
    let mut bundle = job.bundle.to_path_buf();
    let raw = load_bundle(&bundle)?;
    let prepared = !raw.is_fully_split();
    if prepared {
        let dest = cfg.out.join(layout::BUNDLES_DIR).join(&rel);
        prepare(&bundle, &dest, cfg)?;
        bundle = dest;
    }
    let probe_rel = Path::new(layout::PROBES_DIR).join(&rel);
    train_probe(&bundle, &cfg.out.join(&probe_rel), cfg)?;
    let sel_path = cfg.out.join(layout::SELECTIONS_DIR).join(&rel).join(layout::SELECTION_FILE);
    select(&bundle, &cfg.out.join(&probe_rel), &sel_path, cfg, Some(path_string(&probe_rel)))?;
    Ok((prepared, sel_path))
}

/// Discovers bundles, then prepares (where needed), trains and selects per
/// dataset on a bounded pool, then computes overlap, correlations (when a
/// metrics file is configured) and report tables.
pub fn run(cfg: &RunConfig) -> CliResult<RunSummary> {
    if cfg.bundle_roots.is_empty() {
        return Err(CliError::invalid("no bundle_roots configured"));
    }
    let found = layout::discover_bundles(&cfg.bundle_roots)?;
    let jobs: Vec<Job<'_>> = found
        .iter()
        .filter(|(k, _)| {
            cfg.categories.contains(&k.category)
                && cfg.layers.contains(&k.layer)
                && (cfg.languages.is_empty() || cfg.languages.contains(&k.language))
        })
        .map(|(key, bundle)| Job { key, bundle })
        .collect();
    if jobs.is_empty() {
        return Err(CliError::invalid(format!(
            "no bundles match categories {:?}, layers {:?}, languages {:?}",
            cfg.categories, cfg.layers, cfg.languages
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::internal(e.to_string()))?;
    let done: Vec<(bool, PathBuf)> = pool.install(|| jobs.par_iter().map(|j| run_job(j, cfg)).collect::<CliResult<_>>())?;

    let selections: Vec<PathBuf> = done.iter().map(|(_, p)| p.clone()).collect();
    let matrices = overlap(&selections, &cfg.out.join(layout::OVERLAP_DIR), cfg)?;
    let mut correlations = 0;
    if let Some(metrics) = &cfg.metrics {
        correlations = correlate(&matrices, metrics, &cfg.out.join(layout::CORRELATION_DIR), cfg)?.len();
    }
    let tables = report::write_report(&matrices, cfg.metrics.as_deref(), &cfg.out.join(layout::REPORT_DIR), cfg)?;
    Ok(RunSummary {
        datasets: done.len(),
        prepared: done.iter().filter(|(p, _)| *p).count(),
        matrices: matrices.len(),
        correlations,
        report_tables: tables,
    })
}
