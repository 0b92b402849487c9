//! Plot-ready tables, one per figure family.
//!
//! | file | rows |
//! |---|---|
//! | `trajectory.csv` | category × step, layer-averaged all-pairs overlap |
//! | `layers.csv` | category × layer at the last step |
//! | `heatmap.csv` | category × language pair at the last step, layer-averaged |
//! | `pair_trajectory.csv` | category × language pair × step, layer-averaged |
//! | `average_correlation.csv` | task × step: overlap next to the target-averaged metric |
//! | `scatter.csv` | task × target language × step: source–target overlap next to the metric |
//!
//! The last two need a metrics file and contain only steps present on both sides.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use intrinsic_probe::analysis::MetricSeries;
use intrinsic_probe::overlap::{average_rate, layer_average_series, OverlapMatrix};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{by_category, combined_series, metrics_by_task, pair_series};

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const LAYERS_CSV: &str = "layers.csv";
pub const HEATMAP_CSV: &str = "heatmap.csv";
pub const PAIR_TRAJECTORY_CSV: &str = "pair_trajectory.csv";
pub const AVERAGE_CORRELATION_CSV: &str = "average_correlation.csv";
pub const SCATTER_CSV: &str = "scatter.csv";

#[derive(Serialize)]
struct TrajectoryRow<'a> {
    category: &'a str,
    checkpoint_step: u64,
    rate: f64,
}

#[derive(Serialize)]
struct LayerRow<'a> {
    category: &'a str,
    layer: u32,
    checkpoint_step: u64,
    rate: f64,
}

#[derive(Serialize)]
struct PairRow<'a> {
    category: &'a str,
    lang_a: &'a str,
    lang_b: &'a str,
    checkpoint_step: u64,
    rate: f64,
}

type PairPoint = (String, String, String, u64, f64);

fn pair_row((c, a, b, s, r): &PairPoint) -> PairRow<'_> {
    PairRow {
        category: c,
        lang_a: a,
        lang_b: b,
        checkpoint_step: *s,
        rate: *r,
    }
}

#[derive(Serialize)]
struct AverageRow<'a> {
    model_tag: &'a str,
    task: &'a str,
    checkpoint_step: u64,
    overlap: f64,
    metric: f64,
}

#[derive(Serialize)]
struct ScatterRow<'a> {
    model_tag: &'a str,
    task: &'a str,
    target_language: &'a str,
    checkpoint_step: u64,
    overlap: f64,
    metric: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let fail = |e: csv::Error| CliError::internal(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    for row in rows {
        w.serialize(row).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

/// Language pairs shared by every matrix of a category, in matrix order.
fn common_pairs(matrices: &[OverlapMatrix]) -> Vec<(String, String)> {
    let first = &matrices[0];
    first
        .pairs()
        .map(|(i, j)| (first.languages[i].clone(), first.languages[j].clone()))
        .filter(|(a, b)| matrices.iter().all(|m| m.rate_between(a, b).is_some()))
        .collect()
}

/// Writes every table into `output` and returns the file names written.
pub fn write_report(
    matrices: &[OverlapMatrix],
    metrics: Option<&Path>,
    output: &Path,
    cfg: &RunConfig,
) -> CliResult<Vec<String>> {
    fs::create_dir_all(output).map_err(|e| CliError::internal(format!("{}: {e}", output.display())))?;
    let categories = by_category(matrices);

    let mut trajectory = Vec::new();
    let mut layers = Vec::new();
    let mut heatmap: Vec<PairPoint> = Vec::new();
    let mut pair_trajectory: Vec<PairPoint> = Vec::new();
    for (category, ms) in &categories {
        let series = layer_average_series(ms, &cfg.layers, None)?;
        for &(step, rate) in &series.points {
            trajectory.push((category.clone(), step, rate));
        }

        let last = ms.iter().map(|m| m.checkpoint_step).max().expect("non-empty");
        for m in ms.iter().filter(|m| m.checkpoint_step == last) {
            layers.push((category.clone(), m.layer, last, average_rate(m)?));
        }

        for (a, b) in common_pairs(ms) {
            let s = layer_average_series(ms, &cfg.layers, Some((&a, &b)))?;
            for &(step, rate) in &s.points {
                pair_trajectory.push((category.clone(), a.clone(), b.clone(), step, rate));
                if step == last {
                    heatmap.push((category.clone(), a.clone(), b.clone(), step, rate));
                }
            }
        }
    }

    write_rows(
        &output.join(TRAJECTORY_CSV),
        trajectory.iter().map(|(c, s, r)| TrajectoryRow {
            category: c,
            checkpoint_step: *s,
            rate: *r,
        }),
    )?;
    write_rows(
        &output.join(LAYERS_CSV),
        layers.iter().map(|(c, l, s, r)| LayerRow {
            category: c,
            layer: *l,
            checkpoint_step: *s,
            rate: *r,
        }),
    )?;
    write_rows(&output.join(HEATMAP_CSV), heatmap.iter().map(pair_row))?;
    write_rows(&output.join(PAIR_TRAJECTORY_CSV), pair_trajectory.iter().map(pair_row))?;
    let mut written: Vec<String> = [TRAJECTORY_CSV, LAYERS_CSV, HEATMAP_CSV, PAIR_TRAJECTORY_CSV]
        .map(String::from)
        .to_vec();

    if let Some(path) = metrics {
        let (tag, tasks) = metrics_by_task(path, cfg)?;
        let overlap: BTreeMap<u64, f64> = combined_series(matrices, &cfg.layers, None)?.points.into_iter().collect();
        let mut average = Vec::new();
        let mut scatter = Vec::new();
        for (task, series) in &tasks {
            let targets: Vec<&MetricSeries> = series
                .iter()
                .filter(|m| m.target_language != cfg.source_language)
                .collect();
            let mut sums: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
            for m in &targets {
                for &(step, v) in &m.points {
                    let e = sums.entry(step).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
            }
            for (step, (sum, n)) in sums {
                if let Some(&o) = overlap.get(&step) {
                    average.push((task.clone(), step, o, sum / n as f64));
                }
            }

            let names: BTreeSet<&str> = targets.iter().map(|m| m.target_language.as_str()).collect();
            let pairs = pair_series(matrices, cfg, &names)?;
            for m in &targets {
                let Some(ps) = pairs.get(&m.target_language) else {
                    continue;
                };
                let ov: BTreeMap<u64, f64> = ps.points.iter().copied().collect();
                for &(step, v) in &m.points {
                    if let Some(&o) = ov.get(&step) {
                        scatter.push((task.clone(), m.target_language.clone(), step, o, v));
                    }
                }
            }
        }
        write_rows(
            &output.join(AVERAGE_CORRELATION_CSV),
            average.iter().map(|(t, s, o, v)| AverageRow {
                model_tag: &tag,
                task: t,
                checkpoint_step: *s,
                overlap: *o,
                metric: *v,
            }),
        )?;
        write_rows(
            &output.join(SCATTER_CSV),
            scatter.iter().map(|(t, l, s, o, v)| ScatterRow {
                model_tag: &tag,
                task: t,
                target_language: l,
                checkpoint_step: *s,
                overlap: *o,
                metric: *v,
            }),
        )?;
        written.push(AVERAGE_CORRELATION_CSV.into());
        written.push(SCATTER_CSV.into());
    }
    Ok(written)
}
