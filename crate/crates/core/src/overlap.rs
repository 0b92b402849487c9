//! Cross-lingual neuron overlap.
//!
//! Two languages' selections of `k` dimensions out of `d` overlap at rate
//! `|A ∩ B| / k`. Significance is the upper tail of the hypergeometric
//! distribution: under the null both sets are independent uniform size-`k`
//! subsets, so `|A ∩ B| ~ Hypergeometric(d, k, k)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::SelectionResult;
use crate::special::{ln_choose, log_sum_exp};

/// Overlap rate `|A ∩ B| / k`. Selection order is ignored.
pub fn overlap_rate(a: &SelectionResult, b: &SelectionResult) -> Result<f64> {
    if a.k != b.k || a.d != b.d {
        return Err(Error::InconsistentMetadata(format!(
            "cannot compare selections with (k, d) = ({}, {}) and ({}, {})",
            a.k, a.d, b.k, b.d
        )));
    }
    if a.k == 0 {
        return Err(Error::InvalidArgument("overlap rate undefined for k = 0".into()));
    }
    Ok(intersection_size(a, b) as f64 / a.k as f64)
}

fn intersection_size(a: &SelectionResult, b: &SelectionResult) -> usize {
    let sa: BTreeSet<usize> = a.ordered_dims.iter().copied().collect();
    b.ordered_dims.iter().filter(|j| sa.contains(j)).count()
}

/// `P(X ≥ m)` for `X ~ Hypergeometric(population d, successes k, draws k)`,
/// summed in log space.
pub fn hypergeom_pvalue(d: u64, k: u64, m: u64) -> Result<f64> {
    if k > d || m > k {
        return Err(Error::InvalidArgument(format!(
            "hypergeometric tail needs 0 <= m <= k <= d, got d = {d}, k = {k}, m = {m}"
        )));
    }
    // support of X is [max(0, 2k - d), k]
    let lo = (2 * k).saturating_sub(d);
    if m <= lo {
        return Ok(1.0);
    }
    let ln_total = ln_choose(d, k);
    let terms: Vec<f64> = (m..=k)
        .map(|i| ln_choose(k, i) + ln_choose(d - k, k - i) - ln_total)
        .collect();
    Ok(log_sum_exp(&terms).exp().clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapOptions {
    pub alpha: f64,
    /// Divide `alpha` by the number of language pairs.
    pub bonferroni: bool,
}

impl Default for OverlapOptions {
    fn default() -> Self {
        OverlapOptions {
            alpha: 0.05,
            bonferroni: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub languages: Vec<String>,
    pub category: String,
    pub layer: u32,
    pub checkpoint_step: u64,
    /// Row-major `L × L`, symmetric, unit diagonal.
    pub rates: Vec<Vec<f64>>,
    /// Row-major `L × L`, symmetric, zero diagonal by convention.
    pub pvalues: Vec<Vec<f64>>,
    pub k: usize,
    pub d: usize,
    pub alpha: f64,
    pub bonferroni: bool,
}

impl OverlapMatrix {
    pub fn num_languages(&self) -> usize {
        self.languages.len()
    }

    pub fn index_of(&self, language: &str) -> Option<usize> {
        self.languages.iter().position(|l| l == language)
    }

    /// Significance threshold after any multiple-comparison correction.
    pub fn effective_alpha(&self) -> f64 {
        let l = self.languages.len();
        if self.bonferroni && l > 1 {
            self.alpha / (l * (l - 1) / 2) as f64
        } else {
            self.alpha
        }
    }

    pub fn is_significant(&self, i: usize, j: usize) -> bool {
        i != j && self.pvalues[i][j] < self.effective_alpha()
    }

    pub fn rate_between(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.rates[self.index_of(a)?][self.index_of(b)?])
    }

    /// Strict upper triangle as `(i, j)` pairs in row order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let l = self.languages.len();
        (0..l).flat_map(move |i| (i + 1..l).map(move |j| (i, j)))
    }
}

/// Fills overlap rates and hypergeometric p-values for every language pair.
/// Languages keep the order given.
pub fn pairwise_matrix(selections: &[(String, SelectionResult)], options: OverlapOptions) -> Result<OverlapMatrix> {
    if selections.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two languages, got {}",
            selections.len()
        )));
    }
    if !(options.alpha > 0.0 && options.alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {}", options.alpha)));
    }
    let first = &selections[0].1;
    let mut seen = BTreeSet::new();
    for (lang, s) in selections {
        if !seen.insert(lang.as_str()) {
            return Err(Error::InconsistentMetadata(format!("language `{lang}` appears twice")));
        }
        let key = &s.dataset_key;
        if s.k != first.k
            || s.d != first.d
            || key.category != first.dataset_key.category
            || key.layer != first.dataset_key.layer
            || key.checkpoint_step != first.dataset_key.checkpoint_step
        {
            return Err(Error::InconsistentMetadata(format!(
                "selection for `{lang}` ({}, layer {}, step {}, k {}, d {}) does not match ({}, layer {}, step {}, k {}, d {})",
                key.category,
                key.layer,
                key.checkpoint_step,
                s.k,
                s.d,
                first.dataset_key.category,
                first.dataset_key.layer,
                first.dataset_key.checkpoint_step,
                first.k,
                first.d
            )));
        }
    }

    let l = selections.len();
    let mut rates = vec![vec![1.0; l]; l];
    let mut pvalues = vec![vec![0.0; l]; l];
    for i in 0..l {
        for j in i + 1..l {
            let (a, b) = (&selections[i].1, &selections[j].1);
            let m = intersection_size(a, b);
            let rate = overlap_rate(a, b)?;
            let p = hypergeom_pvalue(a.d as u64, a.k as u64, m as u64)?;
            rates[i][j] = rate;
            rates[j][i] = rate;
            pvalues[i][j] = p;
            pvalues[j][i] = p;
        }
    }
    Ok(OverlapMatrix {
        languages: selections.iter().map(|(l, _)| l.clone()).collect(),
        category: first.dataset_key.category.clone(),
        layer: first.dataset_key.layer,
        checkpoint_step: first.dataset_key.checkpoint_step,
        rates,
        pvalues,
        k: first.k,
        d: first.d,
        alpha: options.alpha,
        bonferroni: options.bonferroni,
    })
}

/// Mean of the strict upper triangle of the rate matrix.
pub fn average_rate(matrix: &OverlapMatrix) -> Result<f64> {
    let l = matrix.num_languages();
    if l < 2 {
        return Err(Error::InvalidArgument("average rate needs at least two languages".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, j) in matrix.pairs() {
        sum += matrix.rates[i][j];
        count += 1;
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeriesKey {
    pub category: String,
    pub layers: Vec<u32>,
    /// `None` for the all-pairs average.
    pub pair: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSeries {
    pub key: SeriesKey,
    /// `(checkpoint_step, value)` sorted by step.
    pub points: Vec<(u64, f64)>,
}

impl OverlapSeries {
    pub fn steps(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.0).collect()
    }
}

/// Per checkpoint, the mean over `layers` of either the all-pairs average
/// rate or one pair's rate. All matrices must share one category.
pub fn layer_average_series(
    matrices: &[OverlapMatrix],
    layers: &[u32],
    pair: Option<(&str, &str)>,
) -> Result<OverlapSeries> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("no layers requested".into()));
    }
    let Some(first) = matrices.first() else {
        return Err(Error::InvalidArgument("no overlap matrices supplied".into()));
    };
    let category = first.category.clone();

    let mut by_step: BTreeMap<u64, BTreeMap<u32, &OverlapMatrix>> = BTreeMap::new();
    for m in matrices {
        if m.category != category {
            return Err(Error::InconsistentMetadata(format!(
                "mixed categories `{category}` and `{}`",
                m.category
            )));
        }
        if by_step.entry(m.checkpoint_step).or_default().insert(m.layer, m).is_some() {
            return Err(Error::InconsistentMetadata(format!(
                "duplicate matrix for layer {} at step {}",
                m.layer, m.checkpoint_step
            )));
        }
    }

    let mut points = Vec::with_capacity(by_step.len());
    for (step, per_layer) in by_step {
        let mut sum = 0.0;
        for &layer in layers {
            let m = per_layer.get(&layer).ok_or(Error::MissingLayer { step, layer })?;
            sum += match pair {
                None => average_rate(m)?,
                Some((a, b)) => m.rate_between(a, b).ok_or_else(|| {
                    Error::InconsistentMetadata(format!(
                        "pair ({a}, {b}) missing at step {step}, layer {layer}"
                    ))
                })?,
            };
        }
        points.push((step, sum / layers.len() as f64));
    }
    Ok(OverlapSeries {
        key: SeriesKey {
            category,
            layers: layers.to_vec(),
            pair: pair.map(|(a, b)| (a.to_string(), b.to_string())),
        },
        points,
    })
}

/// One `overlap.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub category: String,
    pub layer: u32,
    pub checkpoint_step: u64,
    pub lang_a: String,
    pub lang_b: String,
    pub rate: f64,
    pub p_value: f64,
    pub significant: u8,
}

pub fn overlap_rows(matrix: &OverlapMatrix) -> Vec<OverlapRow> {
    matrix
        .pairs()
        .map(|(i, j)| OverlapRow {
            category: matrix.category.clone(),
            layer: matrix.layer,
            checkpoint_step: matrix.checkpoint_step,
            lang_a: matrix.languages[i].clone(),
            lang_b: matrix.languages[j].clone(),
            rate: matrix.rates[i][j],
            p_value: matrix.pvalues[i][j],
            significant: matrix.is_significant(i, j) as u8,
        })
        .collect()
}

pub fn write_overlap_csv(matrices: &[OverlapMatrix], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for m in matrices {
        for row in overlap_rows(m) {
            w.serialize(row).map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_overlap_csv(path: impl AsRef<Path>) -> Result<Vec<OverlapRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

pub fn save_matrix(matrix: &OverlapMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut json = serde_json::to_string_pretty(matrix).map_err(|e| Error::json(path, e))?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<OverlapMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
