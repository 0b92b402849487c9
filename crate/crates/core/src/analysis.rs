//! Correlating overlap trajectories with downstream transfer scores.
//!
//! Two modes:
//! - *average*: per checkpoint, the layer-averaged all-pairs overlap against
//!   the downstream metric averaged over target languages.
//! - *pairwise*: every (checkpoint, target language) point, pairing the
//!   source–target overlap with that target's metric, pooled into one scatter.
//!
//! Series are joined on `checkpoint_step` with a strict inner join.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overlap::OverlapSeries;
use crate::special::student_t_two_sided;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pearson {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// `|r|` within this distance of 1 is reported as exactly ±1; the gap is
/// floating-point rounding from the centred sums.
const UNIT_R_SNAP: f64 = 8.0 * f64::EPSILON;

/// Sample Pearson correlation with a two-sided Student-t p-value on `n − 2`
/// degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Pearson> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, found: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("series contain non-finite values".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mut r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    if 1.0 - r.abs() <= UNIT_R_SNAP {
        r = r.signum();
    }
    Ok(Pearson {
        r,
        p_value: pvalue_from_r(r, n),
        n,
    })
}

/// Two-sided p-value of a sample correlation `r` over `n ≥ 3` points.
pub fn pvalue_from_r(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    student_t_two_sided(t, df)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceBand {
    None,
    /// `p < 0.05`
    Significant,
    /// `p < 0.001`
    High,
}

pub fn significance_band(p: f64) -> SignificanceBand {
    if p < 0.001 {
        SignificanceBand::High
    } else if p < 0.05 {
        SignificanceBand::Significant
    } else {
        SignificanceBand::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Average,
    Pairwise,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Average => "average",
            Mode::Pairwise => "pairwise",
        })
    }
}

/// Downstream scores for one (task, target language) over checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub model_tag: String,
    pub task: String,
    pub target_language: String,
    pub metric_name: String,
    /// `(checkpoint_step, value)`, strictly increasing in step.
    pub points: Vec<(u64, f64)>,
}

impl MetricSeries {
    pub fn validate(&self) -> Result<()> {
        if self.points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidArgument(format!(
                "{}/{}: checkpoint steps must be strictly increasing",
                self.task, self.target_language
            )));
        }
        if self.points.iter().any(|p| !p.1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{}/{}: non-finite metric value",
                self.task, self.target_language
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MetricRow {
    model_tag: String,
    task: String,
    target_language: String,
    checkpoint_step: u64,
    metric_name: String,
    value: f64,
}

/// Reads the downstream metrics CSV (`model_tag, task, target_language,
/// checkpoint_step, metric_name, value`) and groups it into series, sorted by
/// (model_tag, task, target_language).
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricSeries>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut groups: BTreeMap<(String, String, String), MetricSeries> = BTreeMap::new();
    for row in reader.deserialize::<MetricRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let key = (row.model_tag.clone(), row.task.clone(), row.target_language.clone());
        let series = groups.entry(key).or_insert_with(|| MetricSeries {
            model_tag: row.model_tag.clone(),
            task: row.task.clone(),
            target_language: row.target_language.clone(),
            metric_name: row.metric_name.clone(),
            points: Vec::new(),
        });
        if series.metric_name != row.metric_name {
            return Err(Error::InconsistentMetadata(format!(
                "{}: mixed metric names `{}` and `{}` for {}/{}",
                path.display(),
                series.metric_name,
                row.metric_name,
                row.task,
                row.target_language
            )));
        }
        series.points.push((row.checkpoint_step, row.value));
    }
    let mut out: Vec<MetricSeries> = groups.into_values().collect();
    for s in &mut out {
        s.points.sort_by_key(|p| p.0);
        s.validate().map_err(|e| Error::format(path, None, e.to_string()))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageReport {
    pub target_language: String,
    pub n: usize,
    /// `None` when this language alone has fewer than 3 points or no variance.
    pub r: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub mode: Mode,
    pub task: String,
    pub model_tag: String,
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
    pub significance_band: SignificanceBand,
    /// Steps present on only one side of the join.
    pub dropped_steps: Vec<u64>,
    /// Pairwise mode only: each language's own correlation.
    pub per_language: Vec<LanguageReport>,
}

impl CorrelationReport {
    /// Cell text in the style `0.940 (p=0.005)`; p below 0.001 is written in
    /// scientific notation, e.g. `0.568 (p=8.774e-05)`.
    pub fn formatted(&self) -> String {
        format!("{:.3} (p={})", self.r, format_pvalue(self.p_value))
    }
}

pub fn format_pvalue(p: f64) -> String {
    if p == 0.0 || p >= 0.001 {
        return format!("{p:.3}");
    }
    let s = format!("{p:.3e}");
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let (sign, digits) = match exp.strip_prefix('-') {
                Some(d) => ("-", d),
                None => ("+", exp),
            };
            format!("{mantissa}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

fn check_series(metrics: &[MetricSeries]) -> Result<(String, String)> {
    let Some(first) = metrics.first() else {
        return Err(Error::InvalidArgument("no metric series supplied".into()));
    };
    for m in metrics {
        m.validate()?;
        if m.task != first.task || m.model_tag != first.model_tag {
            return Err(Error::InconsistentMetadata(format!(
                "metric series mix ({}, {}) with ({}, {})",
                first.model_tag, first.task, m.model_tag, m.task
            )));
        }
    }
    Ok((first.task.clone(), first.model_tag.clone()))
}

/// Average mode: the metric is averaged over every target language that
/// reports the step, then inner-joined with the overlap series.
pub fn correlate_average(overlap: &OverlapSeries, metrics: &[MetricSeries]) -> Result<CorrelationReport> {
    let (task, model_tag) = check_series(metrics)?;
    let mut sums: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for m in metrics {
        for &(step, v) in &m.points {
            let e = sums.entry(step).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let overlap_by_step: BTreeMap<u64, f64> = overlap.points.iter().copied().collect();

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = Vec::new();
    for (&step, &(sum, count)) in &sums {
        match overlap_by_step.get(&step) {
            Some(&o) => {
                xs.push(o);
                ys.push(sum / count as f64);
            }
            None => dropped.push(step),
        }
    }
    dropped.extend(overlap_by_step.keys().filter(|s| !sums.contains_key(s)));
    dropped.sort_unstable();

    if xs.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            found: xs.len(),
        });
    }
    let pr = pearson(&xs, &ys)?;
    Ok(CorrelationReport {
        mode: Mode::Average,
        task,
        model_tag,
        r: pr.r,
        p_value: pr.p_value,
        n: pr.n,
        significance_band: significance_band(pr.p_value),
        dropped_steps: dropped,
        per_language: Vec::new(),
    })
}

/// Pairwise mode. `overlaps` maps each target language to its
/// source–target overlap series; every joined (step, language) point is
/// pooled into a single correlation.
pub fn correlate_pairwise(
    overlaps: &BTreeMap<String, OverlapSeries>,
    metrics: &[MetricSeries],
) -> Result<CorrelationReport> {
    let (task, model_tag) = check_series(metrics)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = Vec::new();
    let mut per_language = Vec::new();

    let mut by_lang: Vec<&MetricSeries> = metrics.iter().collect();
    by_lang.sort_by(|a, b| a.target_language.cmp(&b.target_language));
    for m in by_lang {
        let Some(series) = overlaps.get(&m.target_language) else {
            dropped.extend(m.points.iter().map(|p| p.0));
            continue;
        };
        let ov: BTreeMap<u64, f64> = series.points.iter().copied().collect();
        let (mut lx, mut ly) = (Vec::new(), Vec::new());
        for &(step, v) in &m.points {
            match ov.get(&step) {
                Some(&o) => {
                    lx.push(o);
                    ly.push(v);
                }
                None => dropped.push(step),
            }
        }
        let own = pearson(&lx, &ly).ok();
        per_language.push(LanguageReport {
            target_language: m.target_language.clone(),
            n: lx.len(),
            r: own.map(|p| p.r),
            p_value: own.map(|p| p.p_value),
        });
        xs.extend(lx);
        ys.extend(ly);
    }
    dropped.sort_unstable();
    dropped.dedup();

    if xs.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            found: xs.len(),
        });
    }
    let pr = pearson(&xs, &ys)?;
    Ok(CorrelationReport {
        mode: Mode::Pairwise,
        task,
        model_tag,
        r: pr.r,
        p_value: pr.p_value,
        n: pr.n,
        significance_band: significance_band(pr.p_value),
        dropped_steps: dropped,
        per_language,
    })
}

/// Writes a table with one row per model tag and `<task>_<mode>_r` /
/// `<task>_<mode>_p` columns, tasks and modes in sorted order.
pub fn write_correlation_table(reports: &[CorrelationReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut columns: Vec<(String, Mode)> = reports.iter().map(|r| (r.task.clone(), r.mode)).collect();
    columns.sort();
    columns.dedup();
    let mut rows: BTreeMap<&str, BTreeMap<(String, Mode), &CorrelationReport>> = BTreeMap::new();
    for r in reports {
        rows.entry(r.model_tag.as_str())
            .or_default()
            .insert((r.task.clone(), r.mode), r);
    }

    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["model_tag".to_string()];
    for (task, mode) in &columns {
        header.push(format!("{task}_{mode}_r"));
        header.push(format!("{task}_{mode}_p"));
        header.push(format!("{task}_{mode}_n"));
    }
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for (tag, cells) in rows {
        let mut rec = vec![tag.to_string()];
        for col in &columns {
            match cells.get(col) {
                Some(r) => {
                    rec.push(format!("{:.3}", r.r));
                    rec.push(format_pvalue(r.p_value));
                    rec.push(r.n.to_string());
                }
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlap::SeriesKey;
    use proptest::prelude::*;

    fn series(points: &[(u64, f64)]) -> OverlapSeries {
        OverlapSeries {
            key: SeriesKey {
                category: "Number".into(),
                layers: vec![13, 17],
                pair: None,
            },
            points: points.to_vec(),
        }
    }

    fn metric(lang: &str, points: &[(u64, f64)]) -> MetricSeries {
        MetricSeries {
            model_tag: "560m".into(),
            task: "pos".into(),
            target_language: lang.into(),
            metric_name: "f1".into(),
            points: points.to_vec(),
        }
    }

    #[test]
    fn exact_linearity() {
        let p = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!((p.r, p.p_value, p.n), (1.0, 0.0, 3));
        let q = pearson(&[1.0, 2.0, 3.0, 4.0], &[9.0, 7.0, 5.0, 3.0]).unwrap();
        assert_eq!(q.r, -1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::TooFewPoints { .. })));
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn five_point_example() {
        // Sxy = 10, Sxx = 10, Syy = 14.8, so r = 10 / sqrt(148)
        let p = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 6.0]).unwrap();
        assert!((p.r - 10.0 / 148f64.sqrt()).abs() < 1e-15);
        // scipy.stats.pearsonr: pvalue = 0.08770664700806553
        assert!((p.p_value - 0.087_706_647_008_065_53).abs() < 1e-10, "{}", p.p_value);
    }

    #[test]
    fn table_pvalues_follow_two_sided_t() {
        // (r, n, reported p) for average-mode cells: 6, 8 and 4 checkpoints
        for (r, n, want) in [
            (0.808, 6, "0.052"),
            (0.940, 6, "0.005"),
            (0.804, 8, "0.016"),
            (0.831, 8, "0.011"),
            (0.395, 4, "0.605"),
            (0.258, 4, "0.742"),
        ] {
            assert_eq!(format!("{:.3}", pvalue_from_r(r, n)), want, "r = {r}, n = {n}");
        }
    }

    #[test]
    fn bands() {
        assert_eq!(significance_band(0.0005), SignificanceBand::High);
        assert_eq!(significance_band(0.001), SignificanceBand::Significant);
        assert_eq!(significance_band(0.03), SignificanceBand::Significant);
        assert_eq!(significance_band(0.05), SignificanceBand::None);
    }

    #[test]
    fn pvalue_formatting() {
        assert_eq!(format_pvalue(0.005), "0.005");
        assert_eq!(format_pvalue(8.774e-5), "8.774e-05");
        assert_eq!(format_pvalue(1.204e-12), "1.204e-12");
        assert_eq!(format_pvalue(0.0), "0.000");
    }

    #[test]
    fn average_affine_is_perfect() {
        let ov = series(&[(1000, 0.1), (10000, 0.3), (100000, 0.2), (200000, 0.5)]);
        let ms = vec![
            metric("fra", &[(1000, 21.0), (10000, 61.0), (100000, 41.0), (200000, 101.0)]),
            metric("deu", &[(1000, 19.0), (10000, 59.0), (100000, 39.0), (200000, 99.0)]),
        ];
        let rep = correlate_average(&ov, &ms).unwrap();
        assert_eq!(rep.r, 1.0);
        assert_eq!(rep.n, 4);
        assert!(rep.dropped_steps.is_empty());
    }

    #[test]
    fn average_reports_dropped_steps() {
        let ov = series(&[(1, 0.1), (2, 0.3), (3, 0.2), (9, 0.5)]);
        let ms = vec![metric("fra", &[(1, 1.0), (2, 3.0), (3, 2.5), (4, 7.0)])];
        let rep = correlate_average(&ov, &ms).unwrap();
        assert_eq!(rep.n, 3);
        assert_eq!(rep.dropped_steps, vec![4, 9]);
    }

    #[test]
    fn disjoint_steps_error() {
        let ov = series(&[(1, 0.1), (2, 0.3), (3, 0.2)]);
        let ms = vec![metric("fra", &[(4, 1.0), (5, 3.0), (6, 2.5)])];
        assert!(matches!(correlate_average(&ov, &ms), Err(Error::TooFewPoints { found: 0, .. })));
    }

    #[test]
    fn report_formatting() {
        let rep = CorrelationReport {
            mode: Mode::Average,
            task: "pos".into(),
            model_tag: "560m".into(),
            r: 0.94,
            p_value: 0.005,
            n: 6,
            significance_band: significance_band(0.005),
            dropped_steps: vec![],
            per_language: vec![],
        };
        assert_eq!(rep.formatted(), "0.940 (p=0.005)");
    }

    #[test]
    fn pairwise_single_language_is_plain_pearson() {
        let ov = series(&[(1, 0.1), (2, 0.3), (3, 0.2), (4, 0.4)]);
        let m = metric("fra", &[(1, 1.0), (2, 2.0), (3, 2.5), (4, 3.0)]);
        let mut map = BTreeMap::new();
        map.insert("fra".to_string(), ov);
        let rep = correlate_pairwise(&map, std::slice::from_ref(&m)).unwrap();
        let direct = pearson(&[0.1, 0.3, 0.2, 0.4], &[1.0, 2.0, 2.5, 3.0]).unwrap();
        assert_eq!(rep.r, direct.r);
        assert_eq!(rep.per_language[0].r, Some(direct.r));
    }

    #[test]
    fn pairwise_pools_two_languages() {
        let mut map = BTreeMap::new();
        map.insert("fra".to_string(), series(&[(1, 0.1), (2, 0.2), (3, 0.3)]));
        map.insert("deu".to_string(), series(&[(1, 0.2), (2, 0.4), (3, 0.6)]));
        let ms = vec![
            metric("fra", &[(1, 1.0), (2, 3.0), (3, 2.0)]),
            metric("deu", &[(1, 2.0), (2, 5.0), (3, 5.0)]),
        ];
        let rep = correlate_pairwise(&map, &ms).unwrap();
        // Pooled points (deu first, sorted by language):
        //   x = 0.2 0.4 0.6 0.1 0.2 0.3, y = 2 5 5 1 3 2
        //   mean x = 1.8/6 = 0.3, mean y = 18/6 = 3
        //   dx = -.1 .1 .3 -.2 -.1 0, dy = -1 2 2 -2 0 -1
        //   Sxy = .1+.2+.6+.4+0+0 = 1.3; Sxx = .01+.01+.09+.04+.01+0 = .16
        //   Syy = 1+4+4+4+0+1 = 14; r = 1.3 / sqrt(.16 * 14) = 1.3 / sqrt(2.24)
        let want = 1.3 / 2.24f64.sqrt();
        assert!((rep.r - want).abs() < 1e-12, "{} vs {want}", rep.r);
        assert_eq!(rep.n, 6);
        assert_eq!(rep.per_language.len(), 2);
    }

    #[test]
    fn metrics_csv_grouping() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("m.csv");
        std::fs::write(
            &p,
            "model_tag,task,target_language,checkpoint_step,metric_name,value\n\
             560m,pos,fra,2000,f1,0.5\n560m,pos,fra,1000,f1,0.4\n560m,xnli,deu,1000,accuracy,0.6\n",
        )
        .unwrap();
        let ms = read_metrics_csv(&p).unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[0].points, vec![(1000, 0.4), (2000, 0.5)]);
        assert_eq!(ms[1].metric_name, "accuracy");

        std::fs::write(
            &p,
            "model_tag,task,target_language,checkpoint_step,metric_name,value\n560m,pos,fra,1,f1,0.5\n560m,pos,fra,1,f1,0.4\n",
        )
        .unwrap();
        assert!(read_metrics_csv(&p).is_err());
    }

    #[test]
    fn table_layout() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("t.csv");
        let rep = |task: &str, mode, r, p| CorrelationReport {
            mode,
            task: task.into(),
            model_tag: "560m".into(),
            r,
            p_value: p,
            n: 6,
            significance_band: significance_band(p),
            dropped_steps: vec![],
            per_language: vec![],
        };
        write_correlation_table(
            &[rep("xnli", Mode::Pairwise, 0.568, 8.774e-5), rep("pos", Mode::Average, 0.94, 0.005)],
            &p,
        )
        .unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "model_tag,pos_average_r,pos_average_p,pos_average_n,xnli_pairwise_r,xnli_pairwise_p,xnli_pairwise_n\n\
             560m,0.940,0.005,6,0.568,8.774e-05,6\n"
        );
    }

    proptest! {
        #[test]
        fn affine_gives_unit_r(x in prop::collection::vec(-100.0f64..100.0, 3..40), a in 0.01f64..50.0, b in -100.0f64..100.0, neg in any::<bool>()) {
            let spread = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let a = if neg { -a } else { a };
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let p = pearson(&x, &y).unwrap();
            prop_assert_eq!(p.r, a.signum());
            prop_assert_eq!(p.p_value, 0.0);
        }

        #[test]
        fn symmetric_and_permutation_invariant(pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30), rot in 0usize..30) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let Ok(a) = pearson(&x, &y) else { return Ok(()) };
            prop_assert_eq!(a.r, pearson(&y, &x).unwrap().r);
            let mut rotated = pts.clone();
            rotated.rotate_left(rot % pts.len());
            let xr: Vec<f64> = rotated.iter().map(|p| p.0).collect();
            let yr: Vec<f64> = rotated.iter().map(|p| p.1).collect();
            prop_assert!((pearson(&xr, &yr).unwrap().r - a.r).abs() < 1e-12);
        }

        #[test]
        fn pvalue_decreases_with_abs_r(n in 3usize..60, r1 in 0.0f64..0.999, r2 in 0.0f64..0.999) {
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(pvalue_from_r(hi, n) <= pvalue_from_r(lo, n));
            prop_assert_eq!(pvalue_from_r(-hi, n), pvalue_from_r(hi, n));
        }
    }
}
