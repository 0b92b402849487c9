//! Choosing the `k` dimensions whose unmasked values best explain the labels.
//!
//! The objective for a subset `C` is the dev-set log-likelihood
//! `Σ_n log p(π_n | h_C^(n))` under a trained probe. [`greedy_select`] grows
//! `C` one dimension at a time; [`exhaustive_select`] scans every size-`k`
//! subset and exists to check the greedy search on small instances.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Manifest, SplitView};
use crate::error::{Error, Result};
use crate::probe::{masked_nll_view, LinearProbe, Mask};
use crate::special::log_sum_exp;

pub const DEFAULT_K: usize = 50;
pub const EXHAUSTIVE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DatasetKey {
    pub language: String,
    pub category: String,
    pub layer: u32,
    pub checkpoint_step: u64,
}

impl From<&Manifest> for DatasetKey {
    fn from(m: &Manifest) -> Self {
        DatasetKey {
            language: m.language.clone(),
            category: m.category.clone(),
            layer: m.layer,
            checkpoint_step: m.checkpoint_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub dataset_key: DatasetKey,
    pub k: usize,
    pub d: usize,
    /// 0-based dimensions in the order they were selected.
    pub ordered_dims: Vec<usize>,
    /// Total dev log-likelihood after each greedy step. Exhaustive results
    /// carry only the final value.
    pub loglik_trace: Vec<f64>,
}

impl SelectionResult {
    pub fn dims_sorted(&self) -> Vec<usize> {
        let mut v = self.ordered_dims.clone();
        v.sort_unstable();
        v
    }

    pub fn final_loglik(&self) -> Option<f64> {
        self.loglik_trace.last().copied()
    }
}

/// Mask holding exactly the selected dimensions.
pub fn selection_to_mask(result: &SelectionResult, d: usize) -> Result<Mask> {
    Mask::from_indices(d, result.ordered_dims.iter().copied())
}

fn check_k(probe: &LinearProbe, dev: &SplitView<'_>, k: usize) -> Result<()> {
    if k > probe.d() {
        return Err(Error::KExceedsD { k, d: probe.d() });
    }
    if dev.is_empty() {
        return Err(Error::EmptySplit(dev.split()));
    }
    Ok(())
}

/// Greedy forward selection on the dev split.
///
/// Each step scores every remaining dimension `j` by the dev log-likelihood
/// of `C ∪ {j}` and keeps the best; ties go to the smallest index. Candidate
/// logits are built incrementally from the cached logits of `C` plus
/// `W[:, j] · h_j`. The recorded trace is recomputed from scratch for each
/// prefix, so it matches [`masked_nll_view`] exactly.
pub fn greedy_select(probe: &LinearProbe, dev: &SplitView<'_>, k: usize) -> Result<SelectionResult> {
    check_k(probe, dev, k)?;
    let dataset = dev.dataset();
    probe.check_dataset(dataset)?;
    let d = probe.d();
    let num_labels = probe.num_labels();

    let examples: Vec<(&[f32], usize)> = dev.examples().collect();
    let mut cache = vec![0.0f64; examples.len() * num_labels];
    let mut mask = Mask::empty(d);
    let mut ordered_dims = Vec::with_capacity(k);
    let mut loglik_trace = Vec::with_capacity(k);

    for _ in 0..k {
        let candidates: Vec<usize> = (0..d).filter(|&j| !mask.contains(j)).collect();
        let scores: Vec<f64> = candidates
            .par_iter()
            .map(|&j| candidate_loglik(probe, &examples, &cache, j))
            .collect();

        let mut best = 0;
        for i in 1..candidates.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        let j = candidates[best];

        for (n, (h, _)) in examples.iter().enumerate() {
            let x = h[j] as f64;
            for c in 0..num_labels {
                cache[n * num_labels + c] += probe.weight(c, j) * x;
            }
        }
        mask.insert(j);
        ordered_dims.push(j);
        loglik_trace.push(-masked_nll_view(probe, dev, &mask)?);
    }

    Ok(SelectionResult {
        dataset_key: DatasetKey::from(&dataset.manifest),
        k,
        d,
        ordered_dims,
        loglik_trace,
    })
}

/// Dev log-likelihood after adding dimension `j` to the cached logits.
fn candidate_loglik(probe: &LinearProbe, examples: &[(&[f32], usize)], cache: &[f64], j: usize) -> f64 {
    let num_labels = probe.num_labels();
    let column: Vec<f64> = (0..num_labels).map(|c| probe.weight(c, j)).collect();
    let mut z = vec![0.0; num_labels];
    let mut total = 0.0;
    for (n, (h, label)) in examples.iter().enumerate() {
        let x = h[j] as f64;
        let base = &cache[n * num_labels..(n + 1) * num_labels];
        for c in 0..num_labels {
            z[c] = base[c] + column[c] * x;
        }
        total += z[*label] - log_sum_exp(&z);
    }
    total
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveSelection {
    pub result: SelectionResult,
    pub subsets_scanned: u64,
}

/// Scans every size-`k` subset in lexicographic order and returns the
/// lexicographically smallest maximiser. Limited to `C(d, k) ≤ 10^6`.
pub fn exhaustive_select(probe: &LinearProbe, dev: &SplitView<'_>, k: usize) -> Result<ExhaustiveSelection> {
    check_k(probe, dev, k)?;
    probe.check_dataset(dev.dataset())?;
    let d = probe.d();
    if binomial(d, k) > EXHAUSTIVE_LIMIT as u128 {
        return Err(Error::CombinatorialBound {
            d,
            k,
            limit: EXHAUSTIVE_LIMIT,
        });
    }

    let mut combo: Vec<usize> = (0..k).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut scanned = 0u64;
    loop {
        let value = -masked_nll_view(probe, dev, &Mask::from_indices(d, combo.iter().copied())?)?;
        scanned += 1;
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((combo.clone(), value));
        }
        // next combination in lexicographic order
        let mut i = k;
        while i > 0 && combo[i - 1] == d - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for t in i..k {
            combo[t] = combo[t - 1] + 1;
        }
    }

    let (dims, value) = best.expect("at least one subset");
    Ok(ExhaustiveSelection {
        result: SelectionResult {
            dataset_key: DatasetKey::from(&dev.dataset().manifest),
            k,
            d,
            ordered_dims: dims,
            loglik_trace: vec![value],
        },
        subsets_scanned: scanned,
    })
}

/// `selection.json`. Dimensions are 1-based on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    pub dataset_key: DatasetKey,
    pub k: usize,
    pub d: usize,
    pub ordered_dims: Vec<usize>,
    pub loglik_trace: Vec<f64>,
    pub probe_file: Option<String>,
    /// Unix seconds; left empty unless the caller supplies a timestamp so
    /// that reruns stay byte-identical.
    pub created_at: Option<u64>,
}

impl SelectionFile {
    pub fn new(result: &SelectionResult, probe_file: Option<String>, created_at: Option<u64>) -> Self {
        SelectionFile {
            dataset_key: result.dataset_key.clone(),
            k: result.k,
            d: result.d,
            ordered_dims: result.ordered_dims.iter().map(|i| i + 1).collect(),
            loglik_trace: result.loglik_trace.clone(),
            probe_file,
            created_at,
        }
    }

    pub fn into_result(self) -> Result<SelectionResult> {
        let mut dims = Vec::with_capacity(self.ordered_dims.len());
        for &i in &self.ordered_dims {
            if i == 0 || i > self.d {
                return Err(Error::InvalidArgument(format!(
                    "selected dimension {i} outside 1..={}",
                    self.d
                )));
            }
            dims.push(i - 1);
        }
        let mut sorted = dims.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != dims.len() || dims.len() != self.k {
            return Err(Error::InvalidArgument(format!(
                "selection must hold {} distinct dimensions",
                self.k
            )));
        }
        Ok(SelectionResult {
            dataset_key: self.dataset_key,
            k: self.k,
            d: self.d,
            ordered_dims: dims,
            loglik_trace: self.loglik_trace,
        })
    }
}

pub fn save_selection(file: &SelectionFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut json = serde_json::to_string_pretty(file).map_err(|e| Error::json(path, e))?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_selection(path: impl AsRef<Path>) -> Result<(SelectionResult, SelectionFile)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SelectionFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    Ok((file.clone().into_result()?, file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ProbeDataset, Split};
    use crate::probe::{masked_nll, train, TrainConfig};
    use crate::rng::seeded_rng;
    use crate::synth::{generate_planted, PlantedSpec};
    use rand::Rng;

    fn random_instance(d: usize, labels: usize, seed: u64) -> (LinearProbe, ProbeDataset) {
        let (ds, _) = generate_planted(&PlantedSpec {
            d,
            k_true: 3.min(d),
            planted_dims: None,
            n_per_class: 8,
            num_labels: labels,
            class_separation: 1.5,
            noise_std: 1.0,
            seed,
        })
        .unwrap();
        let mut rng = seeded_rng(seed ^ 0xabc);
        let w = (0..labels * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        (
            LinearProbe::from_weights(ds.manifest.label_inventory.clone(), d, w).unwrap(),
            ds,
        )
    }

    fn planted(d: usize, dims: Vec<usize>, seed: u64) -> (LinearProbe, ProbeDataset) {
        let (ds, _) = generate_planted(&PlantedSpec {
            d,
            k_true: dims.len(),
            planted_dims: Some(dims),
            n_per_class: 200,
            num_labels: 2,
            class_separation: 6.0,
            noise_std: 1.0,
            seed,
        })
        .unwrap();
        let probe = train(&ds.view(Split::Train), &ds.view(Split::Dev), &TrainConfig::default()).unwrap();
        (probe, ds)
    }

    #[test]
    fn first_step_is_best_single_dimension() {
        let (probe, ds) = random_instance(9, 3, 1);
        let dev = ds.view(Split::Dev);
        let res = greedy_select(&probe, &dev, 1).unwrap();
        let scan: Vec<f64> = (0..9)
            .map(|j| -masked_nll(&probe, &ds, Split::Dev, &Mask::from_indices(9, [j]).unwrap()).unwrap())
            .collect();
        let best = (0..9).fold(0, |b, j| if scan[j] > scan[b] { j } else { b });
        assert_eq!(res.ordered_dims, vec![best]);
        assert_eq!(res.loglik_trace, vec![scan[best]]);
    }

    #[test]
    fn k_equal_d_is_a_permutation() {
        let (probe, ds) = random_instance(7, 2, 2);
        let res = greedy_select(&probe, &ds.view(Split::Dev), 7).unwrap();
        assert_eq!(res.dims_sorted(), (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn k_above_d_is_rejected() {
        let (probe, ds) = random_instance(4, 2, 3);
        assert!(matches!(
            greedy_select(&probe, &ds.view(Split::Dev), 5),
            Err(Error::KExceedsD { k: 5, d: 4 })
        ));
    }

    #[test]
    fn trace_matches_recomputation() {
        let (probe, ds) = random_instance(10, 4, 4);
        let res = greedy_select(&probe, &ds.view(Split::Dev), 6).unwrap();
        for (i, &ll) in res.loglik_trace.iter().enumerate() {
            let prefix = Mask::from_indices(10, res.ordered_dims[..=i].iter().copied()).unwrap();
            assert_eq!(ll, -masked_nll(&probe, &ds, Split::Dev, &prefix).unwrap());
        }
    }

    #[test]
    fn incremental_scores_match_naive_forward() {
        let (probe, ds) = random_instance(10, 3, 5);
        let dev = ds.view(Split::Dev);
        let examples: Vec<_> = dev.examples().collect();
        let chosen = [4usize, 1];
        let mut cache = vec![0.0; examples.len() * 3];
        for (n, (h, _)) in examples.iter().enumerate() {
            for &j in &chosen {
                for c in 0..3 {
                    cache[n * 3 + c] += probe.weight(c, j) * h[j] as f64;
                }
            }
        }
        for j in (0..10).filter(|j| !chosen.contains(j)) {
            let fast = candidate_loglik(&probe, &examples, &cache, j);
            let mask = Mask::from_indices(10, chosen.iter().copied().chain([j])).unwrap();
            let naive = -masked_nll(&probe, &ds, Split::Dev, &mask).unwrap();
            assert!((fast - naive).abs() <= 1e-9 * naive.abs().max(1.0), "{fast} vs {naive}");
        }
    }

    #[test]
    fn planted_pair_found_by_greedy() {
        let (probe, ds) = planted(10, vec![2, 7], 12);
        let dev = ds.view(Split::Dev);
        let res = greedy_select(&probe, &dev, 2).unwrap();
        assert_eq!(res.dims_sorted(), vec![2, 7]);

        // oracle: brute-force scan of every pair
        let mut best = (0, 0, f64::NEG_INFINITY);
        for a in 0..10 {
            for b in a + 1..10 {
                let ll = -masked_nll(&probe, &ds, Split::Dev, &Mask::from_indices(10, [a, b]).unwrap()).unwrap();
                if ll > best.2 {
                    best = (a, b, ll);
                }
            }
        }
        assert_eq!((best.0, best.1), (2, 7));
    }

    #[test]
    fn exhaustive_scans_binomial_count() {
        let (probe, ds) = random_instance(10, 2, 6);
        let ex = exhaustive_select(&probe, &ds.view(Split::Dev), 3).unwrap();
        assert_eq!(ex.subsets_scanned, 120);
        assert_eq!(ex.result.loglik_trace.len(), 1);
    }

    #[test]
    fn exhaustive_bound() {
        let (probe, ds) = random_instance(40, 2, 7);
        assert!(matches!(
            exhaustive_select(&probe, &ds.view(Split::Dev), 10),
            Err(Error::CombinatorialBound { .. })
        ));
    }

    #[test]
    fn exhaustive_dominates_greedy() {
        for seed in 0..10 {
            let (probe, ds) = random_instance(8, 3, 100 + seed);
            let dev = ds.view(Split::Dev);
            let g = greedy_select(&probe, &dev, 3).unwrap();
            let e = exhaustive_select(&probe, &dev, 3).unwrap();
            assert!(e.result.final_loglik().unwrap() >= g.final_loglik().unwrap());
        }
    }

    #[test]
    fn planted_pair_exhaustive_agrees_with_greedy() {
        let (probe, ds) = planted(8, vec![1, 5], 21);
        let dev = ds.view(Split::Dev);
        let g = greedy_select(&probe, &dev, 2).unwrap();
        let e = exhaustive_select(&probe, &dev, 2).unwrap();
        assert_eq!(g.dims_sorted(), e.result.ordered_dims);
        assert_eq!(g.final_loglik(), e.result.final_loglik());
    }

    #[test]
    fn duplicate_column_tie_goes_to_lower_index() {
        let (mut probe, mut ds) = planted(6, vec![4], 5);
        // make column 1 an exact copy of the informative column 4
        for r in 0..ds.len() {
            let row = ds.embeddings.row_mut(r);
            row[1] = row[4];
        }
        let d = probe.d();
        let w = probe.weights().to_vec();
        let mut w2 = w.clone();
        for c in 0..probe.num_labels() {
            w2[c * d + 1] = w[c * d + 4];
        }
        probe = LinearProbe::from_weights(probe.labels().to_vec(), d, w2).unwrap();
        let res = greedy_select(&probe, &ds.view(Split::Dev), 1).unwrap();
        assert_eq!(res.ordered_dims, vec![1]);
    }

    #[test]
    fn greedy_is_deterministic() {
        let (probe, ds) = random_instance(10, 3, 9);
        let a = greedy_select(&probe, &ds.view(Split::Dev), 5).unwrap();
        let b = greedy_select(&probe, &ds.view(Split::Dev), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_from_selection() {
        let res = SelectionResult {
            dataset_key: DatasetKey {
                language: "eng".into(),
                category: "Number".into(),
                layer: 13,
                checkpoint_step: 1,
            },
            k: 2,
            d: 10,
            ordered_dims: vec![2, 6],
            loglik_trace: vec![-3.0, -2.0],
        };
        assert_eq!(selection_to_mask(&res, 10).unwrap().indices(), vec![2, 6]);
        assert!(selection_to_mask(&res, 5).is_err());
        let empty = SelectionResult {
            k: 0,
            ordered_dims: vec![],
            loglik_trace: vec![],
            ..res.clone()
        };
        assert!(selection_to_mask(&empty, 10).unwrap().is_empty());

        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("selection.json");
        save_selection(&SelectionFile::new(&res, Some("probe".into()), None), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"ordered_dims\": [\n    3,\n    7\n  ]"), "{text}");
        let (back, _) = load_selection(&path).unwrap();
        assert_eq!(selection_to_mask(&back, 10).unwrap(), selection_to_mask(&res, 10).unwrap());
        assert_eq!(back, res);
    }
}
