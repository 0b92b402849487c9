use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ProbeDataset, Split};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Records whose lemma occurs fewer times than this within their split are dropped.
pub const DEFAULT_LEMMA_THRESHOLD: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.65,
            dev: 0.15,
            test: 0.20,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, dev: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, dev, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = self.as_array();
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidArgument(format!("split ratios must be positive, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.dev, self.test]
    }
}

/// Chooses the split for the next item of `size` records.
///
/// Empty splits are filled first (largest target first) so that every split
/// is populated whenever there are at least three items. After that the split
/// whose record fraction `count / total` sits furthest below its target wins.
/// Ties go to the earlier split in train/dev/test order.
pub(crate) fn pick_split(counts: &[usize; 3], targets: &[f64; 3], total: usize) -> usize {
    let empty_best = (0..3)
        .filter(|&s| counts[s] == 0)
        .fold(None, |best: Option<usize>, s| match best {
            Some(b) if targets[b] >= targets[s] => Some(b),
            _ => Some(s),
        });
    if let Some(s) = empty_best {
        return s;
    }
    let total = total.max(1) as f64;
    let mut best = 0;
    let mut best_deficit = f64::NEG_INFINITY;
    for s in 0..3 {
        let deficit = targets[s] - counts[s] as f64 / total;
        if deficit > best_deficit {
            best = s;
            best_deficit = deficit;
        }
    }
    best
}

/// Reassigns every record to train/dev/test so that all records of a lemma
/// share a split. Lemmas are shuffled with `seed`, then each goes to the
/// split furthest below its target share, empty splits first.
pub fn lemma_disjoint_split(dataset: &ProbeDataset, ratios: SplitRatios, seed: u64) -> Result<ProbeDataset> {
    ratios.validate()?;

    let mut order: Vec<&str> = Vec::new();
    let mut sizes: HashMap<&str, usize> = HashMap::new();
    for rec in &dataset.records {
        let c = sizes.entry(rec.lemma.as_str()).or_insert(0);
        if *c == 0 {
            order.push(rec.lemma.as_str());
        }
        *c += 1;
    }
    if order.len() < 3 {
        return Err(Error::TooFewLemmas(order.len()));
    }

    let mut rng = seeded_rng(seed);
    order.shuffle(&mut rng);

    let targets = ratios.as_array();
    let total = dataset.records.len();
    let mut counts = [0usize; 3];
    let mut assignment: HashMap<&str, Split> = HashMap::with_capacity(order.len());
    for lemma in order {
        let s = pick_split(&counts, &targets, total);
        counts[s] += sizes[lemma];
        assignment.insert(lemma, Split::ASSIGNED[s]);
    }

    let mut out = dataset.clone();
    for rec in &mut out.records {
        rec.split = assignment[rec.lemma.as_str()];
    }
    Ok(out)
}

/// Drops records whose lemma occurs fewer than `threshold` times within the
/// record's own split. Surviving rows keep their relative order.
pub fn frequency_filter(dataset: &ProbeDataset, threshold: usize) -> ProbeDataset {
    let mut counts: HashMap<(Split, &str), usize> = HashMap::new();
    for rec in &dataset.records {
        *counts.entry((rec.split, rec.lemma.as_str())).or_insert(0) += 1;
    }
    let keep: Vec<usize> = dataset
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| counts[&(r.split, r.lemma.as_str())] >= threshold)
        .map(|(i, _)| i)
        .collect();
    dataset.retain_rows(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_util::*;
    use proptest::prelude::*;

    fn split_counts(ds: &ProbeDataset) -> [usize; 3] {
        let mut c = [0; 3];
        for r in &ds.records {
            match r.split {
                Split::Train => c[0] += 1,
                Split::Dev => c[1] += 1,
                Split::Test => c[2] += 1,
                Split::Unassigned => panic!("unassigned after split"),
            }
        }
        c
    }

    fn lemma_disjoint(ds: &ProbeDataset) -> bool {
        let mut seen: HashMap<&str, Split> = HashMap::new();
        ds.records
            .iter()
            .all(|r| *seen.entry(r.lemma.as_str()).or_insert(r.split) == r.split)
    }

    #[test]
    fn hundred_singleton_lemmas_hit_targets() {
        let names: Vec<String> = (0..100).map(|i| format!("l{i}")).collect();
        let lemmas: Vec<_> = names.iter().map(|n| (n.as_str(), Split::Unassigned)).collect();
        let ds = dataset_from(&lemmas, 2);
        let out = lemma_disjoint_split(&ds, SplitRatios::new(0.8, 0.1, 0.1).unwrap(), 7).unwrap();
        let c = split_counts(&out);
        // Oracle: with unit-size lemmas the largest-deficit rule reaches the
        // target counts exactly once every split is non-empty.
        for (got, want) in c.iter().zip([80usize, 10, 10]) {
            assert!(got.abs_diff(want) <= 1, "{c:?}");
        }
    }

    #[test]
    fn two_lemmas_is_an_error() {
        let ds = dataset_from(&[("a", Split::Unassigned), ("b", Split::Unassigned), ("a", Split::Unassigned)], 2);
        assert!(matches!(
            lemma_disjoint_split(&ds, SplitRatios::default(), 0),
            Err(Error::TooFewLemmas(2))
        ));
    }

    #[test]
    fn three_lemmas_populate_every_split() {
        let ds = dataset_from(&[("a", Split::Unassigned), ("b", Split::Unassigned), ("c", Split::Unassigned)], 2);
        let out = lemma_disjoint_split(&ds, SplitRatios::new(0.8, 0.1, 0.1).unwrap(), 3).unwrap();
        assert_eq!(split_counts(&out), [1, 1, 1]);
    }

    #[test]
    fn ratios_must_sum_to_one() {
        assert!(SplitRatios::new(0.5, 0.3, 0.3).is_err());
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
        assert!(SplitRatios::new(0.7, 0.2, 0.1).is_ok());
    }

    #[test]
    fn filter_drops_rare_lemmas_per_split() {
        let mut lemmas = vec![("eat", Split::Train); 30];
        lemmas.extend(vec![("walk", Split::Train); 5]);
        let ds = dataset_from(&lemmas, 2);
        let out = frequency_filter(&ds, 20);
        assert_eq!(out.len(), 30);
        assert!(out.records.iter().all(|r| r.lemma == "eat"));
        assert_eq!(out.manifest.n, 30);
        out.validate().unwrap();
    }

    #[test]
    fn filter_threshold_zero_is_identity() {
        let ds = dataset_from(&[("eat", Split::Train), ("walk", Split::Dev)], 3);
        assert_eq!(frequency_filter(&ds, 0), ds);
    }

    #[test]
    fn filter_keeps_lemma_at_exact_threshold() {
        let mut lemmas = vec![("eat", Split::Dev); 20];
        lemmas.extend(vec![("walk", Split::Dev); 19]);
        let out = frequency_filter(&dataset_from(&lemmas, 1), 20);
        assert_eq!(out.len(), 20);
    }

    #[test]
    fn filter_counts_within_split() {
        // 15 train + 15 dev occurrences: 30 overall, but under 20 in each split
        let mut lemmas = vec![("eat", Split::Train); 15];
        lemmas.extend(vec![("eat", Split::Dev); 15]);
        assert!(frequency_filter(&dataset_from(&lemmas, 1), 20).is_empty());
    }

    #[test]
    fn filter_compacts_embedding_rows_in_order() {
        let lemmas = [
            ("a", Split::Train),
            ("b", Split::Train),
            ("a", Split::Train),
            ("b", Split::Dev),
        ];
        let ds = dataset_from(&lemmas, 2);
        let out = frequency_filter(&ds, 2);
        assert_eq!(out.records.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(out.embeddings.row(1), ds.embeddings.row(2));
    }

    fn arb_lemmas() -> impl Strategy<Value = Vec<(u8, u8)>> {
        prop::collection::vec((0u8..12, 0u8..4), 0..80)
    }

    fn build(spec: &[(u8, u8)]) -> ProbeDataset {
        let names: Vec<String> = spec.iter().map(|(l, _)| format!("lemma{l}")).collect();
        let lemmas: Vec<_> = names
            .iter()
            .zip(spec)
            .map(|(n, (_, s))| (n.as_str(), [Split::Train, Split::Dev, Split::Test, Split::Unassigned][*s as usize]))
            .collect();
        dataset_from(&lemmas, 2)
    }

    proptest! {
        #[test]
        fn split_is_lemma_disjoint_and_deterministic(spec in arb_lemmas(), seed in any::<u64>()) {
            let ds = build(&spec);
            match lemma_disjoint_split(&ds, SplitRatios::default(), seed) {
                Ok(out) => {
                    prop_assert!(lemma_disjoint(&out));
                    prop_assert!(split_counts(&out).iter().all(|&c| c > 0));
                    prop_assert_eq!(&out, &lemma_disjoint_split(&ds, SplitRatios::default(), seed).unwrap());
                    prop_assert_eq!(&out.embeddings, &ds.embeddings);
                }
                Err(Error::TooFewLemmas(n)) => prop_assert!(n < 3),
                Err(e) => prop_assert!(false, "unexpected error {}", e),
            }
        }

        #[test]
        fn filter_is_idempotent_and_order_preserving(spec in arb_lemmas(), t in 0usize..6) {
            let ds = build(&spec);
            let once = frequency_filter(&ds, t);
            prop_assert!(once.len() <= ds.len());
            prop_assert_eq!(&frequency_filter(&once, t), &once);
            let idx: Vec<usize> = once.records.iter().map(|r| r.index).collect();
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
