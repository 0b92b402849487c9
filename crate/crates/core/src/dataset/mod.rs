//! Probing datasets: word records paired with an `N × d` embedding matrix.
//!
//! One [`ProbeDataset`] covers a single (language, category, layer,
//! checkpoint) combination. Bundles on disk are directories holding
//! `manifest.json`, `records.tsv` and `embeddings.bin`; see [`load_bundle`].

pub(crate) mod bundle;
pub(crate) mod split;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bundle::{load_bundle, write_bundle, EMBEDDINGS_FILE, EMBEDDINGS_MAGIC, MANIFEST_FILE, RECORDS_FILE};
pub use split::{frequency_filter, lemma_disjoint_split, SplitRatios, DEFAULT_LEMMA_THRESHOLD};

pub const FORMAT_VERSION: u32 = 1;

/// Bundle metadata. Field order is the on-disk key order of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub language: String,
    pub category: String,
    pub layer: u32,
    pub checkpoint_step: u64,
    pub d: usize,
    pub n: usize,
    pub label_inventory: Vec<String>,
    pub source: String,
}

impl Manifest {
    pub fn num_labels(&self) -> usize {
        self.label_inventory.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidDataset(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.d == 0 {
            return Err(Error::InvalidDataset("d must be positive".into()));
        }
        if self.label_inventory.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "label inventory needs at least 2 labels, found {}",
                self.label_inventory.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &self.label_inventory {
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate label `{label}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    /// Not yet assigned; raw extractor output carries this until `prepare`.
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Unassigned => "-",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "-" | "" => Ok(Split::Unassigned),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub label_id: usize,
    pub split: Split,
}

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Position of the first non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / self.cols.max(1), p % self.cols.max(1)))
    }

    /// Keep the listed rows, in the order given.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    pub manifest: Manifest,
    pub records: Vec<Record>,
    pub embeddings: Matrix,
}

impl ProbeDataset {
    /// Builds a dataset and checks every invariant.
    pub fn new(manifest: Manifest, records: Vec<Record>, embeddings: Matrix) -> Result<Self> {
        let ds = ProbeDataset {
            manifest,
            records,
            embeddings,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        m.validate()?;
        if self.records.len() != m.n {
            return Err(Error::InvalidDataset(format!(
                "manifest declares n = {} but there are {} records",
                m.n,
                self.records.len()
            )));
        }
        if self.embeddings.rows() != m.n || self.embeddings.cols() != m.d {
            return Err(Error::InvalidDataset(format!(
                "embedding matrix is {}x{}, manifest declares {}x{}",
                self.embeddings.rows(),
                self.embeddings.cols(),
                m.n,
                m.d
            )));
        }
        for (row, rec) in self.records.iter().enumerate() {
            if rec.label_id >= m.num_labels() {
                return Err(Error::InvalidDataset(format!(
                    "record at row {row} has label_id {} outside the {}-label inventory",
                    rec.label_id,
                    m.num_labels()
                )));
            }
        }
        if let Some((r, c)) = self.embeddings.first_non_finite() {
            return Err(Error::InvalidDataset(format!("non-finite embedding value at row {r}, column {c}")));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.manifest.d
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.manifest.num_labels()
    }

    /// Row indices belonging to `split`, in record order.
    pub fn split_rows(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn view(&self, split: Split) -> SplitView<'_> {
        SplitView {
            dataset: self,
            rows: self.split_rows(split),
            split,
        }
    }

    pub fn is_fully_split(&self) -> bool {
        self.records.iter().all(|r| r.split != Split::Unassigned)
    }

    /// Keeps the listed rows (in order) and updates `manifest.n`.
    pub(crate) fn retain_rows(&self, rows: &[usize]) -> ProbeDataset {
        let mut manifest = self.manifest.clone();
        manifest.n = rows.len();
        ProbeDataset {
            manifest,
            records: rows.iter().map(|&r| self.records[r].clone()).collect(),
            embeddings: self.embeddings.select_rows(rows),
        }
    }
}

/// Borrowed view of the records in one split.
#[derive(Debug, Clone)]
pub struct SplitView<'a> {
    dataset: &'a ProbeDataset,
    rows: Vec<usize>,
    split: Split,
}

impl<'a> SplitView<'a> {
    pub fn dataset(&self) -> &'a ProbeDataset {
        self.dataset
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn d(&self) -> usize {
        self.dataset.d()
    }

    /// Embedding and label of the `i`-th record of the split.
    pub fn example(&self, i: usize) -> (&'a [f32], usize) {
        let row = self.rows[i];
        (self.dataset.embeddings.row(row), self.dataset.records[row].label_id)
    }

    pub fn examples(&self) -> impl Iterator<Item = (&'a [f32], usize)> + '_ {
        (0..self.rows.len()).map(move |i| self.example(i))
    }

    pub fn non_empty(self) -> Result<Self> {
        if self.rows.is_empty() {
            Err(Error::EmptySplit(self.split))
        } else {
            Ok(self)
        }
    }
}
