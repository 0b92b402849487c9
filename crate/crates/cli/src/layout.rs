//! Where pipeline artifacts live and how input bundles are found.
//!
//! Every per-dataset artifact sits under `<language>/<category>/layer<L>/step<S>`
//! inside its stage directory, so parallel jobs never write to the same path.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use intrinsic_probe::dataset::{Manifest, MANIFEST_FILE};
use intrinsic_probe::selection::DatasetKey;
use walkdir::WalkDir;

use crate::error::{CliError, CliResult};

pub const BUNDLES_DIR: &str = "bundles";
pub const PROBES_DIR: &str = "probes";
pub const SELECTIONS_DIR: &str = "selections";
pub const OVERLAP_DIR: &str = "overlap";
pub const CORRELATION_DIR: &str = "correlation";
pub const REPORT_DIR: &str = "report";

pub const SELECTION_FILE: &str = "selection.json";
pub const OVERLAP_CSV: &str = "overlap.csv";
pub const MATRICES_DIR: &str = "matrices";
pub const CORRELATION_JSON: &str = "correlation.json";
pub const TABLE_CSV: &str = "table1.csv";

fn check_component(what: &str, value: &str) -> CliResult<()> {
    let bad = value.is_empty()
        || value == "."
        || value == ".."
        || value.contains(['/', '\\'])
        || value.chars().any(char::is_control);
    if bad {
        return Err(CliError::invalid(format!("{what} `{value}` cannot be used as a path component")));
    }
    Ok(())
}

/// Relative directory of one dataset's artifacts.
pub fn key_dir(key: &DatasetKey) -> CliResult<PathBuf> {
    check_component("language", &key.language)?;
    check_component("category", &key.category)?;
    Ok(PathBuf::from(&key.language)
        .join(&key.category)
        .join(format!("layer{}", key.layer))
        .join(format!("step{}", key.checkpoint_step)))
}

pub fn matrix_file_name(category: &str, layer: u32, step: u64) -> CliResult<String> {
    check_component("category", category)?;
    Ok(format!("{category}_layer{layer}_step{step}.json"))
}

pub fn read_manifest(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Finds every bundle under `roots`, keyed by its manifest. Two bundles with
/// the same key are an error.
pub fn discover_bundles(roots: &[PathBuf]) -> CliResult<BTreeMap<DatasetKey, PathBuf>> {
    let mut found = BTreeMap::new();
    for root in roots {
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| CliError::invalid(e.to_string()))?;
            if !(entry.file_type().is_file() && entry.file_name() == MANIFEST_FILE) {
                continue;
            }
            let dir = entry.path().parent().expect("file has a parent").to_path_buf();
            let key = DatasetKey::from(&read_manifest(&dir)?);
            if let Some(prev) = found.insert(key.clone(), dir.clone()) {
                return Err(CliError::invalid(format!(
                    "bundles {} and {} share ({}, {}, layer {}, step {})",
                    prev.display(),
                    dir.display(),
                    key.language,
                    key.category,
                    key.layer,
                    key.checkpoint_step
                )));
            }
        }
    }
    Ok(found)
}

/// Every `selection.json` under `root`.
pub fn find_selections(root: &Path) -> CliResult<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(CliError::invalid(format!("{} is not a directory", root.display())));
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::invalid(e.to_string()))?;
        if entry.file_type().is_file() && entry.file_name() == SELECTION_FILE {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// Mixes a base seed with a string label (FNV-1a, then a splitmix64 finish)
/// so that independent streams get unrelated seeds.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
