//! `probe.json` + `weights.bin` (magic `IPWGT1\0\0`, u32-LE rows, u32-LE
//! cols, row-major f32-LE).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LinearProbe, TrainMeta};
use crate::dataset::bundle::decode_matrix;
use crate::dataset::{Manifest, Matrix};
use crate::error::{Error, Result};

pub const PROBE_FILE: &str = "probe.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const WEIGHTS_MAGIC: &[u8; 8] = b"IPWGT1\0\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeFile {
    /// Manifest of the dataset the probe was trained on.
    pub manifest: Manifest,
    pub label_inventory: Vec<String>,
    pub d: usize,
    pub train: Option<TrainMeta>,
}

/// Writes `probe.json` and `weights.bin` into `dir`. Weights are stored as
/// `f32`; probes returned by `train` are already `f32`-exact.
pub fn save_probe(probe: &LinearProbe, manifest: &Manifest, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta = ProbeFile {
        manifest: manifest.clone(),
        label_inventory: probe.labels().to_vec(),
        d: probe.d(),
        train: probe.train_meta.clone(),
    };
    let json_path = dir.join(PROBE_FILE);
    let mut json = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&json_path, e))?;
    json.push('\n');
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    let rows = probe.num_labels();
    let mut bytes = Vec::with_capacity(16 + probe.weights().len() * 4);
    bytes.extend_from_slice(WEIGHTS_MAGIC);
    bytes.extend_from_slice(&(rows as u32).to_le_bytes());
    bytes.extend_from_slice(&(probe.d() as u32).to_le_bytes());
    for &w in probe.weights() {
        bytes.extend_from_slice(&(w as f32).to_le_bytes());
    }
    let w_path = dir.join(WEIGHTS_FILE);
    fs::write(&w_path, bytes).map_err(|e| Error::io(&w_path, e))
}

pub fn load_probe(dir: impl AsRef<Path>) -> Result<(LinearProbe, ProbeFile)> {
    let dir = dir.as_ref();
    let json_path = dir.join(PROBE_FILE);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let meta: ProbeFile = serde_json::from_str(&text).map_err(|e| Error::json(&json_path, e))?;

    let w_path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&w_path).map_err(|e| Error::io(&w_path, e))?;
    let m: Matrix = decode_matrix(&w_path, &bytes, WEIGHTS_MAGIC)?;
    if m.rows() != meta.label_inventory.len() || m.cols() != meta.d {
        return Err(Error::format(
            &w_path,
            Some(8),
            format!(
                "weights are {}x{}, {} declares {}x{}",
                m.rows(),
                m.cols(),
                PROBE_FILE,
                meta.label_inventory.len(),
                meta.d
            ),
        ));
    }
    let mut probe = LinearProbe::from_weights(
        meta.label_inventory.clone(),
        meta.d,
        m.as_slice().iter().map(|&v| v as f64).collect(),
    )?;
    probe.train_meta = meta.train.clone();
    Ok((probe, meta))
}
