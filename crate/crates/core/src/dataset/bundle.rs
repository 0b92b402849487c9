//! On-disk bundle format.
//!
//! ```text
//! <bundle>/manifest.json   JSON object, keys in `Manifest` field order
//! <bundle>/records.tsv     header "index\tform\tlemma\tlabel_id\tsplit", one row per matrix row
//! <bundle>/embeddings.bin  "IPEMB1\0\0" | u32-LE N | u32-LE d | N*d f32-LE, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Manifest, Matrix, ProbeDataset, Record, Split};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.tsv";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const EMBEDDINGS_MAGIC: &[u8; 8] = b"IPEMB1\0\0";

const RECORDS_HEADER: &str = "index\tform\tlemma\tlabel_id\tsplit";
const HEADER_LEN: usize = 16;

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ProbeDataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
    manifest
        .validate()
        .map_err(|e| Error::format(&manifest_path, None, e.to_string()))?;

    let records_path = dir.join(RECORDS_FILE);
    let records = read_records(&records_path, &manifest)?;

    let emb_path = dir.join(EMBEDDINGS_FILE);
    let bytes = fs::read(&emb_path).map_err(|e| Error::io(&emb_path, e))?;
    let embeddings = decode_embeddings(&emb_path, &bytes)?;

    if embeddings.rows() != records.len() {
        return Err(Error::format(
            &emb_path,
            Some(8),
            format!(
                "header declares N = {} but {} has {} rows",
                embeddings.rows(),
                RECORDS_FILE,
                records.len()
            ),
        ));
    }
    if embeddings.rows() != manifest.n {
        return Err(Error::format(
            &emb_path,
            Some(8),
            format!("header declares N = {} but manifest n = {}", embeddings.rows(), manifest.n),
        ));
    }
    if embeddings.cols() != manifest.d {
        return Err(Error::format(
            &emb_path,
            Some(12),
            format!("header declares d = {} but manifest d = {}", embeddings.cols(), manifest.d),
        ));
    }

    ProbeDataset::new(manifest, records, embeddings)
}

/// Writes the bundle, creating `dir` if needed. The dataset is validated first,
/// so nothing is written for an invalid dataset.
pub fn write_bundle(dataset: &ProbeDataset, dir: impl AsRef<Path>) -> Result<()> {
    dataset.validate()?;
    for (row, rec) in dataset.records.iter().enumerate() {
        for (field, value) in [("form", &rec.form), ("lemma", &rec.lemma)] {
            if value.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidDataset(format!(
                    "record at row {row}: {field} contains a tab or newline"
                )));
            }
        }
    }

    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&dataset.manifest).map_err(|e| Error::json(&manifest_path, e))?;
    json.push('\n');
    write_file(&manifest_path, json.as_bytes())?;

    let mut tsv = String::with_capacity(dataset.records.len() * 32);
    tsv.push_str(RECORDS_HEADER);
    tsv.push('\n');
    for rec in &dataset.records {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            rec.index, rec.form, rec.lemma, rec.label_id, rec.split
        ));
    }
    write_file(&dir.join(RECORDS_FILE), tsv.as_bytes())?;

    write_file(&dir.join(EMBEDDINGS_FILE), &encode_embeddings(&dataset.embeddings))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_embeddings(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.as_slice().len() * 4);
    out.extend_from_slice(EMBEDDINGS_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn decode_embeddings(path: &Path, bytes: &[u8]) -> Result<Matrix> {
    decode_matrix(path, bytes, EMBEDDINGS_MAGIC)
}

/// Shared decoder for the `magic | u32 rows | u32 cols | f32...` layout.
pub(crate) fn decode_matrix(path: &Path, bytes: &[u8], magic: &[u8; 8]) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            path,
            Some(bytes.len() as u64),
            format!("truncated header ({} bytes)", bytes.len()),
        ));
    }
    if &bytes[..8] != magic {
        return Err(Error::format(
            path,
            Some(0),
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..8]),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            Some(bytes.len().min(expected) as u64),
            format!("payload size mismatch: {rows}x{cols} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(
                path,
                Some((HEADER_LEN + i * 4) as u64),
                format!("non-finite value {v} at row {}, column {}", i / cols, i % cols),
            ));
        }
        data.push(v);
    }
    Matrix::new(rows, cols, data)
}

fn read_records(path: &PathBuf, manifest: &Manifest) -> Result<Vec<Record>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(RECORDS_HEADER) => {}
        Some(other) => {
            return Err(Error::format(path, Some(1), format!("unexpected header `{other}`")));
        }
        None => return Err(Error::format(path, Some(1), "missing header")),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i as u64 + 2;
        let bad = |msg: String| Error::format(path, Some(lineno), msg);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let index = fields[0].parse().map_err(|_| bad(format!("bad index `{}`", fields[0])))?;
        let label_id: usize = fields[3].parse().map_err(|_| bad(format!("bad label_id `{}`", fields[3])))?;
        if label_id >= manifest.num_labels() {
            return Err(bad(format!(
                "unknown label_id {label_id} (inventory has {} labels)",
                manifest.num_labels()
            )));
        }
        let split: Split = fields[4].parse().map_err(bad)?;
        records.push(Record {
            index,
            form: fields[1].to_string(),
            lemma: fields[2].to_string(),
            label_id,
            split,
        });
    }
    Ok(records)
}
