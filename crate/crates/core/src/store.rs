//! On-disk artifacts for one dataset.
//!
//! ```text
//! <dir>/manifest.json          params, names, timestamps, labels, checksums
//! <dir>/original.f64           series-major little-endian f64, N x M
//! <dir>/compressed.f64         series-major little-endian f64, N x ceil(M / sampling)
//! <dir>/index_<kind>.json      one relation index each
//! ```
//!
//! Trend tries are rebuilt on load; they are cheap next to the indexes.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datamodel::{DataError, Dataset, MetaLabels, PreprocessParams};
use crate::preprocess::{Artifacts, IndexKind, PreprocessError, RelationIndex};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("stale artifacts: checksum mismatch for {0}")]
    Stale(String),
    #[error("relation indexes not ready after {0:?}")]
    NotReady(Duration),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub id: String,
    pub params: PreprocessParams,
    pub max_lag: usize,
    pub names: Vec<String>,
    pub timestamps: Vec<String>,
    pub step_unit: String,
    pub labels: MetaLabels,
    /// File name to sha256 hex digest.
    pub checksums: BTreeMap<String, String>,
}

/// Content hash identifying a dataset upload: the data and config bytes plus
/// the parameters they are preprocessed with.
pub fn dataset_id(data: &[u8], config: &[u8], params: PreprocessParams, step_unit: &str) -> String {
    let mut h = Sha256::new();
    for part in [data, config, step_unit.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.update((params.sampling_length as u64).to_le_bytes());
    h.update((params.box_length as u64).to_le_bytes());
    hex::encode(h.finalize())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn encode_columns<'a>(columns: impl Iterator<Item = &'a [f64]>) -> Vec<u8> {
    columns.flat_map(|c| c.iter().flat_map(|v| v.to_le_bytes())).collect()
}

fn decode_columns(bytes: &[u8], count: usize, len: usize, path: &Path) -> Result<Vec<Vec<f64>>, StoreError> {
    if bytes.len() != count * len * 8 {
        return Err(StoreError::Malformed {
            path: path.to_path_buf(),
            message: format!("expected {} bytes, found {}", count * len * 8, bytes.len()),
        });
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(values.chunks(len.max(1)).take(count).map(<[f64]>::to_vec).collect())
}

fn index_file(kind: IndexKind) -> String {
    format!("index_{}.json", kind.as_str())
}

/// Write `artifacts` to `dir`, waiting up to `wait` for the relation indexes.
pub fn save(dir: &Path, id: &str, artifacts: &Artifacts, wait: Duration) -> Result<Manifest, StoreError> {
    if !artifacts.indexes.wait_all(wait) {
        return Err(StoreError::NotReady(wait));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("original.f64".into(), encode_columns(artifacts.series.iter().map(|s| s.original.as_slice()))),
        ("compressed.f64".into(), encode_columns(artifacts.series.iter().map(|s| s.compressed.as_slice()))),
    ];
    for kind in IndexKind::ALL {
        let index = artifacts.indexes.require(kind)?;
        files.push((index_file(kind), serde_json::to_vec(&*index).expect("indexes serialize")));
    }
    let mut checksums = BTreeMap::new();
    for (name, bytes) in &files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        checksums.insert(name.clone(), sha256_hex(bytes));
    }
    let ds = &artifacts.dataset;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        id: id.to_string(),
        params: artifacts.params,
        max_lag: artifacts.max_lag,
        names: ds.names().to_vec(),
        timestamps: ds.timestamps().to_vec(),
        step_unit: ds.step_unit().to_string(),
        labels: artifacts.labels.clone(),
        checksums,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, StoreError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| StoreError::Malformed { path: path.clone(), message: e.to_string() })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(StoreError::Malformed {
            path,
            message: format!("format version {} is not {FORMAT_VERSION}", manifest.format_version),
        });
    }
    Ok(manifest)
}

fn read_checked(dir: &Path, manifest: &Manifest, name: &str) -> Result<Vec<u8>, StoreError> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    match manifest.checksums.get(name) {
        Some(sum) if *sum == sha256_hex(&bytes) => Ok(bytes),
        _ => Err(StoreError::Stale(name.to_string())),
    }
}

/// Load artifacts saved by [`save`], verifying every checksum.
pub fn load(dir: &Path) -> Result<(Manifest, Artifacts), StoreError> {
    let manifest = read_manifest(dir)?;
    let n = manifest.names.len();
    let m = manifest.timestamps.len();
    let original_path = dir.join("original.f64");
    let series = decode_columns(&read_checked(dir, &manifest, "original.f64")?, n, m, &original_path)?;
    let compressed_path = dir.join("compressed.f64");
    let compressed = decode_columns(
        &read_checked(dir, &manifest, "compressed.f64")?,
        n,
        manifest.params.compressed_len(m),
        &compressed_path,
    )?;
    let dataset = Dataset::from_columns(manifest.timestamps.clone(), manifest.names.clone(), series)?
        .with_step_unit(manifest.step_unit.clone());
    let mut indexes = Vec::new();
    for kind in IndexKind::ALL {
        let name = index_file(kind);
        let bytes = read_checked(dir, &manifest, &name)?;
        let index: RelationIndex = serde_json::from_slice(&bytes)
            .map_err(|e| StoreError::Malformed { path: dir.join(&name), message: e.to_string() })?;
        if index.kind != kind || index.names != manifest.names {
            return Err(StoreError::Stale(name));
        }
        indexes.push(index);
    }
    let artifacts =
        Artifacts::with_indexes(dataset, manifest.labels.clone(), manifest.params, indexes, manifest.max_lag)?;
    if artifacts.series.iter().zip(&compressed).any(|(s, c)| s.compressed != *c) {
        return Err(StoreError::Stale("compressed.f64".into()));
    }
    Ok((manifest, artifacts))
}
