//! Trial storage: one little-endian `f32` file per trial, channel-major, plus a
//! TOML manifest listing shape, rate and labels for each file.
//!
//! ```toml
//! [[trial]]
//! file = "trial_00000.f32"
//! channels = 30
//! samples = 1250
//! fs = 250.0
//! rt = 0.93
//! subject = "s01"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::EegTrial;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub channels: usize,
    pub samples: usize,
    pub fs: f64,
    pub rt: f64,
    pub subject: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, rename = "trial")]
    pub trials: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::data(format!("manifest {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn encode_trial(trial: &EegTrial) -> Vec<u8> {
    let data = trial.data();
    let mut out = Vec::with_capacity(4 * data.len());
    for row in data.row_iter() {
        for &v in row.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_trial(bytes: &[u8], entry: &ManifestEntry) -> Result<EegTrial> {
    let expected = 4 * entry.channels * entry.samples;
    if bytes.len() != expected {
        return Err(Error::data(format!(
            "trial {}: expected {expected} bytes for {}x{}, found {}",
            entry.file,
            entry.channels,
            entry.samples,
            bytes.len()
        )));
    }
    let k = entry.samples;
    let data = DMatrix::from_fn(entry.channels, k, |d, t| {
        let i = 4 * (d * k + t);
        f32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as f64
    });
    EegTrial::new(data, entry.fs, entry.rt, entry.subject.clone())
        .map_err(|e| Error::data(format!("trial {}: {e}", entry.file)))
}

/// Writes every trial and a manifest into `dir`; returns the manifest path.
pub fn write_dataset(dir: impl AsRef<Path>, trials: &[EegTrial]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::default();
    for (i, trial) in trials.iter().enumerate() {
        let file = format!("trial_{i:05}.f32");
        write_atomic(dir.join(&file), &encode_trial(trial))?;
        manifest.trials.push(ManifestEntry {
            file,
            channels: trial.n_channels(),
            samples: trial.n_samples(),
            fs: trial.fs(),
            rt: trial.rt(),
            subject: trial.subject_id().to_string(),
        });
    }
    let path = dir.join(MANIFEST_NAME);
    write_atomic(&path, manifest.to_toml().as_bytes())?;
    Ok(path)
}

/// Loads all trials listed in a manifest; file names resolve relative to it.
pub fn read_dataset(manifest_path: impl AsRef<Path>) -> Result<Vec<EegTrial>> {
    let manifest_path = manifest_path.as_ref();
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .trials
        .iter()
        .map(|entry| {
            let path = base.join(&entry.file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            decode_trial(&bytes, entry)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip_is_f32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let a = EegTrial::new(DMatrix::from_fn(3, 20, |d, t| (d * 20 + t) as f64 * 0.25), 250.0, 0.8, "s01").unwrap();
        let b = EegTrial::new(DMatrix::from_fn(3, 20, |d, t| -((d + t) as f64)), 250.0, 1.3, "s02").unwrap();
        let path = write_dataset(dir.path(), &[a.clone(), b.clone()]).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn layout_is_channel_major_little_endian() {
        let t = EegTrial::new(DMatrix::from_row_slice(2, 16, &(0..32).map(f64::from).collect::<Vec<_>>()), 250.0, 1.0, "x").unwrap();
        let bytes = encode_trial(&t);
        assert_eq!(&bytes[4..8], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[64..68], &16.0f32.to_le_bytes());
    }

    #[test]
    fn wrong_size_file_is_data_error() {
        let entry = ManifestEntry {
            file: "x.f32".into(),
            channels: 2,
            samples: 16,
            fs: 250.0,
            rt: 1.0,
            subject: "s".into(),
        };
        assert!(matches!(decode_trial(&[0u8; 10], &entry), Err(Error::Data(_))));
    }
}
