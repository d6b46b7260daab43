//! Run configuration: a TOML file with dotted keys, overridable by
//! `--key=value` flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{CvSettings, Pooling};
use crate::features::FeatureKind;
use crate::regress::{Grids, RegressorKind};
use crate::signal::{TpdMode, WelchParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { manifest: PathBuf::from("data/manifest.toml"), output_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Sampling rate after decimation; the input rate must be an integer multiple.
    pub target_fs: f64,
    /// Length of the analysed epoch; the trailing `epoch_s` seconds are kept.
    pub epoch_s: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub filter_order: usize,
    /// Trials with `rt > mean + outlier_sd * std` (per subject) are dropped.
    pub outlier_sd: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_fs: 250.0,
            epoch_s: 5.0,
            band_low_hz: 1.0,
            band_high_hz: 20.0,
            filter_order: 250,
            outlier_sd: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub r_classes: usize,
    pub h_per_class: usize,
    pub trace_normalize: bool,
    pub tpd_mode: TpdMode,
    pub welch_segment: usize,
    pub welch_overlap: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let w = WelchParams::default();
        Self {
            r_classes: 3,
            h_per_class: 21,
            trace_normalize: true,
            tpd_mode: TpdMode::default(),
            welch_segment: w.seg_len,
            welch_overlap: w.overlap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeSection {
    /// Widths after the input layer; the last is the latent size.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for AeSection {
    fn default() -> Self {
        Self { hidden: vec![64, 16], epochs: 110, learning_rate: 0.14, batch_size: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub outer_k: usize,
    pub inner_k: usize,
    pub seed: u64,
    pub pooling: Pooling,
    pub feature_sets: Vec<FeatureKind>,
    pub regressors: Vec<RegressorKind>,
}

impl Default for CvConfig {
    fn default() -> Self {
        let s = CvSettings::default();
        Self {
            outer_k: s.outer_k,
            inner_k: s.inner_k,
            seed: s.seed,
            pooling: Pooling::default(),
            feature_sets: s.feature_sets,
            regressors: s.regressors,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubjectConfig {
    pub exclude: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub ae: AeSection,
    pub grids: Grids,
    pub cv: CvConfig,
    pub subjects: SubjectConfig,
}

/// Splits `--key=value` (or `key=value`) into its parts.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let body = arg.strip_prefix("--").unwrap_or(arg);
    match body.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(Error::Config(format!("expected --key=value, got `{arg}`"))),
    }
}

/// A flag value is read as a TOML literal when possible and as a bare string otherwise.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("bad key `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl PipelineConfig {
    /// Parses config text, applies overrides in order, and validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in overrides {
            set_dotted(&mut table, k, parse_value(v))?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let p = &self.preprocess;
        if !(p.target_fs > 0.0 && p.epoch_s > 0.0 && p.outlier_sd > 0.0) {
            return bad("preprocess.target_fs, epoch_s and outlier_sd must be positive");
        }
        if !(0.0 < p.band_low_hz && p.band_low_hz < p.band_high_hz && p.band_high_hz < p.target_fs / 2.0) {
            return bad("preprocess band must satisfy 0 < low < high < target_fs / 2");
        }
        if self.model.r_classes < 2 || self.model.h_per_class == 0 {
            return bad("model.r_classes must be >= 2 and model.h_per_class >= 1");
        }
        if self.ae.hidden.is_empty() || self.ae.hidden.contains(&0) {
            return bad("ae.hidden must list positive widths");
        }
        if self.cv.outer_k < 2 || self.cv.inner_k < 2 {
            return bad("cv.outer_k and cv.inner_k must be >= 2");
        }
        if self.cv.feature_sets.is_empty() || self.cv.regressors.is_empty() {
            return bad("cv.feature_sets and cv.regressors must be nonempty");
        }
        if self.grids.lambdas.is_empty() || self.grids.svr_c.is_empty() || self.grids.svr_epsilon.is_empty() {
            return bad("hyperparameter grids must be nonempty");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn welch(&self) -> WelchParams {
        WelchParams { seg_len: self.model.welch_segment, overlap: self.model.welch_overlap }
    }

    pub fn cv_settings(&self) -> CvSettings {
        CvSettings {
            r_classes: self.model.r_classes,
            h_per_class: self.model.h_per_class,
            trace_normalize: self.model.trace_normalize,
            outer_k: self.cv.outer_k,
            inner_k: self.cv.inner_k,
            seed: self.cv.seed,
            ae_hidden: self.ae.hidden.clone(),
            ae_epochs: self.ae.epochs,
            ae_learning_rate: self.ae.learning_rate,
            ae_batch_size: self.ae.batch_size,
            grids: self.grids.clone(),
            feature_sets: self.cv.feature_sets.clone(),
            regressors: self.cv.regressors.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = PipelineConfig::default();
        assert_eq!((c.model.r_classes, c.model.h_per_class), (3, 21));
        assert_eq!((c.cv.outer_k, c.cv.inner_k), (8, 8));
        assert_eq!((c.ae.epochs, c.ae.learning_rate), (110, 0.14));
        assert_eq!((c.preprocess.band_low_hz, c.preprocess.band_high_hz, c.preprocess.target_fs), (1.0, 20.0, 250.0));
        assert_eq!(PipelineConfig::from_toml_with_overrides("", &[]).unwrap(), c);
    }

    #[test]
    fn flags_override_file() {
        let text = "cv.seed = 4\nmodel.tpd_mode = \"temporal_diff\"\n[subjects]\nexclude = [\"s12\"]\n";
        let over = vec![
            parse_override("--cv.seed=9").unwrap(),
            parse_override("--cv.regressors=[\"lasso\"]").unwrap(),
            parse_override("--data.output_dir=/tmp/x").unwrap(),
        ];
        let c = PipelineConfig::from_toml_with_overrides(text, &over).unwrap();
        assert_eq!(c.cv.seed, 9);
        assert_eq!(c.model.tpd_mode, TpdMode::TemporalDiff);
        assert_eq!(c.subjects.exclude, ["s12"]);
        assert_eq!(c.cv.regressors, [RegressorKind::Lasso]);
        assert_eq!(c.data.output_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn round_trip_and_hash() {
        let mut c = PipelineConfig::default();
        c.cv.feature_sets.push(FeatureKind::AmpCsp);
        let back = PipelineConfig::from_toml_with_overrides(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        assert_ne!(c.hash(), PipelineConfig::default().hash());
    }

    #[test]
    fn config_errors() {
        for text in ["cv.outer_k = 1", "model.typo = 3", "preprocess.band_high_hz = 200.0", "[[[bad"] {
            assert!(matches!(PipelineConfig::from_toml_with_overrides(text, &[]), Err(Error::Config(_))), "{text}");
        }
        assert!(parse_override("--noequals").is_err());
        assert!(matches!(
            PipelineConfig::from_toml_with_overrides("", &[("cv.seed".into(), "\"x\"".into())]),
            Err(Error::Config(_))
        ));
    }
}
