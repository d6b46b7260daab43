//! End-to-end orchestration: preprocessing, nested evaluation, report files.

pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{run_nested_cv, ExperimentReport, PreparedDataset};
use crate::features::FeatureKind;
use crate::regress::RegressorKind;
use crate::signal::io::{read_dataset, write_atomic, write_dataset};
use crate::signal::{decimate, design_fir, filtfilt, EegTrial, FilterSpec};

pub use config::{parse_override, PipelineConfig};

pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "table2.csv";
pub const PREPROCESS_LOG_FILE: &str = "preprocess_log.json";
pub const FAILURE_MARKER: &str = "FAILED";
pub const PREPROCESSED_DIR: &str = "preprocessed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedTrial {
    pub index: usize,
    pub subject: String,
    pub rt: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectCounts {
    pub n_input: usize,
    pub n_used: usize,
    /// Reaction-time cutoff applied to this subject.
    pub rt_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessLog {
    pub n_input: usize,
    pub n_used: usize,
    pub n_excluded: usize,
    pub excluded: Vec<ExcludedTrial>,
    pub subjects: BTreeMap<String, SubjectCounts>,
}

fn in_trial(index: usize, e: Error) -> Error {
    match e {
        Error::Param(m) | Error::Data(m) => Error::Data(format!("trial {index}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("trial {index}: {m}")),
        other => other,
    }
}

fn decimation_factor(fs: f64, target: f64) -> Option<usize> {
    let ratio = fs / target;
    let factor = ratio.round();
    ((ratio - factor).abs() < 1e-9 && factor >= 1.0).then_some(factor as usize)
}

/// Subject exclusion, decimation to the target rate, trailing-epoch
/// extraction, per-subject reaction-time outlier removal, then zero-phase
/// band-pass filtering with per-channel mean removal.
pub fn preprocess(trials: &[EegTrial], cfg: &PipelineConfig) -> Result<(Vec<EegTrial>, PreprocessLog)> {
    let p = &cfg.preprocess;
    let mut log = PreprocessLog { n_input: trials.len(), ..Default::default() };
    if let Some(first) = trials.first() {
        if let Some((i, t)) = trials.iter().enumerate().find(|(_, t)| t.n_channels() != first.n_channels()) {
            return Err(Error::data(format!(
                "trial {i} has {} channels, trial 0 has {}",
                t.n_channels(),
                first.n_channels()
            )));
        }
    }
    for t in trials {
        let c = log.subjects.entry(t.subject_id().to_string()).or_insert(SubjectCounts {
            n_input: 0,
            n_used: 0,
            rt_threshold: None,
        });
        c.n_input += 1;
    }

    let mut kept: Vec<usize> = Vec::new();
    for (i, t) in trials.iter().enumerate() {
        if cfg.subjects.exclude.iter().any(|s| s == t.subject_id()) {
            log.excluded.push(ExcludedTrial {
                index: i,
                subject: t.subject_id().to_string(),
                rt: t.rt(),
                reason: "subject excluded".into(),
            });
        } else {
            kept.push(i);
        }
    }

    let epoch_len = (p.epoch_s * p.target_fs).round() as usize;
    let epoched: Vec<EegTrial> = kept
        .par_iter()
        .map(|&i| {
            let t = &trials[i];
            let factor = decimation_factor(t.fs(), p.target_fs).ok_or_else(|| {
                Error::data(format!("trial {i}: {} Hz is not an integer multiple of {} Hz", t.fs(), p.target_fs))
            })?;
            let d = decimate(t, factor).map_err(|e| in_trial(i, e))?;
            if d.n_samples() < epoch_len {
                return Err(Error::data(format!(
                    "trial {i}: {} samples after decimation, epoch needs {epoch_len}",
                    d.n_samples()
                )));
            }
            let start = d.n_samples() - epoch_len;
            d.with_data(d.data().columns(start, epoch_len).into_owned(), d.fs())
                .map_err(|e| in_trial(i, e))
        })
        .collect::<Result<_>>()?;

    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (pos, &i) in kept.iter().enumerate() {
        by_subject.entry(trials[i].subject_id()).or_default().push(pos);
    }
    let mut outlier = vec![false; kept.len()];
    for (subject, positions) in &by_subject {
        let rts: Vec<f64> = positions.iter().map(|&q| epoched[q].rt()).collect();
        let n = rts.len() as f64;
        let mean = rts.iter().sum::<f64>() / n;
        let std = if rts.len() > 1 {
            (rts.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let threshold = mean + p.outlier_sd * std;
        log.subjects.get_mut(*subject).expect("subject counted").rt_threshold = Some(threshold);
        for &q in positions {
            if epoched[q].rt() > threshold {
                outlier[q] = true;
                log.excluded.push(ExcludedTrial {
                    index: kept[q],
                    subject: subject.to_string(),
                    rt: epoched[q].rt(),
                    reason: format!("rt above mean + {} sd ({threshold:.4} s)", p.outlier_sd),
                });
            }
        }
    }
    log.excluded.sort_by_key(|e| e.index);

    let coeffs = design_fir(&FilterSpec::bandpass(p.band_low_hz, p.band_high_hz, p.filter_order), p.target_fs)?;
    let survivors: Vec<(usize, &EegTrial)> = kept
        .iter()
        .zip(&epoched)
        .zip(&outlier)
        .filter(|(_, &o)| !o)
        .map(|((&i, t), _)| (i, t))
        .collect();
    let filtered: Vec<EegTrial> = survivors
        .par_iter()
        .map(|(i, t)| filtfilt(t, &coeffs).map_err(|e| in_trial(*i, e)))
        .collect::<Result<_>>()?;
    for t in &filtered {
        log.subjects.get_mut(t.subject_id()).expect("subject counted").n_used += 1;
    }
    log.n_used = filtered.len();
    log.n_excluded = log.excluded.len();
    debug_assert_eq!(log.n_input, log.n_used + log.n_excluded);
    Ok((filtered, log))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Reads the manifest, preprocesses, writes the cleaned dataset and log
/// under the output directory.
pub fn run_preprocess(cfg: &PipelineConfig) -> Result<(Vec<EegTrial>, PreprocessLog)> {
    let out = &cfg.data.output_dir;
    create_dir(out)?;
    let raw = read_dataset(&cfg.data.manifest)?;
    let (trials, log) = preprocess(&raw, cfg)?;
    write_json(&out.join(PREPROCESS_LOG_FILE), &log)?;
    if !trials.is_empty() {
        write_dataset(out.join(PREPROCESSED_DIR), &trials)?;
    }
    Ok((trials, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FailureMarker {
    category: String,
    message: String,
    config_hash: String,
}

/// Full pipeline. On failure a marker file naming the error category is left
/// next to whatever outputs were already written.
pub fn run(cfg: &PipelineConfig) -> Result<ExperimentReport> {
    let out = cfg.data.output_dir.clone();
    create_dir(&out)?;
    let marker = out.join(FAILURE_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let result = run_inner(cfg, &out);
    if let Err(e) = &result {
        let m = FailureMarker { category: e.category().into(), message: e.to_string(), config_hash: cfg.hash() };
        write_json(&marker, &m)?;
    }
    result
}

fn run_inner(cfg: &PipelineConfig, out: &Path) -> Result<ExperimentReport> {
    let raw = read_dataset(&cfg.data.manifest)?;
    let (trials, log) = preprocess(&raw, cfg)?;
    write_json(&out.join(PREPROCESS_LOG_FILE), &log)?;
    log::info!("preprocessing kept {} of {} trials", log.n_used, log.n_input);
    if trials.is_empty() {
        return Err(Error::data("no trials left after preprocessing"));
    }
    let data = PreparedDataset::from_trials(&trials, cfg.model.tpd_mode, cfg.welch())?;
    let report = run_nested_cv(&data, &cfg.cv_settings(), cfg.cv.pooling, &cfg.hash())?;
    write_atomic(out.join(REPORT_FILE), report.to_json().as_bytes())?;
    write_atomic(out.join(TABLE_FILE), report.to_table_csv().as_bytes())?;
    Ok(report)
}

pub fn report_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.data.output_dir.join(REPORT_FILE)
}

/// Relative change of the fused cell against one baseline, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub regressor: RegressorKind,
    pub baseline: FeatureKind,
    pub rmse_reduction_pct: f64,
    pub mape_reduction_pct: f64,
    pub cc_increase_pct: f64,
}

/// `(base - fused) / base` and `(fused - base) / base` as percentages.
pub fn percent_change(base: f64, fused: f64, lower_is_better: bool) -> f64 {
    let diff = if lower_is_better { base - fused } else { fused - base };
    100.0 * diff / base
}

/// Deltas of every valid fused cell against every valid single-feature cell
/// with the same regressor.
pub fn report_delta(report: &ExperimentReport) -> Result<Vec<Delta>> {
    let mut out = Vec::new();
    let mut fused_seen = false;
    for fused in report.cells.iter().filter(|c| c.feature == FeatureKind::Fused && c.valid) {
        fused_seen = true;
        for base in report
            .cells
            .iter()
            .filter(|c| c.valid && c.regressor == fused.regressor && c.feature != FeatureKind::Fused)
        {
            let (fr, fc, fm) = (fused.rmse.unwrap().mean, fused.cc.unwrap().mean, fused.mape.unwrap().mean);
            let (br, bc, bm) = (base.rmse.unwrap().mean, base.cc.unwrap().mean, base.mape.unwrap().mean);
            out.push(Delta {
                regressor: fused.regressor,
                baseline: base.feature,
                rmse_reduction_pct: percent_change(br, fr, true),
                mape_reduction_pct: percent_change(bm, fm, true),
                cc_increase_pct: percent_change(bc, fc, false),
            });
        }
    }
    if !fused_seen {
        return Err(Error::param("report has no valid fused (AE) cell"));
    }
    if out.is_empty() {
        return Err(Error::param("report has no valid baseline cell to compare against"));
    }
    Ok(out)
}

pub fn format_deltas(deltas: &[Delta]) -> String {
    let mut s = String::new();
    for d in deltas {
        s.push_str(&format!(
            "AE vs {:<4} ({:<5}): RMSE {:+.2}% reduction, MAPE {:+.2}% reduction, CC {:+.2}% change\n",
            d.baseline.label(),
            d.regressor.label(),
            d.rmse_reduction_pct,
            d.mape_reduction_pct,
            d.cc_increase_pct
        ));
    }
    s
}
