//! Experiment report: per-cell fold metrics, pooled metrics, ANOVA and the
//! flat comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::anova::two_way_anova;
use crate::eval::metrics::{mape, pearson, rmse, Metrics};
use crate::features::FeatureKind;
use crate::regress::RegressorKind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// One cross-validation over all trials; ANOVA blocks are folds.
    #[default]
    Pooled,
    /// Cross-validation within each subject; ANOVA blocks are subjects.
    PerSubject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub pooling: Pooling,
    pub n_trials: usize,
    pub n_subjects: usize,
    pub outer_k: usize,
    pub inner_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub subject: Option<String>,
    pub fold: usize,
    pub n_test: usize,
    pub metrics: Option<Metrics>,
    /// Predictions were constant, so CC was recorded as 0.
    pub degenerate_cc: bool,
    pub error: Option<String>,
    pub hyperparams: BTreeMap<String, f64>,
    pub nonzero_weights: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub feature: FeatureKind,
    pub regressor: RegressorKind,
    pub valid: bool,
    pub rmse: Option<Summary>,
    pub cc: Option<Summary>,
    pub mape: Option<Summary>,
    /// Metrics over the concatenated held-out predictions.
    pub pooled: Option<Metrics>,
    pub degenerate_cc_folds: usize,
    pub folds: Vec<FoldRecord>,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("{}-{}", self.feature.label(), self.regressor.label())
    }

    pub fn summary(&self, metric: Metric) -> Option<Summary> {
        match metric {
            Metric::Rmse => self.rmse,
            Metric::Cc => self.cc,
            Metric::Mape => self.mape,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "RMSE")]
    Rmse,
    #[serde(rename = "CC")]
    Cc,
    #[serde(rename = "MAPE")]
    Mape,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Rmse, Metric::Cc, Metric::Mape];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Rmse => "RMSE",
            Metric::Cc => "CC",
            Metric::Mape => "MAPE",
        }
    }

    pub fn of(self, m: &Metrics) -> f64 {
        match self {
            Metric::Rmse => m.rmse,
            Metric::Cc => m.cc,
            Metric::Mape => m.mape,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaEntry {
    pub metric: Metric,
    /// Cells compared (treatment rows).
    pub cells: Vec<String>,
    pub n_blocks: usize,
    pub f_model: f64,
    pub p_model: f64,
    pub df_model: usize,
    pub df_error: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub cells: Vec<Cell>,
    pub anova: Vec<AnovaEntry>,
    pub skipped_subjects: Vec<String>,
}

/// Held-out predictions of one cell in one fold, with the matching truth.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPrediction {
    pub subject: Option<String>,
    pub fold: usize,
    pub y_true: Vec<f64>,
    pub outcome: std::result::Result<(Vec<f64>, BTreeMap<String, f64>, usize), String>,
}

/// Metrics of one fold. Constant predictions give `cc = 0` and the flag set;
/// constant truth is an error.
pub fn fold_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<(Metrics, bool)> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::param("prediction and truth lengths differ"));
    }
    let spread = |v: &[f64]| v.iter().any(|x| *x != v[0]);
    if !spread(y_true) {
        return Err(Error::data("correlation undefined: reaction times are constant in this fold"));
    }
    let mape = mape(y_true, y_pred).ok_or_else(|| Error::data("MAPE undefined: zero reaction time"))?;
    let (cc, degenerate) = match pearson(y_true, y_pred) {
        Some(cc) => (cc, false),
        None => (0.0, true),
    };
    Ok((Metrics { rmse: rmse(y_true, y_pred), cc, mape }, degenerate))
}

/// Summarizes one (feature, regressor) cell from its folds.
pub fn build_cell(feature: FeatureKind, regressor: RegressorKind, folds: &[FoldPrediction]) -> Cell {
    let mut records = Vec::with_capacity(folds.len());
    let mut all_true = Vec::new();
    let mut all_pred = Vec::new();
    let mut valid = !folds.is_empty();
    for f in folds {
        let mut rec = FoldRecord {
            subject: f.subject.clone(),
            fold: f.fold,
            n_test: f.y_true.len(),
            metrics: None,
            degenerate_cc: false,
            error: None,
            hyperparams: BTreeMap::new(),
            nonzero_weights: 0,
        };
        match &f.outcome {
            Ok((pred, hp, nnz)) => {
                rec.hyperparams = hp.clone();
                rec.nonzero_weights = *nnz;
                match fold_metrics(&f.y_true, pred) {
                    Ok((m, degenerate)) => {
                        rec.metrics = Some(m);
                        rec.degenerate_cc = degenerate;
                        all_true.extend_from_slice(&f.y_true);
                        all_pred.extend_from_slice(pred);
                    }
                    Err(e) => {
                        rec.error = Some(e.to_string());
                        valid = false;
                    }
                }
            }
            Err(msg) => {
                rec.error = Some(msg.clone());
                valid = false;
            }
        }
        records.push(rec);
    }
    let summary = |metric: Metric| {
        valid.then(|| {
            let v: Vec<f64> = records.iter().filter_map(|r| r.metrics.as_ref()).map(|m| metric.of(m)).collect();
            Summary::of(&v)
        })
    };
    let pooled = if valid { fold_metrics(&all_true, &all_pred).ok().map(|(m, _)| m) } else { None };
    Cell {
        feature,
        regressor,
        valid,
        rmse: summary(Metric::Rmse),
        cc: summary(Metric::Cc),
        mape: summary(Metric::Mape),
        pooled,
        degenerate_cc_folds: records.iter().filter(|r| r.degenerate_cc).count(),
        folds: records,
    }
}

/// Per-block metric values of a cell: folds in pooled mode, subject means otherwise.
fn block_values(cell: &Cell, metric: Metric, pooling: Pooling) -> BTreeMap<String, f64> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &cell.folds {
        if let Some(m) = &r.metrics {
            let key = match pooling {
                Pooling::Pooled => format!("fold{:03}", r.fold),
                Pooling::PerSubject => r.subject.clone().unwrap_or_default(),
            };
            groups.entry(key).or_default().push(metric.of(m));
        }
    }
    groups.into_iter().map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64)).collect()
}

fn anova_over(cells: &[&Cell], metric: Metric, pooling: Pooling) -> Option<AnovaEntry> {
    let values: Vec<_> = cells.iter().map(|c| block_values(c, metric, pooling)).collect();
    let blocks: Vec<&String> = values.first()?.keys().filter(|k| values.iter().all(|v| v.contains_key(*k))).collect();
    let table: Vec<Vec<f64>> = values.iter().map(|v| blocks.iter().map(|b| v[*b]).collect()).collect();
    let r = two_way_anova(&table).ok()?;
    Some(AnovaEntry {
        metric,
        cells: cells.iter().map(|c| c.label()).collect(),
        n_blocks: blocks.len(),
        f_model: r.f_model,
        p_model: r.p_model,
        df_model: r.df_model,
        df_error: r.df_error,
    })
}

/// One test across all valid cells per metric, then fused-versus-baseline
/// pairs within each regressor.
pub fn anova_entries(cells: &[Cell], pooling: Pooling) -> Vec<AnovaEntry> {
    let valid: Vec<&Cell> = cells.iter().filter(|c| c.valid).collect();
    let mut out = Vec::new();
    for metric in Metric::ALL {
        if valid.len() >= 2 {
            out.extend(anova_over(&valid, metric, pooling));
        }
        for fused in valid.iter().filter(|c| c.feature == FeatureKind::Fused) {
            for base in valid.iter().filter(|c| c.regressor == fused.regressor && c.feature != FeatureKind::Fused) {
                out.extend(anova_over(&[fused, base], metric, pooling));
            }
        }
    }
    out
}

impl ExperimentReport {
    pub fn cell(&self, feature: FeatureKind, regressor: RegressorKind) -> Option<&Cell> {
        self.cells.iter().find(|c| c.feature == feature && c.regressor == regressor)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::data(format!("malformed report: {e}")))
    }

    /// Rows are metrics (means, then standard deviations); columns are
    /// regressor/feature-set cells.
    pub fn to_table_csv(&self) -> String {
        let mut out = String::from("metric");
        for c in &self.cells {
            write!(out, ",{}/{}", c.regressor.label(), c.feature.label()).unwrap();
        }
        out.push('\n');
        for (suffix, pick) in [("", true), ("_std", false)] {
            for metric in Metric::ALL {
                out.push_str(metric.label());
                out.push_str(suffix);
                for c in &self.cells {
                    match c.summary(metric) {
                        Some(s) => write!(out, ",{}", if pick { s.mean } else { s.std }).unwrap(),
                        None => out.push_str(",NA"),
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    /// Human-readable table with one row per metric.
    pub fn to_table_text(&self) -> String {
        let mut out = format!("{:<6}", "");
        for c in &self.cells {
            write!(out, "{:>16}", format!("{}/{}", c.regressor.label(), c.feature.label())).unwrap();
        }
        out.push('\n');
        for metric in Metric::ALL {
            write!(out, "{:<6}", metric.label()).unwrap();
            for c in &self.cells {
                let cell = c.summary(metric).map_or("invalid".to_string(), |s| format!("{:.4}±{:.4}", s.mean, s.std));
                write!(out, "{cell:>16}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}
