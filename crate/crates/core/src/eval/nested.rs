//! Nested cross-validation over feature sets and regressors.
//!
//! Per-trial quantities that do not depend on labels (band powers, the
//! centered phase-difference and amplitude scatters) are computed once in
//! [`PreparedDataset`]. Everything fitted (fuzzy partition, filter banks,
//! standardizers, autoencoder, regressors) is refit inside each outer fold
//! from the training rows alone.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{train_autoencoder, AeConfig, AeModel};
use crate::csp::{scatter, solve_ovr_filters, weighted_covariances_from_scatter, BankVariant, FilterBank};
use crate::error::{Error, Result};
use crate::eval::cv::FoldPlan;
use crate::eval::report::{anova_entries, build_cell, ExperimentReport, FoldPrediction, Pooling, Provenance};
use crate::features::{fs1_bandpower, log_variance_from_scatter, FeatureKind, Standardizer};
use crate::fuzzy::FuzzyPartition;
use crate::regress::{select_hyperparams, Grids, LinearModel, RegressorKind};
use crate::signal::{analytic, tpd, EegTrial, TpdMode, WelchParams};
use crate::synth::mix_seed;

/// Label-independent per-trial quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTrial {
    pub fs1: Vec<f64>,
    /// `Dc Dc'` of the row-centered phase-difference sequence.
    pub tpd_scatter: DMatrix<f64>,
    /// `Xc Xc'` of the row-centered amplitude samples.
    pub amp_scatter: DMatrix<f64>,
    pub n_samples: usize,
    pub rt: f64,
    pub subject: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDataset {
    pub trials: Vec<PreparedTrial>,
    pub n_channels: usize,
}

impl PreparedDataset {
    pub fn from_trials(trials: &[EegTrial], mode: TpdMode, welch: WelchParams) -> Result<Self> {
        let n_channels = match trials.first() {
            Some(t) => t.n_channels(),
            None => return Err(Error::data("empty dataset")),
        };
        if let Some((i, t)) = trials.iter().enumerate().find(|(_, t)| t.n_channels() != n_channels) {
            return Err(Error::data(format!(
                "trial {i} has {} channels, expected {n_channels}",
                t.n_channels()
            )));
        }
        let prepared = trials
            .par_iter()
            .map(|t| {
                let delta = tpd(&analytic(t)?, mode).delta;
                Ok(PreparedTrial {
                    fs1: fs1_bandpower(t, welch)?.values,
                    tpd_scatter: scatter(&delta, true, false),
                    amp_scatter: scatter(t.data(), true, false),
                    n_samples: t.n_samples(),
                    rt: t.rt(),
                    subject: t.subject_id().to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { trials: prepared, n_channels })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn rts(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.rt).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self { trials: idx.iter().map(|&i| self.trials[i].clone()).collect(), n_channels: self.n_channels }
    }
}

/// Everything the harness needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub r_classes: usize,
    pub h_per_class: usize,
    pub trace_normalize: bool,
    pub outer_k: usize,
    pub inner_k: usize,
    pub seed: u64,
    /// Autoencoder widths after the input layer; the input width follows the data.
    pub ae_hidden: Vec<usize>,
    pub ae_epochs: usize,
    pub ae_learning_rate: f64,
    pub ae_batch_size: usize,
    pub grids: Grids,
    pub feature_sets: Vec<FeatureKind>,
    pub regressors: Vec<RegressorKind>,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            r_classes: 3,
            h_per_class: 21,
            trace_normalize: true,
            outer_k: 8,
            inner_k: 8,
            seed: 0,
            ae_hidden: vec![64, 16],
            ae_epochs: 110,
            ae_learning_rate: 0.14,
            ae_batch_size: 32,
            grids: Grids::default(),
            feature_sets: vec![FeatureKind::Fs1, FeatureKind::Fs2, FeatureKind::Fused],
            regressors: vec![RegressorKind::Lasso, RegressorKind::Svr, RegressorKind::Ridge],
        }
    }
}

impl CvSettings {
    fn needs_phase(&self) -> bool {
        self.feature_sets.iter().any(|f| matches!(f, FeatureKind::Fs2 | FeatureKind::Fused))
    }

    fn needs_fused(&self) -> bool {
        self.feature_sets.contains(&FeatureKind::Fused)
    }
}

/// Fitted state of one outer fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldArtifacts {
    pub partition: FuzzyPartition,
    pub phase_bank: Option<FilterBank>,
    pub amp_bank: Option<FilterBank>,
    pub standardizers: BTreeMap<FeatureKind, Standardizer>,
    pub autoencoder: Option<AeModel>,
    pub models: BTreeMap<(FeatureKind, RegressorKind), LinearModel>,
    pub inner_mse: BTreeMap<(FeatureKind, RegressorKind), f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test: Vec<usize>,
    pub artifacts: FoldArtifacts,
    pub predictions: BTreeMap<(FeatureKind, RegressorKind), Vec<f64>>,
}

fn fit_bank(
    scatters: Vec<&DMatrix<f64>>,
    rts: &[f64],
    partition: &FuzzyPartition,
    settings: &CvSettings,
    variant: BankVariant,
) -> Result<FilterBank> {
    let normalized: Vec<DMatrix<f64>> = scatters
        .into_iter()
        .map(|s| {
            let tr = s.trace();
            if settings.trace_normalize && tr > 0.0 {
                s / tr
            } else {
                s.clone()
            }
        })
        .collect();
    let covs = weighted_covariances_from_scatter(&normalized, rts, partition)?;
    solve_ovr_filters(&covs, settings.h_per_class, variant)
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let p = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j])
}

fn standardize_all(rows: &[Vec<f64>], train: &[usize]) -> Result<(Standardizer, Vec<Vec<f64>>)> {
    let train_rows: Vec<&[f64]> = train.iter().map(|&i| rows[i].as_slice()).collect();
    let st = Standardizer::fit(&train_rows)?;
    let out = rows.iter().map(|r| st.apply(r)).collect::<Result<_>>()?;
    Ok((st, out))
}

/// Fits every stage on `train` and predicts `test`. Only rows listed in
/// `train` influence any fitted object.
pub fn run_fold(
    data: &PreparedDataset,
    train: &[usize],
    test: &[usize],
    settings: &CvSettings,
    fold_seed: u64,
) -> Result<(FoldArtifacts, BTreeMap<(FeatureKind, RegressorKind), Vec<f64>>)> {
    let trials = &data.trials;
    let rt_train: Vec<f64> = train.iter().map(|&i| trials[i].rt).collect();
    let partition = FuzzyPartition::fit(&rt_train, settings.r_classes)?;

    // rows for every trial of `train` then `test`, so fitted transforms are
    // applied to both without refitting
    let rows: Vec<usize> = train.iter().chain(test).copied().collect();
    let train_pos: Vec<usize> = (0..train.len()).collect();
    let n_train = train.len();

    let mut standardizers = BTreeMap::new();
    let mut matrices: BTreeMap<FeatureKind, Vec<Vec<f64>>> = BTreeMap::new();

    let fs1_raw: Vec<Vec<f64>> = rows.iter().map(|&i| trials[i].fs1.clone()).collect();
    let (st1, fs1) = standardize_all(&fs1_raw, &train_pos)?;
    standardizers.insert(FeatureKind::Fs1, st1);

    let mut phase_bank = None;
    let mut fs2 = None;
    if settings.needs_phase() {
        let bank = fit_bank(
            train.iter().map(|&i| &trials[i].tpd_scatter).collect(),
            &rt_train,
            &partition,
            settings,
            BankVariant::Phase,
        )?;
        let raw: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| log_variance_from_scatter(&bank, &trials[i].tpd_scatter, trials[i].n_samples))
            .collect::<Result<_>>()?;
        let (st2, z) = standardize_all(&raw, &train_pos)?;
        standardizers.insert(FeatureKind::Fs2, st2);
        phase_bank = Some(bank);
        fs2 = Some(z);
    }

    let mut amp_bank = None;
    if settings.feature_sets.contains(&FeatureKind::AmpCsp) {
        let bank = fit_bank(
            train.iter().map(|&i| &trials[i].amp_scatter).collect(),
            &rt_train,
            &partition,
            settings,
            BankVariant::Amplitude,
        )?;
        let raw: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| log_variance_from_scatter(&bank, &trials[i].amp_scatter, trials[i].n_samples))
            .collect::<Result<_>>()?;
        let (st, z) = standardize_all(&raw, &train_pos)?;
        standardizers.insert(FeatureKind::AmpCsp, st);
        matrices.insert(FeatureKind::AmpCsp, z);
        amp_bank = Some(bank);
    }

    let mut autoencoder = None;
    if settings.needs_fused() {
        let fs2 = fs2.as_ref().expect("phase features computed for fusion");
        let joined: Vec<Vec<f64>> = fs1.iter().zip(fs2).map(|(a, b)| [a.as_slice(), b].concat()).collect();
        let mut layer_sizes = vec![joined[0].len()];
        layer_sizes.extend(&settings.ae_hidden);
        let config = AeConfig {
            layer_sizes,
            epochs: settings.ae_epochs,
            learning_rate: settings.ae_learning_rate,
            seed: mix_seed(fold_seed ^ 0xAE),
            batch_size: settings.ae_batch_size,
        };
        let model = train_autoencoder(&rows_to_matrix(&joined[..n_train]), &config)?;
        let latent = model.encode_matrix(&rows_to_matrix(&joined))?;
        let latent_rows: Vec<Vec<f64>> = latent.row_iter().map(|r| r.iter().copied().collect()).collect();
        let (st, z) = standardize_all(&latent_rows, &train_pos)?;
        standardizers.insert(FeatureKind::Fused, st);
        matrices.insert(FeatureKind::Fused, z);
        autoencoder = Some(model);
    }
    if let Some(z) = fs2 {
        matrices.insert(FeatureKind::Fs2, z);
    }
    matrices.insert(FeatureKind::Fs1, fs1);

    let mut models = BTreeMap::new();
    let mut inner_mse = BTreeMap::new();
    let mut predictions = BTreeMap::new();
    for &feature in &settings.feature_sets {
        let all = rows_to_matrix(&matrices[&feature]);
        let x_train = all.rows(0, n_train).into_owned();
        let x_test = all.rows(n_train, test.len()).into_owned();
        for &kind in &settings.regressors {
            let inner_seed = mix_seed(fold_seed ^ mix_seed(feature as u64 * 16 + kind as u64));
            let (params, mse) = select_hyperparams(kind, &settings.grids, &x_train, &rt_train, settings.inner_k, inner_seed)?;
            let model = crate::regress::fit(kind, &params, &settings.grids, &x_train, &rt_train)?;
            predictions.insert((feature, kind), model.predict(&x_test)?);
            models.insert((feature, kind), model);
            inner_mse.insert((feature, kind), mse);
        }
    }
    let artifacts = FoldArtifacts { partition, phase_bank, amp_bank, standardizers, autoencoder, models, inner_mse };
    Ok((artifacts, predictions))
}

/// Runs every outer fold of `plan`. Folds whose fitting fails with a data
/// error (for example degenerate labels) are reported as `Err` entries;
/// other errors abort the run.
pub fn run_outer_folds(
    data: &PreparedDataset,
    plan: &FoldPlan,
    settings: &CvSettings,
) -> Result<Vec<std::result::Result<FoldOutcome, (usize, String)>>> {
    plan.assert_partition();
    (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let (train, test) = plan.split(fold);
            match run_fold(data, &train, &test, settings, mix_seed(plan.seed ^ fold as u64)) {
                Ok((artifacts, predictions)) => Ok(Ok(FoldOutcome { fold, test, artifacts, predictions })),
                Err(Error::Data(msg)) => Ok(Err((fold, msg))),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn fold_predictions(
    outcomes: &[std::result::Result<FoldOutcome, (usize, String)>],
    data: &PreparedDataset,
    plan: &FoldPlan,
    subject: Option<&str>,
    feature: FeatureKind,
    regressor: RegressorKind,
) -> Vec<FoldPrediction> {
    outcomes
        .iter()
        .map(|o| {
            let (fold, test, outcome) = match o {
                Ok(out) => {
                    let model = &out.artifacts.models[&(feature, regressor)];
                    let pred = out.predictions[&(feature, regressor)].clone();
                    let nnz = model.weights.len() - model.sparsity();
                    (out.fold, out.test.clone(), Ok((pred, model.hyperparams.clone(), nnz)))
                }
                Err((fold, msg)) => (*fold, plan.split(*fold).1, Err(msg.clone())),
            };
            FoldPrediction {
                subject: subject.map(str::to_string),
                fold,
                y_true: test.iter().map(|&i| data.trials[i].rt).collect(),
                outcome,
            }
        })
        .collect()
}

/// Outer `settings.outer_k`-fold cross-validation of every configured
/// (feature set, regressor) cell, assembled into a report.
pub fn run_nested_cv(
    data: &PreparedDataset,
    settings: &CvSettings,
    pooling: Pooling,
    config_hash: &str,
) -> Result<ExperimentReport> {
    if settings.feature_sets.is_empty() || settings.regressors.is_empty() {
        return Err(Error::param("no feature sets or regressors selected"));
    }
    let min_trials = 2 * settings.outer_k;
    let subjects: BTreeMap<&str, Vec<usize>> = data.trials.iter().enumerate().fold(BTreeMap::new(), |mut m, (i, t)| {
        m.entry(t.subject.as_str()).or_insert_with(Vec::new).push(i);
        m
    });
    let units: Vec<(Option<&str>, PreparedDataset)> = match pooling {
        Pooling::Pooled => vec![(None, data.clone())],
        Pooling::PerSubject => subjects
            .iter()
            .filter(|(_, idx)| idx.len() >= min_trials)
            .map(|(s, idx)| (Some(*s), data.subset(idx)))
            .collect(),
    };
    let skipped_subjects: Vec<String> = match pooling {
        Pooling::Pooled => vec![],
        Pooling::PerSubject => subjects
            .iter()
            .filter(|(_, idx)| idx.len() < min_trials)
            .map(|(s, _)| s.to_string())
            .collect(),
    };
    for s in &skipped_subjects {
        log::warn!("subject {s} has fewer than {min_trials} trials and is skipped");
    }
    if units.is_empty() || units.iter().any(|(_, u)| u.len() < min_trials) {
        return Err(Error::data(format!(
            "nested cross-validation needs at least {min_trials} trials per evaluation unit, got {}",
            data.len()
        )));
    }

    let mut per_cell: BTreeMap<(usize, usize), Vec<FoldPrediction>> = BTreeMap::new();
    for (unit_index, (subject, unit)) in units.iter().enumerate() {
        let plan = FoldPlan::new(unit.len(), settings.outer_k, mix_seed(settings.seed ^ unit_index as u64))?;
        let outcomes = run_outer_folds(unit, &plan, settings)?;
        for (fi, &feature) in settings.feature_sets.iter().enumerate() {
            for (ri, &regressor) in settings.regressors.iter().enumerate() {
                per_cell
                    .entry((ri, fi))
                    .or_default()
                    .extend(fold_predictions(&outcomes, unit, &plan, *subject, feature, regressor));
            }
        }
    }
    let cells: Vec<_> = per_cell
        .into_iter()
        .map(|((ri, fi), folds)| build_cell(settings.feature_sets[fi], settings.regressors[ri], &folds))
        .collect();
    let anova = anova_entries(&cells, pooling);
    Ok(ExperimentReport {
        provenance: Provenance {
            config_hash: config_hash.to_string(),
            seed: settings.seed,
            pooling,
            n_trials: data.len(),
            n_subjects: subjects.len(),
            outer_k: settings.outer_k,
            inner_k: settings.inner_k,
        },
        cells,
        anova,
        skipped_subjects,
    })
}
