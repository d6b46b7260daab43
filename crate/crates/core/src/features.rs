//! Feature sets extracted per trial: theta/alpha band powers in dB (FS1) and
//! log-variances of fuzzy-CSP filtered phase-difference sequences (FS2).

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::csp::{BankVariant, FilterBank};
use crate::error::{Error, Result};
use crate::signal::{self, analytic, tpd, welch_psd, EegTrial, TpdMode, TpdSequence, WelchParams};

pub const THETA_BAND: (f64, f64) = (4.0, 8.0);
pub const ALPHA_BAND: (f64, f64) = (8.0, 13.0);
/// Added to band power before the dB conversion.
pub const POWER_FLOOR: f64 = 1e-20;
/// Lower bound on projected variance before the log.
pub const VARIANCE_FLOOR: f64 = 1e-20;
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    #[serde(rename = "FS1")]
    Fs1,
    #[serde(rename = "FS2")]
    Fs2,
    #[serde(rename = "AE")]
    Fused,
    /// Log-variance of amplitude fuzzy-CSP projections (auxiliary).
    #[serde(rename = "FCSP")]
    AmpCsp,
}

impl FeatureKind {
    pub fn label(self) -> &'static str {
        match self {
            FeatureKind::Fs1 => "FS1",
            FeatureKind::Fs2 => "FS2",
            FeatureKind::Fused => "AE",
            FeatureKind::AmpCsp => "FCSP",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: FeatureKind,
    pub trial_ref: String,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn to_db(power: f64) -> f64 {
    10.0 * (power + POWER_FLOOR).log10()
}

/// Trapezoidal mean of the PSD over bins whose center lies in `[lo, hi]`.
pub fn band_average(freqs: &[f64], power: &[f64], (lo, hi): (f64, f64)) -> Result<f64> {
    let idx: Vec<usize> = (0..freqs.len()).filter(|&i| freqs[i] >= lo && freqs[i] <= hi).collect();
    match idx.as_slice() {
        [] => Err(Error::param(format!("no spectral bin falls in [{lo}, {hi}] Hz"))),
        [i] => Ok(power[*i]),
        _ => {
            let area: f64 = idx
                .windows(2)
                .map(|w| 0.5 * (power[w[0]] + power[w[1]]) * (freqs[w[1]] - freqs[w[0]]))
                .sum();
            Ok(area / (freqs[idx[idx.len() - 1]] - freqs[idx[0]]))
        }
    }
}

/// Theta powers for every channel followed by alpha powers for every channel, in dB.
pub fn fs1_bandpower(trial: &EegTrial, welch: WelchParams) -> Result<FeatureVector> {
    let d = trial.n_channels();
    let mut theta = Vec::with_capacity(d);
    let mut alpha = Vec::with_capacity(d);
    for ch in 0..d {
        let psd = welch_psd(&trial.channel(ch), trial.fs(), welch)?;
        theta.push(to_db(band_average(&psd.freqs, &psd.power, THETA_BAND)?));
        alpha.push(to_db(band_average(&psd.freqs, &psd.power, ALPHA_BAND)?));
    }
    theta.extend(alpha);
    Ok(FeatureVector { values: theta, kind: FeatureKind::Fs1, trial_ref: String::new() })
}

/// Log-variance of each row after projecting the row-centered sequence.
pub fn log_variance_features(bank: &FilterBank, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut centered = x.clone();
    signal::center_rows(&mut centered);
    let projected = bank.project(&centered)?;
    let k = projected.ncols() as f64;
    Ok(projected
        .row_iter()
        .map(|row| (row.norm_squared() / k).max(VARIANCE_FLOOR).ln())
        .collect())
}

/// Same values as [`log_variance_features`] computed from the centered scatter
/// `Xc Xc'` of a `k`-sample trial.
pub fn log_variance_from_scatter(bank: &FilterBank, centered_scatter: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
    Ok(bank
        .projected_power(centered_scatter)?
        .into_iter()
        .map(|p| (p / k as f64).max(VARIANCE_FLOOR).ln())
        .collect())
}

/// PCS features of an already computed phase-difference sequence.
pub fn pcs_from_tpd(seq: &TpdSequence, phase_bank: &FilterBank) -> Result<FeatureVector> {
    if phase_bank.variant() != BankVariant::Phase {
        return Err(Error::param("PCS features need a phase filter bank"));
    }
    Ok(FeatureVector {
        values: log_variance_features(phase_bank, &seq.delta)?,
        kind: FeatureKind::Fs2,
        trial_ref: String::new(),
    })
}

pub fn fs2_pcs(trial: &EegTrial, phase_bank: &FilterBank, mode: TpdMode) -> Result<FeatureVector> {
    if trial.n_channels() != phase_bank.n_channels() {
        return Err(Error::param(format!(
            "trial has {} channels, bank expects {}",
            trial.n_channels(),
            phase_bank.n_channels()
        )));
    }
    pcs_from_tpd(&tpd(&analytic(trial)?, mode), phase_bank)
}

/// Log-variance of amplitude fuzzy-CSP projections.
pub fn amplitude_csp_features(trial: &EegTrial, amp_bank: &FilterBank) -> Result<FeatureVector> {
    if amp_bank.variant() != BankVariant::Amplitude {
        return Err(Error::param("expected an amplitude filter bank"));
    }
    Ok(FeatureVector {
        values: log_variance_features(amp_bank, trial.data())?,
        kind: FeatureKind::AmpCsp,
        trial_ref: String::new(),
    })
}

/// Per-coordinate z-scoring fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit<R: AsRef<[f64]>>(train: &[R]) -> Result<Self> {
        let p = match train.first() {
            Some(r) => r.as_ref().len(),
            None => return Err(Error::param("cannot fit a standardizer on zero rows")),
        };
        if train.iter().any(|r| r.as_ref().len() != p) {
            return Err(Error::param("training rows differ in length"));
        }
        let n = train.len() as f64;
        let mut means = vec![0.0; p];
        for r in train {
            for (m, v) in means.iter_mut().zip(r.as_ref()) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stds = vec![0.0; p];
        for r in train {
            for ((s, v), m) in stds.iter_mut().zip(r.as_ref()).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        stds.iter_mut().for_each(|s| *s = (*s / n).sqrt().max(STD_FLOOR));
        Ok(Self { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::param(format!(
                "standardizer fitted on {} features, got {}",
                self.dim(),
                v.len()
            )));
        }
        Ok(v.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((x, m), s)| if *s <= STD_FLOOR { 0.0 } else { (x - m) / s })
            .collect())
    }

    pub fn apply_vector(&self, v: &FeatureVector) -> Result<FeatureVector> {
        Ok(FeatureVector { values: self.apply(&v.values)?, ..v.clone() })
    }
}

pub fn fs1_names(channels: usize) -> Vec<String> {
    let theta = (0..channels).map(|c| format!("fs1_theta_ch{c:02}"));
    let alpha = (0..channels).map(|c| format!("fs1_alpha_ch{c:02}"));
    theta.chain(alpha).collect()
}

pub fn fs2_names(r_classes: usize, h_per_class: usize) -> Vec<String> {
    (0..r_classes)
        .flat_map(|r| (0..h_per_class).map(move |f| format!("fs2_pcs_c{r}_f{f:02}")))
        .collect()
}

pub fn fused_names(latent: usize) -> Vec<String> {
    (0..latent).map(|i| format!("ae_z{i:02}")).collect()
}

/// Feature matrix for export: one row per trial plus the reaction time.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub rts: Vec<f64>,
}

impl FeatureTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header = self.names.clone();
        header.push("rt".into());
        writeln!(out, "{}", header.join(",")).unwrap();
        for (row, rt) in self.rows.iter().zip(&self.rts) {
            let cells: Vec<String> = row.iter().chain(std::iter::once(rt)).map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }
}
