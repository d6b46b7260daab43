use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AnalyticTrial, TpdSequence};
use crate::error::{Error, Result};

/// Wraps an angle into (-pi, pi].
pub fn wrap(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let r = (x + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        PI
    } else {
        r.min(PI)
    }
}

/// `arg(sum e^{i theta})`, or 0 when the resultant vanishes.
pub fn circular_mean(thetas: impl IntoIterator<Item = f64>) -> f64 {
    let (s, c) = thetas
        .into_iter()
        .fold((0.0, 0.0), |(s, c), t| (s + t.sin(), c + t.cos()));
    if s.hypot(c) < 1e-12 {
        0.0
    } else {
        s.atan2(c)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TpdMode {
    /// Each channel against the cross-channel circular mean phase.
    #[default]
    VsMeanPhase,
    /// Each channel against its own previous sample.
    TemporalDiff,
}

/// Temporal phase difference sequence, entries in [0, pi].
pub fn tpd(phases: &AnalyticTrial, mode: TpdMode) -> TpdSequence {
    let theta = &phases.phase;
    let (d, k) = theta.shape();
    let mut delta = DMatrix::zeros(d, k);
    match mode {
        TpdMode::VsMeanPhase => {
            for t in 0..k {
                let mean = circular_mean(theta.column(t).iter().copied());
                for ch in 0..d {
                    delta[(ch, t)] = wrap(theta[(ch, t)] - mean).abs();
                }
            }
        }
        TpdMode::TemporalDiff => {
            for t in 1..k {
                for ch in 0..d {
                    delta[(ch, t)] = wrap(theta[(ch, t)] - theta[(ch, t - 1)]).abs();
                }
            }
        }
    }
    TpdSequence { delta }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpsiVariant {
    /// `|mean e^{i (theta1 - theta2)}|`, the phase-locking value.
    #[default]
    Classical,
    /// `|mean e^{i |wrap(theta1 - theta2)|}|`, absolute value inside the exponent.
    AbsoluteDifference,
}

/// Single-trial phase synchronization index in [0, 1].
pub fn spsi(theta1: &[f64], theta2: &[f64], variant: SpsiVariant) -> Result<f64> {
    if theta1.len() != theta2.len() {
        return Err(Error::param(format!(
            "phase vectors differ in length: {} vs {}",
            theta1.len(),
            theta2.len()
        )));
    }
    if theta1.is_empty() {
        return Err(Error::param("phase vectors are empty"));
    }
    let (s, c) = theta1.iter().zip(theta2).fold((0.0, 0.0), |(s, c), (a, b)| {
        let diff = match variant {
            SpsiVariant::Classical => a - b,
            SpsiVariant::AbsoluteDifference => wrap(a - b).abs(),
        };
        (s + diff.sin(), c + diff.cos())
    });
    let m = theta1.len() as f64;
    Ok((s / m).hypot(c / m).min(1.0))
}
