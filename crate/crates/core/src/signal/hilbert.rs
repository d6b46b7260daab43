use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{AnalyticTrial, EegTrial, MIN_SAMPLES};
use crate::error::{Error, Result};

/// Analytic signal of one real sequence via the FFT: negative frequencies
/// zeroed, positive doubled, DC and Nyquist kept.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    analytic_with(&mut planner, x)
}

fn analytic_with(planner: &mut FftPlanner<f64>, x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    let half = n / 2;
    for (i, c) in buf.iter_mut().enumerate() {
        let gain = if i == 0 || (n.is_multiple_of(2) && i == half) {
            1.0
        } else if i <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *c *= gain;
    }
    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Instantaneous phase `atan2(hilbert(w), w)` and envelope of every channel.
pub fn analytic(trial: &EegTrial) -> Result<AnalyticTrial> {
    analytic_matrix(trial.data())
}

pub(crate) fn analytic_matrix(data: &DMatrix<f64>) -> Result<AnalyticTrial> {
    let (d, k) = data.shape();
    if k < MIN_SAMPLES {
        return Err(Error::param(format!("analytic signal needs at least {MIN_SAMPLES} samples")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite sample in analytic signal input"));
    }
    let mut planner = FftPlanner::new();
    let mut phase = DMatrix::zeros(d, k);
    let mut envelope = DMatrix::zeros(d, k);
    for (ch, row) in data.row_iter().enumerate() {
        let x: Vec<f64> = row.iter().copied().collect();
        for (t, z) in analytic_with(&mut planner, &x).into_iter().enumerate() {
            // atan2 yields [-pi, pi]; -pi maps to pi so the range is (-pi, pi]
            let theta = z.im.atan2(z.re);
            phase[(ch, t)] = if theta == -std::f64::consts::PI { std::f64::consts::PI } else { theta };
            envelope[(ch, t)] = z.norm();
        }
    }
    Ok(AnalyticTrial { phase, envelope })
}
