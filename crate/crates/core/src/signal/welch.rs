use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchParams {
    pub seg_len: usize,
    /// Fraction of `seg_len` shared by consecutive segments, in [0, 1).
    pub overlap: f64,
}

impl Default for WelchParams {
    fn default() -> Self {
        Self { seg_len: 256, overlap: 0.5 }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

impl Psd {
    pub fn resolution(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    /// Rectangle-rule integral over all bins.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution()
    }

    pub fn peak_frequency(&self) -> f64 {
        let idx = self
            .power
            .iter()
            .enumerate()
            .fold(0, |best, (i, &p)| if p > self.power[best] { i } else { best });
        self.freqs[idx]
    }
}

/// Welch estimate with a periodic Hann window and per-segment mean removal.
pub fn welch_psd(x: &[f64], fs: f64, params: WelchParams) -> Result<Psd> {
    let WelchParams { seg_len, overlap } = params;
    if seg_len == 0 || seg_len > x.len() {
        return Err(Error::param(format!(
            "segment length {seg_len} must be in [1, {}]",
            x.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::param(format!("overlap {overlap} must lie in [0, 1)")));
    }
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::param(format!("sampling rate must be positive, got {fs}")));
    }
    let step = ((seg_len as f64 * (1.0 - overlap)).round() as usize).max(1);
    let n_segments = (x.len() - seg_len) / step + 1;

    let window: Vec<f64> = (0..seg_len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / seg_len as f64).cos())
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let n_bins = seg_len / 2 + 1;

    let fft = FftPlanner::new().plan_fft_forward(seg_len);
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex64::default(); seg_len];
    for s in 0..n_segments {
        let seg = &x[s * step..s * step + seg_len];
        let mean = seg.iter().sum::<f64>() / seg_len as f64;
        for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }

    let scale = 1.0 / (fs * window_power * n_segments as f64);
    let power = acc
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let one_sided = if i == 0 || (seg_len % 2 == 0 && i == seg_len / 2) { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect();
    let freqs = (0..n_bins).map(|i| i as f64 * fs / seg_len as f64).collect();
    Ok(Psd { freqs, power })
}
