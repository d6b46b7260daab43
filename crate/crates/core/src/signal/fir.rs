use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::EegTrial;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Bandpass,
    /// Cutoff is `high_hz`; `low_hz` is ignored.
    Lowpass,
    /// Band-stop over `[low_hz, high_hz]`.
    Notch,
}

/// Windowed-sinc FIR design request. `order` is the number of taps minus one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
    pub kind: FilterKind,
}

impl FilterSpec {
    pub fn bandpass(low_hz: f64, high_hz: f64, order: usize) -> Self {
        Self { low_hz, high_hz, order, kind: FilterKind::Bandpass }
    }

    pub fn lowpass(cutoff_hz: f64, order: usize) -> Self {
        Self { low_hz: 0.0, high_hz: cutoff_hz, order, kind: FilterKind::Lowpass }
    }

    pub fn notch(low_hz: f64, high_hz: f64, order: usize) -> Self {
        Self { low_hz, high_hz, order, kind: FilterKind::Notch }
    }

    fn validate(&self, fs: f64) -> Result<()> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::param(format!("sampling rate must be positive, got {fs}")));
        }
        if self.order == 0 || !self.order.is_multiple_of(2) {
            return Err(Error::param(format!("filter order must be even and positive, got {}", self.order)));
        }
        let nyquist = fs / 2.0;
        if !(self.high_hz.is_finite() && self.high_hz > 0.0 && self.high_hz < nyquist) {
            return Err(Error::param(format!(
                "cutoff {} Hz must lie in (0, {nyquist}) Hz",
                self.high_hz
            )));
        }
        if self.kind != FilterKind::Lowpass && !(self.low_hz > 0.0 && self.low_hz < self.high_hz) {
            return Err(Error::param(format!(
                "band edges must satisfy 0 < low < high, got [{}, {}]",
                self.low_hz, self.high_hz
            )));
        }
        Ok(())
    }
}

fn hamming(n: usize, order: usize) -> f64 {
    0.54 - 0.46 * (2.0 * PI * n as f64 / order as f64).cos()
}

/// Hamming-windowed sinc lowpass normalized to unit DC gain.
fn windowed_sinc(cutoff_hz: f64, fs: f64, order: usize) -> Vec<f64> {
    let fc = cutoff_hz / fs;
    let mid = order as f64 / 2.0;
    let mut h: Vec<f64> = (0..=order)
        .map(|n| {
            let x = n as f64 - mid;
            let sinc = if x == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * x).sin() / (PI * x) };
            sinc * hamming(n, order)
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|c| *c /= sum);
    // symmetrize exactly; the window and sinc are symmetric up to rounding
    for i in 0..h.len() / 2 {
        let j = order - i;
        let avg = 0.5 * (h[i] + h[j]);
        h[i] = avg;
        h[j] = avg;
    }
    h
}

/// Magnitude of the filter's frequency response at `freq_hz`.
pub fn frequency_response(coeffs: &[f64], freq_hz: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * freq_hz / fs;
    let (re, im) = coeffs.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, c)| {
        let phi = w * n as f64;
        (re + c * phi.cos(), im - c * phi.sin())
    });
    re.hypot(im)
}

/// Designs a linear-phase FIR filter with `order + 1` symmetric taps.
pub fn design_fir(spec: &FilterSpec, fs: f64) -> Result<Vec<f64>> {
    spec.validate(fs)?;
    let coeffs = match spec.kind {
        FilterKind::Lowpass => windowed_sinc(spec.high_hz, fs, spec.order),
        FilterKind::Bandpass | FilterKind::Notch => {
            let hi = windowed_sinc(spec.high_hz, fs, spec.order);
            let lo = windowed_sinc(spec.low_hz, fs, spec.order);
            let mut band: Vec<f64> = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();
            let center = 0.5 * (spec.low_hz + spec.high_hz);
            let gain = frequency_response(&band, center, fs);
            if !(0.9..=1.1).contains(&gain) {
                return Err(Error::param(format!(
                    "band [{}, {}] Hz too narrow for order {} (center gain {gain:.3})",
                    spec.low_hz, spec.high_hz, spec.order
                )));
            }
            if spec.kind == FilterKind::Notch {
                band.iter_mut().for_each(|c| *c = -*c);
                band[spec.order / 2] += 1.0;
            }
            band
        }
    };
    Ok(coeffs)
}

fn fft_convolve(planner: &mut FftPlanner<f64>, a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fa.resize(n, Complex64::default());
    let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fb.resize(n, Complex64::default());
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Forward-backward filtering of one channel with odd-reflection padding of
/// `3 * taps` samples on each side.
fn filtfilt_channel(planner: &mut FftPlanner<f64>, x: &[f64], coeffs: &[f64]) -> Vec<f64> {
    let k = x.len();
    let taps = coeffs.len();
    let pad = 3 * taps;
    let mut ext = Vec::with_capacity(k + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[k - 1] - x[k - 1 - i]));

    let mut forward = fft_convolve(planner, &ext, coeffs);
    forward.reverse();
    let mut both = fft_convolve(planner, &forward, coeffs);
    both.reverse();
    let start = taps - 1 + pad;
    both[start..start + k].to_vec()
}

pub(crate) fn filtfilt_matrix(data: &DMatrix<f64>, coeffs: &[f64]) -> Result<DMatrix<f64>> {
    let k = data.ncols();
    if coeffs.is_empty() {
        return Err(Error::param("empty coefficient vector"));
    }
    if k <= 3 * coeffs.len() {
        return Err(Error::param(format!(
            "trial too short for zero-phase filtering: {k} samples, need more than {}",
            3 * coeffs.len()
        )));
    }
    let mut planner = FftPlanner::new();
    let mut out = DMatrix::zeros(data.nrows(), k);
    for (d, row) in data.row_iter().enumerate() {
        let x: Vec<f64> = row.iter().copied().collect();
        let y = filtfilt_channel(&mut planner, &x, coeffs);
        for (j, v) in y.into_iter().enumerate() {
            out[(d, j)] = v;
        }
    }
    Ok(out)
}

/// Zero-phase filtering of every channel, followed by per-channel mean removal.
pub fn filtfilt(trial: &EegTrial, coeffs: &[f64]) -> Result<EegTrial> {
    let mut out = filtfilt_matrix(trial.data(), coeffs)?;
    super::center_rows(&mut out);
    trial.with_data(out, trial.fs())
}

/// Anti-alias lowpass at 80% of the new Nyquist rate, then keeps every
/// `factor`-th sample.
pub fn decimate(trial: &EegTrial, factor: usize) -> Result<EegTrial> {
    if factor == 0 {
        return Err(Error::param("decimation factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(trial.clone());
    }
    let fs = trial.fs();
    if fs.fract() != 0.0 || !(fs as u64).is_multiple_of(factor as u64) {
        return Err(Error::param(format!(
            "sampling rate {fs} Hz is not divisible by factor {factor}"
        )));
    }
    let new_fs = fs / factor as f64;
    let k = trial.n_samples();
    // transition half-width of a Hamming window is about 1.65 fs / order
    let wanted = 20 * factor;
    let max_order = (k / 3).saturating_sub(2);
    let order = wanted.min(max_order) & !1;
    if order < 2 {
        return Err(Error::param(format!("trial of {k} samples too short to decimate")));
    }
    let coeffs = design_fir(&FilterSpec::lowpass(0.8 * new_fs / 2.0, order), fs)?;
    let filtered = filtfilt_matrix(trial.data(), &coeffs)?;
    let new_k = k.div_ceil(factor);
    let out = DMatrix::from_fn(trial.n_channels(), new_k, |d, j| filtered[(d, j * factor)]);
    trial.with_data(out, new_fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, k: usize) -> Vec<f64> {
        (0..k).map(|n| (2.0 * PI * freq * n as f64 / fs).sin()).collect()
    }

    fn trial_of(channels: Vec<Vec<f64>>, fs: f64) -> EegTrial {
        EegTrial::from_channels(&channels, fs, 1.0, "t").unwrap()
    }

    #[test]
    fn lowpass_half_nyquist_has_unit_dc_gain() {
        for order in [10, 64, 250] {
            let h = design_fir(&FilterSpec::lowpass(62.5, order), 250.0).unwrap();
            assert_eq!(h.len(), order + 1);
            assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bandpass_coefficients_are_symmetric_with_zero_dc() {
        let h = design_fir(&FilterSpec::bandpass(1.0, 20.0, 250), 250.0).unwrap();
        for i in 0..h.len() {
            assert_eq!(h[i], h[250 - i]);
        }
        assert!(h.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn bandpass_response_via_dft() {
        let h = design_fir(&FilterSpec::bandpass(1.0, 20.0, 250), 250.0).unwrap();
        // independent route: zero-padded DFT bin at exactly 10 Hz and 40 Hz
        let n = 2500;
        let dft = |f: f64| {
            let bin = (f * n as f64 / 250.0).round() as usize;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, c) in h.iter().enumerate() {
                let a = -2.0 * PI * (bin * i) as f64 / n as f64;
                re += c * a.cos();
                im += c * a.sin();
            }
            re.hypot(im)
        };
        assert!(dft(10.0) >= 0.99, "{}", dft(10.0));
        assert!(dft(40.0) <= 0.01, "{}", dft(40.0));
    }

    #[test]
    fn notch_rejects_band_and_passes_dc() {
        let h = design_fir(&FilterSpec::notch(45.0, 55.0, 250), 250.0).unwrap();
        assert!(frequency_response(&h, 50.0, 250.0) < 0.01);
        assert!((frequency_response(&h, 0.0, 250.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn design_rejects_bad_cutoffs() {
        assert!(matches!(design_fir(&FilterSpec::lowpass(125.0, 10), 250.0), Err(Error::Param(_))));
        assert!(matches!(design_fir(&FilterSpec::bandpass(20.0, 10.0, 10), 250.0), Err(Error::Param(_))));
        assert!(matches!(design_fir(&FilterSpec::bandpass(1.0, 20.0, 11), 250.0), Err(Error::Param(_))));
    }

    #[test]
    fn filtfilt_passes_10hz_and_rejects_50hz() {
        let h = design_fir(&FilterSpec::bandpass(1.0, 20.0, 250), 250.0).unwrap();
        let k = 1250;
        let x10 = sine(10.0, 250.0, k);
        let x50 = sine(50.0, 250.0, k);
        let out = filtfilt(&trial_of(vec![x10.clone(), x50.clone()], 250.0), &h).unwrap();

        let trim = k / 20;
        let a = &x10[trim..k - trim];
        let b: Vec<f64> = out.channel(0)[trim..k - trim].to_vec();
        let dot: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
        let na: f64 = a.iter().map(|p| p * p).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|p| p * p).sum::<f64>().sqrt();
        assert!(dot / (na * nb) >= 0.999);

        // reflection padding leaves a transient within one filter length of each edge
        let taps = h.len();
        let interior = &out.channel(1)[taps..k - taps];
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        let spread = (interior.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / interior.len() as f64).sqrt();
        let rms = (x50.iter().map(|p| p * p).sum::<f64>() / k as f64).sqrt();
        assert!(spread <= 0.01 * rms, "residual ratio {}", spread / rms);
    }

    #[test]
    fn filtfilt_zero_in_zero_out() {
        let h = design_fir(&FilterSpec::bandpass(1.0, 20.0, 250), 250.0).unwrap();
        let out = filtfilt(&trial_of(vec![vec![0.0; 1000]; 2], 250.0), &h).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn filtfilt_rejects_short_trial() {
        let h = design_fir(&FilterSpec::bandpass(1.0, 20.0, 250), 250.0).unwrap();
        let err = filtfilt(&trial_of(vec![vec![1.0; 700]; 2], 250.0), &h);
        assert!(matches!(err, Err(Error::Param(_))));
    }

    #[test]
    fn decimate_identity_and_halving() {
        let t = trial_of(vec![sine(5.0, 500.0, 2500), sine(7.0, 500.0, 2500)], 500.0);
        assert_eq!(decimate(&t, 1).unwrap(), t);
        let d = decimate(&t, 2).unwrap();
        assert_eq!(d.fs(), 250.0);
        assert_eq!(d.n_samples(), 1250);
        assert!(matches!(decimate(&t, 3), Err(Error::Param(_))));
        assert!(matches!(decimate(&t, 0), Err(Error::Param(_))));
    }
}
