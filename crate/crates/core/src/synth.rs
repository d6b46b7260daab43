//! Synthetic EEG with planted reaction-time effects.
//!
//! Every channel carries pink-ish background noise plus a 10 Hz rhythm. On a
//! fixed subset of channels the rhythm's amplitude moves linearly with the
//! trial's reaction time, and on all channels a slowly drifting phase jitter
//! shrinks as `phase_coupling * rt` grows, so slow trials are more
//! phase-synchronous across channels.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::EegTrial;

pub const ALPHA_HZ: f64 = 10.0;
pub const RT_RANGE: (f64, f64) = (0.4, 2.5);
/// Median of the reaction-time distribution, in seconds.
pub const RT_MEDIAN: f64 = 1.0;
pub const RT_LOG_SIGMA: f64 = 0.35;
pub const ALPHA_BASELINE: f64 = 4.0;
/// Phase jitter standard deviation (radians) when `phase_coupling * rt = 0`.
pub const MAX_PHASE_JITTER: f64 = 1.5;
const NOISE_AR: f64 = 0.9;
const JITTER_AR: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_trials: usize,
    pub d_channels: usize,
    pub fs: f64,
    pub duration_s: f64,
    /// Change in alpha amplitude per second of reaction time.
    pub alpha_coupling: f64,
    pub phase_coupling: f64,
    pub noise_std: f64,
    /// Per-trial standard deviation of the alpha amplitude around its planted value.
    pub amplitude_jitter: f64,
    /// Channels `0..coupled_channels` carry the amplitude effect.
    pub coupled_channels: usize,
    pub n_subjects: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_trials: 240,
            d_channels: 30,
            fs: 250.0,
            duration_s: 5.0,
            alpha_coupling: 2.0,
            phase_coupling: 0.3,
            noise_std: 1.0,
            amplitude_jitter: 0.6,
            coupled_channels: 20,
            n_subjects: 1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn n_samples(&self) -> usize {
        (self.fs * self.duration_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if self.n_trials == 0 || self.d_channels < 2 || self.n_subjects == 0 {
            return Err(Error::param("need at least one trial, two channels and one subject"));
        }
        if !positive(self.fs) || !positive(self.duration_s) || !positive(self.noise_std) {
            return Err(Error::param("fs, duration_s and noise_std must be positive"));
        }
        if !(self.alpha_coupling.is_finite() && nonneg(self.phase_coupling) && nonneg(self.amplitude_jitter)) {
            return Err(Error::param("couplings must be finite, phase_coupling and amplitude_jitter nonnegative"));
        }
        if self.coupled_channels > self.d_channels {
            return Err(Error::param("more coupled channels than channels"));
        }
        if self.fs <= 2.0 * ALPHA_HZ {
            return Err(Error::param(format!("fs {} cannot represent a {ALPHA_HZ} Hz rhythm", self.fs)));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent per-trial streams.
pub fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard deviation of the cross-channel phase jitter for a trial.
pub fn phase_jitter_std(phase_coupling: f64, rt: f64) -> f64 {
    MAX_PHASE_JITTER / (1.0 + phase_coupling * rt)
}

fn ar1(rng: &mut ChaCha8Rng, k: usize, coef: f64, std: f64) -> Vec<f64> {
    let innov = std * (1.0 - coef * coef).sqrt();
    let mut x = Vec::with_capacity(k);
    let mut prev: f64 = std * rng.sample::<f64, _>(StandardNormal);
    for _ in 0..k {
        x.push(prev);
        prev = coef * prev + innov * rng.sample::<f64, _>(StandardNormal);
    }
    x
}

/// Two cascaded AR(1) stages with the same coefficient, scaled to standard
/// deviation `std`. Smoother than a single stage, so the phase drift it drives
/// keeps the rhythm's power near its nominal frequency.
fn smooth_ar(rng: &mut ChaCha8Rng, k: usize, coef: f64, std: f64) -> Vec<f64> {
    let stage1 = ar1(rng, k, coef, 1.0);
    let mut out = Vec::with_capacity(k);
    // stationary variance of the second stage driven by unit-variance AR(1) input
    let gain = ((1.0 + coef * coef) / (1.0 - coef * coef)).sqrt();
    let mut prev = gain * rng.sample::<f64, _>(StandardNormal);
    for x in stage1 {
        out.push(prev * std / gain);
        prev = coef * prev + (1.0 - coef * coef).sqrt() * x;
    }
    out
}

fn trial(cfg: &SynthConfig, index: usize) -> Result<EegTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ mix_seed(index as u64));
    let lognormal = LogNormal::new(RT_MEDIAN.ln(), RT_LOG_SIGMA).expect("valid log-normal");
    let rt = lognormal.sample(&mut rng).clamp(RT_RANGE.0, RT_RANGE.1);
    let (d, k) = (cfg.d_channels, cfg.n_samples());
    let amplitude = (ALPHA_BASELINE
        + cfg.alpha_coupling * (rt - RT_MEDIAN)
        + cfg.amplitude_jitter * rng.sample::<f64, _>(StandardNormal))
    .max(0.0);
    let sigma = phase_jitter_std(cfg.phase_coupling, rt);
    let phase0 = rng.random_range(-PI..PI);
    let mut data = DMatrix::zeros(d, k);
    for ch in 0..d {
        let noise = ar1(&mut rng, k, NOISE_AR, cfg.noise_std);
        let jitter = smooth_ar(&mut rng, k, JITTER_AR, sigma);
        let amp = if ch < cfg.coupled_channels { amplitude } else { ALPHA_BASELINE };
        for t in 0..k {
            let phase = phase0 + 2.0 * PI * ALPHA_HZ * t as f64 / cfg.fs + jitter[t];
            data[(ch, t)] = noise[t] + amp * phase.cos();
        }
    }
    EegTrial::new(data, cfg.fs, rt, format!("s{:02}", index % cfg.n_subjects))
}

/// Generates `cfg.n_trials` trials; a pure function of `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<EegTrial>> {
    cfg.validate()?;
    (0..cfg.n_trials).into_par_iter().map(|i| trial(cfg, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{analytic, spsi, welch_psd, SpsiVariant, WelchParams};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig { n_trials: 100, d_channels: 4, coupled_channels: 2, seed, ..Default::default() }
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
            let mut r = vec![0.0; v.len()];
            for (pos, &i) in idx.iter().enumerate() {
                r[i] = pos as f64;
            }
            r
        };
        crate::eval::pearson(&rank(a), &rank(b)).unwrap()
    }

    #[test]
    fn default_shape_and_validity() {
        let cfg = SynthConfig { n_trials: 3, ..Default::default() };
        let trials = generate(&cfg).unwrap();
        assert_eq!(trials.len(), 3);
        for t in &trials {
            assert_eq!((t.n_channels(), t.n_samples()), (30, 1250));
            assert!((RT_RANGE.0..=RT_RANGE.1).contains(&t.rt()));
        }
    }

    #[test]
    fn same_seed_same_trials() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&small(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].data(), generate(&small(6)).unwrap()[0].data());
    }

    #[test]
    fn subjects_round_robin() {
        let cfg = SynthConfig { n_subjects: 3, ..small(1) };
        let ids: Vec<String> = generate(&cfg).unwrap().iter().take(4).map(|t| t.subject_id().to_string()).collect();
        assert_eq!(ids, ["s00", "s01", "s02", "s00"]);
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            SynthConfig { n_trials: 0, ..Default::default() },
            SynthConfig { fs: 15.0, ..Default::default() },
            SynthConfig { coupled_channels: 31, ..Default::default() },
            SynthConfig { noise_std: 0.0, ..Default::default() },
        ] {
            assert!(matches!(generate(&cfg), Err(Error::Param(_))));
        }
    }

    #[test]
    fn synchrony_tracks_phase_coupling_times_rt() {
        let cfg = SynthConfig { phase_coupling: 2.0, alpha_coupling: 0.0, amplitude_jitter: 0.0, ..small(2) };
        let trials = generate(&cfg).unwrap();
        let mut drive = Vec::new();
        let mut sync = Vec::new();
        for t in &trials {
            let a = analytic(t).unwrap();
            let p0: Vec<f64> = a.phase_row(0);
            let p1: Vec<f64> = a.phase_row(1);
            drive.push(2.0 * t.rt());
            sync.push(spsi(&p0, &p1, SpsiVariant::Classical).unwrap());
        }
        let rho = spearman(&drive, &sync);
        assert!(rho > 0.5, "rank correlation {rho}");
    }

    #[test]
    fn alpha_power_follows_coupling_sign() {
        for (coupling, sign) in [(1.0, 1.0), (-1.0, -1.0)] {
            let cfg = SynthConfig { alpha_coupling: coupling, phase_coupling: 0.0, amplitude_jitter: 0.0, ..small(3) };
            let trials = generate(&cfg).unwrap();
            let power: Vec<f64> = trials
                .iter()
                .map(|t| {
                    let psd = welch_psd(&t.channel(0), t.fs(), WelchParams::default()).unwrap();
                    crate::features::band_average(&psd.freqs, &psd.power, crate::features::ALPHA_BAND).unwrap()
                })
                .collect();
            let rts: Vec<f64> = trials.iter().map(|t| t.rt()).collect();
            let cc = crate::eval::pearson(&rts, &power).unwrap();
            assert!(sign * cc > 0.5, "coupling {coupling}: cc {cc}");
        }
    }
}
