//! Multichannel EEG epochs and the DSP primitives that operate on them:
//! FIR design and zero-phase filtering, integer decimation, analytic signal,
//! phase synchrony measures and Welch spectral estimation.

pub mod fir;
pub mod hilbert;
pub mod io;
pub mod phase;
pub mod welch;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use fir::{decimate, design_fir, filtfilt, FilterKind, FilterSpec};
pub use hilbert::analytic;
pub use phase::{circular_mean, spsi, tpd, wrap, SpsiVariant, TpdMode};
pub use welch::{welch_psd, Psd, WelchParams};

/// Minimum number of samples per channel accepted by [`EegTrial::new`].
pub const MIN_SAMPLES: usize = 16;

/// One multichannel epoch: `channels × samples` in microvolts with its
/// sampling rate and reaction-time label.
#[derive(Debug, Clone, PartialEq)]
pub struct EegTrial {
    data: DMatrix<f64>,
    fs: f64,
    rt: f64,
    subject_id: String,
}

impl EegTrial {
    pub fn new(data: DMatrix<f64>, fs: f64, rt: f64, subject_id: impl Into<String>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::data(format!("trial needs at least 2 channels, got {}", data.nrows())));
        }
        if data.ncols() < MIN_SAMPLES {
            return Err(Error::data(format!(
                "trial needs at least {MIN_SAMPLES} samples, got {}",
                data.ncols()
            )));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::param(format!("sampling rate must be positive, got {fs}")));
        }
        if !(rt.is_finite() && rt >= 0.0) {
            return Err(Error::data(format!("reaction time must be finite and nonnegative, got {rt}")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite sample at channel {}, index {}",
                pos % data.nrows(),
                pos / data.nrows()
            )));
        }
        Ok(Self {
            data,
            fs,
            rt,
            subject_id: subject_id.into(),
        })
    }

    /// Builds a trial from per-channel sample vectors.
    pub fn from_channels(channels: &[Vec<f64>], fs: f64, rt: f64, subject_id: impl Into<String>) -> Result<Self> {
        let d = channels.len();
        let k = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != k) {
            return Err(Error::data("channels have unequal lengths"));
        }
        let data = DMatrix::from_fn(d, k, |i, j| channels[i][j]);
        Self::new(data, fs, rt, subject_id)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn rt(&self) -> f64 {
        self.rt
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    /// Copy of one channel's samples.
    pub fn channel(&self, d: usize) -> Vec<f64> {
        self.data.row(d).iter().copied().collect()
    }

    pub fn channels(&self) -> Vec<Vec<f64>> {
        (0..self.n_channels()).map(|d| self.channel(d)).collect()
    }

    /// Same labels, new samples and rate.
    pub fn with_data(&self, data: DMatrix<f64>, fs: f64) -> Result<Self> {
        Self::new(data, fs, self.rt, self.subject_id.clone())
    }

    pub fn with_rt(mut self, rt: f64) -> Self {
        self.rt = rt;
        self
    }
}

/// Instantaneous phase and envelope of every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticTrial {
    /// Radians, wrapped to (-pi, pi].
    pub phase: DMatrix<f64>,
    pub envelope: DMatrix<f64>,
}

impl AnalyticTrial {
    pub fn n_channels(&self) -> usize {
        self.phase.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.phase.ncols()
    }

    pub fn phase_row(&self, d: usize) -> Vec<f64> {
        self.phase.row(d).iter().copied().collect()
    }
}

/// Absolute wrapped phase differences, `channels × samples`, entries in [0, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct TpdSequence {
    pub delta: DMatrix<f64>,
}

impl TpdSequence {
    pub fn n_channels(&self) -> usize {
        self.delta.nrows()
    }
}

/// Removes each row's mean in place.
pub(crate) fn center_rows(m: &mut DMatrix<f64>) {
    let k = m.ncols() as f64;
    for mut row in m.row_iter_mut() {
        let mean = row.sum() / k;
        row.add_scalar_mut(-mean);
    }
}
