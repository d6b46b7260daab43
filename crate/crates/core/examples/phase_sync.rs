//! Band-pass filtering, instantaneous phase and pairwise phase synchrony.
//!
//! Two 10 Hz channels share a phase up to a slowly wandering offset; the
//! synchrony index falls as the wander grows.

use std::f64::consts::PI;

use pcsfusion::signal::fir::frequency_response;
use pcsfusion::signal::{analytic, design_fir, filtfilt, spsi, welch_psd, FilterSpec, SpsiVariant, WelchParams};
use pcsfusion::signal::EegTrial;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pcsfusion::Result<()> {
    let fs = 250.0;
    let k = 1250;
    let taps = design_fir(&FilterSpec::bandpass(1.0, 20.0, 250), fs)?;
    println!("band-pass 1-20 Hz, {} taps", taps.len());
    for f in [0.2, 10.0, 30.0, 50.0] {
        println!("  gain at {f:>4} Hz: {:>7.1} dB", 20.0 * frequency_response(&taps, f, fs).log10());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("\nwander_std  spsi(classical)  spsi(abs-diff)  alpha_peak_hz");
    for wander in [0.0, 0.3, 1.0, 3.0] {
        let mut offset = 0.0;
        let mut a = Vec::with_capacity(k);
        let mut b = Vec::with_capacity(k);
        for t in 0..k {
            offset += wander * 0.05 * rng.random_range(-1.0..1.0);
            let phase = 2.0 * PI * 10.0 * t as f64 / fs;
            a.push(phase.cos() + 0.3 * rng.random_range(-1.0..1.0));
            b.push((phase + offset).cos() + 0.3 * rng.random_range(-1.0..1.0));
        }
        let trial = filtfilt(&EegTrial::from_channels(&[a, b], fs, 1.0, "demo")?, &taps)?;
        let phases = analytic(&trial)?;
        let (p0, p1) = (phases.phase_row(0), phases.phase_row(1));
        let psd = welch_psd(&trial.channel(0), fs, WelchParams::default())?;
        println!(
            "{wander:>10.1}  {:>15.3}  {:>14.3}  {:>13.2}",
            spsi(&p0, &p1, SpsiVariant::Classical)?,
            spsi(&p0, &p1, SpsiVariant::AbsoluteDifference)?,
            psd.peak_frequency()
        );
    }
    Ok(())
}
