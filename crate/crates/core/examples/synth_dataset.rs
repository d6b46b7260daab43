//! Generates a synthetic dataset, writes it to disk as trial files plus a
//! manifest, reads it back and preprocesses it.

use pcsfusion::pipeline::{preprocess, PipelineConfig};
use pcsfusion::signal::io::{read_dataset, write_dataset, Manifest};
use pcsfusion::synth::{generate, SynthConfig};

fn main() -> pcsfusion::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "synth_data".into());
    let synth = SynthConfig { n_trials: 24, n_subjects: 2, ..Default::default() };
    let trials = generate(&synth)?;
    let manifest_path = write_dataset(&dir, &trials)?;
    let manifest = Manifest::read(&manifest_path)?;
    println!("wrote {} trials to {}", manifest.trials.len(), manifest_path.display());
    println!("first manifest entry: {:?}", manifest.trials[0]);

    let loaded = read_dataset(&manifest_path)?;
    // samples are stored as f32
    let max_err = loaded
        .iter()
        .zip(&trials)
        .flat_map(|(a, b)| a.data().iter().zip(b.data().iter()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    println!("read back {} trials, max sample difference {max_err:.2e}", loaded.len());

    let (clean, log) = preprocess(&loaded, &PipelineConfig::default())?;
    println!(
        "preprocessed: {} of {} trials kept, {} channels x {} samples at {} Hz",
        log.n_used,
        log.n_input,
        clean[0].n_channels(),
        clean[0].n_samples(),
        clean[0].fs()
    );
    for (subject, counts) in &log.subjects {
        println!("  {subject}: {counts:?}");
    }
    Ok(())
}
