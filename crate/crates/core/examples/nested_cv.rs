//! Synthetic data through preprocessing and nested cross-validation, printing
//! the comparison table and the fused-versus-baseline deltas.
//!
//! Usage: `cargo run --release --example nested_cv -- [seed] [alpha_coupling] [phase_coupling] [n_trials] [--key=value ...]`
//!
//! Trailing `--key=value` arguments override pipeline config keys, e.g. `--ae.batch_size=16`.

use std::time::Instant;

use pcsfusion::eval::{run_nested_cv, PreparedDataset};
use pcsfusion::pipeline::{format_deltas, parse_override, preprocess, report_delta, PipelineConfig};
use pcsfusion::synth::{generate, SynthConfig};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args()
        .filter(|a| !a.starts_with("--"))
        .nth(i)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn main() -> pcsfusion::Result<()> {
    env_logger::init();
    let synth = SynthConfig {
        seed: arg(1, 0),
        alpha_coupling: arg(2, SynthConfig::default().alpha_coupling),
        phase_coupling: arg(3, SynthConfig::default().phase_coupling),
        n_trials: arg(4, 240),
        ..Default::default()
    };
    let mut overrides = vec![
        ("cv.seed".to_string(), synth.seed.to_string()),
        ("cv.regressors".to_string(), format!("[\"{}\"]", "lasso")),
    ];
    for a in std::env::args().filter(|a| a.starts_with("--")) {
        overrides.push(parse_override(&a)?);
    }
    let cfg = PipelineConfig::from_toml_with_overrides("", &overrides)?;

    let start = Instant::now();
    let raw = generate(&synth)?;
    let (trials, log) = preprocess(&raw, &cfg)?;
    println!("{} trials kept of {}", log.n_used, log.n_input);
    let data = PreparedDataset::from_trials(&trials, cfg.model.tpd_mode, cfg.welch())?;
    println!("features prepared in {:.1?}", start.elapsed());
    let report = run_nested_cv(&data, &cfg.cv_settings(), cfg.cv.pooling, &cfg.hash())?;
    println!("{}", report.to_table_text());
    if let Ok(deltas) = report_delta(&report) {
        print!("{}", format_deltas(&deltas));
    }
    println!("total {:.1?}", start.elapsed());
    Ok(())
}
