//! Fuzzy reaction-time classes and one-vs-rest spatial filters over
//! phase-difference sequences.

use pcsfusion::csp::{solve_ovr_filters, weighted_tpd_covariances, BankVariant};
use pcsfusion::eval::pearson;
use pcsfusion::features::pcs_from_tpd;
use pcsfusion::fuzzy::FuzzyPartition;
use pcsfusion::pipeline::{preprocess, PipelineConfig};
use pcsfusion::signal::{analytic, tpd, TpdMode};
use pcsfusion::synth::{generate, SynthConfig};

fn main() -> pcsfusion::Result<()> {
    let synth = SynthConfig { n_trials: 160, d_channels: 12, coupled_channels: 8, phase_coupling: 1.0, ..Default::default() };
    let (trials, _) = preprocess(&generate(&synth)?, &PipelineConfig::default())?;
    let rts: Vec<f64> = trials.iter().map(|t| t.rt()).collect();

    let partition = FuzzyPartition::fit(&rts, 3)?;
    println!("class boundaries (s): {:.3?}", partition.boundaries());
    for rt in [0.6, 1.0, 1.6] {
        println!("  membership of rt {rt}: {:.2?}", partition.membership(rt).as_slice());
    }

    let seqs = trials
        .iter()
        .map(|t| Ok(tpd(&analytic(t)?, TpdMode::VsMeanPhase)))
        .collect::<pcsfusion::Result<Vec<_>>>()?;
    let covs = weighted_tpd_covariances(&seqs, &rts, &partition, true)?;
    let bank = solve_ovr_filters(&covs, 2, BankVariant::Phase)?;
    println!("\n{} filters, quotients {:.3?}", bank.n_filters(), bank.quotients());

    let features = seqs.iter().map(|s| pcs_from_tpd(s, &bank)).collect::<pcsfusion::Result<Vec<_>>>()?;
    println!("\nin-sample correlation of each log-variance feature with rt:");
    for j in 0..bank.n_filters() {
        let column: Vec<f64> = features.iter().map(|f| f.values[j]).collect();
        println!("  class {} filter {}: {:+.3}", j / 2, j % 2, pearson(&column, &rts).unwrap_or(f64::NAN));
    }
    Ok(())
}
