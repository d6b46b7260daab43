//! Band-power and phase-synchrony feature vectors for a handful of trials,
//! standardized on a training split and exported as CSV.

use pcsfusion::csp::{solve_ovr_filters, weighted_tpd_covariances, BankVariant};
use pcsfusion::features::{fs1_bandpower, fs1_names, fs2_names, fs2_pcs, FeatureTable, Standardizer};
use pcsfusion::fuzzy::FuzzyPartition;
use pcsfusion::pipeline::{preprocess, PipelineConfig};
use pcsfusion::signal::{analytic, tpd, TpdMode, WelchParams};
use pcsfusion::synth::{generate, SynthConfig};

fn main() -> pcsfusion::Result<()> {
    let synth = SynthConfig { n_trials: 80, d_channels: 8, coupled_channels: 5, ..Default::default() };
    let (trials, _) = preprocess(&generate(&synth)?, &PipelineConfig::default())?;
    let (train, test) = trials.split_at(60);

    let fs1: Vec<Vec<f64>> = trials
        .iter()
        .map(|t| fs1_bandpower(t, WelchParams::default()).map(|f| f.values))
        .collect::<pcsfusion::Result<_>>()?;
    println!("FS1: {} values per trial, first trial theta/alpha on channel 0: {:.2} / {:.2} dB", fs1[0].len(), fs1[0][0], fs1[0][8]);

    // the phase bank is fitted on the training trials only
    let train_rts: Vec<f64> = train.iter().map(|t| t.rt()).collect();
    let partition = FuzzyPartition::fit(&train_rts, 3)?;
    let seqs = train
        .iter()
        .map(|t| Ok(tpd(&analytic(t)?, TpdMode::VsMeanPhase)))
        .collect::<pcsfusion::Result<Vec<_>>>()?;
    let bank = solve_ovr_filters(&weighted_tpd_covariances(&seqs, &train_rts, &partition, true)?, 2, BankVariant::Phase)?;
    let fs2: Vec<Vec<f64>> = trials
        .iter()
        .map(|t| fs2_pcs(t, &bank, TpdMode::VsMeanPhase).map(|f| f.values))
        .collect::<pcsfusion::Result<_>>()?;
    println!("FS2: {} values per trial", fs2[0].len());

    let scaler = Standardizer::fit(&fs1[..train.len()])?;
    let scaled: Vec<Vec<f64>> = fs1[train.len()..].iter().map(|v| scaler.apply(v)).collect::<pcsfusion::Result<_>>()?;
    println!("first held-out trial, standardized FS1[0..4]: {:.2?}", &scaled[0][..4]);

    let mut names = fs1_names(8);
    names.extend(fs2_names(3, 2));
    let table = FeatureTable {
        names,
        rows: test.iter().enumerate().map(|(i, _)| [fs1[60 + i].clone(), fs2[60 + i].clone()].concat()).collect(),
        rts: test.iter().map(|t| t.rt()).collect(),
    };
    let csv = table.to_csv();
    println!("\nCSV export ({} rows), header:\n{}", table.rows.len(), csv.lines().next().unwrap_or(""));
    Ok(())
}
