use pcsfusion::eval::{run_nested_cv, CvSettings, ExperimentReport, PreparedDataset, Pooling};
use pcsfusion::features::FeatureKind;
use pcsfusion::pipeline::{preprocess, PipelineConfig};
use pcsfusion::regress::RegressorKind;
use pcsfusion::synth::{generate, SynthConfig};
use pcsfusion::Error;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dataset(synth: &SynthConfig) -> PreparedDataset {
    let cfg = PipelineConfig::default();
    let (trials, _) = preprocess(&generate(synth).unwrap(), &cfg).unwrap();
    PreparedDataset::from_trials(&trials, cfg.model.tpd_mode, cfg.welch()).unwrap()
}

fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig { n_trials: 120, d_channels: 10, coupled_channels: 7, seed, ..Default::default() }
}

fn lasso_settings(seed: u64) -> CvSettings {
    CvSettings {
        h_per_class: 4,
        outer_k: 5,
        inner_k: 5,
        ae_epochs: 40,
        ae_batch_size: 16,
        seed,
        regressors: vec![RegressorKind::Lasso],
        ..Default::default()
    }
}

fn mean_cc(report: &ExperimentReport, feature: FeatureKind) -> f64 {
    report.cell(feature, RegressorKind::Lasso).unwrap().cc.unwrap().mean
}

#[test]
fn constant_reaction_times_give_invalid_cells() {
    let mut data = dataset(&small_synth(1));
    for t in &mut data.trials {
        t.rt = 1.0;
    }
    let report = run_nested_cv(&data, &lasso_settings(0), Pooling::Pooled, "h").unwrap();
    assert!(report.cells.iter().all(|c| !c.valid && c.rmse.is_none()));
    assert!(report.cells[0].folds.iter().all(|f| f.error.is_some()));
    assert!(report.anova.is_empty());
}

#[test]
fn too_few_trials_is_a_data_error() {
    let data = dataset(&SynthConfig { n_trials: 9, d_channels: 4, coupled_channels: 2, ..Default::default() });
    let err = run_nested_cv(&data, &lasso_settings(0), Pooling::Pooled, "h");
    assert!(matches!(err, Err(Error::Data(_))));
}

#[test]
fn per_subject_pooling_skips_small_subjects() {
    let mut data = dataset(&SynthConfig { n_subjects: 2, ..small_synth(2) });
    // leave subject s01 with fewer trials than two outer folds need
    let keep: Vec<usize> = (0..data.len()).filter(|&i| data.trials[i].subject == "s00" || i < 12).collect();
    data = data.subset(&keep);
    let report = run_nested_cv(&data, &lasso_settings(0), Pooling::PerSubject, "h").unwrap();
    assert_eq!(report.skipped_subjects, vec!["s01".to_string()]);
    let cell = report.cell(FeatureKind::Fused, RegressorKind::Lasso).unwrap();
    assert!(cell.valid);
    assert!(cell.folds.iter().all(|f| f.subject.as_deref() == Some("s00")));
    assert_eq!(cell.folds.len(), 5);
}

#[test]
fn nested_cv_is_deterministic() {
    let data = dataset(&small_synth(3));
    let a = run_nested_cv(&data, &lasso_settings(9), Pooling::Pooled, "h").unwrap();
    let b = run_nested_cv(&data, &lasso_settings(9), Pooling::Pooled, "h").unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn shuffled_reaction_times_carry_no_signal() {
    let mut sums = [0.0; 3];
    let seeds = 5;
    for seed in 0..seeds {
        let mut data = dataset(&small_synth(10 + seed));
        let mut rts = data.rts();
        rts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for (t, rt) in data.trials.iter_mut().zip(rts) {
            t.rt = rt;
        }
        let report = run_nested_cv(&data, &lasso_settings(seed), Pooling::Pooled, "h").unwrap();
        for (sum, kind) in sums.iter_mut().zip([FeatureKind::Fs1, FeatureKind::Fs2, FeatureKind::Fused]) {
            *sum += mean_cc(&report, kind) / seeds as f64;
        }
    }
    assert!(sums.iter().all(|c| c.abs() <= 0.15), "mean CCs {sums:?}");
}

#[test]
fn alpha_only_signal_is_found_by_band_power() {
    let synth = SynthConfig { alpha_coupling: 2.0, phase_coupling: 0.0, ..small_synth(4) };
    let report = run_nested_cv(&dataset(&synth), &lasso_settings(4), Pooling::Pooled, "h").unwrap();
    let fs1 = mean_cc(&report, FeatureKind::Fs1);
    let fs2 = mean_cc(&report, FeatureKind::Fs2);
    assert!(fs1 >= 0.5, "FS1 CC {fs1}");
    assert!(fs2 <= fs1, "FS2 CC {fs2} above FS1 CC {fs1}");
}
