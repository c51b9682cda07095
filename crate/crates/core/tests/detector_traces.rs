//! Hand-traced runs of the anomaly state machine.

use evifuse::bpa::{ConfidenceWeights, SensitivityFactor};
use evifuse::classifiers::{train, ClassifierSpec};
use evifuse::data::synth_clusters;
use evifuse::ecet::{fuse_predictions, EnsembleClassifier};
use evifuse::update::{detector_step, AnomalyDetector, Phase, UpdateConfig};
use evifuse::Frame;

fn detector(threshold: usize, patience: usize, window: usize) -> AnomalyDetector {
    let cfg = UpdateConfig {
        threshold_size: threshold,
        patience,
        window_size: window,
        ..UpdateConfig::default()
    };
    AnomalyDetector::new(cfg, 2)
}

fn run(d: &mut AnomalyDetector, flags: usize, base: i64) -> Vec<Phase> {
    (0..flags)
        .map(|i| d.step_flag(&[i as f64, 0.0], true, base).unwrap().phase)
        .collect()
}

#[test]
fn short_run_commits_nothing() {
    let mut d = detector(100, 15, 0);
    let phases = run(&mut d, 5, 1);
    assert!(phases.iter().all(|p| *p == Phase::Suspect));
    assert_eq!(d.consecutive(), 5);
    assert_eq!(d.temp_buffer().n_rows(), 5);
    let out = d.step_flag(&[0.0, 0.0], false, 1).unwrap();
    assert_eq!(out.y_a, 1);
    assert_eq!(out.phase, Phase::Normal);
    assert_eq!(d.consecutive(), 0);
    assert!(d.committed_buffer().is_empty() && d.temp_buffer().is_empty());
}

#[test]
fn forty_flags_commit_forty_rows() {
    let mut d = detector(100, 15, 0);
    let phases = run(&mut d, 40, 1);
    // Flags 1..=15 are held back; the 16th exceeds the patience and commits
    // the whole run including the held rows.
    assert!(phases[..15].iter().all(|p| *p == Phase::Suspect));
    assert!(phases[15..].iter().all(|p| *p == Phase::Collecting));
    assert_eq!(d.committed_buffer().n_rows(), 40);
    assert!(d.temp_buffer().is_empty());
    assert!(d.committed_buffer().labels().iter().all(|&l| l == 30));
    // The committed rows are the flagged observations in stream order.
    let firsts: Vec<f64> = d.committed_buffer().rows().map(|r| r[0]).collect();
    assert_eq!(firsts, (0..40).map(|i| i as f64).collect::<Vec<_>>());
}

#[test]
fn retrain_ready_at_flag_one_hundred() {
    let mut d = detector(100, 15, 0);
    let phases = run(&mut d, 120, 1);
    let first_ready = phases.iter().position(|p| *p == Phase::RetrainReady).unwrap();
    assert_eq!(first_ready + 1, 100);
    assert!(phases[15..99].iter().all(|p| *p == Phase::Collecting));
    assert_eq!(d.committed_buffer().n_rows(), 120);
}

#[test]
fn interrupted_runs_keep_committed_rows_and_drop_uncommitted_ones() {
    let mut d = detector(100, 15, 0);
    run(&mut d, 20, 1);
    d.step_flag(&[0.0, 0.0], false, 1).unwrap();
    assert_eq!(d.committed_buffer().n_rows(), 20);
    assert_eq!(d.phase(), Phase::Collecting);
    run(&mut d, 10, 1);
    d.step_flag(&[0.0, 0.0], false, 1).unwrap();
    assert_eq!(d.committed_buffer().n_rows(), 20);
    run(&mut d, 16, 1);
    assert_eq!(d.committed_buffer().n_rows(), 36);
}

#[test]
fn window_delays_the_flag_by_half_the_window() {
    let mut d = detector(100, 0, 4);
    let mut labels = Vec::new();
    for _ in 0..4 {
        labels.push(d.step_flag(&[0.0, 0.0], false, 2).unwrap().y_a);
    }
    for _ in 0..4 {
        labels.push(d.step_flag(&[0.0, 0.0], true, 2).unwrap().y_a);
    }
    // Majority over the current label and the 4 before it.
    assert_eq!(labels, vec![2, 2, 2, 2, 2, 2, 30, 30]);
}

#[test]
fn detector_step_uses_conflict_of_the_verdicts() {
    let frame = Frame::new(vec![0, 1, 2]).unwrap();
    let ds = synth_clusters(3, 2, 20, 3.0, 1);
    let m = train(&ClassifierSpec::GaussianNb, &ds, &frame).unwrap();
    let ec = EnsembleClassifier::new(
        vec![m.clone(), m.clone(), m],
        vec![ConfidenceWeights::ones(frame.clone()); 3],
        SensitivityFactor::default(),
    )
    .unwrap();
    let mut d = AnomalyDetector::new(
        UpdateConfig {
            window_size: 0,
            ..UpdateConfig::default()
        },
        2,
    );
    let agree = fuse_predictions(&ec, vec![1, 1, 1]).unwrap();
    let out = detector_step(&mut d, &[0.0, 0.0], &agree, None).unwrap();
    assert!(!out.raw_flag);
    assert_eq!(out.y_a, 1);
    // A dissenting last member against an agreeing pair.
    let split = fuse_predictions(&ec, vec![1, 1, 2]).unwrap();
    assert!(split.conflict_d > 0.5 && split.conflict_y > 0.5);
    let out = detector_step(&mut d, &[0.0, 0.0], &split, None).unwrap();
    assert!(out.raw_flag);
    assert_eq!(out.y_a, 30);
}
