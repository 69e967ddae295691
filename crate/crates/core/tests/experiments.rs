use std::sync::Arc;

use pgrad::env::{default_three_state, PuckConfig, Puckworld, TabularEnv};
use pgrad::experiments::{
    aggregate_stats, baseline_sweep, bias_variance_experiment, train_batch_ascent, train_online, write_sweep_csv,
    write_training_csv, Algorithm, BatchTrainingConfig, BiasVarianceConfig, OnlineTrainingConfig, SweepConfig,
    TrainingCurve,
};
use pgrad::oracle::average_reward;
use pgrad::rng::ReplicaRng;
use rand::Rng;

fn three_state_env(rng: &mut ReplicaRng) -> pgrad::Result<TabularEnv> {
    let (mdp, _) = default_three_state();
    TabularEnv::new(Arc::new(mdp), rng.random_range(0..3))
}

#[test]
fn estimates_improve_with_more_steps() {
    let (mdp, policy) = default_three_state();
    let config = BiasVarianceConfig {
        checkpoints: vec![100, 10_000],
        base_seed: 4,
        ..BiasVarianceConfig::default()
    };
    let records = bias_variance_experiment(&mdp, &policy, &config, 0).unwrap();
    for pair in records.chunks(2) {
        assert_eq!((pair[0].steps, pair[1].steps), (100, 10_000));
        assert!(
            pair[1].mean_relative_error < pair[0].mean_relative_error,
            "{} at gamma {}",
            pair[0].algorithm,
            pair[0].gamma
        );
    }
}

#[test]
fn zero_step_size_tracks_the_initial_policy_reward() {
    let config = OnlineTrainingConfig {
        algorithm: Algorithm::Olpomdp,
        alpha: 0.0,
        steps: 200_000,
        seeds: 1,
        base_seed: 6,
        ..OnlineTrainingConfig::default()
    };
    let run = &train_online(three_state_env, &config, 1).unwrap()[0];
    let (mdp, policy) = default_three_state();
    let r_bar = average_reward(&mdp, &policy.with_theta(run.theta.clone()).unwrap()).unwrap();
    let points = &run.curve.points;
    let mean = points.iter().map(|p| p.average_reward).sum::<f64>() / points.len() as f64;
    assert!((mean - r_bar).abs() < 0.03, "{mean} vs {r_bar}");
    assert!(points.iter().all(|p| (p.average_reward - r_bar).abs() < 0.15));
}

fn puck_curves(algorithm: Algorithm) -> Vec<TrainingCurve> {
    let config = BatchTrainingConfig {
        algorithm,
        alpha: 0.5,
        gamma: 0.95,
        steps_per_estimate: 10_000,
        iterations: 20,
        seeds: 10,
        base_seed: 0,
        theta_init_range: 0.5,
    };
    train_batch_ascent(|rng| Puckworld::new(PuckConfig::default(), rng), &config, 0)
        .unwrap()
        .into_iter()
        .map(|r| r.curve)
        .collect()
}

#[test]
fn garb_trains_puckworld_more_consistently_early_on() {
    let spread = |alg| {
        let band = aggregate_stats(&puck_curves(alg)).unwrap();
        band.iter().map(|b| b.std).sum::<f64>() / band.len() as f64
    };
    let (gpomdp, garb) = (spread(Algorithm::Gpomdp), spread(Algorithm::Garb));
    assert!(garb < gpomdp, "garb {garb} vs gpomdp {gpomdp}");
}

#[test]
fn output_is_identical_for_any_thread_count() {
    let (mdp, policy) = default_three_state();
    let sweep = SweepConfig {
        replicas: 40,
        ..SweepConfig::default()
    };
    let csv = |jobs| {
        let out = baseline_sweep(&mdp, &policy, &sweep, jobs).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, "sweep", &out.records).unwrap();
        buf
    };
    assert_eq!(csv(1), csv(4));

    let online = OnlineTrainingConfig {
        steps: 20_000,
        seeds: 5,
        window: 1000,
        ..OnlineTrainingConfig::default()
    };
    let csv = |jobs| {
        let curves: Vec<TrainingCurve> =
            train_online(three_state_env, &online, jobs).unwrap().into_iter().map(|r| r.curve).collect();
        let mut buf = Vec::new();
        write_training_csv(&mut buf, "train", &curves).unwrap();
        buf
    };
    assert_eq!(csv(1), csv(4));
}
