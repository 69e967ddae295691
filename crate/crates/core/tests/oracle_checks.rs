use std::path::PathBuf;

use pgrad::env::bandit::{Bandit, RewardDist};
use pgrad::env::default_three_state;
use pgrad::estimators::constant_baseline_estimate;
use pgrad::mdp::{sample_trajectory, SoftmaxPolicy, TabularFeatures, TabularMdp, TrajectoryStep};
use pgrad::oracle::{
    average_reward, bandit_optimal_baseline, enumerate_trajectories, exact_gradient, optimal_constant_baseline,
    policy_transition_matrix, stationary_by_power_iteration, stationary_distribution, stationary_residual,
    ExpectationMethod, Horizon, OracleResult, DEFAULT_FD_STEP,
};
use pgrad::rng::replica_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

fn two_state() -> (TabularMdp, SoftmaxPolicy<TabularFeatures>) {
    let mdp = TabularMdp::new(
        vec![
            vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            vec![vec![0.6, 0.4], vec![0.1, 0.9]],
        ],
        vec![1.0, -0.5],
    )
    .unwrap();
    let policy = mdp.tabular_policy(vec![0.3, -0.2, -0.6, 0.4]).unwrap();
    (mdp, policy)
}

/// `Q_s = zeta_s sum_{i >= s} (R_i - b) gamma^{i-s}` by direct summation.
fn q_direct(traj: &[TrajectoryStep<usize>], s: usize, b: f64, gamma: f64) -> Vec<f64> {
    let tail: f64 = traj[s - 1..]
        .iter()
        .enumerate()
        .map(|(k, step)| (step.reward - b) * gamma.powi(k as i32))
        .sum();
    traj[s - 1].score.iter().map(|z| z * tail).collect()
}

#[test]
fn baseline_leaves_expected_estimate_unchanged() {
    let (mdp, policy) = two_state();
    let pi = stationary_distribution(&mdp, &policy).unwrap();
    for initial in [pi, vec![1.0, 0.0]] {
        for gamma in [0.5, 0.9] {
            let expected = |b: f64| {
                let mut e = vec![0.0; policy.dim()];
                enumerate_trajectories(&mdp, &policy, &initial, 6, |p, traj| {
                    for (ej, gj) in e.iter_mut().zip(constant_baseline_estimate(traj, b, gamma).unwrap()) {
                        *ej += p * gj;
                    }
                })
                .unwrap();
                e
            };
            let reference = expected(0.0);
            for b in [-1.0, 0.7, 5.0] {
                for (x, y) in expected(b).iter().zip(&reference) {
                    assert!((x - y).abs() <= 1e-12, "b = {b}: {x} vs {y}");
                }
            }
        }
    }
}

/// Exact mean and second moment of each component of `Q_s`, starting from `pi`.
fn q_moments(b: f64, s: usize, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let (mdp, policy) = two_state();
    let pi = stationary_distribution(&mdp, &policy).unwrap();
    let d = policy.dim();
    let (mut m1, mut m2) = (vec![0.0; d], vec![0.0; d]);
    enumerate_trajectories(&mdp, &policy, &pi, 6, |p, traj| {
        for (j, q) in q_direct(traj, s, b, gamma).into_iter().enumerate() {
            m1[j] += p * q;
            m2[j] += p * q * q;
        }
    })
    .unwrap();
    (m1, m2)
}

#[test]
fn mean_of_q_does_not_depend_on_baseline() {
    for s in 1..=6 {
        let (reference, _) = q_moments(0.0, s, 0.8);
        for b in [1.0, 10.0] {
            let (m, _) = q_moments(b, s, 0.8);
            for (x, y) in m.iter().zip(&reference) {
                assert!((x - y).abs() <= 1e-12, "s = {s}, b = {b}");
            }
        }
    }
}

#[test]
fn variance_of_q_is_a_parabola_with_vertex_at_optimal_baseline() {
    let (mdp, policy) = two_state();
    let gamma = 0.8;
    for s in [1, 3, 6] {
        let var = |b: f64| {
            let (m1, m2) = q_moments(b, s, gamma);
            m1.iter().zip(&m2).map(|(a, q)| q - a * a).collect::<Vec<_>>()
        };
        let (lo, mid, hi) = (var(-1.0), var(0.0), var(1.0));
        // through (-1, lo), (0, mid), (1, hi): curvature (lo + hi - 2 mid) / 2, vertex at (lo - hi) / (2 (lo + hi - 2 mid))
        let vertex = |l: f64, m: f64, h: f64| {
            let curvature = (l + h - 2.0 * m) / 2.0;
            assert!(curvature > 0.0);
            (l - h) / (4.0 * curvature)
        };
        for method in [ExpectationMethod::Enumerate, ExpectationMethod::Exact] {
            let opt = optimal_constant_baseline(&mdp, &policy, gamma, s, Horizon::Finite(6), method).unwrap();
            for j in 0..policy.dim() {
                let v = vertex(lo[j], mid[j], hi[j]);
                let b = opt.b_star_per_param[j].unwrap();
                assert!((v - b).abs() <= 1e-9, "s = {s}, component {j}: {v} vs {b}");
            }
            let total = |v: &[f64]| v.iter().sum::<f64>();
            let v = vertex(total(&lo), total(&mid), total(&hi));
            assert!((v - opt.b_star.unwrap()).abs() <= 1e-9);
        }
    }
}

#[test]
fn constant_reward_gives_that_constant_as_optimal_baseline() {
    let (mdp, _) = two_state();
    let flat = TabularMdp::new(mdp.transition().to_vec(), vec![0.37, 0.37]).unwrap();
    let policy = flat.tabular_policy(vec![0.3, -0.2, -0.6, 0.4]).unwrap();
    for (method, horizon) in [
        (ExpectationMethod::Exact, Horizon::Infinite),
        (ExpectationMethod::Exact, Horizon::Finite(5)),
        (ExpectationMethod::Enumerate, Horizon::Finite(5)),
    ] {
        let r = optimal_constant_baseline(&flat, &policy, 0.9, 2, horizon, method).unwrap();
        assert!((r.b_star.unwrap() - 0.37).abs() <= 1e-12);
        assert!(r.b_star_per_param.iter().all(|b| (b.unwrap() - 0.37).abs() <= 1e-12));
    }
}

#[test]
fn immediate_reward_case_reduces_to_the_bandit_baseline() {
    // action a moves to state a, which pays r_a; both states share the same logits
    let (r0, r1, mu0) = (0.2, 1.5, 0.7);
    let mdp = TabularMdp::new(
        vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
        vec![r0, r1],
    )
    .unwrap();
    let l = (mu0 / (1.0 - mu0) as f64).ln();
    let policy = mdp.tabular_policy(vec![l, 0.0, l, 0.0]).unwrap();
    let expected = bandit_optimal_baseline(mu0, r0, r1).unwrap();
    for method in [ExpectationMethod::Exact, ExpectationMethod::Enumerate] {
        let r = optimal_constant_baseline(&mdp, &policy, 0.0, 1, Horizon::Finite(1), method).unwrap();
        assert!((r.b_star.unwrap() - expected).abs() <= 1e-12);
        for b in r.b_star_per_param {
            assert!((b.unwrap() - expected).abs() <= 1e-12);
        }
    }
}

/// Exact `tr Cov[(r - b) zeta]` for a bandit with deterministic arm rewards,
/// from the two outcomes.
fn bandit_variance(mu0: f64, r0: f64, r1: f64, b: f64) -> f64 {
    let policy = Bandit::policy(mu0).unwrap();
    let outcomes = [(mu0, r0, policy.score(&0, 0).unwrap()), (1.0 - mu0, r1, policy.score(&0, 1).unwrap())];
    let mut mean = [0.0; 2];
    let mut second = 0.0;
    for (p, r, z) in &outcomes {
        for j in 0..2 {
            let x = (r - b) * z[j];
            mean[j] += p * x;
            second += p * x * x;
        }
    }
    second - mean[0] * mean[0] - mean[1] * mean[1]
}

#[test]
fn bandit_baseline_minimizes_variance_on_a_grid() {
    for (mu0, r0, r1) in [(0.5, 0.0, 1.0), (0.9, 0.0, 1.0), (0.3, -0.4, 1.7)] {
        let grid = (0..=3000).map(|i| -1.0 + 1e-3 * i as f64);
        let best = grid
            .min_by(|a, b| bandit_variance(mu0, r0, r1, *a).total_cmp(&bandit_variance(mu0, r0, r1, *b)))
            .unwrap();
        let closed = bandit_optimal_baseline(mu0, r0, r1).unwrap();
        assert!((best - closed).abs() <= 1e-3, "{best} vs {closed}");
    }
}

#[test]
fn sampled_bandit_variance_is_smallest_near_its_optimal_baseline() {
    let mu0 = 0.35;
    let bandit = Bandit::new(RewardDist::Bernoulli { p: 0.8 }, RewardDist::Normal { mean: 0.1, std: 0.5 }).unwrap();
    let policy = Bandit::policy(mu0).unwrap();
    let mut rng = replica_rng(5, 0);
    let draws: Vec<(f64, Vec<f64>)> = (0..1_000_000)
        .map(|_| {
            let a = if rng.random::<f64>() < mu0 { 0 } else { 1 };
            (bandit.arms()[a].sample(&mut rng), policy.score(&0, a).unwrap())
        })
        .collect();
    let variance = |b: f64| {
        let n = draws.len() as f64;
        let (mut m, mut sq) = ([0.0; 2], 0.0);
        for (r, z) in &draws {
            for j in 0..2 {
                let x = (r - b) * z[j];
                m[j] += x / n;
                sq += x * x / n;
            }
        }
        sq - m[0] * m[0] - m[1] * m[1]
    };
    let grid: Vec<f64> = (0..=60).map(|i| -0.5 + 0.025 * i as f64).collect();
    let best = grid.iter().copied().min_by(|a, b| variance(*a).total_cmp(&variance(*b))).unwrap();
    let closed = bandit_optimal_baseline(mu0, 0.8, 0.1).unwrap();
    assert!((best - closed).abs() <= 0.05, "{best} vs {closed}");
}

#[test]
fn three_state_optimal_baseline_approaches_average_reward() {
    let (mdp, policy) = default_three_state();
    let r_bar = average_reward(&mdp, &policy).unwrap();
    let gaps: Vec<f64> = [0.4, 0.9, 0.99, 0.999]
        .iter()
        .map(|&g| {
            let r = optimal_constant_baseline(&mdp, &policy, g, 1, Horizon::Infinite, ExpectationMethod::Exact).unwrap();
            (r.b_star.unwrap() / r_bar - 1.0).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[3] < 0.01, "{gaps:?}");
}

#[test]
fn exact_optimal_baseline_agrees_with_monte_carlo() {
    let (mdp, policy) = default_three_state();
    let exact = optimal_constant_baseline(&mdp, &policy, 0.99, 1, Horizon::Finite(100), ExpectationMethod::Exact).unwrap();
    let sampled = optimal_constant_baseline(
        &mdp,
        &policy,
        0.99,
        1,
        Horizon::Finite(100),
        ExpectationMethod::MonteCarlo { samples: 20_000, seed: 3 },
    )
    .unwrap();
    let (a, b) = (exact.b_star.unwrap(), sampled.b_star.unwrap());
    assert!((a - b).abs() <= 0.02 * a.abs(), "{a} vs {b}");
}

#[test]
fn empirical_state_frequencies_match_stationary_distribution() {
    let (mdp, policy) = two_state();
    let pi = stationary_distribution(&mdp, &policy).unwrap();
    let traj = sample_trajectory(&mdp, &policy, 0, 100_000, &mut replica_rng(8, 0)).unwrap();
    let visits = traj.iter().filter(|s| s.observation == 0).count() as f64 / traj.len() as f64;
    assert!((visits - pi[0]).abs() <= 3.0 / (1e5f64).sqrt());
}

#[test]
fn simulated_average_reward_matches_oracle() {
    let (mdp, policy) = default_three_state();
    let r_bar = average_reward(&mdp, &policy).unwrap();
    let traj = sample_trajectory(&mdp, &policy, 0, 1_000_000, &mut replica_rng(9, 0)).unwrap();
    // batch means absorb the autocorrelation of the chain
    let batch_means: Vec<f64> = traj
        .chunks(10_000)
        .map(|c| c.iter().map(|s| s.reward).sum::<f64>() / c.len() as f64)
        .collect();
    let n = batch_means.len() as f64;
    let mean = batch_means.iter().sum::<f64>() / n;
    let sd = (batch_means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - r_bar).abs() <= 3.0 * sd / n.sqrt(), "{mean} vs {r_bar}");
}

#[test]
fn finite_difference_step_halving_agrees() {
    let (mdp, policy) = default_three_state();
    let coarse = exact_gradient(&mdp, &policy, 1e-5).unwrap();
    let fine = exact_gradient(&mdp, &policy, 1e-6).unwrap();
    let scale = fine.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = coarse.iter().zip(&fine).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    assert!(diff <= 1e-7 * scale, "{diff}");
}

#[test]
fn gradient_vanishes_when_policy_cannot_matter() {
    let (mdp, policy) = default_three_state();
    let flat = TabularMdp::new(mdp.transition().to_vec(), vec![0.4; 3]).unwrap();
    assert!(exact_gradient(&flat, &policy, DEFAULT_FD_STEP).unwrap().iter().all(|g| g.abs() < 1e-9));
    let row = vec![0.2, 0.5, 0.3];
    let blind = TabularMdp::new(vec![vec![row.clone(), row.clone()]; 3], mdp.reward().to_vec()).unwrap();
    assert!(exact_gradient(&blind, &policy, DEFAULT_FD_STEP).unwrap().iter().all(|g| g.abs() < 1e-9));
}

#[test]
fn average_reward_simple_cases() {
    let cycle = TabularMdp::new(
        vec![
            vec![vec![0.0, 1.0, 0.0]; 2],
            vec![vec![0.0, 0.0, 1.0]; 2],
            vec![vec![1.0, 0.0, 0.0]; 2],
        ],
        vec![0.0, 1.0, 2.0],
    )
    .unwrap();
    let policy = cycle.tabular_policy(vec![0.0; 6]).unwrap();
    assert!((average_reward(&cycle, &policy).unwrap() - 1.0).abs() <= 1e-12);
    let (mdp, policy) = default_three_state();
    let flat = TabularMdp::new(mdp.transition().to_vec(), vec![-2.5; 3]).unwrap();
    assert!((average_reward(&flat, &policy).unwrap() + 2.5).abs() <= 1e-12);
}

#[test]
fn three_state_oracle_invariants_over_parameter_grid() {
    let (mdp, policy) = default_three_state();
    let values = [-2.0, -0.7, 0.6, 2.0];
    let mut theta = [0.0; 6];
    for code in 0..values.len().pow(6) {
        let mut c = code;
        for t in theta.iter_mut() {
            *t = values[c % values.len()];
            c /= values.len();
        }
        let p = policy_transition_matrix(&mdp, &policy.with_theta(theta.to_vec()).unwrap()).unwrap();
        let pi = pgrad::oracle::stationary_from_matrix(&p).unwrap();
        assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        assert!(pi.iter().all(|x| *x >= 0.0));
        assert!(stationary_residual(&p, &pi) <= 1e-10);
        let power = stationary_by_power_iteration(&p, 1e-14, 100_000).unwrap();
        assert!(pi.iter().zip(&power).all(|(a, b)| (a - b).abs() <= 1e-9));
    }
    let mut rng = replica_rng(12, 0);
    for _ in 0..200 {
        let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
        assert!(stationary_distribution(&mdp, &policy.with_theta(theta).unwrap()).is_ok());
    }
}

#[test]
fn gradient_at_zero_parameters_is_nonzero() {
    let (mdp, policy) = default_three_state();
    let g = exact_gradient(&mdp, &policy.with_theta(vec![0.0; 6]).unwrap(), DEFAULT_FD_STEP).unwrap();
    assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() > 0.01);
}

#[derive(Debug, Serialize, Deserialize)]
struct Golden {
    average_reward_at_zero: f64,
    average_reward: f64,
    stationary: Vec<f64>,
    gradient: Vec<f64>,
}

#[test]
fn three_state_oracle_matches_golden_file() {
    let (mdp, policy) = default_three_state();
    let at_default = OracleResult::compute(&mdp, &policy, DEFAULT_FD_STEP).unwrap();
    let current = Golden {
        average_reward_at_zero: average_reward(&mdp, &policy.with_theta(vec![0.0; 6]).unwrap()).unwrap(),
        average_reward: at_default.average_reward,
        stationary: at_default.stationary,
        gradient: at_default.gradient,
    };
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/three_state_oracle.json");
    if std::env::var_os("PGRAD_BLESS").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&current).unwrap() + "\n").unwrap();
    }
    let golden: Golden = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    assert!(close(golden.average_reward_at_zero, current.average_reward_at_zero));
    assert!(close(golden.average_reward, current.average_reward));
    assert!(golden.stationary.iter().zip(&current.stationary).all(|(a, b)| close(*a, *b)));
    // finite differences lose about 10 digits, so the gradient gets a looser check
    assert!(golden.gradient.iter().zip(&current.gradient).all(|(a, b)| (a - b).abs() <= 1e-9));
}
