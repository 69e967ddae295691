//! One function per subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pgrad::env::{Acrobot, AcrobotState, Environment, Puckworld, TabularEnv};
use pgrad::experiments::{
    baseline_sweep, bias_variance_experiment, estimate_gradients, log_spaced_checkpoints, summarize,
    train_batch_ascent, train_online, write_sweep_csv, write_training_csv, Algorithm, BatchTrainingConfig,
    BiasVarianceConfig, OnlineTrainingConfig, SweepConfig, TrainingRun,
};
use pgrad::mdp::{sample_categorical, FeatureMap};
use pgrad::oracle::{
    average_reward, exact_gradient, relative_error, stationary_distribution, Horizon, OracleReport, DEFAULT_FD_STEP,
};
use pgrad::rng::ReplicaRng;
use serde::Serialize;

use crate::config::{CliError, CliResult, EnvSpec, ExperimentConfig};
use crate::plot;

/// Writes to `path`, or to stdout when there is none.
fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    emit(path, text.as_bytes())
}

fn single_gamma(cfg: &ExperimentConfig, default: f64) -> CliResult<f64> {
    let gammas = cfg.gammas_or(&[default])?;
    match gammas.as_slice() {
        [g] => Ok(*g),
        _ => Err(CliError::Config(format!("gammas: this command takes one discount, got {gammas:?}"))),
    }
}

/// Something to run on whichever environment the config names.
trait EnvTask {
    type Output;

    fn run<E, M>(self, make_env: M) -> CliResult<Self::Output>
    where
        E: Environment,
        M: Fn(&mut ReplicaRng) -> pgrad::Result<E> + Sync + Send;
}

/// Tabular runs start in a state drawn from the configured policy's
/// stationary distribution.
fn dispatch<T: EnvTask>(spec: &EnvSpec, task: T) -> CliResult<T::Output> {
    match spec {
        EnvSpec::Tabular { mdp, policy, .. } => {
            let pi = stationary_distribution(mdp, policy)?;
            let mdp = Arc::new(mdp.clone());
            task.run(|rng| TabularEnv::new(Arc::clone(&mdp), sample_categorical(&pi, rng)))
        }
        EnvSpec::Bandit { bandit, .. } => task.run(|_| Ok(bandit.clone())),
        EnvSpec::Acrobot { dt_sim, .. } => task.run(|_| Acrobot::with_substep(AcrobotState::default(), *dt_sim)),
        EnvSpec::Puckworld { config, .. } => task.run(|rng| Puckworld::new(*config, rng)),
    }
}

struct EstimateTask {
    theta: Option<Vec<f64>>,
    algorithm: Algorithm,
    gamma: f64,
    steps: u64,
    replicas: u64,
    seed: u64,
    jobs: usize,
}

impl EnvTask for EstimateTask {
    type Output = (Vec<f64>, Vec<Vec<f64>>);

    fn run<E, M>(self, make_env: M) -> CliResult<Self::Output>
    where
        E: Environment,
        M: Fn(&mut ReplicaRng) -> pgrad::Result<E> + Sync + Send,
    {
        let theta = match self.theta {
            Some(t) => t,
            None => {
                let env = make_env(&mut pgrad::rng::replica_rng(self.seed, 0))?;
                vec![0.0; env.feature_map().dim()]
            }
        };
        let estimates = estimate_gradients(
            &make_env,
            &theta,
            self.algorithm,
            self.gamma,
            self.steps,
            self.replicas,
            self.seed,
            self.jobs,
        )?;
        Ok((theta, estimates))
    }
}

#[derive(Serialize)]
struct EstimateResult {
    algorithm: Algorithm,
    gamma: f64,
    /// Mean of the replica estimates.
    estimate: Vec<f64>,
    relative_error: Option<f64>,
    mean_replica_relative_error: Option<f64>,
    std_replica_relative_error: Option<f64>,
}

#[derive(Serialize)]
struct EstimateSettings {
    env: String,
    steps: u64,
    replicas: u64,
    seed: u64,
}

#[derive(Serialize)]
struct EstimateReport {
    theta: Vec<f64>,
    average_reward: Option<f64>,
    gradient: Option<Vec<f64>>,
    results: Vec<EstimateResult>,
    settings: EstimateSettings,
}

pub fn estimate(cfg: &ExperimentConfig, jobs: usize) -> CliResult<()> {
    cfg.check_kind("estimate")?;
    let spec = cfg.env("three-state")?;
    let algorithms = cfg.algorithms_or(&[Algorithm::Gpomdp])?;
    let gammas = cfg.gammas_or(&[0.99])?;
    let steps = cfg.steps.unwrap_or(100_000);
    let replicas = cfg.replicas.unwrap_or(1);
    let seed = cfg.seed.unwrap_or(0);
    if replicas == 0 {
        return Err(CliError::Config("replicas: need at least one".into()));
    }
    let fd_step = cfg.fd_step.unwrap_or(DEFAULT_FD_STEP);
    let (theta, truth) = match &spec {
        EnvSpec::Tabular { mdp, policy, .. } => (
            Some(policy.theta().to_vec()),
            Some((average_reward(mdp, policy)?, exact_gradient(mdp, policy, fd_step)?)),
        ),
        EnvSpec::Bandit { bandit, mu0 } => (
            Some(pgrad::env::Bandit::policy(*mu0)?.theta().to_vec()),
            Some((bandit.expected_reward(*mu0), bandit.reward_gradient(*mu0).to_vec())),
        ),
        EnvSpec::Acrobot { theta, .. } | EnvSpec::Puckworld { theta, .. } => (theta.clone(), None),
    };

    let mut results = Vec::new();
    let mut used_theta = Vec::new();
    for &algorithm in &algorithms {
        for &gamma in &gammas {
            let task = EstimateTask {
                theta: theta.clone(),
                algorithm,
                gamma,
                steps,
                replicas,
                seed,
                jobs,
            };
            let (th, estimates) = dispatch(&spec, task)?;
            used_theta = th;
            let d = used_theta.len();
            let mean: Vec<f64> =
                (0..d).map(|j| estimates.iter().map(|g| g[j]).sum::<f64>() / estimates.len() as f64).collect();
            let (rel, mean_rel, std_rel) = match &truth {
                Some((_, grad)) => {
                    let errs = estimates.iter().map(|g| relative_error(g, grad)).collect::<pgrad::Result<Vec<_>>>()?;
                    let (m, s) = summarize(&errs);
                    (Some(relative_error(&mean, grad)?), Some(m), Some(s))
                }
                None => (None, None, None),
            };
            results.push(EstimateResult {
                algorithm,
                gamma,
                estimate: mean,
                relative_error: rel,
                mean_replica_relative_error: mean_rel,
                std_replica_relative_error: std_rel,
            });
        }
    }
    let report = EstimateReport {
        theta: used_theta,
        average_reward: truth.as_ref().map(|t| t.0),
        gradient: truth.map(|t| t.1),
        results,
        settings: EstimateSettings {
            env: spec.name().to_string(),
            steps,
            replicas,
            seed,
        },
    };
    emit_json(cfg.out.as_deref(), &report)
}

pub fn sweep(cfg: &ExperimentConfig, jobs: usize) -> CliResult<()> {
    cfg.check_kind("sweep")?;
    if cfg.algorithms_or(&[Algorithm::Gpomdp])? != [Algorithm::Gpomdp] {
        return Err(CliError::Config("algorithms: the baseline sweep runs gpomdp only".into()));
    }
    let spec = cfg.env("three-state")?;
    let (mdp, policy) = spec.tabular("sweep")?;
    let defaults = SweepConfig::default();
    let config = SweepConfig {
        gammas: cfg.gammas_or(&defaults.gammas)?,
        b_ratios: cfg.b_ratios.clone().unwrap_or(defaults.b_ratios),
        steps: cfg.steps.unwrap_or(defaults.steps),
        replicas: cfg.replicas.unwrap_or(defaults.replicas),
        base_seed: cfg.seed.unwrap_or(defaults.base_seed),
    };
    let outcome = baseline_sweep(mdp, policy, &config, jobs)?;
    for m in &outcome.minimizers {
        eprintln!(
            "gamma {}: smallest spread at b/r_bar = {} (std {:.4})",
            m.gamma, m.b_ratio, m.std_relative_error
        );
    }
    let comment = format!(
        "constant baseline sweep on {}: gpomdp with b = b_ratio * r_bar, r_bar = {:.16e}, seed {}; \
         relative error of G_t against the exact gradient",
        spec.name(),
        outcome.average_reward,
        config.base_seed
    );
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &comment, &outcome.records)?;
    emit(cfg.out.as_deref(), &buf)
}

pub fn bias_variance(cfg: &ExperimentConfig, jobs: usize) -> CliResult<()> {
    cfg.check_kind("bias-variance")?;
    let spec = cfg.env("three-state")?;
    let (mdp, policy) = spec.tabular("bias-variance")?;
    let defaults = BiasVarianceConfig::default();
    let checkpoints = match (&cfg.checkpoints, cfg.steps) {
        (Some(c), _) => c.clone(),
        (None, Some(t)) => log_spaced_checkpoints(t),
        (None, None) => defaults.checkpoints,
    };
    let config = BiasVarianceConfig {
        algorithms: cfg.algorithms_or(&defaults.algorithms)?,
        gammas: cfg.gammas_or(&defaults.gammas)?,
        checkpoints,
        replicas: cfg.replicas.unwrap_or(defaults.replicas),
        base_seed: cfg.seed.unwrap_or(defaults.base_seed),
    };
    let records = bias_variance_experiment(mdp, policy, &config, jobs)?;
    let comment = format!(
        "relative error of G_t against the exact gradient on {}, {} replicas, seed {}",
        spec.name(),
        config.replicas,
        config.base_seed
    );
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &comment, &records)?;
    emit(cfg.out.as_deref(), &buf)
}

enum TrainTask {
    Online(OnlineTrainingConfig, usize),
    Batch(BatchTrainingConfig, usize),
}

impl EnvTask for TrainTask {
    type Output = Vec<TrainingRun>;

    fn run<E, M>(self, make_env: M) -> CliResult<Self::Output>
    where
        E: Environment,
        M: Fn(&mut ReplicaRng) -> pgrad::Result<E> + Sync + Send,
    {
        Ok(match self {
            TrainTask::Online(c, jobs) => train_online(make_env, &c, jobs)?,
            TrainTask::Batch(c, jobs) => train_batch_ascent(make_env, &c, jobs)?,
        })
    }
}

/// Online algorithms take `steps` in total and report every `window` steps;
/// batch algorithms take `iterations` ascent steps of `steps` each.
/// `replicas` is the number of seeds.
pub fn train(cfg: &ExperimentConfig, jobs: usize) -> CliResult<()> {
    cfg.check_kind("train")?;
    let spec = cfg.env("acrobot")?;
    let algorithms = cfg.algorithms_or(&[Algorithm::Olgarb])?;
    let online = OnlineTrainingConfig::default();
    let batch = BatchTrainingConfig::default();
    let mut curves = Vec::new();
    let mut settings = Vec::new();
    for &algorithm in &algorithms {
        let task = if algorithm.is_online() {
            let c = OnlineTrainingConfig {
                algorithm,
                alpha: cfg.alpha.unwrap_or(online.alpha),
                gamma: single_gamma(cfg, online.gamma)?,
                steps: cfg.steps.unwrap_or(online.steps),
                seeds: cfg.replicas.unwrap_or(online.seeds),
                base_seed: cfg.seed.unwrap_or(online.base_seed),
                theta_init_range: cfg.theta_init_range.unwrap_or(online.theta_init_range),
                window: cfg.window.unwrap_or(online.window),
            };
            settings.push(format!("{algorithm} alpha={} gamma={} window={}", c.alpha, c.gamma, c.window));
            TrainTask::Online(c, jobs)
        } else {
            let c = BatchTrainingConfig {
                algorithm,
                alpha: cfg.alpha.unwrap_or(batch.alpha),
                gamma: single_gamma(cfg, batch.gamma)?,
                steps_per_estimate: cfg.steps.unwrap_or(batch.steps_per_estimate),
                iterations: cfg.iterations.unwrap_or(batch.iterations),
                seeds: cfg.replicas.unwrap_or(batch.seeds),
                base_seed: cfg.seed.unwrap_or(batch.base_seed),
                theta_init_range: cfg.theta_init_range.unwrap_or(batch.theta_init_range),
            };
            settings.push(format!(
                "{algorithm} alpha={} gamma={} steps_per_estimate={}",
                c.alpha, c.gamma, c.steps_per_estimate
            ));
            TrainTask::Batch(c, jobs)
        };
        curves.extend(dispatch(&spec, task)?.into_iter().map(|r| r.curve));
    }
    let diverged = curves.iter().filter(|c| c.diverged_at.is_some()).count();
    if diverged > 0 {
        eprintln!("warning: {diverged} of {} runs diverged and are flagged in the output", curves.len());
    }
    let comment = format!("training on {}: {}", spec.name(), settings.join("; "));
    let mut buf = Vec::new();
    write_training_csv(&mut buf, &comment, &curves)?;
    emit(cfg.out.as_deref(), &buf)
}

pub fn oracle(cfg: &ExperimentConfig) -> CliResult<()> {
    cfg.check_kind("oracle")?;
    let spec = cfg.env("three-state")?;
    let (mdp, policy) = spec.tabular("oracle")?;
    let gamma = single_gamma(cfg, 0.99)?;
    let horizon = cfg.horizon.map(Horizon::Finite).unwrap_or(Horizon::Infinite);
    let report = OracleReport::compute(mdp, policy, gamma, horizon, cfg.fd_step.unwrap_or(DEFAULT_FD_STEP))?;
    emit_json(cfg.out.as_deref(), &report)
}

pub fn plot(csv: &Path, out: &PathBuf) -> CliResult<()> {
    let chart = plot::chart_from_csv(csv)?;
    emit(Some(out), plot::render(&chart).as_bytes())
}
