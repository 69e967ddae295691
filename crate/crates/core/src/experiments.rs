//! Replicated experiments.
//!
//! Replica `k` of every experiment draws from `replica_rng(base_seed, k)`
//! and nothing else, and results are merged in replica order, so the output
//! does not depend on how many worker threads run the replicas.
//!
//! Within a replica the same simulated trajectory feeds every estimator
//! configuration (algorithm, discount, baseline) being compared.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvio::{fmt_f64, parse_f64, read_rows, writer};
use crate::env::{Environment, TabularEnv};
use crate::error::{Error, Result};
use crate::estimators::{
    check_gamma, constant_baseline_estimate, olgarb_step, olpomdp_step, BaselineMode, EstimatorConfig,
    EstimatorState, OnlineBaseline,
};
use crate::mdp::{
    check_policy_matches, sample_categorical, sample_trajectory, PolicyWorkspace, SoftmaxPolicy, TabularFeatures,
    TabularMdp,
};
use crate::oracle::{exact_gradient, norm, relative_error, stationary_distribution, DEFAULT_FD_STEP};
use crate::rng::{replica_rng, ReplicaRng};

type TabularPolicy = SoftmaxPolicy<TabularFeatures>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Gpomdp,
    Garb,
    Olpomdp,
    Olgarb,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Gpomdp => "gpomdp",
            Algorithm::Garb => "garb",
            Algorithm::Olpomdp => "olpomdp",
            Algorithm::Olgarb => "olgarb",
        }
    }

    pub fn is_online(self) -> bool {
        matches!(self, Algorithm::Olpomdp | Algorithm::Olgarb)
    }

    /// Baseline used by the batch estimator of the same family.
    pub fn baseline(self) -> BaselineMode {
        match self {
            Algorithm::Gpomdp | Algorithm::Olpomdp => BaselineMode::None,
            Algorithm::Garb | Algorithm::Olgarb => BaselineMode::AdaptiveAverage,
        }
    }

    fn require_batch(self) -> Result<()> {
        if self.is_online() {
            return Err(Error::InvalidArgument(format!("{self} is an online learner, not a gradient estimator")));
        }
        Ok(())
    }

    fn require_online(self) -> Result<()> {
        if !self.is_online() {
            return Err(Error::InvalidArgument(format!("{self} is a gradient estimator, not an online learner")));
        }
        Ok(())
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gpomdp" => Ok(Algorithm::Gpomdp),
            "garb" => Ok(Algorithm::Garb),
            "olpomdp" => Ok(Algorithm::Olpomdp),
            "olgarb" => Ok(Algorithm::Olgarb),
            other => Err(Error::InvalidArgument(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Runs `f(0..n)` on `jobs` threads (0 means one per core) and returns the
/// results in index order.
pub fn run_replicas<T, F>(jobs: usize, n: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Mean and sample standard deviation. A single value has zero spread.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// `10^2, 10^2.5, 10^3, ...` up to `t_max`, with `t_max` itself appended if
/// it is not on the grid.
pub fn log_spaced_checkpoints(t_max: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (4..)
        .map(|k| 10f64.powf(k as f64 / 2.0).round() as u64)
        .take_while(|&t| t <= t_max)
        .collect();
    if out.last() != Some(&t_max) {
        out.push(t_max);
    }
    out
}

/// One row of a bias/variance or baseline-sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub baseline: BaselineMode,
    /// Constant baseline as a fraction of the average reward, when swept.
    pub b_ratio: Option<f64>,
    pub steps: u64,
    pub replicas: u64,
    pub mean_relative_error: f64,
    pub std_relative_error: f64,
}

const SWEEP_HEADER: [&str; 9] = [
    "algorithm",
    "gamma",
    "baseline",
    "b",
    "b_ratio",
    "steps",
    "replicas",
    "mean_relative_error",
    "std_relative_error",
];

pub fn write_sweep_csv<W: Write>(out: W, comment: &str, records: &[SweepRecord]) -> Result<()> {
    let mut w = writer(out, comment, &SWEEP_HEADER)?;
    for r in records {
        let (kind, b) = match r.baseline {
            BaselineMode::None => ("none", String::new()),
            BaselineMode::AdaptiveAverage => ("adaptive", String::new()),
            BaselineMode::Constant(b) => ("constant", fmt_f64(b)),
        };
        w.write_record([
            r.algorithm.tag().to_string(),
            fmt_f64(r.gamma),
            kind.to_string(),
            b,
            r.b_ratio.map(fmt_f64).unwrap_or_default(),
            r.steps.to_string(),
            r.replicas.to_string(),
            fmt_f64(r.mean_relative_error),
            fmt_f64(r.std_relative_error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: BufRead>(input: R) -> Result<Vec<SweepRecord>> {
    let (_, rows) = read_rows(input, &SWEEP_HEADER, false)?;
    rows.iter()
        .map(|row| {
            let baseline = match &row[2] {
                "none" => BaselineMode::None,
                "adaptive" => BaselineMode::AdaptiveAverage,
                "constant" => BaselineMode::Constant(parse_f64(&row[3])?),
                other => return Err(Error::Malformed(format!("unknown baseline kind {other:?}"))),
            };
            let b_ratio = if row[4].is_empty() { None } else { Some(parse_f64(&row[4])?) };
            Ok(SweepRecord {
                algorithm: row[0].parse()?,
                gamma: parse_f64(&row[1])?,
                baseline,
                b_ratio,
                steps: parse_u64(&row[5])?,
                replicas: parse_u64(&row[6])?,
                mean_relative_error: parse_f64(&row[7])?,
                std_relative_error: parse_f64(&row[8])?,
            })
        })
        .collect()
}

fn parse_u64(field: &str) -> Result<u64> {
    field
        .parse()
        .map_err(|_| Error::Malformed(format!("not a count: {field:?}")))
}

/// Runs the configured batch estimators side by side on one simulated
/// trajectory of `checkpoints.last()` steps, calling `visit(i, states)` when
/// the step count reaches `checkpoints[i]`.
fn run_estimators<E, V>(
    env: &mut E,
    policy: &SoftmaxPolicy<E::Features>,
    configs: &[EstimatorConfig],
    checkpoints: &[u64],
    rng: &mut ReplicaRng,
    mut visit: V,
) -> Result<()>
where
    E: Environment,
    V: FnMut(usize, &[EstimatorState]) -> Result<()>,
{
    let mut ws = PolicyWorkspace::new(policy);
    let mut states: Vec<EstimatorState> = configs.iter().map(|_| EstimatorState::new(policy.dim())).collect();
    let mut next = 0;
    let t_max = checkpoints.last().copied().unwrap_or(0);
    for t in 1..=t_max {
        let obs = env.observe();
        let action = ws.act(policy, &obs, rng)?;
        let reward = env.step(action, rng)?;
        for (cfg, state) in configs.iter().zip(states.iter_mut()) {
            state.update(cfg, reward, ws.score())?;
        }
        if t == checkpoints[next] {
            visit(next, &states)?;
            next += 1;
        }
    }
    Ok(())
}

fn check_checkpoints(checkpoints: &[u64]) -> Result<()> {
    if checkpoints.is_empty() || checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "checkpoints {checkpoints:?} must be positive and strictly increasing"
        )));
    }
    Ok(())
}

fn check_replicas(replicas: u64) -> Result<()> {
    if replicas < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replicas, got {replicas}")));
    }
    Ok(())
}

/// Starts a tabular environment in a state drawn from `start_dist`.
fn tabular_env(mdp: &Arc<TabularMdp>, start_dist: &[f64], rng: &mut ReplicaRng) -> Result<TabularEnv> {
    TabularEnv::new(Arc::clone(mdp), sample_categorical(start_dist, rng))
}

/// Final estimates `G_t` from `replicas` independent runs of one batch
/// estimator with fixed parameters `theta`. `make_env` builds each replica's
/// environment from that replica's generator.
pub fn estimate_gradients<E, M>(
    make_env: M,
    theta: &[f64],
    algorithm: Algorithm,
    gamma: f64,
    steps: u64,
    replicas: u64,
    base_seed: u64,
    jobs: usize,
) -> Result<Vec<Vec<f64>>>
where
    E: Environment,
    M: Fn(&mut ReplicaRng) -> Result<E> + Sync,
{
    algorithm.require_batch()?;
    check_checkpoints(&[steps])?;
    let config = [EstimatorConfig::new(gamma, algorithm.baseline())?];
    run_replicas(jobs, replicas, |k| {
        let mut rng = replica_rng(base_seed, k);
        let mut env = make_env(&mut rng)?;
        let policy = SoftmaxPolicy::new(env.feature_map(), theta.to_vec())?;
        let mut out = Vec::new();
        run_estimators(&mut env, &policy, &config, &[steps], &mut rng, |_, states| {
            out = states[0].estimate().to_vec();
            Ok(())
        })?;
        Ok(out)
    })
}

/// [`estimate_gradients`] on a tabular MDP, each run starting from the
/// stationary distribution.
pub fn gradient_estimates(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    algorithm: Algorithm,
    gamma: f64,
    steps: u64,
    replicas: u64,
    base_seed: u64,
    jobs: usize,
) -> Result<Vec<Vec<f64>>> {
    check_policy_matches(mdp, policy)?;
    let pi = stationary_distribution(mdp, policy)?;
    let mdp = Arc::new(mdp.clone());
    estimate_gradients(
        |rng| tabular_env(&mdp, &pi, rng),
        policy.theta(),
        algorithm,
        gamma,
        steps,
        replicas,
        base_seed,
        jobs,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceConfig {
    pub algorithms: Vec<Algorithm>,
    pub gammas: Vec<f64>,
    pub checkpoints: Vec<u64>,
    pub replicas: u64,
    pub base_seed: u64,
}

impl Default for BiasVarianceConfig {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Gpomdp, Algorithm::Garb],
            gammas: vec![0.4, 0.99],
            checkpoints: log_spaced_checkpoints(10_000),
            replicas: 300,
            base_seed: 0,
        }
    }
}

/// Mean and spread of the relative error of `G_t` against the exact gradient,
/// for every algorithm, discount and checkpoint. Rows are ordered by
/// algorithm, then discount, then checkpoint.
pub fn bias_variance_experiment(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    config: &BiasVarianceConfig,
    jobs: usize,
) -> Result<Vec<SweepRecord>> {
    check_policy_matches(mdp, policy)?;
    check_checkpoints(&config.checkpoints)?;
    check_replicas(config.replicas)?;
    let mut combos = Vec::new();
    for &alg in &config.algorithms {
        alg.require_batch()?;
        for &gamma in &config.gammas {
            combos.push((alg, EstimatorConfig::new(gamma, alg.baseline())?));
        }
    }
    let configs: Vec<EstimatorConfig> = combos.iter().map(|c| c.1).collect();
    let pi = stationary_distribution(mdp, policy)?;
    let grad = exact_gradient(mdp, policy, DEFAULT_FD_STEP)?;
    let mdp = Arc::new(mdp.clone());
    let n_checks = config.checkpoints.len();

    // errors[k][combo * n_checks + checkpoint]
    let errors = run_replicas(jobs, config.replicas, |k| {
        let mut rng = replica_rng(config.base_seed, k);
        let mut env = tabular_env(&mdp, &pi, &mut rng)?;
        let mut errs = vec![0.0; configs.len() * n_checks];
        run_estimators(&mut env, policy, &configs, &config.checkpoints, &mut rng, |i, states| {
            for (c, state) in states.iter().enumerate() {
                errs[c * n_checks + i] = relative_error(state.estimate(), &grad)?;
            }
            Ok(())
        })?;
        Ok(errs)
    })?;

    let mut records = Vec::with_capacity(errors[0].len());
    for (c, (alg, cfg)) in combos.iter().enumerate() {
        for (i, &steps) in config.checkpoints.iter().enumerate() {
            let column: Vec<f64> = errors.iter().map(|e| e[c * n_checks + i]).collect();
            let (mean, std) = summarize(&column);
            records.push(SweepRecord {
                algorithm: *alg,
                gamma: cfg.gamma,
                baseline: cfg.baseline,
                b_ratio: None,
                steps,
                replicas: config.replicas,
                mean_relative_error: mean,
                std_relative_error: std,
            });
        }
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
    /// Constant baselines as fractions of the average reward.
    pub b_ratios: Vec<f64>,
    pub steps: u64,
    pub replicas: u64,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            gammas: vec![0.4, 0.8, 0.95, 0.99],
            b_ratios: (0..=26).map(|i| 0.1 + 0.05 * i as f64).collect(),
            steps: 100,
            replicas: 300,
            base_seed: 0,
        }
    }
}

/// The grid point with the smallest spread of relative error at one discount.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMinimizer {
    pub gamma: f64,
    pub b_ratio: f64,
    pub std_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub average_reward: f64,
    pub records: Vec<SweepRecord>,
    pub minimizers: Vec<SweepMinimizer>,
}

/// GPOMDP with constant baselines `b = ratio * r_bar` over a grid of ratios.
/// Every replica draws one trajectory of `steps` steps from the stationary
/// distribution and evaluates all `(gamma, b)` pairs on it.
pub fn baseline_sweep(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    config: &SweepConfig,
    jobs: usize,
) -> Result<SweepOutcome> {
    check_policy_matches(mdp, policy)?;
    check_replicas(config.replicas)?;
    check_checkpoints(&[config.steps])?;
    if config.gammas.is_empty() || config.b_ratios.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one discount and one baseline".into()));
    }
    for &gamma in &config.gammas {
        check_gamma(gamma)?;
    }
    if config.b_ratios.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument("baseline ratios must be finite".into()));
    }
    let pi = stationary_distribution(mdp, policy)?;
    let r_bar: f64 = pi.iter().zip(mdp.reward()).map(|(p, r)| p * r).sum();
    let grad = exact_gradient(mdp, policy, DEFAULT_FD_STEP)?;
    let length = config.steps as usize;
    let n_b = config.b_ratios.len();

    let errors = run_replicas(jobs, config.replicas, |k| {
        let mut rng = replica_rng(config.base_seed, k);
        let start = sample_categorical(&pi, &mut rng);
        let trajectory = sample_trajectory(mdp, policy, start, length, &mut rng)?;
        let mut errs = Vec::with_capacity(config.gammas.len() * n_b);
        for &gamma in &config.gammas {
            for &ratio in &config.b_ratios {
                let g = constant_baseline_estimate(&trajectory, ratio * r_bar, gamma)?;
                errs.push(relative_error(&g, &grad)?);
            }
        }
        Ok(errs)
    })?;

    let mut records = Vec::with_capacity(config.gammas.len() * n_b);
    for (gi, &gamma) in config.gammas.iter().enumerate() {
        for (bi, &ratio) in config.b_ratios.iter().enumerate() {
            let column: Vec<f64> = errors.iter().map(|e| e[gi * n_b + bi]).collect();
            let (mean, std) = summarize(&column);
            records.push(SweepRecord {
                algorithm: Algorithm::Gpomdp,
                gamma,
                baseline: BaselineMode::Constant(ratio * r_bar),
                b_ratio: Some(ratio),
                steps: config.steps,
                replicas: config.replicas,
                mean_relative_error: mean,
                std_relative_error: std,
            });
        }
    }
    let minimizers = sweep_minimizers(&records);
    Ok(SweepOutcome {
        average_reward: r_bar,
        records,
        minimizers,
    })
}

/// Per discount (in order of first appearance), the swept record with the
/// smallest standard deviation. Ties go to the earlier row.
pub fn sweep_minimizers(records: &[SweepRecord]) -> Vec<SweepMinimizer> {
    let mut out: Vec<SweepMinimizer> = Vec::new();
    for r in records {
        let Some(b_ratio) = r.b_ratio else { continue };
        let candidate = SweepMinimizer {
            gamma: r.gamma,
            b_ratio,
            std_relative_error: r.std_relative_error,
        };
        match out.iter_mut().find(|m| m.gamma == r.gamma) {
            Some(m) if r.std_relative_error < m.std_relative_error => *m = candidate,
            Some(_) => {}
            None => out.push(candidate),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub average_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
    /// Step at which the parameters stopped being finite.
    pub diverged_at: Option<u64>,
}

impl TrainingCurve {
    pub fn final_reward(&self) -> Option<f64> {
        self.points.last().map(|p| p.average_reward)
    }
}

/// A training curve together with the parameters it ended with.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingRun {
    pub curve: TrainingCurve,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineTrainingConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub gamma: f64,
    pub steps: u64,
    pub seeds: u64,
    pub base_seed: u64,
    /// Initial parameters are uniform on `[-r, r]`.
    pub theta_init_range: f64,
    pub window: u64,
}

impl Default for OnlineTrainingConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Olgarb,
            alpha: 0.01,
            gamma: 0.99,
            steps: 2_000_000,
            seeds: 20,
            base_seed: 0,
            theta_init_range: 0.5,
            window: 10_000,
        }
    }
}

fn initial_policy<E: Environment>(env: &E, range: f64, rng: &mut ReplicaRng) -> Result<SoftmaxPolicy<E::Features>> {
    if !(range >= 0.0 && range.is_finite()) {
        return Err(Error::InvalidArgument(format!("initial parameter range {range} must be non-negative")));
    }
    let features = env.feature_map();
    let dim = crate::mdp::FeatureMap::dim(&features);
    let theta = (0..dim).map(|_| rng.random_range(-range..=range)).collect();
    SoftmaxPolicy::new(features, theta)
}

fn diverged(err: &Error) -> bool {
    matches!(err, Error::NonFinite(_))
}

/// OLPOMDP or OLGARB on a continuing environment, one independent run per
/// seed. The curve holds the average reward over each block of `window`
/// steps (and over the final partial block).
pub fn train_online<E, M>(make_env: M, config: &OnlineTrainingConfig, jobs: usize) -> Result<Vec<TrainingRun>>
where
    E: Environment,
    M: Fn(&mut ReplicaRng) -> Result<E> + Sync + Send,
{
    let alg = config.algorithm;
    alg.require_online()?;
    check_gamma(config.gamma)?;
    if !(config.alpha >= 0.0 && config.alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size {} must be non-negative", config.alpha)));
    }
    if config.steps == 0 || config.window == 0 {
        return Err(Error::InvalidArgument("steps and window must be positive".into()));
    }
    run_replicas(jobs, config.seeds, |seed| {
        let mut rng = replica_rng(config.base_seed, seed);
        let mut env = make_env(&mut rng)?;
        let mut policy = initial_policy(&env, config.theta_init_range, &mut rng)?;
        let mut ws = PolicyWorkspace::new(&policy);
        let mut trace = vec![0.0; policy.dim()];
        let mut baseline = OnlineBaseline::default();
        let mut points = Vec::with_capacity((config.steps / config.window + 1) as usize);
        let mut diverged_at = None;
        let (mut sum, mut count) = (0.0, 0u64);
        for t in 1..=config.steps {
            let outcome = (|| -> Result<()> {
                let obs = env.observe();
                let action = ws.act(&policy, &obs, &mut rng)?;
                let reward = env.step(action, &mut rng)?;
                sum += reward;
                count += 1;
                let theta = policy.theta_mut();
                match alg {
                    Algorithm::Olgarb => {
                        olgarb_step(theta, &mut trace, &mut baseline, reward, ws.score(), config.alpha, config.gamma)
                    }
                    _ => olpomdp_step(theta, &mut trace, reward, ws.score(), config.alpha, config.gamma),
                }
            })();
            match outcome {
                Err(e) if diverged(&e) => {
                    log::warn!("{alg} seed {seed} diverged at step {t}: {e}");
                    diverged_at = Some(t);
                    break;
                }
                Err(e) => return Err(e),
                Ok(()) => {}
            }
            if t % config.window == 0 || t == config.steps {
                points.push(CurvePoint {
                    step: t,
                    average_reward: sum / count as f64,
                });
                sum = 0.0;
                count = 0;
            }
        }
        Ok(TrainingRun {
            curve: TrainingCurve {
                algorithm: alg,
                seed,
                points,
                diverged_at,
            },
            theta: policy.theta().to_vec(),
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchTrainingConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub gamma: f64,
    pub steps_per_estimate: u64,
    pub iterations: u64,
    pub seeds: u64,
    pub base_seed: u64,
    pub theta_init_range: f64,
}

impl Default for BatchTrainingConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Garb,
            alpha: 0.5,
            gamma: 0.95,
            steps_per_estimate: 10_000,
            iterations: 50,
            seeds: 10,
            base_seed: 0,
            theta_init_range: 0.5,
        }
    }
}

/// Alternates a fresh GPOMDP or GARB estimate over `steps_per_estimate`
/// steps with `theta <- theta + alpha G / ||G||`. The environment keeps
/// running between estimates. Each curve point is the average reward seen
/// while forming one estimate.
pub fn train_batch_ascent<E, M>(make_env: M, config: &BatchTrainingConfig, jobs: usize) -> Result<Vec<TrainingRun>>
where
    E: Environment,
    M: Fn(&mut ReplicaRng) -> Result<E> + Sync + Send,
{
    let alg = config.algorithm;
    alg.require_batch()?;
    let est = EstimatorConfig::new(config.gamma, alg.baseline())?;
    if !(config.alpha >= 0.0 && config.alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size {} must be non-negative", config.alpha)));
    }
    if config.steps_per_estimate == 0 {
        return Err(Error::InvalidArgument("steps_per_estimate must be positive".into()));
    }
    run_replicas(jobs, config.seeds, |seed| {
        let mut rng = replica_rng(config.base_seed, seed);
        let mut env = make_env(&mut rng)?;
        let mut policy = initial_policy(&env, config.theta_init_range, &mut rng)?;
        let mut ws = PolicyWorkspace::new(&policy);
        let mut points = Vec::with_capacity(config.iterations as usize);
        let mut diverged_at = None;
        let mut total = 0u64;
        for it in 0..config.iterations {
            let mut state = EstimatorState::new(policy.dim());
            let mut sum = 0.0;
            let outcome = (|| -> Result<()> {
                for _ in 0..config.steps_per_estimate {
                    let obs = env.observe();
                    let action = ws.act(&policy, &obs, &mut rng)?;
                    let reward = env.step(action, &mut rng)?;
                    sum += reward;
                    state.update(&est, reward, ws.score())?;
                }
                Ok(())
            })();
            total += config.steps_per_estimate;
            match outcome {
                Err(e) if diverged(&e) => {
                    log::warn!("{alg} seed {seed} diverged in iteration {it}: {e}");
                    diverged_at = Some(total);
                    break;
                }
                Err(e) => return Err(e),
                Ok(()) => {}
            }
            points.push(CurvePoint {
                step: total,
                average_reward: sum / config.steps_per_estimate as f64,
            });
            let g = state.estimate();
            let size = norm(g);
            if !size.is_finite() {
                log::warn!("{alg} seed {seed}: non-finite gradient estimate in iteration {it}");
                diverged_at = Some(total);
                break;
            }
            if size == 0.0 {
                log::info!("{alg} seed {seed}: zero gradient estimate in iteration {it}, parameters unchanged");
                continue;
            }
            for (th, gj) in policy.theta_mut().iter_mut().zip(g) {
                *th += config.alpha * gj / size;
            }
        }
        Ok(TrainingRun {
            curve: TrainingCurve {
                algorithm: alg,
                seed,
                points,
                diverged_at,
            },
            theta: policy.theta().to_vec(),
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub step: u64,
    pub mean: f64,
    pub std: f64,
}

/// Pointwise mean and sample standard deviation across curves. Diverged
/// curves are skipped; the rest must share the same steps.
pub fn aggregate_stats(curves: &[TrainingCurve]) -> Result<Vec<BandPoint>> {
    let kept: Vec<&TrainingCurve> = curves.iter().filter(|c| c.diverged_at.is_none()).collect();
    if kept.len() < curves.len() {
        log::warn!("{} diverged curve(s) left out of the band", curves.len() - kept.len());
    }
    if kept.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 finished curves, got {}", kept.len())));
    }
    let steps: Vec<u64> = kept[0].points.iter().map(|p| p.step).collect();
    for c in &kept[1..] {
        if c.points.len() != steps.len() || c.points.iter().zip(&steps).any(|(p, s)| p.step != *s) {
            return Err(Error::Malformed(format!("curve for seed {} is not aligned with seed {}", c.seed, kept[0].seed)));
        }
    }
    Ok(steps
        .iter()
        .enumerate()
        .map(|(i, &step)| {
            let values: Vec<f64> = kept.iter().map(|c| c.points[i].average_reward).collect();
            let (mean, std) = summarize(&values);
            BandPoint { step, mean, std }
        })
        .collect())
}

const TRAINING_HEADER: [&str; 5] = ["algorithm", "seed", "step", "average_reward", "diverged"];

/// Writes curves one point per row. A diverged run ends with a flagged row
/// at the step where it diverged, with an empty reward.
pub fn write_training_csv<W: Write>(out: W, comment: &str, curves: &[TrainingCurve]) -> Result<()> {
    let mut w = writer(out, comment, &TRAINING_HEADER)?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.algorithm.tag().to_string(),
                c.seed.to_string(),
                p.step.to_string(),
                fmt_f64(p.average_reward),
                "0".into(),
            ])?;
        }
        if let Some(step) = c.diverged_at {
            w.write_record([c.algorithm.tag().to_string(), c.seed.to_string(), step.to_string(), String::new(), "1".into()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_training_csv<R: BufRead>(input: R) -> Result<Vec<TrainingCurve>> {
    let (_, rows) = read_rows(input, &TRAINING_HEADER, false)?;
    let mut curves: Vec<TrainingCurve> = Vec::new();
    for row in &rows {
        let algorithm: Algorithm = row[0].parse()?;
        let seed = parse_u64(&row[1])?;
        let step = parse_u64(&row[2])?;
        let same = matches!(curves.last(), Some(c) if c.algorithm == algorithm && c.seed == seed);
        if !same {
            curves.push(TrainingCurve {
                algorithm,
                seed,
                points: Vec::new(),
                diverged_at: None,
            });
        }
        let curve = curves.last_mut().expect("pushed above");
        if curve.diverged_at.is_some() {
            return Err(Error::Malformed(format!("rows after divergence for seed {seed}")));
        }
        match &row[4] {
            "1" => curve.diverged_at = Some(step),
            "0" => {
                if curve.points.last().is_some_and(|p| p.step >= step) {
                    return Err(Error::Malformed(format!("steps not increasing for seed {seed}")));
                }
                curve.points.push(CurvePoint {
                    step,
                    average_reward: parse_f64(&row[3])?,
                });
            }
            other => return Err(Error::Malformed(format!("bad diverged flag {other:?}"))),
        }
    }
    Ok(curves)
}
