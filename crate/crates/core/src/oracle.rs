//! Exact quantities for small tabular problems.
//!
//! Everything here is computed from the model rather than by simulation:
//! the stationary distribution of the policy-induced chain, the long-run
//! average reward, its gradient with respect to the policy parameters, and
//! the variance-minimizing constant baselines.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::check_gamma;
use crate::mdp::{
    check_policy_matches, sample_categorical, sample_trajectory, SoftmaxPolicy, TabularFeatures, TabularMdp,
    TrajectoryStep,
};
use crate::rng::replica_rng;

pub const DEFAULT_FD_STEP: f64 = 1e-6;
const STATIONARY_RESIDUAL: f64 = 1e-10;
const ENUMERATION_LIMIT: f64 = 1e7;

type TabularPolicy = SoftmaxPolicy<TabularFeatures>;

/// `P_theta[x][y] = sum_a mu(a | x) P[x][a][y]`.
pub fn policy_transition_matrix(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<DMatrix<f64>> {
    check_policy_matches(mdp, policy)?;
    let n = mdp.n_states();
    let mut p = DMatrix::zeros(n, n);
    for x in 0..n {
        let mu = policy.action_distribution(&x)?;
        for (a, m) in mu.iter().enumerate() {
            for (y, q) in mdp.transition_row(x, a).iter().enumerate() {
                p[(x, y)] += m * q;
            }
        }
    }
    Ok(p)
}

/// Stationary distribution of a row-stochastic matrix.
///
/// Solves `(P^T - I) pi = 0` with the normalization row `1^T pi = 1`
/// appended. Fails when the chain has more than one recurrent class.
pub fn stationary_from_matrix(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    if n == 0 || p.ncols() != n {
        return Err(Error::Stationary("transition matrix must be square and non-empty".into()));
    }
    let balance = p.transpose() - DMatrix::identity(n, n);
    let singular = balance.clone().svd(false, false).singular_values;
    let null_dim = singular.iter().filter(|&&s| s < 1e-9).count();
    if null_dim > 1 {
        return Err(Error::Stationary(format!(
            "chain has {null_dim} recurrent classes; a unique stationary distribution is assumed"
        )));
    }
    let mut aug = DMatrix::zeros(n + 1, n);
    aug.view_mut((0, 0), (n, n)).copy_from(&balance);
    aug.row_mut(n).fill(1.0);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let svd = aug.clone().svd(true, true);
    let mut pi = svd.solve(&rhs, 1e-14).map_err(|e| Error::Stationary(e.to_string()))?;
    // nearly reducible chains leave the SVD solve short of full accuracy;
    // iterative refinement recovers it
    for _ in 0..3 {
        let correction = svd
            .solve(&(&rhs - &aug * &pi), 1e-14)
            .map_err(|e| Error::Stationary(e.to_string()))?;
        pi += correction;
    }

    let mut pi: Vec<f64> = pi.iter().map(|&v| if v < 0.0 && v > -1e-12 { 0.0 } else { v }).collect();
    if pi.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Stationary("solve produced negative mass".into()));
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    let residual = stationary_residual(p, &pi);
    if residual > STATIONARY_RESIDUAL {
        return Err(Error::Stationary(format!("fixed-point residual {residual:e} too large")));
    }
    Ok(pi)
}

/// `max_y |(pi P)(y) - pi(y)|`.
pub fn stationary_residual(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = pi.len();
    (0..n)
        .map(|y| {
            let flowed: f64 = (0..n).map(|x| pi[x] * p[(x, y)]).sum();
            (flowed - pi[y]).abs()
        })
        .fold(0.0, f64::max)
}

/// Cross-check for [`stationary_from_matrix`]: iterate `pi <- pi P` from the
/// uniform distribution. Lazy steps `(I + P)/2` keep periodic chains convergent.
pub fn stationary_by_power_iteration(p: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = p.nrows();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..max_iter {
        let next: Vec<f64> = (0..n)
            .map(|y| 0.5 * pi[y] + 0.5 * (0..n).map(|x| pi[x] * p[(x, y)]).sum::<f64>())
            .collect();
        let delta = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if delta < tol {
            return Ok(pi);
        }
    }
    Err(Error::Stationary(format!("power iteration did not converge in {max_iter} steps")))
}

pub fn stationary_distribution(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    stationary_from_matrix(&policy_transition_matrix(mdp, policy)?)
}

/// `r_bar = sum_x pi(x) rho(x)`.
pub fn average_reward(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<f64> {
    let pi = stationary_distribution(mdp, policy)?;
    Ok(pi.iter().zip(mdp.reward()).map(|(p, r)| p * r).sum())
}

/// Gradient of the average reward by central differences with step `h`
/// in each parameter. Truncation error is `O(h^2)`.
pub fn exact_gradient(mdp: &TabularMdp, policy: &TabularPolicy, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step {h} must be positive")));
    }
    let theta = policy.theta().to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    let mut probe = theta.clone();
    for j in 0..theta.len() {
        probe[j] = theta[j] + h;
        let up = average_reward(mdp, &policy.with_theta(probe.clone())?)?;
        probe[j] = theta[j] - h;
        let down = average_reward(mdp, &policy.with_theta(probe.clone())?)?;
        probe[j] = theta[j];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub stationary: Vec<f64>,
    pub average_reward: f64,
    pub gradient: Vec<f64>,
}

impl OracleResult {
    pub fn compute(mdp: &TabularMdp, policy: &TabularPolicy, h: f64) -> Result<Self> {
        let stationary = stationary_distribution(mdp, policy)?;
        let average_reward = stationary.iter().zip(mdp.reward()).map(|(p, r)| p * r).sum();
        let gradient = exact_gradient(mdp, policy, h)?;
        Ok(Self {
            stationary,
            average_reward,
            gradient,
        })
    }

    /// `V = R - r_bar`.
    pub fn reward_deviation(&self, reward: f64) -> f64 {
        reward - self.average_reward
    }

    pub fn gradient_norm(&self) -> f64 {
        norm(&self.gradient)
    }
}

/// Variance-minimizing baseline for a two-action immediate-reward
/// problem: `b* = mu(a0) E[r | a1] + mu(a1) E[r | a0]`.
pub fn bandit_optimal_baseline(mu0: f64, r0: f64, r1: f64) -> Result<f64> {
    if !(mu0 > 0.0 && mu0 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mu0 = {mu0}: both actions need positive probability for the score to exist"
        )));
    }
    Ok(mu0 * r1 + (1.0 - mu0) * r0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// How expectations over trajectories are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpectationMethod {
    /// Marginalizes the chain with matrix powers; exact for any horizon.
    Exact,
    /// Sums over every trajectory with its probability. Finite horizons only,
    /// at most 10^7 trajectories.
    Enumerate,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalBaselineResult {
    /// Aggregate over parameters, weighting by `||zeta_s||^2`.
    pub b_star: Option<f64>,
    /// One value per parameter, weighting by `zeta_{s,j}^2`; `None` where the
    /// policy gives that component no variance.
    pub b_star_per_param: Vec<Option<f64>>,
    pub gamma: f64,
    pub horizon: Horizon,
}

/// Constant baseline minimizing `Var[Q_s]`, where
/// `Q_s = zeta_s sum_{i=s}^{t} (R_i - b) gamma^{i-s}`:
///
/// `b* = E[zeta_s^2 sum_i R_i gamma^{i-s}] / E[zeta_s^2 sum_i gamma^{i-s}]`.
///
/// The chain starts from its stationary distribution, so only the number of
/// remaining steps `t - s + 1` matters.
pub fn optimal_constant_baseline(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    gamma: f64,
    s: usize,
    horizon: Horizon,
    method: ExpectationMethod,
) -> Result<OptimalBaselineResult> {
    check_gamma(gamma)?;
    check_policy_matches(mdp, policy)?;
    if s == 0 {
        return Err(Error::InvalidArgument("step index s starts at 1".into()));
    }
    let remaining = match horizon {
        Horizon::Finite(t) if t < s => {
            return Err(Error::InvalidArgument(format!("step {s} is past the horizon {t}")))
        }
        Horizon::Finite(t) => Some(t - s + 1),
        Horizon::Infinite => None,
    };
    let d = policy.dim();
    // numerators and denominators: per component, then the aggregate in slot d
    let (num, den) = match (method, remaining) {
        (ExpectationMethod::Exact, _) => baseline_moments_exact(mdp, policy, gamma, remaining)?,
        (ExpectationMethod::Enumerate, Some(len)) => baseline_moments_enumerated(mdp, policy, gamma, s, s + len - 1)?,
        (ExpectationMethod::MonteCarlo { samples, seed }, Some(len)) => {
            baseline_moments_sampled(mdp, policy, gamma, s, s + len - 1, samples, seed)?
        }
        (_, None) => {
            return Err(Error::InvalidArgument(
                "an infinite horizon needs the exact method".into(),
            ))
        }
    };
    let ratio = |n: f64, q: f64| if q > 1e-300 { Some(n / q) } else { None };
    Ok(OptimalBaselineResult {
        b_star: ratio(num[d], den[d]),
        b_star_per_param: (0..d).map(|j| ratio(num[j], den[j])).collect(),
        gamma,
        horizon,
    })
}

fn baseline_moments_exact(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    gamma: f64,
    remaining: Option<usize>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = mdp.n_states();
    let d = policy.dim();
    let p = policy_transition_matrix(mdp, policy)?;
    let pi = stationary_from_matrix(&p)?;
    let rho = DVector::from_column_slice(mdp.reward());
    // w(y) = E[sum_k gamma^k R_{s+k} | X_{s+1} = y] and discount mass sum_k gamma^k
    let (w, mass) = match remaining {
        Some(len) => {
            let mut w = DVector::zeros(n);
            let mut term = rho.clone();
            let mut mass = 0.0;
            let mut g = 1.0;
            for _ in 0..len {
                w += g * &term;
                mass += g;
                term = &p * term;
                g *= gamma;
            }
            (w, mass)
        }
        None => {
            let a = DMatrix::identity(n, n) - gamma * &p;
            let w = a
                .lu()
                .solve(&rho)
                .ok_or_else(|| Error::Stationary("I - gamma P is singular".into()))?;
            (w, 1.0 / (1.0 - gamma))
        }
    };
    let mut num = vec![0.0; d + 1];
    let mut den = vec![0.0; d + 1];
    for (x, px) in pi.iter().enumerate() {
        let mu = policy.action_distribution(&x)?;
        for (a, ma) in mu.iter().enumerate() {
            if *ma == 0.0 {
                continue;
            }
            let zeta = policy.score(&x, a)?;
            let future: f64 = mdp.transition_row(x, a).iter().zip(w.iter()).map(|(q, wy)| q * wy).sum();
            let weight = px * ma;
            let mut sq_norm = 0.0;
            for (j, z) in zeta.iter().enumerate() {
                let z2 = z * z;
                sq_norm += z2;
                num[j] += weight * z2 * future;
                den[j] += weight * z2 * mass;
            }
            num[d] += weight * sq_norm * future;
            den[d] += weight * sq_norm * mass;
        }
    }
    Ok((num, den))
}

fn accumulate_moments(
    traj: &[TrajectoryStep<usize>],
    gamma: f64,
    s: usize,
    weight: f64,
    num: &mut [f64],
    den: &mut [f64],
) {
    let d = num.len() - 1;
    let zeta = &traj[s - 1].score;
    let mut discounted = 0.0;
    let mut mass = 0.0;
    let mut g = 1.0;
    for step in &traj[s - 1..] {
        discounted += g * step.reward;
        mass += g;
        g *= gamma;
    }
    let mut sq_norm = 0.0;
    for (j, z) in zeta.iter().enumerate() {
        let z2 = z * z;
        sq_norm += z2;
        num[j] += weight * z2 * discounted;
        den[j] += weight * z2 * mass;
    }
    num[d] += weight * sq_norm * discounted;
    den[d] += weight * sq_norm * mass;
}

fn baseline_moments_enumerated(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    gamma: f64,
    s: usize,
    t: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = policy.dim();
    let pi = stationary_distribution(mdp, policy)?;
    let mut num = vec![0.0; d + 1];
    let mut den = vec![0.0; d + 1];
    enumerate_trajectories(mdp, policy, &pi, t, |prob, traj| {
        accumulate_moments(traj, gamma, s, prob, &mut num, &mut den);
    })?;
    Ok((num, den))
}

fn baseline_moments_sampled(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    gamma: f64,
    s: usize,
    t: usize,
    samples: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one sample".into()));
    }
    let d = policy.dim();
    let pi = stationary_distribution(mdp, policy)?;
    let mut num = vec![0.0; d + 1];
    let mut den = vec![0.0; d + 1];
    let weight = 1.0 / samples as f64;
    for k in 0..samples {
        let mut rng = replica_rng(seed, k as u64);
        let start = sample_categorical(&pi, &mut rng);
        let traj = sample_trajectory(mdp, policy, start, t, &mut rng)?;
        accumulate_moments(&traj, gamma, s, weight, &mut num, &mut den);
    }
    Ok((num, den))
}

/// Calls `visit(probability, trajectory)` for every length-`horizon`
/// trajectory with positive probability, starting from `initial`.
///
/// The number of candidate trajectories, `n_states * (n_actions * n_states)^horizon`,
/// is capped at 10^7.
pub fn enumerate_trajectories(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    initial: &[f64],
    horizon: usize,
    mut visit: impl FnMut(f64, &[TrajectoryStep<usize>]),
) -> Result<()> {
    check_policy_matches(mdp, policy)?;
    if initial.len() != mdp.n_states() {
        return Err(Error::DimensionMismatch {
            expected: mdp.n_states(),
            got: initial.len(),
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let branching = (mdp.n_actions() * mdp.n_states()) as f64;
    let count = mdp.n_states() as f64 * branching.powi(horizon as i32);
    if count > ENUMERATION_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "{count:e} trajectories exceeds the enumeration limit"
        )));
    }
    let n = mdp.n_states();
    let mut dists = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for x in 0..n {
        let mu = policy.action_distribution(&x)?;
        let per_action = (0..mu.len())
            .map(|a| if mu[a] > 0.0 { policy.score(&x, a).map(Some) } else { Ok(None) })
            .collect::<Result<Vec<_>>>()?;
        dists.push(mu);
        scores.push(per_action);
    }

    struct Walk<'a, F> {
        mdp: &'a TabularMdp,
        dists: &'a [Vec<f64>],
        scores: &'a [Vec<Option<Vec<f64>>>],
        horizon: usize,
        path: Vec<TrajectoryStep<usize>>,
        visit: F,
    }

    impl<F: FnMut(f64, &[TrajectoryStep<usize>])> Walk<'_, F> {
        fn extend(&mut self, state: usize, prob: f64) {
            if self.path.len() == self.horizon {
                (self.visit)(prob, &self.path);
                return;
            }
            for (a, &ma) in self.dists[state].iter().enumerate() {
                if ma == 0.0 {
                    continue;
                }
                for (y, &q) in self.mdp.transition_row(state, a).iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    self.path.push(TrajectoryStep {
                        observation: state,
                        action: a,
                        reward: self.mdp.reward()[y],
                        score: self.scores[state][a].clone().unwrap_or_default(),
                    });
                    self.extend(y, prob * ma * q);
                    self.path.pop();
                }
            }
        }
    }

    let mut walk = Walk {
        mdp,
        dists: &dists,
        scores: &scores,
        horizon,
        path: Vec::with_capacity(horizon),
        visit: &mut visit,
    };
    for (x, &p0) in initial.iter().enumerate() {
        if p0 > 0.0 {
            walk.extend(x, p0);
        }
    }
    Ok(())
}

/// `Q_s = zeta_s sum_{i=s}^{t} (R_i - b) gamma^{i-s}`, one term of `t G_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct QsSample {
    pub s: usize,
    pub value: Vec<f64>,
}

/// Every `Q_s` for a trajectory of length `t`; they sum to `t * G_t`.
pub fn q_values<O>(trajectory: &[TrajectoryStep<O>], b: f64, gamma: f64) -> Vec<QsSample> {
    let t = trajectory.len();
    let mut tail = 0.0;
    let mut out: Vec<QsSample> = Vec::with_capacity(t);
    for i in (0..t).rev() {
        tail = (trajectory[i].reward - b) + gamma * tail;
        out.push(QsSample {
            s: i + 1,
            value: trajectory[i].score.iter().map(|z| z * tail).collect(),
        });
    }
    out.reverse();
    out
}

/// `||estimate - truth|| / ||truth||`.
pub fn relative_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    let scale = norm(truth);
    if scale == 0.0 {
        return Err(Error::ZeroVector("true gradient"));
    }
    let diff: f64 = estimate.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum();
    Ok(diff.sqrt() / scale)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleSettings {
    pub theta: Vec<f64>,
    pub fd_step: f64,
    pub gamma: f64,
    pub horizon: Horizon,
}

/// JSON document produced by the `oracle` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleReport {
    pub stationary: Vec<f64>,
    pub average_reward: f64,
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
    pub b_star: Option<f64>,
    pub b_star_per_param: Vec<Option<f64>>,
    pub settings: OracleSettings,
}

impl OracleReport {
    pub fn compute(
        mdp: &TabularMdp,
        policy: &TabularPolicy,
        gamma: f64,
        horizon: Horizon,
        fd_step: f64,
    ) -> Result<Self> {
        let oracle = OracleResult::compute(mdp, policy, fd_step)?;
        let baseline = optimal_constant_baseline(mdp, policy, gamma, 1, horizon, ExpectationMethod::Exact)?;
        Ok(Self {
            gradient_norm: oracle.gradient_norm(),
            stationary: oracle.stationary,
            average_reward: oracle.average_reward,
            gradient: oracle.gradient,
            b_star: baseline.b_star,
            b_star_per_param: baseline.b_star_per_param,
            settings: OracleSettings {
                theta: policy.theta().to_vec(),
                fd_step,
                gamma,
                horizon,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chain(rows: Vec<Vec<f64>>) -> DMatrix<f64> {
        let n = rows.len();
        DMatrix::from_fn(n, n, |i, j| rows[i][j])
    }

    #[test]
    fn rank_one_chain() {
        let p = chain(vec![vec![0.2, 0.3, 0.5]; 3]);
        let pi = stationary_from_matrix(&p).unwrap();
        for (a, b) in pi.iter().zip([0.2, 0.3, 0.5]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_state_balance() {
        // pi_0 * 0.1 = pi_1 * 0.5
        let p = chain(vec![vec![0.9, 0.1], vec![0.5, 0.5]]);
        let pi = stationary_from_matrix(&p).unwrap();
        assert_abs_diff_eq!(pi[0], 5.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn doubly_stochastic_is_uniform() {
        let p = chain(vec![vec![0.1, 0.6, 0.3], vec![0.5, 0.2, 0.3], vec![0.4, 0.2, 0.4]]);
        let pi = stationary_from_matrix(&p).unwrap();
        for v in pi {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn periodic_chain_still_has_unique_distribution() {
        let p = chain(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let pi = stationary_from_matrix(&p).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-12);
        let lazy = stationary_by_power_iteration(&p, 1e-14, 10_000).unwrap();
        assert_abs_diff_eq!(lazy[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let p = chain(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5]]);
        let err = stationary_from_matrix(&p).unwrap_err();
        assert!(err.to_string().contains("recurrent classes"), "{err}");
    }

    #[test]
    fn bandit_baseline_cases() {
        assert_eq!(bandit_optimal_baseline(0.5, 0.0, 1.0).unwrap(), 0.5);
        assert_abs_diff_eq!(bandit_optimal_baseline(0.9, 0.0, 1.0).unwrap(), 0.9, epsilon = 1e-15);
        assert!(bandit_optimal_baseline(0.0, 0.0, 1.0).is_err());
        assert!(bandit_optimal_baseline(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn relative_error_cases() {
        let truth = [3.0, -4.0];
        assert_eq!(relative_error(&truth, &truth).unwrap(), 0.0);
        assert_eq!(relative_error(&[6.0, -8.0], &truth).unwrap(), 1.0);
        assert_eq!(relative_error(&[0.0, 0.0], &truth).unwrap(), 1.0);
        assert!(matches!(relative_error(&[1.0, 1.0], &[0.0, 0.0]), Err(Error::ZeroVector(_))));
        assert!(relative_error(&[1.0], &truth).is_err());
    }

    #[test]
    fn q_values_sum_to_scaled_estimate() {
        let traj: Vec<TrajectoryStep<usize>> = (0..30)
            .map(|i| TrajectoryStep {
                observation: 0,
                action: 0,
                reward: ((i * 5) % 7) as f64 * 0.3,
                score: vec![(i as f64).sin(), (i as f64 * 0.4).cos()],
            })
            .collect();
        let b = 0.6;
        let gamma = 0.85;
        let q = q_values(&traj, b, gamma);
        let g = crate::estimators::constant_baseline_estimate(&traj, b, gamma).unwrap();
        for j in 0..2 {
            let total: f64 = q.iter().map(|qs| qs.value[j]).sum();
            assert_abs_diff_eq!(total, 30.0 * g[j], epsilon = 1e-10);
        }
        assert_eq!(q[0].s, 1);
        assert_eq!(q[29].s, 30);
    }

    #[test]
    fn enumeration_limit_is_enforced() {
        let mdp = TabularMdp::new(vec![vec![vec![0.5, 0.5]; 2]; 2], vec![0.0, 1.0]).unwrap();
        let policy = mdp.tabular_policy(vec![0.0; 4]).unwrap();
        let r = enumerate_trajectories(&mdp, &policy, &[0.5, 0.5], 20, |_, _| {});
        assert!(r.is_err());
    }
}
