//! Finite MDPs, softmax policies over linear features, and trajectory sampling.
//!
//! Rewards are attached to the successor state: taking action `A_t` in `X_t`
//! moves the chain to `X_{t+1}` and yields `R_t = reward[X_{t+1}]`.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// A finite state/action model with transition tensor `P[x][a][y]` and
/// per-state reward `rho[y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTabularMdp")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<f64>,
}

impl TryFrom<RawTabularMdp> for TabularMdp {
    type Error = Error;

    fn try_from(raw: RawTabularMdp) -> Result<Self> {
        let mdp = TabularMdp::new(raw.transition, raw.reward)?;
        if mdp.n_states != raw.n_states || mdp.n_actions != raw.n_actions {
            return Err(Error::InvalidModel(format!(
                "declared shape {}x{} does not match transition tensor {}x{}",
                raw.n_states, raw.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(mdp)
    }
}

impl TabularMdp {
    /// Builds a model, checking that every `P[x][a][.]` is a probability
    /// distribution and that rewards are finite.
    pub fn new(transition: Vec<Vec<Vec<f64>>>, reward: Vec<f64>) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(Error::InvalidModel("no states".into()));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(Error::InvalidModel("no actions".into()));
        }
        if reward.len() != n_states {
            return Err(Error::InvalidModel(format!(
                "reward has length {}, expected {n_states}",
                reward.len()
            )));
        }
        if let Some(i) = reward.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidModel(format!("reward[{i}] is not finite")));
        }
        for (x, rows) in transition.iter().enumerate() {
            if rows.len() != n_actions {
                return Err(Error::InvalidModel(format!(
                    "state {x} has {} actions, expected {n_actions}",
                    rows.len()
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::InvalidModel(format!(
                        "P[{x}][{a}] has length {}, expected {n_states}",
                        row.len()
                    )));
                }
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidModel(format!(
                        "P[{x}][{a}] has an entry outside [0, 1]"
                    )));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::InvalidModel(format!(
                        "P[{x}][{a}] sums to {total}, not 1"
                    )));
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Successor distribution `P[x][a][.]`.
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        &self.transition[state][action]
    }

    pub fn transition(&self) -> &[Vec<Vec<f64>>] {
        &self.transition
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Softmax policy with one-hot `(state, action)` features.
    pub fn tabular_policy(&self, theta: Vec<f64>) -> Result<SoftmaxPolicy<TabularFeatures>> {
        SoftmaxPolicy::new(TabularFeatures::new(self.n_states, self.n_actions), theta)
    }

    pub(crate) fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.n_states {
            return Err(Error::InvalidArgument(format!(
                "state {state} out of range for {} states",
                self.n_states
            )));
        }
        Ok(())
    }
}

/// Linear feature map `phi(x, a)` used by [`SoftmaxPolicy`].
pub trait FeatureMap {
    /// What the agent observes. The shipped environments are fully observed,
    /// so this is the state itself or a vector computed from it.
    type Obs;

    fn n_actions(&self) -> usize;

    /// Length of `phi(x, a)`, which is also the length of `theta`.
    fn dim(&self) -> usize;

    /// Writes `phi(obs, action)` into `out`, which has length `dim()`.
    fn write_features(&self, obs: &Self::Obs, action: usize, out: &mut [f64]);
}

/// One-hot features indexed by `(state, action)`: `phi(x, a) = e_{x * n_actions + a}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TabularFeatures {
    n_states: usize,
    n_actions: usize,
}

impl TabularFeatures {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn index(&self, state: usize, action: usize) -> usize {
        state * self.n_actions + action
    }
}

impl FeatureMap for TabularFeatures {
    type Obs = usize;

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    fn write_features(&self, obs: &usize, action: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[self.index(*obs, action)] = 1.0;
    }
}

/// Per-action copies of an observation vector: `phi(x, a)` places `x` in
/// block `a` and zeros elsewhere, so each action has its own weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActionBlockFeatures<const N: usize> {
    n_actions: usize,
}

impl<const N: usize> ActionBlockFeatures<N> {
    pub fn new(n_actions: usize) -> Self {
        Self { n_actions }
    }
}

impl<const N: usize> FeatureMap for ActionBlockFeatures<N> {
    type Obs = [f64; N];

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn dim(&self) -> usize {
        N * self.n_actions
    }

    fn write_features(&self, obs: &[f64; N], action: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[action * N..(action + 1) * N].copy_from_slice(obs);
    }
}

/// Observation scaled by a per-action factor: `phi(x, a) = c_a x`. All
/// actions share one weight vector of length `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledFeatures<const N: usize> {
    scales: Vec<f64>,
}

impl<const N: usize> ScaledFeatures<N> {
    pub fn new(scales: Vec<f64>) -> Self {
        Self { scales }
    }
}

impl<const N: usize> FeatureMap for ScaledFeatures<N> {
    type Obs = [f64; N];

    fn n_actions(&self) -> usize {
        self.scales.len()
    }

    fn dim(&self) -> usize {
        N
    }

    fn write_features(&self, obs: &[f64; N], action: usize, out: &mut [f64]) {
        let c = self.scales[action];
        for (o, x) in out.iter_mut().zip(obs) {
            *o = c * x;
        }
    }
}

/// `mu(a | x, theta) = exp(theta . phi(x, a)) / sum_b exp(theta . phi(x, b))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxPolicy<F> {
    theta: Vec<f64>,
    features: F,
}

impl<F: FeatureMap> SoftmaxPolicy<F> {
    pub fn new(features: F, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != features.dim() {
            return Err(Error::DimensionMismatch {
                expected: features.dim(),
                got: theta.len(),
            });
        }
        Ok(Self { theta, features })
    }

    pub fn zeros(features: F) -> Self {
        let theta = vec![0.0; features.dim()];
        Self { theta, features }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.len(),
                got: theta.len(),
            });
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    pub fn features(&self) -> &F {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn n_actions(&self) -> usize {
        self.features.n_actions()
    }

    /// Copy of this policy at another parameter vector.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self>
    where
        F: Clone,
    {
        Self::new(self.features.clone(), theta)
    }

    pub fn action_distribution(&self, obs: &F::Obs) -> Result<Vec<f64>> {
        let mut ws = PolicyWorkspace::new(self);
        ws.evaluate(self, obs)?;
        Ok(ws.probs)
    }

    /// `grad_theta log mu(action | obs)`, which for a softmax is
    /// `phi(obs, action) - sum_b mu(b | obs) phi(obs, b)`.
    pub fn score(&self, obs: &F::Obs, action: usize) -> Result<Vec<f64>> {
        let mut ws = PolicyWorkspace::new(self);
        ws.evaluate(self, obs)?;
        ws.compute_score(self, obs, action)?;
        Ok(ws.score)
    }

    pub fn log_prob(&self, obs: &F::Obs, action: usize) -> Result<f64> {
        let probs = self.action_distribution(obs)?;
        Ok(probs[action].ln())
    }
}

/// Reusable buffers for evaluating a policy on the hot path without
/// allocating per step.
#[derive(Clone, Debug)]
pub struct PolicyWorkspace {
    probs: Vec<f64>,
    score: Vec<f64>,
    feat: Vec<f64>,
    mean_feat: Vec<f64>,
}

impl PolicyWorkspace {
    pub fn new<F: FeatureMap>(policy: &SoftmaxPolicy<F>) -> Self {
        let d = policy.dim();
        Self {
            probs: vec![0.0; policy.n_actions()],
            score: vec![0.0; d],
            feat: vec![0.0; d],
            mean_feat: vec![0.0; d],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn score(&self) -> &[f64] {
        &self.score
    }

    /// Fills `probs()` with `mu(. | obs)`. Logits are shifted by their
    /// maximum before exponentiation.
    pub fn evaluate<F: FeatureMap>(&mut self, policy: &SoftmaxPolicy<F>, obs: &F::Obs) -> Result<()> {
        let n = policy.n_actions();
        let mut max_logit = f64::NEG_INFINITY;
        for a in 0..n {
            policy.features.write_features(obs, a, &mut self.feat);
            let logit: f64 = dot(&policy.theta, &self.feat);
            if !logit.is_finite() {
                return Err(Error::NonFinite("policy logits"));
            }
            self.probs[a] = logit;
            max_logit = max_logit.max(logit);
        }
        let mut total = 0.0;
        for p in self.probs.iter_mut() {
            *p = (*p - max_logit).exp();
            total += *p;
        }
        for p in self.probs.iter_mut() {
            *p /= total;
        }
        Ok(())
    }

    /// Fills `score()` for `action`; `evaluate` must have been called for
    /// the same observation.
    pub fn compute_score<F: FeatureMap>(
        &mut self,
        policy: &SoftmaxPolicy<F>,
        obs: &F::Obs,
        action: usize,
    ) -> Result<()> {
        if action >= self.probs.len() {
            return Err(Error::InvalidArgument(format!("action {action} out of range")));
        }
        if self.probs[action] <= 0.0 {
            return Err(Error::ZeroProbability { action });
        }
        self.mean_feat.fill(0.0);
        for b in 0..self.probs.len() {
            policy.features.write_features(obs, b, &mut self.feat);
            let p = self.probs[b];
            for (m, f) in self.mean_feat.iter_mut().zip(&self.feat) {
                *m += p * f;
            }
        }
        policy.features.write_features(obs, action, &mut self.feat);
        for ((s, f), m) in self.score.iter_mut().zip(&self.feat).zip(&self.mean_feat) {
            *s = f - m;
        }
        Ok(())
    }

    /// Evaluates the policy, draws an action and computes its score.
    pub fn act<F: FeatureMap, R: Rng + ?Sized>(
        &mut self,
        policy: &SoftmaxPolicy<F>,
        obs: &F::Obs,
        rng: &mut R,
    ) -> Result<usize> {
        self.evaluate(policy, obs)?;
        let action = sample_categorical(&self.probs, rng);
        self.compute_score(policy, obs, action)?;
        Ok(action)
    }
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One transition `X_t, A_t, R_t` together with the score `zeta_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep<O> {
    pub observation: O,
    pub action: usize,
    pub reward: f64,
    pub score: Vec<f64>,
}

/// Simulates `length` steps of `mdp` under `policy` from `start`.
pub fn sample_trajectory<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy<TabularFeatures>,
    start: usize,
    length: usize,
    rng: &mut R,
) -> Result<Vec<TrajectoryStep<usize>>> {
    if length == 0 {
        return Err(Error::InvalidArgument("trajectory length must be at least 1".into()));
    }
    mdp.check_state(start)?;
    check_policy_matches(mdp, policy)?;
    let mut ws = PolicyWorkspace::new(policy);
    let mut state = start;
    let mut steps = Vec::with_capacity(length);
    for _ in 0..length {
        let action = ws.act(policy, &state, rng)?;
        let next = sample_categorical(mdp.transition_row(state, action), rng);
        steps.push(TrajectoryStep {
            observation: state,
            action,
            reward: mdp.reward()[next],
            score: ws.score().to_vec(),
        });
        state = next;
    }
    Ok(steps)
}

pub(crate) fn check_policy_matches(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy<TabularFeatures>,
) -> Result<()> {
    let f = policy.features();
    if f.n_states() != mdp.n_states() || f.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidArgument(format!(
            "policy is for {}x{} but the model is {}x{}",
            f.n_states(),
            f.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use approx::assert_abs_diff_eq;

    fn two_state() -> TabularMdp {
        TabularMdp::new(
            vec![
                vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                vec![vec![0.5, 0.5], vec![0.3, 0.7]],
            ],
            vec![0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn equal_logits_give_uniform_distribution() {
        let policy = SoftmaxPolicy::zeros(TabularFeatures::new(1, 2));
        let probs = policy.action_distribution(&0).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn log_three_logit_gives_three_quarters() {
        let policy = SoftmaxPolicy::new(TabularFeatures::new(1, 2), vec![3f64.ln(), 0.0]).unwrap();
        let probs = policy.action_distribution(&0).unwrap();
        assert_abs_diff_eq!(probs[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(probs[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn score_at_uniform_point() {
        let policy = SoftmaxPolicy::zeros(TabularFeatures::new(1, 2));
        assert_eq!(policy.score(&0, 0).unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let policy = SoftmaxPolicy::new(TabularFeatures::new(1, 3), vec![1000.0, 999.0, -1000.0]).unwrap();
        let probs = policy.action_distribution(&0).unwrap();
        assert!(probs.iter().all(|p| p.is_finite()));
        assert_abs_diff_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(probs[0] / probs[1], 1f64.exp(), epsilon = 1e-9);
    }

    #[test]
    fn infinite_logits_are_rejected() {
        let policy = SoftmaxPolicy::new(TabularFeatures::new(1, 2), vec![f64::INFINITY, 0.0]).unwrap();
        assert!(matches!(policy.action_distribution(&0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_probability_action_has_no_score() {
        // exp(-800) underflows to zero after max-subtraction
        let policy = SoftmaxPolicy::new(TabularFeatures::new(1, 2), vec![0.0, -800.0]).unwrap();
        assert!(matches!(policy.score(&0, 1), Err(Error::ZeroProbability { action: 1 })));
    }

    #[test]
    fn scaled_features_share_weights() {
        let f = ScaledFeatures::<2>::new(vec![-1.0, 0.0, 2.0]);
        let mut out = [9.0; 2];
        f.write_features(&[0.5, 3.0], 2, &mut out);
        assert_eq!(out, [1.0, 6.0]);
        f.write_features(&[0.5, 3.0], 1, &mut out);
        assert_eq!(out, [0.0, 0.0]);
        assert_eq!((f.dim(), f.n_actions()), (2, 3));
    }

    #[test]
    fn action_block_features_place_observation() {
        let f = ActionBlockFeatures::<2>::new(3);
        let mut out = vec![9.0; 6];
        f.write_features(&[1.5, -2.0], 1, &mut out);
        assert_eq!(out, vec![0.0, 0.0, 1.5, -2.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_rows() {
        let err = TabularMdp::new(vec![vec![vec![0.5, 0.6]], vec![vec![1.0, 0.0]]], vec![0.0, 0.0]);
        assert!(matches!(err, Err(Error::InvalidModel(_))));
        let err = TabularMdp::new(vec![vec![vec![1.0]]], vec![f64::NAN]);
        assert!(matches!(err, Err(Error::InvalidModel(_))));
        let err = TabularMdp::new(vec![vec![vec![1.2, -0.2]], vec![vec![1.0, 0.0]]], vec![0.0, 0.0]);
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn json_round_trip_validates() {
        let mdp = two_state();
        let text = mdp.to_json().unwrap();
        assert_eq!(TabularMdp::from_json(&text).unwrap(), mdp);

        let bad = r#"{"n_states":1,"n_actions":1,"transition":[[[0.7]]],"reward":[0.0]}"#;
        assert!(TabularMdp::from_json(bad).is_err());
        let wrong_shape = r#"{"n_states":2,"n_actions":1,"transition":[[[1.0]]],"reward":[0.0]}"#;
        assert!(TabularMdp::from_json(wrong_shape).is_err());
    }

    #[test]
    fn deterministic_mdp_yields_unique_trajectory() {
        // 0 -> 1 -> 2 -> 0 regardless of action
        let cycle = |y: usize| {
            let mut row = vec![0.0; 3];
            row[y] = 1.0;
            vec![row.clone(), row]
        };
        let mdp = TabularMdp::new(vec![cycle(1), cycle(2), cycle(0)], vec![1.0, 2.0, 3.0]).unwrap();
        let policy = mdp.tabular_policy(vec![0.0; 6]).unwrap();
        for seed in 0..5 {
            let traj = sample_trajectory(&mdp, &policy, 0, 6, &mut replica_rng(seed, 0)).unwrap();
            let states: Vec<usize> = traj.iter().map(|s| s.observation).collect();
            let rewards: Vec<f64> = traj.iter().map(|s| s.reward).collect();
            assert_eq!(states, vec![0, 1, 2, 0, 1, 2]);
            assert_eq!(rewards, vec![2.0, 3.0, 1.0, 2.0, 3.0, 1.0]);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let mdp = two_state();
        let policy = mdp.tabular_policy(vec![0.3, -0.2, 0.1, 0.4]).unwrap();
        let a = sample_trajectory(&mdp, &policy, 0, 200, &mut replica_rng(11, 2)).unwrap();
        let b = sample_trajectory(&mdp, &policy, 0, 200, &mut replica_rng(11, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trajectory_rejects_bad_inputs() {
        let mdp = two_state();
        let policy = mdp.tabular_policy(vec![0.0; 4]).unwrap();
        let mut rng = replica_rng(0, 0);
        assert!(sample_trajectory(&mdp, &policy, 0, 0, &mut rng).is_err());
        assert!(sample_trajectory(&mdp, &policy, 2, 5, &mut rng).is_err());
        let wrong = SoftmaxPolicy::zeros(TabularFeatures::new(3, 2));
        assert!(sample_trajectory(&mdp, &wrong, 0, 5, &mut rng).is_err());
    }
}
