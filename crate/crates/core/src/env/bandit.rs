//! Two-armed bandit: a single observation, two actions, and a reward drawn
//! from the chosen arm. Every episode is one step, so estimators run it with
//! `gamma = 0` and `t = 1`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Environment;
use crate::error::{Error, Result};
use crate::mdp::{SoftmaxPolicy, TabularFeatures};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardDist {
    Constant { value: f64 },
    /// `1` with probability `p`, otherwise `0`.
    Bernoulli { p: f64 },
    Normal { mean: f64, std: f64 },
}

impl RewardDist {
    pub fn mean(&self) -> f64 {
        match *self {
            RewardDist::Constant { value } => value,
            RewardDist::Bernoulli { p } => p,
            RewardDist::Normal { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            RewardDist::Constant { .. } => 0.0,
            RewardDist::Bernoulli { p } => p * (1.0 - p),
            RewardDist::Normal { std, .. } => std * std,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardDist::Constant { value } => value,
            RewardDist::Bernoulli { p } => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            RewardDist::Normal { mean, std } => Normal::new(mean, std).expect("validated").sample(rng),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RewardDist::Constant { value } => value.is_finite(),
            RewardDist::Bernoulli { p } => (0.0..=1.0).contains(&p),
            RewardDist::Normal { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad reward distribution {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bandit {
    arms: [RewardDist; 2],
}

impl Bandit {
    pub fn new(r0: RewardDist, r1: RewardDist) -> Result<Self> {
        r0.validate()?;
        r1.validate()?;
        Ok(Self { arms: [r0, r1] })
    }

    pub fn arms(&self) -> &[RewardDist; 2] {
        &self.arms
    }

    /// Policy choosing arm 0 with probability `mu0`.
    pub fn policy(mu0: f64) -> Result<SoftmaxPolicy<TabularFeatures>> {
        if !(mu0 > 0.0 && mu0 < 1.0) {
            return Err(Error::InvalidArgument(format!("mu0 = {mu0} must lie strictly inside (0, 1)")));
        }
        SoftmaxPolicy::new(TabularFeatures::new(1, 2), vec![mu0.ln(), (1.0 - mu0).ln()])
    }

    pub fn expected_reward(&self, mu0: f64) -> f64 {
        mu0 * self.arms[0].mean() + (1.0 - mu0) * self.arms[1].mean()
    }

    /// Gradient of the expected reward with respect to the policy logits.
    pub fn reward_gradient(&self, mu0: f64) -> [f64; 2] {
        let g = mu0 * (1.0 - mu0) * (self.arms[0].mean() - self.arms[1].mean());
        [g, -g]
    }

    /// Total variance (trace of the covariance) of the single-step
    /// estimate `(r - b) zeta` under the policy with `P(arm 0) = mu0`.
    pub fn estimator_variance(&self, mu0: f64, b: f64) -> f64 {
        let mu1 = 1.0 - mu0;
        // ||zeta||^2 is 2 mu1^2 after arm 0 and 2 mu0^2 after arm 1
        let second = |arm: &RewardDist| arm.variance() + (arm.mean() - b).powi(2);
        let second_moment = mu0 * 2.0 * mu1 * mu1 * second(&self.arms[0]) + mu1 * 2.0 * mu0 * mu0 * second(&self.arms[1]);
        // mean is the true gradient: mu0 mu1 (m0 - m1) * (1, -1)
        let g = mu0 * mu1 * (self.arms[0].mean() - self.arms[1].mean());
        second_moment - 2.0 * g * g
    }
}

impl Environment for Bandit {
    type Features = TabularFeatures;

    fn feature_map(&self) -> TabularFeatures {
        TabularFeatures::new(1, 2)
    }

    fn observe(&self) -> usize {
        0
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<f64> {
        let arm = self
            .arms
            .get(action)
            .ok_or_else(|| Error::InvalidArgument(format!("bandit has no arm {action}")))?;
        Ok(arm.sample(rng))
    }
}
