//! Simulated environments.
//!
//! Every environment is a single-owner state machine: `observe` exposes what
//! the policy sees and `step` applies an action and returns the reward
//! attached to the successor state.

pub mod acrobot;
pub mod bandit;
pub mod puckworld;
pub mod three_state;

use std::sync::Arc;

use rand::Rng;

use crate::error::Result;
use crate::mdp::{sample_categorical, FeatureMap, TabularFeatures, TabularMdp};

pub use acrobot::{Acrobot, AcrobotState};
pub use bandit::{Bandit, RewardDist};
pub use puckworld::{PuckConfig, PuckState, Puckworld};
pub use three_state::default_three_state;

pub trait Environment {
    type Features: FeatureMap + Clone;

    fn feature_map(&self) -> Self::Features;

    fn observe(&self) -> <Self::Features as FeatureMap>::Obs;

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<f64>;
}

/// A [`TabularMdp`] driven as an environment.
#[derive(Clone, Debug)]
pub struct TabularEnv {
    mdp: Arc<TabularMdp>,
    state: usize,
}

impl TabularEnv {
    pub fn new(mdp: Arc<TabularMdp>, start: usize) -> Result<Self> {
        mdp.check_state(start)?;
        Ok(Self { mdp, state: start })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }
}

impl Environment for TabularEnv {
    type Features = TabularFeatures;

    fn feature_map(&self) -> TabularFeatures {
        TabularFeatures::new(self.mdp.n_states(), self.mdp.n_actions())
    }

    fn observe(&self) -> usize {
        self.state
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<f64> {
        let next = sample_categorical(self.mdp.transition_row(self.state, action), rng);
        self.state = next;
        Ok(self.mdp.reward()[next])
    }
}
