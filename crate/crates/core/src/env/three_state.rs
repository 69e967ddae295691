//! The default three-state, two-action system used by the gradient-estimation
//! experiments.
//!
//! State 0 pays 1.5, state 1 pays 0.6 and state 2 costs 0.7. In each state
//! one action mostly keeps the chain among the paying states and the other
//! mostly sends it to state 2. Every transition has probability at least
//! 0.01, so the chain is irreducible for every parameter vector.
//!
//! The shipped policy parameters are not zero: the policy is partly trained,
//! which makes the variance-minimizing constant baseline depend visibly on
//! the discount factor.

use crate::mdp::{SoftmaxPolicy, TabularFeatures, TabularMdp};

pub const THREE_STATE_TRANSITIONS: [[[f64; 3]; 2]; 3] = [
    [[0.01, 0.01, 0.98], [0.32, 0.67, 0.01]],
    [[0.81, 0.18, 0.01], [0.01, 0.98, 0.01]],
    [[0.51, 0.46, 0.03], [0.01, 0.01, 0.98]],
];

pub const THREE_STATE_REWARDS: [f64; 3] = [1.5, 0.6, -0.7];

/// Tabular logits, indexed `state * 2 + action`.
pub const THREE_STATE_THETA: [f64; 6] = [-0.4, -0.9, -0.4, -1.4, -1.1, -0.2];

pub fn three_state_mdp() -> TabularMdp {
    let transition = THREE_STATE_TRANSITIONS
        .iter()
        .map(|rows| rows.iter().map(|row| row.to_vec()).collect())
        .collect();
    TabularMdp::new(transition, THREE_STATE_REWARDS.to_vec()).expect("shipped model is valid")
}

/// The shipped model with its default policy.
pub fn default_three_state() -> (TabularMdp, SoftmaxPolicy<TabularFeatures>) {
    let mdp = three_state_mdp();
    let policy = mdp
        .tabular_policy(THREE_STATE_THETA.to_vec())
        .expect("shipped parameters match the model");
    (mdp, policy)
}
