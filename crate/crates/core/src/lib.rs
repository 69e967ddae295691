//! Policy-gradient estimation with reward baselines.
//!
//! `mdp` holds the model and softmax policies, `estimators` the GPOMDP family
//! of gradient estimators and online learners, `oracle` exact answers for
//! small tabular problems, `env` the simulated environments and
//! `experiments` the replicated experiment runners.

pub mod csvio;
pub mod env;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod mdp;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
