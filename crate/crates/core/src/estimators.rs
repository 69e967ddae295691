//! Policy-gradient estimators built on a discounted eligibility trace.
//!
//! Batch estimators (GPOMDP, GARB, and the constant-baseline variant) keep a
//! running average `G` of `(R_s - b_s) * Z_s`, where `Z_s = gamma * Z_{s-1} + zeta_s`.
//! The online learners (OLPOMDP, OLGARB) skip `G` and move `theta` along
//! `(R_s - b_s) * Z_s` at every step.
//!
//! Within one step the adaptive baseline is updated first, then the trace,
//! then the estimate or parameters. The very first OLGARB/GARB step therefore
//! contributes nothing: after it `B = R_1`, so `R_1 - B = 0`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TrajectoryStep;

/// Reward baseline subtracted inside the estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Plain GPOMDP / OLPOMDP.
    None,
    Constant(f64),
    /// Running mean of all rewards seen so far (GARB / OLGARB).
    AdaptiveAverage,
}

impl BaselineMode {
    pub fn label(&self) -> String {
        match self {
            BaselineMode::None => "none".into(),
            BaselineMode::Constant(b) => format!("{b}"),
            BaselineMode::AdaptiveAverage => "adaptive".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub gamma: f64,
    pub baseline: BaselineMode,
    /// Only used by the online learners.
    #[serde(default)]
    pub step_size: Option<f64>,
}

impl EstimatorConfig {
    pub fn new(gamma: f64, baseline: BaselineMode) -> Result<Self> {
        check_gamma(gamma)?;
        if let BaselineMode::Constant(b) = baseline {
            if !b.is_finite() {
                return Err(Error::InvalidArgument("constant baseline must be finite".into()));
            }
        }
        Ok(Self {
            gamma,
            baseline,
            step_size: None,
        })
    }

    pub fn online(gamma: f64, baseline: BaselineMode, step_size: f64) -> Result<Self> {
        let mut cfg = Self::new(gamma, baseline)?;
        check_step_size(step_size)?;
        cfg.step_size = Some(step_size);
        Ok(cfg)
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("discount factor {gamma} not in [0, 1)")));
    }
    Ok(())
}

fn check_step_size(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size {alpha} must be positive")));
    }
    Ok(())
}

/// Trace `Z`, estimate `G`, running reward mean `B`, and step count `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorState {
    trace: Vec<f64>,
    estimate: Vec<f64>,
    baseline: f64,
    steps: u64,
}

impl EstimatorState {
    pub fn new(dim: usize) -> Self {
        Self {
            trace: vec![0.0; dim],
            estimate: vec![0.0; dim],
            baseline: 0.0,
            steps: 0,
        }
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn estimate(&self) -> &[f64] {
        &self.estimate
    }

    pub fn into_estimate(self) -> Vec<f64> {
        self.estimate
    }

    /// Running reward mean; only maintained by the adaptive update.
    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.trace.len()
    }

    /// GPOMDP: `Z <- gamma Z + zeta`, `G <- G + (R Z - G) / (t + 1)`.
    pub fn gpomdp_update(&mut self, reward: f64, score: &[f64], gamma: f64) -> Result<()> {
        self.constant_baseline_update(reward, score, gamma, 0.0)
    }

    /// GPOMDP with `R` replaced by `R - b`.
    pub fn constant_baseline_update(&mut self, reward: f64, score: &[f64], gamma: f64, b: f64) -> Result<()> {
        self.check_dim(score)?;
        let s = (self.steps + 1) as f64;
        self.accumulate(reward - b, score, gamma, s);
        self.steps += 1;
        Ok(())
    }

    /// GARB: `B <- B + (R - B)/s`, then `Z <- gamma Z + zeta`, then
    /// `G <- G + ((R - B) Z - G)/s`.
    pub fn garb_update(&mut self, reward: f64, score: &[f64], gamma: f64) -> Result<()> {
        self.check_dim(score)?;
        let s = (self.steps + 1) as f64;
        self.baseline += (reward - self.baseline) / s;
        self.accumulate(reward - self.baseline, score, gamma, s);
        self.steps += 1;
        Ok(())
    }

    /// Dispatches on the configured baseline mode.
    pub fn update(&mut self, config: &EstimatorConfig, reward: f64, score: &[f64]) -> Result<()> {
        match config.baseline {
            BaselineMode::None => self.gpomdp_update(reward, score, config.gamma),
            BaselineMode::Constant(b) => self.constant_baseline_update(reward, score, config.gamma, b),
            BaselineMode::AdaptiveAverage => self.garb_update(reward, score, config.gamma),
        }
    }

    fn accumulate(&mut self, centered: f64, score: &[f64], gamma: f64, s: f64) {
        for ((z, g), zeta) in self.trace.iter_mut().zip(self.estimate.iter_mut()).zip(score) {
            *z = gamma * *z + zeta;
            *g += (centered * *z - *g) / s;
        }
    }

    fn check_dim(&self, score: &[f64]) -> Result<()> {
        if score.len() != self.trace.len() {
            return Err(Error::DimensionMismatch {
                expected: self.trace.len(),
                got: score.len(),
            });
        }
        Ok(())
    }
}

/// `G_t = (1/t) sum_s (R_s - b) Z_s` over a recorded trajectory.
pub fn constant_baseline_estimate<O>(trajectory: &[TrajectoryStep<O>], b: f64, gamma: f64) -> Result<Vec<f64>> {
    replay_with_baselines(trajectory, |_| b, gamma)
}

/// Replays a trajectory with a per-step frozen baseline `b_s`, giving
/// `(1/t) sum_s (R_s - b_s) Z_s`. With `b_s` set to the GARB running mean at
/// step `s` this reproduces the streaming GARB estimate.
pub fn replay_with_baselines<O>(
    trajectory: &[TrajectoryStep<O>],
    baseline_at: impl Fn(usize) -> f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let first = trajectory
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let mut state = EstimatorState::new(first.score.len());
    for (i, step) in trajectory.iter().enumerate() {
        state.constant_baseline_update(step.reward, &step.score, gamma, baseline_at(i))?;
    }
    Ok(state.into_estimate())
}

/// Running means `B_1, B_2, ...` of the rewards in a trajectory.
pub fn running_reward_means<O>(trajectory: &[TrajectoryStep<O>]) -> Vec<f64> {
    let mut b = 0.0;
    trajectory
        .iter()
        .enumerate()
        .map(|(i, step)| {
            b += (step.reward - b) / (i + 1) as f64;
            b
        })
        .collect()
}

/// OLPOMDP: `Z <- gamma Z + zeta`, `theta <- theta + alpha R Z`.
pub fn olpomdp_step(
    theta: &mut [f64],
    trace: &mut [f64],
    reward: f64,
    score: &[f64],
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    online_update(theta, trace, reward, score, alpha, gamma)
}

/// Running reward mean used by OLGARB; never reset during training.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OnlineBaseline {
    pub value: f64,
    pub steps: u64,
}

impl OnlineBaseline {
    pub fn observe(&mut self, reward: f64) -> f64 {
        self.steps += 1;
        self.value += (reward - self.value) / self.steps as f64;
        self.value
    }
}

/// OLGARB: `B <- B + (R - B)/s`, `Z <- gamma Z + zeta`, then
/// `theta <- theta + alpha (R - B) Z` with the freshly updated `B`.
pub fn olgarb_step(
    theta: &mut [f64],
    trace: &mut [f64],
    baseline: &mut OnlineBaseline,
    reward: f64,
    score: &[f64],
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    let b = baseline.observe(reward);
    online_update(theta, trace, reward - b, score, alpha, gamma)
}

fn online_update(
    theta: &mut [f64],
    trace: &mut [f64],
    centered: f64,
    score: &[f64],
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size {alpha} must be non-negative")));
    }
    if theta.len() != trace.len() || score.len() != trace.len() {
        return Err(Error::DimensionMismatch {
            expected: trace.len(),
            got: if theta.len() != trace.len() { theta.len() } else { score.len() },
        });
    }
    let mut finite = true;
    for ((th, z), zeta) in theta.iter_mut().zip(trace.iter_mut()).zip(score) {
        *z = gamma * *z + zeta;
        *th += alpha * centered * *z;
        finite &= th.is_finite() && z.is_finite();
    }
    if !finite {
        return Err(Error::NonFinite("online parameter update"));
    }
    Ok(())
}

/// CSV log of a batch estimator run: `step,reward,baseline,G_1..G_d`.
pub struct EstimatorLog<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> EstimatorLog<W> {
    pub fn new(mut inner: W, dim: usize) -> Result<Self> {
        writeln!(inner, "# estimator run log: step, reward, baseline, gradient estimate components")?;
        let mut writer = csv::Writer::from_writer(inner);
        let mut header = vec!["step".to_string(), "reward".into(), "baseline".into()];
        header.extend((1..=dim).map(|i| format!("G_{i}")));
        writer.write_record(&header)?;
        Ok(Self { writer })
    }

    pub fn record(&mut self, state: &EstimatorState, reward: f64, baseline: f64) -> Result<()> {
        let mut row = vec![state.steps().to_string(), crate::csvio::fmt_f64(reward), crate::csvio::fmt_f64(baseline)];
        row.extend(state.estimate().iter().map(|g| crate::csvio::fmt_f64(*g)));
        self.writer.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush()?;
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}
