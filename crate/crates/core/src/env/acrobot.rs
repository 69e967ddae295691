//! Two-link acrobot with torque at the second joint.
//!
//! Dynamics follow the standard textbook formulation: unit link
//! lengths and masses, centres of mass at mid-link, unit moments of inertia,
//! `g = 9.8`. Angles are measured from the downward vertical (`q1`) and
//! relative to link 1 (`q2`). The system runs continuously without resets;
//! each decision holds one of the torques {-1, 0, +1} for 0.1 s, integrated
//! with five RK4 substeps of 0.02 s.

use std::f64::consts::PI;

use rand::Rng;

use super::Environment;
use crate::error::{Error, Result};
use crate::mdp::ScaledFeatures;

const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_LENGTH_1: f64 = 1.0;
const COM_1: f64 = 0.5;
const COM_2: f64 = 0.5;
const INERTIA_1: f64 = 1.0;
const INERTIA_2: f64 = 1.0;
const GRAVITY: f64 = 9.8;

pub const MAX_VEL_1: f64 = 4.0 * PI;
pub const MAX_VEL_2: f64 = 9.0 * PI;

pub const ACTION_INTERVAL: f64 = 0.1;
pub const DT_SIM: f64 = 0.02;
pub const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AcrobotState {
    pub q1: f64,
    pub q2: f64,
    pub q1dot: f64,
    pub q2dot: f64,
}

impl AcrobotState {
    pub fn new(q1: f64, q2: f64, q1dot: f64, q2dot: f64) -> Self {
        Self { q1, q2, q1dot, q2dot }
    }

    pub fn is_finite(&self) -> bool {
        self.q1.is_finite() && self.q2.is_finite() && self.q1dot.is_finite() && self.q2dot.is_finite()
    }

    /// Kinetic plus potential energy, with potential zero when hanging
    /// straight down.
    pub fn energy(&self) -> f64 {
        let c2 = self.q2.cos();
        let d1 = LINK_MASS_1 * COM_1 * COM_1
            + LINK_MASS_2 * (LINK_LENGTH_1 * LINK_LENGTH_1 + COM_2 * COM_2 + 2.0 * LINK_LENGTH_1 * COM_2 * c2)
            + INERTIA_1
            + INERTIA_2;
        let d2 = LINK_MASS_2 * (COM_2 * COM_2 + LINK_LENGTH_1 * COM_2 * c2) + INERTIA_2;
        let d3 = LINK_MASS_2 * COM_2 * COM_2 + INERTIA_2;
        let kinetic = 0.5 * (d1 * self.q1dot * self.q1dot + 2.0 * d2 * self.q1dot * self.q2dot + d3 * self.q2dot * self.q2dot);
        let k1 = (LINK_MASS_1 * COM_1 + LINK_MASS_2 * LINK_LENGTH_1) * GRAVITY;
        let k2 = LINK_MASS_2 * COM_2 * GRAVITY;
        let potential = k1 * (1.0 - self.q1.cos()) + k2 * (1.0 - (self.q1 + self.q2).cos());
        kinetic + potential
    }

    fn as_array(&self) -> [f64; 4] {
        [self.q1, self.q2, self.q1dot, self.q2dot]
    }

    fn from_array(s: [f64; 4]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }
}

fn derivatives(s: [f64; 4], torque: f64) -> [f64; 4] {
    let [q1, q2, q1dot, q2dot] = s;
    let (s2, c2) = q2.sin_cos();
    let d1 = LINK_MASS_1 * COM_1 * COM_1
        + LINK_MASS_2 * (LINK_LENGTH_1 * LINK_LENGTH_1 + COM_2 * COM_2 + 2.0 * LINK_LENGTH_1 * COM_2 * c2)
        + INERTIA_1
        + INERTIA_2;
    let d2 = LINK_MASS_2 * (COM_2 * COM_2 + LINK_LENGTH_1 * COM_2 * c2) + INERTIA_2;
    // cos(x - pi/2) = sin(x)
    let phi2 = LINK_MASS_2 * COM_2 * GRAVITY * (q1 + q2).sin();
    let phi1 = -LINK_MASS_2 * LINK_LENGTH_1 * COM_2 * q2dot * q2dot * s2
        - 2.0 * LINK_MASS_2 * LINK_LENGTH_1 * COM_2 * q2dot * q1dot * s2
        + (LINK_MASS_1 * COM_1 + LINK_MASS_2 * LINK_LENGTH_1) * GRAVITY * q1.sin()
        + phi2;
    let q2ddot = (torque + d2 / d1 * phi1 - LINK_MASS_2 * LINK_LENGTH_1 * COM_2 * q1dot * q1dot * s2 - phi2)
        / (LINK_MASS_2 * COM_2 * COM_2 + INERTIA_2 - d2 * d2 / d1);
    let q1ddot = -(d2 * q2ddot + phi1) / d1;
    [q1dot, q2dot, q1ddot, q2ddot]
}

fn rk4(s: [f64; 4], torque: f64, dt: f64) -> [f64; 4] {
    let add = |a: [f64; 4], k: [f64; 4], h: f64| [a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2], a[3] + h * k[3]];
    let k1 = derivatives(s, torque);
    let k2 = derivatives(add(s, k1, dt / 2.0), torque);
    let k3 = derivatives(add(s, k2, dt / 2.0), torque);
    let k4 = derivatives(add(s, k3, dt), torque);
    let mut out = s;
    for i in 0..4 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    if x > PI || x <= -PI {
        PI - (PI - x).rem_euclid(2.0 * PI)
    } else {
        x
    }
}

/// Advances the dynamics by `dt` with one RK4 step, then wraps the angles
/// and clamps the velocities.
pub fn acrobot_step(state: &AcrobotState, torque: f64, dt: f64) -> Result<AcrobotState> {
    let [q1, q2, q1dot, q2dot] = rk4(state.as_array(), torque, dt);
    let next = AcrobotState::from_array([
        wrap_angle(q1),
        wrap_angle(q2),
        q1dot.clamp(-MAX_VEL_1, MAX_VEL_1),
        q2dot.clamp(-MAX_VEL_2, MAX_VEL_2),
    ]);
    if !next.is_finite() {
        return Err(Error::NonFinite("acrobot state"));
    }
    Ok(next)
}

/// Height of the tip above its lowest possible position, in `[0, 4]`.
pub fn acrobot_reward(state: &AcrobotState) -> f64 {
    2.0 - state.q1.cos() - (state.q1 + state.q2).cos()
}

/// `(|q1|, |q1dot|, |q2|, |q2dot|)`.
pub fn acrobot_features(state: &AcrobotState) -> [f64; 4] {
    [state.q1.abs(), state.q1dot.abs(), state.q2.abs(), state.q2dot.abs()]
}

/// Continuously running acrobot. Actions index [`TORQUES`].
#[derive(Clone, Debug)]
pub struct Acrobot {
    state: AcrobotState,
    dt_sim: f64,
    substeps: usize,
}

impl Acrobot {
    pub fn new(state: AcrobotState) -> Self {
        Self::with_substep(state, DT_SIM).expect("default substep divides the action interval")
    }

    /// Uses integration substeps of `dt_sim`, which must divide the 0.1 s
    /// action interval.
    pub fn with_substep(state: AcrobotState, dt_sim: f64) -> Result<Self> {
        let ratio = ACTION_INTERVAL / dt_sim;
        let substeps = ratio.round();
        if !(dt_sim > 0.0) || substeps < 1.0 || (ratio - substeps).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "dt_sim = {dt_sim} does not divide the {ACTION_INTERVAL} s action interval"
            )));
        }
        Ok(Self {
            state,
            dt_sim,
            substeps: substeps as usize,
        })
    }

    pub fn state(&self) -> &AcrobotState {
        &self.state
    }
}

impl Default for Acrobot {
    fn default() -> Self {
        Self::new(AcrobotState::default())
    }
}

impl Environment for Acrobot {
    type Features = ScaledFeatures<4>;

    /// `phi(x, a) = torque_a * features(x)`: one weight per feature, and the
    /// zero-torque action always has logit 0.
    fn feature_map(&self) -> ScaledFeatures<4> {
        ScaledFeatures::new(TORQUES.to_vec())
    }

    fn observe(&self) -> [f64; 4] {
        acrobot_features(&self.state)
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, _rng: &mut R) -> Result<f64> {
        let torque = *TORQUES
            .get(action)
            .ok_or_else(|| Error::InvalidArgument(format!("acrobot has no action {action}")))?;
        let mut s = self.state;
        for _ in 0..self.substeps {
            s = acrobot_step(&s, torque, self.dt_sim)?;
        }
        self.state = s;
        Ok(acrobot_reward(&s))
    }
}
