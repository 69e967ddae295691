//! Puckworld: steer a unit-mass puck towards a target on a square arena.
//!
//! Each decision applies a force of 5 in the chosen x direction and 5 in the
//! chosen y direction for 0.1 s. The puck feels viscous damping, so within a
//! decision the velocity relaxes exponentially towards `force / damping`;
//! the step integrates this exactly. The reward is minus the distance to the
//! target after the move. Every `teleport_period` seconds both the puck and
//! the target jump to fresh uniformly random positions and the puck stops.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Environment;
use crate::error::{Error, Result};
use crate::mdp::ActionBlockFeatures;

/// Force signs for the four actions.
pub const PUCK_ACTIONS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PuckConfig {
    /// Side of the square arena in metres.
    pub arena: f64,
    /// Viscous damping coefficient, 1/s.
    pub damping: f64,
    pub teleport_period: f64,
    pub force: f64,
    pub dt: f64,
}

impl Default for PuckConfig {
    fn default() -> Self {
        Self {
            arena: 50.0,
            damping: 0.5,
            teleport_period: 30.0,
            force: 5.0,
            dt: 0.1,
        }
    }
}

impl PuckConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.arena, self.damping, self.teleport_period, self.force, self.dt];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!("puckworld constants must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Displacement and final velocity along one axis after `dt` seconds
    /// under constant force `f` from velocity `v0`.
    pub fn integrate_axis(&self, v0: f64, f: f64) -> (f64, f64) {
        let c = self.damping;
        let terminal = f / c;
        let decay = (-c * self.dt).exp();
        let v = terminal + (v0 - terminal) * decay;
        let dx = terminal * self.dt + (v0 - terminal) * (1.0 - decay) / c;
        (dx, v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PuckState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub target_x: f64,
    pub target_y: f64,
    /// Seconds since the last teleport.
    pub elapsed: f64,
}

impl PuckState {
    pub fn distance(&self) -> f64 {
        (self.x - self.target_x).hypot(self.y - self.target_y)
    }

    pub fn random<R: Rng + ?Sized>(config: &PuckConfig, rng: &mut R) -> Self {
        Self {
            x: rng.random::<f64>() * config.arena,
            y: rng.random::<f64>() * config.arena,
            vx: 0.0,
            vy: 0.0,
            target_x: rng.random::<f64>() * config.arena,
            target_y: rng.random::<f64>() * config.arena,
            elapsed: 0.0,
        }
    }
}

fn clamp_axis(pos: f64, vel: f64, arena: f64) -> (f64, f64) {
    if pos < 0.0 {
        (0.0, 0.0)
    } else if pos > arena {
        (arena, 0.0)
    } else {
        (pos, vel)
    }
}

/// One decision interval. Returns the successor state and `-distance`
/// measured before any teleport.
pub fn puck_step<R: Rng + ?Sized>(
    state: &PuckState,
    action: usize,
    config: &PuckConfig,
    rng: &mut R,
) -> Result<(PuckState, f64)> {
    let (sx, sy) = *PUCK_ACTIONS
        .get(action)
        .ok_or_else(|| Error::InvalidArgument(format!("puckworld has no action {action}")))?;
    let (dx, vx) = config.integrate_axis(state.vx, sx * config.force);
    let (dy, vy) = config.integrate_axis(state.vy, sy * config.force);
    let (x, vx) = clamp_axis(state.x + dx, vx, config.arena);
    let (y, vy) = clamp_axis(state.y + dy, vy, config.arena);
    let mut next = PuckState {
        x,
        y,
        vx,
        vy,
        target_x: state.target_x,
        target_y: state.target_y,
        elapsed: state.elapsed + config.dt,
    };
    let reward = -next.distance();
    // tolerance absorbs accumulated rounding in `elapsed`
    if next.elapsed >= config.teleport_period - 1e-9 {
        next = PuckState::random(config, rng);
    }
    Ok((next, reward))
}

/// What the policy sees: offset to the target and velocity, scaled to order
/// one, plus a constant bias input.
pub fn puck_features(state: &PuckState) -> [f64; 5] {
    [
        (state.target_x - state.x) / 10.0,
        (state.target_y - state.y) / 10.0,
        state.vx / 10.0,
        state.vy / 10.0,
        1.0,
    ]
}

#[derive(Clone, Debug)]
pub struct Puckworld {
    state: PuckState,
    config: PuckConfig,
}

impl Puckworld {
    pub fn new<R: Rng + ?Sized>(config: PuckConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: PuckState::random(&config, rng),
            config,
        })
    }

    pub fn with_state(config: PuckConfig, state: PuckState) -> Result<Self> {
        config.validate()?;
        Ok(Self { state, config })
    }

    pub fn state(&self) -> &PuckState {
        &self.state
    }
}

impl Environment for Puckworld {
    type Features = ActionBlockFeatures<5>;

    fn feature_map(&self) -> ActionBlockFeatures<5> {
        ActionBlockFeatures::new(PUCK_ACTIONS.len())
    }

    fn observe(&self) -> [f64; 5] {
        puck_features(&self.state)
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<f64> {
        let (next, reward) = puck_step(&self.state, action, &self.config, rng)?;
        self.state = next;
        Ok(reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use approx::assert_abs_diff_eq;

    fn at(x: f64, y: f64, tx: f64, ty: f64) -> PuckState {
        PuckState {
            x,
            y,
            vx: 0.0,
            vy: 0.0,
            target_x: tx,
            target_y: ty,
            elapsed: 0.0,
        }
    }

    #[test]
    fn reward_is_zero_at_target() {
        // pushes +x,+y then measures; start offset so the puck lands on target
        let cfg = PuckConfig::default();
        let (d, _) = cfg.integrate_axis(0.0, cfg.force);
        let s = at(20.0, 20.0, 20.0 + d, 20.0 + d);
        let (_, r) = puck_step(&s, 0, &cfg, &mut replica_rng(0, 0)).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn displacement_matches_closed_form() {
        // x'' = F - c x', x(0) = 0, x'(0) = 0  =>  x(t) = (F/c) t - (F/c^2)(1 - e^{-ct})
        let cfg = PuckConfig::default();
        let s = at(25.0, 25.0, 0.0, 0.0);
        let (next, _) = puck_step(&s, 0, &cfg, &mut replica_rng(0, 0)).unwrap();
        let (f, c, t) = (5.0_f64, 0.5_f64, 0.1_f64);
        let expected = f / c * t - f / (c * c) * (1.0 - (-c * t).exp());
        assert_abs_diff_eq!(next.x - 25.0, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(next.y - 25.0, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(next.vx, f / c * (1.0 - (-c * t).exp()), epsilon = 1e-12);
    }

    #[test]
    fn rewards_are_nonpositive_and_puck_stays_in_arena() {
        let cfg = PuckConfig::default();
        let mut rng = replica_rng(3, 1);
        let mut s = PuckState::random(&cfg, &mut rng);
        for i in 0..2000 {
            let (next, r) = puck_step(&s, i % 4, &cfg, &mut rng).unwrap();
            assert!(r <= 0.0);
            assert!((0.0..=cfg.arena).contains(&next.x) && (0.0..=cfg.arena).contains(&next.y));
            assert!(next.vx.is_finite() && next.vy.is_finite());
            s = next;
        }
    }

    #[test]
    fn teleports_on_schedule() {
        let cfg = PuckConfig::default();
        let mut rng = replica_rng(9, 0);
        let mut s = at(10.0, 10.0, 40.0, 40.0);
        for _ in 0..299 {
            s = puck_step(&s, 0, &cfg, &mut rng).unwrap().0;
            assert_eq!((s.target_x, s.target_y), (40.0, 40.0));
        }
        s = puck_step(&s, 0, &cfg, &mut rng).unwrap().0;
        assert_eq!(s.elapsed, 0.0);
        assert_eq!((s.vx, s.vy), (0.0, 0.0));
        assert_ne!((s.target_x, s.target_y), (40.0, 40.0));
    }

    #[test]
    fn wall_stops_the_puck() {
        let cfg = PuckConfig::default();
        let mut s = at(49.99, 0.01, 0.0, 0.0);
        s.vx = 3.0;
        s.vy = -3.0;
        let (next, _) = puck_step(&s, 1, &cfg, &mut replica_rng(0, 0)).unwrap();
        assert_eq!((next.x, next.vx), (50.0, 0.0));
        assert_eq!((next.y, next.vy), (0.0, 0.0));
    }
}
