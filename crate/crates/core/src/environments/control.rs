//! Single-degree-of-freedom continuous control tasks.
//!
//! Both tasks integrate with semi-implicit Euler at `dt = 0.05` and run
//! 200-step episodes (shorter than the 1000-step episodes of the usual
//! control suites, to keep experiments desk-sized). Per-step rewards lie in
//! [0, 1], so the maximum return is 200.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::interfaces::{Action, ActionSpec, Environment, ObservationSpec, TimeStep};

pub const DT: f64 = 0.05;
pub const EPISODE_STEPS: u64 = 200;

/// Point mass on a line, force-controlled toward the origin.
///
/// Dynamics: `v += dt * gain * u`, then `x += dt * v`, with `u` in [-1, 1]
/// and `gain = 1`. There is no gravity or friction. Reward is
/// `max(0, 1 - |x|)`. Episodes start at rest with `x ~ U[-1, 1]`.
pub struct PointMass {
    rng: StdRng,
    pub gain: f64,
    x: f64,
    v: f64,
    steps: u64,
    started: bool,
    episode_steps: u64,
}

impl PointMass {
    pub fn new(seed: u64) -> Self {
        Self { rng: StdRng::seed_from_u64(seed), gain: 1.0, x: 0.0, v: 0.0, steps: 0, started: false, episode_steps: EPISODE_STEPS }
    }

    pub fn with_episode_steps(mut self, steps: u64) -> Self {
        self.episode_steps = steps.max(1);
        self
    }

    pub fn reward(x: f64) -> f64 {
        (1.0 - x.abs()).max(0.0)
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, x: f64, v: f64) -> TimeStep {
        self.x = x;
        self.v = v;
        self.steps = 0;
        self.started = true;
        TimeStep::first(vec![x, v])
    }

    pub fn state(&self) -> (f64, f64) {
        (self.x, self.v)
    }
}

/// Time-optimal bang-bang control toward the origin: push against the
/// switching curve `x + v|v| / (2 gain)`, with a stiff linear law inside a
/// small neighbourhood of rest to avoid chattering.
pub fn point_mass_bang_bang(observation: &[f64], gain: f64) -> f64 {
    let (x, v) = (observation[0], observation[1]);
    if x.abs() < 0.01 && v.abs() < 0.05 {
        return (-20.0 * x - 5.0 * v).clamp(-1.0, 1.0);
    }
    let s = x + v * v.abs() / (2.0 * gain);
    if s > 0.0 {
        -1.0
    } else if s < 0.0 {
        1.0
    } else {
        0.0
    }
}

impl Environment for PointMass {
    fn reset(&mut self) -> Result<TimeStep> {
        let x = self.rng.gen_range(-1.0..=1.0);
        Ok(self.reset_to(x, 0.0))
    }

    fn step(&mut self, action: &Action) -> Result<TimeStep> {
        if !self.started || self.steps >= self.episode_steps {
            return Err(Error::Protocol("point-mass step outside an episode".into()));
        }
        let u = action.continuous()?;
        if u.len() != 1 || !u[0].is_finite() || u[0].abs() > 1.0 {
            return Err(Error::SpecViolation(format!("point-mass force {u:?} outside [-1, 1]")));
        }
        self.v += DT * self.gain * u[0];
        self.x += DT * self.v;
        self.steps += 1;
        let obs = vec![self.x, self.v];
        let reward = Self::reward(self.x);
        if self.steps >= self.episode_steps {
            Ok(TimeStep::last(reward, obs))
        } else {
            Ok(TimeStep::mid(reward, obs))
        }
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Continuous { low: vec![-1.0], high: vec![1.0] }
    }

    fn observation_spec(&self) -> ObservationSpec {
        ObservationSpec { dim: 2 }
    }
}

/// Torque-limited frictionless pendulum; `theta = 0` hangs straight down.
///
/// Dynamics: `omega += dt * (-(g/l) sin(theta) + max_torque * u)`, then
/// `theta += dt * omega`, with `g/l = 10` and `max_torque = 2`.
/// Reward is `(1 - cos(theta)) / 2` (1 when upright). Observation is
/// `[cos(theta), sin(theta), omega]`. Episodes start hanging at rest.
pub struct Pendulum {
    theta: f64,
    omega: f64,
    steps: u64,
    started: bool,
}

pub const PENDULUM_G_OVER_L: f64 = 10.0;
pub const PENDULUM_MAX_TORQUE: f64 = 2.0;

impl Pendulum {
    pub fn new() -> Self {
        Self { theta: 0.0, omega: 0.0, steps: 0, started: false }
    }

    pub fn reset_to(&mut self, theta: f64, omega: f64) -> TimeStep {
        self.theta = theta;
        self.omega = omega;
        self.steps = 0;
        self.started = true;
        TimeStep::first(self.observation())
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.omega]
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.omega)
    }

    /// Mechanical energy per unit `m l^2`, zero when hanging at rest.
    pub fn energy(theta: f64, omega: f64) -> f64 {
        0.5 * omega * omega + PENDULUM_G_OVER_L * (1.0 - theta.cos())
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Pendulum {
    fn reset(&mut self) -> Result<TimeStep> {
        Ok(self.reset_to(0.0, 0.0))
    }

    fn step(&mut self, action: &Action) -> Result<TimeStep> {
        if !self.started || self.steps >= EPISODE_STEPS {
            return Err(Error::Protocol("pendulum step outside an episode".into()));
        }
        let u = action.continuous()?;
        if u.len() != 1 || !u[0].is_finite() || u[0].abs() > 1.0 {
            return Err(Error::SpecViolation(format!("pendulum torque {u:?} outside [-1, 1]")));
        }
        self.omega += DT * (-PENDULUM_G_OVER_L * self.theta.sin() + PENDULUM_MAX_TORQUE * u[0]);
        self.theta += DT * self.omega;
        self.steps += 1;
        let reward = (1.0 - self.theta.cos()) / 2.0;
        if self.steps >= EPISODE_STEPS {
            Ok(TimeStep::last(reward, self.observation()))
        } else {
            Ok(TimeStep::mid(reward, self.observation()))
        }
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Continuous { low: vec![-1.0], high: vec![1.0] }
    }

    fn observation_spec(&self) -> ObservationSpec {
        ObservationSpec { dim: 3 }
    }
}
