//! Deep Sea: an N x N descent grid where only the all-right path pays.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::adders::Episode;
use crate::environments::{SimState, Simulator};
use crate::error::{Error, Result};
use crate::interfaces::{Action, ActionSpec, Environment, ObservationSpec, TimeStep};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// The agent starts top-left and descends one row per step. `RIGHT` moves a
/// column right at a cost of `0.01 / N`; `LEFT` moves left (clamped). Taking
/// `RIGHT` in the bottom-right cell pays 1. Observations are a one-hot N x N
/// grid (all zeros once the episode has ended). The stochastic variant
/// flips the executed action with probability `flip_prob`.
pub struct DeepSea {
    size: usize,
    flip_prob: f64,
    rng: StdRng,
    row: usize,
    col: usize,
    started: bool,
}

impl DeepSea {
    pub fn new(size: usize, seed: u64) -> Result<Self> {
        Self::with_flips(size, 0.0, seed)
    }

    pub fn stochastic(size: usize, seed: u64) -> Result<Self> {
        Self::with_flips(size, 1.0 / size.max(1) as f64, seed)
    }

    pub fn with_flips(size: usize, flip_prob: f64, seed: u64) -> Result<Self> {
        if size < 2 {
            return Err(Error::Config("deep sea size must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&flip_prob) {
            return Err(Error::Config("flip probability must be in [0,1]".into()));
        }
        Ok(Self { size, flip_prob, rng: StdRng::seed_from_u64(seed), row: 0, col: 0, started: false })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn move_cost(&self) -> f64 {
        0.01 / self.size as f64
    }

    pub fn optimal_return(&self) -> f64 {
        1.0 - self.size as f64 * self.move_cost()
    }

    fn observation(size: usize, row: usize, col: usize) -> Vec<f64> {
        let mut obs = vec![0.0; size * size];
        if row < size {
            obs[row * size + col] = 1.0;
        }
        obs
    }

    /// Deterministic transition shared by the environment and its simulator.
    fn transition(size: usize, row: usize, col: usize, right: bool) -> (usize, usize, f64) {
        let cost = 0.01 / size as f64;
        let mut reward = 0.0;
        if col == size - 1 && row == size - 1 && right {
            reward += 1.0;
        }
        let col = if right {
            reward -= cost;
            (col + 1).min(size - 1)
        } else {
            col.saturating_sub(1)
        };
        (row + 1, col, reward)
    }

    pub fn simulator(&self) -> Option<DeepSeaSimulator> {
        (self.flip_prob == 0.0).then_some(DeepSeaSimulator { size: self.size })
    }
}

impl Environment for DeepSea {
    fn reset(&mut self) -> Result<TimeStep> {
        self.row = 0;
        self.col = 0;
        self.started = true;
        Ok(TimeStep::first(Self::observation(self.size, 0, 0)))
    }

    fn step(&mut self, action: &Action) -> Result<TimeStep> {
        if !self.started {
            return Err(Error::Protocol("step before reset".into()));
        }
        if self.row >= self.size {
            return Err(Error::Protocol("step after terminal timestep".into()));
        }
        let a = action.discrete()?;
        if a > 1 {
            return Err(Error::SpecViolation(format!("deep sea action {a} out of range")));
        }
        let mut right = a == RIGHT;
        if self.flip_prob > 0.0 && self.rng.gen::<f64>() < self.flip_prob {
            right = !right;
        }
        let (row, col, reward) = Self::transition(self.size, self.row, self.col, right);
        self.row = row;
        self.col = col;
        let obs = Self::observation(self.size, row, col);
        if row == self.size {
            Ok(TimeStep::last(reward, obs))
        } else {
            Ok(TimeStep::mid(reward, obs))
        }
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Discrete { num_actions: 2 }
    }

    fn observation_spec(&self) -> ObservationSpec {
        ObservationSpec { dim: self.size * self.size }
    }
}

/// Perfect model of the deterministic Deep Sea. States are `[row, col]`.
#[derive(Clone, Debug)]
pub struct DeepSeaSimulator {
    size: usize,
}

impl Simulator for DeepSeaSimulator {
    fn num_actions(&self) -> usize {
        2
    }

    fn state_from_observation(&self, observation: &[f64]) -> Result<SimState> {
        if observation.len() != self.size * self.size {
            return Err(Error::Shape("observation does not match simulator size".into()));
        }
        let idx = observation
            .iter()
            .position(|v| *v == 1.0)
            .ok_or_else(|| Error::InvalidArgument("observation encodes no live state".into()))?;
        Ok(vec![(idx / self.size) as i64, (idx % self.size) as i64])
    }

    fn step(&self, state: &SimState, action: usize) -> Result<(SimState, f64, bool)> {
        if state.len() != 2 || state[0] < 0 || state[0] as usize >= self.size {
            return Err(Error::InvalidArgument(format!("invalid deep sea state {state:?}")));
        }
        if action > 1 {
            return Err(Error::InvalidArgument(format!("action {action} out of range")));
        }
        let (row, col, reward) =
            DeepSea::transition(self.size, state[0] as usize, state[1] as usize, action == RIGHT);
        Ok((vec![row as i64, col as i64], reward, row == self.size))
    }

    fn observation(&self, state: &SimState) -> Vec<f64> {
        DeepSea::observation(self.size, state[0] as usize, state[1] as usize)
    }
}

fn rollout(env: &mut DeepSea, policy: impl Fn(usize) -> usize) -> Result<Episode> {
    let mut ts = env.reset()?;
    let mut episode = Episode::default();
    let mut t = 0;
    while !ts.episode_end() {
        let action = Action::Discrete(policy(t));
        episode.observations.push(ts.observation.clone());
        ts = env.step(&action)?;
        episode.actions.push(action);
        episode.rewards.push(ts.reward);
        t += 1;
    }
    episode.final_observation = ts.observation;
    Ok(episode)
}

/// True when the episode collected the treasure.
pub fn is_success(episode: &Episode) -> bool {
    episode.rewards.last().map_or(false, |r| *r > 0.5)
}

/// Demonstrations for Deep Sea. The deterministic task gets exactly one
/// all-right trajectory. The stochastic task gets `size * 10` trajectories,
/// 80% successful and 20% unsuccessful, produced by the all-right policy
/// (unsuccessful ones by a uniformly random policy).
pub fn deep_sea_demonstrations(size: usize, stochastic: bool, seed: u64) -> Result<Vec<Episode>> {
    if !stochastic {
        let mut env = DeepSea::new(size, seed)?;
        return Ok(vec![rollout(&mut env, |_| RIGHT)?]);
    }
    let mut env = DeepSea::stochastic(size, seed)?;
    let mut rng = StdRng::seed_from_u64(seed ^ 0x5eed);
    let num_demos = size * 10;
    let successes_needed = (num_demos * 4) / 5;
    let failures_needed = num_demos - successes_needed;
    let (mut successes, mut failures) = (Vec::new(), Vec::new());
    let mut attempts = 0usize;
    while successes.len() < successes_needed || failures.len() < failures_needed {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(Error::Environment("could not generate enough demonstrations".into()));
        }
        if successes.len() < successes_needed {
            let ep = rollout(&mut env, |_| RIGHT)?;
            if is_success(&ep) {
                successes.push(ep);
                continue;
            }
            if failures.len() < failures_needed {
                failures.push(ep);
            }
        } else {
            let actions: Vec<usize> = (0..size).map(|_| rng.gen_range(0..2)).collect();
            let ep = rollout(&mut env, |t| actions[t])?;
            if !is_success(&ep) {
                failures.push(ep);
            }
        }
    }
    let mut demos = successes;
    demos.extend(failures);
    Ok(demos)
}
