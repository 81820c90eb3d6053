//! T-maze memory task: a cue shown at the first step decides which arm of
//! the junction pays.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::interfaces::{Action, ActionSpec, Environment, ObservationSpec, TimeStep};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Observation: `[cue_left, cue_right, at_junction, progress]`. The cue is
/// visible only on the first observation. The agent walks `corridor_length`
/// steps (actions ignored) and then chooses an arm at the junction: +1 for
/// the cued arm, -1 otherwise. With `corridor_length = 0` the cue is shown
/// at the junction itself.
pub struct TMaze {
    corridor_length: usize,
    rng: StdRng,
    cue: usize,
    position: usize,
    started: bool,
    done: bool,
}

impl TMaze {
    pub fn new(corridor_length: usize, seed: u64) -> Self {
        Self { corridor_length, rng: StdRng::seed_from_u64(seed), cue: 0, position: 0, started: false, done: false }
    }

    pub fn cue(&self) -> usize {
        self.cue
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = vec![0.0; 4];
        if self.position == 0 {
            obs[self.cue] = 1.0;
        }
        if self.position == self.corridor_length {
            obs[2] = 1.0;
        }
        obs[3] = if self.corridor_length == 0 { 1.0 } else { self.position as f64 / self.corridor_length as f64 };
        obs
    }
}

impl Environment for TMaze {
    fn reset(&mut self) -> Result<TimeStep> {
        self.cue = self.rng.gen_range(0..2);
        self.position = 0;
        self.started = true;
        self.done = false;
        Ok(TimeStep::first(self.observation()))
    }

    fn step(&mut self, action: &Action) -> Result<TimeStep> {
        if !self.started || self.done {
            return Err(Error::Protocol("t-maze step outside an episode".into()));
        }
        let a = action.discrete()?;
        if a > 1 {
            return Err(Error::SpecViolation(format!("t-maze action {a} out of range")));
        }
        if self.position < self.corridor_length {
            self.position += 1;
            return Ok(TimeStep::mid(0.0, self.observation()));
        }
        self.done = true;
        let reward = if a == self.cue { 1.0 } else { -1.0 };
        Ok(TimeStep::last(reward, vec![0.0; 4]))
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Discrete { num_actions: 2 }
    }

    fn observation_spec(&self) -> ObservationSpec {
        ObservationSpec { dim: 4 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn play(env: &mut TMaze, policy: &mut dyn FnMut(&[f64], usize) -> usize) -> f64 {
        let mut ts = env.reset().unwrap();
        let cue = env.cue();
        let mut ret = 0.0;
        while !ts.episode_end() {
            let a = policy(&ts.observation, cue);
            ts = env.step(&Action::Discrete(a)).unwrap();
            ret += ts.reward;
        }
        ret
    }

    #[test]
    fn markov_case_is_solvable_feed_forward() {
        let mut env = TMaze::new(0, 3);
        for _ in 0..20 {
            // Reading the cue from the current observation is enough.
            let r = play(&mut env, &mut |obs, _| if obs[0] == 1.0 { LEFT } else { RIGHT });
            assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn memory_oracle_scores_one() {
        let mut env = TMaze::new(10, 4);
        for _ in 0..20 {
            let mut remembered = None;
            let r = play(&mut env, &mut |obs, _| {
                if obs[0] + obs[1] > 0.0 {
                    remembered = Some(if obs[0] == 1.0 { LEFT } else { RIGHT });
                }
                remembered.unwrap()
            });
            assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn cue_hidden_after_first_step_and_random_policy_is_zero_mean() {
        let mut env = TMaze::new(3, 5);
        let ts = env.reset().unwrap();
        assert_eq!(ts.observation[0] + ts.observation[1], 1.0);
        let ts = env.step(&Action::Discrete(0)).unwrap();
        assert_eq!(ts.observation[0] + ts.observation[1], 0.0);
        // Both cues are equally likely; a fixed arm wins exactly when it matches.
        let mut total = 0.0;
        let episodes = 4000;
        for _ in 0..episodes {
            total += play(&mut env, &mut |_, _| LEFT);
        }
        let mean = total / episodes as f64;
        assert!(mean.abs() < 4.0 / (episodes as f64).sqrt(), "mean {mean}");
    }
}
