//! Single-step multi-armed bandit with deterministic payouts.

use crate::environments::{SimState, Simulator};
use crate::error::{Error, Result};
use crate::interfaces::{Action, ActionSpec, Environment, ObservationSpec, TimeStep};

/// Every episode is one pull. The observation is the constant `[1.0]`.
pub struct Bandit {
    payouts: Vec<f64>,
    started: bool,
    done: bool,
}

impl Bandit {
    pub fn new(payouts: Vec<f64>) -> Result<Self> {
        if payouts.is_empty() {
            return Err(Error::Config("bandit needs at least one arm".into()));
        }
        Ok(Self { payouts, started: false, done: false })
    }

    pub fn best_arm(&self) -> usize {
        crate::interfaces::argmax(&self.payouts)
    }

    pub fn simulator(&self) -> BanditSimulator {
        BanditSimulator { payouts: self.payouts.clone() }
    }
}

impl Environment for Bandit {
    fn reset(&mut self) -> Result<TimeStep> {
        self.started = true;
        self.done = false;
        Ok(TimeStep::first(vec![1.0]))
    }

    fn step(&mut self, action: &Action) -> Result<TimeStep> {
        if !self.started || self.done {
            return Err(Error::Protocol("bandit step outside an episode".into()));
        }
        let a = action.discrete()?;
        let reward = *self
            .payouts
            .get(a)
            .ok_or_else(|| Error::SpecViolation(format!("arm {a} out of range")))?;
        self.done = true;
        Ok(TimeStep::last(reward, vec![0.0]))
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Discrete { num_actions: self.payouts.len() }
    }

    fn observation_spec(&self) -> ObservationSpec {
        ObservationSpec { dim: 1 }
    }
}

#[derive(Clone, Debug)]
pub struct BanditSimulator {
    payouts: Vec<f64>,
}

impl Simulator for BanditSimulator {
    fn num_actions(&self) -> usize {
        self.payouts.len()
    }

    fn state_from_observation(&self, observation: &[f64]) -> Result<SimState> {
        match observation {
            [v] if *v == 1.0 => Ok(vec![0]),
            _ => Err(Error::InvalidArgument("bandit simulator only models the pull state".into())),
        }
    }

    fn step(&self, state: &SimState, action: usize) -> Result<(SimState, f64, bool)> {
        if state.as_slice() != [0] {
            return Err(Error::InvalidArgument("bandit episodes have a single decision".into()));
        }
        let reward = *self
            .payouts
            .get(action)
            .ok_or_else(|| Error::InvalidArgument(format!("arm {action} out of range")))?;
        Ok((vec![1], reward, true))
    }

    fn observation(&self, state: &SimState) -> Vec<f64> {
        if state.as_slice() == [0] {
            vec![1.0]
        } else {
            vec![0.0]
        }
    }
}
