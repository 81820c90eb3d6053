use std::sync::Arc;

use super::{Adder, ItemSink, Payload, SequenceSlice, StepExtras};
use crate::error::{Error, Result};
use crate::interfaces::{Action, TimeStep};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequenceConfig {
    pub length: usize,
    pub period: usize,
    pub burn_in: usize,
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.period == 0 || self.period > self.length {
            return Err(Error::Config("sequence adder needs 1 <= period <= length".into()));
        }
        if self.burn_in >= self.length {
            return Err(Error::Config("burn-in must be shorter than the sequence".into()));
        }
        Ok(())
    }
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self { length: super::DEFAULT_SEQUENCE_LENGTH, period: super::DEFAULT_PERIOD, burn_in: super::DEFAULT_BURN_IN }
    }
}

#[derive(Clone, Debug)]
struct StepRecord {
    observation: Vec<f64>,
    action: Action,
    reward: f64,
    log_prob: f64,
    state: Vec<f64>,
}

/// Cuts each episode into slices starting at `0, period, 2 * period, ...`.
///
/// A slice starting at `s` is emitted as soon as step `s + length - 1` has
/// been observed. When the episode ends, steps not yet covered by any slice
/// go into one final zero-padded slice.
#[derive(Clone, Debug)]
pub struct SequenceBuffer {
    config: SequenceConfig,
    steps: Vec<StepRecord>,
    /// Episode index of `steps[0]`.
    offset: usize,
    total: usize,
    next_start: usize,
    covered_until: usize,
    current: Option<Vec<f64>>,
    state_dim: Option<usize>,
}

impl SequenceBuffer {
    pub fn new(config: SequenceConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            steps: Vec::new(),
            offset: 0,
            total: 0,
            next_start: 0,
            covered_until: 0,
            current: None,
            state_dim: None,
        })
    }

    pub fn start(&mut self, timestep: &TimeStep) -> Result<()> {
        if !timestep.is_first() {
            return Err(Error::Protocol("episode must start with a First timestep".into()));
        }
        self.steps.clear();
        self.offset = 0;
        self.total = 0;
        self.next_start = 0;
        self.covered_until = 0;
        self.current = Some(timestep.observation.clone());
        Ok(())
    }

    pub fn push(&mut self, action: &Action, next: &TimeStep, extras: &StepExtras) -> Result<Vec<SequenceSlice>> {
        match self.state_dim {
            Some(d) if d != extras.recurrent_state.len() => {
                return Err(Error::InvalidArgument(format!(
                    "recurrent state has {} entries, expected {d}",
                    extras.recurrent_state.len()
                )))
            }
            None => self.state_dim = Some(extras.recurrent_state.len()),
            _ => {}
        }
        let observation = self
            .current
            .take()
            .ok_or_else(|| Error::Protocol("add called before the episode started".into()))?;
        self.steps.push(StepRecord {
            observation,
            action: action.clone(),
            reward: next.reward,
            log_prob: extras.log_prob,
            state: extras.recurrent_state.clone(),
        });
        self.total += 1;
        let terminal = next.episode_end();
        let length = self.config.length;
        let mut out = Vec::new();
        while self.next_start + length <= self.total {
            let ends = terminal && self.next_start + length == self.total;
            out.push(self.slice(self.next_start, length, &next.observation, ends));
            self.covered_until = self.next_start + length;
            self.next_start += self.config.period;
        }
        if terminal {
            if self.covered_until < self.total {
                let valid = self.total - self.next_start;
                out.push(self.slice(self.next_start, valid, &next.observation, true));
            }
            self.steps.clear();
            self.offset = 0;
            return Ok(out);
        }
        // Steps before the next slice start are no longer needed.
        let drop = self.next_start.saturating_sub(self.offset).min(self.steps.len());
        self.steps.drain(..drop);
        self.offset += drop;
        self.current = Some(next.observation.clone());
        Ok(out)
    }

    /// Builds the slice `[start, start + valid)`, padding to full length.
    fn slice(&self, start: usize, valid: usize, last_observation: &[f64], ends_episode: bool) -> SequenceSlice {
        let length = self.config.length;
        let records = &self.steps[start - self.offset..start - self.offset + valid];
        let obs_dim = last_observation.len();
        let mut observations: Vec<Vec<f64>> = records.iter().map(|r| r.observation.clone()).collect();
        let follow = self
            .steps
            .get(start - self.offset + valid)
            .map(|r| r.observation.clone())
            .unwrap_or_else(|| last_observation.to_vec());
        observations.push(follow);
        observations.resize(length + 1, vec![0.0; obs_dim]);
        let pad_action = match records[0].action {
            Action::Discrete(_) => Action::Discrete(0),
            Action::Continuous(ref a) => Action::Continuous(vec![0.0; a.len()]),
        };
        let mut actions: Vec<Action> = records.iter().map(|r| r.action.clone()).collect();
        actions.resize(length, pad_action);
        let mut rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
        rewards.resize(length, 0.0);
        let mut log_probs: Vec<f64> = records.iter().map(|r| r.log_prob).collect();
        log_probs.resize(length, 0.0);
        let mut mask = vec![true; valid];
        mask.resize(length, false);
        SequenceSlice {
            observations,
            actions,
            rewards,
            behavior_log_probs: log_probs,
            mask,
            start_recurrent_state: records[0].state.clone(),
            burn_in_length: self.config.burn_in as u32,
            is_episode_start: start == 0,
            ends_episode,
        }
    }
}

pub struct SequenceAdder {
    buffer: SequenceBuffer,
    sink: Arc<dyn ItemSink>,
    priority: f64,
    added: u64,
}

impl SequenceAdder {
    pub fn new(config: SequenceConfig, sink: Arc<dyn ItemSink>, priority: f64) -> Result<Self> {
        Ok(Self { buffer: SequenceBuffer::new(config)?, sink, priority, added: 0 })
    }
}

impl Adder for SequenceAdder {
    fn add_first(&mut self, timestep: &TimeStep) -> Result<()> {
        self.buffer.start(timestep)
    }

    fn add(&mut self, action: &Action, next_timestep: &TimeStep, extras: &StepExtras) -> Result<()> {
        for slice in self.buffer.push(action, next_timestep, extras)? {
            self.sink.insert_item(slice.encode(), self.priority)?;
            self.added += 1;
        }
        Ok(())
    }

    fn items_added(&self) -> u64 {
        self.added
    }
}
