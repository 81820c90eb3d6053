use std::collections::VecDeque;
use std::sync::Arc;

use super::{Adder, ItemSink, Payload, StepExtras, Transition};
use crate::error::{Error, Result};
use crate::interfaces::{Action, TimeStep};

/// Sliding window producing overlapping n-step transitions with stride 1.
///
/// Once `n` steps are buffered each step emits the transition starting at
/// the front of the window. A `Last` timestep flushes every remaining
/// window with discount 0, so a length-`T` episode yields exactly `T`
/// transitions.
#[derive(Clone, Debug)]
pub struct NStepBuffer {
    n: usize,
    gamma: f64,
    window: VecDeque<(Vec<f64>, Action, f64)>,
    current: Option<Vec<f64>>,
}

impl NStepBuffer {
    pub fn new(n: usize, gamma: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("n-step horizon must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Config(format!("discount {gamma} not in [0,1]")));
        }
        Ok(Self { n, gamma, window: VecDeque::with_capacity(n), current: None })
    }

    pub fn start(&mut self, timestep: &TimeStep) -> Result<()> {
        if !timestep.is_first() {
            return Err(Error::Protocol("episode must start with a First timestep".into()));
        }
        self.window.clear();
        self.current = Some(timestep.observation.clone());
        Ok(())
    }

    pub fn push(&mut self, action: &Action, next: &TimeStep) -> Result<Vec<Transition>> {
        let observation = self
            .current
            .take()
            .ok_or_else(|| Error::Protocol("add called before the episode started".into()))?;
        self.window.push_back((observation, action.clone(), next.reward));
        let mut out = Vec::new();
        if next.episode_end() {
            while !self.window.is_empty() {
                out.push(self.front_transition(&next.observation, true));
                self.window.pop_front();
            }
            return Ok(out);
        }
        if self.window.len() == self.n {
            out.push(self.front_transition(&next.observation, false));
            self.window.pop_front();
        }
        self.current = Some(next.observation.clone());
        Ok(out)
    }

    fn front_transition(&self, next_observation: &[f64], terminal: bool) -> Transition {
        let mut reward = 0.0;
        let mut scale = 1.0;
        for (_, _, r) in &self.window {
            reward += scale * r;
            scale *= self.gamma;
        }
        let (observation, action, _) = self.window.front().expect("non-empty window");
        Transition {
            observation: observation.clone(),
            action: action.clone(),
            reward,
            discount: if terminal { 0.0 } else { self.gamma.powi(self.n as i32) },
            next_observation: next_observation.to_vec(),
            n_actual: self.window.len() as u32,
        }
    }
}

pub struct NStepAdder {
    buffer: NStepBuffer,
    sink: Arc<dyn ItemSink>,
    priority: f64,
    added: u64,
}

impl NStepAdder {
    pub fn new(n: usize, gamma: f64, sink: Arc<dyn ItemSink>, priority: f64) -> Result<Self> {
        Ok(Self { buffer: NStepBuffer::new(n, gamma)?, sink, priority, added: 0 })
    }
}

impl Adder for NStepAdder {
    fn add_first(&mut self, timestep: &TimeStep) -> Result<()> {
        self.buffer.start(timestep)
    }

    fn add(&mut self, action: &Action, next_timestep: &TimeStep, _extras: &StepExtras) -> Result<()> {
        for transition in self.buffer.push(action, next_timestep)? {
            self.sink.insert_item(transition.encode(), self.priority)?;
            self.added += 1;
        }
        Ok(())
    }

    fn items_added(&self) -> u64 {
        self.added
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_episode(buffer: &mut NStepBuffer, rewards: &[f64]) -> Vec<Transition> {
        buffer.start(&TimeStep::first(vec![0.0])).unwrap();
        let mut out = Vec::new();
        for (t, r) in rewards.iter().enumerate() {
            let obs = vec![(t + 1) as f64];
            let ts = if t + 1 == rewards.len() { TimeStep::last(*r, obs) } else { TimeStep::mid(*r, obs) };
            out.extend(buffer.push(&Action::Discrete(t), &ts).unwrap());
        }
        out
    }

    #[test]
    fn one_step_is_classic_transition() {
        let mut b = NStepBuffer::new(1, 0.9).unwrap();
        let out = run_episode(&mut b, &[1.0, 2.0, 3.0]);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].observation, vec![0.0]);
        assert_eq!(out[0].reward, 1.0);
        assert_eq!(out[0].next_observation, vec![1.0]);
        assert_eq!(out[0].discount, 0.9);
        assert_eq!(out[2].discount, 0.0);
    }

    #[test]
    fn three_step_hand_sum() {
        let mut b = NStepBuffer::new(3, 0.9).unwrap();
        let out = run_episode(&mut b, &[1.0, 2.0, 3.0, 0.0]);
        assert!((out[0].reward - 5.23).abs() < 1e-12);
        assert!((out[0].discount - 0.729).abs() < 1e-12);
        assert_eq!(out[0].n_actual, 3);
        assert_eq!(out[0].next_observation, vec![3.0]);
    }

    #[test]
    fn short_episode_flushes_partials() {
        let mut b = NStepBuffer::new(5, 0.99).unwrap();
        let out = run_episode(&mut b, &[1.0, 1.0]);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|t| t.discount == 0.0));
        assert_eq!(out[0].n_actual, 2);
        assert_eq!(out[1].n_actual, 1);
    }

    #[test]
    fn add_before_start_is_protocol_error() {
        let mut b = NStepBuffer::new(2, 0.9).unwrap();
        assert!(matches!(
            b.push(&Action::Discrete(0), &TimeStep::mid(0.0, vec![0.0])),
            Err(Error::Protocol(_))
        ));
        // Also after an episode has ended.
        run_episode(&mut b, &[1.0]);
        assert!(b.push(&Action::Discrete(0), &TimeStep::mid(0.0, vec![0.0])).is_err());
    }
}
