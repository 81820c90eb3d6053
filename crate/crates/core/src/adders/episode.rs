use std::sync::Arc;

use super::{Adder, Episode, ItemSink, Payload, StepExtras};
use crate::error::{Error, Result};
use crate::interfaces::{Action, TimeStep};

/// Collects a full trajectory and emits it once, at the end of the episode.
/// Episodes longer than `max_length` are emitted at that length with
/// `truncated = true`; the remaining steps of that episode are dropped.
#[derive(Clone, Debug)]
pub struct EpisodeBuffer {
    max_length: Option<usize>,
    episode: Episode,
    current: Option<Vec<f64>>,
    emitted: bool,
}

impl EpisodeBuffer {
    pub fn new(max_length: Option<usize>) -> Self {
        Self { max_length, episode: Episode::default(), current: None, emitted: false }
    }

    pub fn start(&mut self, timestep: &TimeStep) -> Result<()> {
        if !timestep.is_first() {
            return Err(Error::Protocol("episode must start with a First timestep".into()));
        }
        self.episode = Episode::default();
        self.current = Some(timestep.observation.clone());
        self.emitted = false;
        Ok(())
    }

    pub fn push(&mut self, action: &Action, next: &TimeStep, extras: &StepExtras) -> Result<Option<Episode>> {
        let observation = self
            .current
            .take()
            .ok_or_else(|| Error::Protocol("add called before the episode started".into()))?;
        if self.emitted {
            if !next.episode_end() {
                self.current = Some(next.observation.clone());
            }
            return Ok(None);
        }
        self.episode.observations.push(observation);
        self.episode.actions.push(action.clone());
        self.episode.rewards.push(next.reward);
        if !extras.policy.is_empty() {
            self.episode.extras.push(extras.policy.clone());
        }
        let at_cap = self.max_length.map_or(false, |m| self.episode.len() >= m);
        if next.episode_end() || at_cap {
            let mut episode = std::mem::take(&mut self.episode);
            episode.final_observation = next.observation.clone();
            episode.truncated = !next.episode_end();
            self.emitted = true;
            if !next.episode_end() {
                self.current = Some(next.observation.clone());
            }
            return Ok(Some(episode));
        }
        self.current = Some(next.observation.clone());
        Ok(None)
    }
}

pub struct EpisodeAdder {
    buffer: EpisodeBuffer,
    sink: Arc<dyn ItemSink>,
    priority: f64,
    added: u64,
}

impl EpisodeAdder {
    pub fn new(max_length: Option<usize>, sink: Arc<dyn ItemSink>, priority: f64) -> Self {
        Self { buffer: EpisodeBuffer::new(max_length), sink, priority, added: 0 }
    }
}

impl Adder for EpisodeAdder {
    fn add_first(&mut self, timestep: &TimeStep) -> Result<()> {
        self.buffer.start(timestep)
    }

    fn add(&mut self, action: &Action, next_timestep: &TimeStep, extras: &StepExtras) -> Result<()> {
        if let Some(episode) = self.buffer.push(action, next_timestep, extras)? {
            self.sink.insert_item(episode.encode(), self.priority)?;
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

    fn play(b: &mut EpisodeBuffer, first_obs: f64, rewards: &[f64]) -> Vec<Episode> {
        b.start(&TimeStep::first(vec![first_obs])).unwrap();
        let mut out = Vec::new();
        for (t, r) in rewards.iter().enumerate() {
            let obs = vec![first_obs + (t + 1) as f64];
            let ts = if t + 1 == rewards.len() { TimeStep::last(*r, obs) } else { TimeStep::mid(*r, obs) };
            out.extend(b.push(&Action::Discrete(0), &ts, &StepExtras::default()).unwrap());
        }
        out
    }

    #[test]
    fn single_step_episode() {
        let mut b = EpisodeBuffer::new(None);
        let out = play(&mut b, 0.0, &[2.0]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 1);
        assert_eq!(out[0].observations, vec![vec![0.0]]);
        assert!(!out[0].truncated);
    }

    #[test]
    fn ten_step_episode_arrays_and_return() {
        let mut b = EpisodeBuffer::new(None);
        let rewards: Vec<f64> = (1..=10).map(|r| r as f64).collect();
        let out = play(&mut b, 0.0, &rewards);
        assert_eq!(out[0].observations.len(), 10);
        assert_eq!(out[0].actions.len(), 10);
        assert_eq!(out[0].rewards.len(), 10);
        assert_eq!(out[0].episode_return(), 55.0);
    }

    #[test]
    fn consecutive_episodes_do_not_leak() {
        let mut b = EpisodeBuffer::new(None);
        let a = play(&mut b, 0.0, &[1.0, 1.0]);
        let c = play(&mut b, 100.0, &[3.0]);
        assert_eq!(a[0].len(), 2);
        assert_eq!(c[0].len(), 1);
        assert_eq!(c[0].observations[0], vec![100.0]);
    }

    #[test]
    fn long_episode_is_truncated_with_flag() {
        let mut b = EpisodeBuffer::new(Some(3));
        let out = play(&mut b, 0.0, &[1.0; 5]);
        assert_eq!(out.len(), 1);
        assert!(out[0].truncated);
        assert_eq!(out[0].len(), 3);
    }
}
