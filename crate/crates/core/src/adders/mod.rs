//! Adders turn an actor's observe stream into replay items.
//!
//! Each adder has a pure buffering core (`NStepBuffer`, `SequenceBuffer`,
//! `EpisodeBuffer`) that returns the items a step completes, and a thin
//! wrapper that writes those items into an [`ItemSink`] such as a replay
//! table. No emitted item ever spans an episode boundary.

mod codec;
mod episode;
mod nstep;
mod sequence;

pub use codec::{decode_any, Payload, PayloadKind, EPISODE_TAG, SEQUENCE_TAG, TRANSITION_TAG};
pub use episode::{EpisodeAdder, EpisodeBuffer};
pub use nstep::{NStepAdder, NStepBuffer};
pub use sequence::{SequenceAdder, SequenceBuffer, SequenceConfig};

use crate::error::Result;
use crate::interfaces::{Action, TimeStep};

pub const DEFAULT_N: usize = 5;
pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_SEQUENCE_LENGTH: usize = 20;
pub const DEFAULT_PERIOD: usize = 10;
pub const DEFAULT_BURN_IN: usize = 4;

/// An n-step transition `(o_t, a_t, sum_{i<k} gamma^i r_{t+i}, gamma^n or 0, o_{t+k})`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    /// `gamma^n`, or 0 when the episode ended inside the window.
    pub discount: f64,
    pub next_observation: Vec<f64>,
    /// Steps actually spanned, in `1..=n`.
    pub n_actual: u32,
}

/// A fixed-length slice of an episode for recurrent or on-policy learners.
///
/// `observations` holds `length + 1` entries: the observation before each of
/// the `length` steps plus the one that follows the last step. Steps past
/// the end of the episode are zero-padded and have `mask = false`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSlice {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub behavior_log_probs: Vec<f64>,
    pub mask: Vec<bool>,
    /// Recurrent state the actor held before consuming `observations[0]`.
    pub start_recurrent_state: Vec<f64>,
    pub burn_in_length: u32,
    pub is_episode_start: bool,
    /// The last valid step ended the episode.
    pub ends_episode: bool,
}

impl SequenceSlice {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn valid_len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Whether the episode terminated after step `t`.
    pub fn is_terminal_step(&self, t: usize) -> bool {
        self.ends_episode && t + 1 == self.valid_len()
    }
}

/// A whole trajectory. `extras` holds optional per-step vectors recorded by
/// the actor (for example a search policy).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Episode {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub final_observation: Vec<f64>,
    pub extras: Vec<Vec<f64>>,
    pub truncated: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Discounted return-to-go at every step.
    pub fn returns(&self, gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.rewards.len()];
        let mut acc = 0.0;
        for t in (0..self.rewards.len()).rev() {
            acc = self.rewards[t] + gamma * acc;
            out[t] = acc;
        }
        out
    }
}

/// Per-step information the actor attaches to an observed transition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepExtras {
    pub recurrent_state: Vec<f64>,
    pub log_prob: f64,
    pub policy: Vec<f64>,
}

/// Destination for encoded replay items.
pub trait ItemSink: Send + Sync {
    fn insert_item(&self, payload: Vec<u8>, priority: f64) -> Result<u64>;
}

pub trait Adder: Send {
    fn add_first(&mut self, timestep: &TimeStep) -> Result<()>;
    fn add(&mut self, action: &Action, next_timestep: &TimeStep, extras: &StepExtras) -> Result<()>;
    /// Items written so far.
    fn items_added(&self) -> u64;
}
