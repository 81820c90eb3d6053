//! Contracts shared by every component: timesteps, specs, actions,
//! parameter snapshots and the environment/actor traits.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepKind {
    First,
    Mid,
    Last,
}

/// One environment transition as seen by the actor.
///
/// A `First` step is produced only by `reset` and carries zero reward. The
/// episode-end flag is derived from the kind so the two can never disagree.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeStep {
    pub kind: StepKind,
    pub reward: f64,
    pub observation: Vec<f64>,
}

impl TimeStep {
    pub fn first(observation: Vec<f64>) -> Self {
        Self { kind: StepKind::First, reward: 0.0, observation }
    }

    pub fn mid(reward: f64, observation: Vec<f64>) -> Self {
        Self { kind: StepKind::Mid, reward, observation }
    }

    pub fn last(reward: f64, observation: Vec<f64>) -> Self {
        Self { kind: StepKind::Last, reward, observation }
    }

    pub fn is_first(&self) -> bool {
        self.kind == StepKind::First
    }

    pub fn episode_end(&self) -> bool {
        self.kind == StepKind::Last
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn discrete(&self) -> Result<usize> {
        match self {
            Action::Discrete(a) => Ok(*a),
            Action::Continuous(_) => Err(Error::SpecViolation(
                "expected a discrete action, got a continuous one".into(),
            )),
        }
    }

    pub fn continuous(&self) -> Result<&[f64]> {
        match self {
            Action::Continuous(a) => Ok(a),
            Action::Discrete(_) => Err(Error::SpecViolation(
                "expected a continuous action, got a discrete one".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ActionSpec {
    Discrete { num_actions: usize },
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ActionSpec::Discrete { num_actions } if *num_actions == 0 => {
                Err(Error::Config("discrete action spec needs at least one action".into()))
            }
            ActionSpec::Continuous { low, high } => {
                if low.len() != high.len() || low.is_empty() {
                    return Err(Error::Config("continuous bounds must be non-empty and equal length".into()));
                }
                if low.iter().zip(high).any(|(l, h)| !(l < h)) {
                    return Err(Error::Config("continuous bounds need low < high".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Width of the policy output: action count or action dimensionality.
    pub fn dim(&self) -> usize {
        match self {
            ActionSpec::Discrete { num_actions } => *num_actions,
            ActionSpec::Continuous { low, .. } => low.len(),
        }
    }

    pub fn check(&self, action: &Action) -> Result<()> {
        match (self, action) {
            (ActionSpec::Discrete { num_actions }, Action::Discrete(a)) => {
                if a < num_actions {
                    Ok(())
                } else {
                    Err(Error::SpecViolation(format!("action {a} not in 0..{num_actions}")))
                }
            }
            (ActionSpec::Continuous { low, high }, Action::Continuous(a)) => {
                if a.len() != low.len() {
                    return Err(Error::SpecViolation(format!(
                        "action has {} dims, spec has {}",
                        a.len(),
                        low.len()
                    )));
                }
                for (i, v) in a.iter().enumerate() {
                    if !v.is_finite() || *v < low[i] || *v > high[i] {
                        return Err(Error::SpecViolation(format!(
                            "action[{i}] = {v} outside [{}, {}]",
                            low[i], high[i]
                        )));
                    }
                }
                Ok(())
            }
            _ => Err(Error::SpecViolation("action kind does not match spec".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObservationSpec {
    pub dim: usize,
}

impl ObservationSpec {
    pub fn check(&self, observation: &[f64]) -> Result<()> {
        if observation.len() != self.dim {
            return Err(Error::Shape(format!(
                "observation has {} entries, spec expects {}",
                observation.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// A named, shaped array of 64-bit values.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { name: name.into(), shape, data }
    }

    pub fn scalar(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, vec![1], vec![value])
    }
}

/// Versioned weights shipped from a learner to its actors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSnapshot {
    pub version: u64,
    pub tensors: Vec<NamedTensor>,
}

impl ParameterSnapshot {
    pub fn empty() -> Self {
        Self { version: 0, tensors: Vec::new() }
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Tensors whose name starts with `prefix`, in stored order.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a NamedTensor> + 'a {
        self.tensors.iter().filter(move |t| t.name.starts_with(prefix))
    }

    /// True if `other` has the same tensor names and shapes in the same order.
    pub fn same_layout(&self, other: &ParameterSnapshot) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopResult {
    pub episode_return: f64,
    pub episode_length: u64,
    pub actor_steps_total: u64,
}

pub trait Environment: Send {
    fn reset(&mut self) -> Result<TimeStep>;
    fn step(&mut self, action: &Action) -> Result<TimeStep>;
    fn action_spec(&self) -> ActionSpec;
    fn observation_spec(&self) -> ObservationSpec;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn reset(&mut self) -> Result<TimeStep> {
        (**self).reset()
    }
    fn step(&mut self, action: &Action) -> Result<TimeStep> {
        (**self).step(action)
    }
    fn action_spec(&self) -> ActionSpec {
        (**self).action_spec()
    }
    fn observation_spec(&self) -> ObservationSpec {
        (**self).observation_spec()
    }
}

/// Acting half of an agent. Implementations are confined to one worker.
pub trait Actor: Send {
    fn select_action(&mut self, observation: &[f64]) -> Result<Action>;
    fn observe_first(&mut self, timestep: &TimeStep) -> Result<()>;
    fn observe(&mut self, action: &Action, next_timestep: &TimeStep) -> Result<()>;
    fn update(&mut self) -> Result<()>;
}

impl<A: Actor + ?Sized> Actor for Box<A> {
    fn select_action(&mut self, observation: &[f64]) -> Result<Action> {
        (**self).select_action(observation)
    }
    fn observe_first(&mut self, timestep: &TimeStep) -> Result<()> {
        (**self).observe_first(timestep)
    }
    fn observe(&mut self, action: &Action, next_timestep: &TimeStep) -> Result<()> {
        (**self).observe(action, next_timestep)
    }
    fn update(&mut self) -> Result<()> {
        (**self).update()
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 5.0, 5.0]), 1);
    }

    #[test]
    fn continuous_spec_rejects_out_of_bounds() {
        let spec = ActionSpec::Continuous { low: vec![-1.0], high: vec![1.0] };
        assert!(spec.check(&Action::Continuous(vec![0.5])).is_ok());
        assert!(matches!(
            spec.check(&Action::Continuous(vec![1.5])),
            Err(Error::SpecViolation(_))
        ));
        assert!(spec.check(&Action::Discrete(0)).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ActionSpec::Discrete { num_actions: 0 }.validate().is_err());
        assert!(ActionSpec::Continuous { low: vec![1.0], high: vec![1.0] }.validate().is_err());
        assert!(ActionSpec::Continuous { low: vec![0.0], high: vec![1.0] }.validate().is_ok());
    }

    #[test]
    fn timestep_episode_end_tracks_kind() {
        assert!(TimeStep::last(1.0, vec![]).episode_end());
        assert!(!TimeStep::mid(1.0, vec![]).episode_end());
        assert!(TimeStep::first(vec![0.0]).is_first());
        assert_eq!(TimeStep::first(vec![0.0]).reward, 0.0);
    }
}
