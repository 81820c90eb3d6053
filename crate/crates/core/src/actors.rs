//! Actors: a policy plus an optional adder and variable client.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::adders::{Adder, StepExtras};
use crate::error::{Error, Result};
use crate::interfaces::{argmax, Action, Actor, ParameterSnapshot, TimeStep};
use crate::variables::VariableClient;

/// Maps observations to actions using parameters loaded from snapshots.
pub trait Policy: Send {
    /// Chooses an action and reports what the adder should record with it.
    fn act(&mut self, observation: &[f64], rng: &mut StdRng) -> Result<(Action, StepExtras)>;

    /// Called at the start of every episode (resets recurrent state).
    fn begin_episode(&mut self) {}

    fn load(&mut self, snapshot: &ParameterSnapshot) -> Result<()>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&mut self, observation: &[f64], rng: &mut StdRng) -> Result<(Action, StepExtras)> {
        (**self).act(observation, rng)
    }
    fn begin_episode(&mut self) {
        (**self).begin_episode()
    }
    fn load(&mut self, snapshot: &ParameterSnapshot) -> Result<()> {
        (**self).load(snapshot)
    }
}

/// Exploration rate as a function of the actor's own step count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsilonSchedule {
    Constant(f64),
    /// Linear from `start` to `end` over `decay_steps`, then constant.
    Linear { start: f64, end: f64, decay_steps: u64 },
}

impl EpsilonSchedule {
    /// The default schedule: 1.0 to 0.05 over a tenth of the actor's budget.
    pub fn for_budget(actor_steps: u64) -> Self {
        EpsilonSchedule::Linear { start: 1.0, end: 0.05, decay_steps: (actor_steps / 10).max(1) }
    }

    pub fn value(&self, step: u64) -> f64 {
        match *self {
            EpsilonSchedule::Constant(e) => e,
            EpsilonSchedule::Linear { start, end, decay_steps } => {
                let frac = (step as f64 / decay_steps.max(1) as f64).min(1.0);
                start + (end - start) * frac
            }
        }
    }
}

pub const LOG_UNIFORM_EPSILON_RANGE: (f64, f64) = (1e-3, 0.4);

/// Per-actor exploration rate drawn log-uniformly from
/// [`LOG_UNIFORM_EPSILON_RANGE`], reproducible from `seed`.
pub fn log_uniform_epsilon(seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed ^ 0x5eed_e951_0000_0001);
    let (lo, hi) = LOG_UNIFORM_EPSILON_RANGE;
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

/// Epsilon-greedy choice over `q_values` with lowest-index tie breaking.
pub fn epsilon_greedy(q_values: &[f64], epsilon: f64, rng: &mut StdRng) -> Result<usize> {
    if q_values.iter().any(|q| !q.is_finite()) {
        return Err(Error::NonFinite("action values".into()));
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..q_values.len()))
    } else {
        Ok(argmax(q_values))
    }
}

/// Samples an index from a probability vector.
pub fn sample_categorical(probs: &[f64], rng: &mut StdRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Actor built from a policy, an optional adder and an optional variable
/// client. Used unchanged by every runtime mode.
pub struct GenericActor {
    policy: Box<dyn Policy>,
    adder: Option<Box<dyn Adder>>,
    client: Option<VariableClient>,
    rng: StdRng,
    pending: Option<StepExtras>,
    in_episode: bool,
    version: Option<u64>,
}

impl GenericActor {
    pub fn new(policy: Box<dyn Policy>, adder: Option<Box<dyn Adder>>, client: Option<VariableClient>, seed: u64) -> Self {
        Self { policy, adder, client, rng: StdRng::seed_from_u64(seed), pending: None, in_episode: false, version: None }
    }

    /// Version of the parameters currently loaded, if any were fetched.
    pub fn parameter_version(&self) -> Option<u64> {
        self.version
    }

    pub fn items_added(&self) -> u64 {
        self.adder.as_ref().map_or(0, |a| a.items_added())
    }

    pub fn policy_mut(&mut self) -> &mut dyn Policy {
        self.policy.as_mut()
    }

    /// Loads parameters directly, bypassing the variable client.
    pub fn load(&mut self, snapshot: &ParameterSnapshot) -> Result<()> {
        if self.version.map_or(true, |v| snapshot.version > v) {
            self.policy.load(snapshot)?;
            self.version = Some(snapshot.version);
        }
        Ok(())
    }
}

impl Actor for GenericActor {
    fn select_action(&mut self, observation: &[f64]) -> Result<Action> {
        let (action, extras) = self.policy.act(observation, &mut self.rng)?;
        self.pending = Some(extras);
        Ok(action)
    }

    fn observe_first(&mut self, timestep: &TimeStep) -> Result<()> {
        self.policy.begin_episode();
        if let Some(adder) = &mut self.adder {
            adder.add_first(timestep)?;
        }
        self.in_episode = true;
        Ok(())
    }

    fn observe(&mut self, action: &Action, next_timestep: &TimeStep) -> Result<()> {
        if !self.in_episode {
            return Err(Error::Protocol("observe called before observe_first".into()));
        }
        let extras = self.pending.take().unwrap_or_default();
        if let Some(adder) = &mut self.adder {
            adder.add(action, next_timestep, &extras)?;
        }
        if next_timestep.episode_end() {
            self.in_episode = false;
        }
        Ok(())
    }

    fn update(&mut self) -> Result<()> {
        let Some(client) = &mut self.client else {
            return Ok(());
        };
        if let Some(snapshot) = client.poll()? {
            self.policy.load(&snapshot)?;
            self.version = Some(snapshot.version);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_picks_argmax() {
        let mut rng = StdRng::seed_from_u64(0);
        assert_eq!(epsilon_greedy(&[1.0, 3.0, 2.0], 0.0, &mut rng).unwrap(), 1);
        assert!(epsilon_greedy(&[f64::NAN, 1.0], 0.0, &mut rng).is_err());
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = StdRng::seed_from_u64(1);
        let mut counts = [0usize; 3];
        let n = 30_000;
        for _ in 0..n {
            counts[epsilon_greedy(&[0.0, 5.0, 1.0], 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() <= 0.01);
        }
    }

    #[test]
    fn schedules() {
        let s = EpsilonSchedule::for_budget(1000);
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(50) - 0.525).abs() < 1e-12);
        assert!((s.value(100) - 0.05).abs() < 1e-12);
        assert!((s.value(10_000) - 0.05).abs() < 1e-12);
        for seed in 0..100 {
            let e = log_uniform_epsilon(seed);
            assert!((1e-3..=0.4).contains(&e));
        }
        assert_ne!(log_uniform_epsilon(1), log_uniform_epsilon(2));
    }

    #[test]
    fn categorical_sampling_frequencies() {
        let mut rng = StdRng::seed_from_u64(2);
        let n = 20_000;
        let hits = (0..n).filter(|_| sample_categorical(&[0.2, 0.8], &mut rng) == 1).count();
        assert!((hits as f64 / n as f64 - 0.8).abs() < 0.015);
        assert_eq!(sample_categorical(&[0.0, 1.0, 0.0], &mut rng), 1);
    }
}
