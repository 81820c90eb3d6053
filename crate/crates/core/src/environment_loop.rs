//! The generic environment loop mediating environment and actor.

use crate::error::{Error, Result};
use crate::interfaces::{Action, Actor, Environment, LoopResult, TimeStep};

/// Runs one episode: reset, observe_first, then
/// select_action / step / observe / update until the episode ends.
///
/// Actions are checked against the environment's spec before stepping.
pub fn run_episode<E, A>(environment: &mut E, actor: &mut A) -> Result<LoopResult>
where
    E: Environment + ?Sized,
    A: Actor + ?Sized,
{
    let mut lp = EnvironmentLoop::new();
    lp.run_episode(environment, actor)
}

/// Keeps the running actor-step counter across episodes.
#[derive(Debug, Default)]
pub struct EnvironmentLoop {
    actor_steps_total: u64,
    episodes: u64,
}

impl EnvironmentLoop {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn actor_steps_total(&self) -> u64 {
        self.actor_steps_total
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn run_episode<E, A>(&mut self, environment: &mut E, actor: &mut A) -> Result<LoopResult>
    where
        E: Environment + ?Sized,
        A: Actor + ?Sized,
    {
        self.run_episode_with(environment, actor, |_| true)
    }

    /// Like [`run_episode`](Self::run_episode) but calls `keep_going` before
    /// every action with the running step total; returning false ends the
    /// episode early (without a terminal step) and the partial result is
    /// returned.
    pub fn run_episode_with<E, A, F>(
        &mut self,
        environment: &mut E,
        actor: &mut A,
        mut keep_going: F,
    ) -> Result<LoopResult>
    where
        E: Environment + ?Sized,
        A: Actor + ?Sized,
        F: FnMut(u64) -> bool,
    {
        let spec = environment.action_spec();
        let obs_spec = environment.observation_spec();
        let mut timestep = environment.reset()?;
        if !timestep.is_first() {
            return Err(Error::Protocol("reset did not return a First timestep".into()));
        }
        obs_spec.check(&timestep.observation)?;
        actor.observe_first(&timestep)?;
        let mut episode_return = 0.0;
        let mut episode_length = 0;
        while !timestep.episode_end() {
            if !keep_going(self.actor_steps_total) {
                break;
            }
            let action = actor.select_action(&timestep.observation)?;
            spec.check(&action)?;
            timestep = environment.step(&action)?;
            if timestep.is_first() {
                return Err(Error::Protocol("step returned a First timestep".into()));
            }
            obs_spec.check(&timestep.observation)?;
            actor.observe(&action, &timestep)?;
            actor.update()?;
            episode_return += timestep.reward;
            episode_length += 1;
            self.actor_steps_total += 1;
        }
        if timestep.episode_end() {
            self.episodes += 1;
        }
        Ok(LoopResult { episode_return, episode_length, actor_steps_total: self.actor_steps_total })
    }
}

/// One call observed by a [`RecordingActor`] or [`RecordingEnvironment`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoopCall {
    Reset,
    ObserveFirst,
    Select,
    Step,
    Observe,
    Update,
}

/// Checks that one episode's calls match
/// `Reset ObserveFirst (Select Step Observe Update)+`.
pub fn check_episode_protocol(calls: &[LoopCall]) -> Result<()> {
    use LoopCall::*;
    if calls.len() < 6 || calls[0] != Reset || calls[1] != ObserveFirst {
        return Err(Error::Protocol(format!("episode must start with reset, observe_first: {calls:?}")));
    }
    let body = &calls[2..];
    if body.len() % 4 != 0 {
        return Err(Error::Protocol(format!("incomplete loop iteration: {calls:?}")));
    }
    for chunk in body.chunks(4) {
        if chunk != [Select, Step, Observe, Update] {
            return Err(Error::Protocol(format!("unexpected call order {chunk:?}")));
        }
    }
    Ok(())
}

use std::sync::{Arc, Mutex};

/// Shared call log used by the recording wrappers.
pub type CallLog = Arc<Mutex<Vec<LoopCall>>>;

pub struct RecordingActor<A> {
    pub inner: A,
    pub log: CallLog,
}

impl<A: Actor> Actor for RecordingActor<A> {
    fn select_action(&mut self, observation: &[f64]) -> Result<Action> {
        self.log.lock().unwrap().push(LoopCall::Select);
        self.inner.select_action(observation)
    }
    fn observe_first(&mut self, timestep: &TimeStep) -> Result<()> {
        self.log.lock().unwrap().push(LoopCall::ObserveFirst);
        self.inner.observe_first(timestep)
    }
    fn observe(&mut self, action: &Action, next_timestep: &TimeStep) -> Result<()> {
        self.log.lock().unwrap().push(LoopCall::Observe);
        self.inner.observe(action, next_timestep)
    }
    fn update(&mut self) -> Result<()> {
        self.log.lock().unwrap().push(LoopCall::Update);
        self.inner.update()
    }
}

pub struct RecordingEnvironment<E> {
    pub inner: E,
    pub log: CallLog,
}

impl<E: Environment> Environment for RecordingEnvironment<E> {
    fn reset(&mut self) -> Result<TimeStep> {
        self.log.lock().unwrap().push(LoopCall::Reset);
        self.inner.reset()
    }
    fn step(&mut self, action: &Action) -> Result<TimeStep> {
        self.log.lock().unwrap().push(LoopCall::Step);
        self.inner.step(action)
    }
    fn action_spec(&self) -> crate::interfaces::ActionSpec {
        self.inner.action_spec()
    }
    fn observation_spec(&self) -> crate::interfaces::ObservationSpec {
        self.inner.observation_spec()
    }
}
