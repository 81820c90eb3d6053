//! Finite MDPs, their exact solution by value iteration, and a
//! one-hot-observation environment wrapper.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Dirichlet, Distribution};

use crate::error::{Error, Result};
use crate::interfaces::{Action, ActionSpec, Environment, ObservationSpec, TimeStep};

/// Transition tensor `P[s, a, s']`, reward table `R[s, a]`, a start state
/// and a set of absorbing terminal states.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    pub start_state: usize,
    pub terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        start_state: usize,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let mdp = Self { num_states, num_actions, transitions, rewards, start_state, terminal };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.num_states, self.num_actions);
        if s == 0 || a == 0 {
            return Err(Error::Config("MDP needs at least one state and one action".into()));
        }
        if self.transitions.len() != s * a * s || self.rewards.len() != s * a || self.terminal.len() != s {
            return Err(Error::Shape("MDP tensor sizes inconsistent with state/action counts".into()));
        }
        if self.start_state >= s {
            return Err(Error::Config("start state out of range".into()));
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("MDP rewards".into()));
        }
        for state in 0..s {
            for action in 0..a {
                let row = self.row(state, action);
                if row.iter().any(|p| *p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!("P[{state},{action},:] is not a distribution")));
                }
            }
        }
        Ok(())
    }

    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.num_actions + action]
    }

    /// Adds an absorbing terminal state reached with probability `prob` from
    /// every non-terminal (state, action); other mass is scaled by `1 - prob`.
    pub fn with_termination(&self, prob: f64) -> Result<TabularMdp> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::InvalidArgument(format!("termination probability {prob} not in [0,1]")));
        }
        let s = self.num_states;
        let n = s + 1;
        let a = self.num_actions;
        let mut transitions = vec![0.0; n * a * n];
        let mut rewards = vec![0.0; n * a];
        for state in 0..n {
            for action in 0..a {
                let dst = &mut transitions[(state * a + action) * n..(state * a + action + 1) * n];
                if state == s {
                    dst[s] = 1.0;
                    continue;
                }
                if self.terminal[state] {
                    dst[state] = 1.0;
                    continue;
                }
                for (next, p) in self.row(state, action).iter().enumerate() {
                    dst[next] = p * (1.0 - prob);
                }
                dst[s] += prob;
                let total: f64 = dst.iter().sum();
                dst.iter_mut().for_each(|p| *p /= total);
                rewards[state * a + action] = self.reward(state, action);
            }
        }
        let mut terminal = self.terminal.clone();
        terminal.push(true);
        TabularMdp::new(n, a, transitions, rewards, self.start_state, terminal)
    }

    fn sample_next(&self, state: usize, action: usize, rng: &mut StdRng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let row = self.row(state, action);
        for (next, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return next;
            }
        }
        row.iter().rposition(|p| *p > 0.0).unwrap_or(self.num_states - 1)
    }
}

#[derive(Clone, Debug)]
pub struct ValueIterationResult {
    pub values: Vec<f64>,
    /// Row-major `Q[s, a]`.
    pub q_values: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
}

impl ValueIterationResult {
    pub fn q(&self, state: usize, num_actions: usize) -> &[f64] {
        &self.q_values[state * num_actions..(state + 1) * num_actions]
    }
}

/// Iterates the Bellman optimality operator to sup-norm tolerance `tol`.
/// Terminal states have value zero. The greedy policy breaks ties toward the
/// lowest action index.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tol: f64) -> Result<ValueIterationResult> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("discount {gamma} not in [0,1]")));
    }
    if gamma >= 1.0 && !mdp.terminal.iter().any(|t| *t) {
        return Err(Error::InvalidArgument("undiscounted value iteration needs an episodic MDP".into()));
    }
    let (s, a) = (mdp.num_states, mdp.num_actions);
    let mut values = vec![0.0; s];
    let mut q = vec![0.0; s * a];
    let max_iterations = 1_000_000;
    for iteration in 1..=max_iterations {
        let mut delta: f64 = 0.0;
        for state in 0..s {
            if mdp.terminal[state] {
                continue;
            }
            for action in 0..a {
                let expected: f64 =
                    mdp.row(state, action).iter().zip(&values).map(|(p, v)| p * v).sum();
                q[state * a + action] = mdp.reward(state, action) + gamma * expected;
            }
        }
        for state in 0..s {
            if mdp.terminal[state] {
                continue;
            }
            let best = q[state * a..(state + 1) * a].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - values[state]).abs());
            values[state] = best;
        }
        if delta <= tol {
            let policy = (0..s).map(|st| crate::interfaces::argmax(&q[st * a..(st + 1) * a])).collect();
            return Ok(ValueIterationResult { values, q_values: q, policy, iterations: iteration });
        }
    }
    Err(Error::InvalidArgument("value iteration did not converge; is the MDP episodic?".into()))
}

/// Exact value of a fixed deterministic policy, by iterating its Bellman
/// expectation operator.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &[usize], gamma: f64, tol: f64) -> Result<Vec<f64>> {
    if policy.len() != mdp.num_states {
        return Err(Error::Shape("policy length must equal the number of states".into()));
    }
    let mut values = vec![0.0; mdp.num_states];
    for _ in 0..1_000_000 {
        let mut delta: f64 = 0.0;
        for state in 0..mdp.num_states {
            if mdp.terminal[state] {
                continue;
            }
            let action = policy[state];
            let v = mdp.reward(state, action)
                + gamma * mdp.row(state, action).iter().zip(&values).map(|(p, v)| p * v).sum::<f64>();
            delta = delta.max((v - values[state]).abs());
            values[state] = v;
        }
        if delta <= tol {
            return Ok(values);
        }
    }
    Err(Error::InvalidArgument("policy evaluation did not converge".into()))
}

/// Dirichlet(1)-sampled transition rows and uniform [0, 1) rewards.
pub fn random_mdp(num_states: usize, num_actions: usize, seed: u64) -> Result<TabularMdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidArgument("random MDP sizes must be >= 1".into()));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        if num_states == 1 {
            transitions.push(1.0);
            continue;
        }
        let dirichlet = Dirichlet::new_with_size(1.0, num_states)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut row: Vec<f64> = dirichlet.sample(&mut rng);
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
        transitions.extend(row);
    }
    let rewards = (0..num_states * num_actions).map(|_| rng.gen::<f64>()).collect();
    TabularMdp::new(num_states, num_actions, transitions, rewards, 0, vec![false; num_states])
}

/// Chain of `length` steps: action 1 moves right, action 0 moves left
/// (clamped at 0). Reaching the end yields reward 1 and terminates.
pub fn chain_mdp(length: usize) -> Result<TabularMdp> {
    if length == 0 {
        return Err(Error::InvalidArgument("chain length must be >= 1".into()));
    }
    let n = length + 1;
    let mut transitions = vec![0.0; n * 2 * n];
    let mut rewards = vec![0.0; n * 2];
    for s in 0..n {
        let left = if s == length { s } else { s.saturating_sub(1) };
        let right = if s == length { s } else { s + 1 };
        transitions[(s * 2) * n + left] = 1.0;
        transitions[(s * 2 + 1) * n + right] = 1.0;
        if s + 1 == length {
            rewards[s * 2 + 1] = 1.0;
        }
    }
    let mut terminal = vec![false; n];
    terminal[length] = true;
    TabularMdp::new(n, 2, transitions, rewards, 0, terminal)
}

/// One-hot observation environment over a [`TabularMdp`].
pub struct TabularEnv {
    mdp: TabularMdp,
    state: usize,
    rng: StdRng,
    episode_cap: u64,
    steps: u64,
    done: bool,
    started: bool,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp, episode_cap: u64, seed: u64) -> Result<Self> {
        if episode_cap == 0 {
            return Err(Error::Config("episode cap must be >= 1".into()));
        }
        mdp.validate()?;
        let state = mdp.start_state;
        Ok(Self { mdp, state, rng: StdRng::seed_from_u64(seed), episode_cap, steps: 0, done: false, started: false })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn one_hot(num_states: usize, state: usize) -> Vec<f64> {
        let mut obs = vec![0.0; num_states];
        obs[state] = 1.0;
        obs
    }

    /// Decodes a one-hot observation back to its state index.
    pub fn decode(observation: &[f64]) -> Option<usize> {
        let idx = observation.iter().position(|v| *v == 1.0)?;
        if observation.iter().filter(|v| **v != 0.0).count() == 1 {
            Some(idx)
        } else {
            None
        }
    }
}

impl Environment for TabularEnv {
    fn reset(&mut self) -> Result<TimeStep> {
        self.state = self.mdp.start_state;
        self.steps = 0;
        self.done = false;
        self.started = true;
        Ok(TimeStep::first(Self::one_hot(self.mdp.num_states, self.state)))
    }

    fn step(&mut self, action: &Action) -> Result<TimeStep> {
        if !self.started {
            return Err(Error::Protocol("step before reset".into()));
        }
        if self.done {
            return Err(Error::Protocol("step after terminal timestep".into()));
        }
        let a = action.discrete()?;
        if a >= self.mdp.num_actions {
            return Err(Error::SpecViolation(format!("action {a} out of range")));
        }
        let reward = self.mdp.reward(self.state, a);
        self.state = self.mdp.sample_next(self.state, a, &mut self.rng);
        self.steps += 1;
        let obs = Self::one_hot(self.mdp.num_states, self.state);
        if self.mdp.terminal[self.state] || self.steps >= self.episode_cap {
            self.done = true;
            Ok(TimeStep::last(reward, obs))
        } else {
            Ok(TimeStep::mid(reward, obs))
        }
    }

    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Discrete { num_actions: self.mdp.num_actions }
    }

    fn observation_spec(&self) -> ObservationSpec {
        ObservationSpec { dim: self.mdp.num_states }
    }
}
