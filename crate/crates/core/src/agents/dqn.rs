use ndarray::Array2;
use rand::rngs::StdRng;

use crate::actors::{epsilon_greedy, EpsilonSchedule, Policy};
use crate::adders::{StepExtras, Transition};
use crate::agents::learner::{Algorithm, Trainable, Update};
use crate::agents::source::ExperienceBatch;
use crate::agents::stack_rows;
use crate::error::Result;
use crate::interfaces::{Action, NamedTensor, ParameterSnapshot};
use crate::kernels::{double_q_target, td_loss};
use crate::neural::{row_batch, Adam, DenseNet, Parameterized, TargetUpdate};

const PREFIX: &str = "q";

/// Double Q-learning on n-step transitions with importance-weighted TD
/// loss and `|delta|` priorities.
pub struct Dqn {
    q: Trainable<DenseNet>,
    target_update: TargetUpdate,
    importance_exponent: f64,
}

impl Dqn {
    pub fn new(q: DenseNet, opt: Adam, target_update: TargetUpdate, importance_exponent: f64) -> Self {
        Self { q: Trainable::new(q, true, opt), target_update, importance_exponent }
    }

    pub fn network(&self) -> &DenseNet {
        &self.q.net
    }
}

impl Algorithm for Dqn {
    fn update(&mut self, batch: &ExperienceBatch, step: u64, _rng: &mut StdRng) -> Result<Update> {
        let transitions: Vec<Transition> = batch.decode()?;
        let obs = stack_rows(transitions.iter().map(|t| t.observation.as_slice()))?;
        let next = stack_rows(transitions.iter().map(|t| t.next_observation.as_slice()))?;
        let (q, tape) = self.q.net.forward(&obs)?;
        let online_next = self.q.net.predict(&next)?;
        let target_next = self.q.target().predict(&next)?;
        let mut targets = Vec::with_capacity(transitions.len());
        let mut preds = Vec::with_capacity(transitions.len());
        let mut actions = Vec::with_capacity(transitions.len());
        for (i, t) in transitions.iter().enumerate() {
            let a = t.action.discrete()?;
            let online_row = online_next.row(i).to_vec();
            let target_row = target_next.row(i).to_vec();
            targets.push(double_q_target(t.reward, t.discount, &online_row, &target_row));
            preds.push(q[[i, a]]);
            actions.push(a);
        }
        let weights = batch.importance_weights(self.importance_exponent);
        let td = td_loss(&targets, &preds, Some(&weights))?;
        let mut grad_out = Array2::zeros(q.raw_dim());
        for (i, a) in actions.iter().enumerate() {
            grad_out[[i, *a]] = td.grad[i];
        }
        let (grads, _) = self.q.net.backward(&tape, &grad_out)?;
        self.q.apply(&grads)?;
        if let Some(target) = &mut self.q.target {
            self.target_update.apply(step, &self.q.net, target);
        }
        let priorities: Vec<f64> = td.td_errors.iter().map(|d| d.abs()).collect();
        let mean_abs_td = priorities.iter().sum::<f64>() / priorities.len() as f64;
        Ok(Update { losses: vec![("td", td.loss)], priorities: Some(priorities), mean_abs_td: Some(mean_abs_td), warnings: vec![] })
    }

    fn policy_tensors(&self) -> Vec<NamedTensor> {
        self.q.net.to_tensors(&format!("{PREFIX}/"))
    }

    fn state_tensors(&self) -> Vec<NamedTensor> {
        self.q.state_tensors(PREFIX)
    }

    fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        self.q.load_state(PREFIX, tensors)
    }
}

/// Epsilon-greedy over a Q-network's outputs.
pub struct QPolicy {
    q: DenseNet,
    epsilon: EpsilonSchedule,
    steps: u64,
}

impl QPolicy {
    pub fn new(q: DenseNet, epsilon: EpsilonSchedule) -> Self {
        Self { q, epsilon, steps: 0 }
    }

    pub fn q_values(&self, observation: &[f64]) -> Result<Vec<f64>> {
        Ok(self.q.predict(&row_batch(observation))?.row(0).to_vec())
    }
}

impl Policy for QPolicy {
    fn act(&mut self, observation: &[f64], rng: &mut StdRng) -> Result<(Action, StepExtras)> {
        let q = self.q_values(observation)?;
        let a = epsilon_greedy(&q, self.epsilon.value(self.steps), rng)?;
        self.steps += 1;
        Ok((Action::Discrete(a), StepExtras::default()))
    }

    fn load(&mut self, snapshot: &ParameterSnapshot) -> Result<()> {
        self.q.load_tensors(&format!("{PREFIX}/"), &snapshot.tensors)
    }
}
