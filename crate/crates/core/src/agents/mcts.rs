use std::sync::Arc;

use ndarray::Array2;
use rand::rngs::StdRng;

use crate::actors::{sample_categorical, Policy};
use crate::adders::{Episode, StepExtras};
use crate::agents::config::ValueTarget;
use crate::agents::learner::{Algorithm, Trainable, Update};
use crate::agents::source::ExperienceBatch;
use crate::agents::stack_rows;
use crate::environments::Simulator;
use crate::error::{Error, Result};
use crate::interfaces::{argmax, Action, NamedTensor, ParameterSnapshot};
use crate::kernels::{mcts_imitation_loss, mcts_search, MctsConfig, SearchResult};
use crate::neural::{row_batch, softmax, Adam, DenseNet, Parameterized};

const POLICY: &str = "policy";
const VALUE: &str = "value";
/// Mass added to every search-policy entry before taking the imitation KL.
pub const SEARCH_POLICY_FLOOR: f64 = 1e-4;

/// Learns a prior policy by imitating recorded search policies and a value
/// function by regression onto observed returns.
pub struct Mcts {
    policy: Trainable<DenseNet>,
    value: Trainable<DenseNet>,
    gamma: f64,
    value_target: ValueTarget,
}

impl Mcts {
    pub fn new(policy: DenseNet, value: DenseNet, policy_opt: Adam, value_opt: Adam, gamma: f64, value_target: ValueTarget) -> Result<Self> {
        if value.output_dim() != 1 || value.input_dim() != policy.input_dim() {
            return Err(Error::Shape("value network must map observations to one output".into()));
        }
        if let ValueTarget::NStep(0) = value_target {
            return Err(Error::Config("n-step value target needs n >= 1".into()));
        }
        Ok(Self {
            policy: Trainable::new(policy, false, policy_opt),
            value: Trainable::new(value, false, value_opt),
            gamma,
            value_target,
        })
    }

    pub fn policy_network(&self) -> &DenseNet {
        &self.policy.net
    }

    pub fn value_network(&self) -> &DenseNet {
        &self.value.net
    }

    /// Regression targets for every step of `episode`. `values` holds the
    /// current estimate at each observation plus the final one.
    fn targets(&self, episode: &Episode, values: &[f64]) -> Vec<f64> {
        let t_len = episode.len();
        // A truncated episode is bootstrapped from its final observation.
        let tail = if episode.truncated { values[t_len] } else { 0.0 };
        match self.value_target {
            ValueTarget::MonteCarlo => {
                let mut out = vec![0.0; t_len];
                let mut acc = tail;
                for t in (0..t_len).rev() {
                    acc = episode.rewards[t] + self.gamma * acc;
                    out[t] = acc;
                }
                out
            }
            ValueTarget::NStep(n) => (0..t_len)
                .map(|t| {
                    let end = (t + n).min(t_len);
                    let mut g = 0.0;
                    let mut disc = 1.0;
                    for r in &episode.rewards[t..end] {
                        g += disc * r;
                        disc *= self.gamma;
                    }
                    let bootstrap = if end < t_len { values[end] } else { tail };
                    g + disc * bootstrap
                })
                .collect(),
        }
    }
}

impl Algorithm for Mcts {
    fn update(&mut self, batch: &ExperienceBatch, _step: u64, _rng: &mut StdRng) -> Result<Update> {
        let episodes: Vec<Episode> = batch.decode()?;
        for e in &episodes {
            if e.is_empty() || e.extras.len() != e.len() {
                return Err(Error::Shape("episodes must carry one search policy per step".into()));
            }
        }
        let total: usize = episodes.iter().map(|e| e.len()).sum();
        let norm = 1.0 / total as f64;
        let obs = stack_rows(episodes.iter().flat_map(|e| e.observations.iter().map(|o| o.as_slice())))?;
        let (logits, policy_tape) = self.policy.net.forward(&obs)?;
        let (values, value_tape) = self.value.net.forward(&obs)?;
        let finals = stack_rows(episodes.iter().map(|e| e.final_observation.as_slice()))?;
        let final_values = self.value.net.predict(&finals)?;

        let mut policy_grad = Array2::zeros(logits.raw_dim());
        let mut value_grad = Array2::zeros(values.raw_dim());
        let (mut policy_loss, mut value_loss, mut abs_td) = (0.0, 0.0, 0.0);
        let mut offset = 0;
        for (i, e) in episodes.iter().enumerate() {
            let mut v: Vec<f64> = (0..e.len()).map(|t| values[[offset + t, 0]]).collect();
            v.push(final_values[[i, 0]]);
            let targets = self.targets(e, &v);
            for t in 0..e.len() {
                let row = offset + t;
                let (kl, g) = mcts_imitation_loss(&logits.row(row).to_vec(), &e.extras[t], SEARCH_POLICY_FLOOR)?;
                policy_loss += kl * norm;
                for (j, gj) in g.iter().enumerate() {
                    policy_grad[[row, j]] = gj * norm;
                }
                let delta = targets[t] - v[t];
                value_loss += delta * delta * norm;
                abs_td += delta.abs() * norm;
                value_grad[[row, 0]] = -2.0 * delta * norm;
            }
            offset += e.len();
        }
        let (pg, _) = self.policy.net.backward(&policy_tape, &policy_grad)?;
        let (vg, _) = self.value.net.backward(&value_tape, &value_grad)?;
        self.policy.apply(&pg)?;
        self.value.apply(&vg)?;
        Ok(Update {
            losses: vec![("loss", policy_loss + value_loss), ("imitation", policy_loss), ("value", value_loss)],
            priorities: None,
            mean_abs_td: Some(abs_td),
            warnings: vec![],
        })
    }

    fn policy_tensors(&self) -> Vec<NamedTensor> {
        let mut out = self.policy.net.to_tensors(&format!("{POLICY}/"));
        out.extend(self.value.net.to_tensors(&format!("{VALUE}/")));
        out
    }

    fn state_tensors(&self) -> Vec<NamedTensor> {
        let mut out = self.policy.state_tensors(POLICY);
        out.extend(self.value.state_tensors(VALUE));
        out
    }

    fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        self.policy.load_state(POLICY, tensors)?;
        self.value.load_state(VALUE, tensors)
    }
}

/// Plans with a perfect simulator at every step, guided by the learned
/// prior and value networks. Records the search policy for the learner.
pub struct MctsPolicy {
    policy: DenseNet,
    value: DenseNet,
    simulator: Arc<dyn Simulator>,
    config: MctsConfig,
    sample: bool,
    last: Option<SearchResult>,
}

impl MctsPolicy {
    /// `sample` draws actions from the search policy; otherwise the most
    /// probable action is taken.
    pub fn new(policy: DenseNet, value: DenseNet, simulator: Arc<dyn Simulator>, config: MctsConfig, sample: bool) -> Self {
        Self { policy, value, simulator, config, sample, last: None }
    }

    pub fn search(&self, observation: &[f64]) -> Result<SearchResult> {
        let mut prior = |o: &[f64]| -> Result<Vec<f64>> { Ok(softmax(&self.policy.predict(&row_batch(o))?.row(0).to_vec())) };
        let mut value = |o: &[f64]| -> Result<f64> { Ok(self.value.predict(&row_batch(o))?[[0, 0]]) };
        let (result, _) = mcts_search(observation, self.simulator.as_ref(), &mut prior, &mut value, &self.config)?;
        Ok(result)
    }

    /// Statistics of the most recent search.
    pub fn last_search(&self) -> Option<&SearchResult> {
        self.last.as_ref()
    }
}

impl Policy for MctsPolicy {
    fn act(&mut self, observation: &[f64], rng: &mut StdRng) -> Result<(Action, StepExtras)> {
        let result = self.search(observation)?;
        let a = if self.sample { sample_categorical(&result.policy, rng) } else { argmax(&result.policy) };
        let extras = StepExtras { log_prob: result.policy[a].ln(), policy: result.policy.clone(), ..Default::default() };
        self.last = Some(result);
        Ok((Action::Discrete(a), extras))
    }

    fn load(&mut self, snapshot: &ParameterSnapshot) -> Result<()> {
        self.policy.load_tensors(&format!("{POLICY}/"), &snapshot.tensors)?;
        self.value.load_tensors(&format!("{VALUE}/"), &snapshot.tensors)
    }
}
