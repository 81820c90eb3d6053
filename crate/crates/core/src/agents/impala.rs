use ndarray::Array2;
use rand::rngs::StdRng;

use crate::actors::{sample_categorical, Policy};
use crate::adders::{SequenceSlice, StepExtras};
use crate::agents::learner::{Algorithm, Trainable, Update};
use crate::agents::source::ExperienceBatch;
use crate::agents::stack_rows;
use crate::error::{Error, Result};
use crate::interfaces::{argmax, Action, NamedTensor, ParameterSnapshot};
use crate::kernels::{impala_policy_gradient, vtrace};
use crate::neural::{log_softmax, row_batch, softmax, Adam, DenseNet, Parameterized};

const PREFIX: &str = "ac";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpalaConfig {
    pub gamma: f64,
    pub entropy_cost: f64,
    pub baseline_cost: f64,
    pub rho_clip: f64,
    pub c_clip: f64,
}

impl Default for ImpalaConfig {
    fn default() -> Self {
        Self { gamma: 0.99, entropy_cost: 0.01, baseline_cost: 0.5, rho_clip: 1.0, c_clip: 1.0 }
    }
}

/// Off-policy actor-critic with V-trace corrections. The network emits
/// `num_actions` logits followed by one state value.
pub struct Impala {
    net: Trainable<DenseNet>,
    num_actions: usize,
    config: ImpalaConfig,
}

impl Impala {
    pub fn new(net: DenseNet, opt: Adam, config: ImpalaConfig) -> Result<Self> {
        if net.output_dim() < 2 {
            return Err(Error::Shape("actor-critic network needs logits and a value output".into()));
        }
        let num_actions = net.output_dim() - 1;
        Ok(Self { net: Trainable::new(net, false, opt), num_actions, config })
    }

    pub fn network(&self) -> &DenseNet {
        &self.net.net
    }

    pub fn policy_probs(&self, observation: &[f64]) -> Result<Vec<f64>> {
        let out = self.net.net.predict(&row_batch(observation))?;
        Ok(softmax(&out.row(0).to_vec()[..self.num_actions]))
    }
}

impl Algorithm for Impala {
    fn update(&mut self, batch: &ExperienceBatch, _step: u64, _rng: &mut StdRng) -> Result<Update> {
        let slices: Vec<SequenceSlice> = batch.decode()?;
        let a_n = self.num_actions;
        // One row per stored observation of every slice.
        let rows = stack_rows(slices.iter().flat_map(|s| s.observations.iter().map(|o| o.as_slice())))?;
        let (out, tape) = self.net.net.forward(&rows)?;
        let mut grad_out = Array2::zeros(out.raw_dim());
        let total_steps: usize = slices.iter().map(|s| s.valid_len()).sum();
        if total_steps == 0 {
            return Err(Error::InvalidArgument("batch holds no valid steps".into()));
        }
        let norm = 1.0 / total_steps as f64;
        let (mut pg_total, mut value_total, mut entropy_total) = (0.0, 0.0, 0.0);
        let mut offset = 0;
        for s in &slices {
            let t_len = s.valid_len();
            let logits: Vec<Vec<f64>> = (0..=t_len).map(|t| out.row(offset + t).to_vec()[..a_n].to_vec()).collect();
            let values: Vec<f64> = (0..=t_len).map(|t| out[[offset + t, a_n]]).collect();
            let mut actions = Vec::with_capacity(t_len);
            let mut target_lp = Vec::with_capacity(t_len);
            let mut discounts = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let a = s.actions[t].discrete()?;
                actions.push(a);
                target_lp.push(log_softmax(&logits[t])[a]);
                discounts.push(if s.is_terminal_step(t) { 0.0 } else { self.config.gamma });
            }
            let vt = vtrace(
                &values,
                &s.rewards[..t_len],
                &discounts,
                &s.behavior_log_probs[..t_len],
                &target_lp,
                self.config.rho_clip,
                self.config.c_clip,
            )?;
            for t in 0..t_len {
                let adv = vt.rhos[t] * vt.pg_advantages[t];
                let terms = impala_policy_gradient(&logits[t], actions[t], adv, self.config.entropy_cost)?;
                pg_total += terms.pg_loss;
                entropy_total += terms.entropy;
                let diff = vt.v_targets[t] - values[t];
                value_total += self.config.baseline_cost * diff * diff;
                for (j, g) in terms.grad_logits.iter().enumerate() {
                    grad_out[[offset + t, j]] = g * norm;
                }
                grad_out[[offset + t, a_n]] = -2.0 * self.config.baseline_cost * diff * norm;
            }
            offset += s.observations.len();
        }
        let (grads, _) = self.net.net.backward(&tape, &grad_out)?;
        self.net.apply(&grads)?;
        let loss = (pg_total + value_total - self.config.entropy_cost * entropy_total) * norm;
        Ok(Update {
            losses: vec![
                ("loss", loss),
                ("policy", pg_total * norm),
                ("baseline", value_total * norm),
                ("entropy", entropy_total * norm),
            ],
            priorities: None,
            mean_abs_td: None,
            warnings: vec![],
        })
    }

    fn policy_tensors(&self) -> Vec<NamedTensor> {
        self.net.net.to_tensors(&format!("{PREFIX}/"))
    }

    fn state_tensors(&self) -> Vec<NamedTensor> {
        self.net.state_tensors(PREFIX)
    }

    fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        self.net.load_state(PREFIX, tensors)
    }
}

/// Samples from `softmax` of the first `num_actions` outputs of a network
/// and records the log-probability of the chosen action. Greedy mode
/// takes the most probable action instead.
pub struct SoftmaxPolicy {
    net: DenseNet,
    prefix: &'static str,
    num_actions: usize,
    greedy: bool,
}

impl SoftmaxPolicy {
    pub fn new(net: DenseNet, prefix: &'static str, num_actions: usize, greedy: bool) -> Self {
        Self { net, prefix, num_actions, greedy }
    }

    /// Policy for the actor-critic network of [`Impala`].
    pub fn actor_critic(net: DenseNet, greedy: bool) -> Self {
        let n = net.output_dim() - 1;
        Self::new(net, PREFIX, n, greedy)
    }

    pub fn probabilities(&self, observation: &[f64]) -> Result<Vec<f64>> {
        let out = self.net.predict(&row_batch(observation))?;
        let logits = &out.row(0).to_vec()[..self.num_actions];
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("policy logits".into()));
        }
        Ok(softmax(logits))
    }
}

impl Policy for SoftmaxPolicy {
    fn act(&mut self, observation: &[f64], rng: &mut StdRng) -> Result<(Action, StepExtras)> {
        let p = self.probabilities(observation)?;
        let a = if self.greedy { argmax(&p) } else { sample_categorical(&p, rng) };
        Ok((Action::Discrete(a), StepExtras { log_prob: p[a].ln(), policy: p, ..Default::default() }))
    }

    fn load(&mut self, snapshot: &ParameterSnapshot) -> Result<()> {
        self.net.load_tensors(&format!("{}/", self.prefix), &snapshot.tensors)
    }
}
