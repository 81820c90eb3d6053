use ndarray::{concatenate, s, Array2, Axis};
use rand::rngs::StdRng;
use rand::Rng;

use crate::actors::{epsilon_greedy, EpsilonSchedule, Policy};
use crate::adders::{SequenceSlice, StepExtras};
use crate::agents::learner::{Algorithm, Trainable, Update};
use crate::agents::source::ExperienceBatch;
use crate::agents::stack_rows;
use crate::error::{Error, Result};
use crate::interfaces::{Action, NamedTensor, ParameterSnapshot};
use crate::kernels::{double_q_target, r2d2_priority, td_loss};
use crate::neural::{row_batch, Activation, Adam, DenseNet, GruCell, Head, Parameterized, TargetUpdate};

const PREFIX: &str = "rq";

/// A GRU core followed by a feed-forward Q head.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentQ {
    pub core: GruCell,
    pub head: DenseNet,
}

impl RecurrentQ {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: usize, head_hidden: &[usize], num_actions: usize, rng: &mut R) -> Result<Self> {
        let core = GruCell::new(obs_dim, hidden, rng)?;
        let mut sizes = vec![hidden];
        sizes.extend_from_slice(head_hidden);
        sizes.push(num_actions);
        let head = DenseNet::new(&sizes, Activation::Relu, Head::Linear, rng)?;
        Ok(Self { core, head })
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.core.hidden_dim()]
    }

    /// Consumes one observation: returns the next state and its Q-values.
    pub fn step(&self, observation: &[f64], state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = self.core.step(&row_batch(observation), &row_batch(state))?;
        let q = self.head.predict(&h)?;
        Ok((h.row(0).to_vec(), q.row(0).to_vec()))
    }
}

impl Parameterized for RecurrentQ {
    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let core = self.core.layout().into_iter().map(|(n, s)| (format!("core.{n}"), s));
        let head = self.head.layout().into_iter().map(|(n, s)| (format!("head.{n}"), s));
        core.chain(head).collect()
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut out = self.core.params();
        out.extend(self.head.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.core.params_mut();
        out.extend(self.head.params_mut());
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct R2d2Config {
    pub gamma: f64,
    pub target_update: TargetUpdate,
    pub importance_exponent: f64,
    pub priority_mix: f64,
    /// Start unrolls from the recorded actor state rather than zeros.
    pub use_stored_state: bool,
}

/// Double Q-learning over fixed-length sequences with a recurrent core,
/// burn-in and mixed max/mean priorities.
pub struct R2d2 {
    net: Trainable<RecurrentQ>,
    config: R2d2Config,
}

impl R2d2 {
    pub fn new(net: RecurrentQ, opt: Adam, config: R2d2Config) -> Self {
        Self { net: Trainable::new(net, true, opt), config }
    }

    pub fn network(&self) -> &RecurrentQ {
        &self.net.net
    }

    pub fn config_mut(&mut self) -> &mut R2d2Config {
        &mut self.config
    }

    /// Loss, gradients, per-slice priorities and the number of steps that
    /// contributed to the loss.
    fn loss(&self, batch: &ExperienceBatch) -> Result<(f64, Vec<Vec<f64>>, Vec<f64>, usize, f64)> {
        let slices: Vec<SequenceSlice> = batch.decode()?;
        let b = slices.len();
        let len = slices[0].len();
        let burn = slices[0].burn_in_length as usize;
        if slices.iter().any(|s| s.len() != len || s.burn_in_length as usize != burn) {
            return Err(Error::Shape("sequences in a batch must share length and burn-in".into()));
        }
        if burn >= len {
            return Err(Error::InvalidArgument(format!("burn-in {burn} leaves no learning steps of {len}")));
        }
        let online = &self.net.net;
        let target = self.net.target();
        let h_dim = online.core.hidden_dim();
        let mut h0 = Array2::zeros((b, h_dim));
        if self.config.use_stored_state {
            for (i, s) in slices.iter().enumerate() {
                match s.start_recurrent_state.len() {
                    0 => {}
                    n if n == h_dim => h0.row_mut(i).assign(&ndarray::ArrayView1::from(&s.start_recurrent_state)),
                    n => return Err(Error::Shape(format!("stored state has {n} entries, core has {h_dim}"))),
                }
            }
        }
        let inputs: Vec<Array2<f64>> = (0..=len)
            .map(|t| stack_rows(slices.iter().map(|s| s.observations[t].as_slice())))
            .collect::<Result<_>>()?;

        // Burn-in only initialises the state; no gradient flows through it.
        let h_start = if burn > 0 { online.core.unroll(&h0, &inputs[..burn])?.0.pop().unwrap() } else { h0.clone() };
        let (states, tape) = online.core.unroll(&h_start, &inputs[burn..])?;
        let views: Vec<_> = states.iter().map(|s| s.view()).collect();
        let stacked = concatenate(Axis(0), &views).expect("equal widths");
        let (q_all, head_tape) = online.head.forward(&stacked)?;

        let (target_states, _) = target.core.unroll(&h0, &inputs)?;
        let tviews: Vec<_> = target_states[burn..].iter().map(|s| s.view()).collect();
        let q_target = target.head.predict(&concatenate(Axis(0), &tviews).expect("equal widths"))?;

        let learn = len - burn;
        let weights = batch.importance_weights(self.config.importance_exponent);
        let mut targets = Vec::new();
        let mut preds = Vec::new();
        let mut entry_weights = Vec::new();
        let mut entries = Vec::new();
        let mut td_by_slice = vec![vec![0.0; learn]; b];
        for (i, slice) in slices.iter().enumerate() {
            for k in 0..learn {
                let t = burn + k;
                if !slice.mask[t] {
                    continue;
                }
                let a = slice.actions[t].discrete()?;
                let row = k * b + i;
                let next = (k + 1) * b + i;
                let discount = if slice.is_terminal_step(t) { 0.0 } else { self.config.gamma };
                let online_next = q_all.row(next).to_vec();
                let target_next = q_target.row(next).to_vec();
                targets.push(double_q_target(slice.rewards[t], discount, &online_next, &target_next));
                preds.push(q_all[[row, a]]);
                entry_weights.push(weights[i]);
                entries.push((i, k, row, a));
            }
        }
        let td = td_loss(&targets, &preds, Some(&entry_weights))?;
        let mut grad_out = Array2::zeros(q_all.raw_dim());
        for (e, (i, k, row, a)) in entries.iter().enumerate() {
            grad_out[[*row, *a]] = td.grad[e];
            td_by_slice[*i][*k] = td.td_errors[e];
        }
        let (head_grads, grad_in) = online.head.backward(&head_tape, &grad_out)?;
        let grad_states: Vec<Array2<f64>> =
            (0..=learn).map(|k| grad_in.slice(s![k * b..(k + 1) * b, ..]).to_owned()).collect();
        let (mut grads, _, _) = online.core.backward(&tape, &grad_states)?;
        grads.extend(head_grads);
        let priorities = slices
            .iter()
            .zip(&td_by_slice)
            .map(|(s, td)| {
                let mask = &s.mask[burn..];
                if mask.iter().any(|m| *m) {
                    r2d2_priority(td, mask, self.config.priority_mix)
                } else {
                    Ok(0.0)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean_abs = if td.td_errors.is_empty() {
            0.0
        } else {
            td.td_errors.iter().map(|d| d.abs()).sum::<f64>() / td.td_errors.len() as f64
        };
        Ok((td.loss, grads, priorities, entries.len(), mean_abs))
    }

    /// Loss on a batch without updating anything; exposes how many steps
    /// contribute after burn-in and masking.
    pub fn evaluate_loss(&self, batch: &ExperienceBatch) -> Result<(f64, usize)> {
        let (loss, _, _, count, _) = self.loss(batch)?;
        Ok((loss, count))
    }
}

impl Algorithm for R2d2 {
    fn update(&mut self, batch: &ExperienceBatch, step: u64, _rng: &mut StdRng) -> Result<Update> {
        let (loss, grads, priorities, _, mean_abs) = self.loss(batch)?;
        self.net.apply(&grads)?;
        if let Some(target) = &mut self.net.target {
            self.config.target_update.apply(step, &self.net.net, target);
        }
        Ok(Update { losses: vec![("td", loss)], priorities: Some(priorities), mean_abs_td: Some(mean_abs), warnings: vec![] })
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

/// Epsilon-greedy over a recurrent Q-network; records the state held
/// before each observation so learners can restart unrolls from it.
pub struct RecurrentQPolicy {
    net: RecurrentQ,
    epsilon: EpsilonSchedule,
    state: Vec<f64>,
    steps: u64,
}

impl RecurrentQPolicy {
    pub fn new(net: RecurrentQ, epsilon: EpsilonSchedule) -> Self {
        let state = net.initial_state();
        Self { net, epsilon, state, steps: 0 }
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }
}

impl Policy for RecurrentQPolicy {
    fn act(&mut self, observation: &[f64], rng: &mut StdRng) -> Result<(Action, StepExtras)> {
        let before = self.state.clone();
        let (state, q) = self.net.step(observation, &self.state)?;
        self.state = state;
        let a = epsilon_greedy(&q, self.epsilon.value(self.steps), rng)?;
        self.steps += 1;
        Ok((Action::Discrete(a), StepExtras { recurrent_state: before, ..Default::default() }))
    }

    fn begin_episode(&mut self) {
        self.state = self.net.initial_state();
    }

    fn load(&mut self, snapshot: &ParameterSnapshot) -> Result<()> {
        self.net.load_tensors(&format!("{PREFIX}/"), &snapshot.tensors)
    }
}
