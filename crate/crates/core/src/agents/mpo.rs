use ndarray::Array2;
use rand::rngs::StdRng;
use rand_distr::{Distribution, StandardNormal};

use crate::actors::{sample_categorical, Policy};
use crate::adders::{StepExtras, Transition};
use crate::agents::d4pg::CriticKind;
use crate::agents::learner::{scalar, Algorithm, Trainable, Update};
use crate::agents::source::ExperienceBatch;
use crate::agents::stack_rows;
use crate::error::{Error, Result};
use crate::interfaces::{argmax, Action, NamedTensor, ParameterSnapshot};
use crate::kernels::{
    categorical_ce_loss, categorical_mean, categorical_project, gaussian_kl, mpo_alpha_step, mpo_discrete_policy_loss,
    mpo_temperature_loss, mpo_weights, MpoDuals, MIN_TEMPERATURE,
};
use crate::neural::{row_batch, sigmoid, softmax, Adam, DenseNet, Parameterized, TargetUpdate};

const POLICY: &str = "policy";
const CRITIC: &str = "critic";
/// Floor added to the softplus standard deviation of Gaussian policies.
pub const MIN_STD: f64 = 1e-3;

/// Action space handled by [`Mpo`].
#[derive(Clone, Debug, PartialEq)]
pub enum MpoActions {
    /// Policy emits logits; the critic emits one value (or distribution)
    /// per action from the observation alone.
    Discrete { num_actions: usize },
    /// Policy emits `[mean, raw_std]`; the critic reads `[observation, action]`.
    /// `num_samples` candidate actions are drawn per state.
    Continuous { low: Vec<f64>, high: Vec<f64>, num_samples: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpoConfig {
    pub duals: MpoDuals,
    pub dual_learning_rate: f64,
    pub target_update: TargetUpdate,
}

/// Maximum a posteriori policy optimisation with a scalar critic, or with
/// a categorical critic (the distributional variant).
pub struct Mpo {
    policy: Trainable<DenseNet>,
    critic: Trainable<DenseNet>,
    kind: CriticKind,
    actions: MpoActions,
    duals: MpoDuals,
    config: MpoConfig,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Splits a Gaussian policy output row into mean and standard deviation.
fn gaussian_params(row: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = row.len() / 2;
    (row[..d].to_vec(), row[d..].iter().map(|r| softplus(*r) + MIN_STD).collect())
}

impl Mpo {
    pub fn new(policy: DenseNet, critic: DenseNet, policy_opt: Adam, critic_opt: Adam, kind: CriticKind, actions: MpoActions, config: MpoConfig) -> Result<Self> {
        let k = kind.output_dim();
        let ok = match &actions {
            MpoActions::Discrete { num_actions } => {
                policy.output_dim() == *num_actions
                    && critic.input_dim() == policy.input_dim()
                    && critic.output_dim() == num_actions * k
            }
            MpoActions::Continuous { low, high, num_samples } => {
                if *num_samples < 2 {
                    return Err(Error::Config("MPO needs at least 2 candidate actions per state".into()));
                }
                low.len() == high.len()
                    && policy.output_dim() == 2 * low.len()
                    && critic.input_dim() == policy.input_dim() + low.len()
                    && critic.output_dim() == k
            }
        };
        if !ok {
            return Err(Error::Shape("MPO network shapes do not match the action space and critic".into()));
        }
        if !(config.dual_learning_rate > 0.0) {
            return Err(Error::Config("MPO dual learning rate must be > 0".into()));
        }
        Ok(Self {
            policy: Trainable::new(policy, true, policy_opt),
            critic: Trainable::new(critic, true, critic_opt),
            kind,
            actions,
            duals: config.duals,
            config,
        })
    }

    pub fn duals(&self) -> MpoDuals {
        self.duals
    }

    pub fn policy_network(&self) -> &DenseNet {
        &self.policy.net
    }

    /// Scalar value of one critic output unit (a value or a set of logits).
    fn expected(&self, unit: &[f64]) -> f64 {
        match &self.kind {
            CriticKind::Scalar => unit[0],
            CriticKind::Categorical(s) => categorical_mean(&softmax(unit), &s.atoms),
        }
    }

    /// Loss, output gradient and |TD| for one item whose target is the
    /// `weights`-mixture of the target critic's `units`.
    fn critic_item(&self, pred: &[f64], weights: &[f64], units: &[&[f64]], reward: f64, discount: f64) -> Result<(f64, Vec<f64>, f64)> {
        match &self.kind {
            CriticKind::Scalar => {
                let next: f64 = weights.iter().zip(units).map(|(w, u)| w * u[0]).sum();
                let delta = reward + discount * next - pred[0];
                Ok((delta * delta, vec![-2.0 * delta], delta.abs()))
            }
            CriticKind::Categorical(support) => {
                let mut mixture = vec![0.0; support.len()];
                for (w, u) in weights.iter().zip(units) {
                    for (m, p) in mixture.iter_mut().zip(softmax(u)) {
                        *m += w * p;
                    }
                }
                let shifted: Vec<f64> = support.atoms.iter().map(|z| reward + discount * z).collect();
                let projected = categorical_project(&shifted, &mixture, support);
                let (loss, grad) = categorical_ce_loss(&projected, pred)?;
                let abs_td = (categorical_mean(&projected, &support.atoms) - self.expected(pred)).abs();
                Ok((loss, grad, abs_td))
            }
        }
    }

    fn temperature_step(&mut self, q_sets: &[Vec<f64>], priors: Option<&[Vec<f64>]>, warnings: &mut Vec<&'static str>) -> Result<f64> {
        let (g, dg) = mpo_temperature_loss(q_sets, priors, self.duals.eta, self.duals.epsilon_eta)?;
        let eta = self.duals.eta - self.config.dual_learning_rate * dg;
        if eta < MIN_TEMPERATURE || !eta.is_finite() {
            warnings.push("temperature clamped");
            self.duals.eta = MIN_TEMPERATURE;
        } else {
            self.duals.eta = eta;
        }
        Ok(g)
    }

    fn update_discrete(&mut self, transitions: &[Transition], num_actions: usize) -> Result<Update> {
        let b = transitions.len() as f64;
        let k = self.kind.output_dim();
        let obs = stack_rows(transitions.iter().map(|t| t.observation.as_slice()))?;
        let next = stack_rows(transitions.iter().map(|t| t.next_observation.as_slice()))?;
        let unit = |row: &[f64], a: usize| row[a * k..(a + 1) * k].to_vec();

        let (critic_out, critic_tape) = self.critic.net.forward(&obs)?;
        let target_next = self.critic.target().predict(&next)?;
        let pi_next = self.policy.target().predict(&next)?;
        let mut critic_grad = Array2::zeros(critic_out.raw_dim());
        let (mut critic_loss, mut abs_td) = (0.0, 0.0);
        for (i, t) in transitions.iter().enumerate() {
            let a = t.action.discrete()?;
            let row = critic_out.row(i).to_vec();
            let next_row = target_next.row(i).to_vec();
            let units: Vec<Vec<f64>> = (0..num_actions).map(|b| unit(&next_row, b)).collect();
            let unit_refs: Vec<&[f64]> = units.iter().map(|u| u.as_slice()).collect();
            let weights = softmax(&pi_next.row(i).to_vec());
            let (l, g, td) = self.critic_item(&unit(&row, a), &weights, &unit_refs, t.reward, t.discount)?;
            critic_loss += l / b;
            abs_td += td / b;
            for (j, gj) in g.iter().enumerate() {
                critic_grad[[i, a * k + j]] = gj / b;
            }
        }

        let target_q = self.critic.target().predict(&obs)?;
        let target_logits = self.policy.target().predict(&obs)?;
        let (logits, policy_tape) = self.policy.net.forward(&obs)?;
        let mut policy_grad = Array2::zeros(logits.raw_dim());
        let (mut policy_loss, mut kl) = (0.0, 0.0);
        let mut q_sets = Vec::with_capacity(transitions.len());
        let mut priors = Vec::with_capacity(transitions.len());
        for i in 0..transitions.len() {
            let row = target_q.row(i).to_vec();
            let q: Vec<f64> = (0..num_actions).map(|a| self.expected(&unit(&row, a))).collect();
            let prior = softmax(&target_logits.row(i).to_vec());
            let terms = mpo_discrete_policy_loss(&q, &prior, &logits.row(i).to_vec(), &self.duals)?;
            policy_loss += terms.loss / b;
            kl += terms.kl / b;
            for (j, g) in terms.grad_logits.iter().enumerate() {
                policy_grad[[i, j]] = g / b;
            }
            q_sets.push(q);
            priors.push(prior);
        }
        let (critic_grads, _) = self.critic.net.backward(&critic_tape, &critic_grad)?;
        let (policy_grads, _) = self.policy.net.backward(&policy_tape, &policy_grad)?;
        self.critic.apply(&critic_grads)?;
        self.policy.apply(&policy_grads)?;
        let mut warnings = Vec::new();
        let dual = self.temperature_step(&q_sets, Some(&priors), &mut warnings)?;
        self.duals.alpha = mpo_alpha_step(self.duals.alpha, kl, self.duals.epsilon, self.config.dual_learning_rate);
        Ok(self.report(critic_loss, policy_loss, dual, kl, abs_td, warnings))
    }

    fn update_continuous(&mut self, transitions: &[Transition], low: &[f64], high: &[f64], m: usize, rng: &mut StdRng) -> Result<Update> {
        let b = transitions.len() as f64;
        let d = low.len();
        let obs = stack_rows(transitions.iter().map(|t| t.observation.as_slice()))?;
        let next = stack_rows(transitions.iter().map(|t| t.next_observation.as_slice()))?;
        let actions = stack_rows(transitions.iter().map(|t| t.action.continuous()).collect::<Result<Vec<_>>>()?)?;
        let clamp = |a: &[f64]| -> Vec<f64> { a.iter().enumerate().map(|(j, x)| x.clamp(low[j], high[j])).collect() };
        let mut sample = |mean: &[f64], std: &[f64]| -> Vec<f64> {
            (0..d)
                .map(|j| {
                    let e: f64 = StandardNormal.sample(rng);
                    mean[j] + std[j] * e
                })
                .collect()
        };

        // Critic: targets average the target critic over sampled next actions.
        let next_params = self.policy.target().predict(&next)?;
        let mut next_rows = Vec::with_capacity(transitions.len() * m);
        for (i, t) in transitions.iter().enumerate() {
            let (mean, std) = gaussian_params(&next_params.row(i).to_vec());
            for _ in 0..m {
                let mut row = t.next_observation.clone();
                row.extend(clamp(&sample(&mean, &std)));
                next_rows.push(row);
            }
        }
        let target_next = self.critic.target().predict(&stack_rows(next_rows.iter().map(|r| r.as_slice()))?)?;
        let mut critic_in = obs.clone();
        critic_in.append(ndarray::Axis(1), actions.view()).map_err(|e| Error::Shape(e.to_string()))?;
        let (critic_out, critic_tape) = self.critic.net.forward(&critic_in)?;
        let mut critic_grad = Array2::zeros(critic_out.raw_dim());
        let (mut critic_loss, mut abs_td) = (0.0, 0.0);
        let uniform = vec![1.0 / m as f64; m];
        for (i, t) in transitions.iter().enumerate() {
            let units: Vec<Vec<f64>> = (0..m).map(|j| target_next.row(i * m + j).to_vec()).collect();
            let unit_refs: Vec<&[f64]> = units.iter().map(|u| u.as_slice()).collect();
            let (l, g, td) = self.critic_item(&critic_out.row(i).to_vec(), &uniform, &unit_refs, t.reward, t.discount)?;
            critic_loss += l / b;
            abs_td += td / b;
            for (j, gj) in g.iter().enumerate() {
                critic_grad[[i, j]] = gj / b;
            }
        }

        // Policy: weighted maximum likelihood on candidates from the target policy.
        let target_params = self.policy.target().predict(&obs)?;
        let mut candidates = Vec::with_capacity(transitions.len());
        let mut cand_rows = Vec::with_capacity(transitions.len() * m);
        for (i, t) in transitions.iter().enumerate() {
            let (mean, std) = gaussian_params(&target_params.row(i).to_vec());
            let set: Vec<Vec<f64>> = (0..m).map(|_| sample(&mean, &std)).collect();
            for a in &set {
                let mut row = t.observation.clone();
                row.extend(clamp(a));
                cand_rows.push(row);
            }
            candidates.push(set);
        }
        let cand_out = self.critic.target().predict(&stack_rows(cand_rows.iter().map(|r| r.as_slice()))?)?;
        let q_sets: Vec<Vec<f64>> =
            (0..transitions.len()).map(|i| (0..m).map(|j| self.expected(&cand_out.row(i * m + j).to_vec())).collect()).collect();
        let (raw, policy_tape) = self.policy.net.forward(&obs)?;
        let mut policy_grad = Array2::zeros(raw.raw_dim());
        let (mut policy_loss, mut kl_mean) = (0.0, 0.0);
        for i in 0..transitions.len() {
            let row = raw.row(i).to_vec();
            let (mu, sigma) = gaussian_params(&row);
            let (mu_t, sigma_t) = gaussian_params(&target_params.row(i).to_vec());
            let w = mpo_weights(&q_sets[i], self.duals.eta)?;
            let mut ml = 0.0;
            let mut d_mu = vec![0.0; d];
            let mut d_sigma = vec![0.0; d];
            for (wj, a) in w.iter().zip(&candidates[i]) {
                for k in 0..d {
                    let z = a[k] - mu[k];
                    let s2 = sigma[k] * sigma[k];
                    ml += wj * (-sigma[k].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - z * z / (2.0 * s2));
                    // Gradients of -ML.
                    d_mu[k] -= wj * z / s2;
                    d_sigma[k] -= wj * (z * z / (s2 * sigma[k]) - 1.0 / sigma[k]);
                }
            }
            let kl = gaussian_kl(&mu_t, &sigma_t, &mu, &sigma);
            for k in 0..d {
                let s2 = sigma[k] * sigma[k];
                let diff = mu[k] - mu_t[k];
                d_mu[k] += self.duals.alpha * diff / s2;
                d_sigma[k] += self.duals.alpha * (1.0 / sigma[k] - (sigma_t[k].powi(2) + diff * diff) / (s2 * sigma[k]));
            }
            policy_loss += (-ml + self.duals.alpha * kl) / b;
            kl_mean += kl / b;
            for k in 0..d {
                policy_grad[[i, k]] = d_mu[k] / b;
                policy_grad[[i, d + k]] = d_sigma[k] * sigmoid(row[d + k]) / b;
            }
        }
        let (critic_grads, _) = self.critic.net.backward(&critic_tape, &critic_grad)?;
        let (policy_grads, _) = self.policy.net.backward(&policy_tape, &policy_grad)?;
        self.critic.apply(&critic_grads)?;
        self.policy.apply(&policy_grads)?;
        let mut warnings = Vec::new();
        let dual = self.temperature_step(&q_sets, None, &mut warnings)?;
        self.duals.alpha = mpo_alpha_step(self.duals.alpha, kl_mean, self.duals.epsilon, self.config.dual_learning_rate);
        Ok(self.report(critic_loss, policy_loss, dual, kl_mean, abs_td, warnings))
    }

    fn report(&self, critic: f64, policy: f64, dual: f64, kl: f64, abs_td: f64, warnings: Vec<&'static str>) -> Update {
        Update {
            losses: vec![
                ("critic", critic),
                ("policy", policy),
                ("temperature_dual", dual),
                ("kl", kl),
                ("eta", self.duals.eta),
                ("alpha", self.duals.alpha),
            ],
            priorities: None,
            mean_abs_td: Some(abs_td),
            warnings,
        }
    }
}

impl Algorithm for Mpo {
    fn update(&mut self, batch: &ExperienceBatch, step: u64, rng: &mut StdRng) -> Result<Update> {
        let transitions: Vec<Transition> = batch.decode()?;
        let update = match self.actions.clone() {
            MpoActions::Discrete { num_actions } => self.update_discrete(&transitions, num_actions)?,
            MpoActions::Continuous { low, high, num_samples } => self.update_continuous(&transitions, &low, &high, num_samples, rng)?,
        };
        for t in [&mut self.critic, &mut self.policy] {
            if let Some(target) = &mut t.target {
                self.config.target_update.apply(step, &t.net, target);
            }
        }
        Ok(update)
    }

    fn policy_tensors(&self) -> Vec<NamedTensor> {
        self.policy.net.to_tensors(&format!("{POLICY}/"))
    }

    fn state_tensors(&self) -> Vec<NamedTensor> {
        let mut out = self.policy.state_tensors(POLICY);
        out.extend(self.critic.state_tensors(CRITIC));
        out.push(NamedTensor::scalar("mpo/eta", self.duals.eta));
        out.push(NamedTensor::scalar("mpo/alpha", self.duals.alpha));
        out
    }

    fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        self.policy.load_state(POLICY, tensors)?;
        self.critic.load_state(CRITIC, tensors)?;
        self.duals.eta = scalar(tensors, "mpo/eta")?;
        self.duals.alpha = scalar(tensors, "mpo/alpha")?;
        Ok(())
    }
}

/// Samples from a diagonal Gaussian policy head, clamped to the action
/// bounds. Greedy mode acts with the mean.
pub struct GaussianPolicy {
    net: DenseNet,
    low: Vec<f64>,
    high: Vec<f64>,
    greedy: bool,
}

impl GaussianPolicy {
    pub fn new(net: DenseNet, low: Vec<f64>, high: Vec<f64>, greedy: bool) -> Result<Self> {
        if net.output_dim() != 2 * low.len() || low.len() != high.len() {
            return Err(Error::Shape("Gaussian policy output must be twice the action dimension".into()));
        }
        Ok(Self { net, low, high, greedy })
    }

    pub fn distribution(&self, observation: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.net.predict(&row_batch(observation))?;
        let (mean, std) = gaussian_params(&out.row(0).to_vec());
        if mean.iter().chain(&std).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("policy distribution".into()));
        }
        Ok((mean, std))
    }
}

impl Policy for GaussianPolicy {
    fn act(&mut self, observation: &[f64], rng: &mut StdRng) -> Result<(Action, StepExtras)> {
        let (mean, std) = self.distribution(observation)?;
        let a = (0..mean.len())
            .map(|j| {
                let x = if self.greedy {
                    mean[j]
                } else {
                    let e: f64 = StandardNormal.sample(rng);
                    mean[j] + std[j] * e
                };
                x.clamp(self.low[j], self.high[j])
            })
            .collect();
        Ok((Action::Continuous(a), StepExtras::default()))
    }

    fn load(&mut self, snapshot: &ParameterSnapshot) -> Result<()> {
        self.net.load_tensors(&format!("{POLICY}/"), &snapshot.tensors)
    }
}

/// Categorical policy over logits with the [`Mpo`] parameter names.
pub struct LogitsPolicy {
    net: DenseNet,
    greedy: bool,
}

impl LogitsPolicy {
    pub fn new(net: DenseNet, greedy: bool) -> Self {
        Self { net, greedy }
    }

    pub fn probabilities(&self, observation: &[f64]) -> Result<Vec<f64>> {
        let logits = self.net.predict(&row_batch(observation))?.row(0).to_vec();
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("policy logits".into()));
        }
        Ok(softmax(&logits))
    }
}

impl Policy for LogitsPolicy {
    fn act(&mut self, observation: &[f64], rng: &mut StdRng) -> Result<(Action, StepExtras)> {
        let p = self.probabilities(observation)?;
        let a = if self.greedy { argmax(&p) } else { sample_categorical(&p, rng) };
        Ok((Action::Discrete(a), StepExtras { log_prob: p[a].ln(), ..Default::default() }))
    }

    fn load(&mut self, snapshot: &ParameterSnapshot) -> Result<()> {
        self.net.load_tensors(&format!("{POLICY}/"), &snapshot.tensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adders::Payload;
    use crate::kernels::entropy;
    use crate::neural::{Activation, AdamConfig, Head};
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn batch_of(transitions: &[Transition]) -> ExperienceBatch {
        let n = transitions.len();
        ExperienceBatch {
            keys: (0..n as u64).collect(),
            payloads: transitions.iter().map(|t| Arc::from(t.encode())).collect(),
            probabilities: vec![1.0 / n as f64; n],
            table_sizes: vec![n; n],
            from_demo: vec![false; n],
        }
    }

    fn config() -> MpoConfig {
        MpoConfig { duals: MpoDuals::default(), dual_learning_rate: 1e-2, target_update: TargetUpdate::Periodic { period: 10 } }
    }

    fn discrete(kind: CriticKind, seed: u64) -> Mpo {
        let mut rng = StdRng::seed_from_u64(seed);
        let policy = DenseNet::new(&[1, 2], Activation::Tanh, Head::Linear, &mut rng).unwrap();
        let critic = DenseNet::new(&[1, 8, 2 * kind.output_dim()], Activation::Tanh, Head::Linear, &mut rng).unwrap();
        let opt = || Adam::new(AdamConfig::new(1e-2));
        Mpo::new(policy, critic, opt(), opt(), kind, MpoActions::Discrete { num_actions: 2 }, config()).unwrap()
    }

    /// Uniformly explored two-armed bandit with payouts 0 and 1.
    fn bandit_batch(rng: &mut StdRng) -> ExperienceBatch {
        let items: Vec<Transition> = (0..32)
            .map(|_| {
                let a = rng.gen_range(0..2);
                Transition {
                    observation: vec![1.0],
                    action: Action::Discrete(a),
                    reward: a as f64,
                    discount: 0.0,
                    next_observation: vec![0.0],
                    n_actual: 1,
                }
            })
            .collect();
        batch_of(&items)
    }

    fn probs(mpo: &Mpo) -> Vec<f64> {
        LogitsPolicy::new(mpo.policy_network().clone(), true).probabilities(&[1.0]).unwrap()
    }

    fn kl(p: &[f64], q: &[f64]) -> f64 {
        p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum()
    }

    #[test]
    fn bandit_greedy_mode_is_best_arm_and_steps_respect_trust_region() {
        for kind in [CriticKind::Scalar, CriticKind::new(11, -1.0, 2.0).unwrap()] {
            let mut mpo = discrete(kind, 0);
            let mut rng = StdRng::seed_from_u64(1);
            let mut max_kl: f64 = 0.0;
            for step in 1..=1000 {
                let before = probs(&mpo);
                mpo.update(&bandit_batch(&mut rng), step, &mut rng).unwrap();
                if step > 100 {
                    max_kl = max_kl.max(kl(&probs(&mpo), &before));
                }
            }
            let p = probs(&mpo);
            assert_eq!(argmax(&p), 1, "policy {p:?}");
            assert!(max_kl <= 5.0 * mpo.duals().epsilon, "per-step KL {max_kl}");
        }
    }

    #[test]
    fn equal_values_pull_policy_towards_target() {
        let mut mpo = discrete(CriticKind::Scalar, 3);
        // A constant critic makes every candidate equally good.
        let last = mpo.critic.net.num_layers() - 1;
        for net in [&mut mpo.critic.net, mpo.critic.target.as_mut().unwrap()] {
            let (w, bias) = net.layer_mut(last);
            w.fill(0.0);
            bias.fill(0.0);
        }
        mpo.policy.target.as_mut().unwrap().layer_mut(0).1.assign(&ndarray::arr1(&[0.0, 0.0]));
        mpo.policy.target.as_mut().unwrap().layer_mut(0).0.fill(0.0);
        mpo.policy.net.layer_mut(0).0.fill(0.0);
        mpo.policy.net.layer_mut(0).1.assign(&ndarray::arr1(&[1.5, -1.5]));
        mpo.config.target_update = TargetUpdate::Periodic { period: 0 };
        let target = vec![0.5, 0.5];
        let mut rng = StdRng::seed_from_u64(0);
        let start = kl(&target, &probs(&mpo));
        for step in 1..=200 {
            mpo.update(&bandit_batch(&mut rng), step, &mut rng).unwrap();
        }
        let end = kl(&target, &probs(&mpo));
        assert!(end < 0.05 * start, "KL {start} -> {end}");
        assert!(entropy(&probs(&mpo)) > 0.99 * 2f64.ln());
    }

    #[test]
    fn continuous_policy_finds_best_action() {
        let mut rng = StdRng::seed_from_u64(5);
        let policy = DenseNet::new(&[1, 2], Activation::Tanh, Head::Linear, &mut rng).unwrap();
        let critic = DenseNet::new(&[2, 32, 1], Activation::Tanh, Head::Linear, &mut rng).unwrap();
        let opt = || Adam::new(AdamConfig::new(1e-2));
        let actions = MpoActions::Continuous { low: vec![-1.0], high: vec![1.0], num_samples: 16 };
        let mut mpo = Mpo::new(policy, critic, opt(), opt(), CriticKind::Scalar, actions, config()).unwrap();
        for step in 1..=1500 {
            let items: Vec<Transition> = (0..32)
                .map(|_| {
                    let a: f64 = rng.gen_range(-1.0..1.0);
                    Transition {
                        observation: vec![1.0],
                        action: Action::Continuous(vec![a]),
                        reward: -(a - 0.5).powi(2),
                        discount: 0.0,
                        next_observation: vec![0.0],
                        n_actual: 1,
                    }
                })
                .collect();
            mpo.update(&batch_of(&items), step, &mut rng).unwrap();
        }
        let p = GaussianPolicy::new(mpo.policy_network().clone(), vec![-1.0], vec![1.0], true).unwrap();
        let (mean, _) = p.distribution(&[1.0]).unwrap();
        assert!((mean[0] - 0.5).abs() < 0.1, "mean {}", mean[0]);
    }

    #[test]
    fn duals_round_trip_through_state() {
        let mut mpo = discrete(CriticKind::Scalar, 0);
        let mut rng = StdRng::seed_from_u64(0);
        mpo.update(&bandit_batch(&mut rng), 1, &mut rng).unwrap();
        let state = mpo.state_tensors();
        let mut other = discrete(CriticKind::Scalar, 9);
        other.load_state(&state).unwrap();
        assert_eq!(other.state_tensors(), state);
        assert_eq!(other.duals(), mpo.duals());
    }
}
