use ndarray::{concatenate, s, Array2, Axis};
use rand::rngs::StdRng;
use rand_distr::{Distribution, Normal};

use crate::actors::Policy;
use crate::adders::{StepExtras, Transition};
use crate::agents::learner::{Algorithm, Trainable, Update};
use crate::agents::source::ExperienceBatch;
use crate::agents::stack_rows;
use crate::error::{Error, Result};
use crate::interfaces::{Action, NamedTensor, ParameterSnapshot};
use crate::kernels::{categorical_ce_loss, categorical_mean, categorical_project, td_loss, CategoricalSupport};
use crate::neural::{row_batch, softmax, Adam, DenseNet, Parameterized, TargetUpdate};

const POLICY: &str = "policy";
const CRITIC: &str = "critic";

/// Scalar critics give DDPG; categorical critics give D4PG. A single-atom
/// support degenerates to a point mass whose location is the scalar critic.
#[derive(Clone, Debug, PartialEq)]
pub enum CriticKind {
    Scalar,
    Categorical(CategoricalSupport),
}

impl CriticKind {
    pub fn new(num_atoms: usize, v_min: f64, v_max: f64) -> Result<Self> {
        if num_atoms <= 1 {
            Ok(CriticKind::Scalar)
        } else {
            Ok(CriticKind::Categorical(CategoricalSupport::new(v_min, v_max, num_atoms)?))
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            CriticKind::Scalar => 1,
            CriticKind::Categorical(s) => s.len(),
        }
    }
}

/// Deterministic policy gradient with a scalar or distributional critic
/// over `[observation, action]` inputs.
pub struct D4pg {
    policy: Trainable<DenseNet>,
    critic: Trainable<DenseNet>,
    kind: CriticKind,
    target_update: TargetUpdate,
}

impl D4pg {
    pub fn new(
        policy: DenseNet,
        critic: DenseNet,
        policy_opt: Adam,
        critic_opt: Adam,
        kind: CriticKind,
        target_update: TargetUpdate,
    ) -> Result<Self> {
        if critic.input_dim() != policy.input_dim() + policy.output_dim() {
            return Err(Error::Shape("critic input must be observation plus action".into()));
        }
        if critic.output_dim() != kind.output_dim() {
            return Err(Error::Shape(format!("critic has {} outputs, expected {}", critic.output_dim(), kind.output_dim())));
        }
        Ok(Self {
            policy: Trainable::new(policy, true, policy_opt),
            critic: Trainable::new(critic, true, critic_opt),
            kind,
            target_update,
        })
    }

    pub fn policy_network(&self) -> &DenseNet {
        &self.policy.net
    }

    pub fn critic_network(&self) -> &DenseNet {
        &self.critic.net
    }

    /// Expected critic value per row of a critic output.
    fn values(&self, out: &Array2<f64>) -> Vec<f64> {
        match &self.kind {
            CriticKind::Scalar => out.column(0).to_vec(),
            CriticKind::Categorical(support) => out
                .rows()
                .into_iter()
                .map(|r| categorical_mean(&softmax(&r.to_vec()), &support.atoms))
                .collect(),
        }
    }

    /// Critic loss and output gradient against bootstrapped targets.
    fn critic_loss(&self, out: &Array2<f64>, target_out: &Array2<f64>, transitions: &[Transition]) -> Result<(f64, Array2<f64>, f64)> {
        let b = transitions.len() as f64;
        let mut grad = Array2::zeros(out.raw_dim());
        match &self.kind {
            CriticKind::Scalar => {
                let targets: Vec<f64> =
                    transitions.iter().zip(target_out.column(0)).map(|(t, q)| t.reward + t.discount * q).collect();
                let preds = out.column(0).to_vec();
                let td = td_loss(&targets, &preds, None)?;
                for (i, g) in td.grad.iter().enumerate() {
                    grad[[i, 0]] = *g;
                }
                let mean_abs = td.td_errors.iter().map(|d| d.abs()).sum::<f64>() / b;
                Ok((td.loss, grad, mean_abs))
            }
            CriticKind::Categorical(support) => {
                let mut loss = 0.0;
                let mut mean_abs = 0.0;
                for (i, t) in transitions.iter().enumerate() {
                    let next_probs = softmax(&target_out.row(i).to_vec());
                    let shifted: Vec<f64> = support.atoms.iter().map(|z| t.reward + t.discount * z).collect();
                    let projected = categorical_project(&shifted, &next_probs, support);
                    let logits = out.row(i).to_vec();
                    let (l, g) = categorical_ce_loss(&projected, &logits)?;
                    loss += l / b;
                    for (j, gj) in g.iter().enumerate() {
                        grad[[i, j]] = gj / b;
                    }
                    let target_mean = categorical_mean(&projected, &support.atoms);
                    mean_abs += (target_mean - categorical_mean(&softmax(&logits), &support.atoms)).abs() / b;
                }
                Ok((loss, grad, mean_abs))
            }
        }
    }

    /// Gradient of `-mean_i E[Z(o_i, a_i)]` with respect to the critic output.
    fn ascent_output_grad(&self, out: &Array2<f64>) -> Array2<f64> {
        let b = out.nrows() as f64;
        let mut grad = Array2::zeros(out.raw_dim());
        match &self.kind {
            CriticKind::Scalar => grad.fill(-1.0 / b),
            CriticKind::Categorical(support) => {
                for (i, row) in out.rows().into_iter().enumerate() {
                    let p = softmax(&row.to_vec());
                    let mean = categorical_mean(&p, &support.atoms);
                    for (j, (pj, zj)) in p.iter().zip(&support.atoms).enumerate() {
                        grad[[i, j]] = -pj * (zj - mean) / b;
                    }
                }
            }
        }
        grad
    }
}

impl Algorithm for D4pg {
    fn update(&mut self, batch: &ExperienceBatch, step: u64, _rng: &mut StdRng) -> Result<Update> {
        let transitions: Vec<Transition> = batch.decode()?;
        let obs = stack_rows(transitions.iter().map(|t| t.observation.as_slice()))?;
        let actions = stack_rows(transitions.iter().map(|t| t.action.continuous()).collect::<Result<Vec<_>>>()?)?;
        let next = stack_rows(transitions.iter().map(|t| t.next_observation.as_slice()))?;
        let obs_dim = obs.ncols();

        let next_actions = self.policy.target().predict(&next)?;
        let target_in = concatenate![Axis(1), next, next_actions];
        let target_out = self.critic.target().predict(&target_in)?;
        let (critic_out, critic_tape) = self.critic.net.forward(&concatenate![Axis(1), obs, actions])?;
        let (critic_loss, critic_grad, mean_abs_td) = self.critic_loss(&critic_out, &target_out, &transitions)?;

        // Policy step through the critic as it was before this update.
        let (policy_actions, policy_tape) = self.policy.net.forward(&obs)?;
        let (q_out, q_tape) = self.critic.net.forward(&concatenate![Axis(1), obs, policy_actions])?;
        let policy_loss = -self.values(&q_out).iter().sum::<f64>() / transitions.len() as f64;
        let (_, grad_in) = self.critic.net.backward(&q_tape, &self.ascent_output_grad(&q_out))?;
        let grad_actions = grad_in.slice(s![.., obs_dim..]).to_owned();
        let (policy_grads, _) = self.policy.net.backward(&policy_tape, &grad_actions)?;

        let (critic_grads, _) = self.critic.net.backward(&critic_tape, &critic_grad)?;
        self.critic.apply(&critic_grads)?;
        self.policy.apply(&policy_grads)?;
        if let Some(target) = &mut self.critic.target {
            self.target_update.apply(step, &self.critic.net, target);
        }
        if let Some(target) = &mut self.policy.target {
            self.target_update.apply(step, &self.policy.net, target);
        }
        Ok(Update {
            losses: vec![("critic", critic_loss), ("policy", policy_loss)],
            priorities: None,
            mean_abs_td: Some(mean_abs_td),
            warnings: vec![],
        })
    }

    fn policy_tensors(&self) -> Vec<NamedTensor> {
        self.policy.net.to_tensors(&format!("{POLICY}/"))
    }

    fn state_tensors(&self) -> Vec<NamedTensor> {
        let mut out = self.policy.state_tensors(POLICY);
        out.extend(self.critic.state_tensors(CRITIC));
        out
    }

    fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        self.policy.load_state(POLICY, tensors)?;
        self.critic.load_state(CRITIC, tensors)
    }
}

/// Deterministic policy plus independent Gaussian noise per dimension,
/// clamped to the action bounds. Zero `sigma` acts greedily.
pub struct GaussianNoisePolicy {
    net: DenseNet,
    sigma: Vec<f64>,
    low: Vec<f64>,
    high: Vec<f64>,
    /// Number of actions whose noisy value had to be clamped.
    pub clamped: u64,
}

impl GaussianNoisePolicy {
    /// `sigma_fraction` scales the noise to each dimension's range.
    pub fn new(net: DenseNet, low: Vec<f64>, high: Vec<f64>, sigma_fraction: f64) -> Result<Self> {
        if low.len() != net.output_dim() || high.len() != net.output_dim() {
            return Err(Error::Shape("action bounds do not match the policy output".into()));
        }
        if !(sigma_fraction >= 0.0) {
            return Err(Error::Config(format!("exploration sigma {sigma_fraction} must be >= 0")));
        }
        let sigma = low.iter().zip(&high).map(|(l, h)| sigma_fraction * (h - l)).collect();
        Ok(Self { net, sigma, low, high, clamped: 0 })
    }

    pub fn mean_action(&self, observation: &[f64]) -> Result<Vec<f64>> {
        Ok(self.net.predict(&row_batch(observation))?.row(0).to_vec())
    }
}

impl Policy for GaussianNoisePolicy {
    fn act(&mut self, observation: &[f64], rng: &mut StdRng) -> Result<(Action, StepExtras)> {
        let mut a = self.mean_action(observation)?;
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("policy action".into()));
        }
        for (i, x) in a.iter_mut().enumerate() {
            if self.sigma[i] > 0.0 {
                let noise = Normal::new(0.0, self.sigma[i]).map_err(|e| Error::Config(e.to_string()))?;
                *x += noise.sample(rng);
            }
            let c = x.clamp(self.low[i], self.high[i]);
            if c != *x {
                self.clamped += 1;
            }
            *x = c;
        }
        Ok((Action::Continuous(a), StepExtras::default()))
    }

    fn load(&mut self, snapshot: &ParameterSnapshot) -> Result<()> {
        self.net.load_tensors(&format!("{POLICY}/"), &snapshot.tensors)
    }
}
