use ndarray::Array2;
use rand::rngs::StdRng;

use crate::adders::Transition;
use crate::agents::learner::{Algorithm, Trainable, Update};
use crate::agents::source::ExperienceBatch;
use crate::agents::stack_rows;
use crate::error::{Error, Result};
use crate::interfaces::NamedTensor;
use crate::kernels::{bc_loss_continuous, bc_loss_discrete};
use crate::neural::{Adam, DenseNet, Parameterized};

const POLICY: &str = "policy";

/// Supervised imitation of the actions stored in transitions. Discrete
/// policies emit logits and use the negative log-likelihood; continuous
/// policies emit actions and use squared error.
pub struct Bc {
    policy: Trainable<DenseNet>,
    discrete: bool,
}

impl Bc {
    pub fn new(policy: DenseNet, opt: Adam, discrete: bool) -> Self {
        Self { policy: Trainable::new(policy, false, opt), discrete }
    }

    pub fn policy_network(&self) -> &DenseNet {
        &self.policy.net
    }
}

impl Algorithm for Bc {
    fn update(&mut self, batch: &ExperienceBatch, _step: u64, _rng: &mut StdRng) -> Result<Update> {
        let transitions: Vec<Transition> = batch.decode()?;
        let b = transitions.len() as f64;
        let obs = stack_rows(transitions.iter().map(|t| t.observation.as_slice()))?;
        let (out, tape) = self.policy.net.forward(&obs)?;
        let mut grad = Array2::zeros(out.raw_dim());
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (i, t) in transitions.iter().enumerate() {
            let row = out.row(i).to_vec();
            let (l, g) = if self.discrete {
                let a = t.action.discrete()?;
                correct += (crate::interfaces::argmax(&row) == a) as usize;
                bc_loss_discrete(&row, a)?
            } else {
                let a = t.action.continuous()?;
                if a.len() != row.len() {
                    return Err(Error::Shape("demonstrated action has the wrong dimension".into()));
                }
                bc_loss_continuous(&row, a)?
            };
            loss += l / b;
            for (j, gj) in g.iter().enumerate() {
                grad[[i, j]] = gj / b;
            }
        }
        let (grads, _) = self.policy.net.backward(&tape, &grad)?;
        self.policy.apply(&grads)?;
        let mut losses = vec![("bc", loss)];
        if self.discrete {
            losses.push(("batch_agreement", correct as f64 / b));
        }
        Ok(Update { losses, ..Default::default() })
    }

    fn policy_tensors(&self) -> Vec<NamedTensor> {
        self.policy.net.to_tensors(&format!("{POLICY}/"))
    }

    fn state_tensors(&self) -> Vec<NamedTensor> {
        self.policy.state_tensors(POLICY)
    }

    fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        self.policy.load_state(POLICY, tensors)
    }
}
