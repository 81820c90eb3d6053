use std::sync::{Arc, Mutex};

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::actors::{log_uniform_epsilon, EpsilonSchedule, Policy};
use crate::adders::{
    Adder, Episode, EpisodeAdder, ItemSink, NStepAdder, SequenceAdder, StepExtras, EPISODE_TAG, SEQUENCE_TAG, TRANSITION_TAG,
};
use crate::agents::bc::Bc;
use crate::agents::config::{AgentConfig, AlgorithmKind, Exploration};
use crate::agents::d4pg::{CriticKind, D4pg, GaussianNoisePolicy};
use crate::agents::dqn::{Dqn, QPolicy};
use crate::agents::impala::{Impala, ImpalaConfig, SoftmaxPolicy};
use crate::agents::learner::{Algorithm, Learner};
use crate::agents::mcts::{Mcts, MctsPolicy};
use crate::agents::mpo::{GaussianPolicy, LogitsPolicy, Mpo, MpoActions, MpoConfig};
use crate::agents::r2d2::{R2d2, R2d2Config, RecurrentQ, RecurrentQPolicy};
use crate::agents::source::{ExperienceSource, MixedSource, TableSource};
use crate::environments::{EnvDescriptor, Simulator};
use crate::error::{Error, Result};
use crate::interfaces::{ActionSpec, ObservationSpec, ParameterSnapshot, TimeStep};
use crate::kernels::MpoDuals;
use crate::neural::{Activation, Adam, AdamConfig, DenseNet, Head};
use crate::replay::{RateLimiterConfig, Table, TableConfig};

/// Initial priority of newly inserted items.
pub const INITIAL_PRIORITY: f64 = 1.0;

/// What a policy is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyRole {
    /// A data-generating actor, `index` of `num_actors`, sharing a budget
    /// of `step_budget` actor steps.
    Train { index: usize, num_actors: usize, step_budget: u64 },
    /// A non-inserting evaluator: greedy, without exploration noise.
    Eval,
}

/// Assembles networks, learners, policies, adders and replay tables for
/// one agent configuration and environment.
#[derive(Clone)]
pub struct AgentBuilder {
    config: AgentConfig,
    obs_dim: usize,
    action_spec: ActionSpec,
    simulator: Option<Arc<dyn Simulator>>,
}

/// Collects encoded items in memory.
#[derive(Default)]
pub struct VecSink {
    items: Mutex<Vec<Vec<u8>>>,
}

impl VecSink {
    pub fn take(&self) -> Vec<Vec<u8>> {
        std::mem::take(&mut *self.items.lock().expect("sink lock poisoned"))
    }
}

impl ItemSink for VecSink {
    fn insert_item(&self, payload: Vec<u8>, _priority: f64) -> Result<u64> {
        let mut items = self.items.lock().expect("sink lock poisoned");
        items.push(payload);
        Ok(items.len() as u64 - 1)
    }
}

impl AgentBuilder {
    pub fn new(config: AgentConfig, env: &EnvDescriptor) -> Result<Self> {
        let (obs, action) = env.specs()?;
        Self::from_specs(config, obs, action, env.simulator()?)
    }

    pub fn from_specs(config: AgentConfig, obs: ObservationSpec, action_spec: ActionSpec, simulator: Option<Arc<dyn Simulator>>) -> Result<Self> {
        config.validate()?;
        action_spec.validate()?;
        let discrete = matches!(action_spec, ActionSpec::Discrete { .. });
        let ok = match config.algorithm {
            AlgorithmKind::Dqn | AlgorithmKind::Dqfd | AlgorithmKind::R2d2 | AlgorithmKind::R2d3 | AlgorithmKind::Impala | AlgorithmKind::Mcts => discrete,
            AlgorithmKind::Ddpg | AlgorithmKind::D4pg => !discrete,
            AlgorithmKind::Mpo | AlgorithmKind::Dmpo | AlgorithmKind::Bc => true,
        };
        if !ok {
            return Err(Error::Config(format!("{} does not support this action space", config.algorithm)));
        }
        if config.algorithm == AlgorithmKind::Mcts && simulator.is_none() {
            return Err(Error::Config("mcts needs an environment with a perfect simulator".into()));
        }
        Ok(Self { config, obs_dim: obs.dim, action_spec, simulator })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn action_spec(&self) -> &ActionSpec {
        &self.action_spec
    }

    /// Schema tag of the replay items this agent trains on.
    pub fn payload_tag(&self) -> u16 {
        match self.config.algorithm {
            a if a.uses_sequences() => SEQUENCE_TAG,
            AlgorithmKind::Mcts => EPISODE_TAG,
            _ => TRANSITION_TAG,
        }
    }

    /// Consumes each item exactly once (on-policy style learners).
    pub fn uses_queue(&self) -> bool {
        matches!(self.config.algorithm, AlgorithmKind::Impala | AlgorithmKind::Mcts)
    }

    pub fn table_config(&self, rate_limited: bool) -> TableConfig {
        let c = &self.config;
        let base = if self.uses_queue() {
            TableConfig::queue(c.replay_capacity)
        } else if c.prioritized {
            TableConfig::prioritized(c.replay_capacity, c.priority_exponent)
        } else {
            TableConfig::uniform(c.replay_capacity)
        };
        let base = base.with_min_size(c.min_replay_size).with_seed(c.seed);
        if rate_limited && !self.uses_queue() {
            base.with_rate_limiter(RateLimiterConfig::new(c.samples_per_insert, c.rate_tolerance, c.min_replay_size))
        } else {
            base
        }
    }

    fn num_actions(&self) -> usize {
        match &self.action_spec {
            ActionSpec::Discrete { num_actions } => *num_actions,
            ActionSpec::Continuous { .. } => 0,
        }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.action_spec {
            ActionSpec::Continuous { low, high } => (low.clone(), high.clone()),
            ActionSpec::Discrete { .. } => (Vec::new(), Vec::new()),
        }
    }

    fn mlp(&self, input: usize, output: usize, head: Head, rng: &mut StdRng) -> Result<DenseNet> {
        let mut sizes = vec![input];
        sizes.extend(&self.config.hidden_sizes);
        sizes.push(output);
        DenseNet::new(&sizes, Activation::Relu, head, rng)
    }

    fn critic_kind(&self) -> Result<CriticKind> {
        let atoms = match self.config.algorithm {
            AlgorithmKind::Ddpg | AlgorithmKind::Mpo => 1,
            _ => self.config.num_atoms,
        };
        CriticKind::new(atoms, self.config.v_min, self.config.v_max)
    }

    fn adam(&self, lr: f64) -> Adam {
        Adam::new(AdamConfig::new(lr))
    }

    fn q_network(&self, rng: &mut StdRng) -> Result<DenseNet> {
        let a = self.num_actions();
        if self.config.dueling {
            self.mlp(self.obs_dim, a + 1, Head::Dueling { num_actions: a }, rng)
        } else {
            self.mlp(self.obs_dim, a, Head::Linear, rng)
        }
    }

    fn recurrent_network(&self, rng: &mut StdRng) -> Result<RecurrentQ> {
        RecurrentQ::new(self.obs_dim, self.config.recurrent_size, &self.config.hidden_sizes, self.num_actions(), rng)
    }

    fn deterministic_policy(&self, rng: &mut StdRng) -> Result<DenseNet> {
        let (low, high) = self.bounds();
        self.mlp(self.obs_dim, low.len(), Head::TanhScaled { low, high }, rng)
    }

    /// Policy and critic networks of the MPO family.
    fn mpo_networks(&self, rng: &mut StdRng) -> Result<(DenseNet, DenseNet, MpoActions)> {
        let k = self.critic_kind()?.output_dim();
        match &self.action_spec {
            ActionSpec::Discrete { num_actions } => Ok((
                self.mlp(self.obs_dim, *num_actions, Head::Linear, rng)?,
                self.mlp(self.obs_dim, num_actions * k, Head::Linear, rng)?,
                MpoActions::Discrete { num_actions: *num_actions },
            )),
            ActionSpec::Continuous { low, high } => Ok((
                self.mlp(self.obs_dim, 2 * low.len(), Head::Linear, rng)?,
                self.mlp(self.obs_dim + low.len(), k, Head::Linear, rng)?,
                MpoActions::Continuous { low: low.clone(), high: high.clone(), num_samples: self.config.mpo_num_samples },
            )),
        }
    }

    /// Fresh learning rule with networks initialised from the config seed.
    pub fn algorithm(&self) -> Result<Box<dyn Algorithm>> {
        let c = &self.config;
        let mut rng = StdRng::seed_from_u64(c.seed);
        Ok(match c.algorithm {
            AlgorithmKind::Dqn | AlgorithmKind::Dqfd => {
                Box::new(Dqn::new(self.q_network(&mut rng)?, self.adam(c.learning_rate), c.target_update, c.importance_exponent))
            }
            AlgorithmKind::R2d2 | AlgorithmKind::R2d3 => Box::new(R2d2::new(
                self.recurrent_network(&mut rng)?,
                self.adam(c.learning_rate),
                R2d2Config {
                    gamma: c.gamma,
                    target_update: c.target_update,
                    importance_exponent: c.importance_exponent,
                    priority_mix: c.priority_mix,
                    use_stored_state: c.use_stored_state,
                },
            )),
            AlgorithmKind::Impala => Box::new(Impala::new(
                self.mlp(self.obs_dim, self.num_actions() + 1, Head::Linear, &mut rng)?,
                self.adam(c.learning_rate),
                ImpalaConfig { gamma: c.gamma, entropy_cost: c.entropy_cost, baseline_cost: c.baseline_cost, ..Default::default() },
            )?),
            AlgorithmKind::Ddpg | AlgorithmKind::D4pg => {
                let kind = self.critic_kind()?;
                let policy = self.deterministic_policy(&mut rng)?;
                let act_dim = policy.output_dim();
                let critic = self.mlp(self.obs_dim + act_dim, kind.output_dim(), Head::Linear, &mut rng)?;
                Box::new(D4pg::new(policy, critic, self.adam(c.policy_learning_rate), self.adam(c.learning_rate), kind, c.target_update)?)
            }
            AlgorithmKind::Mpo | AlgorithmKind::Dmpo => {
                let (policy, critic, actions) = self.mpo_networks(&mut rng)?;
                let config = MpoConfig {
                    duals: MpoDuals { epsilon: c.mpo_epsilon, epsilon_eta: c.mpo_epsilon_eta, ..Default::default() },
                    dual_learning_rate: c.mpo_dual_learning_rate,
                    target_update: c.target_update,
                };
                Box::new(Mpo::new(
                    policy,
                    critic,
                    self.adam(c.policy_learning_rate),
                    self.adam(c.learning_rate),
                    self.critic_kind()?,
                    actions,
                    config,
                )?)
            }
            AlgorithmKind::Mcts => {
                let policy = self.mlp(self.obs_dim, self.num_actions(), Head::Linear, &mut rng)?;
                let value = self.mlp(self.obs_dim, 1, Head::Linear, &mut rng)?;
                Box::new(Mcts::new(policy, value, self.adam(c.learning_rate), self.adam(c.learning_rate), c.mcts.gamma, c.mcts_value_target)?)
            }
            AlgorithmKind::Bc => match &self.action_spec {
                ActionSpec::Discrete { num_actions } => {
                    Box::new(Bc::new(self.mlp(self.obs_dim, *num_actions, Head::Linear, &mut rng)?, self.adam(c.learning_rate), true))
                }
                ActionSpec::Continuous { .. } => {
                    Box::new(Bc::new(self.deterministic_policy(&mut rng)?, self.adam(c.learning_rate), false))
                }
            },
        })
    }

    fn epsilon(&self, role: PolicyRole) -> EpsilonSchedule {
        match role {
            PolicyRole::Eval => EpsilonSchedule::Constant(0.0),
            PolicyRole::Train { index, num_actors, step_budget } => match self.config.exploration {
                Exploration::EpsilonGreedy(Some(s)) => s,
                Exploration::EpsilonGreedy(None) => EpsilonSchedule::for_budget(step_budget / num_actors.max(1) as u64),
                Exploration::LogUniformEpsilon => {
                    EpsilonSchedule::Constant(log_uniform_epsilon(self.config.seed.wrapping_mul(1000).wrapping_add(index as u64)))
                }
            },
        }
    }

    /// Acting policy loaded with `initial` parameters.
    pub fn policy(&self, role: PolicyRole, initial: &ParameterSnapshot) -> Result<Box<dyn Policy>> {
        let c = &self.config;
        let eval = role == PolicyRole::Eval;
        // Shapes only; the weights come from `initial`.
        let mut rng = StdRng::seed_from_u64(c.seed);
        let mut policy: Box<dyn Policy> = match c.algorithm {
            AlgorithmKind::Dqn | AlgorithmKind::Dqfd => Box::new(QPolicy::new(self.q_network(&mut rng)?, self.epsilon(role))),
            AlgorithmKind::R2d2 | AlgorithmKind::R2d3 => {
                Box::new(RecurrentQPolicy::new(self.recurrent_network(&mut rng)?, self.epsilon(role)))
            }
            AlgorithmKind::Impala => Box::new(SoftmaxPolicy::actor_critic(
                self.mlp(self.obs_dim, self.num_actions() + 1, Head::Linear, &mut rng)?,
                eval,
            )),
            AlgorithmKind::Ddpg | AlgorithmKind::D4pg => {
                let (low, high) = self.bounds();
                let sigma = if eval { 0.0 } else { c.exploration_sigma };
                Box::new(GaussianNoisePolicy::new(self.deterministic_policy(&mut rng)?, low, high, sigma)?)
            }
            AlgorithmKind::Mpo | AlgorithmKind::Dmpo => {
                let (net, _, actions) = self.mpo_networks(&mut rng)?;
                match actions {
                    MpoActions::Discrete { .. } => Box::new(LogitsPolicy::new(net, eval)),
                    MpoActions::Continuous { low, high, .. } => Box::new(GaussianPolicy::new(net, low, high, eval)?),
                }
            }
            AlgorithmKind::Mcts => {
                let policy = self.mlp(self.obs_dim, self.num_actions(), Head::Linear, &mut rng)?;
                let value = self.mlp(self.obs_dim, 1, Head::Linear, &mut rng)?;
                let simulator = self.simulator.clone().ok_or_else(|| Error::Config("mcts needs a simulator".into()))?;
                Box::new(MctsPolicy::new(policy, value, simulator, c.mcts, c.mcts_sample_actions && !eval))
            }
            AlgorithmKind::Bc => match &self.action_spec {
                ActionSpec::Discrete { num_actions } => {
                    Box::new(LogitsPolicy::new(self.mlp(self.obs_dim, *num_actions, Head::Linear, &mut rng)?, true))
                }
                ActionSpec::Continuous { low, high } => {
                    Box::new(GaussianNoisePolicy::new(self.deterministic_policy(&mut rng)?, low.clone(), high.clone(), 0.0)?)
                }
            },
        };
        policy.load(initial)?;
        Ok(policy)
    }

    /// Adder producing the items this agent's learner consumes.
    pub fn adder(&self, sink: Arc<dyn ItemSink>) -> Result<Box<dyn Adder>> {
        let c = &self.config;
        Ok(match self.payload_tag() {
            SEQUENCE_TAG => Box::new(SequenceAdder::new(c.sequence, sink, INITIAL_PRIORITY)?),
            EPISODE_TAG => Box::new(EpisodeAdder::new(None, sink, INITIAL_PRIORITY)),
            _ => Box::new(NStepAdder::new(c.n_step, c.gamma, sink, INITIAL_PRIORITY)?),
        })
    }

    /// Re-encodes recorded episodes with this agent's adder, as used for
    /// demonstration tables.
    pub fn encode_episodes(&self, episodes: &[Episode]) -> Result<Vec<Vec<u8>>> {
        let sink = Arc::new(VecSink::default());
        let mut adder = self.adder(sink.clone())?;
        for e in episodes {
            if e.is_empty() || e.observations.len() != e.len() {
                return Err(Error::Shape("recorded episode is empty or inconsistent".into()));
            }
            adder.add_first(&TimeStep::first(e.observations[0].clone()))?;
            for t in 0..e.len() {
                let last = t + 1 == e.len();
                let observation = if last { e.final_observation.clone() } else { e.observations[t + 1].clone() };
                let ts = if last && !e.truncated {
                    TimeStep::last(e.rewards[t], observation)
                } else {
                    TimeStep::mid(e.rewards[t], observation)
                };
                let extras = StepExtras { policy: e.extras.get(t).cloned().unwrap_or_default(), ..Default::default() };
                adder.add(&e.actions[t], &ts, &extras)?;
            }
        }
        Ok(sink.take())
    }

    /// Static uniform table holding demonstration items.
    pub fn demo_table(&self, items: Vec<Vec<u8>>) -> Result<Arc<Table>> {
        let capacity = items.len().max(1);
        let table = Arc::new(Table::new(TableConfig::uniform(capacity).with_seed(self.config.seed ^ 0xde70))?);
        for item in items {
            table.insert(item, INITIAL_PRIORITY)?;
        }
        Ok(table)
    }

    /// The learner's view of replay: the agent table alone, or mixed with
    /// demonstrations for the demonstration-learning agents.
    pub fn source(&self, agent: Arc<Table>, demo: Option<Arc<Table>>) -> Result<Arc<dyn ExperienceSource>> {
        if self.config.algorithm.uses_demonstrations() {
            let demo = match demo {
                Some(d) => d,
                None if self.config.demo_ratio == 0.0 => Arc::new(Table::new(TableConfig::uniform(1))?),
                None => return Err(Error::Config(format!("{} needs a demonstration table", self.config.algorithm))),
            };
            Ok(Arc::new(MixedSource::new(agent, demo, self.config.demo_ratio)?))
        } else {
            Ok(Arc::new(TableSource::new(agent)))
        }
    }

    pub fn learner(&self, source: Option<Arc<dyn ExperienceSource>>) -> Result<Learner> {
        Ok(Learner::new(self.algorithm()?, source, self.config.batch_size, self.config.seed))
    }
}
