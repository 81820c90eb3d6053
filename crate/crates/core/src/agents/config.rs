use std::fmt;
use std::str::FromStr;

use crate::actors::EpsilonSchedule;
use crate::adders::{SequenceConfig, DEFAULT_GAMMA, DEFAULT_N};
use crate::error::{Error, Result};
use crate::kernels::{MctsConfig, DEFAULT_EPSILON_ETA, DEFAULT_KL_EPSILON, DEFAULT_PRIORITY_MIX};
use crate::neural::TargetUpdate;
use crate::replay::DEFAULT_PRIORITY_EXPONENT;

pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const DEFAULT_SAMPLES_PER_INSERT: f64 = 32.0;
pub const DEFAULT_IMPORTANCE_EXPONENT: f64 = 0.4;
pub const DEFAULT_DEMO_RATIO: f64 = 0.25;
pub const DEFAULT_EXPLORATION_SIGMA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlgorithmKind {
    Dqn,
    R2d2,
    Impala,
    Ddpg,
    D4pg,
    Mpo,
    Dmpo,
    Mcts,
    Bc,
    Dqfd,
    R2d3,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 11] = [
        AlgorithmKind::Dqn,
        AlgorithmKind::R2d2,
        AlgorithmKind::Impala,
        AlgorithmKind::Ddpg,
        AlgorithmKind::D4pg,
        AlgorithmKind::Mpo,
        AlgorithmKind::Dmpo,
        AlgorithmKind::Mcts,
        AlgorithmKind::Bc,
        AlgorithmKind::Dqfd,
        AlgorithmKind::R2d3,
    ];

    /// Learners that train on sequences rather than transitions or episodes.
    pub fn uses_sequences(self) -> bool {
        matches!(self, AlgorithmKind::R2d2 | AlgorithmKind::R2d3 | AlgorithmKind::Impala)
    }

    /// Learners that mix demonstrations into their batches.
    pub fn uses_demonstrations(self) -> bool {
        matches!(self, AlgorithmKind::Dqfd | AlgorithmKind::R2d3)
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown agent '{s}'")))
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AlgorithmKind::Dqn => "dqn",
            AlgorithmKind::R2d2 => "r2d2",
            AlgorithmKind::Impala => "impala",
            AlgorithmKind::Ddpg => "ddpg",
            AlgorithmKind::D4pg => "d4pg",
            AlgorithmKind::Mpo => "mpo",
            AlgorithmKind::Dmpo => "dmpo",
            AlgorithmKind::Mcts => "mcts",
            AlgorithmKind::Bc => "bc",
            AlgorithmKind::Dqfd => "dqfd",
            AlgorithmKind::R2d3 => "r2d3",
        };
        f.write_str(name)
    }
}

/// How the MCTS value network is regressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueTarget {
    /// Observed discounted return to the end of the episode.
    MonteCarlo,
    /// `n` rewards then the current value estimate.
    NStep(usize),
}

/// Exploration used by training actors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exploration {
    /// Epsilon-greedy with a schedule. `None` derives the default linear
    /// schedule from the actor's share of the step budget.
    EpsilonGreedy(Option<EpsilonSchedule>),
    /// Epsilon-greedy with a fixed per-actor rate drawn log-uniformly.
    LogUniformEpsilon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub algorithm: AlgorithmKind,
    /// Hidden layer widths of every feed-forward network.
    pub hidden_sizes: Vec<usize>,
    /// Width of the recurrent core (R2D2 family).
    pub recurrent_size: usize,
    pub gamma: f64,
    pub n_step: usize,
    pub sequence: SequenceConfig,
    pub batch_size: usize,
    pub samples_per_insert: f64,
    /// Rate-limiter tolerance in units of `samples_per_insert`.
    pub rate_tolerance: f64,
    pub min_replay_size: usize,
    pub replay_capacity: usize,
    pub target_update: TargetUpdate,
    pub learning_rate: f64,
    /// Learning rate of the policy network where it has its own optimizer.
    pub policy_learning_rate: f64,
    pub exploration: Exploration,
    /// Gaussian exploration scale as a fraction of the action range.
    pub exploration_sigma: f64,
    pub prioritized: bool,
    pub priority_exponent: f64,
    pub importance_exponent: f64,
    pub priority_mix: f64,
    pub dueling: bool,
    /// Unroll from the stored recurrent state (else from zeros).
    pub use_stored_state: bool,
    pub entropy_cost: f64,
    pub baseline_cost: f64,
    /// Atoms of the distributional critic; 1 selects a scalar critic.
    pub num_atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub mpo_epsilon: f64,
    pub mpo_epsilon_eta: f64,
    pub mpo_dual_learning_rate: f64,
    /// Candidate actions per state for continuous MPO.
    pub mpo_num_samples: usize,
    pub mcts: MctsConfig,
    pub mcts_value_target: ValueTarget,
    /// Sample from the search policy while training (else act greedily).
    pub mcts_sample_actions: bool,
    pub demo_ratio: f64,
    pub variable_update_period: u64,
    pub seed: u64,
}

impl AgentConfig {
    /// Defaults for `algorithm`.
    pub fn new(algorithm: AlgorithmKind) -> Self {
        let mut c = Self {
            algorithm,
            hidden_sizes: vec![64, 64],
            recurrent_size: 32,
            gamma: DEFAULT_GAMMA,
            n_step: DEFAULT_N,
            sequence: SequenceConfig::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            samples_per_insert: DEFAULT_SAMPLES_PER_INSERT,
            rate_tolerance: 1.0,
            min_replay_size: 1,
            replay_capacity: 100_000,
            target_update: TargetUpdate::default(),
            learning_rate: 1e-3,
            policy_learning_rate: 1e-4,
            exploration: Exploration::EpsilonGreedy(None),
            exploration_sigma: DEFAULT_EXPLORATION_SIGMA,
            prioritized: false,
            priority_exponent: DEFAULT_PRIORITY_EXPONENT,
            importance_exponent: DEFAULT_IMPORTANCE_EXPONENT,
            priority_mix: DEFAULT_PRIORITY_MIX,
            dueling: false,
            use_stored_state: true,
            entropy_cost: 0.01,
            baseline_cost: 0.5,
            num_atoms: 51,
            v_min: -150.0,
            v_max: 150.0,
            mpo_epsilon: DEFAULT_KL_EPSILON,
            mpo_epsilon_eta: DEFAULT_EPSILON_ETA,
            mpo_dual_learning_rate: 1e-2,
            mpo_num_samples: 20,
            mcts: MctsConfig::default(),
            mcts_value_target: ValueTarget::MonteCarlo,
            mcts_sample_actions: true,
            demo_ratio: 0.0,
            variable_update_period: crate::variables::DEFAULT_FETCH_PERIOD,
            seed: 0,
        };
        match algorithm {
            AlgorithmKind::Dqn | AlgorithmKind::Dqfd | AlgorithmKind::R2d2 | AlgorithmKind::R2d3 => {
                c.prioritized = true;
            }
            AlgorithmKind::Ddpg => c.num_atoms = 1,
            AlgorithmKind::Mpo => c.num_atoms = 1,
            AlgorithmKind::Impala => {
                // Each queued slice is consumed exactly once.
                c.samples_per_insert = 1.0;
                c.batch_size = 16;
            }
            AlgorithmKind::Mcts => {
                c.samples_per_insert = 1.0;
                c.batch_size = 16;
            }
            _ => {}
        }
        if algorithm.uses_demonstrations() {
            c.demo_ratio = DEFAULT_DEMO_RATIO;
        }
        c
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.demo_ratio) {
            return fail(format!("demo_ratio {} not in [0, 1]", self.demo_ratio));
        }
        if !(self.samples_per_insert > 0.0) || !(self.rate_tolerance >= 0.0) {
            return fail("samples_per_insert must be > 0 and tolerance >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} not in [0, 1]", self.gamma));
        }
        if self.n_step == 0 || self.replay_capacity == 0 || self.min_replay_size == 0 {
            return fail("n_step, replay_capacity and min_replay_size must be >= 1".into());
        }
        if self.min_replay_size > self.replay_capacity {
            return fail("min_replay_size exceeds replay_capacity".into());
        }
        if self.num_atoms == 0 || (self.num_atoms > 1 && !(self.v_min < self.v_max)) {
            return fail("distributional critic needs num_atoms >= 1 and v_min < v_max".into());
        }
        if !(self.learning_rate > 0.0) || !(self.policy_learning_rate > 0.0) {
            return fail("learning rates must be > 0".into());
        }
        if self.recurrent_size == 0 || self.hidden_sizes.iter().any(|h| *h == 0) {
            return fail("layer widths must be >= 1".into());
        }
        if self.mpo_num_samples < 2 {
            return fail("MPO needs at least 2 candidate actions per state".into());
        }
        if self.mcts.num_simulations == 0 || self.mcts.max_depth == 0 {
            return fail("MCTS needs simulations and depth >= 1".into());
        }
        if let ValueTarget::NStep(0) = self.mcts_value_target {
            return fail("n-step value target needs n >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.priority_mix) || self.priority_exponent < 0.0 || self.importance_exponent < 0.0 {
            return fail("priority settings out of range".into());
        }
        if self.exploration_sigma < 0.0 {
            return fail("exploration sigma must be >= 0".into());
        }
        if self.variable_update_period == 0 {
            return fail("variable_update_period must be >= 1".into());
        }
        self.sequence.validate()
    }

    /// Applies one `key=value` setting, as found in config files.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("invalid boolean '{v}' for '{key}'"))),
            }
        }
        match key {
            "agent" | "algorithm" => self.algorithm = value.parse()?,
            "hidden_sizes" => {
                self.hidden_sizes = if value.trim().is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|s| num(key, s.trim())).collect::<Result<_>>()?
                }
            }
            "recurrent_size" => self.recurrent_size = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "n_step" => self.n_step = num(key, value)?,
            "sequence_length" => self.sequence.length = num(key, value)?,
            "sequence_period" => self.sequence.period = num(key, value)?,
            "burn_in" => self.sequence.burn_in = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "spi" | "samples_per_insert" => self.samples_per_insert = num(key, value)?,
            "rate_tolerance" => self.rate_tolerance = num(key, value)?,
            "min_replay_size" => self.min_replay_size = num(key, value)?,
            "capacity" | "replay_capacity" => self.replay_capacity = num(key, value)?,
            "target_period" => self.target_update = TargetUpdate::Periodic { period: num(key, value)? },
            "target_tau" => self.target_update = TargetUpdate::Polyak { tau: num(key, value)? },
            "learning_rate" => self.learning_rate = num(key, value)?,
            "policy_learning_rate" => self.policy_learning_rate = num(key, value)?,
            "epsilon" => self.exploration = Exploration::EpsilonGreedy(Some(EpsilonSchedule::Constant(num(key, value)?))),
            "epsilon_log_uniform" => {
                if flag(key, value)? {
                    self.exploration = Exploration::LogUniformEpsilon;
                }
            }
            "exploration_sigma" => self.exploration_sigma = num(key, value)?,
            "prioritized" => self.prioritized = flag(key, value)?,
            "priority_exponent" => self.priority_exponent = num(key, value)?,
            "importance_exponent" => self.importance_exponent = num(key, value)?,
            "priority_mix" => self.priority_mix = num(key, value)?,
            "dueling" => self.dueling = flag(key, value)?,
            "use_stored_state" => self.use_stored_state = flag(key, value)?,
            "entropy_cost" => self.entropy_cost = num(key, value)?,
            "baseline_cost" => self.baseline_cost = num(key, value)?,
            "num_atoms" => self.num_atoms = num(key, value)?,
            "v_min" => self.v_min = num(key, value)?,
            "v_max" => self.v_max = num(key, value)?,
            "mpo_epsilon" => self.mpo_epsilon = num(key, value)?,
            "mpo_epsilon_eta" => self.mpo_epsilon_eta = num(key, value)?,
            "mpo_dual_learning_rate" => self.mpo_dual_learning_rate = num(key, value)?,
            "mpo_num_samples" => self.mpo_num_samples = num(key, value)?,
            "mcts_simulations" => self.mcts.num_simulations = num(key, value)?,
            "mcts_max_depth" => self.mcts.max_depth = num(key, value)?,
            "mcts_beta" => self.mcts.uct_beta = num(key, value)?,
            "mcts_temperature" => self.mcts.temperature = num(key, value)?,
            "mcts_value_target" => {
                self.mcts_value_target = match value {
                    "mc" => ValueTarget::MonteCarlo,
                    other => match other.strip_prefix("nstep") {
                        Some(n) => ValueTarget::NStep(num(key, n)?),
                        None => return Err(Error::Config(format!("invalid value target '{other}'"))),
                    },
                }
            }
            "mcts_sample_actions" => self.mcts_sample_actions = flag(key, value)?,
            "demo_ratio" => self.demo_ratio = num(key, value)?,
            "variable_update_period" => self.variable_update_period = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown agent setting '{key}'"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in AlgorithmKind::ALL {
            assert_eq!(k.to_string().parse::<AlgorithmKind>().unwrap(), k);
        }
        assert!("ppo".parse::<AlgorithmKind>().is_err());
    }

    #[test]
    fn defaults_are_valid() {
        for k in AlgorithmKind::ALL {
            AgentConfig::new(k).validate().unwrap();
        }
        assert_eq!(AgentConfig::new(AlgorithmKind::Dqn).batch_size, 256);
        assert_eq!(AgentConfig::new(AlgorithmKind::Dqn).samples_per_insert, 32.0);
        assert_eq!(AgentConfig::new(AlgorithmKind::Dqfd).demo_ratio, 0.25);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let mut c = AgentConfig::new(AlgorithmKind::Dqn);
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = AgentConfig::new(AlgorithmKind::Dqn);
        c.demo_ratio = 1.5;
        assert!(c.validate().is_err());
        let mut c = AgentConfig::new(AlgorithmKind::Dqn);
        assert!(c.set("bogus", "1").is_err());
        assert!(c.set("batch_size", "x").is_err());
        c.set("hidden_sizes", "8, 4").unwrap();
        assert_eq!(c.hidden_sizes, vec![8, 4]);
        c.set("hidden_sizes", "").unwrap();
        assert!(c.hidden_sizes.is_empty());
        c.set("mcts_value_target", "nstep5").unwrap();
        assert_eq!(c.mcts_value_target, ValueTarget::NStep(5));
    }
}
