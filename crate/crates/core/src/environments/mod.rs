//! Native toy environments and their exact-solution oracles.

pub mod bandit;
pub mod control;
pub mod deep_sea;
pub mod gridworld;
pub mod tabular;
pub mod tmaze;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interfaces::{ActionSpec, Environment, ObservationSpec};

pub use bandit::Bandit;
pub use control::{PointMass, Pendulum};
pub use deep_sea::DeepSea;
pub use gridworld::Gridworld;
pub use tabular::{random_mdp, value_iteration, TabularEnv, TabularMdp};
pub use tmaze::TMaze;

/// Hashable simulator state.
pub type SimState = Vec<i64>;

/// Deterministic model of an environment, used for planning.
pub trait Simulator: Send + Sync {
    fn num_actions(&self) -> usize;
    /// Recovers the simulator state from an environment observation.
    fn state_from_observation(&self, observation: &[f64]) -> Result<SimState>;
    fn step(&self, state: &SimState, action: usize) -> Result<(SimState, f64, bool)>;
    fn observation(&self, state: &SimState) -> Vec<f64>;
}

/// Termination probability used to make the random-MDP benchmark episodic.
pub const RANDOM_MDP_TERMINATION: f64 = 0.1;
pub const RANDOM_MDP_STATES: usize = 20;
pub const RANDOM_MDP_ACTIONS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Gridworld,
    Chain,
    RandomMdp,
    DeepSea,
    DeepSeaStochastic,
    TMaze,
    PointMass,
    Pendulum,
    Bandit,
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('-', "_").as_str() {
            "gridworld" => EnvKind::Gridworld,
            "chain" => EnvKind::Chain,
            "random_mdp" => EnvKind::RandomMdp,
            "deep_sea" | "deepsea" => EnvKind::DeepSea,
            "deep_sea_stochastic" => EnvKind::DeepSeaStochastic,
            "tmaze" | "t_maze" => EnvKind::TMaze,
            "point_mass" => EnvKind::PointMass,
            "pendulum" => EnvKind::Pendulum,
            "bandit" => EnvKind::Bandit,
            other => return Err(Error::Config(format!("unknown environment '{other}'"))),
        })
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EnvKind::Gridworld => "gridworld",
            EnvKind::Chain => "chain",
            EnvKind::RandomMdp => "random_mdp",
            EnvKind::DeepSea => "deep_sea",
            EnvKind::DeepSeaStochastic => "deep_sea_stochastic",
            EnvKind::TMaze => "tmaze",
            EnvKind::PointMass => "point_mass",
            EnvKind::Pendulum => "pendulum",
            EnvKind::Bandit => "bandit",
        };
        f.write_str(name)
    }
}

/// Names an environment instance: kind, size/difficulty parameter, episode
/// cap and, for the random MDP, the seed of the MDP itself (distinct from
/// the environment's sampling seed).
#[derive(Clone, Debug, PartialEq)]
pub struct EnvDescriptor {
    pub kind: EnvKind,
    pub size: usize,
    pub episode_cap: u64,
    pub mdp_seed: u64,
}

impl EnvDescriptor {
    pub fn new(kind: EnvKind) -> Self {
        let size = match kind {
            EnvKind::Chain => 5,
            EnvKind::RandomMdp => RANDOM_MDP_STATES,
            EnvKind::DeepSea | EnvKind::DeepSeaStochastic => 10,
            EnvKind::TMaze => 10,
            EnvKind::Bandit => 2,
            _ => 0,
        };
        let episode_cap = match kind {
            EnvKind::PointMass | EnvKind::Pendulum => control::EPISODE_STEPS,
            _ => 500,
        };
        Self { kind, size, episode_cap, mdp_seed: 0 }
    }

    pub fn with_size(mut self, size: usize) -> Self {
        self.size = size;
        self
    }

    pub fn with_mdp_seed(mut self, seed: u64) -> Self {
        self.mdp_seed = seed;
        self
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    /// The finite MDP behind tabular kinds.
    pub fn tabular_mdp(&self) -> Result<Option<TabularMdp>> {
        Ok(match self.kind {
            EnvKind::Gridworld => Some(Gridworld::standard().mdp()?),
            EnvKind::Chain => Some(tabular::chain_mdp(self.size)?),
            EnvKind::RandomMdp => Some(
                random_mdp(self.size, RANDOM_MDP_ACTIONS, self.mdp_seed)?.with_termination(RANDOM_MDP_TERMINATION)?,
            ),
            _ => None,
        })
    }

    pub fn make(&self, seed: u64) -> Result<Box<dyn Environment>> {
        if self.episode_cap == 0 {
            return Err(Error::Config("episode cap must be >= 1".into()));
        }
        Ok(match self.kind {
            EnvKind::Gridworld | EnvKind::Chain | EnvKind::RandomMdp => {
                let mdp = self.tabular_mdp()?.expect("tabular kind");
                Box::new(TabularEnv::new(mdp, self.episode_cap, seed)?)
            }
            EnvKind::DeepSea => Box::new(DeepSea::new(self.size, seed)?),
            EnvKind::DeepSeaStochastic => Box::new(DeepSea::stochastic(self.size, seed)?),
            EnvKind::TMaze => Box::new(TMaze::new(self.size, seed)),
            EnvKind::PointMass => Box::new(PointMass::new(seed).with_episode_steps(self.episode_cap)),
            EnvKind::Pendulum => Box::new(Pendulum::new()),
            EnvKind::Bandit => Box::new(Bandit::new(bandit_payouts(self.size))?),
        })
    }

    pub fn specs(&self) -> Result<(ObservationSpec, ActionSpec)> {
        let env = self.make(0)?;
        Ok((env.observation_spec(), env.action_spec()))
    }

    /// A perfect simulator, where the environment is deterministic.
    pub fn simulator(&self) -> Result<Option<Arc<dyn Simulator>>> {
        Ok(match self.kind {
            EnvKind::DeepSea => DeepSea::new(self.size, 0)?.simulator().map(|s| Arc::new(s) as Arc<dyn Simulator>),
            EnvKind::Bandit => Some(Arc::new(Bandit::new(bandit_payouts(self.size))?.simulator())),
            _ => None,
        })
    }
}

/// Arm `i` of the default bandit pays `i / (k - 1)`.
pub fn bandit_payouts(arms: usize) -> Vec<f64> {
    let k = arms.max(2);
    (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interfaces::Action;

    #[test]
    fn kinds_round_trip_through_names() {
        for kind in [
            EnvKind::Gridworld,
            EnvKind::Chain,
            EnvKind::RandomMdp,
            EnvKind::DeepSea,
            EnvKind::DeepSeaStochastic,
            EnvKind::TMaze,
            EnvKind::PointMass,
            EnvKind::Pendulum,
            EnvKind::Bandit,
        ] {
            assert_eq!(kind.to_string().parse::<EnvKind>().unwrap(), kind);
        }
        assert!("atari".parse::<EnvKind>().is_err());
    }

    #[test]
    fn every_environment_is_deterministic_given_seed_and_actions() {
        for name in ["gridworld", "random_mdp", "deep_sea_stochastic", "tmaze", "point_mass", "bandit"] {
            let desc = EnvDescriptor::new(name.parse().unwrap());
            let trace = |seed: u64| {
                let mut env = desc.make(seed).unwrap();
                let spec = env.action_spec();
                let mut out = Vec::new();
                for _ in 0..3 {
                    let mut ts = env.reset().unwrap();
                    out.push(ts.observation.clone());
                    let mut t = 0usize;
                    while !ts.episode_end() && t < 30 {
                        let action = match &spec {
                            ActionSpec::Discrete { num_actions } => Action::Discrete(t % num_actions),
                            ActionSpec::Continuous { .. } => Action::Continuous(vec![((t as f64) * 0.3).sin()]),
                        };
                        ts = env.step(&action).unwrap();
                        out.push(ts.observation.clone());
                        out.push(vec![ts.reward]);
                        t += 1;
                    }
                }
                out
            };
            assert_eq!(trace(11), trace(11), "{name}");
        }
    }

    #[test]
    fn observations_match_specs() {
        for name in ["gridworld", "chain", "random_mdp", "deep_sea", "tmaze", "point_mass", "pendulum", "bandit"] {
            let desc = EnvDescriptor::new(name.parse().unwrap());
            let mut env = desc.make(1).unwrap();
            let obs_spec = env.observation_spec();
            let spec = env.action_spec();
            spec.validate().unwrap();
            let mut ts = env.reset().unwrap();
            obs_spec.check(&ts.observation).unwrap();
            while !ts.episode_end() {
                let action = match &spec {
                    ActionSpec::Discrete { .. } => Action::Discrete(0),
                    ActionSpec::Continuous { .. } => Action::Continuous(vec![0.0]),
                };
                ts = env.step(&action).unwrap();
                obs_spec.check(&ts.observation).unwrap();
            }
        }
    }
}
