use std::path::{Path, PathBuf};

use crate::agents::{AgentConfig, AlgorithmKind};
use crate::environments::{EnvDescriptor, EnvKind};
use crate::error::{Error, Result};

/// How acting and learning are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// One loop interleaving actor steps and learner steps.
    SingleProcess,
    /// A learner worker, `num_actors` actor workers and an evaluator
    /// sharing a rate-limited replay table.
    Distributed { num_actors: usize },
}

/// Everything needed to run one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub agent: AgentConfig,
    pub env: EnvDescriptor,
    pub mode: Mode,
    pub total_actor_steps: u64,
    /// Actor steps between evaluations.
    pub eval_period: u64,
    pub eval_episodes: usize,
    pub log_dir: Option<PathBuf>,
    /// Learner steps between checkpoints; a final checkpoint is always
    /// written when a log directory is set.
    pub checkpoint_period: Option<u64>,
    /// Static demonstration dataset for the demonstration-learning agents.
    pub demonstrations: Option<PathBuf>,
    pub seed: u64,
    /// The `key=value` settings this config was built from, stored in
    /// checkpoints so an agent can be rebuilt from one.
    pub settings: Vec<(String, String)>,
}

impl ExperimentConfig {
    pub fn new(agent: AgentConfig, env: EnvDescriptor) -> Self {
        let seed = agent.seed;
        Self {
            agent,
            env,
            mode: Mode::SingleProcess,
            total_actor_steps: 10_000,
            eval_period: 1_000,
            eval_episodes: 1,
            log_dir: None,
            checkpoint_period: None,
            demonstrations: None,
            seed,
            settings: Vec::new(),
        }
    }

    /// Builds a config from `key=value` settings; `agent` and `env` are
    /// required.
    pub fn from_settings(settings: &[(String, String)]) -> Result<Self> {
        let find = |k: &str| settings.iter().rev().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let algorithm: AlgorithmKind = find("agent").ok_or_else(|| Error::Config("missing 'agent' setting".into()))?.parse()?;
        let kind: EnvKind = find("env").ok_or_else(|| Error::Config("missing 'env' setting".into()))?.parse()?;
        let mut config = Self::new(AgentConfig::new(algorithm), EnvDescriptor::new(kind));
        for (k, v) in settings {
            config.set(k, v)?;
        }
        config.settings = settings.to_vec();
        Ok(config)
    }

    /// Applies one setting; unknown experiment keys go to the agent config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
        }
        match key {
            "env" => {
                let kind: EnvKind = value.parse()?;
                if kind != self.env.kind {
                    let env = EnvDescriptor::new(kind);
                    self.env = EnvDescriptor { mdp_seed: self.env.mdp_seed, ..env };
                }
            }
            "env_size" => self.env.size = num(key, value)?,
            "episode_cap" => self.env.episode_cap = num(key, value)?,
            "mdp_seed" => self.env.mdp_seed = num(key, value)?,
            "mode" => {
                self.mode = match value {
                    "single" | "single_process" => Mode::SingleProcess,
                    "distributed" => match self.mode {
                        Mode::Distributed { .. } => self.mode,
                        Mode::SingleProcess => Mode::Distributed { num_actors: 1 },
                    },
                    other => return Err(Error::Config(format!("unknown mode '{other}'"))),
                }
            }
            "num_actors" => self.mode = Mode::Distributed { num_actors: num(key, value)? },
            "steps" | "total_actor_steps" => self.total_actor_steps = num(key, value)?,
            "eval_period" => self.eval_period = num(key, value)?,
            "eval_episodes" => self.eval_episodes = num(key, value)?,
            "logdir" | "log_dir" => self.log_dir = Some(PathBuf::from(value)),
            "checkpoint_period" => self.checkpoint_period = Some(num(key, value)?),
            "demonstrations" => self.demonstrations = Some(PathBuf::from(value)),
            "seed" => {
                self.seed = num(key, value)?;
                self.agent.seed = self.seed;
            }
            _ => self.agent.set(key, value)?,
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if let Mode::Distributed { num_actors } = self.mode {
            if num_actors == 0 {
                return Err(Error::Config("num_actors must be >= 1".into()));
            }
        }
        if self.eval_period == 0 {
            return Err(Error::Config("eval_period must be >= 1".into()));
        }
        if self.checkpoint_period == Some(0) {
            return Err(Error::Config("checkpoint_period must be >= 1".into()));
        }
        Ok(())
    }
}

/// Parses flat `key=value` text; blank lines and `#` comments are skipped.
pub fn parse_settings(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_settings(path: &Path) -> Result<Vec<(String, String)>> {
    parse_settings(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(text: &str) -> Vec<(String, String)> {
        parse_settings(text).unwrap()
    }

    #[test]
    fn settings_build_a_config() {
        let c = ExperimentConfig::from_settings(&pairs(
            "# comment\nagent = dqn\nenv=random_mdp\nmdp_seed=3\nnum_actors=4\nsteps=500\nbatch_size=16\nseed=9\n",
        ))
        .unwrap();
        assert_eq!(c.agent.algorithm, AlgorithmKind::Dqn);
        assert_eq!(c.env.kind, EnvKind::RandomMdp);
        assert_eq!(c.env.mdp_seed, 3);
        assert_eq!(c.mode, Mode::Distributed { num_actors: 4 });
        assert_eq!(c.total_actor_steps, 500);
        assert_eq!(c.agent.batch_size, 16);
        assert_eq!((c.seed, c.agent.seed), (9, 9));
        c.validate().unwrap();
    }

    #[test]
    fn bad_settings_are_config_errors() {
        assert!(parse_settings("no equals sign").is_err());
        assert!(ExperimentConfig::from_settings(&pairs("env=gridworld")).is_err());
        assert!(ExperimentConfig::from_settings(&pairs("agent=dqn\nenv=gridworld\nbogus=1")).is_err());
        let c = ExperimentConfig::from_settings(&pairs("agent=dqn\nenv=gridworld\nnum_actors=0")).unwrap();
        assert!(c.validate().is_err());
    }
}
