//! Dataset files of replay payload records.
//!
//! ```text
//! header   b"ALDS" | u16 schema tag | u16 reserved | u64 record count
//! records  count x (u32 byte length | payload)
//! ```
//!
//! Payloads use the replay item encoding, so a dataset record is
//! byte-identical to the item an adder would insert.

use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::actors::{GenericActor, Policy};
use crate::adders::{decode_any, StepExtras};
use crate::agents::{AgentBuilder, VecSink};
use crate::environment_loop::EnvironmentLoop;
use crate::environments::control::point_mass_bang_bang;
use crate::environments::tabular::{value_iteration, TabularEnv};
use crate::environments::{EnvDescriptor, EnvKind};
use crate::error::{Error, Result};
use crate::interfaces::{Action, ActionSpec, ParameterSnapshot};

pub const DATASET_MAGIC: &[u8; 4] = b"ALDS";
const HEADER_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub tag: u16,
    pub records: Vec<Vec<u8>>,
}

impl Dataset {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.records.iter().map(|r| r.len() + 4).sum::<usize>());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&self.tag.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.len() as u32).to_le_bytes());
            out.extend_from_slice(r);
        }
        out
    }

    /// Parses a dataset, checking that every record carries the header tag.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != DATASET_MAGIC {
            return Err(Error::Corrupt("not a dataset file".into()));
        }
        let tag = u16::from_le_bytes([bytes[4], bytes[5]]);
        let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let mut records = Vec::new();
        let mut pos = HEADER_LEN;
        for i in 0..count {
            let len = bytes
                .get(pos..pos + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
                .ok_or_else(|| Error::Corrupt(format!("dataset truncated at record {i}")))?;
            pos += 4;
            let record = bytes.get(pos..pos + len).ok_or_else(|| Error::Corrupt(format!("dataset truncated at record {i}")))?;
            let found = record.get(..2).map(|b| u16::from_le_bytes([b[0], b[1]]));
            if found != Some(tag) {
                return Err(Error::Schema { expected: tag, found: found.unwrap_or(0) });
            }
            records.push(record.to_vec());
            pos += len;
        }
        if pos != bytes.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes in dataset", bytes.len() - pos)));
        }
        Ok(Self { tag, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    /// Fails with a schema error unless records carry `expected`.
    pub fn expect_tag(&self, expected: u16) -> Result<()> {
        if self.tag != expected {
            return Err(Error::Schema { expected, found: self.tag });
        }
        Ok(())
    }

    /// Undiscounted return of each complete episode, reconstructed from the
    /// records. Transition records are chained through episode ends.
    pub fn episode_returns(&self) -> Result<Vec<f64>> {
        use crate::adders::PayloadKind;
        let mut returns = Vec::new();
        let mut running = 0.0;
        for r in &self.records {
            match decode_any(r)? {
                PayloadKind::Episode(e) => returns.push(e.episode_return()),
                PayloadKind::Transition(t) => {
                    if t.n_actual != 1 {
                        return Err(Error::InvalidArgument("episode returns need one-step transitions".into()));
                    }
                    running += t.reward;
                    if t.discount == 0.0 {
                        returns.push(running);
                        running = 0.0;
                    }
                }
                PayloadKind::Sequence(_) => {
                    return Err(Error::InvalidArgument("episode returns are not recoverable from sequences".into()))
                }
            }
        }
        Ok(returns)
    }
}

/// Behaviour policy for recorded datasets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BehaviourKind {
    /// Optimal policy: greedy value iteration on tabular environments,
    /// bang-bang control on the point mass.
    Oracle,
    Random,
    /// Each episode follows the oracle with this probability, else acts
    /// uniformly at random.
    Mixed { oracle_fraction: f64 },
}

impl std::str::FromStr for BehaviourKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "oracle" => BehaviourKind::Oracle,
            "random" => BehaviourKind::Random,
            other => match other.strip_prefix("mixed") {
                Some("") => BehaviourKind::Mixed { oracle_fraction: 0.5 },
                Some(frac) => BehaviourKind::Mixed {
                    oracle_fraction: frac
                        .trim_start_matches(':')
                        .parse()
                        .map_err(|_| Error::Config(format!("invalid mixed fraction '{frac}'")))?,
                },
                None => return Err(Error::Config(format!("unknown behaviour policy '{other}'"))),
            },
        })
    }
}

enum Oracle {
    Table(Vec<usize>),
    BangBang { gain: f64 },
}

/// Oracle, uniform or per-episode mixed behaviour on one environment.
pub struct BehaviourPolicy {
    oracle: Option<Oracle>,
    spec: ActionSpec,
    oracle_fraction: f64,
    use_oracle: bool,
    rng: StdRng,
}

impl BehaviourPolicy {
    pub fn new(kind: BehaviourKind, env: &EnvDescriptor, gamma: f64, seed: u64) -> Result<Self> {
        let (_, spec) = env.specs()?;
        let oracle_fraction = match kind {
            BehaviourKind::Oracle => 1.0,
            BehaviourKind::Random => 0.0,
            BehaviourKind::Mixed { oracle_fraction } => oracle_fraction,
        };
        if !(0.0..=1.0).contains(&oracle_fraction) {
            return Err(Error::Config(format!("oracle fraction {oracle_fraction} outside [0, 1]")));
        }
        let oracle = if oracle_fraction > 0.0 {
            Some(match (env.tabular_mdp()?, env.kind) {
                (Some(mdp), _) => Oracle::Table(value_iteration(&mdp, gamma, 1e-10)?.policy),
                (None, EnvKind::PointMass) => Oracle::BangBang { gain: 1.0 },
                _ => return Err(Error::Config(format!("no oracle policy for {}", env.name()))),
            })
        } else {
            None
        };
        Ok(Self { oracle, spec, oracle_fraction, use_oracle: false, rng: StdRng::seed_from_u64(seed) })
    }

    fn random_action(&self, rng: &mut StdRng) -> Action {
        match &self.spec {
            ActionSpec::Discrete { num_actions } => Action::Discrete(rng.gen_range(0..*num_actions)),
            ActionSpec::Continuous { low, high } => Action::Continuous(low.iter().zip(high).map(|(l, h)| rng.gen_range(*l..=*h)).collect()),
        }
    }
}

impl Policy for BehaviourPolicy {
    fn act(&mut self, observation: &[f64], rng: &mut StdRng) -> Result<(Action, StepExtras)> {
        let action = match (&self.oracle, self.use_oracle) {
            (Some(Oracle::Table(policy)), true) => {
                let s = TabularEnv::decode(observation).ok_or_else(|| Error::Shape("observation is not one-hot".into()))?;
                Action::Discrete(policy[s])
            }
            (Some(Oracle::BangBang { gain }), true) => Action::Continuous(vec![point_mass_bang_bang(observation, *gain)]),
            _ => self.random_action(rng),
        };
        Ok((action, StepExtras::default()))
    }

    fn begin_episode(&mut self) {
        self.use_oracle = self.rng.gen::<f64>() < self.oracle_fraction;
    }

    fn load(&mut self, _snapshot: &ParameterSnapshot) -> Result<()> {
        Ok(())
    }
}

/// Records `episodes` episodes of `policy` on `env` through the builder's
/// adder. Returns the dataset and the undiscounted return of each episode.
pub fn record_dataset(
    builder: &AgentBuilder,
    env: &EnvDescriptor,
    policy: Box<dyn Policy>,
    episodes: usize,
    seed: u64,
) -> Result<(Dataset, Vec<f64>)> {
    let sink = Arc::new(VecSink::default());
    let mut actor = GenericActor::new(policy, Some(builder.adder(sink.clone())?), None, seed);
    let mut environment = env.make(seed)?;
    let mut lp = EnvironmentLoop::new();
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        returns.push(lp.run_episode(&mut environment, &mut actor)?.episode_return);
    }
    Ok((Dataset { tag: builder.payload_tag(), records: sink.take() }, returns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adders::{Payload, Transition, TRANSITION_TAG};
    use crate::agents::{AgentConfig, AlgorithmKind};

    fn one_step_builder(env: &EnvDescriptor) -> AgentBuilder {
        let mut config = AgentConfig::new(AlgorithmKind::Bc);
        config.n_step = 1;
        AgentBuilder::new(config, env).unwrap()
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let t = Transition {
            observation: vec![1.0, 0.0],
            action: Action::Discrete(1),
            reward: 0.5,
            discount: 0.0,
            next_observation: vec![0.0, 1.0],
            n_actual: 1,
        };
        let d = Dataset { tag: TRANSITION_TAG, records: vec![t.encode(), t.encode()] };
        d.save(&path).unwrap();
        let loaded = Dataset::load(&path).unwrap();
        assert_eq!(loaded, d);
        assert_eq!(std::fs::read(&path).unwrap().len(), 16 + 2 * (4 + t.encode().len()));
        assert_eq!(loaded.episode_returns().unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn mismatched_record_tag_is_a_schema_error() {
        let mut bytes = Dataset { tag: 0x0002, records: vec![vec![1, 0, 9]] }.encode();
        assert!(matches!(Dataset::decode(&bytes), Err(Error::Schema { expected: 2, found: 1 })));
        bytes.truncate(bytes.len() - 1);
        assert!(Dataset::decode(&bytes).is_err());
        let empty = Dataset { tag: TRANSITION_TAG, records: vec![] };
        assert!(matches!(empty.expect_tag(0x0003), Err(Error::Schema { expected: 3, found: 1 })));
    }

    #[test]
    fn oracle_recording_on_gridworld_reaches_the_goal() {
        let env = EnvDescriptor::new(EnvKind::Gridworld);
        let b = one_step_builder(&env);
        let policy = BehaviourPolicy::new(BehaviourKind::Oracle, &env, 0.99, 0).unwrap();
        let (d, returns) = record_dataset(&b, &env, Box::new(policy), 3, 0).unwrap();
        assert_eq!(d.tag, TRANSITION_TAG);
        let from_records = d.episode_returns().unwrap();
        assert_eq!(from_records.len(), 3);
        for (a, b) in from_records.iter().zip(&returns) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(returns.iter().all(|r| *r > 0.0));
    }

    #[test]
    fn behaviour_kinds_parse() {
        assert_eq!("oracle".parse::<BehaviourKind>().unwrap(), BehaviourKind::Oracle);
        assert_eq!("mixed".parse::<BehaviourKind>().unwrap(), BehaviourKind::Mixed { oracle_fraction: 0.5 });
        assert_eq!("mixed:0.25".parse::<BehaviourKind>().unwrap(), BehaviourKind::Mixed { oracle_fraction: 0.25 });
        assert!("best".parse::<BehaviourKind>().is_err());
    }
}
