//! Experiment runtime: single-process and distributed runs, evaluation,
//! offline training, logs, checkpoints, datasets and plots.
//!
//! Both run modes are built from the same pieces: a [`GenericActor`]
//! inside an [`EnvironmentLoop`], a replay [`Table`], and a [`Learner`]
//! publishing snapshots that actors poll through a variable client.

mod checkpoint;
mod config;
mod dataset;
mod distributed;
mod log;
mod plot;
mod single;

use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{parse_settings, read_settings, ExperimentConfig, Mode};
pub use dataset::{record_dataset, BehaviourKind, BehaviourPolicy, Dataset, DATASET_MAGIC};
pub use distributed::run_distributed;
pub use log::{read_log, unix_time, CsvLog, LogRecord, LOG_HEADER};
pub use plot::{aggregate, render_svg, Curve, CurvePoint, XAxis};
pub use single::run_single_process;

use crate::actors::GenericActor;
use crate::agents::{AgentBuilder, DatasetSource, Learner, PolicyRole};
use crate::environment_loop::EnvironmentLoop;
use crate::environments::EnvDescriptor;
use crate::error::{Error, Result};
use crate::interfaces::ParameterSnapshot;
use crate::replay::Table;

pub const LOG_FILE: &str = "log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.txt";

/// Outcome of a run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub actor_steps: u64,
    pub learner_steps: u64,
    /// Completed episodes across all actors.
    pub episodes: u64,
    pub replay_inserts: u64,
    pub replay_samples: u64,
    pub learner_walltime_s: f64,
    pub records: Vec<LogRecord>,
    /// Undiscounted return of every completed training episode, in order of
    /// completion.
    pub episode_returns: Vec<f64>,
    pub final_snapshot: ParameterSnapshot,
}

impl RunSummary {
    /// Sampled items per inserted item over the whole run.
    pub fn realized_ratio(&self) -> f64 {
        if self.replay_inserts == 0 {
            0.0
        } else {
            self.replay_samples as f64 / self.replay_inserts as f64
        }
    }

    /// Evaluation return recorded at exactly `actor_steps`, if any.
    pub fn return_at(&self, actor_steps: u64) -> Option<f64> {
        self.records.iter().find(|r| r.actor_steps == actor_steps).and_then(|r| r.eval_return)
    }
}

/// Mean undiscounted return of `episodes` noise-free episodes with the
/// given parameters. Nothing is written to replay.
pub fn evaluate(builder: &AgentBuilder, env: &EnvDescriptor, snapshot: &ParameterSnapshot, episodes: usize, seed: u64) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let policy = builder.policy(PolicyRole::Eval, snapshot)?;
    let mut actor = GenericActor::new(policy, None, None, seed);
    let mut environment = env.make(seed)?;
    let mut lp = EnvironmentLoop::new();
    let mut total = 0.0;
    for _ in 0..episodes {
        total += lp.run_episode(&mut environment, &mut actor)?.episode_return;
    }
    Ok(total / episodes as f64)
}

/// Seed of the evaluation at `milestone` actor steps; shared by every run
/// mode so evaluations are comparable.
pub fn eval_seed(seed: u64, milestone: u64) -> u64 {
    mix(seed ^ 0xe7a1_0000_0000_0000, milestone)
}

pub(crate) fn worker_seed(seed: u64, worker: usize) -> u64 {
    mix(seed, worker as u64 + 1)
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Static demonstration table from the config's dataset file.
pub(crate) fn load_demonstrations(config: &ExperimentConfig, builder: &AgentBuilder) -> Result<Option<Arc<Table>>> {
    let Some(path) = &config.demonstrations else {
        return Ok(None);
    };
    let dataset = Dataset::load(path)?;
    dataset.expect_tag(builder.payload_tag())?;
    if dataset.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Some(builder.demo_table(dataset.records)?))
}

/// File paths under a run's log directory.
pub(crate) struct RunFiles {
    dir: Option<PathBuf>,
}

impl RunFiles {
    pub fn new(dir: Option<&Path>) -> Self {
        Self { dir: dir.map(Path::to_path_buf) }
    }

    pub fn log(&self) -> Result<Option<CsvLog>> {
        self.dir.as_ref().map(|d| CsvLog::create(&d.join(LOG_FILE))).transpose()
    }

    pub fn save_checkpoint(&self, checkpoint: &Checkpoint) -> Result<()> {
        match &self.dir {
            Some(d) => checkpoint.save(&d.join(CHECKPOINT_FILE)),
            None => Ok(()),
        }
    }

    /// Records why a run aborted.
    pub fn diagnose(&self, error: &Error, learner_steps: u64, actor_steps: u64) {
        if let Some(d) = &self.dir {
            let text = format!("run aborted\nerror: {error}\nlearner_steps: {learner_steps}\nactor_steps: {actor_steps}\n");
            // Best effort: the original error is what gets reported.
            let _ = std::fs::write(d.join(DIAGNOSTIC_FILE), text);
        }
    }
}

/// Settings for training from a fixed dataset.
#[derive(Clone, Debug)]
pub struct OfflineOptions {
    pub learner_steps: u64,
    /// Evaluated every `eval_period` learner steps and at the end.
    pub eval_env: Option<EnvDescriptor>,
    pub eval_period: u64,
    pub eval_episodes: usize,
    pub log_dir: Option<PathBuf>,
    pub seed: u64,
    /// Stored in the final checkpoint; see [`ExperimentConfig::settings`].
    pub settings: Vec<(String, String)>,
}

pub struct OfflineSummary {
    pub learner: Learner,
    pub records: Vec<LogRecord>,
}

/// Trains a learner on shuffled minibatches from `dataset` without any
/// environment interaction, optionally evaluating as it goes.
pub fn offline_run(builder: &AgentBuilder, dataset: &Dataset, options: &OfflineOptions) -> Result<OfflineSummary> {
    dataset.expect_tag(builder.payload_tag())?;
    if dataset.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if options.eval_period == 0 {
        return Err(Error::Config("eval_period must be >= 1".into()));
    }
    let source = Arc::new(DatasetSource::new(dataset.records.clone(), options.seed)?);
    let mut learner = builder.learner(Some(source))?;
    let files = RunFiles::new(options.log_dir.as_deref());
    let mut log = files.log()?;
    let mut records = Vec::new();
    let mut record = |learner: &Learner| -> Result<()> {
        let eval_return = match &options.eval_env {
            Some(env) => Some(evaluate(builder, env, &learner.snapshot(), options.eval_episodes, eval_seed(options.seed, learner.steps()))?),
            None => None,
        };
        let r = LogRecord {
            wall_ts: unix_time(),
            actor_steps: 0,
            learner_steps: learner.steps(),
            learner_walltime_s: learner.walltime_s(),
            eval_return,
            loss: learner.metrics().loss(),
        };
        if let Some(log) = &mut log {
            log.append(&r)?;
        }
        records.push(r);
        Ok(())
    };
    for step in 1..=options.learner_steps {
        if let Err(e) = learner.step() {
            files.diagnose(&e, learner.steps(), 0);
            return Err(e);
        }
        if step % options.eval_period == 0 || step == options.learner_steps {
            record(&learner)?;
        }
    }
    files.save_checkpoint(&Checkpoint {
        learner: learner.state(),
        actor_steps: 0,
        replay_inserts: 0,
        replay_samples: learner.steps() * builder.config().batch_size as u64,
        settings: options.settings.clone(),
        saved_at: unix_time(),
    })?;
    Ok(OfflineSummary { learner, records })
}

/// Rebuilds the agent stored in a checkpoint and returns its builder,
/// environment and parameters.
pub fn load_agent(checkpoint: &Checkpoint) -> Result<(AgentBuilder, ExperimentConfig, ParameterSnapshot)> {
    let config = ExperimentConfig::from_settings(&checkpoint.settings)?;
    let builder = AgentBuilder::new(config.agent.clone(), &config.env)?;
    let mut learner = builder.learner(None)?;
    learner.restore(&checkpoint.learner)?;
    Ok((builder, config, learner.snapshot()))
}
