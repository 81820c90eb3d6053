use std::sync::Arc;

use super::{eval_seed, evaluate, load_demonstrations, unix_time, worker_seed, Checkpoint, ExperimentConfig, LogRecord, RunFiles, RunSummary};
use crate::actors::GenericActor;
use crate::agents::{AgentBuilder, Learner, PolicyRole};
use crate::environment_loop::EnvironmentLoop;
use crate::error::Result;
use crate::interfaces::{Action, Actor, ParameterSnapshot, TimeStep};
use crate::replay::Table;
use crate::variables::VariableClient;

/// Parameters and learner counters captured when an evaluation milestone
/// is crossed; evaluated once the current episode ends.
struct Milestone {
    actor_steps: u64,
    learner_steps: u64,
    learner_walltime_s: f64,
    loss: Option<f64>,
    snapshot: ParameterSnapshot,
}

/// Actor and learner in one loop: after each actor step, the learner takes
/// as many steps as the samples-per-insert ratio allows.
struct SyncAgent<'a> {
    actor: GenericActor,
    learner: Learner,
    table: Arc<Table>,
    config: &'a ExperimentConfig,
    consuming: bool,
    actor_steps: u64,
    pending: Vec<Milestone>,
    files: &'a RunFiles,
}

impl SyncAgent<'_> {
    fn may_learn(&self) -> bool {
        let Some(source) = self.learner.source() else {
            return false;
        };
        let b = self.config.agent.batch_size;
        if self.consuming {
            return source.can_sample(b);
        }
        let inserts = self.table.stats().total_inserts as f64;
        self.table.size() >= self.config.agent.min_replay_size
            && ((self.learner.steps() + 1) * b as u64) as f64 <= self.config.agent.samples_per_insert * inserts
            && source.can_sample(b)
    }

    fn checkpoint(&self) -> Checkpoint {
        let stats = self.table.stats();
        Checkpoint {
            learner: self.learner.state(),
            actor_steps: self.actor_steps,
            replay_inserts: stats.total_inserts,
            replay_samples: stats.total_sampled_items,
            settings: self.config.settings.clone(),
            saved_at: unix_time(),
        }
    }
}

impl Actor for SyncAgent<'_> {
    fn select_action(&mut self, observation: &[f64]) -> Result<Action> {
        self.actor.select_action(observation)
    }

    fn observe_first(&mut self, timestep: &TimeStep) -> Result<()> {
        self.actor.observe_first(timestep)
    }

    fn observe(&mut self, action: &Action, next_timestep: &TimeStep) -> Result<()> {
        self.actor.observe(action, next_timestep)?;
        self.actor_steps += 1;
        Ok(())
    }

    fn update(&mut self) -> Result<()> {
        while self.may_learn() {
            self.learner.step()?;
            if let Some(period) = self.config.checkpoint_period {
                if self.learner.steps() % period == 0 {
                    self.files.save_checkpoint(&self.checkpoint())?;
                }
            }
        }
        self.actor.update()?;
        if self.actor_steps % self.config.eval_period == 0 {
            self.pending.push(Milestone {
                actor_steps: self.actor_steps,
                learner_steps: self.learner.steps(),
                learner_walltime_s: self.learner.walltime_s(),
                loss: self.learner.metrics().loss(),
                snapshot: self.learner.snapshot(),
            });
        }
        Ok(())
    }
}

/// Runs acting and learning in lockstep until the actor-step budget is
/// spent. Actors see every new snapshot immediately.
pub fn run_single_process(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let builder = AgentBuilder::new(config.agent.clone(), &config.env)?;
    let table = Arc::new(Table::new(builder.table_config(false))?);
    let demo = load_demonstrations(config, &builder)?;
    let learner = builder.learner(Some(builder.source(table.clone(), demo)?))?;
    let budget = config.total_actor_steps;
    let role = PolicyRole::Train { index: 0, num_actors: 1, step_budget: budget };
    let policy = builder.policy(role, &learner.snapshot())?;
    let client = VariableClient::new(learner.variable_server(), 1);
    let actor = GenericActor::new(policy, Some(builder.adder(table.clone())?), Some(client), worker_seed(config.seed, 0));
    let files = RunFiles::new(config.log_dir.as_deref());
    let mut log = files.log()?;
    let mut agent = SyncAgent {
        actor,
        learner,
        table: table.clone(),
        config,
        consuming: builder.uses_queue(),
        actor_steps: 0,
        pending: Vec::new(),
        files: &files,
    };

    let mut environment = config.env.make(worker_seed(config.seed, 0))?;
    let mut lp = EnvironmentLoop::new();
    let mut records = Vec::new();
    let mut episode_returns = Vec::new();
    while lp.actor_steps_total() < budget {
        let before = lp.episodes();
        match lp.run_episode_with(&mut environment, &mut agent, |steps| steps < budget) {
            Ok(result) if lp.episodes() > before => episode_returns.push(result.episode_return),
            Ok(_) => {}
            Err(e) => {
                files.diagnose(&e, agent.learner.steps(), agent.actor_steps);
                files.save_checkpoint(&agent.checkpoint())?;
                return Err(e);
            }
        }
        for m in agent.pending.drain(..) {
            let eval_return = evaluate(&builder, &config.env, &m.snapshot, config.eval_episodes, eval_seed(config.seed, m.actor_steps))?;
            let r = LogRecord {
                wall_ts: unix_time(),
                actor_steps: m.actor_steps,
                learner_steps: m.learner_steps,
                learner_walltime_s: m.learner_walltime_s,
                eval_return: Some(eval_return),
                loss: m.loss,
            };
            if let Some(log) = &mut log {
                log.append(&r)?;
            }
            records.push(r);
        }
    }
    files.save_checkpoint(&agent.checkpoint())?;
    let stats = table.stats();
    Ok(RunSummary {
        actor_steps: agent.actor_steps,
        learner_steps: agent.learner.steps(),
        episodes: lp.episodes(),
        replay_inserts: stats.total_inserts,
        replay_samples: stats.total_sampled_items,
        learner_walltime_s: agent.learner.walltime_s(),
        records,
        episode_returns,
        final_snapshot: agent.learner.snapshot(),
    })
}
