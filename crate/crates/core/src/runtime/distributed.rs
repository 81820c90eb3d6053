use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use super::{
    eval_seed, evaluate, load_demonstrations, unix_time, worker_seed, Checkpoint, CsvLog, ExperimentConfig, LogRecord, Mode,
    RunFiles, RunSummary,
};
use crate::actors::GenericActor;
use crate::agents::{AgentBuilder, Learner, PolicyRole};
use crate::environment_loop::EnvironmentLoop;
use crate::error::{Error, Result};
use crate::replay::Table;
use crate::variables::{VariableClient, VariableServer, VariableSource};

const SUPERVISOR_TICK: Duration = Duration::from_millis(2);

/// Learner counters visible to the evaluator.
#[derive(Clone, Copy, Default)]
struct Progress {
    learner_steps: u64,
    walltime_s: f64,
    loss: Option<f64>,
}

/// State shared by every worker.
struct Shared {
    table: Arc<Table>,
    server: Arc<VariableServer>,
    actor_steps: AtomicU64,
    episodes: AtomicU64,
    episode_returns: Mutex<Vec<f64>>,
    stop: AtomicBool,
    learner_done: AtomicBool,
    progress: Mutex<Progress>,
    error: Mutex<Option<Error>>,
}

impl Shared {
    /// Records the first failure and stops every worker.
    fn fail(&self, e: Error) {
        let mut slot = self.error.lock().expect("error lock poisoned");
        if slot.is_none() {
            *slot = Some(e);
        }
        self.halt();
    }

    fn halt(&self) {
        self.stop.store(true, Ordering::SeqCst);
        self.table.close();
    }

    fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    /// Claims one actor step from the budget.
    fn claim_step(&self, budget: u64) -> bool {
        !self.stopped() && self.actor_steps.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |s| (s < budget).then_some(s + 1)).is_ok()
    }
}

/// Runs one learner worker, `num_actors` actor workers and an evaluator
/// around a rate-limited replay table. Setting `shutdown` stops the run
/// early: blocked replay calls are released and a final checkpoint is
/// written.
pub fn run_distributed(config: &ExperimentConfig, shutdown: Option<Arc<AtomicBool>>) -> Result<RunSummary> {
    config.validate()?;
    let num_actors = match config.mode {
        Mode::Distributed { num_actors } => num_actors,
        Mode::SingleProcess => 1,
    };
    let builder = AgentBuilder::new(config.agent.clone(), &config.env)?;
    let table = Arc::new(Table::new(builder.table_config(true))?);
    let demo = load_demonstrations(config, &builder)?;
    let learner = builder.learner(Some(builder.source(table.clone(), demo)?))?;
    let files = RunFiles::new(config.log_dir.as_deref());
    let log = files.log()?;
    let shared = Shared {
        table: table.clone(),
        server: learner.variable_server(),
        actor_steps: AtomicU64::new(0),
        episodes: AtomicU64::new(0),
        episode_returns: Mutex::new(Vec::new()),
        stop: AtomicBool::new(false),
        learner_done: AtomicBool::new(false),
        progress: Mutex::new(Progress::default()),
        error: Mutex::new(None),
    };

    let (learner, records) = thread::scope(|scope| {
        let learner_handle = scope.spawn(|| learner_worker(learner, config, &shared, &files));
        let mut actors: Vec<_> = (0..num_actors)
            .map(|i| {
                let (builder, shared) = (&builder, &shared);
                Some(scope.spawn(move || {
                    if let Err(e) = actor_worker(i, num_actors, builder, config, shared) {
                        shared.fail(e);
                    }
                }))
            })
            .collect();
        let evaluator = scope.spawn(|| evaluator_worker(&builder, config, &shared, log));

        // Supervise: forward shutdown requests, surface actor panics
        // promptly, and stop the learner once acting is over.
        while actors.iter().any(Option::is_some) {
            if shutdown.as_ref().is_some_and(|s| s.load(Ordering::SeqCst)) {
                shared.halt();
            }
            for slot in actors.iter_mut() {
                if slot.as_ref().is_some_and(|h| h.is_finished()) {
                    if slot.take().expect("present").join().is_err() {
                        shared.fail(Error::Worker("actor worker panicked".into()));
                    }
                }
            }
            thread::sleep(SUPERVISOR_TICK);
        }
        shared.halt();
        let learner = learner_handle.join().map_err(|_| Error::Worker("learner worker panicked".into()));
        shared.learner_done.store(true, Ordering::SeqCst);
        let records = evaluator.join().map_err(|_| Error::Worker("evaluator worker panicked".into()));
        (learner, records)
    });
    let learner = learner?;
    let records = records?;
    if let Some(e) = shared.error.lock().expect("error lock poisoned").take() {
        files.diagnose(&e, learner.steps(), shared.actor_steps.load(Ordering::SeqCst));
        return Err(e);
    }
    let stats = table.stats();
    Ok(RunSummary {
        actor_steps: shared.actor_steps.load(Ordering::SeqCst),
        learner_steps: learner.steps(),
        episodes: shared.episodes.load(Ordering::SeqCst),
        replay_inserts: stats.total_inserts,
        replay_samples: stats.total_sampled_items,
        learner_walltime_s: learner.walltime_s(),
        records,
        episode_returns: shared.episode_returns.into_inner().expect("returns lock poisoned"),
        final_snapshot: learner.snapshot(),
    })
}

fn checkpoint(learner: &Learner, config: &ExperimentConfig, shared: &Shared) -> Checkpoint {
    let stats = shared.table.stats();
    Checkpoint {
        learner: learner.state(),
        actor_steps: shared.actor_steps.load(Ordering::SeqCst),
        replay_inserts: stats.total_inserts,
        replay_samples: stats.total_sampled_items,
        settings: config.settings.clone(),
        saved_at: unix_time(),
    }
}

fn learner_worker(mut learner: Learner, config: &ExperimentConfig, shared: &Shared, files: &RunFiles) -> Learner {
    while !shared.stopped() {
        match learner.step() {
            Ok(m) => {
                *shared.progress.lock().expect("progress lock poisoned") =
                    Progress { learner_steps: m.learner_steps, walltime_s: m.walltime_s, loss: m.loss() };
                if config.checkpoint_period.is_some_and(|p| m.learner_steps % p == 0) {
                    if let Err(e) = files.save_checkpoint(&checkpoint(&learner, config, shared)) {
                        shared.fail(e);
                    }
                }
            }
            Err(Error::Closed) => break,
            Err(e) => {
                shared.fail(e);
                break;
            }
        }
    }
    if let Err(e) = files.save_checkpoint(&checkpoint(&learner, config, shared)) {
        shared.fail(e);
    }
    learner
}

fn actor_worker(index: usize, num_actors: usize, builder: &AgentBuilder, config: &ExperimentConfig, shared: &Shared) -> Result<()> {
    let budget = config.total_actor_steps;
    let role = PolicyRole::Train { index, num_actors, step_budget: budget };
    let policy = builder.policy(role, &*shared.server.latest()?)?;
    let client = VariableClient::new(shared.server.clone(), config.agent.variable_update_period);
    let mut actor = GenericActor::new(policy, Some(builder.adder(shared.table.clone())?), Some(client), worker_seed(config.seed, index));
    let mut environment = config.env.make(worker_seed(config.seed, index))?;
    let mut lp = EnvironmentLoop::new();
    while !shared.stopped() && shared.actor_steps.load(Ordering::SeqCst) < budget {
        let before = lp.episodes();
        match lp.run_episode_with(&mut environment, &mut actor, |_| shared.claim_step(budget)) {
            Ok(result) if lp.episodes() > before => {
                shared.episodes.fetch_add(1, Ordering::SeqCst);
                shared.episode_returns.lock().expect("returns lock poisoned").push(result.episode_return);
            }
            Ok(_) => {}
            Err(Error::Closed) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn evaluator_worker(builder: &AgentBuilder, config: &ExperimentConfig, shared: &Shared, mut log: Option<CsvLog>) -> Vec<LogRecord> {
    let mut records = Vec::new();
    let mut next = config.eval_period;
    while next <= config.total_actor_steps {
        let reached = shared.actor_steps.load(Ordering::SeqCst) >= next;
        let finished = shared.learner_done.load(Ordering::SeqCst);
        if !reached {
            if finished {
                break;
            }
            thread::sleep(Duration::from_micros(200));
            continue;
        }
        let progress = *shared.progress.lock().expect("progress lock poisoned");
        let result = shared
            .server
            .latest()
            .and_then(|snapshot| evaluate(builder, &config.env, &snapshot, config.eval_episodes, eval_seed(config.seed, next)));
        let eval_return = match result {
            Ok(r) => r,
            Err(e) => {
                shared.fail(e);
                break;
            }
        };
        let record = LogRecord {
            wall_ts: unix_time(),
            actor_steps: next,
            learner_steps: progress.learner_steps,
            learner_walltime_s: progress.walltime_s,
            eval_return: Some(eval_return),
            loss: progress.loss,
        };
        if let Some(log) = &mut log {
            if let Err(e) = log.append(&record) {
                shared.fail(e);
                break;
            }
        }
        records.push(record);
        next += config.eval_period;
    }
    records
}
