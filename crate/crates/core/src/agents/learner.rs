use std::sync::Arc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::agents::source::{ExperienceBatch, ExperienceSource};
use crate::error::{Error, Result};
use crate::interfaces::{NamedTensor, ParameterSnapshot};
use crate::neural::{Adam, Parameterized};
use crate::variables::VariableServer;

/// Result of one gradient step of an [`Algorithm`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Update {
    /// Named loss terms; the first one is the headline loss.
    pub losses: Vec<(&'static str, f64)>,
    /// New priority per batch item, for prioritized replay.
    pub priorities: Option<Vec<f64>>,
    pub mean_abs_td: Option<f64>,
    /// Conditions worth surfacing, such as a clamped dual variable.
    pub warnings: Vec<&'static str>,
}

/// The learning rule of an agent: owns its networks and optimizers and
/// consumes one batch per step.
pub trait Algorithm: Send {
    /// One gradient step. `step` is the 1-based learner step; `rng` is
    /// seeded from it so resumed runs replay identically.
    fn update(&mut self, batch: &ExperienceBatch, step: u64, rng: &mut StdRng) -> Result<Update>;

    /// Tensors actors need to act.
    fn policy_tensors(&self) -> Vec<NamedTensor>;

    /// Everything needed to resume: online and target networks, optimizer
    /// moments and dual variables.
    fn state_tensors(&self) -> Vec<NamedTensor>;

    fn load_state(&mut self, tensors: &[NamedTensor]) -> Result<()>;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearnerMetrics {
    pub learner_steps: u64,
    pub losses: Vec<(String, f64)>,
    pub mean_abs_td: Option<f64>,
    /// Version of the most recently published snapshot.
    pub version: u64,
    pub walltime_s: f64,
    pub warnings: Vec<String>,
}

impl LearnerMetrics {
    /// Headline loss, if any step has run.
    pub fn loss(&self) -> Option<f64> {
        self.losses.first().map(|(_, v)| *v)
    }
}

/// Serializable learner state for checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState {
    pub learner_steps: u64,
    pub version: u64,
    pub walltime_s: f64,
    pub tensors: Vec<NamedTensor>,
}

/// Learner walltime: accumulated between learner steps, starting
/// immediately after the first one. Restoring restarts the clock.
#[derive(Clone, Debug, Default)]
struct Walltime {
    accumulated: f64,
    since: Option<Instant>,
}

impl Walltime {
    fn tick(&mut self) {
        let now = Instant::now();
        if let Some(since) = self.since {
            self.accumulated += now.duration_since(since).as_secs_f64();
        }
        self.since = Some(now);
    }
}

/// Drives an [`Algorithm`]: samples batches, applies updates, writes back
/// priorities and publishes versioned parameter snapshots. The same type
/// runs in every execution mode.
pub struct Learner {
    algorithm: Box<dyn Algorithm>,
    source: Option<Arc<dyn ExperienceSource>>,
    server: Arc<VariableServer>,
    batch_size: usize,
    seed: u64,
    steps: u64,
    version: u64,
    walltime: Walltime,
    metrics: LearnerMetrics,
}

impl Learner {
    pub fn new(algorithm: Box<dyn Algorithm>, source: Option<Arc<dyn ExperienceSource>>, batch_size: usize, seed: u64) -> Self {
        let initial = ParameterSnapshot { version: 0, tensors: algorithm.policy_tensors() };
        Self {
            algorithm,
            source,
            server: Arc::new(VariableServer::new(initial)),
            batch_size,
            seed,
            steps: 0,
            version: 0,
            walltime: Walltime::default(),
            metrics: LearnerMetrics::default(),
        }
    }

    pub fn variable_server(&self) -> Arc<VariableServer> {
        self.server.clone()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn walltime_s(&self) -> f64 {
        self.walltime.accumulated
    }

    pub fn metrics(&self) -> &LearnerMetrics {
        &self.metrics
    }

    pub fn source(&self) -> Option<&Arc<dyn ExperienceSource>> {
        self.source.as_ref()
    }

    pub fn snapshot(&self) -> ParameterSnapshot {
        ParameterSnapshot { version: self.version, tensors: self.algorithm.policy_tensors() }
    }

    pub fn algorithm(&self) -> &dyn Algorithm {
        self.algorithm.as_ref()
    }

    /// Samples a batch from the source (blocking) and learns from it.
    pub fn step(&mut self) -> Result<LearnerMetrics> {
        let source = self.source.clone().ok_or_else(|| Error::Config("learner has no experience source".into()))?;
        let batch = source.sample(self.batch_size)?;
        self.step_on(&batch)
    }

    /// Learns from an explicit batch.
    pub fn step_on(&mut self, batch: &ExperienceBatch) -> Result<LearnerMetrics> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty learner batch".into()));
        }
        let step = self.steps + 1;
        let mut rng = StdRng::seed_from_u64(step_seed(self.seed, step));
        let before = self.algorithm.policy_tensors();
        let update = self.algorithm.update(batch, step, &mut rng)?;
        if let Some((name, v)) = update.losses.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("loss '{name}' = {v} at learner step {step}")));
        }
        self.steps = step;
        if let (Some(prios), Some(source)) = (&update.priorities, &self.source) {
            source.update_priorities(batch, prios)?;
        }
        let after = self.algorithm.policy_tensors();
        if after != before {
            self.version += 1;
            self.server.publish(ParameterSnapshot { version: self.version, tensors: after })?;
        }
        self.walltime.tick();
        self.metrics = LearnerMetrics {
            learner_steps: self.steps,
            losses: update.losses.iter().map(|(n, v)| (n.to_string(), *v)).collect(),
            mean_abs_td: update.mean_abs_td,
            version: self.version,
            walltime_s: self.walltime.accumulated,
            warnings: update.warnings.iter().map(|w| w.to_string()).collect(),
        };
        Ok(self.metrics.clone())
    }

    pub fn state(&self) -> LearnerState {
        LearnerState {
            learner_steps: self.steps,
            version: self.version,
            walltime_s: self.walltime.accumulated,
            tensors: self.algorithm.state_tensors(),
        }
    }

    /// Restores a saved state; the walltime clock restarts now.
    pub fn restore(&mut self, state: &LearnerState) -> Result<()> {
        self.algorithm.load_state(&state.tensors)?;
        self.steps = state.learner_steps;
        self.version = state.version;
        self.walltime = Walltime { accumulated: state.walltime_s, since: Some(Instant::now()) };
        self.server = Arc::new(VariableServer::new(ParameterSnapshot {
            version: self.version,
            tensors: self.algorithm.policy_tensors(),
        }));
        self.metrics.learner_steps = self.steps;
        self.metrics.version = self.version;
        self.metrics.walltime_s = state.walltime_s;
        Ok(())
    }
}

fn step_seed(seed: u64, step: u64) -> u64 {
    // SplitMix64 finaliser over the pair.
    let mut z = seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Online network, optional target network and optimizer, saved and
/// restored together under one prefix.
#[derive(Clone, Debug)]
pub(crate) struct Trainable<N> {
    pub net: N,
    pub target: Option<N>,
    pub opt: Adam,
}

impl<N: Parameterized + Clone> Trainable<N> {
    pub fn new(net: N, with_target: bool, opt: Adam) -> Self {
        let target = with_target.then(|| net.clone());
        Self { net, target, opt }
    }

    pub fn target(&self) -> &N {
        self.target.as_ref().unwrap_or(&self.net)
    }

    pub fn apply(&mut self, grads: &[Vec<f64>]) -> Result<()> {
        self.opt.step(self.net.params_mut(), grads)
    }

    pub fn state_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        let mut out = self.net.to_tensors(&format!("{prefix}/"));
        if let Some(t) = &self.target {
            out.extend(t.to_tensors(&format!("{prefix}_target/")));
        }
        let layout = self.net.layout();
        out.push(NamedTensor::scalar(format!("{prefix}_adam/step"), self.opt.step_count as f64));
        for (i, (name, shape)) in layout.iter().enumerate() {
            let len: usize = shape.iter().product();
            let m = self.opt.m.get(i).cloned().unwrap_or_else(|| vec![0.0; len]);
            let v = self.opt.v.get(i).cloned().unwrap_or_else(|| vec![0.0; len]);
            out.push(NamedTensor::new(format!("{prefix}_adam/m/{name}"), shape.clone(), m));
            out.push(NamedTensor::new(format!("{prefix}_adam/v/{name}"), shape.clone(), v));
        }
        out
    }

    pub fn load_state(&mut self, prefix: &str, tensors: &[NamedTensor]) -> Result<()> {
        self.net.load_tensors(&format!("{prefix}/"), tensors)?;
        if let Some(t) = &mut self.target {
            t.load_tensors(&format!("{prefix}_target/"), tensors)?;
        }
        let find = |name: String| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Shape(format!("missing tensor '{name}'")))
        };
        self.opt.step_count = find(format!("{prefix}_adam/step"))?.data[0] as u64;
        let layout = self.net.layout();
        let mut m = Vec::with_capacity(layout.len());
        let mut v = Vec::with_capacity(layout.len());
        for (name, shape) in &layout {
            let tm = find(format!("{prefix}_adam/m/{name}"))?;
            let tv = find(format!("{prefix}_adam/v/{name}"))?;
            if &tm.shape != shape || &tv.shape != shape {
                return Err(Error::Shape(format!("optimizer state for '{name}' has the wrong shape")));
            }
            m.push(tm.data.clone());
            v.push(tv.data.clone());
        }
        self.opt.m = m;
        self.opt.v = v;
        Ok(())
    }
}

/// Scalars (such as dual variables) stored alongside network state.
pub(crate) fn scalar(tensors: &[NamedTensor], name: &str) -> Result<f64> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .map(|t| t.data[0])
        .ok_or_else(|| Error::Shape(format!("missing tensor '{name}'")))
}
