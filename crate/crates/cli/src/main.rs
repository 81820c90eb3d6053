use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actorlearn::agents::{AgentBuilder, PolicyRole};
use actorlearn::runtime::{
    aggregate, evaluate, load_agent, offline_run, read_log, read_settings, record_dataset, render_svg, run_distributed,
    run_single_process, BehaviourKind, BehaviourPolicy, Checkpoint, Curve, Dataset, ExperimentConfig, Mode, OfflineOptions,
    XAxis,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "actorlearn", version, about = "Train, evaluate and plot actor/learner agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent online, single-process or with concurrent actors.
    Train(TrainArgs),
    /// Train an agent from a dataset file without environment interaction.
    OfflineTrain(OfflineArgs),
    /// Evaluate the agent stored in a checkpoint.
    Eval(EvalArgs),
    /// Record episodes of a behaviour policy or checkpoint into a dataset file.
    MakeDataset(MakeDatasetArgs),
    /// Aggregate CSV logs into curve data and an SVG chart.
    Plot(PlotArgs),
}

/// Settings shared by every subcommand that builds an agent. Flags
/// override the config file, and `--set` overrides both.
#[derive(Args)]
struct AgentArgs {
    /// Agent: dqn, dqfd, r2d2, r2d3, impala, ddpg, d4pg, mpo, dmpo, mcts, bc.
    #[arg(long)]
    agent: Option<String>,
    /// Environment: gridworld, chain, random_mdp, deep_sea, deep_sea_stochastic, tmaze, point_mass, pendulum, bandit.
    #[arg(long)]
    env: Option<String>,
    /// File of key=value settings.
    #[arg(long = "config", value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Extra key=value setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl AgentArgs {
    fn settings(&self, mut extra: Vec<(&str, String)>) -> Result<Vec<(String, String)>> {
        let mut out = match &self.config {
            Some(path) => read_settings(path).with_context(|| format!("reading {}", path.display()))?,
            None => Vec::new(),
        };
        let flags = [("agent", self.agent.clone()), ("env", self.env.clone()), ("seed", self.seed.map(|s| s.to_string()))]
            .into_iter()
            .chain([("batch_size", self.batch_size.map(|b| b.to_string()))]);
        for (k, v) in flags {
            if let Some(v) = v {
                extra.insert(0, (k, v));
            }
        }
        out.extend(extra.into_iter().map(|(k, v)| (k.to_string(), v)));
        for s in &self.set {
            let (k, v) = s.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got '{s}'"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    agent: AgentArgs,
    /// single or distributed.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    num_actors: Option<usize>,
    /// Total actor steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Samples per insert.
    #[arg(long)]
    spi: Option<f64>,
    /// Replay capacity.
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    logdir: Option<PathBuf>,
    /// Actor steps between evaluations.
    #[arg(long)]
    eval_period: Option<u64>,
    /// Demonstration dataset for dqfd and r2d3.
    #[arg(long)]
    demonstrations: Option<PathBuf>,
}

#[derive(Args)]
struct OfflineArgs {
    #[command(flatten)]
    agent: AgentArgs,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    learner_steps: u64,
    #[arg(long)]
    logdir: Option<PathBuf>,
    /// Learner steps between evaluations.
    #[arg(long, default_value_t = 1000)]
    eval_period: u64,
    #[arg(long, default_value_t = 10)]
    eval_episodes: usize,
    /// Train without an evaluation environment.
    #[arg(long)]
    no_eval: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MakeDatasetArgs {
    #[command(flatten)]
    agent: AgentArgs,
    /// Behaviour: oracle, random, mixed or mixed:FRACTION.
    #[arg(long, conflicts_with = "checkpoint")]
    policy: Option<String>,
    /// Record the greedy policy of this checkpoint instead.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    episodes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// CSV logs of one configuration, one per seed.
    logs: Vec<PathBuf>,
    /// Additional configuration as LABEL=LOG[,LOG...]; repeatable.
    #[arg(long = "series", value_name = "LABEL=LOGS")]
    series: Vec<String>,
    #[arg(long, default_value = "run")]
    label: String,
    /// actor_steps or learner_walltime.
    #[arg(long, default_value = "actor_steps")]
    x: String,
    /// SVG output path.
    #[arg(long)]
    out: PathBuf,
    /// Curve data output path (CSV); defaults to stdout.
    #[arg(long)]
    data: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::OfflineTrain(a) => offline_train(a),
        Command::Eval(a) => eval(a),
        Command::MakeDataset(a) => make_dataset(a),
        Command::Plot(a) => plot(a),
    }
}

fn some<T: ToString>(key: &'static str, value: &Option<T>) -> Option<(&'static str, String)> {
    value.as_ref().map(|v| (key, v.to_string()))
}

fn train(a: TrainArgs) -> Result<()> {
    let extra = [
        some("mode", &a.mode),
        some("num_actors", &a.num_actors),
        some("steps", &a.steps),
        some("spi", &a.spi),
        some("capacity", &a.capacity),
        some("logdir", &a.logdir.as_ref().map(|p| p.display().to_string())),
        some("eval_period", &a.eval_period),
        some("demonstrations", &a.demonstrations.as_ref().map(|p| p.display().to_string())),
    ];
    let settings = a.agent.settings(extra.into_iter().flatten().collect())?;
    let config = ExperimentConfig::from_settings(&settings)?;
    if a.num_actors.is_some() && a.mode.as_deref().is_some_and(|m| m.starts_with("single")) {
        bail!("--num-actors requires --mode distributed");
    }
    let summary = match config.mode {
        Mode::SingleProcess => run_single_process(&config)?,
        Mode::Distributed { .. } => run_distributed(&config, None)?,
    };
    println!(
        "actor_steps={} learner_steps={} episodes={} inserts={} samples_per_insert={:.3} learner_walltime_s={:.3}",
        summary.actor_steps,
        summary.learner_steps,
        summary.episodes,
        summary.replay_inserts,
        summary.realized_ratio(),
        summary.learner_walltime_s
    );
    if let Some(last) = summary.records.last().and_then(|r| r.eval_return) {
        println!("final_eval_return={last:.4}");
    }
    Ok(())
}

fn offline_train(a: OfflineArgs) -> Result<()> {
    let settings = a.agent.settings(Vec::new())?;
    let config = ExperimentConfig::from_settings(&settings)?;
    let builder = AgentBuilder::new(config.agent.clone(), &config.env)?;
    let dataset = Dataset::load(&a.dataset).with_context(|| format!("reading {}", a.dataset.display()))?;
    let options = OfflineOptions {
        learner_steps: a.learner_steps,
        eval_env: (!a.no_eval).then(|| config.env.clone()),
        eval_period: a.eval_period,
        eval_episodes: a.eval_episodes,
        log_dir: a.logdir.clone(),
        seed: config.seed,
        settings,
    };
    let summary = offline_run(&builder, &dataset, &options)?;
    println!("records={} learner_steps={}", dataset.records.len(), summary.learner.steps());
    if let Some(last) = summary.records.last() {
        if let Some(loss) = last.loss {
            println!("final_loss={loss:.6}");
        }
        if let Some(r) = last.eval_return {
            println!("final_eval_return={r:.4}");
        }
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn eval(a: EvalArgs) -> Result<()> {
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    if checkpoint.settings.is_empty() {
        bail!("checkpoint {} does not record its agent settings", a.checkpoint.display());
    }
    let (builder, config, snapshot) = load_agent(&checkpoint)?;
    let mean = evaluate(&builder, &config.env, &snapshot, a.episodes, a.seed)?;
    println!("learner_steps={} episodes={} mean_return={mean:.4}", checkpoint.learner.learner_steps, a.episodes);
    Ok(())
}

fn make_dataset(a: MakeDatasetArgs) -> Result<()> {
    let (builder, env, policy) = match &a.checkpoint {
        Some(path) => {
            let checkpoint = load_checkpoint(path)?;
            let (builder, config, snapshot) = load_agent(&checkpoint)?;
            let policy = builder.policy(PolicyRole::Eval, &snapshot)?;
            (builder, config.env, policy)
        }
        None => {
            let mut settings = a.agent.settings(Vec::new())?;
            if !settings.iter().any(|(k, _)| k == "agent") {
                settings.insert(0, ("agent".into(), "bc".into()));
            }
            let config = ExperimentConfig::from_settings(&settings)?;
            let builder = AgentBuilder::new(config.agent.clone(), &config.env)?;
            let kind: BehaviourKind = a.policy.as_deref().unwrap_or("oracle").parse()?;
            let policy = BehaviourPolicy::new(kind, &config.env, config.agent.gamma, config.seed)?;
            (builder, config.env, Box::new(policy) as _)
        }
    };
    let seed = builder.config().seed;
    let (dataset, returns) = record_dataset(&builder, &env, policy, a.episodes, seed)?;
    dataset.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let mean = if returns.is_empty() { 0.0 } else { returns.iter().sum::<f64>() / returns.len() as f64 };
    println!("records={} episodes={} mean_return={mean:.4} tag={:#06x}", dataset.records.len(), returns.len(), dataset.tag);
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let axis: XAxis = a.x.parse()?;
    let mut groups: Vec<(String, Vec<PathBuf>)> = Vec::new();
    if !a.logs.is_empty() {
        groups.push((a.label.clone(), a.logs.clone()));
    }
    for s in &a.series {
        let (label, files) = s.split_once('=').with_context(|| format!("--series expects LABEL=LOGS, got '{s}'"))?;
        groups.push((label.to_string(), files.split(',').map(PathBuf::from).collect()));
    }
    if groups.is_empty() {
        bail!("no logs given");
    }
    let mut curves: Vec<Curve> = Vec::new();
    for (label, files) in &groups {
        let runs = files
            .iter()
            .map(|f| read_log(f).with_context(|| format!("reading {}", f.display())))
            .collect::<Result<Vec<_>>>()?;
        curves.push(aggregate(label, &runs, axis));
    }
    let mut data = String::from("label,x,mean,min,max,runs\n");
    for c in &curves {
        for p in &c.points {
            data.push_str(&format!("{},{},{},{},{},{}\n", c.label, p.x, p.mean, p.min, p.max, p.runs));
        }
    }
    match &a.data {
        Some(path) => std::fs::write(path, &data).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{data}"),
    }
    std::fs::write(&a.out, render_svg(&curves, axis)).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}
