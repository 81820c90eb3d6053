//! Acceptance suite. Each test checks one criterion and prints a single
//! `criterion NN [PASS|FAIL]` line to stderr, then asserts it.

use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use actorlearn::actors::Policy;
use actorlearn::adders::{NStepBuffer, Payload, Transition};
use actorlearn::agents::{AgentBuilder, AgentConfig, AlgorithmKind, ExperienceBatch, PolicyRole, VecSink};
use actorlearn::environments::control::point_mass_bang_bang;
use actorlearn::environments::deep_sea::deep_sea_demonstrations;
use actorlearn::environments::{value_iteration, EnvDescriptor, EnvKind, TabularEnv};
use actorlearn::kernels::{
    bc_loss_continuous, bc_loss_discrete, categorical_ce_loss, categorical_mean, categorical_project, impala_policy_gradient,
    mcts_imitation_loss, mpo_discrete_policy_loss, td_loss, vtrace, CategoricalSupport, MpoDuals, DEFAULT_POLICY_FLOOR,
};
use actorlearn::neural::{Activation, DenseNet, GruCell, Head, Parameterized};
use actorlearn::replay::{RateLimiterConfig, Table, TableConfig};
use actorlearn::runtime::{
    eval_seed, evaluate, offline_run, record_dataset, run_distributed, run_single_process, BehaviourKind, BehaviourPolicy,
    Checkpoint, Dataset, ExperimentConfig, Mode, OfflineOptions, RunSummary,
};
use actorlearn::{Action, Environment, Error, TimeStep};

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {id:02} [{verdict}] {name}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// ---------------------------------------------------------------------------
// 1. Gradients against central finite differences
// ---------------------------------------------------------------------------

/// Five-point central difference of `f` at `x`.
fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            let mut at = |d: f64| {
                xp[i] = orig + d;
                let v = f(&xp);
                xp[i] = orig;
                v
            };
            (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
        })
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

fn uniform(rng: &mut StdRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn simplex(rng: &mut StdRng, n: usize) -> Vec<f64> {
    let raw = uniform(rng, n, 0.01, 1.0);
    let total: f64 = raw.iter().sum();
    raw.iter().map(|p| p / total).collect()
}

fn kernel_gradient_errors(rng: &mut StdRng) -> Vec<(&'static str, f64)> {
    let h = 1e-4;
    let mut worst = vec![("td_loss", 0.0), ("categorical_ce", 0.0), ("mcts_kl", 0.0), ("bc_discrete", 0.0), ("bc_continuous", 0.0), ("mpo_policy", 0.0), ("impala_pg", 0.0)];
    for _ in 0..20 {
        let n = rng.gen_range(1..9);
        let y = uniform(rng, n, -2.0, 2.0);
        let q = uniform(rng, n, -2.0, 2.0);
        let w = uniform(rng, n, 0.1, 2.0);
        let analytic = td_loss(&y, &q, Some(&w)).unwrap().grad;
        let numeric = numeric_gradient(|q| td_loss(&y, q, Some(&w)).unwrap().loss, &q, h);
        worst[0].1 = f64::max(worst[0].1, max_rel_err(&analytic, &numeric));

        let k = rng.gen_range(2..12);
        let target = simplex(rng, k);
        let logits = uniform(rng, k, -3.0, 3.0);
        let analytic = categorical_ce_loss(&target, &logits).unwrap().1;
        let numeric = numeric_gradient(|l| categorical_ce_loss(&target, l).unwrap().0, &logits, h);
        worst[1].1 = f64::max(worst[1].1, max_rel_err(&analytic, &numeric));

        let analytic = mcts_imitation_loss(&logits, &target, DEFAULT_POLICY_FLOOR).unwrap().1;
        let numeric = numeric_gradient(|l| mcts_imitation_loss(l, &target, DEFAULT_POLICY_FLOOR).unwrap().0, &logits, h);
        worst[2].1 = f64::max(worst[2].1, max_rel_err(&analytic, &numeric));

        let action = rng.gen_range(0..k);
        let analytic = bc_loss_discrete(&logits, action).unwrap().1;
        let numeric = numeric_gradient(|l| bc_loss_discrete(l, action).unwrap().0, &logits, h);
        worst[3].1 = f64::max(worst[3].1, max_rel_err(&analytic, &numeric));

        let demo = uniform(rng, n, -1.0, 1.0);
        let analytic = bc_loss_continuous(&q, &demo).unwrap().1;
        let numeric = numeric_gradient(|p| bc_loss_continuous(p, &demo).unwrap().0, &q, h);
        worst[4].1 = f64::max(worst[4].1, max_rel_err(&analytic, &numeric));

        let values = uniform(rng, k, -2.0, 2.0);
        let duals = MpoDuals { eta: rng.gen_range(0.1..2.0), alpha: rng.gen_range(0.0..2.0), ..Default::default() };
        let analytic = mpo_discrete_policy_loss(&values, &target, &logits, &duals).unwrap().grad_logits;
        let numeric = numeric_gradient(|l| mpo_discrete_policy_loss(&values, &target, l, &duals).unwrap().loss, &logits, h);
        worst[5].1 = f64::max(worst[5].1, max_rel_err(&analytic, &numeric));

        let advantage = rng.gen_range(-2.0..2.0);
        let analytic = impala_policy_gradient(&logits, action, advantage, 0.05).unwrap().grad_logits;
        let numeric = numeric_gradient(|l| impala_policy_gradient(l, action, advantage, 0.05).unwrap().loss, &logits, h);
        worst[6].1 = f64::max(worst[6].1, max_rel_err(&analytic, &numeric));
    }
    worst
}

fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Worst relative error of a dense network's parameter and input gradients
/// for the scalar loss `sum(c * net(x))`.
fn dense_gradient_error(net: &mut DenseNet, x: &Array2<f64>, c: &Array2<f64>) -> f64 {
    let (_, tape) = net.forward(x).unwrap();
    let (grads, gx) = net.backward(&tape, c).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for t in 0..grads.len() {
        let flat: Vec<f64> = net.params()[t].to_vec();
        let numeric = numeric_gradient(
            |p| {
                let mut probe = net.clone();
                probe.params_mut()[t].copy_from_slice(p);
                (probe.predict(x).unwrap() * c).sum()
            },
            &flat,
            h,
        );
        worst = worst.max(max_rel_err(&grads[t], &numeric));
    }
    let xs: Vec<f64> = x.iter().copied().collect();
    let numeric = numeric_gradient(
        |v| {
            let probe = Array2::from_shape_vec(x.raw_dim(), v.to_vec()).unwrap();
            (net.predict(&probe).unwrap() * c).sum()
        },
        &xs,
        h,
    );
    worst.max(max_rel_err(&gx.iter().copied().collect::<Vec<_>>(), &numeric))
}

fn gru_gradient_error(rng: &mut StdRng) -> f64 {
    let (input, hidden, batch, steps) = (3, 4, 2, 5);
    let cell = GruCell::new(input, hidden, rng).unwrap();
    let h0 = random_matrix(rng, batch, hidden);
    let inputs: Vec<Array2<f64>> = (0..steps).map(|_| random_matrix(rng, batch, input)).collect();
    let coeffs: Vec<Array2<f64>> = (0..steps).map(|_| random_matrix(rng, batch, hidden)).collect();
    let loss = |cell: &GruCell, h0: &Array2<f64>, inputs: &[Array2<f64>]| {
        let (states, _) = cell.unroll(h0, inputs).unwrap();
        states.iter().zip(&coeffs).map(|(s, c)| (s * c).sum()).sum::<f64>()
    };
    let (_, tape) = cell.unroll(&h0, &inputs).unwrap();
    let (grads, gh0, gx) = cell.backward(&tape, &coeffs).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for t in 0..grads.len() {
        let flat = cell.params()[t].to_vec();
        let numeric = numeric_gradient(
            |p| {
                let mut probe = cell.clone();
                probe.params_mut()[t].copy_from_slice(p);
                loss(&probe, &h0, &inputs)
            },
            &flat,
            h,
        );
        worst = worst.max(max_rel_err(&grads[t], &numeric));
    }
    let flat: Vec<f64> = h0.iter().copied().collect();
    let numeric = numeric_gradient(|v| loss(&cell, &Array2::from_shape_vec((batch, hidden), v.to_vec()).unwrap(), &inputs), &flat, h);
    worst = worst.max(max_rel_err(&gh0.iter().copied().collect::<Vec<_>>(), &numeric));
    for step in 0..steps {
        let flat: Vec<f64> = inputs[step].iter().copied().collect();
        let numeric = numeric_gradient(
            |v| {
                let mut probe = inputs.clone();
                probe[step] = Array2::from_shape_vec((batch, input), v.to_vec()).unwrap();
                loss(&cell, &h0, &probe)
            },
            &flat,
            h,
        );
        worst = worst.max(max_rel_err(&gx[step].iter().copied().collect::<Vec<_>>(), &numeric));
    }
    worst
}

#[test]
fn criterion_01_gradients_match_finite_differences() {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let kernels = kernel_gradient_errors(&mut rng);
    let kernel_worst = kernels.iter().map(|(_, e)| *e).fold(0.0, f64::max);

    let heads = [
        Head::Linear,
        Head::Softmax,
        Head::Dueling { num_actions: 3 },
        Head::CategoricalPerAction { num_actions: 2, num_atoms: 3 },
        Head::TanhScaled { low: vec![-2.0, 0.0], high: vec![1.0, 4.0] },
    ];
    let mut mlp_worst: f64 = 0.0;
    for i in 0..20 {
        let head = heads[i % heads.len()].clone();
        let raw = match &head {
            Head::Dueling { num_actions } => num_actions + 1,
            Head::CategoricalPerAction { num_actions, num_atoms } => num_actions * num_atoms,
            Head::TanhScaled { low, .. } => low.len(),
            _ => 3,
        };
        let activation = if i % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let inputs = rng.gen_range(2..6);
        let mut net = DenseNet::new(&[inputs, rng.gen_range(3..8), rng.gen_range(3..8), raw], activation, head, &mut rng).unwrap();
        let x = random_matrix(&mut rng, 3, inputs);
        let c = random_matrix(&mut rng, 3, net.output_dim());
        mlp_worst = mlp_worst.max(dense_gradient_error(&mut net, &x, &c));
    }
    let gru_worst = (0..20).map(|_| gru_gradient_error(&mut rng)).fold(0.0, f64::max);
    let elapsed = started.elapsed().as_secs_f64();

    let pass = kernel_worst <= 1e-6 && mlp_worst <= 1e-4 && gru_worst <= 1e-4 && elapsed < 30.0;
    let per_kernel: Vec<String> = kernels.iter().map(|(n, e)| format!("{n}={e:.1e}")).collect();
    report(1, "gradient suite", pass, format!("kernels [{}] mlp={mlp_worst:.1e} gru={gru_worst:.1e} in {elapsed:.1}s", per_kernel.join(" ")));
}

// ---------------------------------------------------------------------------
// 2. N-step adder against brute-force recomputation
// ---------------------------------------------------------------------------

struct RawEpisode {
    observations: Vec<Vec<f64>>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
}

fn random_episode(rng: &mut StdRng) -> RawEpisode {
    let length = rng.gen_range(1..=25);
    RawEpisode {
        observations: (0..=length).map(|_| uniform(rng, 2, -1.0, 1.0)).collect(),
        actions: (0..length).map(|_| rng.gen_range(0..4)).collect(),
        rewards: uniform(rng, length, -1.0, 1.0),
    }
}

/// Transitions recomputed directly from their definition.
fn brute_force_transitions(ep: &RawEpisode, n: usize, gamma: f64) -> Vec<Transition> {
    let t_len = ep.rewards.len();
    (0..t_len)
        .map(|t| {
            let span = n.min(t_len - t);
            let reward = (0..span).map(|k| gamma.powi(k as i32) * ep.rewards[t + k]).sum();
            let terminal = t + span == t_len;
            Transition {
                observation: ep.observations[t].clone(),
                action: Action::Discrete(ep.actions[t]),
                reward,
                discount: if terminal { 0.0 } else { gamma.powi(n as i32) },
                next_observation: ep.observations[t + span].clone(),
                n_actual: span as u32,
            }
        })
        .collect()
}

fn transitions_match(a: &Transition, b: &Transition) -> bool {
    a.observation == b.observation
        && a.action == b.action
        && a.next_observation == b.next_observation
        && a.n_actual == b.n_actual
        && (a.reward - b.reward).abs() <= 1e-9
        && (a.discount - b.discount).abs() <= 1e-9
}

#[test]
fn criterion_02_nstep_adder_matches_oracle() {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(2);
    let episodes: Vec<RawEpisode> = (0..1000).map(|_| random_episode(&mut rng)).collect();
    let (mut mismatches, mut count_violations, mut checked) = (0, 0, 0);
    for n in [1, 3, 5] {
        for gamma in [0.0, 0.5, 0.99] {
            let mut buffer = NStepBuffer::new(n, gamma).unwrap();
            for ep in &episodes {
                buffer.start(&TimeStep::first(ep.observations[0].clone())).unwrap();
                let mut emitted = Vec::new();
                for t in 0..ep.rewards.len() {
                    let obs = ep.observations[t + 1].clone();
                    let next = if t + 1 == ep.rewards.len() { TimeStep::last(ep.rewards[t], obs) } else { TimeStep::mid(ep.rewards[t], obs) };
                    emitted.extend(buffer.push(&Action::Discrete(ep.actions[t]), &next).unwrap());
                }
                let expected = brute_force_transitions(ep, n, gamma);
                if emitted.len() != ep.rewards.len() {
                    count_violations += 1;
                }
                mismatches += emitted.iter().zip(&expected).filter(|(a, b)| !transitions_match(a, b)).count();
                checked += expected.len();
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = mismatches == 0 && count_violations == 0 && elapsed < 10.0;
    report(2, "adder oracle", pass, format!("{checked} transitions, {mismatches} mismatches, {count_violations} count violations in {elapsed:.2}s"));
}

// ---------------------------------------------------------------------------
// 3. V-trace reduces to the n-step bootstrapped return on-policy
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_vtrace_collapses_on_policy() {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let t_len = rng.gen_range(1..=30);
        let values = uniform(&mut rng, t_len + 1, -5.0, 5.0);
        let rewards = uniform(&mut rng, t_len, -1.0, 1.0);
        let discounts: Vec<f64> = (0..t_len).map(|_| if rng.gen_bool(0.1) { 0.0 } else { 0.95 }).collect();
        let log_probs = uniform(&mut rng, t_len, -3.0, 0.0);
        let out = vtrace(&values, &rewards, &discounts, &log_probs, &log_probs, 1.0, 1.0).unwrap();
        for s in 0..t_len {
            let (mut ret, mut scale) = (0.0, 1.0);
            for t in s..t_len {
                ret += scale * rewards[t];
                scale *= discounts[t];
            }
            ret += scale * values[t_len];
            worst = worst.max((out.v_targets[s] - ret).abs());
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(3, "v-trace collapse", worst <= 1e-9 && elapsed < 5.0, format!("max |v_t - G_t| = {worst:.1e} in {elapsed:.2}s"));
}

// ---------------------------------------------------------------------------
// 4. Categorical projection
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_categorical_projection() {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(4);
    let (mut mass_err, mut mean_err): (f64, f64) = (0.0, 0.0);
    let mut identity_exact = true;
    for _ in 0..10_000 {
        let atoms = rng.gen_range(2..=51);
        let v_min = rng.gen_range(-20.0..-0.5);
        let v_max = rng.gen_range(0.5..20.0);
        let support = CategoricalSupport::new(v_min, v_max, atoms).unwrap();
        let probs = simplex(&mut rng, atoms);

        // Arbitrary shift and scale: only mass is conserved.
        let (r, gamma) = (rng.gen_range(-30.0..30.0), rng.gen_range(0.0..=1.0));
        let shifted: Vec<f64> = support.atoms.iter().map(|z| r + gamma * z).collect();
        let projected = categorical_project(&shifted, &probs, &support);
        mass_err = mass_err.max((projected.iter().sum::<f64>() - 1.0).abs());

        // Targets kept inside the support: the mean is conserved as well.
        let r = rng.gen_range(v_min * (1.0 - gamma)..=v_max * (1.0 - gamma));
        let inside: Vec<f64> = support.atoms.iter().map(|z| (r + gamma * z).clamp(v_min, v_max)).collect();
        let projected = categorical_project(&inside, &probs, &support);
        let target_mean: f64 = inside.iter().zip(&probs).map(|(z, p)| z * p).sum();
        mean_err = mean_err.max((categorical_mean(&projected, &support.atoms) - target_mean).abs());
        mass_err = mass_err.max((projected.iter().sum::<f64>() - 1.0).abs());

        let identity: Vec<f64> = support.atoms.iter().map(|z| 0.0 + 1.0 * z).collect();
        identity_exact &= categorical_project(&identity, &probs, &support) == probs;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = mass_err <= 1e-9 && mean_err <= 1e-9 && identity_exact && elapsed < 5.0;
    report(4, "categorical projection", pass, format!("mass err {mass_err:.1e}, mean err {mean_err:.1e}, identity exact {identity_exact} in {elapsed:.2}s"));
}

// ---------------------------------------------------------------------------
// 5. Sampler statistics
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_sampler_statistics() {
    let started = Instant::now();
    let table = Table::new(TableConfig::prioritized(10, 1.0).with_seed(5)).unwrap();
    table.insert(vec![0u8], 1.0).unwrap();
    let heavy = table.insert(vec![1u8], 3.0).unwrap();
    let draws = 100_000;
    let hits = (0..draws).filter(|_| table.sample(1).unwrap().items[0].key == heavy).count();
    let freq = hits as f64 / draws as f64;
    let sigma = (0.75f64 * 0.25 / draws as f64).sqrt();
    let within = (freq - 0.75).abs() <= 3.0 * sigma;

    let n = 7;
    let uniform_table = Table::new(TableConfig::uniform(100)).unwrap();
    for i in 0..n {
        uniform_table.insert(vec![i as u8], 1.0 + i as f64).unwrap();
    }
    let exact = (0..100).all(|_| uniform_table.sample(4).unwrap().probabilities.iter().all(|p| *p == 1.0 / n as f64));
    let elapsed = started.elapsed().as_secs_f64();
    report(
        5,
        "sampler statistics",
        within && exact && elapsed < 10.0,
        format!("freq {:.4}/{freq:.4} (3 sigma = {:.4}), uniform reports 1/N exactly: {exact}, {elapsed:.2}s", 1.0 - freq, 3.0 * sigma),
    );
}

// ---------------------------------------------------------------------------
// 6. Rate limiter
// ---------------------------------------------------------------------------

fn limited_table(capacity: usize, min_size: usize) -> Arc<Table> {
    let limiter = RateLimiterConfig::new(32.0, 1.0, min_size);
    Arc::new(Table::new(TableConfig::prioritized(capacity, 1.0).with_rate_limiter(limiter)).unwrap())
}

/// Fast sampler against a slow inserter; returns the ratio observed right
/// after the 1000th insert.
fn ratio_after_slow_inserts() -> f64 {
    let table = limited_table(10_000, 1);
    thread::scope(|scope| {
        let sampler = scope.spawn(|| loop {
            match table.sample(1) {
                Ok(_) => {}
                Err(Error::Closed) => break,
                Err(e) => panic!("sampler failed: {e}"),
            }
        });
        let mut ratio = 0.0;
        for i in 0..1000 {
            table.insert(vec![0u8; 8], 1.0).unwrap();
            if i == 999 {
                let stats = table.stats();
                ratio = stats.total_sampled_items as f64 / stats.total_inserts as f64;
            }
            thread::sleep(Duration::from_micros(100));
        }
        table.close();
        sampler.join().unwrap();
        ratio
    })
}

/// Four inserters and two samplers for `duration`. Returns the longest
/// stretch without progress and the time needed to stop every worker.
fn stress(duration: Duration) -> (Duration, Duration, u64) {
    let table = limited_table(1000, 100);
    let stop = AtomicBool::new(false);
    thread::scope(|scope| {
        let mut workers = Vec::new();
        for i in 0..4u64 {
            let (table, stop) = (&table, &stop);
            workers.push(scope.spawn(move || {
                let mut rng = StdRng::seed_from_u64(i);
                while !stop.load(Ordering::SeqCst) {
                    match table.insert(vec![i as u8; 16], rng.gen_range(0.1..2.0)) {
                        Ok(_) => {}
                        Err(Error::Closed) => break,
                        Err(e) => panic!("inserter failed: {e}"),
                    }
                }
            }));
        }
        for i in 0..2u64 {
            let (table, stop) = (&table, &stop);
            workers.push(scope.spawn(move || {
                let mut rng = StdRng::seed_from_u64(100 + i);
                while !stop.load(Ordering::SeqCst) {
                    match table.sample(8) {
                        Ok(batch) => {
                            let priorities = uniform(&mut rng, batch.len(), 0.1, 2.0);
                            table.update_priorities(&batch.keys(), &priorities).unwrap();
                        }
                        Err(Error::Closed) => break,
                        Err(e) => panic!("sampler failed: {e}"),
                    }
                }
            }));
        }
        let started = Instant::now();
        let progress = |t: &Table| {
            let s = t.stats();
            s.total_inserts + s.total_sampled_items
        };
        let (mut last, mut last_change, mut longest_stall) = (progress(&table), Instant::now(), Duration::ZERO);
        while started.elapsed() < duration {
            thread::sleep(Duration::from_millis(50));
            let now = progress(&table);
            if now != last {
                last = now;
                last_change = Instant::now();
            }
            longest_stall = longest_stall.max(last_change.elapsed());
        }
        let stopping = Instant::now();
        stop.store(true, Ordering::SeqCst);
        table.close();
        for w in workers {
            w.join().unwrap();
        }
        (longest_stall, stopping.elapsed(), last)
    })
}

#[test]
fn criterion_06_rate_limiter() {
    let ratio = ratio_after_slow_inserts();
    let (stall, stop_time, operations) = stress(Duration::from_secs(60));
    let pass = (31.0..=33.0).contains(&ratio) && stall < Duration::from_secs(5) && stop_time < Duration::from_secs(5);
    report(
        6,
        "rate limiter",
        pass,
        format!(
            "ratio after 1000 inserts {ratio:.3}; 60s stress: {operations} operations, longest stall {:.2}s, shutdown {:.3}s",
            stall.as_secs_f64(),
            stop_time.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Shared helpers for the behavioural criteria
// ---------------------------------------------------------------------------

/// Best expected undiscounted return from the start state.
fn optimal_return(env: &EnvDescriptor) -> f64 {
    let mdp = env.tabular_mdp().unwrap().unwrap();
    value_iteration(&mdp, 1.0, 1e-10).unwrap().values[mdp.start_state]
}

fn experiment(agent: AgentConfig, env: EnvDescriptor, steps: u64, eval_period: u64, eval_episodes: usize) -> ExperimentConfig {
    let seed = agent.seed;
    let mut c = ExperimentConfig::new(agent, env);
    c.total_actor_steps = steps;
    c.eval_period = eval_period;
    c.eval_episodes = eval_episodes;
    c.seed = seed;
    c
}

fn random_mdp_dqn(seed: u64) -> AgentConfig {
    let mut agent = AgentConfig::new(AlgorithmKind::Dqn).with_seed(seed);
    agent.hidden_sizes = vec![64, 64];
    agent.batch_size = 64;
    agent.samples_per_insert = 16.0;
    agent.min_replay_size = 500;
    agent
}

fn greedy_action(policy: &mut dyn Policy, observation: &[f64]) -> usize {
    let mut rng = StdRng::seed_from_u64(0);
    policy.begin_episode();
    policy.act(observation, &mut rng).unwrap().0.discrete().unwrap()
}

fn elapsed_note(started: Instant) -> String {
    format!("{:.0}s", started.elapsed().as_secs_f64())
}

// ---------------------------------------------------------------------------
// 7. Single-process and distributed runs agree per actor step
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_single_process_matches_distributed() {
    let started = Instant::now();
    let env = EnvDescriptor::new(EnvKind::RandomMdp);
    let best = optimal_return(&env);
    let milestones = [10_000u64, 20_000, 30_000];
    let (mut single, mut distributed) = (vec![Vec::new(); 3], vec![Vec::new(); 3]);
    for seed in 0..5 {
        let base = experiment(random_mdp_dqn(seed), env.clone(), 30_000, 10_000, 500);
        let s = run_single_process(&base).unwrap();
        let mut d = base.clone();
        d.mode = Mode::Distributed { num_actors: 4 };
        let d = run_distributed(&d, None).unwrap();
        for (i, m) in milestones.iter().enumerate() {
            single[i].push(s.return_at(*m).unwrap());
            distributed[i].push(d.return_at(*m).unwrap());
        }
    }
    let gaps: Vec<f64> = (0..3).map(|i| (mean(&single[i]) - mean(&distributed[i])).abs() / best).collect();
    let pass = gaps.iter().all(|g| *g <= 0.1);
    let detail: Vec<String> = (0..3)
        .map(|i| format!("{}k: {:.3} vs {:.3} (gap {:.1}%)", milestones[i] / 1000, mean(&single[i]), mean(&distributed[i]), 100.0 * gaps[i]))
        .collect();
    report(7, "single-process = distributed", pass, format!("optimal {best:.3}; {}; {}", detail.join(", "), elapsed_note(started)));
}

// ---------------------------------------------------------------------------
// 8. DQN recovers the optimal policy of random MDPs
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_dqn_finds_optimal_policies() {
    let started = Instant::now();
    let mut agreements = Vec::new();
    for instance in 1..=10u64 {
        let env = EnvDescriptor::new(EnvKind::RandomMdp).with_mdp_seed(instance);
        let mut agent = random_mdp_dqn(instance);
        agent.n_step = 1;
        agent.batch_size = 32;
        agent.samples_per_insert = 32.0;
        agent.min_replay_size = 1000;
        let config = experiment(agent, env.clone(), 51_000, 51_000, 1);
        let summary = run_single_process(&config).unwrap();
        assert!(summary.learner_steps >= 50_000, "only {} learner steps", summary.learner_steps);

        let mdp = env.tabular_mdp().unwrap().unwrap();
        let optimal = value_iteration(&mdp, config.agent.gamma, 1e-10).unwrap().policy;
        let builder = AgentBuilder::new(config.agent.clone(), &env).unwrap();
        let mut policy = builder.policy(PolicyRole::Eval, &summary.final_snapshot).unwrap();
        let states: Vec<usize> = (0..mdp.num_states).filter(|s| !mdp.terminal[*s]).collect();
        let agree = states.iter().filter(|s| greedy_action(policy.as_mut(), &TabularEnv::one_hot(mdp.num_states, **s)) == optimal[**s]).count();
        agreements.push(agree as f64 / states.len() as f64);
    }
    let solved = agreements.iter().filter(|a| **a >= 0.95).count();
    let shown: Vec<String> = agreements.iter().map(|a| format!("{:.0}%", 100.0 * a)).collect();
    report(8, "dqn correctness", solved >= 9, format!("{solved}/10 instances >= 95% optimal [{}]; {}", shown.join(" "), elapsed_note(started)));
}

// ---------------------------------------------------------------------------
// 9. Memory: recurrent agent solves the T-maze, feed-forward cannot
// ---------------------------------------------------------------------------

fn best_eval(summary: &RunSummary) -> f64 {
    summary.records.iter().filter_map(|r| r.eval_return).fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_09_memory_task() {
    let started = Instant::now();
    let env = EnvDescriptor::new(EnvKind::TMaze).with_size(10);
    let (mut r2d2, mut dqn) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let mut agent = AgentConfig::new(AlgorithmKind::R2d2).with_seed(seed);
        agent.hidden_sizes = vec![32];
        agent.recurrent_size = 32;
        agent.batch_size = 32;
        agent.min_replay_size = 100;
        agent.sequence.burn_in = 0;
        r2d2.push(best_eval(&run_single_process(&experiment(agent, env.clone(), 100_000, 10_000, 100)).unwrap()));

        let mut agent = AgentConfig::new(AlgorithmKind::Dqn).with_seed(seed);
        agent.hidden_sizes = vec![32];
        agent.batch_size = 32;
        agent.min_replay_size = 100;
        dqn.push(best_eval(&run_single_process(&experiment(agent, env.clone(), 100_000, 10_000, 100)).unwrap()));
    }
    let solved = r2d2.iter().filter(|r| **r >= 0.9).count();
    let dqn_ok = dqn.iter().all(|r| *r <= 0.3);
    report(
        9,
        "memory (t-maze)",
        solved >= 4 && dqn_ok,
        format!("r2d2 best evals {r2d2:.2?} ({solved}/5 >= 0.9); dqn best evals {dqn:.2?}; {}", elapsed_note(started)),
    );
}

// ---------------------------------------------------------------------------
// 10. Deep Sea: planning and a single demonstration
// ---------------------------------------------------------------------------

fn deep_sea_success_rate(returns: &[f64]) -> f64 {
    returns.iter().filter(|r| **r > 0.5).count() as f64 / returns.len().max(1) as f64
}

#[test]
fn criterion_10_deep_sea_exploration() {
    let started = Instant::now();
    let env = EnvDescriptor::new(EnvKind::DeepSea).with_size(10);

    let mut agent = AgentConfig::new(AlgorithmKind::Mcts);
    agent.hidden_sizes = vec![32];
    agent.learning_rate = 1e-2;
    agent.mcts.num_simulations = 64;
    agent.mcts.max_depth = 20;
    agent.mcts.temperature = 0.05;
    let summary = run_single_process(&experiment(agent, env.clone(), 10_000, 10_000, 1)).unwrap();
    let last = &summary.episode_returns[summary.episode_returns.len().saturating_sub(100)..];
    let mcts_rate = deep_sea_success_rate(last);

    let dir = tempfile::tempdir().unwrap();
    let demo_path = dir.path().join("demo.bin");
    let (mut dqfd_solved, mut dqn_solved) = (0, 0);
    for seed in 0..5 {
        let configure = |kind| {
            let mut agent = AgentConfig::new(kind).with_seed(seed);
            agent.hidden_sizes = vec![64];
            agent.batch_size = 64;
            agent.min_replay_size = 64;
            agent
        };
        let dqfd = configure(AlgorithmKind::Dqfd);
        let builder = AgentBuilder::new(dqfd.clone(), &env).unwrap();
        let demo = deep_sea_demonstrations(10, false, seed).unwrap();
        Dataset { tag: builder.payload_tag(), records: builder.encode_episodes(&demo).unwrap() }.save(&demo_path).unwrap();
        let mut config = experiment(dqfd, env.clone(), 10_000, 10_000, 1);
        config.demonstrations = Some(demo_path.clone());
        if run_single_process(&config).unwrap().return_at(10_000).unwrap() > 0.5 {
            dqfd_solved += 1;
        }
        if run_single_process(&experiment(configure(AlgorithmKind::Dqn), env.clone(), 10_000, 10_000, 1)).unwrap().return_at(10_000).unwrap() > 0.5 {
            dqn_solved += 1;
        }
    }
    let pass = mcts_rate >= 0.9 && dqfd_solved >= 4 && dqn_solved <= 1;
    report(
        10,
        "deep sea exploration",
        pass,
        format!(
            "mcts success {:.0}% over last {} episodes; dqfd solved {dqfd_solved}/5, dqn solved {dqn_solved}/5 at 10k steps; {}",
            100.0 * mcts_rate,
            last.len(),
            elapsed_note(started)
        ),
    );
}

// ---------------------------------------------------------------------------
// 11. Continuous control
// ---------------------------------------------------------------------------

fn bang_bang_return(env: &EnvDescriptor, episodes: usize, seed: u64) -> f64 {
    let mut environment = env.make(seed).unwrap();
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut ts = environment.reset().unwrap();
        while !ts.episode_end() {
            ts = environment.step(&Action::Continuous(vec![point_mass_bang_bang(&ts.observation, 1.0)])).unwrap();
            total += ts.reward;
        }
    }
    total / episodes as f64
}

fn random_transition_batch(builder: &AgentBuilder, env: &EnvDescriptor, steps: usize, seed: u64) -> Vec<Vec<u8>> {
    let sink = Arc::new(VecSink::default());
    let mut adder = builder.adder(sink.clone()).unwrap();
    let mut environment = env.make(seed).unwrap();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut ts = environment.reset().unwrap();
    adder.add_first(&ts).unwrap();
    for _ in 0..steps {
        let action = match builder.action_spec() {
            actorlearn::ActionSpec::Discrete { num_actions } => Action::Discrete(rng.gen_range(0..*num_actions)),
            actorlearn::ActionSpec::Continuous { low, high } => Action::Continuous(low.iter().zip(high).map(|(l, h)| rng.gen_range(*l..=*h)).collect()),
        };
        ts = environment.step(&action).unwrap();
        adder.add(&action, &ts, &Default::default()).unwrap();
        if ts.episode_end() {
            ts = environment.reset().unwrap();
            adder.add_first(&ts).unwrap();
        }
    }
    sink.take()
}

fn uniform_batch(items: &[Vec<u8>], picks: &[usize]) -> ExperienceBatch {
    let n = items.len();
    ExperienceBatch {
        keys: picks.iter().map(|i| *i as u64).collect(),
        payloads: picks.iter().map(|i| Arc::from(items[*i].clone())).collect(),
        probabilities: vec![1.0 / n as f64; picks.len()],
        table_sizes: vec![n; picks.len()],
        from_demo: vec![false; picks.len()],
    }
}

fn recorded_batches(items: &[Vec<u8>], count: usize, batch_size: usize, seed: u64) -> Vec<ExperienceBatch> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count).map(|_| uniform_batch(items, &(0..batch_size).map(|_| rng.gen_range(0..items.len())).collect::<Vec<_>>())).collect()
}

/// Steps DDPG and single-atom D4PG on identical batches and reports whether
/// their full states agree bit for bit after every step.
fn single_atom_matches_ddpg(env: &EnvDescriptor) -> bool {
    let ddpg = AgentConfig::new(AlgorithmKind::Ddpg).with_seed(3);
    let mut d4pg = AgentConfig::new(AlgorithmKind::D4pg).with_seed(3);
    d4pg.num_atoms = 1;
    let (a, b) = (AgentBuilder::new(ddpg, env).unwrap(), AgentBuilder::new(d4pg, env).unwrap());
    let items = random_transition_batch(&a, env, 2_000, 3);
    let (mut la, mut lb) = (a.learner(None).unwrap(), b.learner(None).unwrap());
    recorded_batches(&items, 50, 64, 3).iter().all(|batch| {
        la.step_on(batch).unwrap();
        lb.step_on(batch).unwrap();
        la.state().tensors == lb.state().tensors
    })
}

#[test]
fn criterion_11_continuous_control() {
    let started = Instant::now();
    let env = EnvDescriptor::new(EnvKind::PointMass);
    let bitwise = single_atom_matches_ddpg(&env);
    let (eval_episodes, period, budget) = (10, 20_000u64, 200_000u64);
    let mut fractions = Vec::new();
    for seed in 0..5 {
        let mut agent = AgentConfig::new(AlgorithmKind::D4pg).with_seed(seed);
        agent.min_replay_size = 1000;
        let summary = run_single_process(&experiment(agent, env.clone(), budget, period, eval_episodes)).unwrap();
        let best = summary
            .records
            .iter()
            .map(|r| r.eval_return.unwrap() / bang_bang_return(&env, eval_episodes, eval_seed(seed, r.actor_steps)))
            .fold(f64::NEG_INFINITY, f64::max);
        fractions.push(best);
    }
    let solved = fractions.iter().filter(|f| **f >= 0.9).count();
    report(
        11,
        "continuous control",
        solved >= 4 && bitwise,
        format!("best fraction of bang-bang return per seed {fractions:.3?} ({solved}/5 >= 0.9); single-atom = ddpg bitwise: {bitwise}; {}", elapsed_note(started)),
    );
}

// ---------------------------------------------------------------------------
// 12. Offline learning from recorded datasets
// ---------------------------------------------------------------------------

#[test]
fn criterion_12_offline_learning() {
    let started = Instant::now();
    let env = EnvDescriptor::new(EnvKind::Gridworld);
    let mdp = env.tabular_mdp().unwrap().unwrap();

    let mut bc = AgentConfig::new(AlgorithmKind::Bc);
    bc.n_step = 1;
    bc.hidden_sizes = vec![64];
    bc.batch_size = 64;
    bc.learning_rate = 1e-2;
    let builder = AgentBuilder::new(bc.clone(), &env).unwrap();
    let oracle = BehaviourPolicy::new(BehaviourKind::Oracle, &env, bc.gamma, 0).unwrap();
    let (dataset, _) = record_dataset(&builder, &env, Box::new(oracle), 50, 0).unwrap();
    let options = |steps| OfflineOptions { learner_steps: steps, eval_env: None, eval_period: steps, eval_episodes: 1, log_dir: None, seed: 0, settings: vec![] };
    let cloned = offline_run(&builder, &dataset, &options(2_000)).unwrap();
    let oracle_policy = value_iteration(&mdp, bc.gamma, 1e-10).unwrap().policy;
    let mut covered: Vec<usize> = dataset.records.iter().map(|r| TabularEnv::decode(&Transition::decode(r).unwrap().observation).unwrap()).collect();
    covered.sort_unstable();
    covered.dedup();
    let mut policy = builder.policy(PolicyRole::Eval, &cloned.learner.snapshot()).unwrap();
    let agree = covered.iter().filter(|s| greedy_action(policy.as_mut(), &TabularEnv::one_hot(mdp.num_states, **s)) == oracle_policy[**s]).count();
    let agreement = agree as f64 / covered.len() as f64;

    let mut dqn = AgentConfig::new(AlgorithmKind::Dqn);
    dqn.n_step = 1;
    dqn.hidden_sizes = vec![64];
    dqn.batch_size = 64;
    let builder = AgentBuilder::new(dqn.clone(), &env).unwrap();
    let mixed = BehaviourPolicy::new(BehaviourKind::Mixed { oracle_fraction: 0.5 }, &env, dqn.gamma, 1).unwrap();
    let (dataset, returns) = record_dataset(&builder, &env, Box::new(mixed), 200, 1).unwrap();
    let data_mean = mean(&returns);
    let learned = offline_run(&builder, &dataset, &options(10_000)).unwrap();
    let eval = evaluate(&builder, &env, &learned.learner.snapshot(), 20, 7).unwrap();

    let pass = agreement >= 0.99 && eval >= data_mean;
    report(
        12,
        "offline learning",
        pass,
        format!(
            "bc agreement {:.1}% on {} covered states; offline dqn eval {eval:.3} vs dataset mean {data_mean:.3}; {}",
            100.0 * agreement,
            covered.len(),
            elapsed_note(started)
        ),
    );
}

// ---------------------------------------------------------------------------
// 13. Samples-per-insert sensitivity
// ---------------------------------------------------------------------------

fn steps_to_reach(summary: &RunSummary, threshold: f64) -> Option<u64> {
    summary.records.iter().find(|r| r.eval_return.is_some_and(|v| v >= threshold)).map(|r| r.actor_steps)
}

#[test]
fn criterion_13_spi_sensitivity() {
    let started = Instant::now();
    let env = EnvDescriptor::new(EnvKind::RandomMdp);
    let threshold = 0.9 * optimal_return(&env);
    let mut outcomes = Vec::new();
    for seed in 0..5 {
        let reach = |spi: f64| {
            let mut agent = random_mdp_dqn(seed);
            agent.batch_size = 32;
            agent.samples_per_insert = spi;
            steps_to_reach(&run_single_process(&experiment(agent, env.clone(), 30_000, 1_000, 300)).unwrap(), threshold)
        };
        outcomes.push((reach(2.0), reach(32.0)));
    }
    let faster = outcomes
        .iter()
        .filter(|(low, high)| match (low, high) {
            (Some(l), Some(h)) => h < l,
            (None, Some(_)) => true,
            _ => false,
        })
        .count();
    let shown: Vec<String> = outcomes.iter().map(|(l, h)| format!("{}/{}", fmt_steps(*l), fmt_steps(*h))).collect();
    report(
        13,
        "spi sensitivity",
        faster >= 4,
        format!("actor steps to {threshold:.2} (spi 2 / spi 32): [{}]; spi 32 strictly faster in {faster}/5; {}", shown.join(" "), elapsed_note(started)),
    );
}

fn fmt_steps(s: Option<u64>) -> String {
    s.map_or("never".into(), |s| format!("{}k", s / 1000))
}

// ---------------------------------------------------------------------------
// 14. Crash and resume
// ---------------------------------------------------------------------------

#[test]
fn criterion_14_checkpoint_resume_is_exact() {
    let env = EnvDescriptor::new(EnvKind::Gridworld);
    let mut agent = AgentConfig::new(AlgorithmKind::Dqn).with_seed(14);
    agent.hidden_sizes = vec![32];
    agent.target_update = actorlearn::neural::TargetUpdate::Periodic { period: 7 };
    let builder = AgentBuilder::new(agent, &env).unwrap();
    let items = random_transition_batch(&builder, &env, 3_000, 14);
    let batches = recorded_batches(&items, 60, 32, 14);

    let mut uninterrupted = builder.learner(None).unwrap();
    let trajectory: Vec<_> = batches
        .iter()
        .map(|b| {
            uninterrupted.step_on(b).unwrap();
            uninterrupted.state().tensors
        })
        .collect();

    let mut first = builder.learner(None).unwrap();
    for b in &batches[..30] {
        first.step_on(b).unwrap();
    }
    let saved = Checkpoint {
        learner: first.state(),
        actor_steps: 0,
        replay_inserts: items.len() as u64,
        replay_samples: 30 * 32,
        settings: vec![],
        saved_at: 0.0,
    };
    let walltime_before = first.walltime_s();
    drop(first);
    let restored_state = Checkpoint::decode(&saved.encode()).unwrap();
    let mut resumed = builder.learner(None).unwrap();
    resumed.restore(&restored_state.learner).unwrap();
    let walltime_restored = resumed.walltime_s();
    let exact = batches[30..].iter().zip(&trajectory[30..]).all(|(b, expected)| {
        resumed.step_on(b).unwrap();
        &resumed.state().tensors == expected
    });
    let walltime_persists = walltime_before > 0.0 && walltime_restored == walltime_before && resumed.walltime_s() > walltime_before;
    report(
        14,
        "crash-resume",
        exact && walltime_persists && resumed.steps() == 60,
        format!(
            "30 steps after restore match the uninterrupted run bitwise: {exact}; walltime {walltime_before:.4}s saved, {walltime_restored:.4}s restored, {:.4}s at end",
            resumed.walltime_s()
        ),
    );
}
