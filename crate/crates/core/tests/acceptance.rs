//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test -p simcim-core --test acceptance`, or pick
//! criteria by number: `cargo test -p simcim-core --test acceptance -- 1 3 9`.
//! Criteria 2 and 4 need the Gset file `G1`, looked up in `$SIMCIM_GSET_DIR`
//! and then in `<workspace>/data/gset/`.

use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use simcim_core::agent::{
    actor_forward, finetune, ppo_loss, ppo_loss_and_gradient, pretrain, rollout_with_board, Architecture,
    FinetuneConfig, NetworkParameters, PpoBatch, PpoConfig, PretrainConfig, ProblemContext, UpdateRecord,
};
use simcim_core::baselines::{cmaes_minimize, tune_tanh, CmaesConfig};
use simcim_core::environment::{EnvConfig, Environment};
use simcim_core::problem::{
    brute_force_max_cut, generate_erdos_renyi, read_gset, CouplingMatrix, SpinConfiguration, WeightMode,
};
use simcim_core::rewards::{Leaderboard, RescaledRankedRule};
use simcim_core::schedules::{linear_pbar, Action, Schedule};
use simcim_core::seeds::{SeedSequence, Stream};
use simcim_core::simcim::{batch_cuts, find_learning_rate, run_batch, SimCimConfig};
use simcim_core::spectral::{eigendecompose, SpectralDecomposition};
use simcim_core::stats::{mean, median};

const G1_BEST: f64 = 11624.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn locate_g1() -> Option<PathBuf> {
    let mut dirs = Vec::new();
    if let Ok(d) = std::env::var("SIMCIM_GSET_DIR") {
        dirs.push(PathBuf::from(d));
    }
    dirs.push(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/gset"));
    dirs.into_iter().map(|d| d.join("G1")).find(|p| p.is_file())
}

fn g1_missing() -> Outcome {
    outcome(
        false,
        "G1 not found (set SIMCIM_GSET_DIR or place the file at data/gset/G1)",
    )
}

fn tuned_config(matrix: &CouplingMatrix, decomp: &SpectralDecomposition, base: SimCimConfig, seed: u64) -> SimCimConfig {
    let mu = find_learning_rate(matrix, decomp, &base, seed).unwrap().learning_rate;
    SimCimConfig { learning_rate: mu, ..base }
}

fn oracle_instance(index: u64) -> CouplingMatrix {
    let seed = SeedSequence::new(2024).derive(Stream::Instance, index);
    generate_erdos_renyi(16, 0.3, WeightMode::Unit, seed).unwrap()
}

fn criterion_1() -> Outcome {
    let base = SimCimConfig::default();
    let mut solved = 0;
    for i in 0..50 {
        let j = oracle_instance(i);
        let d = eigendecompose(&j).unwrap();
        let (_, optimum) = brute_force_max_cut(&j).unwrap();
        let cfg = tuned_config(&j, &d, base, i);
        let out = run_batch(&j, &d, &Schedule::Linear, &cfg, 1000 + i).unwrap();
        if out.max_cut() == optimum {
            solved += 1;
        }
    }
    outcome(solved >= 45, format!("{solved}/50 instances solved to the brute-force optimum (need >= 45)"))
}

fn criterion_2() -> Outcome {
    let Some(path) = locate_g1() else {
        return g1_missing();
    };
    let inst = read_gset(&path).unwrap();
    let d = eigendecompose(&inst.matrix).unwrap();
    let cfg = tuned_config(&inst.matrix, &d, SimCimConfig::default(), 0);
    let mut best = f64::NEG_INFINITY;
    for b in 0..30 {
        best = best.max(run_batch(&inst.matrix, &d, &Schedule::Linear, &cfg, 500 + b).unwrap().max_cut());
    }
    let ratio = best / G1_BEST;
    outcome(ratio >= 0.998, format!("best of 30 batches {best} = {ratio:.5} x best known (need >= 0.998)"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(1..=1280);
        let spread = rng.random_range(1..200);
        let base = rng.random_range(0..12000) as f64;
        let mut board = Leaderboard::new(len).unwrap();
        for _ in 0..len {
            board.push(base + rng.random_range(0..spread) as f64);
        }
        let rule = RescaledRankedRule::from_board(&board, 99.0).unwrap();
        let m = board.values().map(|v| rule.reward(v)).sum::<f64>() / len as f64;
        worst = worst.max(m.abs());
    }
    outcome(worst <= 1e-9, format!("max |window mean| over 1000 leaderboards = {worst:.3e} (need <= 1e-9)"))
}

fn spectral_residuals(j: &CouplingMatrix, d: &SpectralDecomposition) -> (f64, f64) {
    let recon = d.reconstruct() - j.view();
    let rel = recon.iter().map(|v| v * v).sum::<f64>().sqrt() / j.frobenius_norm();
    let q = d.q();
    let ortho = max_abs(&(q.t().dot(&q) - Array2::<f64>::eye(j.n())));
    (rel, ortho)
}

fn criterion_4() -> Outcome {
    let surrogate = {
        let j = generate_erdos_renyi(800, 0.06, WeightMode::Unit, 1).unwrap();
        let d = eigendecompose(&j).unwrap();
        spectral_residuals(&j, &d)
    };
    println!(
        "      info: n=800 random graph surrogate: ||QLQ'-J||/||J|| = {:.2e}, max|Q'Q-I| = {:.2e}",
        surrogate.0, surrogate.1
    );
    let Some(path) = locate_g1() else {
        return g1_missing();
    };
    let inst = read_gset(&path).unwrap();
    let d = eigendecompose(&inst.matrix).unwrap();
    let (rel, ortho) = spectral_residuals(&inst.matrix, &d);
    outcome(
        rel <= 1e-8 && ortho <= 1e-8,
        format!("G1: ||QLQ'-J||/||J|| = {rel:.2e}, max|Q'Q-I| = {ortho:.2e} (need both <= 1e-8)"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = PpoConfig::default();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for trial in 0..6 {
        let arch = if trial == 0 {
            Architecture { input: 6, hidden: 8, features: 4 }
        } else {
            Architecture {
                input: rng.random_range(3..10),
                hidden: rng.random_range(3..12),
                features: rng.random_range(2..7),
            }
        };
        let mut p = NetworkParameters::initialize(arch, trial);
        for v in p.as_mut_slice() {
            *v += 0.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        }
        let phi = Array1::from_shape_fn(arch.features, |_| rng.random_range(0.0..1.0));
        let rows = 8;
        let observations = Array2::from_shape_fn((rows, arch.input), |_| StandardNormal.sample(&mut rng));
        let actions: Vec<usize> = (0..rows).map(|_| rng.random_range(0..3)).collect();
        let probs = actor_forward(&p, observations.view(), phi.view()).unwrap().probs;
        let batch = PpoBatch {
            old_log_probs: Array1::from_shape_fn(rows, |i| probs[[i, actions[i]]].ln() + rng.random_range(-0.05..0.05)),
            old_values: Array1::from_shape_fn(rows, |_| rng.random_range(-0.5..0.5)),
            returns: Array1::from_shape_fn(rows, |_| rng.random_range(-1.0..1.0)),
            observations,
            actions,
        };
        let (_, grad) = ppo_loss_and_gradient(&p, &batch, phi.view(), &config).unwrap();
        let h = 1e-6;
        for k in 0..p.len() {
            let orig = p.as_slice()[k];
            p.as_mut_slice()[k] = orig + h;
            let up = ppo_loss(&p, &batch, phi.view(), &config).unwrap().total;
            p.as_mut_slice()[k] = orig - h;
            let down = ppo_loss(&p, &batch, phi.view(), &config).unwrap().total;
            p.as_mut_slice()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grad.as_slice()[k];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
            checked += 1;
        }
    }
    outcome(
        worst <= 1e-4,
        format!("max relative error {worst:.2e} over {checked} parameters in 6 shapes (need <= 1e-4)"),
    )
}

fn slope(ys: &[f64]) -> f64 {
    let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
    let (mx, my) = (mean(&xs), mean(ys));
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

const DESK_N: usize = 60;
const DESK_P: f64 = 0.06;

fn desk_env() -> EnvConfig {
    EnvConfig {
        simcim: SimCimConfig {
            batch_size: 64,
            ..SimCimConfig::default()
        },
        ..EnvConfig::default()
    }
}

fn desk_instance(seed: u64) -> CouplingMatrix {
    generate_erdos_renyi(DESK_N, DESK_P, WeightMode::Unit, seed).unwrap()
}

struct Pretrained {
    initial: NetworkParameters,
    trained: NetworkParameters,
    records: Vec<UpdateRecord>,
}

fn run_pretraining() -> Pretrained {
    let initial = NetworkParameters::initialize(Architecture::for_problem(DESK_N), 6);
    let cfg = PretrainConfig {
        env: desk_env(),
        ppo: PpoConfig::default(),
        num_instances: 300,
    };
    let mut gen = |s| generate_erdos_renyi(DESK_N, DESK_P, WeightMode::Unit, s);
    let mut log = |r: &UpdateRecord, _: &NetworkParameters| {
        if (r.update + 1).is_multiple_of(50) {
            println!(
                "      pretrain {:>3}: mean reward {:+.3e}, beat-percentile fraction {:.3}, value loss {:.4}",
                r.update + 1,
                r.mean_reward,
                r.fraction_above,
                r.value_loss
            );
        }
        Ok(())
    };
    let (trained, records) = pretrain(initial.clone(), &mut gen, &cfg, 6, &mut log).unwrap();
    Pretrained {
        initial,
        trained,
        records,
    }
}

/// Median cut of one evaluation batch, agent versus the linear schedule.
fn held_out_medians(params: &NetworkParameters, seed: u64) -> (f64, f64) {
    let env = desk_env();
    let j = desk_instance(seed);
    let ctx = ProblemContext::prepare(j, &env, env.batch_size(), seed).unwrap();
    let mut board = Leaderboard::new(env.batch_size()).unwrap();
    let t = rollout_with_board(params, &ctx, &mut board, &env, 77).unwrap();
    let cfg = SimCimConfig { learning_rate: ctx.learning_rate, ..env.simcim };
    let linear = run_batch(&ctx.matrix, &ctx.decomp, &Schedule::Linear, &cfg, 77).unwrap();
    (median(&t.cuts), median(&linear.cuts))
}

fn criterion_6(p: &Pretrained) -> Outcome {
    let rewards: Vec<f64> = p.records.iter().map(|r| r.mean_reward).collect();
    let fractions: Vec<f64> = p.records.iter().map(|r| r.fraction_above).collect();
    let first = mean(&rewards[..50]);
    let last = mean(&rewards[rewards.len() - 50..]);
    let trend = slope(&fractions);
    let held_out = SeedSequence::new(99).derive(Stream::Instance, 0);
    let mut before = Vec::new();
    let mut after = Vec::new();
    for k in 0..5 {
        let (b, lin) = held_out_medians(&p.initial, held_out + k);
        let (a, _) = held_out_medians(&p.trained, held_out + k);
        before.push(b / lin);
        after.push(a / lin);
    }
    println!(
        "      info: held-out median cut / linear median: untrained {:.4}, pretrained {:.4}",
        mean(&before),
        mean(&after)
    );
    // "strictly exceeds" is judged beyond the 1e-9 zero-mean tolerance
    let rewards_up = last - first > 1e-9;
    let fraction_up = trend > 0.0;
    outcome(
        rewards_up && fraction_up,
        format!(
            "mean R3 reward first 50 {first:+.3e}, last 50 {last:+.3e}; beat-percentile fraction slope {trend:+.3e} per update"
        ),
    )
}

fn criterion_7(p: &Pretrained) -> Outcome {
    let env = desk_env();
    let seed = SeedSequence::new(7).derive(Stream::Instance, 0);
    let j = desk_instance(seed);
    let base = ProblemContext::prepare(j, &env, 5 * env.batch_size(), 7).unwrap();
    let run = |updates: usize| {
        let cfg = FinetuneConfig {
            env,
            ppo: PpoConfig::default(),
            num_updates: updates,
        };
        let mut ctx = base.clone();
        finetune(p.trained.clone(), &mut ctx, &cfg, None, 70, &mut |_, _| Ok(())).unwrap()
    };
    let agent0 = run(0);
    let agent100 = run(100);
    let (m0, m100) = (agent0.final_stats.median, agent100.final_stats.median);
    outcome(
        m100 > m0,
        format!(
            "median cut Agent-0 {m0}, Agent-100 {m100} (max {} vs {})",
            agent0.final_stats.max, agent100.final_stats.max
        ),
    )
}

fn criterion_8() -> Outcome {
    let sphere = cmaes_minimize(
        &mut |x: &[f64]| x.iter().map(|v| v * v).sum(),
        &[0.8, -0.6, 0.4],
        &CmaesConfig {
            bounds: None,
            ..CmaesConfig::default()
        },
        8,
    )
    .unwrap();
    let j = oracle_instance(0);
    let d = eigendecompose(&j).unwrap();
    let (_, optimum) = brute_force_max_cut(&j).unwrap();
    let cfg = tuned_config(&j, &d, SimCimConfig::default(), 0);
    let tuned = tune_tanh(&j, &d, &CmaesConfig::default(), &cfg, Some(optimum as i64), 8).unwrap();
    outcome(
        sphere.best_value <= 1e-6 && sphere.history.len() <= 500 && tuned.fresh.max == optimum,
        format!(
            "sphere best {:.2e} after {} evaluations; tanh fresh-batch max {} vs optimum {optimum} (search max {})",
            sphere.best_value,
            sphere.history.len(),
            tuned.fresh.max,
            tuned.search_best.c_max
        ),
    )
}

fn criterion_9() -> Outcome {
    let j = oracle_instance(1);
    let d = eigendecompose(&j).unwrap();
    let env = EnvConfig {
        simcim: SimCimConfig {
            batch_size: 8,
            ..SimCimConfig::default()
        },
        ..EnvConfig::default()
    };
    let (mut e, _) = Environment::reset(&j, &d, env, 9).unwrap();
    let hold = vec![Action::Hold.index(); 8];
    while !e.step(&hold).unwrap().1 {}
    let (m, total) = (env.interval, env.simcim.iterations);
    let mut worst = 0.0f64;
    for b in 0..8 {
        for (k, a) in e.anchor_sequence(b).iter().enumerate() {
            worst = worst.max((a - linear_pbar(k * m, total)).abs());
        }
    }
    let linear = run_batch(&j, &d, &Schedule::Linear, &env.simcim, 9).unwrap();
    let spins: Vec<SpinConfiguration> = e
        .amplitudes()
        .rows()
        .into_iter()
        .map(|r| SpinConfiguration::from_amplitudes(r.iter()))
        .collect();
    let same_cuts = batch_cuts(&j, &spins) == linear.cuts;
    outcome(
        worst <= 1e-12,
        format!(
            "{} anchors per episode, max |anchor - linear| = {worst:.2e} (floating-point accumulation, need <= 1e-12); final cuts identical to the linear run: {same_cuts}",
            total / m + 1
        ),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let wants = |k: usize| selected.is_empty() || selected.contains(&k);
    let names = [
        "oracle equivalence at n=16",
        "Gset G1 desk check",
        "R3 zero mean",
        "spectral correctness on G1",
        "PPO gradient correctness",
        "learning progress during pre-training",
        "fine-tuning beats Agent-0",
        "CMA-ES sanity",
        "zero-action agent equals linear schedule",
    ];
    let mut failures = 0;
    let mut pretrained = None;
    for (idx, name) in names.iter().enumerate() {
        let k = idx + 1;
        if !wants(k) {
            continue;
        }
        let start = Instant::now();
        let result = match k {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 | 7 => {
                let p = pretrained.get_or_insert_with(run_pretraining);
                if k == 6 {
                    criterion_6(p)
                } else {
                    criterion_7(p)
                }
            }
            8 => criterion_8(),
            9 => criterion_9(),
            _ => unreachable!(),
        };
        if !result.pass {
            failures += 1;
        }
        println!(
            "{} [{k}] {name}: {} ({:.1}s)",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all selected acceptance criteria passed");
}
