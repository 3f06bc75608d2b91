//! Mode implementations. Each writes its artifacts into a run directory and
//! returns the text shown on stdout.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use simcim_core::agent::{
    checkpoint, finetune, pretrain, training_curve_csv, Architecture, FinetuneConfig, NetworkParameters,
    PretrainConfig, ProblemContext,
};
use simcim_core::baselines::tune_tanh;
use simcim_core::environment::observation_len;
use simcim_core::problem::{generate_erdos_renyi, SpinConfiguration};
use simcim_core::schedules::{Schedule, TanhScheduleParams};
use simcim_core::seeds::{SeedSequence, Stream};
use simcim_core::simcim::{find_learning_rate, run_batch, SimCimConfig};
use simcim_core::spectral::SpectralDecomposition;
use simcim_core::stats::evaluate_batch_stats;

use crate::config::{Mode, RunConfig, ScheduleKind};
use crate::instance::{decompose, step_size, Instance};
use crate::output::{
    bench_csv, bench_table, cuts_csv, instance_csv, instance_table, BenchRow, InstanceRow, RunDir, BENCH_HEADER,
    INSTANCE_HEADER,
};

/// Runs `mode`, recording the effective configuration first.
pub fn run(mode: Mode, mut config: RunConfig, dir: &RunDir) -> Result<String> {
    config.validate()?;
    config.absolutize_paths()?;
    config.mode = Some(mode);
    config.derived_seeds = derived_seeds(mode, &config);
    dir.write_manifest(&config)?;
    match mode {
        Mode::Solve => solve(&config, dir),
        Mode::LrTest => lr_test(&config, dir),
        Mode::Pretrain => run_pretrain(&config, dir),
        Mode::Finetune => run_finetune(&config, dir),
        Mode::TuneCmaes => tune_cmaes(&config, dir),
        Mode::Bench => bench(&config, dir),
        Mode::Report => report(&config, dir),
    }
}

/// The seeds each component of `mode` draws from the master seed.
fn derived_seeds(mode: Mode, config: &RunConfig) -> std::collections::BTreeMap<String, u64> {
    let root = SeedSequence::new(config.seed);
    let mut out = std::collections::BTreeMap::new();
    let mut put = |k: String, v: u64| {
        out.insert(k, v);
    };
    let single = |put: &mut dyn FnMut(String, u64), prefix: &str, s: &SeedSequence| {
        put(format!("{prefix}instance"), s.derive(Stream::Instance, 0));
        put(format!("{prefix}learning_rate"), s.derive(Stream::LearningRate, 0));
        put(format!("{prefix}simcim_noise"), s.derive(Stream::SimCimNoise, 0));
        put(format!("{prefix}cmaes"), s.derive(Stream::Cmaes, 0));
        put(format!("{prefix}policy"), s.derive(Stream::Policy, 0));
        put(format!("{prefix}init"), s.derive(Stream::Init, 0));
    };
    match mode {
        Mode::Bench => {
            for (i, name) in config.bench.instances.iter().enumerate() {
                put(format!("{name}.master"), root.child(i as u64).master());
            }
        }
        Mode::Report => {}
        _ => single(&mut put, "", &root),
    }
    out
}

fn schedule_label(config: &RunConfig) -> String {
    if !config.bench.label.is_empty() {
        return config.bench.label.clone();
    }
    match config.schedule.kind {
        ScheduleKind::Linear => "Linear".into(),
        ScheduleKind::Tanh => "Manual".into(),
        ScheduleKind::Cmaes => "CMA-ES".into(),
        ScheduleKind::Agent => format!("Agent-{}", config.finetune.updates),
    }
}

fn spins_text(x: &SpinConfiguration) -> String {
    let v: Vec<String> = x.spins().iter().map(|s| s.to_string()).collect();
    v.join(" ") + "\n"
}

fn load_checkpoint(path: &Path) -> Result<NetworkParameters> {
    checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn fresh_agent(config: &RunConfig, n: usize, seed: u64) -> NetworkParameters {
    let arch = Architecture {
        input: observation_len(n),
        hidden: config.pretrain.hidden,
        features: n,
    };
    NetworkParameters::initialize(arch, seed)
}

struct Prepared {
    instance: Instance,
    decomp: SpectralDecomposition,
    mu: f64,
}

fn prepare(config: &RunConfig, instance: Instance, seeds: &SeedSequence) -> Result<Prepared> {
    let decomp = decompose(&instance.matrix, config.cache.spectral_dir.as_deref())?;
    let (mu, _) = step_size(config, &instance.matrix, &decomp, seeds.derive(Stream::LearningRate, 0))?;
    Ok(Prepared { instance, decomp, mu })
}

/// Evaluates the configured schedule on one prepared instance, writing
/// per-instance artifacts into `dir`.
fn evaluate(config: &RunConfig, p: &Prepared, seeds: &SeedSequence, dir: &RunDir) -> Result<InstanceRow> {
    let matrix = &p.instance.matrix;
    let simcim = SimCimConfig {
        learning_rate: p.mu,
        ..config.simcim.to_core()
    };
    let mut best: Option<(f64, SpinConfiguration)> = None;
    let mut keep = |cut: f64, x: &SpinConfiguration| {
        if best.as_ref().is_none_or(|(b, _)| cut > *b) {
            best = Some((cut, x.clone()));
        }
    };
    let batches: Vec<Vec<f64>> = match config.schedule.kind {
        ScheduleKind::Linear | ScheduleKind::Tanh => {
            let schedule = match config.schedule.kind {
                ScheduleKind::Linear => Schedule::Linear,
                _ => Schedule::Tanh(TanhScheduleParams::for_matrix(
                    matrix,
                    config.schedule.scale,
                    config.schedule.slope,
                    config.schedule.shift,
                )),
            };
            dir.write("schedule.txt", schedule.to_kv())?;
            let mut out = Vec::with_capacity(config.simcim.batches);
            for k in 0..config.simcim.batches {
                let b = run_batch(matrix, &p.decomp, &schedule, &simcim, seeds.derive(Stream::SimCimNoise, k as u64))?;
                for (c, x) in b.cuts.iter().zip(&b.spins) {
                    keep(*c, x);
                }
                out.push(b.cuts);
            }
            out
        }
        ScheduleKind::Cmaes => {
            let t = tune_tanh(
                matrix,
                &p.decomp,
                &config.cmaes_config(),
                &simcim,
                p.instance.best_known,
                seeds.derive(Stream::Cmaes, 0),
            )?;
            dir.write("cmaes_history.csv", t.history_csv())?;
            dir.write("schedule.txt", Schedule::Tanh(t.params).to_kv())?;
            vec![t.fresh_cuts]
        }
        ScheduleKind::Agent => {
            let initial = match &config.schedule.checkpoint {
                Some(path) => load_checkpoint(path)?,
                None if config.mode == Some(Mode::Finetune) => {
                    log::info!("no checkpoint given; fine-tuning from a fresh initialization");
                    fresh_agent(config, matrix.n(), seeds.derive(Stream::Init, 0))
                }
                None => bail!("schedule.checkpoint must be set for the agent schedule"),
            };
            let env = config.env_config(p.mu);
            let mut ctx = ProblemContext::from_parts(
                matrix.clone(),
                p.decomp.clone(),
                p.mu,
                config.finetune.board_batches * env.batch_size(),
            )?;
            let cfg = FinetuneConfig {
                env,
                ppo: config.ppo_config(),
                num_updates: config.finetune.updates,
            };
            let name = p.instance.name.clone();
            let out = finetune(
                initial,
                &mut ctx,
                &cfg,
                p.instance.best_known,
                seeds.derive(Stream::Policy, 0),
                &mut |r, _| {
                    log::info!("{name} update {}: mean reward {:+.4}, best cut {}", r.update, r.mean_reward, r.best_cut);
                    Ok(())
                },
            )?;
            dir.write("training.csv", training_curve_csv(&out.history))?;
            dir.write("leaderboard.csv", ctx.leaderboard.to_csv())?;
            if cfg.num_updates > 0 {
                checkpoint::save(&out.params, &dir.file("agent.ckpt"))?;
            }
            keep(out.best_cut, &out.best_spins);
            vec![out.final_cuts]
        }
    };
    let pooled: Vec<f64> = batches.iter().flatten().copied().collect();
    let stats = evaluate_batch_stats(&pooled, p.instance.best_known)?;
    dir.write("cuts.csv", cuts_csv(&batches))?;
    if let Some((_, x)) = &best {
        dir.write("best_spins.txt", spins_text(x))?;
    }
    let row = InstanceRow {
        instance: p.instance.name.clone(),
        n: matrix.n(),
        edges: matrix.edge_count(),
        label: schedule_label(config),
        stats,
        learning_rate: p.mu,
    };
    dir.write("summary.csv", instance_csv(std::slice::from_ref(&row)))?;
    Ok(row)
}

fn single_instance(config: &RunConfig, dir: &RunDir) -> Result<String> {
    let seeds = SeedSequence::new(config.seed);
    let instance = Instance::from_config(config, seeds.derive(Stream::Instance, 0))?;
    let p = prepare(config, instance, &seeds)?;
    let row = evaluate(config, &p, &seeds, dir)?;
    let table = instance_table(std::slice::from_ref(&row));
    dir.write("summary.txt", &table)?;
    Ok(table)
}

fn solve(config: &RunConfig, dir: &RunDir) -> Result<String> {
    single_instance(config, dir)
}

fn run_finetune(config: &RunConfig, dir: &RunDir) -> Result<String> {
    let mut c = config.clone();
    c.schedule.kind = ScheduleKind::Agent;
    single_instance(&c, dir)
}

fn tune_cmaes(config: &RunConfig, dir: &RunDir) -> Result<String> {
    let mut c = config.clone();
    c.schedule.kind = ScheduleKind::Cmaes;
    single_instance(&c, dir)
}

fn lr_test(config: &RunConfig, dir: &RunDir) -> Result<String> {
    let seeds = SeedSequence::new(config.seed);
    let instance = Instance::from_config(config, seeds.derive(Stream::Instance, 0))?;
    let decomp = decompose(&instance.matrix, config.cache.spectral_dir.as_deref())?;
    let test = find_learning_rate(
        &instance.matrix,
        &decomp,
        &config.simcim.to_core(),
        seeds.derive(Stream::LearningRate, 0),
    )?;
    let mut trace = String::from("iteration,learning_rate,gradient_l1\n");
    for (t, (mu, g)) in test.trace.iter().enumerate() {
        let _ = writeln!(trace, "{t},{mu:e},{g:e}");
    }
    dir.write("lr_trace.csv", trace)?;
    let selected = test
        .selected_iteration
        .map_or_else(|| "none (fallback)".to_string(), |t| t.to_string());
    let text = format!(
        "instance {}\nselected learning rate {:e}\nselected iteration {selected}\n",
        instance.name, test.learning_rate
    );
    dir.write("summary.txt", &text)?;
    Ok(text)
}

fn run_pretrain(config: &RunConfig, dir: &RunDir) -> Result<String> {
    let seeds = SeedSequence::new(config.seed);
    let n = config.instance.n;
    let initial = match &config.schedule.checkpoint {
        Some(path) => load_checkpoint(path)?,
        None => fresh_agent(config, n, seeds.derive(Stream::Init, 0)),
    };
    if config.simcim.learning_rate.is_some() {
        log::warn!("pretraining tunes the step size per instance; simcim.learning_rate is ignored");
    }
    let placeholder_mu = config.simcim.to_core().learning_rate;
    let cfg = PretrainConfig {
        env: config.env_config(placeholder_mu),
        ppo: config.ppo_config(),
        num_instances: config.pretrain.instances,
    };
    let (p, weights) = (config.instance.connect_prob, config.instance.weights.into());
    let mut generator = |seed: u64| generate_erdos_renyi(n, p, weights, seed);
    let every = config.pretrain.checkpoint_every;
    let mut observer = |r: &simcim_core::agent::UpdateRecord, params: &NetworkParameters| {
        log::info!(
            "pretrain {}: mean reward {:+.4}, above percentile {:.3}, value loss {:.4}",
            r.update,
            r.mean_reward,
            r.fraction_above,
            r.value_loss
        );
        if every > 0 && (r.update + 1).is_multiple_of(every) {
            let path = dir.file(&format!("checkpoints/update-{:06}.ckpt", r.update + 1));
            std::fs::create_dir_all(path.parent().expect("has parent"))?;
            checkpoint::save(params, &path)?;
        }
        Ok(())
    };
    let (params, records) = pretrain(initial, &mut generator, &cfg, seeds.derive(Stream::Policy, 0), &mut observer)?;
    dir.write("training.csv", training_curve_csv(&records))?;
    checkpoint::save(&params, &dir.file("agent.ckpt"))?;
    let mean = |r: &[simcim_core::agent::UpdateRecord]| {
        r.iter().map(|x| x.mean_reward).sum::<f64>() / r.len().max(1) as f64
    };
    let k = records.len().min(50);
    let text = format!(
        "pretrained on {} instances (n = {n})\nmean reward, first {k}: {:+.6}\nmean reward, last {k}: {:+.6}\ncheckpoint {}\n",
        records.len(),
        mean(&records[..k]),
        mean(&records[records.len() - k..]),
        dir.file("agent.ckpt").display()
    );
    dir.write("summary.txt", &text)?;
    Ok(text)
}

/// Best-known values from `<gset_dir>/best_known.csv` override the shipped table.
fn local_best_known(gset_dir: &Path) -> Result<Vec<(String, i64)>> {
    let path = gset_dir.join("best_known.csv");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (name, v) = l
                .split_once(',')
                .with_context(|| format!("{}: line {l:?} is not `name,cut`", path.display()))?;
            Ok((name.trim().to_string(), v.trim().parse().with_context(|| format!("bad cut in {l:?}"))?))
        })
        .collect()
}

fn bench(config: &RunConfig, dir: &RunDir) -> Result<String> {
    let Some(gset_dir) = &config.bench.gset_dir else {
        bail!("bench.gset_dir must be set");
    };
    if config.bench.instances.is_empty() {
        bail!("bench.instances must name at least one instance");
    }
    let overrides = local_best_known(gset_dir)?;
    let root = SeedSequence::new(config.seed);
    let label = schedule_label(config);
    let mut rows = Vec::with_capacity(config.bench.instances.len());
    for (i, name) in config.bench.instances.iter().enumerate() {
        let best = overrides.iter().find(|(n, _)| n == name).map(|(_, v)| *v);
        let instance = Instance::from_file(&gset_dir.join(name), best)?;
        log::info!("bench {label}: {name} (n = {})", instance.matrix.n());
        let seeds = root.child(i as u64);
        let p = prepare(config, instance, &seeds)?;
        let sub = dir.subdir(&format!("instances/{name}"))?;
        rows.push(evaluate(config, &p, &seeds, &sub)?);
    }
    dir.write("instances.csv", instance_csv(&rows))?;
    let mut text = instance_table(&rows);
    match BenchRow::aggregate(&label, &rows) {
        Some(b) => {
            dir.write("bench.csv", bench_csv(std::slice::from_ref(&b)))?;
            text.push('\n');
            text.push_str(&bench_table(std::slice::from_ref(&b)));
        }
        None => {
            log::warn!("no instance has a best-known value; bench.csv not written");
            dir.write("bench.csv", bench_csv(&[]))?;
        }
    }
    dir.write("bench.txt", &text)?;
    Ok(text)
}

fn data_lines<'a>(text: &'a str, header: &str, path: &Path) -> Result<impl Iterator<Item = &'a str>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(header) {
        bail!("{} does not start with the expected header {header:?}", path.display());
    }
    Ok(lines.filter(|l| !l.trim().is_empty()))
}

fn report(config: &RunConfig, dir: &RunDir) -> Result<String> {
    if config.report.runs.is_empty() {
        bail!("report.runs must list at least one run directory");
    }
    let mut bench_rows = Vec::new();
    let mut merged = format!("run,{BENCH_HEADER}\n");
    let mut instances = format!("run,{INSTANCE_HEADER}\n");
    for run in &config.report.runs {
        let tag = run.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let path = run.join("bench.csv");
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        for line in data_lines(&text, BENCH_HEADER, &path)? {
            let row = BenchRow::parse(line)?;
            let _ = writeln!(merged, "{tag},{line}");
            bench_rows.push((tag.clone(), row));
        }
        let path = run.join("instances.csv");
        if let Ok(text) = std::fs::read_to_string(&path) {
            for line in data_lines(&text, INSTANCE_HEADER, &path)? {
                let _ = writeln!(instances, "{tag},{line}");
            }
        }
    }
    dir.write("report.csv", merged)?;
    dir.write("report_instances.csv", instances)?;
    let mut headers = vec!["run"];
    headers.extend(BENCH_HEADER.split(','));
    let body: Vec<Vec<String>> = bench_rows
        .iter()
        .map(|(tag, r)| std::iter::once(tag.clone()).chain(r.cells()).collect())
        .collect();
    let table = crate::output::render_table(&headers, &body);
    dir.write("report.txt", &table)?;
    Ok(table)
}
