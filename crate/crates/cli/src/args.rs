//! Command-line surface. Every flag is optional and, when given, overrides the
//! corresponding field of the loaded configuration.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, ScheduleKind, Weights};

#[derive(Debug, Parser)]
#[command(name = "simcim", version, about = "SimCIM Max-Cut solver, agent training and benchmark harness")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Root under which run directories are created.
    #[arg(long, global = true, env = "SIMCIM_OUTPUT_ROOT", default_value = "runs")]
    pub output_root: PathBuf,

    /// Exact run directory (default: `<output-root>/<mode>-s<seed>`).
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample SimCIM batches on one instance with a fixed schedule.
    Solve(SolveArgs),
    /// Run the learning-rate range test on one instance.
    LrTest(LrTestArgs),
    /// Pre-train the agent on freshly generated random graphs.
    Pretrain(PretrainArgs),
    /// Fine-tune an agent on one instance and evaluate it.
    Finetune(FinetuneArgs),
    /// Tune the tanh schedule with CMA-ES on one instance.
    TuneCmaes(TuneArgs),
    /// Evaluate one schedule over a directory of Gset instances.
    Bench(BenchArgs),
    /// Merge the summaries of earlier bench runs into one table.
    Report(ReportArgs),
    /// Re-run the mode recorded in a manifest with its exact configuration.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Default)]
pub struct InstanceArgs {
    /// Gset-format instance file; a random graph is generated when omitted.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Nodes of the generated graph.
    #[arg(long)]
    pub n: Option<usize>,
    /// Edge probability of the generated graph.
    #[arg(long)]
    pub connect_prob: Option<f64>,
    #[arg(long, value_enum)]
    pub weights: Option<Weights>,
    /// Best-known cut used for the solved flag and normalization.
    #[arg(long)]
    pub best_known: Option<i64>,
    /// Directory caching eigendecompositions across invocations.
    #[arg(long)]
    pub spectral_cache: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SimArgs {
    /// SimCIM step size; the learning-rate test runs when omitted.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct ScheduleArgs {
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleKind>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub slope: Option<f64>,
    #[arg(long)]
    pub shift: Option<f64>,
    /// Agent checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    /// Leaderboard percentile q.
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Reward scheme: r2 or r3.
    #[arg(long)]
    pub reward: Option<String>,
    /// Iterations between agent decisions.
    #[arg(long)]
    pub interval: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Optimizer step size of the agent.
    #[arg(long)]
    pub ppo_learning_rate: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct CmaesArgs {
    #[arg(long)]
    pub evaluations: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Independent batches to sample.
    #[arg(long)]
    pub batches: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LrTestArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Number of generated training instances (one update each).
    #[arg(long)]
    pub instances: Option<usize>,
    /// Width of the hidden layers.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Write a checkpoint every this many updates (0 disables).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Start from these parameters instead of a fresh initialization.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Pre-trained parameters; a fresh initialization is used when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub updates: Option<usize>,
    /// Leaderboard capacity in batches.
    #[arg(long)]
    pub board_batches: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub cmaes: CmaesArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory holding the Gset files.
    #[arg(long)]
    pub gset_dir: Option<PathBuf>,
    /// Comma-separated instance names (default G1..G10).
    #[arg(long, value_delimiter = ',')]
    pub instances: Option<Vec<String>>,
    /// Row label (default derived from the schedule).
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub spectral_cache: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub cmaes: CmaesArgs,
    /// Fine-tune updates per instance for the agent schedule.
    #[arg(long)]
    pub updates: Option<usize>,
    /// Independent batches per instance for fixed schedules.
    #[arg(long)]
    pub batches: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Bench run directories to merge.
    pub runs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

impl InstanceArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        if self.instance.is_some() {
            c.instance.path = self.instance.clone();
        }
        set(&mut c.instance.n, self.n);
        set(&mut c.instance.connect_prob, self.connect_prob);
        set(&mut c.instance.weights, self.weights);
        if self.best_known.is_some() {
            c.instance.best_known = self.best_known;
        }
        if self.spectral_cache.is_some() {
            c.cache.spectral_dir = self.spectral_cache.clone();
        }
    }
}

impl SimArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        if self.learning_rate.is_some() {
            c.simcim.learning_rate = self.learning_rate;
        }
        set(&mut c.simcim.momentum, self.momentum);
        set(&mut c.simcim.noise, self.noise);
        set(&mut c.simcim.iterations, self.iterations);
        set(&mut c.simcim.batch_size, self.batch_size);
    }
}

impl ScheduleArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.schedule.kind, self.schedule);
        set(&mut c.schedule.scale, self.scale);
        set(&mut c.schedule.slope, self.slope);
        set(&mut c.schedule.shift, self.shift);
        if self.checkpoint.is_some() {
            c.schedule.checkpoint = self.checkpoint.clone();
        }
    }
}

impl TrainArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.environment.percentile, self.percentile);
        set(&mut c.environment.reward, self.reward.clone());
        set(&mut c.environment.interval, self.interval);
        set(&mut c.ppo.epochs, self.epochs);
        set(&mut c.ppo.learning_rate, self.ppo_learning_rate);
    }
}

impl CmaesArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.cmaes.evaluations, self.evaluations);
        set(&mut c.cmaes.population, self.population);
        set(&mut c.cmaes.initial_sigma, self.sigma);
    }
}

impl SolveArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        self.instance.apply(c);
        self.sim.apply(c);
        self.schedule.apply(c);
        set(&mut c.simcim.batches, self.batches);
    }
}

impl LrTestArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        self.instance.apply(c);
        self.sim.apply(c);
    }
}

impl PretrainArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        self.instance.apply(c);
        self.sim.apply(c);
        self.train.apply(c);
        set(&mut c.pretrain.instances, self.instances);
        set(&mut c.pretrain.hidden, self.hidden);
        set(&mut c.pretrain.checkpoint_every, self.checkpoint_every);
        if self.checkpoint.is_some() {
            c.schedule.checkpoint = self.checkpoint.clone();
        }
    }
}

impl FinetuneArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        self.instance.apply(c);
        self.sim.apply(c);
        self.train.apply(c);
        if self.checkpoint.is_some() {
            c.schedule.checkpoint = self.checkpoint.clone();
        }
        set(&mut c.finetune.updates, self.updates);
        set(&mut c.finetune.board_batches, self.board_batches);
    }
}

impl TuneArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        self.instance.apply(c);
        self.sim.apply(c);
        self.cmaes.apply(c);
    }
}

impl BenchArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        if self.gset_dir.is_some() {
            c.bench.gset_dir = self.gset_dir.clone();
        }
        set(&mut c.bench.instances, self.instances.clone());
        set(&mut c.bench.label, self.label.clone());
        if self.spectral_cache.is_some() {
            c.cache.spectral_dir = self.spectral_cache.clone();
        }
        self.sim.apply(c);
        self.schedule.apply(c);
        self.train.apply(c);
        self.cmaes.apply(c);
        set(&mut c.finetune.updates, self.updates);
        set(&mut c.simcim.batches, self.batches);
    }
}
