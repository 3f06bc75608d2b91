//! Episode generation, pre-training over random instances, and fine-tuning
//! on a single target instance.

use std::fmt::Write as _;

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{actor_forward, critic_forward, NetworkParameters};
use super::ppo::{ppo_update, Adam, PpoConfig, PpoDiagnostics};
use crate::environment::{EnvConfig, Environment, TrajectoryBatch};
use crate::error::{Error, Result};
use crate::problem::{CouplingMatrix, SpinConfiguration};
use crate::rewards::Leaderboard;
use crate::seeds::{SeedSequence, Stream};
use crate::simcim::find_learning_rate;
use crate::spectral::{eigendecompose, SpectralDecomposition};
use crate::stats::{evaluate_batch_stats, median, BatchStats};

/// Everything episode generation needs for one instance.
#[derive(Debug, Clone)]
pub struct ProblemContext {
    pub matrix: CouplingMatrix,
    pub decomp: SpectralDecomposition,
    pub phi: Array1<f64>,
    /// Tuned SimCIM step size `μ`.
    pub learning_rate: f64,
    pub leaderboard: Leaderboard,
}

impl ProblemContext {
    /// Eigendecomposes the matrix and runs the learning-rate test.
    pub fn prepare(matrix: CouplingMatrix, env: &EnvConfig, board_capacity: usize, seed: u64) -> Result<Self> {
        let decomp = eigendecompose(&matrix)?;
        let mu = find_learning_rate(&matrix, &decomp, &env.simcim, seed)?.learning_rate;
        Self::from_parts(matrix, decomp, mu, board_capacity)
    }

    pub fn from_parts(
        matrix: CouplingMatrix,
        decomp: SpectralDecomposition,
        learning_rate: f64,
        board_capacity: usize,
    ) -> Result<Self> {
        if decomp.n() != matrix.n() {
            return Err(Error::DimensionMismatch {
                expected: matrix.n(),
                actual: decomp.n(),
            });
        }
        let phi = decomp.problem_features().phi;
        Ok(Self {
            matrix,
            decomp,
            phi,
            learning_rate,
            leaderboard: Leaderboard::new(board_capacity)?,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: ArrayView1<'_, f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Plays one batch of episodes with the stochastic policy and scores them
/// against `board`.
pub fn rollout_with_board(
    params: &NetworkParameters,
    ctx: &ProblemContext,
    board: &mut Leaderboard,
    env: &EnvConfig,
    seed: u64,
) -> Result<TrajectoryBatch> {
    let seeds = SeedSequence::new(seed);
    let mut cfg = *env;
    cfg.simcim.learning_rate = ctx.learning_rate;
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seeds.derive(Stream::Policy, 0));
    let (mut environment, mut obs) =
        Environment::reset(&ctx.matrix, &ctx.decomp, cfg, seeds.derive(Stream::SimCimNoise, 0))?;
    let batch = cfg.batch_size();
    loop {
        let probs = actor_forward(params, obs.view(), ctx.phi.view())?.probs;
        let values = critic_forward(params, obs.view())?;
        let mut actions = Vec::with_capacity(batch);
        let mut log_probs = Vec::with_capacity(batch);
        for row in probs.rows() {
            let a = sample_categorical(row, &mut policy_rng);
            actions.push(a);
            log_probs.push(row[a].ln());
        }
        let (next, done) = environment.step_with_estimates(&actions, &log_probs, &values.to_vec())?;
        obs = next;
        if done {
            break;
        }
    }
    let mut reward_rng = ChaCha8Rng::seed_from_u64(seeds.derive(Stream::Reward, 0));
    environment.finalize(board, &cfg.reward, &mut reward_rng)
}

/// [`rollout_with_board`] against the context's own leaderboard.
pub fn rollout(params: &NetworkParameters, ctx: &mut ProblemContext, env: &EnvConfig, seed: u64) -> Result<TrajectoryBatch> {
    let mut board = std::mem::replace(&mut ctx.leaderboard, Leaderboard::new(1)?);
    let result = rollout_with_board(params, ctx, &mut board, env, seed);
    ctx.leaderboard = board;
    result
}

/// One row of a training curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRecord {
    pub update: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub percentile: f64,
    pub fraction_above: f64,
    pub max_cut: f64,
    pub median_cut: f64,
    pub best_cut: f64,
    pub learning_rate: f64,
}

impl UpdateRecord {
    pub const CSV_HEADER: &'static str = "update,mean_reward,policy_loss,value_loss,entropy,percentile,fraction_above,max_cut,median_cut,best_cut,simcim_learning_rate";

    fn new(update: usize, t: &TrajectoryBatch, d: &PpoDiagnostics, best_cut: f64, learning_rate: f64) -> Self {
        Self {
            update,
            mean_reward: t.mean_reward(),
            policy_loss: d.policy_loss,
            value_loss: d.value_loss,
            entropy: d.entropy,
            percentile: t.percentile,
            fraction_above: t.fraction_above,
            max_cut: t.max_cut(),
            median_cut: median(&t.cuts),
            best_cut,
            learning_rate,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.update,
            self.mean_reward,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.percentile,
            self.fraction_above,
            self.max_cut,
            self.median_cut,
            self.best_cut,
            self.learning_rate
        )
    }
}

pub fn training_curve_csv(records: &[UpdateRecord]) -> String {
    let mut out = String::from(UpdateRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub num_instances: usize,
}

/// Called after every update with the record and the current parameters.
pub type Observer<'a> = dyn FnMut(&UpdateRecord, &NetworkParameters) -> Result<()> + 'a;

/// One fresh instance per update: sample, decompose, tune `μ`, play one batch
/// against a leaderboard of size `B`, one PPO update.
pub fn pretrain(
    initial: NetworkParameters,
    generator: &mut dyn FnMut(u64) -> Result<CouplingMatrix>,
    config: &PretrainConfig,
    seed: u64,
    observer: &mut Observer<'_>,
) -> Result<(NetworkParameters, Vec<UpdateRecord>)> {
    config.env.validate()?;
    config.ppo.validate()?;
    let mut params = initial;
    let mut adam = Adam::new(params.len());
    let mut records = Vec::with_capacity(config.num_instances);
    let root = SeedSequence::new(seed);
    let expected_n = params.architecture().features;
    for i in 0..config.num_instances {
        let s = root.child(i as u64);
        let matrix = generator(s.derive(Stream::Instance, 0))?;
        if matrix.n() != expected_n {
            return Err(Error::DimensionMismatch {
                expected: expected_n,
                actual: matrix.n(),
            });
        }
        let mut ctx = ProblemContext::prepare(
            matrix,
            &config.env,
            config.env.batch_size(),
            s.derive(Stream::LearningRate, 0),
        )?;
        let traj = rollout(&params, &mut ctx, &config.env, s.derive(Stream::Evaluation, 0))?;
        let diag = ppo_update(
            &mut params,
            &mut adam,
            &traj,
            ctx.phi.view(),
            &config.ppo,
            s.derive(Stream::Shuffle, 0),
        )?;
        let record = UpdateRecord::new(i, &traj, &diag, traj.max_cut(), ctx.learning_rate);
        log::debug!(
            "pretrain {i}: reward {:.4} max {} value loss {:.4}",
            record.mean_reward,
            record.max_cut,
            record.value_loss
        );
        observer(&record, &params)?;
        records.push(record);
    }
    Ok((params, records))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneConfig {
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub num_updates: usize,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub params: NetworkParameters,
    /// Largest cut seen in any batch, including the final one.
    pub best_cut: f64,
    pub best_spins: SpinConfiguration,
    pub history: Vec<UpdateRecord>,
    pub final_cuts: Vec<f64>,
    pub final_stats: BatchStats,
}

/// Repeated batch + update on one instance, then a fresh evaluation batch.
/// With `num_updates = 0` this only evaluates the given parameters.
pub fn finetune(
    initial: NetworkParameters,
    ctx: &mut ProblemContext,
    config: &FinetuneConfig,
    best_known: Option<i64>,
    seed: u64,
    observer: &mut Observer<'_>,
) -> Result<FinetuneOutcome> {
    config.env.validate()?;
    config.ppo.validate()?;
    if initial.architecture().features != ctx.n() {
        return Err(Error::DimensionMismatch {
            expected: ctx.n(),
            actual: initial.architecture().features,
        });
    }
    let mut params = initial;
    let mut adam = Adam::new(params.len());
    let root = SeedSequence::new(seed);
    let mut best_cut = f64::NEG_INFINITY;
    let mut best_spins = SpinConfiguration::all_up(ctx.n());
    let mut history = Vec::with_capacity(config.num_updates);
    let track = |t: &TrajectoryBatch, best_cut: &mut f64, best_spins: &mut SpinConfiguration| {
        for (c, x) in t.cuts.iter().zip(&t.spins) {
            if *c > *best_cut {
                *best_cut = *c;
                *best_spins = x.clone();
            }
        }
    };
    for u in 0..config.num_updates {
        let s = root.child(u as u64);
        let traj = rollout(&params, ctx, &config.env, s.derive(Stream::Evaluation, 0))?;
        track(&traj, &mut best_cut, &mut best_spins);
        let diag = ppo_update(
            &mut params,
            &mut adam,
            &traj,
            ctx.phi.view(),
            &config.ppo,
            s.derive(Stream::Shuffle, 0),
        )?;
        let record = UpdateRecord::new(u, &traj, &diag, best_cut, ctx.learning_rate);
        observer(&record, &params)?;
        history.push(record);
    }
    // the evaluation batch must not depend on how many updates were made
    let mut scratch = ctx.leaderboard.clone();
    let eval_seed = root.derive(Stream::Evaluation, u64::MAX);
    let last = rollout_with_board(&params, ctx, &mut scratch, &config.env, eval_seed)?;
    track(&last, &mut best_cut, &mut best_spins);
    let final_stats = evaluate_batch_stats(&last.cuts, best_known)?;
    Ok(FinetuneOutcome {
        params,
        best_cut,
        best_spins,
        history,
        final_cuts: last.cuts,
        final_stats,
    })
}
