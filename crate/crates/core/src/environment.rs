//! Episodic environment around a batched SimCIM run.
//!
//! Every `m` iterations the agent picks one action per episode. The action
//! moves the next anchor `p̄`, then the `m` iterations up to that anchor are run
//! with `p̄` interpolated linearly from the previous anchor. The observation is
//! the amplitude vector expressed in the eigenbasis of `J` (eigenvalues in
//! decreasing order), followed by the elapsed fraction `t/N` and the current
//! anchor. Only the final step is rewarded.

use std::fmt::Write as _;

use ndarray::{s, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::problem::{CouplingMatrix, SpinConfiguration};
use crate::rewards::{assign_rewards, Leaderboard, RewardConfig};
use crate::schedules::{apply_action, interpolate, Action, DEFAULT_P_DELTA, INITIAL_PBAR};
use crate::simcim::{batch_cuts, NoiseSource, SimCimBatchState, SimCimConfig};
use crate::spectral::SpectralDecomposition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    /// Iteration count `N`, batch size `B` and the SimCIM constants.
    pub simcim: SimCimConfig,
    /// Iterations per agent step, `m`.
    pub interval: usize,
    pub p_delta: f64,
    pub initial_pbar: f64,
    pub reward: RewardConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            simcim: SimCimConfig::default(),
            interval: 10,
            p_delta: DEFAULT_P_DELTA,
            initial_pbar: INITIAL_PBAR,
            reward: RewardConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.simcim.validate()?;
        self.reward.validate()?;
        let n = self.simcim.iterations;
        if self.interval == 0 || n == 0 || !n.is_multiple_of(self.interval) {
            return Err(Error::InvalidArgument(format!(
                "iterations ({n}) must be a positive multiple of the step interval ({})",
                self.interval
            )));
        }
        if !(self.p_delta >= 0.0 && self.p_delta.is_finite()) {
            return Err(Error::InvalidArgument("p_delta must be nonnegative".into()));
        }
        if !self.initial_pbar.is_finite() {
            return Err(Error::InvalidArgument("initial p̄ must be finite".into()));
        }
        Ok(())
    }

    /// Agent steps per episode, `N/m`.
    pub fn steps(&self) -> usize {
        self.simcim.iterations / self.interval
    }

    pub fn batch_size(&self) -> usize {
        self.simcim.batch_size
    }
}

/// Length of a flattened observation for an `n`-spin problem.
pub fn observation_len(n: usize) -> usize {
    n + 2
}

/// Builds the `(B, n + 2)` observation block: `e = cQ`, then `t/N`, then `p̄`.
pub fn assemble_observations(
    decomp: &SpectralDecomposition,
    amplitudes: &Array2<f64>,
    elapsed: f64,
    pbar: &[f64],
) -> Result<Array2<f64>> {
    let n = decomp.n();
    let e = decomp.to_eigenbasis_rows(amplitudes.view())?;
    let mut obs = Array2::zeros((amplitudes.nrows(), observation_len(n)));
    obs.slice_mut(s![.., ..n]).assign(&e);
    obs.column_mut(n).fill(elapsed);
    for (b, &p) in pbar.iter().enumerate() {
        obs[[b, n + 1]] = p;
    }
    Ok(obs)
}

/// A batch of `B` episodes on one instance, advanced in lockstep.
#[derive(Debug)]
pub struct Environment<'a> {
    matrix: &'a CouplingMatrix,
    decomp: &'a SpectralDecomposition,
    config: EnvConfig,
    state: SimCimBatchState,
    noise: NoiseSource,
    /// `anchors[k][b]`: anchor `p̄` of episode `b` after `k` agent steps.
    anchors: Vec<Vec<f64>>,
    current: Array2<f64>,
    observations: Vec<Array2<f64>>,
    actions: Vec<Vec<usize>>,
    log_probs: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl<'a> Environment<'a> {
    /// Starts `B` episodes at `c = 0`, `m = 0`, `p̄ = p̄₀`, `t = 0`.
    pub fn reset(
        matrix: &'a CouplingMatrix,
        decomp: &'a SpectralDecomposition,
        config: EnvConfig,
        seed: u64,
    ) -> Result<(Self, Array2<f64>)> {
        config.validate()?;
        if decomp.n() != matrix.n() {
            return Err(Error::DimensionMismatch {
                expected: matrix.n(),
                actual: decomp.n(),
            });
        }
        let batch = config.batch_size();
        let state = SimCimBatchState::new(matrix.n(), batch);
        let pbar = vec![config.initial_pbar; batch];
        let current = assemble_observations(decomp, &state.amplitudes, 0.0, &pbar)?;
        let steps = config.steps();
        let env = Self {
            matrix,
            decomp,
            config,
            state,
            noise: NoiseSource::new(seed, batch),
            anchors: vec![pbar],
            current: current.clone(),
            observations: Vec::with_capacity(steps),
            actions: Vec::with_capacity(steps),
            log_probs: Vec::with_capacity(steps),
            values: Vec::with_capacity(steps),
        };
        Ok((env, current))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> usize {
        self.actions.len()
    }

    pub fn is_done(&self) -> bool {
        self.steps_taken() == self.config.steps()
    }

    pub fn observation(&self) -> &Array2<f64> {
        &self.current
    }

    pub fn amplitudes(&self) -> &Array2<f64> {
        &self.state.amplitudes
    }

    /// Anchor sequence `p̄₀, p̄₁, …` of one episode so far.
    pub fn anchor_sequence(&self, episode: usize) -> Vec<f64> {
        self.anchors.iter().map(|a| a[episode]).collect()
    }

    /// Advances every episode by one agent step.
    pub fn step(&mut self, actions: &[usize]) -> Result<(Array2<f64>, bool)> {
        let batch = self.config.batch_size();
        self.step_with_estimates(actions, &vec![0.0; batch], &vec![0.0; batch])
    }

    /// As [`step`](Self::step), also recording the policy's log-probabilities
    /// and value estimates for the observation being acted on.
    pub fn step_with_estimates(
        &mut self,
        actions: &[usize],
        log_probs: &[f64],
        values: &[f64],
    ) -> Result<(Array2<f64>, bool)> {
        if self.is_done() {
            return Err(Error::EpisodeFinished);
        }
        let batch = self.config.batch_size();
        for len in [actions.len(), log_probs.len(), values.len()] {
            if len != batch {
                return Err(Error::DimensionMismatch {
                    expected: batch,
                    actual: len,
                });
            }
        }
        let (m, total) = (self.config.interval, self.config.simcim.iterations);
        let prev = self.anchors.last().expect("anchors start non-empty").clone();
        let mut next = Vec::with_capacity(batch);
        for (&p, &a) in prev.iter().zip(actions) {
            let action = Action::from_index(a)?;
            next.push(apply_action(p, action.increment(self.config.p_delta), m, total));
        }

        let mut p = vec![0.0; batch];
        for k in 0..m {
            for b in 0..batch {
                p[b] = self
                    .decomp
                    .denormalize_regularization(interpolate(prev[b], next[b], k, m));
            }
            self.state
                .step_per_column(self.matrix, &p, &self.config.simcim, &mut self.noise)?;
        }

        let elapsed = self.state.iteration as f64 / total as f64;
        let obs = assemble_observations(self.decomp, &self.state.amplitudes, elapsed, &next)?;
        let acted_on = std::mem::replace(&mut self.current, obs.clone());
        self.observations.push(acted_on);
        self.actions.push(actions.to_vec());
        self.log_probs.push(log_probs.to_vec());
        self.values.push(values.to_vec());
        self.anchors.push(next);
        Ok((obs, self.is_done()))
    }

    /// Scores the final spins, updates the leaderboard and hands back the
    /// recorded trajectories.
    pub fn finalize<R: Rng + ?Sized>(
        self,
        board: &mut Leaderboard,
        reward: &RewardConfig,
        rng: &mut R,
    ) -> Result<TrajectoryBatch> {
        if !self.is_done() {
            return Err(Error::EpisodeNotFinished {
                steps_taken: self.steps_taken(),
                steps_total: self.config.steps(),
            });
        }
        let spins = self.state.spins();
        let cuts = batch_cuts(self.matrix, &spins);
        let outcome = assign_rewards(&cuts, board, reward, rng)?;
        Ok(TrajectoryBatch {
            observations: self.observations,
            actions: self.actions,
            log_probs: self.log_probs,
            values: self.values,
            anchors: self.anchors,
            rewards: outcome.rewards,
            cuts,
            spins,
            percentile: outcome.percentile,
            fraction_above: outcome.fraction_above,
        })
    }
}

/// Recorded episodes of one batch. Step-major: index `[step][episode]`.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    /// Observation acted on at each step, `(B, n + 2)`.
    pub observations: Vec<Array2<f64>>,
    pub actions: Vec<Vec<usize>>,
    pub log_probs: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    /// `steps + 1` anchor vectors, starting at `p̄₀`.
    pub anchors: Vec<Vec<f64>>,
    /// Terminal reward per episode.
    pub rewards: Vec<f64>,
    pub cuts: Vec<f64>,
    pub spins: Vec<SpinConfiguration>,
    /// Leaderboard percentile the rewards were measured against.
    pub percentile: f64,
    pub fraction_above: f64,
}

impl TrajectoryBatch {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn batch_size(&self) -> usize {
        self.cuts.len()
    }

    /// Reward received after `step`; nonzero only on the last step.
    pub fn step_reward(&self, step: usize, episode: usize) -> f64 {
        if step + 1 == self.steps() {
            self.rewards[episode]
        } else {
            0.0
        }
    }

    /// Undiscounted return from `step` onward.
    pub fn return_from(&self, step: usize, episode: usize) -> f64 {
        (step..self.steps()).map(|k| self.step_reward(k, episode)).sum()
    }

    pub fn mean_reward(&self) -> f64 {
        crate::stats::mean(&self.rewards)
    }

    pub fn max_cut(&self) -> f64 {
        self.cuts.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `episode,step,pbar,final_cut`, one row per anchor.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("episode,step,pbar,final_cut\n");
        for b in 0..self.batch_size() {
            for (k, a) in self.anchors.iter().enumerate() {
                let _ = writeln!(out, "{b},{k},{},{}", a[b], self.cuts[b]);
            }
        }
        out
    }
}
