//! Batched SimCIM.
//!
//! Each episode of a batch is one row of a `(batch, n)` amplitude block, so the
//! coupling term for the whole batch is a single product `C·J` (J symmetric).
//! Per iteration and per element:
//!
//! ```text
//! g = μ (J c − p c) + σ ε
//! m ← η m + (1 − η) g
//! c ← c + m   if |c + m| ≤ 1, else c unchanged (m is kept either way)
//! ```

use ndarray::{Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::problem::{cut_value, CouplingMatrix, SpinConfiguration};
use crate::schedules::{linear_pbar, RegularizationSchedule};
use crate::seeds::splitmix64;
use crate::spectral::SpectralDecomposition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimCimConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub noise: f64,
    pub iterations: usize,
    pub batch_size: usize,
}

impl Default for SimCimConfig {
    fn default() -> Self {
        Self {
            learning_rate: LR_FALLBACK,
            momentum: 0.9,
            noise: 0.03,
            iterations: 1000,
            batch_size: 256,
        }
    }
}

impl SimCimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise amplitude must be nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        Ok(())
    }
}

/// Independent normal streams, one per batch column, so a column's noise does
/// not depend on how many other columns exist or in which order they run.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    streams: Vec<ChaCha8Rng>,
}

impl NoiseSource {
    pub fn new(seed: u64, batch: usize) -> Self {
        let streams = (0..batch as u64)
            .map(|b| ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(b + 1))))
            .collect();
        Self { streams }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }
}

/// Amplitudes and momentum for a batch, one row per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct SimCimBatchState {
    pub amplitudes: Array2<f64>,
    pub momentum: Array2<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// `‖g‖₁` averaged over the batch.
    pub mean_gradient_l1: f64,
}

impl SimCimBatchState {
    /// `c = 0`, `m = 0`, `t = 0`.
    pub fn new(n: usize, batch: usize) -> Self {
        Self {
            amplitudes: Array2::zeros((batch, n)),
            momentum: Array2::zeros((batch, n)),
            iteration: 0,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.amplitudes.nrows()
    }

    pub fn n(&self) -> usize {
        self.amplitudes.ncols()
    }

    /// One iteration with the same `p` for every column.
    pub fn step(
        &mut self,
        matrix: &CouplingMatrix,
        p: f64,
        config: &SimCimConfig,
        noise: &mut NoiseSource,
    ) -> Result<StepStats> {
        let ps = vec![p; self.batch_size()];
        self.step_per_column(matrix, &ps, config, noise)
    }

    /// One iteration with a per-column regularization value.
    pub fn step_per_column(
        &mut self,
        matrix: &CouplingMatrix,
        p: &[f64],
        config: &SimCimConfig,
        noise: &mut NoiseSource,
    ) -> Result<StepStats> {
        let batch = self.batch_size();
        if matrix.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: matrix.n(),
            });
        }
        if p.len() != batch || noise.len() != batch {
            return Err(Error::DimensionMismatch {
                expected: batch,
                actual: if p.len() != batch { p.len() } else { noise.len() },
            });
        }
        let coupling = self.amplitudes.dot(&matrix.view());
        let (mu, eta, sigma) = (config.learning_rate, config.momentum, config.noise);
        let iteration = self.iteration;
        let mut bad_column = None;
        let mut grad_l1 = 0.0;

        for (b, ((mut c, mut m), jc)) in self
            .amplitudes
            .rows_mut()
            .into_iter()
            .zip(self.momentum.rows_mut())
            .zip(coupling.rows())
            .enumerate()
        {
            let pb = p[b];
            let rng = &mut noise.streams[b];
            let mut finite = pb.is_finite();
            Zip::from(&mut c).and(&mut m).and(&jc).for_each(|c, m, &jc| {
                let eps: f64 = if sigma > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
                let g = mu * (jc - pb * *c) + sigma * eps;
                grad_l1 += g.abs();
                *m = eta * *m + (1.0 - eta) * g;
                let next = *c + *m;
                if next.abs() <= 1.0 {
                    *c = next;
                }
                finite &= m.is_finite();
            });
            if !finite && bad_column.is_none() {
                bad_column = Some(b);
            }
        }
        if let Some(column) = bad_column {
            return Err(Error::NonFiniteAmplitude { iteration, column });
        }
        self.iteration += 1;
        debug_assert!(self.amplitudes.iter().all(|c| c.abs() <= 1.0));
        Ok(StepStats {
            mean_gradient_l1: grad_l1 / batch as f64,
        })
    }

    /// Elementwise sign of every row, `sign(0) = +1`.
    pub fn spins(&self) -> Vec<SpinConfiguration> {
        self.amplitudes
            .rows()
            .into_iter()
            .map(|row| SpinConfiguration::from_amplitudes(row.iter()))
            .collect()
    }

    /// Cut values of the current signs, one per row.
    pub fn cuts(&self, matrix: &CouplingMatrix) -> Vec<f64> {
        batch_cuts(matrix, &self.spins())
    }
}

/// Cut values for many spin vectors via one matrix product.
pub fn batch_cuts(matrix: &CouplingMatrix, spins: &[SpinConfiguration]) -> Vec<f64> {
    let n = matrix.n();
    if spins.len() < 4 {
        return spins
            .iter()
            .map(|x| cut_value(matrix, x).expect("spin length matches"))
            .collect();
    }
    let x = Array2::from_shape_fn((spins.len(), n), |(b, i)| f64::from(spins[b].spins()[i]));
    let xj = x.dot(&matrix.view());
    (&x * &xj)
        .rows()
        .into_iter()
        .map(|r| 0.25 * (r.sum() - matrix.total()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub state: SimCimBatchState,
    pub spins: Vec<SpinConfiguration>,
    pub cuts: Vec<f64>,
}

impl BatchOutcome {
    pub fn max_cut(&self) -> f64 {
        self.cuts.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One row of an optional per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub regularization: f64,
    pub mean_amplitude_norm: f64,
    pub best_cut_so_far: f64,
}

pub fn run_batch(
    matrix: &CouplingMatrix,
    decomp: &SpectralDecomposition,
    schedule: &dyn RegularizationSchedule,
    config: &SimCimConfig,
    seed: u64,
) -> Result<BatchOutcome> {
    run_batch_traced(matrix, decomp, schedule, config, seed, 0, &mut |_| {})
}

/// As [`run_batch`], calling `trace` every `trace_every` iterations (0 = never).
pub fn run_batch_traced(
    matrix: &CouplingMatrix,
    decomp: &SpectralDecomposition,
    schedule: &dyn RegularizationSchedule,
    config: &SimCimConfig,
    seed: u64,
    trace_every: usize,
    trace: &mut dyn FnMut(TraceRow),
) -> Result<BatchOutcome> {
    config.validate()?;
    if decomp.n() != matrix.n() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n(),
            actual: decomp.n(),
        });
    }
    let total = config.iterations;
    let mut state = SimCimBatchState::new(matrix.n(), config.batch_size);
    let mut noise = NoiseSource::new(seed, config.batch_size);
    let mut best = f64::NEG_INFINITY;
    for t in 0..total {
        let p = schedule.regularization(t, total, decomp);
        if !p.is_finite() {
            return Err(Error::InvalidArgument(format!("schedule returned {p} at t = {t}")));
        }
        state.step(matrix, p, config, &mut noise)?;
        if trace_every > 0 && (t % trace_every == 0 || t + 1 == total) {
            best = best.max(state.cuts(matrix).into_iter().fold(f64::NEG_INFINITY, f64::max));
            let norms: f64 = state
                .amplitudes
                .rows()
                .into_iter()
                .map(|r| r.dot(&r).sqrt())
                .sum();
            trace(TraceRow {
                iteration: t,
                regularization: p,
                mean_amplitude_norm: norms / config.batch_size as f64,
                best_cut_so_far: best,
            });
        }
    }
    let spins = state.spins();
    let cuts = batch_cuts(matrix, &spins);
    Ok(BatchOutcome { state, spins, cuts })
}

pub const LR_START: f64 = 1.0;
pub const LR_END: f64 = 1e-5;
pub const LR_FALLBACK: f64 = 0.02;
const LR_EMA_DECAY: f64 = 0.9;
const LR_REL_TOLERANCE: f64 = 0.01;
const LR_PATIENCE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct LearningRateTest {
    pub learning_rate: f64,
    /// Iteration the rate was taken from; `None` when the fallback was used.
    pub selected_iteration: Option<usize>,
    /// `(μ_t, ‖g_t‖₁)` per iteration.
    pub trace: Vec<(f64, f64)>,
}

/// Learning-rate range test: one cycle with zero momentum, the linear schedule
/// and `μ_t = μ_start (μ_end/μ_start)^(t/N)`. The gradient norm is smoothed by an
/// EMA; the selected rate is the one at the start of the first run of
/// `LR_PATIENCE` iterations whose relative EMA change stays below 1%.
pub fn find_learning_rate(
    matrix: &CouplingMatrix,
    decomp: &SpectralDecomposition,
    config: &SimCimConfig,
    seed: u64,
) -> Result<LearningRateTest> {
    let total = config.iterations;
    if total < 100 {
        return Err(Error::InvalidArgument(format!(
            "learning-rate test needs at least 100 iterations, got {total}"
        )));
    }
    let mut cfg = SimCimConfig {
        momentum: 0.0,
        learning_rate: LR_START,
        ..*config
    };
    cfg.validate()?;
    let mut state = SimCimBatchState::new(matrix.n(), cfg.batch_size);
    let mut noise = NoiseSource::new(seed, cfg.batch_size);
    let mut trace = Vec::with_capacity(total);
    let mut ema: Option<f64> = None;
    let mut streak = 0;
    let mut selected = None;

    for t in 0..total {
        let mu = LR_START * (LR_END / LR_START).powf(t as f64 / total as f64);
        cfg.learning_rate = mu;
        let p = decomp.denormalize_regularization(linear_pbar(t, total));
        let stats = state.step(matrix, p, &cfg, &mut noise)?;
        let g = stats.mean_gradient_l1;
        trace.push((mu, g));
        let next = match ema {
            None => g,
            Some(prev) => {
                let next = LR_EMA_DECAY * prev + (1.0 - LR_EMA_DECAY) * g;
                let rel = if prev == 0.0 {
                    if next == 0.0 { 0.0 } else { f64::INFINITY }
                } else {
                    ((next - prev) / prev).abs()
                };
                if rel < LR_REL_TOLERANCE {
                    streak += 1;
                } else {
                    streak = 0;
                }
                next
            }
        };
        ema = Some(next);
        if streak == LR_PATIENCE {
            selected = Some(t - LR_PATIENCE);
            break;
        }
    }

    match selected {
        Some(t) => Ok(LearningRateTest {
            learning_rate: trace[t].0,
            selected_iteration: Some(t),
            trace,
        }),
        None => {
            log::warn!("learning-rate test never converged; falling back to {LR_FALLBACK}");
            Ok(LearningRateTest {
                learning_rate: LR_FALLBACK,
                selected_iteration: None,
                trace,
            })
        }
    }
}

/// Memoizes learning-rate tests by matrix content hash.
#[derive(Debug, Default, Clone)]
pub struct LearningRateCache {
    entries: std::collections::HashMap<String, f64>,
}

impl LearningRateCache {
    pub fn get_or_find(
        &mut self,
        matrix: &CouplingMatrix,
        decomp: &SpectralDecomposition,
        config: &SimCimConfig,
        seed: u64,
    ) -> Result<f64> {
        let key = crate::spectral::matrix_digest(matrix);
        if let Some(&mu) = self.entries.get(&key) {
            return Ok(mu);
        }
        let mu = find_learning_rate(matrix, decomp, config, seed)?.learning_rate;
        self.entries.insert(key, mu);
        Ok(mu)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
