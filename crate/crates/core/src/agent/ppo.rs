//! Clipped-surrogate PPO with hand-written backpropagation and Adam.
//!
//! For a minibatch of `M` samples the minimized loss is
//!
//! ```text
//! L = mean(-min(r A, clip(r, 1-ε, 1+ε) A)) + c_v mean((V - R)²) - c_e mean(H)
//! ```
//!
//! with `r = π(a|s)/π_old(a|s)`, return `R`, and advantage `A = R - V_old(s)`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{actor_pass, critic_pass, Block, NetworkParameters, NUM_ACTIONS};
use crate::environment::TrajectoryBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub epochs: usize,
    pub gamma: f64,
    pub clip_ratio: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    /// Minibatches per epoch.
    pub minibatches: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            gamma: 1.0,
            clip_ratio: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            learning_rate: 3e-4,
            max_grad_norm: 0.5,
            minibatches: 4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.epochs == 0 || self.minibatches == 0 {
            return bad("epochs and minibatches must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.clip_ratio > 0.0) || !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("clip ratio, learning rate and gradient clip must be positive");
        }
        Ok(())
    }
}

/// Flattened training samples, one row per (step, episode).
#[derive(Debug, Clone, PartialEq)]
pub struct PpoBatch {
    pub observations: Array2<f64>,
    pub actions: Vec<usize>,
    pub old_log_probs: Array1<f64>,
    pub old_values: Array1<f64>,
    pub returns: Array1<f64>,
}

impl PpoBatch {
    /// Returns are `γ^(T-1-t)` times the terminal reward.
    pub fn from_trajectories(t: &TrajectoryBatch, gamma: f64) -> Result<Self> {
        let (steps, batch) = (t.steps(), t.batch_size());
        if steps == 0 || batch == 0 {
            return Err(Error::InvalidArgument("empty trajectory batch".into()));
        }
        let width = t.observations[0].ncols();
        let rows = steps * batch;
        let mut observations = Array2::zeros((rows, width));
        let mut actions = Vec::with_capacity(rows);
        let mut old_log_probs = Array1::zeros(rows);
        let mut old_values = Array1::zeros(rows);
        let mut returns = Array1::zeros(rows);
        for k in 0..steps {
            let discount = gamma.powi((steps - 1 - k) as i32);
            for b in 0..batch {
                let row = k * batch + b;
                observations.row_mut(row).assign(&t.observations[k].row(b));
                actions.push(t.actions[k][b]);
                old_log_probs[row] = t.log_probs[k][b];
                old_values[row] = t.values[k][b];
                returns[row] = discount * t.rewards[b];
            }
        }
        Ok(Self {
            observations,
            actions,
            old_log_probs,
            old_values,
            returns,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            observations: self.observations.select(Axis(0), rows),
            actions: rows.iter().map(|&r| self.actions[r]).collect(),
            old_log_probs: self.old_log_probs.select(Axis(0), rows),
            old_values: self.old_values.select(Axis(0), rows),
            returns: self.returns.select(Axis(0), rows),
        }
    }

    pub fn advantages(&self) -> Array1<f64> {
        &self.returns - &self.old_values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    /// Fraction of samples whose ratio was clipped out of the gradient.
    pub clip_fraction: f64,
}

fn check_actions(batch: &PpoBatch) -> Result<()> {
    match batch.actions.iter().find(|&&a| a >= NUM_ACTIONS) {
        Some(&a) => Err(Error::InvalidArgument(format!("action index {a} out of range"))),
        None => Ok(()),
    }
}

/// Loss only; used by finite-difference checks.
pub fn ppo_loss(
    params: &NetworkParameters,
    batch: &PpoBatch,
    phi: ArrayView1<'_, f64>,
    config: &PpoConfig,
) -> Result<LossBreakdown> {
    Ok(loss_and_gradient(params, batch, phi, config, false)?.0)
}

pub fn ppo_loss_and_gradient(
    params: &NetworkParameters,
    batch: &PpoBatch,
    phi: ArrayView1<'_, f64>,
    config: &PpoConfig,
) -> Result<(LossBreakdown, NetworkParameters)> {
    let (loss, grad) = loss_and_gradient(params, batch, phi, config, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

fn loss_and_gradient(
    params: &NetworkParameters,
    batch: &PpoBatch,
    phi: ArrayView1<'_, f64>,
    config: &PpoConfig,
    want_gradient: bool,
) -> Result<(LossBreakdown, Option<NetworkParameters>)> {
    check_actions(batch)?;
    let m = batch.len();
    if m == 0 {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    let inv_m = 1.0 / m as f64;
    let obs = batch.observations.view();
    let actor = actor_pass(params, obs, phi)?;
    let critic = critic_pass(params, obs)?;
    let advantages = batch.advantages();
    let (lo, hi) = (1.0 - config.clip_ratio, 1.0 + config.clip_ratio);

    let mut policy = 0.0;
    let mut entropy = 0.0;
    let mut clipped = 0usize;
    // dL/dlogits
    let mut g_logits = Array2::zeros((m, NUM_ACTIONS));
    for i in 0..m {
        let a = batch.actions[i];
        let lp = actor.log_probs.row(i);
        let p = actor.probs.row(i);
        let ratio = (lp[a] - batch.old_log_probs[i]).exp();
        let adv = advantages[i];
        let unclipped = ratio * adv;
        let clipped_term = ratio.clamp(lo, hi) * adv;
        policy -= unclipped.min(clipped_term);
        let h: f64 = -p.iter().zip(lp.iter()).map(|(p, l)| p * l).sum::<f64>();
        entropy += h;
        let active = unclipped <= clipped_term;
        if !active {
            clipped += 1;
        }
        if want_gradient {
            let mut g = g_logits.row_mut(i);
            for k in 0..NUM_ACTIONS {
                let onehot = if k == a { 1.0 } else { 0.0 };
                let mut d = config.entropy_coef * p[k] * (lp[k] + h);
                if active {
                    d -= unclipped * (onehot - p[k]);
                }
                g[k] = d * inv_m;
            }
        }
    }
    policy *= inv_m;
    entropy *= inv_m;
    let residual = &critic.values - &batch.returns;
    let value = residual.dot(&residual) * inv_m;
    let total = policy + config.value_coef * value - config.entropy_coef * entropy;
    let loss = LossBreakdown {
        policy,
        value,
        entropy,
        total,
        clip_fraction: clipped as f64 * inv_m,
    };
    if !total.is_finite() {
        let max_obs = batch.observations.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        return Err(Error::NonFiniteLoss(format!(
            "policy {policy}, value {value}, entropy {entropy}, max |obs| {max_obs}, |θ| {}",
            params.l2_norm()
        )));
    }
    if !want_gradient {
        return Ok((loss, None));
    }

    let mut grad = NetworkParameters::zeros(params.architecture());

    // actor
    grad.matrix_mut(Block::ActorOutW).assign(&g_logits.t().dot(&actor.modulated));
    grad.vector_mut(Block::ActorOutB).assign(&g_logits.sum_axis(Axis(0)));
    let g_mod = g_logits.dot(&params.matrix(Block::ActorOutW));
    let g_scale = (&g_mod * &actor.h2).sum_axis(Axis(0));
    let g_shift = g_mod.sum_axis(Axis(0));
    let phi_row = phi.insert_axis(Axis(0));
    grad.matrix_mut(Block::FilmScaleW)
        .assign(&g_scale.view().insert_axis(Axis(1)).dot(&phi_row));
    grad.vector_mut(Block::FilmScaleB).assign(&g_scale);
    grad.matrix_mut(Block::FilmShiftW)
        .assign(&g_shift.view().insert_axis(Axis(1)).dot(&phi_row));
    grad.vector_mut(Block::FilmShiftB).assign(&g_shift);
    let g_h2 = &g_mod * &actor.scale;
    backprop_trunk(
        &mut grad,
        [Block::ActorW1, Block::ActorB1, Block::ActorW2, Block::ActorB2],
        params,
        &batch.observations,
        &actor.h1,
        &actor.h2,
        g_h2,
    );

    // critic
    let g_values = residual * (2.0 * config.value_coef * inv_m);
    let g_values_col = g_values.view().insert_axis(Axis(1));
    grad.matrix_mut(Block::CriticOutW).assign(&g_values_col.t().dot(&critic.h2));
    grad.vector_mut(Block::CriticOutB).fill(g_values.sum());
    let g_h2 = g_values_col.dot(&params.matrix(Block::CriticOutW));
    backprop_trunk(
        &mut grad,
        [Block::CriticW1, Block::CriticB1, Block::CriticW2, Block::CriticB2],
        params,
        &batch.observations,
        &critic.h1,
        &critic.h2,
        g_h2,
    );
    Ok((loss, Some(grad)))
}

/// Two tanh layers, given `dL/dh2`.
fn backprop_trunk(
    grad: &mut NetworkParameters,
    [w1, b1, w2, b2]: [Block; 4],
    params: &NetworkParameters,
    x: &Array2<f64>,
    h1: &Array2<f64>,
    h2: &Array2<f64>,
    g_h2: Array2<f64>,
) {
    let g_z2 = g_h2 * &h2.mapv(|h| 1.0 - h * h);
    grad.matrix_mut(w2).assign(&g_z2.t().dot(h1));
    grad.vector_mut(b2).assign(&g_z2.sum_axis(Axis(0)));
    let g_h1 = g_z2.dot(&params.matrix(w2));
    let g_z1 = g_h1 * &h1.mapv(|h| 1.0 - h * h);
    grad.matrix_mut(w1).assign(&g_z1.t().dot(x));
    grad.vector_mut(b1).assign(&g_z1.sum_axis(Axis(0)));
}

/// Rescales `grad` in place to at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], config: &PpoConfig) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= config.learning_rate * (*m / c1) / ((*v / c2).sqrt() + config.adam_epsilon);
        }
    }
}

/// Averages over all minibatch steps of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub clip_fraction: f64,
}

/// `epochs` shuffled passes over the batch, one Adam step per minibatch.
pub fn ppo_update(
    params: &mut NetworkParameters,
    optimizer: &mut Adam,
    trajectories: &TrajectoryBatch,
    phi: ArrayView1<'_, f64>,
    config: &PpoConfig,
    seed: u64,
) -> Result<PpoDiagnostics> {
    config.validate()?;
    let batch = PpoBatch::from_trajectories(trajectories, config.gamma)?;
    ppo_update_samples(params, optimizer, &batch, phi, config, seed)
}

pub fn ppo_update_samples(
    params: &mut NetworkParameters,
    optimizer: &mut Adam,
    batch: &PpoBatch,
    phi: ArrayView1<'_, f64>,
    config: &PpoConfig,
    seed: u64,
) -> Result<PpoDiagnostics> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let chunk = batch.len().div_ceil(config.minibatches).max(1);
    let mut diag = PpoDiagnostics::default();
    let mut count = 0.0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(chunk) {
            let mb = batch.select(rows);
            let (loss, mut grad) = ppo_loss_and_gradient(params, &mb, phi, config)?;
            let norm = clip_grad_norm(grad.as_mut_slice(), config.max_grad_norm);
            optimizer.step(params.as_mut_slice(), grad.as_slice(), config);
            diag.policy_loss += loss.policy;
            diag.value_loss += loss.value;
            diag.entropy += loss.entropy;
            diag.clip_fraction += loss.clip_fraction;
            diag.grad_norm += norm;
            count += 1.0;
        }
    }
    diag.policy_loss /= count;
    diag.value_loss /= count;
    diag.entropy /= count;
    diag.clip_fraction /= count;
    diag.grad_norm /= count;
    Ok(diag)
}
