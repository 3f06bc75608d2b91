//! Actor and critic MLPs with FiLM conditioning of the actor.
//!
//! All weights live in one flat vector so the optimizer, gradient clipping,
//! finite differences and checkpoints can treat them uniformly. Layers are
//! `z = x Wᵀ + b` with `W` stored row-major as `(out, in)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::environment::observation_len;
use crate::error::{Error, Result};

pub const NUM_ACTIONS: usize = 3;
pub const DEFAULT_HIDDEN: usize = 256;

const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
const POLICY_GAIN: f64 = 0.01;
const VALUE_GAIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub hidden: usize,
    /// Length of the conditioning vector `φ`.
    pub features: usize,
}

impl Architecture {
    pub fn for_problem(n: usize) -> Self {
        Self {
            input: observation_len(n),
            hidden: DEFAULT_HIDDEN,
            features: n,
        }
    }

    pub fn num_params(&self) -> usize {
        Block::ALL.iter().map(|b| b.size(self)).sum()
    }

    fn offset(&self, block: Block) -> usize {
        Block::ALL
            .iter()
            .take_while(|&&b| b != block)
            .map(|b| b.size(self))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    ActorW1,
    ActorB1,
    ActorW2,
    ActorB2,
    ActorOutW,
    ActorOutB,
    FilmScaleW,
    FilmScaleB,
    FilmShiftW,
    FilmShiftB,
    CriticW1,
    CriticB1,
    CriticW2,
    CriticB2,
    CriticOutW,
    CriticOutB,
}

impl Block {
    pub const ALL: [Block; 16] = [
        Block::ActorW1,
        Block::ActorB1,
        Block::ActorW2,
        Block::ActorB2,
        Block::ActorOutW,
        Block::ActorOutB,
        Block::FilmScaleW,
        Block::FilmScaleB,
        Block::FilmShiftW,
        Block::FilmShiftB,
        Block::CriticW1,
        Block::CriticB1,
        Block::CriticW2,
        Block::CriticB2,
        Block::CriticOutW,
        Block::CriticOutB,
    ];

    /// `(rows, cols)`; biases are single columns.
    pub fn shape(self, a: &Architecture) -> (usize, usize) {
        let (d, h, f) = (a.input, a.hidden, a.features);
        match self {
            Block::ActorW1 | Block::CriticW1 => (h, d),
            Block::ActorW2 | Block::CriticW2 => (h, h),
            Block::ActorOutW => (NUM_ACTIONS, h),
            Block::ActorOutB => (NUM_ACTIONS, 1),
            Block::CriticOutW => (1, h),
            Block::CriticOutB => (1, 1),
            Block::FilmScaleW | Block::FilmShiftW => (h, f),
            Block::ActorB1
            | Block::ActorB2
            | Block::CriticB1
            | Block::CriticB2
            | Block::FilmScaleB
            | Block::FilmShiftB => (h, 1),
        }
    }

    pub fn size(self, a: &Architecture) -> usize {
        let (r, c) = self.shape(a);
        r * c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    arch: Architecture,
    data: Vec<f64>,
}

impl NetworkParameters {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            data: vec![0.0; arch.num_params()],
        }
    }

    pub fn from_vec(arch: Architecture, data: Vec<f64>) -> Result<Self> {
        if data.len() != arch.num_params() {
            return Err(Error::DimensionMismatch {
                expected: arch.num_params(),
                actual: data.len(),
            });
        }
        Ok(Self { arch, data })
    }

    /// Orthogonal weights (gain √2 on hidden layers, 0.01 on the logits, 1 on
    /// the value head), zero biases, and identity FiLM (scale 1, shift 0).
    pub fn initialize(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(arch);
        for (block, gain) in [
            (Block::ActorW1, HIDDEN_GAIN),
            (Block::ActorW2, HIDDEN_GAIN),
            (Block::ActorOutW, POLICY_GAIN),
            (Block::CriticW1, HIDDEN_GAIN),
            (Block::CriticW2, HIDDEN_GAIN),
            (Block::CriticOutW, VALUE_GAIN),
        ] {
            let (r, c) = block.shape(&arch);
            p.matrix_mut(block).assign(&orthogonal(r, c, gain, &mut rng));
        }
        p.vector_mut(Block::FilmScaleB).fill(1.0);
        p
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn range(&self, block: Block) -> std::ops::Range<usize> {
        let start = self.arch.offset(block);
        start..start + block.size(&self.arch)
    }

    pub fn matrix(&self, block: Block) -> ArrayView2<'_, f64> {
        let shape = block.shape(&self.arch);
        let r = self.range(block);
        ArrayView2::from_shape(shape, &self.data[r]).expect("block shape matches layout")
    }

    pub fn matrix_mut(&mut self, block: Block) -> ArrayViewMut2<'_, f64> {
        let shape = block.shape(&self.arch);
        let r = self.range(block);
        ArrayViewMut2::from_shape(shape, &mut self.data[r]).expect("block shape matches layout")
    }

    pub fn vector(&self, block: Block) -> ArrayView1<'_, f64> {
        let r = self.range(block);
        ArrayView1::from(&self.data[r])
    }

    pub fn vector_mut(&mut self, block: Block) -> ArrayViewMut1<'_, f64> {
        let r = self.range(block);
        ArrayViewMut1::from(&mut self.data[r])
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Rows (or columns, whichever are fewer) orthonormal, scaled by `gain`.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (k, len) = (rows.min(cols), rows.max(cols));
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = Array1::from_shape_fn(len, |_| StandardNormal.sample(rng));
        // two Gram-Schmidt passes keep the basis orthogonal to machine precision
        for _ in 0..2 {
            for u in &basis {
                let proj = u.dot(&v);
                v.scaled_add(-proj, u);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }
    let mut w = Array2::zeros((rows, cols));
    for (i, u) in basis.iter().enumerate() {
        if rows <= cols {
            w.row_mut(i).assign(u);
        } else {
            w.column_mut(i).assign(u);
        }
    }
    w * gain
}

fn affine(x: &ArrayView2<'_, f64>, w: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    x.dot(&w.t()) + b
}

fn check_input(params: &NetworkParameters, obs: &ArrayView2<'_, f64>) -> Result<()> {
    if obs.ncols() != params.arch.input {
        return Err(Error::DimensionMismatch {
            expected: params.arch.input,
            actual: obs.ncols(),
        });
    }
    Ok(())
}

/// Intermediate activations of an actor pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct ActorActivations {
    pub h1: Array2<f64>,
    pub h2: Array2<f64>,
    pub scale: Array1<f64>,
    pub modulated: Array2<f64>,
    pub log_probs: Array2<f64>,
    pub probs: Array2<f64>,
    pub logits: Array2<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct CriticActivations {
    pub h1: Array2<f64>,
    pub h2: Array2<f64>,
    pub values: Array1<f64>,
}

pub(crate) fn actor_pass(
    params: &NetworkParameters,
    obs: ArrayView2<'_, f64>,
    phi: ArrayView1<'_, f64>,
) -> Result<ActorActivations> {
    check_input(params, &obs)?;
    if phi.len() != params.arch.features {
        return Err(Error::DimensionMismatch {
            expected: params.arch.features,
            actual: phi.len(),
        });
    }
    let h1 = affine(&obs, params.matrix(Block::ActorW1), params.vector(Block::ActorB1)).mapv_into(f64::tanh);
    let h2 = affine(&h1.view(), params.matrix(Block::ActorW2), params.vector(Block::ActorB2)).mapv_into(f64::tanh);
    let scale = params.matrix(Block::FilmScaleW).dot(&phi) + params.vector(Block::FilmScaleB);
    let shift = params.matrix(Block::FilmShiftW).dot(&phi) + params.vector(Block::FilmShiftB);
    let modulated = &h2 * &scale + &shift;
    let logits = affine(&modulated.view(), params.matrix(Block::ActorOutW), params.vector(Block::ActorOutB));
    let log_probs = log_softmax(&logits);
    let probs = log_probs.mapv(f64::exp);
    Ok(ActorActivations {
        h1,
        h2,
        scale,
        modulated,
        log_probs,
        probs,
        logits,
    })
}

pub(crate) fn critic_pass(params: &NetworkParameters, obs: ArrayView2<'_, f64>) -> Result<CriticActivations> {
    check_input(params, &obs)?;
    let h1 = affine(&obs, params.matrix(Block::CriticW1), params.vector(Block::CriticB1)).mapv_into(f64::tanh);
    let h2 = affine(&h1.view(), params.matrix(Block::CriticW2), params.vector(Block::CriticB2)).mapv_into(f64::tanh);
    let values = affine(&h2.view(), params.matrix(Block::CriticOutW), params.vector(Block::CriticOutB))
        .index_axis_move(Axis(1), 0);
    Ok(CriticActivations { h1, h2, values })
}

fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorOutput {
    /// `(rows, 3)` action probabilities.
    pub probs: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Policy for every row of `obs`, all conditioned on the same features `φ`.
pub fn actor_forward(
    params: &NetworkParameters,
    obs: ArrayView2<'_, f64>,
    phi: ArrayView1<'_, f64>,
) -> Result<ActorOutput> {
    let a = actor_pass(params, obs, phi)?;
    Ok(ActorOutput {
        probs: a.probs,
        logits: a.logits,
    })
}

/// Value estimate for every row of `obs`.
pub fn critic_forward(params: &NetworkParameters, obs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    Ok(critic_pass(params, obs)?.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> Architecture {
        Architecture {
            input: 6,
            hidden: 8,
            features: 4,
        }
    }

    fn random_obs(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn layout_is_contiguous() {
        let a = small();
        let expected = 8 * 6 + 8 + 8 * 8 + 8 + 3 * 8 + 3 + 2 * (8 * 4 + 8) + 8 * 6 + 8 + 8 * 8 + 8 + 8 + 1;
        assert_eq!(a.num_params(), expected);
        let p = NetworkParameters::zeros(a);
        assert_eq!(p.matrix(Block::CriticOutB).dim(), (1, 1));
        assert_eq!(Architecture::for_problem(60).input, 62);
    }

    #[test]
    fn orthogonal_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(5, 9), (9, 5), (7, 7)] {
            let w = orthogonal(r, c, 2.0, &mut rng);
            let gram = if r <= c { w.dot(&w.t()) } else { w.t().dot(&w) };
            let k = r.min(c);
            let err = (&gram - &(Array2::<f64>::eye(k) * 4.0)).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(err < 1e-12, "{r}x{c}: {err}");
        }
    }

    #[test]
    fn identity_film_matches_unmodulated_pass() {
        let p = NetworkParameters::initialize(small(), 1);
        let obs = random_obs(5, 6, 2);
        let phi = Array1::from(vec![0.3, -0.2, 0.9, 0.1]);
        let out = actor_forward(&p, obs.view(), phi.view()).unwrap();
        // film-free reference
        let h1 = (obs.dot(&p.matrix(Block::ActorW1).t()) + p.vector(Block::ActorB1)).mapv(f64::tanh);
        let h2 = (h1.dot(&p.matrix(Block::ActorW2).t()) + p.vector(Block::ActorB2)).mapv(f64::tanh);
        let z = h2.dot(&p.matrix(Block::ActorOutW).t()) + p.vector(Block::ActorOutB);
        let err = (&z - &out.logits).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(err < 1e-14);
    }

    #[test]
    fn zero_weights_give_uniform_policy_and_zero_value() {
        let p = NetworkParameters::zeros(small());
        let obs = random_obs(3, 6, 4);
        let phi = Array1::from(vec![1.0; 4]);
        let out = actor_forward(&p, obs.view(), phi.view()).unwrap();
        assert!(out.probs.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-15));
        assert!(critic_forward(&p, obs.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn film_modulates_last_hidden_layer() {
        let mut p = NetworkParameters::initialize(small(), 5);
        let obs = random_obs(2, 6, 6);
        let phi = Array1::from(vec![0.5, 0.25, -1.0, 2.0]);
        let base = actor_pass(&p, obs.view(), phi.view()).unwrap();
        p.matrix_mut(Block::FilmShiftW).fill(0.1);
        p.vector_mut(Block::FilmScaleB).fill(0.5);
        let moved = actor_pass(&p, obs.view(), phi.view()).unwrap();
        let shift = 0.1 * phi.sum();
        let expected = &base.h2 * 0.5 + shift;
        let err = (&expected - &moved.modulated).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(err < 1e-14);
    }

    #[test]
    fn dimension_errors() {
        let p = NetworkParameters::initialize(small(), 0);
        let phi = Array1::zeros(4);
        assert!(actor_forward(&p, random_obs(1, 5, 0).view(), phi.view()).is_err());
        assert!(actor_forward(&p, random_obs(1, 6, 0).view(), Array1::zeros(3).view()).is_err());
        assert!(critic_forward(&p, random_obs(1, 7, 0).view()).is_err());
        assert!(NetworkParameters::from_vec(small(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn identical_rows_give_identical_values() {
        let p = NetworkParameters::initialize(small(), 9);
        let row = random_obs(1, 6, 1);
        let obs = Array2::from_shape_fn((4, 6), |(_, j)| row[[0, j]]);
        let v = critic_forward(&p, obs.view()).unwrap();
        assert!(v.iter().all(|&x| x == v[0] && x.is_finite()));
    }

    #[test]
    fn initial_policy_is_near_uniform() {
        let a = Architecture::for_problem(30);
        let p = NetworkParameters::initialize(a, 2);
        let obs = random_obs(16, a.input, 3) * 3.0;
        let phi = Array1::from_elem(30, 0.1);
        let out = actor_forward(&p, obs.view(), phi.view()).unwrap();
        assert!(out.probs.iter().all(|&q| (q - 1.0 / 3.0).abs() < 0.05));
    }

    proptest! {
        #[test]
        fn probabilities_form_a_distribution(seed in any::<u64>(), scale in 0.0f64..50.0) {
            let p = NetworkParameters::initialize(small(), seed);
            let obs = random_obs(4, 6, seed ^ 1) * scale;
            let phi = random_obs(1, 4, seed ^ 2).index_axis_move(Axis(0), 0) * scale;
            let out = actor_forward(&p, obs.view(), phi.view()).unwrap();
            for row in out.probs.rows() {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-6);
                prop_assert!(row.iter().all(|&q| q > 0.0));
            }
            prop_assert!(out.logits.iter().all(|z| z.is_finite()));
        }
    }
}
