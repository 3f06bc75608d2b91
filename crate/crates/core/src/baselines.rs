//! Schedule baselines: CMA-ES tuning of the tanh schedule.
//!
//! The tuner searches the unit cube `u ∈ [0, 1]³`, mapped to
//! `O = 0.01·1000^u₀`, `S = 0.01·1000^u₁` and `D = 6u₂ − 3`, and maximizes
//! `C_max + q_max` of a SimCIM batch (cut first, attainment fraction second).

use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::problem::CouplingMatrix;
use crate::schedules::{Schedule, TanhScheduleParams};
use crate::seeds::{SeedSequence, Stream};
use crate::simcim::{run_batch, SimCimConfig};
use crate::spectral::{eigendecompose_symmetric, SpectralDecomposition};
use crate::stats::{evaluate_batch_stats, BatchStats};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmaesConfig {
    pub population: usize,
    pub max_evaluations: usize,
    pub initial_sigma: f64,
    /// Box applied to every coordinate; candidates are evaluated clipped to it.
    pub bounds: Option<(f64, f64)>,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        Self {
            population: 10,
            max_evaluations: 500,
            initial_sigma: 0.3,
            bounds: Some((0.0, 1.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaesEvaluation {
    pub generation: usize,
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaesResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub history: Vec<CmaesEvaluation>,
    pub final_mean: Vec<f64>,
    pub final_sigma: f64,
}

impl CmaesResult {
    /// Best value after each evaluation.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.history
            .iter()
            .map(|e| {
                if e.value < best {
                    best = e.value;
                }
                best
            })
            .collect()
    }
}

/// Standard `(μ/μ_w, λ)` CMA-ES with rank-one and rank-μ covariance updates
/// and cumulative step-size adaptation.
pub fn cmaes_minimize(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    config: &CmaesConfig,
    seed: u64,
) -> Result<CmaesResult> {
    let n = x0.len();
    let lambda = config.population;
    if n == 0 || lambda < 2 || config.max_evaluations == 0 || !(config.initial_sigma > 0.0) {
        return Err(Error::InvalidArgument(
            "CMA-ES needs dim ≥ 1, population ≥ 2, a positive budget and step size".into(),
        ));
    }
    let clip = |x: &Array1<f64>| -> Array1<f64> {
        match config.bounds {
            Some((lo, hi)) => x.mapv(|v| v.clamp(lo, hi)),
            None => x.clone(),
        }
    };

    let nf = n as f64;
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let sum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = clip(&Array1::from(x0.to_vec()));
    let mut sigma = config.initial_sigma;
    let mut cov = Array2::<f64>::eye(n);
    let mut basis = Array2::<f64>::eye(n);
    let mut scales = Array1::<f64>::ones(n);
    let mut p_sigma = Array1::<f64>::zeros(n);
    let mut p_c = Array1::<f64>::zeros(n);

    let mut history = Vec::with_capacity(config.max_evaluations);
    let mut best_point = mean.to_vec();
    let mut best_value = f64::INFINITY;
    let mut generation = 0;

    while history.len() < config.max_evaluations {
        let mut candidates: Vec<(f64, Array1<f64>)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            if history.len() == config.max_evaluations {
                break;
            }
            let z: Array1<f64> = Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut rng));
            let y = basis.dot(&(&scales * &z));
            let x = clip(&(&mean + &(&y * sigma)));
            let mut value = objective(x.as_slice().expect("contiguous"));
            if !value.is_finite() {
                log::warn!("CMA-ES objective returned {value} at {x}; ranking it last");
                value = f64::INFINITY;
            }
            history.push(CmaesEvaluation {
                generation,
                point: x.to_vec(),
                value,
            });
            if value < best_value {
                best_value = value;
                best_point = x.to_vec();
            }
            candidates.push((value, y));
        }
        if candidates.len() < lambda {
            break;
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut y_w = Array1::<f64>::zeros(n);
        for (w, (_, y)) in weights.iter().zip(&candidates) {
            y_w.scaled_add(*w, y);
        }
        mean = clip(&(&mean + &(&y_w * sigma)));

        // C^{-1/2} y_w = B D^{-1} Bᵀ y_w
        let inv_sqrt = basis.dot(&(&basis.t().dot(&y_w) / &scales));
        p_sigma = &p_sigma * (1.0 - c_sigma) + &(inv_sqrt * (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt());
        let ps_norm = p_sigma.dot(&p_sigma).sqrt();
        let threshold = (1.4 + 2.0 / (nf + 1.0)) * chi_n;
        let decay = (1.0 - (1.0 - c_sigma).powi(2 * (generation as i32 + 1))).sqrt();
        let h_sigma = if ps_norm / decay < threshold { 1.0 } else { 0.0 };
        p_c = &p_c * (1.0 - c_c) + &(&y_w * (h_sigma * (c_c * (2.0 - c_c) * mu_eff).sqrt()));

        let mut rank_mu = Array2::<f64>::zeros((n, n));
        for (w, (_, y)) in weights.iter().zip(&candidates) {
            let col = y.view().insert_axis(ndarray::Axis(1));
            rank_mu.scaled_add(*w, &col.dot(&col.t()));
        }
        let pc_col = p_c.view().insert_axis(ndarray::Axis(1));
        let rank_one = pc_col.dot(&pc_col.t()) + &cov * ((1.0 - h_sigma) * c_c * (2.0 - c_c));
        cov = &cov * (1.0 - c_1 - c_mu) + &(rank_one * c_1) + &(rank_mu * c_mu);
        sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).exp();

        // keep C exactly symmetric before factoring it
        let sym = (&cov + &cov.t()) * 0.5;
        cov = sym;
        let eig = eigendecompose_symmetric(cov.view())?;
        basis = eig.q().to_owned();
        scales = eig.lambda().mapv(|l| l.max(1e-300).sqrt());
        generation += 1;
        if !sigma.is_finite() || sigma < 1e-300 {
            break;
        }
    }

    Ok(CmaesResult {
        best_point,
        best_value,
        history,
        final_mean: mean.to_vec(),
        final_sigma: sigma,
    })
}

/// Maps the unit cube onto the tanh parameter box.
pub fn map_unit_to_tanh(u: &[f64]) -> (f64, f64, f64) {
    let exp = |v: f64| 0.01 * 1000f64.powf(v.clamp(0.0, 1.0));
    (exp(u[0]), exp(u[1]), 6.0 * u[2].clamp(0.0, 1.0) - 3.0)
}

/// Inverse of [`map_unit_to_tanh`] on the box.
pub fn map_tanh_to_unit(scale: f64, slope: f64, shift: f64) -> [f64; 3] {
    let log = |v: f64| (v / 0.01).log10() / 3.0;
    [log(scale), log(slope), (shift + 3.0) / 6.0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchObjective {
    /// `−(C_max + q_max)`.
    pub value: f64,
    pub c_max: f64,
    pub q_max: f64,
}

pub fn objective_from_cuts(cuts: &[f64]) -> Result<BatchObjective> {
    let s = evaluate_batch_stats(cuts, None)?;
    Ok(BatchObjective {
        value: -(s.max + s.probability_of_max),
        c_max: s.max,
        q_max: s.probability_of_max,
    })
}

/// One SimCIM batch under the tanh schedule, scored for minimization.
pub fn batch_objective(
    matrix: &CouplingMatrix,
    decomp: &SpectralDecomposition,
    params: &TanhScheduleParams,
    config: &SimCimConfig,
    seed: u64,
) -> Result<BatchObjective> {
    let out = run_batch(matrix, decomp, &Schedule::Tanh(*params), config, seed)?;
    objective_from_cuts(&out.cuts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningRow {
    pub generation: usize,
    pub evaluation: usize,
    pub scale: f64,
    pub slope: f64,
    pub shift: f64,
    pub objective: BatchObjective,
}

#[derive(Debug, Clone)]
pub struct TanhTuning {
    pub params: TanhScheduleParams,
    /// Best objective seen during the search.
    pub search_best: BatchObjective,
    /// Statistics of the fresh batch sampled at the selected parameters.
    pub fresh: BatchStats,
    pub fresh_cuts: Vec<f64>,
    pub history: Vec<TuningRow>,
}

impl TanhTuning {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("generation,evaluation,scale,slope,shift,objective,c_max,q_max\n");
        for r in &self.history {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.generation, r.evaluation, r.scale, r.slope, r.shift, r.objective.value, r.objective.c_max, r.objective.q_max
            );
        }
        out
    }
}

/// CMA-ES over the tanh box, then one fresh batch at the best parameters.
/// `simcim.learning_rate` is used as given.
pub fn tune_tanh(
    matrix: &CouplingMatrix,
    decomp: &SpectralDecomposition,
    cmaes: &CmaesConfig,
    simcim: &SimCimConfig,
    best_known: Option<i64>,
    seed: u64,
) -> Result<TanhTuning> {
    let seeds = SeedSequence::new(seed);
    let params_at = |u: &[f64]| {
        let (o, s, d) = map_unit_to_tanh(u);
        TanhScheduleParams::for_matrix(matrix, o, s, d)
    };
    let mut rows = Vec::with_capacity(cmaes.max_evaluations);
    let mut failure = None;
    let mut objective = |u: &[f64]| {
        let params = params_at(u);
        let k = rows.len();
        match batch_objective(matrix, decomp, &params, simcim, seeds.derive(Stream::SimCimNoise, k as u64)) {
            Ok(obj) => {
                rows.push(TuningRow {
                    generation: k / cmaes.population,
                    evaluation: k,
                    scale: params.scale,
                    slope: params.slope,
                    shift: params.shift,
                    objective: obj,
                });
                obj.value
            }
            Err(e) => {
                failure.get_or_insert(e);
                rows.push(TuningRow {
                    generation: k / cmaes.population,
                    evaluation: k,
                    scale: params.scale,
                    slope: params.slope,
                    shift: params.shift,
                    objective: BatchObjective {
                        value: f64::NAN,
                        c_max: f64::NAN,
                        q_max: f64::NAN,
                    },
                });
                f64::NAN
            }
        }
    };
    let result = cmaes_minimize(&mut objective, &[0.5; 3], cmaes, seeds.derive(Stream::Cmaes, 0))?;
    if let Some(e) = failure {
        if !result.best_value.is_finite() {
            return Err(e);
        }
        log::warn!("some CMA-ES evaluations failed: {e}");
    }
    let best_row = rows
        .iter()
        .filter(|r| r.objective.value.is_finite())
        .min_by(|a, b| a.objective.value.total_cmp(&b.objective.value))
        .copied()
        .ok_or_else(|| Error::InvalidArgument("no successful CMA-ES evaluation".into()))?;
    let params = params_at(&result.best_point);
    let fresh_run = run_batch(matrix, decomp, &Schedule::Tanh(params), simcim, seeds.derive(Stream::Evaluation, 0))?;
    let fresh = evaluate_batch_stats(&fresh_run.cuts, best_known)?;
    Ok(TanhTuning {
        params,
        search_best: best_row.objective,
        fresh,
        fresh_cuts: fresh_run.cuts,
        history: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{brute_force_max_cut, generate_erdos_renyi, WeightMode};
    use crate::simcim::find_learning_rate;
    use crate::spectral::eigendecompose;
    use proptest::prelude::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn unbounded() -> CmaesConfig {
        CmaesConfig {
            bounds: None,
            ..CmaesConfig::default()
        }
    }

    #[test]
    fn sphere_is_minimized() {
        let r = cmaes_minimize(&mut |x| sphere(x), &[1.0, -0.5, 0.7], &unbounded(), 1).unwrap();
        assert_eq!(r.history.len(), 500);
        assert!(r.best_value <= 1e-6, "{}", r.best_value);
    }

    #[test]
    fn shifted_ellipsoid_is_minimized() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 100.0 * (x[1] - 0.6).powi(2) + 10.0 * (x[2] - 0.2).powi(2);
        let r = cmaes_minimize(&mut |x| f(x), &[0.5; 3], &CmaesConfig::default(), 2).unwrap();
        assert!(r.best_value <= 1e-6, "{}", r.best_value);
    }

    #[test]
    fn seeded_runs_repeat() {
        let a = cmaes_minimize(&mut |x| sphere(x), &[0.5; 3], &CmaesConfig::default(), 9).unwrap();
        let b = cmaes_minimize(&mut |x| sphere(x), &[0.5; 3], &CmaesConfig::default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_objective_keeps_mean_in_box() {
        let r = cmaes_minimize(&mut |_| 1.0, &[0.5; 3], &CmaesConfig::default(), 3).unwrap();
        assert!(r.final_mean.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(r.history.iter().all(|e| e.point.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn non_finite_values_rank_last() {
        let mut f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { sphere(x) };
        let r = cmaes_minimize(&mut f, &[0.4; 3], &CmaesConfig::default(), 4).unwrap();
        assert!(r.best_value.is_finite());
        assert!(r.best_point[0] <= 0.5);
    }

    #[test]
    fn best_so_far_never_increases() {
        let r = cmaes_minimize(&mut |x| sphere(x) + x[0].sin(), &[0.9; 3], &CmaesConfig::default(), 5).unwrap();
        assert!(r.best_so_far().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn objective_counting() {
        let all = objective_from_cuts(&[100.0; 256]).unwrap();
        assert_eq!(all.value, -101.0);
        let mut cuts = vec![99.0; 255];
        cuts.push(100.0);
        let one = objective_from_cuts(&cuts).unwrap();
        assert!((one.value - -(100.0 + 1.0 / 256.0)).abs() < 1e-12);
        // a larger maximum always wins
        let worse = objective_from_cuts(&[99.0; 256]).unwrap();
        assert!(one.value < worse.value);
    }

    #[test]
    fn box_mapping_corners() {
        assert_eq!(map_unit_to_tanh(&[0.0, 0.0, 0.0]), (0.01, 0.01, -3.0));
        let (o, s, d) = map_unit_to_tanh(&[1.0, 1.0, 1.0]);
        assert!((o - 10.0).abs() < 1e-12 && (s - 10.0).abs() < 1e-12 && d == 3.0);
        let (o, _, d) = map_unit_to_tanh(&[0.5, 0.5, 0.5]);
        assert!((o - 0.01 * 1000f64.sqrt()).abs() < 1e-12 && d == 0.0);
    }

    proptest! {
        #[test]
        fn box_mapping_is_monotone_and_invertible(u in prop::array::uniform3(0.0f64..=1.0), du in 1e-6f64..0.5) {
            let (o, s, d) = map_unit_to_tanh(&u);
            prop_assert!((0.01..=10.0 + 1e-12).contains(&o));
            prop_assert!((0.01..=10.0 + 1e-12).contains(&s));
            prop_assert!((-3.0..=3.0).contains(&d));
            let back = map_tanh_to_unit(o, s, d);
            for k in 0..3 {
                prop_assert!((back[k] - u[k]).abs() < 1e-9);
            }
            let v = [(u[0] + du).min(1.0), (u[1] + du).min(1.0), (u[2] + du).min(1.0)];
            let (o2, s2, d2) = map_unit_to_tanh(&v);
            prop_assert!(o2 >= o && s2 >= s && d2 >= d);
        }
    }

    #[test]
    fn batch_objective_is_deterministic() {
        let j = generate_erdos_renyi(12, 0.4, WeightMode::Unit, 1).unwrap();
        let d = eigendecompose(&j).unwrap();
        let p = TanhScheduleParams::for_matrix(&j, 0.5, 3.0, -0.5);
        let cfg = SimCimConfig {
            learning_rate: 0.1,
            iterations: 200,
            batch_size: 16,
            ..SimCimConfig::default()
        };
        assert_eq!(
            batch_objective(&j, &d, &p, &cfg, 3).unwrap(),
            batch_objective(&j, &d, &p, &cfg, 3).unwrap()
        );
    }

    #[test]
    fn small_tuning_run_reaches_oracle() {
        let j = generate_erdos_renyi(16, 0.3, WeightMode::Unit, 11).unwrap();
        let d = eigendecompose(&j).unwrap();
        let (_, optimum) = brute_force_max_cut(&j).unwrap();
        let base = SimCimConfig {
            batch_size: 64,
            ..SimCimConfig::default()
        };
        let mu = find_learning_rate(&j, &d, &base, 0).unwrap().learning_rate;
        let cfg = SimCimConfig { learning_rate: mu, ..base };
        let cmaes = CmaesConfig {
            max_evaluations: 40,
            ..CmaesConfig::default()
        };
        let a = tune_tanh(&j, &d, &cmaes, &cfg, Some(optimum as i64), 5).unwrap();
        assert_eq!(a.history.len(), 40);
        assert_eq!(a.fresh.max, optimum);
        assert!(a.search_best.c_max >= a.fresh.max);
        let b = tune_tanh(&j, &d, &cmaes, &cfg, Some(optimum as i64), 5).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history_csv().lines().count(), 41);
    }
}
