//! Regularization schedules.
//!
//! Linear and agent-driven (piecewise) schedules produce the normalized
//! value `p̄ ∈ [0, 1.05]` which is mapped onto the eigenvalue range of `J`;
//! the tanh schedule produces `p` directly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::problem::CouplingMatrix;
use crate::spectral::SpectralDecomposition;

pub const PBAR_MIN: f64 = 0.0;
pub const PBAR_MAX: f64 = 1.05;
pub const DEFAULT_P_DELTA: f64 = 0.04;
pub const INITIAL_PBAR: f64 = 1.0;

/// `1 - t/N`
pub fn linear_pbar(t: usize, total: usize) -> f64 {
    1.0 - t as f64 / total as f64
}

/// Parameters of `p_t = J_m O (tanh(S(t/N - 0.5)) + D)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanhScheduleParams {
    pub scale: f64,
    pub slope: f64,
    pub shift: f64,
    pub row_sum_norm: f64,
}

impl TanhScheduleParams {
    pub fn for_matrix(matrix: &CouplingMatrix, scale: f64, slope: f64, shift: f64) -> Self {
        Self {
            scale,
            slope,
            shift,
            row_sum_norm: matrix.row_sum_norm(),
        }
    }
}

pub fn tanh_p(t: usize, total: usize, params: &TanhScheduleParams) -> f64 {
    let x = t as f64 / total as f64 - 0.5;
    params.row_sum_norm * params.scale * ((params.slope * x).tanh() + params.shift)
}

/// The agent's three discrete choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Decrease,
    Hold,
    Increase,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Decrease, Action::Hold, Action::Increase];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("action index {i} not in 0..3")))
    }

    pub fn index(self) -> usize {
        match self {
            Action::Decrease => 0,
            Action::Hold => 1,
            Action::Increase => 2,
        }
    }

    pub fn increment(self, p_delta: f64) -> f64 {
        match self {
            Action::Decrease => -p_delta,
            Action::Hold => 0.0,
            Action::Increase => p_delta,
        }
    }
}

/// `clip(p̄ + increment - m/N, 0, 1.05)`; decrement and increment are
/// applied together and clipped once.
pub fn apply_action(pbar_prev: f64, increment: f64, interval: usize, total: usize) -> f64 {
    (pbar_prev + increment - interval as f64 / total as f64).clamp(PBAR_MIN, PBAR_MAX)
}

/// Linear interpolation `k/m` of the way from `prev` to `next`.
pub fn interpolate(prev: f64, next: f64, k: usize, interval: usize) -> f64 {
    prev + (k as f64 / interval as f64) * (next - prev)
}

/// Anchors every `interval` iterations, linearly interpolated in between.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSchedule {
    anchors: Vec<f64>,
    interval: usize,
}

impl PiecewiseSchedule {
    pub fn new(anchors: Vec<f64>, interval: usize) -> Result<Self> {
        if interval == 0 || anchors.len() < 2 {
            return Err(Error::InvalidArgument(
                "piecewise schedule needs interval > 0 and at least two anchors".into(),
            ));
        }
        if let Some(a) = anchors.iter().find(|a| !(PBAR_MIN..=PBAR_MAX).contains(*a)) {
            return Err(Error::InvalidArgument(format!("anchor {a} outside [0, 1.05]")));
        }
        Ok(Self { anchors, interval })
    }

    /// Rolls the action rule forward from `p̄₀ = 1`.
    pub fn from_actions(actions: &[Action], p_delta: f64, interval: usize, total: usize) -> Result<Self> {
        let mut anchors = Vec::with_capacity(actions.len() + 1);
        let mut pbar = INITIAL_PBAR;
        anchors.push(pbar);
        for a in actions {
            pbar = apply_action(pbar, a.increment(p_delta), interval, total);
            anchors.push(pbar);
        }
        Self::new(anchors, interval)
    }

    pub fn anchors(&self) -> &[f64] {
        &self.anchors
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    /// `p̄` used during iteration `t`; held at the last anchor past the end.
    pub fn pbar(&self, t: usize) -> f64 {
        let seg = t / self.interval;
        if seg + 1 >= self.anchors.len() {
            return *self.anchors.last().unwrap();
        }
        interpolate(self.anchors[seg], self.anchors[seg + 1], t % self.interval, self.interval)
    }
}

/// Anything that yields the regularization `p_t` fed into the SimCIM gradient.
pub trait RegularizationSchedule {
    fn regularization(&self, t: usize, total: usize, decomp: &SpectralDecomposition) -> f64;
}

/// Adapts a closure returning `p̄_t` into a schedule (mapped through the spectrum).
pub struct Normalized<F>(pub F);

impl<F: Fn(usize, usize) -> f64> RegularizationSchedule for Normalized<F> {
    fn regularization(&self, t: usize, total: usize, decomp: &SpectralDecomposition) -> f64 {
        decomp.denormalize_regularization((self.0)(t, total))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Linear,
    Tanh(TanhScheduleParams),
    Piecewise(PiecewiseSchedule),
}

impl RegularizationSchedule for Schedule {
    fn regularization(&self, t: usize, total: usize, decomp: &SpectralDecomposition) -> f64 {
        match self {
            Schedule::Linear => decomp.denormalize_regularization(linear_pbar(t, total)),
            Schedule::Tanh(params) => tanh_p(t, total, params),
            Schedule::Piecewise(pw) => decomp.denormalize_regularization(pw.pbar(t)),
        }
    }
}

impl Schedule {
    /// Key-value text block (`type` tag plus parameters), one `key = value` per line.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        match self {
            Schedule::Linear => out.push_str("type = linear\n"),
            Schedule::Tanh(p) => {
                let _ = write!(
                    out,
                    "type = tanh\nscale = {:?}\nslope = {:?}\nshift = {:?}\nrow_sum_norm = {:?}\n",
                    p.scale, p.slope, p.shift, p.row_sum_norm
                );
            }
            Schedule::Piecewise(pw) => {
                let anchors: Vec<String> = pw.anchors.iter().map(|a| format!("{a:?}")).collect();
                let _ = write!(
                    out,
                    "type = piecewise\ninterval = {}\nanchors = {}\n",
                    pw.interval,
                    anchors.join(",")
                );
            }
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("schedule line {line:?} lacks '='")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&String> {
            map.get(k)
                .ok_or_else(|| Error::InvalidArgument(format!("schedule field {k:?} missing")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("schedule field {k:?} not a number")))
        };
        match get("type")?.as_str() {
            "linear" => Ok(Schedule::Linear),
            "tanh" => Ok(Schedule::Tanh(TanhScheduleParams {
                scale: num("scale")?,
                slope: num("slope")?,
                shift: num("shift")?,
                row_sum_norm: num("row_sum_norm")?,
            })),
            "piecewise" => {
                let interval = num("interval")? as usize;
                let anchors = get("anchors")?
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| Error::InvalidArgument(format!("bad anchor {s:?}")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(Schedule::Piecewise(PiecewiseSchedule::new(anchors, interval)?))
            }
            other => Err(Error::InvalidArgument(format!("unknown schedule type {other:?}"))),
        }
    }
}
