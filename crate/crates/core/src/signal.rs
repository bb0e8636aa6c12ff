//! Time grids, observed curves and FMM wave evaluation.
//!
//! An FMM wave is `A·cos(β + 2·arctan(ω·tan((t − α)/2)))`. The inner phase is
//! evaluated through the two-argument arctangent, which agrees with the
//! single-argument form wherever the latter is defined and stays continuous
//! across `t − α = π`.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps any finite angle into `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed circular difference `a − b` folded into `(−π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Ordered sample times on the circle `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    /// `(t0, T)`: origin and period of the raw time axis before rescaling.
    original_span: (f64, f64),
}

impl TimeGrid {
    /// Builds a grid from points already expressed in radians.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        Self::validate(&points)?;
        Ok(Self {
            points,
            original_span: (0.0, TAU),
        })
    }

    /// `p` equispaced points `2πj/p`, `j = 0..p`.
    pub fn uniform(p: usize) -> Result<Self> {
        let points = (0..p).map(|j| TAU * j as f64 / p as f64).collect();
        Self::new(points)
    }

    fn validate(points: &[f64]) -> Result<()> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().find(|t| !(**t >= 0.0 && **t < TAU)) {
            return Err(Error::InvalidGrid(format!("point {bad} outside [0, 2π)")));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("points not strictly increasing".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn original_span(&self) -> (f64, f64) {
        self.original_span
    }
}

/// Rescales raw sample times onto `[0, 2π)` with `t' = (t − t0)·2π/T`.
///
/// The period is `T = t_p − t_0 + Δt`, with `Δt` the mean raw sample step, so
/// the samples cover one period of a circular domain and the last point lands
/// strictly below `2π`.
pub fn rescale_time(raw_times: &[f64]) -> Result<TimeGrid> {
    check_raw(raw_times)?;
    let p = raw_times.len();
    let t0 = raw_times[0];
    let span = raw_times[p - 1] - t0;
    let step = span / (p - 1) as f64;
    rescale_time_with_span(raw_times, t0, span + step)
}

/// Rescales raw sample times with an explicit origin `t0` and period.
pub fn rescale_time_with_span(raw_times: &[f64], t0: f64, period: f64) -> Result<TimeGrid> {
    check_raw(raw_times)?;
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidGrid(format!("period must be positive, got {period}")));
    }
    let points: Vec<f64> = raw_times.iter().map(|t| (t - t0) * TAU / period).collect();
    TimeGrid::validate(&points)?;
    Ok(TimeGrid {
        points,
        original_span: (t0, period),
    })
}

fn check_raw(raw_times: &[f64]) -> Result<()> {
    if raw_times.len() < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 time points, got {}",
            raw_times.len()
        )));
    }
    if raw_times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidGrid("non-finite time point".into()));
    }
    if raw_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("time points not strictly increasing".into()));
    }
    Ok(())
}

/// One observed curve sampled on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub id: String,
    pub values: Vec<f64>,
}

impl Signal {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("signal contains non-finite values".into()));
        }
        Ok(Self {
            id: id.into(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl AsRef<[f64]> for Signal {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Parameters `(A, α, β, ω)` of a single FMM wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmmWave {
    pub amplitude: f64,
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
}

impl FmmWave {
    /// Validated constructor; angles are wrapped into `[0, 2π)`.
    ///
    /// A zero amplitude is accepted: backfitting reports a wave it could not
    /// improve on as absent that way.
    pub fn new(amplitude: f64, alpha: f64, beta: f64, omega: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "amplitude must be non-negative, got {amplitude}"
            )));
        }
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidParameter("non-finite angle".into()));
        }
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidParameter(format!("omega must lie in [0, 1], got {omega}")));
        }
        Ok(Self {
            amplitude,
            alpha: wrap_angle(alpha),
            beta: wrap_angle(beta),
            omega,
        })
    }

    /// Evaluates the wave at `t`.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.beta + mobius_phase(t, self.alpha, self.omega)).cos()
    }
}

/// Transformed phase `2·atan2(ω·sin((t−α)/2), cos((t−α)/2))`.
#[inline]
pub fn mobius_phase(t: f64, alpha: f64, omega: f64) -> f64 {
    let (s, c) = ((t - alpha) / 2.0).sin_cos();
    2.0 * (omega * s).atan2(c)
}

/// Evaluates a single wave at `t`.
pub fn eval_wave(wave: &FmmWave, t: f64) -> f64 {
    wave.eval(t)
}

/// Intercept plus a sum of FMM waves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FmmModelRepr", try_from = "FmmModelRepr")]
pub struct FmmModel {
    pub intercept: f64,
    pub waves: Vec<FmmWave>,
}

/// On-disk shape: the intercept plus one list per wave parameter.
#[derive(Serialize, Deserialize)]
struct FmmModelRepr {
    #[serde(rename = "M")]
    intercept: f64,
    #[serde(rename = "A")]
    amplitude: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    omega: Vec<f64>,
}

impl From<FmmModel> for FmmModelRepr {
    fn from(m: FmmModel) -> Self {
        Self {
            intercept: m.intercept,
            amplitude: m.waves.iter().map(|w| w.amplitude).collect(),
            alpha: m.waves.iter().map(|w| w.alpha).collect(),
            beta: m.waves.iter().map(|w| w.beta).collect(),
            omega: m.waves.iter().map(|w| w.omega).collect(),
        }
    }
}

impl TryFrom<FmmModelRepr> for FmmModel {
    type Error = Error;

    fn try_from(r: FmmModelRepr) -> Result<Self> {
        let m = r.amplitude.len();
        if r.alpha.len() != m || r.beta.len() != m || r.omega.len() != m {
            return Err(Error::Parse("wave parameter lists differ in length".into()));
        }
        let waves = (0..m)
            .map(|j| FmmWave::new(r.amplitude[j], r.alpha[j], r.beta[j], r.omega[j]))
            .collect::<Result<Vec<_>>>()?;
        FmmModel::new(r.intercept, waves)
    }
}

impl FmmModel {
    pub fn new(intercept: f64, waves: Vec<FmmWave>) -> Result<Self> {
        if waves.is_empty() {
            return Err(Error::InvalidParameter("an FMM model needs at least one wave".into()));
        }
        if !intercept.is_finite() {
            return Err(Error::InvalidParameter("non-finite intercept".into()));
        }
        Ok(Self { intercept, waves })
    }

    /// Number of waves.
    pub fn order(&self) -> usize {
        self.waves.len()
    }

    pub fn eval_at(&self, t: f64) -> f64 {
        self.intercept + self.waves.iter().map(|w| w.eval(t)).sum::<f64>()
    }

    /// Mean curve on every grid point.
    pub fn eval(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.points().iter().map(|&t| self.eval_at(t)).collect()
    }
}

/// Evaluates `M + Σ W_J(t)` on the grid.
pub fn eval_model(model: &FmmModel, grid: &TimeGrid) -> Vec<f64> {
    model.eval(grid)
}

/// Puts a model in identifiable form: the largest-amplitude wave first, the
/// rest in increasing cyclic order of `α` starting from the first wave's `α`.
///
/// Amplitude ties go to the smaller `α`, then the smaller `β`.
pub fn canonicalize(model: &FmmModel) -> FmmModel {
    let mut waves: Vec<FmmWave> = model
        .waves
        .iter()
        .map(|w| FmmWave {
            alpha: wrap_angle(w.alpha),
            beta: wrap_angle(w.beta),
            ..*w
        })
        .collect();

    let lead = waves
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            a.amplitude
                .total_cmp(&b.amplitude)
                .then_with(|| b.alpha.total_cmp(&a.alpha))
                .then_with(|| b.beta.total_cmp(&a.beta))
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let first = waves.remove(lead);

    waves.sort_by(|a, b| {
        let ka = wrap_angle(a.alpha - first.alpha);
        let kb = wrap_angle(b.alpha - first.alpha);
        ka.total_cmp(&kb)
            .then_with(|| a.beta.total_cmp(&b.beta))
            .then_with(|| b.amplitude.partial_cmp(&a.amplitude).unwrap_or(Ordering::Equal))
    });
    waves.insert(0, first);

    FmmModel {
        intercept: model.intercept,
        waves,
    }
}
