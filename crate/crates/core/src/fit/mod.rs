//! Least-squares estimation of single- and multi-wave FMM models.
//!
//! For fixed `(α, ω)` the single-wave model is linear in `(M, δ, γ)`:
//! `y ≈ M + δ·cos t* + γ·sin t*`, with `t*` the Möbius-transformed phase. The
//! fitter scans a precomputed `(α, ω)` grid, solving that linear problem in
//! closed form for each cell, then polishes the best cell with Nelder–Mead.
//! Multi-wave models are grown one wave at a time; each stage is fitted by
//! backfitting single waves on partial residuals. Every fit ends with a joint
//! Levenberg–Marquardt refinement of all parameters.

mod polish;
mod simplex;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{canonicalize, wrap_angle, FmmModel, FmmWave, TimeGrid};
use simplex::SimplexOptions;

/// Lower bound on `ω` during refinement.
pub const OMEGA_MIN: f64 = 0.005;

/// Number of grid local minima polished by Nelder–Mead.
const REFINE_STARTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub alpha_grid_size: usize,
    pub omega_grid: Vec<f64>,
    pub backfit_max_passes: usize,
    /// Backfitting stops when a full pass improves the RSS by less than this
    /// fraction.
    pub backfit_rel_tol: f64,
    pub refine: bool,
    /// Finish each fit with a joint Levenberg–Marquardt refinement.
    #[serde(default = "enabled")]
    pub polish: bool,
}

fn enabled() -> bool {
    true
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha_grid_size: 48,
            omega_grid: log_spaced(0.01, 1.0, 24),
            backfit_max_passes: 10,
            backfit_rel_tol: 1e-4,
            refine: true,
            polish: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid_size < 4 {
            return Err(Error::InvalidParameter(format!(
                "alpha_grid_size must be at least 4, got {}",
                self.alpha_grid_size
            )));
        }
        if self.omega_grid.is_empty() {
            return Err(Error::InvalidParameter("omega_grid is empty".into()));
        }
        if let Some(w) = self.omega_grid.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
            return Err(Error::InvalidParameter(format!("omega grid value {w} outside (0, 1]")));
        }
        if !(self.backfit_rel_tol > 0.0) {
            return Err(Error::InvalidParameter("backfit_rel_tol must be positive".into()));
        }
        if self.backfit_max_passes == 0 {
            return Err(Error::InvalidParameter("backfit_max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// `n` values geometrically spaced on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    v[n - 1] = hi;
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FmmModel,
    pub rss: f64,
    pub r_squared: f64,
    pub passes_used: usize,
    /// RSS after each completed backfitting pass.
    pub rss_history: Vec<f64>,
}

/// Single-wave least-squares solution for one `(α, ω)`.
#[derive(Debug, Clone, Copy)]
struct WaveSolve {
    alpha: f64,
    omega: f64,
    intercept: f64,
    delta: f64,
    gamma: f64,
    rss: f64,
}

impl WaveSolve {
    fn wave(&self) -> FmmWave {
        let amplitude = self.delta.hypot(self.gamma);
        let beta = if amplitude > 0.0 {
            wrap_angle((-self.gamma).atan2(self.delta))
        } else {
            0.0
        };
        FmmWave {
            amplitude,
            alpha: wrap_angle(self.alpha),
            beta,
            omega: self.omega,
        }
    }
}

/// Sums of the centered regressors for one grid cell.
#[derive(Debug, Clone, Copy)]
struct CellMoments {
    mean_c: f64,
    mean_s: f64,
    scc: f64,
    scs: f64,
    sss: f64,
}

/// Solves the centered 2×2 normal equations, falling back to a single
/// regressor when they are ill-conditioned.
fn solve_pair(m: &CellMoments, syc: f64, sys: f64) -> (f64, f64) {
    let det = m.scc * m.sss - m.scs * m.scs;
    let tiny = 1e-14;
    if det > 1e-12 * m.scc * m.sss && det > 0.0 {
        ((m.sss * syc - m.scs * sys) / det, (m.scc * sys - m.scs * syc) / det)
    } else if m.scc >= m.sss && m.scc > tiny {
        (syc / m.scc, 0.0)
    } else if m.sss > tiny {
        (0.0, sys / m.sss)
    } else {
        (0.0, 0.0)
    }
}

/// Cos/sin of the transformed phase at every grid point, from the
/// precomputed half-angle sines and cosines.
#[inline]
fn phase_basis(half_sin: &[f64], half_cos: &[f64], alpha: f64, omega: f64, cos_out: &mut [f64], sin_out: &mut [f64]) {
    let (sa, ca) = (alpha / 2.0).sin_cos();
    for j in 0..half_sin.len() {
        // (t - α)/2 via angle subtraction
        let sh = half_sin[j] * ca - half_cos[j] * sa;
        let ch = half_cos[j] * ca + half_sin[j] * sa;
        let a = omega * sh;
        let r = a * a + ch * ch;
        if r > 0.0 {
            cos_out[j] = (ch * ch - a * a) / r;
            sin_out[j] = 2.0 * a * ch / r;
        } else {
            cos_out[j] = 1.0;
            sin_out[j] = 0.0;
        }
    }
}

/// Reusable fitter bound to one grid and configuration.
///
/// Construction precomputes the regressors of every `(α, ω)` grid cell, so a
/// fitter should be reused across many targets.
#[derive(Debug, Clone)]
pub struct FmmFitter {
    grid: TimeGrid,
    cfg: FitConfig,
    half_sin: Vec<f64>,
    half_cos: Vec<f64>,
    alphas: Vec<f64>,
    /// Centered cos/sin regressors, cell-major: `[cos(p), sin(p)]` per cell.
    basis: Vec<f64>,
    moments: Vec<CellMoments>,
}

impl FmmFitter {
    pub fn new(grid: &TimeGrid, cfg: &FitConfig) -> Result<Self> {
        cfg.validate()?;
        let p = grid.len();
        let half_sin: Vec<f64> = grid.points().iter().map(|t| (t / 2.0).sin()).collect();
        let half_cos: Vec<f64> = grid.points().iter().map(|t| (t / 2.0).cos()).collect();
        let alphas: Vec<f64> = (0..cfg.alpha_grid_size)
            .map(|i| TAU * i as f64 / cfg.alpha_grid_size as f64)
            .collect();

        let cells = alphas.len() * cfg.omega_grid.len();
        let mut basis = vec![0.0; cells * 2 * p];
        let mut moments = Vec::with_capacity(cells);
        for (ia, &alpha) in alphas.iter().enumerate() {
            for (iw, &omega) in cfg.omega_grid.iter().enumerate() {
                let cell = ia * cfg.omega_grid.len() + iw;
                let (c, s) = basis[cell * 2 * p..(cell + 1) * 2 * p].split_at_mut(p);
                phase_basis(&half_sin, &half_cos, alpha, omega, c, s);
                moments.push(center_pair(c, s));
            }
        }

        Ok(Self {
            grid: grid.clone(),
            cfg: cfg.clone(),
            half_sin,
            half_cos,
            alphas,
            basis,
            moments,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn config(&self) -> &FitConfig {
        &self.cfg
    }

    fn check_target(&self, target: &[f64], min_points: usize) -> Result<()> {
        let p = self.grid.len();
        if target.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: target.len(),
            });
        }
        if p < min_points {
            return Err(Error::InsufficientData(format!(
                "{p} samples cannot identify a model needing at least {min_points}"
            )));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("target contains non-finite values".into()));
        }
        let (_, sst) = mean_and_sst(target);
        let scale = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sst <= (f64::EPSILON * scale).powi(2) * p as f64 {
            return Err(Error::DegenerateTarget("target has zero variance".into()));
        }
        Ok(())
    }

    /// Best single-wave fit.
    pub fn fit_single(&self, target: &[f64]) -> Result<FitResult> {
        self.check_target(target, 5)?;
        let sol = self.solve_single(target);
        let mut model = FmmModel {
            intercept: sol.intercept,
            waves: vec![sol.wave()],
        };
        if self.cfg.polish {
            let (polished, polished_rss) = polish::polish(self.grid.points(), target, &model);
            if polish::acceptable(polished_rss, sol.rss) {
                model = polished;
            }
        }
        Ok(self.finish(target, model, 1, vec![]))
    }

    /// Backfitted `m`-wave fit.
    pub fn fit_multi(&self, target: &[f64], m: usize) -> Result<FitResult> {
        self.fit_multi_from(target, m, None)
    }

    /// Backfitted `m`-wave fit, optionally starting from an existing model.
    ///
    /// With a starting model every wave update is accepted only if it lowers
    /// the RSS, so the result never fits worse than `init`.
    pub fn fit_multi_from(&self, target: &[f64], m: usize, init: Option<&FmmModel>) -> Result<FitResult> {
        if m == 0 {
            return Err(Error::InvalidParameter("model order m must be at least 1".into()));
        }
        self.check_target(target, 4 * m + 1)?;
        if let Some(model) = init {
            if model.order() != m {
                return Err(Error::InvalidParameter(format!(
                    "initial model has {} waves, expected {m}",
                    model.order()
                )));
            }
        }
        if m == 1 && init.is_none() {
            return self.fit_single(target);
        }

        let p = target.len();
        // a cold start grows the model one wave at a time, so that adding a
        // wave can never increase the RSS
        let mut waves: Vec<Option<FmmWave>> = match init {
            Some(model) => model.waves.iter().copied().map(Some).collect(),
            None => {
                let smaller = self.fit_multi(target, m - 1)?;
                std::iter::once(None)
                    .chain(smaller.model.waves.into_iter().map(Some))
                    .collect()
            }
        };
        let mut curves: Vec<Vec<f64>> = waves
            .iter()
            .map(|w| match w {
                Some(w) => self.grid.points().iter().map(|&t| w.eval(t)).collect(),
                None => vec![0.0; p],
            })
            .collect();
        let (mut intercept, mut rss) = intercept_and_rss(target, &curves);

        let mut history = Vec::new();
        let mut partial = vec![0.0; p];
        let mut passes = 0;
        while passes < self.cfg.backfit_max_passes {
            passes += 1;
            let before = rss;
            for j in 0..m {
                for i in 0..p {
                    let others: f64 = curves
                        .iter()
                        .enumerate()
                        .filter(|(l, _)| *l != j)
                        .map(|(_, c)| c[i])
                        .sum();
                    partial[i] = target[i] - others;
                }
                let sol = self.solve_single(&partial);
                if waves[j].is_none() || sol.rss < rss {
                    let wave = sol.wave();
                    curves[j] = self.grid.points().iter().map(|&t| wave.eval(t)).collect();
                    waves[j] = Some(wave);
                    let (mi, r) = intercept_and_rss(target, &curves);
                    intercept = mi;
                    rss = r;
                }
            }
            history.push(rss);
            let improvement = before - rss;
            if before <= 0.0 || improvement <= self.cfg.backfit_rel_tol * before {
                break;
            }
        }

        let waves = waves
            .into_iter()
            .map(|w| {
                w.unwrap_or(FmmWave {
                    amplitude: 0.0,
                    alpha: 0.0,
                    beta: 0.0,
                    omega: 1.0,
                })
            })
            .collect();
        let mut model = FmmModel { intercept, waves };
        if self.cfg.polish {
            let (polished, polished_rss) = polish::polish(self.grid.points(), target, &model);
            if polish::acceptable(polished_rss, rss) {
                model = polished;
            }
        }
        Ok(self.finish(target, canonicalize(&model), passes, history))
    }

    fn finish(&self, target: &[f64], model: FmmModel, passes: usize, mut history: Vec<f64>) -> FitResult {
        let fitted = model.eval(&self.grid);
        let rss: f64 = target.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum();
        let (_, sst) = mean_and_sst(target);
        if history.is_empty() {
            history.push(rss);
        }
        FitResult {
            model,
            rss,
            r_squared: 1.0 - rss / sst,
            passes_used: passes,
            rss_history: history,
        }
    }

    /// Grid scan followed by optional refinement; never fails.
    fn solve_single(&self, target: &[f64]) -> WaveSolve {
        let p = target.len();
        let (mean, syy) = mean_and_sst(target);
        let centered: Vec<f64> = target.iter().map(|y| y - mean).collect();
        let n_omega = self.cfg.omega_grid.len();

        let mut cell_rss = Vec::with_capacity(self.moments.len());
        for (cell, mom) in self.moments.iter().enumerate() {
            let block = &self.basis[cell * 2 * p..(cell + 1) * 2 * p];
            let (c, s) = block.split_at(p);
            let mut syc = 0.0;
            let mut sys = 0.0;
            for j in 0..p {
                syc += centered[j] * c[j];
                sys += centered[j] * s[j];
            }
            let (delta, gamma) = solve_pair(mom, syc, sys);
            cell_rss.push((syy - delta * syc - gamma * sys).max(0.0));
        }

        // lowest RSS, then lowest α index, then lowest ω index
        let best_cell = (0..cell_rss.len())
            .min_by(|&a, &b| cell_rss[a].total_cmp(&cell_rss[b]).then(a.cmp(&b)))
            .expect("grid has at least one cell");
        // re-evaluate directly to avoid cancellation in syy - δ·syc - γ·sys
        let at_cell = |cell: usize| {
            self.solve_at(
                &centered,
                mean,
                self.alphas[cell / n_omega],
                self.cfg.omega_grid[cell % n_omega],
            )
        };
        let grid_best = at_cell(best_cell);
        if !self.cfg.refine {
            return grid_best;
        }

        let mut starts = self.local_minima(&cell_rss);
        starts.truncate(REFINE_STARTS);
        if !starts.contains(&best_cell) {
            starts.insert(0, best_cell);
        }
        let mut best = grid_best;
        for cell in starts {
            let refined = self.refine(&centered, mean, at_cell(cell), cell % n_omega);
            if refined.rss < best.rss {
                best = refined;
            }
        }
        best
    }

    /// Grid cells whose RSS is below every neighbour's, best first.
    /// `α` wraps around; `ω` does not. Cells at `ω = 1`, where `α` is not
    /// identified, are skipped.
    fn local_minima(&self, cell_rss: &[f64]) -> Vec<usize> {
        let n_alpha = self.alphas.len() as isize;
        let n_omega = self.cfg.omega_grid.len() as isize;
        let identified = |iw: isize| self.cfg.omega_grid[iw as usize] < 1.0;
        let mut minima: Vec<usize> = (0..cell_rss.len())
            .filter(|&cell| {
                let ia = (cell as isize) / n_omega;
                let iw = (cell as isize) % n_omega;
                if !identified(iw) {
                    return false;
                }
                let v = cell_rss[cell];
                (-1..=1).all(|da| {
                    (-1..=1).all(|dw| {
                        let w = iw + dw;
                        if (da == 0 && dw == 0) || w < 0 || w >= n_omega || !identified(w) {
                            return true;
                        }
                        let a = (ia + da).rem_euclid(n_alpha);
                        let other = (a * n_omega + w) as usize;
                        let u = cell_rss[other];
                        // near-ties (e.g. the ω = 1 ridge, flat in α) keep only
                        // their lowest-index cell
                        if (v - u).abs() <= 1e-9 * v.max(u) {
                            cell < other
                        } else {
                            v < u
                        }
                    })
                })
            })
            .collect();
        minima.sort_by(|&a, &b| cell_rss[a].total_cmp(&cell_rss[b]).then(a.cmp(&b)));
        minima
    }

    fn refine(&self, centered: &[f64], mean: f64, start: WaveSolve, omega_idx: usize) -> WaveSolve {
        let grid = &self.cfg.omega_grid;
        let omega_step = if omega_idx + 1 < grid.len() {
            grid[omega_idx + 1] - grid[omega_idx]
        } else if omega_idx > 0 {
            grid[omega_idx - 1] - grid[omega_idx]
        } else {
            -0.1
        };
        let alpha_step = TAU / self.cfg.alpha_grid_size as f64;

        let objective = |x: [f64; 2]| self.solve_at(centered, mean, x[0], x[1].clamp(OMEGA_MIN, 1.0)).rss;
        let opts = SimplexOptions {
            max_evals: 400,
            xtol: 1e-9,
        };
        let mut x = [start.alpha, start.omega];
        let mut steps = [alpha_step, omega_step];
        for _ in 0..2 {
            let r = simplex::minimize(objective, x, steps, opts);
            x = r.x;
            steps = [steps[0] * 0.1, -steps[1] * 0.1];
        }
        let refined = self.solve_at(centered, mean, wrap_angle(x[0]), x[1].clamp(OMEGA_MIN, 1.0));
        if refined.rss <= start.rss {
            refined
        } else {
            start
        }
    }

    /// Exact linear solve and residual for one `(α, ω)`.
    fn solve_at(&self, centered: &[f64], mean: f64, alpha: f64, omega: f64) -> WaveSolve {
        let p = centered.len();
        let mut c = [0.0; 64];
        let mut s = [0.0; 64];
        let mut c_heap;
        let mut s_heap;
        let (c, s): (&mut [f64], &mut [f64]) = if p <= 64 {
            (&mut c[..p], &mut s[..p])
        } else {
            c_heap = vec![0.0; p];
            s_heap = vec![0.0; p];
            (&mut c_heap[..], &mut s_heap[..])
        };
        phase_basis(&self.half_sin, &self.half_cos, alpha, omega, c, s);
        let mom = center_pair(c, s);
        let mut syc = 0.0;
        let mut sys = 0.0;
        for j in 0..p {
            syc += centered[j] * c[j];
            sys += centered[j] * s[j];
        }
        let (delta, gamma) = solve_pair(&mom, syc, sys);
        let rss = (0..p)
            .map(|j| (centered[j] - delta * c[j] - gamma * s[j]).powi(2))
            .sum();
        WaveSolve {
            alpha,
            omega,
            intercept: mean - delta * mom.mean_c - gamma * mom.mean_s,
            delta,
            gamma,
            rss,
        }
    }
}

/// Centers both regressors in place and returns their moments.
fn center_pair(c: &mut [f64], s: &mut [f64]) -> CellMoments {
    let n = c.len() as f64;
    let mean_c = c.iter().sum::<f64>() / n;
    let mean_s = s.iter().sum::<f64>() / n;
    let (mut scc, mut scs, mut sss) = (0.0, 0.0, 0.0);
    for (cv, sv) in c.iter_mut().zip(s.iter_mut()) {
        *cv -= mean_c;
        *sv -= mean_s;
        scc += *cv * *cv;
        scs += *cv * *sv;
        sss += *sv * *sv;
    }
    CellMoments {
        mean_c,
        mean_s,
        scc,
        scs,
        sss,
    }
}

fn mean_and_sst(y: &[f64]) -> (f64, f64) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (mean, y.iter().map(|v| (v - mean).powi(2)).sum())
}

/// Optimal intercept for the given wave curves, and the resulting RSS.
fn intercept_and_rss(target: &[f64], curves: &[Vec<f64>]) -> (f64, f64) {
    let resid: Vec<f64> = (0..target.len())
        .map(|i| target[i] - curves.iter().map(|c| c[i]).sum::<f64>())
        .collect();
    mean_and_sst(&resid)
}

/// Fits a single FMM wave plus intercept to `target`.
pub fn fit_fmm1(target: &[f64], grid: &TimeGrid, cfg: &FitConfig) -> Result<FitResult> {
    FmmFitter::new(grid, cfg)?.fit_single(target)
}

/// Fits an `m`-wave FMM model to `target` by backfitting.
pub fn fit_fmm_m(target: &[f64], grid: &TimeGrid, m: usize, cfg: &FitConfig) -> Result<FitResult> {
    FmmFitter::new(grid, cfg)?.fit_multi(target, m)
}
