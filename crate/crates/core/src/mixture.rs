//! The MixFMM mixture: isotropic Gaussian components whose means are FMM
//! curves, estimated by EM.
//!
//! The M-step fits each component's FMM model to its responsibility-weighted
//! mean curve. Because that fit is an inexact nonlinear solve, a new `θ_k` is
//! only accepted when it does not increase `||x̄_k − μ(θ_k)||²` relative to
//! the previous one, which keeps the log-likelihood non-decreasing.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitConfig, FmmFitter};
use crate::signal::{FmmModel, Signal, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Convergence threshold on the relative change of the log-likelihood.
    pub rel_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub homoscedastic: bool,
    /// σ floor as a fraction of the root-mean-square of the data.
    pub sigma_floor_rel: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            rel_tol: 1e-6,
            n_starts: 10,
            seed: 0,
            homoscedastic: true,
            sigma_floor_rel: 1e-8,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.n_starts == 0 {
            return Err(Error::InvalidParameter(
                "max_iter and n_starts must be positive".into(),
            ));
        }
        if !(self.rel_tol > 0.0) || !(self.sigma_floor_rel > 0.0) {
            return Err(Error::InvalidParameter(
                "rel_tol and sigma_floor_rel must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Fitted mixture parameters plus fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixFmmModel {
    #[serde(rename = "K")]
    pub k: usize,
    pub m: usize,
    pub gammas: Vec<f64>,
    pub thetas: Vec<FmmModel>,
    /// One entry per component, or a single shared entry when homoscedastic.
    pub sigmas: Vec<f64>,
    pub homoscedastic: bool,
    pub log_likelihood: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub config: EmConfig,
    pub fit_config: FitConfig,
}

impl MixFmmModel {
    /// Noise standard deviation of component `k`.
    pub fn sigma(&self, k: usize) -> f64 {
        if self.homoscedastic {
            self.sigmas[0]
        } else {
            self.sigmas[k]
        }
    }

    /// Component mean curves on the grid.
    pub fn means(&self, grid: &TimeGrid) -> Vec<Vec<f64>> {
        self.thetas.iter().map(|t| t.eval(grid)).collect()
    }

    /// Relabels components: new component `j` is old component `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        out.gammas = perm.iter().map(|&k| self.gammas[k]).collect();
        out.thetas = perm.iter().map(|&k| self.thetas[k].clone()).collect();
        if !self.homoscedastic {
            out.sigmas = perm.iter().map(|&k| self.sigmas[k]).collect();
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        if model.gammas.len() != model.k || model.thetas.len() != model.k {
            return Err(Error::Parse("component count does not match K".into()));
        }
        let expected_sigmas = if model.homoscedastic { 1 } else { model.k };
        if model.sigmas.len() != expected_sigmas {
            return Err(Error::Parse("sigma count does not match the variance model".into()));
        }
        Ok(model)
    }
}

/// Responsibilities `τ_ik`, stored row-major (`n` rows, `K` columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    n: usize,
    k: usize,
    tau: Vec<f64>,
}

impl Posterior {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidParameter("responsibility rows must be non-empty and equal length".into()));
        }
        Ok(Self {
            n: rows.len(),
            k,
            tau: rows.concat(),
        })
    }

    /// Hard 0/1 responsibilities encoding a partition.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidParameter(format!("label {bad} out of range for K = {k}")));
        }
        let mut tau = vec![0.0; labels.len() * k];
        for (i, &l) in labels.iter().enumerate() {
            tau[i * k + l] = 1.0;
        }
        Ok(Self {
            n: labels.len(),
            k,
            tau,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.tau[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.tau[i * self.k + k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.tau.chunks(self.k)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for row in self.rows() {
            for (s, t) in sums.iter_mut().zip(row) {
                *s += t;
            }
        }
        sums
    }
}

/// `log N(x; μ(t; θ), σ² I_p)`.
pub fn log_density(x: &Signal, theta: &FmmModel, sigma: f64, grid: &TimeGrid) -> f64 {
    let mu = theta.eval(grid);
    log_density_sq(x.len(), sq_dist(&x.values, &mu), sigma)
}

/// Isotropic Gaussian log-density from a squared residual norm.
pub fn log_density_sq(p: usize, sq_norm: f64, sigma: f64) -> f64 {
    let var = sigma * sigma;
    -0.5 * p as f64 * (TAU * var).ln() - sq_norm / (2.0 * var)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Per-signal log terms `log γ_k + log N(x_i; μ_k, σ_k²)` and the resulting
/// responsibilities and log-likelihood.
fn expectation(signals: &[Signal], means: &[Vec<f64>], sigmas: &[f64], gammas: &[f64]) -> (Posterior, f64) {
    let k = means.len();
    let sigma = |c: usize| if sigmas.len() == 1 { sigmas[0] } else { sigmas[c] };
    let mut tau = Vec::with_capacity(signals.len() * k);
    let mut loglik = 0.0;
    let mut terms = vec![0.0; k];
    for x in signals {
        for c in 0..k {
            terms[c] = gammas[c].ln() + log_density_sq(x.len(), sq_dist(&x.values, &means[c]), sigma(c));
        }
        let lse = log_sum_exp(&terms);
        loglik += lse;
        tau.extend(terms.iter().map(|t| (t - lse).exp()));
    }
    (
        Posterior {
            n: signals.len(),
            k,
            tau,
        },
        loglik,
    )
}

/// Posterior probabilities of each signal under each component.
pub fn e_step(signals: &[Signal], model: &MixFmmModel, grid: &TimeGrid) -> Posterior {
    expectation(signals, &model.means(grid), &model.sigmas, &model.gammas).0
}

/// Mixture log-likelihood `Σ_i log Σ_k γ_k N(x_i; μ_k, σ_k² I)`.
pub fn log_likelihood(signals: &[Signal], model: &MixFmmModel, grid: &TimeGrid) -> f64 {
    expectation(signals, &model.means(grid), &model.sigmas, &model.gammas).1
}

/// Updated parameters from one M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub thetas: Vec<FmmModel>,
    pub sigmas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Components reseeded because their responsibility mass vanished.
    pub reseeded: Vec<usize>,
}

/// One unguarded M-step from the given responsibilities.
pub fn m_step(
    signals: &[Signal],
    tau: &Posterior,
    grid: &TimeGrid,
    m: usize,
    cfg: &EmConfig,
    fit_cfg: &FitConfig,
) -> Result<MStep> {
    check_signals(signals, grid)?;
    let fitter = FmmFitter::new(grid, fit_cfg)?;
    let floor = sigma_floor(signals, cfg);
    maximization(signals, tau, &fitter, m, cfg.homoscedastic, floor, None)
}

fn maximization(
    signals: &[Signal],
    tau: &Posterior,
    fitter: &FmmFitter,
    m: usize,
    homoscedastic: bool,
    floor: f64,
    previous: Option<&[FmmModel]>,
) -> Result<MStep> {
    let n = signals.len();
    let p = fitter.grid().len();
    let k = tau.k();
    if tau.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: tau.n(),
        });
    }
    let mass = tau.column_sums();
    let empty_mass = 1e-8 * n as f64;

    let mut thetas = Vec::with_capacity(k);
    let mut reseeded = Vec::new();
    for c in 0..k {
        if mass[c] < empty_mass {
            reseeded.push(c);
            thetas.push(fitter.fit_multi(&signals[least_claimed(tau)].values, m)?.model);
            continue;
        }
        let mut mean = vec![0.0; p];
        for (i, x) in signals.iter().enumerate() {
            let w = tau.get(i, c);
            if w != 0.0 {
                for (acc, v) in mean.iter_mut().zip(&x.values) {
                    *acc += w * v;
                }
            }
        }
        mean.iter_mut().for_each(|v| *v /= mass[c]);

        let prev = previous.map(|ps| &ps[c]);
        let candidate = fitter.fit_multi_from(&mean, m, prev)?;
        let theta = match prev {
            Some(old) if sq_dist(&mean, &old.eval(fitter.grid())) < candidate.rss => old.clone(),
            _ => candidate.model,
        };
        thetas.push(theta);
    }

    let means: Vec<Vec<f64>> = thetas.iter().map(|t| t.eval(fitter.grid())).collect();
    let mut weighted_sq = vec![0.0; k];
    for (i, x) in signals.iter().enumerate() {
        for c in 0..k {
            let w = tau.get(i, c);
            if w != 0.0 {
                weighted_sq[c] += w * sq_dist(&x.values, &means[c]);
            }
        }
    }
    let pooled = (weighted_sq.iter().sum::<f64>() / (n * p) as f64).sqrt().max(floor);
    let sigmas = if homoscedastic {
        vec![pooled]
    } else {
        (0..k)
            .map(|c| {
                if reseeded.contains(&c) {
                    pooled
                } else {
                    (weighted_sq[c] / (p as f64 * mass[c])).sqrt().max(floor)
                }
            })
            .collect()
    };

    let mut gammas: Vec<f64> = mass.iter().map(|w| w / n as f64).collect();
    if !reseeded.is_empty() {
        for &c in &reseeded {
            gammas[c] = 1.0 / n as f64;
        }
        let total: f64 = gammas.iter().sum();
        gammas.iter_mut().for_each(|g| *g /= total);
    }

    Ok(MStep {
        thetas,
        sigmas,
        gammas,
        reseeded,
    })
}

/// Signal whose largest responsibility is smallest (lowest index on ties).
fn least_claimed(tau: &Posterior) -> usize {
    tau.rows()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn sigma_floor(signals: &[Signal], cfg: &EmConfig) -> f64 {
    let count: usize = signals.iter().map(Signal::len).sum();
    let sum_sq: f64 = signals.iter().flat_map(|s| &s.values).map(|v| v * v).sum();
    let rms = (sum_sq / count.max(1) as f64).sqrt();
    if rms > 0.0 {
        cfg.sigma_floor_rel * rms
    } else {
        cfg.sigma_floor_rel
    }
}

fn check_signals(signals: &[Signal], grid: &TimeGrid) -> Result<()> {
    if let Some(s) = signals.iter().find(|s| s.len() != grid.len()) {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: s.len(),
        });
    }
    Ok(())
}

/// Argmax of each responsibility row; ties go to the lowest component index.
pub fn hard_labels(tau: &Posterior) -> Vec<usize> {
    tau.rows()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Trace of one EM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub log_likelihood: f64,
    /// Log-likelihood of the initial parameters followed by the value after
    /// every E+M cycle.
    pub history: Vec<f64>,
    /// Iterations at which an empty component was reseeded. The
    /// log-likelihood is not guaranteed to increase across those.
    pub reseeds: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// Result of a multi-start EM fit: the best run plus every run's trace.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: MixFmmModel,
    pub posterior: Posterior,
    pub runs: Vec<RunSummary>,
}

impl EmFit {
    pub fn labels(&self) -> Vec<usize> {
        hard_labels(&self.posterior)
    }
}

/// Fits a `K`-component MixFMM_m model by EM with `cfg.n_starts` random
/// initial partitions, keeping the run with the highest log-likelihood.
pub fn fit_em(
    signals: &[Signal],
    grid: &TimeGrid,
    k: usize,
    m: usize,
    cfg: &EmConfig,
    fit_cfg: &FitConfig,
) -> Result<EmFit> {
    let fitter = FmmFitter::new(grid, fit_cfg)?;
    fit_em_with(signals, &fitter, k, m, cfg)
}

/// As [`fit_em`], reusing a prepared fitter.
pub fn fit_em_with(signals: &[Signal], fitter: &FmmFitter, k: usize, m: usize, cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if signals.len() <= k {
        return Err(Error::InsufficientData(format!(
            "{} signals cannot support {k} clusters",
            signals.len()
        )));
    }
    check_signals(signals, fitter.grid())?;
    let floor = sigma_floor(signals, cfg);
    // every start is identical when there is a single component
    let starts = if k == 1 { 1 } else { cfg.n_starts };

    let mut best: Option<(MixFmmModel, Posterior)> = None;
    let mut runs = Vec::with_capacity(starts);
    for run in 0..starts {
        let (model, posterior, summary) = run_em(signals, fitter, k, m, cfg, floor, run)?;
        if best.as_ref().is_none_or(|(b, _)| model.log_likelihood > b.log_likelihood) {
            best = Some((model, posterior));
        }
        runs.push(summary);
    }
    let (model, posterior) = best.expect("at least one start");
    Ok(EmFit {
        model,
        posterior,
        runs,
    })
}

/// Runs a single EM from a given initial partition instead of random ones.
pub fn fit_em_from_labels(
    signals: &[Signal],
    fitter: &FmmFitter,
    labels: &[usize],
    k: usize,
    m: usize,
    cfg: &EmConfig,
) -> Result<EmFit> {
    cfg.validate()?;
    if k == 0 || signals.len() <= k {
        return Err(Error::InsufficientData(format!(
            "{} signals cannot support {k} clusters",
            signals.len()
        )));
    }
    if labels.len() != signals.len() {
        return Err(Error::DimensionMismatch {
            expected: signals.len(),
            found: labels.len(),
        });
    }
    check_signals(signals, fitter.grid())?;
    let floor = sigma_floor(signals, cfg);
    let (model, posterior, summary) = run_from_labels(signals, fitter, labels, k, m, cfg, floor, 0)?;
    Ok(EmFit {
        model,
        posterior,
        runs: vec![summary],
    })
}

fn run_em(
    signals: &[Signal],
    fitter: &FmmFitter,
    k: usize,
    m: usize,
    cfg: &EmConfig,
    floor: f64,
    run: usize,
) -> Result<(MixFmmModel, Posterior, RunSummary)> {
    let n = signals.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(run as u64);

    // random balanced partition, so that no initial cluster is empty
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut labels = vec![0; n];
    for (j, &i) in order.iter().enumerate() {
        labels[i] = j % k;
    }
    run_from_labels(signals, fitter, &labels, k, m, cfg, floor, run)
}

#[allow(clippy::too_many_arguments)]
fn run_from_labels(
    signals: &[Signal],
    fitter: &FmmFitter,
    labels: &[usize],
    k: usize,
    m: usize,
    cfg: &EmConfig,
    floor: f64,
    run: usize,
) -> Result<(MixFmmModel, Posterior, RunSummary)> {
    let hard = Posterior::from_labels(labels, k)?;
    let init = maximization(signals, &hard, fitter, m, cfg.homoscedastic, floor, None)?;

    let mut thetas = init.thetas;
    let mut sigmas = init.sigmas;
    let mut gammas = vec![1.0 / k as f64; k];

    let means = |thetas: &[FmmModel]| -> Vec<Vec<f64>> { thetas.iter().map(|t| t.eval(fitter.grid())).collect() };
    let (mut tau, mut loglik) = expectation(signals, &means(&thetas), &sigmas, &gammas);
    let mut history = vec![loglik];
    let mut reseeds = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iter {
        let step = maximization(signals, &tau, fitter, m, cfg.homoscedastic, floor, Some(&thetas))?;
        thetas = step.thetas;
        sigmas = step.sigmas;
        gammas = step.gammas;
        let (next_tau, next_loglik) = expectation(signals, &means(&thetas), &sigmas, &gammas);
        history.push(next_loglik);
        iterations = iter;
        let reseeded = !step.reseeded.is_empty();
        if reseeded {
            reseeds.push(iter);
        }
        let change = (next_loglik - loglik).abs() / next_loglik.abs().max(f64::MIN_POSITIVE);
        tau = next_tau;
        loglik = next_loglik;
        if !reseeded && change < cfg.rel_tol {
            converged = true;
            break;
        }
    }

    let model = MixFmmModel {
        k,
        m,
        gammas,
        thetas,
        sigmas,
        homoscedastic: cfg.homoscedastic,
        log_likelihood: loglik,
        n_iterations: iterations,
        converged,
        seed: cfg.seed,
        config: cfg.clone(),
        fit_config: fitter.config().clone(),
    };
    let summary = RunSummary {
        run,
        log_likelihood: loglik,
        history,
        reseeds,
        iterations,
        converged,
    };
    Ok((model, tau, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::FmmWave;

    fn constant_model(means: &[f64], sigma: f64, gammas: &[f64]) -> MixFmmModel {
        // a wave of zero amplitude makes μ constant at the intercept
        let flat = |m: f64| FmmModel::new(m, vec![FmmWave::new(0.0, 0.0, 0.0, 1.0).unwrap()]).unwrap();
        MixFmmModel {
            k: means.len(),
            m: 1,
            gammas: gammas.to_vec(),
            thetas: means.iter().map(|&m| flat(m)).collect(),
            sigmas: vec![sigma],
            homoscedastic: true,
            log_likelihood: 0.0,
            n_iterations: 0,
            converged: true,
            seed: 0,
            config: EmConfig::default(),
            fit_config: FitConfig::default(),
        }
    }

    #[test]
    fn log_density_examples() {
        let grid = TimeGrid::uniform(64).unwrap();
        let theta = FmmModel::new(0.3, vec![FmmWave::new(1.0, 1.0, 2.0, 0.4).unwrap()]).unwrap();
        let x = Signal::new("x", theta.eval(&grid)).unwrap();
        let expected = -32.0 * TAU.ln();
        assert!((log_density(&x, &theta, 1.0, &grid) - expected).abs() < 1e-12);

        let halved = log_density(&x, &theta, 2.0, &grid);
        assert!((log_density(&x, &theta, 1.0, &grid) - halved - 64.0 * 2f64.ln()).abs() < 1e-10);

        assert!((log_density_sq(1, 2.0, 1.0) - (-0.5 * TAU.ln() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn e_step_two_point_ratio() {
        let grid = TimeGrid::uniform(2).unwrap();
        // p = 2 here, so use mean offsets giving the same ratio as the p = 1 case
        let model = constant_model(&[0.0, 4.0], 1.0, &[0.5, 0.5]);
        let x = Signal::new("x", vec![0.0, 0.0]).unwrap();
        let tau = e_step(&[x], &model, &grid);
        let expected = 1.0 / (1.0 + (-16.0f64).exp());
        assert!((tau.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn e_step_symmetric_components() {
        let grid = TimeGrid::uniform(4).unwrap();
        let model = constant_model(&[1.0, 1.0], 0.5, &[0.5, 0.5]);
        let xs: Vec<Signal> = (0..5)
            .map(|i| Signal::new(i.to_string(), vec![i as f64; 4]).unwrap())
            .collect();
        let tau = e_step(&xs, &model, &grid);
        assert!(tau.rows().all(|r| r.iter().all(|&v| (v - 0.5).abs() < 1e-15)));

        let single = constant_model(&[1.0], 0.5, &[1.0]);
        assert!(e_step(&xs, &single, &grid).rows().all(|r| r == [1.0]));
    }

    #[test]
    fn hard_label_rules() {
        let tau = Posterior::from_rows(&[vec![0.1, 0.7, 0.2], vec![0.5, 0.5, 0.0]]).unwrap();
        assert_eq!(hard_labels(&tau), vec![1, 0]);
        let labels = vec![2, 0, 1, 1, 0];
        assert_eq!(hard_labels(&Posterior::from_labels(&labels, 3).unwrap()), labels);
    }

    #[test]
    fn fit_em_rejects_too_few_signals() {
        let grid = TimeGrid::uniform(16).unwrap();
        let xs: Vec<Signal> = (0..3)
            .map(|i| Signal::new(i.to_string(), (0..16).map(|j| (i * j) as f64).collect()).unwrap())
            .collect();
        let err = fit_em(&xs, &grid, 3, 1, &EmConfig::default(), &FitConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }
}
