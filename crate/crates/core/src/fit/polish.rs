//! Joint Levenberg–Marquardt refinement of all parameters of a multi-wave
//! model. Each wave is parameterised as `δ·cos φ + γ·sin φ` so the
//! amplitude/phase singularity at `A = 0` does not arise.

use nalgebra::{DMatrix, DVector};

use super::OMEGA_MIN;
use crate::signal::{canonicalize, wrap_angle, FmmModel, FmmWave};

const MAX_ITER: usize = 200;
const REL_TOL: f64 = 1e-12;
const STEP_TOL: f64 = 1e-12;
/// Relative RSS change treated as rounding noise.
const FLAT_TOL: f64 = 1e-13;

/// `(φ, ∂φ/∂α, ∂φ/∂ω)` of the Möbius phase at `t`.
fn phase(t: f64, alpha: f64, omega: f64) -> (f64, f64, f64) {
    let (s, c) = ((t - alpha) / 2.0).sin_cos();
    let denom = c * c + omega * omega * s * s;
    (2.0 * (omega * s).atan2(c), -omega / denom, 2.0 * s * c / denom)
}

fn to_params(model: &FmmModel) -> Vec<f64> {
    let mut x = vec![model.intercept];
    for w in &model.waves {
        x.extend([w.amplitude * w.beta.cos(), -w.amplitude * w.beta.sin(), w.alpha, w.omega]);
    }
    x
}

fn to_model(x: &[f64]) -> FmmModel {
    let waves = x[1..]
        .chunks(4)
        .map(|w| {
            let amplitude = w[0].hypot(w[1]);
            let beta = if amplitude > 0.0 { wrap_angle((-w[1]).atan2(w[0])) } else { 0.0 };
            FmmWave {
                amplitude,
                alpha: wrap_angle(w[2]),
                beta,
                omega: w[3],
            }
        })
        .collect();
    FmmModel {
        intercept: x[0],
        waves,
    }
}

fn residuals(points: &[f64], target: &[f64], x: &[f64]) -> (Vec<f64>, f64) {
    let r: Vec<f64> = points
        .iter()
        .zip(target)
        .map(|(&t, y)| {
            let f = x[0]
                + x[1..]
                    .chunks(4)
                    .map(|w| {
                        let (phi, _, _) = phase(t, w[2], w[3]);
                        w[0] * phi.cos() + w[1] * phi.sin()
                    })
                    .sum::<f64>();
            y - f
        })
        .collect();
    let rss = r.iter().map(|v| v * v).sum();
    (r, rss)
}

fn jacobian(points: &[f64], x: &[f64]) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(points.len(), x.len());
    for (i, &t) in points.iter().enumerate() {
        jac[(i, 0)] = 1.0;
        for (j, w) in x[1..].chunks(4).enumerate() {
            let (phi, d_alpha, d_omega) = phase(t, w[2], w[3]);
            let (sin, cos) = phi.sin_cos();
            let d_phi = -w[0] * sin + w[1] * cos;
            let col = 1 + 4 * j;
            jac[(i, col)] = cos;
            jac[(i, col + 1)] = sin;
            jac[(i, col + 2)] = d_phi * d_alpha;
            jac[(i, col + 3)] = d_phi * d_omega;
        }
    }
    jac
}

fn gradient_norm(points: &[f64], x: &[f64], r: &[f64]) -> f64 {
    (jacobian(points, x).transpose() * DVector::from_column_slice(r)).norm()
}

/// Whether a polished fit may replace one with RSS `rss`.
pub(crate) fn acceptable(polished_rss: f64, rss: f64) -> bool {
    polished_rss <= rss * (1.0 + FLAT_TOL)
}

/// Refines `model` against `target`; the returned RSS exceeds that of
/// `model` by at most rounding noise.
///
/// Near the minimum the RSS stops resolving parameter changes below about
/// the square root of machine precision, so a step that leaves the RSS
/// unchanged to rounding is still taken when it shrinks the gradient.
pub(crate) fn polish(points: &[f64], target: &[f64], model: &FmmModel) -> (FmmModel, f64) {
    let mut x = to_params(model);
    let (mut r, mut rss) = residuals(points, target, &x);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITER {
        if rss == 0.0 {
            break;
        }
        let jac = jacobian(points, &x);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * DVector::from_column_slice(&r);
        let grad = jtr.norm();
        let floor = 1e-12 * jtj.diagonal().max().max(f64::MIN_POSITIVE);

        let mut accepted = false;
        while lambda < 1e12 {
            let mut lhs = jtj.clone();
            for d in 0..x.len() {
                lhs[(d, d)] += lambda * jtj[(d, d)].max(floor);
            }
            let Some(chol) = lhs.cholesky() else {
                lambda *= 4.0;
                continue;
            };
            let step = chol.solve(&jtr);
            let mut trial = x.clone();
            for (v, s) in trial.iter_mut().zip(step.iter()) {
                *v += s;
            }
            for w in trial[1..].chunks_mut(4) {
                w[3] = w[3].clamp(OMEGA_MIN, 1.0);
            }
            let (trial_r, trial_rss) = residuals(points, target, &trial);
            let decreased = trial_rss < rss;
            let flat = !decreased
                && trial_rss <= rss * (1.0 + FLAT_TOL)
                && gradient_norm(points, &trial, &trial_r) < 0.5 * grad;
            if decreased || flat {
                let gain = (rss - trial_rss) / rss;
                let size = step.norm() / (DVector::from_column_slice(&x).norm() + STEP_TOL);
                x = trial;
                r = trial_r;
                rss = trial_rss;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = gain > REL_TOL || size > STEP_TOL;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    (canonicalize(&to_model(&x)), rss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::TimeGrid;

    #[test]
    fn jacobian_matches_finite_differences() {
        let grid = TimeGrid::uniform(32).unwrap();
        let x = vec![0.5, 1.2, -0.4, 2.0, 0.3, -0.7, 0.9, 5.0, 0.6];
        let jac = jacobian(grid.points(), &x);
        let zero = vec![0.0; 32];
        for d in 0..x.len() {
            let h = 1e-6;
            let mut up = x.clone();
            up[d] += h;
            let mut down = x.clone();
            down[d] -= h;
            let (ru, _) = residuals(grid.points(), &zero, &up);
            let (rd, _) = residuals(grid.points(), &zero, &down);
            for i in 0..32 {
                // residuals are target − f, so negate
                let fd = -(ru[i] - rd[i]) / (2.0 * h);
                assert!((fd - jac[(i, d)]).abs() < 1e-6, "param {d} point {i}: {fd} vs {}", jac[(i, d)]);
            }
        }
    }

    #[test]
    fn recovers_perturbed_two_wave_model() {
        let grid = TimeGrid::uniform(64).unwrap();
        let truth = FmmModel::new(
            1.0,
            vec![
                FmmWave::new(3.0, 2.0, 1.0, 0.1).unwrap(),
                FmmWave::new(1.0, 2.6, 4.0, 0.3).unwrap(),
            ],
        )
        .unwrap();
        let y = truth.eval(&grid);
        let start = FmmModel::new(
            0.9,
            vec![
                FmmWave::new(2.8, 2.05, 1.1, 0.12).unwrap(),
                FmmWave::new(1.1, 2.5, 3.9, 0.25).unwrap(),
            ],
        )
        .unwrap();
        let (fit, rss) = polish(grid.points(), &y, &start);
        assert!(rss < 1e-16, "{rss}");
        assert!((fit.waves[0].omega - 0.1).abs() < 1e-8);
    }
}
