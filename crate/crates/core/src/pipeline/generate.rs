//! Seeded synthetic spike sets built from FMM class templates.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SpikeSet;
use crate::error::{Error, Result};
use crate::signal::{FmmModel, FmmWave, Signal, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub templates: Vec<FmmModel>,
    pub counts: Vec<usize>,
    pub noise_sigma: f64,
    /// Standard deviation of the Normal perturbation added to every α.
    #[serde(default)]
    pub jitter: f64,
    /// Standard deviation of the log of the per-spike amplitude factor.
    #[serde(default)]
    pub amplitude_scatter: f64,
    /// Standard deviation of the coefficients of a random low-frequency
    /// background `Σ_h (a_h cos ht + b_h sin ht)`, `h = 1..=background_harmonics`,
    /// drawn afresh for every spike.
    #[serde(default)]
    pub background_sigma: f64,
    #[serde(default = "default_harmonics")]
    pub background_harmonics: usize,
    #[serde(default = "default_points")]
    pub points: usize,
    pub seed: u64,
}

fn default_harmonics() -> usize {
    2
}

fn default_points() -> usize {
    64
}

impl GeneratorSpec {
    pub fn k(&self) -> usize {
        self.templates.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() || self.templates.len() != self.counts.len() {
            return Err(Error::InvalidParameter(
                "need one positive count per template".into(),
            ));
        }
        if self.counts.contains(&0) {
            return Err(Error::InvalidParameter("class counts must be positive".into()));
        }
        let scales = [self.noise_sigma, self.jitter, self.amplitude_scatter, self.background_sigma];
        if scales.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("noise scales must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Draws every spike of every class, classes in template order.
pub fn generate(spec: &GeneratorSpec) -> Result<SpikeSet> {
    spec.validate()?;
    let grid = TimeGrid::uniform(spec.points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let total: usize = spec.counts.iter().sum();
    let mut signals = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (class, (template, &count)) in spec.templates.iter().zip(&spec.counts).enumerate() {
        for _ in 0..count {
            let scale = (spec.amplitude_scatter * unit.sample(&mut rng)).exp();
            let waves = template
                .waves
                .iter()
                .map(|w| {
                    let alpha = w.alpha + spec.jitter * unit.sample(&mut rng);
                    FmmWave::new(w.amplitude * scale, alpha, w.beta, w.omega)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut values = FmmModel::new(template.intercept, waves)?.eval(&grid);
            if spec.background_sigma > 0.0 {
                for h in 1..=spec.background_harmonics {
                    let a = spec.background_sigma * unit.sample(&mut rng);
                    let b = spec.background_sigma * unit.sample(&mut rng);
                    for (v, t) in values.iter_mut().zip(grid.points()) {
                        let ht = h as f64 * t;
                        *v += a * ht.cos() + b * ht.sin();
                    }
                }
            }
            if spec.noise_sigma > 0.0 {
                values.iter_mut().for_each(|v| *v += spec.noise_sigma * unit.sample(&mut rng));
            }
            signals.push(Signal::new(format!("spike{}", signals.len() + 1), values)?);
            labels.push(class);
        }
    }
    Ok(SpikeSet {
        grid,
        signals,
        true_labels: Some(labels),
        provenance: format!("generated, seed {}", spec.seed),
    })
}

/// Root-mean-square of a template on the grid.
pub fn template_rms(template: &FmmModel, grid: &TimeGrid) -> f64 {
    let v = template.eval(grid);
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Angle at which a template with dominant wave `β = π` peaks when that
/// wave is centred at `α`: the peak lands on the 1-based sample `align_at`
/// of a `points`-sample window.
pub fn aligned_alpha(points: usize, align_at: usize) -> f64 {
    TAU * (align_at - 1) as f64 / points as f64 + std::f64::consts::PI
}

/// Secondary waves `(A, α, β, ω)` of the three benchmark classes, added to a
/// shared sharp spike.
const BENCHMARK_WAVES: [[(f64, f64, f64, f64); 2]; 3] = [
    [(0.645, 6.575, 5.88, 0.095), (1.468, 6.528, 3.544, 0.055)],
    [(1.105, 6.095, 6.275, 0.119), (1.199, 5.408, 2.753, 0.087)],
    [(0.838, 6.431, 4.958, 0.156), (1.144, 6.611, 5.622, 0.105)],
];

/// Peak value shared by the benchmark templates.
pub const BENCHMARK_PEAK: f64 = 5.0;

/// Three FMM_3 spike classes of equal peak height that differ only in the
/// shape of their sharp secondary features.
pub fn benchmark_templates() -> Vec<FmmModel> {
    let grid = TimeGrid::uniform(64).expect("valid grid");
    let alpha = aligned_alpha(64, 20);
    BENCHMARK_WAVES
        .iter()
        .map(|secondary| {
            let mut waves = vec![FmmWave::new(3.0, alpha, std::f64::consts::PI, 0.08).expect("valid wave")];
            for &(a, al, b, w) in secondary {
                waves.push(FmmWave::new(a, al, b, w).expect("valid wave"));
            }
            let raw = FmmModel::new(3.0, waves).expect("valid model");
            let peak = raw.eval(&grid).into_iter().fold(f64::NEG_INFINITY, f64::max);
            let s = BENCHMARK_PEAK / peak;
            let waves = raw
                .waves
                .iter()
                .map(|w| FmmWave::new(w.amplitude * s, w.alpha, w.beta, w.omega).expect("valid wave"))
                .collect();
            FmmModel::new(raw.intercept * s, waves).expect("valid model")
        })
        .collect()
}

/// The benchmark data set: 100 spikes per class, white noise at 20% of the
/// mean template RMS and a random two-harmonic background of scale 0.6.
pub fn benchmark_spec(seed: u64) -> GeneratorSpec {
    let templates = benchmark_templates();
    let grid = TimeGrid::uniform(64).expect("valid grid");
    let rms = templates.iter().map(|t| template_rms(t, &grid)).sum::<f64>() / templates.len() as f64;
    GeneratorSpec {
        counts: vec![100; templates.len()],
        templates,
        noise_sigma: 0.2 * rms,
        jitter: 0.0,
        amplitude_scatter: 0.0,
        background_sigma: 0.6,
        background_harmonics: 2,
        points: 64,
        seed,
    }
}
