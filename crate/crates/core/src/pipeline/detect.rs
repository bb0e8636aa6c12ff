//! Threshold spike detection and window extraction from a voltage trace.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::SpikeSet;
use crate::error::{Error, Result};
use crate::signal::{rescale_time, Signal};

/// Scale factor turning the median absolute deviation of Gaussian noise
/// into its standard deviation.
const MAD_SCALE: f64 = 0.6745;

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub samples: Vec<f64>,
    /// Samples per second; informational only.
    pub sample_rate: f64,
}

impl Recording {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("recording contains non-finite samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `c · median(|x|) / 0.6745`.
pub fn detection_threshold(samples: &[f64], c: f64) -> f64 {
    let mut abs: Vec<f64> = samples.iter().map(|v| v.abs()).collect();
    if abs.is_empty() {
        return 0.0;
    }
    abs.sort_by(f64::total_cmp);
    let mid = abs.len() / 2;
    let median = if abs.len().is_multiple_of(2) {
        0.5 * (abs[mid - 1] + abs[mid])
    } else {
        abs[mid]
    };
    c * median / MAD_SCALE
}

/// Indices of local maxima above the threshold, at least `window` samples
/// apart. Conflicting peaks are resolved in favour of the larger one.
pub fn detect_spikes(rec: &Recording, c: f64, window: usize) -> Result<Vec<usize>> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold multiplier must be positive, got {c}")));
    }
    if window == 0 || rec.len() < window {
        return Err(Error::InsufficientData(format!(
            "trace of {} samples is shorter than the {window}-sample window",
            rec.len()
        )));
    }
    let x = &rec.samples;
    let threshold = detection_threshold(x, c);
    // a plateau counts once, at its first sample
    let mut candidates: Vec<usize> = (1..x.len() - 1)
        .filter(|&i| x[i] > threshold && x[i] > x[i - 1] && x[i] >= x[i + 1])
        .collect();
    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));

    let mut accepted: Vec<usize> = Vec::new();
    for i in candidates {
        if accepted.iter().all(|&j| i.abs_diff(j) >= window) {
            accepted.push(i);
        }
    }
    accepted.sort_unstable();
    Ok(accepted)
}

/// Extracted windows plus the peaks that did not fit inside the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub spikes: SpikeSet,
    /// Peak index of every extracted window, in order.
    pub peaks: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// Cuts a `window`-sample signal around each peak so that the peak falls on
/// the 1-based position `align_at`.
pub fn segment(rec: &Recording, peaks: &[usize], window: usize, align_at: usize) -> Result<Segmentation> {
    if window < 2 || align_at == 0 || align_at > window {
        return Err(Error::InvalidParameter(format!(
            "align_at = {align_at} must lie in 1..={window}"
        )));
    }
    let raw: Vec<f64> = (0..window).map(|i| i as f64).collect();
    let grid = rescale_time(&raw)?;
    let lead = align_at - 1;
    let mut signals = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for &peak in peaks {
        match peak.checked_sub(lead) {
            Some(start) if start + window <= rec.len() => {
                let values = rec.samples[start..start + window].to_vec();
                signals.push(Signal::new(format!("peak{peak}"), values)?);
                kept.push(peak);
            }
            _ => dropped.push(peak),
        }
    }
    Ok(Segmentation {
        spikes: SpikeSet {
            grid,
            signals,
            true_labels: None,
            provenance: format!("segmented, window {window}, aligned at {align_at}"),
        },
        peaks: kept,
        dropped,
    })
}

/// A synthetic trace with known spike positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTrace {
    pub recording: Recording,
    /// Sample index of each planted waveform's maximum.
    pub peaks: Vec<usize>,
    /// Index into the planted waveform list for each spike.
    pub sources: Vec<usize>,
}

/// Places `waveforms[sources[j]]` one after another, separated by `gap`
/// samples of background plus a random extra gap of up to `gap` samples,
/// then adds Normal(0, noise_sigma) to every sample.
pub fn plant_spikes(
    waveforms: &[Vec<f64>],
    sources: &[usize],
    gap: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<PlantedTrace> {
    use rand::Rng;

    if let Some(&bad) = sources.iter().find(|&&s| s >= waveforms.len()) {
        return Err(Error::InvalidParameter(format!("waveform index {bad} out of range")));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter("noise_sigma must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![0.0; gap];
    let mut peaks = Vec::with_capacity(sources.len());
    for &s in sources {
        let w = &waveforms[s];
        let argmax = w
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > w[best] { i } else { best });
        peaks.push(samples.len() + argmax);
        samples.extend_from_slice(w);
        let pad = gap + rng.random_range(0..=gap);
        samples.extend(std::iter::repeat_n(0.0, pad));
    }
    if noise_sigma > 0.0 {
        let noise = Normal::new(0.0, noise_sigma).expect("valid sigma");
        samples.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    Ok(PlantedTrace {
        recording: Recording::new(samples, 1.0)?,
        peaks,
        sources: sources.to_vec(),
    })
}
