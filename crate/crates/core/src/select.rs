//! Choosing the number of clusters from the log-likelihood curve.
//!
//! The log-likelihood gains `logL(K) − logL(K−1)` shrink quickly until the
//! true number of clusters and slowly after it. The chosen `K` is the
//! smallest one whose next gain falls below `rho` times its own.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fit::{FitConfig, FmmFitter};
use crate::metrics::silhouette;
use crate::mixture::{fit_em_with, EmConfig, EmFit};
use crate::signal::{Signal, TimeGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectConfig {
    pub k_max: usize,
    pub rho: f64,
    /// Settle borderline elbows by comparing silhouettes of `K` and `K + 1`.
    pub asw_tie_break: bool,
    /// A ratio within this distance of `rho` counts as borderline.
    pub tie_margin: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            k_max: 5,
            rho: 0.5,
            asw_tie_break: true,
            tie_margin: 0.1,
        }
    }
}

impl SelectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max < 2 {
            return Err(Error::InvalidParameter("k_max must be at least 2".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidParameter(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.tie_margin >= 0.0) {
            return Err(Error::InvalidParameter("tie_margin must be non-negative".into()));
        }
        Ok(())
    }
}

/// Outcome of the gain-ratio rule on a log-likelihood sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ElbowRule {
    /// `gains[i]` belongs to `K = i + 2`, floored at zero.
    pub gains: Vec<f64>,
    /// `ratios[i] = gain(K + 1) / gain(K)` for `K = i + 2`; zero when `gain(K)` is.
    pub ratios: Vec<f64>,
    pub chosen_k: usize,
    /// No ratio fell below `rho`, so the largest `K` was returned.
    pub fallback: bool,
}

/// Applies the rule to `log_likelihoods[i]`, the value for `K = i + 1`.
pub fn elbow_rule(log_likelihoods: &[f64], rho: f64) -> ElbowRule {
    let gains: Vec<f64> = log_likelihoods.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    let ratios: Vec<f64> = gains
        .windows(2)
        .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] })
        .collect();
    let k_max = log_likelihoods.len();
    let (chosen_k, fallback) = match ratios.iter().position(|&r| r < rho) {
        Some(i) => (i + 2, false),
        None => (k_max, true),
    };
    ElbowRule {
        gains,
        ratios,
        chosen_k,
        fallback,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TieBreak {
    /// `(K, ASW)` of the two candidates.
    pub candidates: [(usize, f64); 2],
    pub chosen_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub k_values: Vec<usize>,
    pub log_likelihoods: Vec<f64>,
    pub gains: Vec<f64>,
    pub gain_ratios: Vec<f64>,
    /// `K` picked by the ratio rule alone.
    pub rule_k: usize,
    pub chosen_k: usize,
    /// Set when no ratio fell below `rho`.
    pub fallback: bool,
    pub tie_break: Option<TieBreak>,
}

impl SelectionTrace {
    /// Tab-separated `K, logL, gain, ratio, chosen` table; undefined cells
    /// print `NA`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("K\tlogL\tgain\tratio\tchosen\n");
        for (i, (&k, ll)) in self.k_values.iter().zip(&self.log_likelihoods).enumerate() {
            let gain = i.checked_sub(1).and_then(|j| self.gains.get(j));
            let ratio = i.checked_sub(1).and_then(|j| self.gain_ratios.get(j));
            let cell = |v: Option<&f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
            writeln!(
                out,
                "{k}\t{ll}\t{}\t{}\t{}",
                cell(gain),
                cell(ratio),
                u8::from(k == self.chosen_k)
            )
            .unwrap();
        }
        out
    }
}

/// The trace together with the fitted model for every `K`.
#[derive(Debug, Clone)]
pub struct Selection {
    pub trace: SelectionTrace,
    /// `fits[i]` has `K = i + 1`.
    pub fits: Vec<EmFit>,
}

impl Selection {
    pub fn chosen(&self) -> &EmFit {
        &self.fits[self.trace.chosen_k - 1]
    }
}

/// Fits MixFMM_m for `K = 1..=k_max` and picks `K` by the elbow rule.
pub fn select_k(
    signals: &[Signal],
    grid: &TimeGrid,
    m: usize,
    sel: &SelectConfig,
    cfg: &EmConfig,
    fit_cfg: &FitConfig,
) -> Result<Selection> {
    let fitter = FmmFitter::new(grid, fit_cfg)?;
    select_k_with(signals, &fitter, m, sel, cfg)
}

/// As [`select_k`], reusing a prepared fitter.
pub fn select_k_with(
    signals: &[Signal],
    fitter: &FmmFitter,
    m: usize,
    sel: &SelectConfig,
    cfg: &EmConfig,
) -> Result<Selection> {
    sel.validate()?;
    if sel.k_max >= signals.len() {
        return Err(Error::InsufficientData(format!(
            "k_max = {} needs more than {} signals",
            sel.k_max,
            signals.len()
        )));
    }
    let fits = (1..=sel.k_max)
        .map(|k| fit_em_with(signals, fitter, k, m, cfg))
        .collect::<Result<Vec<_>>>()?;
    let log_likelihoods: Vec<f64> = fits.iter().map(|f| f.model.log_likelihood).collect();
    let rule = elbow_rule(&log_likelihoods, sel.rho);

    let mut chosen_k = rule.chosen_k;
    let mut tie_break = None;
    if sel.asw_tie_break {
        // first K whose ratio is below rho or borderline
        let candidate = rule
            .ratios
            .iter()
            .position(|&r| r < sel.rho + sel.tie_margin)
            .map(|i| i + 2)
            .filter(|&k| (rule.ratios[k - 2] - sel.rho).abs() <= sel.tie_margin && k < sel.k_max);
        if let Some(k) = candidate {
            let asw_k = hard_asw(signals, &fits[k - 1]);
            let asw_next = hard_asw(signals, &fits[k]);
            let pick = if asw_next > asw_k { k + 1 } else { k };
            tie_break = Some(TieBreak {
                candidates: [(k, asw_k), (k + 1, asw_next)],
                chosen_k: pick,
            });
            chosen_k = pick;
        }
    }

    Ok(Selection {
        trace: SelectionTrace {
            k_values: (1..=sel.k_max).collect(),
            log_likelihoods,
            gains: rule.gains,
            gain_ratios: rule.ratios,
            rule_k: rule.chosen_k,
            chosen_k,
            fallback: rule.fallback,
            tie_break,
        },
        fits,
    })
}

/// Silhouette of the hard partition, ignoring components that receive no
/// signal; `−∞` when fewer than two clusters are occupied.
fn hard_asw(signals: &[Signal], fit: &EmFit) -> f64 {
    let labels = compact(&fit.labels());
    silhouette(signals, &labels).map_or(f64::NEG_INFINITY, |s| s.asw)
}

/// Renumbers labels to `0..` in order of their value, dropping unused ones.
pub(crate) fn compact(labels: &[usize]) -> Vec<usize> {
    let mut used: Vec<usize> = labels.to_vec();
    used.sort_unstable();
    used.dedup();
    labels
        .iter()
        .map(|l| used.binary_search(l).expect("label present"))
        .collect()
}
