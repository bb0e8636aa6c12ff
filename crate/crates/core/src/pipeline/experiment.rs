//! One clustering experiment on a spike set, with all outputs written to a
//! directory:
//!
//! | file             | content                                        |
//! |------------------|------------------------------------------------|
//! | `labels.csv`     | 1-based cluster label per spike                |
//! | `model.json`     | fitted MixFMM model, or PCA + k-means summary  |
//! | `metrics.tsv`    | validity indices (`index\tvalue`)              |
//! | `templates.csv`  | cluster curves on the grid                     |
//! | `selection.tsv`  | K-selection trace (automatic K only)           |
//! | `report.json`    | method, K and indices                          |

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::io::{create, write_labels, write_templates};
use super::SpikeSet;
use crate::baselines::{kmeans, pca_at_most};
use crate::error::{Error, Result};
use crate::fit::{FitConfig, FmmFitter};
use crate::metrics::{ClusterSummary, MetricsReport};
use crate::mixture::{fit_em_with, EmConfig, MixFmmModel};
use crate::select::{compact, select_k_with, SelectConfig, SelectionTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mixfmm1,
    Mixfmm3,
    PcaKm,
}

impl Method {
    /// FMM order for the MixFMM methods.
    pub fn order(self) -> Option<usize> {
        match self {
            Method::Mixfmm1 => Some(1),
            Method::Mixfmm3 => Some(3),
            Method::PcaKm => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Mixfmm1 => "mixfmm1",
            Method::Mixfmm3 => "mixfmm3",
            Method::PcaKm => "pca_km",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixfmm1" => Ok(Method::Mixfmm1),
            "mixfmm3" => Ok(Method::Mixfmm3),
            "pca_km" => Ok(Method::PcaKm),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Number of clusters: fixed, or chosen by the elbow rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    Auto,
}

impl FromStr for KChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(KChoice::Auto);
        }
        s.parse()
            .ok()
            .filter(|&k| k >= 1)
            .map(KChoice::Fixed)
            .ok_or_else(|| Error::InvalidParameter(format!("K must be a positive integer or 'auto', got '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub em: EmConfig,
    pub fit: FitConfig,
    pub select: SelectConfig,
    /// Upper bound; fewer components are kept when the data rank is lower.
    pub pca_components: usize,
    pub km_starts: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            fit: FitConfig::default(),
            select: SelectConfig::default(),
            pca_components: 4,
            km_starts: 10,
        }
    }
}

/// PCA + k-means fit summary written as the model file of the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaKmModel {
    pub components: usize,
    pub pca_mean: Vec<f64>,
    pub pca_axes: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub centroids: Vec<Vec<f64>>,
    pub within_ss: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    MixFmm(MixFmmModel),
    PcaKm(PcaKmModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub method: Method,
    pub k: usize,
    pub labels: Vec<usize>,
    pub metrics: MetricsReport,
    pub model: FittedModel,
    /// Cluster curves: FMM means for MixFMM, cluster averages otherwise.
    pub templates: Vec<Vec<f64>>,
    pub selection: Option<SelectionTrace>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    method: String,
    k: usize,
    chosen_by_selection: bool,
    n_signals: usize,
    provenance: &'a str,
    accuracy: Option<f64>,
    ball_hall: f64,
    davies_bouldin: Option<f64>,
    asw: Option<f64>,
}

/// Clusters `data` with `method` and computes every applicable index.
pub fn run_experiment(data: &SpikeSet, method: Method, k: KChoice, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if data.is_empty() {
        return Err(Error::InsufficientData("empty spike set".into()));
    }
    let truth = data.true_labels.as_deref();

    let (k, raw_labels, model, templates, selection) = match method.order() {
        Some(m) => {
            let fitter = FmmFitter::new(&data.grid, &cfg.fit)?;
            let (fit, selection) = match k {
                KChoice::Fixed(k) => (fit_em_with(&data.signals, &fitter, k, m, &cfg.em)?, None),
                KChoice::Auto => {
                    let sel = select_k_with(&data.signals, &fitter, m, &cfg.select, &cfg.em)?;
                    (sel.chosen().clone(), Some(sel.trace))
                }
            };
            let templates = fit.model.means(&data.grid);
            (fit.model.k, fit.labels(), FittedModel::MixFmm(fit.model), templates, selection)
        }
        None => {
            let KChoice::Fixed(k) = k else {
                return Err(Error::InvalidParameter("the PCA + k-means baseline needs an explicit K".into()));
            };
            let proj = pca_at_most(&data.signals, cfg.pca_components)?;
            let km = kmeans(&proj.scores, k, cfg.km_starts, cfg.em.seed)?;
            let summary = ClusterSummary::new(&data.signals, &km.labels)?;
            let model = PcaKmModel {
                components: proj.components.len(),
                pca_mean: proj.mean,
                pca_axes: proj.components,
                explained_variance: proj.explained_variance,
                centroids: km.centroids,
                within_ss: km.within_ss,
                seed: cfg.em.seed,
            };
            (k, km.labels, FittedModel::PcaKm(model), summary.barycenters, None)
        }
    };

    // internal indices need every cluster occupied
    let metrics = MetricsReport::compute(&data.signals, &compact(&raw_labels), truth)?;
    Ok(ExperimentReport {
        method,
        k,
        labels: raw_labels,
        metrics,
        model,
        templates,
        selection,
    })
}

impl ExperimentReport {
    pub fn write(&self, data: &SpikeSet, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        write_labels(create(&out_dir.join("labels.csv"))?, &self.labels)?;

        let model_json = match &self.model {
            FittedModel::MixFmm(m) => m.to_json()?,
            FittedModel::PcaKm(m) => serde_json::to_string_pretty(m)?,
        };
        writeln!(create(&out_dir.join("model.json"))?, "{model_json}")?;
        create(&out_dir.join("metrics.tsv"))?.write_all(self.metrics.to_table().as_bytes())?;
        write_templates(create(&out_dir.join("templates.csv"))?, &data.grid, &self.templates)?;
        if let Some(trace) = &self.selection {
            create(&out_dir.join("selection.tsv"))?.write_all(trace.to_table().as_bytes())?;
        }

        let report = ReportFile {
            method: self.method.to_string(),
            k: self.k,
            chosen_by_selection: self.selection.is_some(),
            n_signals: data.len(),
            provenance: &data.provenance,
            accuracy: self.metrics.accuracy,
            ball_hall: self.metrics.ball_hall,
            davies_bouldin: self.metrics.davies_bouldin,
            asw: self.metrics.asw,
        };
        writeln!(create(&out_dir.join("report.json"))?, "{}", serde_json::to_string_pretty(&report)?)?;
        Ok(())
    }
}
