//! Spike-sorting data layer: synthetic generation, detection and
//! segmentation of voltage traces, dataset files and experiment runs.

pub mod detect;
pub mod experiment;
pub mod generate;
pub mod io;

pub use detect::{detect_spikes, plant_spikes, segment, PlantedTrace, Recording, Segmentation};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, KChoice, Method};
pub use generate::{benchmark_spec, generate, GeneratorSpec};

use crate::signal::{Signal, TimeGrid};

/// Aligned spike waveforms sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSet {
    pub grid: TimeGrid,
    pub signals: Vec<Signal>,
    pub true_labels: Option<Vec<usize>>,
    pub provenance: String,
}

impl SpikeSet {
    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }
}
