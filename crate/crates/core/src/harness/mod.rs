//! Orchestration: configuration, dataset generation, training and
//! evaluation, system identification, closed-loop simulation, trace
//! persistence and the metrics computed on traces.

pub mod cli;
mod config;
mod dataset;
mod metrics;
mod sim;
mod trace;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::control::ControlError;
use crate::dzmetric::DzError;
use crate::frame::FrameError;
use crate::labeling::LabelError;
use crate::linmodel::ModelError;
use crate::plant::{PlantError, ScenarioError};
use crate::preprocess::PreprocessError;

pub use config::{Config, FrameSetup, GenConfig, PidConfig, TrainConfig};
pub use dataset::{
    evaluate, generate_dataset, prepare_variant, read_manifest, train_from_manifest,
    write_manifest, EvalReport, GeneratedDataset, ManifestEntry, MANIFEST_HEADER,
};
pub use metrics::{
    correlate, first_detachment_index, fit_adjust_alpha, ols, pearson_r, r_squared,
    tracking_metrics, tracking_metrics_at, AlphaFit, CorrelationReport, TrackingReport, MAX_LAG_S,
    SWEEP_MIN_VAR,
};
pub use sim::{
    measure_inference_latency, run_closed_loop, run_closed_loop_timed, run_open_loop, LatencyStats,
    LoopSetup, SysidReport,
};
pub use trace::{fmt_g9, Trace, TraceRow, TRACE_HEADER};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),
    #[error("cannot read {}: {source}", path.display())]
    Input {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Config {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("tracking window is empty")]
    EmptyWindow,
    #[error("need at least 10 samples in the correlation window, found {0}")]
    InsufficientSamples(usize),
    #[error("trace has no radial sweep")]
    NoSweepDetected,
    #[error("tick {tick}: {source}")]
    AtTick {
        tick: usize,
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Dz(#[from] DzError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(path: &Path, source: std::io::Error) -> Self {
        Self::Input {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn at_tick(tick: usize, source: impl Into<HarnessError>) -> Self {
        Self::AtTick {
            tick,
            source: Box::new(source.into()),
        }
    }

    /// Process exit status: 2 for bad input, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) | Self::Input { .. } | Self::Config { .. } | Self::Scenario(_) => 2,
            Self::AtTick { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
