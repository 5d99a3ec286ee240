//! The training oracle: datasets, the coordinator loop, error- and
//! evidence-based objectives, and the sequential/integrated physics-informed
//! training modes.
//!
//! Training runs are single-threaded and deterministic per seed; independent
//! trainings may run concurrently.

mod dataset;
mod physics;
mod setup;
mod trained;
mod training;

pub use dataset::{Dataset, LabelKind, Labels};
pub use physics::{
    train_integrated, train_sequential, AdditionalData, AlgebraicSkeleton, Episode, Skeleton,
    Transform,
};
pub use setup::{GpSetup, ModelInstance, SetupFunction};
pub use trained::{EvalFn, Provenance, TrainedMap, VarianceFn};
pub use training::{
    coordinate, train_error_based, train_evidence_based, ObjectiveKind, TrainingSpec,
};

use thiserror::Error;

use crate::numkit::NumError;
use crate::plant::PlantError;
use crate::surrogates::SurrogateError;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training specification: {context}")]
    InvalidSpec { context: String },
    #[error("acceptance threshold not reached after the round budget (best test metric {best_metric:.6e})")]
    AcceptanceNotReached {
        /// Best map found across all rounds.
        best: Box<TrainedMap>,
        best_metric: f64,
    },
    #[error("mechanistic transform failed at sample {index}")]
    TransformFailed { index: usize },
    #[error("simulation failed during training round {round}{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    TrainingSimulationFailed { round: usize, step: Option<usize> },
    #[error("additional data is missing {what}")]
    MissingAdditionalData { what: &'static str },
    #[error("label kind mismatch: {context}")]
    LabelKindMismatch { context: String },
    #[error("parse error at line {line}: {context}")]
    Parse { line: usize, context: String },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}
