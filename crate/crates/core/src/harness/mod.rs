//! Experiment orchestration: configuration, the training loop, sweeps,
//! output files and the command-line front end.

mod cli;
mod config;
mod output;
mod sweep;
mod train;

pub use cli::run_cli;
pub use config::{
    parse_pairs, ExperimentConfig, DEFAULT_BATCH, DEFAULT_EVAL_SAMPLES, DEFAULT_ITERATIONS, DEFAULT_OUTCOMES,
    DEFAULT_REALNESS_KG,
};
pub use output::{write_run, write_summary, GENERATOR_FILE, METRICS_FILE, SAMPLES_FILE, SUMMARY_FILE};
pub use sweep::{sweep_outcomes, SweepCell, SweepResult};
pub use train::{train, EvalRecord, Failure, RunSummary, TrainOutput};

use thiserror::Error;

use crate::diffcore::DiffError;
use crate::losses::LossError;
use crate::nn::NnError;
use crate::realness::RealnessError;
use crate::synthetic::SyntheticError;
use crate::theory::TheoryError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Realness(#[from] RealnessError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
