//! Network building blocks for the 2-D synthetic experiments: dense and
//! maxout layers, batch normalization with running statistics, the
//! generator/discriminator MLPs, Adam, and a text checkpoint format.

mod adam;
mod checkpoint;
mod layers;
mod nets;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use layers::{BatchNormLayer, Bound, DenseLayer, MaxoutLayer, Mode, ParamStore};
pub use nets::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, INIT_STD};

use thiserror::Error;

use crate::diffcore::DiffError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("gradient shape {got:?} does not match parameter {name} {want:?}")]
    GradShape { name: String, want: Vec<usize>, got: Vec<usize> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
