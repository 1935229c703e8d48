//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] is built fresh for every training step: forward ops append
//! nodes and cache whatever their backward rule needs, then
//! [`Tape::backward`] sweeps the nodes once in reverse. Parameters enter as
//! [`Tape::param`] leaves keyed by [`ParamId`], and [`Gradients::into_param_map`]
//! collects their gradients into a [`GradientMap`].
//!
//! ```
//! use realnessgan::diffcore::{ParamId, Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(ParamId(0), Tensor::from_vec(vec![1.0, -2.0]));
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum(sq, None).unwrap();
//! let grads = tape.backward(loss).unwrap().into_param_map();
//! assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[2.0, -4.0]);
//! ```

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{check_directional, check_gradients, finite_difference_check, DirectionalReport, GradCheckOptions, GradCheckReport};
pub use tape::{GradientMap, Gradients, ParamId, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
use tape::log_sum_exp;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("loss must be a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("tape has already been differentiated")]
    TapeConsumed,
}
