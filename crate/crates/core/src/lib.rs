//! Differentiable fuzzy first-order logic for zero-shot image classification.
//!
//! Axioms written in a small textual language are grounded as tensor
//! computations over image features and class attribute vectors; training
//! maximizes the aggregated truth of the knowledge base by gradient descent.

// `!(x >= lo)` comparisons deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod embedder;
pub mod error;
pub mod fol;
pub mod fuzzy;
pub mod gradsuite;
pub mod grounding;
pub mod infer;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
