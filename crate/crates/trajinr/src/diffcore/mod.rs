//! Minimal reverse-mode differentiation engine.
//!
//! Supports exactly the primitives the INR and the encoder-classifier need:
//! affine maps (plain and bias-row-augmented), ReLU and Gabor activations,
//! residual layers, row-batch norm, column max pooling, MSE and BCE losses,
//! plus an Adam optimizer and a finite-difference gradient checker.
//!
//! All values are f64. A [`Tape`] and its tensors are confined to a single
//! worker; parallelism happens above this module.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::grad_check;
pub use tape::{Activation, BnMode, Tape, Var};
pub use tensor::Tensor;
