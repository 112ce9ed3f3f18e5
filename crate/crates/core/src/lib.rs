//! Distilling a small convolutional network into a budgeted decision tree.
//!
//! The pipeline trains the fixed five-convolution network in [`model`] on
//! 28×28 images, reads the fully connected layer's outputs as feature
//! vectors ([`features`]), grows a CART tree on them under depth and leaf
//! budgets ([`tree`]) and summarizes the result ([`analysis`]).

pub mod analysis;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod exec;
pub mod features;
pub mod gradcheck;
pub mod kernels;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod tree;

pub use error::{Error, NpyError, Result};
pub use exec::Execution;
pub use tensor::Tensor;
