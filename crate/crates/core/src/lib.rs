//! Multi-individual matrix regression with shared latent subspaces.
//!
//! Each individual `i` has a coefficient matrix `B_i = C L1_i L2_i^T R^T`
//! built from shared column/row factors `C`, `R` and small individual loading
//! matrices. The crate provides the tensor algebra behind that
//! parameterization, linear and logistic trace-regression losses with their
//! preconditioned partial gradients, scaled gradient descent fitters (with
//! and without shared structure, with optional row-sparsity via scaled hard
//! thresholding), spectral initialization and ridge-ratio rank selection,
//! gauge-invariant evaluation metrics, and a seeded simulation harness.

pub mod error;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor3;
