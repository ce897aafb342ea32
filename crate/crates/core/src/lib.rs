//! Reverse-mode automatic differentiation for compressed sparse row (CSR)
//! matrix kernels.
//!
//! Sparse operands keep their sparsity pattern through differentiation:
//! the gradient of a sparse input is stored on exactly that input's pattern.
//!
//! * [`csr`] and [`dense`]: storage types.
//! * [`kernels`]: SpMV, SpSpMM, SpDMM, sparse addition and their adjoints.
//! * [`solve`]: triangular solves, sparse LU and general solves.
//! * [`autodiff`]: the tape.
//! * [`gradcheck`]: dense references and finite differences.
//! * [`experiments`]: optimization loops built on the tape.
//! * [`mmio`]: Matrix Market reading and writing.

pub mod autodiff;
pub mod csr;
pub mod dense;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod kernels;
pub mod mmio;
pub mod poisson;
pub mod solve;

pub use autodiff::{GradStore, Tape, Value, Var};
pub use csr::{CsrMatrix, SparsityPattern};
pub use dense::{DenseMatrix, DenseVector};
pub use error::{Error, Result};
pub use solve::{LuFactorization, Triangle};
