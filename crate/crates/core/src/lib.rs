//! Kernel regression with explicit and implicit (early-stopping) regularization.
//!
//! The crate is organised around a single spectral factorization of the Gram
//! matrix. Closed-form estimators (kernel ridge regression and kernel gradient
//! flow) are spectral filters; iterative solvers (gradient, sign gradient,
//! coordinate and elastic descent) record solution paths indexed by
//! optimization time; proximal gradient descent solves the l1 and l-infinity
//! penalized problems. The [`theory`] module certifies the comparison bounds
//! between gradient flow and ridge regression numerically.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod data;
pub mod descent;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod linalg;
pub mod prox;
pub mod select;
pub mod spectral;
pub mod theory;

pub use closed_form::{fit_kgf, fit_krr, predict, DualCoefficients, FitModel, Regularizer};
pub use data::{Dataset, Synthetic};
pub use descent::{run_descent, step_size_limit, DescentConfig, Method, SolutionPath};
pub use error::{Error, Result};
pub use kernels::{
    cross_kernel_matrix, eval_kernel, kernel_matrix, CrossKernelMatrix, KernelFamily, KernelMatrix, KernelSpec,
};
pub use prox::{fit_prox, project_l1_ball, prox_linf, soft_threshold, Penalty, ProxConfig};
pub use spectral::{apply_filter, eig_sym, phi_stable, Filter, SpectralDecomposition};
