//! Symmetric eigendecomposition of the Gram matrix and spectral filters.
//!
//! Every closed-form estimator in the crate has the shape `U diag(g(s)) Uᵀ y`
//! for some scalar gain `g`, so one factorization serves whole regularization
//! paths.

use nalgebra::SymmetricEigen;

use crate::error::{input_err, Error, Result};
use crate::kernels::KernelMatrix;
use crate::linalg::{Matrix, Vector};

/// Eigenvalues at or above this (negative) level are treated as round-off and clamped to zero.
pub const CLAMP_LEVEL: f64 = -1e-8;

/// Crossover for the small-argument series in [`phi_stable`].
const PHI_SERIES_CUTOFF: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: Matrix,
    /// Eigenvalues sorted in descending order, clamped to be nonnegative.
    pub eigenvalues: Vector,
    /// Number of slightly negative eigenvalues that were clamped to zero.
    pub clamped: usize,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn s_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn s_min(&self) -> f64 {
        self.eigenvalues[self.n() - 1]
    }

    /// Coordinates of `y` in the eigenbasis, `Uᵀ y`.
    pub fn project(&self, y: &Vector) -> Vector {
        self.eigenvectors.tr_mul(y)
    }

    /// `U c`.
    pub fn reconstruct(&self, coords: &Vector) -> Vector {
        &self.eigenvectors * coords
    }

    /// `U diag(gain(s_i)) Uᵀ y` for an arbitrary scalar gain.
    pub fn apply_gain(&self, y: &Vector, gain: impl Fn(f64) -> f64) -> Vector {
        let mut c = self.project(y);
        for (ci, &s) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ci *= gain(s);
        }
        self.reconstruct(&c)
    }

    /// `U diag(s) Uᵀ`.
    pub fn reconstruct_matrix(&self) -> Matrix {
        let u = &self.eigenvectors;
        let mut us = u.clone();
        for (j, &s) in self.eigenvalues.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * u.transpose()
    }

    /// Explicit feature matrix `Φ = U diag(√s)` with `ΦΦᵀ = K`.
    pub fn feature_map(&self) -> Matrix {
        let mut phi = self.eigenvectors.clone();
        for (j, &s) in self.eigenvalues.iter().enumerate() {
            phi.column_mut(j).scale_mut(s.sqrt());
        }
        phi
    }
}

pub fn eig_sym(k: &KernelMatrix) -> Result<SpectralDecomposition> {
    eig_sym_matrix(k.matrix())
}

pub fn eig_sym_matrix(m: &Matrix) -> Result<SpectralDecomposition> {
    if !m.is_square() || m.nrows() == 0 {
        return input_err("eigendecomposition needs a nonempty square matrix");
    }
    if m.iter().any(|x| !x.is_finite()) {
        return input_err("matrix has non-finite entries");
    }
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let min = eig.eigenvalues[order[n - 1]];
    if min < CLAMP_LEVEL {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let mut eigenvalues = Vector::zeros(n);
    let mut eigenvectors = Matrix::zeros(n, n);
    let mut clamped = 0;
    for (dst, &src) in order.iter().enumerate() {
        let s = eig.eigenvalues[src];
        eigenvalues[dst] = if s < 0.0 {
            clamped += 1;
            0.0
        } else {
            s
        };
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvectors,
        eigenvalues,
        clamped,
    })
}

/// `(1 - e^{-ts}) / s`, continuous at `s = 0` where it equals `t`.
pub fn phi_stable(s: f64, t: f64) -> f64 {
    let x = t * s;
    if x < PHI_SERIES_CUTOFF {
        t * (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0)
    } else {
        -(-x).exp_m1() / s
    }
}

/// Ridge gain written as `(1 - (1 + s/λ)^{-1}) / s`, the form that exposes the
/// first-order Taylor relation to the gradient-flow gain `(1 - e^{-ts}) / s`.
pub fn rewritten_ridge_gain(s: f64, lambda: f64) -> f64 {
    if s == 0.0 {
        return 1.0 / lambda;
    }
    let u = s / lambda;
    -(-u.ln_1p()).exp_m1() / s
}

/// Spectral filters used by the closed-form estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Filter {
    /// `1 / (s + λ)`: kernel ridge regression coefficients.
    Krr { lambda: f64 },
    /// `(1 - e^{-t s / (1-γ)}) / s`: gradient flow coefficients with momentum γ.
    Kgf { t: f64, momentum: f64 },
    /// `e^{-t s / (1-γ)}`: in-sample residual operator of gradient flow.
    KgfResidual { t: f64, momentum: f64 },
    /// `λ / (s + λ)`: in-sample residual operator of ridge regression.
    KrrResidual { lambda: f64 },
}

impl Filter {
    fn validate(&self) -> Result<()> {
        match *self {
            Filter::Krr { lambda } | Filter::KrrResidual { lambda } => {
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return input_err(format!("ridge parameter must be positive, got {lambda}"));
                }
            }
            Filter::Kgf { t, momentum } | Filter::KgfResidual { t, momentum } => {
                if !(t >= 0.0 && t.is_finite()) {
                    return input_err(format!("flow time must be nonnegative, got {t}"));
                }
                if !(0.0..1.0).contains(&momentum) {
                    return input_err(format!("momentum must lie in [0, 1), got {momentum}"));
                }
            }
        }
        Ok(())
    }

    /// Scalar gain at eigenvalue `s`.
    pub fn gain(&self, s: f64) -> f64 {
        match *self {
            Filter::Krr { lambda } => 1.0 / (s + lambda),
            Filter::KrrResidual { lambda } => lambda / (s + lambda),
            Filter::Kgf { t, momentum } => phi_stable(s, t / (1.0 - momentum)),
            Filter::KgfResidual { t, momentum } => (-t * s / (1.0 - momentum)).exp(),
        }
    }
}

pub fn apply_filter(decomp: &SpectralDecomposition, filter: Filter, y: &Vector) -> Result<Vector> {
    filter.validate()?;
    if y.len() != decomp.n() {
        return input_err(format!(
            "vector length {} does not match decomposition size {}",
            y.len(),
            decomp.n()
        ));
    }
    Ok(decomp.apply_gain(y, |s| filter.gain(s)))
}
