//! l1 and l-infinity penalized kernel regression by proximal gradient descent.
//!
//! The smooth part of the objective is `½‖y - Kα‖²_{K⁻¹}`, whose gradient in
//! `α` is simply `Kα - y`; the `K⁻¹` weight never has to be formed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::closed_form::{DualCoefficients, Regularizer};
use crate::error::{input_err, Error, Result};
use crate::kernels::KernelMatrix;
use crate::linalg::{all_finite, norm_l1, norm_linf, sign, Vector};
use crate::spectral::{eig_sym, SpectralDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    Linf,
}

impl Penalty {
    pub fn name(self) -> &'static str {
        match self {
            Penalty::L1 => "l1",
            Penalty::Linf => "linf",
        }
    }

    pub fn norm(self, v: &Vector) -> f64 {
        match self {
            Penalty::L1 => norm_l1(v),
            Penalty::Linf => norm_linf(v),
        }
    }

    /// `prox_{τ‖·‖}(v)`.
    pub fn prox(self, v: &Vector, tau: f64) -> Vector {
        match self {
            Penalty::L1 => soft_threshold(v, tau),
            Penalty::Linf => prox_linf(v, tau),
        }
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Penalty::L1),
            "linf" => Ok(Penalty::Linf),
            _ => input_err(format!("unknown penalty '{s}' (expected l1 or linf)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxConfig {
    pub penalty: Penalty,
    pub lambda: f64,
    /// Step size; `None` selects `1 / s_max(K)`.
    pub step_size: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl ProxConfig {
    pub fn new(penalty: Penalty, lambda: f64) -> Self {
        Self {
            penalty,
            lambda,
            step_size: None,
            max_iter: 1_000_000,
            tol: 1e-8,
        }
    }

    pub fn step_size(mut self, eta: f64) -> Self {
        self.step_size = Some(eta);
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return input_err(format!("lambda must be positive, got {}", self.lambda));
        }
        if let Some(eta) = self.step_size {
            if !(eta > 0.0 && eta.is_finite()) {
                return input_err(format!("step size must be positive, got {eta}"));
            }
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return input_err("tol and max_iter must be positive");
        }
        Ok(())
    }
}

/// Elementwise `sign(v_i) max(|v_i| - τ, 0)`.
pub fn soft_threshold(v: &Vector, tau: f64) -> Vector {
    v.map(|x| sign(x) * (x.abs() - tau).max(0.0))
}

/// Euclidean projection onto `{u : ‖u‖₁ ≤ r}` by sorting and scanning.
pub fn project_l1_ball(v: &Vector, r: f64) -> Vector {
    if norm_l1(v) <= r {
        return v.clone();
    }
    if r <= 0.0 {
        return Vector::zeros(v.len());
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cum += m;
        let candidate = (cum - r) / (j + 1) as f64;
        if m > candidate {
            tau = candidate;
        } else {
            break;
        }
    }
    soft_threshold(v, tau)
}

/// `prox_{τ‖·‖_∞}(v) = v - P_{‖·‖₁ ≤ τ}(v)`.
pub fn prox_linf(v: &Vector, tau: f64) -> Vector {
    if tau <= 0.0 {
        return v.clone();
    }
    v - project_l1_ball(v, tau)
}

/// Full objective `½‖y - Kα‖²_{K⁻¹} + λ‖α‖`, with the pseudo-inverse on the
/// null space of `K`.
pub fn prox_objective(
    k: &KernelMatrix,
    decomp: &SpectralDecomposition,
    y: &Vector,
    alpha: &Vector,
    penalty: Penalty,
    lambda: f64,
) -> f64 {
    let r = y - k.mul_vec(alpha);
    let c = decomp.project(&r);
    let cutoff = decomp.s_max() * 1e-14;
    let fit: f64 = c
        .iter()
        .zip(decomp.eigenvalues.iter())
        .filter(|(_, &s)| s > cutoff)
        .map(|(ci, s)| ci * ci / s)
        .sum();
    0.5 * fit + lambda * penalty.norm(alpha)
}

/// Proximal gradient descent from `α = 0`.
pub fn fit_prox(k: &KernelMatrix, y: &Vector, config: ProxConfig) -> Result<DualCoefficients> {
    fit_prox_from(k, y, &config, &Vector::zeros(y.len()), None)
}

/// Proximal gradient descent from a warm start. `s_max` may be supplied to
/// avoid a factorization when the default step size is used.
pub fn fit_prox_from(
    k: &KernelMatrix,
    y: &Vector,
    config: &ProxConfig,
    start: &Vector,
    s_max: Option<f64>,
) -> Result<DualCoefficients> {
    config.validate()?;
    if y.len() != k.n() || start.len() != k.n() {
        return input_err(format!(
            "dimension mismatch: kernel {}, response {}, start {}",
            k.n(),
            y.len(),
            start.len()
        ));
    }
    if !all_finite(y) || !all_finite(start) {
        return input_err("non-finite response or starting point");
    }
    let eta = match config.step_size {
        Some(eta) => eta,
        None => {
            let s = match s_max {
                Some(s) => s,
                None => eig_sym(k)?.s_max(),
            };
            if s <= 0.0 {
                return input_err("kernel matrix is zero");
            }
            1.0 / s
        }
    };
    let km = k.matrix();
    let n = y.len();
    let tau = eta * config.lambda;
    let mut alpha = start.clone();
    let mut kalpha = km * &alpha;
    let mut converged = false;
    for iter in 0..config.max_iter {
        let mut grad_step = &alpha - (&kalpha - y) * eta;
        grad_step = config.penalty.prox(&grad_step, tau);
        let delta = &grad_step - &alpha;
        let change = norm_linf(&delta);
        let nnz = delta.iter().filter(|d| **d != 0.0).count();
        if nnz * 4 < n {
            for (j, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    kalpha.axpy(d, &km.column(j), 1.0);
                }
            }
        } else {
            kalpha.gemv(1.0, km, &delta, 1.0);
        }
        alpha = grad_step;
        if iter % 1024 == 1023 {
            kalpha = km * &alpha;
        }
        if !all_finite(&alpha) {
            return Err(Error::Divergence {
                step: iter + 1,
                gradient_norm: f64::INFINITY,
                limit: f64::MAX,
            });
        }
        if change <= config.tol * eta {
            converged = true;
            break;
        }
    }
    let mut dual = DualCoefficients::new(
        alpha,
        Regularizer::Prox {
            lambda: config.lambda,
            penalty: config.penalty,
        },
    );
    if !converged {
        let msg = format!(
            "proximal gradient reached max_iter = {} before the fixed-point tolerance",
            config.max_iter
        );
        log::debug!("{msg}");
        dual.warning = Some(msg);
    }
    Ok(dual)
}
