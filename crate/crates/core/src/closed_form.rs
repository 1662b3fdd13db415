//! Closed-form estimators: kernel ridge regression and kernel gradient flow.

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::kernels::{cross_kernel_matrix, KernelMatrix, KernelSpec};
use crate::linalg::{all_finite, Matrix, Vector};
use crate::prox::Penalty;
use crate::spectral::{apply_filter, eig_sym, Filter, SpectralDecomposition};

/// The regularization coordinate that produced a coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    Ridge { lambda: f64 },
    FlowTime { t: f64, momentum: f64 },
    Prox { lambda: f64, penalty: Penalty },
    Steps { steps: usize, step_size: f64 },
}

/// Dual coefficients `α`; predictions are `K* α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCoefficients {
    pub alpha: Vec<f64>,
    pub regularizer: Regularizer,
    pub kernel: Option<KernelSpec>,
    /// Set when an iterative solver stopped at its iteration cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl DualCoefficients {
    pub fn new(alpha: Vector, regularizer: Regularizer) -> Self {
        Self {
            alpha: alpha.as_slice().to_vec(),
            regularizer,
            kernel: None,
            warning: None,
        }
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = Some(kernel);
        self
    }

    pub fn vector(&self) -> Vector {
        Vector::from_column_slice(&self.alpha)
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Coefficients together with the training inputs needed to evaluate `K*`.
#[derive(Debug, Clone)]
pub struct FitModel {
    pub dual: DualCoefficients,
    pub training_inputs: Matrix,
}

impl FitModel {
    pub fn new(dual: DualCoefficients, training_inputs: Matrix) -> Result<Self> {
        if training_inputs.nrows() != dual.len() {
            return input_err(format!(
                "training rows ({}) do not match coefficient length ({})",
                training_inputs.nrows(),
                dual.len()
            ));
        }
        Ok(Self { dual, training_inputs })
    }
}

fn check_inputs(k: &KernelMatrix, y: &Vector) -> Result<()> {
    if y.len() != k.n() {
        return input_err(format!(
            "response length {} does not match kernel size {}",
            y.len(),
            k.n()
        ));
    }
    if !all_finite(y) {
        return input_err("response has non-finite entries");
    }
    Ok(())
}

/// `α = (K + λI)⁻¹ y`.
pub fn fit_krr(k: &KernelMatrix, y: &Vector, lambda: f64) -> Result<DualCoefficients> {
    check_inputs(k, y)?;
    let decomp = eig_sym(k)?;
    fit_krr_spectral(&decomp, y, lambda)
}

pub fn fit_krr_spectral(decomp: &SpectralDecomposition, y: &Vector, lambda: f64) -> Result<DualCoefficients> {
    let alpha = apply_filter(decomp, Filter::Krr { lambda }, y)?;
    Ok(DualCoefficients::new(alpha, Regularizer::Ridge { lambda }))
}

/// `α(t) = (I - exp(-tK/(1-γ))) K⁻¹ y`, well defined for singular `K`.
pub fn fit_kgf(k: &KernelMatrix, y: &Vector, t: f64, momentum: f64) -> Result<DualCoefficients> {
    check_inputs(k, y)?;
    let decomp = eig_sym(k)?;
    fit_kgf_spectral(&decomp, y, t, momentum)
}

pub fn fit_kgf_spectral(decomp: &SpectralDecomposition, y: &Vector, t: f64, momentum: f64) -> Result<DualCoefficients> {
    let alpha = apply_filter(decomp, Filter::Kgf { t, momentum }, y)?;
    Ok(DualCoefficients::new(alpha, Regularizer::FlowTime { t, momentum }))
}

pub fn predict(model: &FitModel, spec: &KernelSpec, xstar: &Matrix) -> Result<Vector> {
    let kstar = cross_kernel_matrix(spec, xstar, &model.training_inputs)?;
    Ok(kstar.mul_vec(&model.dual.vector()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::kernel_matrix;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn toy(n: usize, seed: u64) -> (Matrix, Vector, KernelSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(-2.0..2.0));
        let y = Vector::from_fn(n, |i, _| (2.0 * x[(i, 0)]).sin() + 0.1 * rng.random_range(-1.0..1.0));
        (x, y, KernelSpec::gaussian(0.8).unwrap())
    }

    #[test]
    fn krr_examples() {
        let a = fit_krr(&KernelMatrix::identity(2), &v(&[1.0, 2.0]), 1.0).unwrap();
        assert_relative_eq!(a.vector(), v(&[0.5, 1.0]), epsilon = 1e-15);
        assert_eq!(a.regularizer, Regularizer::Ridge { lambda: 1.0 });

        let k = KernelMatrix::from_diagonal(&[2.0, 1.0]).unwrap();
        let a = fit_krr(&k, &v(&[3.0, 3.0]), 1.0).unwrap();
        assert_relative_eq!(a.vector(), v(&[1.0, 1.5]), epsilon = 1e-14);

        let (x, y, spec) = toy(6, 1);
        let k = kernel_matrix(&spec, &x, 0.0).unwrap();
        let a = fit_krr(&k, &y, 1e6).unwrap();
        assert!(a.vector().norm() <= 2e-6 * y.norm());
    }

    #[test]
    fn krr_matches_cholesky_solve() {
        let (x, y, spec) = toy(12, 2);
        let k = kernel_matrix(&spec, &x, 0.0).unwrap();
        for &lambda in &[1e-3, 0.1, 10.0] {
            let a = fit_krr(&k, &y, lambda).unwrap().vector();
            let shifted = k.matrix() + Matrix::identity(12, 12) * lambda;
            let direct = shifted.clone().cholesky().unwrap().solve(&y);
            assert!((&a - &direct).norm() <= 1e-8 * direct.norm());
            let resid = &shifted * &a - &y;
            assert!(resid.norm() <= 1e-8 * y.norm());
        }
    }

    #[test]
    fn kgf_examples() {
        let (x, y, spec) = toy(5, 3);
        let k = kernel_matrix(&spec, &x, 0.0).unwrap();
        assert_eq!(fit_kgf(&k, &y, 0.0, 0.0).unwrap().vector().amax(), 0.0);

        let a = fit_kgf(&KernelMatrix::identity(1), &v(&[4.0]), 2f64.ln(), 0.0).unwrap();
        assert_relative_eq!(a.alpha[0], 2.0, epsilon = 1e-14);

        let k = KernelMatrix::from_diagonal(&[2.0, 1.0]).unwrap();
        let a = fit_kgf(&k, &v(&[2.0, 1.0]), 1.0, 0.0).unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(a.vector(), v(&[1.0 - e.powi(-2), 1.0 - 1.0 / e]), epsilon = 1e-14);
        assert_eq!(a.regularizer, Regularizer::FlowTime { t: 1.0, momentum: 0.0 });
    }

    #[test]
    fn rejects_mismatched_response() {
        let k = KernelMatrix::identity(3);
        assert!(fit_krr(&k, &v(&[1.0, 2.0]), 1.0).is_err());
        assert!(fit_kgf(&k, &v(&[1.0, f64::NAN, 0.0]), 1.0, 0.0).is_err());
        assert!(fit_krr(&k, &v(&[1.0, 2.0, 3.0]), 0.0).is_err());
    }

    #[test]
    fn predict_examples() {
        let (x, y, spec) = toy(5, 4);
        let k = kernel_matrix(&spec, &x, 0.0).unwrap();
        let dual = fit_krr(&k, &y, 0.3).unwrap().with_kernel(spec);
        let model = FitModel::new(dual.clone(), x.clone()).unwrap();
        let f = predict(&model, &spec, &x).unwrap();
        let shifted = k.matrix() + Matrix::identity(5, 5) * 0.3;
        let expected = k.matrix() * shifted.try_inverse().unwrap() * &y;
        assert!((&f - &expected).amax() < 1e-10);

        let zero = FitModel::new(
            DualCoefficients::new(Vector::zeros(5), Regularizer::Ridge { lambda: 1.0 }),
            x.clone(),
        )
        .unwrap();
        assert_eq!(predict(&zero, &spec, &x).unwrap().amax(), 0.0);

        // independent dense evaluation of K* alpha at new points
        let xs = Matrix::from_column_slice(3, 1, &[-1.3, 0.2, 1.7]);
        let f = predict(&model, &spec, &xs).unwrap();
        for i in 0..3 {
            let mut acc = 0.0;
            for j in 0..5 {
                let d = xs[(i, 0)] - x[(j, 0)];
                acc += (-d * d / (2.0 * 0.8 * 0.8)).exp() * dual.alpha[j];
            }
            assert!((f[i] - acc).abs() < 1e-12);
        }
        assert!(predict(&model, &spec, &Matrix::zeros(2, 2)).is_err());
        assert!(FitModel::new(dual, Matrix::zeros(4, 1)).is_err());
    }

    #[test]
    fn f_space_flow_consistency() {
        // K* K⁻¹ (I - exp(-tK)) y via an explicit inverse and a truncated exponential series
        let (x, y, spec) = toy(8, 5);
        let k = kernel_matrix(&spec, &x, 1e-3).unwrap();
        let xs = Matrix::from_column_slice(4, 1, &[-1.9, -0.4, 0.9, 1.6]);
        let ks = cross_kernel_matrix(&spec, &xs, &x).unwrap();
        let kinv = k.matrix().clone().try_inverse().unwrap();
        for &t in &[0.1, 1.0, 5.0] {
            let mut expm = Matrix::identity(8, 8);
            let mut term = Matrix::identity(8, 8);
            for j in 1..80 {
                term = &term * k.matrix() * (-t / j as f64);
                expm += &term;
            }
            let direct = ks.matrix() * &kinv * (Matrix::identity(8, 8) - expm) * &y;
            let dual = fit_kgf(&k, &y, t, 0.0).unwrap();
            let model = FitModel::new(dual, x.clone()).unwrap();
            let f = predict(&model, &spec, &xs).unwrap();
            assert!((&f - &direct).norm() <= 1e-6 * direct.norm(), "t={t}");
        }
    }

    #[test]
    fn flow_and_ridge_limits_agree() {
        let (x, y, spec) = toy(7, 6);
        let k = kernel_matrix(&spec, &x, 1e-2).unwrap();
        let flow = fit_kgf(&k, &y, 1e5, 0.0).unwrap().vector();
        let ridge = fit_krr(&k, &y, 1e-10).unwrap().vector();
        assert!((&flow - &ridge).norm() <= 1e-6 * ridge.norm());
    }

    #[test]
    fn worst_case_interlacing() {
        // e^{-t s_min} <= 1/(1 + t s_min) and 1 - 1/(1 + t s_max) <= 1 - e^{-t s_max}
        let (x, _, spec) = toy(10, 7);
        let k = kernel_matrix(&spec, &x, 1e-8).unwrap();
        let d = eig_sym(&k).unwrap();
        for &t in &[1e-2, 0.5, 3.0, 100.0] {
            let (lo, hi) = (d.s_min(), d.s_max());
            assert!((-t * lo).exp() <= 1.0 / (1.0 + t * lo));
            assert!(1.0 - 1.0 / (1.0 + t * hi) <= 1.0 - (-t * hi).exp());
        }
    }
}
