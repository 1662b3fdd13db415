//! Stationary kernels and (cross-)Gram matrices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::linalg::{Matrix, Vector};

/// The five stationary kernel families. All satisfy `k(x, x) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Matern12,
    Matern32,
    Matern52,
    Cauchy,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] = [
        KernelFamily::Gaussian,
        KernelFamily::Matern12,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
        KernelFamily::Cauchy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Matern12 => "matern12",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
            KernelFamily::Cauchy => "cauchy",
        }
    }

    /// Kernel value as a function of the squared distance and the bandwidth.
    fn profile(self, sq_dist: f64, bandwidth: f64) -> f64 {
        let s2 = bandwidth * bandwidth;
        match self {
            KernelFamily::Gaussian => (-sq_dist / (2.0 * s2)).exp(),
            KernelFamily::Cauchy => 1.0 / (1.0 + sq_dist / s2),
            KernelFamily::Matern12 => (-sq_dist.sqrt() / bandwidth).exp(),
            KernelFamily::Matern32 => {
                let r = 3f64.sqrt() * sq_dist.sqrt() / bandwidth;
                (1.0 + r) * (-r).exp()
            }
            KernelFamily::Matern52 => {
                let r = 5f64.sqrt() * sq_dist.sqrt() / bandwidth;
                (1.0 + r + 5.0 * sq_dist / (3.0 * s2)) * (-r).exp()
            }
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelFamily::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown kernel family '{s}'")))
    }
}

/// A kernel family together with its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return input_err(format!("bandwidth must be positive and finite, got {bandwidth}"));
        }
        Ok(Self { family, bandwidth })
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, bandwidth)
    }

    #[inline]
    fn eval_rows(&self, a: &[f64], b: &[f64]) -> f64 {
        if a == b {
            return 1.0;
        }
        let sq: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let d = x - y;
                d * d
            })
            .sum();
        self.family.profile(sq, self.bandwidth)
    }
}

/// Symmetric Gram matrix `K_ij = k(x_i, x_j)` plus a diagonal jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: Matrix,
    jitter: f64,
}

impl KernelMatrix {
    /// Wrap an explicit symmetric matrix (e.g. a diagonal test matrix).
    pub fn from_matrix(entries: Matrix) -> Result<Self> {
        if !entries.is_square() {
            return input_err("kernel matrix must be square");
        }
        let n = entries.nrows();
        for i in 0..n {
            for j in 0..i {
                if entries[(i, j)] != entries[(j, i)] {
                    return input_err(format!("kernel matrix not symmetric at ({i}, {j})"));
                }
            }
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return input_err("kernel matrix has non-finite entries");
        }
        Ok(Self { entries, jitter: 0.0 })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_matrix(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: Matrix::identity(n, n),
            jitter: 0.0,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        &self.entries * v
    }
}

/// Rectangular `n* x n` matrix of kernel evaluations between new and training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossKernelMatrix {
    entries: Matrix,
}

impl CrossKernelMatrix {
    pub fn from_matrix(entries: Matrix) -> Self {
        Self { entries }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn mul_vec(&self, alpha: &Vector) -> Vector {
        &self.entries * alpha
    }
}

fn row(x: &Matrix, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

pub fn eval_kernel(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    if x.len() != x2.len() {
        return input_err(format!("dimension mismatch: {} vs {}", x.len(), x2.len()));
    }
    Ok(spec.eval_rows(x, x2))
}

/// Gram matrix of the rows of `x`. Each unordered pair is evaluated once, so the
/// result is exactly symmetric.
pub fn kernel_matrix(spec: &KernelSpec, x: &Matrix, jitter: f64) -> Result<KernelMatrix> {
    let n = x.nrows();
    if n == 0 {
        return input_err("kernel matrix needs at least one row");
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return input_err(format!("jitter must be nonnegative, got {jitter}"));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| row(x, i)).collect();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0 + jitter;
        for j in 0..i {
            let v = spec.eval_rows(&rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(KernelMatrix { entries: k, jitter })
}

pub fn cross_kernel_matrix(spec: &KernelSpec, xstar: &Matrix, x: &Matrix) -> Result<CrossKernelMatrix> {
    if xstar.ncols() != x.ncols() {
        return input_err(format!(
            "feature dimension mismatch: {} vs {}",
            xstar.ncols(),
            x.ncols()
        ));
    }
    let train: Vec<Vec<f64>> = (0..x.nrows()).map(|i| row(x, i)).collect();
    let mut k = Matrix::zeros(xstar.nrows(), x.nrows());
    for i in 0..xstar.nrows() {
        let r = row(xstar, i);
        for (j, t) in train.iter().enumerate() {
            k[(i, j)] = spec.eval_rows(&r, t);
        }
    }
    Ok(CrossKernelMatrix { entries: k })
}

/// Median Euclidean distance between distinct rows; used to scale bandwidth grids.
pub fn median_pairwise_distance(x: &Matrix) -> f64 {
    let n = x.nrows();
    let mut d = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in 0..i {
            d.push((x.row(i) - x.row(j)).norm());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let m = crate::linalg::quantile(&d, 0.5);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn gaussian_values() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(eval_kernel(&g, &[0.3, 2.0], &[0.3, 2.0]).unwrap(), 1.0);
        assert_relative_eq!(
            eval_kernel(&g, &[0.0], &[1.0]).unwrap(),
            (-0.5f64).exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            eval_kernel(&g, &[0.0, 0.0], &[0.6, 0.8]).unwrap(),
            0.6065306597126334,
            epsilon = 1e-12
        );
    }

    #[test]
    fn table_kernels() {
        let c = KernelSpec::new(KernelFamily::Cauchy, 1.0).unwrap();
        assert_relative_eq!(eval_kernel(&c, &[0.0], &[1.0]).unwrap(), 0.5);
        let m = KernelSpec::new(KernelFamily::Matern12, 2.0).unwrap();
        assert_relative_eq!(
            eval_kernel(&m, &[0.0], &[2.0]).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        let m32 = KernelSpec::new(KernelFamily::Matern32, 1.0).unwrap();
        let r = 3f64.sqrt();
        assert_relative_eq!(
            eval_kernel(&m32, &[0.0], &[1.0]).unwrap(),
            (1.0 + r) * (-r).exp(),
            epsilon = 1e-15
        );
        let m52 = KernelSpec::new(KernelFamily::Matern52, 1.0).unwrap();
        let r = 5f64.sqrt();
        assert_relative_eq!(
            eval_kernel(&m52, &[0.0], &[1.0]).unwrap(),
            (1.0 + r + 5.0 / 3.0) * (-r).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn dimension_mismatch() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert!(matches!(eval_kernel(&g, &[0.0], &[1.0, 2.0]), Err(Error::Input(_))));
        let x = Matrix::zeros(3, 2);
        let xs = Matrix::zeros(2, 3);
        assert!(cross_kernel_matrix(&g, &xs, &x).is_err());
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in KernelFamily::ALL {
            assert_eq!(f.name().parse::<KernelFamily>().unwrap(), f);
        }
        assert!("laplace".parse::<KernelFamily>().is_err());
    }

    #[test]
    fn gram_examples() {
        for f in KernelFamily::ALL {
            let spec = KernelSpec::new(f, 0.7).unwrap();
            let k = kernel_matrix(&spec, &col(&[1.5, 1.5]), 0.0).unwrap();
            assert!(k.matrix().iter().all(|&v| v == 1.0));
        }
        let g = KernelSpec::gaussian(1.0).unwrap();
        let k = kernel_matrix(&g, &col(&[0.0, 1.0]), 0.0).unwrap();
        let e = (-0.5f64).exp();
        assert_eq!(k.matrix()[(0, 1)], e);
        assert_eq!(k.matrix()[(1, 0)], e);
        assert_eq!(k.matrix()[(0, 0)], 1.0);
        let kj = kernel_matrix(&g, &col(&[0.0, 1.0, 3.0]), 1e-10).unwrap();
        for i in 0..3 {
            assert_eq!(kj.matrix()[(i, i)], 1.0 + 1e-10);
        }
    }

    #[test]
    fn cross_examples() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let x = col(&[0.0, 1.0, 2.5]);
        let c = cross_kernel_matrix(&g, &x, &x).unwrap();
        assert_eq!(c.matrix(), kernel_matrix(&g, &x, 0.0).unwrap().matrix());
        let c = cross_kernel_matrix(&g, &col(&[1.0]), &x).unwrap();
        assert_eq!(c.matrix()[(0, 1)], 1.0);
        let c = cross_kernel_matrix(&g, &col(&[0.5]), &col(&[0.0, 1.0])).unwrap();
        assert_relative_eq!(c.matrix()[(0, 0)], (-0.125f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(c.matrix()[(0, 1)], (-0.125f64).exp(), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn symmetric_and_in_range(
            pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..25),
            bw in 0.2f64..5.0,
            fam in 0usize..5,
        ) {
            let n = pts.len();
            let x = Matrix::from_fn(n, 2, |i, j| pts[i][j]);
            let spec = KernelSpec::new(KernelFamily::ALL[fam], bw).unwrap();
            let k = kernel_matrix(&spec, &x, 0.0).unwrap();
            let m = k.matrix();
            prop_assert!(m == &m.transpose());
            prop_assert!(m.iter().all(|&v| v > 0.0 && v <= 1.0));
        }

        #[test]
        fn monotone_decay(r1 in 0.0f64..10.0, dr in 1e-3f64..5.0, bw in 0.3f64..3.0, fam in 0usize..5) {
            let spec = KernelSpec::new(KernelFamily::ALL[fam], bw).unwrap();
            let dir = [0.6, -0.8];
            let a = eval_kernel(&spec, &[0.0, 0.0], &[dir[0] * r1, dir[1] * r1]).unwrap();
            let r2 = r1 + dr;
            let b = eval_kernel(&spec, &[0.0, 0.0], &[dir[0] * r2, dir[1] * r2]).unwrap();
            prop_assert!(b <= a);
        }
    }
}
