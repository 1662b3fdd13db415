//! Model selection: k-fold cross-validation on (bandwidth × regularization)
//! grids, early stopping on validation data, and the R² / sparsity metrics.

use std::cmp::Ordering;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::closed_form::DualCoefficients;
use crate::data::{rng_stream, streams, Dataset};
use crate::descent::SolutionPath;
use crate::descent::{Descent, DescentConfig, StepOutcome};
use crate::error::{input_err, Result};
use crate::kernels::{
    kernel_matrix, median_pairwise_distance, CrossKernelMatrix, KernelFamily, KernelMatrix, KernelSpec,
};
use crate::linalg::{logspace, Matrix, Vector};
use crate::prox::{fit_prox_from, Penalty, ProxConfig};
use crate::spectral::{eig_sym, Filter};

/// Coefficients with `|α_i|` at or below this count as zero.
pub const SPARSITY_THRESHOLD: f64 = 1e-10;

/// Which way the regularization coordinate points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    /// Penalty weight λ: larger is stronger.
    Lambda,
    /// Optimization time t: smaller is stronger.
    Time,
}

impl RegKind {
    /// Default bounds: λ ∈ [1e-6, 1e2], t ∈ [1e-2, 1e6].
    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            RegKind::Lambda => (1e-6, 1e2),
            RegKind::Time => (1e-2, 1e6),
        }
    }

    /// Strength ordering: `Greater` when `a` regularizes more than `b`.
    fn stronger(self, a: f64, b: f64) -> Ordering {
        match self {
            RegKind::Lambda => a.total_cmp(&b),
            RegKind::Time => b.total_cmp(&a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bandwidths: Vec<f64>,
    pub regs: Vec<f64>,
    pub reg_kind: RegKind,
    pub folds: usize,
}

impl GridSpec {
    /// `count` log-spaced bandwidths in `[0.1, 100] × median pairwise distance`
    /// and `count` log-spaced regularization values in the default bounds.
    pub fn default_for(x: &Matrix, reg_kind: RegKind, count: usize) -> Result<Self> {
        let med = median_pairwise_distance(x);
        if !(med > 0.0) {
            return input_err("inputs have zero median pairwise distance");
        }
        let (lo, hi) = reg_kind.default_bounds();
        Ok(Self {
            bandwidths: logspace(0.1 * med, 100.0 * med, count),
            regs: logspace(lo, hi, count),
            reg_kind,
            folds: 10,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("bandwidth", &self.bandwidths), ("regularization", &self.regs)] {
            if g.is_empty() {
                return input_err(format!("{name} grid is empty"));
            }
            if !g.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return input_err(format!("{name} grid must be positive"));
            }
        }
        if self.folds < 2 {
            return input_err("need at least two folds");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CvEstimator {
    Krr,
    Kgf {
        momentum: f64,
    },
    Prox {
        penalty: Penalty,
        max_iter: usize,
        tol: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub bandwidth: f64,
    pub reg: f64,
    pub mean_mse: f64,
    pub sd_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_bandwidth: f64,
    pub best_reg: f64,
    pub best_mse: f64,
    /// Bandwidth-major table of every grid cell.
    pub table: Vec<CvCell>,
}

impl CvResult {
    /// CSV with columns `bandwidth,reg,mean_mse,sd_mse`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bandwidth", "reg", "mean_mse", "sd_mse"])?;
        for c in &self.table {
            w.write_record(&[
                c.bandwidth.to_string(),
                c.reg.to_string(),
                c.mean_mse.to_string(),
                c.sd_mse.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seeded partition of `0..n` into `folds` nearly equal groups.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || n < folds {
        return input_err(format!("cannot split {n} observations into {folds} folds"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_stream(seed, streams::FOLDS));
    let mut out = vec![Vec::new(); folds];
    for (i, j) in idx.into_iter().enumerate() {
        out[i % folds].push(j);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn complement(n: usize, held: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

fn submatrix(m: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn subvector(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_fn(idx.len(), |i, _| v[idx[i]])
}

pub fn mse(y: &Vector, pred: &Vector) -> f64 {
    (y - pred).norm_squared() / y.len() as f64
}

/// Cell comparison: lower MSE, then stronger regularization, then larger bandwidth.
fn better(kind: RegKind, a: &CvCell, b: &CvCell) -> bool {
    match a.mean_mse.total_cmp(&b.mean_mse) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => match kind.stronger(a.reg, b.reg) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => a.bandwidth > b.bandwidth,
        },
    }
}

/// Select the cell with the lowest mean validation MSE.
pub fn best_cell(kind: RegKind, table: &[CvCell]) -> Option<CvCell> {
    let mut best: Option<CvCell> = None;
    for c in table {
        if !c.mean_mse.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| better(kind, c, b)) {
            best = Some(*c);
        }
    }
    best
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Validation MSE of every regularization value on one fold.
pub(crate) fn fold_scores(
    k_tr: KernelMatrix,
    y_tr: &Vector,
    k_val: &Matrix,
    y_val: &Vector,
    estimator: CvEstimator,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    match estimator {
        CvEstimator::Krr | CvEstimator::Kgf { .. } => {
            let d = eig_sym(&k_tr)?;
            let c = d.project(y_tr);
            // predictions K_val U diag(g) c, with K_val U formed once
            let kvu = k_val * &d.eigenvectors;
            grid.regs
                .iter()
                .map(|&reg| {
                    let filter = match estimator {
                        CvEstimator::Krr => Filter::Krr { lambda: reg },
                        CvEstimator::Kgf { momentum } => Filter::Kgf { t: reg, momentum },
                        CvEstimator::Prox { .. } => unreachable!(),
                    };
                    let gc = Vector::from_fn(c.len(), |i, _| c[i] * filter.gain(d.eigenvalues[i]));
                    Ok(mse(y_val, &(&kvu * gc)))
                })
                .collect()
        }
        CvEstimator::Prox { penalty, max_iter, tol } => {
            let s_max = eig_sym(&k_tr)?.s_max();
            let mut order: Vec<usize> = (0..grid.regs.len()).collect();
            order.sort_by(|&a, &b| grid.regs[b].total_cmp(&grid.regs[a]));
            let mut out = vec![f64::NAN; grid.regs.len()];
            let mut start = Vector::zeros(y_tr.len());
            for i in order {
                let cfg = ProxConfig::new(penalty, grid.regs[i]).max_iter(max_iter).tol(tol);
                let fit = fit_prox_from(&k_tr, y_tr, &cfg, &start, Some(s_max))?;
                start = fit.vector();
                out[i] = mse(y_val, &(k_val * &start));
            }
            Ok(out)
        }
    }
}

/// k-fold cross-validation of mean validation MSE over the grid.
pub fn kfold_cv(
    data: &Dataset,
    family: KernelFamily,
    estimator: CvEstimator,
    grid: &GridSpec,
    seed: u64,
) -> Result<CvResult> {
    grid.validate()?;
    if let (RegKind::Time, CvEstimator::Krr | CvEstimator::Prox { .. }) | (RegKind::Lambda, CvEstimator::Kgf { .. }) =
        (grid.reg_kind, estimator)
    {
        return input_err("grid regularization kind does not match the estimator");
    }
    let n = data.n();
    let folds = fold_indices(n, grid.folds, seed)?;
    let mut table = Vec::with_capacity(grid.bandwidths.len() * grid.regs.len());
    for &bw in &grid.bandwidths {
        let spec = KernelSpec::new(family, bw)?;
        let k_full = kernel_matrix(&spec, &data.x, 0.0)?;
        let mut scores: Vec<Vec<f64>> = Vec::with_capacity(folds.len());
        for held in &folds {
            let tr = complement(n, held);
            let k_tr = KernelMatrix::from_matrix(submatrix(k_full.matrix(), &tr, &tr))?;
            let k_val = submatrix(k_full.matrix(), held, &tr);
            scores.push(fold_scores(
                k_tr,
                &subvector(&data.y, &tr),
                &k_val,
                &subvector(&data.y, held),
                estimator,
                grid,
            )?);
        }
        for (r, &reg) in grid.regs.iter().enumerate() {
            let per_fold: Vec<f64> = scores.iter().map(|s| s[r]).collect();
            let (mean_mse, sd_mse) = mean_sd(&per_fold);
            table.push(CvCell {
                bandwidth: bw,
                reg,
                mean_mse,
                sd_mse,
            });
        }
    }
    let best =
        best_cell(grid.reg_kind, &table).ok_or_else(|| crate::error::Error::Input("no finite CV score".into()))?;
    Ok(CvResult {
        best_bandwidth: best.bandwidth,
        best_reg: best.reg,
        best_mse: best.mean_mse,
        table,
    })
}

/// Checkpoint with the lowest validation MSE; ties go to the earliest time.
pub fn early_stop_select(path: &SolutionPath, k_val: &CrossKernelMatrix, y_val: &Vector) -> Result<(f64, Vector)> {
    if k_val.matrix().ncols() != path.checkpoints[0].alpha.len() || k_val.matrix().nrows() != y_val.len() {
        return input_err("validation kernel rows do not match the path or responses");
    }
    let mut best: Option<(f64, f64, Vector)> = None;
    for c in &path.checkpoints {
        let a = c.alpha_vector();
        let score = mse(y_val, &k_val.mul_vec(&a));
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, c.time, a));
        }
    }
    let (_, t, a) = best.expect("path holds at least one checkpoint");
    Ok((t, a))
}

/// Validation MSE at each time of `times` (ascending) along a descent run.
///
/// The run stops early once `patience` consecutive grid times fail to improve
/// on the best score; remaining entries repeat the score at the stopping time.
pub fn validation_curve(
    k: &KernelMatrix,
    y: &Vector,
    k_val: &Matrix,
    y_val: &Vector,
    config: &DescentConfig,
    times: &[f64],
    patience: usize,
) -> Result<Vec<f64>> {
    let eta = config.step_size;
    let max_steps = config.max_steps;
    let mut state = Descent::new(k, y, config.clone())?;
    let mut out = Vec::with_capacity(times.len());
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut done = false;
    for &t in times {
        let target = ((t / eta).round() as usize).min(max_steps);
        while !done && state.steps_taken() < target {
            if state.step()? == StepOutcome::Converged {
                done = true;
            }
        }
        let score = mse(y_val, &(k_val * state.alpha()));
        out.push(score);
        if score < best {
            best = score;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= patience || state.steps_taken() >= max_steps {
            done = true;
        }
        if done && since_best >= patience {
            break;
        }
    }
    let last = *out.last().unwrap_or(&f64::INFINITY);
    out.resize(times.len(), last);
    Ok(out)
}

/// `1 - SSE / SST`.
pub fn r2(y_true: &Vector, y_pred: &Vector) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return input_err("length mismatch in r2");
    }
    let mean = y_true.mean();
    let sst: f64 = y_true.iter().map(|v| (v - mean).powi(2)).sum();
    if !(sst > 0.0) {
        return input_err("r2 undefined for a constant response");
    }
    let sse = (y_true - y_pred).norm_squared();
    Ok(1.0 - sse / sst)
}

/// Fraction of coefficients with magnitude above `threshold`.
pub fn sparsity(alpha: &[f64], threshold: f64) -> f64 {
    if alpha.is_empty() {
        return 0.0;
    }
    alpha.iter().filter(|a| a.abs() > threshold).count() as f64 / alpha.len() as f64
}

pub fn dual_sparsity(dual: &DualCoefficients) -> f64 {
    sparsity(&dual.alpha, SPARSITY_THRESHOLD)
}
