//! Seeded experiment harness: generate or load data, split, select
//! hyperparameters, fit every requested estimator and score it on held-out data.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{fit_kgf_spectral, fit_krr_spectral, DualCoefficients, Regularizer};
use crate::data::{
    apply_standardization, fit_standardization, gen_synthetic, inject_outliers, split, subsample, Dataset, Synthetic,
};
use crate::descent::{kgd_gain, Descent, DescentConfig, Method, StepOutcome};
use crate::error::{input_err, Error, Result};
use crate::kernels::{
    cross_kernel_matrix, kernel_matrix, median_pairwise_distance, KernelFamily, KernelMatrix, KernelSpec,
};
use crate::linalg::{logspace, quantile, Matrix, Vector};
use crate::prox::{fit_prox_from, Penalty, ProxConfig};
use crate::select::{
    best_cell, dual_sparsity, fold_scores, kfold_cv, mse, r2, validation_curve, CvCell, CvEstimator, GridSpec, RegKind,
};
use crate::spectral::eig_sym;

/// Every estimator the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Krr,
    Kgf,
    Kgd,
    Ksgd,
    Kcd,
    Kegd,
    Kl1r,
    Klinfr,
}

impl Estimator {
    pub const ALL: [Estimator; 8] = [
        Estimator::Krr,
        Estimator::Kgf,
        Estimator::Kgd,
        Estimator::Ksgd,
        Estimator::Kcd,
        Estimator::Kegd,
        Estimator::Kl1r,
        Estimator::Klinfr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Krr => "krr",
            Estimator::Kgf => "kgf",
            Estimator::Kgd => "kgd",
            Estimator::Ksgd => "ksgd",
            Estimator::Kcd => "kcd",
            Estimator::Kegd => "kegd",
            Estimator::Kl1r => "kl1r",
            Estimator::Klinfr => "klinfr",
        }
    }

    pub fn descent_method(self) -> Option<Method> {
        match self {
            Estimator::Kgd => Some(Method::Kgd),
            Estimator::Ksgd => Some(Method::Ksgd),
            Estimator::Kcd => Some(Method::Kcd),
            Estimator::Kegd => Some(Method::Kegd),
            _ => None,
        }
    }

    pub fn penalty(self) -> Option<Penalty> {
        match self {
            Estimator::Kl1r => Some(Penalty::L1),
            Estimator::Klinfr => Some(Penalty::Linf),
            _ => None,
        }
    }

    /// Time-indexed (larger is weaker) or penalty-indexed regularization.
    pub fn reg_kind(self) -> RegKind {
        match self {
            Estimator::Krr | Estimator::Kl1r | Estimator::Klinfr => RegKind::Lambda,
            _ => RegKind::Time,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Input(format!("unknown method '{s}'")))
    }
}

/// Selection and optimization settings shared by single fits and experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub kernel: KernelFamily,
    /// Points per axis of the bandwidth and regularization grids.
    pub grid_size: usize,
    pub folds: usize,
    /// Fraction of the training set kept for fitting when selecting on validation data.
    pub validation_split: f64,
    pub kgd_step_size: f64,
    pub sign_step_size: f64,
    /// Largest stopping time considered for the sign-based methods.
    pub sign_t_max: f64,
    pub time_grid_size: usize,
    /// Validation grid points without improvement before a run is cut short.
    pub patience: usize,
    pub prox_max_iter: usize,
    pub prox_tol: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            kernel: KernelFamily::Gaussian,
            grid_size: 20,
            folds: 10,
            validation_split: 0.8,
            kgd_step_size: 1e-4,
            sign_step_size: 1e-3,
            sign_t_max: 1e3,
            time_grid_size: 40,
            patience: 6,
            prox_max_iter: 2000,
            prox_tol: 1e-6,
        }
    }
}

impl Protocol {
    /// 50×50 selection grids.
    pub fn paper_grid(mut self) -> Self {
        self.grid_size = 50;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 || self.time_grid_size == 0 {
            return input_err("grid sizes must be positive");
        }
        if self.folds < 2 {
            return input_err("need at least two folds");
        }
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return input_err("validation split must lie in (0, 1)");
        }
        for (name, v) in [
            ("kgd step size", self.kgd_step_size),
            ("sign step size", self.sign_step_size),
            ("sign time limit", self.sign_t_max),
            ("prox tolerance", self.prox_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return input_err(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    fn step_size(&self, m: Method) -> f64 {
        if m == Method::Kgd {
            self.kgd_step_size
        } else {
            self.sign_step_size
        }
    }

    fn t_max(&self, m: Method) -> f64 {
        if m == Method::Kgd {
            RegKind::Time.default_bounds().1
        } else {
            self.sign_t_max
        }
    }

    fn time_grid(&self, m: Method) -> Vec<f64> {
        let eta = self.step_size(m);
        let lo = (10.0 * eta).max(RegKind::Time.default_bounds().0);
        logspace(lo, self.t_max(m).max(lo), self.time_grid_size)
    }
}

/// What to fix and what to select for one fit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitRequest {
    /// Fixed bandwidth; selected from the grid when absent.
    pub bandwidth: Option<f64>,
    /// Fixed λ or stopping time; selected when absent.
    pub reg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitted {
    pub estimator: Estimator,
    pub dual: DualCoefficients,
    pub spec: KernelSpec,
    /// λ for penalized estimators, time otherwise.
    pub reg: f64,
}

impl Fitted {
    pub fn predict(&self, train_x: &Matrix, xstar: &Matrix) -> Result<Vector> {
        Ok(cross_kernel_matrix(&self.spec, xstar, train_x)?.mul_vec(&self.dual.vector()))
    }

    pub fn sparsity(&self) -> f64 {
        dual_sparsity(&self.dual)
    }
}

fn bandwidth_grid(x: &Matrix, count: usize, fixed: Option<f64>) -> Result<Vec<f64>> {
    if let Some(b) = fixed {
        return Ok(vec![b]);
    }
    let med = median_pairwise_distance(x);
    if !(med > 0.0) {
        return input_err("inputs have zero median pairwise distance");
    }
    Ok(logspace(0.1 * med, 100.0 * med, count))
}

fn reg_grid(kind: RegKind, count: usize, fixed: Option<f64>) -> Vec<f64> {
    match fixed {
        Some(r) => vec![r],
        None => {
            let (lo, hi) = kind.default_bounds();
            logspace(lo, hi, count)
        }
    }
}

/// Select hyperparameters on `train` (as requested) and fit on all of it.
pub fn fit_estimator(
    train: &Dataset,
    est: Estimator,
    req: FitRequest,
    protocol: &Protocol,
    seed: u64,
) -> Result<Fitted> {
    protocol.validate()?;
    if let Some(r) = req.reg {
        if !(r >= 0.0 && r.is_finite()) {
            return input_err(format!("regularization must be finite and nonnegative, got {r}"));
        }
    }
    let (bandwidth, reg) = match (req.bandwidth, req.reg) {
        (Some(b), Some(r)) => (b, r),
        _ => select(train, est, req, protocol, seed)?,
    };
    let spec = KernelSpec::new(protocol.kernel, bandwidth)?;
    let k = kernel_matrix(&spec, &train.x, 0.0)?;
    let dual = fit_at(&k, &train.y, est, reg, protocol)?.with_kernel(spec);
    Ok(Fitted {
        estimator: est,
        dual,
        spec,
        reg,
    })
}

fn fit_at(k: &KernelMatrix, y: &Vector, est: Estimator, reg: f64, protocol: &Protocol) -> Result<DualCoefficients> {
    match est {
        Estimator::Krr => fit_krr_spectral(&eig_sym(k)?, y, reg),
        Estimator::Kgf => fit_kgf_spectral(&eig_sym(k)?, y, reg, 0.0),
        Estimator::Kgd => {
            let eta = protocol.kgd_step_size;
            let steps = (reg / eta).round() as usize;
            let alpha = eig_sym(k)?.apply_gain(y, |s| kgd_gain(s, eta, steps));
            Ok(DualCoefficients::new(
                alpha,
                Regularizer::Steps { steps, step_size: eta },
            ))
        }
        Estimator::Ksgd | Estimator::Kcd | Estimator::Kegd => {
            let m = est.descent_method().expect("descent estimator");
            let eta = protocol.step_size(m);
            let steps = (reg / eta).round() as usize;
            let mut state = Descent::new(k, y, DescentConfig::new(m).step_size(eta).max_steps(steps.max(1)))?;
            while state.steps_taken() < steps {
                if state.step()? == StepOutcome::Converged {
                    break;
                }
            }
            let taken = state.steps_taken();
            Ok(DualCoefficients::new(
                state.alpha().clone(),
                Regularizer::Steps {
                    steps: taken,
                    step_size: eta,
                },
            ))
        }
        Estimator::Kl1r | Estimator::Klinfr => {
            let penalty = est.penalty().expect("penalized estimator");
            // follow the default λ path down to the target for warm starts
            let s_max = eig_sym(k)?.s_max();
            let (lo, hi) = RegKind::Lambda.default_bounds();
            let mut path: Vec<f64> = logspace(lo, hi, protocol.grid_size)
                .into_iter()
                .rev()
                .filter(|l| *l > reg)
                .collect();
            path.push(reg);
            let mut alpha = Vector::zeros(y.len());
            let mut last = None;
            for lambda in path {
                let cfg = ProxConfig::new(penalty, lambda)
                    .max_iter(protocol.prox_max_iter)
                    .tol(protocol.prox_tol);
                let fit = fit_prox_from(k, y, &cfg, &alpha, Some(s_max))?;
                alpha = fit.vector();
                last = Some(fit);
            }
            Ok(last.expect("path is never empty"))
        }
    }
}

fn select(train: &Dataset, est: Estimator, req: FitRequest, protocol: &Protocol, seed: u64) -> Result<(f64, f64)> {
    let kind = est.reg_kind();
    match est {
        Estimator::Krr | Estimator::Kgf => {
            let grid = GridSpec {
                bandwidths: bandwidth_grid(&train.x, protocol.grid_size, req.bandwidth)?,
                regs: reg_grid(kind, protocol.grid_size, req.reg),
                reg_kind: kind,
                folds: protocol.folds.min(train.n()),
            };
            let estimator = if est == Estimator::Krr {
                CvEstimator::Krr
            } else {
                CvEstimator::Kgf { momentum: 0.0 }
            };
            let cv = kfold_cv(train, protocol.kernel, estimator, &grid, seed)?;
            Ok((cv.best_bandwidth, cv.best_reg))
        }
        _ => holdout_select(train, est, req, protocol, seed),
    }
}

/// Bandwidth × regularization selection on a single validation split of `train`.
fn holdout_select(
    train: &Dataset,
    est: Estimator,
    req: FitRequest,
    protocol: &Protocol,
    seed: u64,
) -> Result<(f64, f64)> {
    let (fit_part, val_part) = split(train, protocol.validation_split, seed.wrapping_add(0x9e37_79b9))?;
    let bandwidths = bandwidth_grid(&train.x, protocol.grid_size, req.bandwidth)?;
    let kind = est.reg_kind();
    let mut table = Vec::new();
    for &bw in &bandwidths {
        let spec = KernelSpec::new(protocol.kernel, bw)?;
        let k = kernel_matrix(&spec, &fit_part.x, 0.0)?;
        let k_val = cross_kernel_matrix(&spec, &val_part.x, &fit_part.x)?;
        let (regs, scores) = match est.descent_method() {
            Some(m) => {
                let times = match req.reg {
                    Some(t) => vec![t],
                    None => protocol.time_grid(m),
                };
                let scores = if m == Method::Kgd {
                    kgd_curve(
                        &k,
                        &fit_part.y,
                        k_val.matrix(),
                        &val_part.y,
                        protocol.kgd_step_size,
                        &times,
                    )?
                } else {
                    let eta = protocol.step_size(m);
                    let max_steps = (times[times.len() - 1] / eta).round().max(1.0) as usize;
                    let cfg = DescentConfig::new(m).step_size(eta).max_steps(max_steps);
                    validation_curve(
                        &k,
                        &fit_part.y,
                        k_val.matrix(),
                        &val_part.y,
                        &cfg,
                        &times,
                        protocol.patience,
                    )?
                };
                (times, scores)
            }
            None => {
                let penalty = est.penalty().expect("penalized estimator");
                let grid = GridSpec {
                    bandwidths: vec![bw],
                    regs: reg_grid(kind, protocol.grid_size, req.reg),
                    reg_kind: kind,
                    folds: 2,
                };
                let estimator = CvEstimator::Prox {
                    penalty,
                    max_iter: protocol.prox_max_iter,
                    tol: protocol.prox_tol,
                };
                let scores = fold_scores(k, &fit_part.y, k_val.matrix(), &val_part.y, estimator, &grid)?;
                (grid.regs, scores)
            }
        };
        for (reg, score) in regs.into_iter().zip(scores) {
            table.push(CvCell {
                bandwidth: bw,
                reg,
                mean_mse: score,
                sd_mse: 0.0,
            });
        }
    }
    let best = best_cell(kind, &table).ok_or_else(|| Error::Input("no finite validation score".into()))?;
    Ok((best.bandwidth, best.reg))
}

/// Validation MSE of the exact gradient descent iterate at each time.
fn kgd_curve(
    k: &KernelMatrix,
    y: &Vector,
    k_val: &Matrix,
    y_val: &Vector,
    eta: f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    let d = eig_sym(k)?;
    let c = d.project(y);
    let kvu = k_val * &d.eigenvectors;
    Ok(times
        .iter()
        .map(|&t| {
            let steps = (t / eta).round() as usize;
            let gc = Vector::from_fn(c.len(), |i, _| c[i] * kgd_gain(d.eigenvalues[i], eta, steps));
            mse(y_val, &(&kvu * gc))
        })
        .collect())
}

/// Where experiment data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum DataSource {
    Synthetic {
        generator: Synthetic,
        n: usize,
    },
    /// A loaded dataset; each seed draws `subsample` rows (all when absent).
    Table {
        name: String,
        #[serde(skip)]
        data: Option<Dataset>,
        subsample: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub methods: Vec<Estimator>,
    pub seeds: usize,
    pub base_seed: u64,
    pub train_fraction: f64,
    /// Multiplicative Cauchy outliers with this scale, applied before splitting.
    pub outlier_scale: Option<f64>,
    pub protocol: Protocol,
    /// Record wall-clock times (makes reports non-reproducible).
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn synthetic(generator: Synthetic, methods: Vec<Estimator>) -> Self {
        Self {
            source: DataSource::Synthetic { generator, n: 100 },
            methods,
            seeds: 20,
            base_seed: 0,
            train_fraction: 0.8,
            outlier_scale: None,
            protocol: Protocol::default(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return input_err("methods list is empty");
        }
        if self.seeds == 0 {
            return input_err("need at least one seed");
        }
        if let DataSource::Table { data: None, .. } = self.source {
            return input_err("table source has no data attached");
        }
        self.protocol.validate()
    }
}

/// Score of one method on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub method: Estimator,
    pub r2: f64,
    pub sparsity: f64,
    pub bandwidth: f64,
    pub reg: f64,
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Estimator,
    pub r2_median: f64,
    pub r2_q1: f64,
    pub r2_q3: f64,
    pub sparsity_median: f64,
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub kernel: KernelFamily,
    pub source: String,
    pub n: Option<usize>,
    pub seeds: Vec<u64>,
    pub grid_size: usize,
    pub folds: usize,
    pub kgd_step_size: f64,
    pub sign_step_size: f64,
    pub outlier_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ConfigEcho,
    pub rows: Vec<MethodRow>,
    pub per_seed: Vec<SeedOutcome>,
}

impl ExperimentReport {
    pub fn row(&self, m: Estimator) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == m)
    }

    pub fn outcomes(&self, m: Estimator) -> Vec<&SeedOutcome> {
        self.per_seed.iter().filter(|o| o.method == m).collect()
    }

    /// Aligned plain-text table: method, median R² with quartiles, sparsity, time.
    pub fn to_table(&self) -> String {
        let header = ["method", "R2 median (q1, q3)", "sparsity", "time [s]"];
        let body: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.name().to_string(),
                    format!("{:.3} ({:.3}, {:.3})", r.r2_median, r.r2_q1, r.r2_q3),
                    format!("{:.3}", r.sparsity_median),
                    r.wall_time_s.map_or("-".into(), |t| format!("{t:.3}")),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = line(header.to_vec());
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for row in &body {
            out.push_str(&line(row.iter().map(String::as_str).collect()));
            out.push('\n');
        }
        out
    }
}

/// Train/test datasets for one seed, standardized with training statistics.
pub fn prepare_split(config: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    let raw = match &config.source {
        DataSource::Synthetic { generator, n } => gen_synthetic(*generator, *n, seed, -10.0, 10.0)?,
        DataSource::Table { data, subsample: m, .. } => {
            let d = data
                .as_ref()
                .ok_or_else(|| Error::Input("table source has no data attached".into()))?;
            match m {
                Some(m) => subsample(d, *m, seed)?,
                None => d.clone(),
            }
        }
    };
    let raw = match config.outlier_scale {
        Some(scale) => {
            let y = inject_outliers(&raw.y, seed, scale)?;
            Dataset { y, ..raw }
        }
        None => raw,
    };
    let (train, test) = split(&raw, config.train_fraction, seed)?;
    let params = fit_standardization(&train)?;
    if params.kept_columns.is_empty() {
        return input_err("every feature column is constant on the training split");
    }
    Ok((
        apply_standardization(&train, &params)?,
        apply_standardization(&test, &params)?,
    ))
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<SeedOutcome>> {
    let (train, test) = prepare_split(config, seed)?;
    config
        .methods
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let fitted = fit_estimator(&train, m, FitRequest::default(), &config.protocol, seed)?;
            let pred = fitted.predict(&train.x, &test.x)?;
            let elapsed = start.elapsed().as_secs_f64();
            log::debug!(
                "seed {seed} {m}: bandwidth {} reg {}",
                fitted.spec.bandwidth,
                fitted.reg
            );
            Ok(SeedOutcome {
                seed,
                method: m,
                r2: r2(&test.y, &pred)?,
                sparsity: fitted.sparsity(),
                bandwidth: fitted.spec.bandwidth,
                reg: fitted.reg,
                wall_time_s: config.timing.then_some(elapsed),
            })
        })
        .collect()
}

/// Run every seed (in parallel on at most `threads` workers) and summarize.
pub fn run_experiment(config: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentReport> {
    config.validate()?;
    let seeds: Vec<u64> = (0..config.seeds as u64)
        .map(|i| config.base_seed.wrapping_add(i))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    let per_seed: Vec<Vec<SeedOutcome>> =
        pool.install(|| seeds.par_iter().map(|&s| run_seed(config, s)).collect::<Result<_>>())?;
    let per_seed: Vec<SeedOutcome> = per_seed.into_iter().flatten().collect();
    let rows = config
        .methods
        .iter()
        .map(|&m| {
            let mine: Vec<&SeedOutcome> = per_seed.iter().filter(|o| o.method == m).collect();
            let r2s: Vec<f64> = mine.iter().map(|o| o.r2).collect();
            let sp: Vec<f64> = mine.iter().map(|o| o.sparsity).collect();
            let wall_time_s = if config.timing {
                let t: Vec<f64> = mine.iter().filter_map(|o| o.wall_time_s).collect();
                Some(quantile(&t, 0.5))
            } else {
                None
            };
            MethodRow {
                method: m,
                r2_median: quantile(&r2s, 0.5),
                r2_q1: quantile(&r2s, 0.25),
                r2_q3: quantile(&r2s, 0.75),
                sparsity_median: quantile(&sp, 0.5),
                wall_time_s,
            }
        })
        .collect();
    let (source, n) = match &config.source {
        DataSource::Synthetic { generator, n } => (generator.name().to_string(), Some(*n)),
        DataSource::Table { name, subsample, .. } => (name.clone(), *subsample),
    };
    Ok(ExperimentReport {
        config: ConfigEcho {
            kernel: config.protocol.kernel,
            source,
            n,
            seeds,
            grid_size: config.protocol.grid_size,
            folds: config.protocol.folds,
            kgd_step_size: config.protocol.kgd_step_size,
            sign_step_size: config.protocol.sign_step_size,
            outlier_scale: config.outlier_scale,
        },
        rows,
        per_seed,
    })
}
