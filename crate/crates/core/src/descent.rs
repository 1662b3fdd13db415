//! Iterative solvers on the gradient `Kα - y` of the kernel-weighted objective.
//!
//! All four methods start from `α = 0` and move along a direction derived from
//! the residual `g = y - Kα`:
//!
//! * `kgd`: `g` itself (kernel gradient descent);
//! * `ksgd`: `sign(g)` (kernel sign gradient descent);
//! * `kcd`: `sign(g_m) e_m` for `m = argmax |g|` (kernel coordinate descent);
//! * `kegd`: `sign(g_i)` on every coordinate with `|g_i| >= mix * ‖g‖_∞`.
//!
//! Optimization time `t = kη` acts as an inverse regularization strength, so a
//! single run produces a whole [`SolutionPath`].

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::kernels::KernelMatrix;
use crate::linalg::{argmax_abs, norm_l1, norm_l2, norm_linf, sign, Matrix, Vector};
use crate::spectral::{eig_sym, SpectralDecomposition};

/// Divergence guard: abort when `‖g‖₂` exceeds this multiple of `‖y‖₂`.
pub const DIVERGENCE_FACTOR: f64 = 1e3;
/// Convergence threshold on `‖g‖_∞`, relative to `1 + ‖y‖_∞`.
pub const CONVERGENCE_TOL: f64 = 1e-10;
/// Default elastic mixing threshold for `kegd`.
pub const DEFAULT_ELASTIC_MIX: f64 = 0.9;
/// The incrementally updated residual is recomputed from scratch this often.
const RESYNC_EVERY: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kgd,
    Ksgd,
    Kcd,
    Kegd,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Kgd, Method::Ksgd, Method::Kcd, Method::Kegd];

    pub fn name(self) -> &'static str {
        match self {
            Method::Kgd => "kgd",
            Method::Ksgd => "ksgd",
            Method::Kcd => "kcd",
            Method::Kegd => "kegd",
        }
    }

    /// Whether the method moves by fixed-size sign steps.
    pub fn is_sign_based(self) -> bool {
        !matches!(self, Method::Kgd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown descent method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub method: Method,
    pub step_size: f64,
    pub momentum: f64,
    /// Coordinate admission threshold for `kegd`, relative to `‖g‖_∞`.
    pub elastic_mix: f64,
    pub max_steps: usize,
    pub checkpoint_stride: usize,
    /// Extra effective times at which a checkpoint is forced.
    #[serde(default)]
    pub checkpoint_times: Vec<f64>,
}

impl DescentConfig {
    /// Defaults: step size `1e-4`, stride 100, momentum 0 (0.5 for `kegd`).
    pub fn new(method: Method) -> Self {
        Self {
            method,
            step_size: 1e-4,
            momentum: if method == Method::Kegd { 0.5 } else { 0.0 },
            elastic_mix: DEFAULT_ELASTIC_MIX,
            max_steps: 1_000_000,
            checkpoint_stride: 100,
            checkpoint_times: Vec::new(),
        }
    }

    pub fn step_size(mut self, eta: f64) -> Self {
        self.step_size = eta;
        self
    }

    pub fn momentum(mut self, gamma: f64) -> Self {
        self.momentum = gamma;
        self
    }

    pub fn elastic_mix(mut self, mix: f64) -> Self {
        self.elastic_mix = mix;
        self
    }

    pub fn max_steps(mut self, steps: usize) -> Self {
        self.max_steps = steps;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.checkpoint_stride = stride;
        self
    }

    pub fn checkpoint_times(mut self, times: Vec<f64>) -> Self {
        self.checkpoint_times = times;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return input_err(format!("step size must be positive, got {}", self.step_size));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return input_err(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(0.0..=1.0).contains(&self.elastic_mix) {
            return input_err(format!("elastic mix must lie in [0, 1], got {}", self.elastic_mix));
        }
        if self.max_steps == 0 || self.checkpoint_stride == 0 {
            return input_err("max_steps and checkpoint_stride must be positive");
        }
        if self.checkpoint_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return input_err("checkpoint times must be finite and nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl ResidualNorms {
    pub fn of(r: &Vector) -> Self {
        Self {
            l1: norm_l1(r),
            l2: norm_l2(r),
            linf: norm_linf(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub time: f64,
    pub alpha: Vec<f64>,
    pub residual: ResidualNorms,
}

impl Checkpoint {
    pub fn alpha_vector(&self) -> Vector {
        Vector::from_column_slice(&self.alpha)
    }

    pub fn nnz(&self) -> usize {
        self.alpha.iter().filter(|a| **a != 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxSteps,
    Converged,
    Stopped,
}

/// Time-indexed sequence of coefficient snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPath {
    pub method: Method,
    pub step_size: f64,
    pub checkpoints: Vec<Checkpoint>,
    pub termination: Termination,
}

impl SolutionPath {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints
            .last()
            .expect("path always holds the initial checkpoint")
    }

    pub fn times(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.time).collect()
    }

    /// Coefficients at effective time `t`, linearly interpolated between the
    /// neighbouring checkpoints and held constant past the final one.
    pub fn alpha_at(&self, t: f64) -> Vector {
        let cps = &self.checkpoints;
        if t <= 0.0 {
            return cps[0].alpha_vector();
        }
        let idx = cps.partition_point(|c| c.time < t);
        if idx >= cps.len() {
            return self.last().alpha_vector();
        }
        let hi = &cps[idx];
        if hi.time == t || idx == 0 {
            return hi.alpha_vector();
        }
        let lo = &cps[idx - 1];
        let w = (t - lo.time) / (hi.time - lo.time);
        lo.alpha_vector() * (1.0 - w) + hi.alpha_vector() * w
    }

    /// CSV with columns `step,time,l1_residual,l2_residual,linf_residual,nnz`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "time", "l1_residual", "l2_residual", "linf_residual", "nnz"])?;
        for c in &self.checkpoints {
            w.write_record(&[
                c.step.to_string(),
                format!("{}", c.time),
                format!("{}", c.residual.l1),
                format!("{}", c.residual.l2),
                format!("{}", c.residual.linf),
                c.nnz().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of a single descent step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Moved,
    Converged,
}

/// Stepwise descent state, for callers that need to observe every iterate.
pub struct Descent<'a> {
    k: &'a Matrix,
    y: &'a Vector,
    config: DescentConfig,
    alpha: Vector,
    velocity: Vector,
    residual: Vector,
    step: usize,
    tol: f64,
    guard: f64,
}

impl<'a> Descent<'a> {
    pub fn new(k: &'a KernelMatrix, y: &'a Vector, config: DescentConfig) -> Result<Self> {
        config.validate()?;
        if y.len() != k.n() {
            return input_err(format!(
                "response length {} does not match kernel size {}",
                y.len(),
                k.n()
            ));
        }
        let n = y.len();
        Ok(Self {
            k: k.matrix(),
            y,
            tol: CONVERGENCE_TOL * (1.0 + norm_linf(y)),
            guard: DIVERGENCE_FACTOR * norm_l2(y),
            config,
            alpha: Vector::zeros(n),
            velocity: Vector::zeros(n),
            residual: y.clone(),
            step: 0,
        })
    }

    pub fn alpha(&self) -> &Vector {
        &self.alpha
    }

    /// Current residual `y - Kα`.
    pub fn residual(&self) -> &Vector {
        &self.residual
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.step_size
    }

    pub fn config(&self) -> &DescentConfig {
        &self.config
    }

    /// Unit-scale update direction for the current residual.
    fn direction(&self) -> Vector {
        let g = &self.residual;
        match self.config.method {
            Method::Kgd => g.clone(),
            Method::Ksgd => g.map(sign),
            Method::Kcd => {
                let m = argmax_abs(g);
                let mut d = Vector::zeros(g.len());
                d[m] = sign(g[m]);
                d
            }
            Method::Kegd => {
                let cut = self.config.elastic_mix * norm_linf(g);
                g.map(|gi| if gi.abs() >= cut { sign(gi) } else { 0.0 })
            }
        }
    }

    /// Take one step. Returns `Converged` without moving when `‖g‖_∞` is below tolerance.
    pub fn step(&mut self) -> Result<StepOutcome> {
        if norm_linf(&self.residual) < self.tol {
            return Ok(StepOutcome::Converged);
        }
        let eta = self.config.step_size;
        let d = self.direction();
        let gamma = self.config.momentum;
        if gamma > 0.0 {
            self.velocity *= gamma;
            self.velocity.axpy(eta, &d, 1.0);
        } else {
            self.velocity = d * eta;
        }
        self.alpha += &self.velocity;
        // r ← r - K Δα, touching only the columns where Δα is nonzero
        let n = self.alpha.len();
        let nnz = self.velocity.iter().filter(|v| **v != 0.0).count();
        if nnz * 4 < n {
            for (j, &dv) in self.velocity.iter().enumerate() {
                if dv != 0.0 {
                    self.residual.axpy(-dv, &self.k.column(j), 1.0);
                }
            }
        } else {
            self.residual.gemv(-1.0, self.k, &self.velocity, 1.0);
        }
        self.step += 1;
        if self.step.is_multiple_of(RESYNC_EVERY) {
            self.residual = self.y - self.k * &self.alpha;
        }
        let gnorm = norm_l2(&self.residual);
        if !(gnorm <= self.guard) {
            return Err(Error::Divergence {
                step: self.step,
                gradient_norm: gnorm,
                limit: self.guard,
            });
        }
        Ok(StepOutcome::Moved)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step: self.step,
            time: self.time(),
            alpha: self.alpha.as_slice().to_vec(),
            residual: ResidualNorms::of(&self.residual),
        }
    }
}

/// Run a descent method from `α = 0`, recording checkpoints every
/// `checkpoint_stride` steps, at any requested times and at termination.
pub fn run_descent(k: &KernelMatrix, y: &Vector, config: DescentConfig) -> Result<SolutionPath> {
    let eta = config.step_size;
    let mut forced: Vec<usize> = config
        .checkpoint_times
        .iter()
        .map(|t| (t / eta).round() as usize)
        .filter(|&s| s > 0)
        .collect();
    forced.sort_unstable();
    forced.dedup();
    let mut forced = forced.into_iter().peekable();

    let stride = config.checkpoint_stride;
    let max_steps = config.max_steps;
    let method = config.method;
    let mut state = Descent::new(k, y, config)?;
    let mut checkpoints = vec![state.checkpoint()];
    let mut termination = Termination::MaxSteps;
    while state.steps_taken() < max_steps {
        if state.step()? == StepOutcome::Converged {
            termination = Termination::Converged;
            break;
        }
        let s = state.steps_taken();
        let mut record = s % stride == 0;
        while forced.peek().is_some_and(|&f| f <= s) {
            record |= forced.next() == Some(s);
        }
        if record {
            checkpoints.push(state.checkpoint());
        }
    }
    if checkpoints.last().map(|c| c.step) != Some(state.steps_taken()) {
        checkpoints.push(state.checkpoint());
    }
    Ok(SolutionPath {
        method,
        step_size: eta,
        checkpoints,
        termination,
    })
}

/// Largest step size covered by the per-step descent guarantee.
///
/// `kgd`: `2 / s_max(K)`; `ksgd` and `kcd`: `min_i |r_i|`; `kegd`: the same
/// minimum over the coordinates admitted by the default elastic threshold.
/// A zero residual for the sign methods yields 0, signalling convergence.
pub fn step_size_limit(k: &KernelMatrix, residual: &Vector, method: Method) -> Result<f64> {
    step_size_limit_with_mix(k, residual, method, DEFAULT_ELASTIC_MIX)
}

pub fn step_size_limit_with_mix(k: &KernelMatrix, residual: &Vector, method: Method, mix: f64) -> Result<f64> {
    if !residual.iter().all(|r| r.is_finite()) {
        return input_err("residual has non-finite entries");
    }
    Ok(match method {
        Method::Kgd => {
            let d = eig_sym(k)?;
            2.0 / d.s_max()
        }
        Method::Ksgd | Method::Kcd => residual.iter().fold(f64::INFINITY, |m, r| m.min(r.abs())),
        Method::Kegd => {
            let cut = mix * norm_linf(residual);
            residual
                .iter()
                .filter(|r| r.abs() >= cut)
                .fold(f64::INFINITY, |m, r| m.min(r.abs()))
        }
    }
    .clamp(0.0, f64::MAX))
}

/// Exact `kgd` iterate after `steps` steps (no momentum), evaluated spectrally:
/// `α_k = U diag((1 - (1 - ηs)^k) / s) Uᵀ y`.
pub fn kgd_spectral_alpha(decomp: &SpectralDecomposition, y: &Vector, step_size: f64, steps: usize) -> Vector {
    decomp.apply_gain(y, |s| kgd_gain(s, step_size, steps))
}

pub(crate) fn kgd_gain(s: f64, eta: f64, steps: usize) -> f64 {
    let k = steps as f64;
    if s == 0.0 {
        return k * eta;
    }
    let x = eta * s;
    let pow = if x < 1.0 {
        // (1 - x)^k = exp(k ln(1 - x)); expm1 keeps precision when kx is small
        return -(k * (-x).ln_1p()).exp_m1() / s;
    } else {
        let base = 1.0 - x;
        let mag = base.abs().powf(k);
        if base < 0.0 && steps % 2 == 1 {
            -mag
        } else {
            mag
        }
    };
    (1.0 - pow) / s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_matrix, KernelSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn instance(n: usize, seed: u64) -> (KernelMatrix, Vector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(-3.0..3.0));
        let y = Vector::from_fn(n, |i, _| x[(i, 0)].sin() + 0.2 * rng.random_range(-1.0..1.0));
        (kernel_matrix(&KernelSpec::gaussian(0.7).unwrap(), &x, 0.0).unwrap(), y)
    }

    #[test]
    fn kgd_first_step() {
        let y = v(&[1.0, -2.0, 0.5]);
        let path = run_descent(
            &KernelMatrix::identity(3),
            &y,
            DescentConfig::new(Method::Kgd).step_size(0.1).max_steps(1).stride(1),
        )
        .unwrap();
        assert_eq!(path.checkpoints.len(), 2);
        assert_relative_eq!(path.last().alpha_vector(), &y * 0.1, epsilon = 1e-15);
        let first = &path.checkpoints[0];
        assert_eq!(first.time, 0.0);
        assert!(first.alpha.iter().all(|a| *a == 0.0));
        assert_eq!(first.residual, ResidualNorms::of(&y));
    }

    #[test]
    fn ksgd_diagonal_follows_clipped_line() {
        let k = KernelMatrix::from_diagonal(&[2.0]).unwrap();
        let eta = 1e-3;
        let path = run_descent(
            &k,
            &v(&[3.0]),
            DescentConfig::new(Method::Ksgd)
                .step_size(eta)
                .max_steps(3000)
                .stride(10),
        )
        .unwrap();
        for c in &path.checkpoints {
            let expected = c.time.min(1.5);
            assert!(
                (c.alpha[0] - expected).abs() <= eta + 1e-12,
                "t={} a={}",
                c.time,
                c.alpha[0]
            );
        }
    }

    #[test]
    fn kcd_first_step_touches_argmax() {
        let (k, y) = instance(12, 1);
        let path = run_descent(
            &k,
            &y,
            DescentConfig::new(Method::Kcd).step_size(0.01).max_steps(1).stride(1),
        )
        .unwrap();
        let a = path.last();
        assert_eq!(a.nnz(), 1);
        let m = argmax_abs(&y);
        assert_eq!(a.alpha[m], 0.01 * sign(y[m]));
    }

    #[test]
    fn kegd_zero_mix_is_ksgd() {
        let (k, y) = instance(15, 2);
        let base = DescentConfig::new(Method::Ksgd)
            .step_size(1e-3)
            .max_steps(200)
            .stride(50);
        let a = run_descent(&k, &y, base.clone()).unwrap();
        let mut cfg = base;
        cfg.method = Method::Kegd;
        let b = run_descent(&k, &y, cfg.elastic_mix(0.0).momentum(0.0)).unwrap();
        for (ca, cb) in a.checkpoints.iter().zip(&b.checkpoints) {
            assert_eq!(ca.alpha, cb.alpha);
        }
    }

    #[test]
    fn kegd_full_mix_moves_only_maximal_coordinates() {
        let (k, y) = instance(15, 3);
        let cfg = DescentConfig::new(Method::Kegd)
            .elastic_mix(1.0)
            .momentum(0.0)
            .step_size(1e-3)
            .max_steps(300)
            .stride(300);
        let b = run_descent(&k, &y, cfg).unwrap();
        let mut c = DescentConfig::new(Method::Kcd)
            .step_size(1e-3)
            .max_steps(300)
            .stride(300);
        c.momentum = 0.0;
        let a = run_descent(&k, &y, c).unwrap();
        assert_relative_eq!(a.last().alpha_vector(), b.last().alpha_vector(), epsilon = 1e-12);
    }

    #[test]
    fn sign_paths_bounded_by_elapsed_time() {
        let (k, y) = instance(20, 4);
        for m in [Method::Ksgd, Method::Kcd] {
            let eta = 1e-3;
            let path = run_descent(&k, &y, DescentConfig::new(m).step_size(eta).max_steps(500).stride(7)).unwrap();
            for c in &path.checkpoints {
                let bound = c.step as f64 * eta;
                assert!(c.alpha.iter().all(|a| a.abs() <= bound * (1.0 + 1e-12)));
            }
        }
    }

    #[test]
    fn checkpoints_strictly_increase_and_include_forced_times() {
        let (k, y) = instance(10, 5);
        let cfg = DescentConfig::new(Method::Kgd)
            .step_size(0.01)
            .max_steps(250)
            .stride(100)
            .checkpoint_times(vec![0.37, 1.0, 5.0]);
        let path = run_descent(&k, &y, cfg).unwrap();
        let times = path.times();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        let steps: Vec<usize> = path.checkpoints.iter().map(|c| c.step).collect();
        assert_eq!(steps, vec![0, 37, 100, 200, 250]);
        // the requested time 5.0 lies beyond the run and is held at the last checkpoint
        assert_eq!(path.alpha_at(5.0), path.last().alpha_vector());
    }

    #[test]
    fn interpolation_between_checkpoints() {
        let (k, y) = instance(6, 6);
        let path = run_descent(
            &k,
            &y,
            DescentConfig::new(Method::Kgd)
                .step_size(0.01)
                .max_steps(200)
                .stride(100),
        )
        .unwrap();
        let a = path.alpha_at(1.5);
        let mid = (path.checkpoints[1].alpha_vector() + path.checkpoints[2].alpha_vector()) * 0.5;
        assert_relative_eq!(a, mid, epsilon = 1e-14);
        assert_eq!(path.alpha_at(0.0).amax(), 0.0);
    }

    #[test]
    fn converges_on_identity() {
        let y = v(&[1.0, 2.0]);
        let path = run_descent(
            &KernelMatrix::identity(2),
            &y,
            DescentConfig::new(Method::Kgd).step_size(0.5).max_steps(10_000),
        )
        .unwrap();
        assert_eq!(path.termination, Termination::Converged);
        assert_relative_eq!(path.last().alpha_vector(), y, epsilon = 1e-9);
    }

    #[test]
    fn divergence_guard_names_step() {
        let (k, y) = instance(10, 7);
        let d = eig_sym(&k).unwrap();
        let eta = 3.0 / d.s_max();
        match run_descent(
            &k,
            &y,
            DescentConfig::new(Method::Kgd).step_size(eta).max_steps(100_000),
        ) {
            Err(Error::Divergence { step, .. }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs() {
        let (k, y) = instance(4, 8);
        assert!(run_descent(&k, &y, DescentConfig::new(Method::Kgd).step_size(0.0)).is_err());
        assert!(run_descent(&k, &y, DescentConfig::new(Method::Kgd).momentum(1.0)).is_err());
        assert!(run_descent(&k, &y, DescentConfig::new(Method::Kegd).elastic_mix(1.5)).is_err());
        assert!(run_descent(&k, &Vector::zeros(3), DescentConfig::new(Method::Kgd)).is_err());
    }

    #[test]
    fn step_size_limit_examples() {
        let k = KernelMatrix::identity(3);
        assert_relative_eq!(
            step_size_limit(&k, &v(&[1.0, 1.0, 1.0]), Method::Kgd).unwrap(),
            2.0,
            epsilon = 1e-14
        );
        assert_eq!(step_size_limit(&k, &v(&[0.3, -0.1, 2.0]), Method::Ksgd).unwrap(), 0.1);
        assert_eq!(step_size_limit(&k, &v(&[0.3, -0.1, 2.0]), Method::Kcd).unwrap(), 0.1);
        assert_eq!(step_size_limit(&k, &v(&[0.3, -1.9, 2.0]), Method::Kegd).unwrap(), 1.9);
        assert_eq!(step_size_limit(&k, &v(&[0.0, 0.0, 0.0]), Method::Ksgd).unwrap(), 0.0);
        let k = KernelMatrix::from_diagonal(&[4.0, 1.0]).unwrap();
        assert_relative_eq!(
            step_size_limit(&k, &v(&[1.0, 1.0]), Method::Kgd).unwrap(),
            0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn path_csv_columns() {
        let (k, y) = instance(5, 9);
        let path = run_descent(
            &k,
            &y,
            DescentConfig::new(Method::Kcd).step_size(0.01).max_steps(20).stride(10),
        )
        .unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,time,l1_residual,l2_residual,linf_residual,nnz"
        );
        assert_eq!(lines.count(), path.checkpoints.len());
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("sgd".parse::<Method>().is_err());
    }

    proptest! {
        #[test]
        fn spectral_kgd_matches_iteration(seed in 0u64..500, steps in 1usize..400) {
            let (k, y) = instance(8, seed);
            let d = eig_sym(&k).unwrap();
            let eta = 0.9 / d.s_max();
            let path = run_descent(&k, &y, DescentConfig::new(Method::Kgd).step_size(eta).max_steps(steps).stride(steps)).unwrap();
            let it = path.last().alpha_vector();
            let sp = kgd_spectral_alpha(&d, &y, eta, path.last().step);
            prop_assert!((&it - &sp).norm() <= 1e-9 * (1.0 + it.norm()));
        }
    }
}
