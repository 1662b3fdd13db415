//! Numerical certification of the comparison bounds between gradient flow and
//! ridge regression, the sign-flow closed forms for diagonal kernels, the
//! feature-space equivalence of the descent methods and their step-size rules.
//!
//! Every check is evaluated in the eigenbasis of `K`, so filter arithmetic is
//! exact up to rounding and no matrix function is ever truncated.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::rng_stream;
use crate::descent::{Descent, DescentConfig, Method};
use crate::error::{input_err, Result};
use crate::kernels::{cross_kernel_matrix, kernel_matrix, KernelMatrix, KernelSpec};
use crate::linalg::{argmax_abs, logspace, norm_l1, norm_l2, norm_linf, sign, Matrix, Vector};
use crate::prox::{fit_prox, Penalty, ProxConfig};
use crate::spectral::{eig_sym, phi_stable, SpectralDecomposition};

/// Bound on the squared gap between gradient flow at time `t` and ridge at `1/t`.
pub const GAP_BOUND: f64 = 0.0415;
/// Bound on the gradient-flow to ridge risk ratio (`1.2985²`, rounded up).
pub const RISK_BOUND: f64 = 1.6862;
/// Slack allowed on top of every certified bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// `(1/(1+x) - e^{-x})²`, the squared gap filter at `x = ts`.
pub fn gap_h(x: f64) -> f64 {
    (1.0 / (1.0 + x) - (-x).exp()).powi(2)
}

/// Maximizer and maximum of [`gap_h`] on `[0, 50]` by golden-section search.
pub fn gap_constant() -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 50.0f64);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (gap_h(c), gap_h(d));
    while b - a >= 1e-9 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = gap_h(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = gap_h(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, gap_h(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub t_grid: Vec<f64>,
    /// `‖α_KGF(t) - α_KRR(1/t)‖²`.
    pub lhs_alpha: Vec<f64>,
    /// `0.0415 ‖K⁻¹y‖²`.
    pub rhs_alpha: Vec<f64>,
    /// `‖f_KGF(t) - f_KRR(1/t)‖²` on the training inputs.
    pub lhs_f: Vec<f64>,
    /// `0.0415 ‖y‖²`.
    pub rhs_f: Vec<f64>,
    pub max_ratio: f64,
    /// True when `K` had zero eigenvalues and the pseudo-inverse was used.
    pub pseudo_inverse: bool,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

pub fn check_gap_bounds(k: &KernelMatrix, y: &Vector, t_grid: &[f64]) -> Result<GapReport> {
    let d = eig_sym(k)?;
    check_gap_bounds_spectral(&d, y, t_grid)
}

pub fn check_gap_bounds_spectral(d: &SpectralDecomposition, y: &Vector, t_grid: &[f64]) -> Result<GapReport> {
    if y.len() != d.n() {
        return input_err("response length does not match the kernel");
    }
    if t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return input_err("times must be finite and nonnegative");
    }
    let c = d.project(y);
    let pseudo_inverse = d.eigenvalues.iter().any(|s| *s == 0.0);
    let alpha0_sq: f64 = c
        .iter()
        .zip(d.eigenvalues.iter())
        .filter(|(_, s)| **s > 0.0)
        .map(|(ci, s)| (ci / s).powi(2))
        .sum();
    let y_sq = y.norm_squared();
    let mut report = GapReport {
        t_grid: t_grid.to_vec(),
        lhs_alpha: Vec::new(),
        rhs_alpha: Vec::new(),
        lhs_f: Vec::new(),
        rhs_f: Vec::new(),
        max_ratio: 0.0,
        pseudo_inverse,
    };
    for &t in t_grid {
        let (mut la, mut lf) = (0.0, 0.0);
        for (ci, &s) in c.iter().zip(d.eigenvalues.iter()) {
            let gap = 1.0 / (1.0 + t * s) - (-t * s).exp();
            lf += (ci * gap).powi(2);
            if s > 0.0 {
                la += (ci * gap / s).powi(2);
            }
        }
        let (ra, rf) = (GAP_BOUND * alpha0_sq, GAP_BOUND * y_sq);
        report.max_ratio = report.max_ratio.max(ratio(la, ra)).max(ratio(lf, rf));
        report.lhs_alpha.push(la);
        report.rhs_alpha.push(ra);
        report.lhs_f.push(lf);
        report.rhs_f.push(rf);
    }
    Ok(report)
}

/// Expected-gap ratios under `α₀ ~ (0, σ_α² I)`, `ε ~ (0, σ_ε² I)`:
/// the worst coordinate of `α` and the worst out-of-sample point (rows of
/// `kstar`), each relative to `0.0415` times the matching unregularized second moment.
pub fn expected_gap_ratios(
    d: &SpectralDecomposition,
    sigma_alpha: f64,
    sigma_eps: f64,
    kstar: &Matrix,
    t: f64,
) -> (f64, f64) {
    let m: Vec<f64> = d
        .eigenvalues
        .iter()
        .map(|s| sigma_alpha.powi(2) * s * s + sigma_eps.powi(2))
        .collect();
    let gap: Vec<f64> = d
        .eigenvalues
        .iter()
        .map(|&s| 1.0 / (1.0 + t * s) - (-t * s).exp())
        .collect();
    let moment_ratio = |w: &dyn Fn(usize) -> f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for (j, &s) in d.eigenvalues.iter().enumerate() {
            if s <= 0.0 {
                continue;
            }
            let base = w(j).powi(2) * m[j] / (s * s);
            num += base * gap[j] * gap[j];
            den += base;
        }
        ratio(num, GAP_BOUND * den)
    };
    let mut coord = 0.0f64;
    for i in 0..d.n() {
        coord = coord.max(moment_ratio(&|j| d.eigenvectors[(i, j)]));
    }
    let a = kstar * &d.eigenvectors;
    let mut oos = 0.0f64;
    for r in 0..a.nrows() {
        oos = oos.max(moment_ratio(&|j| a[(r, j)]));
    }
    (coord, oos)
}

/// Prior on the true coefficients `α₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Alpha0Mode {
    Fixed {
        alpha0: Vec<f64>,
    },
    /// `Σ_α = σ_α² I`.
    Isotropic {
        variance: f64,
    },
    /// `Σ_α = σ_β² K⁻¹`, i.e. isotropic feature-space coefficients.
    FeatureSpace {
        variance: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskScenario {
    pub alpha0: Alpha0Mode,
    pub noise_sd: f64,
}

impl RiskScenario {
    fn validate(&self, n: usize) -> Result<()> {
        if !(self.noise_sd >= 0.0) {
            return input_err("noise standard deviation must be nonnegative");
        }
        match &self.alpha0 {
            Alpha0Mode::Fixed { alpha0 } if alpha0.len() != n => input_err("alpha0 length does not match the kernel"),
            Alpha0Mode::Isotropic { variance } | Alpha0Mode::FeatureSpace { variance } if !(*variance >= 0.0) => {
                input_err("prior variance must be nonnegative")
            }
            _ => Ok(()),
        }
    }

    /// `E[(U_{:,i}ᵀ α₀)²]` for every eigenvector.
    fn bias_weights(&self, d: &SpectralDecomposition) -> Vec<f64> {
        match &self.alpha0 {
            Alpha0Mode::Fixed { alpha0 } => {
                let c = d.project(&Vector::from_column_slice(alpha0));
                c.iter().map(|v| v * v).collect()
            }
            Alpha0Mode::Isotropic { variance } => vec![*variance; d.n()],
            Alpha0Mode::FeatureSpace { variance } => d
                .eigenvalues
                .iter()
                .map(|&s| if s > 0.0 { variance / s } else { 0.0 })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskMethod {
    Kgf,
    Krr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskTarget {
    /// `E‖α̂ - α₀‖²`.
    Parameter,
    /// `E‖Kα̂ - Kα₀‖²`.
    InSample,
}

/// Per-eigenvalue (bias factor, variance factor) of the risk decomposition.
fn risk_factors(s: f64, t: f64, method: RiskMethod) -> (f64, f64) {
    match method {
        RiskMethod::Kgf => ((-2.0 * t * s).exp(), phi_stable(s, t).powi(2)),
        RiskMethod::Krr => (1.0 / (t * s + 1.0).powi(2), (t / (t * s + 1.0)).powi(2)),
    }
}

/// Closed-form bias-plus-variance risk of gradient flow at `t` or ridge at `1/t`.
pub fn risk_closed_form(d: &SpectralDecomposition, scenario: &RiskScenario, t: f64, method: RiskMethod) -> Result<f64> {
    risk_closed_form_target(d, scenario, t, method, RiskTarget::Parameter)
}

pub fn risk_closed_form_target(
    d: &SpectralDecomposition,
    scenario: &RiskScenario,
    t: f64,
    method: RiskMethod,
    target: RiskTarget,
) -> Result<f64> {
    scenario.validate(d.n())?;
    if !(t > 0.0 && t.is_finite()) {
        return input_err(format!("risk needs a positive finite time, got {t}"));
    }
    let w = scenario.bias_weights(d);
    let var = scenario.noise_sd.powi(2);
    Ok(d.eigenvalues
        .iter()
        .zip(&w)
        .map(|(&s, &wi)| {
            let (b, v) = risk_factors(s, t, method);
            let scale = match target {
                RiskTarget::Parameter => 1.0,
                RiskTarget::InSample => s * s,
            };
            scale * (wi * b + var * v)
        })
        .sum())
}

/// Prior-averaged out-of-sample risk at a point with kernel row `kstar_row`.
pub fn out_of_sample_risk(
    d: &SpectralDecomposition,
    scenario: &RiskScenario,
    kstar_row: &Vector,
    t: f64,
    method: RiskMethod,
) -> Result<f64> {
    scenario.validate(d.n())?;
    if kstar_row.len() != d.n() {
        return input_err("kernel row length does not match the kernel");
    }
    let a = d.project(kstar_row);
    let w = scenario.bias_weights(d);
    let var = scenario.noise_sd.powi(2);
    Ok(d.eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let (b, v) = risk_factors(s, t, method);
            a[i] * a[i] * (w[i] * b + var * v)
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub t_grid: Vec<f64>,
    pub parameter_ratio: Vec<f64>,
    pub in_sample_ratio: Vec<f64>,
    pub max_ratio: f64,
}

/// Gradient-flow / ridge risk ratios over a time grid, for parameter and in-sample risk.
pub fn check_risk_ratio(d: &SpectralDecomposition, scenario: &RiskScenario, t_grid: &[f64]) -> Result<RiskReport> {
    let mut report = RiskReport {
        t_grid: t_grid.to_vec(),
        parameter_ratio: Vec::new(),
        in_sample_ratio: Vec::new(),
        max_ratio: 0.0,
    };
    for &t in t_grid {
        for target in [RiskTarget::Parameter, RiskTarget::InSample] {
            let g = risk_closed_form_target(d, scenario, t, RiskMethod::Kgf, target)?;
            let r = risk_closed_form_target(d, scenario, t, RiskMethod::Krr, target)?;
            let q = ratio(g, r);
            report.max_ratio = report.max_ratio.max(q);
            match target {
                RiskTarget::Parameter => report.parameter_ratio.push(q),
                RiskTarget::InSample => report.in_sample_ratio.push(q),
            }
        }
    }
    Ok(report)
}

/// Empirical parameter risk over `draws` simulated responses `y = Kα₀ + ε`,
/// `ε ~ N(0, σ²I)`. Returns the mean and its standard error.
pub fn monte_carlo_risk(
    d: &SpectralDecomposition,
    alpha0: &Vector,
    noise_sd: f64,
    t: f64,
    method: RiskMethod,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if draws < 2 || alpha0.len() != d.n() {
        return input_err("need at least two draws and a matching alpha0");
    }
    let mut rng = rng_stream(seed, 0);
    let f0 = d.apply_gain(alpha0, |s| s);
    let gain = |s: f64| match method {
        RiskMethod::Kgf => phi_stable(s, t),
        RiskMethod::Krr => 1.0 / (s + 1.0 / t),
    };
    let mut losses = Vec::with_capacity(draws);
    for _ in 0..draws {
        let y = Vector::from_fn(d.n(), |i, _| {
            f0[i]
                + noise_sd * {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                }
        });
        let a = d.apply_gain(&y, gain);
        losses.push((a - alpha0).norm_squared());
    }
    let n = draws as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Worst-case shrinkage factors over `y`:
/// `(e^{-t s_min}, 1/(1+t s_min), 1 - 1/(1+t s_max), 1 - e^{-t s_max})`.
///
/// The first two bound the in-sample residual of gradient flow and ridge, the
/// last two the in-sample fit of ridge and gradient flow.
pub fn shrinkage_extremes(s_min: f64, s_max: f64, t: f64) -> Result<[f64; 4]> {
    if !(s_min > 0.0 && s_min <= s_max) {
        return input_err("need 0 < s_min <= s_max");
    }
    if !(t >= 0.0) {
        return input_err("time must be nonnegative");
    }
    let out = if t.is_infinite() {
        [0.0, 0.0, 1.0, 1.0]
    } else {
        [
            (-t * s_min).exp(),
            1.0 / (1.0 + t * s_min),
            1.0 - 1.0 / (1.0 + t * s_max),
            -(-t * s_max).exp_m1(),
        ]
    };
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Alpha,
    F,
}

/// Sign-flow / l∞-constrained path for a diagonal kernel.
///
/// `Alpha`: `sign(y_i/k_i) min(t, |y_i/k_i|)`, with `k_diag` and `y` of length `n`.
/// `F`: `k_diag` covers training and test points (`n + n*`), `y` the `n`
/// training responses; training coordinates follow `sign(y_i) min(t, |y_i|)`
/// and test coordinates are 0.
pub fn diag_signflow(k_diag: &[f64], y: &Vector, t: f64, space: Space) -> Result<Vector> {
    if k_diag.iter().any(|k| !(*k > 0.0)) {
        return input_err("diagonal kernel entries must be positive");
    }
    if !(t >= 0.0) {
        return input_err("time must be nonnegative");
    }
    let clip = |z: f64| sign(z) * t.min(z.abs());
    match space {
        Space::Alpha => {
            if k_diag.len() != y.len() {
                return input_err("diagonal and response lengths differ");
            }
            Ok(Vector::from_fn(y.len(), |i, _| clip(y[i] / k_diag[i])))
        }
        Space::F => {
            if k_diag.len() < y.len() {
                return input_err("diagonal must cover every training point");
            }
            Ok(Vector::from_fn(k_diag.len(), |i, _| {
                if i < y.len() {
                    clip(y[i])
                } else {
                    0.0
                }
            }))
        }
    }
}

/// Penalty weight whose l∞-penalized solution on a diagonal kernel equals the
/// constraint-level solution at level `c`: `λ = Σ_i k_i (|y_i/k_i| - c)₊`.
pub fn linf_lambda_for_level(k_diag: &[f64], y: &Vector, c: f64) -> f64 {
    k_diag
        .iter()
        .zip(y.iter())
        .map(|(k, yi)| k * ((yi / k).abs() - c).max(0.0))
        .sum()
}

/// Explicit factorization `K = ΦΦᵀ` with `Φ = U diag(√s)`.
#[derive(Debug, Clone)]
pub struct ExplicitFeatureMap {
    pub phi: Matrix,
}

impl ExplicitFeatureMap {
    pub fn new(d: &SpectralDecomposition) -> Self {
        Self { phi: d.feature_map() }
    }

    /// `β = Φᵀα`.
    pub fn beta(&self, alpha: &Vector) -> Vector {
        self.phi.tr_mul(alpha)
    }

    /// `Φβ`.
    pub fn predict(&self, beta: &Vector) -> Vector {
        &self.phi * beta
    }
}

/// Runs the feature-space recursion `β ← β + Φᵀ v` next to the dual iteration
/// and returns `max_k ‖Kα_k - Φβ_k‖_∞` over `steps` steps.
pub fn feature_space_discrepancy(k: &KernelMatrix, y: &Vector, config: &DescentConfig, steps: usize) -> Result<f64> {
    let d = eig_sym(k)?;
    let fm = ExplicitFeatureMap::new(&d);
    let mut state = Descent::new(k, y, config.clone())?;
    let q = fm.phi.ncols();
    let mut beta = Vector::zeros(q);
    let mut velocity = Vector::zeros(y.len());
    let eta = config.step_size;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        // independent β-side step: residual from Φβ, same direction rule
        let g = y - fm.predict(&beta);
        let dir = match config.method {
            Method::Kgd => g.clone(),
            Method::Ksgd => g.map(sign),
            Method::Kcd => {
                let m = argmax_abs(&g);
                let mut e = Vector::zeros(g.len());
                e[m] = sign(g[m]);
                e
            }
            Method::Kegd => {
                let cut = config.elastic_mix * norm_linf(&g);
                g.map(|gi| if gi.abs() >= cut { sign(gi) } else { 0.0 })
            }
        };
        velocity = velocity * config.momentum + dir * eta;
        beta += fm.phi.tr_mul(&velocity);
        state.step()?;
        let ka = k.mul_vec(state.alpha());
        worst = worst.max((ka - fm.predict(&beta)).amax());
    }
    Ok(worst)
}

/// Methods with a per-step decrease guarantee below [`crate::descent::step_size_limit`].
pub const GUARANTEED_DESCENT: [Method; 3] = [Method::Kgd, Method::Ksgd, Method::Kcd];

/// The residual norm each method is guaranteed to decrease (kegd: the l∞ norm, unguaranteed).
pub fn descent_norm(method: Method, r: &Vector) -> f64 {
    match method {
        Method::Kgd => norm_l2(r),
        Method::Ksgd => norm_l1(r),
        Method::Kcd | Method::Kegd => norm_linf(r),
    }
}

/// Residual after `steps` steps of `method` from zero, with step size
/// `1/s_max` for kgd and 1e-3 for the sign methods.
pub fn trajectory_residual(k: &KernelMatrix, y: &Vector, method: Method, steps: usize) -> Result<Vector> {
    let eta = match method {
        Method::Kgd => 1.0 / eig_sym(k)?.s_max(),
        _ => 1e-3,
    };
    let mut state = Descent::new(k, y, DescentConfig::new(method).step_size(eta).max_steps(steps.max(1)))?;
    while state.steps_taken() < steps {
        if state.step()? == crate::descent::StepOutcome::Converged {
            break;
        }
    }
    Ok(y - k.mul_vec(state.alpha()))
}

/// One step of `method` from the state whose residual is `r`; returns the new residual.
pub fn one_step_residual(k: &KernelMatrix, r: &Vector, method: Method, eta: f64) -> Result<Vector> {
    let cfg = DescentConfig::new(method).step_size(eta).momentum(0.0).max_steps(1);
    let mut state = Descent::new(k, r, cfg)?;
    state.step()?;
    Ok(r - k.mul_vec(state.alpha()))
}

/// Which bound a verification run certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Proposition {
    #[serde(rename = "1")]
    GapBounds,
    #[serde(rename = "2")]
    Shrinkage,
    #[serde(rename = "3")]
    RiskRatio,
    #[serde(rename = "4")]
    DiagonalSignFlow,
    #[serde(rename = "5")]
    FeatureSpace,
    #[serde(rename = "6")]
    StepSize,
    #[serde(rename = "8")]
    DiagonalFSpace,
}

impl Proposition {
    pub const ALL: [Proposition; 7] = [
        Proposition::GapBounds,
        Proposition::Shrinkage,
        Proposition::RiskRatio,
        Proposition::DiagonalSignFlow,
        Proposition::FeatureSpace,
        Proposition::StepSize,
        Proposition::DiagonalFSpace,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Proposition::GapBounds => "1",
            Proposition::Shrinkage => "2",
            Proposition::RiskRatio => "3",
            Proposition::DiagonalSignFlow => "4",
            Proposition::FeatureSpace => "5",
            Proposition::StepSize => "6",
            Proposition::DiagonalFSpace => "8",
        }
    }

    /// Parse `1`..`8` (without 7) or `all`.
    pub fn parse_selection(s: &str) -> Result<Vec<Proposition>> {
        if s == "all" {
            return Ok(Self::ALL.to_vec());
        }
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.id() == s)
            .map(|p| vec![p])
            .ok_or_else(|| {
                crate::error::Error::Input(format!("unknown proposition '{s}' (expected 1,2,3,4,5,6,8 or all)"))
            })
    }
}

/// Enough information to regenerate the offending instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstInstance {
    pub seed: u64,
    pub instance: usize,
    pub n: usize,
    pub ratio: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub proposition: String,
    pub instances: usize,
    /// Largest observed value of (checked quantity) / (its bound); passes at `<= 1`.
    pub max_ratio: f64,
    pub pass: bool,
    pub worst: Option<WorstInstance>,
}

/// A random Gaussian-kernel problem: `n ≤ 40`, inputs in 1 or 5 dimensions, jitter 1e-8.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub x: Matrix,
    pub xstar: Matrix,
    pub spec: KernelSpec,
    pub k: KernelMatrix,
    pub y: Vector,
}

pub fn random_instance(seed: u64, index: usize) -> Result<RandomInstance> {
    let mut rng = rng_stream(seed, 1000 + index as u64);
    let n = rng.random_range(5..=40);
    let p = if rng.random_bool(0.5) { 1 } else { 5 };
    let x = Matrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
    let xstar = Matrix::from_fn(5, p, |_, _| rng.random_range(-2.0..2.0));
    let bw = rng.random_range(0.3..3.0) * (p as f64).sqrt();
    let spec = KernelSpec::gaussian(bw)?;
    let k = kernel_matrix(&spec, &x, 1e-8)?;
    let y = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    Ok(RandomInstance { x, xstar, spec, k, y })
}

fn random_unit(rng: &mut impl Rng, n: usize) -> Vector {
    let v = Vector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let norm = v.norm();
    v / norm
}

struct Tracker {
    seed: u64,
    max_ratio: f64,
    worst: Option<WorstInstance>,
}

impl Tracker {
    fn new(seed: u64) -> Self {
        Self {
            seed,
            max_ratio: 0.0,
            worst: None,
        }
    }

    fn record(&mut self, instance: usize, n: usize, ratio: f64, detail: impl FnOnce() -> String) {
        if ratio > self.max_ratio || ratio.is_nan() || self.worst.is_none() {
            self.max_ratio = if ratio.is_nan() {
                f64::INFINITY
            } else {
                ratio.max(self.max_ratio)
            };
            self.worst = Some(WorstInstance {
                seed: self.seed,
                instance,
                n,
                ratio,
                detail: detail(),
            });
        }
    }

    fn finish(self, p: Proposition, instances: usize, pass: bool) -> VerifyReport {
        VerifyReport {
            proposition: p.id().into(),
            instances,
            max_ratio: self.max_ratio,
            pass,
            worst: self.worst,
        }
    }
}

/// Time grid shared by the spectral checks: 20 log-spaced points in `[1e-2, 1e3]`.
pub fn default_t_grid() -> Vec<f64> {
    logspace(1e-2, 1e3, 20)
}

pub fn verify(p: Proposition, instances: usize, seed: u64) -> Result<VerifyReport> {
    if instances == 0 {
        return input_err("need at least one instance");
    }
    let within = |r: f64| r <= 1.0 + BOUND_SLACK;
    let mut tr = Tracker::new(seed);
    let grid = default_t_grid();
    match p {
        Proposition::GapBounds => {
            for i in 0..instances {
                let inst = random_instance(seed, i)?;
                let d = eig_sym(&inst.k)?;
                let rep = check_gap_bounds_spectral(&d, &inst.y, &grid)?;
                tr.record(i, inst.k.n(), rep.max_ratio, || {
                    "deterministic gap (parameter and in-sample)".into()
                });
                let kstar = cross_kernel_matrix(&inst.spec, &inst.xstar, &inst.x)?;
                for (j, &t) in grid.iter().enumerate() {
                    let sigma_eps = [0.0, 0.1, 1.0][j % 3];
                    let (c, o) = expected_gap_ratios(&d, 1.0, sigma_eps, kstar.matrix(), t);
                    tr.record(i, inst.k.n(), c.max(o), || {
                        format!("expected gap at t={t}, noise sd {sigma_eps}")
                    });
                }
            }
        }
        Proposition::Shrinkage => {
            for i in 0..instances {
                let inst = random_instance(seed, i)?;
                let d = eig_sym(&inst.k)?;
                for &t in &grid {
                    let [gf_res, rr_res, rr_fit, gf_fit] = shrinkage_extremes(d.s_min(), d.s_max(), t)?;
                    let r = ratio(gf_res, rr_res).max(ratio(rr_fit, gf_fit));
                    // realized ratios on this instance's response respect the same extremes
                    let c = d.project(&inst.y);
                    let yn = c.norm();
                    let res_gf = Vector::from_fn(c.len(), |j, _| c[j] * (-t * d.eigenvalues[j]).exp()).norm() / yn;
                    let fit_rr = Vector::from_fn(c.len(), |j, _| {
                        c[j] * (t * d.eigenvalues[j]) / (1.0 + t * d.eigenvalues[j])
                    })
                    .norm()
                        / yn;
                    let realized = ratio(res_gf, rr_res * (1.0 + 1e-12)).max(ratio(fit_rr, gf_fit * (1.0 + 1e-12)));
                    tr.record(i, d.n(), r.max(realized), || format!("shrinkage extremes at t={t}"));
                }
            }
        }
        Proposition::RiskRatio => {
            for i in 0..instances {
                let inst = random_instance(seed, i)?;
                let d = eig_sym(&inst.k)?;
                let mut rng = rng_stream(seed, 5000 + i as u64);
                let kstar = cross_kernel_matrix(&inst.spec, &inst.xstar, &inst.x)?;
                for sigma in [0.0, 0.1, 1.0] {
                    let a0 = random_unit(&mut rng, d.n());
                    let sc = RiskScenario {
                        alpha0: Alpha0Mode::Fixed {
                            alpha0: a0.as_slice().to_vec(),
                        },
                        noise_sd: sigma,
                    };
                    let rep = check_risk_ratio(&d, &sc, &grid)?;
                    tr.record(i, d.n(), rep.max_ratio / RISK_BOUND, || {
                        format!("risk ratio, fixed unit alpha0, noise sd {sigma}")
                    });
                    let iso = RiskScenario {
                        alpha0: Alpha0Mode::Isotropic { variance: 1.0 },
                        noise_sd: sigma,
                    };
                    for &t in &grid {
                        for r in 0..kstar.matrix().nrows() {
                            let row = kstar.matrix().row(r).transpose();
                            let g = out_of_sample_risk(&d, &iso, &row, t, RiskMethod::Kgf)?;
                            let k = out_of_sample_risk(&d, &iso, &row, t, RiskMethod::Krr)?;
                            tr.record(i, d.n(), ratio(g, k) / RISK_BOUND, || {
                                format!("out-of-sample risk at t={t}, noise sd {sigma}")
                            });
                        }
                    }
                }
            }
        }
        Proposition::DiagonalSignFlow => {
            let eta = 1e-4;
            for i in 0..instances {
                let mut rng = rng_stream(seed, 6000 + i as u64);
                let n = rng.random_range(2..=12);
                let kd: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
                let y = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
                let k = KernelMatrix::from_diagonal(&kd)?;
                let zmax = (0..n).map(|j| (y[j] / kd[j]).abs()).fold(0.0, f64::max);
                let times: Vec<f64> = (1..=10).map(|j| j as f64 * (zmax + 0.5) / 10.0).collect();
                let mut state = Descent::new(
                    &k,
                    &y,
                    DescentConfig::new(Method::Ksgd).step_size(eta).max_steps(usize::MAX),
                )?;
                for &t in &times {
                    let target = (t / eta).round() as usize;
                    while state.steps_taken() < target {
                        state.step()?;
                    }
                    let want = diag_signflow(&kd, &y, state.time(), Space::Alpha)?;
                    let err = (state.alpha() - want).amax();
                    tr.record(i, n, err / (2.0 * eta), || {
                        format!("sign descent vs closed form at t={t}")
                    });
                }
                for &c in &times[..5] {
                    let lambda = linf_lambda_for_level(&kd, &y, c);
                    if lambda <= 0.0 {
                        continue;
                    }
                    let fit = fit_prox(&k, &y, ProxConfig::new(Penalty::Linf, lambda).tol(1e-12))?;
                    let want = diag_signflow(&kd, &y, c, Space::Alpha)?;
                    let err = (fit.vector() - want).amax();
                    tr.record(i, n, err / 1e-4, || format!("l-infinity penalty at level c={c}"));
                }
            }
        }
        Proposition::FeatureSpace => {
            for i in 0..instances {
                let mut rng = rng_stream(seed, 7000 + i as u64);
                let x = Matrix::from_fn(20, 1, |_, _| rng.random_range(-2.0..2.0));
                let k = kernel_matrix(&KernelSpec::gaussian(1.0)?, &x, 0.0)?;
                let y = Vector::from_fn(20, |_, _| StandardNormal.sample(&mut rng));
                for m in Method::ALL {
                    let cfg = DescentConfig::new(m).step_size(1e-3);
                    let disc = feature_space_discrepancy(&k, &y, &cfg, 200)?;
                    tr.record(i, 20, disc / 1e-10, || format!("{m}: max |Kα - Φβ| over 200 steps"));
                }
            }
        }
        Proposition::StepSize => {
            for i in 0..instances {
                let mut rng = rng_stream(seed, 8000 + i as u64);
                let inst = random_instance(seed, i)?;
                for m in GUARANTEED_DESCENT {
                    let steps = rng.random_range(0..=500);
                    let r = trajectory_residual(&inst.k, &inst.y, m, steps)?;
                    let limit = crate::descent::step_size_limit(&inst.k, &r, m)?;
                    if limit <= 0.0 {
                        continue;
                    }
                    let r1 = one_step_residual(&inst.k, &r, m, 0.99 * limit)?;
                    let q = descent_norm(m, &r1) / descent_norm(m, &r);
                    // strict decrease: ratio must stay below 1
                    let score = if q < 1.0 {
                        q
                    } else {
                        1.0 + (q - 1.0).max(2.0 * BOUND_SLACK)
                    };
                    tr.record(i, inst.k.n(), score, || {
                        format!("{m}: step {steps} at 0.99 x limit, norm ratio {q}")
                    });
                }
            }
        }
        Proposition::DiagonalFSpace => {
            let eta = 1e-4;
            for i in 0..instances {
                let mut rng = rng_stream(seed, 9000 + i as u64);
                let n = rng.random_range(2..=10);
                let nstar = rng.random_range(1..=5);
                let kd: Vec<f64> = (0..n + nstar).map(|_| rng.random_range(0.5..2.0)).collect();
                let y = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
                // f-space sign flow: gradient of ‖y⁺ - f⁺‖²_{K**} with the test residual pinned at 0
                let mut f = Vector::zeros(n + nstar);
                let tmax = norm_linf(&y) + 0.5;
                let steps = (tmax / eta).round() as usize;
                for step in 1..=steps {
                    for j in 0..n + nstar {
                        let resid = if j < n { y[j] - f[j] } else { 0.0 };
                        f[j] += eta * sign(kd[j] * resid);
                    }
                    if step % (steps / 10).max(1) == 0 {
                        let t = step as f64 * eta;
                        let want = diag_signflow(&kd, &y, t, Space::F)?;
                        let err = (&f - &want).amax();
                        let test_nonzero = (n..n + nstar).any(|j| want[j] != 0.0 || f[j] != 0.0);
                        let r = if test_nonzero { f64::INFINITY } else { err / (2.0 * eta) };
                        tr.record(i, n + nstar, r, || format!("f-space sign flow at t={t}"));
                        // constrained minimizer at level c = t: clip each coordinate of y⁺
                        let clip = Vector::from_fn(n + nstar, |j, _| if j < n { y[j].clamp(-t, t) } else { 0.0 });
                        tr.record(i, n + nstar, (&clip - &want).amax() / 1e-12, || {
                            format!("box-constrained solution at c={t}")
                        });
                    }
                }
            }
        }
    }
    let pass = within(tr.max_ratio);
    Ok(tr.finish(p, instances, pass))
}
