//! Synthetic generators, outlier injection, CSV ingestion, standardization and splits.
//!
//! Randomness comes from ChaCha8, a counter-based generator. A `(seed, stream)`
//! pair identifies an independent sequence, so separate concerns (inputs,
//! noise, outliers, splits) never share draws.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::linalg::{Matrix, Vector};

/// Cauchy draws use `u` clamped to `[U_CLAMP, 1 - U_CLAMP]`.
pub const U_CLAMP: f64 = 1e-12;

pub mod streams {
    pub const INPUTS: u64 = 0;
    pub const NOISE: u64 = 1;
    pub const OUTLIERS: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const SUBSAMPLE: u64 = 4;
    pub const FOLDS: u64 = 5;
}

/// Independent random stream `stream` under `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    /// Indices (into the original columns) of the retained feature columns.
    pub kept_columns: Vec<usize>,
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
}

impl Standardization {
    pub fn transform_x(&self, x: &Matrix) -> Result<Matrix> {
        let p = self.kept_columns.iter().max().map_or(0, |m| m + 1);
        if x.ncols() < p {
            return input_err(format!("expected at least {p} columns, got {}", x.ncols()));
        }
        Ok(Matrix::from_fn(x.nrows(), self.kept_columns.len(), |i, j| {
            (x[(i, self.kept_columns[j])] - self.x_mean[j]) / self.x_sd[j]
        }))
    }

    pub fn transform_y(&self, y: &Vector) -> Vector {
        y.map(|v| (v - self.y_mean) / self.y_sd)
    }

    /// Map standardized responses or predictions back to the original scale.
    pub fn inverse_y(&self, y: &Vector) -> Vector {
        y.map(|v| v * self.y_sd + self.y_mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: String,
    pub seed: Option<u64>,
    pub columns: Vec<String>,
    pub standardization: Option<Standardization>,
    #[serde(default)]
    pub dropped_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vector,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vector, source: impl Into<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return input_err(format!("{} input rows but {} responses", x.nrows(), y.len()));
        }
        if y.is_empty() {
            return input_err("dataset is empty");
        }
        let columns = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            x,
            y,
            meta: DatasetMeta {
                source: source.into(),
                seed: None,
                columns,
                standardization: None,
                dropped_columns: Vec::new(),
            },
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows selected by index, keeping metadata.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let x = Matrix::from_fn(idx.len(), self.p(), |i, j| self.x[(idx[i], j)]);
        let y = Vector::from_fn(idx.len(), |i, _| self.y[idx[i]]);
        Dataset {
            x,
            y,
            meta: self.meta.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Synthetic {
    /// `y = sin(πx/2) + Cauchy(0, 0.1)`.
    Sin,
    /// `y = exp(-5x²) + N(0, 0.1²)`.
    Peak,
}

impl Synthetic {
    pub fn name(self) -> &'static str {
        match self {
            Synthetic::Sin => "sin",
            Synthetic::Peak => "peak",
        }
    }

    /// Noiseless regression function.
    pub fn signal(self, x: f64) -> f64 {
        match self {
            Synthetic::Sin => (std::f64::consts::FRAC_PI_2 * x).sin(),
            Synthetic::Peak => (-5.0 * x * x).exp(),
        }
    }
}

impl fmt::Display for Synthetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Synthetic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sin" => Ok(Synthetic::Sin),
            "peak" => Ok(Synthetic::Peak),
            _ => input_err(format!("unknown synthetic dataset '{s}' (expected sin or peak)")),
        }
    }
}

/// Inverse Cauchy CDF with location 0 and scale `gamma`.
pub fn cauchy_quantile(u: f64, gamma: f64) -> f64 {
    let u = u.clamp(U_CLAMP, 1.0 - U_CLAMP);
    gamma * (std::f64::consts::PI * (u - 0.5)).tan()
}

pub fn sample_cauchy<R: Rng + ?Sized>(rng: &mut R, gamma: f64) -> f64 {
    cauchy_quantile(rng.random::<f64>(), gamma)
}

/// One-dimensional synthetic dataset with inputs uniform on `(lo, hi)`.
pub fn gen_synthetic(kind: Synthetic, n: usize, seed: u64, lo: f64, hi: f64) -> Result<Dataset> {
    if n == 0 {
        return input_err("sample size must be positive");
    }
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return input_err(format!("invalid input range ({lo}, {hi})"));
    }
    let mut xr = rng_stream(seed, streams::INPUTS);
    let mut nr = rng_stream(seed, streams::NOISE);
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    let x = Matrix::from_fn(n, 1, |_, _| xr.random_range(lo..hi));
    let y = Vector::from_fn(n, |i, _| {
        let noise = match kind {
            Synthetic::Sin => sample_cauchy(&mut nr, 0.1),
            Synthetic::Peak => normal.sample(&mut nr),
        };
        kind.signal(x[(i, 0)]) + noise
    });
    let mut d = Dataset::new(x, y, kind.name())?;
    d.meta.seed = Some(seed);
    d.meta.columns = vec!["x".into()];
    Ok(d)
}

pub fn gen_sin_cauchy(n: usize, seed: u64) -> Result<Dataset> {
    gen_synthetic(Synthetic::Sin, n, seed, -10.0, 10.0)
}

pub fn gen_gauss_peak(n: usize, seed: u64) -> Result<Dataset> {
    gen_synthetic(Synthetic::Peak, n, seed, -10.0, 10.0)
}

/// `y_i ← y_i (1 + |ε_i|)` with `ε_i ~ Cauchy(0, scale)`.
pub fn inject_outliers(y: &Vector, seed: u64, scale: f64) -> Result<Vector> {
    if !(scale > 0.0) {
        return input_err(format!("outlier scale must be positive, got {scale}"));
    }
    let mut rng = rng_stream(seed, streams::OUTLIERS);
    Ok(y.map(|v| v * (1.0 + sample_cauchy(&mut rng, scale).abs())))
}

fn column_stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Estimate standardization parameters; constant feature columns are dropped.
pub fn fit_standardization(d: &Dataset) -> Result<Standardization> {
    if d.n() < 2 {
        return input_err("standardization needs at least two rows");
    }
    let (y_mean, y_sd) = column_stats(d.y.iter().copied());
    if !(y_sd > 0.0) {
        return input_err("response has zero variance");
    }
    let mut kept_columns = Vec::new();
    let mut x_mean = Vec::new();
    let mut x_sd = Vec::new();
    for j in 0..d.p() {
        let (m, s) = column_stats(d.x.column(j).iter().copied());
        if s > 0.0 {
            kept_columns.push(j);
            x_mean.push(m);
            x_sd.push(s);
        }
    }
    Ok(Standardization {
        kept_columns,
        x_mean,
        x_sd,
        y_mean,
        y_sd,
    })
}

/// Apply previously estimated parameters.
pub fn apply_standardization(d: &Dataset, params: &Standardization) -> Result<Dataset> {
    let x = params.transform_x(&d.x)?;
    let y = params.transform_y(&d.y);
    let mut meta = d.meta.clone();
    meta.dropped_columns = (0..d.p())
        .filter(|j| !params.kept_columns.contains(j))
        .map(|j| meta.columns.get(j).cloned().unwrap_or_else(|| format!("x{j}")))
        .collect();
    meta.columns = params
        .kept_columns
        .iter()
        .map(|&j| meta.columns.get(j).cloned().unwrap_or_else(|| format!("x{j}")))
        .collect();
    meta.standardization = Some(params.clone());
    Ok(Dataset { x, y, meta })
}

/// Zero mean, unit (population) variance for every feature and the response.
pub fn standardize(d: &Dataset) -> Result<Dataset> {
    let params = fit_standardization(d)?;
    let out = apply_standardization(d, &params)?;
    for c in &out.meta.dropped_columns {
        log::warn!("dropping constant column '{c}'");
    }
    if out.p() == 0 {
        return input_err("every feature column is constant");
    }
    Ok(out)
}

/// Seeded permutation partition into `round(fraction * n)` training rows and the rest.
pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return input_err(format!("train fraction must lie in (0, 1), got {train_fraction}"));
    }
    if d.n() < 2 {
        return input_err("need at least two rows to split");
    }
    let n_train = ((train_fraction * d.n() as f64).round() as usize).clamp(1, d.n() - 1);
    let mut idx: Vec<usize> = (0..d.n()).collect();
    idx.shuffle(&mut rng_stream(seed, streams::SPLIT));
    Ok((d.select_rows(&idx[..n_train]), d.select_rows(&idx[n_train..])))
}

/// Random subset of `m` rows (all rows when `m >= n`).
pub fn subsample(d: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return input_err("subsample size must be positive");
    }
    if m >= d.n() {
        return Ok(d.clone());
    }
    let mut idx: Vec<usize> = (0..d.n()).collect();
    idx.shuffle(&mut rng_stream(seed, streams::SUBSAMPLE));
    idx.truncate(m);
    idx.sort_unstable();
    Ok(d.select_rows(&idx))
}

/// Read a headed CSV; `target` names the response, every other column is a feature.
pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut d = load_csv_reader(file, target)?;
    d.meta.source = path.display().to_string();
    Ok(d)
}

/// Row numbers in parse errors count lines in the file, header = 1; columns are 1-based.
pub fn load_csv_reader<R: Read>(reader: R, target: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let tcol = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::Input(format!("target column '{target}' not in header {headers:?}")))?;
    let mut rows: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: rec.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for (c, field) in rec.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("'{field}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: "non-finite value".into(),
                });
            }
            if c == tcol {
                y.push(value);
            } else {
                rows.push(value);
            }
        }
    }
    if y.is_empty() {
        return input_err("CSV has no data rows");
    }
    let p = headers.len() - 1;
    let x = Matrix::from_row_slice(y.len(), p, &rows);
    let mut d = Dataset::new(x, Vector::from_vec(y), "csv")?;
    d.meta.columns = headers
        .into_iter()
        .enumerate()
        .filter(|(c, _)| *c != tcol)
        .map(|(_, h)| h)
        .collect();
    Ok(d)
}
