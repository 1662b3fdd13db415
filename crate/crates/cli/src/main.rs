#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use kernelflow::data::{
    apply_standardization, fit_standardization, gen_synthetic, inject_outliers, load_csv, split, Dataset, Synthetic,
};
use kernelflow::experiment::{
    fit_estimator, run_experiment, DataSource, Estimator, ExperimentConfig, FitRequest, Protocol,
};
use kernelflow::linalg::Vector;
use kernelflow::select::r2;
use kernelflow::theory::{verify, Proposition};
use kernelflow::{kernel_matrix, run_descent, DescentConfig, Error, KernelFamily, KernelSpec, Method};
use serde_json::json;

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "kernelflow",
    version,
    about = "Kernel regression with explicit and early-stopping regularization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one estimator and write model, predictions and metrics.
    Fit(FitArgs),
    /// Run the seeded comparison experiment over several estimators.
    Compare(CompareArgs),
    /// Numerically check the theoretical bounds on random instances.
    Verify(VerifyArgs),
    /// Record the solution path of a descent method as CSV.
    Path(PathArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    data: Option<PathBuf>,
    /// Response column of --data.
    #[arg(long, default_value = "y")]
    target: String,
    /// Synthetic generator: sin (Cauchy noise) or peak (Gaussian noise).
    #[arg(long)]
    synth: Option<String>,
    /// Synthetic sample size.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Multiply responses by (1 + |Cauchy(0, scale)|) before splitting.
    #[arg(long, value_name = "SCALE")]
    outliers: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    #[arg(long, conflicts_with = "cv")]
    bandwidth: Option<f64>,
    /// Select the bandwidth (and regularization unless fixed) by cross-validation.
    #[arg(long)]
    cv: bool,
    #[arg(long)]
    method: String,
    /// Regularization: `lambda=0.1`, `t=5` or a bare number.
    #[arg(long, conflicts_with = "early_stop")]
    reg: Option<String>,
    /// Select the stopping time (or penalty) on validation data.
    #[arg(long)]
    early_stop: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long)]
    out: PathBuf,
    /// 50×50 selection grids.
    #[arg(long)]
    paper_grid: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    /// Comma-separated estimators.
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<String>,
    /// Number of random splits.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// First seed; split i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rows drawn per split from --data.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    paper_grid: bool,
    /// Record wall-clock times (reports are then not reproducible).
    #[arg(long)]
    timing: bool,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON instead of the text table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// 1, 2, 3, 4, 5, 6, 8 or all.
    #[arg(long, default_value = "all")]
    prop: String,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    #[arg(long)]
    bandwidth: f64,
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 1e-4)]
    step_size: f64,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    /// Stop after this much optimization time.
    #[arg(long, default_value_t = 10.0)]
    max_time: f64,
    #[arg(long, default_value_t = 100)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Error wrapper that remembers which exit code applies.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        let code = match err.downcast_ref::<Error>() {
            Some(Error::NotPsd { .. } | Error::Divergence { .. }) => EXIT_NUMERICAL,
            Some(_) => EXIT_USAGE,
            None => EXIT_USAGE,
        };
        Self { code, err }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        anyhow::Error::from(err).into()
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Path(a) => cmd_path(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn threads() -> CliResult<Option<usize>> {
    match std::env::var("KERNELFLOW_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .with_context(|| format!("KERNELFLOW_THREADS must be a positive integer, got '{v}'"))?;
            if n == 0 {
                return Err(anyhow::anyhow!("KERNELFLOW_THREADS must be positive").into());
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn parse_family(s: &str) -> CliResult<KernelFamily> {
    Ok(s.parse::<KernelFamily>()?)
}

fn parse_reg(s: &str) -> CliResult<f64> {
    let value = match s.split_once('=') {
        Some((key, v)) => {
            if !matches!(key.trim(), "t" | "lambda" | "λ") {
                return Err(anyhow::anyhow!("unknown regularization key '{key}' (use t= or lambda=)").into());
            }
            v
        }
        None => s,
    };
    Ok(value
        .trim()
        .parse::<f64>()
        .with_context(|| format!("invalid regularization value '{s}'"))?)
}

fn load_data(d: &DataArgs, seed: u64) -> CliResult<Dataset> {
    let data = match (&d.data, &d.synth) {
        (Some(path), _) => load_csv(path, &d.target)?,
        (None, Some(kind)) => gen_synthetic(kind.parse::<Synthetic>()?, d.n, seed, -10.0, 10.0)?,
        (None, None) => return Err(anyhow::anyhow!("one of --data or --synth is required").into()),
    };
    Ok(match d.outliers {
        Some(scale) => {
            let y = inject_outliers(&data.y, seed, scale)?;
            Dataset { y, ..data }
        }
        None => data,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_fit(a: FitArgs) -> CliResult<u8> {
    let est: Estimator = a.method.parse()?;
    let reg = a.reg.as_deref().map(parse_reg).transpose()?;
    let mut protocol = Protocol {
        kernel: parse_family(&a.kernel)?,
        ..Protocol::default()
    };
    if a.paper_grid {
        protocol = protocol.paper_grid();
    }
    let data = load_data(&a.data, a.seed)?;
    let (train_raw, test_raw) = split(&data, 1.0 - a.test_fraction, a.seed)?;
    let params = fit_standardization(&train_raw)?;
    let train = apply_standardization(&train_raw, &params)?;
    let test = apply_standardization(&test_raw, &params)?;
    let req = FitRequest {
        bandwidth: a.bandwidth,
        reg,
    };
    let fitted = fit_estimator(&train, est, req, &protocol, a.seed)?;
    if let Some(w) = &fitted.dual.warning {
        log::warn!("{w}");
    }
    let pred = params.inverse_y(&fitted.predict(&train.x, &test.x)?);
    let score = r2(&test_raw.y, &pred)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let model = json!({
        "dual": fitted.dual,
        "config": {
            "method": est,
            "kernel": fitted.spec,
            "reg": fitted.reg,
            "seed": a.seed,
            "source": data.meta.source,
            "standardization": params,
            "training_inputs": train.x.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
        }
    });
    write_json(&a.out.join("model.json"), &model)?;

    let mut w = csv::Writer::from_path(a.out.join("predictions.csv")).context("creating predictions.csv")?;
    let mut header: Vec<String> = data.meta.columns.clone();
    if header.len() != test_raw.p() {
        header = (0..test_raw.p()).map(|j| format!("x{j}")).collect();
    }
    header.push("y".into());
    header.push("prediction".into());
    w.write_record(&header).context("writing predictions.csv")?;
    for i in 0..test_raw.n() {
        let mut rec: Vec<String> = test_raw.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(test_raw.y[i].to_string());
        rec.push(pred[i].to_string());
        w.write_record(&rec).context("writing predictions.csv")?;
    }
    w.flush().context("writing predictions.csv")?;

    let metrics = json!({
        "r2": score,
        "sparsity": fitted.sparsity(),
        "bandwidth": fitted.spec.bandwidth,
        "reg": fitted.reg,
        "n_train": train.n(),
        "n_test": test.n(),
    });
    write_json(&a.out.join("metrics.json"), &metrics)?;
    println!("{est}: test r2 {score:.4}, sparsity {:.3}", fitted.sparsity());
    Ok(0)
}

fn cmd_compare(a: CompareArgs) -> CliResult<u8> {
    let methods = a
        .methods
        .iter()
        .map(|m| m.parse::<Estimator>())
        .collect::<kernelflow::Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(anyhow::anyhow!("methods list is empty").into());
    }
    let mut protocol = Protocol {
        kernel: parse_family(&a.kernel)?,
        ..Protocol::default()
    };
    if a.paper_grid {
        protocol = protocol.paper_grid();
    }
    let source = match (&a.data.data, &a.data.synth) {
        (Some(path), _) => DataSource::Table {
            name: path.display().to_string(),
            data: Some(load_csv(path, &a.data.target)?),
            subsample: a.subsample,
        },
        (None, Some(kind)) => DataSource::Synthetic {
            generator: kind.parse()?,
            n: a.data.n,
        },
        (None, None) => bail_usage("one of --data or --synth is required")?,
    };
    let config = ExperimentConfig {
        source,
        methods,
        seeds: a.seeds,
        base_seed: a.seed,
        train_fraction: 0.8,
        outlier_scale: a.data.outliers,
        protocol,
        timing: a.timing,
    };
    let report = run_experiment(&config, threads()?)?;
    let text = serde_json::to_string_pretty(&report).context("serializing report")? + "\n";
    if let Some(out) = &a.out {
        fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    }
    if a.json {
        print!("{text}");
    } else {
        print!("{}", report.to_table());
    }
    Ok(0)
}

fn bail_usage<T>(msg: &str) -> CliResult<T> {
    Err(anyhow::anyhow!(msg.to_string()).into())
}

fn cmd_verify(a: VerifyArgs) -> CliResult<u8> {
    let props = Proposition::parse_selection(&a.prop)?;
    let reports = props
        .into_iter()
        .map(|p| verify(p, a.instances, a.seed))
        .collect::<kernelflow::Result<Vec<_>>>()?;
    let pass = reports.iter().all(|r| r.pass);
    let doc = json!({ "pass": pass, "seed": a.seed, "instances": a.instances, "reports": reports });
    let text = serde_json::to_string_pretty(&doc).context("serializing report")?;
    if let Some(out) = &a.out {
        fs::write(out, text.clone() + "\n").with_context(|| format!("writing {}", out.display()))?;
    }
    println!("{text}");
    Ok(if pass { 0 } else { EXIT_VERIFY_FAILED })
}

fn cmd_path(a: PathArgs) -> CliResult<u8> {
    let method: Method = a.method.parse()?;
    let data = load_data(&a.data, a.seed)?;
    let params = fit_standardization(&data)?;
    let data = apply_standardization(&data, &params)?;
    let spec = KernelSpec::new(parse_family(&a.kernel)?, a.bandwidth)?;
    let k = kernel_matrix(&spec, &data.x, 0.0)?;
    if !(a.step_size > 0.0 && a.max_time > 0.0) {
        return bail_usage("step size and max time must be positive");
    }
    let steps = (a.max_time / a.step_size).round() as usize;
    let config = DescentConfig::new(method)
        .step_size(a.step_size)
        .momentum(a.momentum)
        .max_steps(steps)
        .stride(a.stride);
    let y: Vector = data.y.clone();
    let path = run_descent(&k, &y, config)?;
    let file = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    path.write_csv(file)?;
    println!(
        "{method}: {} checkpoints, final time {}",
        path.checkpoints.len(),
        path.last().time
    );
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reg_syntax() {
        assert_eq!(parse_reg("t=0").ok().unwrap(), 0.0);
        assert_eq!(parse_reg("lambda=0.5").ok().unwrap(), 0.5);
        assert_eq!(parse_reg("2").ok().unwrap(), 2.0);
        assert!(parse_reg("mu=1").is_err());
        assert!(parse_reg("t=abc").is_err());
    }

    #[test]
    fn numerical_errors_map_to_exit_three() {
        let f: Failure = Error::NotPsd { min_eigenvalue: -1.0 }.into();
        assert_eq!(f.code, EXIT_NUMERICAL);
        let f: Failure = Error::Input("x".into()).into();
        assert_eq!(f.code, EXIT_USAGE);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
