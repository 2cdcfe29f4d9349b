//! Command-line front end. [`run`] parses arguments and returns the process
//! exit code: 0 on success, 2 for usage, config and input errors, 3 for
//! numerical failures. Failures print a JSON [`ErrorReport`] on stderr.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{
    fit_adaptive_rrr, load_model, save_model, FitConfig, NoiseLevel, DEFAULT_DELTA, DEFAULT_THETA,
};
use crate::experiment::{
    env_seed, run_experiment, write_error_json, ErrorReport, ExperimentConfig, ExperimentKind,
};
use crate::matrix::{read_csv, write_csv, write_vector_csv};
use crate::synth::{SynthConfig, SyntheticInstance};
use crate::LinearPredictor;

#[derive(Debug, Parser)]
#[command(name = "arrr", version, about = "Adaptive reduced rank regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the adaptive estimator on CSV data and save a model directory.
    Fit(FitArgs),
    /// Apply a saved model to a feature CSV.
    Predict(PredictArgs),
    /// Generate a synthetic instance.
    Synth(SynthArgs),
    /// (k1, k2) grid sweep on synthetic data.
    Sweep(ExperimentArgs),
    /// Validated comparison against the baselines on synthetic data.
    Compare(ExperimentArgs),
    /// Rolling train/valid/test backtest on a return panel.
    Rolling(ExperimentArgs),
    /// Build and verify a lower-bound packing family.
    Packing(ExperimentArgs),
    /// Angles between sample and true covariance eigenvectors.
    Angles(ExperimentArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    /// Noise standard deviation, or `auto`.
    #[arg(long, default_value = "auto")]
    sigma: NoiseLevel,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON file with the generator settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d1: Option<usize>,
    #[arg(long)]
    d2: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    upsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to `io.out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (result, out_dir) = dispatch(cli.command);
    match result {
        Ok(()) => 0,
        Err(e) => {
            let report = ErrorReport::from_error(&e);
            if e.is_numerical() {
                if let Some(dir) = out_dir {
                    if !dir.join("error.json").exists() && fs::create_dir_all(&dir).is_ok() {
                        let _ = write_error_json(&dir.join("error.json"), &e);
                    }
                }
            }
            eprintln!("{}", report.to_json());
            report.exit_code
        }
    }
}

fn dispatch(command: Command) -> (Result<()>, Option<PathBuf>) {
    match command {
        Command::Fit(a) => {
            let out = a.out.clone();
            (fit(a), Some(out))
        }
        Command::Predict(a) => (predict(a), None),
        Command::Synth(a) => (synth(a), None),
        Command::Sweep(a) => experiment(ExperimentKind::Sweep, a),
        Command::Compare(a) => experiment(ExperimentKind::Compare, a),
        Command::Rolling(a) => experiment(ExperimentKind::Rolling, a),
        Command::Packing(a) => experiment(ExperimentKind::Packing, a),
        Command::Angles(a) => experiment(ExperimentKind::Angles, a),
    }
}

fn fit(a: FitArgs) -> Result<()> {
    let x = read_csv(&a.x)?;
    let y = read_csv(&a.y)?;
    let config = FitConfig {
        delta: a.delta,
        theta: a.theta,
        sigma_eps: a.sigma,
        k1_override: a.k1,
        k2_override: a.k2,
        upsilon_check: None,
    };
    let model = fit_adaptive_rrr(&x, &y, &config)?;
    save_model(&model, &a.out)?;
    println!(
        "{}",
        serde_json::json!({
            "k1": model.k1,
            "k2": model.k2,
            "sigma_eps": model.sigma_eps_used,
            "threshold": model.threshold_used,
            "out": a.out,
        })
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let x = read_csv(&a.x)?;
    let pred = model.predict(&x)?;
    write_csv(&a.out, &pred)
}

#[derive(Serialize)]
struct SynthMeta<'a> {
    config: &'a SynthConfig,
    sigma_noise: f64,
    version: &'a str,
}

fn synth_config(a: &SynthArgs) -> Result<SynthConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<SynthConfig>(&text)
                .map_err(|e| Error::Config(format!("invalid synth config: {e}")))?
        }
        None => {
            let need = |v: Option<usize>, name: &str| {
                v.ok_or_else(|| Error::Config(format!("--{name} is required without --config")))
            };
            SynthConfig {
                d1: need(a.d1, "d1")?,
                d2: need(a.d2, "d2")?,
                n: need(a.n, "n")?,
                rank_m: need(a.rank, "rank")?,
                omega: a.omega.unwrap_or(2.0),
                eta: a.eta.unwrap_or(0.0),
                upsilon: 1.0,
                seed: 0,
            }
        }
    };
    macro_rules! set {
        ($($field:ident <- $flag:expr),*) => { $(if let Some(v) = $flag { cfg.$field = v; })* };
    }
    set!(d1 <- a.d1, d2 <- a.d2, n <- a.n, rank_m <- a.rank, omega <- a.omega,
         eta <- a.eta, upsilon <- a.upsilon, seed <- a.seed);
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = synth_config(&a)?;
    let inst = SyntheticInstance::generate(&cfg)?;
    let out = &a.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_csv(&out.join("x.csv"), &inst.x)?;
    write_csv(&out.join("y.csv"), &inst.y)?;
    write_csv(&out.join("m.csv"), &inst.m)?;
    write_vector_csv(&out.join("lambda.csv"), &inst.lambda_star)?;
    let meta = SynthMeta {
        config: &cfg,
        sigma_noise: inst.sigma_noise,
        version: crate::VERSION,
    };
    let path = out.join("meta.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
}

fn experiment(kind: ExperimentKind, a: ExperimentArgs) -> (Result<()>, Option<PathBuf>) {
    let cfg = match ExperimentConfig::load(&a.config) {
        Ok(c) => c,
        Err(e) => return (Err(e), None),
    };
    if cfg.kind != kind {
        let msg = format!(
            "config kind is {} but the {} subcommand was used",
            cfg.kind.name(),
            kind.name()
        );
        return (Err(Error::Config(msg)), None);
    }
    let Some(out) = a.out.or_else(|| cfg.io.out.clone()) else {
        return (
            Err(Error::Config(
                "no output directory: pass --out or set io.out".into(),
            )),
            None,
        );
    };
    let result = run_experiment(&cfg, &out, a.jobs).map(|summary| {
        for f in &summary.files {
            println!("{}", f.display());
        }
    });
    (result, Some(out))
}
