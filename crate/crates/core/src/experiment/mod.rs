//! Config-driven experiment drivers behind the `sweep`, `compare`,
//! `rolling`, `packing` and `angles` subcommands.
//!
//! A run is described by one JSON [`ExperimentConfig`]. The whole config is
//! checked before any computation starts; results are collected in memory,
//! sorted into a fixed order and only then written, so a failed run leaves
//! no partial `results.csv` behind.

mod config;
mod output;
mod rolling;
mod selection;
mod synthetic;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::packing::{build_family, verify_packing, PackingParams, PackingReport};

pub use config::{
    env_seed, AdaptiveGrid, AnglesConfig, BaselineGrid, ExperimentConfig, ExperimentKind, Grids,
    IoConfig, RollingConfig, SEED_ENV,
};
pub use output::{results_csv, write_error_json, ErrorReport, RESULT_HEADER};
pub use rolling::run_rolling;
pub use synthetic::{angle_rows, run_angles, run_compare, run_sweep, AngleCell};

/// Name used for the adaptive estimator in result rows.
pub const ADAPTIVE_METHOD: &str = "adaptive_rrr";

/// Which fold a row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Fold {
    /// Synthetic runs have no folds.
    None,
    Index(usize),
    /// All test folds glued together.
    All,
}

impl Fold {
    pub fn label(self) -> String {
        match self {
            Fold::None => String::new(),
            Fold::Index(i) => i.to_string(),
            Fold::All => "all".to_string(),
        }
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub seed: u64,
    pub method: String,
    pub eta: Option<f64>,
    pub fold: Fold,
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    /// `key=value` pairs joined by `;`.
    pub hyper: String,
    pub report: Option<MetricsReport>,
}

/// Sorts rows by `(method, eta, k1, k2, seed, fold)`.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then_with(|| cmp_eta(a.eta, b.eta))
            .then(a.k1.cmp(&b.k1))
            .then(a.k2.cmp(&b.k2))
            .then(a.seed.cmp(&b.seed))
            .then(a.fold.cmp(&b.fold))
            .then_with(|| a.hyper.cmp(&b.hyper))
    });
}

fn cmp_eta(a: Option<f64>, b: Option<f64>) -> std::cmp::Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        _ => a.is_some().cmp(&b.is_some()),
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config_hash: String,
    pub rows: Vec<ResultRow>,
    pub files: Vec<PathBuf>,
    pub packing: Option<PackingReport>,
}

/// In-memory result of [`execute`], before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub rows: Vec<ResultRow>,
    pub packing: Option<PackingReport>,
    pub angles: Vec<AngleCell>,
}

/// Runs a validated config and returns sorted rows plus side artifacts.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut outcome = Outcome {
        rows: Vec::new(),
        packing: None,
        angles: Vec::new(),
    };
    match cfg.kind {
        ExperimentKind::Sweep => outcome.rows = run_sweep(cfg)?,
        ExperimentKind::Compare => outcome.rows = run_compare(cfg)?,
        ExperimentKind::Rolling => outcome.rows = run_rolling(cfg)?,
        ExperimentKind::Angles => {
            let (rows, cells) = run_angles(cfg)?;
            outcome.rows = rows;
            outcome.angles = cells;
        }
        ExperimentKind::Packing => {
            let pc = cfg.packing.as_ref().expect("validated");
            let params = PackingParams::derive(pc)?;
            let report = verify_packing(&build_family(&params)?)?;
            outcome.rows = vec![packing_row(&report)];
            outcome.packing = Some(report);
        }
    }
    sort_rows(&mut outcome.rows);
    Ok(outcome)
}

fn packing_row(report: &PackingReport) -> ResultRow {
    let ratio = report
        .distance_ratio
        .map_or_else(|| "inf".to_string(), crate::matrix::fmt_f64);
    ResultRow {
        seed: report.params.seed,
        method: "packing".to_string(),
        eta: None,
        fold: Fold::None,
        k1: None,
        k2: None,
        hyper: format!(
            "family_size={};distance_ratio={ratio};max_overlap={};pass={}",
            report.family_size, report.max_overlap, report.pass
        ),
        report: None,
    }
}

/// Runs `cfg` and writes its artifacts into `out`, inside a pool of `jobs`
/// worker threads when given.
///
/// Config and input errors are reported before `out` is created. Numerical
/// failures additionally leave an `error.json` in `out`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: &Path,
    jobs: Option<usize>,
) -> Result<RunSummary> {
    cfg.validate()?;
    let outcome = match jobs {
        Some(0) => return Err(Error::Config("--jobs must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {j} worker threads: {e}")))?
            .install(|| execute(cfg)),
        None => execute(cfg),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) if e.is_numerical() => {
            fs::create_dir_all(out).map_err(|io| Error::io(out, io))?;
            write_error_json(&out.join("error.json"), &e)?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let hash = cfg.hash();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = Vec::new();
    let results = out.join("results.csv");
    write_file(&results, &results_csv(&hash, cfg.kind, &outcome.rows))?;
    files.push(results);
    if let Some(report) = &outcome.packing {
        let path = out.join("report.json");
        write_file(&path, &(serde_json::to_string_pretty(report)? + "\n"))?;
        files.push(path);
    }
    if cfg.kind == ExperimentKind::Angles {
        let path = out.join("angles.csv");
        write_file(&path, &output::angles_csv(&hash, &outcome.angles))?;
        files.push(path);
    }
    Ok(RunSummary {
        config_hash: hash,
        rows: outcome.rows,
        files,
        packing: outcome.packing,
    })
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// `key=value` rendering of an optional rank and a regularization weight.
pub(crate) fn hyper_string(pairs: &[(&str, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}
