//! Evaluation metrics: normalized MSE, pooled R², correlation, coefficient
//! reconstruction error, recovered rank and the in/out-of-sample gap.
//!
//! All statistics pool every entry of the response matrix. The MSE is
//! normalized by the variance of the flattened response of the split being
//! scored.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{fmt_f64, DenseMatrix};
use crate::spectral::SpectralDecomposition;
use crate::LinearPredictor;

/// Scores of one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitScore {
    /// `mean((y − ŷ)²) / var(vec(y))`; NaN when `y` is constant.
    pub mse: f64,
    /// `1 − Σ(y − ŷ)² / Σ(y − ȳ)²`; NaN when `y` is constant.
    pub r2: f64,
    /// Pearson correlation of `vec(ŷ)` and `vec(y)`; 0 when either is constant.
    pub corr: f64,
    pub constant_y: bool,
}

pub fn score_split(pred: &DenseMatrix, y: &DenseMatrix) -> Result<SplitScore> {
    if pred.shape() != y.shape() {
        return Err(Error::dims(format!(
            "prediction is {:?} but response is {:?}",
            pred.shape(),
            y.shape()
        )));
    }
    if y.is_empty() {
        return Err(Error::arg("cannot score an empty split"));
    }
    let count = y.len() as f64;
    let y_mean = y.mean();
    let p_mean = pred.mean();
    let sse = (y - pred).norm_squared();
    let sst: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let spp: f64 = pred.iter().map(|v| (v - p_mean).powi(2)).sum();
    let spy: f64 = y
        .iter()
        .zip(pred.iter())
        .map(|(a, b)| (a - y_mean) * (b - p_mean))
        .sum();
    let constant_y = sst == 0.0;
    let (mse, r2) = if constant_y {
        (f64::NAN, f64::NAN)
    } else {
        ((sse / count) / (sst / count), 1.0 - sse / sst)
    };
    let corr = if constant_y || spp == 0.0 {
        0.0
    } else {
        (spy / (sst * spp).sqrt()).clamp(-1.0, 1.0)
    };
    Ok(SplitScore {
        mse,
        r2,
        corr,
        constant_y,
    })
}

/// Number of singular values above `1e-8 · σ₁`.
pub fn recovered_rank(m: &DenseMatrix) -> usize {
    let s = SpectralDecomposition::compute(m).s;
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > 1e-8 * top).count(),
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mse_in: f64,
    pub mse_out: f64,
    pub r2_in: f64,
    pub r2_out: f64,
    pub corr_out: f64,
    /// `‖M − M̂‖_F`, synthetic runs only.
    pub recon_error: Option<f64>,
    pub recovered_rank: usize,
    pub gap_out_in: f64,
    /// Either split had a constant response; normalized values are NaN.
    pub degenerate: bool,
}

/// Scores `model` on its training split (`in`) and a held-out split (`out`).
pub fn evaluate<P: LinearPredictor + ?Sized>(
    model: &P,
    train: (&DenseMatrix, &DenseMatrix),
    test: (&DenseMatrix, &DenseMatrix),
    m_true: Option<&DenseMatrix>,
) -> Result<MetricsReport> {
    let inn = score_split(&model.predict(train.0)?, train.1)?;
    let out = score_split(&model.predict(test.0)?, test.1)?;
    let m_hat = model.coefficients();
    let recon_error = match m_true {
        Some(m) if m.shape() != m_hat.shape() => {
            return Err(Error::dims("true coefficient matrix has the wrong shape"))
        }
        Some(m) => Some((m - m_hat).norm()),
        None => None,
    };
    Ok(MetricsReport {
        mse_in: inn.mse,
        mse_out: out.mse,
        r2_in: inn.r2,
        r2_out: out.r2,
        corr_out: out.corr,
        recon_error,
        recovered_rank: recovered_rank(m_hat),
        gap_out_in: out.mse - inn.mse,
        degenerate: inn.constant_y || out.constant_y,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stat {
    Mean,
    /// Sample standard deviation (divisor `N − 1`; 0 for a single report).
    Std,
}

/// Field-wise summary of several reports. `recovered_rank` becomes real
/// valued; `recon_error` is present only if every input carries it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub mse_in: f64,
    pub mse_out: f64,
    pub r2_in: f64,
    pub r2_out: f64,
    pub corr_out: f64,
    pub recon_error: Option<f64>,
    pub recovered_rank: f64,
    pub gap_out_in: f64,
    pub count: usize,
}

fn summarize(values: &[f64], stat: Stat) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    match stat {
        Stat::Mean => mean,
        Stat::Std if values.len() < 2 => 0.0,
        Stat::Std => (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt(),
    }
}

pub fn aggregate(reports: &[MetricsReport], stat: Stat) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::arg("cannot aggregate an empty list of reports"));
    }
    let field = |f: fn(&MetricsReport) -> f64| {
        let v: Vec<f64> = reports.iter().map(f).collect();
        summarize(&v, stat)
    };
    let recon: Option<Vec<f64>> = reports.iter().map(|r| r.recon_error).collect();
    Ok(AggregateReport {
        mse_in: field(|r| r.mse_in),
        mse_out: field(|r| r.mse_out),
        r2_in: field(|r| r.r2_in),
        r2_out: field(|r| r.r2_out),
        corr_out: field(|r| r.corr_out),
        recon_error: recon.map(|v| summarize(&v, stat)),
        recovered_rank: field(|r| r.recovered_rank as f64),
        gap_out_in: field(|r| r.gap_out_in),
        count: reports.len(),
    })
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "mse_in",
    "mse_out",
    "r2_in",
    "r2_out",
    "corr_out",
    "recon_error",
    "recovered_rank",
    "gap_out_in",
    "degenerate",
];

impl MetricsReport {
    /// Cells in [`REPORT_COLUMNS`] order; a missing reconstruction error is
    /// an empty cell.
    pub fn csv_cells(&self) -> Vec<String> {
        vec![
            fmt_f64(self.mse_in),
            fmt_f64(self.mse_out),
            fmt_f64(self.r2_in),
            fmt_f64(self.r2_out),
            fmt_f64(self.corr_out),
            self.recon_error.map(fmt_f64).unwrap_or_default(),
            self.recovered_rank.to_string(),
            fmt_f64(self.gap_out_in),
            self.degenerate.to_string(),
        ]
    }
}
