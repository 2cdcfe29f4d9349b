//! Competing regressors behind one interface: ridge, reduced-rank
//! regression, reduced-rank ridge, principal component regression, LASSO
//! and nuclear-norm regularized least squares.
//!
//! Every solver works with `B = M̂ᵀ` (`d1 × d2`) internally and returns
//! `M̂`. None of them centers the data; callers that want an intercept
//! should center first.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{write_csv, DenseMatrix};
use crate::spectral::{EigenSpectrum, SpectralDecomposition};
use crate::LinearPredictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ridge,
    Rrr,
    ReducedRankRidge,
    Pcr,
    Lasso,
    Nuclear,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ridge => "ridge",
            Method::Rrr => "rrr",
            Method::ReducedRankRidge => "reduced_rank_ridge",
            Method::Pcr => "pcr",
            Method::Lasso => "lasso",
            Method::Nuclear => "nuclear",
        }
    }

    pub fn needs_rank(self) -> bool {
        matches!(self, Method::Rrr | Method::ReducedRankRidge | Method::Pcr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iters() -> usize {
    5000
}
fn default_tol() -> f64 {
    1e-8
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: default_max_iters(),
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub method: Method,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl BaselineSpec {
    pub fn new(method: Method) -> Self {
        BaselineSpec {
            method,
            mu: 0.0,
            rank: None,
            solver: SolverOptions::default(),
        }
    }

    pub fn ridge(mu: f64) -> Self {
        BaselineSpec {
            mu,
            ..Self::new(Method::Ridge)
        }
    }

    pub fn rrr(rank: usize) -> Self {
        BaselineSpec {
            rank: Some(rank),
            ..Self::new(Method::Rrr)
        }
    }

    pub fn reduced_rank_ridge(mu: f64, rank: usize) -> Self {
        BaselineSpec {
            mu,
            rank: Some(rank),
            ..Self::new(Method::ReducedRankRidge)
        }
    }

    pub fn pcr(rank: usize) -> Self {
        BaselineSpec {
            rank: Some(rank),
            ..Self::new(Method::Pcr)
        }
    }

    pub fn lasso(mu: f64) -> Self {
        BaselineSpec {
            mu,
            ..Self::new(Method::Lasso)
        }
    }

    pub fn nuclear(mu: f64) -> Self {
        BaselineSpec {
            mu,
            ..Self::new(Method::Nuclear)
        }
    }

    /// Checks the spec against data of shape `n × d1` features, `d2` responses.
    pub fn validate(&self, n: usize, d1: usize, d2: usize) -> Result<()> {
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::arg(format!(
                "mu must be finite and non-negative, got {}",
                self.mu
            )));
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::arg("solver tol must be positive"));
        }
        if self.solver.max_iters == 0 {
            return Err(Error::arg("solver max_iters must be positive"));
        }
        let cap = if self.method == Method::Pcr {
            n.min(d1)
        } else {
            d1.min(d2)
        };
        match (self.method.needs_rank(), self.rank) {
            (true, None) => Err(Error::arg(format!("{} needs a rank", self.method.name()))),
            (_, Some(r)) if r == 0 || r > cap => Err(Error::arg(format!(
                "rank {r} outside 1..={cap} for {}",
                self.method.name()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub m_hat: DenseMatrix,
    pub spec: BaselineSpec,
    pub iterations_used: usize,
    /// Objective after every iteration of an iterative solver; empty otherwise.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl LinearPredictor for LinearModel {
    fn coefficients(&self) -> &DenseMatrix {
        &self.m_hat
    }
}

impl LinearModel {
    fn direct(b: DenseMatrix, spec: &BaselineSpec) -> LinearModel {
        LinearModel {
            m_hat: b.transpose(),
            spec: spec.clone(),
            iterations_used: 0,
            objective_trace: Vec::new(),
            converged: true,
        }
    }
}

pub fn fit_baseline(spec: &BaselineSpec, x: &DenseMatrix, y: &DenseMatrix) -> Result<LinearModel> {
    let (n, d1) = x.shape();
    if y.nrows() != n {
        return Err(Error::dims(format!(
            "x has {n} rows but y has {}",
            y.nrows()
        )));
    }
    spec.validate(n, d1, y.ncols())?;
    let model = match spec.method {
        Method::Ridge => LinearModel::direct(ridge(x, y, spec.mu), spec),
        Method::Rrr => LinearModel::direct(rrr(x, y, spec.rank.unwrap_or(1)), spec),
        Method::ReducedRankRidge => LinearModel::direct(
            reduced_rank_ridge(x, y, spec.mu, spec.rank.unwrap_or(1))?,
            spec,
        ),
        Method::Pcr => LinearModel::direct(pcr(x, y, spec.rank.unwrap_or(1)), spec),
        Method::Lasso => lasso(x, y, spec),
        Method::Nuclear => nuclear(x, y, spec),
    };
    Ok(model)
}

/// Ridge coefficients `B = (XᵀX + μI)⁻¹XᵀY`, switching to the `n × n` dual
/// form when `d1 > n`.
pub fn ridge(x: &DenseMatrix, y: &DenseMatrix, mu: f64) -> DenseMatrix {
    if x.ncols() > x.nrows() {
        ridge_dual(x, y, mu)
    } else {
        ridge_primal(x, y, mu)
    }
}

pub fn ridge_primal(x: &DenseMatrix, y: &DenseMatrix, mu: f64) -> DenseMatrix {
    let mut gram = x.transpose() * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += mu;
    }
    let rhs = x.transpose() * y;
    match gram.cholesky() {
        Some(c) => c.solve(&rhs),
        None => svd_ridge(x, y, mu),
    }
}

/// `B = Xᵀ(XXᵀ + μI)⁻¹Y`.
pub fn ridge_dual(x: &DenseMatrix, y: &DenseMatrix, mu: f64) -> DenseMatrix {
    let mut kernel = x * x.transpose();
    for i in 0..kernel.nrows() {
        kernel[(i, i)] += mu;
    }
    match kernel.cholesky() {
        Some(c) => x.transpose() * c.solve(y),
        None => svd_ridge(x, y, mu),
    }
}

/// `V diag(s / (s² + μ)) Uᵀ Y`, dropping numerically zero directions, which
/// is the minimum-norm solution when `μ = 0`.
fn svd_ridge(x: &DenseMatrix, y: &DenseMatrix, mu: f64) -> DenseMatrix {
    let svd = SpectralDecomposition::compute(x);
    let cut = numerical_cutoff(x, &svd.s);
    let mut uty = svd.u.transpose() * y;
    for (i, &s) in svd.s.iter().enumerate() {
        let w = if s > cut { s / (s * s + mu) } else { 0.0 };
        uty.row_mut(i).scale_mut(w);
    }
    &svd.v * uty
}

fn numerical_cutoff(x: &DenseMatrix, s: &[f64]) -> f64 {
    s.first().copied().unwrap_or(0.0) * x.nrows().max(x.ncols()) as f64 * f64::EPSILON
}

/// Minimum-norm least squares `X⁺Y`.
pub fn pinv_solve(x: &DenseMatrix, y: &DenseMatrix) -> DenseMatrix {
    svd_ridge(x, y, 0.0)
}

/// Reduced-rank regression: the least-squares fit `B₀ = X⁺Y` projected onto
/// the top-`r` right singular subspace of the fitted values `X B₀`.
fn rrr(x: &DenseMatrix, y: &DenseMatrix, r: usize) -> DenseMatrix {
    let b0 = pinv_solve(x, y);
    let fitted = x * &b0;
    let v = SpectralDecomposition::compute(&fitted).v;
    let vr = v.columns(0, r.min(v.ncols()));
    b0 * &vr * vr.transpose()
}

/// Reduced-rank ridge: ridge fit `B_μ`, then projection onto the top-`r`
/// right singular subspace of the augmented fitted values
/// `[X; √μ I] B_μ`, i.e. the leading eigenvectors of
/// `(X B_μ)ᵀ(X B_μ) + μ B_μᵀ B_μ`.
fn reduced_rank_ridge(x: &DenseMatrix, y: &DenseMatrix, mu: f64, r: usize) -> Result<DenseMatrix> {
    let b = ridge(x, y, mu);
    let fitted = x * &b;
    let g = fitted.transpose() * &fitted + b.transpose() * &b * mu;
    let eig = EigenSpectrum::of_symmetric(&g)?;
    let vr = eig.vectors.columns(0, r.min(eig.vectors.ncols()));
    Ok(b * &vr * vr.transpose())
}

/// Least squares on the top-`r` principal component scores of `X`.
fn pcr(x: &DenseMatrix, y: &DenseMatrix, r: usize) -> DenseMatrix {
    let svd = SpectralDecomposition::compute(x);
    let cut = numerical_cutoff(x, &svd.s);
    let r = r.min(svd.s.iter().filter(|&&s| s > cut).count());
    let mut coef = svd.u.columns(0, r).transpose() * y;
    for i in 0..r {
        coef.row_mut(i).scale_mut(1.0 / svd.s[i]);
    }
    svd.v.columns(0, r) * coef
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn lasso_objective(r: &DenseMatrix, b: &DenseMatrix, mu: f64) -> f64 {
    0.5 * r.norm_squared() + mu * b.iter().map(|v| v.abs()).sum::<f64>()
}

/// Coordinate descent on `Σ_j ½‖y_j − Xβ_j‖² + μ‖β_j‖₁`. The response
/// columns are separable, so every feature coordinate is updated for all
/// columns at once; convergence is declared when no coefficient moved by
/// more than `tol` during a full sweep.
fn lasso(x: &DenseMatrix, y: &DenseMatrix, spec: &BaselineSpec) -> LinearModel {
    let (d1, d2) = (x.ncols(), y.ncols());
    let mu = spec.mu;
    let col_sq: Vec<f64> = (0..d1).map(|j| x.column(j).norm_squared()).collect();
    let mut b = DenseMatrix::zeros(d1, d2);
    let mut resid = y.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    while iters < spec.solver.max_iters {
        iters += 1;
        let mut max_change = 0.0_f64;
        for j in 0..d1 {
            if col_sq[j] == 0.0 {
                continue;
            }
            let xj = x.column(j);
            let corr = resid.transpose() * xj;
            for k in 0..d2 {
                let old = b[(j, k)];
                let new = soft(corr[k] + col_sq[j] * old, mu) / col_sq[j];
                let step = new - old;
                if step != 0.0 {
                    resid.column_mut(k).axpy(-step, &xj, 1.0);
                    b[(j, k)] = new;
                    max_change = max_change.max(step.abs());
                }
            }
        }
        trace.push(lasso_objective(&resid, &b, mu));
        if max_change < spec.solver.tol {
            converged = true;
            break;
        }
    }
    LinearModel {
        m_hat: b.transpose(),
        spec: spec.clone(),
        iterations_used: iters,
        objective_trace: trace,
        converged,
    }
}

/// Singular-value soft-thresholding.
pub fn svt(a: &DenseMatrix, t: f64) -> DenseMatrix {
    let mut svd = SpectralDecomposition::compute(a);
    for s in svd.s.iter_mut() {
        *s = (*s - t).max(0.0);
    }
    svd.reconstruct()
}

fn nuclear_norm(a: &DenseMatrix) -> f64 {
    SpectralDecomposition::compute(a).s.iter().sum()
}

/// Proximal gradient on `½‖Y − XMᵀ‖_F² + μ‖M‖_*` with step `1/L`,
/// `L = σ_max(X)²`, started from zero. Stops when the objective changes by
/// less than `tol · max(1, objective)`.
fn nuclear(x: &DenseMatrix, y: &DenseMatrix, spec: &BaselineSpec) -> LinearModel {
    let mu = spec.mu;
    let lip = crate::matrix::spectral_norm(x).powi(2);
    let mut m = DenseMatrix::zeros(y.ncols(), x.ncols());
    if lip == 0.0 {
        return LinearModel {
            m_hat: m,
            spec: spec.clone(),
            iterations_used: 0,
            objective_trace: Vec::new(),
            converged: true,
        };
    }
    let xty = (x.transpose() * y).transpose();
    let xtx = x.transpose() * x;
    let objective =
        |m: &DenseMatrix| 0.5 * (y - x * m.transpose()).norm_squared() + mu * nuclear_norm(m);
    let mut prev = objective(&m);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    while iters < spec.solver.max_iters {
        iters += 1;
        let grad = &m * &xtx - &xty;
        m = svt(&(&m - grad / lip), mu / lip);
        let obj = objective(&m);
        trace.push(obj);
        let change = (prev - obj).abs();
        prev = obj;
        if change < spec.solver.tol * obj.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    LinearModel {
        m_hat: m,
        spec: spec.clone(),
        iterations_used: iters,
        objective_trace: trace,
        converged,
    }
}

/// Outcome of a validation sweep.
#[derive(Debug, Clone)]
pub struct Validated {
    pub spec: BaselineSpec,
    pub model: LinearModel,
    pub score: f64,
    /// Validation score of every grid entry, in grid order.
    pub scores: Vec<f64>,
}

/// Fits every spec on `train`, scores it on `valid` with `metric` (lower is
/// better) and returns the argmin. Ties go to the earliest grid entry; NaN
/// scores never win.
pub fn validate_hyperparams<F>(
    grid: &[BaselineSpec],
    train: (&DenseMatrix, &DenseMatrix),
    valid: (&DenseMatrix, &DenseMatrix),
    metric: F,
) -> Result<Validated>
where
    F: Fn(&LinearModel, &DenseMatrix, &DenseMatrix) -> f64 + Sync,
{
    if grid.is_empty() {
        return Err(Error::arg("hyperparameter grid is empty"));
    }
    let fits: Vec<(LinearModel, f64)> = grid
        .par_iter()
        .map(|spec| {
            let model = fit_baseline(spec, train.0, train.1)?;
            let score = metric(&model, valid.0, valid.1);
            Ok((model, score))
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = fits.iter().map(|f| f.1).collect();
    let best = best_index(&scores);
    let (model, score) = fits.into_iter().nth(best).expect("index in range");
    Ok(Validated {
        spec: grid[best].clone(),
        model,
        score,
        scores,
    })
}

/// First index of the smallest non-NaN score, 0 if all are NaN.
pub fn best_index(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_nan() && (scores[best].is_nan() || s < scores[best]) {
            best = i;
        }
    }
    best
}

#[derive(Serialize)]
struct LinearMeta<'a> {
    spec: &'a BaselineSpec,
    d1: usize,
    d2: usize,
    iterations_used: usize,
    converged: bool,
    version: &'a str,
}

/// Writes `meta.json` and `m_hat.csv` into `dir`.
pub fn save_linear_model(model: &LinearModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = LinearMeta {
        spec: &model.spec,
        d1: model.m_hat.ncols(),
        d2: model.m_hat.nrows(),
        iterations_used: model.iterations_used,
        converged: model.converged,
        version: crate::VERSION,
    };
    let path = dir.join("meta.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
        .map_err(|e| Error::io(&path, e))?;
    write_csv(&dir.join("m_hat.csv"), &model.m_hat)
}
