//! Adaptive reduced rank regression.
//!
//! Step 1 whitens the features with a gap-thresholded PCA of `X`: with
//! `X = U Σ Vᵀ` and `λ_i = σ_i² / n`, it keeps `k1` directions and returns
//! `Ẑ₊ = √n U_{k1}` together with the map `Π̂ = Λ_{k1}^{−1/2} V_{k1}ᵀ`, so that
//! `Ẑ₊ = X Π̂ᵀ`. Step 2 denoises `N̂₊ᵀ = Ẑ₊ᵀ Y / n` by keeping the singular
//! directions at or above `θ σ_ε √(d2/n)`. The estimate is
//! `M̂ = P_{k2}(N̂₊) Π̂`.
//!
//! The pipeline never rescales user data; the `E‖x‖² = 1` normalization is
//! the generator's job.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{read_csv, spectral_norm, write_csv, DenseMatrix};
use crate::spectral::{largest_gap, select_gap_rank, select_threshold_rank, SpectralDecomposition};
use crate::LinearPredictor;

pub const DEFAULT_THETA: f64 = 2.0;
pub const DEFAULT_DELTA: f64 = 1e-3;

/// Noise standard deviation fed to the step-2 threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseRepr", into = "NoiseRepr")]
pub enum NoiseLevel {
    Known(f64),
    /// Estimated from a pilot fit, see [`estimate_noise_sigma`].
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NoiseRepr {
    Value(f64),
    Text(String),
}

impl TryFrom<NoiseRepr> for NoiseLevel {
    type Error = String;

    fn try_from(r: NoiseRepr) -> std::result::Result<Self, String> {
        match r {
            NoiseRepr::Value(v) => Ok(NoiseLevel::Known(v)),
            NoiseRepr::Text(s) if s == "auto" => Ok(NoiseLevel::Auto),
            NoiseRepr::Text(s) => Err(format!("sigma_eps must be a number or \"auto\", got {s:?}")),
        }
    }
}

impl From<NoiseLevel> for NoiseRepr {
    fn from(n: NoiseLevel) -> NoiseRepr {
        match n {
            NoiseLevel::Known(v) => NoiseRepr::Value(v),
            NoiseLevel::Auto => NoiseRepr::Text("auto".into()),
        }
    }
}

impl std::str::FromStr for NoiseLevel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(NoiseLevel::Auto);
        }
        s.parse::<f64>()
            .map(NoiseLevel::Known)
            .map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_noise")]
    pub sigma_eps: NoiseLevel,
    #[serde(default)]
    pub k1_override: Option<usize>,
    #[serde(default)]
    pub k2_override: Option<usize>,
    /// Spectral-norm sanity bound on `M̂`; exceeding it is recorded, not fatal.
    #[serde(default)]
    pub upsilon_check: Option<f64>,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_theta() -> f64 {
    DEFAULT_THETA
}
fn default_noise() -> NoiseLevel {
    NoiseLevel::Auto
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            delta: DEFAULT_DELTA,
            theta: DEFAULT_THETA,
            sigma_eps: NoiseLevel::Auto,
            k1_override: None,
            k2_override: None,
            upsilon_check: None,
        }
    }
}

impl FitConfig {
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma_eps = NoiseLevel::Known(sigma);
        self
    }

    pub fn with_ranks(mut self, k1: usize, k2: usize) -> Self {
        self.k1_override = Some(k1);
        self.k2_override = Some(k2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::arg(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !(self.theta > 0.0) {
            return Err(Error::arg(format!(
                "theta must be positive, got {}",
                self.theta
            )));
        }
        if let NoiseLevel::Known(s) = self.sigma_eps {
            if !(s > 0.0) {
                return Err(Error::arg(format!("sigma_eps must be positive, got {s}")));
            }
        }
        if let Some(u) = self.upsilon_check {
            if !(u > 0.0) {
                return Err(Error::arg("upsilon_check must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step1Output {
    pub z_hat: DenseMatrix,
    pub pi_hat: DenseMatrix,
    pub lambdas: Vec<f64>,
    pub k1: usize,
}

/// Gap-thresholded PCA whitening of the features.
pub fn step1_pca_x(x: &DenseMatrix, delta: f64, k1_override: Option<usize>) -> Result<Step1Output> {
    let (n, d1) = x.shape();
    if n < 2 || d1 == 0 {
        return Err(Error::arg(format!(
            "need at least 2 rows and 1 column, got {n}x{d1}"
        )));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::arg("feature matrix is identically zero"));
    }
    let svd = SpectralDecomposition::compute(x);
    let nf = n as f64;
    let lambdas: Vec<f64> = svd.s.iter().map(|s| s * s / nf).collect();

    let k1 = match k1_override {
        Some(k) => {
            let rank_floor = svd.s[0] * (n.max(d1) as f64) * f64::EPSILON;
            if k == 0 || k > svd.rank() || svd.s[k - 1] <= rank_floor {
                return Err(Error::arg(format!(
                    "k1 = {k} must lie in 1..=numerical rank of X"
                )));
            }
            k
        }
        None => select_gap_rank(&lambdas, delta)?.ok_or(Error::NoGap {
            delta,
            largest_gap: largest_gap(&lambdas),
            count: lambdas.len(),
        })?,
    };

    let z_hat = svd.u.columns(0, k1) * nf.sqrt();
    let mut pi_hat = svd.v.columns(0, k1).transpose();
    for i in 0..k1 {
        pi_hat.row_mut(i).scale_mut(1.0 / lambdas[i].sqrt());
    }
    Ok(Step1Output {
        z_hat,
        pi_hat,
        lambdas,
        k1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step2Output {
    pub n_hat_trunc: DenseMatrix,
    pub k2: usize,
    pub sigmas: Vec<f64>,
    pub threshold: f64,
}

/// Hard-thresholded denoising of `N̂₊ᵀ = Ẑ₊ᵀ Y / n`.
pub fn step2_pca_denoise(
    z_hat: &DenseMatrix,
    y: &DenseMatrix,
    theta: f64,
    sigma_eps: f64,
    k2_override: Option<usize>,
) -> Result<Step2Output> {
    let n = z_hat.nrows();
    if y.nrows() != n {
        return Err(Error::dims(format!(
            "z_hat has {n} rows but y has {}",
            y.nrows()
        )));
    }
    if !(theta > 0.0) || !(sigma_eps > 0.0) {
        return Err(Error::arg("theta and sigma_eps must be positive"));
    }
    let (k1, d2) = (z_hat.ncols(), y.ncols());
    let n_hat = y.transpose() * z_hat / n as f64;
    let svd = SpectralDecomposition::compute(&n_hat);
    let threshold = theta * sigma_eps * (d2 as f64 / n as f64).sqrt();
    let k2 = match k2_override {
        Some(k) if k > k1.min(d2) => {
            return Err(Error::arg(format!(
                "k2 = {k} exceeds min(k1, d2) = {}",
                k1.min(d2)
            )))
        }
        Some(k) => k,
        None => select_threshold_rank(&svd.s, threshold),
    };
    Ok(Step2Output {
        n_hat_trunc: svd.recompose(k2),
        k2,
        sigmas: svd.s,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// `σ_ε` came from [`estimate_noise_sigma`].
    pub sigma_estimated: bool,
    /// The noise estimate hit the machine-epsilon floor.
    pub sigma_floor_hit: bool,
    pub m_hat_spectral_norm: f64,
    pub upsilon_exceeded: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub pi_hat: DenseMatrix,
    pub n_hat_trunc: DenseMatrix,
    pub m_hat: DenseMatrix,
    pub k1: usize,
    pub k2: usize,
    pub lambdas: Vec<f64>,
    pub n_hat_sigmas: Vec<f64>,
    pub threshold_used: f64,
    pub sigma_eps_used: f64,
    pub delta: f64,
    pub theta: f64,
    pub n_train: usize,
    pub diagnostics: FitDiagnostics,
}

impl FittedModel {
    pub fn d1(&self) -> usize {
        self.m_hat.ncols()
    }

    pub fn d2(&self) -> usize {
        self.m_hat.nrows()
    }
}

impl LinearPredictor for FittedModel {
    fn coefficients(&self) -> &DenseMatrix {
        &self.m_hat
    }
}

pub fn fit_adaptive_rrr(
    x: &DenseMatrix,
    y: &DenseMatrix,
    config: &FitConfig,
) -> Result<FittedModel> {
    config.validate()?;
    if x.nrows() != y.nrows() {
        return Err(Error::dims(format!(
            "x has {} rows but y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let (sigma, estimated, floor_hit) = match config.sigma_eps {
        NoiseLevel::Known(s) => (s, false, false),
        NoiseLevel::Auto => {
            let est = estimate_noise_sigma(x, y)?;
            (est.sigma, true, est.degenerate)
        }
    };
    let s1 = step1_pca_x(x, config.delta, config.k1_override)?;
    let s2 = step2_pca_denoise(&s1.z_hat, y, config.theta, sigma, config.k2_override)?;
    let m_hat = &s2.n_hat_trunc * &s1.pi_hat;
    let norm = spectral_norm(&m_hat);
    Ok(FittedModel {
        pi_hat: s1.pi_hat,
        n_hat_trunc: s2.n_hat_trunc,
        m_hat,
        k1: s1.k1,
        k2: s2.k2,
        lambdas: s1.lambdas,
        n_hat_sigmas: s2.sigmas,
        threshold_used: s2.threshold,
        sigma_eps_used: sigma,
        delta: config.delta,
        theta: config.theta,
        n_train: x.nrows(),
        diagnostics: FitDiagnostics {
            sigma_estimated: estimated,
            sigma_floor_hit: floor_hit,
            m_hat_spectral_norm: norm,
            upsilon_exceeded: config.upsilon_check.map(|u| norm > u),
        },
    })
}

/// `x_new · M̂ᵀ`.
pub fn predict(model: &FittedModel, x_new: &DenseMatrix) -> Result<DenseMatrix> {
    model.predict(x_new)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEstimate {
    pub sigma: f64,
    /// Set when the response is constant or the residuals vanish; `sigma`
    /// is then `f64::EPSILON`.
    pub degenerate: bool,
}

/// Heuristic noise level: residual entry std of a principal-component
/// regression pilot with `max(1, min(n, d1) / 2)` components.
pub fn estimate_noise_sigma(x: &DenseMatrix, y: &DenseMatrix) -> Result<NoiseEstimate> {
    if x.nrows() != y.nrows() {
        return Err(Error::dims("x and y row counts differ"));
    }
    let floor = NoiseEstimate {
        sigma: f64::EPSILON,
        degenerate: true,
    };
    let first = match y.iter().next() {
        Some(v) => *v,
        None => return Ok(floor),
    };
    if y.iter().all(|&v| v == first) {
        return Ok(floor);
    }
    let svd = SpectralDecomposition::compute(x);
    let k = (x.nrows().min(x.ncols()) / 2).max(1).min(svd.rank());
    let u = svd.u.columns(0, k);
    let fitted = &u * (u.transpose() * y);
    let sigma = crate::synth::entry_std(&(y - fitted));
    if sigma <= f64::EPSILON {
        return Ok(floor);
    }
    Ok(NoiseEstimate {
        sigma,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub k1: usize,
    pub k2: usize,
    pub delta: f64,
    pub theta: f64,
    pub sigma_eps: f64,
    pub d1: usize,
    pub d2: usize,
    pub n: usize,
    pub version: String,
    pub threshold_used: f64,
    pub lambdas: Vec<f64>,
    pub n_hat_sigmas: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

/// Writes `meta.json`, `m_hat.csv`, `pi_hat.csv` and `n_hat.csv` into `dir`.
pub fn save_model(model: &FittedModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = ModelMeta {
        k1: model.k1,
        k2: model.k2,
        delta: model.delta,
        theta: model.theta,
        sigma_eps: model.sigma_eps_used,
        d1: model.d1(),
        d2: model.d2(),
        n: model.n_train,
        version: crate::VERSION.to_string(),
        threshold_used: model.threshold_used,
        lambdas: model.lambdas.clone(),
        n_hat_sigmas: model.n_hat_sigmas.clone(),
        diagnostics: model.diagnostics.clone(),
    };
    let meta_path = dir.join("meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
        .map_err(|e| Error::io(&meta_path, e))?;
    write_csv(&dir.join("m_hat.csv"), &model.m_hat)?;
    write_csv(&dir.join("pi_hat.csv"), &model.pi_hat)?;
    write_csv(&dir.join("n_hat.csv"), &model.n_hat_trunc)
}

pub fn load_model(dir: &Path) -> Result<FittedModel> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: ModelMeta = serde_json::from_str(&text)?;
    let m_hat = read_csv(&dir.join("m_hat.csv"))?;
    let pi_hat = read_csv(&dir.join("pi_hat.csv"))?;
    let n_hat_trunc = read_csv(&dir.join("n_hat.csv"))?;
    if m_hat.shape() != (meta.d2, meta.d1)
        || pi_hat.shape() != (meta.k1, meta.d1)
        || n_hat_trunc.shape() != (meta.d2, meta.k1)
    {
        return Err(Error::dims("model files disagree with meta.json"));
    }
    Ok(FittedModel {
        pi_hat,
        n_hat_trunc,
        m_hat,
        k1: meta.k1,
        k2: meta.k2,
        lambdas: meta.lambdas,
        n_hat_sigmas: meta.n_hat_sigmas,
        threshold_used: meta.threshold_used,
        sigma_eps_used: meta.sigma_eps,
        delta: meta.delta,
        theta: meta.theta,
        n_train: meta.n,
        diagnostics: meta.diagnostics,
    })
}
