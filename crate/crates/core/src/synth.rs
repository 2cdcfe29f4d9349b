//! Synthetic benchmark generator.
//!
//! Features are Gaussian with covariance `C* = V* Λ* V*ᵀ`, where `Λ*` is a
//! trace-normalized power law (`E‖x‖² = 1`) and `V*` is Haar-random. The
//! coefficient matrix starts as i.i.d. ternary entries, is truncated to the
//! requested rank and then capped in spectral norm at `upsilon`. Noise is
//! i.i.d. Gaussian with `σ_noise = η · std(vec(X Mᵀ))`, std taken with
//! divisor equal to the element count.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gaussian_matrix, rng_for, spectral_norm, DenseMatrix, Rng};
use crate::spectral::truncate_rank;

const STREAM_COVARIANCE: u64 = 1;
const STREAM_COEFFICIENTS: u64 = 2;
const STREAM_DATASET: u64 = 3;
const STREAM_FRESH_DRAW: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub d1: usize,
    pub d2: usize,
    pub n: usize,
    pub rank_m: usize,
    pub omega: f64,
    pub eta: f64,
    #[serde(default = "default_upsilon")]
    pub upsilon: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_upsilon() -> f64 {
    1.0
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d1 < 2 || self.d2 == 0 || self.n == 0 {
            return Err(Error::arg("need d1 >= 2, d2 >= 1 and n >= 1"));
        }
        if self.rank_m == 0 || self.rank_m > self.d1.min(self.d2) {
            return Err(Error::arg(format!(
                "rank_m = {} must lie in 1..=min(d1, d2) = {}",
                self.rank_m,
                self.d1.min(self.d2)
            )));
        }
        if !(self.omega >= 2.0) {
            return Err(Error::arg(format!("omega = {} must be >= 2", self.omega)));
        }
        if !(self.eta >= 0.0) || !(self.upsilon > 0.0) {
            return Err(Error::arg("eta must be >= 0 and upsilon > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub sigma_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub config: SynthConfig,
    pub v_star: DenseMatrix,
    pub lambda_star: Vec<f64>,
    pub m: DenseMatrix,
    pub n_mat: DenseMatrix,
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub sigma_noise: f64,
}

impl SyntheticInstance {
    pub fn generate(config: &SynthConfig) -> Result<SyntheticInstance> {
        config.validate()?;
        let (v_star, lambda_star) = gen_covariance(config.d1, config.omega, config.seed)?;
        let m = gen_coefficients(
            config.d2,
            config.d1,
            config.rank_m,
            config.upsilon,
            config.seed,
        )?;
        let data = gen_dataset(&m, &v_star, &lambda_star, config.n, config.eta, config.seed)?;
        let n_mat = orthogonalized_n(&m, &v_star, &lambda_star)?;
        Ok(SyntheticInstance {
            config: config.clone(),
            v_star,
            lambda_star,
            m,
            n_mat,
            x: data.x,
            y: data.y,
            sigma_noise: data.sigma_noise,
        })
    }

    /// Fresh sample of `n` rows from the same model and noise level.
    pub fn draw(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = rng_for(seed, STREAM_FRESH_DRAW);
        let x = sample_features(&self.v_star, &self.lambda_star, n, &mut rng);
        let y = &x * self.m.transpose()
            + gaussian_matrix(n, self.m.nrows(), &mut rng) * self.sigma_noise;
        Dataset {
            x,
            y,
            sigma_noise: self.sigma_noise,
        }
    }

    /// Population excess risk `E‖(M̂ − M)x‖² = ‖(M̂ − M) V* Λ*^{1/2}‖_F²`.
    pub fn excess_risk(&self, m_hat: &DenseMatrix) -> Result<f64> {
        if m_hat.shape() != self.m.shape() {
            return Err(Error::dims("m_hat shape differs from the true M"));
        }
        Ok(orthogonalized_n(&(m_hat - &self.m), &self.v_star, &self.lambda_star)?.norm_squared())
    }
}

/// `λ_i = i^{−ω} / Σ_j j^{−ω}` for `i = 1..=d`.
pub fn power_law_spectrum(d: usize, omega: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=d).map(|i| (i as f64).powf(-omega)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / z).collect()
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// diagonal of R forced positive.
pub fn haar_orthogonal(d: usize, rng: &mut Rng) -> DenseMatrix {
    let qr = gaussian_matrix(d, d, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn gen_covariance(d1: usize, omega: f64, seed: u64) -> Result<(DenseMatrix, Vec<f64>)> {
    if d1 < 2 {
        return Err(Error::arg("d1 must be at least 2"));
    }
    if !(omega >= 2.0) {
        return Err(Error::arg(format!(
            "omega = {omega} is below 2, outside the power-law assumption"
        )));
    }
    let mut rng = rng_for(seed, STREAM_COVARIANCE);
    Ok((haar_orthogonal(d1, &mut rng), power_law_spectrum(d1, omega)))
}

/// I.i.d. entries uniform on {−1, 0, 1}, drawn row by row.
pub fn ternary_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = f64::from(rng.random_range(-1i8..=1));
        }
    }
    m
}

pub fn gen_coefficients(
    d2: usize,
    d1: usize,
    rank_m: usize,
    upsilon: f64,
    seed: u64,
) -> Result<DenseMatrix> {
    if rank_m > d1.min(d2) {
        return Err(Error::arg(format!(
            "rank_m = {rank_m} exceeds min(d1, d2) = {}",
            d1.min(d2)
        )));
    }
    if !(upsilon > 0.0) {
        return Err(Error::arg("upsilon must be positive"));
    }
    let mut rng = rng_for(seed, STREAM_COEFFICIENTS);
    let raw = ternary_matrix(d2, d1, &mut rng);
    let m = truncate_rank(&raw, rank_m)?;
    let norm = spectral_norm(&m);
    if norm > upsilon {
        Ok(m * (upsilon / norm))
    } else {
        Ok(m)
    }
}

/// Rows `x = V* Λ*^{1/2} g` with `g` standard Gaussian.
pub fn sample_features(
    v_star: &DenseMatrix,
    lambda_star: &[f64],
    n: usize,
    rng: &mut Rng,
) -> DenseMatrix {
    let d1 = lambda_star.len();
    let mut g = gaussian_matrix(n, d1, rng);
    for (j, l) in lambda_star.iter().enumerate() {
        g.column_mut(j).scale_mut(l.sqrt());
    }
    g * v_star.transpose()
}

/// Population standard deviation of all entries.
pub fn entry_std(m: &DenseMatrix) -> f64 {
    let count = m.len() as f64;
    if count == 0.0 {
        return 0.0;
    }
    let mean = m.sum() / count;
    (m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count).sqrt()
}

pub fn gen_dataset(
    m: &DenseMatrix,
    v_star: &DenseMatrix,
    lambda_star: &[f64],
    n: usize,
    eta: f64,
    seed: u64,
) -> Result<Dataset> {
    let d1 = lambda_star.len();
    if m.ncols() != d1 || v_star.shape() != (d1, d1) {
        return Err(Error::dims(format!(
            "m is {}x{}, v_star {}x{}, lambda_star has {d1} entries",
            m.nrows(),
            m.ncols(),
            v_star.nrows(),
            v_star.ncols()
        )));
    }
    if !(eta >= 0.0) {
        return Err(Error::arg("eta must be non-negative"));
    }
    let mut rng = rng_for(seed, STREAM_DATASET);
    let x = sample_features(v_star, lambda_star, n, &mut rng);
    let signal = &x * m.transpose();
    let sigma_noise = eta * entry_std(&signal);
    let noise = gaussian_matrix(n, m.nrows(), &mut rng);
    let y = if sigma_noise > 0.0 {
        signal + noise * sigma_noise
    } else {
        signal
    };
    Ok(Dataset { x, y, sigma_noise })
}

/// `N = M V* diag(λ*)^{1/2}`.
pub fn orthogonalized_n(
    m: &DenseMatrix,
    v_star: &DenseMatrix,
    lambda_star: &[f64],
) -> Result<DenseMatrix> {
    if lambda_star.iter().any(|&l| l < 0.0) {
        return Err(Error::arg("lambda_star has negative entries"));
    }
    if m.ncols() != v_star.nrows() || v_star.ncols() != lambda_star.len() {
        return Err(Error::dims("m, v_star and lambda_star are inconsistent"));
    }
    let mut n = m * v_star;
    for (j, l) in lambda_star.iter().enumerate() {
        n.column_mut(j).scale_mut(l.sqrt());
    }
    Ok(n)
}
