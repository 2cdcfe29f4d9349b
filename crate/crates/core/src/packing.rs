//! The lower-bound packing construction, built and checked at desk scale.
//!
//! A family member is `N† = U L†` where `L†` is a fixed diagonal spectrum and
//! `U` is unitary. Columns are split in three regions: the first `t̲ − 1`
//! columns are shared by every member, columns `t̲..=t̄` are supported on a
//! sampled coordinate subset `R̄_i` and filled with low-peak unit vectors,
//! and the remaining columns complete the basis at random. Members are
//! indexed by a code of subset tuples whose pairwise weighted cost is kept
//! below `ρ^ζ Ψ`, which forces large pairwise Frobenius distances.
//!
//! Columns are 1-based in the documentation and 0-based in code. Tuples use
//! the index representation: entry `k` selects pattern `R^{(t̲+k, ·)}`.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gaussian_matrix, orthonormality_residual, rng_for, DenseMatrix, Rng};
use crate::spectral::SpectralDecomposition;

const STREAM_PATTERNS: u64 = 10;
const STREAM_CODE: u64 = 11;
const STREAM_PREFIX: u64 = 12;
const STREAM_CALIBRATION: u64 = 13;
const STREAM_MEMBER: u64 = 1000;

pub const CODE_RETRIES: usize = 20;
pub const FILL_RETRIES: usize = 100;
pub const CALIBRATION_DRAWS: usize = 10_000;
/// Fraction of normalized-Gaussian coordinates expected above the tail
/// threshold; fixes `c₅`.
pub const TAIL_QUANTILE: f64 = 0.9;

/// Spectrum of `L†`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSpec {
    /// Every `σ†_i` equal to `ρ σ_ε √(d/n)`.
    Flat,
    Values(Vec<f64>),
}

/// User-facing description of a packing run; see [`PackingParams::derive`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackingConfig {
    pub d: usize,
    /// Either `rho` or `subset_size` must be given; `subset_size` picks the
    /// `ρ` with `⌊ρ^λ d⌋ = subset_size`.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub subset_size: Option<usize>,
    #[serde(default = "default_xi")]
    pub xi_small: f64,
    #[serde(default)]
    pub lambda_exp: Option<f64>,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default)]
    pub eta_exp: Option<f64>,
    #[serde(default = "default_sigma")]
    pub sigma_eps: f64,
    pub n_samples: usize,
    #[serde(default = "default_spectrum")]
    pub spectrum: SpectrumSpec,
    pub k_patterns: usize,
    /// Number of family members.
    pub s_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_xi() -> f64 {
    0.001
}
fn default_zeta() -> f64 {
    0.5
}
fn default_sigma() -> f64 {
    1.0
}
fn default_spectrum() -> SpectrumSpec {
    SpectrumSpec::Flat
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingParams {
    pub d: usize,
    pub rho: f64,
    pub lambda_exp: f64,
    pub zeta: f64,
    pub eta_exp: f64,
    pub xi_small: f64,
    pub sigma_eps: f64,
    pub n_samples: usize,
    pub spectrum: Vec<f64>,
    /// 1-based first contested column `t̲`.
    pub t_lo: usize,
    /// 1-based last contested column `t̄ = ⌊s/2⌋`.
    pub t_hi: usize,
    pub k_patterns: usize,
    pub s_size: usize,
    pub seed: u64,
}

impl PackingParams {
    pub fn derive(cfg: &PackingConfig) -> Result<PackingParams> {
        let lambda_exp = cfg.lambda_exp.unwrap_or(0.5 + cfg.xi_small);
        let eta_exp = cfg.eta_exp.unwrap_or(cfg.xi_small);
        if cfg.d < 2 || cfg.n_samples == 0 || !(cfg.sigma_eps > 0.0) {
            return Err(Error::arg("need d >= 2, n_samples >= 1 and sigma_eps > 0"));
        }
        if !(lambda_exp > 0.0) {
            return Err(Error::arg("lambda_exp must be positive"));
        }
        let rho = match (cfg.rho, cfg.subset_size) {
            (Some(r), None) => r,
            (None, Some(s)) => ((s as f64 + 1e-6) / cfg.d as f64).powf(1.0 / lambda_exp),
            _ => return Err(Error::arg("give exactly one of rho and subset_size")),
        };
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::arg(format!("rho must lie in (0, 1), got {rho}")));
        }
        let level = rho * cfg.sigma_eps * (cfg.d as f64 / cfg.n_samples as f64).sqrt();
        let spectrum = match &cfg.spectrum {
            SpectrumSpec::Flat => vec![level; cfg.d],
            SpectrumSpec::Values(v) => v.clone(),
        };
        if spectrum.len() != cfg.d {
            return Err(Error::dims(format!(
                "spectrum has {} entries, expected {}",
                spectrum.len(),
                cfg.d
            )));
        }
        if spectrum.iter().any(|&s| !(s >= 0.0)) || spectrum.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::arg(
                "spectrum must be non-negative and non-increasing",
            ));
        }
        let t_lo = spectrum
            .iter()
            .position(|&s| s <= level)
            .map(|i| i + 1)
            .ok_or_else(|| {
                Error::arg("no spectrum entry at or below rho * sigma_eps * sqrt(d/n)")
            })?;
        let params = PackingParams {
            d: cfg.d,
            rho,
            lambda_exp,
            zeta: cfg.zeta,
            eta_exp,
            xi_small: cfg.xi_small,
            sigma_eps: cfg.sigma_eps,
            n_samples: cfg.n_samples,
            spectrum,
            t_lo,
            t_hi: 0,
            k_patterns: cfg.k_patterns,
            s_size: cfg.s_size,
            seed: cfg.seed,
        };
        let t_hi = params.subset_len() / 2;
        let params = PackingParams { t_hi, ..params };
        if let Some(s) = cfg.subset_size {
            if params.subset_len() != s {
                return Err(Error::arg(format!(
                    "cannot realize subset size {s} at d = {}",
                    cfg.d
                )));
            }
        }
        params.validate()?;
        Ok(params)
    }

    /// `⌊ρ^λ d⌋`.
    pub fn subset_len(&self) -> usize {
        (self.rho.powf(self.lambda_exp) * self.d as f64).floor() as usize
    }

    /// Number of contested columns `γ = t̄ − t̲ + 1`.
    pub fn gamma(&self) -> usize {
        self.t_hi + 1 - self.t_lo
    }

    /// `Ψ = Σ_{i∈[t̲,t̄]} (σ†_i)²`.
    pub fn psi(&self) -> f64 {
        self.spectrum[self.t_lo - 1..self.t_hi]
            .iter()
            .map(|s| s * s)
            .sum()
    }

    pub fn cost_limit(&self) -> f64 {
        self.rho.powf(self.zeta) * self.psi()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.subset_len();
        if s < 2 {
            return Err(Error::arg(format!(
                "subset size floor(rho^lambda d) = {s} must be >= 2"
            )));
        }
        if self.t_lo < 1 || self.t_lo > self.t_hi || self.t_hi > self.d {
            return Err(Error::arg(format!(
                "need 1 <= t_lo <= t_hi <= d, got t_lo = {}, t_hi = {}",
                self.t_lo, self.t_hi
            )));
        }
        if self.t_hi != s / 2 {
            return Err(Error::arg("t_hi must equal floor(subset size / 2)"));
        }
        if self.k_patterns == 0 || self.s_size == 0 {
            return Err(Error::arg("k_patterns and s_size must be positive"));
        }
        Ok(())
    }
}

/// `ln C(d, s)`.
fn ln_binomial(d: usize, s: usize) -> f64 {
    (0..s)
        .map(|i| ((d - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// `K` random `⌊ρ^λ d⌋`-subsets of `[d]` for every contested column, each
/// subset sorted ascending.
pub fn sample_sparsity_family(params: &PackingParams) -> Result<Vec<Vec<Vec<usize>>>> {
    params.validate()?;
    let s = params.subset_len();
    if (params.k_patterns as f64).ln() > ln_binomial(params.d, s) + 1e-9 {
        return Err(Error::arg(format!(
            "K = {} exceeds the number of {s}-subsets of [{}]",
            params.k_patterns, params.d
        )));
    }
    let mut rng = rng_for(params.seed, STREAM_PATTERNS);
    Ok((0..params.gamma())
        .map(|_| {
            (0..params.k_patterns)
                .map(|_| {
                    let mut subset = sample(&mut rng, params.d, s).into_vec();
                    subset.sort_unstable();
                    subset
                })
                .collect()
        })
        .collect())
}

/// `Σ_{i∈[t̲,t̄]} (σ†_i)² · I(r1_i = r2_i)`; `spectrum` is the full `L†`
/// diagonal and the tuples cover columns `t̲..=t̄` (1-based).
pub fn weighted_cost(
    r1: &[usize],
    r2: &[usize],
    spectrum: &[f64],
    t_lo: usize,
    t_hi: usize,
) -> Result<f64> {
    if t_lo < 1 || t_hi < t_lo || t_hi > spectrum.len() {
        return Err(Error::arg("column range outside the spectrum"));
    }
    let gamma = t_hi + 1 - t_lo;
    if r1.len() != gamma || r2.len() != gamma {
        return Err(Error::arg(format!(
            "tuples of length {} and {} do not cover {gamma} columns",
            r1.len(),
            r2.len()
        )));
    }
    Ok(r1
        .iter()
        .zip(r2)
        .zip(&spectrum[t_lo - 1..t_hi])
        .filter(|((a, b), _)| a == b)
        .map(|(_, s)| s * s)
        .sum())
}

/// Draws `s_size` distinct tuples with pairwise cost at most `ρ^ζ Ψ`,
/// redrawing an offending tuple up to [`CODE_RETRIES`] times.
pub fn sample_code(
    params: &PackingParams,
    patterns: &[Vec<Vec<usize>>],
) -> Result<Vec<Vec<usize>>> {
    params.validate()?;
    if patterns.len() != params.gamma() || patterns.iter().any(|p| p.len() != params.k_patterns) {
        return Err(Error::dims("patterns do not match the parameters"));
    }
    let gamma = params.gamma();
    if (params.s_size as f64).ln() > gamma as f64 * (params.k_patterns as f64).ln() + 1e-9 {
        return Err(Error::arg("s_size exceeds the number of distinct tuples"));
    }
    let limit = params.cost_limit();
    let mut rng = rng_for(params.seed, STREAM_CODE);
    let mut code: Vec<Vec<usize>> = Vec::with_capacity(params.s_size);
    while code.len() < params.s_size {
        let mut best = f64::INFINITY;
        let mut accepted = None;
        for _ in 0..CODE_RETRIES {
            let tuple: Vec<usize> = (0..gamma)
                .map(|_| rng.random_range(0..params.k_patterns))
                .collect();
            if code.contains(&tuple) {
                continue;
            }
            let mut worst = 0.0_f64;
            for other in &code {
                worst = worst.max(weighted_cost(
                    &tuple,
                    other,
                    &params.spectrum,
                    params.t_lo,
                    params.t_hi,
                )?);
            }
            best = best.min(worst);
            if worst <= limit {
                accepted = Some(tuple);
                break;
            }
        }
        match accepted {
            Some(t) => code.push(t),
            None => {
                return Err(Error::PackingInfeasible {
                    achieved: best,
                    limit,
                })
            }
        }
    }
    Ok(code)
}

/// Region-2 acceptance rule, calibrated once per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCalibration {
    /// `c₅`; the threshold is `c₅ / √(ρ^{λ+η} d)`.
    pub c5: f64,
    pub threshold: f64,
    /// `c₇ ξ′`: the largest admissible tail mass.
    pub budget: f64,
}

/// `Σ_j u_j² · I(|u_j| ≥ threshold)`.
pub fn tail_mass(u: &[f64], threshold: f64) -> f64 {
    u.iter()
        .filter(|v| v.abs() >= threshold)
        .map(|v| v * v)
        .sum()
}

fn unit_gaussian(len: usize, rng: &mut Rng) -> Vec<f64> {
    let g = gaussian_matrix(len, 1, rng);
    let norm = g.norm();
    g.iter().map(|v| v / norm).collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

/// Monte-Carlo calibration over [`CALIBRATION_DRAWS`] normalized Gaussian
/// vectors in `R^s`: the threshold is the `TAIL_QUANTILE` quantile of
/// `|u_j|` and the budget the median tail mass, so a fresh draw is accepted
/// with probability about one half.
pub fn calibrate_tail(params: &PackingParams) -> TailCalibration {
    let s = params.subset_len();
    let mut rng = rng_for(params.seed, STREAM_CALIBRATION);
    let draws: Vec<Vec<f64>> = (0..CALIBRATION_DRAWS)
        .map(|_| unit_gaussian(s, &mut rng))
        .collect();
    let mut coords: Vec<f64> = draws.iter().flatten().map(|v| v.abs()).collect();
    coords.sort_by(f64::total_cmp);
    let threshold = quantile(&coords, TAIL_QUANTILE);
    let mut masses: Vec<f64> = draws.iter().map(|u| tail_mass(u, threshold)).collect();
    masses.sort_by(f64::total_cmp);
    let scale = (params.rho.powf(params.lambda_exp + params.eta_exp) * params.d as f64).sqrt();
    TailCalibration {
        c5: threshold * scale,
        threshold,
        budget: quantile(&masses, 0.5),
    }
}

/// Orthonormal columns spanning the complement of `span(w)` in `R^s`.
fn complement_basis(w: &DenseMatrix) -> DenseMatrix {
    let s = w.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let svd = SpectralDecomposition::compute(w);
    let cut = svd.s.first().copied().unwrap_or(0.0) * 1e-10;
    let kept = svd.s.iter().filter(|&&v| v > cut).count();
    for j in 0..kept {
        basis.push(svd.u.column(j).into_owned());
    }
    let fixed = basis.len();
    for e in 0..s {
        let mut v = DVector::zeros(s);
        v[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }
    DenseMatrix::from_columns(&basis[fixed..])
}

/// Orthogonalizes `v` against the first `upto` columns of `u` (two passes).
fn orthogonalize_against(u: &DenseMatrix, upto: usize, v: &mut DenseMatrix) {
    for _ in 0..2 {
        for j in 0..upto {
            let c = u.column(j).dot(&v.column(0));
            v.column_mut(0).axpy(-c, &u.column(j), 1.0);
        }
    }
}

/// Procedure `q(R̄)`: fills a `d × d` unitary from the shared prefix, the
/// supports `R̄_{t̲}..R̄_{t̄}` (set representation) and fresh randomness.
pub fn build_unitary(
    supports: &[Vec<usize>],
    params: &PackingParams,
    shared_prefix: &DenseMatrix,
    tail: &TailCalibration,
    seed: u64,
) -> Result<DenseMatrix> {
    params.validate()?;
    let d = params.d;
    let t0 = params.t_lo - 1;
    if shared_prefix.shape() != (d, t0) {
        return Err(Error::dims(format!("shared prefix must be {d}x{t0}")));
    }
    if orthonormality_residual(shared_prefix) > 1e-10 {
        return Err(Error::arg("shared prefix columns are not orthonormal"));
    }
    if supports.len() != params.gamma() {
        return Err(Error::dims("one support per contested column required"));
    }
    let mut rng = rng_for(seed, 0);
    let mut u = DenseMatrix::zeros(d, d);
    u.columns_mut(0, t0).copy_from(shared_prefix);

    // Region 2.
    for (k, support) in supports.iter().enumerate() {
        let col = t0 + k;
        if support.iter().any(|&j| j >= d) {
            return Err(Error::arg("support index out of range"));
        }
        let w = DenseMatrix::from_fn(support.len(), col, |r, c| u[(support[r], c)]);
        let basis = complement_basis(&w);
        let kappa = basis.ncols();
        if kappa == 0 {
            return Err(Error::FillInfeasible {
                column: col + 1,
                tail_mass: f64::NAN,
                budget: tail.budget,
            });
        }
        let mut best = f64::INFINITY;
        let mut chosen = None;
        for _ in 0..FILL_RETRIES {
            let beta = DenseMatrix::from_column_slice(kappa, 1, &unit_gaussian(kappa, &mut rng));
            let local = &basis * beta;
            let mass = tail_mass(local.as_slice(), tail.threshold);
            best = best.min(mass);
            if mass <= tail.budget {
                chosen = Some(local);
                break;
            }
        }
        let local = chosen.ok_or(Error::FillInfeasible {
            column: col + 1,
            tail_mass: best,
            budget: tail.budget,
        })?;
        for (r, &j) in support.iter().enumerate() {
            u[(j, col)] = local[(r, 0)];
        }
    }

    // Region 3.
    let filled = params.t_hi;
    let mut col = filled;
    while col < d {
        let mut v = gaussian_matrix(d, 1, &mut rng);
        orthogonalize_against(&u, col, &mut v);
        let norm = v.norm();
        if norm > 1e-6 {
            u.set_column(col, &(v / norm).column(0));
            col += 1;
        }
    }
    // Final modified Gram-Schmidt pass over Region 3 only, so Region-2
    // supports stay exact.
    for col in filled..d {
        let mut v = u.column(col).into_owned();
        for j in 0..col {
            let c = u.column(j).dot(&v);
            v.axpy(-c, &u.column(j), 1.0);
        }
        let norm = v.norm();
        u.set_column(col, &(v / norm));
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackingFamily {
    pub params: PackingParams,
    /// `patterns[k][p]` is subset `p` of contested column `t̲ + k`.
    pub patterns: Vec<Vec<Vec<usize>>>,
    pub code: Vec<Vec<usize>>,
    pub unitaries: Vec<DenseMatrix>,
    pub psi: f64,
    pub tail: TailCalibration,
}

impl PackingFamily {
    /// Set representation of member `m`'s tuple.
    pub fn supports(&self, m: usize) -> Vec<Vec<usize>> {
        self.code[m]
            .iter()
            .enumerate()
            .map(|(k, &p)| self.patterns[k][p].clone())
            .collect()
    }

    /// `N† = U L†` for member `m`.
    pub fn member_matrix(&self, m: usize) -> DenseMatrix {
        let mut n = self.unitaries[m].clone();
        for (j, s) in self.params.spectrum.iter().enumerate() {
            n.column_mut(j).scale_mut(*s);
        }
        n
    }
}

/// Patterns, code, shared prefix, calibration and all members; members are
/// built in parallel from per-member random streams.
pub fn build_family(params: &PackingParams) -> Result<PackingFamily> {
    let patterns = sample_sparsity_family(params)?;
    let code = sample_code(params, &patterns)?;
    let tail = calibrate_tail(params);
    let haar = crate::synth::haar_orthogonal(params.d, &mut rng_for(params.seed, STREAM_PREFIX));
    let prefix = haar.columns(0, params.t_lo - 1).into_owned();
    let unitaries = code
        .par_iter()
        .enumerate()
        .map(|(m, tuple)| {
            let supports: Vec<Vec<usize>> = tuple
                .iter()
                .enumerate()
                .map(|(k, &p)| patterns[k][p].clone())
                .collect();
            let member_seed =
                params.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (STREAM_MEMBER + m as u64);
            build_unitary(&supports, params, &prefix, &tail, member_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PackingFamily {
        psi: params.psi(),
        params: params.clone(),
        patterns,
        code,
        unitaries,
        tail,
    })
}

/// Constants measured on a family rather than assumed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasuredConstants {
    pub c5: f64,
    pub tail_threshold: f64,
    pub tail_budget: f64,
    /// Largest accepted Region-2 tail mass.
    pub max_tail_mass: f64,
    /// Largest number of Region-2 entries above the tail threshold.
    pub max_tail_count: usize,
    /// `max Σ_{i∉H} 2σ_i²⟨U_i, U′_i⟩ / (ρ^{λ−η} Ψ)` over pairs.
    pub c8: f64,
    /// `max Σ_{i∈H} σ_i²(2 − ‖U_i − U′_i‖²) / (ρ^ζ Ψ)` over pairs.
    pub c9: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PackingChecks {
    pub unitary: bool,
    pub spectrum: bool,
    pub shared_prefix: bool,
    pub supports: bool,
    pub code_cost: bool,
    pub distance_bound: bool,
    pub distinct: bool,
}

impl PackingChecks {
    pub fn all(&self) -> bool {
        self.unitary
            && self.spectrum
            && self.shared_prefix
            && self.supports
            && self.code_cost
            && self.distance_bound
            && self.distinct
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingReport {
    pub params: PackingParams,
    pub family_size: usize,
    pub psi: f64,
    pub measured_constants: MeasuredConstants,
    /// `min ‖U L† − U′ L†‖_F²` over pairs, restricted to columns `t̲..=t̄`;
    /// `None` (JSON null) stands for +∞ when the family has one member.
    pub min_pairwise_distance: Option<f64>,
    /// Same minimum over all `d` columns.
    pub min_pairwise_distance_full: Option<f64>,
    pub distance_ratio: Option<f64>,
    /// `Ψ (2 − c₈ ρ^{λ−η} − c₉ ρ^ζ)`.
    pub bound_value: f64,
    /// Largest `|R̄_i ∩ R̄′_i|` over pairs whose tuples differ at column `i`.
    pub max_overlap: usize,
    pub max_code_cost: f64,
    pub cost_limit: f64,
    pub unitarity_residual: f64,
    pub spectrum_residual: f64,
    pub prefix_residual: f64,
    pub off_support_max: f64,
    pub checks: PackingChecks,
    pub pass: bool,
}

impl PackingReport {
    /// Minimum block distance with +∞ for a single member.
    pub fn min_distance(&self) -> f64 {
        self.min_pairwise_distance.unwrap_or(f64::INFINITY)
    }
}

struct PairStats {
    block: f64,
    full: f64,
    cost: f64,
    h_loss: f64,
    off_loss: f64,
    overlap: usize,
}

fn pair_stats(family: &PackingFamily, a: usize, b: usize) -> Result<PairStats> {
    let p = &family.params;
    let (ua, ub) = (&family.unitaries[a], &family.unitaries[b]);
    let (ca, cb) = (&family.code[a], &family.code[b]);
    let mut full = 0.0;
    for j in 0..p.d {
        full += p.spectrum[j].powi(2) * (ua.column(j) - ub.column(j)).norm_squared();
    }
    let (mut block, mut h_loss, mut off_loss, mut overlap) = (0.0, 0.0, 0.0, 0);
    for k in 0..p.gamma() {
        let j = p.t_lo - 1 + k;
        let s2 = p.spectrum[j].powi(2);
        let diff = (ua.column(j) - ub.column(j)).norm_squared();
        block += s2 * diff;
        if ca[k] == cb[k] {
            h_loss += s2 * (2.0 - diff);
        } else {
            off_loss += 2.0 * s2 * ua.column(j).dot(&ub.column(j));
            let (ra, rb) = (&family.patterns[k][ca[k]], &family.patterns[k][cb[k]]);
            overlap = overlap.max(ra.iter().filter(|x| rb.binary_search(x).is_ok()).count());
        }
    }
    Ok(PairStats {
        block,
        full,
        cost: weighted_cost(ca, cb, &p.spectrum, p.t_lo, p.t_hi)?,
        h_loss,
        off_loss,
        overlap,
    })
}

/// Checks every property the construction asserts and measures `c₈`, `c₉`.
pub fn verify_packing(family: &PackingFamily) -> Result<PackingReport> {
    let p = &family.params;
    let m = family.unitaries.len();
    if m == 0 || family.code.len() != m {
        return Err(Error::arg(
            "family must have at least one member and one tuple per member",
        ));
    }
    let t0 = p.t_lo - 1;
    let mut unitarity = 0.0_f64;
    let mut spectrum_res = 0.0_f64;
    let mut prefix_res = 0.0_f64;
    let mut off_support = 0.0_f64;
    let mut max_tail_mass = 0.0_f64;
    let mut max_tail_count = 0;
    let mut sorted_spec = p.spectrum.clone();
    sorted_spec.sort_by(|a, b| b.total_cmp(a));
    for idx in 0..m {
        let u = &family.unitaries[idx];
        unitarity = unitarity.max(orthonormality_residual(u));
        let sv = SpectralDecomposition::compute(&family.member_matrix(idx)).s;
        for (a, b) in sv.iter().zip(&sorted_spec) {
            spectrum_res = spectrum_res.max((a - b).abs());
        }
        for j in 0..t0 {
            prefix_res = prefix_res.max((u.column(j) - family.unitaries[0].column(j)).amax());
        }
        for (k, support) in family.supports(idx).iter().enumerate() {
            let col = u.column(t0 + k);
            let mut on = Vec::with_capacity(support.len());
            for r in 0..p.d {
                if support.binary_search(&r).is_ok() {
                    on.push(col[r]);
                } else {
                    off_support = off_support.max(col[r].abs());
                }
            }
            max_tail_mass = max_tail_mass.max(tail_mass(&on, family.tail.threshold));
            max_tail_count = max_tail_count.max(
                on.iter()
                    .filter(|v| v.abs() >= family.tail.threshold)
                    .count(),
            );
        }
    }

    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect();
    let stats = pairs
        .par_iter()
        .map(|&(a, b)| pair_stats(family, a, b))
        .collect::<Result<Vec<_>>>()?;

    let psi = family.psi;
    let rho_off = p.rho.powf(p.lambda_exp - p.eta_exp);
    let rho_h = p.rho.powf(p.zeta);
    let c8 = stats
        .iter()
        .map(|s| s.off_loss / (rho_off * psi))
        .fold(0.0_f64, f64::max);
    let c9 = stats
        .iter()
        .map(|s| s.h_loss / (rho_h * psi))
        .fold(0.0_f64, f64::max);
    let min_block = stats.iter().map(|s| s.block).reduce(f64::min);
    let min_full = stats.iter().map(|s| s.full).reduce(f64::min);
    let max_cost = stats.iter().map(|s| s.cost).fold(0.0_f64, f64::max);
    let max_overlap = stats.iter().map(|s| s.overlap).max().unwrap_or(0);
    let bound_value = psi * (2.0 - c8 * rho_off - c9 * rho_h);
    let tol = 1e-9 * psi.max(1e-300);

    let checks = PackingChecks {
        unitary: unitarity <= 1e-10,
        spectrum: spectrum_res <= 1e-8 * sorted_spec.first().copied().unwrap_or(1.0).max(1e-300),
        shared_prefix: prefix_res == 0.0,
        supports: off_support == 0.0,
        code_cost: max_cost <= p.cost_limit() + tol,
        distance_bound: min_block.is_none_or(|d| d >= bound_value - tol),
        distinct: min_block.is_none_or(|d| d > tol),
    };
    Ok(PackingReport {
        params: p.clone(),
        family_size: m,
        psi,
        measured_constants: MeasuredConstants {
            c5: family.tail.c5,
            tail_threshold: family.tail.threshold,
            tail_budget: family.tail.budget,
            max_tail_mass,
            max_tail_count,
            c8,
            c9,
        },
        min_pairwise_distance: min_block,
        min_pairwise_distance_full: min_full,
        distance_ratio: min_block.map(|d| d / psi),
        bound_value,
        max_overlap,
        max_code_cost: max_cost,
        cost_limit: p.cost_limit(),
        unitarity_residual: unitarity,
        spectrum_residual: spectrum_res,
        prefix_residual: prefix_res,
        off_support_max: off_support,
        pass: checks.all(),
        checks,
    })
}

/// `n ‖n1 − n2‖_F² / (2σ_ε²)`: KL divergence between the `n`-sample laws of
/// `y = N z + ε`, `z ~ N(0, I)`, `ε ~ N(0, σ_ε² I)`.
pub fn kl_divergence(
    n1: &DenseMatrix,
    n2: &DenseMatrix,
    n_samples: usize,
    sigma_eps: f64,
) -> Result<f64> {
    if n1.shape() != n2.shape() {
        return Err(Error::dims("matrices differ in shape"));
    }
    if !(sigma_eps > 0.0) {
        return Err(Error::arg("sigma_eps must be positive"));
    }
    Ok(n_samples as f64 * (n1 - n2).norm_squared() / (2.0 * sigma_eps * sigma_eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn desk_config(seed: u64, k: usize, members: usize) -> PackingConfig {
        PackingConfig {
            d: 64,
            rho: None,
            subset_size: Some(8),
            xi_small: 0.001,
            lambda_exp: None,
            zeta: 0.5,
            eta_exp: None,
            sigma_eps: 1.0,
            n_samples: 100,
            spectrum: SpectrumSpec::Flat,
            k_patterns: k,
            s_size: members,
            seed,
        }
    }

    #[test]
    fn derived_parameters() {
        let p = PackingParams::derive(&desk_config(0, 16, 8)).unwrap();
        assert_eq!(p.subset_len(), 8);
        assert_eq!((p.t_lo, p.t_hi, p.gamma()), (1, 4, 4));
        assert!((p.lambda_exp - 0.501).abs() < 1e-15 && p.eta_exp == 0.001);
        let level = p.rho * (64.0f64 / 100.0).sqrt();
        assert!((p.psi() - 4.0 * level * level).abs() < 1e-15);
        let mut bad = desk_config(0, 16, 8);
        bad.subset_size = Some(1);
        assert!(PackingParams::derive(&bad).is_err());
    }

    #[test]
    fn subsets_have_fixed_size() {
        let p = PackingParams::derive(&desk_config(1, 16, 8)).unwrap();
        let pats = sample_sparsity_family(&p).unwrap();
        assert_eq!(pats.len(), 4);
        for col in &pats {
            assert_eq!(col.len(), 16);
            for s in col {
                assert_eq!(s.len(), 8);
                assert!(s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(|&j| j < 64));
            }
        }
        let one = PackingParams {
            k_patterns: 1,
            ..p.clone()
        };
        assert_eq!(sample_sparsity_family(&one).unwrap()[0].len(), 1);
        let tiny = PackingParams {
            d: 4,
            spectrum: vec![p.spectrum[0]; 4],
            rho: 0.5f64.powf(1.0 / 0.501) * 1.0001,
            t_hi: 1,
            k_patterns: 7,
            ..p
        };
        assert_eq!(tiny.subset_len(), 2);
        assert!(sample_sparsity_family(&tiny).is_err());
    }

    #[test]
    fn weighted_cost_examples() {
        let spec = [2.0, 1.0];
        assert_eq!(weighted_cost(&[0, 3], &[0, 1], &spec, 1, 2).unwrap(), 4.0);
        assert_eq!(weighted_cost(&[0, 3], &[0, 3], &spec, 1, 2).unwrap(), 5.0);
        assert_eq!(weighted_cost(&[0, 3], &[1, 2], &spec, 1, 2).unwrap(), 0.0);
        assert!(weighted_cost(&[0], &[0, 1], &spec, 1, 2).is_err());
    }

    #[test]
    fn code_respects_cost_limit() {
        let p = PackingParams::derive(&desk_config(2, 16, 8)).unwrap();
        let pats = sample_sparsity_family(&p).unwrap();
        let code = sample_code(&p, &pats).unwrap();
        assert_eq!(code.len(), 8);
        for a in 0..8 {
            for b in a + 1..8 {
                assert_ne!(code[a], code[b]);
                assert!(
                    weighted_cost(&code[a], &code[b], &p.spectrum, 1, 4).unwrap() <= p.cost_limit()
                );
            }
        }
    }

    #[test]
    fn two_tuples_rarely_collide() {
        // zeta = 0 lifts the cost limit to Psi, so the first draw is kept.
        let mut collisions = 0;
        for seed in 0..200 {
            let p = PackingParams {
                zeta: 0.0,
                ..PackingParams::derive(&desk_config(seed, 64, 2)).unwrap()
            };
            let pats = sample_sparsity_family(&p).unwrap();
            let code = sample_code(&p, &pats).unwrap();
            if weighted_cost(&code[0], &code[1], &p.spectrum, p.t_lo, p.t_hi).unwrap() > 0.0 {
                collisions += 1;
            }
        }
        // P(collision) <= gamma / K = 1/16; 200 trials leave room for 2x slack.
        assert!(collisions <= 25, "{collisions}");
    }

    #[test]
    fn infeasible_code_is_reported() {
        let p = PackingParams {
            k_patterns: 2,
            ..PackingParams::derive(&desk_config(3, 2, 8)).unwrap()
        };
        let pats = sample_sparsity_family(&p).unwrap();
        match sample_code(&p, &pats) {
            Err(Error::PackingInfeasible { achieved, limit }) => assert!(achieved > limit),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn calibration_limits_large_entries() {
        let p = PackingParams::derive(&desk_config(4, 64, 8)).unwrap();
        let tail = calibrate_tail(&p);
        assert!(tail.budget > 0.0);
        assert!(tail.budget < 3.0 * tail.threshold * tail.threshold);
        let fam = build_family(&p).unwrap();
        let report = verify_packing(&fam).unwrap();
        assert!(report.measured_constants.max_tail_count <= 2);
        assert!(report.measured_constants.max_tail_mass <= tail.budget);
    }

    #[test]
    fn family_properties() {
        let p = PackingParams::derive(&desk_config(0, 64, 8)).unwrap();
        let fam = build_family(&p).unwrap();
        let report = verify_packing(&fam).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.unitarity_residual <= 1e-10);
        assert!(report.min_distance() >= 1.5 * fam.psi);
        assert!(report.max_overlap <= 4);
        assert_eq!(build_family(&p).unwrap(), fam);
    }

    #[test]
    fn shared_prefix_is_respected() {
        let cfg = PackingConfig {
            spectrum: SpectrumSpec::Values({
                let level = 0.01 * (64.0f64 / 100.0).sqrt();
                let mut v = vec![10.0 * level, 5.0 * level];
                v.extend(std::iter::repeat(level).take(62));
                v
            }),
            rho: Some(0.01),
            subset_size: None,
            lambda_exp: Some(0.25),
            ..desk_config(6, 16, 4)
        };
        let p = PackingParams::derive(&cfg).unwrap();
        assert_eq!(p.t_lo, 3);
        assert!(p.t_hi >= p.t_lo);
        let fam = build_family(&p).unwrap();
        let report = verify_packing(&fam).unwrap();
        assert!(report.checks.shared_prefix && report.checks.supports && report.checks.unitary);
        assert!(report.checks.spectrum);
    }

    #[test]
    fn degenerate_families() {
        let p = PackingParams::derive(&desk_config(7, 64, 1)).unwrap();
        let fam = build_family(&p).unwrap();
        let report = verify_packing(&fam).unwrap();
        assert_eq!(report.min_pairwise_distance, None);
        assert!(report.pass);
        assert_eq!(report.min_distance(), f64::INFINITY);
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["min_pairwise_distance"].is_null());

        let p = PackingParams::derive(&desk_config(8, 64, 2)).unwrap();
        let mut fam = build_family(&p).unwrap();
        fam.unitaries[1] = fam.unitaries[0].clone();
        fam.code[1] = fam.code[0].clone();
        let report = verify_packing(&fam).unwrap();
        assert_eq!(report.min_pairwise_distance, Some(0.0));
        assert!(!report.checks.distinct && !report.pass);
    }

    #[test]
    fn kl_examples() {
        let a = DenseMatrix::from_element(2, 2, 0.3);
        assert_eq!(kl_divergence(&a, &a, 100, 1.0).unwrap(), 0.0);
        let mut b = a.clone();
        b[(0, 0)] += 0.08f64.sqrt();
        assert!((kl_divergence(&a, &b, 100, 1.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(kl_divergence(&a, &b, 100, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kl_symmetry_and_scaling(seed in 0u64..1000, n in 1usize..500, c in 0.1f64..5.0) {
            let mut rng = rng_for(seed, 0);
            let a = gaussian_matrix(3, 3, &mut rng);
            let b = gaussian_matrix(3, 3, &mut rng);
            let k = kl_divergence(&a, &b, n, 0.7).unwrap();
            prop_assert!((k - kl_divergence(&b, &a, n, 0.7).unwrap()).abs() <= 1e-12 * k);
            prop_assert!((kl_divergence(&a, &b, 2 * n, 0.7).unwrap() - 2.0 * k).abs() <= 1e-9 * k);
            let scaled = kl_divergence(&(&a * c), &(&b * c), n, 0.7).unwrap();
            prop_assert!((scaled - c * c * k).abs() <= 1e-9 * scaled.max(k));
        }

        #[test]
        fn members_are_unitary_with_fixed_spectrum(seed in 0u64..200) {
            let p = PackingParams::derive(&desk_config(seed, 64, 3)).unwrap();
            let fam = build_family(&p).unwrap();
            let report = verify_packing(&fam).unwrap();
            prop_assert!(report.checks.unitary && report.checks.spectrum && report.checks.supports);
            prop_assert!(report.checks.code_cost && report.checks.distance_bound);
        }
    }
}
