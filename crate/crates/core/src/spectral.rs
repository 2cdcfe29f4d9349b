//! Spectral primitives: thin SVD with a fixed sign convention, rank
//! truncation, the two rank-selection rules, the gap/tail search and the
//! subspace angle matrix.

use faer::Side;

use crate::error::{Error, Result};
use crate::matrix::{from_faer, to_faer, DenseMatrix};

/// Thin SVD `a = u · diag(s) · vᵀ`, singular values non-increasing.
///
/// Signs are fixed so that the largest-magnitude entry of every left
/// singular vector is positive (first occurrence wins on ties), which makes
/// the decomposition a deterministic function of its input.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl SpectralDecomposition {
    pub fn compute(a: &DenseMatrix) -> SpectralDecomposition {
        let (rows, cols) = a.shape();
        let k = rows.min(cols);
        if k == 0 {
            return SpectralDecomposition {
                u: DenseMatrix::zeros(rows, 0),
                s: Vec::new(),
                v: DenseMatrix::zeros(cols, 0),
            };
        }
        // nalgebra's bidiagonal QR loses accuracy on rank-deficient input,
        // so the factorization itself is delegated to faer.
        let svd = to_faer(a).thin_svd().expect("svd converges");
        let u_raw = from_faer(svd.U());
        let v_raw = from_faer(svd.V());
        let sv: Vec<f64> = (0..k).map(|i| svd.S().column_vector()[i]).collect();

        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));

        let mut u = DenseMatrix::zeros(rows, k);
        let mut v = DenseMatrix::zeros(cols, k);
        let mut s = Vec::with_capacity(k);
        for (dst, &src) in order.iter().enumerate() {
            let mut ucol = u_raw.column(src).into_owned();
            let mut vcol = v_raw.column(src).into_owned();
            let pivot = ucol
                .iter()
                .enumerate()
                .fold((0usize, 0.0_f64), |(bi, bv), (i, x)| {
                    if x.abs() > bv {
                        (i, x.abs())
                    } else {
                        (bi, bv)
                    }
                })
                .0;
            if ucol[pivot] < 0.0 {
                ucol.neg_mut();
                vcol.neg_mut();
            }
            u.set_column(dst, &ucol);
            v.set_column(dst, &vcol);
            s.push(sv[src].max(0.0));
        }
        SpectralDecomposition { u, s, v }
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `U_r Σ_r V_rᵀ` from the leading `r` triplets.
    pub fn recompose(&self, r: usize) -> DenseMatrix {
        let r = r.min(self.s.len());
        let mut us = self.u.columns(0, r).into_owned();
        for (j, sj) in self.s.iter().take(r).enumerate() {
            us.column_mut(j).scale_mut(*sj);
        }
        us * self.v.columns(0, r).transpose()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.recompose(self.s.len())
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    pub lambdas: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl EigenSpectrum {
    /// Negative round-off eigenvalues are clamped to zero.
    pub fn of_symmetric(c: &DenseMatrix) -> Result<EigenSpectrum> {
        if c.nrows() != c.ncols() {
            return Err(Error::dims(format!(
                "eigen-decomposition needs a square matrix, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        let eig = to_faer(c)
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::arg(format!("eigen-decomposition failed: {e:?}")))?;
        let values: Vec<f64> = (0..c.nrows()).map(|i| eig.S().column_vector()[i]).collect();
        let raw = from_faer(eig.U());
        let d = c.nrows();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
        let mut vectors = DenseMatrix::zeros(d, d);
        let mut lambdas = Vec::with_capacity(d);
        for (dst, &src) in order.iter().enumerate() {
            let mut col = raw.column(src).into_owned();
            let pivot = col.iamax();
            if col[pivot] < 0.0 {
                col.neg_mut();
            }
            vectors.set_column(dst, &col);
            lambdas.push(values[src].max(0.0));
        }
        Ok(EigenSpectrum { lambdas, vectors })
    }
}

/// Best rank-`r` approximation `P_r(a)`.
pub fn truncate_rank(a: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    let max_rank = a.nrows().min(a.ncols());
    if r > max_rank {
        return Err(Error::arg(format!(
            "rank {r} exceeds min(rows, cols) = {max_rank}"
        )));
    }
    if r == 0 {
        return Ok(DenseMatrix::zeros(a.nrows(), a.ncols()));
    }
    Ok(SpectralDecomposition::compute(a).recompose(r))
}

fn check_non_increasing(values: &[f64], what: &str) -> Result<()> {
    if values.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::arg(format!("{what} must be non-increasing")));
    }
    Ok(())
}

/// Gap thresholding: the largest 1-based `k` with `λ_k − λ_{k+1} ≥ δ`, where
/// the eigenvalue past the end of the list counts as zero.
pub fn select_gap_rank(lambdas: &[f64], delta: f64) -> Result<Option<usize>> {
    if lambdas.is_empty() {
        return Err(Error::arg("gap thresholding needs at least one eigenvalue"));
    }
    if !(delta > 0.0) {
        return Err(Error::arg(format!("delta must be positive, got {delta}")));
    }
    check_non_increasing(lambdas, "eigenvalues")?;
    Ok((0..lambdas.len())
        .rev()
        .find(|&i| lambdas[i] - lambdas.get(i + 1).copied().unwrap_or(0.0) >= delta)
        .map(|i| i + 1))
}

/// Largest gap `λ_k − λ_{k+1}` over the list, with the same boundary rule
/// as [`select_gap_rank`].
pub fn largest_gap(lambdas: &[f64]) -> f64 {
    (0..lambdas.len())
        .map(|i| lambdas[i] - lambdas.get(i + 1).copied().unwrap_or(0.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Absolute-value thresholding: number of leading singular values `≥ tau`.
pub fn select_threshold_rank(sigmas: &[f64], tau: f64) -> usize {
    sigmas.iter().take_while(|&&s| s >= tau).count()
}

/// Index found by [`find_gap_tail_index`], 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapTail {
    pub index: usize,
    pub gap: f64,
    pub tail: f64,
}

/// Exhaustive scan for the index with the largest gap `λ_i − λ_{i+1}` among
/// those whose tail mass `Σ_{j≥i} λ_j` is at most `tail_const · ell^{−tau}`.
///
/// `lambdas` must be a non-increasing, normalized (`Σλ = 1`) spectrum with
/// `λ₁ < 1`. Ties on the gap go to the smaller index.
pub fn find_gap_tail_index(
    lambdas: &[f64],
    ell: usize,
    tau: f64,
    tail_const: f64,
) -> Result<GapTail> {
    if lambdas.is_empty() {
        return Err(Error::arg("empty spectrum"));
    }
    check_non_increasing(lambdas, "eigenvalues")?;
    if lambdas.iter().any(|&l| l < 0.0) {
        return Err(Error::arg("eigenvalues must be non-negative"));
    }
    let total: f64 = lambdas.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::arg(format!(
            "spectrum must sum to 1, sums to {total}"
        )));
    }
    if lambdas[0] >= 1.0 {
        return Err(Error::arg("leading eigenvalue must be < 1"));
    }
    if ell == 0 || !(tau > 0.0) || !(tail_const > 0.0) {
        return Err(Error::arg("ell, tau and tail_const must be positive"));
    }

    let bound = tail_const * (ell as f64).powf(-tau);
    let d = lambdas.len();
    let mut tails = vec![0.0; d];
    let mut acc = 0.0;
    for i in (0..d).rev() {
        acc += lambdas[i];
        tails[i] = acc;
    }

    let mut best: Option<GapTail> = None;
    for i in 0..d {
        if tails[i] > bound {
            continue;
        }
        let gap = lambdas[i] - lambdas.get(i + 1).copied().unwrap_or(0.0);
        if best.is_none_or(|b| gap > b.gap) {
            best = Some(GapTail {
                index: i + 1,
                gap,
                tail: tails[i],
            });
        }
    }
    best.ok_or_else(|| {
        Error::arg(format!(
            "no index has tail mass <= {bound:e} (smallest tail {:e})",
            tails[d - 1]
        ))
    })
}

/// The two bounds of the gap/tail tradeoff for constants `(c1, c2)`:
/// returns `(c1 · ℓ^{−(τω/(ω−1)+1)}, c2 · ℓ^{−τ})`.
pub fn gap_tail_bounds(ell: usize, tau: f64, omega: f64, c1: f64, c2: f64) -> (f64, f64) {
    let l = ell as f64;
    let gap_floor = c1 * l.powf(-(tau * omega / (omega - 1.0) + 1.0));
    let tail_ceiling = c2 * l.powf(-tau);
    (gap_floor, tail_ceiling)
}

/// `|v1[:,i] · v2[:,j]|` for every column pair.
pub fn angle_matrix(v1: &DenseMatrix, v2: &DenseMatrix) -> Result<DenseMatrix> {
    if v1.nrows() != v2.nrows() {
        return Err(Error::dims(format!(
            "angle matrix needs equal row counts, got {} and {}",
            v1.nrows(),
            v2.nrows()
        )));
    }
    Ok((v1.transpose() * v2).map(|x| x.abs().min(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gaussian_matrix, orthonormality_residual, rng_for};
    use proptest::prelude::*;

    fn rel_frob(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn decomposition_invariants() {
        let mut rng = rng_for(11, 0);
        for &(r, c) in &[(5, 3), (3, 5), (8, 8), (1, 4)] {
            let a = gaussian_matrix(r, c, &mut rng);
            let sd = SpectralDecomposition::compute(&a);
            assert!(sd.s.windows(2).all(|w| w[0] >= w[1]));
            assert!(orthonormality_residual(&sd.u) <= 1e-10);
            assert!(orthonormality_residual(&sd.v) <= 1e-10);
            assert!(rel_frob(&sd.reconstruct(), &a) <= 1e-8);
        }
    }

    #[test]
    fn sign_convention_is_stable_under_negation() {
        let mut rng = rng_for(12, 0);
        let a = gaussian_matrix(6, 4, &mut rng);
        let sd = SpectralDecomposition::compute(&a);
        let neg = SpectralDecomposition::compute(&(-&a));
        assert_eq!(sd, SpectralDecomposition::compute(&a));
        // U is fixed by the convention, so negating the input flips V.
        assert!((&sd.u - &neg.u).amax() < 1e-10);
        assert!((&sd.v + &neg.v).amax() < 1e-10);
    }

    #[test]
    fn truncate_diagonal() {
        let a = DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0]));
        let t = truncate_rank(&a, 1).unwrap();
        let want = DenseMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]);
        assert!((t - want).amax() < 1e-12);
    }

    #[test]
    fn truncate_zero_and_out_of_range() {
        let mut rng = rng_for(13, 0);
        let a = gaussian_matrix(4, 3, &mut rng);
        assert_eq!(truncate_rank(&a, 0).unwrap(), DenseMatrix::zeros(4, 3));
        assert!(matches!(
            truncate_rank(&a, 4),
            Err(Error::InvalidArgument(_))
        ));
        assert!(rel_frob(&truncate_rank(&a, 3).unwrap(), &a) <= 1e-8);
    }

    /// Eckart-Young oracle: compare against every rank-2 recomposition built
    /// from subsets of the singular triplets, plus random rank-2 perturbations.
    #[test]
    fn truncate_is_best_rank_two() {
        let mut rng = rng_for(14, 0);
        let a = gaussian_matrix(3, 3, &mut rng);
        let t = truncate_rank(&a, 2).unwrap();
        let best = (&a - &t).norm();

        let sd = SpectralDecomposition::compute(&a);
        for drop in 0..3 {
            let mut b = DenseMatrix::zeros(3, 3);
            for k in (0..3).filter(|&k| k != drop) {
                b += sd.s[k] * sd.u.column(k) * sd.v.column(k).transpose();
            }
            assert!((&a - &b).norm() >= best - 1e-12);
        }
        for _ in 0..200 {
            let l = &t.columns(0, 3).into_owned() + gaussian_matrix(3, 3, &mut rng) * 0.05;
            let cand = truncate_rank(&l, 2).unwrap();
            assert!((&a - &cand).norm() >= best - 1e-12);
        }
        // Error equals the dropped singular value.
        assert!((best - sd.s[2]).abs() < 1e-10);
    }

    #[test]
    fn gap_rank_examples() {
        let l = [0.5, 0.3, 0.1, 0.05, 0.03];
        assert_eq!(select_gap_rank(&l, 0.15).unwrap(), Some(2));
        assert_eq!(select_gap_rank(&[0.5, 0.5, 0.5], 0.1).unwrap(), Some(3));
        assert_eq!(select_gap_rank(&[1e-9, 1e-9], 0.5).unwrap(), None);
        assert!(select_gap_rank(&[], 0.1).is_err());
        assert!(select_gap_rank(&[0.1, 0.2], 0.1).is_err());
    }

    #[test]
    fn threshold_rank_examples() {
        assert_eq!(select_threshold_rank(&[5.0, 3.0, 1.0], 2.0), 2);
        assert_eq!(select_threshold_rank(&[5.0, 3.0, 1.0], 10.0), 0);
        assert_eq!(select_threshold_rank(&[5.0, 3.0, 1.0], 0.5), 3);
        assert_eq!(select_threshold_rank(&[], 0.5), 0);
    }

    #[test]
    fn gap_tail_single_dominant_gap() {
        let l = [0.9, 0.05, 0.05];
        let gt = find_gap_tail_index(&l, 1, 1.0, 10.0).unwrap();
        assert_eq!(gt.index, 1);
        assert!((gt.gap - 0.85).abs() < 1e-12);
        assert!((gt.tail - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gap_tail_power_law_matches_brute_force() {
        let raw: Vec<f64> = (1..=500).map(|i| (i as f64).powi(-2)).collect();
        let z: f64 = raw.iter().sum();
        let l: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let (ell, tau, c2) = (50, 0.9, 0.6);
        let gt = find_gap_tail_index(&l, ell, tau, c2).unwrap();

        let bound = c2 * (ell as f64).powf(-tau);
        let mut best = (0usize, f64::NEG_INFINITY);
        for i in 0..l.len() {
            let tail: f64 = l[i..].iter().sum();
            let next = if i + 1 < l.len() { l[i + 1] } else { 0.0 };
            if tail <= bound && l[i] - next > best.1 {
                best = (i + 1, l[i] - next);
            }
        }
        assert_eq!(gt.index, best.0);
        assert!(gt.tail <= bound);
    }

    #[test]
    fn gap_tail_rejects_unnormalized() {
        assert!(find_gap_tail_index(&[0.4, 0.4, 0.4], 10, 0.5, 1.0).is_err());
        assert!(find_gap_tail_index(&[1.0, 0.0], 10, 0.5, 1.0).is_err());
    }

    #[test]
    fn angle_matrix_identity_and_permutation() {
        let eye = DenseMatrix::identity(3, 3);
        assert_eq!(angle_matrix(&eye, &eye).unwrap(), eye);
        let perm = DenseMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        let neg_perm = -&perm;
        assert_eq!(angle_matrix(&eye, &neg_perm).unwrap(), perm);
        assert!(angle_matrix(&eye, &DenseMatrix::identity(2, 2)).is_err());
    }

    fn sorted_desc() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 1..12).prop_map(|mut v| {
            v.sort_by(|a, b| b.total_cmp(a));
            v
        })
    }

    proptest! {
        #[test]
        fn truncation_rank_and_error(seed in 0u64..500, r in 0usize..5) {
            let mut rng = rng_for(seed, 3);
            let a = gaussian_matrix(5, 4, &mut rng);
            let r = r.min(4);
            let t = truncate_rank(&a, r).unwrap();
            let st = SpectralDecomposition::compute(&t);
            prop_assert!(st.s.iter().filter(|&&s| s > 1e-10).count() <= r);
            let sa = SpectralDecomposition::compute(&a);
            let tail: f64 = sa.s[r..].iter().map(|s| s * s).sum();
            let err = (&a - &t).norm_squared();
            prop_assert!((err - tail).abs() <= 1e-8 * a.norm_squared());
        }

        #[test]
        fn gap_rank_monotone_in_delta(l in sorted_desc(), d1 in 1e-4f64..0.5, d2 in 1e-4f64..0.5) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let at_lo = select_gap_rank(&l, lo).unwrap();
            let at_hi = select_gap_rank(&l, hi).unwrap();
            if let Some(k_hi) = at_hi {
                prop_assert!(at_lo.is_some_and(|k_lo| k_hi <= k_lo));
            }
        }

        #[test]
        fn threshold_rank_monotone(l in sorted_desc(), t1 in 1e-3f64..1.0, t2 in 1e-3f64..1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(select_threshold_rank(&l, hi) <= select_threshold_rank(&l, lo));
        }

        #[test]
        fn angles_bounded(seed in 0u64..500) {
            let mut rng = rng_for(seed, 4);
            let q1 = SpectralDecomposition::compute(&gaussian_matrix(6, 6, &mut rng)).u;
            let q2 = SpectralDecomposition::compute(&gaussian_matrix(6, 6, &mut rng)).u;
            let a = angle_matrix(&q1, &q2).unwrap();
            prop_assert!(a.iter().all(|&x| (0.0..=1.0).contains(&x)));
            for i in 0..6 {
                prop_assert!(a.row(i).norm() <= 1.0 + 1e-10);
                prop_assert!(a.column(i).norm() <= 1.0 + 1e-10);
            }
        }
    }
}
