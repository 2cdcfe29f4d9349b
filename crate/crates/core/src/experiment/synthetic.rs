use rayon::prelude::*;

use super::selection::{adaptive_row, baseline_row, select_adaptive, select_baseline};
use super::{hyper_string, ExperimentConfig, Fold, ResultRow, ADAPTIVE_METHOD};
use crate::error::Result;
use crate::estimator::{fit_adaptive_rrr, FitConfig, NoiseLevel};
use crate::matrix::{fmt_f64, DenseMatrix};
use crate::metrics::evaluate;
use crate::spectral::{angle_matrix, EigenSpectrum};
use crate::synth::{Dataset, SynthConfig, SyntheticInstance};

const VALID_OFFSET: u64 = 1 << 32;
const TEST_OFFSET: u64 = 2 << 32;

/// One entry of an angle matrix, 1-based indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleCell {
    pub seed: u64,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

fn instance(cfg: &ExperimentConfig, eta: f64, seed: u64) -> Result<SyntheticInstance> {
    let synth = cfg.synth.as_ref().expect("validated");
    SyntheticInstance::generate(&SynthConfig {
        eta,
        seed,
        ..synth.clone()
    })
}

fn held_out(cfg: &ExperimentConfig, inst: &SyntheticInstance, seed: u64) -> (Dataset, Dataset) {
    let n = inst.config.n;
    (
        inst.draw(cfg.valid_n(n), seed.wrapping_add(VALID_OFFSET)),
        inst.draw(cfg.test_n(n), seed.wrapping_add(TEST_OFFSET)),
    )
}

/// Noise level handed to the adaptive estimator.
fn sigma_for(cfg: &ExperimentConfig, inst: &SyntheticInstance) -> NoiseLevel {
    if cfg.oracle_sigma {
        NoiseLevel::Known(inst.sigma_noise.max(f64::EPSILON))
    } else {
        cfg.fit.sigma_eps
    }
}

fn eta_seed_pairs(cfg: &ExperimentConfig) -> Vec<(f64, u64)> {
    let seeds = cfg.seeds();
    cfg.etas()
        .into_iter()
        .flat_map(|eta| seeds.iter().map(move |&s| (eta, s)))
        .collect()
}

fn flatten(groups: Result<Vec<Vec<ResultRow>>>) -> Result<Vec<ResultRow>> {
    Ok(groups?.into_iter().flatten().collect())
}

/// Fits every `(k1, k2)` cell with `k2 <= k1` for every `(η, seed)`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let g = &cfg.grids;
    let cells: Vec<(usize, usize)> = g
        .k1_list
        .iter()
        .flat_map(|&k1| g.k2_list.iter().map(move |&k2| (k1, k2)))
        .filter(|&(k1, k2)| k2 <= k1)
        .collect();
    let groups = eta_seed_pairs(cfg)
        .par_iter()
        .map(|&(eta, seed)| {
            let inst = instance(cfg, eta, seed)?;
            let (_, test) = held_out(cfg, &inst, seed);
            let sigma = sigma_for(cfg, &inst);
            cells
                .par_iter()
                .map(|&(k1, k2)| {
                    let fit = FitConfig {
                        sigma_eps: sigma,
                        ..cfg.fit.clone()
                    }
                    .with_ranks(k1, k2);
                    let model = fit_adaptive_rrr(&inst.x, &inst.y, &fit)?;
                    let report = evaluate(
                        &model,
                        (&inst.x, &inst.y),
                        (&test.x, &test.y),
                        Some(&inst.m),
                    )?;
                    Ok(ResultRow {
                        seed,
                        method: ADAPTIVE_METHOD.to_string(),
                        eta: Some(eta),
                        fold: Fold::None,
                        k1: Some(k1),
                        k2: Some(k2),
                        hyper: String::new(),
                        report: Some(report),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect();
    flatten(groups)
}

/// Adaptive estimator plus every baseline, each tuned on a validation draw
/// and scored on a test draw, for every `(η, seed)`.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let candidates = cfg.adaptive_candidates();
    let groups = eta_seed_pairs(cfg)
        .par_iter()
        .map(|&(eta, seed)| {
            let inst = instance(cfg, eta, seed)?;
            let (valid, test) = held_out(cfg, &inst, seed);
            let train = (&inst.x, &inst.y);
            let (vs, ts) = ((&valid.x, &valid.y), (&test.x, &test.y));
            let truth = Some(&inst.m);
            let choice = select_adaptive(&cfg.fit, sigma_for(cfg, &inst), &candidates, train, vs)?;
            let mut rows = vec![adaptive_row(
                seed,
                Some(eta),
                &choice,
                evaluate(&choice.model, train, ts, truth)?,
            )];
            let baselines = cfg
                .baselines
                .par_iter()
                .map(|grid| {
                    let model = select_baseline(grid, train, vs)?;
                    let report = evaluate(&model, train, ts, truth)?;
                    Ok(baseline_row(seed, Some(eta), &model, report))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.extend(baselines);
            Ok(rows)
        })
        .collect();
    flatten(groups)
}

/// `|cos|` between the leading eigenvectors of the sample covariance
/// `XᵀX / n` and those of the true covariance.
pub fn angle_rows(x: &DenseMatrix, v_star: &DenseMatrix, top: usize) -> Result<DenseMatrix> {
    let n = x.nrows() as f64;
    let emp = EigenSpectrum::of_symmetric(&(x.transpose() * x / n))?;
    angle_matrix(
        &emp.vectors.columns(0, top).into_owned(),
        &v_star.columns(0, top).into_owned(),
    )
}

/// Angle matrices for every seed, with a summary row per seed.
pub fn run_angles(cfg: &ExperimentConfig) -> Result<(Vec<ResultRow>, Vec<AngleCell>)> {
    cfg.validate()?;
    let top = cfg.angles.clone().unwrap_or_default().top;
    let eta = cfg.synth.as_ref().expect("validated").eta;
    let per_seed = cfg
        .seeds()
        .par_iter()
        .map(|&seed| {
            let inst = instance(cfg, eta, seed)?;
            let a = angle_rows(&inst.x, &inst.v_star, top)?;
            let mut cells = Vec::with_capacity(top * top);
            let (mut diag, mut off_max) = (0.0, 0.0_f64);
            for i in 0..top {
                for j in 0..top {
                    let value = a[(i, j)];
                    if i == j {
                        diag += value;
                    } else {
                        off_max = off_max.max(value);
                    }
                    cells.push(AngleCell {
                        seed,
                        i: i + 1,
                        j: j + 1,
                        value,
                    });
                }
            }
            let row = ResultRow {
                seed,
                method: "angles".to_string(),
                eta: Some(eta),
                fold: Fold::None,
                k1: Some(top),
                k2: None,
                hyper: hyper_string(&[
                    ("diag_mean", fmt_f64(diag / top as f64)),
                    ("offdiag_max", fmt_f64(off_max)),
                ]),
                report: None,
            };
            Ok((row, cells))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for (r, c) in per_seed {
        rows.push(r);
        cells.extend(c);
    }
    Ok((rows, cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::sort_rows;

    fn cfg(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json).unwrap()
    }

    #[test]
    fn one_by_one_sweep_gives_one_row() {
        let c = cfg(r#"{"kind": "sweep", "oracle_sigma": true,
            "synth": {"d1": 20, "d2": 10, "n": 30, "rank_m": 3, "omega": 2.0, "eta": 0.1},
            "grids": {"k1_list": [8], "k2_list": [3], "seeds": [4]}}"#);
        let rows = run_sweep(&c).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(
            (rows[0].k1, rows[0].k2, rows[0].seed),
            (Some(8), Some(3), 4)
        );
        assert!(rows[0].report.as_ref().unwrap().recon_error.is_some());
    }

    #[test]
    fn sweep_skips_cells_with_k2_above_k1() {
        let c = cfg(r#"{"kind": "sweep", "oracle_sigma": true,
            "synth": {"d1": 20, "d2": 10, "n": 30, "rank_m": 3, "omega": 2.0, "eta": 0.1},
            "grids": {"k1_list": [2, 6], "k2_list": [1, 4], "seeds": [0, 1]}}"#);
        let rows = run_sweep(&c).unwrap();
        assert_eq!(rows.len(), 2 * 3);
        assert!(rows.iter().all(|r| r.k2 <= r.k1));
    }

    #[test]
    fn compare_rows_are_sorted_and_complete() {
        let c = cfg(r#"{"kind": "compare", "oracle_sigma": true,
            "synth": {"d1": 30, "d2": 12, "n": 25, "rank_m": 2, "omega": 2.0, "eta": 0.2},
            "grids": {"seeds": [3, 1], "eta_list": [0.5, 0.2]},
            "baselines": [{"method": "ridge", "mu_list": [0.01, 1.0]},
                          {"method": "rrr", "rank_list": [1, 2]}]}"#);
        let mut rows = run_compare(&c).unwrap();
        sort_rows(&mut rows);
        assert_eq!(rows.len(), 3 * 2 * 2);
        assert_eq!(rows[0].method, ADAPTIVE_METHOD);
        assert_eq!(rows[0].eta, Some(0.2));
        assert_eq!(rows.last().unwrap().method, "rrr");
        let rrr: Vec<(Option<f64>, u64)> = rows
            .iter()
            .filter(|r| r.method == "rrr")
            .map(|r| (r.eta, r.seed))
            .collect();
        assert_eq!(
            rrr,
            vec![
                (Some(0.2), 1),
                (Some(0.2), 3),
                (Some(0.5), 1),
                (Some(0.5), 3)
            ]
        );
    }

    #[test]
    fn angles_are_cosines() {
        let c = cfg(r#"{"kind": "angles", "angles": {"top": 5},
            "synth": {"d1": 20, "d2": 5, "n": 400, "rank_m": 2, "omega": 2.0, "eta": 0.1},
            "grids": {"seeds": [2]}}"#);
        let (rows, cells) = run_angles(&c).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(cells.len(), 25);
        assert!(cells.iter().all(|c| (0.0..=1.0).contains(&c.value)));
        // With n = 20 d1 the top direction is well separated.
        assert!(cells[0].value > 0.9, "{}", cells[0].value);
    }
}
