//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng as _;
use rayon::prelude::*;

use arrr::baselines::{fit_baseline, BaselineSpec, SolverOptions};
use arrr::estimator::{fit_adaptive_rrr, step1_pca_x, FitConfig};
use arrr::experiment::{run_compare, ExperimentConfig};
use arrr::matrix::{gaussian_matrix, max_abs, rng_for, DenseMatrix};
use arrr::packing::{build_family, kl_divergence, verify_packing, PackingConfig, PackingParams};
use arrr::spectral::{find_gap_tail_index, gap_tail_bounds, SpectralDecomposition};
use arrr::synth::{
    gen_covariance, power_law_spectrum, sample_features, SynthConfig, SyntheticInstance,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Verdict;

fn synth(
    d1: usize,
    d2: usize,
    n: usize,
    rank_m: usize,
    omega: f64,
    eta: f64,
    seed: u64,
) -> SyntheticInstance {
    SyntheticInstance::generate(&SynthConfig {
        d1,
        d2,
        n,
        rank_m,
        omega,
        eta,
        upsilon: 1.0,
        seed,
    })
    .expect("valid synthetic config")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn whitening_exactness() -> Verdict {
    let mut worst = 0.0_f64;
    let mut shapes = (usize::MAX, 0);
    for seed in 0..50u64 {
        let mut rng = rng_for(seed, 99);
        let n = rng.random_range(10..=300);
        let d1 = rng.random_range(2..=120);
        shapes = (shapes.0.min(n), shapes.1.max(n));
        let (v, lambdas) = gen_covariance(d1, 2.0, seed).unwrap();
        let x = sample_features(&v, &lambdas, n, &mut rng);
        let s1 = match step1_pca_x(&x, 1e-3, None) {
            Ok(s) => s,
            Err(e) => return verdict(false, format!("seed {seed}: {e}")),
        };
        let gram = s1.z_hat.transpose() * &s1.z_hat / n as f64;
        let resid = max_abs(&(gram - DenseMatrix::identity(s1.k1, s1.k1)));
        worst = worst.max(resid);
    }
    verdict(
        worst <= 1e-10,
        format!(
            "max |ZᵀZ/n − I| = {worst:.2e} over 50 inputs, n in {}..={}",
            shapes.0, shapes.1
        ),
    )
}

fn noiseless_recovery() -> Verdict {
    let inst = synth(50, 30, 200, 5, 2.0, 0.0, 0);
    let cfg = FitConfig::default().with_sigma(1.0).with_ranks(50, 5);
    let model = fit_adaptive_rrr(&inst.x, &inst.y, &cfg).unwrap();
    let rel = (&model.m_hat - &inst.m).norm() / inst.m.norm();
    verdict(rel <= 1e-6, format!("relative error {rel:.2e}"))
}

fn optimal_k2_location() -> Verdict {
    let k2_grid: Vec<usize> = (30..=70).collect();
    let k1_grid: Vec<usize> = (3..=15).map(|i| i * 10).collect();
    // errors[seed][k1][k2]
    let errors: Vec<Vec<Vec<f64>>> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let inst = synth(200, 100, 150, 50, 2.0, 0.25, seed);
            k1_grid
                .iter()
                .map(|&k1| {
                    let s1 = step1_pca_x(&inst.x, 1e-3, Some(k1)).unwrap();
                    // Every k2 with a fixed k1 truncates the same N̂, so decompose it once.
                    let n_hat = inst.y.transpose() * &s1.z_hat / inst.x.nrows() as f64;
                    let svd = SpectralDecomposition::compute(&n_hat);
                    k2_grid
                        .iter()
                        .map(|&k2| {
                            if k2 > k1 {
                                return f64::INFINITY;
                            }
                            (svd.recompose(k2) * &s1.pi_hat - &inst.m).norm()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut best = (f64::INFINITY, 0, 0);
    for (a, &k1) in k1_grid.iter().enumerate() {
        for (b, &k2) in k2_grid.iter().enumerate() {
            let m = mean(&errors.iter().map(|e| e[a][b]).collect::<Vec<_>>());
            if m < best.0 {
                best = (m, k1, k2);
            }
        }
    }
    let (err, k1, k2) = best;
    verdict(
        (45..=55).contains(&k2),
        format!("argmin at k2 = {k2} (k1 = {k1}, mean error {err:.4}); target [45, 55]"),
    )
}

fn rank_adaptivity() -> Verdict {
    let etas = [0.25, 0.5, 1.0, 2.0];
    let means: Vec<f64> = etas
        .iter()
        .map(|&eta| {
            let k2s: Vec<f64> = (0..20u64)
                .into_par_iter()
                .map(|seed| {
                    let inst = synth(200, 150, 150, 10, 2.0, eta, seed);
                    let cfg = FitConfig::default().with_sigma(inst.sigma_noise);
                    fit_adaptive_rrr(&inst.x, &inst.y, &cfg).unwrap().k2 as f64
                })
                .collect();
            mean(&k2s)
        })
        .collect();
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    let drop = means[0] - means[3];
    verdict(
        monotone && drop >= 2.0,
        format!("mean k2 per η {etas:?}: {means:.2?}; drop {drop:.2} (need >= 2, non-increasing)"),
    )
}

fn overfitting_gap() -> Verdict {
    let cfg = ExperimentConfig::from_json(
        r#"{"kind": "compare", "oracle_sigma": true,
            "synth": {"d1": 200, "d2": 150, "n": 150, "rank_m": 10, "omega": 2.0, "eta": 0.4},
            "grids": {"seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]},
            "fit": {"delta": 0.001, "theta": 2.0},
            "baselines": [{"method": "rrr", "rank_list": [1, 2, 3, 4, 5]}]}"#,
    )
    .unwrap();
    let rows = run_compare(&cfg).unwrap();
    let gap = |method: &str| {
        let g: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.report.as_ref().unwrap().gap_out_in)
            .collect();
        mean(&g)
    };
    let (rrr, ada) = (gap("rrr"), gap("adaptive_rrr"));
    verdict(
        rrr >= 3.0 * ada,
        format!(
            "mean gap RRR {rrr:.4} vs adaptive {ada:.4}, ratio {:.2} (need >= 3)",
            rrr / ada
        ),
    )
}

fn mse_scaling() -> Verdict {
    let inst = synth(20, 50, 200, 5, 2.0, 1.0, 0);
    let sizes = [200usize, 400, 800, 1600];
    let excess: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let cfg = FitConfig {
                delta: 1.0 / (n * n) as f64,
                ..FitConfig::default()
            }
            .with_sigma(inst.sigma_noise);
            let risks: Vec<f64> = (0..10u64)
                .into_par_iter()
                .map(|s| {
                    let data = inst.draw(n, 1000 * n as u64 + s);
                    let model = fit_adaptive_rrr(&data.x, &data.y, &cfg).unwrap();
                    inst.excess_risk(&model.m_hat).unwrap()
                })
                .collect();
            mean(&risks)
        })
        .collect();
    let lx: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = excess.iter().map(|e| e.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = cov / var;
    verdict(
        (-1.3..=-0.7).contains(&slope),
        format!(
            "slope {slope:.3}; mean excess {}",
            excess
                .iter()
                .map(|e| format!("{e:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn gap_tail_tradeoff() -> Verdict {
    let tau_of = |omega: f64| 0.9 * (omega - 1.0);
    // Calibrate once at (ω = 2, ℓ = 50).
    let (omega0, ell0) = (2.0, 50usize);
    let tau0 = tau_of(omega0);
    let lam0 = power_law_spectrum(1000, omega0);
    let cut = (ell0 as f64).powf(tau0 / (omega0 - 1.0)).ceil() as usize;
    let c2 = lam0[cut - 1..].iter().sum::<f64>() * (ell0 as f64).powf(tau0);
    let found0 = find_gap_tail_index(&lam0, ell0, tau0, c2).unwrap();
    let c1 = 0.5 * found0.gap * (ell0 as f64).powf(tau0 * omega0 / (omega0 - 1.0) + 1.0);

    let mut failures = Vec::new();
    for &omega in &[2.0, 2.5, 3.0] {
        let lam = power_law_spectrum(1000, omega);
        let tau = tau_of(omega);
        for &ell in &[20usize, 50, 100] {
            let (gap_floor, tail_ceiling) = gap_tail_bounds(ell, tau, omega, c1, c2);
            match find_gap_tail_index(&lam, ell, tau, c2) {
                Ok(r) if r.gap >= gap_floor && r.tail <= tail_ceiling => {}
                Ok(r) => failures.push(format!(
                    "(ω={omega}, ℓ={ell}) gap {:.2e} tail {:.2e}",
                    r.gap, r.tail
                )),
                Err(e) => failures.push(format!("(ω={omega}, ℓ={ell}) {e}")),
            }
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("9/9 grid points within bounds, c1 = {c1:.3e}, c2 = {c2:.3}")
        } else {
            failures.join("; ")
        },
    )
}

fn pure_noise_rejection() -> Verdict {
    let (n, d1, d2) = (150, 200, 100);
    let zeros: usize = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = rng_for(seed, 7);
            let (v, lambdas) = gen_covariance(d1, 2.0, seed).unwrap();
            let x = sample_features(&v, &lambdas, n, &mut rng);
            let y = gaussian_matrix(n, d2, &mut rng);
            let cfg = FitConfig {
                theta: 4.0,
                ..FitConfig::default()
            }
            .with_sigma(1.0);
            usize::from(fit_adaptive_rrr(&x, &y, &cfg).unwrap().k2 == 0)
        })
        .sum();
    verdict(zeros >= 95, format!("k2 = 0 in {zeros}/100 seeds"))
}

fn packing_verification() -> Verdict {
    let cfg = PackingConfig {
        d: 64,
        rho: None,
        subset_size: Some(8),
        xi_small: 0.001,
        lambda_exp: None,
        zeta: 0.5,
        eta_exp: None,
        sigma_eps: 1.0,
        n_samples: 100,
        spectrum: arrr::packing::SpectrumSpec::Flat,
        k_patterns: 64,
        s_size: 8,
        seed: 0,
    };
    let params = PackingParams::derive(&cfg).unwrap();
    let family = match build_family(&params) {
        Ok(f) => f,
        Err(e) => return verdict(false, e.to_string()),
    };
    let report = verify_packing(&family).unwrap();
    let ratio = report.min_distance() / report.psi;
    verdict(
        report.unitarity_residual <= 1e-10 && ratio >= 1.5 && report.max_overlap <= 4,
        format!(
            "unitarity {:.1e}, min distance {ratio:.3} Ψ, max overlap {}",
            report.unitarity_residual, report.max_overlap
        ),
    )
}

fn kl_monte_carlo() -> Verdict {
    let (d2, d, n, sigma) = (5, 8, 100, 1.0);
    let draws = 100_000;
    let mut worst = 0.0_f64;
    for seed in 0..3u64 {
        let mut rng = rng_for(seed, 21);
        let n1 = gaussian_matrix(d2, d, &mut rng) * 0.5;
        let n2 = &n1 + gaussian_matrix(d2, d, &mut rng) * (0.3 / (d2 * d) as f64).sqrt();
        let closed = kl_divergence(&n1, &n2, n, sigma).unwrap();
        // Per-sample log likelihood ratio log p1(y|z) − log p2(y|z), y ~ P1.
        let mut acc = 0.0;
        for _ in 0..draws {
            let z = gaussian_matrix(d, 1, &mut rng);
            let eps = gaussian_matrix(d2, 1, &mut rng) * sigma;
            let y = &n1 * &z + eps;
            acc += ((&y - &n2 * &z).norm_squared() - (&y - &n1 * &z).norm_squared())
                / (2.0 * sigma * sigma);
        }
        let mc = n as f64 * acc / draws as f64;
        worst = worst.max((mc - closed).abs() / closed);
    }
    verdict(
        worst <= 0.05,
        format!(
            "worst relative deviation {:.2}% over 3 pairs",
            100.0 * worst
        ),
    )
}

fn solver_correctness() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    // Ridge against an LU solve of the normal equations, in both regimes.
    let mut worst_ridge = 0.0_f64;
    for (seed, (n, d1, d2)) in [(40, 25, 6), (30, 60, 5)].into_iter().enumerate() {
        let mut rng = rng_for(seed as u64, 31);
        let x = gaussian_matrix(n, d1, &mut rng);
        let y = gaussian_matrix(n, d2, &mut rng);
        let mu = 0.7;
        let mut gram = x.transpose() * &x;
        for i in 0..d1 {
            gram[(i, i)] += mu;
        }
        let oracle = gram.lu().solve(&(x.transpose() * &y)).unwrap().transpose();
        let model = fit_baseline(&BaselineSpec::ridge(mu), &x, &y).unwrap();
        worst_ridge = worst_ridge.max((&model.m_hat - &oracle).norm() / oracle.norm());
    }
    ok &= worst_ridge <= 1e-6;
    notes.push(format!("ridge rel {worst_ridge:.1e}"));

    // LASSO stationarity: gradient g = Xᵀ(Y − XB) equals μ·sign(b) on the
    // support and is bounded by μ off it. After a sweep in which no
    // coordinate moved more than tol, each entry of g is off by at most
    // d1 · max‖x_j‖² · tol.
    let mut rng = rng_for(5, 31);
    let (n, d1, d2) = (50, 40, 4);
    let x = gaussian_matrix(n, d1, &mut rng);
    let b_true = gaussian_matrix(d1, d2, &mut rng).map(|v| if v.abs() > 1.0 { v } else { 0.0 });
    let y = &x * &b_true + gaussian_matrix(n, d2, &mut rng) * 0.5;
    let mu = 5.0;
    let solver = SolverOptions::default();
    let lasso = fit_baseline(
        &BaselineSpec {
            solver,
            ..BaselineSpec::lasso(mu)
        },
        &x,
        &y,
    )
    .unwrap();
    let b = lasso.m_hat.transpose();
    let g = x.transpose() * (&y - &x * &b);
    let col_max = (0..d1)
        .map(|j| x.column(j).norm_squared())
        .fold(0.0, f64::max);
    let slack = d1 as f64 * col_max * solver.tol;
    let mut kkt = 0.0_f64;
    for j in 0..d1 {
        for k in 0..d2 {
            let v = if b[(j, k)] != 0.0 {
                (g[(j, k)] - mu * b[(j, k)].signum()).abs()
            } else {
                (g[(j, k)].abs() - mu).max(0.0)
            };
            kkt = kkt.max(v);
        }
    }
    ok &= lasso.converged && kkt <= slack;
    notes.push(format!(
        "lasso KKT {kkt:.1e} (slack {slack:.1e}, converged {})",
        lasso.converged
    ));

    // Nuclear-norm proximal gradient never increases its objective.
    let mut rng = rng_for(6, 31);
    let x = gaussian_matrix(45, 30, &mut rng);
    let y = &x * gaussian_matrix(30, 3, &mut rng) * gaussian_matrix(3, 12, &mut rng)
        + gaussian_matrix(45, 12, &mut rng);
    let nuc = fit_baseline(&BaselineSpec::nuclear(4.0), &x, &y).unwrap();
    let rises = nuc
        .objective_trace
        .windows(2)
        .filter(|w| w[1] > w[0] * (1.0 + 1e-12))
        .count();
    ok &= rises == 0 && !nuc.objective_trace.is_empty();
    notes.push(format!(
        "nuclear {} iterations, {rises} increases",
        nuc.objective_trace.len()
    ));
    verdict(ok, notes.join("; "))
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_arrr"))
        .args(args)
        .env_remove("ARRR_SEED")
        .output()
        .expect("binary runs")
}

fn write_panel(path: &Path) {
    let mut rng = rng_for(3, 0);
    let (t, assets) = (120, 6);
    let r = gaussian_matrix(t, assets, &mut rng) * 0.01;
    let mut body = String::from("date");
    for a in 0..assets {
        body.push_str(&format!(",A{a}"));
    }
    body.push('\n');
    for i in 0..t {
        body.push_str(&format!("{}", 20000 + i));
        for a in 0..assets {
            body.push_str(&format!(",{:.17e}", r[(i, a)]));
        }
        body.push('\n');
    }
    fs::write(path, body).unwrap();
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_panel(&root.join("panel.csv"));
    let configs = [
        (
            "sweep",
            r#"{"kind": "sweep", "oracle_sigma": true,
            "synth": {"d1": 40, "d2": 20, "n": 50, "rank_m": 4, "omega": 2.0, "eta": 0.3},
            "grids": {"k1_list": [10, 20, 30], "k2_list": [2, 4, 6], "seeds": [0, 1, 2]}}"#,
        ),
        (
            "compare",
            r#"{"kind": "compare", "oracle_sigma": true,
            "synth": {"d1": 40, "d2": 20, "n": 50, "rank_m": 4, "omega": 2.0, "eta": 0.3},
            "grids": {"seeds": [0, 1], "eta_list": [0.2, 0.8]},
            "adaptive": {"theta_list": [1.0, 2.0]},
            "baselines": [{"method": "ridge", "mu_list": [0.1, 1.0]},
                          {"method": "reduced_rank_ridge", "mu_list": [0.1], "rank_list": [2, 4]},
                          {"method": "pcr", "rank_list": [2, 4]},
                          {"method": "lasso", "mu_list": [0.5]},
                          {"method": "nuclear", "mu_list": [1.0]},
                          {"method": "rrr", "rank_list": [1, 3]}]}"#,
        ),
        (
            "rolling",
            r#"{"kind": "rolling",
            "rolling": {"panel": "panel.csv", "lookbacks": [1, 5, 10], "train_len": 40,
                        "valid_len": 15, "test_len": 15, "gap_len": 2},
            "fit": {"delta": 1e-9},
            "baselines": [{"method": "ridge", "mu_list": [0.001, 0.01]}]}"#,
        ),
        (
            "packing",
            r#"{"kind": "packing",
            "packing": {"d": 64, "subset_size": 8, "n_samples": 100, "k_patterns": 64, "s_size": 8}}"#,
        ),
        (
            "angles",
            r#"{"kind": "angles", "angles": {"top": 6},
            "synth": {"d1": 30, "d2": 5, "n": 200, "rank_m": 2, "omega": 2.0, "eta": 0.1},
            "grids": {"seeds": [0, 1]}}"#,
        ),
    ];
    let mut failures = Vec::new();
    for (kind, json) in configs {
        let cfg_path = root.join(format!("{kind}.json"));
        fs::write(&cfg_path, json).unwrap();
        let mut outputs = Vec::new();
        for (run, jobs) in [(0, "1"), (1, "4")] {
            let out = root.join(format!("{kind}_{run}"));
            let o = cli(&[
                kind,
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--jobs",
                jobs,
            ]);
            if !o.status.success() {
                failures.push(format!(
                    "{kind}: exit {:?} {}",
                    o.status.code(),
                    String::from_utf8_lossy(&o.stderr)
                ));
                break;
            }
            outputs.push(fs::read(out.join("results.csv")).unwrap());
        }
        if outputs.len() == 2 && outputs[0] != outputs[1] {
            failures.push(format!("{kind}: results.csv differs"));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "all 5 experiment kinds byte-identical across re-runs (1 and 4 workers)".to_string()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [(&str, Check, Duration); 12] = [
        (
            "whitening exactness",
            whitening_exactness,
            Duration::from_secs(5),
        ),
        (
            "noiseless recovery",
            noiseless_recovery,
            Duration::from_secs(1),
        ),
        (
            "optimal k2 location",
            optimal_k2_location,
            Duration::from_secs(120),
        ),
        ("rank adaptivity", rank_adaptivity, Duration::from_secs(120)),
        (
            "overfitting gap ordering",
            overfitting_gap,
            Duration::from_secs(60),
        ),
        ("MSE scaling", mse_scaling, Duration::from_secs(120)),
        (
            "gap/tail tradeoff",
            gap_tail_tradeoff,
            Duration::from_secs(5),
        ),
        (
            "pure-noise rejection",
            pure_noise_rejection,
            Duration::from_secs(10),
        ),
        (
            "packing verification",
            packing_verification,
            Duration::from_secs(30),
        ),
        (
            "KL closed form vs Monte Carlo",
            kl_monte_carlo,
            Duration::from_secs(30),
        ),
        (
            "baseline solver correctness",
            solver_correctness,
            Duration::from_secs(30),
        ),
        ("CLI determinism", determinism, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let in_time = took <= *limit;
        let pass = v.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time {
            String::new()
        } else {
            " [over time limit]".to_string()
        };
        println!(
            "criterion {:>2} {} {name}: {} ({:.2}s, limit {}s){timing}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
