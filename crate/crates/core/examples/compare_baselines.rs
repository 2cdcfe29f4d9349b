//! Validated comparison of the adaptive estimator against the baselines
//! across noise levels: test error and rank of the selected fits.
//!
//!     cargo run --release --example compare_baselines

use arrr::experiment::{run_compare, sort_rows, ExperimentConfig};
use arrr::metrics::{aggregate, Stat};

fn main() -> arrr::Result<()> {
    let cfg = ExperimentConfig::from_json(
        r#"{"kind": "compare", "oracle_sigma": true,
            "synth": {"d1": 200, "d2": 150, "n": 150, "rank_m": 10, "omega": 2.0, "eta": 0.4},
            "grids": {"seeds": [0, 1, 2], "eta_list": [0.25, 1.0]},
            "adaptive": {"theta_list": [1.0, 1.5, 2.0, 3.0]},
            "baselines": [
                {"method": "ridge", "mu_list": [0.01, 0.1, 1.0, 10.0]},
                {"method": "reduced_rank_ridge", "mu_list": [0.1, 1.0], "rank_list": [2, 5, 10]},
                {"method": "rrr", "rank_list": [1, 2, 3, 4, 5]},
                {"method": "pcr", "rank_list": [5, 10, 20]},
                {"method": "lasso", "mu_list": [0.5, 2.0]},
                {"method": "nuclear", "mu_list": [1.0, 5.0]}
            ]}"#,
    )?;
    let mut rows = run_compare(&cfg)?;
    sort_rows(&mut rows);
    println!(
        "{:<20}{:>6}{:>12}{:>12}{:>10}{:>8}",
        "method", "eta", "mse out", "recon", "gap", "rank"
    );
    let mut keys: Vec<(String, u64)> = rows
        .iter()
        .map(|r| (r.method.clone(), r.eta.unwrap().to_bits()))
        .collect();
    keys.dedup();
    for (method, eta_bits) in keys {
        let reports: Vec<_> = rows
            .iter()
            .filter(|r| r.method == method && r.eta.unwrap().to_bits() == eta_bits)
            .filter_map(|r| r.report.clone())
            .collect();
        let agg = aggregate(&reports, Stat::Mean)?;
        println!(
            "{method:<20}{:>6}{:>12.4}{:>12.4}{:>10.4}{:>8.1}",
            f64::from_bits(eta_bits),
            agg.mse_out,
            agg.recon_error.unwrap_or(f64::NAN),
            agg.gap_out_in,
            agg.recovered_rank
        );
    }
    Ok(())
}
