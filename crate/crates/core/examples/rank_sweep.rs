//! Reconstruction error over a (k1, k2) grid at two noise levels, printed
//! as a table per noise level.
//!
//!     cargo run --release --example rank_sweep

use std::collections::BTreeMap;

use arrr::experiment::{run_sweep, ExperimentConfig};

fn main() -> arrr::Result<()> {
    let cfg = ExperimentConfig::from_json(
        r#"{"kind": "sweep", "oracle_sigma": true,
            "synth": {"d1": 200, "d2": 100, "n": 150, "rank_m": 50, "omega": 2.0, "eta": 0.25},
            "grids": {"k1_list": [20, 40, 60, 80, 100, 120, 140],
                      "k2_list": [5, 10, 20, 30, 40, 50, 60],
                      "eta_list": [0.25, 1.0],
                      "seeds": [0, 1, 2]}}"#,
    )?;
    let rows = run_sweep(&cfg)?;
    // (eta bits, k1, k2) -> errors over seeds
    let mut cells: BTreeMap<(u64, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        let key = (r.eta.unwrap().to_bits(), r.k1.unwrap(), r.k2.unwrap());
        cells
            .entry(key)
            .or_default()
            .push(r.report.as_ref().unwrap().recon_error.unwrap());
    }
    for eta in &cfg.grids.eta_list {
        println!("\neta = {eta}: mean ‖M − M̂‖_F (rows k1, columns k2)");
        print!("{:>6}", "");
        for k2 in &cfg.grids.k2_list {
            print!("{k2:>8}");
        }
        println!();
        for &k1 in &cfg.grids.k1_list {
            print!("{k1:>6}");
            for &k2 in &cfg.grids.k2_list {
                match cells.get(&(eta.to_bits(), k1, k2)) {
                    Some(v) => print!("{:>8.3}", v.iter().sum::<f64>() / v.len() as f64),
                    None => print!("{:>8}", "-"),
                }
            }
            println!();
        }
    }
    Ok(())
}
