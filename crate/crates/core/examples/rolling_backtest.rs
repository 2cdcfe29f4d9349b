//! Rolling backtest on a synthetic return panel with a weak momentum
//! signal: per-fold and glued out-of-sample scores.
//!
//!     cargo run --release --example rolling_backtest

use arrr::dataio::{make_features, rolling_splits, save_panel_csv, ReturnPanel};
use arrr::experiment::{run_rolling, sort_rows, ExperimentConfig};
use arrr::matrix::{gaussian_matrix, rng_for, DenseMatrix};

fn main() -> arrr::Result<()> {
    let (t, assets) = (400, 20);
    let shocks = gaussian_matrix(t, assets, &mut rng_for(11, 0)) * 0.01;
    let mut r = DenseMatrix::zeros(t, assets);
    for i in 0..t {
        for a in 0..assets {
            let prev = if i > 0 { r[(i - 1, a)] } else { 0.0 };
            r[(i, a)] = 0.2 * prev + shocks[(i, a)];
        }
    }
    let panel = ReturnPanel::new(
        (0..t).map(|i| format!("{:04}", i)).collect(),
        (0..assets).map(|a| format!("S{a:02}")).collect(),
        r,
    )?;
    let dir = std::env::temp_dir().join("arrr_rolling_example");
    std::fs::create_dir_all(&dir).map_err(|e| arrr::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let panel_path = dir.join("panel.csv");
    save_panel_csv(&panel, &panel_path)?;

    let features = make_features(&panel, &[1, 5, 10], 1)?;
    let folds = rolling_splits(features.x.nrows(), 150, 50, 50, 5)?;
    println!(
        "{} feature rows x {} features, {} folds",
        features.x.nrows(),
        features.x.ncols(),
        folds.len()
    );

    let cfg = ExperimentConfig::from_json(&format!(
        r#"{{"kind": "rolling",
            "rolling": {{"panel": {:?}, "lookbacks": [1, 5, 10], "horizon": 1,
                         "train_len": 150, "valid_len": 50, "test_len": 50, "gap_len": 5}},
            "adaptive": {{"delta_list": [1e-5, 1e-4, 1e-3]}},
            "baselines": [{{"method": "ridge", "mu_list": [0.01, 0.1, 1.0, 10.0]}},
                          {{"method": "pcr", "rank_list": [1, 3, 10]}}]}}"#,
        panel_path
    ))?;
    let mut rows = run_rolling(&cfg)?;
    sort_rows(&mut rows);
    for r in &rows {
        let rep = r.report.as_ref().unwrap();
        println!(
            "{:<14} fold {:>3}  r2_out {:>9.5}  corr_out {:>8.5}  {}",
            r.method,
            r.fold.label(),
            rep.r2_out,
            rep.corr_out,
            r.hyper
        );
    }
    Ok(())
}
