//! Fit the adaptive estimator on a synthetic instance, score it on a fresh
//! draw, and round-trip the model through a directory.
//!
//!     cargo run --example fit_predict

use arrr::estimator::{load_model, save_model};
use arrr::metrics::evaluate;
use arrr::synth::{SynthConfig, SyntheticInstance};
use arrr::{fit_adaptive_rrr, FitConfig, LinearPredictor};

fn main() -> arrr::Result<()> {
    let inst = SyntheticInstance::generate(&SynthConfig {
        d1: 200,
        d2: 150,
        n: 150,
        rank_m: 10,
        omega: 2.0,
        eta: 0.25,
        upsilon: 1.0,
        seed: 7,
    })?;
    let test = inst.draw(500, 99);

    // Noise level estimated from the data.
    let model = fit_adaptive_rrr(&inst.x, &inst.y, &FitConfig::default())?;
    println!(
        "k1 = {}, k2 = {}, sigma used {:.4} (true {:.4}), threshold {:.4}",
        model.k1, model.k2, model.sigma_eps_used, inst.sigma_noise, model.threshold_used
    );

    let report = evaluate(
        &model,
        (&inst.x, &inst.y),
        (&test.x, &test.y),
        Some(&inst.m),
    )?;
    println!(
        "normalized MSE in {:.4} / out {:.4}, corr out {:.4}, ‖M − M̂‖_F {:.4}",
        report.mse_in,
        report.mse_out,
        report.corr_out,
        report.recon_error.unwrap_or(f64::NAN)
    );
    println!("excess risk {:.4e}", inst.excess_risk(&model.m_hat)?);

    let dir = std::env::temp_dir().join("arrr_fit_predict_model");
    save_model(&model, &dir)?;
    let loaded = load_model(&dir)?;
    let same = loaded.predict(&test.x)? == model.predict(&test.x)?;
    println!(
        "saved to {}, reloaded predictions identical: {same}",
        dir.display()
    );
    Ok(())
}
