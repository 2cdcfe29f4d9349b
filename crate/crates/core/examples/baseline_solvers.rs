//! Fit every baseline on one instance and report fit statistics.
//!
//!     cargo run --release --example baseline_solvers

use arrr::baselines::{fit_baseline, BaselineSpec};
use arrr::metrics::evaluate;
use arrr::synth::{SynthConfig, SyntheticInstance};

fn main() -> arrr::Result<()> {
    let inst = SyntheticInstance::generate(&SynthConfig {
        d1: 60,
        d2: 30,
        n: 80,
        rank_m: 4,
        omega: 2.0,
        eta: 0.3,
        upsilon: 1.0,
        seed: 1,
    })?;
    let test = inst.draw(400, 2);
    let specs = [
        BaselineSpec::ridge(0.05),
        BaselineSpec::rrr(4),
        BaselineSpec::reduced_rank_ridge(0.05, 4),
        BaselineSpec::pcr(10),
        BaselineSpec::lasso(0.02),
        BaselineSpec::nuclear(0.05),
    ];
    for spec in &specs {
        let model = fit_baseline(spec, &inst.x, &inst.y)?;
        let rep = evaluate(
            &model,
            (&inst.x, &inst.y),
            (&test.x, &test.y),
            Some(&inst.m),
        )?;
        println!(
            "{:<20} mse out {:.4}  rank {:>3}  iterations {:>5}  converged {}",
            spec.method.name(),
            rep.mse_out,
            rep.recovered_rank,
            model.iterations_used,
            model.converged
        );
    }
    Ok(())
}
