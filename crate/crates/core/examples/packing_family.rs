//! Build a lower-bound packing family and print what the verifier measured.
//!
//!     cargo run --release --example packing_family

use arrr::packing::{
    build_family, kl_divergence, verify_packing, PackingConfig, PackingParams, SpectrumSpec,
};

fn main() -> arrr::Result<()> {
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
        spectrum: SpectrumSpec::Flat,
        k_patterns: 64,
        s_size: 8,
        seed: 0,
    };
    let params = PackingParams::derive(&cfg)?;
    println!(
        "rho = {:.4}, contested columns {}..={}, Psi = {:.4e}",
        params.rho,
        params.t_lo,
        params.t_hi,
        params.psi()
    );
    let family = build_family(&params)?;
    let report = verify_packing(&family)?;
    println!("family size {}", report.family_size);
    println!("unitarity residual {:.2e}", report.unitarity_residual);
    println!(
        "min pairwise distance {:.3} Psi",
        report.min_distance() / report.psi
    );
    println!("max support overlap {}", report.max_overlap);
    println!(
        "measured c8 = {:.4}, c9 = {:.4}",
        report.measured_constants.c8, report.measured_constants.c9
    );
    println!("all checks pass: {}", report.pass);

    let (a, b) = (family.member_matrix(0), family.member_matrix(1));
    let kl = kl_divergence(&a, &b, params.n_samples, params.sigma_eps)?;
    println!(
        "KL between members 0 and 1 at n = {}: {kl:.4e}",
        params.n_samples
    );
    Ok(())
}
