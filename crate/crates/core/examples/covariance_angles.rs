//! How well the sample covariance recovers the leading true eigenvectors
//! as the sample grows.
//!
//!     cargo run --release --example covariance_angles

use arrr::experiment::angle_rows;
use arrr::matrix::rng_for;
use arrr::synth::{gen_covariance, sample_features};

fn main() -> arrr::Result<()> {
    let d1 = 200;
    let top = 8;
    let (v, lambdas) = gen_covariance(d1, 2.0, 3)?;
    for n in [50, 150, 1000, 10_000] {
        let x = sample_features(&v, &lambdas, n, &mut rng_for(n as u64, 0));
        let a = angle_rows(&x, &v, top)?;
        let diag: Vec<String> = (0..top).map(|i| format!("{:.3}", a[(i, i)])).collect();
        println!("n = {n:>6}: |cos| on the diagonal {}", diag.join(" "));
    }
    Ok(())
}
