//! Search power-law spectra for an index with a large gap and a small tail.
//!
//!     cargo run --example gap_tail_search

use arrr::spectral::{find_gap_tail_index, gap_tail_bounds};
use arrr::synth::power_law_spectrum;

fn main() -> arrr::Result<()> {
    let (c1, c2) = (0.05, 0.6);
    for &omega in &[2.0, 2.5, 3.0] {
        let tau = 0.9 * (omega - 1.0);
        let lambdas = power_law_spectrum(1000, omega);
        for &ell in &[20usize, 50, 100] {
            let hit = find_gap_tail_index(&lambdas, ell, tau, c2)?;
            let (gap_floor, tail_ceiling) = gap_tail_bounds(ell, tau, omega, c1, c2);
            println!(
                "omega {omega:<4} ell {ell:<4} index {:<4} gap {:.3e} (floor {:.3e})  tail {:.3e} (ceiling {:.3e})",
                hit.index, hit.gap, gap_floor, hit.tail, tail_ceiling
            );
        }
    }
    Ok(())
}
