//! Coherent mirror states: stationary photon number against the initial
//! displacement and the long-time efficiency.

use xdce::analysis::fit_power_law;
use xdce::experiments::{run_stationary, PhononState, StationaryRequest};

fn main() -> xdce::Result<()> {
    let alphas = [1.0, 2.0, 3.0, 4.0];
    let mut photons = Vec::new();
    println!("{:>6} {:>8} {:>11} {:>10} {:>9}", "alpha", "cutoffs", "<N_a>_stat", "rms", "eta_mean");
    for &alpha in &alphas {
        let mut req = StationaryRequest::new(0.01, PhononState::Coherent { alpha });
        req.samples = 500;
        let r = run_stationary(&req)?;
        println!(
            "{:>6.1} {:>8} {:>11.4} {:>10.4} {:>9.4}",
            alpha,
            format!("{}x{}", r.cutoffs.na_max, r.cutoffs.nb_max),
            r.photons.mean,
            r.photons.rms,
            r.efficiency.eta_mean
        );
        photons.push(r.photons.mean);
    }
    let fit = fit_power_law(&alphas, &photons)?;
    println!("<N_a> ~ alpha^{:.3} (R^2 {:.4})", fit.param("exponent"), fit.r_squared);
    Ok(())
}
