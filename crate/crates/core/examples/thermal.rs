//! Thermal-like mirror state: entropy saturation, photon statistics and the
//! Gibbs temperatures of both modes after equilibration.
//!
//! ```text
//! cargo run --release --example thermal -- 4
//! ```

use xdce::experiments::{run_stationary, PhononState, StationaryRequest};

fn main() -> xdce::Result<()> {
    let mean: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2.0);
    let state = PhononState::thermal_with_mean(mean, 2.0);
    let mut req = StationaryRequest::new(0.01, state);
    req.entropy = true;
    req.g2 = true;
    req.distributions = true;
    let r = run_stationary(&req)?;

    println!("initial <N_b> = {:.3}, cutoffs {}x{}", r.initial_phonons, r.cutoffs.na_max, r.cutoffs.nb_max);
    println!("stationary <N_a> = {:.3} (rms {:.3}), eta_mean = {:.3}", r.photons.mean, r.photons.rms, r.efficiency.eta_mean);
    if let (Some(a), Some(b)) = (r.g2_standard, r.g2_unsquared) {
        println!("g2: {:.3} (normalized by <N>^2), {:.3} (by <N>)", a.mean, b.mean);
    }
    if let Some(f) = &r.entropy_fit {
        println!("S(t) = {:.3} (1 - exp(-t / {:.1})), R^2 {:.4}", f.param("s_inf"), f.param("tau"), f.r_squared);
    }
    if let (Some(a), Some(b)) = (&r.beta_photon, &r.beta_phonon) {
        println!("beta_a = {:.4}, beta_b = {:.4}, ratio {:.3}", a.param("beta"), b.param("beta"), a.param("beta") / b.param("beta"));
    }
    Ok(())
}
