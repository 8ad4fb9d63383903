//! Sensitivity to detuning from parametric resonance: `η_max(δω)` for one
//! phonon against the Lorentzian `2 / (2 + (δω/g)²)`, and the half width for
//! a few phonon numbers.

use xdce::analysis::{chain_eta_max, detuning_scan, fit_lorentzian};

fn main() -> xdce::Result<()> {
    let g = 0.01;
    let deltas: Vec<f64> = (-80..=80).map(|i| i as f64 * 0.1 * g).collect();
    let scan = detuning_scan(1, &deltas, g, 3000.0, 12_000)?;
    println!("{:>7} {:>9} {:>11}", "dw/g", "eta_max", "Lorentzian");
    for (d, e) in scan.deltas.iter().zip(&scan.eta_max).step_by(10) {
        let x = d / g;
        println!("{:>7.2} {:>9.4} {:>11.4}", x, e, 2.0 / (2.0 + x * x));
    }
    let fit = fit_lorentzian(&scan.deltas, &scan.eta_max)?;
    println!(
        "half width {:.4} g (interpolated), {:.4} g (fit), expected sqrt(2) = {:.4}",
        scan.half_width / g,
        fit.param("half_width") / g,
        2f64.sqrt()
    );

    for k in [2, 5, 10] {
        let grid: Vec<f64> = (-60..=60).map(|i| i as f64 * 0.5 * g).collect();
        let s = detuning_scan(k, &grid, g, 3000.0, 12_000)?;
        let resonant = chain_eta_max(g, 0.0, k, 3000.0, 12_000)?;
        println!("k = {k:>2}: eta_max(0) = {resonant:.4}, half width {:.3} g", s.half_width / g);
    }
    Ok(())
}
