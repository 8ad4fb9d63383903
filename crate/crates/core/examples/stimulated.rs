//! Stimulated and inhibited pair creation: start from `|2n, 50⟩` and compare
//! the quantum efficiency with the semiclassical bound.

use xdce::experiments::{stimulated_point, Engine, EngineOptions};

fn main() -> xdce::Result<()> {
    let k0 = 50;
    println!("{:>6} {:>9} {:>9} {:>9} {:>9}", "pairs", "fraction", "eta_max", "eta_mean", "eta_sc");
    for pairs in [0, 1, 2, 5, 10, 20, 40, 60, 70, 80, 100] {
        let p = stimulated_point(0.01, k0, pairs, 5000.0, 2000, EngineOptions::with(Engine::Rwa))?;
        println!(
            "{:>6} {:>9.3} {:>9.4} {:>9.4} {:>9.4}",
            pairs, p.photon_fraction, p.efficiency.eta_max, p.efficiency.eta_mean, p.semiclassical.eta_max
        );
    }
    Ok(())
}
