//! Conservation checks on a full-Hamiltonian run: norm, energy, photon-number
//! parity, free quanta and the reduced densities.

use xdce::analysis::{record, InvariantLimits, RecordOptions};
use xdce::fock::{product_state, FockBasis, ModelParams};
use xdce::hamiltonians::build_full;
use xdce::observables::{reduced_density, Subsystem};
use xdce::propagate::{uniform_grid, KrylovPropagator, Propagator, SpectralPropagator, DEFAULT_SPECTRAL_LIMIT};

fn main() -> xdce::Result<()> {
    let params = ModelParams::resonant(0.01)?;
    let basis = FockBasis::new(26, 13)?;
    let set = build_full(&params, &basis)?;
    let psi0 = product_state(&basis, 2, 7)?;
    let times = uniform_grid(2000.0, 200);
    let limits = InvariantLimits::default();

    let spectral = SpectralPropagator::new(&set.h, &psi0, DEFAULT_SPECTRAL_LIMIT)?;
    let krylov = KrylovPropagator::new(std::sync::Arc::new(set.h.clone()), &psi0, 30, 5.0, 1e-12)?;
    let props: [&dyn Propagator; 2] = [&spectral, &krylov];
    for prop in props {
        let s = record(prop, &set.h, &times, RecordOptions::default())?;
        let r = s.invariants;
        println!(
            "{:>8}: norm {:.1e}  <H> {:.1e}  parity {:.1e}  quanta {:.2e}  violations {:?}",
            prop.method().to_string(),
            r.norm_drift,
            r.energy_drift,
            r.parity_leakage,
            r.quanta_drift,
            limits.violations(&r)
        );
    }

    let psi = spectral.state_at(1234.5)?;
    let diff = krylov.state_at(1234.5)?;
    let gap: f64 = psi.amplitudes().iter().zip(diff.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("spectral vs Krylov at t = 1234.5: {gap:.1e}");
    for sub in [Subsystem::Photon, Subsystem::Phonon] {
        let rho = reduced_density(&psi, sub);
        println!("{sub:?} reduced density: trace {:.12}, valid {}", rho.trace(), rho.validate().is_ok());
    }
    Ok(())
}
