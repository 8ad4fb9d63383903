//! Property tests for the physical invariants on small random systems.

use num_complex::Complex64;
use proptest::prelude::*;
use xdce::analysis::{record, RecordOptions};
use xdce::fock::{phonon_superposition, product_state, FockBasis, ModelParams, StateVector};
use xdce::hamiltonians::{build_full, build_rwa, parity_projector, Sector};
use xdce::observables::{reduced_density, state_entropy, Subsystem};
use xdce::propagate::{uniform_grid, KrylovPropagator, Propagator, ResonantPropagator, SpectralPropagator};

fn random_state(basis: &FockBasis, re: &[f64], im: &[f64]) -> StateVector {
    let amps: Vec<Complex64> = (0..basis.dim()).map(|i| Complex64::new(re[i % re.len()] + 1e-3, im[i % im.len()])).collect();
    StateVector::from_amplitudes(basis.clone(), amps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hamiltonians_are_hermitian_and_keep_parity(na in 2usize..9, nb in 1usize..6, g in 0.001f64..0.1) {
        let params = ModelParams::resonant(g).unwrap();
        let basis = FockBasis::new(na, nb).unwrap();
        let set = build_full(&params, &basis).unwrap();
        prop_assert_eq!(set.h.hermiticity_defect(), 0.0);
        prop_assert_eq!(build_rwa(&params, &basis).hermiticity_defect(), 0.0);
        let even = parity_projector(&basis, Sector::Even);
        prop_assert!(set.h.commutator(&even).max_abs() == 0.0);
    }

    #[test]
    fn evolution_conserves_norm_energy_and_parity(
        n in 0usize..3, k in 1usize..4, t in 1.0f64..800.0,
        re in prop::collection::vec(-1.0f64..1.0, 4), im in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let params = ModelParams::resonant(0.01).unwrap();
        let basis = FockBasis::new(2 * n + 2 * k + 6, k + n + 3).unwrap();
        let set = build_full(&params, &basis).unwrap();
        let product = product_state(&basis, 2 * n, k).unwrap();
        let coeffs: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a + 1.5, *b)).collect();
        let mixed = phonon_superposition(&basis, &coeffs).unwrap();
        for psi0 in [product, mixed] {
            let prop = SpectralPropagator::new(&set.h, &psi0, 12_000).unwrap();
            let s = record(&prop, &set.h, &uniform_grid(t, 20), RecordOptions::default()).unwrap();
            prop_assert!(s.invariants.norm_drift <= 1e-9);
            prop_assert!(s.invariants.energy_drift <= 1e-8);
            prop_assert!(s.invariants.parity_leakage <= 1e-10);
            prop_assert!(s.invariants.quanta_drift <= 0.05);
        }
    }

    #[test]
    fn krylov_agrees_with_spectral(k in 1usize..4, t in 1.0f64..500.0) {
        let params = ModelParams::resonant(0.02).unwrap();
        let basis = FockBasis::new(2 * k + 8, k + 4).unwrap();
        let set = build_full(&params, &basis).unwrap();
        let psi0 = product_state(&basis, 0, k).unwrap();
        let exact = SpectralPropagator::new(&set.h, &psi0, 12_000).unwrap().state_at(t).unwrap();
        let kry = KrylovPropagator::new(std::sync::Arc::new(set.h.clone()), &psi0, 24, 5.0, 1e-12).unwrap();
        let approx = kry.state_at(t).unwrap();
        let gap = (1.0 - exact.inner(&approx).norm()).abs();
        prop_assert!(gap <= 1e-9, "overlap defect {}", gap);
    }

    #[test]
    fn resonant_chains_match_rwa_spectral(
        re in prop::collection::vec(0.0f64..1.0, 5), t in 1.0f64..2000.0,
    ) {
        let params = ModelParams::resonant(0.01).unwrap();
        let basis = FockBasis::new(14, 6).unwrap();
        let coeffs: Vec<Complex64> = re.iter().map(|a| Complex64::new(*a + 0.1, 0.0)).collect();
        let psi0 = phonon_superposition(&basis, &coeffs).unwrap();
        let h = build_rwa(&params, &basis);
        let a = SpectralPropagator::new(&h, &psi0, 12_000).unwrap().state_at(t).unwrap();
        let b = ResonantPropagator::new(&params, &psi0).unwrap().state_at(t).unwrap();
        let gap = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        prop_assert!(gap <= 1e-10);
    }

    #[test]
    fn reduced_densities_are_states(
        na in 1usize..6, nb in 1usize..6,
        re in prop::collection::vec(-1.0f64..1.0, 7), im in prop::collection::vec(-1.0f64..1.0, 5),
    ) {
        let basis = FockBasis::new(na, nb).unwrap();
        let psi = random_state(&basis, &re, &im);
        let a = reduced_density(&psi, Subsystem::Photon);
        let b = reduced_density(&psi, Subsystem::Phonon);
        prop_assert!(a.validate().is_ok());
        prop_assert!(b.validate().is_ok());
        // both sides of a pure state carry the same entropy
        let sa = xdce::observables::entanglement_entropy(&a).unwrap();
        let sb = xdce::observables::entanglement_entropy(&b).unwrap();
        prop_assert!((sa - sb).abs() <= 1e-9);
        prop_assert!((state_entropy(&psi).unwrap() - sa).abs() <= 1e-9);
        prop_assert!(sa <= ((na.min(nb) + 1) as f64).ln() + 1e-9);
    }
}
