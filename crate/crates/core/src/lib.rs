//! Photon pair creation from mirror phonons in a closed optomechanical cavity.
//!
//! The crate models one cavity mode (`a`, frequency `omega_c`) coupled to one
//! mechanical mode (`b`, frequency `omega_m`) through the radiation-pressure
//! term `g N_a (b + b†)` and the pair-creation term `(g/2)(a² + a†²)(b + b†)`,
//! all in a truncated two-mode Fock space with `ħ = k_B = 1`.
//!
//! Layout:
//!
//! - [`fock`]: basis, initial states, ladder operators.
//! - [`hamiltonians`]: the full Hamiltonian, its rotating-wave variant, parity
//!   projectors and the resonant subspaces `D_k`.
//! - [`propagate`]: spectral, Krylov and resonant-block time evolution.
//! - [`observables`]: expectation values, reduced densities, entropy, `g²`.
//! - [`semiclassical`]: the cubic-potential reduction for `⟨N_a⟩`.
//! - [`analysis`]: efficiencies, scans and fits.
//! - [`experiments`]: typed drivers for the standard scenarios.
//! - [`runner`]: the `xdce` experiment runner (configs, CSV, manifests).
//!
//! Runnable walkthroughs of every capability live in `examples/`.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod hamiltonians;
pub mod linalg;
pub mod observables;
pub mod propagate;
pub mod runner;
pub mod semiclassical;
pub mod sparse;

pub use error::{Error, Result};
pub use fock::{FockBasis, LadderOps, ModelParams, StateVector};
pub use hamiltonians::{HamiltonianSet, Sector, SubspaceDk};
pub use num_complex::Complex64;
