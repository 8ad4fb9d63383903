//! Hamiltonian matrices in the truncated Fock basis.
//!
//! All matrices are assembled element by element from closed forms, inserting
//! each off-diagonal pair `(i, j)`, `(j, i)` with the same value, so they are
//! exactly symmetric. Couplings whose target lies outside the basis are
//! dropped, which is the usual truncation of `a†` and `b†` at the top level.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockBasis, ModelParams};
use crate::sparse::SparseMatrix;

/// Photon-number parity sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Even,
    Odd,
}

impl Sector {
    pub fn of(photons: usize) -> Sector {
        if photons % 2 == 0 {
            Sector::Even
        } else {
            Sector::Odd
        }
    }

    pub fn contains(self, photons: usize) -> bool {
        Sector::of(photons) == self
    }

    pub fn opposite(self) -> Sector {
        match self {
            Sector::Even => Sector::Odd,
            Sector::Odd => Sector::Even,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HamiltonianSet {
    pub params: ModelParams,
    pub basis: FockBasis,
    pub h0: SparseMatrix,
    pub v_om: SparseMatrix,
    pub v_dce: SparseMatrix,
    pub v_rwa: SparseMatrix,
    /// `h0 + v_om + v_dce`
    pub h: SparseMatrix,
    /// `h0 + v_rwa`
    pub h_rwa: SparseMatrix,
}

fn push_pair(t: &mut Vec<(usize, usize, f64)>, i: usize, j: usize, v: f64) {
    t.push((i, j, v));
    t.push((j, i, v));
}

fn free_diagonal(params: &ModelParams, basis: &FockBasis) -> SparseMatrix {
    let diag: Vec<f64> = basis
        .states()
        .map(|(n, k)| params.omega_c * n as f64 + params.omega_m * k as f64)
        .collect();
    SparseMatrix::from_diagonal(&diag)
}

/// `g N_a (b + b†)`: couples `(n, k)` and `(n, k+1)` with `g n √(k+1)`.
fn optomechanical(params: &ModelParams, basis: &FockBasis) -> SparseMatrix {
    let mut t = Vec::new();
    for (n, k) in basis.states() {
        if n > 0 && k < basis.nb_max() {
            let v = params.g * n as f64 * ((k + 1) as f64).sqrt();
            push_pair(&mut t, basis.index(n, k), basis.index(n, k + 1), v);
        }
    }
    SparseMatrix::from_triplets(basis.dim(), basis.dim(), t)
}

/// `(g/2)(a² + a†²)(b + b†)`, or only its resonant part `(g/2)(a² b† + a†² b)`.
fn pair_creation(params: &ModelParams, basis: &FockBasis, resonant_only: bool) -> SparseMatrix {
    let half_g = 0.5 * params.g;
    let mut t = Vec::new();
    for (n, k) in basis.states() {
        if n + 2 > basis.na_max() {
            continue;
        }
        let pair = ((n + 1) as f64 * (n + 2) as f64).sqrt();
        let from = basis.index(n, k);
        // a†² b: one phonon becomes a photon pair
        if k > 0 {
            push_pair(&mut t, from, basis.index(n + 2, k - 1), half_g * pair * (k as f64).sqrt());
        }
        // a†² b†: counter-rotating
        if !resonant_only && k < basis.nb_max() {
            push_pair(&mut t, from, basis.index(n + 2, k + 1), half_g * pair * ((k + 1) as f64).sqrt());
        }
    }
    SparseMatrix::from_triplets(basis.dim(), basis.dim(), t)
}

pub fn build_full(params: &ModelParams, basis: &FockBasis) -> Result<HamiltonianSet> {
    let h0 = free_diagonal(params, basis);
    let v_om = optomechanical(params, basis);
    let v_dce = pair_creation(params, basis, false);
    let v_rwa = pair_creation(params, basis, true);
    let h = h0.add(&v_om).add(&v_dce);
    let h_rwa = h0.add(&v_rwa);
    for m in [&h, &h_rwa] {
        let defect = m.hermiticity_defect();
        if defect != 0.0 {
            return Err(Error::NotHermitian(defect));
        }
    }
    Ok(HamiltonianSet { params: *params, basis: *basis, h0, v_om, v_dce, v_rwa, h, h_rwa })
}

/// `H0 + (g/2)(a² b† + a†² b)`.
pub fn build_rwa(params: &ModelParams, basis: &FockBasis) -> SparseMatrix {
    free_diagonal(params, basis).add(&pair_creation(params, basis, true))
}

/// Diagonal projector onto one photon-parity sector.
pub fn parity_projector(basis: &FockBasis, sector: Sector) -> SparseMatrix {
    let diag: Vec<f64> = basis.states().map(|(n, _)| if sector.contains(n) { 1.0 } else { 0.0 }).collect();
    SparseMatrix::from_diagonal(&diag)
}

/// A chain of Fock states with a fixed number of free quanta `q = n + 2m`
/// (photons `n`, phonons `m`), ordered by increasing photon number.
///
/// Pair creation without counter-rotating terms only connects neighbours of
/// this chain, so the restriction `w` is tridiagonal:
/// off-diagonals `(g/2) √((n+1)(n+2)m)` between `(n, m)` and `(n+2, m-1)`,
/// diagonal `δω · m`. The free energy `omega_c q` common to the whole chain is
/// kept separately in [`SubspaceDk::offset`].
///
/// For even `q = 2k` with no photons in the first state this is the resonant
/// subspace `D_k = span{|2j, k-j⟩}` and the off-diagonals are `(g/2) v_j` with
/// `v_j = √(2j(2j-1)(k+1-j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDk {
    quanta: usize,
    states: Vec<(usize, usize)>,
    diagonal: Vec<f64>,
    off_diagonal: Vec<f64>,
    offset: f64,
    detuned: bool,
}

impl SubspaceDk {
    /// The chain for `quanta` free quanta, restricted to states inside
    /// `basis` when one is given.
    pub fn manifold(params: &ModelParams, quanta: usize, basis: Option<&FockBasis>) -> SubspaceDk {
        let states: Vec<(usize, usize)> = (0..=quanta / 2)
            .rev()
            .map(|m| (quanta - 2 * m, m))
            .filter(|&(n, m)| basis.is_none_or(|b| b.contains(n, m)))
            .collect();
        let diagonal = states.iter().map(|&(_, m)| params.delta_omega * m as f64).collect();
        let off_diagonal = states
            .windows(2)
            .map(|w| {
                let (n, m) = w[0];
                0.5 * params.g * ((n + 1) as f64 * (n + 2) as f64 * m as f64).sqrt()
            })
            .collect();
        SubspaceDk {
            quanta,
            states,
            diagonal,
            off_diagonal,
            offset: params.omega_c * quanta as f64,
            detuned: !params.is_resonant(),
        }
    }

    /// Phonon count of the photon-vacuum member for even chains (`q / 2`).
    pub fn k(&self) -> usize {
        self.quanta / 2
    }

    pub fn quanta(&self) -> usize {
        self.quanta
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// `(photons, phonons)` labels in chain order.
    pub fn states(&self) -> &[(usize, usize)] {
        &self.states
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn off_diagonal(&self) -> &[f64] {
        &self.off_diagonal
    }

    /// Free energy `omega_c q` shared by every state of the chain.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn is_detuned(&self) -> bool {
        self.detuned
    }

    /// Dense restricted interaction `W`.
    pub fn w(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut w = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diagonal));
        for (i, &v) in self.off_diagonal.iter().enumerate() {
            w[(i, i + 1)] = v;
            w[(i + 1, i)] = v;
        }
        debug_assert_eq!(w.nrows(), d);
        w
    }
}

/// `D_k`: the resonant subspace reached from `|0, k⟩`.
pub fn subspace_dk(params: &ModelParams, k: usize) -> Result<SubspaceDk> {
    if k == 0 {
        return Err(Error::InvalidParameter("D_k needs at least one phonon".into()));
    }
    Ok(SubspaceDk::manifold(params, 2 * k, None))
}

/// Classical fixed point of the position-space Hamiltonian, with Hermitian
/// quadratures `X = (a + a†)/√2`, `Y = (b + b†)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureFrame {
    pub x_eq: f64,
    pub y_eq: f64,
    omega_c: f64,
    omega_m: f64,
}

impl QuadratureFrame {
    /// Free energy stored in each mode at the fixed point (momenta vanish).
    pub fn mode_energies(&self) -> (f64, f64) {
        (0.5 * self.omega_c * self.x_eq * self.x_eq, 0.5 * self.omega_m * self.y_eq * self.y_eq)
    }

    pub fn photon_energy_fraction(&self) -> f64 {
        let (ea, eb) = self.mode_energies();
        ea / (ea + eb)
    }
}

pub fn classical_equilibrium(params: &ModelParams) -> QuadratureFrame {
    QuadratureFrame {
        x_eq: (params.omega_m * params.omega_c).sqrt() / (params.g * std::f64::consts::SQRT_2),
        y_eq: params.omega_c / (2.0 * params.g),
        omega_c: params.omega_c,
        omega_m: params.omega_m,
    }
}
