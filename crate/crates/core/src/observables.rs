//! Expectation values, reduced densities, entropy and photon statistics.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockBasis, StateVector};
use crate::linalg::hermitian_eigenvalues;
use crate::sparse::SparseMatrix;

/// Eigenvalues below this are dropped before taking logarithms.
pub const EIGENVALUE_CLIP: f64 = 1e-14;

/// Smallest `⟨N_a⟩` for which `g²` is reported.
pub const G2_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subsystem {
    Photon,
    Phonon,
}

/// `⟨ψ|M|ψ⟩` for a Hermitian `M`. The imaginary part must vanish up to
/// rounding and is discarded.
pub fn expect(op: &SparseMatrix, psi: &StateVector) -> Result<f64> {
    let z = op.quadratic_form(psi.amplitudes())?;
    if z.im.abs() > 1e-10 * (1.0 + z.re.abs()) {
        return Err(Error::NotHermitian(z.im.abs()));
    }
    Ok(z.re)
}

/// `⟨N_a⟩` read off the amplitudes directly.
pub fn photon_mean(psi: &StateVector) -> f64 {
    psi.basis().states().zip(psi.amplitudes()).map(|((n, _), a)| n as f64 * a.norm_sqr()).sum()
}

/// `⟨N_b⟩` read off the amplitudes directly.
pub fn phonon_mean(psi: &StateVector) -> f64 {
    psi.basis().states().zip(psi.amplitudes()).map(|((_, k), a)| k as f64 * a.norm_sqr()).sum()
}

/// Single-mode density matrix after tracing out the other mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensity {
    pub subsystem: Subsystem,
    pub matrix: DMatrix<Complex64>,
}

impl ReducedDensity {
    pub fn levels(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.levels()).map(|i| self.matrix[(i, i)].re).sum()
    }

    /// `max |ρ - ρ†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.levels();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Largest modulus of an off-diagonal element.
    pub fn max_coherence(&self) -> f64 {
        let n = self.levels();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(self.matrix[(i, j)].norm());
                }
            }
        }
        worst
    }

    /// Eigenvalues, computed on the rows and columns that carry weight.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let keep: Vec<usize> = (0..self.levels()).filter(|&i| self.matrix[(i, i)].re > 0.0).collect();
        let sub = DMatrix::from_fn(keep.len(), keep.len(), |r, c| self.matrix[(keep[r], keep[c])]);
        hermitian_eigenvalues(sub)
    }

    /// Check trace, Hermiticity and positivity.
    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::Invariant(format!("reduced density trace {tr} differs from 1")));
        }
        let h = self.hermiticity_defect();
        if h > 1e-12 {
            return Err(Error::Invariant(format!("reduced density is not Hermitian ({h:.3e})")));
        }
        let min = self.eigenvalues()?.into_iter().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(Error::Invariant(format!("reduced density has eigenvalue {min:.3e}")));
        }
        Ok(())
    }
}

pub fn reduced_density(psi: &StateVector, subsystem: Subsystem) -> ReducedDensity {
    let basis = psi.basis();
    let (na, nb) = (basis.photon_levels(), basis.phonon_levels());
    // amplitudes as an (na x nb) matrix in row-major flat order
    let amps = psi.amplitudes();
    let psi_mat = DMatrix::from_fn(na, nb, |n, k| amps[n * nb + k]);
    let matrix = match subsystem {
        Subsystem::Photon => &psi_mat * psi_mat.adjoint(),
        // ρ_b(k, k') = Σ_n ψ(n, k) ψ*(n, k')
        Subsystem::Phonon => psi_mat.transpose() * psi_mat.map(|z| z.conj()),
    };
    ReducedDensity { subsystem, matrix }
}

/// Von Neumann entropy in nats.
pub fn entanglement_entropy(rho: &ReducedDensity) -> Result<f64> {
    Ok(entropy_of(&rho.eigenvalues()?))
}

fn entropy_of(eigenvalues: &[f64]) -> f64 {
    let s: f64 = eigenvalues.iter().filter(|&&l| l >= EIGENVALUE_CLIP).map(|&l| -l * l.ln()).sum();
    // a pure state sums to -0.0
    s + 0.0
}

/// Entanglement entropy of a pure state, computed from whichever reduced
/// density is smaller (their nonzero spectra coincide).
pub fn state_entropy(psi: &StateVector) -> Result<f64> {
    let b = psi.basis();
    let side = if b.phonon_levels() <= b.photon_levels() { Subsystem::Phonon } else { Subsystem::Photon };
    entanglement_entropy(&reduced_density(psi, side))
}

/// Both normalizations of the equal-time second-order correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2 {
    /// `⟨a†a†aa⟩ / ⟨a†a⟩²`
    pub standard: f64,
    /// `⟨a†a†aa⟩ / ⟨a†a⟩`
    pub unsquared: f64,
}

/// Anything that exposes a photon-number distribution.
pub trait PhotonSource {
    fn photon_probabilities(&self) -> Vec<f64>;
}

impl PhotonSource for StateVector {
    fn photon_probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.basis().photon_levels()];
        for ((n, _), a) in self.basis().states().zip(self.amplitudes()) {
            p[n] += a.norm_sqr();
        }
        p
    }
}

impl PhotonSource for ReducedDensity {
    fn photon_probabilities(&self) -> Vec<f64> {
        assert_eq!(self.subsystem, Subsystem::Photon, "g2 needs the photon density");
        (0..self.levels()).map(|i| self.matrix[(i, i)].re).collect()
    }
}

impl PhotonSource for [f64] {
    fn photon_probabilities(&self) -> Vec<f64> {
        self.to_vec()
    }
}

pub fn g2<S: PhotonSource + ?Sized>(source: &S) -> Result<G2> {
    let p = source.photon_probabilities();
    let mean: f64 = p.iter().enumerate().map(|(n, q)| n as f64 * q).sum();
    if !(mean >= G2_FLOOR) {
        return Err(Error::UndefinedG2 { mean, floor: G2_FLOOR });
    }
    let pairs: f64 = p.iter().enumerate().map(|(n, q)| (n as f64) * (n as f64 - 1.0) * q).sum();
    Ok(G2 { standard: pairs / (mean * mean), unsquared: pairs / mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberDistribution {
    pub subsystem: Subsystem,
    pub probabilities: Vec<f64>,
}

impl NumberDistribution {
    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Level with the largest probability.
    pub fn mode(&self) -> usize {
        self.probabilities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(n, _)| n)
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.total();
        if (t - 1.0).abs() > 1e-9 {
            return Err(Error::Invariant(format!("distribution sums to {t}")));
        }
        if let Some(p) = self.probabilities.iter().find(|p| **p < -1e-15) {
            return Err(Error::Invariant(format!("negative probability {p:.3e}")));
        }
        Ok(())
    }
}

pub fn number_distribution(rho: &ReducedDensity) -> NumberDistribution {
    NumberDistribution {
        subsystem: rho.subsystem,
        probabilities: (0..rho.levels()).map(|i| rho.matrix[(i, i)].re.max(0.0)).collect(),
    }
}

/// Marginal number distribution straight from the amplitudes.
pub fn state_distribution(psi: &StateVector, subsystem: Subsystem) -> NumberDistribution {
    let basis: &FockBasis = psi.basis();
    let probabilities = match subsystem {
        Subsystem::Photon => psi.photon_probabilities(),
        Subsystem::Phonon => {
            let mut p = vec![0.0; basis.phonon_levels()];
            for ((_, k), a) in basis.states().zip(psi.amplitudes()) {
                p[k] += a.norm_sqr();
            }
            p
        }
    };
    NumberDistribution { subsystem, probabilities }
}
