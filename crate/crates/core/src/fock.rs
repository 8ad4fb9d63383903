//! Truncated two-mode Fock space.
//!
//! Basis states `|n, k⟩` hold `n` photons and `k` phonons with
//! `0 ≤ n ≤ na_max`, `0 ≤ k ≤ nb_max`. The flat index is row-major in the
//! photon number: `idx(n, k) = n (nb_max + 1) + k`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Largest basis accepted by [`FockBasis::new`]; about 64 MiB per state vector.
pub const DEFAULT_MAX_DIM: usize = 4_000_000;

/// Maximum probability allowed outside the truncated space for coherent and
/// thermal initial states.
pub const LEAKAGE_LIMIT: f64 = 1e-8;

/// Physical constants in units with `ħ = k_B = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega_c: f64,
    pub omega_m: f64,
    pub g: f64,
    /// `omega_m - 2 omega_c`, stored at construction.
    pub delta_omega: f64,
}

impl ModelParams {
    pub fn new(omega_c: f64, omega_m: f64, g: f64) -> Result<Self> {
        if !(omega_c > 0.0) || !omega_c.is_finite() {
            return Err(Error::InvalidParameter(format!("omega_c must be positive, got {omega_c}")));
        }
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::InvalidParameter(format!("g must be positive, got {g}")));
        }
        if !omega_m.is_finite() {
            return Err(Error::InvalidParameter(format!("omega_m must be finite, got {omega_m}")));
        }
        Ok(ModelParams { omega_c, omega_m, g, delta_omega: omega_m - 2.0 * omega_c })
    }

    /// `omega_c = 1`, `omega_m = 2` (parametric resonance).
    pub fn resonant(g: f64) -> Result<Self> {
        ModelParams::new(1.0, 2.0, g)
    }

    /// `omega_c = 1`, `omega_m = 2 + delta_omega`.
    pub fn detuned(g: f64, delta_omega: f64) -> Result<Self> {
        let p = ModelParams::new(1.0, 2.0 + delta_omega, g)?;
        // keep the requested detuning bit-exact rather than (2 + d) - 2
        Ok(ModelParams { delta_omega, ..p })
    }

    pub fn is_resonant(&self) -> bool {
        self.delta_omega == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockBasis {
    na_max: usize,
    nb_max: usize,
}

impl FockBasis {
    pub fn new(na_max: usize, nb_max: usize) -> Result<Self> {
        FockBasis::with_budget(na_max, nb_max, DEFAULT_MAX_DIM)
    }

    pub fn with_budget(na_max: usize, nb_max: usize, max_dim: usize) -> Result<Self> {
        let dim = (na_max + 1)
            .checked_mul(nb_max + 1)
            .ok_or(Error::Capacity { dim: usize::MAX, limit: max_dim })?;
        if dim > max_dim {
            return Err(Error::Capacity { dim, limit: max_dim });
        }
        Ok(FockBasis { na_max, nb_max })
    }

    pub fn na_max(&self) -> usize {
        self.na_max
    }

    pub fn nb_max(&self) -> usize {
        self.nb_max
    }

    pub fn photon_levels(&self) -> usize {
        self.na_max + 1
    }

    pub fn phonon_levels(&self) -> usize {
        self.nb_max + 1
    }

    pub fn dim(&self) -> usize {
        self.photon_levels() * self.phonon_levels()
    }

    pub fn contains(&self, n: usize, k: usize) -> bool {
        n <= self.na_max && k <= self.nb_max
    }

    #[inline]
    pub fn index(&self, n: usize, k: usize) -> usize {
        debug_assert!(self.contains(n, k));
        n * (self.nb_max + 1) + k
    }

    pub fn checked_index(&self, n: usize, k: usize) -> Result<usize> {
        if self.contains(n, k) {
            Ok(self.index(n, k))
        } else {
            Err(Error::OutOfRange { n, k, na_max: self.na_max, nb_max: self.nb_max })
        }
    }

    #[inline]
    pub fn levels(&self, idx: usize) -> (usize, usize) {
        (idx / (self.nb_max + 1), idx % (self.nb_max + 1))
    }

    /// All `(n, k)` pairs in flat-index order.
    pub fn states(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.dim()).map(move |i| self.levels(i))
    }
}

/// Normalized pure state on a [`FockBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    basis: FockBasis,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Wrap amplitudes and normalize them. Fails on a length mismatch or a
    /// zero vector.
    pub fn from_amplitudes(basis: FockBasis, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), found: amplitudes.len() });
        }
        let mut s = StateVector { basis, amplitudes };
        let norm = s.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParameter("state has zero or non-finite norm".into()));
        }
        s.amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(s)
    }

    /// Wrap amplitudes that are already normalized (e.g. the output of a
    /// unitary propagator). The norm is not touched so drift stays observable.
    pub fn from_evolved(basis: FockBasis, amplitudes: Vec<Complex64>) -> Self {
        assert_eq!(amplitudes.len(), basis.dim());
        StateVector { basis, amplitudes }
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn amplitude(&self, n: usize, k: usize) -> Complex64 {
        self.amplitudes[self.basis.index(n, k)]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// Probability carried by odd photon numbers.
    pub fn odd_photon_weight(&self) -> f64 {
        self.basis
            .states()
            .zip(&self.amplitudes)
            .filter(|((n, _), _)| n % 2 == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Probability on the two highest photon and the two highest phonon levels.
    pub fn top_level_occupation(&self) -> (f64, f64) {
        let (na, nb) = (self.basis.na_max, self.basis.nb_max);
        let mut photon = 0.0;
        let mut phonon = 0.0;
        for ((n, k), a) in self.basis.states().zip(&self.amplitudes) {
            if n + 2 > na {
                photon += a.norm_sqr();
            }
            if k + 2 > nb {
                phonon += a.norm_sqr();
            }
        }
        (photon, phonon)
    }
}

/// `|n, k⟩`.
pub fn product_state(basis: &FockBasis, n: usize, k: usize) -> Result<StateVector> {
    let idx = basis.checked_index(n, k)?;
    let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
    amps[idx] = Complex64::new(1.0, 0.0);
    Ok(StateVector { basis: *basis, amplitudes: amps })
}

/// Photon vacuum times an arbitrary phonon superposition `Σ c_k |0, k⟩`.
/// Coefficients beyond `nb_max` are rejected; the result is normalized.
pub fn phonon_superposition(basis: &FockBasis, coeffs: &[Complex64]) -> Result<StateVector> {
    if coeffs.len() > basis.phonon_levels() {
        return Err(Error::OutOfRange {
            n: 0,
            k: coeffs.len() - 1,
            na_max: basis.na_max,
            nb_max: basis.nb_max,
        });
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
    for (k, c) in coeffs.iter().enumerate() {
        amps[basis.index(0, k)] = *c;
    }
    StateVector::from_amplitudes(*basis, amps)
}

/// Coherent-state weights `e^{-|α|²/2} α^k / √k!`, computed in log space.
pub fn coherent_coefficients(alpha: Complex64, levels: usize) -> Vec<Complex64> {
    let r = alpha.norm();
    let phase = if r > 0.0 { alpha / r } else { Complex64::new(1.0, 0.0) };
    let mut out = Vec::with_capacity(levels);
    let mut log_mag = -0.5 * r * r;
    let mut ph = Complex64::new(1.0, 0.0);
    for k in 0..levels {
        if k > 0 {
            log_mag += r.ln() - 0.5 * (k as f64).ln();
            ph *= phase;
        }
        let mag = if r == 0.0 { if k == 0 { 1.0 } else { 0.0 } } else { log_mag.exp() };
        out.push(ph * mag);
    }
    out
}

/// Probability of a coherent state outside `0..=nb_max`.
pub fn coherent_leakage(alpha: Complex64, nb_max: usize) -> f64 {
    let r2 = alpha.norm_sqr();
    if r2 == 0.0 {
        return 0.0;
    }
    // sum the Poisson tail directly to avoid cancellation in 1 - Σ
    let mut log_p = -r2;
    for k in 1..=nb_max + 1 {
        log_p += r2.ln() - (k as f64).ln();
    }
    let mut tail = 0.0;
    let mut k = nb_max + 1;
    loop {
        let p = log_p.exp();
        tail += p;
        k += 1;
        log_p += r2.ln() - (k as f64).ln();
        if (k as f64) > r2 && p < tail * 1e-17 {
            break;
        }
        if k > nb_max + 100_000 {
            break;
        }
    }
    tail
}

/// `|0⟩ ⊗ |α⟩`, renormalized on the truncated space.
pub fn coherent_phonon_state(basis: &FockBasis, alpha: Complex64) -> Result<StateVector> {
    let leakage = coherent_leakage(alpha, basis.nb_max);
    if leakage > LEAKAGE_LIMIT {
        return Err(Error::Truncation { leakage, limit: LEAKAGE_LIMIT });
    }
    phonon_superposition(basis, &coherent_coefficients(alpha, basis.phonon_levels()))
}

/// Ratio `x = e^{-omega_m / T0}` between consecutive thermal amplitudes.
pub fn thermal_ratio(omega_m: f64, t0: f64) -> f64 {
    if t0 <= 0.0 {
        0.0
    } else {
        (-omega_m / t0).exp()
    }
}

/// Probability outside `0..=nb_max` for amplitudes `∝ x^k`: `x^{2(nb_max+1)}`.
pub fn thermal_leakage(omega_m: f64, t0: f64, nb_max: usize) -> f64 {
    let x = thermal_ratio(omega_m, t0);
    x.powi(2 * (nb_max as i32 + 1))
}

/// Pure thermal-like phonon state `Σ_k c_k |0, k⟩` with
/// `c_k = e^{-omega_m k / T0} √(1 - e^{-2 omega_m / T0})`, so that `|c_k|²`
/// is the geometric distribution with ratio `e^{-2 omega_m / T0}`.
pub fn thermal_phonon_state(basis: &FockBasis, params: &ModelParams, t0: f64) -> Result<StateVector> {
    if !(t0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be non-negative, got {t0}")));
    }
    let x = thermal_ratio(params.omega_m, t0);
    if !(x < 1.0) {
        return Err(Error::InvalidParameter("thermal state requires omega_m > 0".into()));
    }
    let leakage = thermal_leakage(params.omega_m, t0, basis.nb_max);
    if leakage > LEAKAGE_LIMIT {
        return Err(Error::Truncation { leakage, limit: LEAKAGE_LIMIT });
    }
    let norm = (1.0 - x * x).sqrt();
    let coeffs: Vec<Complex64> = (0..basis.phonon_levels())
        .map(|k| Complex64::new(norm * x.powi(k as i32), 0.0))
        .collect();
    phonon_superposition(basis, &coeffs)
}

/// Smallest phonon cutoff with thermal leakage at most `limit`.
pub fn thermal_cutoff(omega_m: f64, t0: f64, limit: f64) -> usize {
    let x = thermal_ratio(omega_m, t0);
    if x == 0.0 {
        return 0;
    }
    // x^{2(n+1)} <= limit
    let n = (limit.ln() / (2.0 * x.ln())).ceil() - 1.0;
    let mut n = n.max(0.0) as usize;
    while thermal_leakage(omega_m, t0, n) > limit {
        n += 1;
    }
    n
}

/// Smallest phonon cutoff with coherent leakage at most `limit`.
pub fn coherent_cutoff(alpha: Complex64, limit: f64) -> usize {
    let mut n = alpha.norm_sqr().floor() as usize;
    while coherent_leakage(alpha, n) > limit {
        n += 1;
    }
    n
}

/// Bosonic ladder and number operators on a truncated basis.
///
/// `a`, `b` and the number operators are exact on the truncated space. The
/// raising operators annihilate the top level, so `[a, a†]` equals one on every
/// photon row except `n = na_max` (where it is `-na_max`), and likewise for the
/// phonon mode at `k = nb_max`.
#[derive(Debug, Clone)]
pub struct LadderOps {
    pub a: SparseMatrix,
    pub a_dag: SparseMatrix,
    pub b: SparseMatrix,
    pub b_dag: SparseMatrix,
    pub n_a: SparseMatrix,
    pub n_b: SparseMatrix,
}

pub fn ladder_matrices(basis: &FockBasis) -> LadderOps {
    let dim = basis.dim();
    let mut a = Vec::with_capacity(dim);
    let mut b = Vec::with_capacity(dim);
    let mut na = Vec::with_capacity(dim);
    let mut nb = Vec::with_capacity(dim);
    for (idx, (n, k)) in basis.states().enumerate() {
        if n > 0 {
            a.push((basis.index(n - 1, k), idx, (n as f64).sqrt()));
        }
        if k > 0 {
            b.push((basis.index(n, k - 1), idx, (k as f64).sqrt()));
        }
        na.push((idx, idx, n as f64));
        nb.push((idx, idx, k as f64));
    }
    let a = SparseMatrix::from_triplets(dim, dim, a);
    let b = SparseMatrix::from_triplets(dim, dim, b);
    LadderOps {
        a_dag: a.adjoint(),
        b_dag: b.adjoint(),
        a,
        b,
        n_a: SparseMatrix::from_triplets(dim, dim, na),
        n_b: SparseMatrix::from_triplets(dim, dim, nb),
    }
}
