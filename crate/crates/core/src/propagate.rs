//! Time evolution `ψ(t) = e^{-iHt} ψ0`.
//!
//! Three engines share the [`Propagator`] interface:
//!
//! - [`SpectralPropagator`] diagonalizes the connected blocks of `H` that the
//!   initial state touches and evaluates any time directly.
//! - [`KrylovPropagator`] steps with short Lanczos recurrences and never forms
//!   a dense matrix.
//! - [`ResonantPropagator`] evolves exactly under the rotating-wave
//!   Hamiltonian, which splits into small tridiagonal chains of fixed
//!   `n + 2m` (see [`SubspaceDk::manifold`]).
//!
//! [`evolve_subspace_pt`] is the lowest-order degenerate evolution inside a
//! single chain, returned as chain coefficients.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockBasis, ModelParams, StateVector};
use crate::hamiltonians::SubspaceDk;
use crate::linalg::{symmetric_eigen, Eigensystem};
use crate::sparse::SparseMatrix;

/// Largest connected block the spectral engine will diagonalize.
pub const DEFAULT_SPECTRAL_LIMIT: usize = 12_000;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Spectral,
    Krylov,
    Resonant,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Spectral => "spectral",
            Method::Krylov => "krylov",
            Method::Resonant => "resonant",
        })
    }
}

pub type Visitor<'a> = dyn FnMut(usize, f64, &StateVector) -> Result<()> + 'a;

pub trait Propagator: Send + Sync {
    fn basis(&self) -> &FockBasis;
    fn method(&self) -> Method;
    fn initial(&self) -> &StateVector;

    /// Call `visit(i, t_i, ψ(t_i))` for every entry of a strictly increasing,
    /// non-negative time grid.
    fn for_each_state(&self, times: &[f64], visit: &mut Visitor<'_>) -> Result<()>;

    fn state_at(&self, t: f64) -> Result<StateVector> {
        let mut out = None;
        self.for_each_state(&[t], &mut |_, _, s| {
            out = Some(s.clone());
            Ok(())
        })?;
        Ok(out.expect("one sample visited"))
    }
}

pub fn check_grid(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidParameter("time grid must be finite and non-negative".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `intervals + 1` evenly spaced samples on `[0, t_end]`.
pub fn uniform_grid(t_end: f64, intervals: usize) -> Vec<f64> {
    if intervals == 0 {
        return vec![0.0];
    }
    (0..=intervals).map(|i| t_end * i as f64 / intervals as f64).collect()
}

/// Sampled states of one evolution.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub method: Method,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
}

impl Trajectory {
    pub fn collect(prop: &dyn Propagator, times: &[f64]) -> Result<Trajectory> {
        let mut states = Vec::with_capacity(times.len());
        prop.for_each_state(times, &mut |_, _, s| {
            states.push(s.clone());
            Ok(())
        })?;
        Ok(Trajectory { method: prop.method(), times: times.to_vec(), states })
    }

    /// `max_t |‖ψ(t)‖ - 1|`.
    pub fn norm_drift(&self) -> f64 {
        self.states.iter().fold(0.0, |m, s| m.max((s.norm() - 1.0).abs()))
    }
}

fn check_hermitian(h: &SparseMatrix, basis: &FockBasis) -> Result<()> {
    if h.nrows() != basis.dim() || !h.is_square() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), found: h.nrows() });
    }
    let defect = h.hermiticity_defect();
    if defect > 1e-12 * h.max_abs().max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    Ok(())
}

#[derive(Debug)]
struct SpectralBlock {
    indices: Vec<usize>,
    eig: Eigensystem,
}

/// Eigendecomposition of the blocks of `H` that carry weight of given states.
#[derive(Debug)]
pub struct SpectralDecomposition {
    basis: FockBasis,
    blocks: Vec<SpectralBlock>,
    block_of: Vec<usize>,
}

impl SpectralDecomposition {
    /// Diagonalize every connected block of `h` on which some of `states`
    /// have nonzero amplitude. Blocks above `limit` are refused.
    pub fn for_states(h: &SparseMatrix, basis: &FockBasis, states: &[&StateVector], limit: usize) -> Result<Self> {
        check_hermitian(h, basis)?;
        let all = h.connected_blocks();
        let mut block_of = vec![usize::MAX; basis.dim()];
        let mut blocks = Vec::new();
        for indices in all {
            let touched = states.iter().any(|s| indices.iter().any(|&i| s.amplitudes()[i] != ZERO));
            if !touched {
                continue;
            }
            if indices.len() > limit {
                return Err(Error::SpectralLimit { dim: indices.len(), limit });
            }
            let sub = h.submatrix(&indices);
            let eig = symmetric_eigen(sub.to_dense())?;
            let residual = sparse_residual(&sub, &eig);
            let scale = sub.max_abs().max(f64::MIN_POSITIVE);
            if residual > 1e-9 * scale {
                return Err(Error::Convergence(format!(
                    "eigendecomposition residual {residual:.3e} exceeds 1e-9 max|H|"
                )));
            }
            for &i in &indices {
                block_of[i] = blocks.len();
            }
            blocks.push(SpectralBlock { indices, eig });
        }
        Ok(SpectralDecomposition { basis: *basis, blocks, block_of })
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.indices.len()).collect()
    }

    /// Bind an initial state. Fails if the state has weight outside the
    /// diagonalized blocks.
    pub fn propagator(self: &Arc<Self>, psi0: &StateVector) -> Result<SpectralPropagator> {
        if psi0.basis() != &self.basis {
            return Err(Error::DimensionMismatch { expected: self.basis.dim(), found: psi0.basis().dim() });
        }
        let amps = psi0.amplitudes();
        if amps.iter().enumerate().any(|(i, a)| *a != ZERO && self.block_of[i] == usize::MAX) {
            return Err(Error::InvalidParameter("initial state touches a block that was not diagonalized".into()));
        }
        let coeffs = self
            .blocks
            .iter()
            .map(|b| {
                let n = b.indices.len();
                let mut re = DVector::zeros(n);
                let mut im = DVector::zeros(n);
                for (j, &i) in b.indices.iter().enumerate() {
                    re[j] = amps[i].re;
                    im[j] = amps[i].im;
                }
                let re = b.eig.vectors.tr_mul(&re);
                let im = b.eig.vectors.tr_mul(&im);
                (0..n).map(|j| Complex64::new(re[j], im[j])).collect()
            })
            .collect();
        Ok(SpectralPropagator { decomposition: Arc::clone(self), psi0: psi0.clone(), coeffs })
    }
}

fn sparse_residual(h: &SparseMatrix, eig: &Eigensystem) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0f64;
    for (j, &l) in eig.values.iter().enumerate() {
        for r in 0..n {
            let hv: f64 = h.row(r).map(|(c, v)| v * eig.vectors[(c, j)]).sum();
            worst = worst.max((hv - l * eig.vectors[(r, j)]).abs());
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    decomposition: Arc<SpectralDecomposition>,
    psi0: StateVector,
    coeffs: Vec<Vec<Complex64>>,
}

impl SpectralPropagator {
    pub fn new(h: &SparseMatrix, psi0: &StateVector, limit: usize) -> Result<Self> {
        let d = Arc::new(SpectralDecomposition::for_states(h, psi0.basis(), &[psi0], limit)?);
        d.propagator(psi0)
    }

    pub fn eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        self.decomposition.blocks.iter().flat_map(|b| b.eig.values.iter().copied())
    }

    fn evaluate(&self, t: f64) -> StateVector {
        let basis = self.decomposition.basis;
        let mut out = vec![ZERO; basis.dim()];
        for (b, d) in self.decomposition.blocks.iter().zip(&self.coeffs) {
            let n = b.indices.len();
            let mut re = DVector::zeros(n);
            let mut im = DVector::zeros(n);
            for (j, (&l, c)) in b.eig.values.iter().zip(d).enumerate() {
                let z = c * Complex64::from_polar(1.0, -l * t);
                re[j] = z.re;
                im[j] = z.im;
            }
            let re = &b.eig.vectors * re;
            let im = &b.eig.vectors * im;
            for (j, &i) in b.indices.iter().enumerate() {
                out[i] = Complex64::new(re[j], im[j]);
            }
        }
        StateVector::from_evolved(basis, out)
    }
}

impl Propagator for SpectralPropagator {
    fn basis(&self) -> &FockBasis {
        &self.decomposition.basis
    }

    fn method(&self) -> Method {
        Method::Spectral
    }

    fn initial(&self) -> &StateVector {
        &self.psi0
    }

    fn for_each_state(&self, times: &[f64], visit: &mut Visitor<'_>) -> Result<()> {
        check_grid(times)?;
        for (i, &t) in times.iter().enumerate() {
            if t == 0.0 {
                visit(i, t, &self.psi0)?;
            } else {
                visit(i, t, &self.evaluate(t))?;
            }
        }
        Ok(())
    }

    fn state_at(&self, t: f64) -> Result<StateVector> {
        Ok(if t == 0.0 { self.psi0.clone() } else { self.evaluate(t) })
    }
}

/// Spectral evolution of `psi0` sampled at `times`.
pub fn evolve_exact(h: &SparseMatrix, psi0: &StateVector, times: &[f64], limit: usize) -> Result<Trajectory> {
    let prop = SpectralPropagator::new(h, psi0, limit)?;
    Trajectory::collect(&prop, times)
}

/// Short-time Lanczos stepping.
#[derive(Debug, Clone)]
pub struct KrylovPropagator {
    h: Arc<SparseMatrix>,
    psi0: StateVector,
    /// Krylov dimension.
    pub m: usize,
    /// Largest step attempted.
    pub dt: f64,
    /// Per-step error bound.
    pub tol: f64,
}

impl KrylovPropagator {
    pub fn new(h: Arc<SparseMatrix>, psi0: &StateVector, m: usize, dt: f64, tol: f64) -> Result<Self> {
        check_hermitian(&h, psi0.basis())?;
        if m < 4 {
            return Err(Error::InvalidParameter(format!("Krylov dimension must be at least 4, got {m}")));
        }
        if !(dt > 0.0) || !(tol > 0.0) {
            return Err(Error::InvalidParameter("Krylov step and tolerance must be positive".into()));
        }
        Ok(KrylovPropagator { h, psi0: psi0.clone(), m, dt, tol })
    }

    /// Advance `psi` by `tau`, splitting into smaller steps where the
    /// a-posteriori Lanczos error exceeds `tol`.
    pub fn advance(&self, psi: &mut Vec<Complex64>, tau: f64) -> Result<()> {
        let mut remaining = tau;
        while remaining > 0.0 {
            let attempt = remaining.min(self.dt);
            let done = self.step(psi, attempt)?;
            remaining -= done;
            if remaining < 1e-14 * tau {
                break;
            }
        }
        Ok(())
    }

    /// One Lanczos step of at most `tau`; returns the time actually advanced.
    fn step(&self, psi: &mut Vec<Complex64>, tau: f64) -> Result<f64> {
        let beta0 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if beta0 == 0.0 {
            return Ok(tau);
        }
        let n = psi.len();
        let h_scale = self.h.max_abs().max(1.0);
        let mut v: Vec<Vec<Complex64>> = vec![psi.iter().map(|z| z / beta0).collect()];
        let mut alpha = Vec::with_capacity(self.m);
        let mut beta: Vec<f64> = Vec::with_capacity(self.m);
        let mut w = vec![ZERO; n];
        let mut breakdown = false;
        for j in 0..self.m {
            self.h.apply_into(&v[j], &mut w);
            let a: f64 = v[j].iter().zip(&w).map(|(x, y)| (x.conj() * y).re).sum();
            alpha.push(a);
            for (wi, vi) in w.iter_mut().zip(&v[j]) {
                *wi -= vi * a;
            }
            if j > 0 {
                let b = beta[j - 1];
                for (wi, vi) in w.iter_mut().zip(&v[j - 1]) {
                    *wi -= vi * b;
                }
            }
            // full reorthogonalization keeps the basis orthonormal to rounding
            for vi in &v {
                let c: Complex64 = vi.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= vk * c;
                }
            }
            let b = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            beta.push(b);
            if b <= 1e-13 * h_scale {
                breakdown = true;
                break;
            }
            if j + 1 < self.m {
                v.push(w.iter().map(|z| z / b).collect());
            }
        }
        let size = alpha.len();
        let mut t = DMatrix::zeros(size, size);
        for i in 0..size {
            t[(i, i)] = alpha[i];
            if i + 1 < size {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = symmetric_eigen(t)?;
        let mut step = tau;
        for _ in 0..40 {
            let y: Vec<Complex64> = (0..size)
                .map(|r| {
                    eig.values
                        .iter()
                        .enumerate()
                        .map(|(l, &lam)| eig.vectors[(0, l)] * eig.vectors[(r, l)] * Complex64::from_polar(1.0, -lam * step))
                        .sum()
                })
                .collect();
            let err = if breakdown { 0.0 } else { beta[size - 1] * y[size - 1].norm() };
            if err <= self.tol {
                for z in psi.iter_mut() {
                    *z = ZERO;
                }
                for (yj, vj) in y.iter().zip(&v) {
                    let c = yj * beta0;
                    for (z, x) in psi.iter_mut().zip(vj) {
                        *z += c * x;
                    }
                }
                return Ok(step);
            }
            step *= 0.5;
        }
        Err(Error::Convergence(format!(
            "Krylov step did not reach tolerance {:.1e} after repeated halving",
            self.tol
        )))
    }
}

impl Propagator for KrylovPropagator {
    fn basis(&self) -> &FockBasis {
        self.psi0.basis()
    }

    fn method(&self) -> Method {
        Method::Krylov
    }

    fn initial(&self) -> &StateVector {
        &self.psi0
    }

    fn for_each_state(&self, times: &[f64], visit: &mut Visitor<'_>) -> Result<()> {
        check_grid(times)?;
        let basis = *self.psi0.basis();
        let mut psi = self.psi0.amplitudes().to_vec();
        let mut now = 0.0;
        for (i, &t) in times.iter().enumerate() {
            self.advance(&mut psi, t - now)?;
            now = t;
            visit(i, t, &StateVector::from_evolved(basis, psi.clone()))?;
        }
        Ok(())
    }
}

/// Krylov evolution sampled at `j dt` for `j = 0..=n_steps`.
pub fn evolve_krylov(
    h: &SparseMatrix,
    psi0: &StateVector,
    dt: f64,
    n_steps: usize,
    m: usize,
    tol: f64,
) -> Result<Trajectory> {
    let prop = KrylovPropagator::new(Arc::new(h.clone()), psi0, m, dt, tol)?;
    let times: Vec<f64> = (0..=n_steps).map(|j| j as f64 * dt).collect();
    Trajectory::collect(&prop, &times)
}

#[derive(Debug, Clone)]
struct Chain {
    positions: Vec<usize>,
    energies: Vec<f64>,
    vectors: DMatrix<f64>,
    coeffs: Vec<Complex64>,
}

/// Exact evolution under the rotating-wave Hamiltonian on a truncated basis.
#[derive(Debug, Clone)]
pub struct ResonantPropagator {
    basis: FockBasis,
    psi0: StateVector,
    chains: Vec<Chain>,
}

impl ResonantPropagator {
    pub fn new(params: &ModelParams, psi0: &StateVector) -> Result<Self> {
        let basis = *psi0.basis();
        let mut by_quanta: BTreeMap<usize, ()> = BTreeMap::new();
        for ((n, m), a) in basis.states().zip(psi0.amplitudes()) {
            if *a != ZERO {
                by_quanta.insert(n + 2 * m, ());
            }
        }
        let mut chains = Vec::with_capacity(by_quanta.len());
        for &q in by_quanta.keys() {
            let sub = SubspaceDk::manifold(params, q, Some(&basis));
            let eig = symmetric_eigen(sub.w())?;
            let positions: Vec<usize> = sub.states().iter().map(|&(n, m)| basis.index(n, m)).collect();
            let c0: Vec<Complex64> = positions.iter().map(|&i| psi0.amplitudes()[i]).collect();
            let coeffs = project(&eig.vectors, &c0);
            let energies = eig.values.iter().map(|l| l + sub.offset()).collect();
            chains.push(Chain { positions, energies, vectors: eig.vectors, coeffs });
        }
        Ok(ResonantPropagator { basis, psi0: psi0.clone(), chains })
    }

    /// Largest chain that had to be diagonalized.
    pub fn largest_chain(&self) -> usize {
        self.chains.iter().map(|c| c.positions.len()).max().unwrap_or(0)
    }

    fn evaluate(&self, t: f64) -> StateVector {
        let mut out = vec![ZERO; self.basis.dim()];
        for c in &self.chains {
            let local = rotate(&c.vectors, &c.energies, &c.coeffs, t);
            for (&i, z) in c.positions.iter().zip(local) {
                out[i] = z;
            }
        }
        StateVector::from_evolved(self.basis, out)
    }
}

fn project(vectors: &DMatrix<f64>, c0: &[Complex64]) -> Vec<Complex64> {
    (0..vectors.ncols())
        .map(|l| (0..vectors.nrows()).map(|r| c0[r] * vectors[(r, l)]).sum())
        .collect()
}

fn rotate(vectors: &DMatrix<f64>, energies: &[f64], coeffs: &[Complex64], t: f64) -> Vec<Complex64> {
    let phased: Vec<Complex64> = coeffs
        .iter()
        .zip(energies)
        .map(|(c, &e)| c * Complex64::from_polar(1.0, -e * t))
        .collect();
    (0..vectors.nrows())
        .map(|r| (0..vectors.ncols()).map(|l| phased[l] * vectors[(r, l)]).sum())
        .collect()
}

impl Propagator for ResonantPropagator {
    fn basis(&self) -> &FockBasis {
        &self.basis
    }

    fn method(&self) -> Method {
        Method::Resonant
    }

    fn initial(&self) -> &StateVector {
        &self.psi0
    }

    fn for_each_state(&self, times: &[f64], visit: &mut Visitor<'_>) -> Result<()> {
        check_grid(times)?;
        for (i, &t) in times.iter().enumerate() {
            if t == 0.0 {
                visit(i, t, &self.psi0)?;
            } else {
                visit(i, t, &self.evaluate(t))?;
            }
        }
        Ok(())
    }

    fn state_at(&self, t: f64) -> Result<StateVector> {
        Ok(if t == 0.0 { self.psi0.clone() } else { self.evaluate(t) })
    }
}

/// Coefficients of a state confined to one resonant chain.
#[derive(Debug, Clone)]
pub struct SubspaceEvolution {
    labels: Vec<(usize, usize)>,
    energies: Vec<f64>,
    vectors: DMatrix<f64>,
    coeffs: Vec<Complex64>,
}

impl SubspaceEvolution {
    pub fn new(subspace: &SubspaceDk, c0: &[Complex64]) -> Result<Self> {
        if c0.len() != subspace.dim() {
            return Err(Error::DimensionMismatch { expected: subspace.dim(), found: c0.len() });
        }
        let norm = c0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("subspace coefficients have norm {norm}, expected 1")));
        }
        let eig = symmetric_eigen(subspace.w())?;
        let coeffs = project(&eig.vectors, c0);
        Ok(SubspaceEvolution {
            labels: subspace.states().to_vec(),
            energies: eig.values,
            vectors: eig.vectors,
            coeffs,
        })
    }

    /// `(photons, phonons)` of each coefficient.
    pub fn labels(&self) -> &[(usize, usize)] {
        &self.labels
    }

    pub fn coefficients_at(&self, t: f64) -> Vec<Complex64> {
        rotate(&self.vectors, &self.energies, &self.coeffs, t)
    }

    pub fn photon_mean_at(&self, t: f64) -> f64 {
        photon_mean(&self.labels, &self.coefficients_at(t))
    }

    pub fn phonon_mean_at(&self, t: f64) -> f64 {
        self.labels
            .iter()
            .zip(self.coefficients_at(t))
            .map(|(&(_, m), c)| m as f64 * c.norm_sqr())
            .sum()
    }

    /// Embed coefficients into a Fock basis that contains the whole chain.
    pub fn to_state(&self, basis: &FockBasis, coeffs: &[Complex64]) -> Result<StateVector> {
        let mut amps = vec![ZERO; basis.dim()];
        for (&(n, m), c) in self.labels.iter().zip(coeffs) {
            amps[basis.checked_index(n, m)?] = *c;
        }
        Ok(StateVector::from_evolved(*basis, amps))
    }
}

fn photon_mean(labels: &[(usize, usize)], c: &[Complex64]) -> f64 {
    labels.iter().zip(c).map(|(&(n, _), z)| n as f64 * z.norm_sqr()).sum()
}

/// Chain coefficients sampled on a time grid.
#[derive(Debug, Clone)]
pub struct SubspaceTrajectory {
    pub labels: Vec<(usize, usize)>,
    pub times: Vec<f64>,
    pub coeffs: Vec<Vec<Complex64>>,
}

impl SubspaceTrajectory {
    pub fn photon_means(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| photon_mean(&self.labels, c)).collect()
    }
}

pub fn evolve_subspace_pt(subspace: &SubspaceDk, c0: &[Complex64], times: &[f64]) -> Result<SubspaceTrajectory> {
    check_grid(times)?;
    let ev = SubspaceEvolution::new(subspace, c0)?;
    let coeffs = times
        .iter()
        .map(|&t| if t == 0.0 { c0.to_vec() } else { ev.coefficients_at(t) })
        .collect();
    Ok(SubspaceTrajectory { labels: ev.labels, times: times.to_vec(), coeffs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::product_state;
    use crate::hamiltonians::{build_full, subspace_dk};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn zero_time_returns_initial_state() {
        let p = ModelParams::resonant(0.01).unwrap();
        let b = FockBasis::new(6, 4).unwrap();
        let set = build_full(&p, &b).unwrap();
        let psi = product_state(&b, 0, 1).unwrap();
        let tr = evolve_exact(&set.h, &psi, &[0.0], DEFAULT_SPECTRAL_LIMIT).unwrap();
        assert_eq!(tr.states[0], psi);
        let tr = evolve_krylov(&set.h, &psi, 0.5, 0, 8, 1e-12).unwrap();
        assert_eq!(tr.states[0], psi);
    }

    #[test]
    fn free_evolution_is_a_phase() {
        let p = ModelParams::resonant(0.01).unwrap();
        let b = FockBasis::new(4, 3).unwrap();
        let set = build_full(&p, &b).unwrap();
        let psi = product_state(&b, 2, 1).unwrap();
        let t = 3.7;
        let expected = Complex64::from_polar(1.0, -(2.0 + 2.0) * t);
        let s = SpectralPropagator::new(&set.h0, &psi, 100).unwrap().state_at(t).unwrap();
        assert!((s.amplitude(2, 1) - expected).norm() < 1e-12);
        let k = evolve_krylov(&set.h0, &psi, t, 1, 6, 1e-13).unwrap();
        assert!((k.states[1].amplitude(2, 1) - expected).norm() < 1e-12);
    }

    #[test]
    fn oversized_block_is_refused() {
        let p = ModelParams::resonant(0.01).unwrap();
        let b = FockBasis::new(10, 10).unwrap();
        let set = build_full(&p, &b).unwrap();
        let psi = product_state(&b, 0, 3).unwrap();
        assert!(matches!(SpectralPropagator::new(&set.h, &psi, 10), Err(Error::SpectralLimit { .. })));
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let b = FockBasis::new(1, 0).unwrap();
        let h = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0)]);
        let psi = product_state(&b, 0, 0).unwrap();
        assert!(matches!(SpectralPropagator::new(&h, &psi, 10), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn krylov_matches_spectral() {
        let p = ModelParams::resonant(0.01).unwrap();
        let b = FockBasis::new(8, 5).unwrap();
        let set = build_full(&p, &b).unwrap();
        let psi = product_state(&b, 0, 1).unwrap();
        let times: Vec<f64> = (0..=20).map(|j| j as f64 * 25.0).collect();
        let exact = evolve_exact(&set.h, &psi, &times, 1000).unwrap();
        let kry = evolve_krylov(&set.h, &psi, 25.0, 20, 12, 1e-12).unwrap();
        for (a, b) in exact.states.iter().zip(&kry.states) {
            let gap = a.amplitudes().iter().zip(b.amplitudes()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
            assert!(gap < 1e-8, "gap {gap}");
        }
        assert!(kry.norm_drift() < 1e-12 * 20.0);
    }

    #[test]
    fn k2_chain_closed_form() {
        let p = ModelParams::resonant(0.01).unwrap();
        let sub = subspace_dk(&p, 2).unwrap();
        let ev = SubspaceEvolution::new(&sub, &[c(1.0), c(0.0), c(0.0)]).unwrap();
        for i in 0..50 {
            let t = i as f64 * 10.0;
            let x = 2.0 * p.g * t;
            let closed = 0.5 * x.sin().powi(2) + 0.75 * (1.0 - x.cos()).powi(2);
            assert!((ev.photon_mean_at(t) - closed).abs() < 1e-10);
        }
    }

    #[test]
    fn resonant_engine_matches_rwa_spectral() {
        let p = ModelParams::detuned(0.02, 0.01).unwrap();
        let b = FockBasis::new(9, 5).unwrap();
        let set = build_full(&p, &b).unwrap();
        let amps: Vec<Complex64> = (0..b.dim()).map(|i| Complex64::new(1.0 / (1.0 + i as f64), 0.3 * (i % 3) as f64)).collect();
        let psi = StateVector::from_amplitudes(b, amps).unwrap();
        let res = ResonantPropagator::new(&p, &psi).unwrap();
        let spec = SpectralPropagator::new(&set.h_rwa, &psi, 1000).unwrap();
        for t in [0.0, 1.0, 77.0, 400.0] {
            let a = res.state_at(t).unwrap();
            let s = spec.state_at(t).unwrap();
            let gap = a.amplitudes().iter().zip(s.amplitudes()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
            assert!(gap < 1e-10, "t={t} gap {gap}");
        }
    }

    #[test]
    fn grids_must_increase() {
        assert!(check_grid(&[0.0, 1.0, 1.0]).is_err());
        assert!(check_grid(&[-1.0]).is_err());
        assert_eq!(uniform_grid(10.0, 2), vec![0.0, 5.0, 10.0]);
    }
}
