//! Typed drivers for the standard scenarios: product states, stimulated
//! creation, coherent and thermal phonons. The `xdce` runner, the examples
//! and the acceptance suite all go through these.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    efficiency, fit_exp_saturation, fit_gibbs_temperature, record, stationary_stats, time_average, EfficiencyResult,
    FitResult, GibbsOptions, InvariantReport, ObservableSeries, RecordOptions, Stationary,
};
use crate::error::{Error, Result};
use crate::fock::{
    coherent_cutoff, coherent_leakage, coherent_phonon_state, product_state, thermal_cutoff, thermal_leakage,
    thermal_phonon_state, FockBasis, ModelParams, StateVector, LEAKAGE_LIMIT,
};
use crate::hamiltonians::{build_full, build_rwa, SubspaceDk};
use crate::observables::{g2, G2};
use crate::propagate::{
    uniform_grid, KrylovPropagator, Method, Propagator, ResonantPropagator, SpectralPropagator, SubspaceEvolution,
    DEFAULT_SPECTRAL_LIMIT,
};
use crate::semiclassical::{eta_sc, period, SemiclassicalEfficiency, SemiclassicalParams};
use crate::sparse::SparseMatrix;

/// Which Hamiltonian and integrator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Full Hamiltonian, spectral decomposition.
    Exact,
    /// Full Hamiltonian, Lanczos stepping.
    Krylov,
    /// Rotating-wave Hamiltonian, exact chain evolution.
    Rwa,
    /// Full Hamiltonian; spectral below the block limit, Krylov above.
    Auto,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "spectral" => Ok(Engine::Exact),
            "krylov" => Ok(Engine::Krylov),
            "rwa" | "pt" => Ok(Engine::Rwa),
            "auto" => Ok(Engine::Auto),
            other => Err(Error::Config(format!("unknown engine `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub engine: Engine,
    pub spectral_limit: usize,
    pub krylov_dim: usize,
    pub krylov_dt: f64,
    pub krylov_tol: f64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            engine: Engine::Auto,
            spectral_limit: DEFAULT_SPECTRAL_LIMIT,
            krylov_dim: 30,
            krylov_dt: 5.0,
            krylov_tol: 1e-12,
        }
    }
}

impl EngineOptions {
    pub fn with(engine: Engine) -> Self {
        EngineOptions { engine, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub na_max: usize,
    pub nb_max: usize,
}

impl Cutoffs {
    /// Default for `|n0, k0⟩`: with `k = k0 + n0/2` free quanta in phonon
    /// units, `na_max = 2k + 10` and `nb_max = k + 5`.
    pub fn for_product(n0: usize, k0: usize) -> Cutoffs {
        let twice_k = n0 + 2 * k0;
        Cutoffs { na_max: twice_k + 10, nb_max: twice_k.div_ceil(2) + 5 }
    }

    pub fn basis(&self) -> Result<FockBasis> {
        FockBasis::new(self.na_max, self.nb_max)
    }
}

/// Build the propagator selected by `opts` for `psi0`, returning it with the
/// generator it evolves under.
pub fn propagator(
    params: &ModelParams,
    psi0: &StateVector,
    opts: &EngineOptions,
) -> Result<(Box<dyn Propagator>, SparseMatrix)> {
    let basis = psi0.basis();
    if opts.engine == Engine::Rwa {
        return Ok((Box::new(ResonantPropagator::new(params, psi0)?), build_rwa(params, basis)));
    }
    let set = build_full(params, basis)?;
    let h = set.h;
    let touched = h
        .connected_blocks()
        .into_iter()
        .filter(|b| b.iter().any(|&i| psi0.amplitudes()[i] != Complex64::new(0.0, 0.0)))
        .map(|b| b.len())
        .max()
        .unwrap_or(0);
    let krylov = match opts.engine {
        Engine::Exact => false,
        Engine::Krylov => true,
        _ => touched > opts.spectral_limit,
    };
    let prop: Box<dyn Propagator> = if krylov {
        Box::new(KrylovPropagator::new(Arc::new(h.clone()), psi0, opts.krylov_dim, opts.krylov_dt, opts.krylov_tol)?)
    } else {
        Box::new(SpectralPropagator::new(&h, psi0, opts.spectral_limit)?)
    };
    Ok((prop, h))
}

/// Period of the photon-number oscillation of `|n0, k0⟩`, from the
/// semiclassical equation.
pub fn conversion_period(g: f64, n0: usize, k0: usize) -> Result<f64> {
    period(&SemiclassicalParams::for_product(g, n0, k0)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductRequest {
    pub g: f64,
    pub delta_omega: f64,
    /// Initial photons.
    pub n0: usize,
    /// Initial phonons.
    pub k0: usize,
    pub t_end: f64,
    pub samples: usize,
    pub engine: EngineOptions,
    pub cutoffs: Option<Cutoffs>,
    pub entropy: bool,
    pub g2: bool,
    /// Number of conversion periods in the `η_mean` window.
    pub mean_periods: f64,
}

impl ProductRequest {
    pub fn new(g: f64, n0: usize, k0: usize) -> Self {
        ProductRequest {
            g,
            delta_omega: 0.0,
            n0,
            k0,
            t_end: 5000.0,
            samples: 2000,
            engine: EngineOptions::default(),
            cutoffs: None,
            entropy: true,
            g2: false,
            mean_periods: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProductResult {
    pub cutoffs: Cutoffs,
    pub method: Method,
    pub series: ObservableSeries,
    pub efficiency: EfficiencyResult,
    pub period: f64,
    pub entropy_max: Option<f64>,
    pub entropy_mean: Option<f64>,
}

pub fn run_product(req: &ProductRequest) -> Result<ProductResult> {
    if req.k0 == 0 {
        return Err(Error::InvalidParameter("product scenario needs at least one phonon".into()));
    }
    let params = ModelParams::detuned(req.g, req.delta_omega)?;
    let times = uniform_grid(req.t_end, req.samples);
    let period = conversion_period(req.g, req.n0, req.k0)?;
    let window = (0.0, (req.mean_periods * period).min(req.t_end));
    let e_b0 = params.omega_m * req.k0 as f64;

    let (cutoffs, method, series, eff) = if req.engine.engine == Engine::Rwa {
        let chain = SubspaceDk::manifold(&params, req.n0 + 2 * req.k0, None);
        let start = chain.states().iter().position(|&s| s == (req.n0, req.k0)).expect("state lies on its chain");
        let mut c0 = vec![Complex64::new(0.0, 0.0); chain.dim()];
        c0[start] = Complex64::new(1.0, 0.0);
        let ev = SubspaceEvolution::new(&chain, &c0)?;
        let series = chain_series(&ev, &chain, &times, req.entropy, req.g2);
        let refine = |t: f64| Ok(ev.photon_mean_at(t));
        let eff = efficiency(&series.times, &series.photons, params.omega_c, e_b0, window, Some(&refine))?;
        let cut = Cutoffs { na_max: req.n0 + 2 * req.k0, nb_max: req.k0 + req.n0 / 2 };
        (cut, Method::Resonant, series, eff)
    } else {
        let cut = req.cutoffs.unwrap_or_else(|| Cutoffs::for_product(req.n0, req.k0));
        let basis = cut.basis()?;
        let psi0 = product_state(&basis, req.n0, req.k0)?;
        let (prop, h) = propagator(&params, &psi0, &req.engine)?;
        let opts = RecordOptions { entropy: req.entropy, g2: req.g2, ..Default::default() };
        let series = record(prop.as_ref(), &h, &times, opts)?;
        let refine = |t: f64| Ok(crate::observables::photon_mean(&prop.state_at(t)?));
        let eff = efficiency(&series.times, &series.photons, params.omega_c, e_b0, window, Some(&refine))?;
        (cut, prop.method(), series, eff)
    };
    let (entropy_max, entropy_mean) = if series.entropy.is_empty() {
        (None, None)
    } else {
        let max = series.entropy.iter().copied().fold(0.0, f64::max);
        (Some(max), Some(time_average(&series.times, &series.entropy, window)?))
    };
    Ok(ProductResult { cutoffs, method, series, efficiency: eff, period, entropy_max, entropy_mean })
}

/// Observables of a state confined to one chain. Each photon number pairs
/// with exactly one phonon number there, so the state is already in Schmidt
/// form and the entropy is that of the chain probabilities.
fn chain_series(ev: &SubspaceEvolution, chain: &SubspaceDk, times: &[f64], entropy: bool, with_g2: bool) -> ObservableSeries {
    let labels = ev.labels();
    let w = chain.w();
    let mut s = ObservableSeries { times: times.to_vec(), ..Default::default() };
    let mut inv = InvariantReport::default();
    let mut e0 = None;
    for &t in times {
        let c = ev.coefficients_at(t);
        let p: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
        let na: f64 = labels.iter().zip(&p).map(|(&(n, _), q)| n as f64 * q).sum();
        let nb: f64 = labels.iter().zip(&p).map(|(&(_, m), q)| m as f64 * q).sum();
        s.photons.push(na);
        s.phonons.push(nb);
        if entropy {
            s.entropy.push(p.iter().filter(|&&q| q >= 1e-14).map(|&q| -q * q.ln()).sum::<f64>() + 0.0);
        }
        if with_g2 {
            let mut dist = vec![0.0; labels.iter().map(|l| l.0).max().unwrap_or(0) + 1];
            for (&(n, _), q) in labels.iter().zip(&p) {
                dist[n] += q;
            }
            s.g2.push(g2(dist.as_slice()).ok());
        }
        let norm: f64 = p.iter().sum::<f64>().sqrt();
        inv.norm_drift = inv.norm_drift.max((norm - 1.0).abs());
        let mut energy = chain.offset() * norm * norm;
        for i in 0..c.len() {
            for j in 0..c.len() {
                energy += (c[i].conj() * c[j]).re * w[(i, j)];
            }
        }
        let e0 = *e0.get_or_insert(energy);
        let de = (energy - e0).abs();
        inv.energy_drift = inv.energy_drift.max(if e0 != 0.0 { de / e0.abs() } else { de });
        let q0 = chain.quanta() as f64;
        inv.quanta_drift = inv.quanta_drift.max((na + 2.0 * nb - q0 * norm * norm).abs() / q0);
    }
    s.invariants = inv;
    s
}

/// One point of the stimulated-creation family `|2n, k0⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulatedPoint {
    pub pairs: usize,
    /// Initial photon share of the free energy, `2n / (2n + 2 k0)`.
    pub photon_fraction: f64,
    pub efficiency: EfficiencyResult,
    pub semiclassical: SemiclassicalEfficiency,
    pub invariants: InvariantReport,
}

pub fn stimulated_point(g: f64, k0: usize, pairs: usize, t_end: f64, samples: usize, engine: EngineOptions) -> Result<StimulatedPoint> {
    let mut req = ProductRequest::new(g, 2 * pairs, k0);
    req.t_end = t_end;
    req.samples = samples;
    req.engine = engine;
    req.entropy = false;
    let run = run_product(&req)?;
    let sc = eta_sc(&SemiclassicalParams::for_product(g, 2 * pairs, k0)?);
    Ok(StimulatedPoint {
        pairs,
        photon_fraction: (2 * pairs) as f64 / (2 * pairs + 2 * k0) as f64,
        efficiency: run.efficiency,
        semiclassical: sc,
        invariants: run.series.invariants,
    })
}

/// Initial phonon state for the stationary scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhononState {
    Coherent { alpha: f64 },
    Thermal { t0: f64 },
}

impl PhononState {
    /// Thermal state with a given initial mean phonon number at `omega_m`.
    pub fn thermal_with_mean(mean: f64, omega_m: f64) -> PhononState {
        PhononState::Thermal { t0: 2.0 * omega_m / ((1.0 + mean) / mean).ln() }
    }

    fn phonon_cutoff(&self, omega_m: f64, limit: f64) -> usize {
        match *self {
            PhononState::Coherent { alpha } => coherent_cutoff(Complex64::new(alpha, 0.0), limit),
            PhononState::Thermal { t0 } => thermal_cutoff(omega_m, t0, limit),
        }
    }

    pub fn leakage(&self, omega_m: f64, nb_max: usize) -> f64 {
        match *self {
            PhononState::Coherent { alpha } => coherent_leakage(Complex64::new(alpha, 0.0), nb_max),
            PhononState::Thermal { t0 } => thermal_leakage(omega_m, t0, nb_max),
        }
    }

    /// Automatic cutoffs: `nb_max` from the leakage limit; `na_max` twice the
    /// phonon level beyond which at most `1e-6` of the weight lies, since a
    /// chain started at `|0, k⟩` holds at most `2k` photons.
    pub fn auto_cutoffs(&self, omega_m: f64) -> Cutoffs {
        let nb_max = self.phonon_cutoff(omega_m, LEAKAGE_LIMIT).max(2);
        let bulk = self.phonon_cutoff(omega_m, 1e-6).max(2);
        Cutoffs { na_max: 2 * bulk + 2, nb_max }
    }

    pub fn prepare(&self, basis: &FockBasis, params: &ModelParams) -> Result<StateVector> {
        match *self {
            PhononState::Coherent { alpha } => coherent_phonon_state(basis, Complex64::new(alpha, 0.0)),
            PhononState::Thermal { t0 } => thermal_phonon_state(basis, params, t0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryRequest {
    pub g: f64,
    pub state: PhononState,
    pub t_end: f64,
    pub samples: usize,
    pub engine: EngineOptions,
    pub cutoffs: Option<Cutoffs>,
    pub entropy: bool,
    pub g2: bool,
    pub distributions: bool,
    /// Enlargements of the photon/phonon cutoff allowed when the top levels
    /// fill up during evolution.
    pub max_enlargements: usize,
}

impl StationaryRequest {
    pub fn new(g: f64, state: PhononState) -> Self {
        StationaryRequest {
            g,
            state,
            t_end: 5000.0,
            samples: 1000,
            engine: EngineOptions::with(Engine::Rwa),
            cutoffs: None,
            entropy: false,
            g2: false,
            distributions: false,
            max_enlargements: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryResult {
    pub cutoffs: Cutoffs,
    pub leakage: f64,
    pub method: Method,
    pub initial_phonons: f64,
    pub series: ObservableSeries,
    /// `η_mean` over the second half of the run.
    pub efficiency: EfficiencyResult,
    pub photons: Stationary,
    pub g2_standard: Option<Stationary>,
    pub g2_unsquared: Option<Stationary>,
    pub entropy_fit: Option<FitResult>,
    pub beta_photon: Option<FitResult>,
    pub beta_phonon: Option<FitResult>,
}

pub fn run_stationary(req: &StationaryRequest) -> Result<StationaryResult> {
    let params = ModelParams::resonant(req.g)?;
    let explicit = req.cutoffs.is_some();
    let mut cut = req.cutoffs.unwrap_or_else(|| req.state.auto_cutoffs(params.omega_m));
    let times = uniform_grid(req.t_end, req.samples);
    let t_half = 0.5 * req.t_end;
    let limit = crate::analysis::InvariantLimits::default().top_occupation;
    let mut attempt = 0;
    loop {
        let basis = cut.basis()?;
        let psi0 = req.state.prepare(&basis, &params)?;
        let leakage = req.state.leakage(params.omega_m, cut.nb_max);
        let (prop, h) = propagator(&params, &psi0, &req.engine)?;
        let opts = RecordOptions {
            entropy: req.entropy,
            g2: req.g2,
            stride: 1,
            distributions_from: req.distributions.then_some(t_half),
        };
        let series = record(prop.as_ref(), &h, &times, opts)?;
        let inv = series.invariants;
        let photon_full = inv.photon_top > limit;
        let phonon_full = inv.phonon_top > limit;
        if photon_full || phonon_full {
            if explicit || attempt >= req.max_enlargements {
                return Err(Error::Truncation { leakage: inv.photon_top.max(inv.phonon_top), limit });
            }
            attempt += 1;
            if photon_full {
                cut.na_max = (cut.na_max * 5 / 4 + 1) & !1;
            }
            if phonon_full {
                cut.nb_max = cut.nb_max * 5 / 4 + 1;
            }
            continue;
        }
        return summarize(req, &params, cut, leakage, prop.method(), &psi0, series);
    }
}

fn summarize(
    req: &StationaryRequest,
    params: &ModelParams,
    cutoffs: Cutoffs,
    leakage: f64,
    method: Method,
    psi0: &StateVector,
    series: ObservableSeries,
) -> Result<StationaryResult> {
    let t_half = 0.5 * req.t_end;
    let initial_phonons = crate::observables::phonon_mean(psi0);
    let e_b0 = params.omega_m * initial_phonons;
    let eff = efficiency(&series.times, &series.photons, params.omega_c, e_b0, (t_half, req.t_end), None)?;
    let photons = stationary_stats(&series.times, &series.photons, t_half)?;
    let g2_stat = |pick: fn(&G2) -> f64| -> Option<Stationary> {
        let (t, v): (Vec<f64>, Vec<f64>) =
            series.times.iter().zip(&series.g2).filter_map(|(&t, g)| g.as_ref().map(|g| (t, pick(g)))).unzip();
        stationary_stats(&t, &v, t_half).ok()
    };
    let (g2_standard, g2_unsquared) = if series.g2.is_empty() {
        (None, None)
    } else {
        (g2_stat(|g| g.standard), g2_stat(|g| g.unsquared))
    };
    let entropy_fit = if series.entropy.is_empty() { None } else { fit_exp_saturation(&series.times, &series.entropy).ok() };
    let (beta_photon, beta_phonon) = if series.photon_distribution.is_empty() {
        (None, None)
    } else {
        (
            fit_gibbs_temperature(&series.photon_distribution, params.omega_c, GibbsOptions::photons()).ok(),
            fit_gibbs_temperature(&series.phonon_distribution, params.omega_m, GibbsOptions::default()).ok(),
        )
    };
    Ok(StationaryResult {
        cutoffs,
        leakage,
        method,
        initial_phonons,
        series,
        efficiency: eff,
        photons,
        g2_standard,
        g2_unsquared,
        entropy_fit,
        beta_photon,
        beta_phonon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_defaults() {
        assert_eq!(Cutoffs::for_product(0, 9), Cutoffs { na_max: 28, nb_max: 14 });
        assert_eq!("pt".parse::<Engine>().unwrap(), Engine::Rwa);
        assert!("bogus".parse::<Engine>().is_err());
    }

    #[test]
    fn k1_chain_and_full_agree() {
        let mut req = ProductRequest::new(0.01, 0, 1);
        req.t_end = 600.0;
        req.samples = 600;
        req.engine = EngineOptions::with(Engine::Rwa);
        let chain = run_product(&req).unwrap();
        assert!((chain.efficiency.eta_max - 1.0).abs() < 1e-6);
        req.engine = EngineOptions::with(Engine::Exact);
        let full = run_product(&req).unwrap();
        assert!((full.efficiency.eta_max - 1.0).abs() < 0.01);
        assert!(full.series.invariants.norm_drift < 1e-9);
    }

    #[test]
    fn thermal_mean_round_trips() {
        let s = PhononState::thermal_with_mean(2.0, 2.0);
        let PhononState::Thermal { t0 } = s else { unreachable!() };
        let x2 = (-2.0 * 2.0 / t0).exp();
        assert!((x2 / (1.0 - x2) - 2.0).abs() < 1e-12);
    }
}
