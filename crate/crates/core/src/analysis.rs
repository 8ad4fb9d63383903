//! Efficiencies, recorded observables, scans and curve fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{ModelParams, StateVector};
use crate::hamiltonians::SubspaceDk;
use crate::observables::{
    g2, phonon_mean, photon_mean, reduced_density, state_distribution, state_entropy, Subsystem, G2,
};
use crate::propagate::{check_grid, Propagator, SubspaceEvolution};
use crate::sparse::SparseMatrix;

/// What to record along a trajectory besides `⟨N_a⟩` and `⟨N_b⟩`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RecordOptions {
    pub entropy: bool,
    pub g2: bool,
    /// Record every `stride`-th grid point (`0` is treated as `1`).
    pub stride: usize,
    /// Average the photon and phonon number distributions over samples with
    /// `t >= distributions_from`.
    pub distributions_from: Option<f64>,
}

/// Scalar observables sampled along one evolution, plus the conservation
/// diagnostics gathered on the way.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub photons: Vec<f64>,
    pub phonons: Vec<f64>,
    /// Empty unless requested.
    pub entropy: Vec<f64>,
    /// Empty unless requested; `None` where `⟨N_a⟩` is below the floor.
    pub g2: Vec<Option<G2>>,
    /// Time-averaged number distributions; empty unless requested.
    pub photon_distribution: Vec<f64>,
    pub phonon_distribution: Vec<f64>,
    /// Largest off-diagonal modulus of the photon density at the last sample
    /// (only when distributions are requested).
    pub max_coherence: f64,
    pub invariants: InvariantReport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    /// `max |‖ψ‖ - 1|`.
    pub norm_drift: f64,
    /// Largest change of the odd-photon weight.
    pub parity_leakage: f64,
    /// `max |⟨H⟩(t) - ⟨H⟩(0)| / |⟨H⟩(0)|` (absolute if `⟨H⟩(0) = 0`).
    pub energy_drift: f64,
    /// `max |⟨N_a + 2 N_b⟩(t) - ⟨N_a + 2 N_b⟩(0)| / ⟨N_a + 2 N_b⟩(0)`.
    pub quanta_drift: f64,
    /// Largest probability seen on the two top photon levels.
    pub photon_top: f64,
    /// Largest probability seen on the two top phonon levels.
    pub phonon_top: f64,
}

impl InvariantReport {
    pub fn merge(&mut self, other: &InvariantReport) {
        self.norm_drift = self.norm_drift.max(other.norm_drift);
        self.parity_leakage = self.parity_leakage.max(other.parity_leakage);
        self.energy_drift = self.energy_drift.max(other.energy_drift);
        self.quanta_drift = self.quanta_drift.max(other.quanta_drift);
        self.photon_top = self.photon_top.max(other.photon_top);
        self.phonon_top = self.phonon_top.max(other.phonon_top);
    }
}

/// Pass/fail thresholds for [`InvariantReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantLimits {
    pub norm_drift: f64,
    pub parity_leakage: f64,
    pub energy_drift: f64,
    pub quanta_drift: f64,
    pub top_occupation: f64,
}

impl Default for InvariantLimits {
    fn default() -> Self {
        InvariantLimits {
            norm_drift: 1e-9,
            parity_leakage: 1e-10,
            energy_drift: 1e-8,
            quanta_drift: 0.05,
            top_occupation: 1e-6,
        }
    }
}

impl InvariantLimits {
    /// Names and values of every violated limit.
    pub fn violations(&self, r: &InvariantReport) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, value: f64, limit: f64| {
            if !(value <= limit) {
                out.push(format!("{name} = {value:.3e} exceeds {limit:.1e}"));
            }
        };
        check("norm drift", r.norm_drift, self.norm_drift);
        check("parity leakage", r.parity_leakage, self.parity_leakage);
        check("energy drift", r.energy_drift, self.energy_drift);
        check("quanta drift", r.quanta_drift, self.quanta_drift);
        check("photon top-level occupation", r.photon_top, self.top_occupation);
        check("phonon top-level occupation", r.phonon_top, self.top_occupation);
        out
    }
}

/// Evolve and record observables on the fly. `hamiltonian` is the generator
/// used by `prop`, for the `⟨H⟩` drift diagnostic.
pub fn record(
    prop: &dyn Propagator,
    hamiltonian: &SparseMatrix,
    times: &[f64],
    opts: RecordOptions,
) -> Result<ObservableSeries> {
    check_grid(times)?;
    let stride = opts.stride.max(1);
    let grid: Vec<f64> = times.iter().step_by(stride).copied().collect();
    let psi0 = prop.initial();
    let e0 = hamiltonian.quadratic_form(psi0.amplitudes())?.re;
    let odd0 = psi0.odd_photon_weight();
    let q0 = photon_mean(psi0) + 2.0 * phonon_mean(psi0);
    let mut s = ObservableSeries { times: grid.clone(), ..Default::default() };
    let mut inv = InvariantReport::default();
    let mut averaged = 0usize;
    let last = grid.len().saturating_sub(1);
    prop.for_each_state(&grid, &mut |i, t, psi: &StateVector| {
        if let Some(from) = opts.distributions_from {
            if t >= from {
                accumulate(&mut s.photon_distribution, &state_distribution(psi, Subsystem::Photon).probabilities);
                accumulate(&mut s.phonon_distribution, &state_distribution(psi, Subsystem::Phonon).probabilities);
                averaged += 1;
            }
            if i == last {
                s.max_coherence = reduced_density(psi, Subsystem::Photon).max_coherence();
            }
        }
        let na = photon_mean(psi);
        let nb = phonon_mean(psi);
        s.photons.push(na);
        s.phonons.push(nb);
        if opts.entropy {
            s.entropy.push(state_entropy(psi)?);
        }
        if opts.g2 {
            s.g2.push(g2(psi).ok());
        }
        inv.norm_drift = inv.norm_drift.max((psi.norm() - 1.0).abs());
        inv.parity_leakage = inv.parity_leakage.max((psi.odd_photon_weight() - odd0).abs());
        let e = hamiltonian.quadratic_form(psi.amplitudes())?.re;
        let de = (e - e0).abs();
        inv.energy_drift = inv.energy_drift.max(if e0 != 0.0 { de / e0.abs() } else { de });
        if q0 > 0.0 {
            inv.quanta_drift = inv.quanta_drift.max((na + 2.0 * nb - q0).abs() / q0);
        }
        let (pt, bt) = psi.top_level_occupation();
        inv.photon_top = inv.photon_top.max(pt);
        inv.phonon_top = inv.phonon_top.max(bt);
        Ok(())
    })?;
    if averaged > 0 {
        for p in s.photon_distribution.iter_mut().chain(s.phonon_distribution.iter_mut()) {
            *p /= averaged as f64;
        }
    }
    s.invariants = inv;
    Ok(s)
}

fn accumulate(acc: &mut Vec<f64>, p: &[f64]) {
    if acc.is_empty() {
        acc.resize(p.len(), 0.0);
    }
    for (a, b) in acc.iter_mut().zip(p) {
        *a += b;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyResult {
    pub eta_max: f64,
    pub eta_mean: f64,
    pub t_at_max: f64,
    /// `[t_start, t_end]` of the averaging window.
    pub window: (f64, f64),
}

/// Efficiency of photon production along a recorded `⟨N_a⟩(t)` series:
/// `η(t) = omega_c (⟨N_a⟩(t) - ⟨N_a⟩(0)) / e_b0`.
///
/// `eta_max` is the largest sample, refined by evaluating `refine(t)` on a
/// grid ten times finer around the coarse maximum when given. `eta_mean` is
/// the trapezoidal time average over `window`.
pub fn efficiency(
    times: &[f64],
    photons: &[f64],
    omega_c: f64,
    e_b0: f64,
    window: (f64, f64),
    refine: Option<&dyn Fn(f64) -> Result<f64>>,
) -> Result<EfficiencyResult> {
    if !(e_b0 > 0.0) {
        return Err(Error::InvalidParameter(format!("initial phonon energy must be positive, got {e_b0}")));
    }
    if times.is_empty() || times.len() != photons.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), found: photons.len() });
    }
    let n0 = photons[0];
    let eta = |n: f64| omega_c * (n - n0) / e_b0;
    let (mut i_max, mut best) = (0, f64::MIN);
    for (i, &n) in photons.iter().enumerate() {
        if eta(n) > best {
            best = eta(n);
            i_max = i;
        }
    }
    let mut t_at_max = times[i_max];
    if let Some(f) = refine {
        let lo = times[i_max.saturating_sub(1)];
        let hi = times[(i_max + 1).min(times.len() - 1)];
        if hi > lo {
            for j in 0..=20 {
                let t = lo + (hi - lo) * j as f64 / 20.0;
                let e = eta(f(t)?);
                if e > best {
                    best = e;
                    t_at_max = t;
                }
            }
        }
    }
    let eta_series: Vec<f64> = photons.iter().map(|&n| eta(n)).collect();
    let eta_mean = time_average(times, &eta_series, window)?;
    Ok(EfficiencyResult { eta_max: best.max(0.0), eta_mean, t_at_max, window })
}

/// Trapezoidal average of `y` over the samples that fall inside `window`.
pub fn time_average(times: &[f64], y: &[f64], window: (f64, f64)) -> Result<f64> {
    let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= window.0 && times[i] <= window.1).collect();
    match idx.len() {
        0 => Err(Error::InvalidParameter(format!("no samples inside window [{}, {}]", window.0, window.1))),
        1 => Ok(y[idx[0]]),
        _ => {
            let mut area = 0.0;
            for w in idx.windows(2) {
                area += 0.5 * (y[w[0]] + y[w[1]]) * (times[w[1]] - times[w[0]]);
            }
            Ok(area / (times[*idx.last().unwrap()] - times[idx[0]]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub mean: f64,
    /// Root-mean-square deviation from `mean` over the window.
    pub rms: f64,
    pub window: (f64, f64),
}

/// Time average and rms fluctuation over `[t_min, t_end]`.
pub fn stationary_stats(times: &[f64], y: &[f64], t_min: f64) -> Result<Stationary> {
    let t_end = *times.last().ok_or_else(|| Error::InvalidParameter("empty series".into()))?;
    if times.iter().filter(|&&t| t >= t_min).count() < 2 {
        return Err(Error::InvalidParameter(format!("series does not extend beyond t_min = {t_min}")));
    }
    let mean = time_average(times, y, (t_min, t_end))?;
    let dev: Vec<f64> = y.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = time_average(times, &dev, (t_min, t_end))?;
    Ok(Stationary { mean, rms: var.sqrt(), window: (t_min, t_end) })
}

/// Result of a resonant-chain scan of `η_max` against detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningScan {
    pub k: usize,
    pub deltas: Vec<f64>,
    pub eta_max: Vec<f64>,
    /// Detuning at which `η_max` falls to half its resonant value,
    /// interpolated linearly and averaged over both signs.
    pub half_width: f64,
}

/// `η_max` of `|0, k⟩` inside its resonant chain at one detuning, maximized
/// over `samples` points on `[0, t_end]` with local refinement.
pub fn chain_eta_max(g: f64, delta: f64, k: usize, t_end: f64, samples: usize) -> Result<f64> {
    let params = ModelParams::detuned(g, delta)?;
    let sub = SubspaceDk::manifold(&params, 2 * k, None);
    let mut c0 = vec![num_complex::Complex64::new(0.0, 0.0); sub.dim()];
    c0[0] = num_complex::Complex64::new(1.0, 0.0);
    let ev = SubspaceEvolution::new(&sub, &c0)?;
    let times = crate::propagate::uniform_grid(t_end, samples);
    let photons: Vec<f64> = times.iter().map(|&t| ev.photon_mean_at(t)).collect();
    let e_b0 = params.omega_m * k as f64;
    let refine = |t: f64| Ok(ev.photon_mean_at(t));
    Ok(efficiency(&times, &photons, params.omega_c, e_b0, (0.0, t_end), Some(&refine))?.eta_max)
}

/// Scan `η_max(δω)` for `|0, k⟩` with the resonant-chain evolution.
pub fn detuning_scan(k: usize, deltas: &[f64], g: f64, t_end: f64, samples: usize) -> Result<DetuningScan> {
    if deltas.is_empty() {
        return Err(Error::InvalidParameter("empty detuning grid".into()));
    }
    let eta_max = deltas
        .iter()
        .map(|&d| chain_eta_max(g, d, k, t_end, samples))
        .collect::<Result<Vec<_>>>()?;
    let half_width = half_width(deltas, &eta_max)?;
    Ok(DetuningScan { k, deltas: deltas.to_vec(), eta_max, half_width })
}

/// Half width at half maximum of a peak centred on `δ = 0`. The grid must
/// contain `0` and reach at least five half widths on each side present.
pub fn half_width(deltas: &[f64], values: &[f64]) -> Result<f64> {
    let mut pts: Vec<(f64, f64)> = deltas.iter().copied().zip(values.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let centre = pts
        .iter()
        .position(|p| p.0 == 0.0)
        .ok_or_else(|| Error::InvalidParameter("detuning grid must contain 0".into()))?;
    let half = 0.5 * pts[centre].1;
    let crossing = |range: Box<dyn Iterator<Item = usize>>| -> Option<f64> {
        let mut prev = centre;
        for i in range {
            if pts[i].1 <= half {
                let (d0, y0) = pts[prev];
                let (d1, y1) = pts[i];
                return Some((d0 + (half - y0) * (d1 - d0) / (y1 - y0)).abs());
            }
            prev = i;
        }
        None
    };
    let right = crossing(Box::new(centre + 1..pts.len()));
    let left = crossing(Box::new((0..centre).rev()));
    let sides: Vec<f64> = [right, left].into_iter().flatten().collect();
    if sides.is_empty() {
        return Err(Error::InvalidParameter("detuning grid too narrow: the peak never halves".into()));
    }
    let hw = sides.iter().sum::<f64>() / sides.len() as f64;
    let reach = pts.last().unwrap().0.max(-pts[0].0);
    if reach < 5.0 * hw * (1.0 - 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "detuning grid too narrow: reaches {reach:.3e}, needs five half widths ({:.3e})",
            5.0 * hw
        )));
    }
    Ok(hw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    ExpSaturation,
    LinearGibbs,
    PowerLaw,
    Lorentzian,
    Linear,
}

impl std::fmt::Display for FitModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitModel::ExpSaturation => "exp_saturation",
            FitModel::LinearGibbs => "linear_gibbs",
            FitModel::PowerLaw => "power_law",
            FitModel::Lorentzian => "lorentzian",
            FitModel::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub parameters: Vec<FitParameter>,
    pub r_squared: f64,
    pub residual_norm: f64,
    pub samples: usize,
    /// Post-hoc caveats (e.g. a saturation fit whose data span less than 3τ).
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> f64 {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.value)
            .unwrap_or_else(|| panic!("fit has no parameter {name}"))
    }

    pub fn stderr(&self, name: &str) -> f64 {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.stderr).unwrap_or(f64::NAN)
    }
}

fn r_squared(y: &[f64], fitted: &[f64], w: &[f64]) -> (f64, f64) {
    let wsum: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / wsum;
    let rss: f64 = y.iter().zip(fitted).zip(w).map(|((a, b), wi)| wi * (a - b) * (a - b)).sum();
    let tss: f64 = y.iter().zip(w).map(|(a, wi)| wi * (a - mean) * (a - mean)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else if rss == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    (r2, rss.sqrt())
}

/// Weighted straight line `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64], w: Option<&[f64]>) -> Result<FitResult> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::Fit("a line needs at least two points".into()));
    }
    let ones = vec![1.0; n];
    let w = w.unwrap_or(&ones);
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let fitted: Vec<f64> = x.iter().map(|a| slope * a + intercept).collect();
    let (r2, res) = r_squared(y, &fitted, w);
    // parameter errors with weights treated as relative
    let dof = (n as f64 - 2.0).max(1.0);
    let sigma2 = res * res / dof;
    let slope_err = (sigma2 / sxx).sqrt();
    let intercept_err = (sigma2 * (1.0 / sw + mx * mx / sxx)).sqrt();
    Ok(FitResult {
        model: FitModel::Linear,
        parameters: vec![
            FitParameter { name: "slope".into(), value: slope, stderr: slope_err },
            FitParameter { name: "intercept".into(), value: intercept, stderr: intercept_err },
        ],
        r_squared: r2,
        residual_norm: res,
        samples: n,
        warnings: Vec::new(),
    })
}

/// Levenberg–Marquardt for a model with a handful of parameters, using
/// central-difference Jacobians. Returns the parameters and their standard
/// errors from the linearized normal equations.
fn levenberg_marquardt(
    x: &[f64],
    y: &[f64],
    p0: &[f64],
    model: &dyn Fn(f64, &[f64]) -> f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.len();
    let m = p0.len();
    let residuals = |p: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(&xi, &yi)| yi - model(xi, p)).collect() };
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let jacobian = |p: &[f64]| -> DMatrix<f64> {
        let mut j = DMatrix::zeros(n, m);
        for c in 0..m {
            let h = 1e-7 * p[c].abs().max(1e-7);
            let mut up = p.to_vec();
            let mut dn = p.to_vec();
            up[c] += h;
            dn[c] -= h;
            for (r, &xi) in x.iter().enumerate() {
                j[(r, c)] = (model(xi, &up) - model(xi, &dn)) / (2.0 * h);
            }
        }
        j
    };
    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let j = jacobian(&p);
        let jtj = j.tr_mul(&j);
        let jtr = j.tr_mul(&DVector::from_column_slice(&r));
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..m {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = residuals(&trial);
            let ct = cost(&rt);
            if ct.is_finite() && ct <= c {
                let rel = (c - ct) / c.max(f64::MIN_POSITIVE);
                let small_step = step.iter().zip(&trial).all(|(s, v)| s.abs() <= 1e-12 * v.abs().max(1e-300));
                p = trial;
                r = rt;
                c = ct;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel < 1e-15 || small_step {
                    return Ok((p.clone(), stderrs(&jacobian(&p), c, n)));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("nonlinear fit diverged".into()));
    }
    Ok((p.clone(), stderrs(&jacobian(&p), c, n)))
}

fn stderrs(j: &DMatrix<f64>, rss: f64, n: usize) -> Vec<f64> {
    let m = j.ncols();
    let dof = (n as f64 - m as f64).max(1.0);
    let cov = j.tr_mul(j).try_inverse();
    (0..m)
        .map(|d| cov.as_ref().map_or(f64::NAN, |c| (c[(d, d)] * rss / dof).abs().sqrt()))
        .collect()
}

/// `S(t) = S_∞ (1 - e^{-t/τ})`. The starting point comes from a straight-line
/// fit of `ln(1 - S/S_∞)` against `t`, then both parameters are refined by
/// nonlinear least squares.
pub fn fit_exp_saturation(times: &[f64], s: &[f64]) -> Result<FitResult> {
    let n = times.len();
    if n < 20 || s.len() != n {
        return Err(Error::Fit(format!("saturation fit needs at least 20 samples, got {n}")));
    }
    let t_end = times[n - 1];
    let tail_start = times.iter().position(|&t| t >= 0.8 * t_end).unwrap_or(n - 1);
    let tail_mean = s[tail_start..].iter().sum::<f64>() / (n - tail_start) as f64;
    let s_peak = s.iter().copied().fold(f64::MIN, f64::max);
    if !(s_peak > 0.0) {
        return Err(Error::Fit("series never rises above zero".into()));
    }
    let s_inf0 = tail_mean.max(1e-300) * 1.02;
    let (lx, ly): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(s)
        .filter(|(&t, &v)| t > 0.0 && v > 0.0 && v < 0.98 * s_inf0)
        .map(|(&t, &v)| (t, (1.0 - v / s_inf0).ln()))
        .unzip();
    let tau0 = if lx.len() >= 2 {
        // slope through the origin of ln(1 - S/S_inf) = -t/tau
        let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| a * b).sum();
        let sxx: f64 = lx.iter().map(|a| a * a).sum();
        let slope = sxy / sxx;
        if slope < 0.0 { -1.0 / slope } else { t_end / 3.0 }
    } else {
        t_end / 3.0
    };
    let model = |t: f64, p: &[f64]| p[0] * (1.0 - (-t / p[1]).exp());
    let (p, err) = levenberg_marquardt(times, s, &[s_inf0, tau0.max(1e-12)], &model)?;
    if !(p[1] > 0.0) || !(p[0] > 0.0) {
        return Err(Error::Fit(format!("saturation fit gave S_inf = {}, tau = {}", p[0], p[1])));
    }
    let fitted: Vec<f64> = times.iter().map(|&t| model(t, &p)).collect();
    let (r2, res) = r_squared(s, &fitted, &vec![1.0; n]);
    let mut warnings = Vec::new();
    if t_end - times[0] < 3.0 * p[1] {
        warnings.push(format!("series spans {:.3e}, less than 3 tau = {:.3e}", t_end - times[0], 3.0 * p[1]));
    }
    Ok(FitResult {
        model: FitModel::ExpSaturation,
        parameters: vec![
            FitParameter { name: "s_inf".into(), value: p[0], stderr: err[0] },
            FitParameter { name: "tau".into(), value: p[1], stderr: err[1] },
        ],
        r_squared: r2,
        residual_norm: res,
        samples: n,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsOptions {
    /// Levels with smaller probability are ignored.
    pub p_floor: f64,
    /// Fit only levels at least this far above the mode.
    pub tail_offset: usize,
    /// Restrict to even levels (photons created in pairs).
    pub even_only: bool,
    pub min_levels: usize,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        GibbsOptions { p_floor: 1e-8, tail_offset: 2, even_only: false, min_levels: 5 }
    }
}

impl GibbsOptions {
    pub fn photons() -> Self {
        GibbsOptions { even_only: true, ..Default::default() }
    }
}

/// Weighted line through `-ln P(n)` against `n omega` on the large-`n` tail.
/// The slope is the inverse temperature `beta`, the intercept `ln Z`.
pub fn fit_gibbs_temperature(probabilities: &[f64], omega: f64, opts: GibbsOptions) -> Result<FitResult> {
    let mode = probabilities
        .iter()
        .enumerate()
        .filter(|(n, _)| !opts.even_only || n % 2 == 0)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(n, _)| n)
        .unwrap_or(0);
    let levels: Vec<usize> = (mode + opts.tail_offset..probabilities.len())
        .filter(|&n| probabilities[n] >= opts.p_floor)
        .filter(|&n| !opts.even_only || n % 2 == 0)
        .collect();
    if levels.len() < opts.min_levels {
        return Err(Error::Fit(format!(
            "Gibbs fit needs {} levels above {:.1e}, found {}",
            opts.min_levels,
            opts.p_floor,
            levels.len()
        )));
    }
    let x: Vec<f64> = levels.iter().map(|&n| n as f64 * omega).collect();
    let y: Vec<f64> = levels.iter().map(|&n| -probabilities[n].ln()).collect();
    let w: Vec<f64> = levels.iter().map(|&n| probabilities[n]).collect();
    let line = linear_fit(&x, &y, Some(&w))?;
    Ok(FitResult {
        model: FitModel::LinearGibbs,
        parameters: vec![
            FitParameter { name: "beta".into(), value: line.param("slope"), stderr: line.stderr("slope") },
            FitParameter { name: "log_z".into(), value: line.param("intercept"), stderr: line.stderr("intercept") },
        ],
        ..line
    })
}

/// `y = prefactor x^exponent`, fitted as a line in log–log coordinates.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("power-law fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let line = linear_fit(&lx, &ly, None)?;
    let a = line.param("intercept").exp();
    Ok(FitResult {
        model: FitModel::PowerLaw,
        parameters: vec![
            FitParameter { name: "exponent".into(), value: line.param("slope"), stderr: line.stderr("slope") },
            FitParameter { name: "prefactor".into(), value: a, stderr: a * line.stderr("intercept") },
        ],
        ..line
    })
}

/// `y = amplitude / (1 + (x / half_width)²)`.
pub fn fit_lorentzian(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() < 3 || x.len() != y.len() {
        return Err(Error::Fit("Lorentzian fit needs at least three points".into()));
    }
    let amp0 = y.iter().copied().fold(f64::MIN, f64::max);
    let hw0 = half_width(x, y).unwrap_or_else(|_| x.iter().fold(0.0f64, |m, v| m.max(v.abs())) / 2.0);
    let model = |t: f64, p: &[f64]| p[0] / (1.0 + (t / p[1]).powi(2));
    let (p, err) = levenberg_marquardt(x, y, &[amp0, hw0], &model)?;
    let fitted: Vec<f64> = x.iter().map(|&t| model(t, &p)).collect();
    let (r2, res) = r_squared(y, &fitted, &vec![1.0; x.len()]);
    Ok(FitResult {
        model: FitModel::Lorentzian,
        parameters: vec![
            FitParameter { name: "amplitude".into(), value: p[0], stderr: err[0] },
            FitParameter { name: "half_width".into(), value: p[1].abs(), stderr: err[1] },
        ],
        r_squared: r2,
        residual_norm: res,
        samples: x.len(),
        warnings: Vec::new(),
    })
}
