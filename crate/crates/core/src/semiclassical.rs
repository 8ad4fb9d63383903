//! Mean-field reduction of the photon number to a particle in a cubic well.
//!
//! With `E = ⟨H0⟩ / omega_c` fixed, the rotating-wave dynamics give
//! `N'' = g² (E + 2 E N - 3 N²) = -V'(N)` with
//! `V(N) = g² (N³ - E N² - E N)`, after factorizing `⟨N_a N_b⟩` and `⟨N_a²⟩`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalParams {
    pub g: f64,
    /// Total free energy in units of `omega_c` (`n0 + 2 k0` for `|n0, k0⟩`).
    pub energy: f64,
    /// Initial photon number.
    pub n0: f64,
    /// Initial `dN/dt`.
    pub v0: f64,
}

impl SemiclassicalParams {
    pub fn new(g: f64, energy: f64, n0: f64) -> Result<Self> {
        if !(g > 0.0) {
            return Err(Error::InvalidParameter(format!("g must be positive, got {g}")));
        }
        if !(energy > 0.0) {
            return Err(Error::InvalidParameter(format!("energy must be positive, got {energy}")));
        }
        if !(0.0..=energy).contains(&n0) {
            return Err(Error::InvalidParameter(format!("n0 = {n0} must lie in [0, {energy}]")));
        }
        Ok(SemiclassicalParams { g, energy, n0, v0: 0.0 })
    }

    /// Parameters for the product state `|n0, k0⟩` at `omega_c = 1`, `omega_m = 2`.
    pub fn for_product(g: f64, n0: usize, k0: usize) -> Result<Self> {
        SemiclassicalParams::new(g, (n0 + 2 * k0) as f64, n0 as f64)
    }
}

pub fn potential(n: f64, p: &SemiclassicalParams) -> f64 {
    let e = p.energy;
    p.g * p.g * (n * n * n - e * n * n - e * n)
}

/// `-V'(N)`.
pub fn force(n: f64, p: &SemiclassicalParams) -> f64 {
    let e = p.energy;
    p.g * p.g * (e + 2.0 * e * n - 3.0 * n * n)
}

/// Location of the well bottom, `(E + √(E² + 3E)) / 3`.
pub fn potential_minimum(p: &SemiclassicalParams) -> f64 {
    let e = p.energy;
    (e + (e * e + 3.0 * e).sqrt()) / 3.0
}

/// Location of the local maximum left of the well, `(E - √(E² + 3E)) / 3`.
fn potential_barrier(p: &SemiclassicalParams) -> f64 {
    let e = p.energy;
    (e - (e * e + 3.0 * e).sqrt()) / 3.0
}

/// `V''` at the well bottom.
pub fn curvature_at_minimum(p: &SemiclassicalParams) -> f64 {
    p.g * p.g * (6.0 * potential_minimum(p) - 2.0 * p.energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurningPoint {
    /// Root of `V(x) = V(n0)` across the well.
    pub raw: f64,
    /// `raw` clamped to the physical range `[0, E]`.
    pub n1: f64,
    /// `n0` sits at the well bottom and nothing oscillates.
    pub flat: bool,
}

/// The other turning point of the oscillation started at rest at `n0`.
///
/// `V(x) - V(n0)` is deflated by the known root `x = n0`, leaving
/// `x² + (n0 - E) x + (n0² - E n0 - E)`; its root on the far side of the well
/// seeds a bisection on the full cubic.
pub fn turning_point(p: &SemiclassicalParams) -> TurningPoint {
    let x_min = potential_minimum(p);
    let n0 = p.n0;
    if (n0 - x_min).abs() <= 1e-9 * x_min.max(1.0) {
        return TurningPoint { raw: n0, n1: n0, flat: true };
    }
    let e = p.energy;
    let b = n0 - e;
    let c = n0 * n0 - e * n0 - e;
    let disc = (b * b - 4.0 * c).max(0.0).sqrt();
    // the third root lies beyond the barrier on either side
    let guess = 0.5 * (-b + disc);

    let target = potential(n0, p);
    let f = |x: f64| potential(x, p) - target;
    let (mut lo, mut hi) = if n0 < x_min {
        let mut hi = guess.max(x_min) * (1.0 + 1e-6) + 1e-9;
        while f(hi) < 0.0 {
            hi = x_min + 2.0 * (hi - x_min);
        }
        (x_min.max(guess * (1.0 - 1e-6) - 1e-9), hi)
    } else {
        let barrier = potential_barrier(p);
        if f(barrier) < 0.0 {
            // the particle would escape over the barrier
            return TurningPoint { raw: barrier, n1: barrier.clamp(0.0, e), flat: false };
        }
        (barrier.max(guess * (1.0 - 1e-6) - 1e-9), x_min.min(guess * (1.0 + 1e-6) + 1e-9))
    };
    if f(lo).signum() == f(hi).signum() {
        if n0 < x_min {
            lo = x_min;
        } else {
            lo = potential_barrier(p);
            hi = x_min;
        }
    }
    let rising = f(hi) > f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) <= 1e-13 * mid.abs().max(1.0) {
            break;
        }
        if (f(mid) > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let raw = 0.5 * (lo + hi);
    TurningPoint { raw, n1: raw.clamp(0.0, e), flat: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalEfficiency {
    /// `(n_max - n0) / (E - n0)`, at least zero.
    pub eta_max: f64,
    /// Largest photon number reached, clamped to `[n0, E]`.
    pub n_max: f64,
    /// `n_max / E`.
    pub photon_fraction: f64,
}

pub fn eta_sc(p: &SemiclassicalParams) -> SemiclassicalEfficiency {
    let tp = turning_point(p);
    let n_max = p.n0.max(tp.n1);
    let phonon_energy = p.energy - p.n0;
    let eta_max = if phonon_energy > 0.0 { ((n_max - p.n0) / phonon_energy).max(0.0) } else { 0.0 };
    SemiclassicalEfficiency { eta_max, n_max, photon_fraction: n_max / p.energy }
}

/// Far turning point of the large-`E` potential `η³ - η²` started at rest
/// at `eta0`, from the deflated quadratic `η² + (η0 - 1) η + (η0² - η0)`.
pub fn normalized_turning_point(eta0: f64) -> f64 {
    let b = eta0 - 1.0;
    let c = eta0 * eta0 - eta0;
    let disc = (b * b - 4.0 * c).max(0.0).sqrt();
    0.5 * (-b + disc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub n: Vec<f64>,
    pub v: Vec<f64>,
    /// Internal step after any rejections.
    pub dt_used: f64,
    /// `max |½v² + V(N) - const|` over the run.
    pub energy_drift: f64,
}

fn rk4(n: f64, v: f64, dt: f64, acc: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let k1n = v;
    let k1v = acc(n);
    let k2n = v + 0.5 * dt * k1v;
    let k2v = acc(n + 0.5 * dt * k1n);
    let k3n = v + 0.5 * dt * k2v;
    let k3v = acc(n + 0.5 * dt * k2n);
    let k4n = v + dt * k3v;
    let k4v = acc(n + dt * k3n);
    (
        n + dt / 6.0 * (k1n + 2.0 * k2n + 2.0 * k3n + k4n),
        v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Fixed-step integration sampled every `dt` on `[0, t_end]`, with the
/// internal step halved until the energy function drifts by at most `1e-6`
/// of the well scale.
fn integrate_with(
    n0: f64,
    v0: f64,
    t_end: f64,
    dt: f64,
    acc: &dyn Fn(f64) -> f64,
    energy: &dyn Fn(f64, f64) -> f64,
    scale: f64,
) -> Result<OdeSolution> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParameter("ODE step and horizon must be positive".into()));
    }
    let samples = (t_end / dt).round() as usize;
    let e0 = energy(n0, v0);
    for refine in 0..12u32 {
        let sub = 1usize << refine;
        let h = dt / sub as f64;
        let mut n = n0;
        let mut v = v0;
        let mut out_n = Vec::with_capacity(samples + 1);
        let mut out_v = Vec::with_capacity(samples + 1);
        out_n.push(n);
        out_v.push(v);
        let mut drift = 0.0f64;
        for _ in 0..samples {
            for _ in 0..sub {
                (n, v) = rk4(n, v, h, acc);
            }
            drift = drift.max((energy(n, v) - e0).abs());
            out_n.push(n);
            out_v.push(v);
        }
        if drift <= 1e-6 * scale {
            return Ok(OdeSolution {
                times: (0..=samples).map(|i| i as f64 * dt).collect(),
                n: out_n,
                v: out_v,
                dt_used: h,
                energy_drift: drift,
            });
        }
    }
    Err(Error::Convergence("semiclassical integration drifts even at the finest step".into()))
}

/// Integrate `N'' = -V'(N)` from `(n0, v0)`.
pub fn integrate_ode(p: &SemiclassicalParams, t_end: f64, dt: f64) -> Result<OdeSolution> {
    let x_min = potential_minimum(p);
    let depth = (potential(p.n0, p) - potential(x_min, p)).abs() + 0.5 * p.v0 * p.v0;
    let scale = depth.max(potential(x_min, p).abs()).max(f64::MIN_POSITIVE);
    integrate_with(
        p.n0,
        p.v0,
        t_end,
        dt,
        &|n| force(n, p),
        &|n, v| 0.5 * v * v + potential(n, p),
        scale,
    )
}

/// Large-`E` form for `η̂ = N / E`: `η̂'' = g² E η̂ (2 - 3 η̂)`, integrated in
/// physical time with step `ds / (g √E)` and reported against the rescaled
/// time `s = g √E t`, in which the equation no longer contains `E`.
pub fn integrate_normalized(p: &SemiclassicalParams, s_end: f64, ds: f64) -> Result<OdeSolution> {
    let rate = p.g * p.energy.sqrt();
    let w = rate * rate;
    let eta0 = p.n0 / p.energy;
    let v0 = p.v0 / p.energy;
    let veff = |x: f64| x * x * x - x * x;
    let scale = (veff(eta0) - veff(2.0 / 3.0)).abs().max(4.0 / 27.0) * w;
    let mut sol = integrate_with(
        eta0,
        v0,
        s_end / rate,
        ds / rate,
        &|x| w * x * (2.0 - 3.0 * x),
        &|x, v| 0.5 * v * v + w * veff(x),
        scale,
    )?;
    sol.times.iter_mut().for_each(|t| *t *= rate);
    sol.v.iter_mut().for_each(|v| *v /= rate);
    Ok(sol)
}

/// Oscillation period of the trajectory started at rest at `n0`: twice the
/// time to reach the far turning point. At the well bottom the small-
/// oscillation period is returned.
pub fn period(p: &SemiclassicalParams) -> Result<f64> {
    let curvature = curvature_at_minimum(p);
    let harmonic = 2.0 * std::f64::consts::PI / curvature.sqrt();
    if turning_point(p).flat {
        return Ok(harmonic);
    }
    let dt = harmonic / 4000.0;
    let sign = if p.n0 < potential_minimum(p) { 1.0 } else { -1.0 };
    let (mut n, mut v) = (p.n0, p.v0);
    let mut t = 0.0;
    let acc = |x: f64| force(x, p);
    let mut moving = false;
    for _ in 0..10_000_000 {
        let (n1, v1) = rk4(n, v, dt, &acc);
        if moving && sign * v1 <= 0.0 {
            // linear interpolation of the velocity zero
            let frac = v / (v - v1);
            return Ok(2.0 * (t + frac * dt));
        }
        if sign * v1 > 0.0 {
            moving = true;
        }
        n = n1;
        v = v1;
        t += dt;
    }
    Err(Error::Convergence("no turning point reached while measuring the period".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (f(hi) > 0.0) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn potential_shape() {
        let p = SemiclassicalParams::new(1.0, 500.0, 0.0).unwrap();
        assert_eq!(potential(0.0, &p), 0.0);
        let m = potential_minimum(&p);
        assert!((m - 333.7).abs() / 333.7 < 0.01);
        assert!((potential(500.0, &p) + 500.0 * 500.0).abs() < 1e-6);
        // brute-force grid search for the minimum
        let grid_min = (0..=500_000).map(|i| i as f64 * 1e-3).min_by(|a, b| potential(*a, &p).total_cmp(&potential(*b, &p))).unwrap();
        assert!((grid_min - m).abs() < 2e-3);
        for e in [10.0, 1000.0, 1e6] {
            let p = SemiclassicalParams::new(1.0, e, 0.0).unwrap();
            let ratio = potential(e, &p) / potential(potential_minimum(&p), &p).abs();
            assert!(ratio.abs() < 30.0 / e);
        }
    }

    #[test]
    fn turning_point_examples() {
        let mut p = SemiclassicalParams::new(0.01, 750.0, 0.0).unwrap();
        p.n0 = potential_minimum(&p);
        let tp = turning_point(&p);
        assert!(tp.flat && tp.n1 == p.n0);

        let p = SemiclassicalParams::new(0.01, 750.0, 248.0).unwrap();
        let tp = turning_point(&p);
        assert!(!tp.flat);
        assert!((tp.n1 - 684.0).abs() < 1.5, "n1 = {}", tp.n1);
        assert!((potential(tp.raw, &p) - potential(248.0, &p)).abs() <= 1e-10 * potential(248.0, &p).abs());

        // normalized cubic oracle: eta^3 - eta^2 + c = 0 with c from eta0
        let eta0: f64 = 248.0 / 750.0;
        let c = -(eta0 * eta0 * eta0 - eta0 * eta0);
        assert!((c - 0.0732).abs() < 1e-3);
        let root = bisect(|x| x * x * x - x * x + c, 2.0 / 3.0, 1.0);
        assert!((root - 0.912).abs() < 1e-3);
        let fraction = eta_sc(&p).photon_fraction;
        assert!((fraction - root).abs() < 5e-3);
    }

    #[test]
    fn turning_point_is_an_involution() {
        for (e, n0) in [(750.0, 248.0), (100.0, 10.0), (100.0, 85.0), (40.0, 5.5)] {
            let p = SemiclassicalParams::new(0.01, e, n0).unwrap();
            let n1 = turning_point(&p).raw;
            let back = turning_point(&SemiclassicalParams { n0: n1, ..p }).raw;
            assert!((back - n0).abs() <= 1e-8 * e, "{e} {n0} -> {n1} -> {back}");
        }
    }

    #[test]
    fn efficiency_examples() {
        let p = SemiclassicalParams::for_product(0.01, 0, 1).unwrap();
        assert_eq!(eta_sc(&p).eta_max, 1.0);
        let mut p = SemiclassicalParams::new(0.01, 900.0, 0.0).unwrap();
        p.n0 = potential_minimum(&p);
        assert_eq!(eta_sc(&p).eta_max, 0.0);
        // the equilibrium sits at 2/3 of E up to O(1/E)
        assert!((p.n0 / 900.0 - 2.0 / 3.0).abs() < 2e-3);
        let p = SemiclassicalParams::new(0.01, 750.0, 248.0).unwrap();
        let e = eta_sc(&p);
        assert!((e.eta_max - 0.870).abs() < 2e-3);
        assert!((e.photon_fraction - 0.913).abs() < 2e-3);
    }

    #[test]
    fn ode_constant_at_minimum() {
        let mut p = SemiclassicalParams::new(0.01, 100.0, 0.0).unwrap();
        p.n0 = potential_minimum(&p);
        let sol = integrate_ode(&p, 1000.0, 1.0).unwrap();
        assert!(sol.n.iter().all(|n| (n - p.n0).abs() < 1e-8));
    }

    #[test]
    fn ode_reaches_turning_point() {
        for e in [2.0, 20.0, 200.0] {
            let p = SemiclassicalParams::new(0.01, e, 0.0).unwrap();
            let tp = turning_point(&p).raw;
            let t = period(&p).unwrap();
            let sol = integrate_ode(&p, 0.75 * t, t / 20_000.0).unwrap();
            let first_max = sol.n.iter().copied().fold(f64::MIN, f64::max);
            assert!((first_max - tp).abs() <= 1e-4 * tp, "E={e}: {first_max} vs {tp}");
        }
    }

    #[test]
    fn ode_oscillates_between_turning_points() {
        let p = SemiclassicalParams::new(0.01, 400.0, 60.0).unwrap();
        let tp = turning_point(&p).raw;
        let t = period(&p).unwrap();
        let sol = integrate_ode(&p, 3.0 * t, t / 5000.0).unwrap();
        let hi = sol.n.iter().copied().fold(f64::MIN, f64::max);
        let lo = sol.n.iter().copied().fold(f64::MAX, f64::min);
        assert!((hi - tp).abs() <= 1e-4 * tp);
        assert!((lo - 60.0).abs() <= 1e-4 * 60.0);
    }

    #[test]
    fn normalized_form_is_energy_independent() {
        let a = integrate_normalized(&SemiclassicalParams::new(0.01, 100.0, 10.0).unwrap(), 20.0, 1e-3).unwrap();
        let b = integrate_normalized(&SemiclassicalParams::new(0.01, 400.0, 40.0).unwrap(), 20.0, 1e-3).unwrap();
        assert_eq!(a.n.len(), b.n.len());
        let gap = a.n.iter().zip(&b.n).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(gap < 1e-6, "gap {gap}");
    }

    #[test]
    fn efficiency_is_energy_independent_at_fixed_fraction() {
        let etas: Vec<f64> = [50.0, 100.0, 400.0, 1000.0]
            .iter()
            .map(|&e| {
                let p = SemiclassicalParams::new(0.01, e, 0.2 * e).unwrap();
                let sol = integrate_normalized(&p, 8.0, 1e-3).unwrap();
                let top = sol.n.iter().copied().fold(f64::MIN, f64::max);
                (top - 0.2) / 0.8
            })
            .collect();
        for w in etas.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-6);
        }
        let root = bisect(|x| x * x * x - x * x - (0.008 - 0.04), 2.0 / 3.0, 1.0);
        assert!((normalized_turning_point(0.2) - root).abs() < 1e-12);
        assert!((etas[0] - (root - 0.2) / 0.8).abs() < 1e-6);
    }
}
