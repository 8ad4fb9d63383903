//! The `xdce` experiment runner: flat dotted-key configs, scenario dispatch,
//! CSV output and a JSON run manifest.
//!
//! ```text
//! scenario = product
//! model.g = 0.01
//! state.k = 9
//! time.t_end = 3000
//! scan.axis = state.k
//! scan.values = 1:50
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    fit_lorentzian, fit_power_law, half_width, record, FitResult, InvariantLimits, InvariantReport, RecordOptions,
};
use crate::error::{Error, Result};
use crate::experiments::{
    propagator, run_product, run_stationary, Cutoffs, Engine, EngineOptions, PhononState, ProductRequest,
    StationaryRequest,
};
use crate::fock::{coherent_phonon_state, product_state, ModelParams};
use crate::observables::{reduced_density, Subsystem};
use crate::propagate::uniform_grid;
use crate::semiclassical::{eta_sc, integrate_ode, period, turning_point, SemiclassicalParams};

/// Environment variable consulted for the output directory when neither
/// `--out` nor `output.dir` is given.
pub const OUT_ENV: &str = "XDCE_OUT";
pub const DEFAULT_OUT: &str = "xdce-out";

const KEYS: &[&str] = &[
    "scenario",
    "engine",
    "engine.spectral_limit",
    "engine.krylov_dim",
    "engine.krylov_dt",
    "engine.krylov_tol",
    "model.g",
    "model.delta_omega",
    "state.n",
    "state.k",
    "state.pairs",
    "state.alpha",
    "state.t0",
    "state.mean_phonons",
    "cutoffs.na_max",
    "cutoffs.nb_max",
    "time.t_end",
    "time.samples",
    "time.stride",
    "observables",
    "efficiency.periods",
    "scan.axis",
    "scan.values",
    "output.dir",
];

const SCAN_AXES: &[&str] = &[
    "model.g",
    "model.delta_omega",
    "state.n",
    "state.k",
    "state.pairs",
    "state.alpha",
    "state.t0",
    "state.mean_phonons",
    "time.t_end",
];

const INTEGER_KEYS: &[&str] = &["state.n", "state.k", "state.pairs"];

/// Parsed `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.remove(key);
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None | Some("auto") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn float(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// The scan axis and its values, if `scan.axis` is set.
    pub fn scan_axis(&self) -> Result<Option<(String, Vec<f64>)>> {
        let Some(axis) = self.get("scan.axis") else {
            if self.get("scan.values").is_some() {
                return Err(Error::Config("`scan.values` given without `scan.axis`".into()));
            }
            return Ok(None);
        };
        if !SCAN_AXES.contains(&axis) {
            return Err(Error::Config(format!("`{axis}` cannot be scanned; choose one of {}", SCAN_AXES.join(", "))));
        }
        let values = parse_values(self.get("scan.values").unwrap_or(""))?;
        if values.is_empty() {
            return Err(Error::Config("scan axis has no values".into()));
        }
        Ok(Some((axis.to_string(), values)))
    }

    /// Copy with the scan axis replaced by one of its values.
    fn at(&self, axis: &str, value: f64) -> Result<Config> {
        let mut c = self.clone();
        c.remove("scan.axis");
        c.remove("scan.values");
        if INTEGER_KEYS.contains(&axis) {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!("`{axis}` takes non-negative integers, got {value}")));
            }
            c.set(axis, format!("{}", value as u64));
        } else {
            c.set(axis, format!("{value}"));
        }
        Ok(c)
    }
}

impl FromStr for Config {
    type Err = Error;

    fn from_str(text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().trim_matches('"').to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("line {}: `{key}` given twice", lineno + 1)));
            }
        }
        Ok(Config { entries })
    }
}

/// `a:b` (unit step, inclusive), `a:b:step`, or a comma-separated list.
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Config(format!("scan value `{s}` is not a number")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let (a, b, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 1.0),
            [a, b, s] => (num(a)?, num(b)?, num(s)?),
            _ => return Err(Error::Config(format!("bad range `{spec}`"))),
        };
        if !(step > 0.0) {
            return Err(Error::Config(format!("range step must be positive in `{spec}`")));
        }
        let n = ((b - a) / step + 1e-9).floor();
        if n < 0.0 {
            return Ok(Vec::new());
        }
        return Ok((0..=n as usize).map(|i| a + i as f64 * step).collect());
    }
    spec.split(',').map(num).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Product,
    Stimulated,
    Detuning,
    Coherent,
    Thermal,
    Semiclassical,
    Invariants,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "product" => Scenario::Product,
            "stimulated" => Scenario::Stimulated,
            "detuning" => Scenario::Detuning,
            "coherent" => Scenario::Coherent,
            "thermal" => Scenario::Thermal,
            "semiclassical" => Scenario::Semiclassical,
            "invariants" => Scenario::Invariants,
            other => return Err(Error::Config(format!("unknown scenario `{other}`"))),
        })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::Product => "product",
            Scenario::Stimulated => "stimulated",
            Scenario::Detuning => "detuning",
            Scenario::Coherent => "coherent",
            Scenario::Thermal => "thermal",
            Scenario::Semiclassical => "semiclassical",
            Scenario::Invariants => "invariants",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Observables {
    pub entropy: bool,
    pub g2: bool,
    pub distributions: bool,
}

impl FromStr for Observables {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut o = Observables::default();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty() && *i != "none") {
            match item {
                "entropy" => o.entropy = true,
                "g2" => o.g2 = true,
                "distributions" => o.distributions = true,
                other => return Err(Error::Config(format!("unknown observable `{other}`"))),
            }
        }
        Ok(o)
    }
}

/// A fully typed single-point configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSpec {
    pub scenario: Scenario,
    pub g: f64,
    pub delta_omega: f64,
    pub photons: usize,
    pub phonons: usize,
    pub phonon_state: Option<PhononState>,
    pub cutoffs: Option<Cutoffs>,
    pub t_end: f64,
    pub samples: usize,
    pub stride: usize,
    pub observables: Observables,
    pub engine: EngineOptions,
    pub mean_periods: f64,
}

impl PointSpec {
    pub fn from_config(cfg: &Config) -> Result<PointSpec> {
        let scenario: Scenario = cfg
            .get("scenario")
            .ok_or_else(|| Error::Config("`scenario` is required".into()))?
            .parse()?;
        let stationary = matches!(scenario, Scenario::Coherent | Scenario::Thermal);
        let g = cfg.float("model.g", 0.01)?;
        let delta_omega = cfg.float("model.delta_omega", 0.0)?;
        let params = ModelParams::detuned(g, delta_omega).map_err(|e| Error::Config(e.to_string()))?;

        let default_engine = if stationary { Engine::Rwa } else { Engine::Auto };
        let mut engine = EngineOptions::with(cfg.parsed("engine")?.unwrap_or(default_engine));
        engine.spectral_limit = cfg.count("engine.spectral_limit", engine.spectral_limit)?;
        engine.krylov_dim = cfg.count("engine.krylov_dim", engine.krylov_dim)?;
        engine.krylov_dt = cfg.float("engine.krylov_dt", engine.krylov_dt)?;
        engine.krylov_tol = cfg.float("engine.krylov_tol", engine.krylov_tol)?;

        let cutoffs = match (cfg.parsed::<usize>("cutoffs.na_max")?, cfg.parsed::<usize>("cutoffs.nb_max")?) {
            (Some(na_max), Some(nb_max)) => Some(Cutoffs { na_max, nb_max }),
            (None, None) => None,
            _ => return Err(Error::Config("give both `cutoffs.na_max` and `cutoffs.nb_max`, or neither".into())),
        };

        let (photons, phonons) = match scenario {
            Scenario::Stimulated => {
                if cfg.get("state.n").is_some() {
                    return Err(Error::Config("stimulated runs take `state.pairs`, not `state.n`".into()));
                }
                (2 * cfg.count("state.pairs", 1)?, cfg.count("state.k", 50)?)
            }
            Scenario::Detuning => (cfg.count("state.n", 0)?, cfg.count("state.k", 1)?),
            Scenario::Invariants => (cfg.count("state.n", 0)?, cfg.count("state.k", 3)?),
            _ => (cfg.count("state.n", 0)?, cfg.count("state.k", 9)?),
        };

        let phonon_state = match scenario {
            Scenario::Coherent => {
                let alpha = cfg.parsed::<f64>("state.alpha")?;
                Some(PhononState::Coherent {
                    alpha: alpha.ok_or_else(|| Error::Config("coherent runs need `state.alpha`".into()))?,
                })
            }
            Scenario::Thermal => match (cfg.parsed::<f64>("state.t0")?, cfg.parsed::<f64>("state.mean_phonons")?) {
                (Some(t0), None) if t0 > 0.0 => Some(PhononState::Thermal { t0 }),
                (None, Some(m)) if m > 0.0 => Some(PhononState::thermal_with_mean(m, params.omega_m)),
                _ => {
                    return Err(Error::Config(
                        "thermal runs need exactly one positive `state.t0` or `state.mean_phonons`".into(),
                    ))
                }
            },
            Scenario::Invariants => cfg.parsed::<f64>("state.alpha")?.map(|alpha| PhononState::Coherent { alpha }),
            _ => None,
        };

        let default_obs = match scenario {
            Scenario::Product | Scenario::Detuning | Scenario::Invariants => "entropy",
            Scenario::Coherent | Scenario::Thermal => "entropy,g2,distributions",
            _ => "none",
        };
        let observables = cfg.get("observables").unwrap_or(default_obs).parse()?;

        let (t_end_default, samples_default) = match scenario {
            Scenario::Coherent | Scenario::Thermal => (5000.0, 1000),
            Scenario::Invariants => (1000.0, 200),
            _ => (5000.0, 2000),
        };
        let t_end = cfg.float("time.t_end", t_end_default)?;
        let samples = cfg.count("time.samples", samples_default)?;
        if !(t_end > 0.0) || samples == 0 {
            return Err(Error::Config("`time.t_end` and `time.samples` must be positive".into()));
        }
        Ok(PointSpec {
            scenario,
            g,
            delta_omega,
            photons,
            phonons,
            phonon_state,
            cutoffs,
            t_end,
            samples,
            stride: cfg.count("time.stride", 1)?.max(1),
            observables,
            engine,
            mean_periods: cfg.float("efficiency.periods", 4.0)?,
        })
    }
}

/// Conservation diagnostics and truncation data for one point.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub method: Option<String>,
    pub cutoffs: Option<Cutoffs>,
    /// Initial-state probability outside the phonon cutoff.
    pub leakage: Option<f64>,
    pub invariants: Option<InvariantReport>,
    pub violations: Vec<String>,
    /// Which `g²` convention lands nearer the expected stationary value 4.5.
    pub g2_convention: Option<String>,
}

#[derive(Debug, Clone, Default)]
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn from_columns(cols: Vec<(&str, &[f64])>) -> Table {
        let len = cols.iter().map(|c| c.1.len()).max().unwrap_or(0);
        let rows = (0..len)
            .map(|i| cols.iter().map(|c| c.1.get(i).copied().unwrap_or(0.0)).collect())
            .collect();
        Table { columns: cols.iter().map(|c| c.0.to_string()).collect(), rows }
    }
}

#[derive(Debug, Clone, Serialize)]
struct FitRow {
    fit: String,
    parameter: String,
    value: f64,
    stderr: f64,
    r_squared: f64,
}

fn fit_rows(name: &str, fit: &FitResult) -> Vec<FitRow> {
    fit.parameters
        .iter()
        .map(|p| FitRow {
            fit: name.to_string(),
            parameter: p.name.clone(),
            value: p.value,
            stderr: p.stderr,
            r_squared: fit.r_squared,
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
struct Outcome {
    summary: Vec<(String, f64)>,
    series: Option<Table>,
    distribution: Option<Table>,
    fits: Vec<FitRow>,
    diagnostics: Diagnostics,
}

impl Outcome {
    fn put(&mut self, name: &str, value: f64) {
        self.summary.push((name.to_string(), value));
    }

    fn check(&mut self, inv: InvariantReport) {
        self.diagnostics.violations.extend(InvariantLimits::default().violations(&inv));
        self.diagnostics.invariants = Some(inv);
        for (name, v) in [
            ("norm_drift", inv.norm_drift),
            ("parity_leakage", inv.parity_leakage),
            ("energy_drift", inv.energy_drift),
            ("quanta_drift", inv.quanta_drift),
        ] {
            self.put(name, v);
        }
    }
}

fn execute(spec: &PointSpec) -> Result<Outcome> {
    match spec.scenario {
        Scenario::Product | Scenario::Stimulated | Scenario::Detuning => product_point(spec),
        Scenario::Coherent | Scenario::Thermal => stationary_point(spec),
        Scenario::Semiclassical => semiclassical_point(spec),
        Scenario::Invariants => invariants_point(spec),
    }
}

fn product_point(spec: &PointSpec) -> Result<Outcome> {
    let mut req = ProductRequest::new(spec.g, spec.photons, spec.phonons);
    req.delta_omega = spec.delta_omega;
    req.t_end = spec.t_end;
    req.samples = spec.samples;
    req.engine = spec.engine;
    req.cutoffs = spec.cutoffs;
    req.entropy = spec.observables.entropy;
    req.g2 = spec.observables.g2;
    req.mean_periods = spec.mean_periods;
    let r = run_product(&req)?;

    let mut out = Outcome::default();
    let s = &r.series;
    let mut cols: Vec<(&str, &[f64])> = vec![("t", &s.times), ("photons", &s.photons), ("phonons", &s.phonons)];
    if !s.entropy.is_empty() {
        cols.push(("entropy", &s.entropy));
    }
    let (g2s, g2u) = g2_columns(s);
    if !s.g2.is_empty() {
        cols.push(("g2_standard", &g2s));
        cols.push(("g2_unsquared", &g2u));
    }
    out.series = Some(Table::from_columns(cols));

    if spec.scenario == Scenario::Stimulated {
        let sc = eta_sc(&SemiclassicalParams::for_product(spec.g, spec.photons, spec.phonons)?);
        out.put("pairs", (spec.photons / 2) as f64);
        out.put("photon_fraction", spec.photons as f64 / (spec.photons + 2 * spec.phonons) as f64);
        out.put("eta_max_semiclassical", sc.eta_max);
    }
    if spec.scenario == Scenario::Detuning {
        out.put("delta_over_g", spec.delta_omega / spec.g);
    }
    out.put("eta_max", r.efficiency.eta_max);
    out.put("eta_mean", r.efficiency.eta_mean);
    out.put("t_at_max", r.efficiency.t_at_max);
    out.put("period", r.period);
    if let (Some(max), Some(mean)) = (r.entropy_max, r.entropy_mean) {
        out.put("entropy_max", max);
        out.put("entropy_mean", mean);
    }
    out.diagnostics.method = Some(r.method.to_string());
    out.diagnostics.cutoffs = Some(r.cutoffs);
    out.diagnostics.leakage = Some(0.0);
    out.check(s.invariants);
    Ok(out)
}

fn g2_columns(s: &crate::analysis::ObservableSeries) -> (Vec<f64>, Vec<f64>) {
    s.g2.iter()
        .map(|g| g.map_or((f64::NAN, f64::NAN), |g| (g.standard, g.unsquared)))
        .unzip()
}

fn stationary_point(spec: &PointSpec) -> Result<Outcome> {
    let state = spec.phonon_state.expect("stationary scenarios carry a phonon state");
    let mut req = StationaryRequest::new(spec.g, state);
    req.t_end = spec.t_end;
    req.samples = spec.samples;
    req.engine = spec.engine;
    req.cutoffs = spec.cutoffs;
    req.entropy = spec.observables.entropy;
    req.g2 = spec.observables.g2;
    req.distributions = spec.observables.distributions;
    let r = run_stationary(&req)?;

    let mut out = Outcome::default();
    let s = &r.series;
    let mut cols: Vec<(&str, &[f64])> = vec![("t", &s.times), ("photons", &s.photons), ("phonons", &s.phonons)];
    if !s.entropy.is_empty() {
        cols.push(("entropy", &s.entropy));
    }
    let (g2s, g2u) = g2_columns(s);
    if !s.g2.is_empty() {
        cols.push(("g2_standard", &g2s));
        cols.push(("g2_unsquared", &g2u));
    }
    out.series = Some(Table::from_columns(cols));
    if !s.photon_distribution.is_empty() {
        let levels: Vec<f64> =
            (0..s.photon_distribution.len().max(s.phonon_distribution.len())).map(|n| n as f64).collect();
        out.distribution = Some(Table::from_columns(vec![
            ("level", &levels),
            ("photon_probability", &s.photon_distribution),
            ("phonon_probability", &s.phonon_distribution),
        ]));
    }

    match state {
        PhononState::Coherent { alpha } => out.put("alpha", alpha),
        PhononState::Thermal { t0 } => out.put("t0", t0),
    }
    out.put("initial_phonons", r.initial_phonons);
    out.put("photons_mean", r.photons.mean);
    out.put("photons_rms", r.photons.rms);
    out.put("eta_mean", r.efficiency.eta_mean);
    out.put("eta_max", r.efficiency.eta_max);
    if let (Some(gs), Some(gu)) = (r.g2_standard, r.g2_unsquared) {
        out.put("g2_standard", gs.mean);
        out.put("g2_unsquared", gu.mean);
        let convention = if (gs.mean - 4.5).abs() <= (gu.mean - 4.5).abs() { "standard" } else { "unsquared" };
        out.diagnostics.g2_convention = Some(convention.to_string());
    }
    if let Some(f) = &r.entropy_fit {
        out.put("entropy_inf", f.param("s_inf"));
        out.put("entropy_tau", f.param("tau"));
        out.put("entropy_r_squared", f.r_squared);
        out.fits.extend(fit_rows("entropy_saturation", f));
    }
    if let (Some(a), Some(b)) = (&r.beta_photon, &r.beta_phonon) {
        out.put("beta_photon", a.param("beta"));
        out.put("beta_phonon", b.param("beta"));
        out.put("beta_ratio", a.param("beta") / b.param("beta"));
        out.fits.extend(fit_rows("gibbs_photon", a));
        out.fits.extend(fit_rows("gibbs_phonon", b));
    }
    out.diagnostics.method = Some(r.method.to_string());
    out.diagnostics.cutoffs = Some(r.cutoffs);
    out.diagnostics.leakage = Some(r.leakage);
    out.check(s.invariants);
    Ok(out)
}

fn semiclassical_point(spec: &PointSpec) -> Result<Outcome> {
    let p = SemiclassicalParams::for_product(spec.g, spec.photons, spec.phonons)?;
    let tp = turning_point(&p);
    let sc = eta_sc(&p);
    let sol = integrate_ode(&p, spec.t_end, spec.t_end / spec.samples as f64)?;
    let mut out = Outcome::default();
    out.series = Some(Table::from_columns(vec![("t", &sol.times), ("photons", &sol.n), ("velocity", &sol.v)]));
    out.put("energy", p.energy);
    out.put("n0", p.n0);
    out.put("turning_point", tp.raw);
    out.put("n_max", sc.n_max);
    out.put("eta_max_semiclassical", sc.eta_max);
    out.put("photon_fraction", sc.photon_fraction);
    out.put("period", period(&p)?);
    out.put("energy_drift", sol.energy_drift);
    Ok(out)
}

fn invariants_point(spec: &PointSpec) -> Result<Outcome> {
    let params = ModelParams::detuned(spec.g, spec.delta_omega)?;
    let (cut, psi0) = match spec.phonon_state {
        Some(state) => {
            let cut = spec.cutoffs.unwrap_or_else(|| state.auto_cutoffs(params.omega_m));
            let PhononState::Coherent { alpha } = state else { unreachable!("only coherent states are accepted") };
            (cut, coherent_phonon_state(&cut.basis()?, alpha.into())?)
        }
        None => {
            let cut = spec.cutoffs.unwrap_or_else(|| Cutoffs::for_product(spec.photons, spec.phonons));
            (cut, product_state(&cut.basis()?, spec.photons, spec.phonons)?)
        }
    };
    let (prop, h) = propagator(&params, &psi0, &spec.engine)?;
    let times = uniform_grid(spec.t_end, spec.samples);
    let opts = RecordOptions { entropy: spec.observables.entropy, stride: spec.stride, ..Default::default() };
    let series = record(prop.as_ref(), &h, &times, opts)?;

    let mut out = Outcome::default();
    let mut worst_trace = 0.0f64;
    for t in [0.5 * spec.t_end, spec.t_end] {
        let psi = prop.state_at(t)?;
        for sub in [Subsystem::Photon, Subsystem::Phonon] {
            let rho = reduced_density(&psi, sub);
            worst_trace = worst_trace.max((rho.trace() - 1.0).abs());
            if let Err(e) = rho.validate() {
                out.diagnostics.violations.push(format!("reduced density at t = {t}: {e}"));
            }
        }
    }
    let mut cols: Vec<(&str, &[f64])> =
        vec![("t", &series.times), ("photons", &series.photons), ("phonons", &series.phonons)];
    if !series.entropy.is_empty() {
        cols.push(("entropy", &series.entropy));
    }
    out.series = Some(Table::from_columns(cols));
    out.put("reduced_trace_defect", worst_trace);
    out.diagnostics.method = Some(prop.method().to_string());
    out.diagnostics.cutoffs = Some(cut);
    out.check(series.invariants);
    Ok(out)
}

/// Where outputs go: the command-line flag, then `output.dir`, then
/// `XDCE_OUT`, then `./xdce-out`.
pub fn resolve_out_dir(cli: Option<&Path>, cfg: Option<&Config>) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(dir) = cfg.and_then(|c| c.get("output.dir")) {
        return PathBuf::from(dir);
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUT),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub label: String,
    /// Scan-axis value, absent for single runs.
    pub value: Option<f64>,
    pub error: Option<String>,
    pub diagnostics: Diagnostics,
    pub summary: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario: Option<Scenario>,
    pub config: BTreeMap<String, String>,
    pub scan_axis: Option<String>,
    pub threads: usize,
    pub points: Vec<PointRecord>,
    pub notes: Vec<String>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputFile>,
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct Report {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
}

impl Report {
    pub fn failed_points(&self) -> usize {
        self.manifest.points.iter().filter(|p| p.error.is_some()).count()
    }

    pub fn violations(&self) -> Vec<String> {
        self.manifest.points.iter().flat_map(|p| p.diagnostics.violations.iter().cloned()).collect()
    }

    /// `0` when every point ran and kept its invariants, `3` otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failed_points() > 0 || !self.violations().is_empty() {
            3
        } else {
            0
        }
    }

    /// One line per point with the conservation diagnostics.
    pub fn summary_lines(&self) -> Vec<String> {
        self.manifest
            .points
            .iter()
            .map(|p| {
                let label = &p.label;
                match (&p.error, &p.diagnostics.invariants) {
                    (Some(e), _) => format!("[{label}] failed: {e}"),
                    (None, Some(i)) => format!(
                        "[{label}] norm drift {:.2e}, parity leakage {:.2e}, <H> drift {:.2e}, quanta drift {:.2e}{}",
                        i.norm_drift,
                        i.parity_leakage,
                        i.energy_drift,
                        i.quanta_drift,
                        if p.diagnostics.violations.is_empty() { "" } else { "  VIOLATION" }
                    ),
                    (None, None) => format!("[{label}] ok"),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

struct Writer {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Writer> {
        std::fs::create_dir_all(dir)?;
        Ok(Writer { dir: dir.to_path_buf(), outputs: Vec::new() })
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        std::fs::write(self.dir.join(name), &bytes)?;
        let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.outputs.push(OutputFile { file: name.to_string(), sha256, bytes: bytes.len() });
        Ok(())
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        let rows: Vec<Vec<String>> = t.rows.iter().map(|r| r.iter().map(|&x| num(x)).collect()).collect();
        self.csv(name, &t.columns, &rows)
    }

    fn fits(&mut self, rows: &[(String, FitRow)]) -> Result<()> {
        let header: Vec<String> =
            ["point", "fit", "parameter", "value", "stderr", "r_squared"].iter().map(|s| s.to_string()).collect();
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|(point, r)| {
                vec![point.clone(), r.fit.clone(), r.parameter.clone(), num(r.value), num(r.stderr), num(r.r_squared)]
            })
            .collect();
        self.csv("fits.csv", &header, &body)
    }

    fn finish(self, mut manifest: RunManifest, started: Instant) -> Result<Report> {
        manifest.outputs = self.outputs;
        manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        std::fs::write(self.dir.join("manifest.json"), json)?;
        Ok(Report { out_dir: self.dir, manifest })
    }
}

fn record_of(label: String, value: Option<f64>, outcome: &Result<Outcome>) -> PointRecord {
    match outcome {
        Ok(o) => PointRecord {
            label,
            value,
            error: None,
            diagnostics: o.diagnostics.clone(),
            summary: o.summary.iter().cloned().collect(),
        },
        Err(e) => PointRecord { label, value, error: Some(e.to_string()), diagnostics: Diagnostics::default(), summary: BTreeMap::new() },
    }
}

fn manifest(command: &str, cfg: &Config, spec: Option<&PointSpec>, threads: usize) -> RunManifest {
    RunManifest {
        tool: "xdce".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        scenario: spec.map(|s| s.scenario),
        config: cfg.entries().clone(),
        scan_axis: cfg.get("scan.axis").map(String::from),
        threads,
        points: Vec::new(),
        notes: Vec::new(),
        wall_clock_seconds: 0.0,
        outputs: Vec::new(),
    }
}

/// Run a single configuration. Configs with a scan axis are rejected.
/// Numerical failures of the point are returned as errors.
pub fn run(cfg: &Config, opts: &RunOptions) -> Result<Report> {
    let started = Instant::now();
    if cfg.get("scan.axis").is_some() || cfg.get("scan.values").is_some() {
        return Err(Error::Config("config has a scan axis; use `xdce scan`".into()));
    }
    let spec = PointSpec::from_config(cfg)?;
    let out_dir = resolve_out_dir(opts.out_dir.as_deref(), Some(cfg));
    let pool = pool(opts.threads)?;
    let outcome = pool.install(|| execute(&spec))?;

    let mut w = Writer::new(&out_dir)?;
    if let Some(t) = &outcome.series {
        w.table("series.csv", t)?;
    }
    if let Some(t) = &outcome.distribution {
        w.table("distribution.csv", t)?;
    }
    if !outcome.fits.is_empty() {
        let rows: Vec<(String, FitRow)> = outcome.fits.iter().map(|f| ("run".to_string(), f.clone())).collect();
        w.fits(&rows)?;
    }
    let mut m = manifest("run", cfg, Some(&spec), pool.current_num_threads());
    m.points.push(record_of("run".into(), None, &Ok(outcome)));
    w.finish(m, started)
}

/// Run every value of the scan axis on the worker pool and write one
/// `scan.csv` row per value, in axis order. Point failures are recorded and
/// do not stop the scan.
pub fn scan(cfg: &Config, opts: &RunOptions) -> Result<Report> {
    let started = Instant::now();
    let (axis, values) = cfg.scan_axis()?.ok_or_else(|| Error::Config("`scan.axis` is required for a scan".into()))?;
    let specs: Vec<PointSpec> =
        values.iter().map(|&v| PointSpec::from_config(&cfg.at(&axis, v)?)).collect::<Result<_>>()?;
    let out_dir = resolve_out_dir(opts.out_dir.as_deref(), Some(cfg));
    let pool = pool(opts.threads)?;
    let outcomes: Vec<Result<Outcome>> = pool.install(|| specs.par_iter().map(execute).collect());

    let mut w = Writer::new(&out_dir)?;
    let names: Vec<String> = outcomes
        .iter()
        .find_map(|o| o.as_ref().ok())
        .map(|o| o.summary.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let mut header = vec![axis.clone(), "status".to_string()];
    header.extend(names.iter().cloned());
    let rows: Vec<Vec<String>> = values
        .iter()
        .zip(&outcomes)
        .map(|(&v, o)| {
            let mut row = vec![num(v)];
            match o {
                Ok(o) => {
                    row.push(if o.diagnostics.violations.is_empty() { "ok" } else { "violation" }.into());
                    let map: BTreeMap<&str, f64> = o.summary.iter().map(|(n, x)| (n.as_str(), *x)).collect();
                    row.extend(names.iter().map(|n| num(map.get(n.as_str()).copied().unwrap_or(f64::NAN))));
                }
                Err(_) => {
                    row.push("error".into());
                    row.extend(names.iter().map(|_| num(f64::NAN)));
                }
            }
            row
        })
        .collect();
    w.csv("scan.csv", &header, &rows)?;

    let mut fits: Vec<(String, FitRow)> = Vec::new();
    for (&v, o) in values.iter().zip(&outcomes) {
        if let Ok(o) = o {
            fits.extend(o.fits.iter().map(|f| (num(v), f.clone())));
        }
    }
    let mut notes = Vec::new();
    scan_fits(&specs[0], &axis, &values, &outcomes, &mut fits, &mut notes);
    if !fits.is_empty() {
        w.fits(&fits)?;
    }

    let mut m = manifest("scan", cfg, Some(&specs[0]), pool.current_num_threads());
    m.points = values.iter().zip(&outcomes).map(|(&v, o)| record_of(format!("{axis} = {v}"), Some(v), o)).collect();
    m.notes = notes;
    w.finish(m, started)
}

fn column(outcomes: &[Result<Outcome>], values: &[f64], name: &str) -> (Vec<f64>, Vec<f64>) {
    values
        .iter()
        .zip(outcomes)
        .filter_map(|(&v, o)| {
            let o = o.as_ref().ok()?;
            o.summary.iter().find(|(n, _)| n == name).map(|(_, y)| (v, *y))
        })
        .unzip()
}

/// Fits across the scan axis: the detuning half width and Lorentzian, and
/// the power law of the stationary photon number against `α`.
fn scan_fits(
    spec: &PointSpec,
    axis: &str,
    values: &[f64],
    outcomes: &[Result<Outcome>],
    fits: &mut Vec<(String, FitRow)>,
    notes: &mut Vec<String>,
) {
    let scan = "scan".to_string();
    if axis == "model.delta_omega" && spec.scenario != Scenario::Semiclassical {
        let (d, eta) = column(outcomes, values, "eta_max");
        match half_width(&d, &eta) {
            Ok(hw) => fits.push((
                scan.clone(),
                FitRow { fit: "half_maximum".into(), parameter: "half_width".into(), value: hw, stderr: f64::NAN, r_squared: f64::NAN },
            )),
            Err(e) => notes.push(format!("half width: {e}")),
        }
        match fit_lorentzian(&d, &eta) {
            Ok(f) => fits.extend(fit_rows("lorentzian", &f).into_iter().map(|r| (scan.clone(), r))),
            Err(e) => notes.push(format!("lorentzian fit: {e}")),
        }
    }
    if axis == "state.alpha" && spec.scenario == Scenario::Coherent {
        let (a, n) = column(outcomes, values, "photons_mean");
        match fit_power_law(&a, &n) {
            Ok(f) => fits.extend(fit_rows("power_law", &f).into_iter().map(|r| (scan.clone(), r))),
            Err(e) => notes.push(format!("power-law fit: {e}")),
        }
    }
}

/// Built-in invariant suite on small systems: exact and Krylov product
/// runs, a coherent run under the full Hamiltonian and a thermal run in the
/// resonant chains.
pub fn check(opts: &RunOptions) -> Result<Report> {
    let started = Instant::now();
    let cases: Vec<(&str, Config)> = [
        ("product_exact", "scenario = invariants\nstate.k = 3\nengine = exact\ntime.t_end = 2000\ntime.samples = 200"),
        (
            "product_krylov",
            "scenario = invariants\nstate.n = 2\nstate.k = 3\nengine = krylov\ntime.t_end = 1000\ntime.samples = 100",
        ),
        ("coherent_exact", "scenario = invariants\nstate.alpha = 1.5\nengine = exact\ntime.t_end = 1000\ntime.samples = 100"),
        (
            "thermal_resonant",
            "scenario = thermal\nstate.mean_phonons = 1\nobservables = entropy\ntime.t_end = 1000\ntime.samples = 200",
        ),
    ]
    .into_iter()
    .map(|(n, text)| Ok((n, text.parse::<Config>()?)))
    .collect::<Result<_>>()?;
    let specs: Vec<PointSpec> = cases.iter().map(|(_, c)| PointSpec::from_config(c)).collect::<Result<_>>()?;
    let out_dir = resolve_out_dir(opts.out_dir.as_deref(), None);
    let pool = pool(opts.threads)?;
    let outcomes: Vec<Result<Outcome>> = pool.install(|| specs.par_iter().map(execute).collect());

    let mut w = Writer::new(&out_dir)?;
    let header: Vec<String> = ["case", "status", "norm_drift", "parity_leakage", "energy_drift", "quanta_drift"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = cases
        .iter()
        .zip(&outcomes)
        .map(|((name, _), o)| {
            let inv = o.as_ref().ok().and_then(|o| o.diagnostics.invariants);
            let status = match o {
                Ok(o) if o.diagnostics.violations.is_empty() => "ok",
                Ok(_) => "violation",
                Err(_) => "error",
            };
            let f = |pick: fn(&InvariantReport) -> f64| num(inv.as_ref().map_or(f64::NAN, pick));
            vec![
                name.to_string(),
                status.to_string(),
                f(|i| i.norm_drift),
                f(|i| i.parity_leakage),
                f(|i| i.energy_drift),
                f(|i| i.quanta_drift),
            ]
        })
        .collect();
    w.csv("invariants.csv", &header, &rows)?;
    let mut m = manifest("check", &Config::default(), None, pool.current_num_threads());
    m.points = cases.iter().zip(&outcomes).map(|((n, _), o)| record_of(n.to_string(), None, o)).collect();
    w.finish(m, started)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let c: Config = "# demo\nscenario = product\nmodel.g = 0.02  # coupling\nstate.k = 9\n".parse().unwrap();
        assert_eq!(c.get("model.g"), Some("0.02"));
        let s = PointSpec::from_config(&c).unwrap();
        assert_eq!((s.scenario, s.photons, s.phonons), (Scenario::Product, 0, 9));
        assert!(s.observables.entropy);
        assert!("scenario = product\nbogus = 1".parse::<Config>().is_err());
        assert!("scenario = product\nscenario = thermal".parse::<Config>().is_err());
        assert!("state.k 9".parse::<Config>().is_err());
        let bad: Config = "scenario = nonsense".parse().unwrap();
        assert_eq!(PointSpec::from_config(&bad).unwrap_err().exit_code(), 2);
        let half: Config = "scenario = product\ncutoffs.na_max = 20".parse().unwrap();
        assert!(PointSpec::from_config(&half).is_err());
    }

    #[test]
    fn scan_values() {
        assert_eq!(parse_values("1:5").unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(parse_values("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_values("1, 2.5,4").unwrap(), vec![1.0, 2.5, 4.0]);
        assert!(parse_values("").unwrap().is_empty());
        assert!(parse_values("5:1").unwrap().is_empty());
        assert!(parse_values("1:x").is_err());
        let c: Config = "scenario = product\nscan.axis = state.k\nscan.values = ".parse().unwrap();
        assert!(c.scan_axis().is_err());
        let c: Config = "scenario = product\nscan.axis = state.k\nscan.values = 1:3".parse().unwrap();
        let p = c.at("state.k", 2.0).unwrap();
        assert_eq!(p.get("state.k"), Some("2"));
        assert!(c.at("state.k", 2.5).is_err());
    }

    #[test]
    fn thermal_needs_one_temperature() {
        let c: Config = "scenario = thermal\nstate.t0 = 3\nstate.mean_phonons = 2".parse().unwrap();
        assert!(PointSpec::from_config(&c).is_err());
        let c: Config = "scenario = thermal\nstate.mean_phonons = 2".parse().unwrap();
        let s = PointSpec::from_config(&c).unwrap();
        assert!(matches!(s.phonon_state, Some(PhononState::Thermal { .. })));
        assert_eq!(s.engine.engine, Engine::Rwa);
    }

    #[test]
    fn number_format_keeps_17_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
