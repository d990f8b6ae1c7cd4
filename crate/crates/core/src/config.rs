//! Run configuration: flat TOML `key = value` files, validated before anything is allocated.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::cavity::CavityRun;
use crate::experiments::dambreak::DamBreakRun;
use crate::experiments::taylor_green::{convergence_radius, TaylorGreenRun};
use crate::experiments::truncation::H_FACTORS;
use crate::experiments::SpaceTimeNorm;
use crate::solver::CollisionParams;
use crate::weights::Preset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    TaylorGreen,
    Cavity,
    Dambreak,
    Truncation,
    OptimizeWeight,
    Custom,
}

impl Experiment {
    pub fn tag(self) -> &'static str {
        match self {
            Experiment::TaylorGreen => "taylor-green",
            Experiment::Cavity => "cavity",
            Experiment::Dambreak => "dambreak",
            Experiment::Truncation => "truncation",
            Experiment::OptimizeWeight => "optimize-weight",
            Experiment::Custom => "custom",
        }
    }

    /// Keys accepted besides the common ones.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Experiment::TaylorGreen => &["dx", "h", "h_factor", "m", "eps", "tau", "end_time", "re", "pressure_recalc", "norm"],
            Experiment::Cavity => &["dx", "h_factor", "re", "eps", "tau", "strip", "max_time", "max_steps", "steady_tol"],
            Experiment::Dambreak => &[
                "dx",
                "h_factor",
                "strip_factor",
                "eps",
                "tau",
                "end_time",
                "gravity",
                "rho",
                "nu",
                "restitution",
                "distance_factor",
                "sensor_heights",
                "reference",
            ],
            Experiment::Truncation => &["h_factors", "eps_max", "seeds"],
            Experiment::OptimizeWeight => &["n", "dim"],
            Experiment::Custom => &[
                "dim",
                "lo",
                "hi",
                "periodic",
                "strip",
                "fluid_lo",
                "fluid_hi",
                "initial",
                "dx",
                "h_factor",
                "eps",
                "tau",
                "end_time",
                "rho",
                "nu",
                "body_force",
                "lid_velocity",
                "pressure_recalc",
                "free_surface",
                "collision",
                "restitution",
                "distance_factor",
            ],
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Experiment::TaylorGreen,
            Experiment::Cavity,
            Experiment::Dambreak,
            Experiment::Truncation,
            Experiment::OptimizeWeight,
            Experiment::Custom,
        ]
        .into_iter()
        .find(|e| e.tag() == s)
        .ok_or_else(|| Error::key("experiment", format!("unknown experiment `{s}`")))
    }
}

const COMMON_KEYS: [&str; 7] = ["experiment", "preset", "weights", "seed", "snapshots", "vtk", "out"];

/// `tau = "auto"` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum TauSpec {
    Fixed(f64),
    Named(AutoTau),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AutoTau {
    Auto,
}

/// Every key any experiment understands; which ones are allowed is checked separately.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "experiment")]
    _experiment: Option<String>,
    preset: Option<String>,
    weights: Option<Vec<f64>>,
    seed: Option<u64>,
    snapshots: Option<usize>,
    vtk: Option<bool>,
    out: Option<PathBuf>,
    dx: Option<f64>,
    h: Option<f64>,
    h_factor: Option<f64>,
    m: Option<u32>,
    eps: Option<f64>,
    tau: Option<TauSpec>,
    end_time: Option<f64>,
    re: Option<f64>,
    pressure_recalc: Option<bool>,
    norm: Option<SpaceTimeNorm>,
    strip: Option<f64>,
    max_time: Option<f64>,
    max_steps: Option<usize>,
    steady_tol: Option<f64>,
    strip_factor: Option<f64>,
    gravity: Option<f64>,
    rho: Option<f64>,
    nu: Option<f64>,
    restitution: Option<f64>,
    distance_factor: Option<f64>,
    sensor_heights: Option<Vec<f64>>,
    reference: Option<PathBuf>,
    h_factors: Option<Vec<f64>>,
    eps_max: Option<f64>,
    seeds: Option<usize>,
    n: Option<usize>,
    dim: Option<usize>,
    lo: Option<Vec<f64>>,
    hi: Option<Vec<f64>>,
    periodic: Option<Vec<bool>>,
    fluid_lo: Option<Vec<f64>>,
    fluid_hi: Option<Vec<f64>>,
    initial: Option<PathBuf>,
    body_force: Option<Vec<f64>>,
    lid_velocity: Option<Vec<f64>>,
    free_surface: Option<bool>,
    collision: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationParams {
    pub h_factors: Vec<f64>,
    pub eps_max: f64,
    /// Seeds `seed, seed + 1, ...`.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeParams {
    pub n: usize,
    pub dim: usize,
}

/// Generic box run: a lattice (or a snapshot) in a periodic and/or walled box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CustomParams {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub periodic: Vec<bool>,
    pub strip: f64,
    /// Lattice nodes of the box outside `[fluid_lo, fluid_hi]` stay empty.
    pub fluid_lo: Option<Vec<f64>>,
    pub fluid_hi: Option<Vec<f64>>,
    /// Snapshot CSV to start from instead of a lattice.
    pub initial: Option<PathBuf>,
    pub dx: f64,
    pub h_factor: f64,
    pub eps: f64,
    pub tau: Option<f64>,
    pub end_time: f64,
    pub rho: f64,
    pub nu: f64,
    pub body_force: Vec<f64>,
    /// Velocity of wall particles above the top of the box (last axis).
    pub lid_velocity: Vec<f64>,
    pub pressure_recalc: bool,
    pub free_surface: bool,
    pub collision: Option<CollisionParams<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentParams {
    TaylorGreen(TaylorGreenRun<f64>),
    Cavity(CavityRun<f64>),
    Dambreak { run: DamBreakRun<f64>, reference: Option<PathBuf> },
    Truncation(TruncationParams),
    OptimizeWeight(OptimizeParams),
    Custom(CustomParams),
}

/// Validated configuration with all defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub preset: Preset,
    /// Polynomial coefficients `a_0..a_n` for the `custom` preset.
    pub weights: Option<Vec<f64>>,
    pub seed: u64,
    /// Snapshot every this many steps; 0 disables snapshots.
    pub snapshots: usize,
    pub vtk: bool,
    pub out: Option<PathBuf>,
    pub params: ExperimentParams,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::key(key, format!("must be positive and finite, got {v}")))
    }
}

fn in_range(key: &str, v: f64, lo: f64, hi: f64) -> Result<f64> {
    if v >= lo && v <= hi {
        Ok(v)
    } else {
        Err(Error::key(key, format!("must lie in [{lo}, {hi}], got {v}")))
    }
}

fn tau_value(spec: Option<TauSpec>) -> Result<Option<f64>> {
    match spec {
        None | Some(TauSpec::Named(AutoTau::Auto)) => Ok(None),
        Some(TauSpec::Fixed(v)) => positive("tau", v).map(Some),
    }
}

fn vector_of(key: &str, v: Option<Vec<f64>>, dim: usize, default: f64) -> Result<Vec<f64>> {
    match v {
        None => Ok(vec![default; dim]),
        Some(v) if v.len() == dim && v.iter().all(|x| x.is_finite()) => Ok(v),
        Some(v) => Err(Error::key(key, format!("needs {dim} finite components, got {v:?}"))),
    }
}

/// Parses and validates a TOML configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| toml_error(text, &e))?;
    let experiment: Experiment = match table.get("experiment") {
        Some(toml::Value::String(s)) => s.parse()?,
        Some(_) => return Err(Error::key("experiment", "must be a string")),
        None => return Err(Error::key("experiment", "missing required key")),
    };
    for key in table.keys() {
        if !COMMON_KEYS.contains(&key.as_str()) && !experiment.keys().contains(&key.as_str()) {
            return Err(Error::key(key.clone(), format!("unknown key for experiment `{}`", experiment.tag())));
        }
    }
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    build(experiment, raw)
}

fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
    Error::Parse { path: "<config>".into(), line, msg: e.message().to_string() }
}

fn build(experiment: Experiment, raw: RawConfig) -> Result<RunConfig> {
    let preset: Preset = match &raw.preset {
        Some(p) => p.parse().map_err(|e: Error| Error::key("preset", e.to_string()))?,
        None => Preset::GeneralizedSpike,
    };
    if preset == Preset::Custom && raw.weights.is_none() {
        return Err(Error::key("weights", "the custom preset needs polynomial coefficients"));
    }
    if preset != Preset::Custom && raw.weights.is_some() {
        return Err(Error::key("weights", "only allowed with preset = \"custom\""));
    }
    let seed = raw.seed.unwrap_or(0);
    let params = match experiment {
        Experiment::TaylorGreen => ExperimentParams::TaylorGreen(taylor_green(preset, &raw)?),
        Experiment::Cavity => ExperimentParams::Cavity(cavity(preset, &raw)?),
        Experiment::Dambreak => ExperimentParams::Dambreak { run: dambreak(preset, &raw)?, reference: raw.reference.clone() },
        Experiment::Truncation => {
            let h_factors = raw.h_factors.clone().unwrap_or_else(|| H_FACTORS.to_vec());
            if h_factors.is_empty() {
                return Err(Error::key("h_factors", "must not be empty"));
            }
            for &f in &h_factors {
                positive("h_factors", f)?;
            }
            let eps_max = raw.eps_max.unwrap_or(0.0);
            if !(0.0..1.0).contains(&eps_max) {
                return Err(Error::key("eps_max", format!("must lie in [0, 1), got {eps_max}")));
            }
            let count = raw.seeds.unwrap_or(if eps_max > 0.0 { 10 } else { 1 });
            if count == 0 {
                return Err(Error::key("seeds", "must be at least 1"));
            }
            ExperimentParams::Truncation(TruncationParams { h_factors, eps_max, seeds: (0..count as u64).map(|k| seed + k).collect() })
        }
        Experiment::OptimizeWeight => {
            let n = raw.n.unwrap_or(2);
            if n < 2 {
                return Err(Error::key("n", format!("degree must be at least 2, got {n}")));
            }
            let dim = raw.dim.unwrap_or(2);
            if dim != 2 && dim != 3 {
                return Err(Error::key("dim", format!("must be 2 or 3, got {dim}")));
            }
            ExperimentParams::OptimizeWeight(OptimizeParams { n, dim })
        }
        Experiment::Custom => ExperimentParams::Custom(custom(&raw)?),
    };
    let config = RunConfig {
        experiment,
        preset,
        weights: raw.weights,
        seed,
        snapshots: raw.snapshots.unwrap_or(0),
        vtk: raw.vtk.unwrap_or(false),
        out: raw.out,
        params,
    };
    log::info!("configuration: {}", serde_json::to_string(&config).unwrap_or_default());
    Ok(config)
}

fn taylor_green(preset: Preset, raw: &RawConfig) -> Result<TaylorGreenRun<f64>> {
    let mut run = TaylorGreenRun::fixed_resolution(preset, raw.pressure_recalc.unwrap_or(true));
    run.dx = positive("dx", raw.dx.unwrap_or(0.04))?;
    let given = [raw.h.is_some(), raw.h_factor.is_some(), raw.m.is_some()].iter().filter(|&&b| b).count();
    if given > 1 {
        return Err(Error::key("h", "give at most one of h, h_factor and m"));
    }
    run.h = match (raw.h, raw.h_factor, raw.m) {
        (Some(h), _, _) => positive("h", h)?,
        (_, Some(f), _) => positive("h_factor", f)? * run.dx,
        (_, _, Some(m)) => {
            if !(1..=4).contains(&m) {
                return Err(Error::key("m", format!("must lie in 1..=4, got {m}")));
            }
            run.eps = 2.5 * run.dx;
            convergence_radius(run.dx, m)
        }
        _ => 3.1 * run.dx,
    };
    if let Some(eps) = raw.eps {
        run.eps = positive("eps", eps)?;
    }
    run.tau = tau_value(raw.tau)?;
    run.end_time = positive("end_time", raw.end_time.unwrap_or(0.1))?;
    run.params.re = positive("re", raw.re.unwrap_or(10.0))?;
    run.norm = raw.norm.unwrap_or_default();
    if run.h >= 0.5 * run.params.l {
        return Err(Error::key("h", format!("must be below half the box edge, got {}", run.h)));
    }
    if run.dx > run.params.l {
        return Err(Error::key("dx", "exceeds the box edge"));
    }
    Ok(run)
}

fn cavity(preset: Preset, raw: &RawConfig) -> Result<CavityRun<f64>> {
    let dx = positive("dx", raw.dx.unwrap_or(0.01))?;
    let h_factor = positive("h_factor", raw.h_factor.unwrap_or(3.1))?;
    let re = positive("re", raw.re.unwrap_or(100.0))?;
    let mut run = CavityRun::new(preset, re, dx, h_factor);
    if let Some(eps) = raw.eps {
        run.eps = positive("eps", eps)?;
    }
    if let Some(strip) = raw.strip {
        run.strip = positive("strip", strip)?;
    }
    run.tau = tau_value(raw.tau)?;
    if let Some(t) = raw.max_time {
        run.max_time = positive("max_time", t)?;
    }
    if let Some(s) = raw.max_steps {
        if s == 0 {
            return Err(Error::key("max_steps", "must be positive"));
        }
        run.max_steps = s;
    }
    if let Some(tol) = raw.steady_tol {
        run.steady_tol = positive("steady_tol", tol)?;
    }
    if run.h() > 0.5 * run.strip {
        return Err(Error::key("h_factor", format!("h = {} exceeds half the wall strip {}", run.h(), run.strip)));
    }
    Ok(run)
}

fn dambreak(preset: Preset, raw: &RawConfig) -> Result<DamBreakRun<f64>> {
    let mut run = DamBreakRun::desk_scale(preset);
    if let Some(dx) = raw.dx {
        run.dx = positive("dx", dx)?;
    }
    if let Some(f) = raw.h_factor {
        run.h_factor = positive("h_factor", f)?;
    }
    if let Some(f) = raw.strip_factor {
        run.strip_factor = positive("strip_factor", f)?;
    }
    if let Some(eps) = raw.eps {
        run.eps = positive("eps", eps)?;
    }
    run.tau = tau_value(raw.tau)?;
    if let Some(t) = raw.end_time {
        run.end_time = positive("end_time", t)?;
    }
    if let Some(g) = raw.gravity {
        run.gravity = in_range("gravity", g, 0.0, f64::MAX)?;
    }
    if let Some(rho) = raw.rho {
        run.rho = positive("rho", rho)?;
    }
    if let Some(nu) = raw.nu {
        run.nu = positive("nu", nu)?;
    }
    run.collision = CollisionParams::with_defaults(run.dx);
    if let Some(r) = raw.restitution {
        run.collision.restitution = in_range("restitution", r, 0.0, 1.0)?;
    }
    if let Some(f) = raw.distance_factor {
        run.collision.distance_factor = positive("distance_factor", f)?;
    }
    if let Some(s) = &raw.sensor_heights {
        for &y in s {
            in_range("sensor_heights", y, 0.0, run.tank[1])?;
        }
        run.sensor_heights = s.clone();
    }
    if run.h_factor > 0.5 * run.strip_factor {
        return Err(Error::key("h_factor", "must not exceed half of strip_factor"));
    }
    Ok(run)
}

fn custom(raw: &RawConfig) -> Result<CustomParams> {
    let dim = raw.dim.unwrap_or(2);
    if dim != 2 && dim != 3 {
        return Err(Error::key("dim", format!("must be 2 or 3, got {dim}")));
    }
    let lo = vector_of("lo", raw.lo.clone(), dim, 0.0)?;
    let hi = vector_of("hi", raw.hi.clone(), dim, 1.0)?;
    if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
        return Err(Error::key("hi", "must exceed lo on every axis"));
    }
    let periodic = match &raw.periodic {
        None => vec![true; dim],
        Some(p) if p.len() == dim => p.clone(),
        Some(p) => return Err(Error::key("periodic", format!("needs {dim} entries, got {}", p.len()))),
    };
    let dx = positive("dx", raw.dx.ok_or_else(|| Error::key("dx", "missing required key"))?)?;
    let h_factor = positive("h_factor", raw.h_factor.unwrap_or(3.1))?;
    let strip = raw.strip.unwrap_or(if periodic.iter().all(|&p| p) { 0.0 } else { 2.0 * h_factor * dx });
    if periodic.iter().any(|&p| !p) && !(strip >= 2.0 * h_factor * dx * (1.0 - 1e-12)) {
        return Err(Error::key("strip", format!("must be at least 2 h = {}", 2.0 * h_factor * dx)));
    }
    let fluid_lo = raw.fluid_lo.clone().map(|v| vector_of("fluid_lo", Some(v), dim, 0.0)).transpose()?;
    let fluid_hi = raw.fluid_hi.clone().map(|v| vector_of("fluid_hi", Some(v), dim, 0.0)).transpose()?;
    let free_surface = raw.free_surface.unwrap_or(false);
    let collision = if raw.collision.unwrap_or(false) {
        if !free_surface {
            return Err(Error::key("collision", "requires free_surface = true"));
        }
        let mut c = CollisionParams::with_defaults(dx);
        if let Some(r) = raw.restitution {
            c.restitution = in_range("restitution", r, 0.0, 1.0)?;
        }
        if let Some(f) = raw.distance_factor {
            c.distance_factor = positive("distance_factor", f)?;
        }
        Some(c)
    } else {
        None
    };
    Ok(CustomParams {
        dim,
        lo,
        hi,
        periodic,
        strip,
        fluid_lo,
        fluid_hi,
        initial: raw.initial.clone(),
        dx,
        h_factor,
        eps: positive("eps", raw.eps.unwrap_or(0.1))?,
        tau: tau_value(raw.tau)?,
        end_time: positive("end_time", raw.end_time.unwrap_or(0.1))?,
        rho: positive("rho", raw.rho.unwrap_or(1.0))?,
        nu: positive("nu", raw.nu.unwrap_or(0.1))?,
        body_force: vector_of("body_force", raw.body_force.clone(), dim, 0.0)?,
        lid_velocity: vector_of("lid_velocity", raw.lid_velocity.clone(), dim, 0.0)?,
        pressure_recalc: raw.pressure_recalc.unwrap_or(true),
        free_surface,
        collision,
    })
}
