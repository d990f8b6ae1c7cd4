//! Turns a validated [`RunConfig`] into files: CSV tables, snapshots and a JSON sidecar.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde_json::json;

use crate::config::{CustomParams, ExperimentParams, OptimizeParams, RunConfig, TruncationParams};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::experiments::cavity::{self, CavityRun, ProfileSample};
use crate::experiments::dambreak::{self, sensor_errors, DamBreakRun};
use crate::experiments::reference::{load_reference_profile, ReferenceKind};
use crate::experiments::taylor_green::{self, rates_in_h, ErrorReport, TaylorGreenRun};
use crate::experiments::truncation::truncation_error_study;
use crate::io::{read_snapshot_csv, write_json, write_snapshot_csv, write_snapshot_vtk, RunMetadata, Table};
use crate::operators::OperatorSet;
use crate::optimize::optimize_polynomial;
use crate::particles::{lattice_init, ParticleKind, ParticleSystem};
use crate::solver::{dt_max, Solver, SolverConfig, StepState};
use crate::vector;
use crate::weights::{Preset, WeightTriple};

/// What a run produced. `ok` is false when the run diverged.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub ok: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Writes snapshots every `every` steps (never when `every = 0`).
struct SnapshotWriter {
    dir: PathBuf,
    every: usize,
    vtk: bool,
    written: Vec<PathBuf>,
    error: Option<Error>,
}

impl SnapshotWriter {
    fn new(out: &Path, every: usize, vtk: bool) -> Self {
        Self { dir: out.join("snapshots"), every, vtk, written: Vec::new(), error: None }
    }

    fn observe<const D: usize>(&mut self, state: &StepState<f64, D>) {
        if self.every == 0 || state.k % self.every != 0 || self.error.is_some() {
            return;
        }
        let csv = self.dir.join(format!("snap_{:06}.csv", state.k));
        let result = write_snapshot_csv(&csv, &state.system).and_then(|_| {
            self.written.push(csv);
            if self.vtk {
                let vtk = self.dir.join(format!("snap_{:06}.vtk", state.k));
                write_snapshot_vtk(&vtk, &state.system, &format!("step {}", state.k))?;
                self.written.push(vtk);
            }
            Ok(())
        });
        if let Err(e) = result {
            self.error = Some(e);
        }
    }

    fn finish(self) -> Result<Vec<PathBuf>> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.written),
        }
    }
}

fn config_json(config: &RunConfig) -> serde_json::Value {
    serde_json::to_value(config).unwrap_or(serde_json::Value::Null)
}

/// Runs the configured experiment, writing everything below `out`.
pub fn run(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match &config.params {
        ExperimentParams::TaylorGreen(run) => run_taylor_green(config, run, out),
        ExperimentParams::Cavity(run) => run_cavity(config, run, out),
        ExperimentParams::Dambreak { run, reference } => run_dambreak(config, run, reference.as_deref(), out),
        ExperimentParams::Truncation(p) => run_truncation(config, p, out),
        ExperimentParams::OptimizeWeight(p) => run_optimize(config, p, out),
        ExperimentParams::Custom(p) => match p.dim {
            2 => run_custom::<2>(config, p, out),
            3 => run_custom::<3>(config, p, out),
            d => Err(Error::key("dim", format!("must be 2 or 3, got {d}"))),
        },
    }
}

fn errors_table(report: &ErrorReport<f64>) -> Table {
    let mut t = Table::new(
        "k: step index, t: time, vel_err: relative L2 velocity error, pres_err: relative L2 error of the mean-shifted pressure",
        &["k", "t", "vel_err", "pres_err"],
    );
    for s in &report.steps {
        t.push(vec![s.k as f64, s.t, s.velocity, s.pressure]);
    }
    t
}

pub fn run_taylor_green(config: &RunConfig, run: &TaylorGreenRun<f64>, out: &Path) -> Result<RunOutcome> {
    let (solver, system) = taylor_green::build_solver(run)?;
    let mut snaps = SnapshotWriter::new(out, config.snapshots, config.vtk);
    let report = taylor_green::run_taylor_green_with(run, |s| snaps.observe(s))?;
    let mut files = snaps.finish()?;
    let errors = out.join("errors.csv");
    errors_table(&report).write(&errors)?;
    files.push(errors);
    let mut meta = RunMetadata::new("taylor-green", config_json(config)).with_solver(&solver, system.len());
    meta.steps = Some(report.steps.len());
    meta.diagnostics = Some(report.diagnostics);
    meta.runtime_seconds = report.runtime_seconds;
    meta.results = json!({
        "velocity_error": report.velocity_error,
        "pressure_error": report.pressure_error,
        "diverged_at": report.diverged_at,
        "norm": run.norm,
    });
    files.push(write_metadata(out, &meta)?);
    let summary = match report.diverged_at {
        None => format!(
            "taylor-green {}: velocity error {:.6}, pressure error {:.6} over {} steps",
            run.preset,
            report.velocity_error,
            report.pressure_error,
            report.steps.len()
        ),
        Some(k) => format!("taylor-green {}: diverged at step {k}", run.preset),
    };
    Ok(RunOutcome { ok: report.completed(), summary, files })
}

/// Convergence sweep over `dxs` along `h = C_m dx^{1/m}`. Writes `sweep.csv`, `rates.csv`
/// and the sidecar. Diverged resolutions get infinite errors and rates.
pub fn run_convergence(preset: Preset, dxs: &[f64], m: u32, out: &Path) -> Result<RunOutcome> {
    if dxs.len() < 2 {
        return Err(Error::InvalidConfig("a convergence sweep needs at least two resolutions".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let start = Instant::now();
    let mut reports = Vec::new();
    for &dx in dxs {
        let run = TaylorGreenRun::convergence(preset, dx, m);
        log::info!("convergence sweep {preset}: dx = {dx}, h = {}", run.h);
        reports.push((dx, taylor_green::run_taylor_green(&run)?));
    }
    let mut sweep = Table::new(
        "dx: spacing, h: influence radius, steps: time steps, vel_err / pres_err: relative space-time errors, runtime: seconds",
        &["dx", "h", "steps", "vel_err", "pres_err", "runtime"],
    );
    for (dx, r) in &reports {
        sweep.push(vec![*dx, r.h, r.steps.len() as f64, r.velocity_error, r.pressure_error, r.runtime_seconds]);
    }
    let pairs: Vec<(f64, &ErrorReport<f64>)> = reports.iter().map(|(dx, r)| (*dx, r)).collect();
    let rates = rates_in_h(&pairs);
    let mut table = Table::new(
        "dx_coarse / dx_fine: spacings compared, vel_rate / pres_rate: observed orders in h",
        &["dx_coarse", "dx_fine", "vel_rate", "pres_rate"],
    );
    for r in &rates {
        table.push(vec![r.dx_coarse, r.dx_fine, r.velocity_rate, r.pressure_rate]);
    }
    let sweep_path = out.join("sweep.csv");
    let rates_path = out.join("rates.csv");
    sweep.write(&sweep_path)?;
    table.write(&rates_path)?;
    let mut meta = RunMetadata::new("taylor-green-convergence", json!({ "preset": preset, "dx": dxs, "m": m }));
    meta.runtime_seconds = start.elapsed().as_secs_f64();
    meta.results = json!({ "rates": rates });
    let meta_path = write_metadata(out, &meta)?;
    let ok = reports.iter().all(|(_, r)| r.completed());
    let summary = rates
        .iter()
        .map(|r| format!("{} -> {}: velocity rate {:.3}, pressure rate {:.3}", r.dx_coarse, r.dx_fine, r.velocity_rate, r.pressure_rate))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(RunOutcome { ok, summary, files: vec![sweep_path, rates_path, meta_path] })
}

fn profile_table(samples: &[ProfileSample<f64>], coordinate: &str, component: &str) -> Table {
    let mut t = Table::new(
        format!("{coordinate}: centreline coordinate, reference: tabulated {component}, computed: {component} of the nearest particle, particle: its index"),
        &[coordinate, "reference", "computed", "particle"],
    );
    for s in samples {
        t.push(vec![s.coordinate, s.reference, s.computed, s.particle as f64]);
    }
    t
}

pub fn run_cavity(config: &RunConfig, run: &CavityRun<f64>, out: &Path) -> Result<RunOutcome> {
    let (solver, system) = cavity::build_solver(run)?;
    let mut snaps = SnapshotWriter::new(out, config.snapshots, config.vtk);
    let report = cavity::run_cavity_with(run, |s| snaps.observe(s))?;
    let mut files = snaps.finish()?;
    for (name, samples, coord, comp) in
        [("profile_u.csv", &report.profile, "y", "u1"), ("profile_v.csv", &report.profile_v, "x", "u2")]
    {
        let path = out.join(name);
        profile_table(samples, coord, comp).write(&path)?;
        files.push(path);
    }
    let mut meta = RunMetadata::new("cavity", config_json(config)).with_solver(&solver, system.len());
    meta.steps = Some(report.steps);
    meta.diagnostics = Some(report.diagnostics);
    meta.runtime_seconds = report.runtime_seconds;
    meta.results = json!({
        "profile_error": report.profile_error,
        "profile_error_v": report.profile_error_v,
        "steady": report.steady,
        "residual": report.residual,
        "time": report.time,
        "diverged_at": report.diverged_at,
        "failed": report.failed(),
    });
    files.push(write_metadata(out, &meta)?);
    let summary = format!(
        "cavity {} h = {}dx: profile error {:.4} (u1 on x = 0.5), {:.4} (u2 on y = 0.5), t = {:.3}, steady = {}{}",
        run.preset,
        run.h_factor,
        report.profile_error,
        report.profile_error_v,
        report.time,
        report.steady,
        report.diverged_at.map(|k| format!(", diverged at step {k}")).unwrap_or_default()
    );
    Ok(RunOutcome { ok: report.diverged_at.is_none(), summary, files })
}

pub fn run_dambreak(config: &RunConfig, run: &DamBreakRun<f64>, reference: Option<&Path>, out: &Path) -> Result<RunOutcome> {
    let (solver, system) = dambreak::build_solver(run)?;
    let mut snaps = SnapshotWriter::new(out, config.snapshots, config.vtk);
    let report = dambreak::run_dambreak_with(run, |s| snaps.observe(s))?;
    let mut files = snaps.finish()?;
    let names: Vec<String> = (1..=run.sensor_heights.len()).map(|l| format!("p{l}")).collect();
    let mut columns = vec!["t"];
    columns.extend(names.iter().map(String::as_str));
    let heights = run.sensor_heights.iter().map(|y| format!("{y}")).collect::<Vec<_>>().join(", ");
    let mut table =
        Table::new(format!("t: time, p1..pN: pressure at the wall particle nearest each sensor (heights {heights} on the right wall)"), &columns);
    for k in 0..report.times.len() {
        let mut row = vec![report.times[k]];
        row.extend(report.sensor_pressures.iter().map(|s| s[k]));
        table.push(row);
    }
    let sensors = out.join("sensors.csv");
    table.write(&sensors)?;
    files.push(sensors);
    let errors = match reference {
        Some(path) => {
            let profile = load_reference_profile::<f64>(path, ReferenceKind::Sensor)?;
            Some(sensor_errors(&report.times, &report.sensor_pressures, &profile)?)
        }
        None => None,
    };
    let mut meta = RunMetadata::new("dambreak", config_json(config)).with_solver(&solver, system.len());
    meta.steps = Some(report.steps);
    meta.diagnostics = Some(report.diagnostics);
    meta.runtime_seconds = report.runtime_seconds;
    meta.results = json!({
        "settled_means": report.settled_means,
        "hydrostatically_ordered": report.hydrostatically_ordered(),
        "min_pressure": report.min_pressure,
        "fluid_initial": report.n_fluid_initial,
        "fluid_final": report.n_fluid_final,
        "escaped": report.escaped,
        "non_finite": report.non_finite,
        "diverged_at": report.diverged_at,
        "sensor_errors": errors,
        "constants": { "gravity": run.gravity, "rho": run.rho, "nu": run.nu },
    });
    files.push(write_metadata(out, &meta)?);
    let summary = format!(
        "dambreak {}: {} steps, min pressure {:.4}, settled sensor means {:?}, ordered = {}",
        run.preset,
        report.steps,
        report.min_pressure,
        report.settled_means,
        report.hydrostatically_ordered()
    );
    Ok(RunOutcome { ok: report.diverged_at.is_none() && !report.non_finite, summary, files })
}

pub fn run_truncation(config: &RunConfig, p: &TruncationParams, out: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let preset = config.preset;
    if preset == Preset::Custom {
        return Err(Error::key("preset", "the truncation study compares named presets"));
    }
    let mut table = Table::new(
        "h_factor: h / dx, eps_max: perturbation amplitude, seed: generator seed, error: relative Laplacian truncation error",
        &["h_factor", "eps_max", "seed", "error"],
    );
    let mut means = Vec::new();
    let mut lines = Vec::new();
    for &hf in &p.h_factors {
        let r = truncation_error_study(preset, hf, p.eps_max, &p.seeds)?;
        for (&seed, &e) in r.seeds.iter().zip(&r.errors) {
            table.push(vec![hf, p.eps_max, seed as f64, e]);
        }
        lines.push(format!("truncation {preset} h = {hf}dx: mean error {:.5}", r.mean));
        means.push(json!({ "h_factor": hf, "mean": r.mean }));
    }
    let path = out.join("truncation.csv");
    table.write(&path)?;
    let mut meta = RunMetadata::new("truncation", config_json(config));
    meta.runtime_seconds = start.elapsed().as_secs_f64();
    meta.results = json!({ "preset": preset, "means": means });
    let meta_path = write_metadata(out, &meta)?;
    Ok(RunOutcome { ok: true, summary: lines.join("\n"), files: vec![path, meta_path] })
}

pub fn run_optimize(config: &RunConfig, p: &OptimizeParams, out: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let opt = optimize_polynomial::<f64>(p.n, p.dim)?;
    let mut meta = RunMetadata::new("optimize-weight", config_json(config));
    meta.runtime_seconds = start.elapsed().as_secs_f64();
    meta.results = json!({ "coefficients": opt.coefficients, "objective": opt.objective, "evaluations": opt.evaluations });
    let meta_path = write_metadata(out, &meta)?;
    let coeffs = opt.coefficients.iter().map(|c| format_coefficient(*c)).collect::<Vec<_>>().join(", ");
    let summary = format!("coefficients a_0..a_{}: ({coeffs})\nobjective F = {}", p.n, opt.objective);
    Ok(RunOutcome { ok: true, summary, files: vec![meta_path] })
}

/// Rounds away optimizer noise below 1e-9 so exact optima print as integers.
fn format_coefficient(c: f64) -> String {
    let r = c.round();
    if (c - r).abs() < 1e-9 {
        format!("{}", r as i64)
    } else {
        format!("{c}")
    }
}

fn run_custom<const D: usize>(config: &RunConfig, p: &CustomParams, out: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let lo: [f64; D] = std::array::from_fn(|k| p.lo[k]);
    let hi: [f64; D] = std::array::from_fn(|k| p.hi[k]);
    let periodic: [bool; D] = std::array::from_fn(|k| p.periodic[k]);
    let domain = DomainSpec::new(lo, hi, periodic, p.strip)?;
    let system: ParticleSystem<f64, D> = match &p.initial {
        Some(path) => read_snapshot_csv(path)?,
        None => {
            let full = lattice_init(&domain, p.dx, true)?;
            let inside = |x: &[f64; D]| {
                (0..D).all(|k| {
                    p.fluid_lo.as_ref().is_none_or(|l| x[k] >= l[k]) && p.fluid_hi.as_ref().is_none_or(|h| x[k] <= h[k])
                })
            };
            let keep: Vec<usize> =
                (0..full.len()).filter(|&i| full.kinds[i] == ParticleKind::Boundary || inside(&full.positions[i])).collect();
            ParticleSystem::at_rest(
                keep.iter().map(|&i| full.positions[i]).collect(),
                keep.iter().map(|&i| full.volumes[i]).collect(),
                keep.iter().map(|&i| full.kinds[i]).collect(),
            )?
        }
    };
    let h = p.h_factor * p.dx;
    let force: [f64; D] = std::array::from_fn(|k| p.body_force[k]);
    let lid: [f64; D] = std::array::from_fn(|k| p.lid_velocity[k]);
    let f_inf = vector::norm(&force);
    let tau = p.tau.unwrap_or_else(|| dt_max(h, p.eps, p.nu, f_inf));
    let mut cfg = SolverConfig::new(p.rho, p.nu, p.eps, tau, p.end_time);
    cfg.body_force = Arc::new(move |_, _| force);
    let top = hi[D - 1];
    cfg.boundary_velocity = Arc::new(move |x: &[f64; D], _| if x[D - 1] >= top { lid } else { [0.0; D] });
    cfg.pressure_recalc = p.pressure_recalc;
    cfg.free_surface = p.free_surface;
    cfg.collision = p.collision;
    let triple = match &config.weights {
        Some(c) => WeightTriple::custom_polynomial(c.clone(), D)?,
        None => WeightTriple::preset(config.preset, D)?,
    };
    let ops = OperatorSet::new(triple, h)?;
    let solver = Solver::new(cfg, ops, domain, &system)?;
    let n = system.len();
    let steps = solver.config().steps();
    let mut snaps = SnapshotWriter::new(out, config.snapshots, config.vtk);
    let mut state = solver.initial_state(system)?;
    snaps.observe(&state);
    let mut table = Table::new(
        "k: step, t: time, kinetic: sum of rho V |u|^2 / 2 over fluid particles, max_speed: largest fluid speed, p_min / p_max: pressure range",
        &["k", "t", "kinetic", "max_speed", "p_min", "p_max"],
    );
    let mut diverged_at = None;
    for _ in 0..steps {
        state = match solver.advance(&state) {
            Ok(s) => s,
            Err(Error::Instability { step, detail }) => {
                log::warn!("custom run diverged at step {step}: {detail}");
                diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        let s = &state.system;
        let (mut kinetic, mut vmax) = (0.0, 0.0f64);
        for i in s.fluid_indices() {
            let u2 = vector::norm_sq(&s.velocities[i]);
            kinetic += 0.5 * p.rho * s.volumes[i] * u2;
            vmax = vmax.max(u2.sqrt());
        }
        let pmin = s.pressures.iter().copied().fold(f64::INFINITY, f64::min);
        let pmax = s.pressures.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        table.push(vec![state.k as f64, solver.time_at(state.k), kinetic, vmax, pmin, pmax]);
        snaps.observe(&state);
    }
    let mut files = snaps.finish()?;
    let path = out.join("history.csv");
    table.write(&path)?;
    files.push(path);
    let mut meta = RunMetadata::new("custom", config_json(config)).with_solver(&solver, n);
    meta.steps = Some(state.k);
    meta.diagnostics = Some(state.diagnostics);
    meta.runtime_seconds = start.elapsed().as_secs_f64();
    meta.results = json!({ "diverged_at": diverged_at, "neighbor_rebuilds": solver.neighbor_rebuilds() });
    files.push(write_metadata(out, &meta)?);
    let summary = match diverged_at {
        None => format!("custom {D}-D run: {} particles, {} steps", n, state.k),
        Some(k) => format!("custom {D}-D run diverged at step {k}"),
    };
    Ok(RunOutcome { ok: diverged_at.is_none(), summary, files })
}

fn write_metadata(out: &Path, meta: &RunMetadata) -> Result<PathBuf> {
    let path = out.join("metadata.json");
    write_json(&path, meta)?;
    Ok(path)
}
