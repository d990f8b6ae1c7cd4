//! Lid-driven cavity on the unit square with dummy-particle walls.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::reference::{cavity_re100_u_path, cavity_re100_v_path, load_reference_profile, ReferenceKind, ReferenceProfile};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::operators::OperatorSet;
use crate::particles::{lattice_init, ParticleSystem};
use crate::scalar::Real;
use crate::solver::{dt_max, Diagnostics, Solver, SolverConfig, StepState};
use crate::vector::{self, Vector};
use crate::weights::{Preset, WeightTriple};

/// A run counts as failed when it diverges or its profile error reaches this value.
pub const FAILURE_ERROR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavityRun<T> {
    pub preset: Preset,
    pub re: T,
    pub dx: T,
    /// `h = h_factor dx`.
    pub h_factor: T,
    pub eps: T,
    /// Width of the dummy-particle strip.
    pub strip: T,
    pub lid_speed: T,
    pub rho: T,
    /// `None` uses the stability bound.
    pub tau: Option<T>,
    /// Steady once the fluid kinetic energy changes by at most `steady_tol` (relative)
    /// over one convective time `L / U`. Particles keep accelerating along their
    /// closed paths in a steady flow, so per-particle velocity changes never settle.
    pub steady_tol: T,
    pub max_steps: usize,
    /// Simulated-time cap, checked alongside the step cap.
    pub max_time: T,
}

impl<T: Real> CavityRun<T> {
    pub fn new(preset: Preset, re: T, dx: T, h_factor: T) -> Self {
        Self {
            preset,
            re,
            dx,
            h_factor,
            eps: T::lit(0.1),
            strip: T::lit(0.1),
            lid_speed: T::one(),
            rho: T::one(),
            tau: None,
            steady_tol: T::lit(5e-3),
            max_steps: 200_000,
            max_time: T::lit(20.0),
        }
    }

    pub fn h(&self) -> T {
        self.h_factor * self.dx
    }

    /// Unit box edge, so `nu = U / Re`.
    pub fn nu(&self) -> T {
        self.lid_speed / self.re
    }

    pub fn tau(&self) -> T {
        self.tau.unwrap_or_else(|| dt_max(self.h(), self.eps, self.nu(), T::zero()))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("Re", self.re),
            ("dx", self.dx),
            ("h_factor", self.h_factor),
            ("eps", self.eps),
            ("strip", self.strip),
            ("lid_speed", self.lid_speed),
            ("rho", self.rho),
            ("tau", self.tau()),
            ("max_time", self.max_time),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// One sampled point of a centreline profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileSample<T> {
    pub coordinate: T,
    pub reference: T,
    pub computed: T,
    pub particle: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CavityReport<T> {
    pub n: usize,
    pub h: T,
    pub tau: T,
    pub steps: usize,
    pub time: T,
    pub steady: bool,
    /// Relative kinetic-energy change over the last completed convective time.
    pub residual: T,
    pub diverged_at: Option<usize>,
    /// Relative profile error of `u1` along `x = 0.5`; infinite after a divergence.
    pub profile_error: T,
    /// Same for `u2` along `y = 0.5`.
    pub profile_error_v: T,
    pub profile: Vec<ProfileSample<T>>,
    pub profile_v: Vec<ProfileSample<T>>,
    pub diagnostics: Diagnostics,
    pub runtime_seconds: f64,
}

impl<T: Real> CavityReport<T> {
    pub fn failed(&self) -> bool {
        self.diverged_at.is_some() || !(self.profile_error < T::lit(FAILURE_ERROR))
    }
}

pub fn initial_system<T: Real>(run: &CavityRun<T>) -> Result<(DomainSpec<T, 2>, ParticleSystem<T, 2>)> {
    let domain = DomainSpec::walled([T::zero(); 2], [T::one(); 2], run.strip)?;
    let system = lattice_init(&domain, run.dx, true)?;
    Ok((domain, system))
}

pub fn build_solver<T: Real>(run: &CavityRun<T>) -> Result<(Solver<T, 2>, ParticleSystem<T, 2>)> {
    run.validate()?;
    let (domain, system) = initial_system(run)?;
    let mut cfg = SolverConfig::new(run.rho, run.nu(), run.eps, run.tau(), run.max_time);
    let lid = run.lid_speed;
    cfg.boundary_velocity = Arc::new(move |x: &Vector<T, 2>, _t| if x[1] >= T::one() { [lid, T::zero()] } else { [T::zero(); 2] });
    let ops = OperatorSet::new(WeightTriple::preset(run.preset, 2)?, run.h())?;
    Ok((Solver::new(cfg, ops, domain, &system)?, system))
}

/// Samples `component` of the velocity at the particle nearest to each reference point
/// `point(s)` and returns the weighted relative L2 error with weights
/// `s_j - s_{j-1}` (the first sample has no predecessor and carries no weight).
pub fn profile_error<T: Real>(
    system: &ParticleSystem<T, 2>,
    reference: &ReferenceProfile<T>,
    point: impl Fn(T) -> Vector<T, 2>,
    component: usize,
) -> (T, Vec<ProfileSample<T>>) {
    let samples: Vec<ProfileSample<T>> = reference
        .samples()
        .map(|(s, reference)| {
            let target = point(s);
            let particle = nearest_particle(system, &target);
            ProfileSample { coordinate: s, reference, computed: system.velocities[particle][component], particle }
        })
        .collect();
    let mut num = T::zero();
    let mut den = T::zero();
    for w in samples.windows(2) {
        let weight = w[1].coordinate - w[0].coordinate;
        num = num + weight * (w[1].computed - w[1].reference).powi(2);
        den = den + weight * w[1].reference.powi(2);
    }
    let err = if den > T::zero() { (num / den).sqrt() } else { T::nan() };
    (err, samples)
}

/// Index of the particle closest to `x`; ties go to the lower index.
pub fn nearest_particle<T: Real>(system: &ParticleSystem<T, 2>, x: &Vector<T, 2>) -> usize {
    let mut best = (T::infinity(), 0);
    for (i, p) in system.positions.iter().enumerate() {
        let d = vector::norm_sq(&vector::sub(p, x));
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// `sum_i V_i |u_i|^2 / 2` over fluid particles (unit density).
pub fn kinetic_energy<T: Real>(system: &ParticleSystem<T, 2>) -> T {
    system.fluid_indices().map(|i| T::lit(0.5) * system.volumes[i] * vector::norm_sq(&system.velocities[i])).sum()
}

/// Centreline profiles of a state against the bundled Re = 100 references.
pub fn profile_errors<T: Real>(system: &ParticleSystem<T, 2>) -> Result<[(T, Vec<ProfileSample<T>>); 2]> {
    let u_ref = load_reference_profile::<T>(&cavity_re100_u_path(), ReferenceKind::Centreline)?;
    let v_ref = load_reference_profile::<T>(&cavity_re100_v_path(), ReferenceKind::Centreline)?;
    let half = T::lit(0.5);
    Ok([profile_error(system, &u_ref, |y| [half, y], 0), profile_error(system, &v_ref, |x| [x, half], 1)])
}

/// Runs until steady (or a cap) and compares the centreline profiles with the Re = 100
/// reference. `observer` sees each new state.
pub fn run_cavity_with<T: Real>(run: &CavityRun<T>, mut observer: impl FnMut(&StepState<T, 2>)) -> Result<CavityReport<T>> {
    if (run.re - T::lit(100.0)).abs() > T::lit(1e-9) {
        return Err(Error::InvalidConfig(format!("reference profiles are bundled for Re = 100 only, got {}", run.re)));
    }
    let start = Instant::now();
    let (solver, system) = build_solver(run)?;
    let tau = solver.config().tau;
    let step_cap = run.max_steps.min(solver.config().steps());
    let check_every = ((T::one() / run.lid_speed) / tau).ceil().to_usize().unwrap_or(usize::MAX).max(1);
    let mut last_energy = T::zero();
    let mut state = solver.initial_state(system)?;
    observer(&state);
    let mut diverged_at = None;
    let mut steady = false;
    let mut res = T::infinity();
    while state.k < step_cap {
        let next = match solver.advance(&state) {
            Ok(s) => s,
            Err(Error::Instability { step, detail }) => {
                log::warn!("cavity run ({}) diverged at step {step}: {detail}", run.preset.tag());
                diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        state = next;
        observer(&state);
        if state.k % check_every == 0 {
            let energy = kinetic_energy(&state.system);
            res = (energy - last_energy).abs() / energy.max(T::min_positive_value());
            log::debug!("cavity ({}) t = {} relative energy change {res}", run.preset.tag(), solver.time_at(state.k));
            last_energy = energy;
            if res <= run.steady_tol {
                steady = true;
                break;
            }
        }
    }
    let [(mut err_u, profile), (mut err_v, profile_v)] = profile_errors(&state.system)?;
    if diverged_at.is_some() {
        err_u = T::infinity();
        err_v = T::infinity();
    }
    Ok(CavityReport {
        n: state.system.len(),
        h: run.h(),
        tau,
        steps: state.k,
        time: solver.time_at(state.k),
        steady,
        residual: res,
        diverged_at,
        profile_error: err_u,
        profile_error_v: err_v,
        profile,
        profile_v,
        diagnostics: state.diagnostics,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_cavity<T: Real>(run: &CavityRun<T>) -> Result<CavityReport<T>> {
    run_cavity_with(run, |_| {})
}
