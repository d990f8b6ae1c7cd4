//! Decaying Taylor-Green vortex on the periodic unit box.

use std::time::Instant;

use serde::Serialize;

use super::{l2_space_norm, l2_space_norm_vec, mean_shift_pressure, relative, SpaceTimeAccumulator, SpaceTimeNorm};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::operators::OperatorSet;
use crate::particles::{lattice_init, ParticleSystem};
use crate::scalar::Real;
use crate::solver::{dt_max, Diagnostics, Solver, SolverConfig, StepState};
use crate::vector::{self, Vector};
use crate::weights::{Preset, WeightTriple};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorGreenParams<T> {
    pub u: T,
    pub l: T,
    pub re: T,
    pub rho: T,
}

impl<T: Real> Default for TaylorGreenParams<T> {
    fn default() -> Self {
        Self { u: T::one(), l: T::one(), re: T::lit(10.0), rho: T::one() }
    }
}

impl<T: Real> TaylorGreenParams<T> {
    pub fn nu(&self) -> T {
        self.u * self.l / self.re
    }
}

/// Exact velocity and pressure at `x` and time `t`.
pub fn taylor_green_exact<T: Real>(x: &Vector<T, 2>, t: T, p: &TaylorGreenParams<T>) -> (Vector<T, 2>, T) {
    let two_pi = T::lit(2.0) * T::PI();
    let k = two_pi / p.l;
    let decay = (-T::lit(8.0) * T::PI() * T::PI() * t / p.re).exp();
    let (sx, cx) = (k * x[0]).sin_cos();
    let (sy, cy) = (k * x[1]).sin_cos();
    let u = [-p.u * decay * cx * sy, p.u * decay * sx * cy];
    let pressure = -p.rho / T::lit(4.0) * decay * decay * ((T::lit(2.0) * k * x[0]).cos() + (T::lit(2.0) * k * x[1]).cos());
    (u, pressure)
}

/// Settings of one Taylor-Green run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorGreenRun<T> {
    pub preset: Preset,
    pub dx: T,
    pub h: T,
    pub eps: T,
    /// `None` uses the stability bound.
    pub tau: Option<T>,
    pub end_time: T,
    pub pressure_recalc: bool,
    pub norm: SpaceTimeNorm,
    pub params: TaylorGreenParams<T>,
}

impl<T: Real> TaylorGreenRun<T> {
    /// `dx = 0.04`, `h = 3.1 dx`, `eps = 0.1`, `T = 0.1`.
    pub fn fixed_resolution(preset: Preset, pressure_recalc: bool) -> Self {
        let dx = T::lit(0.04);
        Self {
            preset,
            dx,
            h: T::lit(3.1) * dx,
            eps: T::lit(0.1),
            tau: None,
            end_time: T::lit(0.1),
            pressure_recalc,
            norm: SpaceTimeNorm::Squared,
            params: TaylorGreenParams::default(),
        }
    }

    /// Refinement path `h = C_m dx^{1/m}` with `C_m = 3.1 * 0.04^{1 - 1/m}` and `eps = 2.5 dx`.
    pub fn convergence(preset: Preset, dx: T, m: u32) -> Self {
        let mut run = Self::fixed_resolution(preset, true);
        run.dx = dx;
        run.h = convergence_radius(dx, m);
        run.eps = T::lit(2.5) * dx;
        run
    }

    pub fn tau(&self) -> T {
        self.tau.unwrap_or_else(|| dt_max(self.h, self.eps, self.params.nu(), T::zero()))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("dx", self.dx), ("h", self.h), ("eps", self.eps), ("T", self.end_time), ("tau", self.tau())] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.h >= T::lit(0.5) * self.params.l {
            return Err(Error::InvalidConfig(format!("h = {} must be below half the box edge", self.h)));
        }
        Ok(())
    }
}

pub fn convergence_radius<T: Real>(dx: T, m: u32) -> T {
    let inv_m = T::one() / T::lit(m as f64);
    T::lit(3.1) * T::lit(0.04).powf(T::one() - inv_m) * dx.powf(inv_m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepError<T> {
    pub k: usize,
    pub t: T,
    pub velocity: T,
    pub pressure: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport<T> {
    pub n: usize,
    pub h: T,
    pub tau: T,
    pub steps: Vec<StepError<T>>,
    /// Relative space-time errors; infinite after a divergence.
    pub velocity_error: T,
    pub pressure_error: T,
    /// Step at which a non-finite state appeared.
    pub diverged_at: Option<usize>,
    pub diagnostics: Diagnostics,
    pub runtime_seconds: f64,
}

impl<T: Real> ErrorReport<T> {
    pub fn completed(&self) -> bool {
        self.diverged_at.is_none()
    }
}

/// Initial lattice with the exact velocity and pressure.
pub fn initial_system<T: Real>(run: &TaylorGreenRun<T>) -> Result<(DomainSpec<T, 2>, ParticleSystem<T, 2>)> {
    let l = run.params.l;
    let domain = DomainSpec::periodic([T::zero(); 2], [l; 2])?;
    let mut system = lattice_init(&domain, run.dx, false)?;
    for i in 0..system.len() {
        let (u, p) = taylor_green_exact(&system.positions[i], T::zero(), &run.params);
        system.velocities[i] = u;
        system.pressures[i] = p;
    }
    Ok((domain, system))
}

pub fn build_solver<T: Real>(run: &TaylorGreenRun<T>) -> Result<(Solver<T, 2>, ParticleSystem<T, 2>)> {
    run.validate()?;
    let (domain, system) = initial_system(run)?;
    let mut cfg = SolverConfig::new(run.params.rho, run.params.nu(), run.eps, run.tau(), run.end_time);
    cfg.pressure_recalc = run.pressure_recalc;
    let ops = OperatorSet::new(WeightTriple::preset(run.preset, 2)?, run.h)?;
    Ok((Solver::new(cfg, ops, domain, &system)?, system))
}

/// Relative velocity and mean-shifted pressure errors of one state, with the numerators and
/// exact norms.
fn step_norms<T: Real>(state: &StepState<T, 2>, t: T, params: &TaylorGreenParams<T>) -> [T; 4] {
    let s = &state.system;
    let n = s.len();
    let mut du = Vec::with_capacity(n);
    let mut ue = Vec::with_capacity(n);
    let mut pe = Vec::with_capacity(n);
    for i in 0..n {
        let (u, p) = taylor_green_exact(&s.positions[i], t, params);
        du.push(vector::sub(&s.velocities[i], &u));
        ue.push(u);
        pe.push(p);
    }
    let shifted = mean_shift_pressure(&s.pressures, &s.volumes);
    let dp: Vec<T> = shifted.iter().zip(&pe).map(|(&a, &b)| a - b).collect();
    [
        l2_space_norm_vec(&du, &s.volumes),
        l2_space_norm_vec(&ue, &s.volumes),
        l2_space_norm(&dp, &s.volumes),
        l2_space_norm(&pe, &s.volumes),
    ]
}

/// Runs to `T` and compares with the exact solution at every step. `observer` sees each
/// new state.
pub fn run_taylor_green_with<T: Real>(
    run: &TaylorGreenRun<T>,
    mut observer: impl FnMut(&StepState<T, 2>),
) -> Result<ErrorReport<T>> {
    let start = Instant::now();
    let (solver, system) = build_solver(run)?;
    let tau = solver.config().tau;
    let steps = solver.config().steps();
    let mut state = solver.initial_state(system)?;
    observer(&state);
    let mut acc = [SpaceTimeAccumulator::new(run.norm); 4];
    let mut history = Vec::with_capacity(steps);
    let mut diverged_at = None;
    for _ in 0..steps {
        state = match solver.advance(&state) {
            Ok(s) => s,
            Err(Error::Instability { step, detail }) => {
                log::warn!("Taylor-Green run diverged at step {step}: {detail}");
                diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        let t = solver.time_at(state.k);
        let norms = step_norms(&state, t, &run.params);
        for (a, &v) in acc.iter_mut().zip(&norms) {
            a.push(tau, v);
        }
        let nan = T::nan();
        history.push(StepError {
            k: state.k,
            t,
            velocity: relative(norms[0], norms[1]).unwrap_or(nan),
            pressure: relative(norms[2], norms[3]).unwrap_or(nan),
        });
        observer(&state);
    }
    let (velocity_error, pressure_error) = if diverged_at.is_some() {
        (T::infinity(), T::infinity())
    } else {
        (
            relative(acc[0].value(), acc[1].value()).unwrap_or(T::nan()),
            relative(acc[2].value(), acc[3].value()).unwrap_or(T::nan()),
        )
    };
    Ok(ErrorReport {
        n: state.system.len(),
        h: run.h,
        tau,
        steps: history,
        velocity_error,
        pressure_error,
        diverged_at,
        diagnostics: state.diagnostics,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_taylor_green<T: Real>(run: &TaylorGreenRun<T>) -> Result<ErrorReport<T>> {
    run_taylor_green_with(run, |_| {})
}

/// Observed orders in `h` between consecutive resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow<T> {
    pub dx_coarse: T,
    pub dx_fine: T,
    pub velocity_rate: T,
    pub pressure_rate: T,
}

pub fn rates_in_h<T: Real>(reports: &[(T, &ErrorReport<T>)]) -> Vec<RateRow<T>> {
    reports
        .windows(2)
        .map(|w| {
            let ((dx1, a), (dx2, b)) = (w[0], w[1]);
            RateRow {
                dx_coarse: dx1,
                dx_fine: dx2,
                velocity_rate: super::convergence_rate(a.velocity_error, b.velocity_error, a.h, b.h),
                pressure_rate: super::convergence_rate(a.pressure_error, b.pressure_error, a.h, b.h),
            }
        })
        .collect()
}

/// Volume-weighted norm of the discrete divergence of the initial velocity field.
pub fn initial_divergence<T: Real>(run: &TaylorGreenRun<T>) -> Result<T> {
    let (solver, system) = build_solver(run)?;
    let state = solver.initial_state(system)?;
    let s = &state.system;
    let ops = solver.operators();
    let div: Vec<T> = (0..s.len())
        .map(|i| {
            let g = ops.gradient_vector(i, &state.neighbors, &s.volumes, &s.velocities);
            g[0][0] + g[1][1]
        })
        .collect();
    Ok(l2_space_norm(&div, &s.volumes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_solution_examples() {
        let p = TaylorGreenParams::<f64>::default();
        let (u, pr) = taylor_green_exact(&[0.25, 0.25], 0.0, &p);
        assert_abs_diff_eq!(u[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pr, 0.5, epsilon = 1e-15);
        let (u, pr) = taylor_green_exact(&[0.0, 0.25], 0.0, &p);
        assert_abs_diff_eq!(u[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pr, 0.0, epsilon = 1e-15);
        let (u, pr) = taylor_green_exact(&[0.1, 0.7], 100.0, &p);
        assert!(vector::norm(&u) < 1e-30 && pr.abs() < 1e-30);
    }

    #[test]
    fn exact_velocity_is_divergence_free() {
        let p = TaylorGreenParams::<f64>::default();
        let e = 1e-6;
        for x in [[0.1, 0.2], [0.7, 0.33], [0.5, 0.9]] {
            let dudx = (taylor_green_exact(&[x[0] + e, x[1]], 0.05, &p).0[0] - taylor_green_exact(&[x[0] - e, x[1]], 0.05, &p).0[0]) / (2.0 * e);
            let dvdy = (taylor_green_exact(&[x[0], x[1] + e], 0.05, &p).0[1] - taylor_green_exact(&[x[0], x[1] - e], 0.05, &p).0[1]) / (2.0 * e);
            assert!((dudx + dvdy).abs() < 1e-8);
        }
    }

    #[test]
    fn convergence_path() {
        assert_abs_diff_eq!(convergence_radius(0.04, 2), 0.124, epsilon = 1e-15);
        assert_abs_diff_eq!(convergence_radius(0.01, 2), 0.062, epsilon = 1e-15);
        assert_abs_diff_eq!(convergence_radius(0.02, 1), 0.062, epsilon = 1e-15);
        let r = TaylorGreenRun::<f64>::fixed_resolution(Preset::GeneralizedSpike, true);
        assert_abs_diff_eq!(r.tau(), 0.0031, epsilon = 1e-15);
    }

    #[test]
    fn fixed_resolution_step_count() {
        let run = TaylorGreenRun::<f64>::fixed_resolution(Preset::GeneralizedSpike, true);
        let rep = run_taylor_green(&run).unwrap();
        assert_eq!(rep.steps.len(), 32);
        assert_eq!(rep.n, 625);
        assert!(rep.completed());
        assert!(rep.steps.iter().all(|s| s.velocity >= 0.0 && s.pressure >= 0.0));
    }
}
