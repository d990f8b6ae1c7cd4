//! Reduced two-dimensional dam break in free-surface mode.

use std::time::Instant;

use serde::Serialize;

use super::reference::ReferenceProfile;
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::operators::OperatorSet;
use crate::particles::{lattice_init, ParticleKind, ParticleSystem};
use crate::scalar::Real;
use crate::solver::{constant_field, dt_max, CollisionParams, Diagnostics, Solver, SolverConfig, StepState};
use crate::vector::{self, Vector};
use crate::weights::{Preset, WeightTriple};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DamBreakRun<T> {
    pub preset: Preset,
    /// Closed tank `[0, width] x [0, height]`.
    pub tank: [T; 2],
    /// Water column `[0, width] x [0, height]` against the left wall.
    pub column: [T; 2],
    pub dx: T,
    pub h_factor: T,
    /// Dummy strip width as a multiple of `dx`.
    pub strip_factor: T,
    pub eps: T,
    pub end_time: T,
    pub gravity: T,
    pub rho: T,
    pub nu: T,
    pub collision: CollisionParams<T>,
    /// Heights of the pressure sensors on the right wall.
    pub sensor_heights: Vec<T>,
    /// `None` uses the stability bound.
    pub tau: Option<T>,
}

impl<T: Real> DamBreakRun<T> {
    /// Tank 0.6 m x 0.6 m, column 0.15 m x 0.3 m, water properties.
    pub fn desk_scale(preset: Preset) -> Self {
        let dx = T::lit(0.005);
        Self {
            preset,
            tank: [T::lit(0.6), T::lit(0.6)],
            column: [T::lit(0.15), T::lit(0.3)],
            dx,
            h_factor: T::lit(2.6),
            strip_factor: T::lit(5.2),
            eps: T::lit(0.05),
            end_time: T::lit(1.3),
            gravity: T::lit(9.81),
            rho: T::lit(1000.0),
            nu: T::lit(1e-6),
            collision: CollisionParams::with_defaults(dx),
            sensor_heights: [0.003, 0.015, 0.03, 0.08].into_iter().map(T::lit).collect(),
            tau: None,
        }
    }

    pub fn h(&self) -> T {
        self.h_factor * self.dx
    }

    pub fn strip(&self) -> T {
        self.strip_factor * self.dx
    }

    pub fn tau(&self) -> T {
        self.tau.unwrap_or_else(|| dt_max(self.h(), self.eps, self.nu, self.gravity.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dx", self.dx),
            ("h_factor", self.h_factor),
            ("strip_factor", self.strip_factor),
            ("eps", self.eps),
            ("T", self.end_time),
            ("rho", self.rho),
            ("nu", self.nu),
            ("tau", self.tau()),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for k in 0..2 {
            if !(self.column[k] > T::zero() && self.column[k] <= self.tank[k]) {
                return Err(Error::InvalidConfig("water column must be non-empty and fit in the tank".into()));
            }
        }
        if self.sensor_heights.iter().any(|&y| !(y >= T::zero() && y <= self.tank[1])) {
            return Err(Error::InvalidConfig("sensor heights must lie on the tank wall".into()));
        }
        Ok(())
    }

    /// Sensor positions on the right wall.
    pub fn sensor_points(&self) -> Vec<Vector<T, 2>> {
        self.sensor_heights.iter().map(|&y| [self.tank[0], y]).collect()
    }
}

/// Fluid nodes fill the column; other nodes of the tank interior are left empty.
pub fn initial_system<T: Real>(run: &DamBreakRun<T>) -> Result<(DomainSpec<T, 2>, ParticleSystem<T, 2>)> {
    let domain = DomainSpec::walled([T::zero(); 2], run.tank, run.strip())?;
    let full = lattice_init(&domain, run.dx, true)?;
    let keep: Vec<usize> = (0..full.len())
        .filter(|&i| {
            let x = &full.positions[i];
            full.kinds[i] == ParticleKind::Boundary || (x[0] < run.column[0] && x[1] < run.column[1])
        })
        .collect();
    let system = ParticleSystem::at_rest(
        keep.iter().map(|&i| full.positions[i]).collect(),
        keep.iter().map(|&i| full.volumes[i]).collect(),
        keep.iter().map(|&i| full.kinds[i]).collect(),
    )?;
    Ok((domain, system))
}

pub fn build_solver<T: Real>(run: &DamBreakRun<T>) -> Result<(Solver<T, 2>, ParticleSystem<T, 2>)> {
    run.validate()?;
    let (domain, system) = initial_system(run)?;
    let mut cfg = SolverConfig::new(run.rho, run.nu, run.eps, run.tau(), run.end_time);
    cfg.body_force = constant_field([T::zero(), -run.gravity]);
    cfg.free_surface = true;
    cfg.collision = Some(run.collision);
    let ops = OperatorSet::new(WeightTriple::preset(run.preset, 2)?, run.h())?;
    Ok((Solver::new(cfg, ops, domain, &system)?, system))
}

/// Index of the wall particle nearest to each sensor.
pub fn sensor_particles<T: Real>(system: &ParticleSystem<T, 2>, sensors: &[Vector<T, 2>]) -> Vec<usize> {
    sensors
        .iter()
        .map(|s| {
            let mut best = (T::infinity(), usize::MAX);
            for i in 0..system.len() {
                if system.kinds[i] != ParticleKind::Boundary {
                    continue;
                }
                let d = vector::norm_sq(&vector::sub(&system.positions[i], s));
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DamBreakReport<T> {
    pub n_fluid_initial: usize,
    pub n_fluid_final: usize,
    pub tau: T,
    pub steps: usize,
    pub times: Vec<T>,
    /// `sensor_pressures[l][k]` is sensor `l` after step `k` (index 0 is the initial state).
    pub sensor_pressures: Vec<Vec<T>>,
    /// Sensor means over `[T/2, T]`.
    pub settled_means: Vec<T>,
    pub min_pressure: T,
    pub non_finite: bool,
    /// Fluid particles found outside the tank at the end.
    pub escaped: usize,
    pub diverged_at: Option<usize>,
    pub diagnostics: Diagnostics,
    pub runtime_seconds: f64,
}

impl<T: Real> DamBreakReport<T> {
    /// Means decrease strictly with sensor height (sensors listed bottom to top).
    pub fn hydrostatically_ordered(&self) -> bool {
        self.settled_means.windows(2).all(|w| w[0] > w[1])
    }
}

pub fn run_dambreak_with<T: Real>(run: &DamBreakRun<T>, mut observer: impl FnMut(&StepState<T, 2>)) -> Result<DamBreakReport<T>> {
    let start = Instant::now();
    let (solver, system) = build_solver(run)?;
    let tau = solver.config().tau;
    let steps = solver.config().steps();
    let n_fluid_initial = system.count(ParticleKind::Fluid);
    let sensors = sensor_particles(&system, &run.sensor_points());
    let mut state = solver.initial_state(system)?;
    observer(&state);
    let mut times = vec![T::zero()];
    let mut sensor_pressures: Vec<Vec<T>> = sensors.iter().map(|&i| vec![state.system.pressures[i]]).collect();
    let mut min_pressure = T::infinity();
    let mut diverged_at = None;
    for _ in 0..steps {
        state = match solver.advance(&state) {
            Ok(s) => s,
            Err(Error::Instability { step, detail }) => {
                log::warn!("dam break diverged at step {step}: {detail}");
                diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        min_pressure = state.system.pressures.iter().copied().fold(min_pressure, T::min);
        times.push(solver.time_at(state.k));
        for (series, &i) in sensor_pressures.iter_mut().zip(&sensors) {
            series.push(state.system.pressures[i]);
        }
        observer(&state);
    }
    let s = &state.system;
    let non_finite = s.positions.iter().chain(&s.velocities).flatten().chain(&s.pressures).any(|v| !v.is_finite());
    let domain = solver.domain();
    let escaped = (0..s.len())
        .filter(|&i| s.kinds[i] == ParticleKind::Fluid && !domain.contains_interior(&s.positions[i]))
        .count();
    let half = run.end_time * T::lit(0.5);
    let settled_means = sensor_pressures
        .iter()
        .map(|series| {
            let tail: Vec<T> = times.iter().zip(series).filter(|(t, _)| **t >= half).map(|(_, p)| *p).collect();
            if tail.is_empty() {
                T::nan()
            } else {
                tail.iter().copied().sum::<T>() / T::from_usize_lossy(tail.len())
            }
        })
        .collect();
    Ok(DamBreakReport {
        n_fluid_initial,
        n_fluid_final: s.count(ParticleKind::Fluid),
        tau,
        steps: state.k,
        times,
        sensor_pressures,
        settled_means,
        min_pressure,
        non_finite,
        escaped,
        diverged_at,
        diagnostics: state.diagnostics,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_dambreak<T: Real>(run: &DamBreakRun<T>) -> Result<DamBreakReport<T>> {
    run_dambreak_with(run, |_| {})
}

/// Relative L2-in-time error of each sensor series against a measured series (time column
/// followed by one pressure column per sensor). The measurement is interpolated linearly
/// at the step times inside its time range; each sample is weighted by the step length.
pub fn sensor_errors<T: Real>(times: &[T], series: &[Vec<T>], reference: &ReferenceProfile<T>) -> Result<Vec<T>> {
    if reference.values.len() < series.len() {
        return Err(Error::InvalidInput(format!(
            "reference has {} sensor columns, run has {}",
            reference.values.len(),
            series.len()
        )));
    }
    let interp = |col: &[T], t: T| -> Option<T> {
        let ts = &reference.abscissae;
        let j = ts.partition_point(|&s| s < t);
        if j < ts.len() && ts[j] == t {
            return Some(col[j]);
        }
        if j == 0 || j == ts.len() {
            return None;
        }
        let a = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
        Some(col[j - 1] + a * (col[j] - col[j - 1]))
    };
    Ok(series
        .iter()
        .zip(&reference.values)
        .map(|(p, col)| {
            let mut num = T::zero();
            let mut den = T::zero();
            for k in 1..times.len() {
                if let Some(r) = interp(col, times[k]) {
                    let dt = times[k] - times[k - 1];
                    num = num + dt * (p[k] - r).powi(2);
                    den = den + dt * r * r;
                }
            }
            if den > T::zero() {
                (num / den).sqrt()
            } else {
                T::nan()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::reference::ReferenceKind;
    use approx::assert_abs_diff_eq;

    fn small() -> DamBreakRun<f64> {
        let mut run = DamBreakRun::desk_scale(Preset::GeneralizedSpike);
        run.dx = 0.02;
        run.collision = CollisionParams::with_defaults(run.dx);
        run.sensor_heights = vec![0.01, 0.05];
        run.end_time = 0.1;
        run
    }

    #[test]
    fn desk_scale_layout() {
        let run = DamBreakRun::<f64>::desk_scale(Preset::GeneralizedSpike);
        let (_, s) = initial_system(&run).unwrap();
        assert_eq!(s.count(ParticleKind::Fluid), 30 * 60);
        assert_abs_diff_eq!(run.tau(), 0.013 * 0.05 / 4.0, epsilon = 1e-15);
        let sensors = sensor_particles(&s, &run.sensor_points());
        for (&i, y) in sensors.iter().zip(&run.sensor_heights) {
            let x = s.positions[i];
            assert_abs_diff_eq!(x[0], 0.6025, epsilon = 1e-12);
            assert!((x[1] - y).abs() <= 0.0025 + 1e-12);
        }
    }

    #[test]
    fn short_run_keeps_pressures_nonnegative() {
        let report = run_dambreak(&small()).unwrap();
        assert!(report.diverged_at.is_none() && !report.non_finite);
        assert!(report.min_pressure >= 0.0);
        assert_eq!(report.n_fluid_initial, report.n_fluid_final);
        assert_eq!(report.times.len(), report.steps + 1);
        assert_eq!(report.sensor_pressures[0].len(), report.steps + 1);
    }

    #[test]
    fn sensor_error_against_itself_is_zero() {
        let times = vec![0.0, 0.1, 0.2, 0.3];
        let series = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let reference = ReferenceProfile {
            kind: ReferenceKind::Sensor,
            columns: vec!["t".into(), "p1".into()],
            abscissae: vec![0.0, 0.2, 0.4],
            values: vec![vec![1.0, 3.0, 5.0]],
        };
        let e = sensor_errors(&times, &series, &reference).unwrap();
        assert_abs_diff_eq!(e[0], 0.0, epsilon = 1e-15);
        let doubled = vec![vec![2.0, 4.0, 6.0, 8.0]];
        let e = sensor_errors(&times, &doubled, &reference).unwrap();
        assert_abs_diff_eq!(e[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn validation() {
        let mut run = small();
        run.column = [0.7, 0.3];
        assert!(run.validate().is_err());
        let mut run = small();
        run.sensor_heights = vec![0.9];
        assert!(run.validate().is_err());
    }
}
