//! Explicit penalty time stepper.
//!
//! One step is: velocity predictor and tentative positions, penalty pressure from the
//! kernel sum at the tentative positions, position correction with the plus-gradient,
//! optional collision handling, then pressure smoothing and the velocity correction.

use std::fmt;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{min_image_displacement, wrap_position, DomainSpec};
use crate::error::{Error, Result};
use crate::neighbor::{NeighborList, VerletCache};
use crate::operators::{c0h, OperatorSet};
use crate::particles::{ParticleKind, ParticleSystem};
use crate::scalar::Real;
use crate::vector::{self, Vector};

/// Verlet skin as a fraction of the influence radius.
const NEIGHBOR_SKIN: f64 = 0.2;

/// A vector field of position and time, used for body forces and boundary velocities.
pub type FieldFn<T, const D: usize> = Arc<dyn Fn(&Vector<T, D>, T) -> Vector<T, D> + Send + Sync>;

pub fn zero_field<T: Real, const D: usize>() -> FieldFn<T, D> {
    Arc::new(|_, _| vector::zero())
}

pub fn constant_field<T: Real, const D: usize>(v: Vector<T, D>) -> FieldFn<T, D> {
    Arc::new(move |_, _| v)
}

/// Stability bound `min{h eps/4, sqrt(h)/(4 sqrt(f_inf)), h^2/(8 nu)}`; the middle term
/// is dropped when `f_inf = 0`.
pub fn dt_max<T: Real>(h: T, eps: T, nu: T, f_inf: T) -> T {
    let four = T::lit(4.0);
    let penalty = h * eps / four;
    let viscous = h * h / (T::lit(8.0) * nu);
    let forcing = if f_inf > T::zero() { h.sqrt() / (four * f_inf.sqrt()) } else { T::infinity() };
    penalty.min(forcing).min(viscous)
}

/// Pairwise collision handling for free-surface runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionParams<T> {
    /// Pairs closer than `distance_factor * dx` collide.
    pub distance_factor: T,
    pub restitution: T,
    /// Initial particle spacing.
    pub dx: T,
}

impl<T: Real> CollisionParams<T> {
    pub fn with_defaults(dx: T) -> Self {
        Self { distance_factor: T::lit(0.8), restitution: T::lit(0.2), dx }
    }

    pub fn distance(&self) -> T {
        self.distance_factor * self.dx
    }
}

#[derive(Clone)]
pub struct SolverConfig<T, const D: usize> {
    pub rho: T,
    pub nu: T,
    pub eps: T,
    pub tau: T,
    pub end_time: T,
    pub body_force: FieldFn<T, D>,
    pub boundary_velocity: FieldFn<T, D>,
    pub pressure_recalc: bool,
    pub free_surface: bool,
    pub collision: Option<CollisionParams<T>>,
}

impl<T: Real, const D: usize> fmt::Debug for SolverConfig<T, D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolverConfig")
            .field("rho", &self.rho)
            .field("nu", &self.nu)
            .field("eps", &self.eps)
            .field("tau", &self.tau)
            .field("end_time", &self.end_time)
            .field("pressure_recalc", &self.pressure_recalc)
            .field("free_surface", &self.free_surface)
            .field("collision", &self.collision)
            .finish_non_exhaustive()
    }
}

impl<T: Real, const D: usize> SolverConfig<T, D> {
    /// Quiescent defaults: no forcing, no-slip walls, pressure smoothing on.
    pub fn new(rho: T, nu: T, eps: T, tau: T, end_time: T) -> Self {
        Self {
            rho,
            nu,
            eps,
            tau,
            end_time,
            body_force: zero_field(),
            boundary_velocity: zero_field(),
            pressure_recalc: true,
            free_surface: false,
            collision: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.rho), ("nu", self.nu), ("eps", self.eps), ("tau", self.tau), ("T", self.end_time)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if let Some(c) = &self.collision {
            if !self.free_surface {
                return Err(Error::InvalidConfig("collision handling requires free-surface mode".into()));
            }
            if !(c.distance_factor > T::zero()) || !(c.dx > T::zero()) {
                return Err(Error::InvalidConfig("collision distance must be positive".into()));
            }
            if c.restitution < T::zero() || c.restitution > T::one() {
                return Err(Error::InvalidConfig(format!("restitution must lie in [0, 1], got {}", c.restitution)));
            }
        }
        Ok(())
    }

    /// Number of steps `floor(T/tau)`, tolerant to rounding in the ratio.
    pub fn steps(&self) -> usize {
        let r = (self.end_time / self.tau).to_f64().unwrap_or(0.0);
        (r + 1e-9).floor() as usize
    }
}

/// Per-step counters, accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    /// Fluid particles whose gradient/Laplacian stencil was empty.
    pub degenerate_stencils: usize,
    /// Tentative pressures raised to zero in free-surface mode.
    pub clamped_pressures: usize,
    pub collisions: usize,
    /// Particles whose Shepard average had no weight and kept the tentative pressure.
    pub shepard_fallbacks: usize,
}

impl std::ops::AddAssign for Diagnostics {
    fn add_assign(&mut self, o: Self) {
        self.degenerate_stencils += o.degenerate_stencils;
        self.clamped_pressures += o.clamped_pressures;
        self.collisions += o.collisions;
        self.shepard_fallbacks += o.shepard_fallbacks;
    }
}

/// State at step `k`, with the tentative fields of the step that produced it.
#[derive(Debug, Clone)]
pub struct StepState<T, const D: usize> {
    pub k: usize,
    pub system: ParticleSystem<T, D>,
    /// Neighbor list for `system.positions`.
    pub neighbors: NeighborList<T, D>,
    pub tentative_positions: Vec<Vector<T, D>>,
    pub tentative_velocities: Vec<Vector<T, D>>,
    pub tentative_pressures: Vec<T>,
    /// Counters of the last step.
    pub step_diagnostics: Diagnostics,
    /// Counters summed over all steps so far.
    pub diagnostics: Diagnostics,
}

pub struct Solver<T, const D: usize> {
    config: SolverConfig<T, D>,
    ops: OperatorSet<T>,
    domain: DomainSpec<T, D>,
    c0h: T,
    cache: Mutex<VerletCache<T, D>>,
}

impl<T: Real, const D: usize> Solver<T, D> {
    /// Validates the setup and fixes the lattice sum `C_0,h` from the initial particle count
    /// and total volume.
    pub fn new(config: SolverConfig<T, D>, ops: OperatorSet<T>, domain: DomainSpec<T, D>, initial: &ParticleSystem<T, D>) -> Result<Self> {
        config.validate()?;
        domain.validate()?;
        initial.validate()?;
        if ops.dim() != D {
            return Err(Error::InvalidConfig(format!("operators are {}-dimensional, particles {D}-dimensional", ops.dim())));
        }
        let h = ops.h();
        if !domain.is_fully_periodic() && h > domain.expansion * T::lit(0.5) * (T::one() + T::lit(1e-12)) {
            return Err(Error::InvalidConfig(format!(
                "influence radius {h} exceeds half the boundary strip width {}",
                domain.expansion
            )));
        }
        let c0h = c0h(&ops.triple().interp, h, initial.len(), initial.total_volume(), D)?;
        let cache = Mutex::new(VerletCache::new(h, h * T::lit(NEIGHBOR_SKIN), &domain));
        Ok(Self { config, ops, domain, c0h, cache })
    }

    pub fn config(&self) -> &SolverConfig<T, D> {
        &self.config
    }

    pub fn operators(&self) -> &OperatorSet<T> {
        &self.ops
    }

    pub fn domain(&self) -> &DomainSpec<T, D> {
        &self.domain
    }

    pub fn c0h(&self) -> T {
        self.c0h
    }

    pub fn time_at(&self, k: usize) -> T {
        self.config.tau * T::from_usize_lossy(k)
    }

    /// Wraps the system into the domain, applies the boundary velocity at `t = 0` and builds
    /// the first neighbor list.
    pub fn initial_state(&self, mut system: ParticleSystem<T, D>) -> Result<StepState<T, D>> {
        let zero = T::zero();
        for i in 0..system.len() {
            system.positions[i] = wrap_position(&system.positions[i], &self.domain);
            if system.kinds[i] == ParticleKind::Boundary {
                system.velocities[i] = (self.config.boundary_velocity)(&system.positions[i], zero);
            }
        }
        let neighbors = self.neighbors(&system.positions)?;
        let n = system.len();
        Ok(StepState {
            k: 0,
            tentative_positions: system.positions.clone(),
            tentative_velocities: system.velocities.clone(),
            tentative_pressures: vec![T::zero(); n],
            system,
            neighbors,
            step_diagnostics: Diagnostics::default(),
            diagnostics: Diagnostics::default(),
        })
    }

    fn neighbors(&self, positions: &[Vector<T, D>]) -> Result<NeighborList<T, D>> {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        cache.neighbors(positions, &self.domain)
    }

    /// Full candidate-list rebuilds done by the neighbor cache.
    pub fn neighbor_rebuilds(&self) -> usize {
        self.cache.lock().map(|c| c.rebuilds()).unwrap_or(0)
    }

    /// Velocity predictor `u* = u + tau (nu lap u + f)` and tentative positions `x* = x + tau u*`.
    /// Boundary particles take the prescribed velocity and stay in place.
    pub fn predictor(&self, state: &StepState<T, D>) -> (Vec<Vector<T, D>>, Vec<Vector<T, D>>) {
        let sys = &state.system;
        let cfg = &self.config;
        let t = self.time_at(state.k);
        (0..sys.len())
            .into_par_iter()
            .map(|i| {
                let x = &sys.positions[i];
                match sys.kinds[i] {
                    ParticleKind::Boundary => ((cfg.boundary_velocity)(x, t), *x),
                    ParticleKind::Fluid => {
                        let lap = self.ops.laplacian_vector(i, &state.neighbors, &sys.volumes, &sys.velocities);
                        let f = (cfg.body_force)(x, t);
                        let rhs = vector::axpy(&f, cfg.nu, &lap);
                        let u = vector::axpy(&sys.velocities[i], cfg.tau, &rhs);
                        let xs = wrap_position(&vector::axpy(x, cfg.tau, &u), &self.domain);
                        (u, xs)
                    }
                }
            })
            .unzip()
    }

    /// Penalty pressure `(rho/eps^2)(sum_j V_j w_interp_h / C_0,h - 1)`, clamped at zero in
    /// free-surface mode. Returns the pressures and the number of clamped values.
    pub fn penalty_pressure(&self, nl: &NeighborList<T, D>, volumes: &[T]) -> (Vec<T>, usize) {
        let cfg = &self.config;
        let stiffness = cfg.rho / (cfg.eps * cfg.eps);
        let inv_c0h = T::one() / self.c0h;
        let mut p: Vec<T> = self
            .ops
            .kernel_sum_all(nl, volumes)
            .into_iter()
            .map(|s| stiffness * (s * inv_c0h - T::one()))
            .collect();
        let mut clamped = 0;
        if cfg.free_surface {
            for v in p.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                    clamped += 1;
                }
            }
        }
        (p, clamped)
    }

    /// `x = x* - (tau^2/rho) grad+ p*` for fluid particles, evaluated on the tentative layout.
    pub fn position_correct(
        &self,
        tentative: &[Vector<T, D>],
        pressures: &[T],
        nl: &NeighborList<T, D>,
        volumes: &[T],
        kinds: &[ParticleKind],
    ) -> Vec<Vector<T, D>> {
        let c = -self.config.tau * self.config.tau / self.config.rho;
        (0..tentative.len())
            .into_par_iter()
            .map(|i| match kinds[i] {
                ParticleKind::Boundary => tentative[i],
                ParticleKind::Fluid => {
                    let g = self.ops.gradient_plus(i, nl, volumes, pressures);
                    wrap_position(&vector::axpy(&tentative[i], c, &g), &self.domain)
                }
            })
            .collect()
    }

    /// Shepard smoothing of the pressure (when enabled) and the velocity correction
    /// `u = u* - (tau/rho) G p` with `G` the gradient, or the plus-gradient in free-surface mode.
    /// Returns `(pressure, velocity, shepard_fallbacks)`.
    #[allow(clippy::too_many_arguments)]
    pub fn pressure_velocity_update(
        &self,
        nl: &NeighborList<T, D>,
        positions: &[Vector<T, D>],
        volumes: &[T],
        kinds: &[ParticleKind],
        tentative_pressures: &[T],
        tentative_velocities: &[Vector<T, D>],
        t_next: T,
    ) -> (Vec<T>, Vec<Vector<T, D>>, usize) {
        let cfg = &self.config;
        let (pressures, fallbacks) = if cfg.pressure_recalc {
            let mut fallbacks = 0;
            let p = self
                .ops
                .shepard_all(nl, volumes, tentative_pressures)
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    r.unwrap_or_else(|_| {
                        fallbacks += 1;
                        tentative_pressures[i]
                    })
                })
                .collect();
            (p, fallbacks)
        } else {
            (tentative_pressures.to_vec(), 0)
        };
        let c = -cfg.tau / cfg.rho;
        let velocities = (0..positions.len())
            .into_par_iter()
            .map(|i| match kinds[i] {
                ParticleKind::Boundary => (cfg.boundary_velocity)(&positions[i], t_next),
                ParticleKind::Fluid => {
                    let g = if cfg.free_surface {
                        self.ops.gradient_plus(i, nl, volumes, &pressures)
                    } else {
                        self.ops.gradient(i, nl, volumes, &pressures)
                    };
                    vector::axpy(&tentative_velocities[i], c, &g)
                }
            })
            .collect();
        (pressures, velocities, fallbacks)
    }

    /// Resolves fluid pairs closer than the collision distance, in index order. Each
    /// approaching pair gets a mass-weighted normal impulse with the configured restitution,
    /// and every close pair is pushed apart to the collision distance about its centre of mass.
    /// Returns the number of pairs touched.
    pub fn collision_resolve(
        &self,
        positions: &mut [Vector<T, D>],
        velocities: &mut [Vector<T, D>],
        volumes: &[T],
        kinds: &[ParticleKind],
        nl: &NeighborList<T, D>,
    ) -> usize {
        let Some(params) = self.config.collision else { return 0 };
        resolve_collisions(positions, velocities, volumes, kinds, nl, &self.domain, self.config.rho, &params)
    }

    /// One full step `k -> k + 1`.
    pub fn advance(&self, state: &StepState<T, D>) -> Result<StepState<T, D>> {
        let k_next = state.k + 1;
        let t_next = self.time_at(k_next);
        let degenerate_before = self.ops.degenerate_stencils();
        let mut diag = Diagnostics::default();

        let (u_star, x_star) = self.predictor(state);
        check_vectors(&u_star, k_next, "tentative velocity")?;
        check_vectors(&x_star, k_next, "tentative position")?;

        let sys = &state.system;
        let nl_star = self.neighbors(&x_star)?;
        let (p_star, clamped) = self.penalty_pressure(&nl_star, &sys.volumes);
        diag.clamped_pressures = clamped;
        check_scalars(&p_star, k_next, "tentative pressure")?;

        let mut positions = self.position_correct(&x_star, &p_star, &nl_star, &sys.volumes, &sys.kinds);
        check_vectors(&positions, k_next, "position")?;
        let mut nl = self.neighbors(&positions)?;

        let mut u_tentative = u_star.clone();
        if self.config.collision.is_some() {
            diag.collisions = self.collision_resolve(&mut positions, &mut u_tentative, &sys.volumes, &sys.kinds, &nl);
            if diag.collisions > 0 {
                nl = self.neighbors(&positions)?;
            }
        }

        let (pressures, velocities, fallbacks) =
            self.pressure_velocity_update(&nl, &positions, &sys.volumes, &sys.kinds, &p_star, &u_tentative, t_next);
        diag.shepard_fallbacks = fallbacks;
        check_scalars(&pressures, k_next, "pressure")?;
        check_vectors(&velocities, k_next, "velocity")?;
        diag.degenerate_stencils = self.ops.degenerate_stencils() - degenerate_before;

        let mut total = state.diagnostics;
        total += diag;
        Ok(StepState {
            k: k_next,
            system: ParticleSystem { positions, velocities, pressures, volumes: sys.volumes.clone(), kinds: sys.kinds.clone() },
            neighbors: nl,
            tentative_positions: x_star,
            tentative_velocities: u_star,
            tentative_pressures: p_star,
            step_diagnostics: diag,
            diagnostics: total,
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn resolve_collisions<T: Real, const D: usize>(
    positions: &mut [Vector<T, D>],
    velocities: &mut [Vector<T, D>],
    volumes: &[T],
    kinds: &[ParticleKind],
    nl: &NeighborList<T, D>,
    domain: &DomainSpec<T, D>,
    rho: T,
    params: &CollisionParams<T>,
) -> usize {
    let dc = params.distance();
    let mut touched = 0;
    for i in 0..positions.len() {
        if kinds[i] != ParticleKind::Fluid {
            continue;
        }
        for &j in nl.indices(i) {
            let j = j as usize;
            if j <= i || kinds[j] != ParticleKind::Fluid {
                continue;
            }
            // positions may have moved in earlier pair updates
            let d = min_image_displacement(&positions[i], &positions[j], domain);
            let r = vector::norm(&d);
            if !(r < dc) || r == T::zero() {
                continue;
            }
            let e = vector::scale(&d, T::one() / r);
            let (mi, mj) = (rho * volumes[i], rho * volumes[j]);
            let m_sum = mi + mj;
            let v_rel = vector::dot(&vector::sub(&velocities[j], &velocities[i]), &e);
            if v_rel < T::zero() {
                let impulse = (T::one() + params.restitution) * v_rel * mi * mj / m_sum;
                velocities[i] = vector::axpy(&velocities[i], impulse / mi, &e);
                velocities[j] = vector::axpy(&velocities[j], -impulse / mj, &e);
            }
            let gap = dc - r;
            positions[i] = wrap_position(&vector::axpy(&positions[i], -gap * mj / m_sum, &e), domain);
            positions[j] = wrap_position(&vector::axpy(&positions[j], gap * mi / m_sum, &e), domain);
            touched += 1;
        }
    }
    touched
}

fn check_vectors<T: Real, const D: usize>(v: &[Vector<T, D>], step: usize, what: &str) -> Result<()> {
    match v.iter().position(|x| !vector::is_finite(x)) {
        Some(i) => Err(Error::Instability { step, detail: format!("non-finite {what} at particle {i}") }),
        None => Ok(()),
    }
}

fn check_scalars<T: Real>(v: &[T], step: usize, what: &str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Instability { step, detail: format!("non-finite {what} at particle {i}") }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particles::lattice_init;
    use crate::weights::{Preset, WeightTriple};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn ops(h: f64) -> OperatorSet<f64> {
        OperatorSet::new(WeightTriple::preset(Preset::GeneralizedSpike, 2).unwrap(), h).unwrap()
    }

    #[test]
    fn dt_max_examples() {
        let a = dt_max(0.124, 0.1, 0.1, 0.0);
        assert_abs_diff_eq!(a, 0.0031, epsilon = 1e-15);
        assert_eq!(dt_max(1.0, 1.0, 0.125, 0.0625), 0.25);
        assert_abs_diff_eq!(dt_max(0.1, 10.0, 1e6, 0.0), 0.01 / 8e6, epsilon = 1e-20);
        // forcing term active
        assert_abs_diff_eq!(dt_max(0.01, 10.0, 1e-6, 9.81), 0.1 / (4.0 * 9.81f64.sqrt()), epsilon = 1e-15);
    }

    fn periodic_tg(n: usize) -> (Solver<f64, 2>, StepState<f64, 2>) {
        let d = DomainSpec::periodic([0.0, 0.0], [1.0, 1.0]).unwrap();
        let dx = 1.0 / n as f64;
        let mut s = lattice_init(&d, dx, false).unwrap();
        for (x, u) in s.positions.iter().zip(s.velocities.iter_mut()) {
            *u = [-(2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin(), (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()];
        }
        let h = 3.1 * dx;
        let cfg = SolverConfig::new(1.0, 0.1, 0.1, dt_max(h, 0.1, 0.1, 0.0), 0.1);
        let solver = Solver::new(cfg, ops(h), d, &s).unwrap();
        let st = solver.initial_state(s).unwrap();
        (solver, st)
    }

    #[test]
    fn predictor_matches_straight_line_evaluation() {
        let (solver, st) = periodic_tg(25);
        let (u_star, x_star) = solver.predictor(&st);
        let s = &st.system;
        let d = solver.domain();
        let h = solver.operators().h();
        let c_lap = solver.operators().c_lap();
        let tau = solver.config().tau;
        for i in 0..s.len() {
            let mut lap = [0.0; 2];
            for j in 0..s.len() {
                if j == i {
                    continue;
                }
                let r = vector::norm(&min_image_displacement(&s.positions[i], &s.positions[j], d));
                if r < h {
                    let w = (1.0 - r / h).powi(2) / (h * h);
                    for k in 0..2 {
                        lap[k] += s.volumes[j] * (s.velocities[j][k] - s.velocities[i][k]) * w;
                    }
                }
            }
            for k in 0..2 {
                let u = s.velocities[i][k] + tau * 0.1 * c_lap / (h * h) * lap[k];
                assert!((u_star[i][k] - u).abs() <= 1e-14 * (1.0 + u.abs()), "{i} {k}");
                let x = (s.positions[i][k] + tau * u).rem_euclid(1.0);
                assert!((x_star[i][k] - x).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn predictor_with_force_only() {
        let d = DomainSpec::periodic([0.0, 0.0], [1.0, 1.0]).unwrap();
        let s = lattice_init(&d, 0.1, false).unwrap();
        let mut cfg = SolverConfig::new(1.0, 0.7, 0.1, 0.01, 1.0);
        cfg.body_force = constant_field([1.0, 0.0]);
        let solver = Solver::new(cfg, ops(0.3), d, &s).unwrap();
        let st = solver.initial_state(s.clone()).unwrap();
        let (u, x) = solver.predictor(&st);
        for i in 0..s.len() {
            assert_eq!(u[i], [0.01, 0.0]);
            assert_abs_diff_eq!(x[i][0], s.positions[i][0] + 1e-4, epsilon = 1e-15);
            assert_eq!(x[i][1], s.positions[i][1]);
        }
    }

    #[test]
    fn penalty_pressure_vanishes_on_reference_lattice_and_is_positive_when_compressed() {
        let d = DomainSpec::periodic([0.0, 0.0], [1.0, 1.0]).unwrap();
        let s = lattice_init(&d, 0.04, false).unwrap();
        let solver = Solver::new(SolverConfig::new(1.0, 0.1, 0.1, 1e-3, 0.1), ops(0.124), d, &s).unwrap();
        let nl = NeighborList::build(&s, &d, 0.124).unwrap();
        let (p, _) = solver.penalty_pressure(&nl, &s.volumes);
        assert!(p.iter().all(|v| v.abs() < 1e-11), "{:?}", &p[..3]);

        // same particles squeezed into a smaller box
        let d9 = DomainSpec::periodic([0.0, 0.0], [0.9, 0.9]).unwrap();
        let mut c = s.clone();
        for x in c.positions.iter_mut() {
            *x = [x[0] * 0.9, x[1] * 0.9];
        }
        let nl = NeighborList::build(&c, &d9, 0.124).unwrap();
        let (p, _) = solver.penalty_pressure(&nl, &c.volumes);
        assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn free_surface_clamps_isolated_particle() {
        let dx = 0.01;
        let h = 2.6 * dx;
        let d = DomainSpec::walled([0.0, 0.0], [1.0, 1.0], 5.2 * dx).unwrap();
        let lattice = lattice_init(&d, dx, false).unwrap();
        let mut cfg = SolverConfig::new(1000.0, 1e-6, 0.05, 1e-4, 1.0);
        cfg.free_surface = true;
        let solver = Solver::new(cfg, ops(h), d, &lattice).unwrap();
        let lone = ParticleSystem::at_rest(vec![[0.5, 0.5]], vec![dx * dx], vec![ParticleKind::Fluid]).unwrap();
        let nl = NeighborList::build(&lone, &d, h).unwrap();
        let raw = 1000.0 / 0.0025 * (dx * dx / (h * h) / solver.c0h() - 1.0);
        assert!(raw < 0.0);
        let (p, clamped) = solver.penalty_pressure(&nl, &lone.volumes);
        assert_eq!((p[0], clamped), (0.0, 1));
    }

    #[test]
    fn compressed_pair_moves_apart() {
        let d = DomainSpec::walled([0.0, 0.0], [1.0, 1.0], 0.5).unwrap();
        let s = ParticleSystem::at_rest(vec![[0.5, 0.5], [0.55, 0.5]], vec![0.01; 2], vec![ParticleKind::Fluid; 2]).unwrap();
        let solver = Solver::new(SolverConfig::new(1.0, 0.1, 0.1, 1e-2, 0.1), ops(0.2), d, &s).unwrap();
        let nl = NeighborList::build(&s, &d, 0.2).unwrap();
        let x = solver.position_correct(&s.positions, &[5.0, 5.0], &nl, &s.volumes, &s.kinds);
        assert!(x[0][0] < 0.5 && x[1][0] > 0.55);
        assert_abs_diff_eq!(x[0][0] - 0.5, 0.55 - x[1][0], epsilon = 1e-15);
        let x = solver.position_correct(&s.positions, &[0.0, 0.0], &nl, &s.volumes, &s.kinds);
        assert_eq!(x, s.positions);
    }

    #[test]
    fn constant_pressure_is_reproduced_and_leaves_velocity() {
        let (solver, st) = periodic_tg(20);
        let s = &st.system;
        let p = vec![2.5; s.len()];
        let (pn, u, fb) = solver.pressure_velocity_update(&st.neighbors, &s.positions, &s.volumes, &s.kinds, &p, &s.velocities, 0.1);
        assert_eq!(fb, 0);
        for i in 0..s.len() {
            assert_abs_diff_eq!(pn[i], 2.5, epsilon = 1e-14);
            assert_abs_diff_eq!(u[i][0], s.velocities[i][0], epsilon = 1e-12);
            assert_abs_diff_eq!(u[i][1], s.velocities[i][1], epsilon = 1e-12);
        }
    }

    #[test]
    fn pressure_velocity_update_matches_straight_line_evaluation() {
        let (solver, st) = periodic_tg(25);
        let s = &st.system;
        let d = solver.domain();
        let h = solver.operators().h();
        let (tau, c_grad) = (solver.config().tau, solver.operators().c_grad());
        let p_star: Vec<f64> = s.positions.iter().map(|x| (2.0 * PI * x[0]).cos() + 0.3 * (4.0 * PI * x[1]).sin()).collect();
        let (p, u, _) =
            solver.pressure_velocity_update(&st.neighbors, &s.positions, &s.volumes, &s.kinds, &p_star, &s.velocities, tau);
        let w = |r: f64| (1.0 - r / h).powi(2) / (h * h);
        let mut p_ref = vec![0.0; s.len()];
        for i in 0..s.len() {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..s.len() {
                let r = vector::norm(&min_image_displacement(&s.positions[i], &s.positions[j], d));
                if r < h {
                    num += s.volumes[j] * p_star[j] * w(r);
                    den += s.volumes[j] * w(r);
                }
            }
            p_ref[i] = num / den;
            assert!((p[i] - p_ref[i]).abs() <= 1e-14 * (1.0 + p_ref[i].abs()));
        }
        for i in 0..s.len() {
            let mut g = [0.0; 2];
            for j in 0..s.len() {
                let dij = min_image_displacement(&s.positions[i], &s.positions[j], d);
                let r = vector::norm(&dij);
                if j != i && r < h {
                    for k in 0..2 {
                        g[k] += s.volumes[j] * (p_ref[j] - p_ref[i]) * dij[k] / r * w(r);
                    }
                }
            }
            for k in 0..2 {
                let expect = s.velocities[i][k] - tau * c_grad / h * g[k];
                assert!((u[i][k] - expect).abs() <= 1e-14 * (1.0 + expect.abs()), "{i} {k}");
            }
        }
    }

    #[test]
    fn recalculation_off_keeps_tentative_pressure() {
        let (mut solver, st) = periodic_tg(20);
        solver.config.pressure_recalc = false;
        let s = &st.system;
        let p: Vec<f64> = (0..s.len()).map(|i| i as f64).collect();
        let (pn, _, _) = solver.pressure_velocity_update(&st.neighbors, &s.positions, &s.volumes, &s.kinds, &p, &s.velocities, 0.1);
        assert_eq!(pn, p);
    }

    #[test]
    fn advance_is_the_composition_of_its_parts() {
        let (solver, st) = periodic_tg(20);
        let (u_star, x_star) = solver.predictor(&st);
        let nl_star = solver.neighbors(&x_star).unwrap();
        let (p_star, _) = solver.penalty_pressure(&nl_star, &st.system.volumes);
        let x = solver.position_correct(&x_star, &p_star, &nl_star, &st.system.volumes, &st.system.kinds);
        let nl = solver.neighbors(&x).unwrap();
        let (p, u, _) = solver.pressure_velocity_update(&nl, &x, &st.system.volumes, &st.system.kinds, &p_star, &u_star, solver.time_at(1));
        let next = solver.advance(&st).unwrap();
        assert_eq!(next.k, 1);
        assert_eq!(next.system.positions, x);
        assert_eq!(next.system.velocities, u);
        assert_eq!(next.system.pressures, p);
        assert_eq!(next.tentative_pressures, p_star);
    }

    #[test]
    fn walled_fixed_point_holds() {
        // Smoothed wall pressures reach three radii into the strip, so it must be that deep.
        let d = DomainSpec::walled([0.0, 0.0], [0.5, 0.5], 0.2).unwrap();
        let s = lattice_init(&d, 0.02, true).unwrap();
        let solver = Solver::new(SolverConfig::new(1.0, 0.1, 0.1, 1e-3, 1.0), ops(0.062), d, &s).unwrap();
        let mut st = solver.initial_state(s.clone()).unwrap();
        for _ in 0..50 {
            st = solver.advance(&st).unwrap();
        }
        let drift = s.positions.iter().zip(&st.system.positions).map(|(a, b)| vector::norm(&vector::sub(a, b))).fold(0.0, f64::max);
        assert!(drift <= 1e-12, "{drift}");
        assert!(st.system.velocities.iter().all(|u| vector::norm(u) <= 1e-12));
    }

    #[test]
    fn rejects_radius_beyond_half_strip() {
        let d = DomainSpec::walled([0.0, 0.0], [1.0, 1.0], 0.1).unwrap();
        let s = lattice_init(&d, 0.05, true).unwrap();
        let r = Solver::new(SolverConfig::new(1.0, 0.1, 0.1, 1e-3, 1.0), ops(0.06), d, &s);
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn collision_without_close_pairs_is_identity() {
        let d = DomainSpec::walled([0.0, 0.0], [1.0, 1.0], 0.5).unwrap();
        let mut pos = vec![[0.2, 0.2], [0.3, 0.2]];
        let mut vel = vec![[1.0, 0.0], [-1.0, 0.0]];
        let s = ParticleSystem::at_rest(pos.clone(), vec![0.01; 2], vec![ParticleKind::Fluid; 2]).unwrap();
        let nl = NeighborList::build(&s, &d, 0.2).unwrap();
        let params = CollisionParams::with_defaults(0.1);
        let n = resolve_collisions(&mut pos, &mut vel, &s.volumes, &s.kinds, &nl, &d, 1000.0, &params);
        assert_eq!(n, 0);
        assert_eq!(vel, vec![[1.0, 0.0], [-1.0, 0.0]]);
    }

    #[test]
    fn head_on_collision_closed_form() {
        let d = DomainSpec::walled([0.0, 0.0], [1.0, 1.0], 0.5).unwrap();
        let mut pos = vec![[0.2, 0.2], [0.25, 0.2]];
        let mut vel = vec![[1.0, 0.3], [-2.0, 0.1]];
        let vols = vec![0.01, 0.01];
        let s = ParticleSystem::at_rest(pos.clone(), vols.clone(), vec![ParticleKind::Fluid; 2]).unwrap();
        let nl = NeighborList::build(&s, &d, 0.2).unwrap();
        let params = CollisionParams::with_defaults(0.1);
        let n = resolve_collisions(&mut pos, &mut vel, &vols, &s.kinds, &nl, &d, 1000.0, &params);
        assert_eq!(n, 1);
        // relative normal velocity -3 becomes +0.6; tangential parts untouched
        assert_abs_diff_eq!(vel[1][0] - vel[0][0], 0.6, epsilon = 1e-14);
        assert_abs_diff_eq!(vel[0][0] + vel[1][0], -1.0, epsilon = 1e-14);
        assert_eq!((vel[0][1], vel[1][1]), (0.3, 0.1));
        assert_abs_diff_eq!(pos[1][0] - pos[0][0], 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(pos[0][0] + pos[1][0], 0.45, epsilon = 1e-15);
    }

    #[test]
    fn collision_conserves_momentum_with_unequal_volumes() {
        let d = DomainSpec::walled([0.0, 0.0], [1.0, 1.0], 0.5).unwrap();
        let mut pos = vec![[0.2, 0.2], [0.23, 0.21], [0.21, 0.24], [0.6, 0.6]];
        let mut vel = vec![[1.0, 0.5], [-2.0, 0.1], [0.3, -1.0], [0.0, 0.0]];
        let vols = vec![0.01, 0.02, 0.005, 0.01];
        let s = ParticleSystem::at_rest(pos.clone(), vols.clone(), vec![ParticleKind::Fluid; 4]).unwrap();
        let nl = NeighborList::build(&s, &d, 0.2).unwrap();
        let momentum = |v: &Vec<[f64; 2]>| {
            let mut m = [0.0; 2];
            for (u, w) in v.iter().zip(&vols) {
                m[0] += 1000.0 * w * u[0];
                m[1] += 1000.0 * w * u[1];
            }
            m
        };
        let before = momentum(&vel);
        let n = resolve_collisions(&mut pos, &mut vel, &vols, &s.kinds, &nl, &d, 1000.0, &CollisionParams::with_defaults(0.1));
        assert!(n >= 2);
        let after = momentum(&vel);
        for k in 0..2 {
            assert!((after[k] - before[k]).abs() <= 1e-12 * before[k].abs().max(1.0));
        }
    }

    #[test]
    fn instability_is_reported_with_step() {
        let (mut solver, st) = periodic_tg(10);
        solver.config.tau = 1e3;
        solver.config.eps = 1e-3;
        let mut st = st;
        let mut err = None;
        for _ in 0..200 {
            match solver.advance(&st) {
                Ok(next) => st = next,
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        assert!(matches!(err, Some(Error::Instability { .. })), "{err:?}");
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::<f64, 2>::new(1.0, 0.1, 0.1, 1e-3, 1.0);
        assert!(c.validate().is_ok());
        c.eps = 0.0;
        assert!(c.validate().is_err());
        c.eps = 0.1;
        c.collision = Some(CollisionParams::with_defaults(0.01));
        assert!(c.validate().is_err());
        c.free_surface = true;
        assert!(c.validate().is_ok());
        assert_eq!(SolverConfig::<f64, 2>::new(1.0, 0.1, 0.1, 0.1 / 32.0, 0.1).steps(), 32);
    }
}
