//! Benchmark studies: Taylor-Green vortex, truncation error, lid-driven cavity and dam break.

pub mod cavity;
pub mod dambreak;
pub mod reference;
pub mod taylor_green;
pub mod truncation;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::vector::{self, Vector};

/// How per-step space norms are combined over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceTimeNorm {
    /// `(sum_k tau ||phi^k||)^{1/2}`, with the inner norm not squared.
    Unsquared,
    /// The conventional `(sum_k tau ||phi^k||^2)^{1/2}`; reproduces the published error levels.
    #[default]
    Squared,
}

/// `(sum_j V_j |phi_j|^2)^{1/2}`.
pub fn l2_space_norm<T: Real>(values: &[T], volumes: &[T]) -> T {
    values.iter().zip(volumes).fold(T::zero(), |a, (&v, &w)| a + w * v * v).sqrt()
}

pub fn l2_space_norm_vec<T: Real, const D: usize>(values: &[Vector<T, D>], volumes: &[T]) -> T {
    values.iter().zip(volumes).fold(T::zero(), |a, (v, &w)| a + w * vector::norm_sq(v)).sqrt()
}

/// Running space-time norm over the steps `k = 1..K`.
#[derive(Debug, Clone, Copy)]
pub struct SpaceTimeAccumulator<T> {
    mode: SpaceTimeNorm,
    sum: T,
}

impl<T: Real> SpaceTimeAccumulator<T> {
    pub fn new(mode: SpaceTimeNorm) -> Self {
        Self { mode, sum: T::zero() }
    }

    pub fn push(&mut self, tau: T, space_norm: T) {
        let inner = match self.mode {
            SpaceTimeNorm::Unsquared => space_norm,
            SpaceTimeNorm::Squared => space_norm * space_norm,
        };
        self.sum = self.sum + tau * inner;
    }

    pub fn value(&self) -> T {
        self.sum.sqrt()
    }
}

/// Space-time norm of a history of space norms taken with a uniform step.
pub fn l2_spacetime_norm<T: Real>(space_norms: &[T], tau: T, mode: SpaceTimeNorm) -> T {
    let mut acc = SpaceTimeAccumulator::new(mode);
    for &n in space_norms {
        acc.push(tau, n);
    }
    acc.value()
}

/// `num / den`, or `None` when the reference norm vanishes.
pub fn relative<T: Real>(num: T, den: T) -> Option<T> {
    (den > T::zero()).then(|| num / den)
}

/// `p_i - sum_j V_j p_j`.
pub fn mean_shift_pressure<T: Real>(pressures: &[T], volumes: &[T]) -> Vec<T> {
    let mean = pressures.iter().zip(volumes).fold(T::zero(), |a, (&p, &v)| a + v * p);
    pressures.iter().map(|&p| p - mean).collect()
}

/// Observed order `log(e1/e2) / log(s1/s2)` between two resolutions.
pub fn convergence_rate<T: Real>(e1: T, e2: T, s1: T, s2: T) -> T {
    (e1 / e2).ln() / (s1 / s2).ln()
}
