//! Generalized particle operators evaluated over a neighbor list.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::neighbor::NeighborList;
use crate::scalar::Real;
use crate::vector::{self, Vector};
use crate::weights::{ReferenceWeight, WeightTriple};

pub mod classic;

/// A weight triple bound to an influence radius, with its normalization constants
/// `C_interp = 1/C_0(w_interp)`, `C_grad = d/C_1(w_grad)`, `C_lap = 2d/C_2(w_lap)`.
#[derive(Debug)]
pub struct OperatorSet<T> {
    triple: WeightTriple<T>,
    h: T,
    dim: usize,
    c_interp: T,
    c_grad: T,
    c_lap: T,
    inv_h: T,
    inv_hd: T,
    degenerate: AtomicUsize,
}

impl<T: Real> Clone for OperatorSet<T> {
    fn clone(&self) -> Self {
        Self {
            triple: self.triple.clone(),
            h: self.h,
            dim: self.dim,
            c_interp: self.c_interp,
            c_grad: self.c_grad,
            c_lap: self.c_lap,
            inv_h: self.inv_h,
            inv_hd: self.inv_hd,
            degenerate: AtomicUsize::new(self.degenerate.load(Ordering::Relaxed)),
        }
    }
}

impl<T: Real> OperatorSet<T> {
    pub fn new(triple: WeightTriple<T>, h: T) -> Result<Self> {
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::InvalidConfig(format!("influence radius must be positive, got {h}")));
        }
        let dim = triple.interp.dim();
        if triple.grad.dim() != dim || triple.lap.dim() != dim {
            return Err(Error::InvalidConfig("weight triple members disagree on dimension".into()));
        }
        let d = T::from_usize_lossy(dim);
        let c_interp = T::one() / triple.interp.moment(0)?;
        let c_grad = d / triple.grad.moment(1)?;
        let c_lap = T::lit(2.0) * d / triple.lap.moment(2)?;
        for (name, c) in [("interpolant", c_interp), ("gradient", c_grad), ("laplacian", c_lap)] {
            if !(c > T::zero()) || !c.is_finite() {
                return Err(Error::Domain(format!("{name} constant is {c}; weight moment must be positive")));
            }
        }
        Ok(Self {
            triple,
            h,
            dim,
            c_interp,
            c_grad,
            c_lap,
            inv_h: T::one() / h,
            inv_hd: T::one() / h.powi(dim as i32),
            degenerate: AtomicUsize::new(0),
        })
    }

    pub fn triple(&self) -> &WeightTriple<T> {
        &self.triple
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c_interp(&self) -> T {
        self.c_interp
    }

    pub fn c_grad(&self) -> T {
        self.c_grad
    }

    pub fn c_lap(&self) -> T {
        self.c_lap
    }

    /// Gradient/Laplacian evaluations that found no neighbors since construction.
    pub fn degenerate_stencils(&self) -> usize {
        self.degenerate.load(Ordering::Relaxed)
    }

    #[inline]
    fn scaled(&self, w: &ReferenceWeight<T>, r: T) -> T {
        w.eval(r * self.inv_h) * self.inv_hd
    }

    fn check_dim<const D: usize>(&self) {
        debug_assert_eq!(D, self.dim, "operator dimension mismatch");
    }

    fn note_degenerate<const D: usize>(&self, nl: &NeighborList<T, D>, i: usize) {
        if nl.count(i) == 0 {
            self.degenerate.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// `C_interp * sum_j V_j phi_j w_interp_h(|x_j - x_i|)`, including `j = i`.
    pub fn interpolate<const D: usize>(&self, i: usize, nl: &NeighborList<T, D>, volumes: &[T], field: &[T]) -> T {
        self.check_dim::<D>();
        let w = &self.triple.interp;
        let mut acc = volumes[i] * field[i] * self.scaled(w, T::zero());
        for (j, _, r) in nl.neighbors(i) {
            acc = acc + volumes[j] * field[j] * self.scaled(w, r);
        }
        self.c_interp * acc
    }

    /// Raw kernel sum `sum_j V_j w_interp_h(|x_j - x_i|)` including the self term.
    pub fn kernel_sum<const D: usize>(&self, i: usize, nl: &NeighborList<T, D>, volumes: &[T]) -> T {
        let w = &self.triple.interp;
        let mut acc = volumes[i] * self.scaled(w, T::zero());
        for (j, _, r) in nl.neighbors(i) {
            acc = acc + volumes[j] * self.scaled(w, r);
        }
        acc
    }

    fn gradient_with<const D: usize>(
        &self,
        i: usize,
        nl: &NeighborList<T, D>,
        volumes: &[T],
        field: &[T],
        sign: T,
    ) -> Vector<T, D> {
        self.check_dim::<D>();
        self.note_degenerate(nl, i);
        let w = &self.triple.grad;
        let mut acc = vector::zero::<T, D>();
        let fi = field[i];
        for (j, d, r) in nl.neighbors(i) {
            let coef = volumes[j] * (field[j] + sign * fi) * self.scaled(w, r) / r;
            acc = vector::axpy(&acc, coef, d);
        }
        vector::scale(&acc, self.c_grad * self.inv_h)
    }

    /// `(C_grad / h) sum_{j != i} V_j (phi_j - phi_i) e_ij w_grad_h(r_ij)`.
    pub fn gradient<const D: usize>(&self, i: usize, nl: &NeighborList<T, D>, volumes: &[T], field: &[T]) -> Vector<T, D> {
        self.gradient_with(i, nl, volumes, field, -T::one())
    }

    /// As [`gradient`](Self::gradient) with `phi_j + phi_i` in place of the difference.
    pub fn gradient_plus<const D: usize>(
        &self,
        i: usize,
        nl: &NeighborList<T, D>,
        volumes: &[T],
        field: &[T],
    ) -> Vector<T, D> {
        self.gradient_with(i, nl, volumes, field, T::one())
    }

    /// `(C_lap / h^2) sum_{j != i} V_j (phi_j - phi_i) w_lap_h(r_ij)`.
    pub fn laplacian<const D: usize>(&self, i: usize, nl: &NeighborList<T, D>, volumes: &[T], field: &[T]) -> T {
        self.check_dim::<D>();
        self.note_degenerate(nl, i);
        let w = &self.triple.lap;
        let fi = field[i];
        let mut acc = T::zero();
        for (j, _, r) in nl.neighbors(i) {
            acc = acc + volumes[j] * (field[j] - fi) * self.scaled(w, r);
        }
        acc * self.c_lap * self.inv_h * self.inv_h
    }

    /// Componentwise Laplacian of a vector field in a single neighbor pass.
    pub fn laplacian_vector<const D: usize>(
        &self,
        i: usize,
        nl: &NeighborList<T, D>,
        volumes: &[T],
        field: &[Vector<T, D>],
    ) -> Vector<T, D> {
        self.check_dim::<D>();
        self.note_degenerate(nl, i);
        let w = &self.triple.lap;
        let fi = field[i];
        let mut acc = vector::zero::<T, D>();
        for (j, _, r) in nl.neighbors(i) {
            let c = volumes[j] * self.scaled(w, r);
            for k in 0..D {
                acc[k] = acc[k] + c * (field[j][k] - fi[k]);
            }
        }
        vector::scale(&acc, self.c_lap * self.inv_h * self.inv_h)
    }

    /// Componentwise gradient of a vector field; row `k` is the gradient of component `k`.
    pub fn gradient_vector<const D: usize>(
        &self,
        i: usize,
        nl: &NeighborList<T, D>,
        volumes: &[T],
        field: &[Vector<T, D>],
    ) -> [Vector<T, D>; D] {
        self.check_dim::<D>();
        self.note_degenerate(nl, i);
        let w = &self.triple.grad;
        let fi = field[i];
        let mut acc = [vector::zero::<T, D>(); D];
        for (j, d, r) in nl.neighbors(i) {
            let c = volumes[j] * self.scaled(w, r) / r;
            for k in 0..D {
                acc[k] = vector::axpy(&acc[k], c * (field[j][k] - fi[k]), d);
            }
        }
        let s = self.c_grad * self.inv_h;
        acc.map(|row| vector::scale(&row, s))
    }

    /// Shepard-normalized average `sum_j V_j phi_j w / sum_j V_j w`, including `j = i`.
    pub fn shepard_interpolate<const D: usize>(
        &self,
        i: usize,
        nl: &NeighborList<T, D>,
        volumes: &[T],
        field: &[T],
    ) -> Result<T> {
        self.check_dim::<D>();
        let w = &self.triple.interp;
        let w0 = volumes[i] * self.scaled(w, T::zero());
        let mut num = w0 * field[i];
        let mut den = w0;
        for (j, _, r) in nl.neighbors(i) {
            let c = volumes[j] * self.scaled(w, r);
            num = num + c * field[j];
            den = den + c;
        }
        if den > T::zero() {
            Ok(num / den)
        } else {
            Err(Error::DegenerateStencil(i))
        }
    }

    pub fn kernel_sum_all<const D: usize>(&self, nl: &NeighborList<T, D>, volumes: &[T]) -> Vec<T> {
        (0..nl.len()).into_par_iter().map(|i| self.kernel_sum(i, nl, volumes)).collect()
    }

    pub fn laplacian_vector_all<const D: usize>(
        &self,
        nl: &NeighborList<T, D>,
        volumes: &[T],
        field: &[Vector<T, D>],
    ) -> Vec<Vector<T, D>> {
        (0..nl.len()).into_par_iter().map(|i| self.laplacian_vector(i, nl, volumes, field)).collect()
    }

    pub fn gradient_all<const D: usize>(&self, nl: &NeighborList<T, D>, volumes: &[T], field: &[T]) -> Vec<Vector<T, D>> {
        (0..nl.len()).into_par_iter().map(|i| self.gradient(i, nl, volumes, field)).collect()
    }

    pub fn gradient_plus_all<const D: usize>(
        &self,
        nl: &NeighborList<T, D>,
        volumes: &[T],
        field: &[T],
    ) -> Vec<Vector<T, D>> {
        (0..nl.len()).into_par_iter().map(|i| self.gradient_plus(i, nl, volumes, field)).collect()
    }

    pub fn shepard_all<const D: usize>(&self, nl: &NeighborList<T, D>, volumes: &[T], field: &[T]) -> Vec<Result<T>> {
        (0..nl.len()).into_par_iter().map(|i| self.shepard_interpolate(i, nl, volumes, field)).collect()
    }
}

/// Lattice sum approximating `C_0(w)`:
/// `(V/N) sum_{z in Z^d} w_h(s |z|)` with effective spacing `s = (V/N)^{1/d}`.
pub fn c0h<T: Real>(w: &ReferenceWeight<T>, h: T, n: usize, vol_total: T, dim: usize) -> Result<T> {
    if !(h > T::zero()) {
        return Err(Error::InvalidConfig(format!("influence radius must be positive, got {h}")));
    }
    if n == 0 || !(vol_total > T::zero()) {
        return Err(Error::InvalidInput("lattice sum needs particles and a positive volume".into()));
    }
    let cell = vol_total / T::from_usize_lossy(n);
    let s = cell.powf(T::one() / T::from_usize_lossy(dim));
    let reach = (h / s).ceil().to_i64().unwrap_or(0);
    let inv_hd = T::one() / h.powi(dim as i32);
    let mut acc = T::zero();
    let mut z = vec![-reach; dim];
    loop {
        let norm_sq = z.iter().fold(T::zero(), |a, &c| {
            let c = T::lit(c as f64);
            a + c * c
        });
        let r = s * norm_sq.sqrt();
        if r < h {
            acc = acc + w.eval(r / h) * inv_hd;
        }
        let mut k = 0;
        loop {
            if k == dim {
                return Ok(cell * acc);
            }
            z[k] += 1;
            if z[k] <= reach {
                break;
            }
            z[k] = -reach;
            k += 1;
        }
    }
}
