//! Direct textbook SPH and MPS formulas, written independently of the neighbor list.
//!
//! These serve as oracles for the generalized operators: with the matching weight
//! choices the two families agree to rounding.

use crate::scalar::Real;
use crate::vector::{self, Vector};
use crate::weights::ReferenceWeight;

fn pairs<T: Real, const D: usize>(positions: &[Vector<T, D>], i: usize, h: T) -> impl Iterator<Item = (usize, Vector<T, D>, T)> + '_ {
    let xi = positions[i];
    positions.iter().enumerate().filter_map(move |(j, xj)| {
        if j == i {
            return None;
        }
        let d = vector::sub(xj, &xi);
        let r = vector::norm(&d);
        (r < h && r > T::zero()).then_some((j, d, r))
    })
}

/// `dW_h/dr` for the kernel `W_h(r) = h^{-d} w(r/h)`.
fn kernel_slope<T: Real>(w: &ReferenceWeight<T>, h: T, r: T) -> T {
    w.derivative(r / h) / h.powi(w.dim() as i32 + 1)
}

/// `sum_j (m_j/rho_j) phi_j W_h(|x_j - x_i|)` including the self term.
pub fn sph_interpolate<T: Real, const D: usize>(
    positions: &[Vector<T, D>],
    volumes: &[T],
    field: &[T],
    w: &ReferenceWeight<T>,
    h: T,
    i: usize,
) -> T {
    let mut acc = volumes[i] * field[i] * w.scaled_eval(h, T::zero());
    for (j, _, r) in pairs(positions, i, h) {
        acc = acc + volumes[j] * field[j] * w.scaled_eval(h, r);
    }
    acc
}

/// `sum_{j != i} (m_j/rho_j) (phi_j - phi_i) grad_i W_h(|x_i - x_j|)`.
pub fn sph_gradient<T: Real, const D: usize>(
    positions: &[Vector<T, D>],
    volumes: &[T],
    field: &[T],
    w: &ReferenceWeight<T>,
    h: T,
    i: usize,
) -> Vector<T, D> {
    let mut acc = vector::zero::<T, D>();
    for (j, d, r) in pairs(positions, i, h) {
        // grad_i W(|x_i - x_j|) = (x_i - x_j)/r W'(r)
        let grad_w = vector::scale(&d, -kernel_slope(w, h, r) / r);
        acc = vector::axpy(&acc, volumes[j] * (field[j] - field[i]), &grad_w);
    }
    acc
}

/// Morris form `2 sum_{j != i} (m_j/rho_j) (phi_i - phi_j) (x_ij . grad_i W_ij) / |x_ij|^2`.
pub fn sph_laplacian<T: Real, const D: usize>(
    positions: &[Vector<T, D>],
    volumes: &[T],
    field: &[T],
    w: &ReferenceWeight<T>,
    h: T,
    i: usize,
) -> T {
    let mut acc = T::zero();
    for (j, d, r) in pairs(positions, i, h) {
        let x_ij = vector::scale(&d, -T::one());
        let grad_w = vector::scale(&x_ij, kernel_slope(w, h, r) / r);
        acc = acc + volumes[j] * (field[i] - field[j]) * vector::dot(&x_ij, &grad_w) / (r * r);
    }
    T::lit(2.0) * acc
}

/// `(d/n0) sum_{j != i} (phi_j - phi_i)/r_ij e_ij w_h(r_ij)`.
pub fn mps_gradient<T: Real, const D: usize>(
    positions: &[Vector<T, D>],
    field: &[T],
    w: &ReferenceWeight<T>,
    h: T,
    n0: T,
    i: usize,
) -> Vector<T, D> {
    let mut acc = vector::zero::<T, D>();
    for (j, d, r) in pairs(positions, i, h) {
        let c = (field[j] - field[i]) / r * w.scaled_eval(h, r) / r;
        acc = vector::axpy(&acc, c, &d);
    }
    vector::scale(&acc, T::from_usize_lossy(D) / n0)
}

/// `(2d/(n0 lambda0)) sum_{j != i} (phi_j - phi_i) w_h(r_ij)`.
pub fn mps_laplacian<T: Real, const D: usize>(
    positions: &[Vector<T, D>],
    field: &[T],
    w: &ReferenceWeight<T>,
    h: T,
    n0: T,
    lambda0: T,
    i: usize,
) -> T {
    let mut acc = T::zero();
    for (j, _, r) in pairs(positions, i, h) {
        acc = acc + (field[j] - field[i]) * w.scaled_eval(h, r);
    }
    T::lit(2.0) * T::from_usize_lossy(D) / (n0 * lambda0) * acc
}
