//! Box domains with per-axis periodicity and an expansion strip for
//! Dirichlet walls on non-periodic axes.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vector::Vector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec<T, const D: usize> {
    pub lo: Vector<T, D>,
    pub hi: Vector<T, D>,
    pub periodic: [bool; D],
    /// Width of the expansion strip around non-periodic faces.
    pub expansion: T,
}

impl<T: Real, const D: usize> DomainSpec<T, D> {
    pub fn new(lo: Vector<T, D>, hi: Vector<T, D>, periodic: [bool; D], expansion: T) -> Result<Self> {
        let domain = Self { lo, hi, periodic, expansion };
        domain.validate()?;
        Ok(domain)
    }

    /// Fully periodic box `[lo, hi)`.
    pub fn periodic(lo: Vector<T, D>, hi: Vector<T, D>) -> Result<Self> {
        Self::new(lo, hi, [true; D], T::zero())
    }

    /// Box with walls on every axis, expanded by `expansion` on each side.
    pub fn walled(lo: Vector<T, D>, hi: Vector<T, D>, expansion: T) -> Result<Self> {
        Self::new(lo, hi, [false; D], expansion)
    }

    pub fn validate(&self) -> Result<()> {
        if D != 2 && D != 3 {
            return Err(Error::InvalidConfig(format!("dimension {D} unsupported (2 or 3)")));
        }
        for k in 0..D {
            if !(self.lo[k] < self.hi[k]) {
                return Err(Error::InvalidConfig(format!(
                    "box_lo[{k}] = {} must be below box_hi[{k}] = {}",
                    self.lo[k], self.hi[k]
                )));
            }
        }
        let any_wall = self.periodic.iter().any(|p| !p);
        if any_wall && !(self.expansion > T::zero()) {
            return Err(Error::InvalidConfig("expansion width must be positive when an axis is non-periodic".into()));
        }
        if self.expansion < T::zero() || !self.expansion.is_finite() {
            return Err(Error::InvalidConfig("expansion width must be finite and non-negative".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn edge(&self, axis: usize) -> T {
        self.hi[axis] - self.lo[axis]
    }

    pub fn min_edge(&self) -> T {
        (0..D).map(|k| self.edge(k)).fold(T::infinity(), T::min)
    }

    /// Measure of the primary box.
    pub fn measure(&self) -> T {
        (0..D).map(|k| self.edge(k)).fold(T::one(), |a, b| a * b)
    }

    /// Lower corner of the expanded box (walls pushed out by the expansion width).
    pub fn expanded_lo(&self) -> Vector<T, D> {
        std::array::from_fn(|k| if self.periodic[k] { self.lo[k] } else { self.lo[k] - self.expansion })
    }

    pub fn expanded_hi(&self) -> Vector<T, D> {
        std::array::from_fn(|k| if self.periodic[k] { self.hi[k] } else { self.hi[k] + self.expansion })
    }

    /// Measure of the expanded box; equals [`measure`](Self::measure) for fully periodic domains.
    pub fn expanded_measure(&self) -> T {
        let (lo, hi) = (self.expanded_lo(), self.expanded_hi());
        (0..D).map(|k| hi[k] - lo[k]).fold(T::one(), |a, b| a * b)
    }

    pub fn is_fully_periodic(&self) -> bool {
        self.periodic.iter().all(|&p| p)
    }

    /// Whether `x` lies in the open primary box on every non-periodic axis.
    pub fn contains_interior(&self, x: &Vector<T, D>) -> bool {
        (0..D).all(|k| self.periodic[k] || (x[k] > self.lo[k] && x[k] < self.hi[k]))
    }
}

/// Maps periodic components into `[lo, hi)`; other components are returned unchanged.
pub fn wrap_position<T: Real, const D: usize>(x: &Vector<T, D>, domain: &DomainSpec<T, D>) -> Vector<T, D> {
    let mut out = *x;
    for k in 0..D {
        if !domain.periodic[k] {
            continue;
        }
        let (lo, hi, len) = (domain.lo[k], domain.hi[k], domain.edge(k));
        let mut v = out[k];
        if v < lo || v >= hi {
            v = v - len * ((v - lo) / len).floor();
            // floor() can land exactly on hi after rounding
            if v >= hi {
                v = v - len;
            }
            if v < lo {
                v = lo;
            }
        }
        out[k] = v;
    }
    out
}

/// `y - x`, shifted by whole box edges on periodic axes to the shortest image.
#[inline]
pub fn min_image_displacement<T: Real, const D: usize>(
    x: &Vector<T, D>,
    y: &Vector<T, D>,
    domain: &DomainSpec<T, D>,
) -> Vector<T, D> {
    std::array::from_fn(|k| {
        let d = y[k] - x[k];
        if domain.periodic[k] {
            let len = domain.edge(k);
            d - len * (d / len).round()
        } else {
            d
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit() -> DomainSpec<f64, 2> {
        DomainSpec::periodic([0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn min_image_examples() {
        let d = min_image_displacement(&[0.95, 0.5], &[0.05, 0.5], &unit());
        assert_abs_diff_eq!(d[0], 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-14);

        let open = DomainSpec::walled([0.0, 0.0], [1.0, 1.0], 0.1).unwrap();
        assert_eq!(min_image_displacement(&[0.0, 0.0], &[0.3, 0.4], &open), [0.3, 0.4]);
        assert_eq!(min_image_displacement(&[0.5, 0.5], &[0.5, 0.5], &unit()), [0.0, 0.0]);
    }

    #[test]
    fn wrap_examples() {
        let w = wrap_position(&[1.02, 0.5], &unit());
        assert_abs_diff_eq!(w[0], 0.02, epsilon = 1e-14);
        assert_eq!(w[1], 0.5);
        let w = wrap_position(&[-0.01, 0.99], &unit());
        assert_abs_diff_eq!(w[0], 0.99, epsilon = 1e-14);
        assert_eq!(wrap_position(&[0.4, 0.6], &unit()), [0.4, 0.6]);
        // upper face maps onto the lower one
        assert_eq!(wrap_position(&[1.0, 0.5], &unit()), [0.0, 0.5]);
    }

    #[test]
    fn wrap_leaves_wall_axes_alone() {
        let d = DomainSpec::new([0.0, 0.0], [1.0, 1.0], [true, false], 0.2).unwrap();
        assert_eq!(wrap_position(&[1.5, 1.1], &d)[1], 1.1);
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(DomainSpec::<f64, 2>::periodic([0.0, 1.0], [1.0, 1.0]).is_err());
        assert!(DomainSpec::<f64, 2>::walled([0.0, 0.0], [1.0, 1.0], 0.0).is_err());
        assert!(DomainSpec::<f64, 2>::periodic([0.0, 0.0], [1.0, 1.0]).is_ok());
    }

    #[test]
    fn expanded_measure() {
        let d = DomainSpec::walled([0.0, 0.0], [1.0, 1.0], 0.1).unwrap();
        assert_abs_diff_eq!(d.expanded_measure(), 1.44, epsilon = 1e-14);
        assert_abs_diff_eq!(unit().expanded_measure(), 1.0, epsilon = 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn wrap_is_idempotent(x in -3.0f64..4.0, y in -3.0f64..4.0) {
                let d = unit();
                let w = wrap_position(&[x, y], &d);
                prop_assert!(w[0] >= 0.0 && w[0] < 1.0 && w[1] >= 0.0 && w[1] < 1.0);
                prop_assert_eq!(wrap_position(&w, &d), w);
            }

            #[test]
            fn min_image_is_antisymmetric(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, e in 0.0f64..1.0) {
                let d = unit();
                let p = min_image_displacement(&[a, b], &[c, e], &d);
                let q = min_image_displacement(&[c, e], &[a, b], &d);
                prop_assert!((p[0] + q[0]).abs() < 1e-15 && (p[1] + q[1]).abs() < 1e-15);
                prop_assert!(p[0].abs() <= 0.5 + 1e-15 && p[1].abs() <= 0.5 + 1e-15);
            }
        }
    }
}
