//! Reference weight functions on the unit support `[0, 1)`, their moments, and the
//! truncation-error objective used to rank them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::scalar::Real;

/// Interior points where the spline kernels change polynomial piece.
const KNOTS: [f64; 3] = [1.0 / 3.0, 0.5, 2.0 / 3.0];

/// Radial profile before any role transform.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseKernel<T> {
    /// `(1 - r)^2`
    Spike,
    /// Cubic B-spline, normalized to unit integral.
    CubicSpline,
    /// Quintic B-spline, normalized to unit integral.
    QuinticSpline,
    /// Quintic Wendland `(1 - r)^4 (1 + 4r)`, normalized to unit integral.
    Wendland,
    /// `1/r - 1` with the value at the origin set to zero.
    Mps,
    /// `sum_k a_k r^k` on `[0, 1)`.
    Polynomial(Vec<T>),
}

impl<T> BaseKernel<T> {
    /// Kernels that are rescaled to unit zeroth moment at construction.
    pub fn is_normalized(&self) -> bool {
        matches!(self, BaseKernel::CubicSpline | BaseKernel::QuinticSpline | BaseKernel::Wendland)
    }

    fn name(&self) -> &'static str {
        match self {
            BaseKernel::Spike => "spike",
            BaseKernel::CubicSpline => "cubic",
            BaseKernel::QuinticSpline => "quintic",
            BaseKernel::Wendland => "wendland",
            BaseKernel::Mps => "mps",
            BaseKernel::Polynomial(_) => "polynomial",
        }
    }
}

/// How a base kernel becomes the weight used by one operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTransform {
    /// `w(r)`
    Identity,
    /// `-w'(r)`
    NegDerivative,
    /// `-w'(r) / r`
    NegDerivativeOverR,
    /// `w(r) / r`
    OverR,
}

/// A reference weight: base kernel composed with a role transform, for a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWeight<T> {
    base: BaseKernel<T>,
    transform: RoleTransform,
    dim: usize,
    /// Multiplier on the raw base profile (the unity-condition constant for splines).
    scale: T,
}

fn cube<T: Real>(x: T) -> T {
    x * x * x
}

fn pow4<T: Real>(x: T) -> T {
    let s = x * x;
    s * s
}

fn pow5<T: Real>(x: T) -> T {
    pow4(x) * x
}

/// Surface measure of the unit sphere in `dim` dimensions.
pub fn sphere_surface<T: Real>(dim: usize) -> Result<T> {
    match dim {
        2 => Ok(T::lit(2.0) * T::PI()),
        3 => Ok(T::lit(4.0) * T::PI()),
        _ => Err(Error::InvalidInput(format!("dimension {dim} unsupported (2 or 3)"))),
    }
}

fn quad_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(16.0))
}

impl<T: Real> BaseKernel<T> {
    /// Raw profile (no normalization) for `0 <= r < 1`.
    fn raw(&self, r: T) -> T {
        let one = T::one();
        let three = T::lit(3.0);
        match self {
            BaseKernel::Spike => (one - r) * (one - r),
            BaseKernel::CubicSpline => {
                if r < T::lit(0.5) {
                    one - T::lit(6.0) * r * r + T::lit(6.0) * r * r * r
                } else {
                    T::lit(2.0) * cube(one - r)
                }
            }
            BaseKernel::QuinticSpline => {
                let q = three * r;
                let mut v = pow5(three - q);
                if r < T::lit(2.0 / 3.0) {
                    v = v - T::lit(6.0) * pow5(T::lit(2.0) - q);
                }
                if r < T::lit(1.0 / 3.0) {
                    v = v + T::lit(15.0) * pow5(one - q);
                }
                v
            }
            BaseKernel::Wendland => pow4(one - r) * (one + T::lit(4.0) * r),
            BaseKernel::Mps => {
                if r > T::zero() {
                    one / r - one
                } else {
                    T::zero()
                }
            }
            BaseKernel::Polynomial(a) => a.iter().rev().fold(T::zero(), |acc, &c| acc * r + c),
        }
    }

    fn raw_d1(&self, r: T) -> T {
        let one = T::one();
        let three = T::lit(3.0);
        match self {
            BaseKernel::Spike => -T::lit(2.0) * (one - r),
            BaseKernel::CubicSpline => {
                if r < T::lit(0.5) {
                    -T::lit(12.0) * r + T::lit(18.0) * r * r
                } else {
                    -T::lit(6.0) * (one - r) * (one - r)
                }
            }
            BaseKernel::QuinticSpline => {
                let q = three * r;
                let mut v = -T::lit(15.0) * pow4(three - q);
                if r < T::lit(2.0 / 3.0) {
                    v = v + T::lit(90.0) * pow4(T::lit(2.0) - q);
                }
                if r < T::lit(1.0 / 3.0) {
                    v = v - T::lit(225.0) * pow4(one - q);
                }
                v
            }
            BaseKernel::Wendland => -T::lit(20.0) * r * cube(one - r),
            BaseKernel::Mps => {
                if r > T::zero() {
                    -one / (r * r)
                } else {
                    T::zero()
                }
            }
            BaseKernel::Polynomial(a) => a
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(T::zero(), |acc, (k, &c)| acc * r + T::from_usize_lossy(k) * c),
        }
    }

    fn raw_d2(&self, r: T) -> T {
        let one = T::one();
        let three = T::lit(3.0);
        match self {
            BaseKernel::Spike => T::lit(2.0),
            BaseKernel::CubicSpline => {
                if r < T::lit(0.5) {
                    -T::lit(12.0) + T::lit(36.0) * r
                } else {
                    T::lit(12.0) * (one - r)
                }
            }
            BaseKernel::QuinticSpline => {
                let q = three * r;
                let mut v = T::lit(180.0) * cube(three - q);
                if r < T::lit(2.0 / 3.0) {
                    v = v - T::lit(1080.0) * cube(T::lit(2.0) - q);
                }
                if r < T::lit(1.0 / 3.0) {
                    v = v + T::lit(2700.0) * cube(one - q);
                }
                v
            }
            BaseKernel::Wendland => T::lit(20.0) * (one - r) * (one - r) * (T::lit(4.0) * r - one),
            BaseKernel::Mps => {
                if r > T::zero() {
                    T::lit(2.0) / cube(r)
                } else {
                    T::zero()
                }
            }
            BaseKernel::Polynomial(a) => a
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(T::zero(), |acc, (k, &c)| acc * r + T::from_usize_lossy(k * (k - 1)) * c),
        }
    }
}

impl<T: Real> ReferenceWeight<T> {
    /// Builds the weight, computing the unity-condition constant for spline kernels.
    pub fn new(base: BaseKernel<T>, transform: RoleTransform, dim: usize) -> Result<Self> {
        sphere_surface::<T>(dim)?;
        if let BaseKernel::Polynomial(a) = &base {
            if a.is_empty() {
                return Err(Error::InvalidInput("polynomial weight needs at least one coefficient".into()));
            }
        }
        let mut w = Self { base, transform, dim, scale: T::one() };
        if w.base.is_normalized() {
            let raw = Self { base: w.base.clone(), transform: RoleTransform::Identity, dim, scale: T::one() };
            w.scale = T::one() / raw.moment(0)?;
        }
        Ok(w)
    }

    pub fn spike(dim: usize) -> Result<Self> {
        Self::new(BaseKernel::Spike, RoleTransform::Identity, dim)
    }

    pub fn polynomial(coefficients: Vec<T>, dim: usize) -> Result<Self> {
        Self::new(BaseKernel::Polynomial(coefficients), RoleTransform::Identity, dim)
    }

    pub fn base(&self) -> &BaseKernel<T> {
        &self.base
    }

    pub fn transform(&self) -> RoleTransform {
        self.transform
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Normalization constant applied to the raw base profile (1 for unnormalized kinds).
    pub fn normalization(&self) -> T {
        self.scale
    }

    /// Same base kernel and normalization under a different role transform.
    pub fn with_transform(&self, transform: RoleTransform) -> Self {
        Self { transform, ..self.clone() }
    }

    /// Normalized base profile `w(r)`, ignoring the transform.
    #[inline]
    pub fn base_value(&self, r: T) -> T {
        if r >= T::one() || r < T::zero() {
            T::zero()
        } else {
            self.scale * self.base.raw(r)
        }
    }

    /// Derivative of the normalized base profile.
    #[inline]
    pub fn base_derivative(&self, r: T) -> T {
        if r >= T::one() || r < T::zero() {
            T::zero()
        } else {
            self.scale * self.base.raw_d1(r)
        }
    }

    /// Value of the composed weight and whether the `1/r` convention at the origin was used.
    #[inline]
    pub fn eval_flagged(&self, r: T) -> (T, bool) {
        if r >= T::one() || r < T::zero() {
            return (T::zero(), false);
        }
        let s = self.scale;
        match self.transform {
            RoleTransform::Identity => (s * self.base.raw(r), false),
            RoleTransform::NegDerivative => (-s * self.base.raw_d1(r), false),
            RoleTransform::NegDerivativeOverR => {
                if r > T::zero() {
                    (-s * self.base.raw_d1(r) / r, false)
                } else {
                    (T::zero(), true)
                }
            }
            RoleTransform::OverR => {
                if r > T::zero() {
                    (s * self.base.raw(r) / r, false)
                } else {
                    (T::zero(), true)
                }
            }
        }
    }

    /// `w(r)`; zero for `r >= 1`, and zero at `r = 0` for the `1/r` transforms.
    #[inline]
    pub fn eval(&self, r: T) -> T {
        self.eval_flagged(r).0
    }

    /// Derivative of the composed weight on `(0, 1)`.
    pub fn derivative(&self, r: T) -> T {
        if r >= T::one() || r < T::zero() {
            return T::zero();
        }
        let s = self.scale;
        let (f, d1) = (self.base.raw(r), self.base.raw_d1(r));
        match self.transform {
            RoleTransform::Identity => s * d1,
            RoleTransform::NegDerivative => -s * self.base.raw_d2(r),
            RoleTransform::NegDerivativeOverR => {
                if r > T::zero() {
                    -s * (self.base.raw_d2(r) * r - d1) / (r * r)
                } else {
                    T::zero()
                }
            }
            RoleTransform::OverR => {
                if r > T::zero() {
                    s * (d1 * r - f) / (r * r)
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `w_h(r) = h^{-d} w(r / h)`.
    #[inline]
    pub fn scaled_eval(&self, h: T, r: T) -> T {
        self.eval(r / h) / h.powi(self.dim as i32)
    }

    /// `C_k(w) = surface(d) * int_0^1 r^{k+d-1} w(r) dr`.
    pub fn moment(&self, k: usize) -> Result<T> {
        let surface = sphere_surface::<T>(self.dim)?;
        let p = (k + self.dim - 1) as i32;
        let breaks: Vec<T> = KNOTS.iter().map(|&x| T::lit(x)).collect();
        let radial = integrate(|r: T| r.powi(p) * self.eval(r), T::zero(), T::one(), &breaks, quad_tol())?;
        Ok(surface * radial)
    }

    /// Checks `w > 0` on `(0, 1)` and `w = 0` beyond, on `samples` evenly spaced points each.
    pub fn check_membership(&self, samples: usize) -> Result<()> {
        let n = samples.max(2);
        for i in 1..n {
            let r = T::from_usize_lossy(i) / T::from_usize_lossy(n);
            let v = self.eval(r);
            if !(v > T::zero()) {
                return Err(Error::Domain(format!("{} weight is not positive at r = {r} (value {v})", self.base.name())));
            }
        }
        for i in 0..n {
            let r = T::one() + T::from_usize_lossy(i) / T::from_usize_lossy(n);
            if self.eval(r) != T::zero() {
                return Err(Error::Domain(format!("{} weight does not vanish at r = {r}", self.base.name())));
            }
        }
        Ok(())
    }

    /// Whether the composed weight is continuously differentiable on `[0, inf)`.
    pub fn is_c1(&self) -> bool {
        match (&self.base, self.transform) {
            (BaseKernel::Mps, _) => false,
            (_, RoleTransform::OverR) => false,
            (BaseKernel::Polynomial(_), RoleTransform::Identity) => {
                let tol = T::lit(1e-10) * self.coefficient_scale();
                self.base.raw(T::one()).abs() <= tol && self.base.raw_d1(T::one()).abs() <= tol
            }
            // derivative-based transforms of a polynomial need w'(1) = w''(1) = 0 as well
            (BaseKernel::Polynomial(_), _) => {
                let tol = T::lit(1e-10) * self.coefficient_scale();
                self.base.raw_d1(T::one()).abs() <= tol && self.base.raw_d2(T::one()).abs() <= tol
            }
            _ => true,
        }
    }

    fn coefficient_scale(&self) -> T {
        match &self.base {
            BaseKernel::Polynomial(a) => a.iter().fold(T::zero(), |acc, c| acc + c.abs()).max(T::one()),
            _ => T::one(),
        }
    }
}

/// Points in `(0, 1)` where `g` changes sign, located by sampling and bisection.
fn sign_changes<T: Real>(g: impl Fn(T) -> T, samples: usize) -> Vec<T> {
    let mut roots = Vec::new();
    let n = T::from_usize_lossy(samples);
    let mut a = T::epsilon();
    let mut ga = g(a);
    for i in 1..=samples {
        let b = if i == samples { T::one() - T::epsilon() } else { T::from_usize_lossy(i) / n };
        let gb = g(b);
        if ga * gb < T::zero() {
            let (mut lo, mut hi, mut glo) = (a, b, ga);
            for _ in 0..200 {
                let mid = T::lit(0.5) * (lo + hi);
                if !(mid > lo && mid < hi) {
                    break;
                }
                let gm = g(mid);
                if glo * gm <= T::zero() {
                    hi = mid;
                } else {
                    lo = mid;
                    glo = gm;
                }
            }
            roots.push(T::lit(0.5) * (lo + hi));
        }
        a = b;
        ga = gb;
    }
    roots
}

/// Truncation-error objective
/// `F(w) = [int_0^1 r^{d-1} (w + 2|w'|) dr] / [int_0^1 r^{d+1} |w| dr]`.
///
/// The angular factors of the two `d`-dimensional integrals cancel, so only radial
/// integrals remain. The integrands are split at spline knots and at sign changes of
/// `w` and `w'` so that the absolute values do not spoil quadrature accuracy.
pub fn objective_f<T: Real>(w: &ReferenceWeight<T>) -> Result<T> {
    if !w.is_c1() {
        return Err(Error::Domain(format!(
            "objective needs a continuously differentiable weight; {} with {:?} is not",
            w.base.name(),
            w.transform
        )));
    }
    let d = w.dim as i32;
    let mut breaks: Vec<T> = KNOTS.iter().map(|&x| T::lit(x)).collect();
    breaks.extend(sign_changes(|r| w.derivative(r), 512));
    breaks.extend(sign_changes(|r| w.eval(r), 512));
    let tol = quad_tol();
    let num = integrate(
        |r: T| r.powi(d - 1) * (w.eval(r) + T::lit(2.0) * w.derivative(r).abs()),
        T::zero(),
        T::one(),
        &breaks,
        tol,
    )?;
    let den = integrate(|r: T| r.powi(d + 1) * w.eval(r).abs(), T::zero(), T::one(), &breaks, tol)?;
    if !(den > T::zero()) {
        return Err(Error::Domain("objective denominator vanishes".into()));
    }
    Ok(num / den)
}

/// Named weight triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// Spike function for all three operators.
    #[serde(rename = "g-s")]
    GeneralizedSpike,
    /// SPH with the cubic B-spline.
    #[serde(rename = "s-c")]
    SphCubic,
    /// SPH with the quintic B-spline.
    #[serde(rename = "s-q")]
    SphQuintic,
    /// SPH with the quintic Wendland function.
    #[serde(rename = "s-w")]
    SphWendland,
    /// MPS weights.
    #[serde(rename = "m")]
    Mps,
    #[serde(rename = "custom")]
    Custom,
}

impl Preset {
    pub const NAMED: [Preset; 5] =
        [Preset::GeneralizedSpike, Preset::SphCubic, Preset::SphQuintic, Preset::SphWendland, Preset::Mps];

    pub fn tag(self) -> &'static str {
        match self {
            Preset::GeneralizedSpike => "g-s",
            Preset::SphCubic => "s-c",
            Preset::SphQuintic => "s-q",
            Preset::SphWendland => "s-w",
            Preset::Mps => "m",
            Preset::Custom => "custom",
        }
    }

    /// SPH base kernel, if this is one of the SPH presets.
    pub fn sph_base<T>(self) -> Option<BaseKernel<T>> {
        match self {
            Preset::SphCubic => Some(BaseKernel::CubicSpline),
            Preset::SphQuintic => Some(BaseKernel::QuinticSpline),
            Preset::SphWendland => Some(BaseKernel::Wendland),
            _ => None,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g-s" => Ok(Preset::GeneralizedSpike),
            "s-c" => Ok(Preset::SphCubic),
            "s-q" => Ok(Preset::SphQuintic),
            "s-w" => Ok(Preset::SphWendland),
            "m" => Ok(Preset::Mps),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset `{other}` (expected g-s, s-c, s-q, s-w, m, custom)"
            ))),
        }
    }
}

/// Weights for the interpolant, gradient and Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTriple<T> {
    pub interp: ReferenceWeight<T>,
    pub grad: ReferenceWeight<T>,
    pub lap: ReferenceWeight<T>,
    pub preset: Preset,
}

impl<T: Real> WeightTriple<T> {
    pub fn preset(preset: Preset, dim: usize) -> Result<Self> {
        if let Some(base) = preset.sph_base() {
            let interp = ReferenceWeight::new(base, RoleTransform::Identity, dim)?;
            let grad = interp.with_transform(RoleTransform::NegDerivative);
            let lap = interp.with_transform(RoleTransform::NegDerivativeOverR);
            return Ok(Self { interp, grad, lap, preset });
        }
        match preset {
            Preset::GeneralizedSpike => {
                let w = ReferenceWeight::spike(dim)?;
                Ok(Self { interp: w.clone(), grad: w.clone(), lap: w, preset })
            }
            Preset::Mps => {
                let w = ReferenceWeight::new(BaseKernel::Mps, RoleTransform::Identity, dim)?;
                Ok(Self { grad: w.with_transform(RoleTransform::OverR), interp: w.clone(), lap: w, preset })
            }
            Preset::Custom => Err(Error::InvalidConfig("custom preset needs explicit weights".into())),
            _ => unreachable!("SPH presets handled above"),
        }
    }

    /// One polynomial weight for all three operators.
    pub fn custom_polynomial(coefficients: Vec<T>, dim: usize) -> Result<Self> {
        let w = ReferenceWeight::polynomial(coefficients, dim)?;
        w.check_membership(1000)?;
        Ok(Self { interp: w.clone(), grad: w.clone(), lap: w, preset: Preset::Custom })
    }

    pub fn members(&self) -> [&ReferenceWeight<T>; 3] {
        [&self.interp, &self.grad, &self.lap]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::PI;

    #[test]
    fn spike_values() {
        let w = ReferenceWeight::<f64>::spike(2).unwrap();
        assert_eq!(w.eval(0.0), 1.0);
        assert_eq!(w.eval(0.5), 0.25);
        assert_eq!(w.eval(1.0), 0.0);
        assert_eq!(w.eval(3.0), 0.0);
    }

    #[test]
    fn mps_values() {
        let w = ReferenceWeight::<f64>::new(BaseKernel::Mps, RoleTransform::Identity, 2).unwrap();
        assert_eq!(w.eval(0.5), 1.0);
        assert_eq!(w.eval(0.0), 0.0);
        let g = w.with_transform(RoleTransform::OverR);
        assert_eq!(g.eval_flagged(0.0), (0.0, true));
        assert_eq!(g.eval(0.5), 2.0);
    }

    #[test]
    fn scaled_examples() {
        let w2 = ReferenceWeight::<f64>::spike(2).unwrap();
        assert_abs_diff_eq!(w2.scaled_eval(2.0, 1.0), 0.0625, epsilon = 1e-16);
        assert_eq!(w2.scaled_eval(0.3, 0.3), 0.0);
        assert_eq!(w2.scaled_eval(0.3, 0.5), 0.0);
        let w3 = ReferenceWeight::<f64>::spike(3).unwrap();
        assert_abs_diff_eq!(w3.scaled_eval(0.5, 0.0), 8.0, epsilon = 1e-15);
    }

    #[test]
    fn spike_moments_match_closed_form() {
        let w = ReferenceWeight::<f64>::spike(2).unwrap();
        // 2 pi int_0^1 r^{k+1} (1-r)^2 dr
        assert_abs_diff_eq!(w.moment(0).unwrap(), PI / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.moment(1).unwrap(), PI / 15.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.moment(2).unwrap(), PI / 30.0, epsilon = 1e-12);
    }

    #[test]
    fn spline_normalizations() {
        let c = ReferenceWeight::<f64>::new(BaseKernel::CubicSpline, RoleTransform::Identity, 2).unwrap();
        assert_relative_eq!(c.normalization(), 40.0 / (7.0 * PI), max_relative = 1e-10);
        assert_abs_diff_eq!(c.moment(0).unwrap(), 1.0, epsilon = 1e-12);
        let c3 = ReferenceWeight::<f64>::new(BaseKernel::CubicSpline, RoleTransform::Identity, 3).unwrap();
        assert_relative_eq!(c3.normalization(), 8.0 / PI, max_relative = 1e-10);
        let q = ReferenceWeight::<f64>::new(BaseKernel::QuinticSpline, RoleTransform::Identity, 2).unwrap();
        // 7 / (478 pi) in q = 3r units, rescaled by 9 for unit support
        assert_relative_eq!(q.normalization(), 63.0 / (478.0 * PI), max_relative = 1e-10);
        let wd = ReferenceWeight::<f64>::new(BaseKernel::Wendland, RoleTransform::Identity, 2).unwrap();
        assert_relative_eq!(wd.normalization(), 7.0 / PI, max_relative = 1e-10);
        let wd3 = ReferenceWeight::<f64>::new(BaseKernel::Wendland, RoleTransform::Identity, 3).unwrap();
        assert_relative_eq!(wd3.normalization(), 21.0 / (2.0 * PI), max_relative = 1e-10);
    }

    #[test]
    fn spline_derivatives_match_finite_differences() {
        for base in [BaseKernel::CubicSpline, BaseKernel::QuinticSpline, BaseKernel::Wendland] {
            let w = ReferenceWeight::<f64>::new(base, RoleTransform::Identity, 2).unwrap();
            let grad = w.with_transform(RoleTransform::NegDerivative);
            let lap = w.with_transform(RoleTransform::NegDerivativeOverR);
            let eps = 1e-6;
            for i in 1..200 {
                let r = i as f64 / 200.0;
                if KNOTS.iter().any(|k| (r - k).abs() < 1e-3) {
                    continue;
                }
                let fd = (w.eval(r + eps) - w.eval(r - eps)) / (2.0 * eps);
                let scale = w.normalization().max(1.0);
                assert!((grad.eval(r) + fd).abs() < 1e-6 * scale * 100.0, "r {r}");
                assert!((lap.eval(r) + fd / r).abs() < 1e-6 * scale * 100.0 / r);
                // second-derivative route of the composed weights
                let fd2 = (grad.eval(r + eps) - grad.eval(r - eps)) / (2.0 * eps);
                assert!((grad.derivative(r) - fd2).abs() < 1e-5 * scale * 100.0);
                let fd3 = (lap.eval(r + eps) - lap.eval(r - eps)) / (2.0 * eps);
                assert!((lap.derivative(r) - fd3).abs() < 1e-5 * scale * 100.0 / r);
            }
        }
    }

    #[test]
    fn presets_are_weights() {
        for p in Preset::NAMED {
            for dim in [2, 3] {
                let t = WeightTriple::<f64>::preset(p, dim).unwrap();
                for w in t.members() {
                    w.check_membership(1000).unwrap();
                }
            }
        }
    }

    #[test]
    fn constants_for_spike() {
        let w = ReferenceWeight::<f64>::spike(2).unwrap();
        let cpi = 1.0 / w.moment(0).unwrap();
        let cg = 2.0 / w.moment(1).unwrap();
        let cl = 4.0 / w.moment(2).unwrap();
        assert_relative_eq!(cpi, 6.0 / PI, max_relative = 1e-12);
        assert_relative_eq!(cg, 30.0 / PI, max_relative = 1e-12);
        assert_relative_eq!(cl, 120.0 / PI, max_relative = 1e-12);
    }

    #[test]
    fn objective_of_spike() {
        let w = ReferenceWeight::<f64>::spike(2).unwrap();
        assert_abs_diff_eq!(objective_f(&w).unwrap(), 45.0, epsilon = 1e-9);
    }

    #[test]
    fn objective_is_scale_invariant() {
        let base = objective_f(&ReferenceWeight::<f64>::spike(2).unwrap()).unwrap();
        for c in [0.5, 2.0] {
            let w = ReferenceWeight::polynomial(vec![c, -2.0 * c, c], 2).unwrap();
            assert_relative_eq!(objective_f(&w).unwrap(), base, max_relative = 1e-12);
        }
    }

    #[test]
    fn objective_rejects_mps() {
        let w = ReferenceWeight::<f64>::new(BaseKernel::Mps, RoleTransform::Identity, 2).unwrap();
        assert!(matches!(objective_f(&w), Err(Error::Domain(_))));
        let p = ReferenceWeight::<f64>::polynomial(vec![1.0, -1.0], 2).unwrap();
        assert!(objective_f(&p).is_err());
    }

    #[test]
    fn objective_matches_plain_quadrature_for_wendland() {
        let w = ReferenceWeight::<f64>::new(BaseKernel::Wendland, RoleTransform::Identity, 2).unwrap();
        // closed-form profile and derivative, midpoint rule on a fine grid
        let a = 7.0 / PI;
        let n = 200_000;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let r = (i as f64 + 0.5) / n as f64;
            let f = a * (1.0 - r).powi(4) * (1.0 + 4.0 * r);
            let df = -20.0 * a * r * (1.0 - r).powi(3);
            num += r * (f + 2.0 * df.abs());
            den += r.powi(3) * f.abs();
        }
        assert_relative_eq!(objective_f(&w).unwrap(), num / den, max_relative = 1e-9);
    }

    #[test]
    fn preset_tags_round_trip() {
        for p in Preset::NAMED {
            assert_eq!(p.tag().parse::<Preset>().unwrap(), p);
        }
        assert!("x-y".parse::<Preset>().is_err());
    }

    #[test]
    fn single_precision_weights() {
        let t = WeightTriple::<f32>::preset(Preset::SphCubic, 2).unwrap();
        assert!((t.interp.moment(0).unwrap() - 1.0).abs() < 1e-5);
    }
}
