//! Small fixed-size vector helpers over `[T; D]`.

use crate::scalar::Real;

pub type Vector<T, const D: usize> = [T; D];

#[inline]
pub fn zero<T: Real, const D: usize>() -> Vector<T, D> {
    [T::zero(); D]
}

#[inline]
pub fn add<T: Real, const D: usize>(a: &Vector<T, D>, b: &Vector<T, D>) -> Vector<T, D> {
    std::array::from_fn(|k| a[k] + b[k])
}

#[inline]
pub fn sub<T: Real, const D: usize>(a: &Vector<T, D>, b: &Vector<T, D>) -> Vector<T, D> {
    std::array::from_fn(|k| a[k] - b[k])
}

#[inline]
pub fn scale<T: Real, const D: usize>(a: &Vector<T, D>, s: T) -> Vector<T, D> {
    std::array::from_fn(|k| a[k] * s)
}

/// `a + s * b`
#[inline]
pub fn axpy<T: Real, const D: usize>(a: &Vector<T, D>, s: T, b: &Vector<T, D>) -> Vector<T, D> {
    std::array::from_fn(|k| a[k] + s * b[k])
}

#[inline]
pub fn dot<T: Real, const D: usize>(a: &Vector<T, D>, b: &Vector<T, D>) -> T {
    let mut acc = T::zero();
    for k in 0..D {
        acc = acc + a[k] * b[k];
    }
    acc
}

#[inline]
pub fn norm_sq<T: Real, const D: usize>(a: &Vector<T, D>) -> T {
    dot(a, a)
}

#[inline]
pub fn norm<T: Real, const D: usize>(a: &Vector<T, D>) -> T {
    norm_sq(a).sqrt()
}

#[inline]
pub fn is_finite<T: Real, const D: usize>(a: &Vector<T, D>) -> bool {
    a.iter().all(|x| x.is_finite())
}
