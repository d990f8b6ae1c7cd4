//! Minimization of the truncation-error objective over polynomial weights.
//!
//! A degree-`n` polynomial with `w(1) = w'(1) = 0` factors as `(1 - r)^2 q(r)` with
//! `deg q = n - 2`. Fixing `q(0) = 1` removes the scale freedom (the objective is
//! homogeneous of degree zero), so the `n - 2` higher coefficients of `q` are free and
//! both boundary constraints hold exactly for every candidate.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::weights::{objective_f, ReferenceWeight};

/// Result of [`optimize_polynomial`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialOptimum<T> {
    /// `a_0..a_n` with `a_0 = 1`.
    pub coefficients: Vec<T>,
    pub objective: T,
    pub evaluations: usize,
}

/// Coefficients of `(1 - r)^2 (1 + b_1 r + ... + b_m r^m)`.
pub fn coefficients_from_free<T: Real>(free: &[T]) -> Vec<T> {
    let mut q = Vec::with_capacity(free.len() + 1);
    q.push(T::one());
    q.extend_from_slice(free);
    let factor = [T::one(), -T::lit(2.0), T::one()];
    let mut out = vec![T::zero(); q.len() + 2];
    for (i, &qi) in q.iter().enumerate() {
        for (j, &fj) in factor.iter().enumerate() {
            out[i + j] = out[i + j] + qi * fj;
        }
    }
    out
}

/// `q > 0` on `(0, 1)`, checked on a dense grid plus the right endpoint.
fn strictly_positive_factor<T: Real>(free: &[T]) -> bool {
    let eval = |r: T| free.iter().rev().fold(T::zero(), |acc, &b| acc * r + b) * r + T::one();
    let n = 2048;
    (1..=n).all(|i| eval(T::from_usize_lossy(i) / T::from_usize_lossy(n)) > T::zero())
}

fn penalized_objective<T: Real>(free: &[T], dim: usize) -> T {
    if !free.iter().all(|b| b.is_finite()) || !strictly_positive_factor(free) {
        return T::infinity();
    }
    ReferenceWeight::polynomial(coefficients_from_free(free), dim)
        .and_then(|w| objective_f(&w))
        .unwrap_or(T::infinity())
}

/// Nelder–Mead on `f` from `start`; returns (argmin, value, evaluations).
fn nelder_mead<T: Real>(f: impl Fn(&[T]) -> T, start: &[T], step: T, max_evals: usize) -> (Vec<T>, T, usize) {
    let m = start.len();
    let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let mut simplex: Vec<Vec<T>> = vec![start.to_vec()];
    for k in 0..m {
        let mut v = start.to_vec();
        v[k] = v[k] + step;
        simplex.push(v);
    }
    let mut values: Vec<T> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = simplex.len();
    let tol = T::epsilon() * T::lit(16.0);
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=m).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let (best, worst) = (values[0], values[m]);
        let size = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs())))
            .fold(T::zero(), T::max);
        let scale = simplex[0].iter().fold(T::one(), |acc, x| acc.max(x.abs()));
        if worst.is_finite() && (worst - best).abs() <= tol * best.abs() && size <= T::lit(1e-10) * scale {
            break;
        }
        let centroid: Vec<T> = (0..m)
            .map(|k| simplex[..m].iter().map(|v| v[k]).sum::<T>() / T::from_usize_lossy(m))
            .collect();
        let along = |t: T| -> Vec<T> { (0..m).map(|k| centroid[k] + t * (simplex[m][k] - centroid[k])).collect() };
        let reflected = along(-alpha);
        let fr = f(&reflected);
        evals += 1;
        if fr < values[0] {
            let expanded = along(-gamma);
            let fe = f(&expanded);
            evals += 1;
            if fe < fr {
                simplex[m] = expanded;
                values[m] = fe;
            } else {
                simplex[m] = reflected;
                values[m] = fr;
            }
        } else if fr < values[m - 1] {
            simplex[m] = reflected;
            values[m] = fr;
        } else {
            let (contracted, fc) = if fr < values[m] {
                let c = along(-rho);
                let v = f(&c);
                (c, v)
            } else {
                let c = along(rho);
                let v = f(&c);
                (c, v)
            };
            evals += 1;
            if fc < values[m].min(fr) {
                simplex[m] = contracted;
                values[m] = fc;
            } else {
                for i in 1..=m {
                    simplex[i] = (0..m).map(|k| simplex[0][k] + sigma * (simplex[i][k] - simplex[0][k])).collect();
                    values[i] = f(&simplex[i]);
                }
                evals += m;
            }
        }
    }
    let best = (0..=m)
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    (simplex[best].clone(), values[best], evals)
}

/// Minimizes the truncation-error objective over degree-`n` polynomial weights in `dim`
/// dimensions, subject to `a_0 > 0`, `sum a_k = 0`, `sum k a_k = 0`. Returned coefficients
/// are gauged to `a_0 = 1`.
pub fn optimize_polynomial<T: Real>(n: usize, dim: usize) -> Result<PolynomialOptimum<T>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "degree {n} admits no weight with w(1) = w'(1) = 0 and w(0) > 0; need n >= 2"
        )));
    }
    crate::weights::sphere_surface::<T>(dim)?;
    let free_dim = n - 2;
    if free_dim == 0 {
        let coefficients = coefficients_from_free::<T>(&[]);
        let objective = objective_f(&ReferenceWeight::polynomial(coefficients.clone(), dim)?)?;
        return Ok(PolynomialOptimum { coefficients, objective, evaluations: 1 });
    }
    let f = |b: &[T]| penalized_objective(b, dim);
    let mut point = vec![T::zero(); free_dim];
    let mut value = f(&point);
    let mut evaluations = 1;
    // restarts shrink the initial simplex around the incumbent
    for step in [1.0, 4.0, 0.25, 0.01] {
        let (p, v, e) = nelder_mead(f, &point, T::lit(step), 4000 * free_dim);
        evaluations += e;
        if v <= value {
            point = p;
            value = v;
        }
    }
    if !value.is_finite() {
        return Err(Error::Domain(format!("no feasible degree-{n} weight found")));
    }
    Ok(PolynomialOptimum { coefficients: coefficients_from_free(&point), objective: value, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_is_the_spike() {
        let opt = optimize_polynomial::<f64>(2, 2).unwrap();
        assert_eq!(opt.coefficients, vec![1.0, -2.0, 1.0]);
        assert_abs_diff_eq!(opt.objective, 45.0, epsilon = 1e-9);
        let w = ReferenceWeight::polynomial(opt.coefficients, 2).unwrap();
        assert_eq!(w.base_value(1.0 - 1e-300), 0.0);
    }

    #[test]
    fn constraints_hold_exactly_for_any_free_vector() {
        for free in [vec![0.3], vec![-0.7, 2.5], vec![10.0, -3.0, 0.125]] {
            let a = coefficients_from_free::<f64>(&free);
            assert_eq!(a[0], 1.0);
            let s: f64 = a.iter().sum();
            let ks: f64 = a.iter().enumerate().map(|(k, c)| k as f64 * c).sum();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(ks, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn degree_below_two_is_rejected() {
        assert!(optimize_polynomial::<f64>(1, 2).is_err());
        assert!(optimize_polynomial::<f64>(0, 3).is_err());
    }

    /// Independent evaluation of F for w = (1-r)^2 (1 + t r) by the midpoint rule.
    fn cubic_objective(t: f64, dim: i32) -> f64 {
        let n = 20_000;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let r = (i as f64 + 0.5) / n as f64;
            let w = (1.0 - r).powi(2) * (1.0 + t * r);
            let dw = -2.0 * (1.0 - r) * (1.0 + t * r) + t * (1.0 - r).powi(2);
            num += r.powi(dim - 1) * (w + 2.0 * dw.abs());
            den += r.powi(dim + 1) * w.abs();
        }
        num / den
    }

    #[test]
    fn cubic_optimum_beats_spike_and_matches_grid_search() {
        for dim in [2usize, 3] {
            let opt = optimize_polynomial::<f64>(3, dim).unwrap();
            let spike = objective_f(&ReferenceWeight::<f64>::spike(dim).unwrap()).unwrap();
            assert!(opt.objective < spike);
            let w = ReferenceWeight::polynomial(opt.coefficients.clone(), dim).unwrap();
            w.check_membership(1000).unwrap();

            // log-spaced grid over the feasible ray t >= -1
            let mut best = f64::INFINITY;
            for i in 0..=4000 {
                let t = -1.0 + 10f64.powf(-3.0 + 7.0 * i as f64 / 4000.0);
                best = best.min(cubic_objective(t, dim as i32));
            }
            assert!((opt.objective - best).abs() <= 1e-4 * best, "dim {dim}: {} vs grid {best}", opt.objective);
        }
    }
}
