//! Independent reference computations used to cross-check the closed forms
//! and series in this crate: quadrature, the wrapping-sum definition of the
//! wrapped Normal, bisection, and central differences.
//!
//! Nothing here calls into the series or moment code it is meant to check.

use std::f64::consts::{PI, TAU};

/// Number of wraps on each side used by [`wrapped_normal_by_wrapping`].
pub const WRAP_TERMS: i32 = 50;

/// Trapezoid rule for a 2π-periodic function on [−π, π] with `nodes` points.
pub fn trapezoid_periodic(f: impl Fn(f64) -> f64, nodes: usize) -> f64 {
    assert!(nodes >= 2);
    let h = TAU / nodes as f64;
    (0..nodes).map(|k| f(-PI + k as f64 * h)).sum::<f64>() * h
}

/// Plain trapezoid rule on `[lo, hi]` with `nodes` equally spaced points.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, nodes: usize) -> f64 {
    assert!(nodes >= 2);
    let h = (hi - lo) / (nodes - 1) as f64;
    let inner: f64 = (1..nodes - 1).map(|k| f(lo + k as f64 * h)).sum();
    h * (inner + 0.5 * (f(lo) + f(hi)))
}

/// Wrapped Normal density from its definition as a sum of shifted Gaussians,
/// with variance `−2 ln rho`.
pub fn wrapped_normal_by_wrapping(rho: f64, mu: f64, theta: f64) -> f64 {
    if rho == 0.0 {
        return 1.0 / TAU;
    }
    let var = -2.0 * rho.ln();
    let norm = 1.0 / (TAU * var).sqrt();
    (-WRAP_TERMS..=WRAP_TERMS)
        .map(|k| {
            let x = theta - mu + TAU * k as f64;
            norm * (-x * x / (2.0 * var)).exp()
        })
        .sum()
}

/// Wrapped Cauchy density from the closed form, as a function of the angle.
pub fn wrapped_cauchy_direct(rho: f64, theta: f64) -> f64 {
    (1.0 - rho * rho) / (TAU * (1.0 + rho * rho - 2.0 * rho * theta.cos()))
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Central difference `(f(x + h) − f(x − h)) / 2h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
