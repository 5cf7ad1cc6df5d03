// SPDX-License-Identifier: Apache-2.0

//! Fourth-order central finite differences.

use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;

use crate::error::Result;

/// Base differencing step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Step along an axis whose coordinate currently has value `xi`.
///
/// The base step is kept absolute up to |xi| = 1e3 and grows linearly beyond,
/// so that `xi + h != xi` holds for any representable coordinate.
pub fn step_at(base: f64, xi: f64) -> f64 {
    base * (xi.abs() * 1e-3).max(1.0)
}

/// Values that finite differences can combine.
pub trait Lin: Sized + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T> Lin for T where T: Sized + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

fn shifted(x: &[f64], i: usize, d: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[i] += d;
    y
}

/// ∂f/∂x_i at `x` with step `h`.
pub fn d1<T: Lin, F>(f: &F, x: &[f64], i: usize, h: f64) -> Result<T>
where
    F: Fn(&[f64]) -> Result<T> + ?Sized,
{
    let fm2 = f(&shifted(x, i, -2.0 * h))?;
    let fm1 = f(&shifted(x, i, -h))?;
    let fp1 = f(&shifted(x, i, h))?;
    let fp2 = f(&shifted(x, i, 2.0 * h))?;
    Ok((fm2 - fp2 + (fp1 - fm1) * 8.0) * (1.0 / (12.0 * h)))
}

/// Derivative of `t ↦ f(x + t v)` at t = 0.
pub fn directional<T: Lin, F>(f: &F, x: &[f64], v: &[f64], h: f64) -> Result<T>
where
    F: Fn(&[f64]) -> Result<T> + ?Sized,
{
    let at = |t: f64| -> Vec<f64> { x.iter().zip(v).map(|(a, b)| a + t * b).collect() };
    let fm2 = f(&at(-2.0 * h))?;
    let fm1 = f(&at(-h))?;
    let fp1 = f(&at(h))?;
    let fp2 = f(&at(2.0 * h))?;
    Ok((fm2 - fp2 + (fp1 - fm1) * 8.0) * (1.0 / (12.0 * h)))
}

/// Derivative of a function of one variable.
pub fn d1_scalar<F: Fn(f64) -> f64 + ?Sized>(f: &F, t: f64, h: f64) -> f64 {
    (f(t - 2.0 * h) - f(t + 2.0 * h) + 8.0 * (f(t + h) - f(t - h))) / (12.0 * h)
}

/// Second derivative of a function of one variable.
pub fn d2_scalar<F: Fn(f64) -> f64 + ?Sized>(f: &F, t: f64, h: f64) -> f64 {
    (-f(t + 2.0 * h) + 16.0 * f(t + h) - 30.0 * f(t) + 16.0 * f(t - h) - f(t - 2.0 * h))
        / (12.0 * h * h)
}

/// Coordinate gradient of a scalar field.
pub fn gradient<F>(f: &F, x: &[f64], base: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + ?Sized,
{
    (0..x.len()).map(|i| d1(f, x, i, step_at(base, x[i]))).collect()
}

/// Coordinate Hessian ∂_i∂_j f of a scalar field.
pub fn hessian<F>(f: &F, x: &[f64], base: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + ?Sized,
{
    let n = x.len();
    let mut hm = DMatrix::zeros(n, n);
    let f0 = f(x)?;
    for i in 0..n {
        let hi = step_at(base, x[i]);
        let v = |d: f64| f(&shifted(x, i, d));
        hm[(i, i)] = (-v(2.0 * hi)? + 16.0 * v(hi)? - 30.0 * f0 + 16.0 * v(-hi)? - v(-2.0 * hi)?)
            / (12.0 * hi * hi);
        for j in 0..i {
            let hj = step_at(base, x[j]);
            let inner = |y: &[f64]| d1(f, y, j, hj);
            let val = d1(&inner, x, i, hi)?;
            hm[(i, j)] = val;
            hm[(j, i)] = val;
        }
    }
    Ok(hm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_polynomials_up_to_degree_four_are_exact() {
        let f = |x: &[f64]| -> Result<f64> { Ok(x[0].powi(4) - 3.0 * x[0] * x[1] + x[1].powi(3)) };
        let x = [0.7, -1.3];
        let g = gradient(&f, &x, 1e-2).unwrap();
        assert!((g[0] - (4.0 * 0.7f64.powi(3) + 3.9)).abs() < 1e-10);
        assert!((g[1] - (-2.1 + 3.0 * 1.69)).abs() < 1e-10);
        let h = hessian(&f, &x, 1e-2).unwrap();
        assert!((h[(0, 0)] - 12.0 * 0.49).abs() < 1e-8);
        assert!((h[(0, 1)] + 3.0).abs() < 1e-8);
        assert!((h[(1, 1)] - 6.0 * -1.3).abs() < 1e-8);
    }

    #[test]
    fn one_dimensional_stencils_on_exp() {
        let e = |t: f64| t.exp();
        assert!((d1_scalar(&e, 0.5, 1e-3) - 0.5f64.exp()).abs() < 1e-11);
        assert!((d2_scalar(&e, 0.5, 1e-3) - 0.5f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn directional_matches_gradient() {
        let f = |x: &[f64]| -> Result<f64> { Ok((x[0] * x[1]).sin() + x[2].exp()) };
        let x = [0.3, 0.4, -0.2];
        let v = [1.0, -2.0, 0.5];
        let g = gradient(&f, &x, 1e-3).unwrap();
        let d: f64 = directional(&f, &x, &v, 1e-3).unwrap();
        let dot: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((d - dot).abs() < 1e-10);
    }
}
