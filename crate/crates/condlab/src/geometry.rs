// SPDX-License-Identifier: Apache-2.0

//! Chart-based differential geometry by finite differencing of field callbacks.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fd::{self, step_at, DEFAULT_STEP};
use crate::profile::Profile;
use crate::sampling;
use crate::tensor::{self, MetricAtPoint, MixedTensorAtPoint};

pub type PointFn<T> = Arc<dyn Fn(&[f64]) -> T + Send + Sync>;

/// Tolerance of the polar-adaptation and eikonal checks.
pub const ADAPT_TOL: f64 = 1e-8;

/// How the distance from the pole is read off the chart.
#[derive(Clone, Debug, PartialEq)]
pub enum Pole {
    /// The first coordinate is r and the chart is polar-adapted.
    Polar,
    /// r = |x − center| in coordinates; valid where |∇r|_g = 1 (checked).
    Cartesian { center: Vec<f64> },
}

/// A coordinate chart with a metric callback.
#[derive(Clone)]
pub struct ChartManifold {
    dim: usize,
    bounds: Vec<(f64, f64)>,
    metric: PointFn<DMatrix<f64>>,
    pole: Option<Pole>,
    step: f64,
    label: String,
}

impl fmt::Debug for ChartManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartManifold")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("pole", &self.pole)
            .finish()
    }
}

impl ChartManifold {
    pub fn new(
        dim: usize,
        bounds: Vec<(f64, f64)>,
        metric: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        assert_eq!(bounds.len(), dim, "one bound pair per axis");
        ChartManifold {
            dim,
            bounds,
            metric: Arc::new(metric),
            pole: None,
            step: DEFAULT_STEP,
            label: "chart".into(),
        }
    }

    /// Euclidean R^n in Cartesian coordinates with the pole at the origin.
    pub fn euclidean(n: usize) -> Self {
        ChartManifold::new(n, vec![(f64::NEG_INFINITY, f64::INFINITY); n], move |_| DMatrix::identity(n, n))
            .with_pole(Pole::Cartesian { center: vec![0.0; n] })
            .with_label(format!("euclidean R^{n}"))
    }

    /// The model dr² + w(r)² g_{S^{n−1}} in hyperspherical coordinates
    /// (r, θ_1, …, θ_{n−1}); the last angle is periodic.
    pub fn warped(n: usize, w: Profile) -> Self {
        assert!(n >= 2);
        let label = format!("warped model w = {} (n = {n})", w.label());
        let mut bounds = vec![(0.0, f64::INFINITY)];
        for _ in 1..n - 1 {
            bounds.push((0.0, PI));
        }
        bounds.push((f64::NEG_INFINITY, f64::INFINITY));
        ChartManifold::new(n, bounds, move |x| {
            let mut g = DMatrix::zeros(n, n);
            g[(0, 0)] = 1.0;
            let ww = w.value(x[0]);
            let mut s = ww * ww;
            for a in 1..n {
                g[(a, a)] = s;
                let st = x[a].sin();
                s *= st * st;
            }
            g
        })
        .with_pole(Pole::Polar)
        .with_label(label)
    }

    /// The model dr² + w(r)² g_{S^{n−1}} in geodesic normal coordinates x = r·u:
    /// g = u uᵀ + (w(r)/r)² (I − u uᵀ). Free of the angular coordinate
    /// singularities of [`warped`](Self::warped); requires w(r)/r smooth and
    /// positive, which holds for w(0) = 0, w'(0) = 1.
    pub fn normal_coordinates(n: usize, w: Profile) -> Self {
        let label = format!("warped model w = {} (n = {n}, normal coordinates)", w.label());
        ChartManifold::new(n, vec![(f64::NEG_INFINITY, f64::INFINITY); n], move |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let r = r2.sqrt();
            // below the cutoff, w(r)/r = 1 + O(r²) to double precision
            let s = if r < 1e-8 { 1.0 } else { w.value(r) / r };
            let s2 = s * s;
            let mut g = DMatrix::identity(n, n) * s2;
            if r2 > 0.0 {
                for i in 0..n {
                    for j in 0..n {
                        g[(i, j)] += (1.0 - s2) * x[i] * x[j] / r2;
                    }
                }
            }
            g
        })
        .with_pole(Pole::Cartesian { center: vec![0.0; n] })
        .with_label(label)
    }

    /// Euclidean plane in polar coordinates (r, θ).
    pub fn euclidean_polar() -> Self {
        ChartManifold::warped(2, Profile::identity()).with_label("euclidean R^2 (polar)")
    }

    pub fn with_pole(mut self, pole: Pole) -> Self {
        self.pole = Some(pole);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn pole(&self) -> Option<&Pole> {
        self.pole.as_ref()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn metric_fn(&self) -> PointFn<DMatrix<f64>> {
        self.metric.clone()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().zip(&self.bounds).all(|(v, (lo, hi))| v > lo && v < hi)
    }

    /// Validated metric at `x`.
    pub fn metric_at(&self, x: &[f64]) -> Result<MetricAtPoint> {
        MetricAtPoint::new(self.metric_matrix(x)?).map_err(|_| Error::SingularMetric { point: x.to_vec() })
    }

    /// Raw metric components at `x` after the domain check.
    pub fn metric_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if !self.contains(x) {
            return Err(Error::StencilOutOfDomain { point: x.to_vec() });
        }
        let g = (self.metric)(x);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "metric", point: x.to_vec() });
        }
        Ok(g)
    }

    /// Distance from the pole read off the chart.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        match self.pole.as_ref().ok_or(Error::MissingPole)? {
            Pole::Polar => Ok(x[0]),
            Pole::Cartesian { center } => {
                Ok(x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt())
            }
        }
    }

    /// Contravariant ∇r at `x`, after checking that r is a unit-speed
    /// distance there.
    pub fn grad_r(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r = self.distance(x)?;
        let floor = 10.0 * step_at(self.step, r);
        if r < floor {
            return Err(Error::RadiusTooSmall { r, floor });
        }
        let g = self.metric_at(x)?;
        match self.pole.as_ref().expect("checked above") {
            Pole::Polar => {
                let gm = g.matrix();
                let mut defect = (gm[(0, 0)] - 1.0).abs();
                for a in 1..self.dim {
                    defect = defect.max(gm[(0, a)].abs());
                }
                if defect > ADAPT_TOL {
                    return Err(Error::NotPolarAdapted { point: x.to_vec(), defect });
                }
                let mut v = vec![0.0; self.dim];
                v[0] = 1.0;
                Ok(v)
            }
            Pole::Cartesian { center } => {
                let dr: Vec<f64> = x.iter().zip(center).map(|(a, c)| (a - c) / r).collect();
                let gi = g.inverse();
                let v: Vec<f64> = (&gi * DVector::from_column_slice(&dr)).iter().copied().collect();
                let defect = (g.norm(&v) - 1.0).abs();
                if defect > ADAPT_TOL {
                    return Err(Error::NotPolarAdapted { point: x.to_vec(), defect });
                }
                Ok(v)
            }
        }
    }

    /// Number of unit-cube coordinates [`point_at`](Self::point_at) consumes.
    pub fn direction_params(&self) -> usize {
        match &self.pole {
            Some(Pole::Polar) => self.dim - 1,
            Some(Pole::Cartesian { .. }) => sampling::sphere_params(self.dim),
            None => self.dim,
        }
    }

    /// A chart point at distance `r` from the pole in the direction encoded by
    /// `u ∈ [0,1)^k`. Bounded angle ranges are shrunk by 2% at each end.
    pub fn point_at(&self, r: f64, u: &[f64]) -> Result<Vec<f64>> {
        match self.pole.as_ref().ok_or(Error::MissingPole)? {
            Pole::Polar => {
                let mut x = vec![r];
                for (a, &t) in u.iter().enumerate().take(self.dim - 1) {
                    let (lo, hi) = self.bounds[a + 1];
                    let v = if lo.is_finite() && hi.is_finite() {
                        let pad = 0.02 * (hi - lo);
                        lo + pad + t * (hi - lo - 2.0 * pad)
                    } else {
                        2.0 * PI * t
                    };
                    x.push(v);
                }
                Ok(x)
            }
            Pole::Cartesian { center } => {
                let d = sampling::unit_sphere(u, self.dim);
                Ok(center.iter().zip(&d).map(|(c, e)| c + r * e).collect())
            }
        }
    }
}

/// A pointwise (1,1) tensor field W^i_j in chart coordinates.
#[derive(Clone)]
pub struct ConductivityField {
    dim: usize,
    f: PointFn<DMatrix<f64>>,
    label: String,
}

impl fmt::Debug for ConductivityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConductivityField").field("label", &self.label).field("dim", &self.dim).finish()
    }
}

impl ConductivityField {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        ConductivityField { dim, f: Arc::new(f), label: label.into() }
    }

    pub fn identity(n: usize) -> Self {
        ConductivityField::new(n, "Id", move |_| DMatrix::identity(n, n))
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        ConductivityField::new(n, format!("{c}*Id"), move |_| DMatrix::identity(n, n) * c)
    }

    /// e^{f(x)}·Id.
    pub fn isotropic(n: usize, label: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ConductivityField::new(n, label, move |x| DMatrix::identity(n, n) * f(x).exp())
    }

    /// c·W.
    pub fn scaled(&self, c: f64) -> Self {
        let f = self.f.clone();
        ConductivityField::new(self.dim, format!("{c}*({})", self.label), move |x| f(x) * c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn func(&self) -> PointFn<DMatrix<f64>> {
        self.f.clone()
    }

    /// W at `x`; non-finite entries are an error.
    pub fn at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let w = (self.f)(x);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "conductivity", point: x.to_vec() });
        }
        Ok(w)
    }

    pub fn mixed_at(&self, x: &[f64]) -> Result<MixedTensorAtPoint> {
        MixedTensorAtPoint::new(self.at(x)?)
    }
}

/// Christoffel symbols Γ^k_{ij}, stored k-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }
}

fn metric_derivatives(m: &ChartManifold, x: &[f64], base: f64) -> Result<Vec<DMatrix<f64>>> {
    let f = |y: &[f64]| m.metric_matrix(y);
    (0..m.dim).map(|l| fd::d1(&f, x, l, step_at(base, x[l]))).collect()
}

/// Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij}), symmetric in (i, j)
/// by construction.
pub fn christoffel(m: &ChartManifold, x: &[f64], step: f64) -> Result<Christoffel> {
    let n = m.dim;
    let gi = m.metric_at(x)?.inverse();
    let dg = metric_derivatives(m, x, step)?;
    let mut data = vec![0.0; n * n * n];
    for i in 0..n {
        for j in i..n {
            // lowered Γ_{l,ij}
            let low: Vec<f64> = (0..n).map(|l| 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)])).collect();
            for k in 0..n {
                let v: f64 = (0..n).map(|l| gi[(k, l)] * low[l]).sum();
                data[(k * n + i) * n + j] = v;
                data[(k * n + j) * n + i] = v;
            }
        }
    }
    Ok(Christoffel { n, data })
}

/// (div W)^k = g^{ij} W^k_{i;j}, with W^k_{i;j} = ∂_j W^k_i + Γ^k_{lj} W^l_i − Γ^l_{ij} W^k_l.
pub fn divergence_w(m: &ChartManifold, w: &ConductivityField, x: &[f64]) -> Result<Vec<f64>> {
    divergence_with_step(m, &|y: &[f64]| w.at(y), x, m.step)
}

/// Divergence of a raw (1,1) field callback at a given differencing step.
pub fn divergence_with_step(
    m: &ChartManifold,
    w: &dyn Fn(&[f64]) -> Result<DMatrix<f64>>,
    x: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let n = m.dim;
    let gi = m.metric_at(x)?.inverse();
    let gam = christoffel(m, x, step)?;
    let w0 = w(x)?;
    let dw: Vec<DMatrix<f64>> = (0..n).map(|j| fd::d1(w, x, j, step_at(step, x[j]))).collect::<Result<_>>()?;
    let mut out = vec![0.0; n];
    for (k, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if gi[(i, j)] == 0.0 {
                    continue;
                }
                let mut cov = dw[j][(k, i)];
                for l in 0..n {
                    cov += gam.get(k, l, j) * w0[(l, i)] - gam.get(l, i, j) * w0[(k, l)];
                }
                s += gi[(i, j)] * cov;
            }
        }
        *o = s;
    }
    Ok(out)
}

/// Divergence together with a step-doubling error estimate (max norm).
pub fn divergence_with_error(
    m: &ChartManifold,
    w: &dyn Fn(&[f64]) -> Result<DMatrix<f64>>,
    x: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let a = divergence_with_step(m, w, x, m.step)?;
    let b = divergence_with_step(m, w, x, 2.0 * m.step)?;
    let err = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / 15.0;
    Ok((a, err))
}

fn scalar_result<'a>(u: &'a (dyn Fn(&[f64]) -> f64 + Send + Sync)) -> impl Fn(&[f64]) -> Result<f64> + 'a {
    move |y: &[f64]| {
        let v = u(y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { what: "scalar field", point: y.to_vec() })
        }
    }
}

/// Covariant Hessian H_{ij} = ∂_i∂_j u − Γ^k_{ij} ∂_k u.
pub fn covariant_hessian(
    m: &ChartManifold,
    u: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
    x: &[f64],
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = m.dim;
    let ur = scalar_result(u);
    let du = fd::gradient(&ur, x, m.step)?;
    let mut h = fd::hessian(&ur, x, m.step)?;
    let gam = christoffel(m, x, m.step)?;
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] -= (0..n).map(|k| gam.get(k, i, j) * du[k]).sum::<f64>();
        }
    }
    Ok((h, du))
}

/// Δ_W u = tr(Hess_W u) + ⟨∇u, div W⟩ with Hess_W u(X, Y) = ⟨∇_X∇u, W Y⟩.
pub fn laplace_w(
    m: &ChartManifold,
    w: &ConductivityField,
    u: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
    x: &[f64],
) -> Result<f64> {
    let gi = m.metric_at(x)?.inverse();
    let (h, du) = covariant_hessian(m, u, x)?;
    let w0 = w.at(x)?;
    // tr(Hess_W u) = g^{ab} H_{ak} W^k_b
    let tr = (&h * &w0 * &gi).trace();
    let div = divergence_w(m, w, x)?;
    Ok(tr + du.iter().zip(&div).map(|(a, b)| a * b).sum::<f64>())
}

/// Δ_W u as (1/√g) ∂_i(√g W^i_j g^{jk} ∂_k u), differenced directly.
pub fn laplace_w_direct(
    m: &ChartManifold,
    w: &ConductivityField,
    u: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
    x: &[f64],
) -> Result<f64> {
    let n = m.dim;
    let ur = scalar_result(u);
    let flux = |y: &[f64]| -> Result<DVector<f64>> {
        let g = m.metric_at(y)?;
        let du = DVector::from_vec(fd::gradient(&ur, y, m.step)?);
        let sq = g.matrix().determinant().sqrt();
        Ok(w.at(y)? * (g.inverse() * du) * sq)
    };
    let mut s = 0.0;
    for i in 0..n {
        let d: DVector<f64> = fd::d1(&flux, x, i, step_at(m.step, x[i]))?;
        s += d[i];
    }
    Ok(s / m.metric_at(x)?.matrix().determinant().sqrt())
}

/// Riemann, Ricci and scalar curvature at a point.
#[derive(Clone, Debug)]
pub struct CurvaturePack {
    pub n: usize,
    /// R^l_{ijk} with R(∂_i, ∂_j)∂_k = R^l_{ijk} ∂_l, stored l-major.
    pub riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
    pub metric: DMatrix<f64>,
}

impl CurvaturePack {
    pub fn riemann_up(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let n = self.n;
        self.riemann[((l * n + i) * n + j) * n + k]
    }

    /// Rm(X, Y, Z, V) = ⟨R(X, Y)Z, V⟩.
    pub fn rm(&self, x: &[f64], y: &[f64], z: &[f64], v: &[f64]) -> f64 {
        let n = self.n;
        let gv: Vec<f64> = (0..n).map(|l| (0..n).map(|m| self.metric[(l, m)] * v[m]).sum()).collect();
        let mut s = 0.0;
        for l in 0..n {
            if gv[l] == 0.0 {
                continue;
            }
            for i in 0..n {
                if x[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    if y[j] == 0.0 {
                        continue;
                    }
                    for k in 0..n {
                        s += self.riemann_up(l, i, j, k) * x[i] * y[j] * z[k] * gv[l];
                    }
                }
            }
        }
        s
    }

    fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.metric[(i, j)] * u[i] * v[j];
            }
        }
        s
    }

    /// Sectional curvature of the plane spanned by u, v.
    pub fn sectional(&self, u: &[f64], v: &[f64]) -> f64 {
        let area = self.inner(u, u) * self.inner(v, v) - self.inner(u, v).powi(2);
        self.rm(u, v, v, u) / area
    }

    /// g-orthonormal basis of the complement of the unit vector `e`.
    pub fn orthonormal_complement(&self, e: &[f64]) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut basis: Vec<Vec<f64>> = vec![e.to_vec()];
        for c in 0..n {
            let mut v = vec![0.0; n];
            v[c] = 1.0;
            for b in &basis {
                let p = self.inner(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= p * bi;
                }
            }
            let nv = self.inner(&v, &v).max(0.0).sqrt();
            if nv > 1e-8 {
                basis.push(v.iter().map(|a| a / nv).collect());
            }
            if basis.len() == n {
                break;
            }
        }
        basis.split_off(1)
    }

    /// Smallest and largest sectional curvature over planes containing the
    /// unit vector `e`.
    pub fn sectional_extremes_containing(&self, e: &[f64]) -> (f64, f64) {
        let comp = self.orthonormal_complement(e);
        let k = comp.len();
        let mut q = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let v = 0.5 * (self.rm(e, &comp[a], &comp[b], e) + self.rm(e, &comp[b], &comp[a], e));
                q[(a, b)] = v;
                q[(b, a)] = v;
            }
        }
        let ev = SymmetricEigen::new(q).eigenvalues;
        (ev.min(), ev.max())
    }

    /// Largest sectional curvature over coordinate-frame planes and `extra`
    /// sampled planes.
    pub fn max_sectional_sampled(&self, extra: &[(Vec<f64>, Vec<f64>)]) -> f64 {
        let n = self.n;
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                let mut u = vec![0.0; n];
                let mut v = vec![0.0; n];
                u[i] = 1.0;
                v[j] = 1.0;
                best = best.max(self.sectional(&u, &v));
            }
        }
        for (u, v) in extra {
            let s = self.sectional(u, v);
            if s.is_finite() {
                best = best.max(s);
            }
        }
        best
    }

    /// Ricci with one index raised, Ric^i_j.
    pub fn ricci_mixed(&self) -> DMatrix<f64> {
        self.metric.clone().cholesky().expect("metric").inverse() * &self.ricci
    }
}

fn christoffel_vec(m: &ChartManifold, x: &[f64], step: f64) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(christoffel(m, x, step)?.data))
}

/// Curvature at `x`; Christoffel symbols are differenced once more.
pub fn curvature(m: &ChartManifold, x: &[f64]) -> Result<CurvaturePack> {
    curvature_with_step(m, x, m.step)
}

pub fn curvature_with_step(m: &ChartManifold, x: &[f64], step: f64) -> Result<CurvaturePack> {
    let n = m.dim;
    let g0 = m.metric_at(x)?;
    let gam = christoffel(m, x, step)?;
    let f = |y: &[f64]| christoffel_vec(m, y, step);
    let dgam: Vec<DVector<f64>> = (0..n).map(|i| fd::d1(&f, x, i, step_at(step, x[i]))).collect::<Result<_>>()?;
    let idx = |k: usize, i: usize, j: usize| (k * n + i) * n + j;
    let mut riemann = vec![0.0; n * n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for k in 0..n {
                    let mut v = dgam[i][idx(l, j, k)] - dgam[j][idx(l, i, k)];
                    for mm in 0..n {
                        v += gam.get(l, i, mm) * gam.get(mm, j, k) - gam.get(l, j, mm) * gam.get(mm, i, k);
                    }
                    riemann[((l * n + i) * n + j) * n + k] = v;
                }
            }
        }
    }
    let mut ricci = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            ricci[(j, k)] = (0..n).map(|i| riemann[((i * n + i) * n + j) * n + k]).sum();
        }
    }
    let ricci = (&ricci + ricci.transpose()) * 0.5;
    let gi = g0.inverse();
    let scalar = (&gi * &ricci).trace();
    Ok(CurvaturePack { n, riemann, ricci, scalar, metric: g0.matrix().clone() })
}

/// Mixed Einstein tensor Ric^i_j − (R/2)δ^i_j.
pub fn einstein_mixed(m: &ChartManifold, x: &[f64]) -> Result<DMatrix<f64>> {
    let c = curvature(m, x)?;
    let n = m.dim;
    Ok(c.ricci_mixed() - DMatrix::identity(n, n) * (0.5 * c.scalar))
}

/// Mixed Schouten tensor Ric^i_j − R/(2(n−1)) δ^i_j.
pub fn schouten_mixed(m: &ChartManifold, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = m.dim;
    if n < 3 {
        return Err(Error::DimensionTooLow { what: "Schouten tensor", needed: 3, got: n });
    }
    let c = curvature(m, x)?;
    Ok(c.ricci_mixed() - DMatrix::identity(n, n) * (c.scalar / (2.0 * (n as f64 - 1.0))))
}

/// Contravariant gradient g^{ij}∂_j R of the scalar curvature.
pub fn scalar_curvature_gradient(m: &ChartManifold, x: &[f64]) -> Result<Vec<f64>> {
    let f = |y: &[f64]| curvature(m, y).map(|c| c.scalar);
    let d = fd::gradient(&f, x, m.step)?;
    let gi = m.metric_at(x)?.inverse();
    Ok((&gi * DVector::from_vec(d)).iter().copied().collect())
}

/// Both sides of the radial comparison for Δ_W(F∘r).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RadialCheck {
    pub lhs: f64,
    pub rhs_bound: f64,
}

/// Δ_W(F∘r)(x) and (F''−F'w'/w)⟨W∇r,∇r⟩ + tr(W)F'w'/w + F'⟨div W,∇r⟩.
pub fn hessian_radial_check(
    m: &ChartManifold,
    w: &ConductivityField,
    f: &Profile,
    warp: &Profile,
    x: &[f64],
) -> Result<RadialCheck> {
    let nr = m.grad_r(x)?;
    let r = m.distance(x)?;
    let g = m.metric_at(x)?;
    let mm = m.clone();
    let ff = f.clone();
    let u = move |y: &[f64]| mm.distance(y).map(|t| ff.value(t)).unwrap_or(f64::NAN);
    let lhs = laplace_w(m, w, &u, x)?;
    let w0 = w.mixed_at(x)?;
    let wnr = w0.apply(&nr);
    let wrr = g.inner(&wnr, &nr);
    let div = divergence_w(m, w, x)?;
    let divr = g.inner(&div, &nr);
    let (f1, f2) = (f.d1(r), f.d2(r));
    let eta = warp.d1(r) / warp.value(r);
    let rhs_bound = (f2 - f1 * eta) * wrr + w0.trace() * f1 * eta + f1 * divr;
    Ok(RadialCheck { lhs, rhs_bound })
}

/// Pulls a Cartesian 2D chart with a Cartesian pole back to polar
/// coordinates (r, θ) around the pole: g̃ = JᵀgJ and W̃ = J⁻¹WJ.
pub fn polar_pullback_2d(m: &ChartManifold, w: &ConductivityField) -> Result<(ChartManifold, ConductivityField)> {
    let center = match m.pole() {
        Some(Pole::Cartesian { center }) if m.dim == 2 => center.clone(),
        Some(Pole::Polar) => return Ok((m.clone(), w.clone())),
        _ => return Err(Error::MissingPole),
    };
    let to_cart = {
        let c = center.clone();
        move |y: &[f64]| -> (Vec<f64>, DMatrix<f64>) {
            let (r, t) = (y[0], y[1]);
            let (s, co) = t.sin_cos();
            let x = vec![c[0] + r * co, c[1] + r * s];
            let j = DMatrix::from_row_slice(2, 2, &[co, -r * s, s, r * co]);
            (x, j)
        }
    };
    let metric = m.metric_fn();
    let tc = to_cart.clone();
    let chart = ChartManifold::new(2, vec![(0.0, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)], move |y| {
        let (x, j) = tc(y);
        j.transpose() * metric(&x) * &j
    })
    .with_pole(Pole::Polar)
    .with_label(format!("{} (polar pullback)", m.label()))
    .with_step(m.step);
    let wf = w.func();
    let field = ConductivityField::new(2, w.label().to_string(), move |y| {
        let (x, j) = to_cart(y);
        let (r, t) = (y[0], y[1]);
        let (s, co) = t.sin_cos();
        let jinv = DMatrix::from_row_slice(2, 2, &[co, s, -s / r, co / r]);
        jinv * wf(&x) * j
    });
    Ok((chart, field))
}

/// Spectrum of W relative to g at `x`.
pub fn spectrum_at(m: &ChartManifold, w: &ConductivityField, x: &[f64]) -> Result<tensor::PointSpectrum> {
    tensor::eigen_stats(&w.mixed_at(x)?, &m.metric_at(x)?)
}
