// SPDX-License-Identifier: Apache-2.0

//! Named conductivities and metrics, each with machine-checkable claims.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::classifier::{CriterionSpec, CurvatureSide, Theorem, Theta};
use crate::error::{Error, Result};
use crate::geometry::{self, ChartManifold, ConductivityField, PointFn, Pole};
use crate::profile::Profile;
use crate::sampling::Halton;
use crate::tensor::{self, MetricAtPoint};

type ClaimFn = Arc<dyn Fn(&ChartManifold, &ConductivityField, &[f64]) -> Result<f64> + Send + Sync>;

/// A pointwise identity: `residual(x)` must stay below `tol`.
#[derive(Clone)]
pub struct Claim {
    pub description: String,
    pub tol: f64,
    residual: ClaimFn,
}

impl fmt::Debug for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Claim").field("description", &self.description).field("tol", &self.tol).finish()
    }
}

impl Claim {
    pub fn new(
        description: impl Into<String>,
        tol: f64,
        residual: impl Fn(&ChartManifold, &ConductivityField, &[f64]) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Claim { description: description.into(), tol, residual: Arc::new(residual) }
    }

    pub fn residual(&self, m: &ChartManifold, w: &ConductivityField, x: &[f64]) -> Result<f64> {
        (self.residual)(m, w, x)
    }
}

/// Radii between which self-tests sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Region {
    pub r_min: f64,
    pub r_max: f64,
}

/// A conductivity on its chart together with its claims.
#[derive(Clone, Debug)]
pub struct NamedConductivity {
    pub name: String,
    pub chart: ChartManifold,
    pub field: ConductivityField,
    pub claims: Vec<Claim>,
    pub region: Region,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClaimResult {
    pub description: String,
    pub worst_residual: f64,
    pub tol: f64,
    pub witness: Vec<f64>,
    pub passed: bool,
}

impl NamedConductivity {
    pub fn sample_points(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let k = self.chart.direction_params();
        let h = Halton::new(1 + k, seed);
        let Region { r_min, r_max } = self.region;
        (0..count)
            .map(|i| {
                let u = h.point(i);
                let r = r_min + (r_max - r_min) * u[0];
                self.chart.point_at(r, &u[1..])
            })
            .collect()
    }

    /// Checks every claim and the validity of W at `count` points.
    pub fn self_test(&self, count: usize, seed: u64) -> Result<Vec<ClaimResult>> {
        let pts = self.sample_points(count, seed)?;
        let mut out = Vec::with_capacity(self.claims.len() + 1);
        for x in &pts {
            geometry::spectrum_at(&self.chart, &self.field, x)?;
        }
        out.push(ClaimResult {
            description: "W self-adjoint and positive definite".into(),
            worst_residual: 0.0,
            tol: 0.0,
            witness: vec![],
            passed: true,
        });
        for c in &self.claims {
            let mut worst = 0.0_f64;
            let mut witness = vec![];
            for x in &pts {
                let v = c.residual(&self.chart, &self.field, x)?;
                if !(v <= worst) {
                    worst = v;
                    witness = x.clone();
                }
            }
            out.push(ClaimResult {
                description: c.description.clone(),
                worst_residual: worst,
                tol: c.tol,
                witness,
                passed: worst < c.tol,
            });
        }
        Ok(out)
    }
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// ⟨W∇r,∇r⟩ at `x`.
pub fn radial_component(m: &ChartManifold, w: &ConductivityField, x: &[f64]) -> Result<f64> {
    let nr = m.grad_r(x)?;
    let g = m.metric_at(x)?;
    Ok(g.inner(&w.mixed_at(x)?.apply(&nr), &nr))
}

/// W_{λ,α} = e^{α(x²+y²)} [[λ+1, λ−1], [λ−1, λ+1]] on Euclidean R².
pub fn w_lambda_alpha_field(lambda: f64, alpha: f64) -> ConductivityField {
    ConductivityField::new(2, format!("W_{{lambda={lambda}, alpha={alpha}}}"), move |x| {
        let e = (alpha * (x[0] * x[0] + x[1] * x[1])).exp();
        DMatrix::from_row_slice(2, 2, &[lambda + 1.0, lambda - 1.0, lambda - 1.0, lambda + 1.0]) * e
    })
}

pub fn w_lambda_alpha(lambda: f64, alpha: f64) -> Result<NamedConductivity> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let claims = vec![
        Claim::new("eigenvalues are 2e^{ar^2} and 2*lambda*e^{ar^2}", 1e-12, move |m, w, x| {
            let s = geometry::spectrum_at(m, w, x)?;
            let e = (alpha * sq_norm(x)).exp();
            let mut want = [2.0 * e, 2.0 * lambda * e];
            want.sort_by(f64::total_cmp);
            Ok(((s.eigenvalues[0] - want[0]).abs() + (s.eigenvalues[1] - want[1]).abs()) / want[1])
        }),
        Claim::new("<W grad r, grad r> = e^{ar^2}(lambda+1+(2xy/r^2)(lambda-1))", 1e-12, move |m, w, x| {
            let r2 = sq_norm(x);
            let want = (alpha * r2).exp() * (lambda + 1.0 + 2.0 * x[0] * x[1] / r2 * (lambda - 1.0));
            Ok((radial_component(m, w, x)? - want).abs() / want)
        }),
        Claim::new("<div W, grad r> = 2 alpha r <W grad r, grad r>", 1e-6, move |m, w, x| {
            let div = geometry::divergence_w(m, w, x)?;
            let nr = m.grad_r(x)?;
            let r = m.distance(x)?;
            let lhs: f64 = div.iter().zip(&nr).map(|(a, b)| a * b).sum();
            let wrr = radial_component(m, w, x)?;
            Ok((lhs - 2.0 * alpha * r * wrr).abs() / (wrr * (1.0 + r)))
        }),
    ];
    Ok(NamedConductivity {
        name: format!("w_lambda_alpha(lambda={lambda}, alpha={alpha})"),
        chart: ChartManifold::euclidean(2),
        field: w_lambda_alpha_field(lambda, alpha),
        claims,
        region: Region { r_min: 0.5, r_max: 4.0 },
    })
}

/// Certificate for W_{λ,α} on Euclidean R² with w = r and ρ = 1.
///
/// α > 0: main comparison, q = 1, θ = 2αr, upper side.
/// α < 0: main comparison, q = 1 + max(λ, 1/λ) (the largest sampled
/// tr W/⟨W∇r,∇r⟩), θ = 2αr, lower side.
/// α = 0: bounded eigenvalues, transferring the plane's parabolicity.
pub fn w_lambda_alpha_spec(lambda: f64, alpha: f64) -> CriterionSpec {
    let theta = Theta::Affine { a: 0.0, b: 2.0 * alpha };
    let build = |q: f64, theta: Theta, side: CurvatureSide| {
        CriterionSpec::new(Theorem::MainComparison, Profile::identity(), q, theta, 1.0, side).expect("valid constants")
    };
    if alpha > 0.0 {
        build(1.0, theta, CurvatureSide::UpperBound)
    } else if alpha < 0.0 {
        build(1.0 + lambda.max(1.0 / lambda), theta, CurvatureSide::LowerBound)
    } else {
        CriterionSpec::bounded_eigen(build(2.0, Theta::Zero, CurvatureSide::LowerBound))
    }
}

/// W = Σ f_i(x_n) ∂_i⊗dx^i + c ∂_n⊗dx^n on Euclidean R^n.
pub fn rn_divfree(f_list: Vec<Profile>, c: f64) -> Result<NamedConductivity> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    let n = f_list.len() + 1;
    let label = format!("diag({}; {c})", f_list.iter().map(|f| f.label().to_string()).collect::<Vec<_>>().join(", "));
    let fs = f_list.clone();
    let field = ConductivityField::new(n, label.clone(), move |x| {
        let t = x[n - 1];
        let mut d: Vec<f64> = fs.iter().map(|f| f.value(t)).collect();
        d.push(c);
        DMatrix::from_diagonal(&DVector::from_vec(d))
    });
    let claims = vec![
        Claim::new("div W = 0", 1e-8, |m, w, x| {
            let d = geometry::divergence_w(m, w, x)?;
            Ok(sq_norm(&d).sqrt())
        }),
        Claim::new("mean eigenvalue = (sum f_i + c)/n", 1e-12, move |m, w, x| {
            let s = geometry::spectrum_at(m, w, x)?;
            let want = (f_list.iter().map(|f| f.value(x[n - 1])).sum::<f64>() + c) / n as f64;
            Ok((s.mean - want).abs() / want)
        }),
    ];
    Ok(NamedConductivity {
        name: label,
        chart: ChartManifold::euclidean(n),
        field,
        claims,
        region: Region { r_min: 0.5, r_max: 4.0 },
    })
}

/// Closed form of cv for the R⁶ example at height x₆.
pub fn r6_cv(x6: f64) -> f64 {
    let e = (x6 * x6).exp();
    let e2 = (2.0 * x6 * x6).exp();
    (e - 1.0) * (5.0 + 8.0 * e + 8.0 * e2).sqrt() / (1.0 + e + 4.0 * e2)
}

/// The divergence-free conductivity on Euclidean R⁶ with diagonal
/// (e^{x₆²}, e^{−x₆²}, e^{x₆²}, e^{x₆²}, e^{x₆²}, 1).
pub fn r6_example() -> NamedConductivity {
    let ep = || Profile::new("e^{t^2}", |t: f64| (t * t).exp());
    let em = Profile::new("e^{-t^2}", |t: f64| (-t * t).exp());
    let mut nc = rn_divfree(vec![ep(), em, ep(), ep(), ep()], 1.0).expect("positive c");
    nc.name = "r6".into();
    nc.claims.push(Claim::new("cv matches its closed form", 1e-12, |m, w, x| {
        let s = geometry::spectrum_at(m, w, x)?;
        Ok((s.cv - r6_cv(x[5])).abs())
    }));
    nc.claims.push(Claim::new("cv <= sqrt(1/2)", 1e-9, |m, w, x| {
        let s = geometry::spectrum_at(m, w, x)?;
        Ok(s.cv - 0.5f64.sqrt())
    }));
    nc
}

/// Mixed tensor field built from a fallible pointwise evaluator; failures
/// surface as non-finite entries and are reported by [`ConductivityField::at`].
fn fallible_field(n: usize, label: String, f: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static) -> ConductivityField {
    ConductivityField::new(n, label, move |x| f(x).unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN)))
}

/// Schouten tensor Ric − R/(2(n−1)) g as a (1,1) field.
pub fn schouten(m: &ChartManifold) -> Result<ConductivityField> {
    let n = m.dim();
    if n < 3 {
        return Err(Error::DimensionTooLow { what: "Schouten tensor", needed: 3, got: n });
    }
    let mm = m.clone();
    Ok(fallible_field(n, format!("Schouten({})", m.label()), move |x| geometry::schouten_mixed(&mm, x)))
}

/// Einstein tensor Ric − (R/2) g as a (1,1) field.
pub fn einstein(m: &ChartManifold) -> ConductivityField {
    let mm = m.clone();
    fallible_field(m.dim(), format!("Einstein({})", m.label()), move |x| geometry::einstein_mixed(&mm, x))
}

/// Claims shared by the curvature-derived tensors.
pub fn schouten_claims() -> Vec<Claim> {
    vec![Claim::new("tr S = (n-2)R/(2(n-1))", 1e-6, |m, w, x| {
        let n = m.dim() as f64;
        let c = geometry::curvature(m, x)?;
        Ok((w.at(x)?.trace() - (n - 2.0) * c.scalar / (2.0 * (n - 1.0))).abs() / (1.0 + c.scalar.abs()))
    })]
}

pub fn einstein_claims() -> Vec<Claim> {
    vec![Claim::new("tr E = -(n/2 - 1)R", 1e-6, |m, w, x| {
        let n = m.dim() as f64;
        let c = geometry::curvature(m, x)?;
        Ok((w.at(x)?.trace() + (n / 2.0 - 1.0) * c.scalar).abs() / (1.0 + c.scalar.abs()))
    })]
}

/// Einstein tensor of the hyperbolic space H^n in geodesic normal coordinates.
///
/// The field is a third derivative of the metric, so its divergence is a
/// fourth; a step of 5e-3 balances truncation and rounding, and past r ≈ 3 the
/// e^{2r} growth of the metric puts ‖div E‖ above 1e-8 whatever the step.
pub fn einstein_hyperbolic(n: usize) -> NamedConductivity {
    let chart = ChartManifold::normal_coordinates(n, Profile::space_form(-1.0)).with_step(5e-3);
    NamedConductivity {
        name: format!("einstein(H^{n})"),
        field: einstein(&chart),
        chart,
        claims: einstein_claims(),
        region: Region { r_min: 1.0, r_max: 3.0 },
    }
}

/// A steady gas state (mass density, velocity, pressure) on Euclidean R^n.
#[derive(Clone)]
pub struct GasState {
    pub n: usize,
    pub density: PointFn<f64>,
    pub velocity: PointFn<Vec<f64>>,
    pub pressure: PointFn<f64>,
    pub label: String,
}

impl fmt::Debug for GasState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GasState").field("label", &self.label).field("n", &self.n).finish()
    }
}

impl GasState {
    /// Rigid rotation about the x₃ axis in R³: u = ω(−y, x, 0),
    /// p = p₀ + ρω²(x² + y²)/2.
    pub fn rigid_rotation(omega: f64, density: f64, p0: f64) -> GasState {
        GasState {
            n: 3,
            density: Arc::new(move |_| density),
            velocity: Arc::new(move |x| vec![-omega * x[1], omega * x[0], 0.0]),
            pressure: Arc::new(move |x| p0 + 0.5 * density * omega * omega * (x[0] * x[0] + x[1] * x[1])),
            label: format!("rigid rotation (omega={omega})"),
        }
    }

    /// Planar source flow u = k x/|x|², p = p₀ − ρk²/(2|x|²).
    pub fn source_flow(k: f64, density: f64, p0: f64) -> GasState {
        GasState {
            n: 2,
            density: Arc::new(move |_| density),
            velocity: Arc::new(move |x| {
                let r2 = sq_norm(x);
                vec![k * x[0] / r2, k * x[1] / r2]
            }),
            pressure: Arc::new(move |x| p0 - density * k * k / (2.0 * sq_norm(x))),
            label: format!("source flow (k={k})"),
        }
    }

    /// cos² of the angle between u and ∇r.
    pub fn cos2_angle(&self, x: &[f64]) -> f64 {
        let u = (self.velocity)(x);
        let nu = sq_norm(&u);
        let nx = sq_norm(x);
        if nu == 0.0 || nx == 0.0 {
            return 0.0;
        }
        let d: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
        d * d / (nu * nx)
    }
}

/// A = ρ u⊗u + p I.
pub fn gas_tensor(state: GasState) -> NamedConductivity {
    let n = state.n;
    let s = state.clone();
    let field = ConductivityField::new(n, format!("gas[{}]", state.label), move |x| {
        let u = DVector::from_vec((s.velocity)(x));
        &u * u.transpose() * (s.density)(x) + DMatrix::identity(n, n) * (s.pressure)(x)
    });
    let s1 = state.clone();
    let s2 = state.clone();
    let claims = vec![
        Claim::new("<A grad r, grad r> = rho <u, grad r>^2 + p", 1e-12, move |m, w, x| {
            let nr = m.grad_r(x)?;
            let u = (s1.velocity)(x);
            let d: f64 = u.iter().zip(&nr).map(|(a, b)| a * b).sum();
            let want = (s1.density)(x) * d * d + (s1.pressure)(x);
            Ok((radial_component(m, w, x)? - want).abs() / want.abs().max(1.0))
        }),
        Claim::new("tr A = rho |u|^2 + n p", 1e-12, move |_m, w, x| {
            let want = (s2.density)(x) * sq_norm(&(s2.velocity)(x)) + n as f64 * (s2.pressure)(x);
            Ok((w.at(x)?.trace() - want).abs() / want.abs().max(1.0))
        }),
        Claim::new("div A = 0 (steady Euler)", 1e-8, |m, w, x| {
            let d = geometry::divergence_w(m, w, x)?;
            let kappa = geometry::spectrum_at(m, w, x)?.kappa();
            Ok(sq_norm(&d).sqrt() / kappa)
        }),
    ];
    NamedConductivity {
        name: format!("gas[{}]", state.label),
        chart: ChartManifold::euclidean(n),
        field,
        claims,
        region: Region { r_min: 1.0, r_max: 8.0 },
    }
}

/// Conformal factor of the equivalent metric.
#[derive(Clone)]
pub enum EquivalentFactor {
    /// n > 2: F = f·(det W)^{1/(n−2)} with f bounded.
    Bounded(PointFn<f64>),
    /// n = 2: F = e^h.
    Exponential(PointFn<f64>),
}

impl fmt::Debug for EquivalentFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EquivalentFactor::Bounded(_) => f.write_str("Bounded(f)"),
            EquivalentFactor::Exponential(_) => f.write_str("Exponential(h)"),
        }
    }
}

fn equivalent_factor(factor: &EquivalentFactor, n: usize, w: &DMatrix<f64>, x: &[f64]) -> f64 {
    match factor {
        EquivalentFactor::Bounded(f) => f(x) * w.determinant().powf(1.0 / (n as f64 - 2.0)),
        EquivalentFactor::Exponential(h) => h(x).exp(),
    }
}

/// G_ik = F g_ij (W⁻¹)^j_k; W-capacity on (M, g) and capacity on (M, G) are
/// comparable.
pub fn equivalent_metric(m: &ChartManifold, w: &ConductivityField, factor: EquivalentFactor) -> Result<ChartManifold> {
    let n = m.dim();
    match (&factor, n) {
        (EquivalentFactor::Bounded(_), k) if k <= 2 => {
            return Err(Error::DimensionTooLow { what: "equivalent metric with bounded factor", needed: 3, got: n })
        }
        (EquivalentFactor::Exponential(_), k) if k != 2 => {
            return Err(Error::InvalidParameter("exponential factor is the two-dimensional branch".into()))
        }
        _ => {}
    }
    let metric = m.metric_fn();
    let wf = w.func();
    let mut out = ChartManifold::new(n, m.bounds().to_vec(), move |x| {
        let g = metric(x);
        let wm = wf(x);
        let f = equivalent_factor(&factor, n, &wm, x);
        let gi = match wm.clone().try_inverse() {
            Some(inv) => &g * inv * f,
            None => return DMatrix::from_element(n, n, f64::NAN),
        };
        (&gi + gi.transpose()) * 0.5
    })
    .with_label(format!("equivalent metric of ({}, {})", m.label(), w.label()))
    .with_step(m.step());
    if let Some(p) = m.pole() {
        if matches!(p, Pole::Cartesian { .. }) {
            out = out.with_pole(p.clone());
        }
    }
    Ok(out)
}

/// Both sides of the energy-density identity at `x` for covector `dphi`:
/// G(∇^Gφ, ∇^Gφ)√det G and F^{(n−2)/2}(det W)^{−1/2} g(∇φ, W∇φ)√det g.
pub fn equivalent_density_sides(
    m: &ChartManifold,
    w: &ConductivityField,
    big_g: &ChartManifold,
    factor: &EquivalentFactor,
    x: &[f64],
    dphi: &[f64],
) -> Result<(f64, f64)> {
    let n = m.dim();
    let d = DVector::from_column_slice(dphi);
    let gg = big_g.metric_at(x)?;
    let lhs = (d.transpose() * gg.inverse() * &d)[(0, 0)] * gg.matrix().determinant().sqrt();
    let g = m.metric_at(x)?;
    let wm = w.at(x)?;
    let f = equivalent_factor(factor, n, &wm, x);
    let energy = (d.transpose() * &wm * g.inverse() * &d)[(0, 0)] * g.matrix().determinant().sqrt();
    let rhs = f.powf((n as f64 - 2.0) / 2.0) * wm.determinant().powf(-0.5) * energy;
    Ok((lhs, rhs))
}

/// Validates W against g at `x` and reports whether it is positive definite.
pub fn is_positive_definite(m: &ChartManifold, w: &ConductivityField, x: &[f64]) -> Result<bool> {
    let g: MetricAtPoint = m.metric_at(x)?;
    match tensor::validate_conductivity(&w.mixed_at(x)?, &g, tensor::SA_TOL) {
        Ok(_) => Ok(true),
        Err(Error::NotPositiveDefinite { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Every registered conductivity, for scenario files.
pub fn registry_names() -> &'static [&'static str] {
    &["identity", "scaled_identity", "w_lambda_alpha", "rn_divfree", "r6", "schouten", "einstein", "gas_rotation", "gas_source", "isotropic"]
}
