// SPDX-License-Identifier: Apache-2.0

//! Immersed submanifolds: induced geometry, W-compatibility, the W-mean
//! curvature vector and the extrinsic classification criteria.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::classifier::{
    self, ClassificationReport, CriterionSpec, CurvatureSide, Needs, PointData, ReplayOutcome, ReplayRow, SampleSet,
    Theorem, Theta, FD_SLACK, MARGIN_FLOOR, ROUNDING_FACTOR,
};
use crate::error::{Error, Result};
use crate::fd::{self, step_at, DEFAULT_STEP};
use crate::geometry::{self, ChartManifold, ConductivityField, PointFn, RadialCheck};
use crate::par;
use crate::profile::Profile;
use crate::sampling::Halton;
use crate::tensor::{MetricAtPoint, PointSpectrum};

/// Candidate parameter points drawn per accepted sample before giving up.
const CANDIDATE_FACTOR: usize = 64;

type Immersion = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Σ^m ⊂ M^n given by a parametrization on an open parameter domain.
#[derive(Clone)]
pub struct ImmersedSubmanifold {
    m: usize,
    ambient: ChartManifold,
    immersion: Immersion,
    domain: Vec<(f64, f64)>,
    sample_box: Vec<(f64, f64)>,
    normal_hint: Option<PointFn<Vec<f64>>>,
    step: f64,
    label: String,
}

impl fmt::Debug for ImmersedSubmanifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImmersedSubmanifold")
            .field("label", &self.label)
            .field("m", &self.m)
            .field("ambient", &self.ambient)
            .finish()
    }
}

impl ImmersedSubmanifold {
    /// `domain` is where the parametrization may be evaluated (stencils
    /// included); the sample box defaults to it and must be finite for
    /// sampling.
    pub fn new(
        m: usize,
        ambient: ChartManifold,
        domain: Vec<(f64, f64)>,
        immersion: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if m == 0 || m >= ambient.dim() {
            return Err(Error::InvalidParameter(format!(
                "submanifold dimension {m} must lie in [1, {})",
                ambient.dim()
            )));
        }
        if domain.len() != m {
            return Err(Error::DimensionMismatch { left: domain.len(), right: m });
        }
        Ok(ImmersedSubmanifold {
            m,
            ambient,
            immersion: Arc::new(immersion),
            sample_box: domain.clone(),
            domain,
            normal_hint: None,
            step: DEFAULT_STEP,
            label: "submanifold".into(),
        })
    }

    pub fn with_sample_box(mut self, sample_box: Vec<(f64, f64)>) -> Self {
        assert_eq!(sample_box.len(), self.m, "one interval per parameter");
        self.sample_box = sample_box;
        self
    }

    /// Ambient vector field (evaluated at the ambient point) that the unit
    /// normal of a hypersurface should point along.
    pub fn with_normal_hint(mut self, hint: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.normal_hint = Some(Arc::new(hint));
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn codim(&self) -> usize {
        self.ambient.dim() - self.m
    }

    pub fn ambient(&self) -> &ChartManifold {
        &self.ambient
    }

    pub fn sample_box(&self) -> &[(f64, f64)] {
        &self.sample_box
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.m && u.iter().zip(&self.domain).all(|(v, (lo, hi))| v > lo && v < hi)
    }

    /// Ambient chart point of the parameter `u`.
    pub fn point(&self, u: &[f64]) -> Result<Vec<f64>> {
        if !self.contains(u) {
            return Err(Error::StencilOutOfDomain { point: u.to_vec() });
        }
        let x = (self.immersion)(u);
        if x.len() != self.ambient.dim() {
            return Err(Error::DimensionMismatch { left: x.len(), right: self.ambient.dim() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "immersion", point: u.to_vec() });
        }
        Ok(x)
    }

    fn point_vec(&self, u: &[f64]) -> Result<DVector<f64>> {
        self.point(u).map(DVector::from_vec)
    }

    /// ∂X/∂u as an n×m matrix.
    pub fn jacobian(&self, u: &[f64], step: f64) -> Result<DMatrix<f64>> {
        let f = |v: &[f64]| self.point_vec(v);
        let mut j = DMatrix::zeros(self.ambient.dim(), self.m);
        for a in 0..self.m {
            let col: DVector<f64> = fd::d1(&f, u, a, step_at(step, u[a]))?;
            j.set_column(a, &col);
        }
        Ok(j)
    }

    fn second_derivatives(&self, u: &[f64], step: f64) -> Result<Vec<Vec<DVector<f64>>>> {
        let f = |v: &[f64]| self.point_vec(v);
        let m = self.m;
        let x0 = f(u)?;
        let mut out = vec![vec![DVector::zeros(x0.len()); m]; m];
        for a in 0..m {
            let ha = step_at(step, u[a]);
            let at = |d: f64| {
                let mut v = u.to_vec();
                v[a] += d;
                f(&v)
            };
            out[a][a] = (at(-2.0 * ha)? * -1.0 + at(ha)? * 16.0 - &x0 * 30.0 + at(-ha)? * 16.0 - at(2.0 * ha)?)
                * (1.0 / (12.0 * ha * ha));
            for b in 0..a {
                let hb = step_at(step, u[b]);
                let inner = |v: &[f64]| fd::d1(&f, v, b, hb);
                let val: DVector<f64> = fd::d1(&inner, u, a, ha)?;
                out[b][a] = val.clone();
                out[a][b] = val;
            }
        }
        Ok(out)
    }

    /// Induced metric JᵀgJ in parameter coordinates.
    pub fn induced_metric(&self, u: &[f64], step: f64) -> Result<DMatrix<f64>> {
        let x = self.point(u)?;
        let g = self.ambient.metric_matrix(&x)?;
        let j = self.jacobian(u, step)?;
        Ok(j.transpose() * g * j)
    }

    /// The parameter domain with the induced metric, differenced at `step`.
    pub fn parameter_chart(&self, step: f64) -> ChartManifold {
        let me = self.clone();
        let m = self.m;
        ChartManifold::new(m, self.domain.clone(), move |u| {
            me.induced_metric(u, step).unwrap_or_else(|_| DMatrix::from_element(m, m, f64::NAN))
        })
        .with_label(format!("{} (induced)", self.label))
        .with_step(step)
    }

    /// Tangential part of W in parameter coordinates: h⁻¹JᵀgWJ.
    pub fn induced_conductivity(&self, w: &ConductivityField, u: &[f64], step: f64) -> Result<DMatrix<f64>> {
        let x = self.point(u)?;
        let g = self.ambient.metric_matrix(&x)?;
        let j = self.jacobian(u, step)?;
        let gj = &g * &j;
        let h = j.transpose() * &gj;
        let hc = h.cholesky().ok_or_else(|| Error::RankDeficient { point: u.to_vec() })?;
        Ok(hc.solve(&(gj.transpose() * w.at(&x)? * j)))
    }

    /// The induced conductivity as a field on the parameter chart.
    pub fn induced_field(&self, w: &ConductivityField, step: f64) -> ConductivityField {
        let me = self.clone();
        let wf = w.clone();
        let m = self.m;
        ConductivityField::new(m, format!("{}^Sigma", w.label()), move |u| {
            me.induced_conductivity(&wf, u, step).unwrap_or_else(|_| DMatrix::from_element(m, m, f64::NAN))
        })
    }
}

fn ginner(g: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (g * v).dot(u)
}

fn gnorm(g: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    ginner(g, u, u).max(0.0).sqrt()
}

/// Extrinsic data at one parameter point. Vectors are in ambient chart
/// components.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtrinsicFrame {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    /// Ambient metric at x.
    pub metric: DMatrix<f64>,
    pub jacobian: DMatrix<f64>,
    /// Column i holds the parameter components of e_i.
    pub coframe: DMatrix<f64>,
    pub tangent: Vec<DVector<f64>>,
    pub normal: Vec<DVector<f64>>,
    /// B(e_i, e_j).
    pub second_form: Vec<Vec<DVector<f64>>>,
    pub mean_curvature: DVector<f64>,
    /// ⟨A e_i, e_j⟩ = ⟨B(e_i, e_j), N⟩ for hypersurfaces.
    pub shape_operator: Option<DMatrix<f64>>,
}

impl ExtrinsicFrame {
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        ginner(&self.metric, u, v)
    }

    pub fn norm(&self, u: &DVector<f64>) -> f64 {
        gnorm(&self.metric, u)
    }

    pub fn tangent_part(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for e in &self.tangent {
            out += e * self.inner(v, e);
        }
        out
    }

    pub fn normal_part(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for e in &self.normal {
            out += e * self.inner(v, e);
        }
        out
    }

    /// Frame components ⟨v, e_i⟩.
    pub fn tangent_components(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.tangent.len(), self.tangent.iter().map(|e| self.inner(v, e)))
    }
}

/// Orthonormalizes `v` against `basis` (two passes) and returns the residual.
fn project_out(g: &DMatrix<f64>, v: &DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    let mut r = v.clone();
    for _ in 0..2 {
        for e in basis {
            let p = ginner(g, &r, e);
            r -= e * p;
        }
    }
    r
}

pub fn extrinsic_frame(s: &ImmersedSubmanifold, u: &[f64]) -> Result<ExtrinsicFrame> {
    extrinsic_frame_with_step(s, u, s.step)
}

/// Gram–Schmidt tangent frame, normal complement and second fundamental form
/// B(X, Y) = (∇_X Y)^⊥, all differenced at `step`.
pub fn extrinsic_frame_with_step(s: &ImmersedSubmanifold, u: &[f64], step: f64) -> Result<ExtrinsicFrame> {
    let (m, n) = (s.m, s.ambient.dim());
    let x = s.point(u)?;
    let g = s.ambient.metric_at(&x)?.matrix().clone();
    let j = s.jacobian(u, step)?;
    let mut tangent: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut coframe = DMatrix::zeros(m, m);
    for a in 0..m {
        let col = j.column(a).into_owned();
        let n0 = gnorm(&g, &col);
        let mut v = col;
        let mut c = DVector::zeros(m);
        c[a] = 1.0;
        for _ in 0..2 {
            for (i, e) in tangent.iter().enumerate() {
                let p = ginner(&g, &v, e);
                v -= e * p;
                c -= coframe.column(i) * p;
            }
        }
        let nv = gnorm(&g, &v);
        if !(nv > 1e-10 * n0) || !nv.is_finite() {
            return Err(Error::RankDeficient { point: u.to_vec() });
        }
        tangent.push(v / nv);
        coframe.set_column(a, &(c / nv));
    }
    let mut normal: Vec<DVector<f64>> = Vec::with_capacity(n - m);
    for _ in 0..n - m {
        let mut basis = tangent.clone();
        basis.extend(normal.iter().cloned());
        let mut best: Option<(f64, DVector<f64>)> = None;
        for k in 0..n {
            let mut ek = DVector::zeros(n);
            ek[k] = 1.0;
            let r = project_out(&g, &ek, &basis);
            let nr = gnorm(&g, &r);
            if best.as_ref().map_or(true, |(b, _)| nr > *b) {
                best = Some((nr, r));
            }
        }
        let (nr, r) = best.expect("n > 0");
        normal.push(r / nr);
    }
    if n - m == 1 {
        let flip = match &s.normal_hint {
            Some(hint) => ginner(&g, &normal[0], &DVector::from_vec(hint(&x))) < 0.0,
            None => {
                let mut frame = DMatrix::zeros(n, n);
                frame.view_mut((0, 0), (n, m)).copy_from(&j);
                frame.set_column(m, &normal[0]);
                frame.determinant() < 0.0
            }
        };
        if flip {
            normal[0] = -normal[0].clone();
        }
    }
    let gam = geometry::christoffel(&s.ambient, &x, s.ambient.step())?;
    let xab = s.second_derivatives(u, step)?;
    let mut b_param = vec![vec![DVector::zeros(n); m]; m];
    for a in 0..m {
        for b in a..m {
            let mut v = xab[a][b].clone();
            for k in 0..n {
                let mut acc = 0.0;
                for p in 0..n {
                    for q in 0..n {
                        acc += gam.get(k, p, q) * j[(p, a)] * j[(q, b)];
                    }
                }
                v[k] += acc;
            }
            let mut perp = DVector::zeros(n);
            for e in &normal {
                perp += e * ginner(&g, &v, e);
            }
            b_param[a][b] = perp.clone();
            b_param[b][a] = perp;
        }
    }
    let mut second_form = vec![vec![DVector::zeros(n); m]; m];
    for i in 0..m {
        for k in i..m {
            let mut v = DVector::zeros(n);
            for a in 0..m {
                for b in 0..m {
                    v += &b_param[a][b] * (coframe[(a, i)] * coframe[(b, k)]);
                }
            }
            second_form[i][k] = v.clone();
            second_form[k][i] = v;
        }
    }
    let mut mean_curvature = DVector::zeros(n);
    for (i, row) in second_form.iter().enumerate() {
        mean_curvature += &row[i];
    }
    mean_curvature /= m as f64;
    let shape_operator = (n - m == 1).then(|| DMatrix::from_fn(m, m, |i, k| ginner(&g, &second_form[i][k], &normal[0])));
    Ok(ExtrinsicFrame {
        u: u.to_vec(),
        x,
        metric: g,
        jacobian: j,
        coframe,
        tangent,
        normal,
        second_form,
        mean_curvature,
        shape_operator,
    })
}

/// Relative defects of W(TΣ) ⊂ TΣ and W(TΣ^⊥) ⊂ TΣ^⊥.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Compatibility {
    /// max_i ‖(W e_i)^⊥‖ over the largest ‖W v‖ in the frame.
    pub tangent_defect: f64,
    /// max_k ‖(W ν_k)^T‖ over the same scale.
    pub normal_defect: f64,
    pub compatible: bool,
}

impl Compatibility {
    pub fn worst(&self) -> f64 {
        self.tangent_defect.max(self.normal_defect)
    }
}

fn compatibility_at(frame: &ExtrinsicFrame, w: &DMatrix<f64>, tol: f64) -> Compatibility {
    let scale = frame
        .tangent
        .iter()
        .chain(&frame.normal)
        .map(|v| frame.norm(&(w * v)))
        .fold(0.0, f64::max);
    let rel = |d: f64| if scale > 0.0 { d / scale } else { 0.0 };
    let tangent_defect =
        frame.tangent.iter().map(|e| rel(frame.norm(&frame.normal_part(&(w * e))))).fold(0.0, f64::max);
    let normal_defect =
        frame.normal.iter().map(|v| rel(frame.norm(&frame.tangent_part(&(w * v))))).fold(0.0, f64::max);
    Compatibility { tangent_defect, normal_defect, compatible: tangent_defect < tol && normal_defect < tol }
}

pub fn w_compatibility(s: &ImmersedSubmanifold, w: &ConductivityField, u: &[f64], tol: f64) -> Result<Compatibility> {
    let frame = extrinsic_frame(s, u)?;
    Ok(compatibility_at(&frame, &w.at(&frame.x)?, tol))
}

/// W-mean curvature vector with the data of both defining formulas.
#[derive(Clone, Debug, PartialEq)]
pub struct WMeanCurvature {
    /// H_W: the mean of both formulas divided by m.
    pub vector: DVector<f64>,
    pub tangential: DVector<f64>,
    pub normal: DVector<f64>,
    /// m·H_W = W(mH) + tr_Σ(∇W).
    pub formula_trace: DVector<f64>,
    /// m·H_W = Σ B(e_i, W e_i) + div^Σ(W^Σ).
    pub formula_divergence: DVector<f64>,
    pub mismatch: f64,
    pub allowed: f64,
    /// Step-doubling error bound on m·H_W (either formula).
    pub error: f64,
}

/// m·W(H) + Σ_i (∇_{e_i}W)(e_i), differentiating W along Σ only.
fn formula_trace(s: &ImmersedSubmanifold, w: &ConductivityField, f: &ExtrinsicFrame, step: f64) -> Result<DVector<f64>> {
    let (m, n) = (s.m, s.ambient.dim());
    let u = &f.u;
    let w0 = w.at(&f.x)?;
    let gam = geometry::christoffel(&s.ambient, &f.x, s.ambient.step())?;
    let wf = |v: &[f64]| -> Result<DMatrix<f64>> { w.at(&s.point(v)?) };
    let dw: Vec<DMatrix<f64>> = (0..m).map(|a| fd::d1(&wf, u, a, step_at(step, u[a]))).collect::<Result<_>>()?;
    let mut out = &w0 * (&f.mean_curvature * m as f64);
    for (i, e) in f.tangent.iter().enumerate() {
        let mut cov = DMatrix::zeros(n, n);
        for (a, d) in dw.iter().enumerate() {
            cov += d * f.coframe[(a, i)];
        }
        for k in 0..n {
            for jj in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    if e[l] == 0.0 {
                        continue;
                    }
                    for p in 0..n {
                        acc += e[l] * (gam.get(k, l, p) * w0[(p, jj)] - gam.get(p, l, jj) * w0[(k, p)]);
                    }
                }
                cov[(k, jj)] += acc;
            }
        }
        out += cov * e;
    }
    Ok(out)
}

/// Σ_i B(e_i, W e_i) + div^Σ(W^Σ), with the divergence taken on the
/// parameter chart.
fn formula_divergence(
    s: &ImmersedSubmanifold,
    w: &ConductivityField,
    f: &ExtrinsicFrame,
    step: f64,
) -> Result<DVector<f64>> {
    let n = s.ambient.dim();
    let w0 = w.at(&f.x)?;
    let mut out = DVector::zeros(n);
    for (i, e) in f.tangent.iter().enumerate() {
        let t = f.tangent_components(&(&w0 * e));
        for (k, tk) in t.iter().enumerate() {
            out += &f.second_form[i][k] * *tk;
        }
    }
    let chart = s.parameter_chart(step);
    let wf = |v: &[f64]| s.induced_conductivity(w, v, step);
    let div = geometry::divergence_with_step(&chart, &wf, &f.u, step)?;
    out += &f.jacobian * DVector::from_vec(div);
    Ok(out)
}

fn frame_scale(f: &ExtrinsicFrame, w0: &DMatrix<f64>) -> f64 {
    f.tangent.iter().chain(&f.normal).map(|v| f.norm(&(w0 * v))).fold(0.0, f64::max)
}

/// H_W from both formulas; errors with `FormulaMismatch` when they differ by
/// more than ten times their differencing error.
pub fn w_mean_curvature(s: &ImmersedSubmanifold, w: &ConductivityField, u: &[f64]) -> Result<WMeanCurvature> {
    let h = s.step;
    let f1 = extrinsic_frame_with_step(s, u, h)?;
    let f2 = extrinsic_frame_with_step(s, u, 2.0 * h)?;
    let a1 = formula_trace(s, w, &f1, h)?;
    let a2 = formula_trace(s, w, &f2, 2.0 * h)?;
    let b1 = formula_divergence(s, w, &f1, h)?;
    let b2 = formula_divergence(s, w, &f2, 2.0 * h)?;
    let w0 = w.at(&f1.x)?;
    let kap = frame_scale(&f1, &w0);
    let xmag = f1.x.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let floor = ROUNDING_FACTOR * f64::EPSILON * kap * xmag / (h * h);
    let err_a = f1.norm(&(&a1 - &a2)) + floor;
    let err_b = f1.norm(&(&b1 - &b2)) + floor;
    let mismatch = f1.norm(&(&a1 - &b1));
    let scale = f1.norm(&a1).max(f1.norm(&b1)).max(kap * s.m as f64 * f1.norm(&f1.mean_curvature));
    let allowed = FD_SLACK * (err_a + err_b) + MARGIN_FLOOR * scale;
    if !(mismatch <= allowed) {
        return Err(Error::FormulaMismatch { mismatch, allowed });
    }
    let vector = (&a1 + &b1) / (2.0 * s.m as f64);
    Ok(WMeanCurvature {
        tangential: f1.tangent_part(&vector),
        normal: f1.normal_part(&vector),
        vector,
        formula_trace: a1,
        formula_divergence: b1,
        mismatch,
        allowed,
        error: err_a.max(err_b),
    })
}

/// First Newton transformation P_1 = (tr A)·I − A in the tangent frame.
pub fn newton_p1(frame: &ExtrinsicFrame) -> Result<DMatrix<f64>> {
    let a = frame.shape_operator.as_ref().ok_or(Error::NotHypersurface(frame.normal.len()))?;
    let m = a.nrows();
    Ok(DMatrix::identity(m, m) * a.trace() - a)
}

/// Whether a symmetric frame matrix is positive definite.
pub fn is_positive_definite(p: &DMatrix<f64>) -> bool {
    let sym = (p + p.transpose()) * 0.5;
    sym.cholesky().is_some()
}

/// P_1 in parameter components: C P C⁻¹ with C the coframe.
fn newton_p1_param(s: &ImmersedSubmanifold, u: &[f64], step: f64) -> Result<DMatrix<f64>> {
    let f = extrinsic_frame_with_step(s, u, step)?;
    let p = newton_p1(&f)?;
    let ci = f.coframe.clone().try_inverse().ok_or_else(|| Error::RankDeficient { point: u.to_vec() })?;
    Ok(&f.coframe * p * ci)
}

/// ‖div^Σ P_1‖ at `u` with its step-doubling error.
pub fn newton_p1_divergence(s: &ImmersedSubmanifold, u: &[f64]) -> Result<(f64, f64)> {
    let h = s.step;
    let mut norms = [0.0; 2];
    for (k, step) in [h, 2.0 * h].into_iter().enumerate() {
        let chart = s.parameter_chart(step);
        let pf = |v: &[f64]| newton_p1_param(s, v, step);
        let d = geometry::divergence_with_step(&chart, &pf, u, step)?;
        let g = MetricAtPoint::new(s.induced_metric(u, step)?).map_err(|_| Error::RankDeficient { point: u.to_vec() })?;
        norms[k] = g.norm(&d);
    }
    Ok((norms[0], (norms[0] - norms[1]).abs()))
}

/// Both sides of the radial comparison for Δ^Σ_W(F∘r): the intrinsic
/// W-Laplacian on Σ and (F'' − F'w'/w)⟨W∇^Σr,∇^Σr⟩ + tr_Σ(W)F'w'/w + mF'⟨H_W,∇r⟩.
pub fn extrinsic_laplacian_check(
    s: &ImmersedSubmanifold,
    w: &ConductivityField,
    f: &Profile,
    warp: &Profile,
    u: &[f64],
) -> Result<RadialCheck> {
    let chart = s.parameter_chart(s.step);
    let field = s.induced_field(w, s.step);
    let (me, ff) = (s.clone(), f.clone());
    let ufn = move |v: &[f64]| -> f64 {
        me.point(v).and_then(|x| me.ambient.distance(&x)).map(|r| ff.value(r)).unwrap_or(f64::NAN)
    };
    let lhs = geometry::laplace_w(&chart, &field, &ufn, u)?;
    let frame = extrinsic_frame(s, u)?;
    let r = s.ambient.distance(&frame.x)?;
    let nr = DVector::from_vec(s.ambient.grad_r(&frame.x)?);
    let w0 = w.at(&frame.x)?;
    let nrs = frame.tangent_part(&nr);
    let wrr = frame.inner(&(&w0 * &nrs), &nrs);
    let tr: f64 = frame.tangent.iter().map(|e| frame.inner(&(&w0 * e), e)).sum();
    let hw = w_mean_curvature(s, w, u)?;
    let pairing = s.m as f64 * frame.inner(&hw.vector, &nr);
    let (f1, f2) = (f.d1(r), f.d2(r));
    let eta = warp.d1(r) / warp.value(r);
    let rhs_bound = (f2 - f1 * eta) * wrr + tr * f1 * eta + f1 * pairing;
    Ok(RadialCheck { lhs, rhs_bound })
}

/// Pointwise data for the extrinsic margins. `x` holds the parameter point.
pub fn evaluate_extrinsic(s: &ImmersedSubmanifold, w: &ConductivityField, u: &[f64], needs: Needs) -> Result<PointData> {
    let frame = extrinsic_frame(s, u)?;
    let ambient_needs = Needs { divergence: false, curvature: needs.curvature, sectional_max: needs.sectional_max };
    let mut pd = classifier::evaluate_point(&s.ambient, w, &frame.x, ambient_needs)?;
    let nr = DVector::from_vec(s.ambient.grad_r(&frame.x)?);
    let w0 = w.at(&frame.x)?;
    let nrs = frame.tangent_part(&nr);
    let m = s.m;
    let t = DMatrix::from_fn(m, m, |i, k| {
        0.5 * (frame.inner(&(&w0 * &frame.tangent[i]), &frame.tangent[k])
            + frame.inner(&(&w0 * &frame.tangent[k]), &frame.tangent[i]))
    });
    let spec = PointSpectrum::from_eigenvalues(SymmetricEigen::new(t.clone()).eigenvalues.iter().copied().collect());
    let hw = w_mean_curvature(s, w, u)?;
    pd.x = u.to_vec();
    pd.trace = t.trace();
    pd.wrr = frame.inner(&(&w0 * &nrs), &nrs);
    pd.cv = spec.cv;
    pd.pairing = m as f64 * frame.inner(&hw.vector, &nr);
    pd.pairing_err = hw.error + 0.5 * hw.mismatch;
    pd.compat_defect = compatibility_at(&frame, &w0, classifier::COMPAT_TOL).worst();
    Ok(pd)
}

fn is_extrinsic(t: Theorem) -> bool {
    matches!(t, Theorem::ExtrinsicComparison | Theorem::ExtrinsicBalance | Theorem::ExtrinsicCV)
}

/// Samples Σ on the extrinsic annulus ρ ≤ r < horizon.
///
/// Parameters are drawn from a shifted Halton sequence over the sample box;
/// the first `budget` whose ambient radius lies in range are kept.
pub fn sample_extrinsic(s: &ImmersedSubmanifold, w: &ConductivityField, spec: &CriterionSpec) -> Result<SampleSet> {
    if s.ambient.dim() != w.dim() {
        return Err(Error::DimensionMismatch { left: s.ambient.dim(), right: w.dim() });
    }
    if s.ambient.pole().is_none() {
        return Err(Error::MissingPole);
    }
    if s.sample_box.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && hi > lo)) {
        return Err(Error::InvalidParameter("sample box must be finite and nonempty".into()));
    }
    if !(spec.horizon > spec.rho) {
        return Err(Error::InvalidParameter(format!("horizon {} must exceed rho {}", spec.horizon, spec.rho)));
    }
    let halton = Halton::new(s.m, spec.seed);
    let to_param = |i: usize| -> Vec<f64> {
        halton.point(i).iter().zip(&s.sample_box).map(|(t, (lo, hi))| lo + t * (hi - lo)).collect()
    };
    let mut accepted: Vec<(f64, Vec<f64>)> = Vec::with_capacity(spec.budget);
    let limit = CANDIDATE_FACTOR * spec.budget;
    let chunk = spec.budget.max(64);
    let mut start = 0;
    while accepted.len() < spec.budget && start < limit {
        let end = (start + chunk).min(limit);
        let radii = par::map(spec.exec, end - start, |k| {
            let u = to_param(start + k);
            let r = s.point(&u).and_then(|x| s.ambient.distance(&x)).unwrap_or(f64::NAN);
            (r, u)
        });
        for (r, u) in radii {
            if accepted.len() < spec.budget && r >= spec.rho && r < spec.horizon {
                accepted.push((r, u));
            }
        }
        start = end;
    }
    let needs = Needs::for_theorem(spec.theorem);
    let raw = par::map(spec.exec, accepted.len(), |i| {
        let (r, u) = &accepted[i];
        (*r, evaluate_extrinsic(s, w, u, needs))
    });
    let mut horizon_effective = accepted.iter().map(|(r, _)| *r).fold(spec.rho, f64::max).min(spec.horizon);
    for (r, res) in &raw {
        if let Err(e) = res {
            if classifier::is_truncation(e) {
                horizon_effective = horizon_effective.min(*r);
            }
        }
    }
    let mut points = Vec::with_capacity(raw.len());
    let mut invalid = Vec::new();
    for (r, res) in raw {
        if r > horizon_effective || (r == horizon_effective && res.is_err()) {
            continue;
        }
        match res {
            Ok(p) => points.push(p),
            Err(e) => {
                if invalid.len() < 8 {
                    invalid.push(format!("invalid sample at r = {r}: {e}"));
                }
            }
        }
    }
    Ok(SampleSet {
        rho: spec.rho,
        points,
        horizon_requested: spec.horizon,
        horizon_effective,
        invalid,
        budget: spec.budget,
        seed: spec.seed,
        needs,
    })
}

/// Runs an extrinsic criterion on Σ with the induced conductivity. The model
/// dimension is q for the comparison criterion and m for the balance one.
pub fn classify_extrinsic(
    s: &ImmersedSubmanifold,
    w: &ConductivityField,
    spec: &CriterionSpec,
) -> Result<ClassificationReport> {
    if !is_extrinsic(spec.theorem) {
        return Err(Error::InvalidParameter(format!("criterion {} is intrinsic", spec.theorem)));
    }
    let sample = sample_extrinsic(s, w, spec)?;
    let mut rep = classifier::certify_sample(spec, s.m, &sample, |_| Ok(None))?;
    rep.parameters.note = format!(
        "extrinsic on {} in {}; hypotheses sampled on [{}, {}]; witnesses are parameter points",
        s.label,
        s.ambient.label(),
        spec.rho,
        sample.horizon_effective
    );
    Ok(rep)
}

/// Re-evaluates every margin of an extrinsic report at its witness parameter.
pub fn replay_extrinsic(
    s: &ImmersedSubmanifold,
    w: &ConductivityField,
    spec: &CriterionSpec,
    report: &ClassificationReport,
) -> Result<ReplayOutcome> {
    let needs = Needs::for_theorem(spec.theorem);
    let mut rows = Vec::with_capacity(report.margins.len());
    for mg in &report.margins {
        let recomputed = if mg.witness.is_empty() {
            f64::NAN
        } else {
            classifier::margin_value(mg.kind, spec, s.m, &evaluate_extrinsic(s, w, &mg.witness, needs)?)
        };
        rows.push(ReplayRow {
            kind: mg.kind,
            recorded: mg.worst,
            recomputed,
            identical: recomputed.to_bits() == mg.worst.to_bits(),
        });
    }
    Ok(ReplayOutcome { rows, reference: None })
}

/// One row of a surface point cloud.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CloudRow {
    pub u: f64,
    pub v: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub quantity: f64,
}

/// A surface in 3-space sampled on an nu×nv grid of cell centers of the
/// sample box. Points where `quantity` fails carry NaN.
pub fn point_cloud(
    s: &ImmersedSubmanifold,
    nu: usize,
    nv: usize,
    quantity: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
) -> Result<Vec<CloudRow>> {
    if s.m != 2 || s.ambient.dim() != 3 {
        return Err(Error::InvalidParameter("point clouds need a surface in a 3-dimensional ambient".into()));
    }
    let (bu, bv) = (s.sample_box[0], s.sample_box[1]);
    let mut rows = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for k in 0..nv {
            let u = bu.0 + (i as f64 + 0.5) / nu as f64 * (bu.1 - bu.0);
            let v = bv.0 + (k as f64 + 0.5) / nv as f64 * (bv.1 - bv.0);
            let p = [u, v];
            let x = s.point(&p)?;
            let q = quantity(&p).unwrap_or(f64::NAN);
            rows.push(CloudRow { u, v, x: x[0], y: x[1], z: x[2], quantity: q });
        }
    }
    Ok(rows)
}

// ---- example surfaces -------------------------------------------------------

fn euclidean3() -> ChartManifold {
    ChartManifold::euclidean(3)
}

/// The plane z = 0.
pub fn plane() -> ImmersedSubmanifold {
    ImmersedSubmanifold::new(2, euclidean3(), vec![(f64::NEG_INFINITY, f64::INFINITY); 2], |u| vec![u[0], u[1], 0.0])
        .expect("valid dimensions")
        .with_sample_box(vec![(-8.0, 8.0), (-8.0, 8.0)])
        .with_normal_hint(|_| vec![0.0, 0.0, 1.0])
        .with_label("plane z=0")
}

/// The round cylinder x² + y² = 1, parametrized by (angle, height), with the
/// inward normal.
pub fn cylinder() -> ImmersedSubmanifold {
    ImmersedSubmanifold::new(2, euclidean3(), vec![(f64::NEG_INFINITY, f64::INFINITY); 2], |u| {
        vec![u[0].cos(), u[0].sin(), u[1]]
    })
    .expect("valid dimensions")
    .with_sample_box(vec![(-PI, PI), (-8.0, 8.0)])
    .with_normal_hint(|x| vec![-x[0], -x[1], 0.0])
    .with_label("cylinder x^2+y^2=1")
}

/// The paraboloid z = (x² + y²)/2 in polar parameters (ρ, φ), with normal
/// N = (x, y, −1)/√(ρ²+1).
pub fn paraboloid() -> ImmersedSubmanifold {
    ImmersedSubmanifold::new(2, euclidean3(), vec![(0.0, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)], |u| {
        let (s, c) = u[1].sin_cos();
        vec![u[0] * c, u[0] * s, 0.5 * u[0] * u[0]]
    })
    .expect("valid dimensions")
    .with_sample_box(vec![(0.1, 14.0), (-PI, PI)])
    .with_normal_hint(|x| vec![x[0], x[1], -1.0])
    .with_label("paraboloid z=(x^2+y^2)/2")
}

/// The branch x > 0 of x² − y² = σ (σ > 0): (√σ cosh u, √σ sinh u, v).
pub fn sigma_surface(sigma: f64) -> Result<ImmersedSubmanifold> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let a = sigma.sqrt();
    Ok(ImmersedSubmanifold::new(2, euclidean3(), vec![(f64::NEG_INFINITY, f64::INFINITY); 2], move |u| {
        vec![a * u[0].cosh(), a * u[0].sinh(), u[1]]
    })?
    .with_sample_box(vec![(-4.2, 4.2), (-64.0, 64.0)])
    .with_normal_hint(|x| vec![x[0], -x[1], 0.0])
    .with_label(format!("x^2-y^2={sigma}")))
}

/// Sphere of the given radius about the origin, with the inner normal.
pub fn sphere(radius: f64) -> ImmersedSubmanifold {
    ellipsoid(radius, radius, radius).with_label(format!("sphere of radius {radius}"))
}

/// Ellipsoid x²/a² + y²/b² + z²/c² = 1 with the inner normal.
pub fn ellipsoid(a: f64, b: f64, c: f64) -> ImmersedSubmanifold {
    ImmersedSubmanifold::new(2, euclidean3(), vec![(0.0, PI), (f64::NEG_INFINITY, f64::INFINITY)], move |u| {
        let (st, ct) = u[0].sin_cos();
        let (sp, cp) = u[1].sin_cos();
        vec![a * st * cp, b * st * sp, c * ct]
    })
    .expect("valid dimensions")
    .with_sample_box(vec![(0.1, PI - 0.1), (-PI, PI)])
    .with_normal_hint(|x| x.iter().map(|v| -v).collect())
    .with_label(format!("ellipsoid ({a}, {b}, {c})"))
}

// ---- example conductivities -------------------------------------------------

/// Smooth step: 0 for t ≤ a, 1 for t ≥ b.
fn smooth_step(t: f64, a: f64, b: f64) -> f64 {
    let psi = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let (p, q) = (psi(t - a), psi(b - t));
    if p + q == 0.0 {
        0.0
    } else {
        p / (p + q)
    }
}

/// W = Σ λ_i E_i ⊗ θ^i for an orthonormal frame of Euclidean 3-space.
fn frame_tensor(frame: [[f64; 3]; 3], lambda: [f64; 3]) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(3, 3);
    for (e, l) in frame.iter().zip(lambda) {
        let v = DVector::from_column_slice(e);
        w += &v * v.transpose() * l;
    }
    w
}

/// λ_2 = r^{16/9} e^{9r/8} and λ_3 = λ_2 / (2(1 + 4r²)) for the paraboloid.
pub fn paraboloid_lambdas(r: f64) -> (f64, f64) {
    let l2 = (16.0 / 9.0 * r.ln() + 9.0 / 8.0 * r).exp();
    (l2, l2 / (2.0 * (1.0 + 4.0 * r * r)))
}

/// Frame conductivity adapted to the paraboloid: E_1 = N, E_2 along the
/// meridian and E_3 along the parallel. The paraboloid eigenvalues are used
/// where √(x²+y²) ≥ 1 and blended smoothly to W = Id below 1/2.
pub fn paraboloid_conductivity() -> ConductivityField {
    ConductivityField::new(3, "paraboloid frame conductivity", |x| {
        let rho = x[0].hypot(x[1]);
        let chi = smooth_step(rho, 0.5, 1.0);
        if chi == 0.0 {
            return DMatrix::identity(3, 3);
        }
        let r = (rho * rho + x[2] * x[2]).sqrt();
        let s = (rho * rho + 1.0).sqrt();
        let e1 = [x[0] / s, x[1] / s, -1.0 / s];
        let e2 = [x[0] / (rho * s), x[1] / (rho * s), rho / s];
        let e3 = [x[1] / rho, -x[0] / rho, 0.0];
        let (l2, l3) = paraboloid_lambdas(r);
        frame_tensor([e1, e2, e3], [1.0, 1.0 + chi * (l2 - 1.0), 1.0 + chi * (l3 - 1.0)])
    })
}

/// Frame conductivity adapted to x² − y² = σ: E_1 = (x, −y, 0)/ρ normal,
/// λ_1 = 1, λ_2 = e^{r/2}, λ_3 = e^r. Undefined on the z-axis.
pub fn sigma_conductivity() -> ConductivityField {
    ConductivityField::new(3, "hyperbolic-cylinder frame conductivity", |x| {
        let rho = x[0].hypot(x[1]);
        let r = (rho * rho + x[2] * x[2]).sqrt();
        let e1 = [x[0] / rho, -x[1] / rho, 0.0];
        let e2 = [x[1] / rho, x[0] / rho, 0.0];
        let e3 = [0.0, 0.0, 1.0];
        frame_tensor([e1, e2, e3], [1.0, (0.5 * r).exp(), r.exp()])
    })
}

/// Paraboloid certificate: w = r, q = 1, θ = 1, ρ = 3/2.
pub fn paraboloid_example() -> (ImmersedSubmanifold, ConductivityField, CriterionSpec) {
    let spec = CriterionSpec::new(
        Theorem::ExtrinsicComparison,
        Profile::identity(),
        1.0,
        Theta::Affine { a: 1.0, b: 0.0 },
        1.5,
        CurvatureSide::UpperBound,
    )
    .expect("valid constants");
    (paraboloid(), paraboloid_conductivity(), spec)
}

/// Certificate on x² − y² = 1: w = r, q = 1, θ = 1/2, ρ = 1.
pub fn sigma_example() -> (ImmersedSubmanifold, ConductivityField, CriterionSpec) {
    let spec = CriterionSpec::new(
        Theorem::ExtrinsicComparison,
        Profile::identity(),
        1.0,
        Theta::Affine { a: 0.5, b: 0.0 },
        1.0,
        CurvatureSide::UpperBound,
    )
    .expect("valid constants");
    (sigma_surface(1.0).expect("sigma > 0"), sigma_conductivity(), spec)
}
