// SPDX-License-Identifier: Apache-2.0

//! Hypothesis checks for the intrinsic W-parabolicity and W-hyperbolicity
//! criteria, with replayable certificates.
//!
//! Every "for all p outside B_ρ" hypothesis is sampled on a shifted Halton set
//! over the annulus [ρ, horizon]. Each hypothesis becomes a normalized margin
//! (nonnegative when the inequality holds) whose worst sample is recorded with
//! its witness point. A verdict is emitted only when every margin holds and
//! the tail test on the comparison model is decisive in the right direction.

use std::fmt;

use serde::Serialize;

use crate::capacity;
use crate::error::{Error, Result};
use crate::geometry::{self, ChartManifold, ConductivityField};
use crate::model::{self, ConvergenceVerdict, TailStatus, WarpedModel};
use crate::par::{self, Exec};
use crate::profile::Profile;
use crate::sampling::Halton;
use crate::tensor::{self, MetricAtPoint};

/// Margins within this distance of zero count as satisfied.
pub const MARGIN_FLOOR: f64 = 1e-9;
/// Multiplier on the step-doubling difference |D_h − D_2h| when forming
/// tolerances. The raw difference is used rather than the Richardson estimate
/// |D_h − D_2h|/15, since nested differencing is often rounding-dominated.
pub const FD_SLACK: f64 = 10.0;
/// Threshold for ‖div W‖_g relative to κ/r.
pub const DIV_FREE_TOL: f64 = 1e-8;
pub const DEFAULT_BUDGET: usize = 4096;
pub const DEFAULT_HORIZON_FACTOR: f64 = 64.0;
pub const DEFAULT_GROWTH_FACTOR: f64 = 10.0;
/// Spectra outside [SPECTRUM_FLOOR, 1/SPECTRUM_FLOOR] are treated as leaving
/// the representable range, which truncates the horizon.
pub const SPECTRUM_FLOOR: f64 = 1e-250;
/// Rounding noise of a k-th difference is taken as ROUNDING_FACTOR·ε/h^k
/// times the magnitude of the differenced quantity.
pub const ROUNDING_FACTOR: f64 = 64.0;
/// Largest relative W-compatibility defect accepted on a submanifold.
pub const COMPAT_TOL: f64 = 1e-8;
/// A fitted θ term whose total contribution to h over the sampled radii is
/// below this is rounding noise and is dropped.
pub const THETA_NOISE: f64 = 1e-6;
/// Grid used for Vol_W(∂B_ρ) in capacity bounds.
const BOUND_THETA_POINTS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Theorem {
    MainComparison,
    DivergenceFree,
    KappaBalance,
    MuBalance,
    CVCriterion,
    BoundedEigen,
    Isotropic,
    /// Trace and W-mean-curvature pairing conditions on a submanifold.
    ExtrinsicComparison,
    /// Balance condition with the W-mean curvature against θκ.
    ExtrinsicBalance,
    /// cv of the induced conductivity plus ⟨∇r, H_W⟩ ≤ 0.
    ExtrinsicCV,
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Which side of the radial curvature comparison is assumed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CurvatureSide {
    /// sec ≤ −w''/w along radial planes; certifies hyperbolicity.
    UpperBound,
    /// sec ≥ −w''/w along radial planes; certifies parabolicity.
    LowerBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    WParabolic,
    WHyperbolic,
    Undecided,
}

impl Verdict {
    pub fn is_decisive(self) -> bool {
        self != Verdict::Undecided
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Radial divergence bound θ(r); the comparison weight is h(t) = ∫_ρ^t θ.
#[derive(Clone, Debug)]
pub enum Theta {
    Zero,
    /// θ(r) = a + b·r.
    Affine { a: f64, b: f64 },
    Custom(Profile),
}

impl Theta {
    pub fn value(&self, r: f64) -> f64 {
        match self {
            Theta::Zero => 0.0,
            Theta::Affine { a, b } => a + b * r,
            Theta::Custom(p) => p.value(r),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Theta::Zero => "0".into(),
            Theta::Affine { a, b } => format!("{a} + {b}*r"),
            Theta::Custom(p) => p.label().to_string(),
        }
    }

    /// h(t) = ∫_ρ^t θ, or `None` for θ = 0.
    pub fn weight(&self, rho: f64) -> Option<Profile> {
        match self {
            Theta::Zero => None,
            Theta::Affine { a, b } => Some(model::weight_from_affine_theta(*a, *b, rho)),
            Theta::Custom(p) => Some(model::weight_from_theta(p.clone(), rho)),
        }
    }

    pub fn weight_label(&self, rho: f64) -> String {
        self.weight(rho).map_or_else(|| "0".into(), |h| h.label().to_string())
    }
}

/// Theorem id plus the constants the caller chose for it.
#[derive(Clone, Debug)]
pub struct CriterionSpec {
    pub theorem: Theorem,
    pub w: Profile,
    pub q: f64,
    pub theta: Theta,
    pub rho: f64,
    pub side: CurvatureSide,
    pub budget: usize,
    pub horizon: f64,
    pub seed: u64,
    pub exec: Exec,
    /// Allowed growth of κ (and decay of μ) for [`Theorem::BoundedEigen`].
    pub growth_factor: f64,
    /// Criterion for (M, g) with W = Id, used by [`Theorem::BoundedEigen`].
    pub reference: Option<Box<CriterionSpec>>,
    /// Outer radius R for the one-sided capacity bound, when wanted.
    pub bound_radius: Option<f64>,
}

impl CriterionSpec {
    pub fn new(theorem: Theorem, w: Profile, q: f64, theta: Theta, rho: f64, side: CurvatureSide) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::InvalidParameter(format!("q must be positive, got {q}")));
        }
        Ok(CriterionSpec {
            theorem,
            w,
            q,
            theta,
            rho,
            side,
            budget: DEFAULT_BUDGET,
            horizon: DEFAULT_HORIZON_FACTOR * rho,
            seed: 0,
            exec: Exec::default(),
            growth_factor: DEFAULT_GROWTH_FACTOR,
            reference: None,
            bound_radius: None,
        })
    }

    /// Constant-coefficient criteria (divergence-free, CV) on w = r.
    pub fn simple(theorem: Theorem, q: f64, rho: f64, side: CurvatureSide) -> Result<Self> {
        CriterionSpec::new(theorem, Profile::identity(), q, Theta::Zero, rho, side)
    }

    /// Transfers the verdict of `reference` (evaluated with W = Id).
    pub fn bounded_eigen(reference: CriterionSpec) -> Self {
        let mut s = reference.clone();
        s.theorem = Theorem::BoundedEigen;
        s.reference = Some(Box::new(reference));
        s
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_growth_factor(mut self, factor: f64) -> Self {
        self.growth_factor = factor;
        self
    }

    pub fn with_bound_radius(mut self, big_r: f64) -> Self {
        self.bound_radius = Some(big_r);
        self
    }

    fn effective_q(&self, n: usize) -> f64 {
        match self.theorem {
            Theorem::KappaBalance | Theorem::MuBalance | Theorem::ExtrinsicBalance => n as f64,
            _ => self.q,
        }
    }

    fn effective_theta(&self) -> Theta {
        match self.theorem {
            Theorem::DivergenceFree => Theta::Zero,
            _ => self.theta.clone(),
        }
    }

    /// Comparison model whose tail decides the verdict.
    pub fn comparison_model(&self, n: usize) -> Result<WarpedModel> {
        let mut m = WarpedModel::new(self.effective_q(n), self.w.clone())?;
        if let Some(h) = self.effective_theta().weight(self.rho) {
            m = m.with_h(h);
        }
        Ok(m)
    }
}

/// Which hypothesis a margin measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum MarginKind {
    /// Radial sectional curvature against −w''/w.
    RadialCurvature,
    /// w'(tr W − q⟨W∇r,∇r⟩) with the side's sign.
    TraceCondition,
    /// ⟨div W,∇r⟩ against θ⟨W∇r,∇r⟩.
    DivergenceCondition,
    /// ‖div W‖ r/κ below [`DIV_FREE_TOL`].
    DivergenceFree,
    /// ⟨div W,∇r⟩/κ against θ.
    KappaRatio,
    /// ⟨div W,∇r⟩/μ against θ.
    MuRatio,
    /// θ + n w'/w with the theorem's sign.
    Balance,
    /// Sign of w'.
    WarpingSign,
    /// Sampled sectional curvatures ≤ 0.
    NonPositiveCurvature,
    /// cv below (n−2)/(2√n).
    CoefficientOfVariation,
    /// κ / κ_ref below the growth factor.
    KappaGrowth,
    /// μ_ref / μ below the growth factor.
    MuDecay,
    /// W is a multiple of the identity.
    Isotropy,
    /// W preserves the tangent and normal spaces of the submanifold.
    Compatibility,
    /// m⟨H_W,∇r⟩ against θ⟨W∇^Σr,∇^Σr⟩.
    MeanCurvaturePairing,
    /// m⟨H_W,∇r⟩/κ against θ.
    MeanCurvatureKappa,
    /// ⟨H_W,∇r⟩ ≤ 0.
    MeanCurvatureSign,
}

impl MarginKind {
    pub fn describe(self) -> &'static str {
        match self {
            MarginKind::RadialCurvature => "radial sectional curvature vs -w''/w",
            MarginKind::TraceCondition => "w'(tr W - q<W grad r, grad r>)",
            MarginKind::DivergenceCondition => "<div W, grad r> vs theta <W grad r, grad r>",
            MarginKind::DivergenceFree => "|div W| r / kappa < 1e-8",
            MarginKind::KappaRatio => "<div W, grad r>/kappa vs theta",
            MarginKind::MuRatio => "<div W, grad r>/mu vs theta",
            MarginKind::Balance => "balance theta + n w'/w",
            MarginKind::WarpingSign => "sign of w'",
            MarginKind::NonPositiveCurvature => "sampled sectional curvature <= 0",
            MarginKind::CoefficientOfVariation => "cv < (n-2)/(2 sqrt n)",
            MarginKind::KappaGrowth => "kappa / kappa_ref <= growth factor",
            MarginKind::MuDecay => "mu_ref / mu <= growth factor",
            MarginKind::Isotropy => "W = (tr W / n) Id",
            MarginKind::Compatibility => "W(T Sigma) = T Sigma, relative defect < 1e-8",
            MarginKind::MeanCurvaturePairing => "m<H_W, grad r> vs theta <W grad_S r, grad_S r>",
            MarginKind::MeanCurvatureKappa => "m<H_W, grad r>/kappa vs theta",
            MarginKind::MeanCurvatureSign => "<H_W, grad r> <= 0",
        }
    }
}

/// Worst sampled value of one hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Margin {
    pub kind: MarginKind,
    pub description: String,
    pub worst: f64,
    pub witness: Vec<f64>,
    pub witness_radius: f64,
    pub tolerance: f64,
    pub satisfied: bool,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundDirection {
    CapacityAtLeast,
    CapacityAtMost,
}

/// −φ'(ρ)·Vol_W(∂B_ρ) for the comparison model on B_R \ B_ρ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CapacityBound {
    pub rho: f64,
    pub big_r: f64,
    pub value: f64,
    pub direction: BoundDirection,
    pub phi_prime: f64,
    pub vol_w: f64,
}

impl CapacityBound {
    /// Whether `cap ± err` is consistent with the bound.
    pub fn respected_by(&self, cap: f64, err: f64) -> bool {
        match self.direction {
            BoundDirection::CapacityAtLeast => cap + err >= self.value,
            BoundDirection::CapacityAtMost => cap - err <= self.value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Parameters {
    pub dimension: usize,
    pub q: f64,
    pub rho: f64,
    pub w: String,
    pub theta: String,
    pub h: String,
    pub side: CurvatureSide,
    pub horizon_requested: f64,
    pub horizon_effective: f64,
    pub budget: usize,
    pub samples_used: usize,
    pub seed: u64,
    pub kappa_ref: Option<f64>,
    pub mu_ref: Option<f64>,
    pub growth_factor: Option<f64>,
    pub note: String,
}

/// Verdict plus the certificate that supports it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub theorem: Theorem,
    pub parameters: Parameters,
    pub margins: Vec<Margin>,
    pub tail_evidence: Option<ConvergenceVerdict>,
    pub capacity_bound: Option<CapacityBound>,
    /// Names of the conditions that prevented a verdict.
    pub failing: Vec<String>,
    /// Riemannian report whose verdict was transferred.
    pub reference: Option<Box<ClassificationReport>>,
}

/// Which pointwise quantities to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Needs {
    pub divergence: bool,
    pub curvature: bool,
    pub sectional_max: bool,
}

impl Needs {
    pub const ALL: Needs = Needs { divergence: true, curvature: true, sectional_max: true };

    pub fn for_theorem(t: Theorem) -> Needs {
        match t {
            Theorem::BoundedEigen => Needs { divergence: false, curvature: false, sectional_max: false },
            Theorem::CVCriterion | Theorem::ExtrinsicCV => Needs { divergence: true, curvature: true, sectional_max: true },
            _ => Needs { divergence: true, curvature: true, sectional_max: false },
        }
    }

    fn covers(self, other: Needs) -> bool {
        (self.divergence || !other.divergence)
            && (self.curvature || !other.curvature)
            && (self.sectional_max || !other.sectional_max)
    }
}

/// Pointwise data shared by all margins.
#[derive(Clone, Debug, PartialEq)]
pub struct PointData {
    pub x: Vec<f64>,
    pub r: f64,
    pub wrr: f64,
    pub trace: f64,
    pub mu: f64,
    pub kappa: f64,
    pub cv: f64,
    pub anisotropy: f64,
    pub divr: f64,
    pub divr_err: f64,
    pub div_norm: f64,
    pub div_norm_err: f64,
    pub sec_radial_min: f64,
    pub sec_radial_max: f64,
    pub sec_radial_err: f64,
    pub sec_max: f64,
    pub sec_max_err: f64,
    /// m⟨H_W,∇r⟩ on a submanifold; NaN for intrinsic samples.
    pub pairing: f64,
    pub pairing_err: f64,
    /// Relative W-compatibility defect on a submanifold; NaN for intrinsic samples.
    pub compat_defect: f64,
}

pub(crate) fn out_of_range(mu: f64, kappa: f64) -> bool {
    !(mu > SPECTRUM_FLOOR && kappa < 1.0 / SPECTRUM_FLOOR)
}

/// Evaluates everything the margins need at `x`.
pub fn evaluate_point(m: &ChartManifold, w: &ConductivityField, x: &[f64], needs: Needs) -> Result<PointData> {
    let r = m.distance(x)?;
    let nr = m.grad_r(x)?;
    let g: MetricAtPoint = m.metric_at(x)?;
    let wm = w.mixed_at(x)?;
    let spec = tensor::validate_conductivity(&wm, &g, tensor::SA_TOL).map_err(|e| match e {
        // an eigenvalue that underflowed to zero leaves the representable range
        Error::NotPositiveDefinite { min, max } if min.abs() < SPECTRUM_FLOOR && max > 0.0 => {
            Error::NonFinite { what: "conductivity spectrum", point: x.to_vec() }
        }
        e => e,
    })?;
    let (mu, kappa) = (spec.mu(), spec.kappa());
    if out_of_range(mu, kappa) {
        return Err(Error::NonFinite { what: "conductivity spectrum", point: x.to_vec() });
    }
    let wrr = g.inner(&wm.apply(&nr), &nr);
    let trace = wm.trace();
    let n = m.dim();
    let mean = trace / n as f64;
    let mut anisotropy = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let e = wm.matrix()[(i, j)] - if i == j { mean } else { 0.0 };
            anisotropy = anisotropy.max(e.abs() / mean.abs());
        }
    }
    let mut pd = PointData {
        x: x.to_vec(),
        r,
        wrr,
        trace,
        mu,
        kappa,
        cv: spec.cv,
        anisotropy,
        divr: f64::NAN,
        divr_err: f64::NAN,
        div_norm: f64::NAN,
        div_norm_err: f64::NAN,
        sec_radial_min: f64::NAN,
        sec_radial_max: f64::NAN,
        sec_radial_err: f64::NAN,
        sec_max: f64::NAN,
        sec_max_err: f64::NAN,
        pairing: f64::NAN,
        pairing_err: f64::NAN,
        compat_defect: f64::NAN,
    };
    let h = m.step();
    if needs.divergence {
        let noise = ROUNDING_FACTOR * f64::EPSILON * kappa / h;
        let wf = |y: &[f64]| w.at(y);
        let d1 = geometry::divergence_with_step(m, &wf, x, m.step())?;
        let d2 = geometry::divergence_with_step(m, &wf, x, 2.0 * m.step())?;
        pd.divr = g.inner(&d1, &nr);
        pd.divr_err = (pd.divr - g.inner(&d2, &nr)).abs() + noise;
        pd.div_norm = g.norm(&d1);
        pd.div_norm_err = (pd.div_norm - g.norm(&d2)).abs() + noise;
    }
    if needs.curvature || needs.sectional_max {
        let noise = ROUNDING_FACTOR * f64::EPSILON / (h * h);
        let c1 = geometry::curvature(m, x)?;
        let c2 = geometry::curvature_with_step(m, x, 2.0 * m.step())?;
        let (a1, b1) = c1.sectional_extremes_containing(&nr);
        let (a2, b2) = c2.sectional_extremes_containing(&nr);
        pd.sec_radial_min = a1;
        pd.sec_radial_max = b1;
        pd.sec_radial_err = (a1 - a2).abs().max((b1 - b2).abs()) + noise;
        if needs.sectional_max {
            let extra: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
                .map(|j| {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0;
                    (nr.clone(), e)
                })
                .filter(|(u, v)| {
                    let s = g.inner(u, u) * g.inner(v, v) - g.inner(u, v).powi(2);
                    s > 1e-6 * g.inner(v, v)
                })
                .collect();
            let s1 = c1.max_sectional_sampled(&extra).max(b1);
            let s2 = c2.max_sectional_sampled(&extra).max(b2);
            pd.sec_max = s1;
            pd.sec_max_err = (s1 - s2).abs() + noise;
        }
    }
    Ok(pd)
}

pub(crate) fn is_truncation(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. } | Error::StencilOutOfDomain { .. } | Error::SingularMetric { .. })
}

/// Sampled pointwise data on the annulus [ρ, horizon].
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub rho: f64,
    pub points: Vec<PointData>,
    pub horizon_requested: f64,
    pub horizon_effective: f64,
    /// Conditions that make every verdict impossible (invalid W, chart defects).
    pub invalid: Vec<String>,
    pub budget: usize,
    pub seed: u64,
    pub needs: Needs,
}

/// Samples `budget` points with radius log-uniform on [ρ, horizon].
#[allow(clippy::too_many_arguments)]
pub fn sample_annulus(
    m: &ChartManifold,
    w: &ConductivityField,
    rho: f64,
    horizon: f64,
    budget: usize,
    seed: u64,
    needs: Needs,
    exec: Exec,
) -> Result<SampleSet> {
    if m.dim() != w.dim() {
        return Err(Error::DimensionMismatch { left: m.dim(), right: w.dim() });
    }
    if !(horizon > rho) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} must exceed rho {rho}")));
    }
    let k = m.direction_params();
    let halton = Halton::new(1 + k, seed);
    let span = (horizon / rho).ln();
    let raw = par::map(exec, budget, |i| {
        let u = halton.point(i);
        let r = rho * (span * u[0]).exp();
        let x = m.point_at(r, &u[1..]);
        (r, x.and_then(|x| evaluate_point(m, w, &x, needs)))
    });
    let mut horizon_effective = horizon;
    for (r, res) in &raw {
        if let Err(e) = res {
            if is_truncation(e) {
                horizon_effective = horizon_effective.min(*r);
            }
        }
    }
    let mut points = Vec::with_capacity(raw.len());
    let mut invalid = Vec::new();
    for (r, res) in raw {
        if r >= horizon_effective {
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
    Ok(SampleSet { rho, points, horizon_requested: horizon, horizon_effective, invalid, budget, seed, needs })
}

/// Everything margin evaluation depends on besides the point.
#[derive(Clone, Debug)]
struct Ctx {
    theorem: Theorem,
    side: CurvatureSide,
    q: f64,
    w: Profile,
    theta: Theta,
    n: usize,
    kappa_ref: f64,
    mu_ref: f64,
    factor: f64,
}

impl Ctx {
    fn from_spec(spec: &CriterionSpec, n: usize) -> Ctx {
        Ctx {
            theorem: spec.theorem,
            side: spec.side,
            q: spec.effective_q(n),
            w: spec.w.clone(),
            theta: spec.effective_theta(),
            n,
            kappa_ref: f64::NAN,
            mu_ref: f64::NAN,
            factor: spec.growth_factor,
        }
    }
}

fn tol_with(err: f64, scale: f64) -> f64 {
    MARGIN_FLOOR + FD_SLACK * err / scale
}

/// Normalized margin and its tolerance at one point.
fn margin_at(kind: MarginKind, c: &Ctx, p: &PointData) -> (f64, f64) {
    let r = p.r;
    let upper = c.side == CurvatureSide::UpperBound;
    let tiny = f64::MIN_POSITIVE;
    match kind {
        MarginKind::RadialCurvature => {
            let model = -c.w.d2(r) / c.w.value(r);
            let (d, sec) = if upper {
                (model - p.sec_radial_max, p.sec_radial_max)
            } else {
                (p.sec_radial_min - model, p.sec_radial_min)
            };
            let s = model.abs() + sec.abs() + 1.0 / (r * r);
            (d / s, tol_with(p.sec_radial_err, s))
        }
        MarginKind::TraceCondition => {
            let w1 = c.w.d1(r);
            let v = w1 * (p.trace - c.q * p.wrr);
            let s = w1.abs() * (p.trace + c.q * p.wrr) + tiny;
            (if upper { v / s } else { -v / s }, MARGIN_FLOOR)
        }
        MarginKind::DivergenceCondition => {
            let th = c.theta.value(r);
            let d = p.divr - th * p.wrr;
            let s = p.divr.abs() + th.abs() * p.wrr + p.wrr / r;
            (if upper { d / s } else { -d / s }, tol_with(p.divr_err, s))
        }
        MarginKind::DivergenceFree => {
            let ratio = p.div_norm * r / p.kappa;
            let err = p.div_norm_err * r / p.kappa;
            (1.0 - ratio / DIV_FREE_TOL, tol_with(err, DIV_FREE_TOL))
        }
        MarginKind::KappaRatio | MarginKind::MuRatio => {
            let lam = if kind == MarginKind::KappaRatio { p.kappa } else { p.mu };
            let th = c.theta.value(r);
            let d = th - p.divr / lam;
            let s = th.abs() + p.divr.abs() / lam + 1.0 / r;
            let sign = if kind == MarginKind::KappaRatio && upper { -1.0 } else { 1.0 };
            (sign * d / s, tol_with(p.divr_err / lam, s))
        }
        MarginKind::Balance => {
            let (wv, w1) = (c.w.value(r), c.w.d1(r));
            let th = c.theta.value(r);
            let b = th + c.n as f64 * w1 / wv;
            let s = th.abs() + c.n as f64 * w1.abs() / wv.abs() + 1.0 / r;
            let sign = if reversed_balance(c.theorem) && !upper { -1.0 } else { 1.0 };
            (sign * b / s, MARGIN_FLOOR)
        }
        MarginKind::WarpingSign => {
            let (wv, w1) = (c.w.value(r), c.w.d1(r));
            let s = w1.abs() + wv.abs() / r;
            let sign = if reversed_balance(c.theorem) && !upper { 1.0 } else { -1.0 };
            (sign * w1 / s, MARGIN_FLOOR)
        }
        MarginKind::NonPositiveCurvature => {
            let s = p.sec_max.abs() + 1.0 / (r * r);
            (-p.sec_max / s, tol_with(p.sec_max_err, s))
        }
        MarginKind::CoefficientOfVariation => {
            let n = c.n as f64;
            let bound = (n - 2.0) / (2.0 * n.sqrt());
            ((bound - p.cv) / bound, MARGIN_FLOOR)
        }
        MarginKind::KappaGrowth => (1.0 - p.kappa / (c.factor * c.kappa_ref), MARGIN_FLOOR),
        MarginKind::MuDecay => (1.0 - c.mu_ref / (c.factor * p.mu), MARGIN_FLOOR),
        MarginKind::Isotropy => (-p.anisotropy, MARGIN_FLOOR),
        MarginKind::Compatibility => (1.0 - p.compat_defect / COMPAT_TOL, MARGIN_FLOOR),
        MarginKind::MeanCurvaturePairing => {
            let th = c.theta.value(r);
            let d = p.pairing - th * p.wrr;
            let s = p.pairing.abs() + th.abs() * p.wrr + p.kappa / r;
            (if upper { d / s } else { -d / s }, tol_with(p.pairing_err, s))
        }
        MarginKind::MeanCurvatureKappa => {
            let th = c.theta.value(r);
            let d = p.pairing / p.kappa - th;
            let s = th.abs() + p.pairing.abs() / p.kappa + 1.0 / r;
            (if upper { d / s } else { -d / s }, tol_with(p.pairing_err / p.kappa, s))
        }
        MarginKind::MeanCurvatureSign => {
            let s = p.pairing.abs() + p.kappa / r;
            (-p.pairing / s, tol_with(p.pairing_err, s))
        }
    }
}

/// Balance criteria whose lower-curvature side certifies parabolicity with
/// w' ≥ 0 and θ + n w'/w ≤ 0.
fn reversed_balance(t: Theorem) -> bool {
    matches!(t, Theorem::KappaBalance | Theorem::ExtrinsicBalance)
}

fn margin_kinds(t: Theorem) -> &'static [MarginKind] {
    use MarginKind::*;
    match t {
        Theorem::MainComparison => &[RadialCurvature, TraceCondition, DivergenceCondition],
        Theorem::Isotropic => &[Isotropy, RadialCurvature, TraceCondition, DivergenceCondition],
        Theorem::DivergenceFree => &[RadialCurvature, TraceCondition, DivergenceFree],
        Theorem::KappaBalance => &[RadialCurvature, KappaRatio, Balance, WarpingSign],
        Theorem::MuBalance => &[RadialCurvature, MuRatio, Balance, WarpingSign],
        Theorem::CVCriterion => &[NonPositiveCurvature, CoefficientOfVariation, DivergenceFree],
        Theorem::BoundedEigen => &[KappaGrowth, MuDecay],
        Theorem::ExtrinsicComparison => &[Compatibility, RadialCurvature, TraceCondition, MeanCurvaturePairing],
        Theorem::ExtrinsicBalance => &[Compatibility, RadialCurvature, MeanCurvatureKappa, Balance, WarpingSign],
        Theorem::ExtrinsicCV => &[Compatibility, NonPositiveCurvature, CoefficientOfVariation, MeanCurvatureSign],
    }
}

/// Margin value at one point, as recorded in reports, for replay outside
/// this module.
pub(crate) fn margin_value(kind: MarginKind, spec: &CriterionSpec, n: usize, p: &PointData) -> f64 {
    margin_at(kind, &Ctx::from_spec(spec, n), p).0
}

/// Reduces one margin over the sample, in index order.
fn worst_margin(kind: MarginKind, c: &Ctx, points: &[PointData]) -> Margin {
    let mut best: Option<(f64, f64, f64, usize)> = None;
    for (i, p) in points.iter().enumerate() {
        let (v, t) = margin_at(kind, c, p);
        let adj = v + t;
        let replace = match best {
            None => true,
            Some((_, _, b, _)) => adj.is_nan() && !b.is_nan() || adj < b,
        };
        if replace {
            best = Some((v, t, adj, i));
        }
    }
    match best {
        Some((v, t, _, i)) => Margin {
            kind,
            description: kind.describe().into(),
            worst: v,
            witness: points[i].x.clone(),
            witness_radius: points[i].r,
            tolerance: t,
            satisfied: v >= -t,
            samples: points.len(),
        },
        None => Margin {
            kind,
            description: kind.describe().into(),
            worst: f64::NAN,
            witness: vec![],
            witness_radius: f64::NAN,
            tolerance: MARGIN_FLOOR,
            satisfied: false,
            samples: 0,
        },
    }
}

/// Reference spectrum bounds over the inner shell r ≤ 2ρ.
fn spectrum_reference(points: &[PointData], rho: f64) -> (f64, f64) {
    let inner: Vec<&PointData> = points.iter().filter(|p| p.r <= 2.0 * rho).collect();
    let pool: Vec<&PointData> = if inner.is_empty() {
        points.iter().min_by(|a, b| a.r.total_cmp(&b.r)).into_iter().collect()
    } else {
        inner
    };
    let k = pool.iter().map(|p| p.kappa).fold(f64::NEG_INFINITY, f64::max);
    let m = pool.iter().map(|p| p.mu).fold(f64::INFINITY, f64::min);
    (k, m)
}

fn verdict_from_tail(theorem: Theorem, side: CurvatureSide, tail: TailStatus) -> Verdict {
    match (theorem, side, tail) {
        (Theorem::MuBalance, CurvatureSide::LowerBound, TailStatus::Diverges) => Verdict::WParabolic,
        (Theorem::MuBalance, _, _) => Verdict::Undecided,
        (_, CurvatureSide::UpperBound, TailStatus::Converges) => Verdict::WHyperbolic,
        (_, CurvatureSide::LowerBound, TailStatus::Diverges) => Verdict::WParabolic,
        _ => Verdict::Undecided,
    }
}

fn parameters(spec: &CriterionSpec, n: usize, s: &SampleSet, c: &Ctx) -> Parameters {
    let bounded = spec.theorem == Theorem::BoundedEigen;
    Parameters {
        dimension: n,
        q: c.q,
        rho: spec.rho,
        w: spec.w.label().into(),
        theta: c.theta.label(),
        h: c.theta.weight_label(spec.rho),
        side: spec.side,
        horizon_requested: s.horizon_requested,
        horizon_effective: s.horizon_effective,
        budget: s.budget,
        samples_used: s.points.len(),
        seed: s.seed,
        kappa_ref: bounded.then_some(c.kappa_ref),
        mu_ref: bounded.then_some(c.mu_ref),
        growth_factor: bounded.then_some(c.factor),
        note: format!("hypotheses sampled on [{}, {}]", spec.rho, s.horizon_effective),
    }
}

fn capacity_bound(m: &ChartManifold, w: &ConductivityField, spec: &CriterionSpec, n: usize) -> Result<Option<CapacityBound>> {
    let Some(big_r) = spec.bound_radius else { return Ok(None) };
    if n != 2 || !matches!(spec.theorem, Theorem::MainComparison | Theorem::DivergenceFree | Theorem::Isotropic) {
        return Ok(None);
    }
    let model = spec.comparison_model(n)?;
    let sol = model::radial_solution(&model, spec.rho, big_r)?;
    let vol_w = capacity::vol_w_sphere(m, w, spec.rho, BOUND_THETA_POINTS)?;
    let direction = match spec.side {
        CurvatureSide::UpperBound => BoundDirection::CapacityAtLeast,
        CurvatureSide::LowerBound => BoundDirection::CapacityAtMost,
    };
    Ok(Some(CapacityBound {
        rho: spec.rho,
        big_r,
        value: -sol.derivative_at_rho * vol_w,
        direction,
        phi_prime: sol.derivative_at_rho,
        vol_w,
    }))
}

/// Certifies `spec` against an existing sample; no reference handling.
fn certify(m: &ChartManifold, w: &ConductivityField, spec: &CriterionSpec, s: &SampleSet) -> Result<ClassificationReport> {
    certify_sample(spec, m.dim(), s, |all_margins| {
        if all_margins {
            capacity_bound(m, w, spec, m.dim())
        } else {
            Ok(None)
        }
    })
}

/// Certifies `spec` against a sample whose model dimension is `n`. The
/// `bound` callback receives whether every margin held.
pub(crate) fn certify_sample(
    spec: &CriterionSpec,
    n: usize,
    s: &SampleSet,
    bound: impl FnOnce(bool) -> Result<Option<CapacityBound>>,
) -> Result<ClassificationReport> {
    let mut c = Ctx::from_spec(spec, n);
    if spec.theorem == Theorem::BoundedEigen {
        let (k, mu) = spectrum_reference(&s.points, spec.rho);
        c.kappa_ref = k;
        c.mu_ref = mu;
    }
    let margins: Vec<Margin> = margin_kinds(spec.theorem).iter().map(|&k| worst_margin(k, &c, &s.points)).collect();
    let mut failing: Vec<String> = s.invalid.clone();
    if s.points.is_empty() {
        failing.push("no valid samples".into());
    }
    if s.horizon_effective < 2.0 * spec.rho {
        failing.push(format!("effective horizon {} below 2 rho", s.horizon_effective));
    }
    if matches!(spec.theorem, Theorem::CVCriterion | Theorem::ExtrinsicCV) && n < 3 {
        failing.push(format!("cv criterion needs dimension >= 3, got {n}"));
    }
    if spec.theorem == Theorem::MuBalance && spec.side != CurvatureSide::LowerBound {
        failing.push("mu balance certifies parabolicity only (lower curvature bound)".into());
    }
    for mg in &margins {
        if !mg.satisfied {
            failing.push(format!("{:?}: worst {} (tol {}) at r = {}", mg.kind, mg.worst, mg.tolerance, mg.witness_radius));
        }
    }
    let mut tail_evidence = None;
    let mut verdict = match spec.theorem {
        Theorem::CVCriterion | Theorem::ExtrinsicCV => Verdict::WHyperbolic,
        Theorem::BoundedEigen => Verdict::Undecided,
        _ => {
            let model = spec.comparison_model(n)?;
            let t = model::tail_convergence_with(&model, spec.rho, spec.exec);
            let v = verdict_from_tail(spec.theorem, spec.side, t.status);
            if v == Verdict::Undecided {
                failing.push(format!("tail {:?} does not match side {:?}", t.status, spec.side));
            }
            tail_evidence = Some(t);
            v
        }
    };
    if !failing.is_empty() {
        verdict = Verdict::Undecided;
    }
    let all_margins = margins.iter().all(|mg| mg.satisfied) && s.invalid.is_empty();
    let capacity_bound = bound(all_margins)?;
    if spec.theorem == Theorem::BoundedEigen {
        let growth: Vec<&Margin> = margins.iter().filter(|mg| !mg.satisfied).collect();
        if let Some(g) = growth.first() {
            return Err(Error::UnboundedSpectrumDetected(format!(
                "{:?} worst {} at r = {} (kappa_ref {}, mu_ref {}, factor {})",
                g.kind, g.worst, g.witness_radius, c.kappa_ref, c.mu_ref, c.factor
            )));
        }
    }
    Ok(ClassificationReport {
        verdict,
        theorem: spec.theorem,
        parameters: parameters(spec, n, s, &c),
        margins,
        tail_evidence,
        capacity_bound,
        failing,
        reference: None,
    })
}

fn sample_for(m: &ChartManifold, w: &ConductivityField, spec: &CriterionSpec) -> Result<SampleSet> {
    sample_annulus(m, w, spec.rho, spec.horizon, spec.budget, spec.seed, Needs::for_theorem(spec.theorem), spec.exec)
}

fn expect_theorem(spec: &CriterionSpec, allowed: &[Theorem]) -> Result<()> {
    if allowed.contains(&spec.theorem) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("criterion {} passed to a checker for {:?}", spec.theorem, allowed)))
    }
}

pub fn check_main(m: &ChartManifold, w: &ConductivityField, spec: &CriterionSpec) -> Result<ClassificationReport> {
    expect_theorem(spec, &[Theorem::MainComparison])?;
    certify(m, w, spec, &sample_for(m, w, spec)?)
}

pub fn check_divergence_free(m: &ChartManifold, w: &ConductivityField, spec: &CriterionSpec) -> Result<ClassificationReport> {
    expect_theorem(spec, &[Theorem::DivergenceFree])?;
    certify(m, w, spec, &sample_for(m, w, spec)?)
}

pub fn check_balance(m: &ChartManifold, w: &ConductivityField, spec: &CriterionSpec) -> Result<ClassificationReport> {
    expect_theorem(spec, &[Theorem::KappaBalance, Theorem::MuBalance])?;
    certify(m, w, spec, &sample_for(m, w, spec)?)
}

pub fn check_cv(m: &ChartManifold, w: &ConductivityField, spec: &CriterionSpec) -> Result<ClassificationReport> {
    expect_theorem(spec, &[Theorem::CVCriterion])?;
    certify(m, w, spec, &sample_for(m, w, spec)?)
}

/// Isotropic W = e^f Id: the main comparison plus an isotropy check.
pub fn check_isotropic(m: &ChartManifold, w: &ConductivityField, spec: &CriterionSpec) -> Result<ClassificationReport> {
    expect_theorem(spec, &[Theorem::Isotropic])?;
    certify(m, w, spec, &sample_for(m, w, spec)?)
}

/// Transfers `reference` (the verdict for (M, g)) when W has sampled bounded
/// eigenvalues.
pub fn check_bounded_eigen(
    m: &ChartManifold,
    w: &ConductivityField,
    spec: &CriterionSpec,
    reference: &ClassificationReport,
) -> Result<ClassificationReport> {
    expect_theorem(spec, &[Theorem::BoundedEigen])?;
    let mut rep = certify(m, w, spec, &sample_for(m, w, spec)?)?;
    if rep.failing.is_empty() {
        rep.verdict = reference.verdict;
        if reference.verdict == Verdict::Undecided {
            rep.failing.push("reference verdict undecided".into());
        }
    }
    rep.reference = Some(Box::new(reference.clone()));
    Ok(rep)
}

/// Dispatches on `spec.theorem`. For [`Theorem::BoundedEigen`] the reference
/// criterion is run on (M, g) with W = Id first.
pub fn classify(m: &ChartManifold, w: &ConductivityField, spec: &CriterionSpec) -> Result<ClassificationReport> {
    match spec.theorem {
        Theorem::MainComparison => check_main(m, w, spec),
        Theorem::DivergenceFree => check_divergence_free(m, w, spec),
        Theorem::KappaBalance | Theorem::MuBalance => check_balance(m, w, spec),
        Theorem::CVCriterion => check_cv(m, w, spec),
        Theorem::Isotropic => check_isotropic(m, w, spec),
        Theorem::ExtrinsicComparison | Theorem::ExtrinsicBalance | Theorem::ExtrinsicCV => Err(Error::InvalidParameter(
            format!("criterion {} applies to submanifolds; use submanifold::classify_extrinsic", spec.theorem),
        )),
        Theorem::BoundedEigen => {
            let rs = spec
                .reference
                .as_deref()
                .ok_or_else(|| Error::InvalidParameter("bounded-eigenvalue criterion needs a reference criterion".into()))?;
            if rs.theorem == Theorem::BoundedEigen {
                return Err(Error::InvalidParameter("reference criterion cannot itself be bounded-eigenvalue".into()));
            }
            let reference = classify(m, &ConductivityField::identity(m.dim()), rs)?;
            check_bounded_eigen(m, w, spec, &reference)
        }
    }
}

/// One re-evaluated margin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayRow {
    pub kind: MarginKind,
    pub recorded: f64,
    pub recomputed: f64,
    pub identical: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayOutcome {
    pub rows: Vec<ReplayRow>,
    pub reference: Option<Box<ReplayOutcome>>,
}

impl ReplayOutcome {
    pub fn all_identical(&self) -> bool {
        self.rows.iter().all(|r| r.identical) && self.reference.as_ref().map_or(true, |r| r.all_identical())
    }
}

/// Re-evaluates every margin of `report` at its witness point.
pub fn replay(m: &ChartManifold, w: &ConductivityField, spec: &CriterionSpec, report: &ClassificationReport) -> Result<ReplayOutcome> {
    let n = m.dim();
    let mut c = Ctx::from_spec(spec, n);
    c.kappa_ref = report.parameters.kappa_ref.unwrap_or(f64::NAN);
    c.mu_ref = report.parameters.mu_ref.unwrap_or(f64::NAN);
    let needs = Needs::for_theorem(spec.theorem);
    let mut rows = Vec::with_capacity(report.margins.len());
    for mg in &report.margins {
        let recomputed = if mg.witness.is_empty() {
            f64::NAN
        } else {
            margin_at(mg.kind, &c, &evaluate_point(m, w, &mg.witness, needs)?).0
        };
        rows.push(ReplayRow {
            kind: mg.kind,
            recorded: mg.worst,
            recomputed,
            identical: recomputed.to_bits() == mg.worst.to_bits(),
        });
    }
    let reference = match (&report.reference, spec.reference.as_deref()) {
        (Some(r), Some(rs)) => Some(Box::new(replay(m, &ConductivityField::identity(n), rs, r)?)),
        _ => None,
    };
    Ok(ReplayOutcome { rows, reference })
}

/// Index pairs of reports with opposite decisive verdicts.
pub fn contradictions(reports: &[ClassificationReport]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            let (a, b) = (reports[i].verdict, reports[j].verdict);
            if a.is_decisive() && b.is_decisive() && a != b {
                out.push((i, j));
            }
        }
    }
    out
}

/// Candidate q values searched by [`auto_classify`].
pub const Q_GRID: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];

#[derive(Clone, Debug, Serialize)]
pub struct Attempt {
    pub label: String,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct AutoReport {
    pub report: ClassificationReport,
    pub attempts: Vec<Attempt>,
    /// Pairs of attempts with opposite verdicts; must stay empty.
    pub contradictions: Vec<(usize, usize)>,
}

/// Affine fit of ⟨div W,∇r⟩/⟨W∇r,∇r⟩ against r, shifted so that it bounds
/// the data from below (`UpperBound`) or above (`LowerBound`).
fn fitted_theta(points: &[PointData], side: CurvatureSide) -> Option<Theta> {
    let data: Vec<(f64, f64)> = points.iter().map(|p| (p.r, p.divr / p.wrr)).filter(|(_, y)| y.is_finite()).collect();
    if data.len() < 2 {
        return None;
    }
    let n = data.len() as f64;
    let mx = data.iter().map(|d| d.0).sum::<f64>() / n;
    let my = data.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|d| (d.0 - mx).powi(2)).sum();
    let sxy: f64 = data.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let bounding = |a: f64, b: f64| {
        let shift = match side {
            CurvatureSide::UpperBound => data.iter().map(|&(x, y)| a + b * x - y).fold(0.0, f64::max),
            CurvatureSide::LowerBound => -data.iter().map(|&(x, y)| y - a - b * x).fold(0.0, f64::max),
        };
        a - shift
    };
    // Terms whose whole contribution to h over the sampled radii is
    // rounding noise would otherwise decide the tail far outside them
    // (h ~ 1e-16 t² converges near t ~ 1e8).
    let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| (l.min(d.0), h.max(d.0)));
    let (a, b) = if b.abs() * (hi * hi - lo * lo) / 2.0 < THETA_NOISE { (bounding(my, 0.0), 0.0) } else { (bounding(my - b * mx, b), b) };
    if b == 0.0 && a.abs() * (hi - lo) < THETA_NOISE {
        return None; // same as θ = 0, which is always tried
    }
    Some(Theta::Affine { a, b })
}

/// Tries the main comparison over a q grid (plus the sampled extreme q) and
/// θ ∈ {0, fitted affine}, then the divergence-free and cv criteria; returns
/// the first decisive certificate.
pub fn auto_classify(m: &ChartManifold, w: &ConductivityField, base: &CriterionSpec) -> Result<AutoReport> {
    let n = m.dim();
    let mut needs = Needs::ALL;
    needs.sectional_max = n >= 3;
    let s = sample_annulus(m, w, base.rho, base.horizon, base.budget, base.seed, needs, base.exec)?;
    let ratios: Vec<f64> = s.points.iter().map(|p| p.trace / p.wrr).filter(|v| v.is_finite()).collect();
    let q_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let q_max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut candidates: Vec<CriterionSpec> = Vec::new();
    for side in [CurvatureSide::UpperBound, CurvatureSide::LowerBound] {
        let mut qs: Vec<f64> = Q_GRID.to_vec();
        let extra = if side == CurvatureSide::UpperBound { q_min } else { q_max };
        if extra.is_finite() && extra > 0.0 {
            qs.push(extra);
        }
        let mut thetas = vec![Theta::Zero];
        if let Some(t) = fitted_theta(&s.points, side) {
            thetas.push(t);
        }
        for q in &qs {
            for th in &thetas {
                let mut c = base.clone();
                c.theorem = Theorem::MainComparison;
                c.q = *q;
                c.theta = th.clone();
                c.side = side;
                candidates.push(c);
            }
        }
        for q in &qs {
            let mut c = base.clone();
            c.theorem = Theorem::DivergenceFree;
            c.q = *q;
            c.side = side;
            candidates.push(c);
        }
    }
    if n >= 3 {
        let mut c = base.clone();
        c.theorem = Theorem::CVCriterion;
        candidates.push(c);
    }
    let mut attempts = Vec::new();
    let mut reports = Vec::new();
    let mut chosen: Option<ClassificationReport> = None;
    for c in &candidates {
        debug_assert!(s.needs.covers(Needs::for_theorem(c.theorem)));
        let rep = certify(m, w, c, &s)?;
        attempts.push(Attempt {
            label: format!("{} q={} theta={} side={:?}", c.theorem, c.q, c.theta.label(), c.side),
            verdict: rep.verdict,
        });
        if chosen.is_none() && rep.verdict.is_decisive() {
            chosen = Some(rep.clone());
        }
        reports.push(rep);
    }
    let contradictions = contradictions(&reports);
    let report = match chosen {
        Some(r) => r,
        None => reports.into_iter().next().ok_or(Error::EmptySampleSet)?,
    };
    Ok(AutoReport { report, attempts, contradictions })
}

/// The candidate spec behind an auto report, reconstructed from its label
/// fields, for replay.
pub fn spec_from_report(base: &CriterionSpec, report: &ClassificationReport, theta: Theta) -> CriterionSpec {
    let mut c = base.clone();
    c.theorem = report.theorem;
    c.q = report.parameters.q;
    c.side = report.parameters.side;
    c.theta = theta;
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    fn wla(l: f64, a: f64) -> (ChartManifold, ConductivityField) {
        let nc = zoo::w_lambda_alpha(l, a).unwrap();
        (nc.chart, nc.field)
    }

    fn phase_spec(l: f64, a: f64) -> CriterionSpec {
        zoo::w_lambda_alpha_spec(l, a)
    }

    #[test]
    fn plane_with_identity_is_parabolic() {
        let m = ChartManifold::euclidean(2);
        let spec = CriterionSpec::simple(Theorem::MainComparison, 2.0, 1.0, CurvatureSide::LowerBound).unwrap().with_budget(256);
        let rep = check_main(&m, &ConductivityField::identity(2), &spec).unwrap();
        assert_eq!(rep.verdict, Verdict::WParabolic, "{:?}", rep.failing);
        assert!(rep.margins.iter().all(|m| m.satisfied));
    }

    #[test]
    fn w_lambda_alpha_examples() {
        let (m, w) = wla(3.0, -0.2);
        let rep = classify(&m, &w, &phase_spec(3.0, -0.2).with_budget(512)).unwrap();
        assert_eq!(rep.verdict, Verdict::WParabolic, "{:?}", rep.failing);
        let (m, w) = wla(0.5, 1.0);
        let rep = classify(&m, &w, &phase_spec(0.5, 1.0).with_budget(512)).unwrap();
        assert_eq!(rep.verdict, Verdict::WHyperbolic, "{:?}", rep.failing);
        assert!(rep.parameters.horizon_effective < rep.parameters.horizon_requested);
    }

    #[test]
    fn wrong_q_is_refused() {
        let (m, w) = wla(4.0, -1.0);
        let spec = CriterionSpec::new(Theorem::MainComparison, Profile::identity(), 2.0, Theta::Affine { a: 0.0, b: -2.0 }, 1.0, CurvatureSide::LowerBound)
            .unwrap()
            .with_budget(256);
        let rep = check_main(&m, &w, &spec).unwrap();
        assert_eq!(rep.verdict, Verdict::Undecided);
        assert!(rep.failing.iter().any(|f| f.starts_with("TraceCondition")));
    }

    #[test]
    fn bounded_eigen_cases() {
        let (m, w) = wla(3.0, 0.0);
        let rep = classify(&m, &w, &phase_spec(3.0, 0.0).with_budget(256)).unwrap();
        assert_eq!(rep.verdict, Verdict::WParabolic);
        assert_eq!(rep.reference.as_ref().unwrap().verdict, Verdict::WParabolic);
        let (m, w) = wla(2.0, 0.5);
        let spec = CriterionSpec::bounded_eigen(
            CriterionSpec::new(Theorem::MainComparison, Profile::identity(), 2.0, Theta::Zero, 1.0, CurvatureSide::LowerBound).unwrap(),
        )
        .with_budget(256);
        assert!(matches!(classify(&m, &w, &spec), Err(Error::UnboundedSpectrumDetected(_))));
        let hyp = ChartManifold::warped(2, Profile::space_form(-1.0));
        let r = CriterionSpec::new(Theorem::MainComparison, Profile::space_form(-1.0), 2.0, Theta::Zero, 1.0, CurvatureSide::UpperBound)
            .unwrap()
            .with_budget(256)
            .with_horizon(16.0);
        let rep = classify(&hyp, &ConductivityField::identity(2), &CriterionSpec::bounded_eigen(r)).unwrap();
        assert_eq!(rep.verdict, Verdict::WHyperbolic, "{:?}", rep.failing);
    }

    #[test]
    fn divergence_free_cases() {
        let m = ChartManifold::euclidean(2);
        let spec = CriterionSpec::simple(Theorem::DivergenceFree, 2.0, 1.0, CurvatureSide::LowerBound).unwrap().with_budget(256);
        assert_eq!(check_divergence_free(&m, &ConductivityField::identity(2), &spec).unwrap().verdict, Verdict::WParabolic);
        let r6 = zoo::r6_example();
        let spec = CriterionSpec::simple(Theorem::DivergenceFree, 3.0, 1.0, CurvatureSide::UpperBound).unwrap().with_budget(256);
        let rep = check_divergence_free(&r6.chart, &r6.field, &spec).unwrap();
        assert_eq!(rep.verdict, Verdict::WHyperbolic, "{:?}", rep.failing);
    }

    #[test]
    fn cv_cases() {
        let spec = CriterionSpec::simple(Theorem::CVCriterion, 1.0, 1.0, CurvatureSide::UpperBound).unwrap().with_budget(256);
        let m3 = ChartManifold::euclidean(3);
        assert_eq!(check_cv(&m3, &ConductivityField::identity(3), &spec).unwrap().verdict, Verdict::WHyperbolic);
        let stretched = ConductivityField::new(3, "diag(1, 9, 1)", |_| {
            nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 9.0, 1.0]))
        });
        let cv = geometry::spectrum_at(&m3, &stretched, &[1.0, 0.0, 0.0]).unwrap().cv;
        assert!(cv > 1.0 / (2.0 * 3f64.sqrt()));
        let rep = check_cv(&m3, &stretched, &spec).unwrap();
        assert_eq!(rep.verdict, Verdict::Undecided);
        let r6 = zoo::r6_example();
        assert_eq!(check_cv(&r6.chart, &r6.field, &spec).unwrap().verdict, Verdict::WHyperbolic);
        let m2 = ChartManifold::euclidean(2);
        assert_eq!(check_cv(&m2, &ConductivityField::identity(2), &spec).unwrap().verdict, Verdict::Undecided);
    }

    #[test]
    fn balance_cases() {
        let m = ChartManifold::euclidean(2);
        let spec = CriterionSpec::simple(Theorem::KappaBalance, 2.0, 1.0, CurvatureSide::LowerBound).unwrap().with_budget(128);
        let rep = check_balance(&m, &ConductivityField::identity(2), &spec).unwrap();
        assert_eq!(rep.verdict, Verdict::Undecided);
        assert!(rep.failing.iter().any(|f| f.starts_with("Balance")));

        let bulb = Profile::new("bulb", |t: f64| 0.5 * (1.0 - (-2.0 * t).exp()) + t * t * (-t).exp())
            .with_derivatives(
                |t: f64| (-2.0 * t).exp() + (2.0 * t - t * t) * (-t).exp(),
                |t: f64| -2.0 * (-2.0 * t).exp() + (2.0 - 4.0 * t + t * t) * (-t).exp(),
            );
        let wb = bulb.clone();
        let theta = Profile::new("-2w'/w", move |t| -2.0 * wb.d1(t) / wb.value(t));
        let mb = ChartManifold::warped(2, bulb.clone());
        let spec = CriterionSpec::new(Theorem::MuBalance, bulb, 2.0, Theta::Custom(theta), 3.0, CurvatureSide::LowerBound)
            .unwrap()
            .with_budget(256);
        let rep = check_balance(&mb, &ConductivityField::identity(2), &spec).unwrap();
        assert_eq!(rep.verdict, Verdict::WParabolic, "{:?}", rep.failing);
    }

    #[test]
    fn isotropic_matches_weighted_tail() {
        // W = e^{-r^2/2} Id on R^2: h = -r^2/2 diverges, so parabolic.
        let m = ChartManifold::euclidean(2);
        let w = ConductivityField::isotropic(2, "e^{-r^2/2}", |x| -0.5 * (x[0] * x[0] + x[1] * x[1]));
        let spec = CriterionSpec::new(Theorem::Isotropic, Profile::identity(), 2.0, Theta::Affine { a: 0.0, b: -1.0 }, 1.0, CurvatureSide::LowerBound)
            .unwrap()
            .with_budget(256);
        let rep = check_isotropic(&m, &w, &spec).unwrap();
        let direct = model::tail_convergence(&spec.comparison_model(2).unwrap(), 1.0);
        assert_eq!(direct.status, TailStatus::Diverges);
        assert_eq!(rep.verdict, Verdict::WParabolic, "{:?}", rep.failing);
    }

    #[test]
    fn replay_is_bit_identical_and_exec_independent() {
        let (m, w) = wla(4.0, 0.1);
        let spec = phase_spec(4.0, 0.1).with_budget(300).with_seed(7);
        let a = classify(&m, &w, &spec).unwrap();
        let b = classify(&m, &w, &spec.clone().with_exec(Exec::Sequential)).unwrap();
        assert_eq!(a, b);
        assert!(replay(&m, &w, &spec, &a).unwrap().all_identical());
        let (m, w) = wla(0.25, 0.0);
        let spec = phase_spec(0.25, 0.0).with_budget(200).with_seed(3);
        let rep = classify(&m, &w, &spec).unwrap();
        let out = replay(&m, &w, &spec, &rep).unwrap();
        assert!(out.all_identical() && out.reference.is_some());
    }

    #[test]
    fn capacity_bound_is_reported() {
        let (m, w) = wla(2.0, 0.5);
        let spec = phase_spec(2.0, 0.5).with_budget(256).with_bound_radius(4.0);
        let rep = classify(&m, &w, &spec).unwrap();
        let b = rep.capacity_bound.unwrap();
        assert_eq!(b.direction, BoundDirection::CapacityAtLeast);
        // Vol_W(∂B_1) = 2π·3e^{1/2}; −φ'(1) = 1/∫_1^4 e^{−(t²−1)/2}.
        assert!((b.vol_w - 6.0 * std::f64::consts::PI * 0.5f64.exp()).abs() < 1e-9);
        assert!(b.value > 40.0 && b.value < 55.0);
    }

    #[test]
    fn auto_search_finds_consistent_certificates() {
        for (l, a) in [(1.0, -1.0), (4.0, 1.0)] {
            let (m, w) = wla(l, a);
            let base = CriterionSpec::simple(Theorem::MainComparison, 1.0, 1.0, CurvatureSide::UpperBound).unwrap().with_budget(256);
            let auto = auto_classify(&m, &w, &base).unwrap();
            let want = if a > 0.0 { Verdict::WHyperbolic } else { Verdict::WParabolic };
            assert_eq!(auto.report.verdict, want);
            assert!(auto.contradictions.is_empty());
        }
    }

    #[test]
    fn auto_search_ignores_noise_level_theta() {
        // Both gas tensors are divergence-free, so the fitted θ is pure
        // rounding noise and must not produce a verdict of its own.
        for st in [zoo::GasState::rigid_rotation(0.7, 1.2, 1.0), zoo::GasState::source_flow(0.5, 1.0, 1.0)] {
            let nc = zoo::gas_tensor(st);
            let base = CriterionSpec::simple(Theorem::DivergenceFree, 2.0, 1.0, CurvatureSide::UpperBound).unwrap().with_budget(256).with_seed(2);
            let auto = auto_classify(&nc.chart, &nc.field, &base).unwrap();
            assert!(auto.contradictions.is_empty(), "{:?}", auto.attempts);
            assert!(auto.report.verdict.is_decisive());
        }
    }

    #[test]
    fn named_tensor_corollaries() {
        let rot = zoo::gas_tensor(zoo::GasState::rigid_rotation(0.7, 1.2, 1.0));
        let spec = CriterionSpec::simple(Theorem::DivergenceFree, 3.0, 1.0, CurvatureSide::UpperBound).unwrap().with_budget(256);
        let rep = classify(&rot.chart, &rot.field, &spec).unwrap();
        assert_eq!(rep.verdict, Verdict::WHyperbolic, "{:?}", rep.failing);
        let src = zoo::gas_tensor(zoo::GasState::source_flow(0.5, 1.0, 1.0));
        let spec = CriterionSpec::simple(Theorem::DivergenceFree, 2.0, 1.0, CurvatureSide::LowerBound).unwrap().with_budget(256);
        let rep = classify(&src.chart, &src.field, &spec).unwrap();
        assert_eq!(rep.verdict, Verdict::WParabolic, "{:?}", rep.failing);
        let e = zoo::einstein_hyperbolic(3);
        let spec = CriterionSpec::new(Theorem::DivergenceFree, Profile::space_form(-1.0), 2.0, Theta::Zero, 1.0, CurvatureSide::UpperBound)
            .unwrap()
            .with_budget(128)
            .with_horizon(e.region.r_max);
        let rep = classify(&e.chart, &e.field, &spec).unwrap();
        assert_eq!(rep.verdict, Verdict::WHyperbolic, "{:?}", rep.failing);
    }

    #[test]
    fn invalid_inputs() {
        assert!(CriterionSpec::simple(Theorem::MainComparison, 1.0, 0.0, CurvatureSide::UpperBound).is_err());
        assert!(CriterionSpec::simple(Theorem::MainComparison, -1.0, 1.0, CurvatureSide::UpperBound).is_err());
        let m = ChartManifold::euclidean(2);
        let spec = CriterionSpec::simple(Theorem::CVCriterion, 1.0, 1.0, CurvatureSide::UpperBound).unwrap();
        assert!(check_main(&m, &ConductivityField::identity(2), &spec).is_err());
        let bad = ConductivityField::new(2, "indefinite", |_| nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        let spec = CriterionSpec::simple(Theorem::MainComparison, 2.0, 1.0, CurvatureSide::LowerBound).unwrap().with_budget(64);
        let rep = check_main(&m, &bad, &spec).unwrap();
        assert_eq!(rep.verdict, Verdict::Undecided);
        assert!(!rep.failing.is_empty());
    }
}
