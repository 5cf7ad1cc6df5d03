// SPDX-License-Identifier: Apache-2.0

//! JSON scenario schema and its translation into library objects.
//!
//! ```json
//! {
//!   "name": "W_{2,1}",
//!   "seed": 7,
//!   "manifold": { "kind": "euclidean", "dim": 2 },
//!   "conductivity": { "kind": "w_lambda_alpha", "lambda": 2, "alpha": 1 },
//!   "criterion": { "theorem": "main_comparison", "q": 1, "theta": "2*r", "rho": 1, "side": "upper" },
//!   "capacity": { "rho": 1, "R": 2, "n0": 32, "levels": 3 },
//!   "outputs": { "grid_resolution": [64, 64] }
//! }
//! ```
//!
//! Expressions follow [`crate::expr`]. Radial profiles (`w`, `theta`) may use
//! `r` only; metric and conductivity entries may use `x1..xn` and `r`, where
//! `r` is the chart's distance from the pole.

use std::path::Path;

use condlab::capacity::{self, SolverOptions};
use condlab::classifier::{CriterionSpec, CurvatureSide, Theorem, Theta};
use condlab::geometry::{ChartManifold, ConductivityField, Pole};
use condlab::par::Exec;
use condlab::profile::Profile;
use condlab::submanifold::{self, ImmersedSubmanifold};
use condlab::zoo;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::expr::{Expr, Vars};

/// A scenario that failed to parse or to resolve.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("schema error{}{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default(), if field.is_empty() { String::new() } else { format!(" in field '{field}'") })]
pub struct SchemaError {
    /// 1-based line in the scenario file, when known.
    pub line: Option<usize>,
    pub column: Option<usize>,
    /// Dotted path of the offending field.
    pub field: String,
    pub message: String,
}

// ---- raw schema -------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub manifold: Option<ManifoldSpec>,
    #[serde(default)]
    pub conductivity: Option<ConductivitySpec>,
    #[serde(default)]
    pub submanifold: Option<SubmanifoldSpec>,
    #[serde(default)]
    pub criterion: Option<CriterionInput>,
    #[serde(default)]
    pub capacity: Option<CapacityInput>,
    #[serde(default)]
    pub outputs: OutputsInput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Euclidean {
        dim: usize,
    },
    EuclideanPolar {},
    /// dr² + w(r)² g_S in hyperspherical coordinates.
    Warped {
        dim: usize,
        w: String,
    },
    /// The same model in geodesic normal coordinates.
    NormalCoordinates {
        dim: usize,
        w: String,
        #[serde(default)]
        step: Option<f64>,
    },
    /// Simply connected space form of curvature b.
    SpaceForm {
        dim: usize,
        curvature: f64,
        #[serde(default)]
        polar: bool,
    },
    /// Coordinate box with a metric given entrywise.
    Chart {
        dim: usize,
        /// One [lo, hi] pair per axis; null stands for an infinite end.
        bounds: Vec<[Option<f64>; 2]>,
        metric: Vec<Vec<String>>,
        #[serde(default)]
        pole: Option<PoleSpec>,
        #[serde(default)]
        step: Option<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PoleSpec {
    /// x1 is the distance and the chart is polar-adapted.
    Polar {},
    /// r = |x − center|.
    Cartesian { center: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConductivitySpec {
    Identity {},
    ScaledIdentity {
        c: f64,
    },
    /// W = e^f Id.
    Isotropic {
        f: String,
    },
    Diagonal {
        entries: Vec<String>,
    },
    /// Row-major W^i_j.
    Matrix {
        entries: Vec<Vec<String>>,
    },
    WLambdaAlpha {
        lambda: f64,
        alpha: f64,
    },
    R6 {},
    /// Schouten tensor of the manifold; `negate` gives −S.
    Schouten {
        #[serde(default)]
        negate: bool,
    },
    Einstein {},
    GasRotation {
        omega: f64,
        density: f64,
        p0: f64,
    },
    GasSource {
        k: f64,
        density: f64,
        p0: f64,
    },
    ParaboloidFrame {},
    SigmaFrame {},
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubmanifoldSpec {
    Plane {},
    Cylinder {},
    Paraboloid {},
    Sigma { sigma: f64 },
    Sphere { radius: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremName {
    MainComparison,
    DivergenceFree,
    KappaBalance,
    MuBalance,
    CvCriterion,
    BoundedEigen,
    Isotropic,
    ExtrinsicComparison,
    ExtrinsicBalance,
    ExtrinsicCv,
    /// Search over q, θ and criteria.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideName {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionInput {
    pub theorem: TheoremName,
    #[serde(default)]
    pub w: Option<String>,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub theta: Option<String>,
    pub rho: f64,
    #[serde(default)]
    pub side: Option<SideName>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub growth_factor: Option<f64>,
    #[serde(default)]
    pub bound_radius: Option<f64>,
    /// Riemannian criterion for `bounded_eigen`.
    #[serde(default)]
    pub reference: Option<Box<CriterionInput>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityInput {
    pub rho: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    /// Explicit [n_r, n_θ] rungs; overrides n0/levels.
    #[serde(default)]
    pub ladder: Option<Vec<[usize; 2]>>,
    #[serde(default)]
    pub n0: Option<usize>,
    #[serde(default)]
    pub levels: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// Also report the eigenvalue sandwich for Cap_W / Cap.
    #[serde(default)]
    pub ratio_bounds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceQuantity {
    /// Ambient distance from the origin.
    #[default]
    Radius,
    /// ⟨H_W, ∇r⟩.
    WMeanCurvatureRadial,
    /// |H_W|.
    WMeanCurvatureNorm,
    /// |H| (W = Id).
    MeanCurvatureNorm,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsInput {
    #[serde(default = "default_grid_csv")]
    pub grid_csv: String,
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: [usize; 2],
    #[serde(default = "default_surface_csv")]
    pub surface_csv: String,
    #[serde(default = "default_surface_resolution")]
    pub surface_resolution: [usize; 2],
    #[serde(default)]
    pub surface_quantity: SurfaceQuantity,
}

impl Default for OutputsInput {
    fn default() -> Self {
        OutputsInput {
            grid_csv: default_grid_csv(),
            grid_resolution: default_grid_resolution(),
            surface_csv: default_surface_csv(),
            surface_resolution: default_surface_resolution(),
            surface_quantity: SurfaceQuantity::default(),
        }
    }
}

fn default_grid_csv() -> String {
    "potential.csv".into()
}
fn default_grid_resolution() -> [usize; 2] {
    [64, 64]
}
fn default_surface_csv() -> String {
    "surface.csv".into()
}
fn default_surface_resolution() -> [usize; 2] {
    [48, 48]
}

// ---- resolved scenario ------------------------------------------------------

/// How the classifier is to be driven.
#[derive(Clone, Debug)]
pub enum CriterionPlan {
    Fixed(CriterionSpec),
    /// Base spec (ρ, horizon, budget, seed) for the automatic search.
    Auto(CriterionSpec),
}

#[derive(Clone, Debug)]
pub struct CapacityPlan {
    pub rho: f64,
    pub big_r: f64,
    pub ladder: Vec<(usize, usize)>,
    pub options: SolverOptions,
    pub ratio_bounds: bool,
}

/// A scenario with every name and expression resolved.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub name: String,
    pub seed: u64,
    pub manifold: ChartManifold,
    pub field: ConductivityField,
    pub submanifold: Option<ImmersedSubmanifold>,
    pub criterion: Option<CriterionPlan>,
    pub capacity: Option<CapacityPlan>,
    pub outputs: OutputsInput,
}

/// Scenario text plus the context needed to place errors.
struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    /// Error at `field`; the line is that of `needle` (a string value) when it
    /// occurs in the file, else that of the field's last key.
    fn err(&self, field: &str, needle: Option<&str>, message: impl Into<String>) -> SchemaError {
        let by_value = needle.and_then(|n| self.line_of(&format!("{:?}", n)));
        let key = field.rsplit('.').next().unwrap_or(field);
        let key = key.split('[').next().unwrap_or(key);
        let line = by_value.or_else(|| self.line_of(&format!("\"{key}\"")));
        SchemaError { line, column: None, field: field.to_string(), message: message.into() }
    }

    fn line_of(&self, pat: &str) -> Option<usize> {
        self.text.find(pat).map(|off| self.text[..off].matches('\n').count() + 1)
    }

    fn expr(&self, field: &str, src: &str, vars: Vars) -> Result<Expr, SchemaError> {
        Expr::parse(src, vars).map_err(|e| self.err(field, Some(src), e.to_string()))
    }

    fn profile(&self, field: &str, src: &str) -> Result<Profile, SchemaError> {
        Ok(profile_from_expr(src, self.expr(field, src, Vars::RADIAL)?))
    }

    fn positive(&self, field: &str, v: f64) -> Result<f64, SchemaError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(field, None, format!("must be positive and finite, got {v}")))
        }
    }
}

/// A radial profile with symbolic first and second derivatives.
pub fn profile_from_expr(label: &str, e: Expr) -> Profile {
    let d1 = e.diff_r();
    let d2 = d1.diff_r();
    Profile::new(label, move |t| e.eval_r(t)).with_derivatives(move |t| d1.eval_r(t), move |t| d2.eval_r(t))
}

/// θ from a radial expression: exact zero and affine expressions map to the
/// closed-form variants, anything else integrates numerically.
pub fn theta_from_expr(label: &str, e: Expr) -> Theta {
    let d1 = e.diff_r();
    if d1.diff_r() == Expr::Num(0.0) {
        let (a, b) = (e.eval_r(0.0), d1.eval_r(0.0));
        if a == 0.0 && b == 0.0 {
            return Theta::Zero;
        }
        if let Expr::Num(b) = d1 {
            return Theta::Affine { a, b };
        }
    }
    Theta::Custom(profile_from_expr(label, e))
}

/// Parses and deserializes scenario text.
pub fn parse(text: &str) -> Result<Scenario, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.to_string();
        let (mut line, mut column) = (inner.line(), inner.column());
        // Tagged enums are buffered, so serde reports unknown keys at the end
        // of the enclosing object; point at the key itself instead.
        if let Some(key) = message.strip_prefix("unknown field `").and_then(|m| m.split('`').next()) {
            let end = offset_of(text, line, column);
            if let Some(off) = text[..end].rfind(&format!("\"{key}\"")) {
                line = text[..off].matches('\n').count() + 1;
                column = off - text[..off].rfind('\n').map_or(0, |n| n + 1) + 1;
            }
        }
        SchemaError {
            line: Some(line).filter(|&l| l > 0),
            column: Some(column).filter(|&c| c > 0),
            field: if field == "." { String::new() } else { field },
            message,
        }
    })
}

/// Byte offset of a 1-based (line, column) position, clamped to the text.
fn offset_of(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column).min(text.len())
}

pub fn load(path: &Path) -> anyhow::Result<(Scenario, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let sc = parse(&text)?;
    Ok((sc, text))
}

fn radius_of(pole: &Option<Pole>, x: &[f64]) -> f64 {
    match pole {
        Some(Pole::Polar) => x[0],
        Some(Pole::Cartesian { center }) => x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt(),
        None => x.iter().map(|a| a * a).sum::<f64>().sqrt(),
    }
}

fn matrix_exprs(ctx: &Ctx, field: &str, rows: &[Vec<String>], n: usize) -> Result<Vec<Vec<Expr>>, SchemaError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(ctx.err(field, None, format!("expected a {n}x{n} array of expressions")));
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, s)| ctx.expr(&format!("{field}[{i}][{j}]"), s, Vars::chart(n)))
                .collect()
        })
        .collect()
}

fn eval_matrix(m: &[Vec<Expr>], x: &[f64], r: f64) -> DMatrix<f64> {
    let n = m.len();
    DMatrix::from_fn(n, n, |i, j| m[i][j].eval(x, r))
}

fn manifold(ctx: &Ctx, spec: &ManifoldSpec) -> Result<ChartManifold, SchemaError> {
    let dim_ok = |d: usize, min: usize| {
        if d >= min {
            Ok(d)
        } else {
            Err(ctx.err("manifold.dim", None, format!("dimension must be at least {min}, got {d}")))
        }
    };
    Ok(match spec {
        ManifoldSpec::Euclidean { dim } => ChartManifold::euclidean(dim_ok(*dim, 1)?),
        ManifoldSpec::EuclideanPolar {} => ChartManifold::euclidean_polar(),
        ManifoldSpec::Warped { dim, w } => ChartManifold::warped(dim_ok(*dim, 2)?, ctx.profile("manifold.w", w)?),
        ManifoldSpec::NormalCoordinates { dim, w, step } => {
            let m = ChartManifold::normal_coordinates(dim_ok(*dim, 1)?, ctx.profile("manifold.w", w)?);
            match step {
                Some(h) => m.with_step(ctx.positive("manifold.step", *h)?),
                None => m,
            }
        }
        ManifoldSpec::SpaceForm { dim, curvature, polar } => {
            let w = Profile::space_form(*curvature);
            if *polar {
                ChartManifold::warped(dim_ok(*dim, 2)?, w)
            } else {
                ChartManifold::normal_coordinates(dim_ok(*dim, 1)?, w)
            }
        }
        ManifoldSpec::Chart { dim, bounds, metric, pole, step } => {
            let n = dim_ok(*dim, 1)?;
            if bounds.len() != n {
                return Err(ctx.err("manifold.bounds", None, format!("expected {n} [lo, hi] pairs, got {}", bounds.len())));
            }
            let b: Vec<(f64, f64)> = bounds
                .iter()
                .map(|[lo, hi]| (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY)))
                .collect();
            if let Some(i) = b.iter().position(|(lo, hi)| !(lo < hi)) {
                return Err(ctx.err(&format!("manifold.bounds[{i}]"), None, "lower bound must be below upper bound"));
            }
            let pole = match pole {
                None => None,
                Some(PoleSpec::Polar {}) => Some(Pole::Polar),
                Some(PoleSpec::Cartesian { center }) => {
                    if center.len() != n {
                        return Err(ctx.err("manifold.pole.center", None, format!("expected {n} coordinates")));
                    }
                    Some(Pole::Cartesian { center: center.clone() })
                }
            };
            let g = matrix_exprs(ctx, "manifold.metric", metric, n)?;
            let p = pole.clone();
            let mut m = ChartManifold::new(n, b, move |x| eval_matrix(&g, x, radius_of(&p, x)))
                .with_label(format!("chart (n = {n})"));
            if let Some(p) = pole {
                m = m.with_pole(p);
            }
            if let Some(h) = step {
                m = m.with_step(ctx.positive("manifold.step", *h)?);
            }
            m
        }
    })
}

/// Field and, for zoo entries that carry one, their chart.
fn conductivity(
    ctx: &Ctx,
    spec: &ConductivitySpec,
    m: Option<&ChartManifold>,
) -> Result<(ConductivityField, Option<ChartManifold>), SchemaError> {
    let need_m = |what: &str| {
        m.cloned().ok_or_else(|| ctx.err("manifold", None, format!("conductivity '{what}' needs an explicit manifold")))
    };
    let pole_of = |m: &ChartManifold| m.pole().cloned();
    Ok(match spec {
        ConductivitySpec::Identity {} => (ConductivityField::identity(need_m("identity")?.dim()), None),
        ConductivitySpec::ScaledIdentity { c } => {
            let c = ctx.positive("conductivity.c", *c)?;
            (ConductivityField::scaled_identity(need_m("scaled_identity")?.dim(), c), None)
        }
        ConductivitySpec::Isotropic { f } => {
            let m = need_m("isotropic")?;
            let e = ctx.expr("conductivity.f", f, Vars::chart(m.dim()))?;
            let p = pole_of(&m);
            (ConductivityField::isotropic(m.dim(), format!("exp({f})*Id"), move |x| e.eval(x, radius_of(&p, x))), None)
        }
        ConductivitySpec::Diagonal { entries } => {
            let m = need_m("diagonal")?;
            let n = m.dim();
            if entries.len() != n {
                return Err(ctx.err("conductivity.entries", None, format!("expected {n} diagonal entries")));
            }
            let d: Vec<Expr> = entries
                .iter()
                .enumerate()
                .map(|(i, s)| ctx.expr(&format!("conductivity.entries[{i}]"), s, Vars::chart(n)))
                .collect::<Result<_, _>>()?;
            let p = pole_of(&m);
            let label = format!("diag({})", entries.join(", "));
            let f = ConductivityField::new(n, label, move |x| {
                let r = radius_of(&p, x);
                DMatrix::from_diagonal(&DVector::from_iterator(n, d.iter().map(|e| e.eval(x, r))))
            });
            (f, None)
        }
        ConductivitySpec::Matrix { entries } => {
            let m = need_m("matrix")?;
            let n = m.dim();
            let e = matrix_exprs(ctx, "conductivity.entries", entries, n)?;
            let p = pole_of(&m);
            (ConductivityField::new(n, "matrix conductivity", move |x| eval_matrix(&e, x, radius_of(&p, x))), None)
        }
        ConductivitySpec::WLambdaAlpha { lambda, alpha } => {
            let nc = zoo::w_lambda_alpha(*lambda, *alpha).map_err(|e| ctx.err("conductivity.lambda", None, e.to_string()))?;
            (nc.field, Some(nc.chart))
        }
        ConductivitySpec::R6 {} => {
            let nc = zoo::r6_example();
            (nc.field, Some(nc.chart))
        }
        ConductivitySpec::Schouten { negate } => {
            let m = need_m("schouten")?;
            let s = zoo::schouten(&m).map_err(|e| ctx.err("conductivity", None, e.to_string()))?;
            (if *negate { s.scaled(-1.0) } else { s }, None)
        }
        ConductivitySpec::Einstein {} => (zoo::einstein(&need_m("einstein")?), None),
        ConductivitySpec::GasRotation { omega, density, p0 } => {
            let nc = zoo::gas_tensor(zoo::GasState::rigid_rotation(*omega, *density, *p0));
            (nc.field, Some(nc.chart))
        }
        ConductivitySpec::GasSource { k, density, p0 } => {
            let nc = zoo::gas_tensor(zoo::GasState::source_flow(*k, *density, *p0));
            (nc.field, Some(nc.chart))
        }
        ConductivitySpec::ParaboloidFrame {} => (submanifold::paraboloid_conductivity(), Some(ChartManifold::euclidean(3))),
        ConductivitySpec::SigmaFrame {} => (submanifold::sigma_conductivity(), Some(ChartManifold::euclidean(3))),
    })
}

fn surface(ctx: &Ctx, spec: &SubmanifoldSpec) -> Result<ImmersedSubmanifold, SchemaError> {
    Ok(match spec {
        SubmanifoldSpec::Plane {} => submanifold::plane(),
        SubmanifoldSpec::Cylinder {} => submanifold::cylinder(),
        SubmanifoldSpec::Paraboloid {} => submanifold::paraboloid(),
        SubmanifoldSpec::Sigma { sigma } => {
            submanifold::sigma_surface(*sigma).map_err(|e| ctx.err("submanifold.sigma", None, e.to_string()))?
        }
        SubmanifoldSpec::Sphere { radius } => submanifold::sphere(ctx.positive("submanifold.radius", *radius)?),
        SubmanifoldSpec::Ellipsoid { a, b, c } => submanifold::ellipsoid(
            ctx.positive("submanifold.a", *a)?,
            ctx.positive("submanifold.b", *b)?,
            ctx.positive("submanifold.c", *c)?,
        ),
    })
}

fn theorem_of(t: TheoremName) -> Theorem {
    match t {
        TheoremName::MainComparison | TheoremName::Auto => Theorem::MainComparison,
        TheoremName::DivergenceFree => Theorem::DivergenceFree,
        TheoremName::KappaBalance => Theorem::KappaBalance,
        TheoremName::MuBalance => Theorem::MuBalance,
        TheoremName::CvCriterion => Theorem::CVCriterion,
        TheoremName::BoundedEigen => Theorem::BoundedEigen,
        TheoremName::Isotropic => Theorem::Isotropic,
        TheoremName::ExtrinsicComparison => Theorem::ExtrinsicComparison,
        TheoremName::ExtrinsicBalance => Theorem::ExtrinsicBalance,
        TheoremName::ExtrinsicCv => Theorem::ExtrinsicCV,
    }
}

fn criterion(ctx: &Ctx, c: &CriterionInput, field: &str, seed: u64, exec: Exec) -> Result<CriterionSpec, SchemaError> {
    let f = |k: &str| format!("{field}.{k}");
    let w = match &c.w {
        Some(s) => ctx.profile(&f("w"), s)?,
        None => Profile::identity(),
    };
    let theta = match &c.theta {
        Some(s) => theta_from_expr(s, ctx.expr(&f("theta"), s, Vars::RADIAL)?),
        None => Theta::Zero,
    };
    let side = match c.side.unwrap_or(SideName::Upper) {
        SideName::Upper => CurvatureSide::UpperBound,
        SideName::Lower => CurvatureSide::LowerBound,
    };
    let rho = ctx.positive(&f("rho"), c.rho)?;
    let q = ctx.positive(&f("q"), c.q.unwrap_or(1.0))?;
    let mut spec = CriterionSpec::new(theorem_of(c.theorem), w, q, theta, rho, side)
        .map_err(|e| ctx.err(field, None, e.to_string()))?
        .with_seed(seed)
        .with_exec(exec);
    if let Some(h) = c.horizon {
        if !(h > rho) {
            return Err(ctx.err(&f("horizon"), None, format!("horizon must exceed rho = {rho}, got {h}")));
        }
        spec = spec.with_horizon(h);
    }
    if let Some(b) = c.budget {
        if b == 0 {
            return Err(ctx.err(&f("budget"), None, "budget must be positive"));
        }
        spec = spec.with_budget(b);
    }
    if let Some(g) = c.growth_factor {
        spec = spec.with_growth_factor(ctx.positive(&f("growth_factor"), g)?);
    }
    if let Some(r) = c.bound_radius {
        if !(r > rho) {
            return Err(ctx.err(&f("bound_radius"), None, format!("bound radius must exceed rho = {rho}")));
        }
        spec = spec.with_bound_radius(r);
    }
    match (c.theorem, &c.reference) {
        (TheoremName::BoundedEigen, Some(r)) => {
            if r.theorem == TheoremName::BoundedEigen || r.theorem == TheoremName::Auto {
                return Err(ctx.err(&f("reference.theorem"), None, "reference must be a concrete Riemannian criterion"));
            }
            let reference = criterion(ctx, r, &f("reference"), seed, exec)?;
            let mut s = CriterionSpec::bounded_eigen(reference);
            s.growth_factor = spec.growth_factor;
            s.budget = spec.budget;
            s.horizon = spec.horizon;
            s.rho = spec.rho;
            Ok(s)
        }
        (TheoremName::BoundedEigen, None) => Err(ctx.err(&f("reference"), None, "bounded_eigen needs a reference criterion")),
        (_, Some(_)) => Err(ctx.err(&f("reference"), None, "only bounded_eigen takes a reference criterion")),
        _ => Ok(spec),
    }
}

fn capacity_plan(ctx: &Ctx, c: &CapacityInput, exec: Exec) -> Result<CapacityPlan, SchemaError> {
    let rho = ctx.positive("capacity.rho", c.rho)?;
    if !(c.big_r > rho) || !c.big_r.is_finite() {
        return Err(ctx.err("capacity.R", None, format!("R must exceed rho = {rho}, got {}", c.big_r)));
    }
    let ladder = match &c.ladder {
        Some(l) => l.iter().map(|p| (p[0], p[1])).collect(),
        None => capacity::doubling_ladder(c.n0.unwrap_or(32), c.levels.unwrap_or(3)),
    };
    if ladder.is_empty() || ladder.iter().any(|&(a, b)| a < capacity::MIN_RESOLUTION || b < capacity::MIN_RESOLUTION) {
        return Err(ctx.err(
            "capacity.ladder",
            None,
            format!("need at least one rung, each at least {0}x{0}", capacity::MIN_RESOLUTION),
        ));
    }
    let mut options = SolverOptions { exec, ..SolverOptions::default() };
    if let Some(t) = c.tol {
        options.tol = ctx.positive("capacity.tol", t)?;
    }
    if let Some(k) = c.max_iter {
        options.max_iter = k;
    }
    Ok(CapacityPlan { rho, big_r: c.big_r, ladder, options, ratio_bounds: c.ratio_bounds })
}

/// Resolves names and expressions; `text` is the file contents for error
/// locations.
pub fn resolve(sc: &Scenario, text: &str, exec: Exec) -> Result<Resolved, SchemaError> {
    let ctx = Ctx { text };
    let sub = sc.submanifold.as_ref().map(|s| surface(&ctx, s)).transpose()?;
    let declared = match (&sc.manifold, &sub) {
        (Some(m), _) => Some(manifold(&ctx, m)?),
        (None, Some(s)) => Some(s.ambient().clone()),
        (None, None) => None,
    };
    let spec = sc.conductivity.clone().unwrap_or(ConductivitySpec::Identity {});
    let (field, zoo_chart) = conductivity(&ctx, &spec, declared.as_ref())?;
    let m = match (declared, zoo_chart) {
        (Some(m), _) => m,
        (None, Some(z)) => z,
        (None, None) => return Err(ctx.err("manifold", None, "missing manifold")),
    };
    if field.dim() != m.dim() {
        return Err(ctx.err(
            "conductivity",
            None,
            format!("conductivity has dimension {} but the manifold has dimension {}", field.dim(), m.dim()),
        ));
    }
    if let Some(s) = &sub {
        if s.ambient().dim() != m.dim() {
            return Err(ctx.err("submanifold", None, format!("surfaces live in a {}-dimensional ambient", s.ambient().dim())));
        }
    }
    let criterion = match &sc.criterion {
        None => None,
        Some(c) => {
            let spec = criterion(&ctx, c, "criterion", sc.seed, exec)?;
            let extrinsic = matches!(
                c.theorem,
                TheoremName::ExtrinsicComparison | TheoremName::ExtrinsicBalance | TheoremName::ExtrinsicCv
            );
            if extrinsic && sub.is_none() {
                return Err(ctx.err("criterion.theorem", None, "extrinsic criteria need a submanifold"));
            }
            if !extrinsic && sub.is_some() {
                return Err(ctx.err("criterion.theorem", None, "a submanifold scenario needs an extrinsic criterion"));
            }
            Some(if c.theorem == TheoremName::Auto { CriterionPlan::Auto(spec) } else { CriterionPlan::Fixed(spec) })
        }
    };
    let capacity = sc.capacity.as_ref().map(|c| capacity_plan(&ctx, c, exec)).transpose()?;
    if capacity.is_some() && (m.dim() != 2 || m.pole().is_none()) {
        return Err(ctx.err("capacity", None, "capacity needs a two-dimensional manifold with a pole"));
    }
    Ok(Resolved {
        name: sc.name.clone().unwrap_or_else(|| "scenario".into()),
        seed: sc.seed,
        manifold: m,
        field,
        submanifold: sub,
        criterion,
        capacity,
        outputs: sc.outputs.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve_text(t: &str) -> Result<Resolved, SchemaError> {
        resolve(&parse(t)?, t, Exec::Sequential)
    }

    #[test]
    fn minimal_scenarios_resolve() {
        let r = resolve_text(r#"{"manifold": {"kind": "euclidean", "dim": 3}}"#).unwrap();
        assert_eq!(r.manifold.dim(), 3);
        assert_eq!(r.field.at(&[1.0, 2.0, 3.0]).unwrap(), DMatrix::identity(3, 3));
        let r = resolve_text(r#"{"conductivity": {"kind": "w_lambda_alpha", "lambda": 2, "alpha": 1}}"#).unwrap();
        assert_eq!(r.manifold.dim(), 2);
        let r = resolve_text(r#"{"submanifold": {"kind": "paraboloid"}, "conductivity": {"kind": "paraboloid_frame"}}"#).unwrap();
        assert_eq!(r.submanifold.unwrap().dim(), 2);
    }

    #[test]
    fn chart_metric_expressions() {
        let t = r#"{
          "manifold": {"kind": "chart", "dim": 2, "bounds": [[0.01, null], [null, null]],
                       "metric": [["1", "0"], ["0", "x1^2"]], "pole": {"kind": "polar"}},
          "conductivity": {"kind": "diagonal", "entries": ["1", "exp(r)"]}
        }"#;
        let r = resolve_text(t).unwrap();
        let g = r.manifold.metric_matrix(&[2.0, 0.3]).unwrap();
        assert_eq!(g[(1, 1)], 4.0);
        assert_eq!(r.field.at(&[2.0, 0.3]).unwrap()[(1, 1)], 2f64.exp());
    }

    #[test]
    fn theta_variants() {
        let th = |s: &str| theta_from_expr(s, Expr::parse(s, Vars::RADIAL).unwrap());
        assert!(matches!(th("0"), Theta::Zero));
        assert!(matches!(th("0*r"), Theta::Zero));
        match th("1 + 2*r") {
            Theta::Affine { a, b } => assert_eq!((a, b), (1.0, 2.0)),
            t => panic!("{t:?}"),
        }
        match th("0.5") {
            Theta::Affine { a, b } => assert_eq!((a, b), (0.5, 0.0)),
            t => panic!("{t:?}"),
        }
        assert!(matches!(th("r^2"), Theta::Custom(_)));
    }

    #[test]
    fn errors_carry_line_and_field() {
        let t = "{\n  \"manifold\": {\"kind\": \"euclidean\", \"dim\": 2},\n  \"criterion\": {\"theorem\": \"main_comparison\",\n     \"rho\": 1, \"theta\": \"2*rr\"}\n}";
        let e = resolve_text(t).unwrap_err();
        assert_eq!(e.field, "criterion.theta");
        assert_eq!(e.line, Some(4));
        let t = "{\n  \"manifold\": {\"kind\": \"euclidean\", \"dim\": 2},\n  \"criterion\": {\"theorem\": \"nope\", \"rho\": 1}\n}";
        let e = resolve_text(t).unwrap_err();
        assert_eq!(e.field, "criterion.theorem");
        assert_eq!(e.line, Some(3));
        let t = "{\n  \"manifold\": {\"kind\": \"euclidean\", \"dim\": 2, \"extra\": 1}\n}";
        let e = resolve_text(t).unwrap_err();
        assert!(e.message.contains("extra"), "{e}");
        assert_eq!(e.line, Some(2));
        let t = r#"{"conductivity": {"kind": "r6"}, "capacity": {"rho": 1, "R": 2}}"#;
        assert_eq!(resolve_text(t).unwrap_err().field, "capacity");
        let t = r#"{"manifold": {"kind": "euclidean", "dim": 2}, "capacity": {"rho": 2, "R": 1}}"#;
        assert_eq!(resolve_text(t).unwrap_err().field, "capacity.R");
        let t = r#"{"manifold": {"kind": "euclidean", "dim": 3}, "conductivity": {"kind": "w_lambda_alpha", "lambda": 1, "alpha": 0}}"#;
        assert_eq!(resolve_text(t).unwrap_err().field, "conductivity");
        let t = r#"{"conductivity": {"kind": "identity"}}"#;
        assert_eq!(resolve_text(t).unwrap_err().field, "manifold");
        let t = r#"{"manifold": {"kind": "euclidean", "dim": 2}, "criterion": {"theorem": "extrinsic_cv", "rho": 1}}"#;
        assert_eq!(resolve_text(t).unwrap_err().field, "criterion.theorem");
    }
}
