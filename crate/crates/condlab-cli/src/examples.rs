// SPDX-License-Identifier: Apache-2.0

//! Named verification examples: each runs a fixed list of checks and
//! returns one row per claim.

use std::f64::consts::PI;
use std::fmt::Write as _;

use condlab::capacity;
use condlab::classifier::{self, CriterionSpec, CurvatureSide, Theorem, Theta, Verdict};
use condlab::geometry::{self, ChartManifold, ConductivityField, PointFn};
use condlab::model::{self, WarpedModel};
use condlab::profile::Profile;
use condlab::sampling::Halton;
use condlab::submanifold::{self, ImmersedSubmanifold};
use condlab::tensor::MetricAtPoint;
use condlab::zoo;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

pub const NAMES: [&str; 10] = [
    "intro-cylinder",
    "warped-cylinder",
    "wlambdaalpha-phase",
    "r6",
    "schouten",
    "einstein",
    "newton-p1",
    "gas",
    "sigma-family",
    "paraboloid",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown example '{0}'; known examples: {}", NAMES.join(", "))]
pub struct UnknownExample(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Pass,
    Fail,
}

/// One verified claim.
#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub claim: String,
    /// Where the claim comes from, in words.
    pub anchor: String,
    pub computed: String,
    pub expected: String,
    pub status: Status,
}

fn row(claim: impl Into<String>, anchor: &str, computed: impl Into<String>, expected: impl Into<String>, ok: bool) -> Row {
    Row {
        claim: claim.into(),
        anchor: anchor.into(),
        computed: computed.into(),
        expected: expected.into(),
        status: if ok { Status::Pass } else { Status::Fail },
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

fn verdict_row(claim: impl Into<String>, anchor: &str, got: Verdict, want: Verdict) -> Row {
    row(claim, anchor, got.to_string(), want.to_string(), got == want)
}

/// Runs the example called `name`.
pub fn run(name: &str) -> anyhow::Result<Vec<Row>> {
    match name {
        "intro-cylinder" => intro_cylinder(),
        "warped-cylinder" => warped_cylinder(),
        "wlambdaalpha-phase" => wlambdaalpha_phase(),
        "r6" => r6(),
        "schouten" => schouten(),
        "einstein" => einstein(),
        "newton-p1" => newton_p1(),
        "gas" => gas(),
        "sigma-family" => sigma_family(),
        "paraboloid" => paraboloid(),
        other => Err(UnknownExample(other.to_string()).into()),
    }
}

pub fn all_passed(rows: &[Row]) -> bool {
    rows.iter().all(|r| r.status == Status::Pass)
}

/// Fixed-width text table.
pub fn render(rows: &[Row]) -> String {
    let head = ["claim", "anchor", "computed", "expected", "status"];
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| [r.claim.clone(), r.anchor.clone(), r.computed.clone(), r.expected.clone(), format!("{:?}", r.status).to_uppercase()])
        .collect();
    let mut width = head.map(|h| h.chars().count());
    for c in &cells {
        for (k, s) in c.iter().enumerate() {
            width[k] = width[k].max(s.chars().count());
        }
    }
    let line = |c: &[String; 5]| {
        let mut s = String::new();
        for (k, v) in c.iter().enumerate() {
            let pad = width[k] - v.chars().count();
            let _ = write!(s, "{}{}{}", v, " ".repeat(pad), if k < 4 { " | " } else { "" });
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&head.map(String::from));
    out += &(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-") + "\n");
    for c in &cells {
        out += &line(c);
    }
    out
}

// ---- examples ---------------------------------------------------------------

fn intro_cylinder() -> anyhow::Result<Vec<Row>> {
    const ANCHOR: &str = "introduction: resistance of a conducting cylinder";
    let (alpha, c, len) = (1.0, 1.0, 10.0);
    let rho = 1.0;
    let want = 2.0 * PI * alpha * c / len;
    let model = WarpedModel::new(2.0, Profile::constant(alpha))?.with_v0(2.0 * PI);
    let cap = model::capacity_model(&model, rho, rho + len)? * c;
    let mut rows = vec![
        row(
            "Cap = 2*pi*alpha*c/L for (alpha, c, L) = (1, 1, 10)",
            ANCHOR,
            num(cap),
            num(want),
            (cap - want).abs() < 1e-8 * want,
        ),
        row("R_eff = 1/Cap = L/(2*pi*alpha*c)", ANCHOR, num(1.0 / cap), num(len / (2.0 * PI * alpha * c)), (1.0 / cap - len / (2.0 * PI)).abs() < 1e-8),
    ];
    let chart = ChartManifold::warped(2, Profile::constant(alpha)).with_label("flat cylinder");
    let ladder = capacity::doubling_ladder(16, 3);
    let est = capacity::capacity(&chart, &ConductivityField::scaled_identity(2, c), rho, rho + len, &ladder)?;
    let got = est.richardson_extrapolate;
    rows.push(row("grid capacity on the flat cylinder, W = c Id", ANCHOR, num(got), format!("{} within 1%", num(want)), (got - want).abs() < 0.01 * want));
    let est5 = capacity::capacity(&chart, &ConductivityField::scaled_identity(2, 5.0 * c), rho, rho + len, &ladder)?;
    let ratio = est5.richardson_extrapolate / got;
    rows.push(row("Cap scales linearly with c (c = 5)", ANCHOR, num(ratio), num(5.0), (ratio - 5.0).abs() < 1e-8));
    Ok(rows)
}

fn warped_cylinder() -> anyhow::Result<Vec<Row>> {
    const ANCHOR: &str = "potential of a warped cylinder";
    let w = Profile::new("1 + r^2/4", |t: f64| 1.0 + 0.25 * t * t).with_derivatives(|t| 0.5 * t, |_| 0.5);
    let (rho, big_r) = (1.0, 3.0);
    let chart = ChartManifold::warped(2, w.clone());
    let grid = capacity::solve_dirichlet(&chart, &ConductivityField::identity(2), rho, big_r, 128, 16)?;
    let model = WarpedModel::new(2.0, w)?.with_v0(2.0 * PI);
    let sol = model::radial_solution(&model, rho, big_r)?;
    let mut err: f64 = 0.0;
    for i in 0..=grid.n_r {
        let r = rho + i as f64 * grid.dr();
        let exact = sol.value(r)?;
        for j in 0..grid.n_theta {
            err = err.max((grid.at(i, j) - exact).abs());
        }
    }
    let (lo, hi) = grid.min_max();
    let cap_model = model::capacity_model(&model, rho, big_r)?;
    let est = capacity::capacity(&chart, &ConductivityField::identity(2), rho, big_r, &capacity::doubling_ladder(32, 3))?;
    Ok(vec![
        row(
            "u(r) = int_r^R 1/w / int_rho^R 1/w on the grid (128 x 16)",
            ANCHOR,
            sci(err),
            "max nodal error < 1e-3",
            err < 1e-3,
        ),
        row("0 <= u <= 1", "maximum principle", format!("[{}, {}]", num(lo), num(hi)), "[0, 1]", lo >= 0.0 && hi <= 1.0),
        row(
            "grid capacity = 2*pi / int_rho^R 1/w",
            ANCHOR,
            num(est.richardson_extrapolate),
            format!("{} within 1%", num(cap_model)),
            (est.richardson_extrapolate - cap_model).abs() < 0.01 * cap_model,
        ),
        row("radial ODE residual", "weighted radial equation", sci(sol.ode_residual(1000)), "< 1e-8", sol.ode_residual(1000) < 1e-8),
    ])
}

/// Verdicts of the W_{λ,α} phase diagram; shared with the acceptance suite.
pub fn phase_grid() -> anyhow::Result<Vec<(f64, f64, Verdict)>> {
    let mut out = Vec::new();
    for lambda in [0.25, 1.0, 4.0] {
        for alpha in [-1.0, -0.1, 0.0, 0.1, 1.0] {
            let nc = zoo::w_lambda_alpha(lambda, alpha)?;
            let rep = classifier::classify(&nc.chart, &nc.field, &zoo::w_lambda_alpha_spec(lambda, alpha))?;
            out.push((lambda, alpha, rep.verdict));
        }
    }
    Ok(out)
}

fn wlambdaalpha_phase() -> anyhow::Result<Vec<Row>> {
    Ok(phase_grid()?
        .into_iter()
        .map(|(l, a, v)| {
            let want = if a > 0.0 { Verdict::WHyperbolic } else { Verdict::WParabolic };
            verdict_row(format!("W_{{{l},{a}}} on R^2"), "type of W_{lambda,alpha}: parabolic iff alpha <= 0", v, want)
        })
        .collect())
}

fn self_test_rows(nc: &zoo::NamedConductivity, count: usize, seed: u64, anchor: &str) -> anyhow::Result<Vec<Row>> {
    Ok(nc
        .self_test(count, seed)?
        .into_iter()
        .map(|c| {
            let expected = if c.tol > 0.0 { format!("< {}", sci(c.tol)) } else { "holds".into() };
            row(format!("{}: {} ({count} points)", nc.name, c.description), anchor, sci(c.worst_residual), expected, c.passed)
        })
        .collect())
}

fn r6() -> anyhow::Result<Vec<Row>> {
    const ANCHOR: &str = "six-dimensional divergence-free example";
    let nc = zoo::r6_example();
    let mut rows = self_test_rows(&nc, 100, 1, ANCHOR)?;
    let bound = 0.5f64.sqrt();
    let far = geometry::spectrum_at(&nc.chart, &nc.field, &[0.3, -0.2, 0.1, 0.0, 0.4, 5.0])?.cv;
    rows.push(row("cv approaches sqrt(1/2) at |x6| = 5", ANCHOR, num(far), num(bound), (bound - far).abs() < 1e-9 && far <= bound + 1e-9));
    let limit = 4.0 / (2.0 * 6f64.sqrt());
    rows.push(row("sqrt(1/2) < 4/(2 sqrt 6)", ANCHOR, num(bound), format!("< {}", num(limit)), bound < limit));
    let one: PointFn<f64> = std::sync::Arc::new(|_| 1.0);
    let g = zoo::equivalent_metric(&nc.chart, &nc.field, zoo::EquivalentFactor::Bounded(one))?;
    let c = geometry::curvature(&g, &[0.3, 0.1, -0.2, 0.5, 0.4, 0.0])?;
    let want = [0.25, -1.75, 0.25, 0.25, 0.25, -0.75];
    let got: Vec<f64> = (0..6).map(|i| c.ricci[(i, i)]).collect();
    let dev = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    rows.push(row(
        "Ricci of the equivalent metric at x6 = 0",
        ANCHOR,
        format!("diag({})", got.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>().join(", ")),
        "diag(1/4, -7/4, 1/4, 1/4, 1/4, -3/4) within 1e-4",
        dev < 1e-4,
    ));
    let spec = CriterionSpec::simple(Theorem::CVCriterion, 1.0, 1.0, CurvatureSide::UpperBound)?.with_budget(256);
    let rep = classifier::classify(&nc.chart, &nc.field, &spec)?;
    rows.push(verdict_row("cv criterion on R^6", ANCHOR, rep.verdict, Verdict::WHyperbolic));
    Ok(rows)
}

/// The curved test metric diag(1 + 0.3 x2², e^{0.4 x3}, 1 + 0.2 sin x1).
fn curved_metric() -> ChartManifold {
    ChartManifold::new(3, vec![(-2.0, 2.0); 3], |x| {
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 + 0.3 * x[1] * x[1], (0.4 * x[2]).exp(), 1.0 + 0.2 * x[0].sin()]))
    })
    .with_label("diag(1 + 0.3 x2^2, exp(0.4 x3), 1 + 0.2 sin x1)")
    .with_step(5e-3)
}

fn schouten() -> anyhow::Result<Vec<Row>> {
    const ANCHOR: &str = "Schouten tensor as a conductivity";
    let sphere = ChartManifold::warped(3, Profile::space_form(1.0));
    let s = zoo::schouten(&sphere)?;
    let dev = (s.at(&[1.0, 1.2, 0.4])? - DMatrix::identity(3, 3) * 0.5).amax();
    let mut rows = vec![row("S = Id/2 on the unit sphere S^3", ANCHOR, sci(dev), "deviation < 1e-5", dev < 1e-5)];
    let m = curved_metric();
    let sm = zoo::schouten(&m)?;
    let x = [0.1, 0.3, -0.2];
    for c in zoo::schouten_claims() {
        let r = c.residual(&m, &sm, &x)?;
        rows.push(row(format!("{} on a curved metric", c.description), ANCHOR, sci(r), format!("< {}", sci(c.tol)), r < c.tol));
    }
    let div = geometry::divergence_w(&m, &sm, &x)?;
    let grad = geometry::scalar_curvature_gradient(&m, &x)?;
    let k = 1.0 / 4.0;
    let g = m.metric_at(&x)?;
    let diff: Vec<f64> = div.iter().zip(&grad).map(|(a, b)| a - k * b).collect();
    let dev = g.norm(&diff);
    rows.push(row("div S = (n-2)/(2(n-1)) grad R", ANCHOR, sci(dev), "< 1e-5", dev < 1e-5));
    let hyp = ChartManifold::normal_coordinates(3, Profile::space_form(-1.0)).with_step(5e-3);
    let neg = zoo::schouten(&hyp)?.scaled(-1.0);
    let spec = CriterionSpec::new(Theorem::DivergenceFree, Profile::space_form(-1.0), 2.0, Theta::Zero, 1.0, CurvatureSide::UpperBound)?
        .with_budget(128)
        .with_horizon(3.0);
    let rep = classifier::classify(&hyp, &neg, &spec)?;
    rows.push(verdict_row("H^3 with W = -S (S negative definite, sec <= 0)", ANCHOR, rep.verdict, Verdict::WHyperbolic));
    Ok(rows)
}

fn einstein() -> anyhow::Result<Vec<Row>> {
    const ANCHOR: &str = "Einstein tensor as a conductivity";
    let e = zoo::einstein_hyperbolic(3);
    let dev = (e.field.at(&[0.9, -0.6, 0.3])? - DMatrix::identity(3, 3)).amax();
    let mut rows = vec![row("E = Id on H^3", ANCHOR, sci(dev), "deviation < 1e-5", dev < 1e-5)];
    rows.extend(self_test_rows(&e, 10, 11, ANCHOR)?);
    let m = curved_metric();
    let em = zoo::einstein(&m);
    let x = [0.1, 0.3, -0.2];
    let d = geometry::divergence_w(&m, &em, &x)?;
    let dn = m.metric_at(&x)?.norm(&d);
    rows.push(row("contracted Bianchi: div E = 0 on a curved metric", ANCHOR, sci(dn), "< 1e-5", dn < 1e-5));
    let spec = CriterionSpec::new(Theorem::DivergenceFree, Profile::space_form(-1.0), 2.0, Theta::Zero, 1.0, CurvatureSide::UpperBound)?
        .with_budget(128)
        .with_horizon(e.region.r_max);
    let rep = classifier::classify(&e.chart, &e.field, &spec)?;
    rows.push(verdict_row("H^3 with W = E", ANCHOR, rep.verdict, Verdict::WHyperbolic));
    Ok(rows)
}

/// Largest ‖div^Σ P_1‖ over `points` on an ellipsoid.
pub fn ellipsoid_p1_divergence(points: &[[f64; 2]]) -> anyhow::Result<f64> {
    let e = submanifold::ellipsoid(1.0, 2.0, 3.0);
    let mut worst: f64 = 0.0;
    for u in points {
        worst = worst.max(submanifold::newton_p1_divergence(&e, u)?.0);
    }
    Ok(worst)
}

/// Largest deviation of P_1 from Id on the unit sphere.
pub fn sphere_p1_deviation(points: &[[f64; 2]]) -> anyhow::Result<f64> {
    let s = submanifold::sphere(1.0);
    let mut worst: f64 = 0.0;
    for u in points {
        let p = submanifold::newton_p1(&submanifold::extrinsic_frame(&s, u)?)?;
        worst = worst.max((p - DMatrix::identity(2, 2)).amax());
    }
    Ok(worst)
}

fn newton_p1() -> anyhow::Result<Vec<Row>> {
    const ANCHOR: &str = "first Newton transformation as a conductivity";
    let pts = [[1.0, 0.5], [0.4, -2.0], [2.5, 1.7]];
    let dev = sphere_p1_deviation(&pts)?;
    let div = ellipsoid_p1_divergence(&[[0.8, 1.3], [2.0, -0.4], [1.4, 2.9]])?;
    let e = submanifold::ellipsoid(1.0, 2.0, 3.0);
    let pd = pts.iter().all(|u| {
        submanifold::extrinsic_frame(&e, u)
            .and_then(|f| submanifold::newton_p1(&f))
            .map(|p| submanifold::is_positive_definite(&p))
            .unwrap_or(false)
    });
    let p0 = submanifold::newton_p1(&submanifold::extrinsic_frame(&submanifold::plane(), &[0.5, 0.5])?)?;
    Ok(vec![
        row("P_1 = Id on the unit sphere", ANCHOR, sci(dev), "deviation < 1e-8", dev < 1e-8),
        row("div P_1 = 0 on the ellipsoid (1, 2, 3)", ANCHOR, sci(div), "< 1e-5", div < 1e-5),
        row("P_1 positive definite on the ellipsoid", ANCHOR, pd.to_string(), "true", pd),
        row("P_1 = 0 on a plane (not a conductivity)", ANCHOR, sci(p0.amax()), "0", p0.amax() < 1e-12 && !submanifold::is_positive_definite(&p0)),
    ])
}

/// Extremes of cos²∠(u, ∇r) over the self-test sample of a gas state.
fn cos2_range(state: &zoo::GasState, nc: &zoo::NamedConductivity) -> anyhow::Result<(f64, f64)> {
    let pts = nc.sample_points(200, 3)?;
    Ok(pts.iter().map(|x| state.cos2_angle(x)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c), hi.max(c))))
}

/// Gas-tensor verdicts (rotation in R³, source flow in R²) with their cos²
/// ranges; shared with the acceptance suite.
pub fn gas_verdicts() -> anyhow::Result<[(Verdict, (f64, f64)); 2]> {
    let rot_state = zoo::GasState::rigid_rotation(0.7, 1.2, 1.0);
    let rot = zoo::gas_tensor(rot_state.clone());
    let spec = CriterionSpec::simple(Theorem::DivergenceFree, 3.0, 1.0, CurvatureSide::UpperBound)?.with_budget(256);
    let v_rot = classifier::classify(&rot.chart, &rot.field, &spec)?.verdict;
    let src_state = zoo::GasState::source_flow(0.5, 1.0, 1.0);
    let src = zoo::gas_tensor(src_state.clone());
    let spec = CriterionSpec::simple(Theorem::DivergenceFree, 2.0, 1.0, CurvatureSide::LowerBound)?.with_budget(256);
    let v_src = classifier::classify(&src.chart, &src.field, &spec)?.verdict;
    Ok([(v_rot, cos2_range(&rot_state, &rot)?), (v_src, cos2_range(&src_state, &src)?)])
}

fn gas() -> anyhow::Result<Vec<Row>> {
    const ANCHOR: &str = "stress-energy tensor of a compressible gas";
    let [(v_rot, (_, rot_hi)), (v_src, (src_lo, _))] = gas_verdicts()?;
    let mut rows = vec![
        row("rigid rotation in R^3: cos^2 angle(u, grad r) <= 1/3", ANCHOR, num(rot_hi), "<= 1/3", rot_hi <= 1.0 / 3.0),
        verdict_row("rigid rotation in R^3", ANCHOR, v_rot, Verdict::WHyperbolic),
        row("source flow in R^2: cos^2 angle(u, grad r) >= 1/2", ANCHOR, num(src_lo), ">= 1/2", src_lo >= 0.5),
        verdict_row("source flow in R^2", ANCHOR, v_src, Verdict::WParabolic),
    ];
    rows.extend(self_test_rows(&zoo::gas_tensor(zoo::GasState::rigid_rotation(0.7, 1.2, 1.0)), 100, 5, ANCHOR)?);
    rows.extend(self_test_rows(&zoo::gas_tensor(zoo::GasState::source_flow(0.5, 1.0, 1.0)), 100, 5, ANCHOR)?);
    Ok(rows)
}

/// Largest mismatch/allowed ratio of the two H_W formulas over Halton points
/// of the sample box.
pub fn h_w_agreement(s: &ImmersedSubmanifold, w: &ConductivityField, count: usize) -> anyhow::Result<f64> {
    let h = Halton::new(2, 17);
    let b = s.sample_box().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let p = h.point(i);
        let u: Vec<f64> = (0..2).map(|k| b[k].0 + (b[k].1 - b[k].0) * p[k]).collect();
        let hw = submanifold::w_mean_curvature(s, w, &u)?;
        worst = worst.max(hw.mismatch / hw.allowed);
    }
    Ok(worst)
}

/// Largest relative W-compatibility defect over Halton points.
fn compatibility_defect(s: &ImmersedSubmanifold, w: &ConductivityField, count: usize) -> anyhow::Result<f64> {
    let h = Halton::new(2, 23);
    let b = s.sample_box().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let p = h.point(i);
        let u: Vec<f64> = (0..2).map(|k| b[k].0 + (b[k].1 - b[k].0) * p[k]).collect();
        worst = worst.max(submanifold::w_compatibility(s, w, &u, classifier::COMPAT_TOL)?.worst());
    }
    Ok(worst)
}

fn extrinsic_rows(
    anchor: &str,
    (s, w, spec): (ImmersedSubmanifold, ConductivityField, CriterionSpec),
    tail: f64,
    h_label: &str,
) -> anyhow::Result<Vec<Row>> {
    let agree = h_w_agreement(&s, &w, 50)?;
    let compat = compatibility_defect(&s, &w, 50)?;
    let rep = submanifold::classify_extrinsic(&s, &w, &spec.clone().with_budget(512))?;
    let got_tail = rep.tail_evidence.as_ref().and_then(|t| t.tail_estimate).unwrap_or(f64::NAN);
    let h = spec.theta.weight_label(spec.rho);
    Ok(vec![
        row(format!("W-compatibility of {}", s.label()), anchor, sci(compat), format!("< {}", sci(classifier::COMPAT_TOL)), compat < classifier::COMPAT_TOL),
        row("H_W trace and divergence formulas agree", anchor, format!("{} x allowance", sci(agree)), "< 1 (10x differencing error)", agree < 1.0),
        verdict_row(format!("type of {} with the inherited conductivity", s.label()), anchor, rep.verdict, Verdict::WHyperbolic),
        row(format!("certificate q = 1, h(t) = {h_label}"), anchor, format!("q = {}, h = {h}", rep.parameters.q), format!("q = 1, h = {h_label}"), rep.parameters.q == 1.0),
        row("tail integral of e^{-h}", anchor, num(got_tail), num(tail), (got_tail - tail).abs() < 1e-6),
    ])
}

fn sigma_family() -> anyhow::Result<Vec<Row>> {
    extrinsic_rows("hyperbolic cylinders x^2 - y^2 = sigma", submanifold::sigma_example(), 2.0, "(t - 1)/2")
}

/// min over `count` Halton samples with ρ ∈ [1.1, 6] of
/// ⟨2H_W, ∇r⟩ / (r^{16/9} e^{9r/8}).
pub fn paraboloid_pairing_ratio(count: usize) -> anyhow::Result<f64> {
    let (s, w, _) = submanifold::paraboloid_example();
    let h = Halton::new(2, 11);
    let mut worst = f64::INFINITY;
    for i in 0..count {
        let p = h.point(i);
        let u = [1.1 + 4.9 * p[0], -PI + 2.0 * PI * p[1]];
        let f = submanifold::extrinsic_frame(&s, &u)?;
        let r = s.ambient().distance(&f.x)?;
        let nr = DVector::from_vec(s.ambient().grad_r(&f.x)?);
        let hw = submanifold::w_mean_curvature(&s, &w, &u)?;
        let g = MetricAtPoint::new(f.metric.clone())?;
        let pairing = 2.0 * g.inner(hw.vector.as_slice(), nr.as_slice());
        worst = worst.min(pairing / submanifold::paraboloid_lambdas(r).0);
    }
    Ok(worst)
}

fn paraboloid() -> anyhow::Result<Vec<Row>> {
    const ANCHOR: &str = "paraboloid with an inherited conductivity";
    let mut rows = extrinsic_rows(ANCHOR, submanifold::paraboloid_example(), 1.0, "t - 3/2")?;
    let ratio = paraboloid_pairing_ratio(1000)?;
    rows.push(row("<2H_W, grad r> >= r^{16/9} e^{9r/8} (1000 samples, rho in [1.1, 6])", ANCHOR, num(ratio), "ratio >= 1", ratio >= 1.0 - 1e-9));
    let (s, _, spec) = submanifold::paraboloid_example();
    let rep = submanifold::classify_extrinsic(&s, &ConductivityField::identity(3), &spec.with_budget(256))?;
    rows.push(verdict_row("same certificate with W = Id", "a paraboloid is parabolic for the plain Laplacian", rep.verdict, Verdict::Undecided));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_names_are_rejected() {
        let e = run("no-such-example").unwrap_err();
        assert!(e.downcast_ref::<UnknownExample>().is_some());
    }

    #[test]
    fn table_is_aligned() {
        let rows = vec![row("a", "b", "1", "1", true), row("longer claim", "x", "2", "3", false)];
        let t = render(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("a            | b"));
        assert!(lines[3].ends_with("FAIL"));
    }
}
