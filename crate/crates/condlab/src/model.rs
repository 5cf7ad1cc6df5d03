// SPDX-License-Identifier: Apache-2.0

//! Radial machinery on warped models: Dirichlet solutions, model capacities
//! and the tail test for ∫ w^{1−q} e^{−h}.

use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fd;
use crate::par::{self, Exec};
use crate::profile::Profile;
use crate::quadrature::{self, ABS_TOL};

pub use crate::profile::space_form_warping;

/// Number of doublings the tail test looks at.
pub const TAIL_DOUBLINGS: usize = 40;
/// Increment ratio below which the tail is treated as geometric.
pub const TAIL_RATIO: f64 = 0.9;
/// Largest admissible extrapolated tail relative to the partial integral.
pub const TAIL_FRACTION: f64 = 1e-3;
const RATIO_WINDOW: usize = 4;
const SLOPE_WINDOW: usize = 8;
const SLOPE_SLACK: f64 = 1e-6;

/// Area of the unit sphere S^{q−1} for integral q ≥ 1, 1 otherwise.
pub fn unit_sphere_area(q: f64) -> f64 {
    if q >= 1.0 && q.fract() == 0.0 {
        2.0 * PI.powf(q / 2.0) / gamma(q / 2.0)
    } else {
        1.0
    }
}

/// h(t) = ∫_{t0}^t θ, with h' = θ.
pub fn weight_from_theta(theta: Profile, t0: f64) -> Profile {
    let th = theta.clone();
    let label = format!("int_{t0}^r ({})", theta.label());
    let th2 = theta.clone();
    Profile::new(label, move |t| quadrature::integrate(&|s| th.value(s), t0, t, 1e-13).value)
        .with_derivatives(move |t| th2.value(t), move |t| theta.d1(t))
}

/// Closed form of [`weight_from_theta`] for θ(t) = a + b·t.
pub fn weight_from_affine_theta(a: f64, b: f64, t0: f64) -> Profile {
    Profile::new(format!("int_{t0}^r ({a} + {b}*s)"), move |t| {
        a * (t - t0) + 0.5 * b * (t * t - t0 * t0)
    })
    .with_derivatives(move |t| a + b * t, move |_| b)
}

/// A warped model dr² + w(r)² g_{S^{q−1}} with radial weight e^{−h}.
///
/// q is allowed to be any positive real; only the radial formulas are used.
#[derive(Clone, Debug)]
pub struct WarpedModel {
    pub q: f64,
    pub w: Profile,
    pub h: Option<Profile>,
    pub v0: f64,
}

impl WarpedModel {
    pub fn new(q: f64, w: Profile) -> Result<Self> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::InvalidParameter(format!("q must be positive, got {q}")));
        }
        Ok(WarpedModel { q, w, h: None, v0: unit_sphere_area(q) })
    }

    pub fn with_h(mut self, h: Profile) -> Self {
        self.h = Some(h);
        self
    }

    pub fn with_v0(mut self, v0: f64) -> Self {
        self.v0 = v0;
        self
    }

    pub fn h(&self, t: f64) -> f64 {
        self.h.as_ref().map_or(0.0, |h| h.value(t))
    }

    pub fn dh(&self, t: f64) -> f64 {
        self.h.as_ref().map_or(0.0, |h| h.d1(t))
    }

    /// ln(w^{1−q} e^{−h}) at t; NaN when w(t) ≤ 0 and q ≠ 1.
    pub fn ln_integrand(&self, t: f64) -> f64 {
        let lw = if self.q == 1.0 { 0.0 } else { (1.0 - self.q) * self.w.ln_value(t) };
        lw - self.h(t)
    }

    /// w^{1−q}(t) e^{−h(t)}, evaluated in log space.
    pub fn integrand(&self, t: f64) -> f64 {
        self.ln_integrand(t).exp()
    }

    /// Checks w(0) = 0, w'(0) = 1 by one-sided differencing and w > 0 on the
    /// supplied radii.
    pub fn check_regularity(&self, radii: &[f64]) -> Result<()> {
        let w0 = self.w.value(0.0);
        let h = 1e-4;
        // second-order one-sided difference
        let d0 = (-3.0 * w0 + 4.0 * self.w.value(h) - self.w.value(2.0 * h)) / (2.0 * h);
        if w0.abs() > 1e-12 || (d0 - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("warping needs w(0)=0, w'(0)=1; got {w0}, {d0}")));
        }
        if let Some(&t) = radii.iter().find(|&&t| !(self.w.value(t) > 0.0)) {
            return Err(Error::InvalidParameter(format!("warping not positive at r = {t}")));
        }
        Ok(())
    }

    fn finite_integral(&self, a: f64, b: f64) -> Result<f64> {
        let q = quadrature::integrate(&|t| self.integrand(t), a, b, ABS_TOL);
        if !q.value.is_finite() || !q.converged {
            return Err(Error::NonIntegrableOnFiniteInterval { a, b });
        }
        Ok(q.value)
    }
}

/// φ_{ρ,R} on a model: φ(r) = ∫_r^R f / ∫_ρ^R f with f = w^{1−q}e^{−h}.
#[derive(Clone, Debug)]
pub struct RadialSolution {
    pub rho: f64,
    pub big_r: f64,
    /// ∫_ρ^R w^{1−q} e^{−h}.
    pub denominator: f64,
    /// φ'(ρ).
    pub derivative_at_rho: f64,
    model: WarpedModel,
}

impl RadialSolution {
    pub fn value(&self, r: f64) -> Result<f64> {
        if r <= self.rho {
            return Ok(1.0);
        }
        if r >= self.big_r {
            return Ok(0.0);
        }
        Ok(self.model.finite_integral(r, self.big_r)? / self.denominator)
    }

    /// φ'(r) = −f(r)/∫_ρ^R f.
    pub fn derivative(&self, r: f64) -> f64 {
        -self.model.integrand(r) / self.denominator
    }

    pub fn model(&self) -> &WarpedModel {
        &self.model
    }

    /// max |φ'' + φ'((q−1)w'/w + h')| on `points` interior radii, with φ''
    /// differenced from the closed-form φ'.
    pub fn ode_residual(&self, points: usize) -> f64 {
        let m = &self.model;
        let span = self.big_r - self.rho;
        let step = 1e-3 * span.min(1.0);
        (1..points)
            .map(|i| {
                let r = self.rho + span * i as f64 / points as f64;
                let d1 = self.derivative(r);
                let d2 = fd::d1_scalar(&|t| self.derivative(t), r, step);
                let eta = m.w.d1(r) / m.w.value(r);
                (d2 + d1 * ((m.q - 1.0) * eta + m.dh(r))).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn check_radii(rho: f64, big_r: f64) -> Result<()> {
    if !(rho > 0.0 && big_r > rho && big_r.is_finite()) {
        return Err(Error::InvalidParameter(format!("need 0 < rho < R, got rho = {rho}, R = {big_r}")));
    }
    Ok(())
}

pub fn radial_solution(model: &WarpedModel, rho: f64, big_r: f64) -> Result<RadialSolution> {
    check_radii(rho, big_r)?;
    let denominator = model.finite_integral(rho, big_r)?;
    let f0 = model.integrand(rho);
    Ok(RadialSolution {
        rho,
        big_r,
        denominator,
        derivative_at_rho: -f0 / denominator,
        model: model.clone(),
    })
}

/// V0 / ∫_ρ^R w^{1−q} e^{−h}.
pub fn capacity_model(model: &WarpedModel, rho: f64, big_r: f64) -> Result<f64> {
    check_radii(rho, big_r)?;
    Ok(model.v0 / model.finite_integral(rho, big_r)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TailStatus {
    Converges,
    Diverges,
    Undecided,
}

/// What the tail test looked at.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailEvidence {
    pub cutoffs: Vec<f64>,
    pub partial_integrals: Vec<f64>,
    /// Largest ratio of consecutive increments over the last panels.
    pub increment_ratio: Option<f64>,
    /// Least-squares slope of ln f against ln s over the last cutoffs.
    pub log_slope: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceVerdict {
    pub status: TailStatus,
    /// Estimated ∫_ρ^∞; `None` stands for +∞ or unknown.
    pub tail_estimate: Option<f64>,
    pub evidence: TailEvidence,
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Decides whether ∫_ρ^∞ w^{1−q} e^{−h} is finite from partial integrals
/// over [ρ, ρ·2^k].
pub fn tail_convergence(model: &WarpedModel, rho: f64) -> ConvergenceVerdict {
    tail_convergence_with(model, rho, Exec::default())
}

pub fn tail_convergence_with(model: &WarpedModel, rho: f64, exec: Exec) -> ConvergenceVerdict {
    let k_max = TAIL_DOUBLINGS;
    let cutoffs: Vec<f64> = (1..=k_max).map(|k| rho * 2f64.powi(k as i32)).collect();
    let panels = par::map(exec, k_max, |k| {
        let a = if k == 0 { rho } else { cutoffs[k - 1] };
        quadrature::integrate(&|t| model.integrand(t), a, cutoffs[k], ABS_TOL).value
    });
    let mut partial_integrals = Vec::with_capacity(k_max);
    let mut acc = 0.0;
    for p in &panels {
        acc += p;
        partial_integrals.push(acc);
    }
    let mut evidence = TailEvidence {
        cutoffs: cutoffs.clone(),
        partial_integrals,
        increment_ratio: None,
        log_slope: None,
        note: String::new(),
    };
    let exponents: Vec<f64> = std::iter::once(rho).chain(cutoffs.iter().copied()).map(|t| model.ln_integrand(t)).collect();
    if exponents.iter().any(|e| e.is_nan()) || panels.iter().any(|p| p.is_nan()) {
        evidence.note = "integrand undefined (warping not positive) on the tail".into();
        return ConvergenceVerdict { status: TailStatus::Undecided, tail_estimate: None, evidence };
    }
    if !acc.is_finite() {
        evidence.note = "partial integral overflowed".into();
        return ConvergenceVerdict { status: TailStatus::Diverges, tail_estimate: None, evidence };
    }

    let tail = &panels[k_max - RATIO_WINDOW - 1..];
    let ratio = tail.windows(2).fold(0.0_f64, |m, d| {
        let r = if d[1] == 0.0 {
            0.0
        } else if d[0] == 0.0 {
            f64::INFINITY
        } else {
            d[1] / d[0]
        };
        m.max(r)
    });
    evidence.increment_ratio = Some(ratio);
    let last = panels[k_max - 1];
    if ratio < TAIL_RATIO {
        let extra = last * ratio / (1.0 - ratio);
        if extra.abs() < TAIL_FRACTION * acc.abs() || (extra == 0.0 && acc == 0.0) {
            evidence.note = format!("geometric tail, ratio {ratio:.3}");
            return ConvergenceVerdict { status: TailStatus::Converges, tail_estimate: Some(acc + extra), evidence };
        }
    }

    let xs: Vec<f64> = cutoffs[k_max - SLOPE_WINDOW..].iter().map(|c| c.ln()).collect();
    let ys = &exponents[k_max + 1 - SLOPE_WINDOW..];
    let slope = if ys.iter().all(|y| y.is_finite()) { least_squares_slope(&xs, ys) } else { f64::NEG_INFINITY };
    evidence.log_slope = Some(slope);
    let growing = panels[k_max - SLOPE_WINDOW..].iter().all(|d| *d > 0.0);
    if growing && slope >= -1.0 - SLOPE_SLACK {
        evidence.note = format!("integrand decays no faster than s^{slope:.4}");
        return ConvergenceVerdict { status: TailStatus::Diverges, tail_estimate: None, evidence };
    }
    evidence.note = format!("inconclusive: ratio {ratio:.4}, log-slope {slope:.4}");
    ConvergenceVerdict { status: TailStatus::Undecided, tail_estimate: None, evidence }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(q: f64) -> WarpedModel {
        WarpedModel::new(q, Profile::identity()).unwrap()
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(2.0) - 2.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_area(3.0) - 4.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_area(4.0) - 2.0 * PI * PI).abs() < 1e-12);
        assert_eq!(unit_sphere_area(2.5), 1.0);
    }

    #[test]
    fn logarithmic_potential() {
        let s = radial_solution(&flat(2.0), 1.0, std::f64::consts::E).unwrap();
        assert!((s.value(0.5f64.exp()).unwrap() - 0.5).abs() < 1e-12);
        for r in [1.2, 1.7, 2.4] {
            assert!((s.value(r).unwrap() - (1.0 - r.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn newtonian_potential() {
        let s = radial_solution(&flat(3.0), 1.0, 2.0).unwrap();
        assert!((s.value(4.0 / 3.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(s.value(1.0).unwrap(), 1.0);
        assert_eq!(s.value(2.0).unwrap(), 0.0);
    }

    #[test]
    fn annulus_capacities() {
        let c2 = capacity_model(&flat(2.0), 1.0, 2.0).unwrap();
        assert!((c2 - 2.0 * PI / 2f64.ln()).abs() < 1e-9);
        assert!((c2 - 9.06472).abs() < 1e-5);
        let c3 = capacity_model(&flat(3.0), 1.0, 2.0).unwrap();
        assert!((c3 - 8.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn cylinder_surrogate() {
        // w ≡ α, q = 2, conductivity c carried by V0 = 2π c
        let (alpha, c, l) = (0.1, 1.0, 10.0);
        let m = WarpedModel::new(2.0, Profile::constant(alpha)).unwrap().with_v0(2.0 * PI * c);
        let cap = capacity_model(&m, 1.0, 1.0 + l).unwrap();
        assert!((cap - 2.0 * PI * alpha * c / l).abs() < 1e-12);
    }

    #[test]
    fn flux_matches_capacity() {
        let models = [
            flat(2.0),
            flat(3.0).with_h(Profile::new("0.3 r", |t| 0.3 * t)),
            WarpedModel::new(2.5, space_form_warping(-1.0)).unwrap(),
            WarpedModel::new(1.0, Profile::identity()).unwrap().with_h(weight_from_affine_theta(0.0, 1.0, 1.0)),
        ];
        for m in models {
            let (rho, r) = (1.0, 3.0);
            let cap = capacity_model(&m, rho, r).unwrap();
            let s = radial_solution(&m, rho, r).unwrap();
            let flux = -s.derivative_at_rho * m.h(rho).exp() * m.w.value(rho).powf(m.q - 1.0) * m.v0;
            assert!(((cap - flux) / cap).abs() < 1e-8, "{cap} vs {flux}");
        }
    }

    #[test]
    fn ode_residual_is_small() {
        for m in [flat(2.0), flat(3.0).with_h(Profile::new("sin", f64::sin)), WarpedModel::new(3.0, space_form_warping(-1.0)).unwrap()] {
            let s = radial_solution(&m, 1.0, 2.5).unwrap();
            assert!(s.ode_residual(1000) < 1e-8, "{}", s.ode_residual(1000));
        }
    }

    #[test]
    fn capacity_decreases_in_r() {
        let m = flat(2.0);
        let caps: Vec<f64> = [1.5, 2.0, 4.0, 8.0].iter().map(|&r| capacity_model(&m, 1.0, r).unwrap()).collect();
        assert!(caps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn shifting_h_scales_capacity() {
        let m = flat(2.0).with_h(Profile::new("r", |t| t));
        let c = -0.7;
        let shifted = flat(2.0).with_h(Profile::new("r + c", move |t| t + c));
        let a = capacity_model(&m, 1.0, 2.0).unwrap();
        let b = capacity_model(&shifted, 1.0, 2.0).unwrap();
        assert!((b / a - c.exp()).abs() < 1e-10);
    }

    #[test]
    fn vanishing_warping_is_rejected() {
        let m = WarpedModel::new(2.0, space_form_warping(1.0)).unwrap();
        assert!(matches!(radial_solution(&m, 1.0, 4.0), Err(Error::NonIntegrableOnFiniteInterval { .. })));
        assert!(matches!(capacity_model(&m, 2.0, 1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn regularity_checks() {
        assert!(flat(2.0).check_regularity(&[1.0, 2.0]).is_ok());
        assert!(WarpedModel::new(2.0, space_form_warping(-1.0)).unwrap().check_regularity(&[5.0]).is_ok());
        assert!(WarpedModel::new(2.0, Profile::constant(1.0)).unwrap().check_regularity(&[]).is_err());
        assert!(WarpedModel::new(2.0, space_form_warping(1.0)).unwrap().check_regularity(&[4.0]).is_err());
    }

    #[test]
    fn tails_of_power_laws() {
        let v = tail_convergence(&flat(3.0), 1.0);
        assert_eq!(v.status, TailStatus::Converges);
        assert!((v.tail_estimate.unwrap() - 1.0).abs() < 1e-9);
        let v = tail_convergence(&flat(2.0), 1.0);
        assert_eq!(v.status, TailStatus::Diverges);
        assert!(v.evidence.partial_integrals.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gaussian_weight_converges() {
        let m = WarpedModel::new(1.0, Profile::identity()).unwrap().with_h(Profile::new("t^2-1", |t| t * t - 1.0));
        let v = tail_convergence(&m, 1.0);
        assert_eq!(v.status, TailStatus::Converges);
        // ∫_1^∞ e^{1−s²} = e·√π·erfc(1)/2
        let want = 1f64.exp() * PI.sqrt() * statrs::function::erf::erfc(1.0) / 2.0;
        assert!((v.tail_estimate.unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn borderline_tails_are_undecided() {
        // f = 1/(s ln s) and 1/(s ln² s) on [e, ∞)
        let a = WarpedModel::new(1.0, Profile::identity()).unwrap().with_h(Profile::new("ln(s ln s)", |s: f64| (s * s.ln()).ln()));
        assert_eq!(tail_convergence(&a, std::f64::consts::E).status, TailStatus::Undecided);
        let b = WarpedModel::new(1.0, Profile::identity()).unwrap().with_h(Profile::new("ln(s ln^2 s)", |s: f64| (s * s.ln() * s.ln()).ln()));
        assert_eq!(tail_convergence(&b, std::f64::consts::E).status, TailStatus::Undecided);
    }

    #[test]
    fn exponential_growth_diverges() {
        let m = WarpedModel::new(2.0, space_form_warping(-1.0)).unwrap();
        assert_eq!(tail_convergence(&m, 1.0).status, TailStatus::Converges);
        let m = WarpedModel::new(0.5, space_form_warping(-1.0)).unwrap();
        assert_eq!(tail_convergence(&m, 1.0).status, TailStatus::Diverges);
    }

    #[test]
    fn sequential_and_parallel_tails_agree() {
        let m = flat(2.5).with_h(Profile::new("sin", f64::sin));
        let a = tail_convergence_with(&m, 1.0, Exec::Sequential);
        let b = tail_convergence_with(&m, 1.0, Exec::Parallel);
        assert_eq!(a, b);
    }

    #[test]
    fn theta_weights() {
        let th = Profile::new("2t", |t| 2.0 * t);
        let h = weight_from_theta(th, 1.0);
        let h2 = weight_from_affine_theta(0.0, 2.0, 1.0);
        for t in [1.0, 1.5, 3.0, 40.0] {
            assert!((h.value(t) - h2.value(t)).abs() < 1e-10 * h2.value(t).abs().max(1.0));
            assert!((h.value(t) - (t * t - 1.0)).abs() < 1e-9 * t * t);
        }
    }
}
