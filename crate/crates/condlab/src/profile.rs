// SPDX-License-Identifier: Apache-2.0

//! Functions of one real variable (warpings, radial weights, test profiles).

use std::fmt;
use std::sync::Arc;

use crate::fd;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A labelled function of one variable with optional closed-form derivatives.
///
/// Missing derivatives fall back to fourth-order differencing.
#[derive(Clone)]
pub struct Profile {
    label: String,
    f: RealFn,
    df: Option<RealFn>,
    d2f: Option<RealFn>,
    ln_f: Option<RealFn>,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile").field("label", &self.label).finish()
    }
}

fn step(t: f64) -> f64 {
    1e-3 * t.abs().max(1.0)
}

impl Profile {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Profile { label: label.into(), f: Arc::new(f), df: None, d2f: None, ln_f: None }
    }

    pub fn with_derivatives(
        mut self,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.df = Some(Arc::new(df));
        self.d2f = Some(Arc::new(d2f));
        self
    }

    /// Supplies a stable logarithm for profiles that overflow (e.g. sinh).
    pub fn with_ln(mut self, ln_f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.ln_f = Some(Arc::new(ln_f));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn d1(&self, t: f64) -> f64 {
        match &self.df {
            Some(d) => d(t),
            None => fd::d1_scalar(&*self.f, t, step(t)),
        }
    }

    pub fn d2(&self, t: f64) -> f64 {
        match &self.d2f {
            Some(d) => d(t),
            None => match &self.df {
                Some(d) => fd::d1_scalar(&**d, t, step(t)),
                None => fd::d2_scalar(&*self.f, t, step(t)),
            },
        }
    }

    pub fn ln_value(&self, t: f64) -> f64 {
        match &self.ln_f {
            Some(l) => l(t),
            None => self.value(t).ln(),
        }
    }

    /// t ↦ t.
    pub fn identity() -> Self {
        Profile::new("r", |t| t).with_derivatives(|_| 1.0, |_| 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Profile::new(format!("{c}"), move |_| c).with_derivatives(|_| 0.0, |_| 0.0)
    }

    /// t ↦ a + b·t.
    pub fn affine(a: f64, b: f64) -> Self {
        Profile::new(format!("{a} + {b}*r"), move |t| a + b * t).with_derivatives(move |_| b, |_| 0.0)
    }

    /// Warping of the simply connected space form of curvature `b`.
    pub fn space_form(b: f64) -> Self {
        if b > 0.0 {
            let k = b.sqrt();
            Profile::new(format!("sin({k}*r)/{k}"), move |t| (k * t).sin() / k)
                .with_derivatives(move |t| (k * t).cos(), move |t| -k * (k * t).sin())
        } else if b == 0.0 {
            Profile::identity()
        } else {
            let k = (-b).sqrt();
            Profile::new(format!("sinh({k}*r)/{k}"), move |t| (k * t).sinh() / k)
                .with_derivatives(move |t| (k * t).cosh(), move |t| k * (k * t).sinh())
                .with_ln(move |t| {
                    let s = k * t.abs();
                    // ln(sinh s) = s − ln 2 + ln(1 − e^{−2s})
                    s - std::f64::consts::LN_2 + (-(-2.0 * s).exp()).ln_1p() - k.ln()
                })
        }
    }
}

/// Warping of the space form of curvature `b`.
pub fn space_form_warping(b: f64) -> Profile {
    Profile::space_form(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_form_values() {
        assert_eq!(space_form_warping(0.0).value(2.0), 2.0);
        assert!((space_form_warping(-1.0).value(1.0) - 1.175_201_193_643_801_4).abs() < 1e-14);
        assert!((space_form_warping(1.0).value(std::f64::consts::FRAC_PI_2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn radial_curvature_of_space_forms() {
        for b in [-2.0, -1.0, 0.5, 1.0] {
            let w = space_form_warping(b);
            for t in [0.3, 0.9, 1.2] {
                assert!((-w.d2(t) / w.value(t) - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stable_log_of_sinh() {
        let w = space_form_warping(-1.0);
        assert!((w.ln_value(2.0) - 2f64.sinh().ln()).abs() < 1e-14);
        assert!((w.ln_value(1000.0) - (1000.0 - std::f64::consts::LN_2)).abs() < 1e-12);
        assert!(w.value(1000.0).is_infinite());
    }

    #[test]
    fn differenced_derivatives_fall_back() {
        let p = Profile::new("exp", f64::exp);
        assert!((p.d1(0.7) - 0.7f64.exp()).abs() < 1e-10);
        assert!((p.d2(0.7) - 0.7f64.exp()).abs() < 1e-7);
    }
}
