// SPDX-License-Identifier: Apache-2.0

//! Pointwise algebra of conductivities relative to a metric.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Default self-adjointness tolerance (relative to the size of gW).
pub const SA_TOL: f64 = 1e-8;

/// Covariant metric components g_ij at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricAtPoint(DMatrix<f64>);

impl MetricAtPoint {
    /// Checks symmetry (to 1e-12 relative) and positive definiteness.
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::DimensionMismatch { left: g.nrows(), right: g.ncols() });
        }
        let scale = g.amax().max(1e-300);
        if (&g - g.transpose()).amax() > 1e-12 * scale || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMetric { point: vec![] });
        }
        if g.clone().cholesky().is_none() {
            return Err(Error::SingularMetric { point: vec![] });
        }
        Ok(MetricAtPoint(g))
    }

    pub fn identity(n: usize) -> Self {
        MetricAtPoint(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.0[(i, j)] * u[i] * v[j];
            }
        }
        s
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.0.clone().cholesky().expect("validated metric").inverse()
    }
}

/// Mixed components W^i_j at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedTensorAtPoint(DMatrix<f64>);

impl MixedTensorAtPoint {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::DimensionMismatch { left: w.nrows(), right: w.ncols() });
        }
        Ok(MixedTensorAtPoint(w))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.0 * DVector::from_column_slice(v)).iter().copied().collect()
    }
}

/// Generalized spectrum of W relative to g, with the eigenvalue statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointSpectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub cv: f64,
}

impl PointSpectrum {
    pub fn from_eigenvalues(mut ev: Vec<f64>) -> Self {
        ev.sort_by(|a, b| a.total_cmp(b));
        let n = ev.len() as f64;
        let mean = ev.iter().sum::<f64>() / n;
        let var = ev.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
        let sd = var.max(0.0).sqrt();
        let cv = if mean > 0.0 { sd / mean } else { f64::INFINITY };
        PointSpectrum { eigenvalues: ev, mean, sd, cv }
    }

    /// Smallest eigenvalue μ.
    pub fn mu(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Largest eigenvalue κ.
    pub fn kappa(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty spectrum")
    }
}

/// Symmetrized lowered form gW.
pub fn lowered(w: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let l = g * w;
    (&l + l.transpose()) * 0.5
}

/// Eigenvalues of the pencil (gW, g), via L⁻¹(gW)L⁻ᵀ with g = LLᵀ.
fn generalized_eigenvalues(lw: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = g.clone().cholesky().ok_or(Error::SingularMetric { point: vec![] })?;
    let l = chol.l();
    let a = l
        .solve_lower_triangular(lw)
        .ok_or(Error::SingularMetric { point: vec![] })?;
    let m = l
        .solve_lower_triangular(&a.transpose())
        .ok_or(Error::SingularMetric { point: vec![] })?;
    let m = (&m + m.transpose()) * 0.5;
    Ok(SymmetricEigen::new(m).eigenvalues.iter().copied().collect())
}

/// Validates W against g and returns its spectrum.
///
/// `tol` bounds the asymmetry of gW relative to its largest entry. Positive
/// definiteness is decided by a Cholesky factorization of gW, which stays
/// reliable when the spectrum spans many orders of magnitude (e^{±x²} fields).
pub fn validate_conductivity(
    w: &MixedTensorAtPoint,
    g: &MetricAtPoint,
    tol: f64,
) -> Result<PointSpectrum> {
    if w.dim() != g.dim() {
        return Err(Error::DimensionMismatch { left: w.dim(), right: g.dim() });
    }
    if w.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "conductivity", point: vec![] });
    }
    let raw = g.matrix() * w.matrix();
    let asym = (&raw - raw.transpose()).amax();
    let allowed = tol * raw.amax().max(1.0);
    if asym > allowed {
        return Err(Error::NotSelfAdjoint { asymmetry: asym, tol: allowed });
    }
    let lw = lowered(w.matrix(), g.matrix());
    let ev = generalized_eigenvalues(&lw, g.matrix())?;
    let spec = PointSpectrum::from_eigenvalues(ev);
    let (mu, kappa) = (spec.mu(), spec.kappa());
    if mu <= 0.0 || lw.cholesky().is_none() {
        return Err(Error::NotPositiveDefinite { min: mu, max: kappa });
    }
    Ok(spec)
}

/// Spectrum statistics of a valid conductivity.
pub fn eigen_stats(w: &MixedTensorAtPoint, g: &MetricAtPoint) -> Result<PointSpectrum> {
    validate_conductivity(w, g, SA_TOL)
}

/// Largest sampled coefficient of variation.
///
/// The value is a lower estimate of the true supremum; `witness` is the sample
/// index where it was attained.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledSupremum {
    pub value: f64,
    pub witness: usize,
    pub samples: usize,
    pub sampled: bool,
}

/// Maximum of cv over the supplied (W, g) samples.
pub fn cv_supremum<I>(samples: I) -> Result<SampledSupremum>
where
    I: IntoIterator<Item = Result<(MixedTensorAtPoint, MetricAtPoint)>>,
{
    let mut best: Option<(f64, usize)> = None;
    let mut count = 0;
    for (i, s) in samples.into_iter().enumerate() {
        let (w, g) = s?;
        let cv = eigen_stats(&w, &g)?.cv;
        count += 1;
        if best.map_or(true, |(b, _)| cv > b) {
            best = Some((cv, i));
        }
    }
    let (value, witness) = best.ok_or(Error::EmptySampleSet)?;
    Ok(SampledSupremum { value, witness, samples: count, sampled: true })
}
