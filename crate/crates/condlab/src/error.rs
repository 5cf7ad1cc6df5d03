// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Failures raised by the numerical kernels.
///
/// Each variant names the module that raised it so that the CLI can surface
/// provenance without string matching.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("tensor: dimensions disagree ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("tensor: W is not self-adjoint w.r.t. g (asymmetry {asymmetry:.3e} > {tol:.3e})")]
    NotSelfAdjoint { asymmetry: f64, tol: f64 },
    #[error("tensor: not positive definite (smallest eigenvalue {min:.3e}, largest {max:.3e})")]
    NotPositiveDefinite { min: f64, max: f64 },
    #[error("tensor: metric is singular or indefinite at {point:?}")]
    SingularMetric { point: Vec<f64> },
    #[error("tensor: empty sample set")]
    EmptySampleSet,
    #[error("geometry: stencil leaves the chart at {point:?}")]
    StencilOutOfDomain { point: Vec<f64> },
    #[error("geometry: chart is not polar-adapted at {point:?} (defect {defect:.3e})")]
    NotPolarAdapted { point: Vec<f64>, defect: f64 },
    #[error("geometry: radius {r:.3e} is below the differencing floor {floor:.3e}")]
    RadiusTooSmall { r: f64, floor: f64 },
    #[error("geometry: chart has no pole")]
    MissingPole,
    #[error("geometry: {what} requires dimension {needed}, got {got}")]
    DimensionTooLow { what: &'static str, needed: usize, got: usize },
    #[error("geometry: non-finite value while evaluating {what} at {point:?}")]
    NonFinite { what: &'static str, point: Vec<f64> },
    #[error("model: integrand not integrable on [{a}, {b}]")]
    NonIntegrableOnFiniteInterval { a: f64, b: f64 },
    #[error("model: invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("capacity: solver diverged: {0}")]
    SolverDiverged(String),
    #[error("capacity: ratio {ratio:.6} outside eigenvalue bounds [{lower:.6}, {upper:.6}]")]
    SandwichViolated { ratio: f64, lower: f64, upper: f64 },
    #[error("classifier: unbounded spectrum detected ({0})")]
    UnboundedSpectrumDetected(String),
    #[error("submanifold: immersion differential is rank deficient at {point:?}")]
    RankDeficient { point: Vec<f64> },
    #[error("submanifold: H_W formulas disagree by {mismatch:.3e} (allowed {allowed:.3e})")]
    FormulaMismatch { mismatch: f64, allowed: f64 },
    #[error("submanifold: not a hypersurface (codimension {0})")]
    NotHypersurface(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
