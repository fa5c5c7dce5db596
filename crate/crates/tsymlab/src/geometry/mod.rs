//! Local differential geometry: curvature from a metric by finite
//! differences, stress-energy via the Einstein equation, Type I tetrad
//! decomposition with the dominant energy condition, and the canonical
//! energy-momentum pseudotensor with its ordinary conservation law.

mod curvature;
mod energy;
mod metric;
mod pseudotensor;

pub use curvature::{curvature, christoffel, CurvatureBundle};
pub use energy::{
    dominant_energy_check, momentum_condition_check, stress_energy, type_one_decomposition,
    TetradDecomposition,
};
pub use metric::{MetricFamily, MetricField};
pub use pseudotensor::{
    conservation_residual, pseudotensor, pseudotensor_with, PseudotensorEvaluation, SlotDiffPath,
    FD_STEP, PERT_STEP,
};

use thiserror::Error;

/// Spacetime point in chart coordinates (t, x1, x2, x3).
pub type Point4 = [f64; 4];

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("metric is not Lorentzian at ({0:?}): eigenvalue signs {1:?}")]
    Signature(Point4, [i8; 4]),
    #[error("non-finite metric entries at ({0:?})")]
    NonFinite(Point4),
    #[error("metric is singular (no inverse) at ({0:?})")]
    Degenerate(Point4),
    #[error("stress-energy tensor is not Type I: {0}")]
    NonTypeI(String),
    #[error("metric perturbation violates the signature even after step reduction")]
    Perturbation,
}
