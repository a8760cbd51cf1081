//! Finite-dimensional submanifolds: charts, tangent spaces, projections, the
//! Itô correction, the tangency conditions for invariance, the reduced
//! equation on a chart, and simulated invariance experiments.

mod chart;
mod reduced;
mod tangency;

pub use chart::{
    principal_angle_sines, projection, tangent_basis, Chart, ChartJacobian, ChartMap, ChartReport,
    ChartSecondDerivative, Patch, ON_MANIFOLD_TOLERANCE, RANK_TOLERANCE,
};
pub use reduced::{invariance_experiment, reduced_sde, InvarianceLevel, InvarianceReport, ReducedProblem};
pub use tangency::{
    check_invariance_conditions, corrected_drift, decomposition_defect, diffusion_self_derivative, ito_correction,
    relative_distance_from_span, ItoCorrection, JacobianSource, TangencyOptions, TangencyReport, TangencySample,
    ANALYTIC_THRESHOLD, FINITE_DIFFERENCE_THRESHOLD,
};
