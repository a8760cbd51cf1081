//! Mild solutions: convolutions, the exponential-Euler scheme, the exact
//! Ornstein–Uhlenbeck recursion, pathwise Picard iteration and coefficient
//! validation.

mod convolution;
mod picard;
mod problem;
mod scheme;
mod validate;

pub use convolution::{deterministic_convolution, stochastic_convolution};
pub(crate) use convolution::{deterministic_convolution_cached, stochastic_convolution_cached};
pub use picard::{picard_map, picard_solve, PicardOptions, PicardOutcome, PicardSummary};
pub use problem::{Constants, DiffusionFn, DiffusionJacobianFn, DriftFn, LinearCoefficients, SpdeProblem};
pub use scheme::{
    exact_ou_solve, exponential_euler_solve, exponential_euler_solve_with, ExitRule, Scheme, SolutionPath,
    SolveOptions, DIVERGENCE_CAP,
};
pub use validate::{validate_coefficients, ValidationReport, Violation};
