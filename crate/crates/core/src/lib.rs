//! A numerical laboratory for semilinear stochastic evolution equations
//!
//! ```text
//! dX_t = (A X_t + α(t, X_t)) dt + σ(t, X_t) dW_t,   X_0 = h₀
//! ```
//!
//! in the mild-solution framework. The state space is a finite spectral
//! truncation of a separable Hilbert space; the noise is a trace-class
//! Q-Wiener process sampled from its Karhunen–Loève expansion.
//!
//! * [`semigroup`]: C0-semigroups, generators, adjoints, orbit integrals.
//! * [`wiener`]: Q-Wiener paths from counter-based random streams.
//! * [`stochastic_integral`]: Itô integrals of grid step processes.
//! * [`solver`]: convolutions, exponential Euler, exact Ornstein–Uhlenbeck
//!   oracle, Picard fixed-point iteration, coefficient validation.
//! * [`concepts`]: residuals of the strong, weak and mild identities.
//! * [`manifold`]: charts, tangency conditions and invariance experiments.
//! * [`experiment`]: JSON-configured runner used by the `spde-lab` binary.

pub mod concepts;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod hilbert;
pub mod io;
pub mod manifold;
pub mod parallel;
pub mod rng;
pub mod semigroup;
pub mod solver;
pub mod stats;
pub mod stochastic_integral;
pub mod wiener;

pub use error::{Error, Result};
pub use hilbert::{HilbertSpec, HsOperator, StateVector};
pub use semigroup::Semigroup;
pub use wiener::{QSpec, TimeGrid, WienerPath};
