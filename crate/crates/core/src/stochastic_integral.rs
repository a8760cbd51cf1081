//! Itô integrals of grid-adapted step processes against a Q-Wiener path.
//!
//! A [`StepIntegrand`] holds one operator per grid cell; the value on
//! `(t_k, t_{k+1}]` is fixed at `t_k`. The integral up to grid node `n` is the
//! finite sum `Σ_{k<n} X_k (W_{t_{k+1}} - W_{t_k})`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::hilbert::{hs_norm_squared, HsOperator, StateVector};
use crate::parallel;
use crate::stats::{self, CompensatedSum};
use crate::wiener::{reconstruct_state, sample_path_indexed, QSpec, TimeGrid, WienerPath};

/// Operator-valued step process on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StepIntegrand {
    grid: TimeGrid,
    values: Vec<HsOperator>,
}

impl StepIntegrand {
    /// Wraps precomputed cell values. Adaptedness is the caller's
    /// responsibility; prefer [`StepIntegrand::adapted`].
    pub fn from_values(grid: TimeGrid, values: Vec<HsOperator>) -> Result<Self> {
        check_dim("integrand cells", grid.steps(), values.len())?;
        if let Some(first) = values.first() {
            let (r, c) = (first.nrows(), first.ncols());
            for v in &values {
                check_dim("integrand rows", r, v.nrows())?;
                check_dim("integrand columns", c, v.ncols())?;
            }
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, op: HsOperator) -> Self {
        let values = vec![op; grid.steps()];
        Self { grid, values }
    }

    pub fn zero(grid: TimeGrid, dim_state: usize, dim_noise: usize) -> Self {
        Self::constant(grid, HsOperator::zeros(dim_state, dim_noise))
    }

    /// Builds the integrand cell by cell; the closure for cell `k` only sees
    /// the path up to `t_k`.
    pub fn adapted<F>(path: &WienerPath, q: &QSpec, mut cell: F) -> Result<Self>
    where
        F: FnMut(&PathPrefix<'_>) -> HsOperator,
    {
        path.check_compatible(q)?;
        let values = (0..path.grid().steps())
            .map(|k| cell(&PathPrefix { path, q, end: k }))
            .collect();
        Self::from_values(path.grid().clone(), values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[HsOperator] {
        &self.values
    }

    /// `Σ_k Δt_k ‖X_k‖²_{L₂⁰}`, the right-hand side of the isometry over the whole grid.
    pub fn square_integral(&self, q: &QSpec) -> Result<f64> {
        self.square_integral_until(q, self.grid.steps())
    }

    pub fn square_integral_until(&self, q: &QSpec, n: usize) -> Result<f64> {
        self.grid.check_index(n)?;
        let mut acc = 0.0;
        for k in 0..n {
            acc += self.grid.dt(k) * hs_norm_squared(&self.values[k], q)?;
        }
        Ok(acc)
    }

    /// `a X + b Y` on a common grid.
    pub fn combine(a: f64, x: &StepIntegrand, b: f64, y: &StepIntegrand) -> Result<Self> {
        if x.grid != y.grid {
            return Err(Error::GridMismatch("integrands"));
        }
        let values = x
            .values
            .iter()
            .zip(&y.values)
            .map(|(u, v)| HsOperator::from_matrix(u.matrix() * a + v.matrix() * b))
            .collect();
        Self::from_values(x.grid.clone(), values)
    }
}

/// Read access to a Wiener path up to (and including) node `t_k`.
#[derive(Clone, Copy, Debug)]
pub struct PathPrefix<'a> {
    path: &'a WienerPath,
    q: &'a QSpec,
    end: usize,
}

impl PathPrefix<'_> {
    /// Index `k` of the current cell.
    pub fn index(&self) -> usize {
        self.end
    }

    pub fn time(&self) -> f64 {
        self.path.grid().times()[self.end]
    }

    /// `W(t_i)` for `i ≤ k`.
    pub fn state(&self, i: usize) -> Result<StateVector> {
        if i > self.end {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.end + 1,
            });
        }
        reconstruct_state(self.path, self.q, i)
    }

    /// `W(t_k)`.
    pub fn current(&self) -> StateVector {
        reconstruct_state(self.path, self.q, self.end).expect("prefix index is on the grid")
    }
}

fn check_shared(x: &StepIntegrand, path: &WienerPath, q: &QSpec) -> Result<()> {
    if x.grid != *path.grid() {
        return Err(Error::GridMismatch("integrand and Wiener path"));
    }
    path.check_compatible(q)?;
    if let Some(v) = x.values.first() {
        check_dim("integrand columns vs noise modes", q.len(), v.ncols())?;
    }
    Ok(())
}

/// `∫₀^{t_n} X dW`, summed over time steps (outer) and noise components
/// (inner) with compensated accumulation.
pub fn ito_integrate(x: &StepIntegrand, path: &WienerPath, q: &QSpec, n: usize) -> Result<StateVector> {
    check_shared(x, path, q)?;
    path.grid().check_index(n)?;
    let rows = x.values.first().map_or(0, HsOperator::nrows);
    let mut acc = vec![CompensatedSum::default(); rows];
    let sq = q.sqrt_eigenvalues();
    for k in 0..n {
        let dw = path.beta_increment(k).component_mul(&sq);
        let m = x.values[k].matrix();
        for (i, a) in acc.iter_mut().enumerate() {
            for (j, w) in dw.iter().enumerate() {
                a.add(m[(i, j)] * w);
            }
        }
    }
    Ok(StateVector::from_vec(acc.iter().map(CompensatedSum::value).collect()))
}

/// Series form `Σ_j ∫ X^j dβ^j` with `X^j = √λ_j X e_j`: components outer,
/// time steps inner. Same finite sum as [`ito_integrate`] in another order.
pub fn ito_integrate_series(
    x: &StepIntegrand,
    path: &WienerPath,
    q: &QSpec,
    n: usize,
) -> Result<StateVector> {
    check_shared(x, path, q)?;
    path.grid().check_index(n)?;
    let rows = x.values.first().map_or(0, HsOperator::nrows);
    let mut total = DVector::zeros(rows);
    for (j, lambda) in q.eigenvalues().iter().enumerate() {
        let mut component = DVector::zeros(rows);
        for k in 0..n {
            let db = path.beta(j, k + 1) - path.beta(j, k);
            component += x.values[k].matrix().column(j) * db;
        }
        total += component * lambda.sqrt();
    }
    Ok(total.into())
}

/// The integral process at every grid node.
pub fn ito_integral_path(x: &StepIntegrand, path: &WienerPath, q: &QSpec) -> Result<Vec<StateVector>> {
    check_shared(x, path, q)?;
    let rows = x.values.first().map_or(0, HsOperator::nrows);
    let sq = q.sqrt_eigenvalues();
    let mut out = Vec::with_capacity(path.grid().len());
    let mut acc = DVector::zeros(rows);
    out.push(StateVector::from(acc.clone()));
    for k in 0..path.grid().steps() {
        acc += x.values[k].matrix() * path.beta_increment(k).component_mul(&sq);
        out.push(StateVector::from(acc.clone()));
    }
    Ok(out)
}

/// Minimum ensemble for [`isometry_estimate`].
pub const MIN_ISOMETRY_ENSEMBLE: usize = 1000;

/// Monte-Carlo estimate of both sides of `E‖∫X dW‖² = E∫‖X‖²_{L₂⁰} ds`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsometryEstimate {
    pub paths: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of `lhs`.
    pub stderr: f64,
    /// Standard error of the per-path difference `‖∫X dW‖² - ∫‖X‖²`.
    pub diff_stderr: f64,
}

impl IsometryEstimate {
    /// `|lhs - rhs| / diff_stderr`; zero when both sides vanish identically.
    pub fn z_score(&self) -> f64 {
        let gap = (self.lhs - self.rhs).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.diff_stderr
        }
    }

    /// Whether the two sides agree within `k` standard errors.
    pub fn agrees_within(&self, k: f64) -> bool {
        self.z_score() <= k
    }
}

/// Samples `paths` Wiener paths (keyed by `seed`), builds an integrand per
/// path with `factory`, and estimates both sides of the isometry at node `n`.
pub fn isometry_estimate<F>(
    factory: F,
    q: &QSpec,
    grid: &TimeGrid,
    n: usize,
    paths: usize,
    seed: u64,
) -> Result<IsometryEstimate>
where
    F: Fn(&WienerPath) -> Result<StepIntegrand> + Sync + Send,
{
    if paths < MIN_ISOMETRY_ENSEMBLE {
        return Err(Error::InsufficientEnsemble {
            required: MIN_ISOMETRY_ENSEMBLE,
            found: paths,
        });
    }
    grid.check_index(n)?;
    let samples = parallel::try_map_indexed(paths, |i| {
        let path = sample_path_indexed(q, grid, seed, i as u64);
        let x = factory(&path)?;
        let lhs = ito_integrate(&x, &path, q, n)?.norm_squared();
        let rhs = x.square_integral_until(q, n)?;
        Ok::<_, Error>((lhs, rhs))
    })?;
    let lhs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let rhs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let diff: Vec<f64> = samples.iter().map(|s| s.0 - s.1).collect();
    Ok(IsometryEstimate {
        paths,
        lhs: stats::mean(&lhs),
        rhs: stats::mean(&rhs),
        stderr: stats::standard_error(&lhs),
        diff_stderr: stats::standard_error(&diff),
    })
}

/// `C_p = (p(2p-1))^p (2p/(2p-1))^{2p²}`, the constant of the moment bound
/// `E‖∫X dW‖^{2p} ≤ C_p E[(∫‖X‖²_{L₂⁰} ds)^p]`.
pub fn moment_bound_constant(p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!("moment order p must be ≥ 1, got {p}")));
    }
    let q = 2.0 * p - 1.0;
    Ok((p * q).powf(p) * (2.0 * p / q).powf(2.0 * p * p))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentBoundReport {
    pub p: f64,
    pub constant: f64,
    pub paths: usize,
    /// Monte-Carlo mean of `‖∫X dW‖^{2p}`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// Monte-Carlo mean of `(∫‖X‖² ds)^p`.
    pub rhs: f64,
    /// `C_p · rhs`.
    pub bound: f64,
    pub holds: bool,
}

/// Checks the moment bound by Monte Carlo: holds iff `lhs ≤ bound + 3·stderr`.
pub fn moment_bound_check<F>(
    factory: F,
    q: &QSpec,
    grid: &TimeGrid,
    n: usize,
    p: f64,
    paths: usize,
    seed: u64,
) -> Result<MomentBoundReport>
where
    F: Fn(&WienerPath) -> Result<StepIntegrand> + Sync + Send,
{
    let constant = moment_bound_constant(p)?;
    if paths < 2 {
        return Err(Error::InsufficientEnsemble {
            required: 2,
            found: paths,
        });
    }
    grid.check_index(n)?;
    let samples = parallel::try_map_indexed(paths, |i| {
        let path = sample_path_indexed(q, grid, seed, i as u64);
        let x = factory(&path)?;
        let lhs = ito_integrate(&x, &path, q, n)?.norm_squared().powf(p);
        let rhs = x.square_integral_until(q, n)?.powf(p);
        Ok::<_, Error>((lhs, rhs))
    })?;
    let lhs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let rhs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let lhs_mean = stats::mean(&lhs);
    let lhs_stderr = stats::standard_error(&lhs);
    let rhs_mean = stats::mean(&rhs);
    let bound = constant * rhs_mean;
    Ok(MomentBoundReport {
        p,
        constant,
        paths,
        lhs: lhs_mean,
        lhs_stderr,
        rhs: rhs_mean,
        bound,
        holds: lhs_mean <= bound + 3.0 * lhs_stderr,
    })
}
