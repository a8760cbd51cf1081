use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::concepts::{subsample_factor, TestFunctional};
use crate::error::{check_dim, Error, Result};
use crate::hilbert::{HsOperator, StateVector};
use crate::io::fmt_f64;
use crate::manifold::Chart;
use crate::parallel;
use crate::semigroup::Semigroup;
use crate::solver::{exponential_euler_solve_with, Constants, Scheme, SolutionPath, SolveOptions, SpdeProblem};
use crate::stats;
use crate::wiener::{QSpec, WienerPath};

/// The m-dimensional equation `dY = α_{φ,ζ}(Y) dt + Σ σʲ_{φ,ζ}(Y) dβʲ`
/// together with its chart.
#[derive(Clone, Debug)]
pub struct ReducedProblem {
    problem: SpdeProblem,
    chart: Chart,
}

impl ReducedProblem {
    /// Coordinate problem with `A = 0`. Its declared constants are infinite
    /// (undeclared).
    pub fn problem(&self) -> &SpdeProblem {
        &self.problem
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    /// `X_k = φ(Y_k)`.
    pub fn lift(&self, y: &SolutionPath) -> Result<SolutionPath> {
        let states = y
            .states()
            .iter()
            .map(|s| self.chart.phi(s.as_vector()))
            .collect::<Result<Vec<_>>>()?;
        Ok(SolutionPath::new(y.grid().clone(), states, Scheme::Reduced)?.with_noise(y.noise()))
    }
}

/// `α_{φ,ζ}(y) = ⟨A*ζ, φ(y)⟩ + ⟨ζ, α(φ(y))⟩`, `σʲ_{φ,ζ}(y) = ⟨ζ, σ(φ(y)) e_j⟩`.
pub fn reduced_sde(chart: &Chart, prob: &SpdeProblem) -> Result<ReducedProblem> {
    check_dim("chart ambient dimension", prob.dim(), chart.dim_state())?;
    let m = chart.dim();
    let n = prob.dim();
    let functionals = chart
        .zeta()
        .iter()
        .map(|z| TestFunctional::new(prob.semigroup(), z.clone()))
        .collect::<Result<Vec<_>>>()?;
    let z = chart.zeta_matrix();
    let az = DMatrix::from_fn(m, n, |i, k| functionals[i].adjoint_action()[k]);
    let y0 = StateVector::from(&z * prob.initial().as_vector());

    let (c1, c2) = (chart.clone(), chart.clone());
    let (p1, p2) = (prob.clone(), prob.clone());
    let z2 = z.clone();
    let problem = SpdeProblem::new(Semigroup::identity(m)?, y0, prob.noise_dim())?
        .with_drift(move |t, y| {
            let h = c1.phi(y.as_vector()).expect("chart dimensions checked");
            let alpha = p1.drift(t, &h).expect("drift dimensions checked");
            StateVector::from(&az * h.as_vector() + &z * alpha.as_vector())
        })
        .with_diffusion(move |t, y| {
            let h = c2.phi(y.as_vector()).expect("chart dimensions checked");
            let s = p2.diffusion(t, &h).expect("diffusion dimensions checked");
            HsOperator::from_matrix(&z2 * s.matrix())
        })
        .with_constants(Constants {
            lipschitz: f64::INFINITY,
            growth: f64::INFINITY,
            kappa: None,
        })
        .with_time_homogeneous(prob.is_time_homogeneous());
    Ok(ReducedProblem {
        problem,
        chart: chart.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceLevel {
    pub dt: f64,
    /// Ensemble mean of `max_k dist(X_k, M)` up to the stopping index.
    pub mean_max_distance: f64,
    pub stderr: f64,
    pub max_distance: f64,
    /// Paths stopped by leaving the patch.
    pub stopped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub paths: usize,
    pub levels: Vec<InvarianceLevel>,
    /// Empirical order of `mean_max_distance` in `Δt`.
    pub order: f64,
    /// `per_path[i][l]`: max distance of path `i` at ladder level `l`.
    pub per_path: Vec<Vec<f64>>,
}

impl InvarianceReport {
    /// CSV `path,dt,max_distance`, paths 0-based.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "path,dt,max_distance")?;
        for (i, row) in self.per_path.iter().enumerate() {
            for (l, d) in row.iter().enumerate() {
                writeln!(out, "{i},{},{}", fmt_f64(self.levels[l].dt), fmt_f64(*d))?;
            }
        }
        Ok(())
    }
}

/// Solves the full equation with exponential Euler from `h₀ = φ(y₀)` on each
/// master path restricted to each ladder step, stopping when `⟨ζ, X⟩` leaves
/// the patch, and records `max_k ‖X_k - φ(⟨ζ, X_k⟩)‖`.
pub fn invariance_experiment(
    chart: &Chart,
    prob: &SpdeProblem,
    q: &QSpec,
    paths: &[WienerPath],
    ladder: &[f64],
) -> Result<InvarianceReport> {
    check_dim("chart ambient dimension", prob.dim(), chart.dim_state())?;
    if paths.is_empty() {
        return Err(Error::InsufficientEnsemble { required: 1, found: 0 });
    }
    let y0 = chart.coordinates(prob.initial())?;
    if !chart.patch().contains(&y0) {
        return Err(Error::Precondition("initial coordinates must lie inside the patch".into()));
    }
    let defect = chart.distance(prob.initial())?;
    if defect > crate::manifold::ON_MANIFOLD_TOLERANCE * (1.0 + prob.initial().norm()) {
        return Err(Error::OffManifold { defect });
    }
    let master = paths[0].grid();
    if paths.iter().any(|p| p.grid() != master) {
        return Err(Error::GridMismatch("master paths"));
    }
    let factors = ladder
        .iter()
        .map(|&dt| subsample_factor(master, dt))
        .collect::<Result<Vec<_>>>()?;
    let exit_chart = chart.clone();
    let opts = SolveOptions::default().with_exit(move |x| {
        exit_chart
            .coordinates(x)
            .map(|y| !exit_chart.patch().contains(&y))
            .unwrap_or(true)
    });

    let rows = parallel::try_map_indexed(paths.len(), |i| {
        factors
            .iter()
            .map(|&f| {
                let p = paths[i].subsample(f)?;
                let x = exponential_euler_solve_with(prob, &p, q, &opts)?;
                let mut worst: f64 = 0.0;
                for s in x.states() {
                    worst = worst.max(chart.distance(s)?);
                }
                Ok((worst, x.lifetime_index().is_some()))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let levels: Vec<InvarianceLevel> = ladder
        .iter()
        .enumerate()
        .map(|(l, &dt)| {
            let d: Vec<f64> = rows.iter().map(|r| r[l].0).collect();
            InvarianceLevel {
                dt,
                mean_max_distance: stats::mean(&d),
                stderr: if d.len() > 1 { stats::standard_error(&d) } else { 0.0 },
                max_distance: d.iter().copied().fold(0.0, f64::max),
                stopped: rows.iter().filter(|r| r[l].1).count(),
            }
        })
        .collect();
    let order = stats::convergence_order(ladder, &levels.iter().map(|l| l.mean_max_distance).collect::<Vec<_>>());
    Ok(InvarianceReport {
        paths: paths.len(),
        levels,
        order,
        per_path: rows.iter().map(|r| r.iter().map(|v| v.0).collect()).collect(),
    })
}
