//! Residuals of the strong, weak and mild solution identities, their joint
//! convergence on a step-size ladder, and Gronwall-type uniqueness checks.
//!
//! Every identity integral uses the left-endpoint rule of the solvers, so a
//! residual measures how far a path is from satisfying the identity rather
//! than a mismatch between quadratures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::hilbert::{inner_product, HsOperator, StateVector};
use crate::parallel;
use crate::semigroup::{PropagatorCache, Semigroup};
use crate::solver::{
    deterministic_convolution_cached, exponential_euler_solve, stochastic_convolution_cached, Scheme, SolutionPath,
    SpdeProblem,
};
use crate::stats;
use crate::stochastic_integral::StepIntegrand;
use crate::wiener::{QSpec, TimeGrid, WienerPath};

/// A functional `ζ ∈ D(A*)` together with `A*ζ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestFunctional {
    zeta: StateVector,
    adjoint_action: StateVector,
}

impl TestFunctional {
    /// Computes `A*ζ` through the adjoint semigroup's generator.
    pub fn new(sg: &Semigroup, zeta: StateVector) -> Result<Self> {
        let adjoint_action = sg.adjoint().generator().apply(&zeta)?;
        Ok(Self { zeta, adjoint_action })
    }

    pub fn zero(sg: &Semigroup) -> Self {
        Self {
            zeta: StateVector::zeros(sg.dim()),
            adjoint_action: StateVector::zeros(sg.dim()),
        }
    }

    /// Basis vectors followed by `random` unit vectors drawn from `seed`.
    pub fn standard_set(sg: &Semigroup, random: usize, seed: u64) -> Result<Vec<Self>> {
        let n = sg.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n + random);
        for j in 0..n {
            out.push(Self::new(sg, StateVector::basis(n, j))?);
        }
        for _ in 0..random {
            let v = StateVector::from_vec((0..n).map(|_| rng.sample(StandardNormal)).collect());
            out.push(Self::new(sg, v.scale(1.0 / v.norm()))?);
        }
        Ok(out)
    }

    pub fn zeta(&self) -> &StateVector {
        &self.zeta
    }

    pub fn adjoint_action(&self) -> &StateVector {
        &self.adjoint_action
    }

    /// `⟨ζ, Φ ΔW⟩ = ⟨Φᵀζ, ΔW⟩`.
    fn pair_noise(&self, op: &HsOperator, dw: &nalgebra::DVector<f64>) -> f64 {
        (op.matrix().transpose() * self.zeta.as_vector()).dot(dw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    Mild,
    Weak,
    Strong,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub kind: ResidualKind,
    pub scheme: Scheme,
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_abs: f64,
    /// Set for strong residuals: domain membership of every state holds
    /// automatically at finite truncation, so a pass says nothing about the
    /// infinite-dimensional domain condition.
    pub domain_automatic: bool,
}

impl ResidualReport {
    fn new(kind: ResidualKind, x: &SolutionPath, residuals: Vec<f64>) -> Result<Self> {
        if let Some(k) = residuals.iter().position(|r| !r.is_finite()) {
            return Err(Error::Diverged { step: k });
        }
        let max_abs = residuals.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
        Ok(Self {
            kind,
            scheme: x.scheme(),
            times: x.grid().times()[..residuals.len()].to_vec(),
            residuals,
            max_abs,
            domain_automatic: kind == ResidualKind::Strong,
        })
    }
}

/// Coefficients evaluated along the path at the nodes with a successor.
struct Coefficients {
    drift: Vec<StateVector>,
    diffusion: StepIntegrand,
}

fn coefficients(x: &SolutionPath, prob: &SpdeProblem, path: &WienerPath, q: &QSpec) -> Result<Coefficients> {
    if x.grid() != path.grid() {
        return Err(Error::GridMismatch("solution and Wiener path"));
    }
    path.check_compatible(q)?;
    check_dim("solution state", prob.dim(), x.dim())?;
    check_dim("noise modes", prob.noise_dim(), q.len())?;
    let t = x.grid().times();
    let last = x.last_index();
    let mut drift = Vec::with_capacity(last);
    let mut diffusion = Vec::with_capacity(x.grid().steps());
    for k in 0..last {
        let h = &x.states()[k];
        drift.push(prob.drift(t[k], h)?);
        diffusion.push(prob.diffusion(t[k], h)?);
    }
    diffusion.resize(x.grid().steps(), HsOperator::zeros(prob.dim(), q.len()));
    Ok(Coefficients {
        drift,
        diffusion: StepIntegrand::from_values(x.grid().clone(), diffusion)?,
    })
}

/// `‖X_n - (S_{t_n} h₀ + Σ_{k<n} Δ S_{t_n-t_k} α_k + Σ_{k<n} S_{t_n-t_k} σ_k ΔW_k)‖`
/// at every node, each convolution summed directly.
pub fn mild_residual(x: &SolutionPath, prob: &SpdeProblem, path: &WienerPath, q: &QSpec) -> Result<ResidualReport> {
    let c = coefficients(x, prob, path, q)?;
    let sg = prob.semigroup();
    let mut cache = PropagatorCache::new(sg);
    let t = x.grid().times();
    let mut residuals = Vec::with_capacity(x.states().len());
    for (n, xn) in x.states().iter().enumerate() {
        let orbit = cache.get(t[n])?.apply(prob.initial());
        let det = deterministic_convolution_cached(&mut cache, sg.dim(), &c.drift, x.grid(), n)?;
        let sto = stochastic_convolution_cached(&mut cache, sg.dim(), &c.diffusion, path, q, n)?;
        residuals.push((xn - &(orbit + det + sto)).norm());
    }
    ResidualReport::new(ResidualKind::Mild, x, residuals)
}

/// `|⟨ζ,X_n⟩ - ⟨ζ,h₀⟩ - Σ_{k<n} Δ(⟨A*ζ,X_k⟩ + ⟨ζ,α_k⟩) - Σ_{k<n} ⟨ζ, σ_k ΔW_k⟩|`.
pub fn weak_residual(
    x: &SolutionPath,
    prob: &SpdeProblem,
    path: &WienerPath,
    q: &QSpec,
    zeta: &TestFunctional,
) -> Result<ResidualReport> {
    if !prob.semigroup().adjoint().generator().contains(zeta.zeta()) {
        return Err(Error::DomainViolation("test functional outside the adjoint domain".into()));
    }
    check_dim("test functional", prob.dim(), zeta.zeta().dim())?;
    let c = coefficients(x, prob, path, q)?;
    let grid = x.grid();
    let z0 = inner_product(zeta.zeta(), prob.initial())?;
    let mut integral = 0.0;
    let mut residuals = Vec::with_capacity(x.states().len());
    for (n, xn) in x.states().iter().enumerate() {
        residuals.push((inner_product(zeta.zeta(), xn)? - z0 - integral).abs());
        if n < c.drift.len() {
            let xk = &x.states()[n];
            integral += grid.dt(n)
                * (inner_product(zeta.adjoint_action(), xk)? + inner_product(zeta.zeta(), &c.drift[n])?);
            integral += zeta.pair_noise(&c.diffusion.values()[n], &path.noise_increment(n, q));
        }
    }
    ResidualReport::new(ResidualKind::Weak, x, residuals)
}

/// `‖X_n - h₀ - Σ_{k<n} Δ(A X_k + α_k) - Σ_{k<n} σ_k ΔW_k‖`.
pub fn strong_residual(x: &SolutionPath, prob: &SpdeProblem, path: &WienerPath, q: &QSpec) -> Result<ResidualReport> {
    let c = coefficients(x, prob, path, q)?;
    let generator = prob.semigroup().generator();
    let grid = x.grid();
    let mut acc = prob.initial().clone();
    let mut residuals = Vec::with_capacity(x.states().len());
    for (n, xn) in x.states().iter().enumerate() {
        residuals.push((xn - &acc).norm());
        if n < c.drift.len() {
            let ax = generator.apply(xn)?;
            acc = acc.axpy(grid.dt(n), &(ax + c.drift[n].clone()));
            acc += &c.diffusion.values()[n].apply(&path.noise_increment(n, q));
        }
    }
    ResidualReport::new(ResidualKind::Strong, x, residuals)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceLevel {
    pub dt: f64,
    /// Ensemble means of the per-path `max_abs`.
    pub mild: f64,
    /// Maximum over the test functionals.
    pub weak: f64,
    pub strong: f64,
}

impl EquivalenceLevel {
    /// Largest ratio between any two of the three residuals.
    pub fn spread(&self) -> f64 {
        let v = [self.mild, self.weak, self.strong];
        let hi = v.iter().copied().fold(f64::MIN, f64::max);
        let lo = v.iter().copied().fold(f64::MAX, f64::min);
        hi / lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub paths: usize,
    pub functionals: usize,
    pub reference_dt: f64,
    pub levels: Vec<EquivalenceLevel>,
    pub mild_order: f64,
    pub weak_order: f64,
    pub strong_order: f64,
    pub domain_automatic: bool,
}

impl EquivalenceReport {
    pub fn min_order(&self) -> f64 {
        self.mild_order.min(self.weak_order).min(self.strong_order)
    }

    pub fn max_spread(&self) -> f64 {
        self.levels.iter().map(EquivalenceLevel::spread).fold(0.0, f64::max)
    }
}

/// Minimum number of ladder entries.
pub const MIN_LADDER: usize = 3;

/// Runs [`equivalence_suite_with`] with exponential Euler on the master grid
/// as the reference solver.
pub fn equivalence_suite(
    prob: &SpdeProblem,
    paths: &[WienerPath],
    q: &QSpec,
    ladder: &[f64],
    functionals: &[TestFunctional],
) -> Result<EquivalenceReport> {
    equivalence_suite_with(prob, paths, q, ladder, functionals, |p| exponential_euler_solve(prob, p, q))
}

/// Solves once per master path with `reference`, restricts the solution and
/// the path to each ladder step `Δt`, and evaluates all three residuals on
/// the same noise. Ladder steps must be multiples of the master step.
pub fn equivalence_suite_with<F>(
    prob: &SpdeProblem,
    paths: &[WienerPath],
    q: &QSpec,
    ladder: &[f64],
    functionals: &[TestFunctional],
    reference: F,
) -> Result<EquivalenceReport>
where
    F: Fn(&WienerPath) -> Result<SolutionPath> + Sync + Send,
{
    if ladder.len() < MIN_LADDER {
        return Err(Error::InvalidArgument(format!(
            "ladder needs at least {MIN_LADDER} step sizes, got {}",
            ladder.len()
        )));
    }
    if paths.is_empty() {
        return Err(Error::InsufficientEnsemble { required: 1, found: 0 });
    }
    if functionals.is_empty() {
        return Err(Error::InvalidArgument("no test functionals".into()));
    }
    let master = paths[0].grid();
    if paths.iter().any(|p| p.grid() != master) {
        return Err(Error::GridMismatch("master paths"));
    }
    let factors = ladder
        .iter()
        .map(|&dt| subsample_factor(master, dt))
        .collect::<Result<Vec<_>>>()?;

    // per path, per level: (mild, weak, strong)
    let per_path = parallel::try_map_indexed(paths.len(), |i| {
        let fine = reference(&paths[i])?;
        factors
            .iter()
            .map(|&f| {
                let x = fine.subsample(f)?;
                let p = paths[i].subsample(f)?;
                let mild = mild_residual(&x, prob, &p, q)?.max_abs;
                let strong = strong_residual(&x, prob, &p, q)?.max_abs;
                let mut weak: f64 = 0.0;
                for z in functionals {
                    weak = weak.max(weak_residual(&x, prob, &p, q, z)?.max_abs);
                }
                Ok([mild, weak, strong])
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let levels: Vec<EquivalenceLevel> = ladder
        .iter()
        .enumerate()
        .map(|(l, &dt)| {
            let col = |c: usize| stats::mean(&per_path.iter().map(|r| r[l][c]).collect::<Vec<_>>());
            EquivalenceLevel {
                dt,
                mild: col(0),
                weak: col(1),
                strong: col(2),
            }
        })
        .collect();
    let dts: Vec<f64> = levels.iter().map(|l| l.dt).collect();
    let order = |f: fn(&EquivalenceLevel) -> f64| stats::convergence_order(&dts, &levels.iter().map(f).collect::<Vec<_>>());
    Ok(EquivalenceReport {
        paths: paths.len(),
        functionals: functionals.len(),
        reference_dt: master.max_dt(),
        mild_order: order(|l| l.mild),
        weak_order: order(|l| l.weak),
        strong_order: order(|l| l.strong),
        levels,
        domain_automatic: true,
    })
}

/// The integer `f` with `dt = f · (master step)` on a uniform master grid.
pub fn subsample_factor(master: &TimeGrid, dt: f64) -> Result<usize> {
    let base = master.horizon() / master.steps() as f64;
    let f = (dt / base).round();
    if !(f >= 1.0) || ((f * base - dt).abs() > 1e-9 * dt) || master.steps() % (f as usize) != 0 {
        return Err(Error::InvalidGrid(format!(
            "step {dt} is not a multiple of the master step {base} dividing the horizon"
        )));
    }
    Ok(f as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub delta: f64,
    pub times: Vec<f64>,
    pub gaps: Vec<f64>,
    /// `δ M e^{(ω + M L) t}` from the declared `L` and the growth bound.
    pub bound: Vec<f64>,
    pub sup_gap: f64,
    pub within_bound: bool,
}

/// Solves from `h₀` and `g₀` on the same noise and compares the gap with
/// the discrete Gronwall bound. The bound assumes the diffusion does not
/// depend on the state.
pub fn uniqueness_check(
    prob: &SpdeProblem,
    h0: &StateVector,
    g0: &StateVector,
    path: &WienerPath,
    q: &QSpec,
) -> Result<UniquenessReport> {
    let x = exponential_euler_solve(&prob.clone().with_initial(h0.clone())?, path, q)?;
    let y = exponential_euler_solve(&prob.clone().with_initial(g0.clone())?, path, q)?;
    let len = x.states().len().min(y.states().len());
    let delta = (h0 - g0).norm();
    let growth = prob.semigroup().growth();
    let l = prob.constants().lipschitz;
    let times = path.grid().times()[..len].to_vec();
    let gaps: Vec<f64> = (0..len).map(|k| (&x.states()[k] - &y.states()[k]).norm()).collect();
    let bound: Vec<f64> = times
        .iter()
        .map(|t| delta * growth.m * ((growth.omega + growth.m * l) * t).exp())
        .collect();
    let within_bound = gaps.iter().zip(&bound).all(|(g, b)| *g <= b * (1.0 + 1e-6));
    Ok(UniquenessReport {
        delta,
        sup_gap: gaps.iter().copied().fold(0.0, f64::max),
        times,
        gaps,
        bound,
        within_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GronwallCertificate {
    /// `f(t_k) ≤ β Σ_{i<k} Δ_i f(t_i) + ε` at every node.
    pub hypothesis_holds: bool,
    pub first_violation: Option<usize>,
    /// `ε e^{βT}`.
    pub bound: f64,
    pub max_value: f64,
}

impl GronwallCertificate {
    pub fn certified(&self) -> bool {
        self.hypothesis_holds && self.max_value <= self.bound
    }
}

/// Discrete Gronwall check for samples `f ≥ 0` on `grid`.
pub fn gronwall_certify(f: &[f64], grid: &TimeGrid, beta: f64, eps: f64) -> Result<GronwallCertificate> {
    check_dim("sampled function", grid.len(), f.len())?;
    if let Some(k) = f.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "sample {k} is negative or not a number: {}",
            f[k]
        )));
    }
    if !(beta >= 0.0) || !(eps >= 0.0) {
        return Err(Error::InvalidArgument("β and ε must be nonnegative".into()));
    }
    let mut integral = 0.0;
    let mut first_violation = None;
    for (k, &v) in f.iter().enumerate() {
        if first_violation.is_none() && v > beta * integral + eps {
            first_violation = Some(k);
        }
        if k < grid.steps() {
            integral += grid.dt(k) * v;
        }
    }
    Ok(GronwallCertificate {
        hypothesis_holds: first_violation.is_none(),
        first_violation,
        bound: eps * (beta * grid.horizon()).exp(),
        max_value: f.iter().copied().fold(0.0, f64::max),
    })
}
