use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::hilbert::StateVector;
use crate::io::fmt_f64;
use crate::rng::NoiseKey;
use crate::semigroup::PropagatorCache;
use crate::solver::SpdeProblem;
use crate::wiener::{QSpec, TimeGrid, WienerPath};

/// States beyond this norm end the run (local-solution semantics).
pub const DIVERGENCE_CAP: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExponentialEuler,
    ExactOu,
    Picard,
    /// Lifted from a reduced finite-dimensional equation.
    Reduced,
    /// Supplied by the caller.
    External,
}

/// A discrete solution on a grid, defined up to `lifetime_index` when a
/// stopping rule fired.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionPath {
    grid: TimeGrid,
    states: Vec<StateVector>,
    lifetime_index: Option<usize>,
    scheme: Scheme,
    noise: Option<NoiseKey>,
}

impl SolutionPath {
    pub fn new(grid: TimeGrid, states: Vec<StateVector>, scheme: Scheme) -> Result<Self> {
        if states.is_empty() || states.len() > grid.len() {
            return Err(Error::InvalidArgument(format!(
                "solution needs between 1 and {} states, got {}",
                grid.len(),
                states.len()
            )));
        }
        let dim = states[0].dim();
        for s in &states {
            check_dim("solution state", dim, s.dim())?;
        }
        let lifetime_index = (states.len() < grid.len()).then(|| states.len() - 1);
        Ok(Self {
            grid,
            states,
            lifetime_index,
            scheme,
            noise: None,
        })
    }

    pub fn with_noise(mut self, key: Option<NoiseKey>) -> Self {
        self.noise = key;
        self
    }

    pub(crate) fn with_lifetime(mut self, index: Option<usize>) -> Self {
        self.lifetime_index = index;
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn state(&self, k: usize) -> Option<&StateVector> {
        self.states.get(k)
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("solutions are non-empty")
    }

    /// Index of the last defined state.
    pub fn last_index(&self) -> usize {
        self.states.len() - 1
    }

    pub fn lifetime_index(&self) -> Option<usize> {
        self.lifetime_index
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn noise(&self) -> Option<NoiseKey> {
        self.noise
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    /// `max_k ‖X_k - Y_k‖` over the nodes both paths define.
    pub fn sup_gap(&self, other: &SolutionPath) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("solution paths"));
        }
        check_dim("solution state", self.dim(), other.dim())?;
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Restriction to every `factor`-th node.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.subsample(factor)?;
        let states: Vec<_> = self.states.iter().step_by(factor).cloned().collect();
        let truncated = states.len() < grid.len();
        Ok(Self {
            grid,
            states,
            lifetime_index: if truncated { self.lifetime_index.map(|k| k / factor) } else { None },
            scheme: self.scheme,
            noise: self.noise,
        })
    }

    /// Copy with `v` added to the state at node `k`.
    pub fn perturbed(&self, k: usize, v: &StateVector) -> Result<Self> {
        if k >= self.states.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.states.len(),
            });
        }
        check_dim("perturbation", self.dim(), v.dim())?;
        let mut out = self.clone();
        out.states[k] += v;
        out.scheme = Scheme::External;
        Ok(out)
    }

    /// Long-format CSV `t,mode,value`, modes 1-based.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,mode,value")?;
        for (k, s) in self.states.iter().enumerate() {
            let t = fmt_f64(self.grid.times()[k]);
            for (i, v) in s.coeffs().iter().enumerate() {
                writeln!(out, "{t},{},{}", i + 1, fmt_f64(*v))?;
            }
        }
        Ok(())
    }
}

pub type ExitRule = Arc<dyn Fn(&StateVector) -> bool + Send + Sync>;

/// Stopping rules for [`exponential_euler_solve_with`].
#[derive(Clone)]
pub struct SolveOptions {
    /// Norm cap `R`; reaching `‖X_k‖ ≥ R` sets the lifetime to `k`.
    pub cap: f64,
    /// Optional exit rule; firing at node `k` sets the lifetime to `k`.
    pub exit: Option<ExitRule>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            cap: DIVERGENCE_CAP,
            exit: None,
        }
    }
}

impl std::fmt::Debug for SolveOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolveOptions")
            .field("cap", &self.cap)
            .field("exit", &self.exit.is_some())
            .finish()
    }
}

impl SolveOptions {
    pub fn with_cap(cap: f64) -> Self {
        Self {
            cap,
            exit: None,
        }
    }

    pub fn with_exit<F>(mut self, rule: F) -> Self
    where
        F: Fn(&StateVector) -> bool + Send + Sync + 'static,
    {
        self.exit = Some(Arc::new(rule));
        self
    }
}

/// Exponential Euler with the default divergence cap.
pub fn exponential_euler_solve(prob: &SpdeProblem, path: &WienerPath, q: &QSpec) -> Result<SolutionPath> {
    exponential_euler_solve_with(prob, path, q, &SolveOptions::default())
}

/// `X_{k+1} = S_Δ (X_k + Δ α(t_k, X_k) + σ(t_k, X_k) ΔW_k)`.
pub fn exponential_euler_solve_with(
    prob: &SpdeProblem,
    path: &WienerPath,
    q: &QSpec,
    opts: &SolveOptions,
) -> Result<SolutionPath> {
    path.check_compatible(q)?;
    check_dim("noise modes", prob.noise_dim(), q.len())?;
    let grid = path.grid();
    let t = grid.times();
    let mut cache = PropagatorCache::new(prob.semigroup());
    let mut states = Vec::with_capacity(grid.len());
    states.push(prob.initial().clone());
    let mut lifetime = None;
    for k in 0..grid.steps() {
        let x = &states[k];
        let dt = grid.dt(k);
        let local = x.axpy(dt, &prob.drift(t[k], x)?)
            + prob.diffusion(t[k], x)?.apply(&path.noise_increment(k, q));
        let next = cache.get(dt)?.apply(&local);
        if !next.is_finite() {
            return Err(Error::Diverged { step: k + 1 });
        }
        let stop = next.norm() >= opts.cap || opts.exit.as_ref().is_some_and(|rule| rule(&next));
        states.push(next);
        if stop {
            lifetime = Some(k + 1);
            break;
        }
    }
    Ok(SolutionPath::new(grid.clone(), states, Scheme::ExponentialEuler)?
        .with_lifetime(lifetime)
        .with_noise(path.key()))
}

/// Mode-wise exact Ornstein–Uhlenbeck recursion for constant forcing `a` and
/// constant diffusion on a diagonal semigroup:
/// `X_i ← e^{-μ_iΔ} X_i + a_i (1 - e^{-μ_iΔ})/μ_i + c_i(Δ) (σΔW)_i`
/// with `c_i(Δ)² = (1 - e^{-2μ_iΔ})/(2μ_iΔ)`, so each mode has the exact
/// transition law while sharing the master noise increments.
pub fn exact_ou_solve(prob: &SpdeProblem, path: &WienerPath, q: &QSpec) -> Result<SolutionPath> {
    let lin = prob
        .linear()
        .ok_or_else(|| Error::Precondition("exact solver needs constant forcing and diffusion".into()))?;
    let rates = prob
        .semigroup()
        .rates()
        .ok_or_else(|| Error::Precondition("exact solver needs a diagonal semigroup".into()))?;
    path.check_compatible(q)?;
    check_dim("noise modes", prob.noise_dim(), q.len())?;
    let grid = path.grid();
    let mut states = Vec::with_capacity(grid.len());
    states.push(prob.initial().clone());
    for k in 0..grid.steps() {
        let dt = grid.dt(k);
        let noise = lin.diffusion.apply(&path.noise_increment(k, q));
        let x = &states[k];
        let next: Vec<f64> = rates
            .iter()
            .enumerate()
            .map(|(i, &mu)| {
                let decay = (-mu * dt).exp();
                decay * x[i] + lin.forcing[i] * orbit_factor(mu, dt) + noise_factor(mu, dt) * noise[i]
            })
            .collect();
        states.push(StateVector::from_vec(next));
    }
    Ok(SolutionPath::new(grid.clone(), states, Scheme::ExactOu)?.with_noise(path.key()))
}

/// `∫₀^Δ e^{-μs} ds`.
fn orbit_factor(mu: f64, dt: f64) -> f64 {
    if mu == 0.0 {
        dt
    } else {
        -(-mu * dt).exp_m1() / mu
    }
}

/// `(∫₀^Δ e^{-2μs} ds / Δ)^{1/2}`.
fn noise_factor(mu: f64, dt: f64) -> f64 {
    if mu == 0.0 {
        1.0
    } else {
        (-(-2.0 * mu * dt).exp_m1() / (2.0 * mu * dt)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::HsOperator;
    use crate::semigroup::Semigroup;
    use crate::stats;
    use crate::wiener::{sample_path, sample_path_indexed};
    use proptest::prelude::*;

    fn scalar_q() -> QSpec {
        QSpec::new(vec![1.0]).unwrap()
    }

    #[test]
    fn noiseless_linear_flow_is_the_orbit() {
        let sg = Semigroup::matrix(nalgebra::DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -0.5])).unwrap();
        let h0 = StateVector::from_vec(vec![1.0, -0.5]);
        let prob = SpdeProblem::new(sg.clone(), h0.clone(), 1).unwrap();
        let path = sample_path(&scalar_q(), &TimeGrid::uniform(2.0, 40).unwrap(), 1);
        let sol = exponential_euler_solve(&prob, &path, &scalar_q()).unwrap();
        for (k, x) in sol.states().iter().enumerate() {
            let orbit = sg.apply(path.grid().times()[k], &h0).unwrap();
            assert!((x - &orbit).norm() < 1e-12);
        }
        assert_eq!(sol.lifetime_index(), None);
    }

    #[test]
    fn scalar_decay_ode() {
        let prob = SpdeProblem::new(Semigroup::identity(1).unwrap(), StateVector::from_vec(vec![1.0]), 1)
            .unwrap()
            .with_drift(|_, h| h.scale(-1.0));
        let mut errs = Vec::new();
        for steps in [32, 64, 128] {
            let path = sample_path(&scalar_q(), &TimeGrid::uniform(1.0, steps).unwrap(), 0);
            let x = exponential_euler_solve(&prob, &path, &scalar_q()).unwrap();
            let err = (x.final_state()[0] - (-1.0f64).exp()).abs();
            assert!(err < 1.0 / steps as f64);
            errs.push(err);
        }
        assert!(errs[0] > 1.8 * errs[1] && errs[1] > 1.8 * errs[2]);
    }

    #[test]
    fn divergence_cap_sets_lifetime() {
        let prob = SpdeProblem::new(Semigroup::diagonal(vec![-5.0]).unwrap(), StateVector::from_vec(vec![1.0]), 1)
            .unwrap();
        let path = sample_path(&scalar_q(), &TimeGrid::uniform(4.0, 400).unwrap(), 0);
        let sol = exponential_euler_solve(&prob, &path, &scalar_q()).unwrap();
        let k = sol.lifetime_index().unwrap();
        assert!(sol.final_state().norm() >= DIVERGENCE_CAP);
        assert!(sol.states()[k - 1].norm() < DIVERGENCE_CAP);
        assert_eq!(sol.last_index(), k);
    }

    #[test]
    fn nan_reports_step() {
        let prob = SpdeProblem::new(Semigroup::identity(1).unwrap(), StateVector::from_vec(vec![1.0]), 1)
            .unwrap()
            .with_drift(|t, h| if t > 0.35 { h.map(|_| f64::NAN) } else { h.clone() });
        let path = sample_path(&scalar_q(), &TimeGrid::uniform(1.0, 10).unwrap(), 0);
        match exponential_euler_solve(&prob, &path, &scalar_q()) {
            Err(Error::Diverged { step }) => assert_eq!(step, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_ou_preconditions() {
        let q = scalar_q();
        let path = sample_path(&q, &TimeGrid::uniform(1.0, 8).unwrap(), 0);
        let nonlinear = SpdeProblem::new(Semigroup::diagonal(vec![1.0]).unwrap(), StateVector::zeros(1), 1)
            .unwrap()
            .with_drift(|_, h| h.clone());
        assert!(matches!(exact_ou_solve(&nonlinear, &path, &q), Err(Error::Precondition(_))));
        let dense = SpdeProblem::new(
            Semigroup::matrix(nalgebra::DMatrix::from_element(1, 1, -1.0)).unwrap(),
            StateVector::zeros(1),
            1,
        )
        .unwrap();
        assert!(matches!(exact_ou_solve(&dense, &path, &q), Err(Error::Precondition(_))));
    }

    #[test]
    fn exact_ou_without_noise_is_the_orbit() {
        let sg = Semigroup::diagonal(vec![1.0, 4.0]).unwrap();
        let h0 = StateVector::from_vec(vec![1.0, 2.0]);
        let prob = SpdeProblem::new(sg.clone(), h0.clone(), 1).unwrap();
        let path = sample_path(&scalar_q(), &TimeGrid::uniform(1.0, 7).unwrap(), 3);
        let sol = exact_ou_solve(&prob, &path, &scalar_q()).unwrap();
        for (k, x) in sol.states().iter().enumerate() {
            let orbit = sg.apply(path.grid().times()[k], &h0).unwrap();
            assert!((x - &orbit).norm() < 1e-14);
        }
    }

    #[test]
    fn exact_ou_forcing_matches_closed_form() {
        // x' = -2x + 3, x(0) = 0 → x(t) = 1.5(1 - e^{-2t}), for any step size
        let prob = SpdeProblem::ornstein_uhlenbeck(
            Semigroup::diagonal(vec![2.0]).unwrap(),
            StateVector::zeros(1),
            StateVector::from_vec(vec![3.0]),
            HsOperator::zeros(1, 1),
        )
        .unwrap();
        let path = sample_path(&scalar_q(), &TimeGrid::uniform(1.0, 3).unwrap(), 0);
        let sol = exact_ou_solve(&prob, &path, &scalar_q()).unwrap();
        assert!((sol.final_state()[0] - 1.5 * (1.0 - (-2.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn exact_ou_moments() {
        let q = scalar_q();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let prob = SpdeProblem::ornstein_uhlenbeck(
            Semigroup::diagonal(vec![1.0]).unwrap(),
            StateVector::from_vec(vec![1.0]),
            StateVector::zeros(1),
            HsOperator::identity(1, 1),
        )
        .unwrap();
        let finals: Vec<f64> = (0..10_000u64)
            .map(|i| {
                let path = sample_path_indexed(&q, &grid, 5, i);
                exact_ou_solve(&prob, &path, &q).unwrap().final_state()[0]
            })
            .collect();
        let m = stats::mean(&finals);
        assert!((m - (-1.0f64).exp()).abs() <= 3.0 * stats::standard_error(&finals));
        let (v, se) = stats::variance_with_error(&finals);
        assert!((v - (1.0 - (-2.0f64).exp()) / 2.0).abs() <= 3.0 * se);
    }

    #[test]
    fn csv_is_long_format() {
        let prob = SpdeProblem::new(Semigroup::diagonal(vec![1.0, 2.0]).unwrap(), StateVector::from_vec(vec![1.0, 1.0]), 1)
            .unwrap();
        let path = sample_path(&scalar_q(), &TimeGrid::uniform(1.0, 2).unwrap(), 0);
        let sol = exponential_euler_solve(&prob, &path, &scalar_q()).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 2);
        assert!(text.starts_with("t,mode,value\n0.0000000000000000e0,1,1.0000000000000000e0\n"));
    }

    proptest! {
        #[test]
        fn raising_the_cap_never_shortens_lifetime(seed in 0u64..200, r in 0.5..3.0f64, extra in 0.0..3.0f64) {
            let q = scalar_q();
            let prob = SpdeProblem::new(Semigroup::diagonal(vec![-1.0]).unwrap(), StateVector::from_vec(vec![0.3]), 1)
                .unwrap()
                .with_diffusion(|_, _| HsOperator::identity(1, 1));
            let path = sample_path(&q, &TimeGrid::uniform(1.0, 50).unwrap(), seed);
            let lo = exponential_euler_solve_with(&prob, &path, &q, &SolveOptions::with_cap(r)).unwrap();
            let hi = exponential_euler_solve_with(&prob, &path, &q, &SolveOptions::with_cap(r + extra)).unwrap();
            prop_assert!(hi.last_index() >= lo.last_index());
        }

        #[test]
        fn solution_starts_at_h0(seed in 0u64..100, h in -5.0..5.0f64) {
            let q = scalar_q();
            let prob = SpdeProblem::new(Semigroup::diagonal(vec![1.0]).unwrap(), StateVector::from_vec(vec![h]), 1)
                .unwrap()
                .with_diffusion(|_, x| HsOperator::from_matrix(nalgebra::DMatrix::from_element(1, 1, x[0].sin())));
            let path = sample_path(&q, &TimeGrid::uniform(1.0, 10).unwrap(), seed);
            let sol = exponential_euler_solve(&prob, &path, &q).unwrap();
            prop_assert_eq!(sol.states()[0][0], h);
        }
    }
}
