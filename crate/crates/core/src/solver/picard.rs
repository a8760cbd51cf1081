use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::hilbert::StateVector;
use crate::semigroup::PropagatorCache;
use crate::solver::{Scheme, SolutionPath, SpdeProblem};
use crate::wiener::{QSpec, WienerPath};

#[derive(Clone, Debug)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting iterate; defaults to `X⁰ ≡ h₀`.
    pub initial_guess: Option<Vec<StateVector>>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            initial_guess: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardOutcome {
    pub solution: SolutionPath,
    pub iterations: usize,
    /// `history[n-1] = max_k ‖X⁽ⁿ⁾_k - X⁽ⁿ⁻¹⁾_k‖`.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PicardSummary {
    pub iterations: usize,
    pub history: Vec<f64>,
}

impl From<&PicardOutcome> for PicardSummary {
    fn from(o: &PicardOutcome) -> Self {
        Self {
            iterations: o.iterations,
            history: o.history.clone(),
        }
    }
}

/// One application of the discrete variation-of-constants map
/// `(ΦX)_n = S_{t_n} h₀ + Σ_{k<n} S_{t_n-t_k} (Δ α(t_k, X_k) + σ(t_k, X_k) ΔW_k)`,
/// evaluated by the one-step recursion.
pub fn picard_map(prob: &SpdeProblem, path: &WienerPath, q: &QSpec, x: &[StateVector]) -> Result<Vec<StateVector>> {
    let grid = path.grid();
    check_dim("iterate nodes", grid.len(), x.len())?;
    let t = grid.times();
    let mut cache = PropagatorCache::new(prob.semigroup());
    let mut out = Vec::with_capacity(grid.len());
    out.push(prob.initial().clone());
    for k in 0..grid.steps() {
        let dt = grid.dt(k);
        let local = out[k].axpy(dt, &prob.drift(t[k], &x[k])?)
            + prob.diffusion(t[k], &x[k])?.apply(&path.noise_increment(k, q));
        let next = cache.get(dt)?.apply(&local);
        if !next.is_finite() {
            return Err(Error::Diverged { step: k + 1 });
        }
        out.push(next);
    }
    Ok(out)
}

/// Pathwise Picard iteration on a frozen noise realization. Stops at the first
/// `n` with `‖X⁽ⁿ⁾ - X⁽ⁿ⁻¹⁾‖_∞ < tol` and returns `X⁽ⁿ⁾`.
pub fn picard_solve(prob: &SpdeProblem, path: &WienerPath, q: &QSpec, opts: &PicardOptions) -> Result<PicardOutcome> {
    path.check_compatible(q)?;
    check_dim("noise modes", prob.noise_dim(), q.len())?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let grid = path.grid();
    let mut current = match &opts.initial_guess {
        Some(g) => {
            check_dim("initial guess nodes", grid.len(), g.len())?;
            for s in g {
                check_dim("initial guess state", prob.dim(), s.dim())?;
            }
            g.clone()
        }
        None => vec![prob.initial().clone(); grid.len()],
    };
    let mut history = Vec::new();
    for n in 1..=opts.max_iter {
        let next = picard_map(prob, path, q, &current)?;
        let d = next
            .iter()
            .zip(&current)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        history.push(d);
        current = next;
        if d < opts.tol {
            let solution = SolutionPath::new(grid.clone(), current, Scheme::Picard)?.with_noise(path.key());
            return Ok(PicardOutcome {
                solution,
                iterations: n,
                history,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}
