//! Trace-class Q-Wiener processes via the Karhunen–Loève expansion
//! `W_t = Σ_j √λ_j β^j_t e_j`.
//!
//! Component Brownian motions are sampled on a time grid from increments
//! addressed by `(seed, path, component, step)`. Refining a grid changes the
//! path, so convergence studies sample once on a master grid and derive the
//! coarser levels with [`WienerPath::subsample`].

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hilbert::StateVector;
use crate::io::fmt_f64;
use crate::parallel;
use crate::rng::NoiseKey;

/// Eigenvalues of the covariance operator `Q`, positive and nonincreasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QSpec {
    eigenvalues: Vec<f64>,
}

impl QSpec {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument("Q needs at least one eigenvalue".into()));
        }
        if eigenvalues.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(
                "Q eigenvalues must be positive and finite".into(),
            ));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument(
                "Q eigenvalues must be nonincreasing".into(),
            ));
        }
        Ok(Self { eigenvalues })
    }

    /// `λ_j = j⁻²`, `j = 1..=modes`.
    pub fn polynomial(modes: usize) -> Result<Self> {
        Self::new((1..=modes).map(|j| 1.0 / (j * j) as f64).collect())
    }

    /// `λ_j = 2⁻ʲ`, `j = 1..=modes`.
    pub fn geometric(modes: usize) -> Result<Self> {
        Self::new((1..=modes).map(|j| 0.5f64.powi(j as i32)).collect())
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn sqrt_eigenvalues(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.eigenvalues.iter().map(|l| l.sqrt()))
    }

    /// Same spectrum with every eigenvalue multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.eigenvalues.iter().map(|l| l * c).collect())
    }
}

impl TryFrom<Vec<f64>> for QSpec {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QSpec> for Vec<f64> {
    fn from(q: QSpec) -> Vec<f64> {
        q.eigenvalues
    }
}

/// Strictly increasing time grid starting at `t₀ = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid("need at least two nodes".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("grid must start at 0, got {}", times[0])));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite node".into()));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "nodes must be strictly increasing (t[{}] = {} ≥ t[{}] = {})",
                k,
                times[k],
                k + 1,
                times[k + 1]
            )));
        }
        Ok(Self { times })
    }

    /// `steps` equal cells on `[0, horizon]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || steps == 0 {
            return Err(Error::InvalidGrid(format!(
                "uniform grid needs horizon > 0 and steps ≥ 1 (got {horizon}, {steps})"
            )));
        }
        let dt = horizon / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        times[steps] = horizon;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of cells `K`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.steps()]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn max_dt(&self) -> f64 {
        (0..self.steps()).map(|k| self.dt(k)).fold(0.0, f64::max)
    }

    /// Every `factor`-th node. `factor` must divide the number of cells.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::InvalidGrid(format!(
                "factor {factor} does not divide {} cells",
                self.steps()
            )));
        }
        Self::new(self.times.iter().step_by(factor).copied().collect())
    }

    pub fn check_index(&self, k: usize) -> Result<()> {
        if k < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: k,
                len: self.len(),
            })
        }
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Vec<f64> {
        g.times
    }
}

/// Sampled component Brownian motions `β^j(t_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerPath {
    grid: TimeGrid,
    /// `J × (K + 1)`; column `k` holds `β(t_k)`.
    betas: DMatrix<f64>,
    key: Option<NoiseKey>,
}

impl WienerPath {
    /// Wraps given Brownian values; column `k` is `β(t_k)` and column 0 must vanish.
    pub fn from_betas(grid: TimeGrid, betas: DMatrix<f64>) -> Result<Self> {
        check_dim("Brownian values per component", grid.len(), betas.ncols())?;
        if betas.column(0).iter().any(|b| *b != 0.0) {
            return Err(Error::InvalidArgument("Brownian paths must start at 0".into()));
        }
        Ok(Self {
            grid,
            betas,
            key: None,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.betas.nrows()
    }

    pub fn key(&self) -> Option<NoiseKey> {
        self.key
    }

    pub fn beta(&self, j: usize, k: usize) -> f64 {
        self.betas[(j, k)]
    }

    /// `β(t_{k+1}) - β(t_k)` for all components.
    pub fn beta_increment(&self, k: usize) -> DVector<f64> {
        self.betas.column(k + 1) - self.betas.column(k)
    }

    /// Noise-space increment `W_{t_{k+1}} - W_{t_k}`, i.e. `√λ_j Δβ^j_k`.
    pub fn noise_increment(&self, k: usize, q: &QSpec) -> DVector<f64> {
        self.beta_increment(k).component_mul(&q.sqrt_eigenvalues())
    }

    /// All noise increments of the path.
    pub fn noise_increments(&self, q: &QSpec) -> Vec<DVector<f64>> {
        let sq = q.sqrt_eigenvalues();
        (0..self.grid.steps())
            .map(|k| self.beta_increment(k).component_mul(&sq))
            .collect()
    }

    /// The same realization observed on every `factor`-th node.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.subsample(factor)?;
        let cols: Vec<usize> = (0..grid.len()).map(|i| i * factor).collect();
        Ok(Self {
            grid,
            betas: self.betas.select_columns(cols.iter()),
            key: self.key,
        })
    }

    pub fn check_compatible(&self, q: &QSpec) -> Result<()> {
        check_dim("noise components", q.len(), self.components())
    }

    /// Long-format CSV with header `t,j,beta`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,j,beta")?;
        for (k, t) in self.grid.times().iter().enumerate() {
            for j in 0..self.components() {
                writeln!(out, "{},{},{}", fmt_f64(*t), j + 1, fmt_f64(self.betas[(j, k)]))?;
            }
        }
        Ok(())
    }
}

/// Samples one path. Deterministic in `(q.len(), grid, seed)`.
pub fn sample_path(q: &QSpec, grid: &TimeGrid, seed: u64) -> WienerPath {
    sample_path_indexed(q, grid, seed, 0)
}

/// Samples path number `path` of the ensemble keyed by `seed`.
pub fn sample_path_indexed(q: &QSpec, grid: &TimeGrid, seed: u64, path: u64) -> WienerPath {
    let key = NoiseKey::new(seed, path);
    let jn = q.len();
    let mut betas = DMatrix::zeros(jn, grid.len());
    for k in 0..grid.steps() {
        let sd = grid.dt(k).sqrt();
        for j in 0..jn {
            betas[(j, k + 1)] = betas[(j, k)] + sd * key.normal(j, k);
        }
    }
    WienerPath {
        grid: grid.clone(),
        betas,
        key: Some(key),
    }
}

/// Paths `0..count` of the ensemble keyed by `seed`.
pub fn sample_ensemble(q: &QSpec, grid: &TimeGrid, seed: u64, count: usize) -> Vec<WienerPath> {
    parallel::map_indexed(count, |i| sample_path_indexed(q, grid, seed, i as u64))
}

/// `W(t_k)` in noise-space coordinates: `(√λ_j β^j(t_k))_j`.
pub fn reconstruct_state(path: &WienerPath, q: &QSpec, k: usize) -> Result<StateVector> {
    path.check_compatible(q)?;
    path.grid.check_index(k)?;
    Ok(path.betas.column(k).component_mul(&q.sqrt_eigenvalues()).into())
}

/// Minimum ensemble size accepted by [`increment_covariance`].
pub const MIN_COVARIANCE_ENSEMBLE: usize = 100;

/// Empirical covariance of `W_t - W_s` across an ensemble. Expected value
/// `(t - s) diag(λ)`.
pub fn increment_covariance(
    ensemble: &[WienerPath],
    q: &QSpec,
    s_index: usize,
    t_index: usize,
) -> Result<DMatrix<f64>> {
    if ensemble.len() < MIN_COVARIANCE_ENSEMBLE {
        return Err(Error::InsufficientEnsemble {
            required: MIN_COVARIANCE_ENSEMBLE,
            found: ensemble.len(),
        });
    }
    if s_index >= t_index {
        return Err(Error::InvalidArgument(format!(
            "need s < t, got indices {s_index} and {t_index}"
        )));
    }
    let incs: Vec<DVector<f64>> = ensemble
        .iter()
        .map(|p| {
            let w_t = reconstruct_state(p, q, t_index)?.into_vector();
            let w_s = reconstruct_state(p, q, s_index)?.into_vector();
            Ok(w_t - w_s)
        })
        .collect::<Result<_>>()?;
    Ok(sample_covariance(&incs))
}

/// Unbiased sample covariance of a set of vectors.
pub(crate) fn sample_covariance(xs: &[DVector<f64>]) -> DMatrix<f64> {
    let n = xs.len();
    let d = xs[0].len();
    let mean = xs.iter().fold(DVector::zeros(d), |acc, x| acc + x) / n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for x in xs {
        let c = x - &mean;
        cov += &c * c.transpose();
    }
    cov / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn qspec_validation_and_defaults() {
        assert!(QSpec::new(vec![]).is_err());
        assert!(QSpec::new(vec![1.0, 0.0]).is_err());
        assert!(QSpec::new(vec![0.5, 1.0]).is_err());
        let p = QSpec::polynomial(3).unwrap();
        assert_eq!(p.eigenvalues(), &[1.0, 0.25, 1.0 / 9.0]);
        let g = QSpec::geometric(2).unwrap();
        assert_eq!(g.trace(), 0.75);
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.2]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.5]).is_err());
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        assert_eq!(g.steps(), 8);
        assert_eq!(g.horizon(), 1.0);
        assert_eq!(g.subsample(4).unwrap().times(), &[0.0, 0.5, 1.0]);
        assert!(g.subsample(3).is_err());
    }

    #[test]
    fn path_starts_at_zero_and_is_deterministic() {
        let q = QSpec::polynomial(3).unwrap();
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        for seed in [0, 1, 99] {
            let p = sample_path(&q, &grid, seed);
            assert!(reconstruct_state(&p, &q, 0).unwrap().coeffs().iter().all(|c| *c == 0.0));
            let again = sample_path(&q, &grid, seed);
            assert!(p
                .betas
                .iter()
                .zip(again.betas.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn subsampling_keeps_the_realization() {
        let q = QSpec::geometric(2).unwrap();
        let fine = sample_path(&q, &TimeGrid::uniform(1.0, 64).unwrap(), 5);
        let coarse = fine.subsample(8).unwrap();
        assert_eq!(coarse.grid().steps(), 8);
        for k in 0..=8 {
            assert_eq!(coarse.beta(1, k), fine.beta(1, 8 * k));
        }
    }

    #[test]
    fn reconstruct_state_example() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let betas = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, -1.0]);
        let p = WienerPath::from_betas(grid, betas).unwrap();
        let q = QSpec::new(vec![1.0, 0.25]).unwrap();
        assert_eq!(reconstruct_state(&p, &q, 1).unwrap().coeffs(), &[2.0, -0.5]);
        assert!(matches!(
            reconstruct_state(&p, &q, 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn unit_variance_at_time_one() {
        let q = QSpec::new(vec![1.0]).unwrap();
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let n = 100_000;
        let xs: Vec<f64> = sample_ensemble(&q, &grid, 11, n)
            .iter()
            .map(|p| p.beta(0, 1))
            .collect();
        let (var, se) = stats::variance_with_error(&xs);
        assert!((var - 1.0).abs() <= 3.0 * se, "var {var} se {se}");
    }

    #[test]
    fn mean_square_norm_is_t_trace() {
        let q = QSpec::polynomial(4).unwrap();
        let grid = TimeGrid::uniform(2.0, 8).unwrap();
        let norms: Vec<f64> = sample_ensemble(&q, &grid, 3, 20_000)
            .iter()
            .map(|p| reconstruct_state(p, &q, 4).unwrap().norm_squared())
            .collect();
        let expected = 1.0 * q.trace();
        assert!((stats::mean(&norms) - expected).abs() <= 3.0 * stats::standard_error(&norms));
    }

    #[test]
    fn increment_covariance_matches_tq() {
        let q = QSpec::new(vec![1.0, 0.25]).unwrap();
        let grid = TimeGrid::uniform(3.0, 3).unwrap();
        let n = 10_000;
        let ens = sample_ensemble(&q, &grid, 17, n);
        let cov = increment_covariance(&ens, &q, 1, 3).unwrap();
        // Gaussian: se(var) = σ²√(2/n), se(cov) = σ₁σ₂/√n
        let expected = [2.0, 0.5];
        for j in 0..2 {
            let se = expected[j] * (2.0 / n as f64).sqrt();
            assert!((cov[(j, j)] - expected[j]).abs() <= 3.0 * se, "{cov}");
        }
        let se_off = (expected[0] * expected[1] / n as f64).sqrt();
        assert!(cov[(0, 1)].abs() <= 3.0 * se_off);
        assert!(matches!(
            increment_covariance(&ens[..50], &q, 0, 1),
            Err(Error::InsufficientEnsemble { .. })
        ));
    }

    #[test]
    fn zero_paths_have_zero_covariance() {
        let q = QSpec::new(vec![1.0, 0.5]).unwrap();
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let zero = WienerPath::from_betas(grid, DMatrix::zeros(2, 3)).unwrap();
        let ens = vec![zero; 100];
        assert_eq!(increment_covariance(&ens, &q, 0, 2).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn components_and_disjoint_increments_uncorrelated() {
        let q = QSpec::new(vec![1.0, 1.0]).unwrap();
        let grid = TimeGrid::uniform(2.0, 2).unwrap();
        let n = 10_000;
        let ens = sample_ensemble(&q, &grid, 23, n);
        let b1: Vec<f64> = ens.iter().map(|p| p.beta(0, 2)).collect();
        let b2: Vec<f64> = ens.iter().map(|p| p.beta(1, 2)).collect();
        let first: Vec<f64> = ens.iter().map(|p| p.beta(0, 1)).collect();
        let second: Vec<f64> = ens.iter().map(|p| p.beta(0, 2) - p.beta(0, 1)).collect();
        let corr = |a: &[f64], b: &[f64]| {
            let ma = stats::mean(a);
            let mb = stats::mean(b);
            let c: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
            c / (stats::variance(a).sqrt() * stats::variance(b).sqrt() * (a.len() - 1) as f64)
        };
        let se = 1.0 / (n as f64).sqrt();
        assert!(corr(&b1, &b2).abs() <= 3.0 * se);
        assert!(corr(&first, &second).abs() <= 3.0 * se);
    }

    #[test]
    fn halving_eigenvalues_scales_states_exactly() {
        let q = QSpec::polynomial(3).unwrap();
        let half = q.scaled(0.5).unwrap();
        let p = sample_path(&q, &TimeGrid::uniform(1.0, 4).unwrap(), 8);
        for k in 0..=4 {
            let a = reconstruct_state(&p, &q, k).unwrap();
            let b = reconstruct_state(&p, &half, k).unwrap();
            for j in 0..3 {
                let expected = a[j] * 0.5f64.sqrt();
                assert!((b[j] - expected).abs() <= 1e-15 * (1.0 + a[j].abs()));
            }
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let q = QSpec::polynomial(2).unwrap();
        let p = sample_path(&q, &TimeGrid::uniform(1.0, 2).unwrap(), 1);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,j,beta");
        assert_eq!(lines.len(), 1 + 3 * 2);
    }
}
