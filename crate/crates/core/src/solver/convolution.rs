use crate::error::{check_dim, Error, Result};
use crate::hilbert::StateVector;
use crate::semigroup::{PropagatorCache, Semigroup};
use crate::stochastic_integral::StepIntegrand;
use crate::wiener::{QSpec, TimeGrid, WienerPath};

/// `∫₀^{t_n} S_{t_n-s} f(s) ds` by the left-endpoint rule
/// `Σ_{k<n} Δt_k S_{t_n-t_k} f(t_k)` with exact semigroup factors.
/// `f` holds samples at the grid nodes (at least `n` of them).
pub fn deterministic_convolution(
    sg: &Semigroup,
    f: &[StateVector],
    grid: &TimeGrid,
    n: usize,
) -> Result<StateVector> {
    let mut cache = PropagatorCache::new(sg);
    deterministic_convolution_cached(&mut cache, sg.dim(), f, grid, n)
}

pub(crate) fn deterministic_convolution_cached(
    cache: &mut PropagatorCache<'_>,
    dim: usize,
    f: &[StateVector],
    grid: &TimeGrid,
    n: usize,
) -> Result<StateVector> {
    grid.check_index(n)?;
    if f.len() < n {
        return Err(Error::IndexOutOfRange {
            index: n - 1,
            len: f.len(),
        });
    }
    let t = grid.times();
    let mut acc = StateVector::zeros(dim);
    for k in 0..n {
        check_dim("grid function", dim, f[k].dim())?;
        let s = cache.get(t[n] - t[k])?;
        acc = acc.axpy(grid.dt(k), &s.apply(&f[k]));
    }
    Ok(acc)
}

/// `(X ⋆ W)_{t_n} = Σ_{k<n} S_{t_n-t_k} X_k ΔW_k`.
pub fn stochastic_convolution(
    sg: &Semigroup,
    x: &StepIntegrand,
    path: &WienerPath,
    q: &QSpec,
    n: usize,
) -> Result<StateVector> {
    let mut cache = PropagatorCache::new(sg);
    stochastic_convolution_cached(&mut cache, sg.dim(), x, path, q, n)
}

pub(crate) fn stochastic_convolution_cached(
    cache: &mut PropagatorCache<'_>,
    dim: usize,
    x: &StepIntegrand,
    path: &WienerPath,
    q: &QSpec,
    n: usize,
) -> Result<StateVector> {
    if x.grid() != path.grid() {
        return Err(Error::GridMismatch("integrand and Wiener path"));
    }
    path.check_compatible(q)?;
    path.grid().check_index(n)?;
    let t = path.grid().times();
    let mut acc = StateVector::zeros(dim);
    for k in 0..n {
        let op = &x.values()[k];
        check_dim("integrand rows", dim, op.nrows())?;
        check_dim("integrand columns", q.len(), op.ncols())?;
        let local = op.apply(&path.noise_increment(k, q));
        acc += &cache.get(t[n] - t[k])?.apply(&local);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::HsOperator;
    use crate::stochastic_integral::ito_integrate;
    use crate::wiener::{sample_path, sample_path_indexed};
    use proptest::prelude::*;

    #[test]
    fn zero_forcing() {
        let sg = Semigroup::diagonal(vec![1.0, 3.0]).unwrap();
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let f = vec![StateVector::zeros(2); 11];
        assert_eq!(
            deterministic_convolution(&sg, &f, &grid, 10).unwrap(),
            StateVector::zeros(2)
        );
    }

    #[test]
    fn identity_semigroup_gives_plain_integral() {
        let sg = Semigroup::identity(2).unwrap();
        let grid = TimeGrid::uniform(0.75, 12).unwrap();
        let c = StateVector::from_vec(vec![2.0, -1.0]);
        let f = vec![c.clone(); 13];
        let v = deterministic_convolution(&sg, &f, &grid, 12).unwrap();
        assert!((&v - &c.scale(0.75)).norm() < 1e-14);
    }

    #[test]
    fn diagonal_convolution_is_first_order() {
        let sg = Semigroup::diagonal(vec![1.0]).unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        let mut errs = Vec::new();
        let mut dts = Vec::new();
        for steps in [16, 32, 64, 128] {
            let grid = TimeGrid::uniform(1.0, steps).unwrap();
            let f = vec![StateVector::basis(1, 0); steps + 1];
            let v = deterministic_convolution(&sg, &f, &grid, steps).unwrap();
            errs.push((v[0] - exact).abs());
            dts.push(1.0 / steps as f64);
        }
        let order = crate::stats::convergence_order(&dts, &errs);
        assert!((order - 1.0).abs() < 0.05, "order {order}");
        assert!(errs[3] < 1.0 / 128.0);
    }

    #[test]
    fn stochastic_convolution_with_identity_is_the_integral() {
        let q = QSpec::polynomial(3).unwrap();
        let path = sample_path(&q, &TimeGrid::uniform(1.0, 20).unwrap(), 4);
        let x = StepIntegrand::constant(
            path.grid().clone(),
            HsOperator::from_matrix(nalgebra::DMatrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64)),
        );
        let sg = Semigroup::identity(2).unwrap();
        for n in [0, 7, 20] {
            let a = stochastic_convolution(&sg, &x, &path, &q, n).unwrap();
            let b = ito_integrate(&x, &path, &q, n).unwrap();
            assert!((&a - &b).norm() < 1e-13);
        }
        let zero = StepIntegrand::zero(path.grid().clone(), 2, 3);
        assert_eq!(
            stochastic_convolution(&sg, &zero, &path, &q, 20).unwrap(),
            StateVector::zeros(2)
        );
    }

    #[test]
    fn stochastic_convolution_variance() {
        // Var = ∫₀¹ e^{-2(1-s)} ds = (1 - e^{-2})/2
        let q = QSpec::new(vec![1.0]).unwrap();
        let grid = TimeGrid::uniform(1.0, 64).unwrap();
        let sg = Semigroup::diagonal(vec![1.0]).unwrap();
        let samples: Vec<f64> = (0..10_000u64)
            .map(|i| {
                let path = sample_path_indexed(&q, &grid, 77, i);
                let x = StepIntegrand::constant(grid.clone(), HsOperator::identity(1, 1));
                stochastic_convolution(&sg, &x, &path, &q, 64).unwrap()[0]
            })
            .collect();
        let (var, se) = crate::stats::variance_with_error(&samples);
        // left-endpoint weights give Σ Δ e^{-2(1-t_k)}
        let dt = 1.0 / 64.0;
        let discrete: f64 = (0..64).map(|k| dt * (-2.0 * (1.0 - k as f64 * dt)).exp()).sum();
        assert!((var - discrete).abs() <= 3.0 * se, "{var} vs {discrete} ± {se}");
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((discrete - exact).abs() < 2.0 * dt);
    }

    #[test]
    fn grid_mismatch() {
        let q = QSpec::new(vec![1.0]).unwrap();
        let path = sample_path(&q, &TimeGrid::uniform(1.0, 8).unwrap(), 0);
        let x = StepIntegrand::zero(TimeGrid::uniform(1.0, 4).unwrap(), 1, 1);
        let sg = Semigroup::identity(1).unwrap();
        assert!(stochastic_convolution(&sg, &x, &path, &q, 4).is_err());
    }

    proptest! {
        // the convolution at t_n obeys the one-step recursion
        // F(t_{n+1}) = S_Δ F(t_n) + Δ S_Δ f(t_n)
        #[test]
        fn convolution_recursion(seed in 0u64..500, n in 1usize..15) {
            let sg = Semigroup::matrix(nalgebra::DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.2, -0.5])).unwrap();
            let grid = TimeGrid::uniform(1.0, 16).unwrap();
            let f: Vec<StateVector> = (0..17)
                .map(|k| StateVector::from_vec(vec![((seed + k) as f64).sin(), ((seed * 3 + k) as f64).cos()]))
                .collect();
            let a = deterministic_convolution(&sg, &f, &grid, n).unwrap();
            let b = deterministic_convolution(&sg, &f, &grid, n + 1).unwrap();
            let dt = grid.dt(n);
            let rec = sg.apply(dt, &(a + f[n].scale(dt))).unwrap();
            prop_assert!((&b - &rec).norm() < 1e-12);
        }
    }
}
