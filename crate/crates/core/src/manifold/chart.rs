use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::hilbert::StateVector;

pub type ChartMap = Arc<dyn Fn(&DVector<f64>) -> StateVector + Send + Sync>;
/// `Dφ(y)` as an N×m matrix.
pub type ChartJacobian = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// `D²φ(y)(u, v)`.
pub type ChartSecondDerivative = Arc<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> StateVector + Send + Sync>;

/// Relative singular-value floor below which `Dφ(y)` counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Relative tolerance for `‖φ(⟨ζ,h⟩) - h‖` when deciding whether `h` is on the chart.
pub const ON_MANIFOLD_TOLERANCE: f64 = 1e-8;

/// Open coordinate box `V`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Patch {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Patch {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("patch bounds", lower.len(), upper.len())?;
        if lower.is_empty() || lower.iter().zip(&upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidArgument("patch needs finite bounds with lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// The cube `(-r, r)^m`.
    pub fn cube(m: usize, r: f64) -> Result<Self> {
        Self::new(vec![-r; m], vec![r; m])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        y.len() == self.dim() && y.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| a < v && v < b)
    }

    /// Uniform point of the box shrunk by `margin` (a fraction of each side).
    pub fn sample(&self, rng: &mut impl Rng, margin: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lower.iter().zip(&self.upper).map(|(a, b)| {
                let w = b - a;
                a + w * margin + w * (1.0 - 2.0 * margin) * rng.random::<f64>()
            }),
        )
    }

    fn scaled(&self, c: &[f64]) -> Self {
        Self {
            lower: self.lower.iter().zip(c).map(|(a, s)| a * s).collect(),
            upper: self.upper.iter().zip(c).map(|(b, s)| b * s).collect(),
        }
    }
}

/// A parametrization `φ: V → H` of an m-dimensional submanifold with
/// coordinate functionals `ζ` satisfying `φ(⟨ζ,h⟩) = h` on the patch.
#[derive(Clone)]
pub struct Chart {
    dim_state: usize,
    map: ChartMap,
    jacobian: ChartJacobian,
    second: ChartSecondDerivative,
    zeta: Vec<StateVector>,
    patch: Patch,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("dim_state", &self.dim_state)
            .field("m", &self.zeta.len())
            .field("zeta", &self.zeta)
            .field("patch", &self.patch)
            .finish_non_exhaustive()
    }
}

impl Chart {
    pub fn new<F, J, S>(dim_state: usize, map: F, jacobian: J, second: S, zeta: Vec<StateVector>, patch: Patch) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> StateVector + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        S: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> StateVector + Send + Sync + 'static,
    {
        check_dim("coordinate functionals", patch.dim(), zeta.len())?;
        for z in &zeta {
            check_dim("coordinate functional", dim_state, z.dim())?;
        }
        if patch.dim() > dim_state {
            return Err(Error::InvalidArgument("manifold dimension exceeds state dimension".into()));
        }
        Ok(Self {
            dim_state,
            map: Arc::new(map),
            jacobian: Arc::new(jacobian),
            second: Arc::new(second),
            zeta,
            patch,
        })
    }

    /// `φ(y) = h⁰ + B y`.
    pub fn affine(origin: StateVector, basis: DMatrix<f64>, zeta: Vec<StateVector>, patch: Patch) -> Result<Self> {
        let n = origin.dim();
        check_dim("basis rows", n, basis.nrows())?;
        check_dim("basis columns", patch.dim(), basis.ncols())?;
        let b = basis.clone();
        Self::new(
            n,
            move |y| StateVector::from(origin.as_vector() + &b * y),
            move |_| basis.clone(),
            move |_, _, _| StateVector::zeros(n),
            zeta,
            patch,
        )
    }

    pub fn dim(&self) -> usize {
        self.zeta.len()
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn zeta(&self) -> &[StateVector] {
        &self.zeta
    }

    pub fn patch(&self) -> &Patch {
        &self.patch
    }

    fn check_coords(&self, y: &DVector<f64>) -> Result<()> {
        check_dim("chart coordinates", self.dim(), y.len())
    }

    pub fn phi(&self, y: &DVector<f64>) -> Result<StateVector> {
        self.check_coords(y)?;
        let h = (self.map)(y);
        check_dim("chart value", self.dim_state, h.dim())?;
        Ok(h)
    }

    pub fn jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_coords(y)?;
        let j = (self.jacobian)(y);
        check_dim("chart Jacobian rows", self.dim_state, j.nrows())?;
        check_dim("chart Jacobian columns", self.dim(), j.ncols())?;
        Ok(j)
    }

    pub fn second_derivative(&self, y: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> Result<StateVector> {
        self.check_coords(y)?;
        self.check_coords(u)?;
        self.check_coords(v)?;
        let h = (self.second)(y, u, v);
        check_dim("chart second derivative", self.dim_state, h.dim())?;
        Ok(h)
    }

    /// `⟨ζ, h⟩ ∈ ℝᵐ`.
    pub fn coordinates(&self, h: &StateVector) -> Result<DVector<f64>> {
        check_dim("state", self.dim_state, h.dim())?;
        Ok(DVector::from_iterator(self.dim(), self.zeta.iter().map(|z| z.as_vector().dot(h.as_vector()))))
    }

    /// `‖h - φ(⟨ζ,h⟩)‖`.
    pub fn distance(&self, h: &StateVector) -> Result<f64> {
        Ok((h - &self.phi(&self.coordinates(h)?)?).norm())
    }

    /// `Z Dφ(y)` with rows `ζ_i`; the identity for a consistent chart.
    pub fn coordinate_matrix(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.zeta_matrix() * self.jacobian(y)?)
    }

    /// The m×N matrix with rows `ζ_i`.
    pub fn zeta_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.dim_state, |i, k| self.zeta[i][k])
    }

    /// Central-difference `Dφ(y)`.
    pub fn finite_difference_jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_coords(y)?;
        let mut out = DMatrix::zeros(self.dim_state, self.dim());
        for k in 0..self.dim() {
            let step = 1e-5 * (1.0 + y[k].abs());
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[k] += step;
            ym[k] -= step;
            let col = (self.phi(&yp)? - self.phi(&ym)?).into_vector() / (2.0 * step);
            out.set_column(k, &col);
        }
        Ok(out)
    }

    /// The same manifold with `ζ_i` replaced by `c_i ζ_i` (`c_i > 0`) and
    /// `φ` reparametrized so that the chart stays consistent.
    pub fn rescaled(&self, c: &[f64]) -> Result<Self> {
        check_dim("scale factors", self.dim(), c.len())?;
        if c.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("scale factors must be positive".into()));
        }
        let inv = DVector::from_iterator(c.len(), c.iter().map(|s| 1.0 / s));
        let (map, jac, sec) = (self.map.clone(), self.jacobian.clone(), self.second.clone());
        let (i1, i2, i3) = (inv.clone(), inv.clone(), inv);
        Self::new(
            self.dim_state,
            move |y| map(&y.component_mul(&i1)),
            move |y| {
                let mut d = jac(&y.component_mul(&i2));
                for (k, mut col) in d.column_iter_mut().enumerate() {
                    col *= i2[k];
                }
                d
            },
            move |y, u, v| sec(&y.component_mul(&i3), &u.component_mul(&i3), &v.component_mul(&i3)),
            self.zeta.iter().zip(c).map(|(z, s)| z.scale(*s)).collect(),
            self.patch.scaled(c),
        )
    }

    /// Samples the chart invariants: full rank of `Dφ`, consistency
    /// `φ(⟨ζ,φ(y)⟩) = φ(y)`, and invertibility of `⟨ζ_i, Dφ(y) e_k⟩`.
    pub fn check_invariants(&self, samples: usize, seed: u64) -> Result<ChartReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = ChartReport {
            samples,
            min_relative_singular_value: f64::INFINITY,
            max_consistency_defect: 0.0,
            min_coordinate_singular_value: f64::INFINITY,
            passed: false,
        };
        for _ in 0..samples {
            let y = self.patch.sample(&mut rng, 0.0);
            let d = self.jacobian(&y)?;
            report.min_relative_singular_value = report.min_relative_singular_value.min(relative_min_singular(&d));
            let h = self.phi(&y)?;
            report.max_consistency_defect = report.max_consistency_defect.max(self.distance(&h)? / (1.0 + h.norm()));
            let z = self.coordinate_matrix(&y)?;
            report.min_coordinate_singular_value = report.min_coordinate_singular_value.min(z.singular_values().min());
        }
        report.passed = report.min_relative_singular_value > RANK_TOLERANCE
            && report.max_consistency_defect <= ON_MANIFOLD_TOLERANCE
            && report.min_coordinate_singular_value > RANK_TOLERANCE;
        Ok(report)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChartReport {
    pub samples: usize,
    pub min_relative_singular_value: f64,
    pub max_consistency_defect: f64,
    pub min_coordinate_singular_value: f64,
    pub passed: bool,
}

pub(crate) fn relative_min_singular(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().singular_values();
    let max = s.max();
    if max == 0.0 {
        0.0
    } else {
        s.min() / max
    }
}

/// `Dφ(y)`, rejecting points outside the patch and rank-deficient frames.
pub fn tangent_basis(chart: &Chart, y: &DVector<f64>) -> Result<DMatrix<f64>> {
    if !chart.patch().contains(y) {
        return Err(Error::DomainViolation(format!("coordinates {:?} outside the chart patch", y.as_slice())));
    }
    let d = chart.jacobian(y)?;
    let rel = relative_min_singular(&d);
    if !(rel > RANK_TOLERANCE) {
        return Err(Error::DegenerateChart {
            y: y.as_slice().to_vec(),
            sigma_min: rel,
        });
    }
    Ok(d)
}

/// `Π_h = Dφ(y) ⟨ζ, ·⟩` for `h = φ(y)`.
pub fn projection(chart: &Chart, h: &StateVector) -> Result<DMatrix<f64>> {
    let y = chart.coordinates(h)?;
    let defect = chart.distance(h)?;
    if defect > ON_MANIFOLD_TOLERANCE * (1.0 + h.norm()) {
        return Err(Error::OffManifold { defect });
    }
    Ok(tangent_basis(chart, &y)? * chart.zeta_matrix())
}

/// Sines of the principal angles between the column spans of `a` and `b`,
/// largest first.
pub fn principal_angle_sines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_dim("subspace ambient dimension", a.nrows(), b.nrows())?;
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let residual = &qb - &qa * (qa.transpose() * &qb);
    let mut s: Vec<f64> = residual.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn quadratic() -> Chart {
        Chart::new(
            2,
            |y| StateVector::from_vec(vec![y[0], y[0] * y[0]]),
            |y| DMatrix::from_column_slice(2, 1, &[1.0, 2.0 * y[0]]),
            |_, u, v| StateVector::from_vec(vec![0.0, 2.0 * u[0] * v[0]]),
            vec![StateVector::basis(2, 0)],
            Patch::cube(1, 2.0).unwrap(),
        )
        .unwrap()
    }

    fn affine() -> Chart {
        Chart::affine(
            StateVector::from_vec(vec![0.0, 0.0, 0.5]),
            DMatrix::from_column_slice(3, 1, &[1.0, 0.5, 0.0]),
            vec![StateVector::basis(3, 0)],
            Patch::cube(1, 3.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn affine_tangent_is_constant() {
        let c = affine();
        for y in [-1.0, 0.0, 2.5] {
            let t = tangent_basis(&c, &DVector::from_element(1, y)).unwrap();
            assert_eq!(t.as_slice(), &[1.0, 0.5, 0.0]);
        }
        assert!(tangent_basis(&c, &DVector::from_element(1, 3.5)).is_err());
    }

    #[test]
    fn quadratic_tangent_at_one() {
        let t = tangent_basis(&quadratic(), &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(t.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn degenerate_chart_rejected() {
        let c = Chart::new(
            2,
            |y| StateVector::from_vec(vec![y[0].powi(3), 0.0]),
            |y| DMatrix::from_column_slice(2, 1, &[3.0 * y[0] * y[0], 0.0]),
            |_, _, _| StateVector::zeros(2),
            vec![StateVector::basis(2, 0)],
            Patch::cube(1, 1.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            tangent_basis(&c, &DVector::from_element(1, 0.0)),
            Err(Error::DegenerateChart { .. })
        ));
    }

    #[test]
    fn fixtures_satisfy_chart_invariants() {
        for c in [affine(), quadratic()] {
            let r = c.check_invariants(200, 1).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn projection_examples() {
        let c = quadratic();
        let y = DVector::from_element(1, 0.7);
        let h = c.phi(&y).unwrap();
        let p = projection(&c, &h).unwrap();
        let d = c.jacobian(&y).unwrap();
        assert!((&p * &d - &d).norm() < 1e-15);
        let kernel = DVector::from_vec(vec![0.0, 1.0]);
        assert!((&p * kernel).norm() < 1e-15);
        assert!((&p * &p - &p).norm() < 1e-12);
        let off = StateVector::from_vec(vec![0.7, 0.0]);
        assert!(matches!(projection(&c, &off), Err(Error::OffManifold { .. })));
    }

    #[test]
    fn two_charts_of_one_line_share_tangents() {
        let a = affine();
        let b = Chart::affine(
            StateVector::from_vec(vec![2.0, 1.0, 0.5]),
            DMatrix::from_column_slice(3, 1, &[-3.0, -1.5, 0.0]),
            vec![StateVector::from_vec(vec![-1.0 / 3.0, 0.0, 4.0 / 3.0])],
            Patch::cube(1, 1.0).unwrap(),
        )
        .unwrap();
        let ta = tangent_basis(&a, &DVector::from_element(1, 0.3)).unwrap();
        let tb = tangent_basis(&b, &DVector::from_element(1, -0.2)).unwrap();
        let s = principal_angle_sines(&ta, &tb).unwrap();
        assert!(s[0].asin() <= 1e-10);
        assert!(b.check_invariants(50, 0).unwrap().passed);
    }

    #[test]
    fn rescaled_chart_stays_consistent() {
        let c = quadratic().rescaled(&[3.0]).unwrap();
        assert!(c.check_invariants(100, 2).unwrap().passed);
        let y = DVector::from_element(1, 1.5);
        assert!((c.jacobian(&y).unwrap() - c.finite_difference_jacobian(&y).unwrap()).norm() < 1e-8);
    }

    proptest! {
        #[test]
        fn analytic_jacobian_matches_differences(y in -1.9..1.9f64) {
            let c = quadratic();
            let y = DVector::from_element(1, y);
            let diff = c.jacobian(&y).unwrap() - c.finite_difference_jacobian(&y).unwrap();
            prop_assert!(diff.norm() < 1e-6);
        }

        #[test]
        fn projection_is_idempotent(y in -1.9..1.9f64, v0 in -5.0..5.0f64, v1 in -5.0..5.0f64) {
            let c = quadratic();
            let p = projection(&c, &c.phi(&DVector::from_element(1, y)).unwrap()).unwrap();
            let v = DVector::from_vec(vec![v0, v1]);
            let pv = &p * &v;
            prop_assert!((&p * &pv - &pv).norm() <= 1e-10 * (1.0 + v.norm()));
        }
    }
}
