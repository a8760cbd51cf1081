//! C0-semigroups on the truncated state space.
//!
//! Three kinds are supported:
//!
//! * `Diagonal`: `S_t e_j = e^{-μ_j t} e_j`, the spectral form of heat-type
//!   semigroups. Exact at machine precision.
//! * `MatrixExponential`: `S_t = e^{tA}` for a dense generator, evaluated by
//!   scaling and squaring with a diagonal Padé approximant.
//! * `GridShift`: the translation group `S_t f = f(· + t)` on a periodic grid
//!   with an odd number of cells, realized by band-limited (trigonometric)
//!   interpolation. At multiples of the spacing it is an exact cyclic shift
//!   and it is orthogonal for every `t`.
//!
//! At finite truncation every generator is bounded, so all three kinds are
//! norm continuous and every state vector lies in `D(A)`.

use std::collections::HashMap;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hilbert::{HsOperator, StateVector};

/// Default number of Simpson panels for orbit integrals of non-diagonal kinds.
pub const DEFAULT_SIMPSON_PANELS: usize = 1 << 10;

/// Serializable description of a semigroup, as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SemigroupSpec {
    /// Generator `diag(-μ_1, …, -μ_N)`.
    Diagonal { rates: Vec<f64> },
    /// Dense generator given row by row.
    MatrixExponential { generator: Vec<Vec<f64>> },
    /// Periodic translation on `cells` grid points covering `[0, length)`.
    GridShift {
        cells: usize,
        length: f64,
        #[serde(default)]
        reversed: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Diagonal(DVector<f64>),
    Matrix(DMatrix<f64>),
    GridShift {
        cells: usize,
        spacing: f64,
        reversed: bool,
    },
}

/// Constants of the growth estimate `‖S_t‖ ≤ M e^{ωt}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthBound {
    pub m: f64,
    pub omega: f64,
}

impl GrowthBound {
    pub fn at(&self, t: f64) -> f64 {
        self.m * (self.omega * t).exp()
    }
}

/// Classification flags. A contraction is also a pseudo-contraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub contraction: bool,
    pub pseudo_contraction: bool,
    pub norm_continuous: bool,
}

impl Classification {
    /// Most specific label.
    pub fn label(&self) -> &'static str {
        if self.contraction {
            "contraction"
        } else if self.pseudo_contraction {
            "pseudo_contraction"
        } else if self.norm_continuous {
            "norm_continuous"
        } else {
            "general"
        }
    }
}

/// A strongly continuous semigroup together with its growth constants and
/// classification. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Semigroup {
    kind: Kind,
    growth: GrowthBound,
    class: Classification,
}

impl Semigroup {
    pub fn diagonal(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() || rates.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument(
                "diagonal semigroup needs finite rates".into(),
            ));
        }
        let omega = rates.iter().map(|r| -r).fold(f64::NEG_INFINITY, f64::max);
        let contraction = omega <= 0.0;
        Ok(Self {
            kind: Kind::Diagonal(DVector::from_vec(rates)),
            growth: GrowthBound {
                m: 1.0,
                omega: if contraction { 0.0 } else { omega },
            },
            class: Classification {
                contraction,
                pseudo_contraction: true,
                norm_continuous: true,
            },
        })
    }

    /// Semigroup `S_t = Id`.
    pub fn identity(n: usize) -> Result<Self> {
        Self::diagonal(vec![0.0; n])
    }

    /// `S_t = e^{tA}`. The growth exponent is the largest eigenvalue of the
    /// symmetric part of `A`, for which `M = 1` holds.
    pub fn matrix(generator: DMatrix<f64>) -> Result<Self> {
        if !generator.is_square() || generator.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "generator matrix must be square and nonempty".into(),
            ));
        }
        if generator.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("generator has non-finite entries".into()));
        }
        let omega = log_norm(&generator);
        let contraction = omega <= 0.0;
        Ok(Self {
            kind: Kind::Matrix(generator),
            growth: GrowthBound {
                m: 1.0,
                omega: if contraction { 0.0 } else { omega },
            },
            class: Classification {
                contraction,
                pseudo_contraction: true,
                norm_continuous: true,
            },
        })
    }

    /// Periodic translation on an odd number of cells.
    pub fn grid_shift(cells: usize, length: f64) -> Result<Self> {
        Self::grid_shift_directed(cells, length, false)
    }

    fn grid_shift_directed(cells: usize, length: f64, reversed: bool) -> Result<Self> {
        if cells == 0 || cells % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid shift needs an odd number of cells, got {cells}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid length must be positive, got {length}"
            )));
        }
        Ok(Self {
            kind: Kind::GridShift {
                cells,
                spacing: length / cells as f64,
                reversed,
            },
            growth: GrowthBound { m: 1.0, omega: 0.0 },
            class: Classification {
                contraction: true,
                pseudo_contraction: true,
                norm_continuous: true,
            },
        })
    }

    pub fn from_spec(spec: &SemigroupSpec) -> Result<Self> {
        match spec {
            SemigroupSpec::Diagonal { rates } => Self::diagonal(rates.clone()),
            SemigroupSpec::MatrixExponential { generator } => {
                let n = generator.len();
                for row in generator {
                    check_dim("generator row", n, row.len())?;
                }
                Self::matrix(DMatrix::from_fn(n, n, |i, j| generator[i][j]))
            }
            SemigroupSpec::GridShift {
                cells,
                length,
                reversed,
            } => Self::grid_shift_directed(*cells, *length, *reversed),
        }
    }

    pub fn spec(&self) -> SemigroupSpec {
        match &self.kind {
            Kind::Diagonal(rates) => SemigroupSpec::Diagonal {
                rates: rates.as_slice().to_vec(),
            },
            Kind::Matrix(a) => SemigroupSpec::MatrixExponential {
                generator: a.row_iter().map(|r| r.iter().copied().collect()).collect(),
            },
            Kind::GridShift {
                cells,
                spacing,
                reversed,
            } => SemigroupSpec::GridShift {
                cells: *cells,
                length: spacing * *cells as f64,
                reversed: *reversed,
            },
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::Diagonal(r) => r.len(),
            Kind::Matrix(a) => a.nrows(),
            Kind::GridShift { cells, .. } => *cells,
        }
    }

    pub fn growth(&self) -> GrowthBound {
        self.growth
    }

    pub fn classify(&self) -> Classification {
        self.class
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.kind, Kind::Diagonal(_))
    }

    /// Decay rates `μ_j` of a diagonal semigroup.
    pub fn rates(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::Diagonal(r) => Some(r.as_slice()),
            _ => None,
        }
    }

    /// Whether `apply` and `integrate_orbit` are closed-form (no quadrature).
    pub fn is_closed_form(&self) -> bool {
        self.is_diagonal()
    }

    pub fn generator(&self) -> Generator<'_> {
        Generator { semigroup: self }
    }

    /// Dense matrix of the generator `A`.
    pub fn generator_matrix(&self) -> DMatrix<f64> {
        match &self.kind {
            Kind::Diagonal(rates) => DMatrix::from_diagonal(&rates.map(|r| -r)),
            Kind::Matrix(a) => a.clone(),
            Kind::GridShift {
                cells,
                spacing,
                reversed,
            } => shift_generator(*cells, *spacing, *reversed),
        }
    }

    /// The operator `S_t`, ready to be applied repeatedly.
    pub fn propagator(&self, t: f64) -> Result<Propagator> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        let n = self.dim();
        if t == 0.0 {
            return Ok(match &self.kind {
                Kind::Diagonal(_) => Propagator::Diagonal(DVector::from_element(n, 1.0)),
                _ => Propagator::Dense(DMatrix::identity(n, n)),
            });
        }
        Ok(match &self.kind {
            Kind::Diagonal(rates) => Propagator::Diagonal(rates.map(|mu| (-mu * t).exp())),
            Kind::Matrix(a) => Propagator::Dense(expm(&(a * t))),
            Kind::GridShift {
                cells,
                spacing,
                reversed,
            } => {
                let s = if *reversed { -t / spacing } else { t / spacing };
                Propagator::Dense(shift_matrix(*cells, s))
            }
        })
    }

    /// `S_t x`.
    pub fn apply(&self, t: f64, x: &StateVector) -> Result<StateVector> {
        check_dim("semigroup apply", self.dim(), x.dim())?;
        Ok(self.propagator(t)?.apply(x))
    }

    /// The adjoint semigroup `(S_t^*)`, generated by `A^*`.
    pub fn adjoint(&self) -> Semigroup {
        match &self.kind {
            Kind::Diagonal(_) => self.clone(),
            Kind::Matrix(a) => Semigroup {
                kind: Kind::Matrix(a.transpose()),
                growth: self.growth,
                class: self.class,
            },
            Kind::GridShift {
                cells,
                spacing,
                reversed,
            } => Semigroup {
                kind: Kind::GridShift {
                    cells: *cells,
                    spacing: *spacing,
                    reversed: !reversed,
                },
                growth: self.growth,
                class: self.class,
            },
        }
    }

    /// `∫₀ᵗ S_s x ds`: closed form for diagonal kinds, composite Simpson with
    /// [`DEFAULT_SIMPSON_PANELS`] panels otherwise.
    pub fn integrate_orbit(&self, t: f64, x: &StateVector) -> Result<StateVector> {
        self.integrate_orbit_with(t, x, DEFAULT_SIMPSON_PANELS)
    }

    pub fn integrate_orbit_with(
        &self,
        t: f64,
        x: &StateVector,
        panels: usize,
    ) -> Result<StateVector> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        check_dim("orbit integral", self.dim(), x.dim())?;
        if let Kind::Diagonal(rates) = &self.kind {
            let v = DVector::from_fn(x.dim(), |j, _| x[j] * orbit_weight(rates[j], t));
            return Ok(v.into());
        }
        if panels == 0 || panels % 2 == 1 {
            return Err(Error::InvalidArgument(format!(
                "Simpson rule needs an even positive panel count, got {panels}"
            )));
        }
        if t == 0.0 {
            return Ok(StateVector::zeros(x.dim()));
        }
        let h = t / panels as f64;
        let step = self.propagator(h)?;
        let mut node = x.clone();
        let mut acc = x.clone();
        for i in 1..=panels {
            node = step.apply(&node);
            let w = if i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc = acc.axpy(w, &node);
        }
        Ok(acc * (h / 3.0))
    }

    /// Operator norm `‖S_t‖` (spectral norm).
    pub fn operator_norm(&self, t: f64) -> Result<f64> {
        Ok(match self.propagator(t)? {
            Propagator::Diagonal(d) => d.amax(),
            Propagator::Dense(m) => spectral_norm(&m),
        })
    }

    /// Smallest `M ≥ 1` with `‖S_t‖ ≤ M e^{ωt}` observed on a log-spaced grid
    /// of `samples` times in `[10⁻³ horizon, horizon]`. An upper estimate of
    /// the true constant for the given `ω`, not a certificate.
    pub fn fitted_growth_constant(&self, omega: f64, horizon: f64, samples: usize) -> Result<GrowthBound> {
        if !(horizon > 0.0) || samples < 2 {
            return Err(Error::InvalidArgument(
                "growth fit needs a positive horizon and at least two samples".into(),
            ));
        }
        let lo = (horizon * 1e-3).ln();
        let hi = horizon.ln();
        let mut m: f64 = 1.0;
        for i in 0..samples {
            let t = (lo + (hi - lo) * i as f64 / (samples - 1) as f64).exp();
            m = m.max(self.operator_norm(t)? * (-omega * t).exp());
        }
        Ok(GrowthBound { m, omega })
    }
}

/// `(1 - e^{-μt}) / μ`, with the `μ → 0` limit `t`.
fn orbit_weight(mu: f64, t: f64) -> f64 {
    if mu == 0.0 {
        t
    } else if (mu * t).abs() < 1e-8 {
        t * (1.0 - 0.5 * mu * t)
    } else {
        -(-mu * t).exp_m1() / mu
    }
}

/// Access to the generator `A` of a semigroup.
#[derive(Clone, Copy, Debug)]
pub struct Generator<'a> {
    semigroup: &'a Semigroup,
}

impl<'a> Generator<'a> {
    pub fn semigroup(&self) -> &'a Semigroup {
        self.semigroup
    }

    /// Domain membership. Every finite coefficient vector of the right
    /// dimension lies in `D(A)` at finite truncation.
    pub fn contains(&self, x: &StateVector) -> bool {
        x.dim() == self.semigroup.dim() && x.is_finite()
    }

    fn check_domain(&self, x: &StateVector) -> Result<()> {
        if x.dim() != self.semigroup.dim() {
            return Err(Error::DomainViolation(format!(
                "vector has dimension {}, generator acts on dimension {}",
                x.dim(),
                self.semigroup.dim()
            )));
        }
        if !x.is_finite() {
            return Err(Error::DomainViolation("non-finite coefficients".into()));
        }
        Ok(())
    }

    /// `Ax`.
    pub fn apply(&self, x: &StateVector) -> Result<StateVector> {
        self.check_domain(x)?;
        Ok(match &self.semigroup.kind {
            Kind::Diagonal(rates) => {
                DVector::from_fn(x.dim(), |j, _| -rates[j] * x[j]).into()
            }
            Kind::Matrix(a) => (a * x.as_vector()).into(),
            Kind::GridShift { .. } => (self.semigroup.generator_matrix() * x.as_vector()).into(),
        })
    }
}

/// A fixed operator `S_t`.
#[derive(Clone, Debug, PartialEq)]
pub enum Propagator {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl Propagator {
    pub fn apply(&self, x: &StateVector) -> StateVector {
        match self {
            Propagator::Diagonal(d) => d.component_mul(x.as_vector()).into(),
            Propagator::Dense(m) => (m * x.as_vector()).into(),
        }
    }

    /// `S_t Φ` for an operator `Φ` into the state space.
    pub fn apply_operator(&self, op: &HsOperator) -> HsOperator {
        match self {
            Propagator::Diagonal(d) => {
                let mut m = op.matrix().clone();
                for (i, mut row) in m.row_iter_mut().enumerate() {
                    row *= d[i];
                }
                HsOperator::from_matrix(m)
            }
            Propagator::Dense(s) => HsOperator::from_matrix(s * op.matrix()),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            Propagator::Diagonal(d) => DMatrix::from_diagonal(d),
            Propagator::Dense(m) => m.clone(),
        }
    }
}

/// Memoized propagators keyed by the exact bit pattern of `t`.
#[derive(Debug)]
pub struct PropagatorCache<'a> {
    semigroup: &'a Semigroup,
    cache: HashMap<u64, Propagator>,
}

impl<'a> PropagatorCache<'a> {
    pub fn new(semigroup: &'a Semigroup) -> Self {
        Self {
            semigroup,
            cache: HashMap::new(),
        }
    }

    pub fn get(&mut self, t: f64) -> Result<&Propagator> {
        let key = t.to_bits();
        if !self.cache.contains_key(&key) {
            let p = self.semigroup.propagator(t)?;
            self.cache.insert(key, p);
        }
        Ok(&self.cache[&key])
    }
}

/// Largest eigenvalue of the symmetric part, i.e. the logarithmic 2-norm.
fn log_norm(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.max()
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

/// Entry `(i, j)` of the band-limited shift by `s` cells:
/// `(1/N) Σ_{|k| ≤ (N-1)/2} cos(2πk(i - j + s)/N)`.
fn shift_matrix(cells: usize, s: f64) -> DMatrix<f64> {
    let n = cells as f64;
    let half = (cells - 1) / 2;
    DMatrix::from_fn(cells, cells, |i, j| {
        let d = i as f64 - j as f64 + s;
        let mut acc = 1.0;
        for k in 1..=half {
            acc += 2.0 * (TAU * k as f64 * d / n).cos();
        }
        acc / n
    })
}

fn shift_generator(cells: usize, spacing: f64, reversed: bool) -> DMatrix<f64> {
    let n = cells as f64;
    let half = (cells - 1) / 2;
    let sign = if reversed { -1.0 } else { 1.0 };
    DMatrix::from_fn(cells, cells, |i, j| {
        let d = i as f64 - j as f64;
        let mut acc = 0.0;
        for k in 1..=half {
            let w = TAU * k as f64 / n;
            acc -= 2.0 * w * (w * d).sin();
        }
        sign * acc / (n * spacing)
    })
}

/// Matrix exponential by scaling and squaring with the `[8/8]` Padé
/// approximant; the scaled argument has 1-norm at most 1/2, where the
/// truncation error is far below `10⁻¹²`.
pub(crate) fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const Q: usize = 8;
    let n = a.nrows();
    let norm1 = a
        .column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = a / 2f64.powi(squarings);

    let mut coeffs = [0.0; Q + 1];
    coeffs[0] = 1.0;
    for k in 1..=Q {
        coeffs[k] = coeffs[k - 1] * (Q + 1 - k) as f64 / (k as f64 * (2 * Q + 1 - k) as f64);
    }
    let mut power = DMatrix::identity(n, n);
    let mut num = DMatrix::identity(n, n);
    let mut den = DMatrix::identity(n, n);
    for (k, c) in coeffs.iter().enumerate().skip(1) {
        power = &power * &x;
        num += &power * *c;
        den += &power * (if k % 2 == 0 { *c } else { -*c });
    }
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular for ‖X‖₁ ≤ 1/2");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Reference oracle: the power series `Σ tⁿAⁿ/n!`, summed until the
    /// terms underflow. Only for moderate norms.
    fn expm_series(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..200 {
            term = &term * a / k as f64;
            sum += &term;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        sum
    }

    fn sample_matrix() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[-1.0, 0.5, 0.2, -0.3, -0.8, 0.4, 0.1, -0.2, -1.2])
    }

    #[test]
    fn expm_matches_power_series() {
        for scale in [0.01, 0.3, 1.0, 2.5, 6.0] {
            let a = sample_matrix() * scale;
            let diff = (expm(&a) - expm_series(&a)).norm();
            assert!(diff < 1e-12 * expm_series(&a).norm().max(1.0), "scale {scale}: {diff}");
        }
        let nilpotent = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&(nilpotent * 3.0));
        assert!((e - DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn apply_at_zero_is_identity() {
        let x = StateVector::from_vec(vec![0.3, -1.7, 2.0]);
        for sg in [
            Semigroup::diagonal(vec![1.0, 2.0, 3.0]).unwrap(),
            Semigroup::matrix(sample_matrix()).unwrap(),
            Semigroup::grid_shift(3, 1.0).unwrap(),
        ] {
            assert_eq!(sg.apply(0.0, &x).unwrap(), x);
        }
    }

    #[test]
    fn diagonal_apply_example() {
        let sg = Semigroup::diagonal(vec![1.0, 4.0]).unwrap();
        let y = sg.apply(1.0, &StateVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((y[0] - (-1f64).exp()).abs() < 1e-16);
        assert!((y[1] - (-4f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn negative_time_rejected() {
        let sg = Semigroup::diagonal(vec![1.0]).unwrap();
        assert!(matches!(
            sg.apply(-0.1, &StateVector::zeros(1)),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn grid_shift_by_one_cell_is_cyclic() {
        let sg = Semigroup::grid_shift(7, 1.4).unwrap();
        let x = StateVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let y = sg.apply(0.2, &x).unwrap();
        for i in 0..7 {
            assert!((y[i] - x[(i + 1) % 7]).abs() < 1e-12, "{y:?}");
        }
        assert!(Semigroup::grid_shift(6, 1.0).is_err());
    }

    #[test]
    fn generator_examples() {
        let sg = Semigroup::diagonal(vec![1.0, 2.0]).unwrap();
        let ax = sg.generator().apply(&StateVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(ax.coeffs(), &[-1.0, -2.0]);

        let m = Semigroup::matrix(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        let ax = m.generator().apply(&StateVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_eq!(ax.coeffs(), &[1.0, 0.0]);

        assert!(matches!(
            sg.generator().apply(&StateVector::zeros(3)),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn generator_is_derivative_at_zero() {
        // forward difference quotient (S_h x - x)/h → Ax, error O(h)
        let sgs = [
            Semigroup::diagonal(vec![1.0, 4.0, 9.0]).unwrap(),
            Semigroup::matrix(sample_matrix()).unwrap(),
            Semigroup::grid_shift(3, 3.0).unwrap(),
        ];
        for sg in &sgs {
            for i in 0..20 {
                let x = StateVector::from_vec(
                    (0..3).map(|j| ((i * 3 + j) as f64 * 0.77).sin()).collect(),
                );
                let ax = sg.generator().apply(&x).unwrap();
                let mut prev = f64::INFINITY;
                for h in [1e-2, 1e-3, 1e-4] {
                    let fd = (sg.apply(h, &x).unwrap() - x.clone()) * (1.0 / h);
                    let err = (&fd - &ax).norm();
                    assert!(err < prev);
                    prev = err;
                }
                let a_norm = sg.generator_matrix().norm();
                assert!(prev <= 1e-4 * a_norm * a_norm * x.norm());
            }
        }
    }

    #[test]
    fn adjoint_examples() {
        let d = Semigroup::diagonal(vec![1.0, 2.0]).unwrap();
        assert_eq!(d.adjoint(), d);
        let a = sample_matrix();
        let m = Semigroup::matrix(a.clone()).unwrap();
        assert_eq!(m.adjoint().generator_matrix(), a.transpose());
        assert_eq!(m.adjoint().adjoint(), m);
        let s = Semigroup::grid_shift(5, 1.0).unwrap();
        assert_eq!(s.adjoint().adjoint(), s);
    }

    #[test]
    fn orbit_integral_examples() {
        let sg = Semigroup::diagonal(vec![1.0]).unwrap();
        let x = StateVector::from_vec(vec![1.0]);
        assert_eq!(sg.integrate_orbit(0.0, &x).unwrap().coeffs(), &[0.0]);
        let v = sg.integrate_orbit(1.0, &x).unwrap();
        assert!((v[0] - (1.0 - (-1f64).exp())).abs() < 1e-15);
        let zero = Semigroup::diagonal(vec![0.0]).unwrap();
        assert_eq!(zero.integrate_orbit(2.5, &x).unwrap()[0], 2.5);
        assert!(Semigroup::matrix(sample_matrix())
            .unwrap()
            .integrate_orbit_with(1.0, &StateVector::zeros(3), 3)
            .is_err());
    }

    #[test]
    fn classification_examples() {
        let d = Semigroup::diagonal(vec![1.0, 2.0, 3.0]).unwrap().classify();
        assert!(d.contraction && d.norm_continuous);

        // symmetric generator with top eigenvalue 2
        let a = DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 0.5, 1.5]);
        let m = Semigroup::matrix(a).unwrap();
        assert!(!m.classify().contraction && m.classify().pseudo_contraction);
        assert_eq!(m.classify().label(), "pseudo_contraction");
        assert!((m.growth().omega - 2.0).abs() < 1e-12);
        assert_eq!(m.growth().m, 1.0);
        // symmetric case: ‖e^{tA}‖ = e^{2t}
        assert!((m.operator_norm(0.7).unwrap() - (1.4f64).exp()).abs() < 1e-12);

        let s = Semigroup::grid_shift(9, 1.0).unwrap();
        assert_eq!(s.classify().label(), "contraction");
        assert!((s.operator_norm(0.123).unwrap() - 1.0).abs() < 1e-12);

        let anti = Semigroup::diagonal(vec![-0.5, 1.0]).unwrap();
        assert_eq!(anti.classify().label(), "pseudo_contraction");
        assert_eq!(anti.growth().omega, 0.5);
    }

    #[test]
    fn fitted_growth_is_at_least_one_and_bounds_norm() {
        // non-normal contraction-free example: spectral abscissa -1, transient growth
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 8.0, 0.0, -1.0]);
        let sg = Semigroup::matrix(a).unwrap();
        let fit = sg.fitted_growth_constant(-1.0, 5.0, 200).unwrap();
        assert!(fit.m > 1.0);
        for t in [0.5, 1.0, 2.0] {
            assert!(sg.operator_norm(t).unwrap() <= fit.at(t) * (1.0 + 1e-2));
        }
    }

    #[test]
    fn spec_round_trip() {
        for sg in [
            Semigroup::diagonal(vec![1.0, 4.0]).unwrap(),
            Semigroup::matrix(sample_matrix()).unwrap(),
            Semigroup::grid_shift(5, 2.0).unwrap().adjoint(),
        ] {
            let json = serde_json::to_string(&sg.spec()).unwrap();
            let back: SemigroupSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(Semigroup::from_spec(&back).unwrap(), sg);
        }
    }

    fn any_semigroup() -> impl Strategy<Value = Semigroup> {
        prop_oneof![
            prop::collection::vec(0.0..10.0f64, 3).prop_map(|r| Semigroup::diagonal(r).unwrap()),
            prop::collection::vec(-2.0..2.0f64, 9).prop_map(|e| {
                Semigroup::matrix(DMatrix::from_vec(3, 3, e)).unwrap()
            }),
            (0.5..3.0f64).prop_map(|l| Semigroup::grid_shift(3, l).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn semigroup_law(sg in any_semigroup(), s in 0.0..2.0f64, t in 0.0..2.0f64,
                         x in prop::collection::vec(-5.0..5.0f64, 3)) {
            let x = StateVector::from_vec(x);
            let lhs = sg.apply(s + t, &x).unwrap();
            let rhs = sg.apply(s, &sg.apply(t, &x).unwrap()).unwrap();
            let tol = if sg.is_closed_form() { 1e-10 } else { 1e-9 } * (1.0 + x.norm()) * sg.growth().at(s + t);
            prop_assert!((&lhs - &rhs).norm() <= tol);
        }

        #[test]
        fn growth_estimate(sg in any_semigroup(), t in 0.0..3.0f64,
                           x in prop::collection::vec(-5.0..5.0f64, 3)) {
            let x = StateVector::from_vec(x);
            let y = sg.apply(t, &x).unwrap();
            prop_assert!(y.norm() <= sg.growth().at(t) * x.norm() * (1.0 + 1e-10) + 1e-12);
        }

        #[test]
        fn adjoint_duality(sg in any_semigroup(), t in 0.0..2.0f64,
                           x in prop::collection::vec(-5.0..5.0f64, 3),
                           y in prop::collection::vec(-5.0..5.0f64, 3)) {
            let (x, y) = (StateVector::from_vec(x), StateVector::from_vec(y));
            let lhs = sg.apply(t, &x).unwrap().as_vector().dot(y.as_vector());
            let rhs = x.as_vector().dot(sg.adjoint().apply(t, &y).unwrap().as_vector());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + x.norm() * y.norm()));
        }

        #[test]
        fn commutes_with_generator(sg in any_semigroup(), t in 0.0..2.0f64,
                                   x in prop::collection::vec(-5.0..5.0f64, 3)) {
            let x = StateVector::from_vec(x);
            let a = sg.generator();
            let lhs = a.apply(&sg.apply(t, &x).unwrap()).unwrap();
            let rhs = sg.apply(t, &a.apply(&x).unwrap()).unwrap();
            prop_assert!((&lhs - &rhs).norm() <= 1e-9 * (1.0 + x.norm()) * (1.0 + sg.generator_matrix().norm()));
        }

        #[test]
        fn strong_continuity_is_monotone_for_diagonal_contractions(
            rates in prop::collection::vec(0.1..10.0f64, 3),
            x in prop::collection::vec(-5.0..5.0f64, 3),
        ) {
            let sg = Semigroup::diagonal(rates).unwrap();
            let x = StateVector::from_vec(x);
            let mut prev = f64::INFINITY;
            for h in [1.0, 0.1, 0.01, 0.001, 0.0] {
                let d = (&sg.apply(h, &x).unwrap() - &x).norm();
                prop_assert!(d <= prev);
                prev = d;
            }
            prop_assert_eq!(prev, 0.0);
        }
    }
}
