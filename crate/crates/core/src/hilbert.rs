//! Finite spectral representation of the state space `H` and the noise
//! space. Coordinates are taken with respect to fixed orthonormal bases, so
//! inner products are Euclidean.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::semigroup::Generator;
use crate::wiener::QSpec;

/// Truncation levels of the state and noise spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HilbertSpec {
    dim_state: usize,
    dim_noise: usize,
    #[serde(default)]
    labels: Vec<String>,
}

impl HilbertSpec {
    pub fn new(dim_state: usize, dim_noise: usize) -> Result<Self> {
        if dim_state == 0 || dim_noise == 0 {
            return Err(Error::InvalidArgument(format!(
                "truncation levels must be positive (state {dim_state}, noise {dim_noise})"
            )));
        }
        Ok(Self {
            dim_state,
            dim_noise,
            labels: (1..=dim_state).map(|j| format!("e{j}")).collect(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_dim("basis labels", self.dim_state, labels.len())?;
        self.labels = labels;
        Ok(self)
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn zero_state(&self) -> StateVector {
        StateVector::zeros(self.dim_state)
    }

    pub fn check_state(&self, x: &StateVector) -> Result<()> {
        check_dim("state vector", self.dim_state, x.dim())
    }

    pub fn check_operator(&self, op: &HsOperator) -> Result<()> {
        check_dim("operator rows", self.dim_state, op.nrows())?;
        check_dim("operator columns", self.dim_noise, op.ncols())
    }
}

/// Coefficients of an element of `H` in the orthonormal basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector(DVector<f64>);

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        Self(DVector::from_vec(coeffs))
    }

    pub fn from_slice(coeffs: &[f64]) -> Self {
        Self(DVector::from_column_slice(coeffs))
    }

    /// The `j`-th basis vector of an `n`-dimensional truncation.
    pub fn basis(n: usize, j: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[j] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &StateVector) -> Self {
        Self(&self.0 + &other.0 * c)
    }

    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Self {
        Self(self.0.map(f))
    }
}

impl From<DVector<f64>> for StateVector {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

impl Index<usize> for StateVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for &StateVector {
    type Output = StateVector;
    fn add(self, rhs: &StateVector) -> StateVector {
        StateVector(&self.0 + &rhs.0)
    }
}

impl Add for StateVector {
    type Output = StateVector;
    fn add(self, rhs: StateVector) -> StateVector {
        StateVector(self.0 + rhs.0)
    }
}

impl AddAssign<&StateVector> for StateVector {
    fn add_assign(&mut self, rhs: &StateVector) {
        self.0 += &rhs.0;
    }
}

impl Sub for &StateVector {
    type Output = StateVector;
    fn sub(self, rhs: &StateVector) -> StateVector {
        StateVector(&self.0 - &rhs.0)
    }
}

impl Sub for StateVector {
    type Output = StateVector;
    fn sub(self, rhs: StateVector) -> StateVector {
        StateVector(self.0 - rhs.0)
    }
}

impl Neg for StateVector {
    type Output = StateVector;
    fn neg(self) -> StateVector {
        StateVector(-self.0)
    }
}

impl Mul<f64> for &StateVector {
    type Output = StateVector;
    fn mul(self, c: f64) -> StateVector {
        StateVector(&self.0 * c)
    }
}

impl Mul<f64> for StateVector {
    type Output = StateVector;
    fn mul(self, c: f64) -> StateVector {
        StateVector(self.0 * c)
    }
}

/// A linear map from the noise space to `H`, stored as a
/// `dim_state × dim_noise` matrix. Column `j` is the image of the noise basis
/// vector `e_j`, before the `√λ_j` weighting of the covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsOperator(DMatrix<f64>);

impl HsOperator {
    pub fn zeros(dim_state: usize, dim_noise: usize) -> Self {
        Self(DMatrix::zeros(dim_state, dim_noise))
    }

    /// Rectangular identity: `e_j ↦ e_j` for `j < min(dim_state, dim_noise)`.
    pub fn identity(dim_state: usize, dim_noise: usize) -> Self {
        Self(DMatrix::identity(dim_state, dim_noise))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    /// Builds the operator from its columns `Φe_1, …, Φe_J`.
    pub fn from_columns(columns: &[StateVector]) -> Result<Self> {
        let n = columns
            .first()
            .map(StateVector::dim)
            .ok_or_else(|| Error::InvalidArgument("operator needs at least one column".into()))?;
        for c in columns {
            check_dim("operator column", n, c.dim())?;
        }
        Ok(Self(DMatrix::from_fn(n, columns.len(), |i, j| {
            columns[j][i]
        })))
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn column(&self, j: usize) -> StateVector {
        StateVector(self.0.column(j).into_owned())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// `Φ v` for a noise-space coefficient vector `v`.
    pub fn apply(&self, v: &DVector<f64>) -> StateVector {
        StateVector(&self.0 * v)
    }
}

impl Add for &HsOperator {
    type Output = HsOperator;
    fn add(self, rhs: &HsOperator) -> HsOperator {
        HsOperator(&self.0 + &rhs.0)
    }
}

impl Sub for &HsOperator {
    type Output = HsOperator;
    fn sub(self, rhs: &HsOperator) -> HsOperator {
        HsOperator(&self.0 - &rhs.0)
    }
}

pub fn inner_product(x: &StateVector, y: &StateVector) -> Result<f64> {
    check_dim("inner product", x.dim(), y.dim())?;
    Ok(x.0.dot(&y.0))
}

/// `(‖x‖² + ‖Ax‖²)^{1/2}`.
pub fn graph_norm(x: &StateVector, generator: &Generator<'_>) -> Result<f64> {
    let ax = generator.apply(x)?;
    Ok((x.norm_squared() + ax.norm_squared()).sqrt())
}

/// Hilbert–Schmidt norm on `L₂⁰`: `(Σ_j λ_j ‖Φ e_j‖²)^{1/2}`.
pub fn hs_norm(op: &HsOperator, q: &QSpec) -> Result<f64> {
    Ok(hs_norm_squared(op, q)?.sqrt())
}

pub fn hs_norm_squared(op: &HsOperator, q: &QSpec) -> Result<f64> {
    check_dim("Hilbert-Schmidt norm", q.len(), op.ncols())?;
    Ok(op
        .0
        .column_iter()
        .zip(q.eigenvalues())
        .map(|(col, lambda)| lambda * col.norm_squared())
        .sum())
}
