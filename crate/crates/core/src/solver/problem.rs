use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::hilbert::{HsOperator, StateVector};
use crate::semigroup::Semigroup;

pub type DriftFn = Arc<dyn Fn(f64, &StateVector) -> StateVector + Send + Sync>;
/// Returns the unweighted N×J operator; column `j` is `σ e_j`.
pub type DiffusionFn = Arc<dyn Fn(f64, &StateVector) -> HsOperator + Send + Sync>;
/// Jacobian `D(σ e_j)(h)` as an N×N matrix.
pub type DiffusionJacobianFn = Arc<dyn Fn(&StateVector, usize) -> DMatrix<f64> + Send + Sync>;

/// Declared Lipschitz (`L`), linear-growth (`K`) and per-mode (`κ_j`)
/// constants. `κ` may be longer than the noise truncation; the extra entries
/// bound the discarded modes.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct Constants {
    pub lipschitz: f64,
    pub growth: f64,
    pub kappa: Option<Vec<f64>>,
}

/// Marker for problems with state-independent coefficients: constant forcing
/// `α ≡ a` and constant diffusion.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCoefficients {
    pub forcing: StateVector,
    pub diffusion: HsOperator,
}

/// `dX = (AX + α(t,X)) dt + σ(t,X) dW`, `X_0 = h_0`.
#[derive(Clone)]
pub struct SpdeProblem {
    semigroup: Semigroup,
    drift: DriftFn,
    diffusion: DiffusionFn,
    diffusion_jacobian: Option<DiffusionJacobianFn>,
    h0: StateVector,
    noise_dim: usize,
    constants: Constants,
    time_homogeneous: bool,
    linear: Option<LinearCoefficients>,
}

impl fmt::Debug for SpdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpdeProblem")
            .field("semigroup", &self.semigroup)
            .field("h0", &self.h0)
            .field("noise_dim", &self.noise_dim)
            .field("constants", &self.constants)
            .field("time_homogeneous", &self.time_homogeneous)
            .field("linear", &self.linear.is_some())
            .finish_non_exhaustive()
    }
}

impl SpdeProblem {
    /// Zero drift and diffusion; time-homogeneous.
    pub fn new(semigroup: Semigroup, h0: StateVector, noise_dim: usize) -> Result<Self> {
        check_dim("initial state", semigroup.dim(), h0.dim())?;
        if noise_dim == 0 {
            return Err(Error::InvalidArgument("noise dimension must be positive".into()));
        }
        let n = semigroup.dim();
        Ok(Self {
            semigroup,
            drift: Arc::new(move |_, _| StateVector::zeros(n)),
            diffusion: Arc::new(move |_, _| HsOperator::zeros(n, noise_dim)),
            diffusion_jacobian: Some(Arc::new(move |_, _| DMatrix::zeros(n, n))),
            h0,
            noise_dim,
            constants: Constants {
                kappa: Some(vec![0.0; noise_dim]),
                ..Constants::default()
            },
            time_homogeneous: true,
            linear: Some(LinearCoefficients {
                forcing: StateVector::zeros(n),
                diffusion: HsOperator::zeros(n, noise_dim),
            }),
        })
    }

    /// Constant forcing `a` and constant diffusion; eligible for the exact
    /// Ornstein–Uhlenbeck solver when the semigroup is diagonal. The declared
    /// `K` and `κ_j` are valid for any spectrum with `λ_1 ≤ 1`.
    pub fn ornstein_uhlenbeck(
        semigroup: Semigroup,
        h0: StateVector,
        forcing: StateVector,
        diffusion: HsOperator,
    ) -> Result<Self> {
        let n = semigroup.dim();
        check_dim("forcing", n, forcing.dim())?;
        check_dim("diffusion rows", n, diffusion.nrows())?;
        let j = diffusion.ncols();
        let (a, s) = (forcing.clone(), diffusion.clone());
        let growth = forcing.norm().max(diffusion.matrix().norm());
        let kappa = (0..j).map(|c| diffusion.column(c).norm()).collect();
        let mut p = Self::new(semigroup, h0, j)?
            .with_drift(move |_, _| a.clone())
            .with_diffusion(move |_, _| s.clone())
            .with_diffusion_jacobian(move |_, _| DMatrix::zeros(n, n))
            .with_constants(Constants {
                lipschitz: 0.0,
                growth,
                kappa: Some(kappa),
            });
        p.linear = Some(LinearCoefficients { forcing, diffusion });
        Ok(p)
    }

    /// Replaces the drift. Clears the linear marker.
    pub fn with_drift<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &StateVector) -> StateVector + Send + Sync + 'static,
    {
        self.drift = Arc::new(f);
        self.linear = None;
        self
    }

    /// Replaces the diffusion. Clears the linear marker and any Jacobian.
    pub fn with_diffusion<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &StateVector) -> HsOperator + Send + Sync + 'static,
    {
        self.diffusion = Arc::new(f);
        self.diffusion_jacobian = None;
        self.linear = None;
        self
    }

    pub fn with_diffusion_jacobian<F>(mut self, f: F) -> Self
    where
        F: Fn(&StateVector, usize) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.diffusion_jacobian = Some(Arc::new(f));
        self
    }

    pub fn with_constants(mut self, constants: Constants) -> Self {
        self.constants = constants;
        self
    }

    pub fn with_initial(mut self, h0: StateVector) -> Result<Self> {
        check_dim("initial state", self.semigroup.dim(), h0.dim())?;
        self.h0 = h0;
        Ok(self)
    }

    pub fn with_time_homogeneous(mut self, flag: bool) -> Self {
        self.time_homogeneous = flag;
        self
    }

    pub fn semigroup(&self) -> &Semigroup {
        &self.semigroup
    }

    pub fn dim(&self) -> usize {
        self.semigroup.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn initial(&self) -> &StateVector {
        &self.h0
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn is_time_homogeneous(&self) -> bool {
        self.time_homogeneous
    }

    pub fn linear(&self) -> Option<&LinearCoefficients> {
        self.linear.as_ref()
    }

    pub fn has_diffusion_jacobian(&self) -> bool {
        self.diffusion_jacobian.is_some()
    }

    pub fn drift(&self, t: f64, h: &StateVector) -> Result<StateVector> {
        let v = (self.drift)(t, h);
        check_dim("drift output", self.dim(), v.dim())?;
        Ok(v)
    }

    pub fn diffusion(&self, t: f64, h: &StateVector) -> Result<HsOperator> {
        let s = (self.diffusion)(t, h);
        check_dim("diffusion rows", self.dim(), s.nrows())?;
        check_dim("diffusion columns", self.noise_dim, s.ncols())?;
        Ok(s)
    }

    pub fn diffusion_jacobian(&self, h: &StateVector, j: usize) -> Option<DMatrix<f64>> {
        self.diffusion_jacobian.as_ref().map(|f| f(h, j))
    }
}
