use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::hilbert::StateVector;
use crate::manifold::{tangent_basis, Chart};
use crate::solver::SpdeProblem;
use crate::wiener::QSpec;

/// Default tangency threshold with analytic Jacobians.
pub const ANALYTIC_THRESHOLD: f64 = 1e-6;
/// Default tangency threshold with finite-difference Jacobians.
pub const FINITE_DIFFERENCE_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianSource {
    /// Analytic when the problem supplies one, otherwise finite differences.
    #[default]
    Auto,
    Analytic,
    FiniteDifference,
}

impl JacobianSource {
    fn resolve(self, prob: &SpdeProblem) -> Result<JacobianSource> {
        match self {
            JacobianSource::Auto if prob.has_diffusion_jacobian() => Ok(JacobianSource::Analytic),
            JacobianSource::Auto => Ok(JacobianSource::FiniteDifference),
            JacobianSource::Analytic if !prob.has_diffusion_jacobian() => {
                Err(Error::Precondition("problem has no analytic diffusion Jacobian".into()))
            }
            s => Ok(s),
        }
    }
}

fn require_homogeneous(prob: &SpdeProblem) -> Result<()> {
    if prob.is_time_homogeneous() {
        Ok(())
    } else {
        Err(Error::Precondition("manifold conditions need a time-homogeneous problem".into()))
    }
}

/// `D(σ e_j)(h) v`, unweighted.
fn directional_derivative(
    prob: &SpdeProblem,
    h: &StateVector,
    j: usize,
    v: &StateVector,
    source: JacobianSource,
) -> Result<StateVector> {
    match source {
        JacobianSource::FiniteDifference => {
            let nv = v.norm();
            if nv == 0.0 {
                return Ok(StateVector::zeros(h.dim()));
            }
            let eps = 1e-6 * (1.0 + h.norm()) / nv;
            let plus = prob.diffusion(0.0, &h.axpy(eps, v))?.column(j);
            let minus = prob.diffusion(0.0, &h.axpy(-eps, v))?.column(j);
            Ok((plus - minus).scale(0.5 / eps))
        }
        _ => {
            let jac = prob
                .diffusion_jacobian(h, j)
                .ok_or_else(|| Error::Precondition("problem has no analytic diffusion Jacobian".into()))?;
            check_dim("diffusion Jacobian", h.dim(), jac.nrows())?;
            check_dim("diffusion Jacobian", h.dim(), jac.ncols())?;
            Ok((jac * v.as_vector()).into())
        }
    }
}

/// `Dσʲ(h) σʲ(h)` with `σʲ = √λ_j σ e_j`.
pub fn diffusion_self_derivative(
    prob: &SpdeProblem,
    q: &QSpec,
    h: &StateVector,
    j: usize,
    source: JacobianSource,
) -> Result<StateVector> {
    let source = source.resolve(prob)?;
    let s = prob.diffusion(0.0, h)?;
    if j >= s.ncols() {
        return Err(Error::IndexOutOfRange { index: j, len: s.ncols() });
    }
    Ok(directional_derivative(prob, h, j, &s.column(j), source)?.scale(q.eigenvalues()[j]))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItoCorrection {
    /// `½ Σ_{j≤J} Dσʲ(h) σʲ(h)`.
    pub value: StateVector,
    /// `(1 + ‖h‖) Σ_{j>J} κ_j²` from the declared `κ`.
    pub tail_bound: f64,
    pub source: JacobianSource,
}

/// The Itô correction of a time-homogeneous problem at `h`.
pub fn ito_correction(prob: &SpdeProblem, q: &QSpec, h: &StateVector, source: JacobianSource) -> Result<ItoCorrection> {
    require_homogeneous(prob)?;
    check_dim("noise modes", prob.noise_dim(), q.len())?;
    let kappa = prob
        .constants()
        .kappa
        .as_ref()
        .ok_or_else(|| Error::Precondition("per-mode constants κ must be declared for the tail bound".into()))?;
    let resolved = source.resolve(prob)?;
    let mut value = StateVector::zeros(prob.dim());
    for j in 0..q.len() {
        value += &diffusion_self_derivative(prob, q, h, j, resolved)?;
    }
    let tail: f64 = kappa.iter().skip(q.len()).map(|k| k * k).sum();
    Ok(ItoCorrection {
        value: value.scale(0.5),
        tail_bound: (1.0 + h.norm()) * tail,
        source: resolved,
    })
}

/// `‖v - P v‖ / ‖v‖` for the orthogonal projection `P` onto the column span
/// of `basis`; zero for `v = 0`.
pub fn relative_distance_from_span(basis: &DMatrix<f64>, v: &StateVector) -> Result<f64> {
    check_dim("vector", basis.nrows(), v.dim())?;
    let nv = v.norm();
    if nv == 0.0 {
        return Ok(0.0);
    }
    let q = basis.clone().qr().q();
    let r = v.as_vector() - &q * (q.transpose() * v.as_vector());
    Ok(r.norm() / nv)
}

/// `Ah + α(h) - ½ Σ Dσʲ(h)σʲ(h)`.
pub fn corrected_drift(prob: &SpdeProblem, q: &QSpec, h: &StateVector, source: JacobianSource) -> Result<StateVector> {
    let ah = prob.semigroup().generator().apply(h)?;
    Ok(ah + prob.drift(0.0, h)? - ito_correction(prob, q, h, source)?.value)
}

#[derive(Clone, Debug)]
pub struct TangencyOptions {
    pub samples: usize,
    pub threshold: f64,
    pub seed: u64,
    pub jacobian: JacobianSource,
}

impl Default for TangencyOptions {
    fn default() -> Self {
        Self {
            samples: 100,
            threshold: ANALYTIC_THRESHOLD,
            seed: 0,
            jacobian: JacobianSource::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TangencySample {
    pub y: Vec<f64>,
    pub in_domain: bool,
    /// Relative distance of each `σʲ(h)` from the tangent space.
    pub diffusion: Vec<f64>,
    /// Relative distance of the corrected drift from the tangent space.
    pub drift: f64,
    pub drift_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TangencyReport {
    pub threshold: f64,
    pub jacobian: JacobianSource,
    pub samples: Vec<TangencySample>,
    pub domain_passed: bool,
    pub diffusion_passed: bool,
    pub drift_passed: bool,
    pub max_diffusion: f64,
    pub max_drift: f64,
    /// `(j, y)` of the worst diffusion residual when condition (ii) fails.
    pub diffusion_witness: Option<(usize, Vec<f64>)>,
    pub drift_witness: Option<Vec<f64>>,
    pub passed: bool,
}

/// Samples `y ∈ V`, sets `h = φ(y)`, and tests: (i) `h ∈ D(A)`, (ii)
/// `σʲ(h) ∈ T_hM` for every `j`, (iii) the corrected drift lies in `T_hM`.
pub fn check_invariance_conditions(
    chart: &Chart,
    prob: &SpdeProblem,
    q: &QSpec,
    opts: &TangencyOptions,
) -> Result<TangencyReport> {
    require_homogeneous(prob)?;
    check_dim("chart ambient dimension", prob.dim(), chart.dim_state())?;
    check_dim("noise modes", prob.noise_dim(), q.len())?;
    let source = opts.jacobian.resolve(prob)?;
    let generator = prob.semigroup().generator();
    let sqrt_l = q.sqrt_eigenvalues();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut samples = Vec::with_capacity(opts.samples);
    for _ in 0..opts.samples {
        let y = chart.patch().sample(&mut rng, 0.0);
        let basis = tangent_basis(chart, &y)?;
        let h = chart.phi(&y)?;
        let s = prob.diffusion(0.0, &h)?;
        let diffusion = (0..q.len())
            .map(|j| relative_distance_from_span(&basis, &s.column(j).scale(sqrt_l[j])))
            .collect::<Result<Vec<_>>>()?;
        let drift_vec = corrected_drift(prob, q, &h, source)?;
        samples.push(TangencySample {
            y: y.as_slice().to_vec(),
            in_domain: generator.contains(&h),
            diffusion,
            drift: relative_distance_from_span(&basis, &drift_vec)?,
            drift_norm: drift_vec.norm(),
        });
    }
    let mut max_diffusion: f64 = 0.0;
    let mut diffusion_witness = None;
    let mut max_drift: f64 = 0.0;
    let mut drift_witness = None;
    for s in &samples {
        for (j, r) in s.diffusion.iter().enumerate() {
            if *r > max_diffusion {
                max_diffusion = *r;
                diffusion_witness = Some((j, s.y.clone()));
            }
        }
        if s.drift > max_drift {
            max_drift = s.drift;
            drift_witness = Some(s.y.clone());
        }
    }
    let domain_passed = samples.iter().all(|s| s.in_domain);
    let diffusion_passed = max_diffusion <= opts.threshold;
    let drift_passed = max_drift <= opts.threshold;
    Ok(TangencyReport {
        threshold: opts.threshold,
        jacobian: source,
        samples,
        domain_passed,
        diffusion_passed,
        drift_passed,
        max_diffusion,
        max_drift,
        diffusion_witness: if diffusion_passed { None } else { diffusion_witness },
        drift_witness: if drift_passed { None } else { drift_witness },
        passed: domain_passed && diffusion_passed && drift_passed,
    })
}

/// Relative defect of
/// `Dσʲ(h)σʲ(h) = Dφ(y)⟨ζ, Dσʲ(h)σʲ(h)⟩ + D²φ(y)(⟨ζ,σʲ(h)⟩, ⟨ζ,σʲ(h)⟩)` at `h = φ(y)`.
pub fn decomposition_defect(
    chart: &Chart,
    prob: &SpdeProblem,
    q: &QSpec,
    y: &DVector<f64>,
    j: usize,
    source: JacobianSource,
) -> Result<f64> {
    let h = chart.phi(y)?;
    let sigma_j = prob.diffusion(0.0, &h)?.column(j).scale(q.sqrt_eigenvalues()[j]);
    let lhs = diffusion_self_derivative(prob, q, &h, j, source)?;
    let z = chart.zeta_matrix();
    let c = &z * sigma_j.as_vector();
    let rhs = StateVector::from(chart.jacobian(y)? * (&z * lhs.as_vector())) + chart.second_derivative(y, &c, &c)?;
    let scale = lhs.norm().max(rhs.norm());
    Ok(if scale == 0.0 { 0.0 } else { (&lhs - &rhs).norm() / scale })
}
