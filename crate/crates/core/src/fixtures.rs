//! Built-in semigroups, coefficient sets and charts referenced by name from
//! experiment configs.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::hilbert::{hs_norm, HsOperator, StateVector};
use crate::manifold::{Chart, Patch};
use crate::semigroup::Semigroup;
use crate::solver::{Constants, SpdeProblem};
use crate::wiener::QSpec;

/// Size of the orthogonal drift perturbation in `affine_violated`.
pub const DEFAULT_DELTA: f64 = 0.05;

const SEMIGROUPS: &[(&str, &str)] = &[
    ("heat_diagonal", "diagonal generator with rates j², any dimension"),
    ("shift_grid", "periodic translation on an odd number of cells over [0, 1)"),
    ("matrix_generic", "fixed non-normal 3×3 generator, exponentiated numerically"),
    ("identity", "A = 0"),
];

const COEFFICIENTS: &[(&str, &str)] = &[
    ("zero", "α ≡ 0, σ ≡ 0"),
    ("additive_identity", "α ≡ 0, σ e_j = e_j"),
    ("linear_decay", "α(h) = -h/2, σ ≡ 0"),
    ("sine_additive", "α(h) = sin(h)/2 componentwise, σ e_j = e_j/2"),
    ("sine_multiplicative", "α(h) = sin(h)/2, σ(h) e_j = sin(h_j) e_j / 2"),
    ("affine_invariant", "N = 3, drift and noise tangent to the line (0,0,1/2) + ℝ(1,1/2,0)"),
    ("affine_violated", "affine_invariant plus a drift component δ e_3 off the line"),
    ("quadratic_tangent", "A = 0, N = 2, noise tangent to the parabola (y, y²), Itô-compensated drift"),
];

const CHARTS: &[(&str, &str)] = &[
    ("affine_line", "φ(y) = (0,0,1/2) + y (1,1/2,0), ζ = e_1, V = (-3, 3)"),
    ("quadratic_curve", "φ(y) = (y, y²), ζ = e_1, V = (-2, 2)"),
];

#[derive(Clone, Debug, Serialize)]
pub struct SemigroupFixture {
    pub name: &'static str,
    pub description: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoefficientFixture {
    pub name: &'static str,
    pub description: &'static str,
    /// Default pairing used for the listing.
    pub semigroup: &'static str,
    pub dim: usize,
    pub noise: Vec<f64>,
    pub constants: Constants,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChartFixture {
    pub name: &'static str,
    pub description: &'static str,
    pub dim: usize,
    pub dim_state: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Registry {
    pub semigroups: Vec<SemigroupFixture>,
    pub coefficients: Vec<CoefficientFixture>,
    pub charts: Vec<ChartFixture>,
}

/// Default `(semigroup, N, Q)` used to list a coefficient fixture.
pub fn default_setting(coefficients: &str) -> Result<(&'static str, usize, QSpec)> {
    Ok(match coefficients {
        "affine_invariant" | "affine_violated" => ("matrix_generic", 3, QSpec::new(vec![1.0, 0.5])?),
        "quadratic_tangent" => ("identity", 2, QSpec::new(vec![1.0])?),
        "zero" | "additive_identity" | "linear_decay" | "sine_additive" | "sine_multiplicative" => {
            ("heat_diagonal", 4, QSpec::polynomial(4)?)
        }
        other => return Err(unknown("coefficient set", other)),
    })
}

/// Chart on which a coefficient fixture is built to be (or fail to be)
/// invariant.
pub fn paired_chart(coefficients: &str) -> Option<&'static str> {
    match coefficients {
        "affine_invariant" | "affine_violated" => Some("affine_line"),
        "quadratic_tangent" => Some("quadratic_curve"),
        _ => None,
    }
}

pub fn list_fixtures() -> Result<Registry> {
    let coefficients = COEFFICIENTS
        .iter()
        .map(|&(name, description)| {
            let (sg, n, q) = default_setting(name)?;
            let prob = coefficients(name, semigroup(sg, n)?, &q)?;
            Ok(CoefficientFixture {
                name,
                description,
                semigroup: sg,
                dim: n,
                noise: q.eigenvalues().to_vec(),
                constants: prob.constants().clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let charts = CHARTS
        .iter()
        .map(|&(name, description)| {
            let c = chart(name)?;
            Ok(ChartFixture {
                name,
                description,
                dim: c.dim(),
                dim_state: c.dim_state(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Registry {
        semigroups: SEMIGROUPS
            .iter()
            .map(|&(name, description)| SemigroupFixture { name, description })
            .collect(),
        coefficients,
        charts,
    })
}

pub fn is_semigroup(name: &str) -> bool {
    SEMIGROUPS.iter().any(|(n, _)| *n == name)
}

pub fn is_coefficient_set(name: &str) -> bool {
    COEFFICIENTS.iter().any(|(n, _)| *n == name)
}

pub fn is_chart(name: &str) -> bool {
    CHARTS.iter().any(|(n, _)| *n == name)
}

fn unknown(what: &str, name: &str) -> Error {
    Error::InvalidArgument(format!("unknown {what} fixture {name:?}"))
}

pub fn matrix_generic_generator() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[-1.0, 0.5, 0.2, -0.3, -0.8, 0.4, 0.1, -0.2, -1.2])
}

pub fn semigroup(name: &str, dim: usize) -> Result<Semigroup> {
    match name {
        "heat_diagonal" => Semigroup::diagonal((1..=dim).map(|j| (j * j) as f64).collect()),
        "shift_grid" => Semigroup::grid_shift(dim, 1.0),
        "matrix_generic" => {
            check_dim("matrix_generic dimension", 3, dim)?;
            Semigroup::matrix(matrix_generic_generator())
        }
        "identity" => Semigroup::identity(dim),
        other => Err(unknown("semigroup", other)),
    }
}

/// `N × J` matrix with ones on the diagonal.
fn eye(n: usize, j: usize) -> HsOperator {
    HsOperator::identity(n, j)
}

/// `K` for a state-independent diffusion together with per-mode `κ_j`.
fn constant_noise_constants(s: &HsOperator, q: &QSpec) -> Result<(f64, Vec<f64>)> {
    let sqrt_l = q.sqrt_eigenvalues();
    let kappa = (0..s.ncols()).map(|c| sqrt_l[c] * s.column(c).norm()).collect();
    Ok((hs_norm(s, q)?, kappa))
}

/// Coefficient set `name` on semigroup `sg` with noise spectrum `q`. The
/// declared constants are computed for this `q`. The initial state is zero,
/// or the chart origin for the manifold fixtures.
pub fn coefficients(name: &str, sg: Semigroup, q: &QSpec) -> Result<SpdeProblem> {
    let n = sg.dim();
    let j = q.len();
    match name {
        "zero" => Ok(SpdeProblem::new(sg, StateVector::zeros(n), j)?.with_constants(Constants {
            lipschitz: 0.0,
            growth: 0.0,
            kappa: Some(vec![0.0; j]),
        })),
        "additive_identity" => {
            let s = eye(n, j);
            let (growth, kappa) = constant_noise_constants(&s, q)?;
            Ok(
                SpdeProblem::ornstein_uhlenbeck(sg, StateVector::zeros(n), StateVector::zeros(n), s)?.with_constants(
                    Constants {
                        lipschitz: 0.0,
                        growth,
                        kappa: Some(kappa),
                    },
                ),
            )
        }
        "linear_decay" => Ok(SpdeProblem::new(sg, StateVector::zeros(n), j)?
            .with_drift(|_, h| h.scale(-0.5))
            .with_constants(Constants {
                lipschitz: 0.5,
                growth: 0.5,
                kappa: Some(vec![0.0; j]),
            })),
        "sine_additive" => {
            let s = eye(n, j).scale(0.5);
            let (sg_growth, kappa) = constant_noise_constants(&s, q)?;
            let n2 = n;
            Ok(SpdeProblem::new(sg, StateVector::zeros(n), j)?
                .with_drift(|_, h| h.map(|x| 0.5 * x.sin()))
                .with_diffusion(move |_, _| s.clone())
                .with_diffusion_jacobian(move |_, _| DMatrix::zeros(n2, n2))
                .with_constants(Constants {
                    lipschitz: 0.5,
                    growth: sg_growth.max(0.5),
                    kappa: Some(kappa),
                }))
        }
        "sine_multiplicative" => {
            let top = q.sqrt_eigenvalues().max();
            let kappa = (0..j)
                .map(|c| if c < n { 0.5 * q.sqrt_eigenvalues()[c] } else { 0.0 })
                .collect();
            Ok(SpdeProblem::new(sg, StateVector::zeros(n), j)?
                .with_drift(|_, h| h.map(|x| 0.5 * x.sin()))
                .with_diffusion(move |_, h| {
                    HsOperator::from_matrix(DMatrix::from_fn(n, j, |r, c| if r == c { 0.5 * h[r].sin() } else { 0.0 }))
                })
                .with_diffusion_jacobian(move |h, c| {
                    let mut m = DMatrix::zeros(n, n);
                    if c < n {
                        m[(c, c)] = 0.5 * h[c].cos();
                    }
                    m
                })
                .with_constants(Constants {
                    lipschitz: 0.5f64.max(0.5 * top),
                    growth: 0.5f64.max(0.5 * top),
                    kappa: Some(kappa),
                }))
        }
        "affine_invariant" => affine(sg, q, 0.0),
        "affine_violated" => affine(sg, q, DEFAULT_DELTA),
        "quadratic_tangent" => quadratic_tangent(sg, q),
        other => Err(unknown("coefficient set", other)),
    }
}

const AFFINE_B: [f64; 3] = [1.0, 0.5, 0.0];
const AFFINE_ORIGIN: [f64; 3] = [0.0, 0.0, 0.5];

/// Noise profile of mode `c` along `b`: `s_c(x) = (1 + sin(x)/2) / (2(c+1))`.
fn affine_profile(c: usize, x: f64) -> (f64, f64) {
    let w = 0.5 / (c as f64 + 1.0);
    (w * (1.0 + 0.5 * x.sin()), w * 0.5 * x.cos())
}

/// `α(h) = -(I - bζᵀ) A h + sin(ζ·h) b / 2 + δ e_3`, `σ(h) e_c = s_c(ζ·h) b`
/// with `ζ = e_1`. For `δ = 0`, `Ah + α(h)` and every `σʲ(h)` lie in `ℝb`,
/// and so does the Itô correction, for every `h`.
pub fn affine(sg: Semigroup, q: &QSpec, delta: f64) -> Result<SpdeProblem> {
    check_dim("affine fixture dimension", 3, sg.dim())?;
    let j = q.len();
    let b = StateVector::from_slice(&AFFINE_B);
    let a = sg.generator_matrix();
    let bz = DMatrix::from_fn(3, 3, |r, c| if c == 0 { AFFINE_B[r] } else { 0.0 });
    let p = (DMatrix::identity(3, 3) - &bz) * &a;
    let p_norm = p.clone().svd(false, false).singular_values.max();
    let bn = b.norm();
    let drift_l = p_norm + 0.5 * bn;
    let sqrt_l = q.sqrt_eigenvalues();
    let lip_c: Vec<f64> = (0..j).map(|c| sqrt_l[c] * bn * 0.25 / (c as f64 + 1.0)).collect();
    let grow_c: Vec<f64> = (0..j).map(|c| sqrt_l[c] * bn * 0.75 / (c as f64 + 1.0)).collect();
    let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let constants = Constants {
        lipschitz: drift_l.max(l2(&lip_c)),
        growth: (drift_l + delta).max(l2(&grow_c)),
        kappa: Some(grow_c),
    };
    let (b1, b2, b3) = (b.clone(), b.clone(), b);
    SpdeProblem::new(sg, StateVector::from_slice(&AFFINE_ORIGIN), j)?
        .with_drift(move |_, h| {
            let mut v = StateVector::from(-(&p * h.as_vector())).axpy(0.5 * h[0].sin(), &b1);
            v = v.axpy(delta, &StateVector::basis(3, 2));
            v
        })
        .with_diffusion(move |_, h| {
            let cols: Vec<StateVector> = (0..j).map(|c| b2.scale(affine_profile(c, h[0]).0)).collect();
            HsOperator::from_columns(&cols).expect("three rows per column")
        })
        .with_diffusion_jacobian(move |h, c| {
            let d = affine_profile(c, h[0]).1;
            DMatrix::from_fn(3, 3, |r, k| if k == 0 { d * b3[r] } else { 0.0 })
        })
        .with_constants(constants)
        .with_initial(StateVector::from_slice(&AFFINE_ORIGIN))
}

/// `s(x) = 1 / (2(1+x²))` and its first two derivatives.
fn quad_s(x: f64) -> [f64; 3] {
    let d = 1.0 + x * x;
    [0.5 / d, -x / (d * d), (3.0 * x * x - 1.0) / (d * d * d)]
}

/// `f(x) = s(x)(1, 2x)`, `f'`, `f''`.
fn quad_f(x: f64) -> [[f64; 2]; 3] {
    let [s, s1, s2] = quad_s(x);
    [
        [s, 2.0 * x * s],
        [s1, 2.0 * s + 2.0 * x * s1],
        [s2, 4.0 * s1 + 2.0 * x * s2],
    ]
}

/// `A = 0` on `ℝ²`, `σ(h) e_1 = f(h_1)`, `α = ½ λ_1 Dσ¹σ¹`, other noise modes
/// silent. The noise is tangent to the parabola and the corrected drift
/// vanishes, so the parabola is invariant.
pub fn quadratic_tangent(sg: Semigroup, q: &QSpec) -> Result<SpdeProblem> {
    check_dim("quadratic fixture dimension", 2, sg.dim())?;
    if sg.generator_matrix().iter().any(|v| *v != 0.0) {
        return Err(Error::InvalidArgument("quadratic_tangent needs A = 0".into()));
    }
    let j = q.len();
    let lam = q.eigenvalues()[0];
    // Scan for sup |f|, sup |f'| and sup |α'|; everything decays like 1/x.
    let (mut f_sup, mut f1_sup, mut a_sup, mut a1_sup) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..=40_000 {
        let x = -20.0 + i as f64 * 1e-3;
        let [f, f1, f2] = quad_f(x);
        let s = quad_s(x);
        let norm = |v: [f64; 2]| v[0].hypot(v[1]);
        f_sup = f_sup.max(norm(f));
        f1_sup = f1_sup.max(norm(f1));
        a_sup = a_sup.max(0.5 * lam * s[0] * norm(f1));
        let da = [s[1] * f1[0] + s[0] * f2[0], s[1] * f1[1] + s[0] * f2[1]];
        a1_sup = a1_sup.max(0.5 * lam * norm(da));
    }
    let margin = 1.25;
    let sq = lam.sqrt();
    let constants = Constants {
        lipschitz: margin * a1_sup.max(sq * f1_sup),
        growth: margin * a_sup.max(sq * f_sup),
        kappa: Some((0..j).map(|c| if c == 0 { margin * sq * f1_sup.max(f_sup) } else { 0.0 }).collect()),
    };
    Ok(SpdeProblem::new(sg, StateVector::zeros(2), j)?
        .with_drift(move |_, h| {
            let s = quad_s(h[0])[0];
            let f1 = quad_f(h[0])[1];
            StateVector::from_vec(vec![0.5 * lam * s * f1[0], 0.5 * lam * s * f1[1]])
        })
        .with_diffusion(move |_, h| {
            let f = quad_f(h[0])[0];
            HsOperator::from_matrix(DMatrix::from_fn(2, j, |r, c| if c == 0 { f[r] } else { 0.0 }))
        })
        .with_diffusion_jacobian(|h, c| {
            let f1 = quad_f(h[0])[1];
            DMatrix::from_fn(2, 2, |r, k| if c == 0 && k == 0 { f1[r] } else { 0.0 })
        })
        .with_constants(constants))
}

pub fn chart(name: &str) -> Result<Chart> {
    match name {
        "affine_line" => Chart::affine(
            StateVector::from_slice(&AFFINE_ORIGIN),
            DMatrix::from_column_slice(3, 1, &AFFINE_B),
            vec![StateVector::basis(3, 0)],
            Patch::cube(1, 3.0)?,
        ),
        "quadratic_curve" => Chart::new(
            2,
            |y| StateVector::from_vec(vec![y[0], y[0] * y[0]]),
            |y| DMatrix::from_column_slice(2, 1, &[1.0, 2.0 * y[0]]),
            |_, u, v| StateVector::from_vec(vec![0.0, 2.0 * u[0] * v[0]]),
            vec![StateVector::basis(2, 0)],
            Patch::cube(1, 2.0)?,
        ),
        other => Err(unknown("chart", other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::validate_coefficients;

    #[test]
    fn registry_lists_required_semigroups() {
        let r = list_fixtures().unwrap();
        for name in ["heat_diagonal", "shift_grid", "matrix_generic"] {
            assert!(r.semigroups.iter().any(|s| s.name == name), "{name}");
        }
    }

    #[test]
    fn every_coefficient_fixture_validates() {
        for &(name, _) in COEFFICIENTS {
            let (sg, n, q) = default_setting(name).unwrap();
            let prob = coefficients(name, semigroup(sg, n).unwrap(), &q).unwrap();
            let r = validate_coefficients(&prob, &q, 2000, 11).unwrap();
            assert!(r.passed, "{name}: {:?}", r.violations);
        }
    }

    #[test]
    fn every_chart_fixture_satisfies_invariants() {
        for &(name, _) in CHARTS {
            let r = chart(name).unwrap().check_invariants(200, 5).unwrap();
            assert!(r.passed, "{name}: {r:?}");
        }
    }

    #[test]
    fn unknown_names_rejected() {
        assert!(semigroup("nope", 3).is_err());
        assert!(chart("nope").is_err());
        assert!(coefficients("nope", Semigroup::identity(2).unwrap(), &QSpec::new(vec![1.0]).unwrap()).is_err());
        assert!(semigroup("matrix_generic", 4).is_err());
        assert!(semigroup("shift_grid", 4).is_err());
    }

    #[test]
    fn affine_initial_state_on_chart() {
        let q = QSpec::new(vec![1.0, 0.5]).unwrap();
        let p = coefficients("affine_invariant", semigroup("matrix_generic", 3).unwrap(), &q).unwrap();
        assert!(chart("affine_line").unwrap().distance(p.initial()).unwrap() < 1e-15);
    }
}
