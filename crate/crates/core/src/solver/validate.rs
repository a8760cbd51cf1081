use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::hilbert::{hs_norm, StateVector};
use crate::solver::{Constants, SpdeProblem};
use crate::wiener::QSpec;

/// Relative slack allowed on declared constants.
const SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub condition: String,
    pub observed: f64,
    pub declared: f64,
    pub t: f64,
    pub h1: Vec<f64>,
    pub h2: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub declared: Constants,
    /// `max ‖α(t,h₁) - α(t,h₂)‖ / ‖h₁ - h₂‖`.
    pub drift_lipschitz: f64,
    /// Same ratio for `σ` in `L₂⁰`.
    pub diffusion_lipschitz: f64,
    /// `max ‖α(t,h)‖ / (1 + ‖h‖)`.
    pub drift_growth: f64,
    pub diffusion_growth: f64,
    /// Per-mode Lipschitz and growth ratios of `σʲ = √λ_j σ e_j`.
    pub mode_lipschitz: Vec<f64>,
    pub mode_growth: Vec<f64>,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

struct Tracker {
    max: f64,
    worst: Option<(f64, StateVector, Option<StateVector>)>,
}

impl Tracker {
    fn new() -> Self {
        Self { max: 0.0, worst: None }
    }

    fn record(&mut self, ratio: f64, t: f64, h1: &StateVector, h2: Option<&StateVector>) {
        if ratio > self.max || ratio.is_nan() {
            self.max = ratio;
            self.worst = Some((t, h1.clone(), h2.cloned()));
        }
    }

    fn check(&self, name: String, declared: f64, out: &mut Vec<Violation>) {
        let ok = self.max <= declared * (1.0 + SLACK) + SLACK;
        if !ok {
            let (t, h1, h2) = self.worst.clone().expect("a violation has a witness");
            out.push(Violation {
                condition: name,
                observed: self.max,
                declared,
                t,
                h1: h1.coeffs().to_vec(),
                h2: h2.map(|h| h.coeffs().to_vec()),
            });
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> StateVector {
    StateVector::from_vec((0..n).map(|_| rng.sample(StandardNormal)).collect())
}

/// Samples `samples` random pairs (times in `[0, 1]`, radii spread over
/// several decades) and compares observed Lipschitz and growth ratios with
/// the declared constants. The per-mode checks run when `κ` is declared.
pub fn validate_coefficients(prob: &SpdeProblem, q: &QSpec, samples: usize, seed: u64) -> Result<ValidationReport> {
    check_dim("noise modes", prob.noise_dim(), q.len())?;
    let n = prob.dim();
    let j = q.len();
    let sqrt_l = q.sqrt_eigenvalues();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut a_lip, mut s_lip, mut a_gr, mut s_gr) = (Tracker::new(), Tracker::new(), Tracker::new(), Tracker::new());
    let mut m_lip: Vec<Tracker> = (0..j).map(|_| Tracker::new()).collect();
    let mut m_gr: Vec<Tracker> = (0..j).map(|_| Tracker::new()).collect();

    for i in 0..samples {
        let t = if prob.is_time_homogeneous() { 0.0 } else { rng.random::<f64>() };
        let h1 = if i == 0 {
            StateVector::zeros(n)
        } else {
            gaussian(&mut rng, n).scale(10f64.powf(rng.random_range(-2.0..2.0)))
        };
        let sep = 10f64.powf(rng.random_range(-3.0..1.0)) * (1.0 + h1.norm());
        let h2 = h1.axpy(sep, &gaussian(&mut rng, n));
        let dist = (&h1 - &h2).norm();
        let (a1, a2) = (prob.drift(t, &h1)?, prob.drift(t, &h2)?);
        let (s1, s2) = (prob.diffusion(t, &h1)?, prob.diffusion(t, &h2)?);
        let grow = 1.0 + h1.norm();
        if dist > 0.0 {
            a_lip.record((&a1 - &a2).norm() / dist, t, &h1, Some(&h2));
            s_lip.record(hs_norm(&(&s1 - &s2), q)? / dist, t, &h1, Some(&h2));
        }
        a_gr.record(a1.norm() / grow, t, &h1, None);
        s_gr.record(hs_norm(&s1, q)? / grow, t, &h1, None);
        for c in 0..j {
            let (c1, c2) = (s1.column(c).scale(sqrt_l[c]), s2.column(c).scale(sqrt_l[c]));
            if dist > 0.0 {
                m_lip[c].record((&c1 - &c2).norm() / dist, t, &h1, Some(&h2));
            }
            m_gr[c].record(c1.norm() / grow, t, &h1, None);
        }
    }

    let declared = prob.constants().clone();
    let mut violations = Vec::new();
    a_lip.check("drift Lipschitz".into(), declared.lipschitz, &mut violations);
    s_lip.check("diffusion Lipschitz".into(), declared.lipschitz, &mut violations);
    a_gr.check("drift growth".into(), declared.growth, &mut violations);
    s_gr.check("diffusion growth".into(), declared.growth, &mut violations);
    if let Some(kappa) = &declared.kappa {
        if kappa.len() < j {
            return Err(Error::DimensionMismatch {
                context: "declared kappa",
                expected: j,
                found: kappa.len(),
            });
        }
        for c in 0..j {
            m_lip[c].check(format!("mode {} Lipschitz", c + 1), kappa[c], &mut violations);
            m_gr[c].check(format!("mode {} growth", c + 1), kappa[c], &mut violations);
        }
    }
    Ok(ValidationReport {
        samples,
        drift_lipschitz: a_lip.max,
        diffusion_lipschitz: s_lip.max,
        drift_growth: a_gr.max,
        diffusion_growth: s_gr.max,
        mode_lipschitz: m_lip.iter().map(|t| t.max).collect(),
        mode_growth: m_gr.iter().map(|t| t.max).collect(),
        passed: violations.is_empty(),
        violations,
        declared,
    })
}
