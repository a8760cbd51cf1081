use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::hilbert::StateVector;
use crate::semigroup::{Semigroup, SemigroupSpec};
use crate::solver::SpdeProblem;
use crate::wiener::{QSpec, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    OuOracle,
    Picard,
    Equivalence,
    Isometry,
    ManifoldInvariance,
    Uniqueness,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::OuOracle => "ou_oracle",
            ExperimentKind::Picard => "picard",
            ExperimentKind::Equivalence => "equivalence",
            ExperimentKind::Isometry => "isometry",
            ExperimentKind::ManifoldInvariance => "manifold_invariance",
            ExperimentKind::Uniqueness => "uniqueness",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConfig {
    Eigenvalues(Vec<f64>),
    /// `λ_j = j⁻²`
    Polynomial(usize),
    /// `λ_j = 2⁻ʲ`
    Geometric(usize),
}

impl NoiseConfig {
    pub fn build(&self) -> Result<QSpec> {
        match self {
            NoiseConfig::Eigenvalues(v) => QSpec::new(v.clone()),
            NoiseConfig::Polynomial(j) => QSpec::polynomial(*j),
            NoiseConfig::Geometric(j) => QSpec::geometric(*j),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Semigroup fixture name; exclusive with `semigroup_spec`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semigroup: Option<String>,
    /// State dimension `N` for a semigroup fixture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semigroup_spec: Option<SemigroupSpec>,
    pub coefficients: String,
    /// Noise spectrum; its length is the truncation `J`.
    pub noise: NoiseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    /// Drift perturbation for `affine_violated`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    /// Coarsest step of the ladder; exclusive with `ladder`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Number of ladder levels below `dt`, halving the step each time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder_depth: Option<usize>,
    /// Explicit ladder, coarsest first; consecutive entries must halve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<f64>>,
    /// Master step = finest ladder step / `refinement`.
    #[serde(default = "one")]
    pub refinement: usize,
}

fn one() -> usize {
    1
}

fn default_paths() -> usize {
    1000
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Allowed Monte-Carlo deviation in standard errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_order: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_spread: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_slack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_slack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equal_gap_max: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrandKind {
    /// `σ(0, h₀)` on every cell.
    #[default]
    Constant,
    /// `σ(t_k, X_k)` along the exponential Euler solution.
    StateDependent,
    /// `σ(0, h₀)` times `Δβ¹_k / √Δ`, which looks into the cell it
    /// multiplies. A negative control.
    Anticipating,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Mode whose variance is checked (`ou_oracle`), 0-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<usize>,
    /// Paths used for the pathwise scheme comparison (`ou_oracle`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrand: Option<IntegrandKind>,
    /// Also check the `2p`-th moment bound (`isometry`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_p: Option<f64>,
    /// Expect the check to fail (negative controls).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_violation: Option<bool>,
    /// Random unit test functionals added to the basis (`equivalence`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_functionals: Option<usize>,
    /// Distance `‖h₀ - g₀‖` (`uniqueness`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangency_samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub options: Options,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Suite {
    experiments: Vec<ExperimentConfig>,
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses either a single experiment or `{"experiments": [...]}`. Errors
/// carry the JSON path of the offending field.
pub fn parse_configs(text: &str) -> Result<Vec<ExperimentConfig>> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| config_error("$", e.to_string()))?;
    let configs = if value.get("experiments").is_some() {
        let suite: Suite = serde_path_to_error::deserialize(value)
            .map_err(|e| config_error(e.path().to_string(), e.inner().to_string()))?;
        suite.experiments
    } else {
        let c: ExperimentConfig = serde_path_to_error::deserialize(value)
            .map_err(|e| config_error(e.path().to_string(), e.inner().to_string()))?;
        vec![c]
    };
    if configs.is_empty() {
        return Err(config_error("experiments", "no experiments"));
    }
    for (i, a) in configs.iter().enumerate() {
        if configs[..i].iter().any(|b| b.name == a.name) {
            return Err(config_error(format!("experiments[{i}].name"), format!("duplicate name {:?}", a.name)));
        }
    }
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

pub fn load_configs(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(path.display().to_string(), e.to_string()))?;
    parse_configs(&text)
}

impl ExperimentConfig {
    /// Checks fixtures, grid nesting and kind-specific requirements without
    /// running anything.
    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        match (&p.semigroup, &p.semigroup_spec) {
            (Some(name), None) => {
                if !fixtures::is_semigroup(name) {
                    return Err(config_error("problem.semigroup", format!("unknown fixture {name:?}")));
                }
                if p.dim.is_none() {
                    return Err(config_error("problem.dim", "required with a semigroup fixture"));
                }
            }
            (None, Some(_)) => {
                if p.dim.is_some() {
                    return Err(config_error("problem.dim", "implied by semigroup_spec"));
                }
            }
            _ => {
                return Err(config_error(
                    "problem.semigroup",
                    "give exactly one of `semigroup` (fixture) and `semigroup_spec`",
                ))
            }
        }
        if !fixtures::is_coefficient_set(&p.coefficients) {
            return Err(config_error(
                "problem.coefficients",
                format!("unknown fixture {:?}", p.coefficients),
            ));
        }
        if let Some(c) = &p.chart {
            if !fixtures::is_chart(c) {
                return Err(config_error("problem.chart", format!("unknown fixture {c:?}")));
            }
        }
        if self.kind == ExperimentKind::ManifoldInvariance && self.chart_name().is_none() {
            return Err(config_error("problem.chart", "manifold_invariance needs a chart"));
        }

        let g = &self.grid;
        if !(g.horizon > 0.0 && g.horizon.is_finite()) {
            return Err(config_error("grid.horizon", "must be positive"));
        }
        match (&g.dt, &g.ladder) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(config_error("grid.dt", "give exactly one of `dt` and `ladder`")),
        }
        if g.ladder.is_some() && g.ladder_depth.is_some() {
            return Err(config_error("grid.ladder_depth", "implied by `ladder`"));
        }
        if let Some(d) = g.ladder_depth {
            if d == 0 || d > 20 {
                return Err(config_error("grid.ladder_depth", "must be between 1 and 20"));
            }
        }
        let ladder = self.ladder();
        let field = if g.ladder.is_some() { "grid.ladder" } else { "grid.dt" };
        if ladder.is_empty() {
            return Err(config_error(field, "empty ladder"));
        }
        for (i, &dt) in ladder.iter().enumerate() {
            if !(dt > 0.0 && dt <= g.horizon) {
                return Err(config_error(format!("{field}[{i}]"), "must lie in (0, horizon]"));
            }
            let steps = g.horizon / dt;
            if (steps - steps.round()).abs() > 1e-9 * steps {
                return Err(config_error(field, format!("{dt} does not divide the horizon {}", g.horizon)));
            }
            if i > 0 && (ladder[i - 1] - 2.0 * dt).abs() > 1e-12 * dt {
                return Err(config_error(
                    format!("{field}[{i}]"),
                    format!("ladder entries must nest by a factor 2: {} then {dt}", ladder[i - 1]),
                ));
            }
        }
        if g.refinement == 0 {
            return Err(config_error("grid.refinement", "must be positive"));
        }
        let min_depth = match self.kind {
            ExperimentKind::Equivalence => crate::concepts::MIN_LADDER,
            ExperimentKind::ManifoldInvariance => 2,
            _ => 1,
        };
        if ladder.len() < min_depth {
            return Err(config_error(
                "grid.ladder_depth",
                format!("{} needs at least {min_depth} levels", self.kind.label()),
            ));
        }
        if self.kind == ExperimentKind::Equivalence && g.refinement < 2 {
            return Err(config_error(
                "grid.refinement",
                "equivalence needs a reference grid finer than the ladder (refinement ≥ 2)",
            ));
        }
        if self.paths == 0 {
            return Err(config_error("paths", "must be positive"));
        }
        let min_paths = match self.kind {
            ExperimentKind::Isometry => crate::stochastic_integral::MIN_ISOMETRY_ENSEMBLE,
            ExperimentKind::OuOracle => 2,
            _ => 1,
        };
        if self.paths < min_paths {
            return Err(config_error("paths", format!("{} needs at least {min_paths}", self.kind.label())));
        }
        // Build once so that dimension mismatches surface as config errors.
        let (prob, q) = self
            .build_problem()
            .map_err(|e| config_error("problem", e.to_string()))?;
        if let Some(mode) = self.options.mode {
            if mode >= prob.dim() {
                return Err(config_error("options.mode", format!("{mode} ≥ state dimension {}", prob.dim())));
            }
        }
        if self.kind == ExperimentKind::OuOracle && (prob.linear().is_none() || !prob.semigroup().is_diagonal()) {
            return Err(config_error(
                "problem",
                "ou_oracle needs constant coefficients on a diagonal semigroup",
            ));
        }
        let _ = q;
        Ok(())
    }

    pub fn chart_name(&self) -> Option<String> {
        self.problem
            .chart
            .clone()
            .or_else(|| fixtures::paired_chart(&self.problem.coefficients).map(String::from))
    }

    pub fn build_semigroup(&self) -> Result<Semigroup> {
        match (&self.problem.semigroup, &self.problem.semigroup_spec) {
            (Some(name), _) => fixtures::semigroup(name, self.problem.dim.unwrap_or(0)),
            (None, Some(spec)) => Semigroup::from_spec(spec),
            (None, None) => Err(config_error("problem.semigroup", "missing")),
        }
    }

    pub fn build_problem(&self) -> Result<(SpdeProblem, QSpec)> {
        let q = self.problem.noise.build()?;
        let sg = self.build_semigroup()?;
        let mut prob = match (self.problem.coefficients.as_str(), self.problem.delta) {
            ("affine_violated", Some(d)) => fixtures::affine(sg, &q, d)?,
            (name, _) => fixtures::coefficients(name, sg, &q)?,
        };
        if let Some(h0) = &self.problem.initial {
            prob = prob.with_initial(StateVector::from_slice(h0))?;
        }
        Ok((prob, q))
    }

    /// Ladder steps, coarsest first.
    pub fn ladder(&self) -> Vec<f64> {
        match (&self.grid.ladder, self.grid.dt) {
            (Some(l), _) => l.clone(),
            (None, Some(dt)) => (0..self.grid.ladder_depth.unwrap_or(1))
                .map(|l| dt / f64::powi(2.0, l as i32))
                .collect(),
            (None, None) => Vec::new(),
        }
    }

    pub fn master_grid(&self) -> Result<TimeGrid> {
        let finest = self
            .ladder()
            .last()
            .copied()
            .ok_or_else(|| config_error("grid", "empty ladder"))?;
        let steps = (self.grid.horizon / finest).round() as usize * self.grid.refinement;
        TimeGrid::uniform(self.grid.horizon, steps)
    }

    /// SHA-256 of the canonical serialization; stable under re-serialization.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const OU: &str = r#"{
        "name": "ou",
        "kind": "ou_oracle",
        "seed": 7,
        "problem": {
            "semigroup_spec": {"kind": "diagonal", "rates": [1.0]},
            "coefficients": "additive_identity",
            "noise": {"eigenvalues": [1.0]}
        },
        "grid": {"horizon": 1.0, "dt": 0.0078125},
        "paths": 100
    }"#;

    #[test]
    fn parses_single_config() {
        let c = parse_configs(OU).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].kind, ExperimentKind::OuOracle);
        assert_eq!(c[0].ladder(), vec![0.0078125]);
        assert_eq!(c[0].master_grid().unwrap().steps(), 128);
    }

    #[test]
    fn hash_stable_under_reserialization() {
        let c = parse_configs(OU).unwrap().remove(0);
        let again = parse_configs(&serde_json::to_string_pretty(&c).unwrap()).unwrap().remove(0);
        assert_eq!(c.hash().unwrap(), again.hash().unwrap());
    }

    #[test]
    fn error_carries_field_path() {
        let bad = OU.replace("\"paths\": 100", "\"paths\": \"many\"");
        match parse_configs(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "paths"),
            other => panic!("{other:?}"),
        }
        let bad = OU.replace("\"rates\": [1.0]", "\"rates\": [1.0, \"x\"]");
        match parse_configs(&bad) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("problem.semigroup_spec"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_dividing_step_rejected() {
        let bad = OU.replace("0.0078125", "0.3");
        assert!(matches!(parse_configs(&bad), Err(Error::Config { path, .. }) if path == "grid.dt"));
    }

    #[test]
    fn non_nesting_ladder_rejected() {
        let bad = OU.replace("\"dt\": 0.0078125", "\"ladder\": [0.25, 0.125, 0.0625, 0.015625]");
        match parse_configs(&bad) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "grid.ladder[3]");
                assert!(message.contains("factor 2"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let good = OU.replace("\"dt\": 0.0078125", "\"ladder\": [0.25, 0.125, 0.0625]");
        assert_eq!(parse_configs(&good).unwrap()[0].ladder().len(), 3);
    }

    #[test]
    fn unknown_fixture_rejected() {
        let bad = OU.replace("additive_identity", "does_not_exist");
        assert!(matches!(parse_configs(&bad), Err(Error::Config { path, .. }) if path == "problem.coefficients"));
    }

    #[test]
    fn equivalence_requires_refined_master() {
        let c = OU
            .replace("ou_oracle", "equivalence")
            .replace("\"dt\": 0.0078125", "\"dt\": 0.0625, \"ladder_depth\": 3");
        assert!(matches!(parse_configs(&c), Err(Error::Config { path, .. }) if path == "grid.refinement"));
    }
}
