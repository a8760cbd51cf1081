use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::concepts::{equivalence_suite, mild_residual, uniqueness_check, TestFunctional};
use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, IntegrandKind};
use crate::fixtures;
use crate::hilbert::{HsOperator, StateVector};
use crate::io::{fmt_f64, write_csv_rows, write_json};
use crate::manifold::{check_invariance_conditions, invariance_experiment, TangencyOptions, ANALYTIC_THRESHOLD};
use crate::parallel;
use crate::solver::{exact_ou_solve, exponential_euler_solve, picard_solve, PicardOptions, PicardSummary};
use crate::stats;
use crate::stochastic_integral::{isometry_estimate, moment_bound_check, StepIntegrand};
use crate::wiener::{sample_ensemble, sample_path_indexed, QSpec, WienerPath};

/// One declared threshold and the observed value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="` or `">="`.
    pub relation: &'static str,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            relation: "<=",
            passed: value <= threshold,
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            relation: ">=",
            passed: value >= threshold,
        }
    }
}

/// What a suite produced: checks, a JSON report and the files it wrote
/// (relative to the output directory).
pub(crate) struct SuiteOutput {
    pub checks: Vec<Check>,
    pub report: serde_json::Value,
    pub files: Vec<PathBuf>,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn csv<I: IntoIterator<Item = String>>(&mut self, name: &str, header: &str, rows: I) -> Result<()> {
        write_csv_rows(&self.dir.join(name), header, rows)?;
        self.files.push(name.into());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.dir.join(name), value)?;
        self.files.push(name.into());
        Ok(())
    }
}

fn output(checks: Vec<Check>, report: impl Serialize, w: Writer<'_>) -> Result<SuiteOutput> {
    Ok(SuiteOutput {
        checks,
        report: serde_json::to_value(report)?,
        files: w.files,
    })
}

#[derive(Serialize)]
struct OuReport {
    mode: usize,
    horizon: f64,
    paths: usize,
    mean: f64,
    expected_mean: f64,
    variance: f64,
    variance_stderr: f64,
    expected_variance: f64,
    z_score: f64,
    scheme_paths: usize,
    scheme_errors: Vec<(f64, f64)>,
    scheme_order: Option<f64>,
}

pub(crate) fn ou_oracle(c: &ExperimentConfig, dir: &Path) -> Result<SuiteOutput> {
    let (prob, q) = c.build_problem()?;
    let grid = c.master_grid()?;
    let mode = c.options.mode.unwrap_or(0);
    let lin = prob
        .linear()
        .ok_or_else(|| Error::Precondition("ou_oracle needs constant coefficients".into()))?;
    let mu = prob.semigroup().rates().ok_or_else(|| Error::Precondition("diagonal semigroup".into()))?[mode];
    let t = grid.horizon();
    let h0 = prob.initial()[mode];
    let a = lin.forcing[mode];
    let (decay, orbit, var_factor) = if mu == 0.0 {
        (1.0, t, t)
    } else {
        ((-mu * t).exp(), -(-mu * t).exp_m1() / mu, -(-2.0 * mu * t).exp_m1() / (2.0 * mu))
    };
    let expected_mean = decay * h0 + a * orbit;
    let expected_variance: f64 = (0..q.len())
        .map(|j| q.eigenvalues()[j] * lin.diffusion.matrix()[(mode, j)].powi(2))
        .sum::<f64>()
        * var_factor;

    let terminal = parallel::try_map_indexed(c.paths, |i| {
        let path = sample_path_indexed(&q, &grid, c.seed, i as u64);
        Ok::<_, Error>(exact_ou_solve(&prob, &path, &q)?.final_state().clone())
    })?;
    let values: Vec<f64> = terminal.iter().map(|s| s[mode]).collect();
    let (variance, variance_stderr) = stats::variance_with_error(&values);
    let z_score = (variance - expected_variance).abs() / variance_stderr;
    let z_max = c.thresholds.z_max.unwrap_or(3.0);
    let mut checks = vec![Check::at_most("variance z-score", z_score, z_max)];

    let ladder = c.ladder();
    let scheme_paths = c.options.scheme_paths.unwrap_or(c.paths.min(100)).min(c.paths);
    let mut scheme_errors = Vec::new();
    let mut scheme_order = None;
    if ladder.len() >= 2 {
        let factors = ladder
            .iter()
            .map(|&dt| crate::concepts::subsample_factor(&grid, dt))
            .collect::<Result<Vec<_>>>()?;
        let per_path = parallel::try_map_indexed(scheme_paths, |i| {
            let path = sample_path_indexed(&q, &grid, c.seed, i as u64);
            factors
                .iter()
                .map(|&f| {
                    let p = path.subsample(f)?;
                    exponential_euler_solve(&prob, &p, &q)?.sup_gap(&exact_ou_solve(&prob, &p, &q)?)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (l, &dt) in ladder.iter().enumerate() {
            scheme_errors.push((dt, stats::mean(&per_path.iter().map(|r| r[l]).collect::<Vec<_>>())));
        }
        let order = stats::convergence_order(&ladder, &scheme_errors.iter().map(|e| e.1).collect::<Vec<_>>());
        checks.push(Check::at_least("scheme order", order, c.thresholds.min_order.unwrap_or(0.9)));
        scheme_order = Some(order);
    }

    let mut w = Writer::new(dir);
    w.csv(
        "terminal_states.csv",
        "path,mode,value",
        terminal.iter().enumerate().flat_map(|(i, s)| {
            s.coeffs()
                .iter()
                .enumerate()
                .map(move |(m, v)| format!("{i},{},{}", m + 1, fmt_f64(*v)))
                .collect::<Vec<_>>()
        }),
    )?;
    if !scheme_errors.is_empty() {
        w.csv(
            "scheme_errors.csv",
            "dt,mean_sup_error",
            scheme_errors.iter().map(|(dt, e)| format!("{},{}", fmt_f64(*dt), fmt_f64(*e))),
        )?;
    }
    let report = OuReport {
        mode,
        horizon: t,
        paths: c.paths,
        mean: stats::mean(&values),
        expected_mean,
        variance,
        variance_stderr,
        expected_variance,
        z_score,
        scheme_paths,
        scheme_errors,
        scheme_order,
    };
    w.json("variance_report.json", &report)?;
    output(checks, report, w)
}

/// Per-path integrand for the isometry suite.
fn integrand(
    kind: IntegrandKind,
    prob: &crate::solver::SpdeProblem,
    q: &QSpec,
    path: &WienerPath,
) -> Result<StepIntegrand> {
    let grid = path.grid().clone();
    let base = prob.diffusion(0.0, prob.initial())?;
    match kind {
        IntegrandKind::Constant => Ok(StepIntegrand::constant(grid, base)),
        IntegrandKind::StateDependent => {
            let x = exponential_euler_solve(prob, path, q)?;
            let t = grid.times();
            let mut values = Vec::with_capacity(grid.steps());
            for k in 0..grid.steps() {
                values.push(match x.state(k) {
                    Some(h) if k < x.last_index() => prob.diffusion(t[k], h)?,
                    _ => HsOperator::zeros(prob.dim(), q.len()),
                });
            }
            StepIntegrand::from_values(grid, values)
        }
        IntegrandKind::Anticipating => {
            let values = (0..grid.steps())
                .map(|k| base.scale(path.beta_increment(k)[0] / grid.dt(k).sqrt()))
                .collect();
            StepIntegrand::from_values(grid, values)
        }
    }
}

pub(crate) fn isometry(c: &ExperimentConfig, dir: &Path) -> Result<SuiteOutput> {
    let (prob, q) = c.build_problem()?;
    let grid = c.master_grid()?;
    let kind = c.options.integrand.unwrap_or_default();
    let factory = |p: &WienerPath| integrand(kind, &prob, &q, p);
    let est = isometry_estimate(factory, &q, &grid, grid.steps(), c.paths, c.seed)?;
    let z_max = c.thresholds.z_max.unwrap_or(3.0);
    let mut checks = vec![if c.options.expect_violation.unwrap_or(false) {
        Check::at_least("isometry z-score (violation expected)", est.z_score(), z_max)
    } else {
        Check::at_most("isometry z-score", est.z_score(), z_max)
    }];
    let moment = match c.options.moment_p {
        Some(p) => {
            let m = moment_bound_check(factory, &q, &grid, grid.steps(), p, c.paths, c.seed)?;
            checks.push(Check::at_most(
                "moment bound excess in standard errors",
                (m.lhs - m.bound) / m.lhs_stderr,
                3.0,
            ));
            Some(m)
        }
        None => None,
    };
    let mut w = Writer::new(dir);
    let mut rows = vec![
        format!("lhs,{}", fmt_f64(est.lhs)),
        format!("rhs,{}", fmt_f64(est.rhs)),
        format!("lhs_stderr,{}", fmt_f64(est.stderr)),
        format!("difference_stderr,{}", fmt_f64(est.diff_stderr)),
    ];
    if let Some(m) = &moment {
        rows.push(format!("moment_lhs,{}", fmt_f64(m.lhs)));
        rows.push(format!("moment_bound,{}", fmt_f64(m.bound)));
    }
    w.csv("isometry.csv", "quantity,value", rows)?;
    let report = serde_json::json!({ "integrand": kind, "estimate": est, "moment_bound": moment });
    w.json("isometry_report.json", &report)?;
    output(checks, report, w)
}

#[derive(Serialize)]
struct PicardReport {
    contraction_constant: f64,
    summary: PicardSummary,
    ratios: Vec<f64>,
    envelope: Vec<f64>,
    mild_residual: f64,
}

pub(crate) fn picard(c: &ExperimentConfig, dir: &Path) -> Result<SuiteOutput> {
    let (prob, q) = c.build_problem()?;
    let grid = c.master_grid()?;
    let path = sample_path_indexed(&q, &grid, c.seed, 0);
    let opts = PicardOptions {
        tol: c.thresholds.tol.unwrap_or(1e-8),
        max_iter: c.thresholds.max_iter.unwrap_or(100),
        initial_guess: None,
    };
    let out = picard_solve(&prob, &path, &q, &opts)?;
    let g = prob.semigroup().growth();
    let t = grid.horizon();
    let ct = prob.constants().lipschitz * t * g.m * (g.omega.max(0.0) * t).exp();
    let slack = c.thresholds.ratio_slack.unwrap_or(0.1);
    let d = &out.history;
    let horizon = d.len().min(12);
    // d_n ≤ d_1 (CT)^{n-1} / (n-1)!
    let mut envelope = Vec::with_capacity(horizon);
    let mut e = d[0];
    for n in 1..=horizon {
        if n > 1 {
            e *= ct / (n - 1) as f64;
        }
        envelope.push(e);
    }
    let ratios: Vec<f64> = (1..horizon).filter(|&i| d[i - 1] > 0.0).map(|i| d[i] / d[i - 1]).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let envelope_excess = (0..horizon)
        .map(|i| if envelope[i] > 0.0 { d[i] / envelope[i] } else if d[i] > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    let residual = mild_residual(&out.solution, &prob, &path, &q)?.max_abs;
    let checks = vec![
        Check::at_most("max successive ratio", max_ratio, ct * (1.0 + slack)),
        Check::at_most("difference over factorial envelope", envelope_excess, 1.0 + slack),
        Check::at_most("fixed point mild residual", residual, c.thresholds.residual_max.unwrap_or(1e-8)),
    ];
    let mut w = Writer::new(dir);
    w.csv(
        "picard_history.csv",
        "iteration,difference,envelope",
        d.iter().enumerate().map(|(i, v)| {
            let env = envelope.get(i).map(|e| fmt_f64(*e)).unwrap_or_default();
            format!("{},{},{}", i + 1, fmt_f64(*v), env)
        }),
    )?;
    let mut buf = Vec::new();
    out.solution.write_csv(&mut buf)?;
    std::fs::write(dir.join("solution.csv"), buf)?;
    w.files.push("solution.csv".into());
    let report = PicardReport {
        contraction_constant: ct,
        summary: (&out).into(),
        ratios,
        envelope,
        mild_residual: residual,
    };
    w.json("picard_report.json", &report)?;
    output(checks, report, w)
}

pub(crate) fn equivalence(c: &ExperimentConfig, dir: &Path) -> Result<SuiteOutput> {
    let (prob, q) = c.build_problem()?;
    let grid = c.master_grid()?;
    let paths = sample_ensemble(&q, &grid, c.seed, c.paths);
    let functionals = TestFunctional::standard_set(prob.semigroup(), c.options.random_functionals.unwrap_or(2), c.seed)?;
    let r = equivalence_suite(&prob, &paths, &q, &c.ladder(), &functionals)?;
    let min_order = c.thresholds.min_order.unwrap_or(0.9);
    let checks = vec![
        Check::at_least("mild order", r.mild_order, min_order),
        Check::at_least("weak order", r.weak_order, min_order),
        Check::at_least("strong order", r.strong_order, min_order),
        Check::at_most("max spread", r.max_spread(), c.thresholds.max_spread.unwrap_or(10.0)),
    ];
    let mut w = Writer::new(dir);
    w.csv(
        "equivalence_levels.csv",
        "dt,mild,weak,strong",
        r.levels
            .iter()
            .map(|l| format!("{},{},{},{}", fmt_f64(l.dt), fmt_f64(l.mild), fmt_f64(l.weak), fmt_f64(l.strong))),
    )?;
    w.json("equivalence_report.json", &r)?;
    output(checks, r, w)
}

pub(crate) fn uniqueness(c: &ExperimentConfig, dir: &Path) -> Result<SuiteOutput> {
    let (prob, q) = c.build_problem()?;
    let grid = c.master_grid()?;
    let delta = c.options.delta.unwrap_or(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let dir_vec = DVector::from_fn(prob.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let h0 = prob.initial().clone();
    let g0 = h0.axpy(delta / dir_vec.norm(), &StateVector::from(dir_vec));
    let reports = parallel::try_map_indexed(c.paths, |i| {
        let path = sample_path_indexed(&q, &grid, c.seed, i as u64);
        Ok::<_, Error>((uniqueness_check(&prob, &h0, &h0, &path, &q)?, uniqueness_check(&prob, &h0, &g0, &path, &q)?))
    })?;
    let equal_gap = reports.iter().map(|r| r.0.sup_gap).fold(0.0, f64::max);
    let ratio = reports
        .iter()
        .flat_map(|r| r.1.gaps.iter().zip(&r.1.bound).map(|(g, b)| g / b))
        .fold(0.0, f64::max);
    let checks = vec![
        Check::at_most("equal data sup gap", equal_gap, c.thresholds.equal_gap_max.unwrap_or(1e-12)),
        Check::at_most("gap over bound", ratio, 1.0 + c.thresholds.bound_slack.unwrap_or(1e-6)),
    ];
    let mut w = Writer::new(dir);
    w.csv(
        "uniqueness_gaps.csv",
        "path,t,gap,bound",
        reports.iter().enumerate().flat_map(|(i, r)| {
            r.1.times
                .iter()
                .zip(r.1.gaps.iter().zip(&r.1.bound))
                .map(|(t, (g, b))| format!("{i},{},{},{}", fmt_f64(*t), fmt_f64(*g), fmt_f64(*b)))
                .collect::<Vec<_>>()
        }),
    )?;
    let report = serde_json::json!({
        "delta": delta,
        "paths": c.paths,
        "equal_data_sup_gap": equal_gap,
        "max_gap_over_bound": ratio,
    });
    w.json("uniqueness_report.json", &report)?;
    output(checks, report, w)
}

pub(crate) fn manifold_invariance(c: &ExperimentConfig, dir: &Path) -> Result<SuiteOutput> {
    let (prob, q) = c.build_problem()?;
    let chart = fixtures::chart(&c.chart_name().ok_or_else(|| Error::Precondition("no chart".into()))?)?;
    let threshold = c.thresholds.tangency.unwrap_or(ANALYTIC_THRESHOLD);
    let tangency = check_invariance_conditions(
        &chart,
        &prob,
        &q,
        &TangencyOptions {
            samples: c.options.tangency_samples.unwrap_or(100),
            threshold,
            seed: c.seed,
            ..TangencyOptions::default()
        },
    )?;
    let grid = c.master_grid()?;
    let paths = sample_ensemble(&q, &grid, c.seed, c.paths);
    let inv = invariance_experiment(&chart, &prob, &q, &paths, &c.ladder())?;
    let coarse = inv.levels.first().map(|l| l.mean_max_distance).unwrap_or(0.0);
    let fine = inv.levels.last().map(|l| l.mean_max_distance).unwrap_or(0.0);
    let checks = if c.options.expect_violation.unwrap_or(false) {
        let mut checks = vec![
            Check::at_least("corrected drift residual (violation expected)", tangency.max_drift, threshold),
            Check::at_least("finest over coarsest distance", fine / coarse, 0.5),
        ];
        if c.problem.coefficients == "affine_violated" {
            let delta = c.problem.delta.unwrap_or(fixtures::DEFAULT_DELTA);
            let worst = tangency
                .samples
                .iter()
                .map(|s| {
                    let r = s.drift / (delta / s.drift_norm);
                    r.max(1.0 / r)
                })
                .fold(0.0, f64::max);
            checks.push(Check::at_most("drift residual factor from δ/‖drift‖", worst, 2.0));
        }
        checks
    } else {
        vec![
            Check::at_most("domain failures", tangency.samples.iter().filter(|s| !s.in_domain).count() as f64, 0.0),
            Check::at_most("max diffusion tangency residual", tangency.max_diffusion, threshold),
            Check::at_most("max drift tangency residual", tangency.max_drift, threshold),
            Check::at_least("distance order", inv.order, c.thresholds.min_order.unwrap_or(0.5)),
        ]
    };
    let mut w = Writer::new(dir);
    let mut buf = Vec::new();
    inv.write_csv(&mut buf)?;
    std::fs::write(dir.join("invariance_distances.csv"), buf)?;
    w.files.push("invariance_distances.csv".into());
    w.csv(
        "invariance_levels.csv",
        "dt,mean_max_distance,stderr,max_distance,stopped",
        inv.levels.iter().map(|l| {
            format!(
                "{},{},{},{},{}",
                fmt_f64(l.dt),
                fmt_f64(l.mean_max_distance),
                fmt_f64(l.stderr),
                fmt_f64(l.max_distance),
                l.stopped
            )
        }),
    )?;
    w.json("tangency_report.json", &tangency)?;
    let report = serde_json::json!({
        "tangency_passed": tangency.passed,
        "max_diffusion": tangency.max_diffusion,
        "max_drift": tangency.max_drift,
        "levels": inv.levels,
        "order": inv.order,
    });
    w.json("invariance_report.json", &report)?;
    output(checks, report, w)
}
