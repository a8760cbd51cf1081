//! JSON-configured experiment runner. Each run writes its CSV/JSON artifacts
//! and a `manifest.json` into one output directory.

mod config;
mod suites;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::write_json;

pub use config::{
    load_configs, parse_configs, ExperimentConfig, ExperimentKind, GridConfig, IntegrandKind, NoiseConfig, Options,
    ProblemConfig, Thresholds,
};
pub use suites::Check;

pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub wall_clock_seconds: f64,
    pub passed: bool,
    pub files: Vec<ManifestFile>,
}

#[derive(Serialize)]
struct Report<'a> {
    name: &'a str,
    kind: ExperimentKind,
    seed: u64,
    passed: bool,
    checks: &'a [Check],
    details: &'a serde_json::Value,
}

/// Directory for `config`: `<base>/<name>` when a base is given, otherwise
/// the config's `output`, otherwise `out/<name>`.
pub fn output_dir(config: &ExperimentConfig, base: Option<&Path>) -> PathBuf {
    match (base, &config.output) {
        (Some(b), _) => b.join(&config.name),
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from("out").join(&config.name),
    }
}

/// Creates `dir`, removing the artifacts of an earlier run recorded in its
/// manifest. Any other content is refused so that the new manifest lists
/// every file in the directory.
fn prepare_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let manifest = dir.join(MANIFEST);
        if manifest.exists() {
            let old: RunManifest = serde_json::from_slice(&fs::read(&manifest)?)?;
            for f in &old.files {
                let p = dir.join(&f.path);
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
            fs::remove_file(manifest)?;
        }
        if fs::read_dir(dir)?.next().is_some() {
            return Err(Error::Config {
                path: "output".into(),
                message: format!("{} is not empty and holds no earlier run", dir.display()),
            });
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn describe(dir: &Path, rel: &Path) -> Result<ManifestFile> {
    let bytes = fs::read(dir.join(rel))?;
    Ok(ManifestFile {
        path: rel.to_string_lossy().replace('\\', "/"),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub checks: Vec<Check>,
}

/// Runs one validated experiment into `dir`.
pub fn run(config: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    prepare_dir(dir)?;
    let start = Instant::now();
    let out = match config.kind {
        ExperimentKind::OuOracle => suites::ou_oracle(config, dir),
        ExperimentKind::Picard => suites::picard(config, dir),
        ExperimentKind::Equivalence => suites::equivalence(config, dir),
        ExperimentKind::Isometry => suites::isometry(config, dir),
        ExperimentKind::ManifoldInvariance => suites::manifold_invariance(config, dir),
        ExperimentKind::Uniqueness => suites::uniqueness(config, dir),
    }?;
    let passed = out.checks.iter().all(|c| c.passed);
    write_json(
        &dir.join(REPORT),
        &Report {
            name: &config.name,
            kind: config.kind,
            seed: config.seed,
            passed,
            checks: &out.checks,
            details: &out.report,
        },
    )?;
    let mut files = out.files;
    files.push(REPORT.into());
    let manifest = RunManifest {
        name: config.name.clone(),
        kind: config.kind,
        config_hash: config.hash()?,
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        passed,
        files: files.iter().map(|f| describe(dir, f)).collect::<Result<Vec<_>>>()?,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(RunOutcome {
        manifest,
        checks: out.checks,
    })
}

/// Process exit status for an error: 2 for configuration problems, 1 for
/// failures while running.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. }
        | Error::Json(_)
        | Error::InvalidArgument(_)
        | Error::InvalidGrid(_)
        | Error::GridMismatch(_)
        | Error::DimensionMismatch { .. }
        | Error::Precondition(_) => 2,
        _ => 1,
    }
}
