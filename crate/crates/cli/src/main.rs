use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use spde_core::experiment::{self, ExperimentConfig};
use spde_core::fixtures;

/// Runs JSON-configured SPDE experiments and writes CSV/JSON artifacts.
///
/// Exit status: 0 when every declared threshold holds, 1 when a threshold
/// fails or a run aborts, 2 for configuration errors.
#[derive(Debug, Parser)]
#[command(name = "spde-lab", version)]
struct Args {
    /// Experiment config (a single experiment or `{"experiments": [...]}`).
    #[arg(long, value_name = "PATH", required_unless_present = "list_fixtures")]
    config: Option<PathBuf>,

    /// Overrides the seed of every selected experiment.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Base output directory; each experiment writes to `<DIR>/<name>`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Runs only the named experiment of a multi-experiment config.
    #[arg(long, value_name = "NAME")]
    experiment: Option<String>,

    /// Worker threads; 0 picks the number of cores.
    #[arg(long, value_name = "N", default_value_t = 0)]
    threads: usize,

    /// Prints the fixture registry as JSON and exits.
    #[arg(long)]
    list_fixtures: bool,
}

fn config_failure(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn select(args: &Args) -> Result<Vec<ExperimentConfig>, ExitCode> {
    let path = args.config.as_ref().expect("clap enforces --config");
    let mut configs = experiment::load_configs(path).map_err(config_failure)?;
    if let Some(name) = &args.experiment {
        configs.retain(|c| &c.name == name);
        if configs.is_empty() {
            return Err(config_failure(format!("no experiment named {name:?} in {}", path.display())));
        }
    }
    if let Some(seed) = args.seed {
        for c in &mut configs {
            c.seed = seed;
        }
    }
    Ok(configs)
}

fn run_all(args: &Args, configs: &[ExperimentConfig]) -> ExitCode {
    let mut status = 0u8;
    for c in configs {
        let dir = experiment::output_dir(c, args.out.as_deref());
        match experiment::run(c, &dir) {
            Ok(outcome) => {
                for check in &outcome.checks {
                    println!(
                        "{} {}: {}: {:e} {} {:e}",
                        if check.passed { "PASS" } else { "FAIL" },
                        c.name,
                        check.name,
                        check.value,
                        check.relation,
                        check.threshold
                    );
                }
                println!(
                    "{} {} -> {}",
                    if outcome.manifest.passed { "passed" } else { "FAILED" },
                    c.name,
                    dir.join(experiment::MANIFEST).display()
                );
                if !outcome.manifest.passed {
                    status = status.max(1);
                }
            }
            Err(e) => {
                eprintln!("error in {}: {e}", c.name);
                status = status.max(experiment::exit_code(&e) as u8);
            }
        }
    }
    ExitCode::from(status)
}

#[cfg(feature = "parallel")]
fn with_threads(n: usize, f: impl FnOnce() -> ExitCode + Send) -> ExitCode {
    match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(pool) => pool.install(f),
        Err(e) => config_failure(format!("cannot build thread pool: {e}")),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads(n: usize, f: impl FnOnce() -> ExitCode + Send) -> ExitCode {
    if n > 1 {
        eprintln!("warning: built without the `parallel` feature; running on one thread");
    }
    f()
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list_fixtures {
        return match fixtures::list_fixtures().and_then(|r| Ok(serde_json::to_string_pretty(&r)?)) {
            Ok(text) => {
                println!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        };
    }
    let configs = match select(&args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    with_threads(args.threads, || run_all(&args, &configs))
}
