//! `curvlab`: config-driven experiment runner.
//!
//! Every subcommand writes a CSV (to `--out`, the config's `out_path`, or
//! `<experiment>.csv`) and a JSON summary with extension `.json` next to it.
//! Exit status is 2 for configuration and regime errors and 3 for numerical
//! failures.

mod config;
mod error;
mod run;

use clap::{Parser, Subcommand};
use config::{Experiment, RunArgs, RunConfig};
use error::CliError;
use serde_json::json;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

const BUILD_ID: &str = env!("CURVLAB_BUILD_ID");

#[derive(Parser)]
#[command(name = "curvlab", version, about = "Curvature experiments on random complex submanifolds of CP^n")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distance between the exact finite-degree jet law and its limit.
    JetsCov(RunArgs),
    /// Monte Carlo check of E[det SS*] rho_F(0) = n!/(n-r)!.
    Wishart(RunArgs),
    /// Expected volume d^r/(n-r)! of the zero locus.
    Volume(RunArgs),
    /// Tail probabilities of the distance to a discriminant.
    DiscTail(RunArgs),
    /// Kac–Rice estimates of the density above -a against the degree.
    Decay(RunArgs),
    /// Estimator against slice sampling of actual zero loci.
    CrossValidate(RunArgs),
    /// Per-point curvatures of one sampled hypersurface.
    EmpiricalDensity(RunArgs),
}

impl Command {
    fn split(&self) -> (Experiment, &RunArgs) {
        match self {
            Command::JetsCov(a) => (Experiment::JetsCov, a),
            Command::Wishart(a) => (Experiment::Wishart, a),
            Command::Volume(a) => (Experiment::Volume, a),
            Command::DiscTail(a) => (Experiment::DiscTail, a),
            Command::Decay(a) => (Experiment::Decay, a),
            Command::CrossValidate(a) => (Experiment::CrossValidate, a),
            Command::EmpiricalDensity(a) => (Experiment::EmpiricalDensity, a),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    }
    std::fs::write(path, bytes).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn execute(command: &Command) -> Result<(), CliError> {
    let (experiment, args) = command.split();
    let cfg = RunConfig::load(args, experiment)?;
    run::preflight(&cfg)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build()?;
    let start = Instant::now();
    let output = pool.install(|| run::run(&cfg))?;
    let csv_path = cfg.out_path.clone().unwrap();
    let json_path = csv_path.with_extension("json");
    write_file(&csv_path, &output.csv)?;
    let summary = json!({
        "experiment": experiment.name(),
        "build_id": BUILD_ID,
        "config": cfg,
        "workers": pool.current_num_threads(),
        "csv": csv_path,
        "runtime_seconds": start.elapsed().as_secs_f64(),
        "results": output.results,
    });
    write_file(&json_path, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
