use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use helitorus::experiments::{run_experiment, Outcome, CATALOG};
use rayon::prelude::*;

mod config;

use config::{parse_tol, ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "helitorus", version, about = "Helicity and twist-map experiments on the 3-torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config file
    Run {
        config: PathBuf,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides a named tolerance, e.g. --tol drift=1e-8
        #[arg(long = "tol", value_parser = parse_tol)]
        tol: Vec<(String, f64)>,
    },
    /// Print the experiment catalog
    ListExperiments,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListExperiments => {
            for e in CATALOG {
                println!("{:<28} {} {}", e.name, e.description, e.anchor);
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, seed, out, tol } => match run(&config, seed, out, tol.into_iter().collect()) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(EXIT_FAIL),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}

fn write(path: &Path, contents: &str) -> Result<(), ConfigError> {
    std::fs::write(path, contents).map_err(|source| ConfigError::Io { path: path.into(), source })
}

fn run(path: &Path, seed: Option<u64>, out: Option<PathBuf>, overrides: BTreeMap<String, f64>) -> Result<bool, ConfigError> {
    let cfg = RunConfig::load(path)?;
    cfg.check_overrides(&overrides)?;
    let seed = seed.unwrap_or(cfg.seed);
    let out = out.unwrap_or_else(|| cfg.out.clone());
    std::fs::create_dir_all(&out).map_err(|source| ConfigError::Io { path: out.clone(), source })?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| ConfigError::Invalid(format!("workers: {e}")))?;
    let outcomes: Vec<Outcome> =
        pool.install(|| cfg.experiments.par_iter().map(|exp| run_experiment(exp, seed, &overrides)).collect());

    let mut all_pass = true;
    for outcome in &outcomes {
        let report = &outcome.report;
        let stem = format!("{}-{}", report.name, seed);
        write(&out.join(format!("{stem}.json")), &report.to_json())?;
        if cfg.csv {
            if let Some(csv) = &outcome.csv {
                write(&out.join(format!("{stem}.csv")), csv)?;
            }
        }
        if let Some(detail) = &outcome.detail {
            let mut s = serde_json::to_string_pretty(detail).expect("detail serializes");
            s.push('\n');
            write(&out.join(format!("{stem}.detail.json")), &s)?;
        }
        let passed = report.passed();
        all_pass &= passed;
        println!("{} {}", if passed { "PASS" } else { "FAIL" }, report.name);
        for (name, ok) in &report.verdicts {
            if !ok {
                println!("  failed verdict: {name}");
            }
        }
        if let Some(e) = &report.error {
            println!("  error: {e}");
        }
        eprintln!("{}: {:.3} s", report.name, outcome.elapsed_seconds);
    }
    Ok(all_pass)
}
