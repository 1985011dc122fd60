use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ptc_galerkin::convergence::fit_slope;
use ptc_galerkin::driver::read_log_csv;
use ptc_galerkin::problems::list_builtins;

mod config;
mod experiment;

use config::RunConfig;

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;

/// Adaptive pseudo-transient continuation Galerkin solver for -ε Δu = f(u).
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ε sweep described by a TOML file.
    Run { config: PathBuf },
    /// List the built-in problems.
    ListProblems,
    /// Fit the log-log slope of the total estimator against DOF in a log.
    Fit { log: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::ListProblems => {
            for (name, description) in list_builtins() {
                println!("{name:<20} {description}");
            }
            ExitCode::SUCCESS
        }
        Command::Fit { log } => fit(&log),
        Command::Run { config } => run(&config),
    }
}

fn fit(path: &Path) -> ExitCode {
    let rows = match File::open(path).map_err(csv::Error::from).and_then(|f| read_log_csv(BufReader::new(f))) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match fit_slope(&rows) {
        Ok(slope) => {
            println!("{slope:.6}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn run(path: &Path) -> ExitCode {
    let config = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let summary = match experiment::run_experiment(&config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for r in &summary.runs {
        let slope = r.slope.map_or_else(|| "-".to_string(), |s| format!("{s:.3}"));
        let dof = r.final_dof.map_or_else(|| "-".to_string(), |d| d.to_string());
        println!("eps {:<8e} {:<16} dof {dof:>8} slope {slope}", r.epsilon, r.status);
    }
    println!("wrote {}", config.output_dir.join("summary.json").display());
    if summary.any_failed() {
        ExitCode::from(EXIT_SOLVER)
    } else {
        ExitCode::SUCCESS
    }
}
