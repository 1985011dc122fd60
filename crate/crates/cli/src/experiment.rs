use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use ptc_galerkin::convergence::fit_slope;
use ptc_galerkin::driver::write_log_csv;
use ptc_galerkin::mesh::vtk;
use ptc_galerkin::{builtin, run, DriverError, IterationRecord, Termination};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub epsilon: f64,
    /// `budget-exhausted`, `stationary` or `failed`.
    pub status: String,
    pub error: Option<String>,
    pub iterations: usize,
    pub final_dof: Option<usize>,
    pub final_total_estimator: Option<f64>,
    pub slope: Option<f64>,
    pub slope_error: Option<String>,
    pub log_csv: PathBuf,
    pub mesh_vtk: Option<PathBuf>,
    pub solution_vtk: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub problem: String,
    pub seed: u64,
    pub theta: f64,
    pub k0: f64,
    pub dof_max: usize,
    pub runs: Vec<RunSummary>,
}

impl Summary {
    pub fn any_failed(&self) -> bool {
        self.runs.iter().any(|r| r.error.is_some())
    }
}

/// `1e-7` → `eps_1e-7`.
fn tag(epsilon: f64) -> String {
    format!("eps_{epsilon:e}")
}

fn write_log(path: &Path, log: &[IterationRecord]) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_log_csv(log, BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))
}

/// Runs every ε of the sweep in turn and writes its outputs.
///
/// A solver failure for one ε is recorded and the sweep continues; I/O
/// errors abort.
pub fn run_experiment(config: &RunConfig) -> anyhow::Result<Summary> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut runs = Vec::new();
    for &eps in &config.epsilon_list {
        let spec = builtin(&config.problem, eps)?;
        let name = tag(eps);
        let log_csv = dir.join(format!("{name}.csv"));
        log::info!("{}: ε = {eps:e}", config.problem);
        match run(&spec, &config.adaptive) {
            Ok(out) => {
                write_log(&log_csv, &out.log)?;
                let mesh_vtk = dir.join(format!("{name}_mesh.vtk"));
                let solution_vtk = dir.join(format!("{name}_solution.vtk"));
                let title = format!("{} eps={eps:e}", config.problem);
                write_with(&mesh_vtk, |w| vtk::write_mesh(&out.mesh, &title, w))?;
                write_with(&solution_vtk, |w| vtk::write_solution(&out.mesh, "u", &out.solution.coefficients, &title, w))?;
                let slope = fit_slope(&out.log);
                runs.push(RunSummary {
                    epsilon: eps,
                    status: match out.termination {
                        Termination::BudgetExhausted => "budget-exhausted",
                        Termination::Stationary => "stationary",
                    }
                    .into(),
                    error: None,
                    iterations: out.log.len(),
                    final_dof: Some(out.mesh.dof_count()),
                    final_total_estimator: Some(out.final_report.total_estimator),
                    slope: slope.as_ref().ok().copied(),
                    slope_error: slope.err().map(|e| e.to_string()),
                    log_csv,
                    mesh_vtk: Some(mesh_vtk),
                    solution_vtk: Some(solution_vtk),
                });
            }
            Err(DriverError::InvalidConfig(msg)) => anyhow::bail!("invalid configuration: {msg}"),
            Err(err) => {
                log::error!("ε = {eps:e}: {err}");
                let log = err.log().unwrap_or_default();
                write_log(&log_csv, log)?;
                runs.push(RunSummary {
                    epsilon: eps,
                    status: "failed".into(),
                    error: Some(err.to_string()),
                    iterations: log.len(),
                    final_dof: None,
                    final_total_estimator: None,
                    slope: None,
                    slope_error: None,
                    log_csv,
                    mesh_vtk: None,
                    solution_vtk: None,
                });
            }
        }
    }
    let summary = Summary {
        problem: config.problem.clone(),
        seed: config.seed,
        theta: config.adaptive.theta,
        k0: config.adaptive.k0,
        dof_max: config.adaptive.dof_max,
        runs,
    };
    let path = dir.join("summary.json");
    write_with(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        writeln!(w)
    })?;
    Ok(summary)
}
