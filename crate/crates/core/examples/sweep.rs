//! Runs one built-in problem for a list of ε values and prints a summary.
//!
//! `cargo run --release --example sweep -- sine-gordon 100000 1 1e-2 1e-4`

use std::time::Instant;

use ptc_galerkin::convergence::fit_slope;
use ptc_galerkin::{builtin, run, AdaptiveConfig, Action};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("sine-gordon", String::as_str);
    let dof_max: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let eps: Vec<f64> = args.iter().skip(2).filter_map(|s| s.parse().ok()).collect();
    for &e in if eps.is_empty() { &[1.0][..] } else { &eps } {
        let spec = builtin(name, e).expect("known problem");
        let config = AdaptiveConfig { dof_max, record_timing: false, ..Default::default() };
        let start = Instant::now();
        match run(&spec, &config) {
            Ok(out) => {
                let ptc = out.log.iter().filter(|r| r.action == Action::Ptc).count();
                let center = out.solution.evaluate(&out.mesh, spec.domain.center());
                println!(
                    "eps {e:e}: {} rows ({ptc} PTC), final dof {}, total {:.3e}, slope {:?}, center {:?}, {:.1}s",
                    out.log.len(),
                    out.mesh.dof_count(),
                    out.final_report.total_estimator,
                    fit_slope(&out.log),
                    center,
                    start.elapsed().as_secs_f64()
                );
                for r in &out.log {
                    println!("  {:4} {:7} k={:9.2e} R={:9.3e} eta={:9.3e} {:?}", r.n, r.dof, r.k, r.r, r.eta, r.action);
                }
            }
            Err(err) => println!("eps {e:e}: {err}"),
        }
    }
}
