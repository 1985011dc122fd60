//! End-to-end acceptance checks. Every criterion prints one PASS/FAIL line;
//! the test fails afterwards if any criterion failed.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptc_galerkin::convergence::fit_slope;
use ptc_galerkin::driver::write_log_csv;
use ptc_galerkin::estimator::{total_report, StepData};
use ptc_galerkin::fem::{energy_error, local_mass, local_stiffness, FemSpace};
use ptc_galerkin::linear_solver::{solve, LinearSolveContract};
use ptc_galerkin::mesh::Dim;
use ptc_galerkin::ptc::{propose_step_size, ptc_step, verify_reduction, DenseQuadratic, StepControl};
use ptc_galerkin::quadrature::QuadratureRule;
use ptc_galerkin::{build_initial_mesh, builtin, run, AdaptiveConfig, AdaptiveOutcome, DomainSpec, FemFunction, HilbertProblem, Mesh};

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(results: &mut Vec<Verdict>, id: u32, name: &'static str, pass: bool, detail: String) {
    println!("criterion {id:>2} {:<4} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    results.push(Verdict { id, name, pass, detail });
}

fn paper_config() -> AdaptiveConfig {
    AdaptiveConfig { theta: 0.5, k0: 1.0, dof_max: 100_000, record_timing: false, ..Default::default() }
}

/// Total estimator at the last row of the DOF level closest to `target`.
fn total_near(out: &AdaptiveOutcome, target: f64) -> (usize, f64) {
    let mut best = (0usize, f64::NAN);
    for (i, row) in out.log.iter().enumerate() {
        let last_of_level = out.log.get(i + 1).is_none_or(|next| next.dof != row.dof);
        if !last_of_level {
            continue;
        }
        let dist = ((row.dof as f64).ln() - target.ln()).abs();
        if best.1.is_nan() || dist < ((best.0 as f64).ln() - target.ln()).abs() {
            best = (row.dof, row.total);
        }
    }
    best
}

fn csv_bytes(out: &AdaptiveOutcome) -> Vec<u8> {
    let mut buf = Vec::new();
    write_log_csv(&out.log, &mut buf).unwrap();
    buf
}

fn sine_gordon_suite(results: &mut Vec<Verdict>) {
    let epsilons = [1.0, 1e-2, 1e-4, 1e-7];
    let mut outcomes = Vec::new();
    let mut slopes_ok = true;
    let mut detail = Vec::new();
    for &eps in &epsilons {
        let spec = builtin("sine-gordon", eps).unwrap();
        let start = Instant::now();
        let out = run(&spec, &paper_config()).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let slope = fit_slope(&out.log);
        let ok = matches!(slope, Ok(s) if (-0.65..=-0.35).contains(&s)) && secs <= 300.0;
        slopes_ok &= ok;
        match slope {
            Ok(s) => detail.push(format!("ε={eps:e}: slope {s:.3} at DOF {} ({secs:.1}s)", out.mesh.dof_count())),
            Err(e) => detail.push(format!("ε={eps:e}: {e}")),
        }
        outcomes.push(out);
    }
    report(results, 1, "optimal-order decay", slopes_ok, detail.join("; "));

    let near: Vec<(usize, f64)> = outcomes.iter().map(|o| total_near(o, 1e4)).collect();
    let max = near.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let min = near.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let listing: Vec<String> = near.iter().map(|(d, t)| format!("{t:.3e}@{d}")).collect();
    report(
        results,
        2,
        "ε-robustness at DOF ≈ 1e4",
        max / min <= 10.0,
        format!("max/min = {:.2} ({})", max / min, listing.join(", ")),
    );

    let thin = &outcomes[3];
    let center = thin.solution.evaluate(&thin.mesh, [0.5, 0.5]).unwrap_or(f64::NAN);
    report(results, 3, "interior plateau", (0.50..=0.52).contains(&center), format!("u_h(½,½) = {center:.6}"));

    let eps: f64 = 1e-7;
    let band = 10.0 * eps.sqrt() * eps.recip().ln();
    let domain = DomainSpec::unit_square();
    let near_boundary = thin
        .mesh
        .cells()
        .filter(|cell| cell.iter().any(|&v| domain.distance_to_boundary(thin.mesh.vertices()[v]) <= band))
        .count();
    let fraction = near_boundary as f64 / thin.mesh.cell_count() as f64;
    report(
        results,
        5,
        "boundary-layer refinement",
        fraction >= 0.6,
        format!("{:.1}% of {} cells within {band:.4} of the boundary", 100.0 * fraction, thin.mesh.cell_count()),
    );

    let again = run(&builtin("sine-gordon", 1e-4).unwrap(), &paper_config()).unwrap();
    let (a, b) = (csv_bytes(&outcomes[2]), csv_bytes(&again));
    report(results, 10, "deterministic logs", a == b, format!("{} bytes, identical = {}", a.len(), a == b));
}

fn ginzburg_landau(results: &mut Vec<Verdict>) {
    let spec = builtin("ginzburg-landau", 1e-5).unwrap();
    let out = run(&spec, &paper_config()).unwrap();
    let slope = fit_slope(&out.log);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=16 {
        for j in 0..=16 {
            let p = [-0.8 + 0.1 * i as f64, -0.8 + 0.1 * j as f64];
            let v = out.solution.evaluate(&out.mesh, p).unwrap();
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let positive = out.solution.coefficients.iter().all(|&v| v >= 0.0);
    // the bounds are read at six digits; the iterate is not a converged discrete solution
    let pass = positive && lo >= 0.98 && hi <= 1.0 + 1e-6 && matches!(slope, Ok(s) if (-0.65..=-0.35).contains(&s));
    let slope_text = slope.map_or_else(|e| e.to_string(), |s| format!("{s:.3}"));
    report(
        results,
        4,
        "Ginzburg-Landau run",
        pass,
        format!("slope {slope_text}, interior range [{lo:.6}, {hi:.12}], nonnegative = {positive}"),
    );
}

/// Dense `F(u) = b − Au − c·u∘u` with SPD `A` and a random SPD Gram matrix.
struct Backend {
    n: usize,
    a: DMatrix<f64>,
    gram: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
    u0: DVector<f64>,
}

impl Backend {
    fn random(rng: &mut ChaCha8Rng, n: usize) -> Self {
        let q = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = q.transpose() * &q + DMatrix::identity(n, n) * 0.5;
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5));
        let gram = g.transpose() * &g + DMatrix::identity(n, n);
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let u0 = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
        Self { n, a, gram, b, c: 0.1, u0 }
    }

    fn library(&self) -> DenseQuadratic {
        let row_major = |m: &DMatrix<f64>| m.transpose().iter().copied().collect::<Vec<_>>();
        DenseQuadratic::new(self.n, &row_major(&self.a), self.b.iter().copied().collect(), self.c, &row_major(&self.gram))
    }

    fn f(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * u - u.component_mul(u) * self.c
    }

    /// `A + 2c·diag(u0)`, the negated Jacobian at `u0`.
    fn s(&self) -> DMatrix<f64> {
        &self.a + DMatrix::from_diagonal(&(&self.u0 * (2.0 * self.c)))
    }

    fn chol_l(&self) -> DMatrix<f64> {
        self.gram.clone().cholesky().unwrap().l()
    }

    /// Smallest generalized eigenvalue of `S` against `G`.
    fn mu(&self) -> f64 {
        let l = self.chol_l();
        let li = l.clone().try_inverse().unwrap();
        let m = &li * self.s() * li.transpose();
        let m = (&m + m.transpose()) * 0.5;
        m.symmetric_eigen().eigenvalues.min()
    }

    /// Lipschitz constant of `F′` from `X` to `X′`: `2|c| / λ_min(G)^{3/2}`.
    fn lipschitz(&self) -> f64 {
        let lmin = self.gram.clone().symmetric_eigen().eigenvalues.min();
        2.0 * self.c.abs() / lmin.powf(1.5)
    }

    fn x_norm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.gram * v)).sqrt()
    }

    fn dual_norm(&self, phi: &DVector<f64>) -> f64 {
        phi.dot(&self.gram.clone().cholesky().unwrap().solve(phi)).sqrt()
    }
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn ptc_theory(results: &mut Vec<Verdict>) {
    let start = Instant::now();
    let contract = LinearSolveContract::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    let mut backends = 0;
    while backends < 20 {
        let be = Backend::random(&mut rng, 6);
        let mu = be.mu();
        if mu <= 0.0 {
            continue;
        }
        backends += 1;
        let lib = be.library();
        let l = be.lipschitz();
        let f0 = be.f(&be.u0);
        let f0_norm = be.dual_norm(&f0);
        let chol = be.chol_l();
        for t in [0.01, 1.0, 100.0] {
            let at = DMatrix::from_row_iterator(
                be.n,
                be.n,
                lib.ptc_operator(&to_vec(&be.u0), t).unwrap().to_dense().into_iter().flatten(),
            );
            for _ in 0..50 {
                let v = DVector::from_fn(be.n, |_, _| rng.gen_range(-1.0..1.0));
                let lhs = v.dot(&(&at * &v));
                let rhs = (1.0 + t * mu) * be.x_norm(&v).powi(2);
                if lhs < rhs * (1.0 - 1e-12) {
                    failures.push(format!("coercivity t={t}: {lhs} < {rhs}"));
                }
            }

            let inv = at.clone().try_inverse().unwrap();
            let norm = (chol.transpose() * inv * &chol).singular_values().max();
            if norm > 1.0 / (1.0 + t * mu) + 1e-10 {
                failures.push(format!("inverse bound t={t}: {norm}"));
            }

            let step = ptc_step(&lib, &to_vec(&be.u0), t, &contract).unwrap();
            let moved = DVector::from_vec(step.next.clone()) - &be.u0;
            let bound = t / (1.0 + t * mu) * f0_norm;
            if be.x_norm(&moved) > bound * (1.0 + 1e-12) {
                failures.push(format!("increment bound t={t}: {} > {bound}", be.x_norm(&moved)));
            }

            let check = verify_reduction(&lib, &to_vec(&be.u0), t, mu, l, &contract).unwrap();
            let ut = &be.u0 + at.clone().lu().solve(&(&f0 * t)).unwrap();
            let oracle_ratio = be.dual_norm(&be.f(&ut)) / f0_norm;
            let gamma = (1.0 + l * t * t * f0_norm / (2.0 * (1.0 + t * mu))) / (1.0 + t * mu);
            if (check.measured_ratio - oracle_ratio).abs() > 1e-8 * oracle_ratio
                || (check.gamma_bound - gamma).abs() > 1e-12 * gamma
                || oracle_ratio > gamma
            {
                failures.push(format!("reduction t={t}: ratio {oracle_ratio} vs γ {gamma}"));
            }
        }

        let newton = be.s().lu().solve(&f0).unwrap();
        let mut previous = f64::INFINITY;
        for k in [1e2, 1e4, 1e6, 1e8] {
            let step = ptc_step(&lib, &to_vec(&be.u0), k, &contract).unwrap();
            let gap = be.x_norm(&(DVector::from_vec(step.delta) * k - &newton));
            if gap >= previous {
                failures.push(format!("Newton limit not monotone at k={k:e}"));
            }
            previous = gap;
        }
        if previous > 1e-6 {
            failures.push(format!("Newton limit gap {previous:e} at k=1e8"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 10.0;
    let detail = if failures.is_empty() {
        format!("{backends} backends × t ∈ {{0.01, 1, 100}}, {secs:.2}s")
    } else {
        failures.join("; ")
    };
    report(results, 6, "PTC theory suite", pass, detail);
}

fn step_size_identity(results: &mut Vec<Verdict>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let control = StepControl::default();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let d = 10f64.powf(rng.gen_range(-6.0..2.0));
        let k = 10f64.powf(rng.gen_range(-3.0..3.0));
        let p_n = d * (1.0 + k * 10f64.powf(rng.gen_range(-3.0..2.0)));
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let p_np1 = d + sign * d * 10f64.powf(rng.gen_range(-4.0..1.0));
        let rec = propose_step_size(p_n, p_np1, d, k, &control).unwrap();
        let mu = (p_n - d) / (k * d);
        let l = 2.0 * (p_np1 - d).abs() / (k * k * d * d.sqrt());
        let expected = mu / (l * d.sqrt());
        worst = worst.max(((rec.k_star_raw - expected) / expected).abs());
        if rec.k_star_raw == control.clamp(rec.k_star_raw) {
            worst = worst.max(((rec.k_star - expected) / expected).abs());
        }
    }
    report(results, 7, "step-size identity", worst <= 1e-12, format!("worst relative deviation {worst:.2e} over 1000 records"));
}

/// Marks every cell, so each cell is bisected once.
fn refine_uniformly(mesh: &Mesh) -> Mesh {
    let all: Vec<usize> = (0..mesh.cell_count()).collect();
    mesh.refine(&all).mesh
}

fn estimator_reliability(results: &mut Vec<Verdict>) {
    let mut pass = true;
    let mut detail = Vec::new();
    for eps in [1.0, 1e-2, 1e-4] {
        let spec = builtin("manufactured-linear", eps).unwrap();
        let exact = spec.exact.clone().unwrap();
        let mut mesh = build_initial_mesh(&spec.domain, AdaptiveConfig::default().resolution).unwrap();
        let mut ratios = Vec::new();
        for level in 0..=5 {
            if level > 0 {
                mesh = refine_uniformly(&mesh);
            }
            let quadrature = QuadratureRule::default_for(Dim::Two);
            let space = FemSpace::new(&mesh, quadrature.clone());
            let zero = FemFunction::zeros(&mesh);
            let rhs = space.load(&spec, &zero).unwrap();
            let x = solve(&space.x_inner_product(eps), &rhs, &LinearSolveContract::default()).unwrap().x;
            let uh = FemFunction::from_dofs(&mesh, space.dofs(), &x);
            let est = total_report(&StepData { mesh: &mesh, u_n: &uh, delta: &zero, k: 1.0, spec: &spec, quadrature: &quadrature })
                .unwrap()
                .total_estimator;
            ratios.push(est / energy_error(&mesh, &uh, eps, &exact));
        }
        let max = ratios.iter().copied().fold(f64::MIN, f64::max);
        let min = ratios.iter().copied().fold(f64::MAX, f64::min);
        pass &= max / min <= 2.0;
        detail.push(format!("ε={eps:e}: ratio in [{min:.3}, {max:.3}]"));
    }
    report(results, 8, "estimator reliability", pass, detail.join("; "));
}

fn fem_oracles(results: &mut Vec<Verdict>) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let pts: Vec<[f64; 2]> = if trial == 0 {
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
        } else {
            (0..3).map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect()
        };
        let cross = (pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1]) - (pts[1][1] - pts[0][1]) * (pts[2][0] - pts[0][0]);
        if cross.abs() < 0.05 {
            continue;
        }
        let cell = if cross > 0.0 { vec![0, 1, 2] } else { vec![0, 2, 1] };
        let mesh = Mesh::from_parts(Dim::Two, pts.clone(), cell.clone(), 0).unwrap();
        let g = mesh.cell_geometry(0);
        let (k, m) = (local_stiffness(&g), local_mass(&g));
        let area = 0.5 * cross.abs();
        // cotangent formula for stiffness; |T|(1+δ_ij)/12 for mass
        let p = |i: usize| pts[g.nodes[i]];
        let cot = |i: usize| {
            let (a, b, c) = (p(i), p((i + 1) % 3), p((i + 2) % 3));
            let (u, v) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
            (u[0] * v[0] + u[1] * v[1]) / (u[0] * v[1] - u[1] * v[0]).abs()
        };
        for i in 0..3 {
            for j in 0..3 {
                let ks = if i == j {
                    0.5 * (cot((i + 1) % 3) + cot((i + 2) % 3))
                } else {
                    -0.5 * cot(3 - i - j)
                };
                let ms = area * if i == j { 2.0 } else { 1.0 } / 12.0;
                worst = worst.max((k[i][j] - ks).abs() / ks.abs().max(1.0)).max((m[i][j] - ms).abs() / area);
            }
            let row: f64 = k[i].iter().sum();
            worst = worst.max(row.abs());
        }
    }

    let mut mesh = build_initial_mesh(&DomainSpec::unit_square(), 2).unwrap();
    let mut area_drift = 0.0f64;
    let mut constants = 0.0f64;
    for _ in 0..10 {
        let marked: Vec<usize> = (0..mesh.cell_count()).filter(|_| rng.gen_bool(0.3)).collect();
        mesh = mesh.refine(&marked).mesh;
        let area: f64 = (0..mesh.cell_count()).map(|c| mesh.cell_geometry(c).measure).sum();
        area_drift = area_drift.max((area - 1.0).abs());
        let mut kc = vec![0.0; mesh.vertex_count()];
        for c in 0..mesh.cell_count() {
            let g = mesh.cell_geometry(c);
            let k = local_stiffness(&g);
            for i in 0..3 {
                kc[g.nodes[i]] += k[i].iter().sum::<f64>();
            }
        }
        constants = constants.max(kc.iter().fold(0.0, |a: f64, b| a.max(b.abs())));
    }
    let pass = worst <= 1e-12 && area_drift <= 1e-12 && constants <= 1e-12;
    report(
        results,
        9,
        "FEM unit oracles",
        pass,
        format!("local matrices {worst:.1e}, K·1 {constants:.1e}, area drift {area_drift:.1e} after 10 rounds"),
    );
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    sine_gordon_suite(&mut results);
    ginzburg_landau(&mut results);
    ptc_theory(&mut results);
    step_size_identity(&mut results);
    estimator_reliability(&mut results);
    fem_oracles(&mut results);

    results.sort_by_key(|v| v.id);
    println!();
    for v in &results {
        println!("{:>2} {} {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.name);
    }
    let failed: Vec<String> = results.iter().filter(|v| !v.pass).map(|v| format!("{} ({})", v.id, v.detail)).collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(" | "));
}
