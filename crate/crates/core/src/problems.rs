//! Semilinear problems `−εΔu = f(x, u)` with homogeneous Dirichlet data.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{DomainSpec, Point};

/// The reaction term `f` and its derivative in `u`.
pub trait Nonlinearity: Send + Sync {
    fn value(&self, x: Point, u: f64) -> f64;
    fn derivative(&self, x: Point, u: f64) -> f64;
}

/// Closure-backed nonlinearity.
pub struct FnNonlinearity<F, D> {
    pub f: F,
    pub df: D,
}

impl<F, D> Nonlinearity for FnNonlinearity<F, D>
where
    F: Fn(Point, f64) -> f64 + Send + Sync,
    D: Fn(Point, f64) -> f64 + Send + Sync,
{
    fn value(&self, x: Point, u: f64) -> f64 {
        (self.f)(x, u)
    }

    fn derivative(&self, x: Point, u: f64) -> f64 {
        (self.df)(x, u)
    }
}

#[derive(Clone)]
pub enum InitialGuess {
    /// Same value at every interior vertex.
    Constant(f64),
    /// Nodal values of a function (boundary vertices are still pinned to 0).
    Function(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl fmt::Debug for InitialGuess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialGuess::Constant(c) => write!(f, "Constant({c})"),
            InitialGuess::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Closed-form solution with its gradient, for error measurements.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    pub gradient: Arc<dyn Fn(Point) -> Point + Send + Sync>,
}

/// Bounds on `f` that feed the stability constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearityBounds {
    /// `sup f′` over the range of interest.
    pub sigma_f: f64,
    /// Lipschitz constant of `f′` over the range of interest.
    pub l_fprime: f64,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub epsilon: f64,
    pub domain: DomainSpec,
    pub initial_guess: InitialGuess,
    pub nonlinearity: Arc<dyn Nonlinearity>,
    pub bounds: Option<NonlinearityBounds>,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("epsilon", &self.epsilon)
            .field("domain", &self.domain)
            .field("initial_guess", &self.initial_guess)
            .field("bounds", &self.bounds)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn new<F, D>(name: &str, epsilon: f64, domain: DomainSpec, f: F, df: D) -> Self
    where
        F: Fn(Point, f64) -> f64 + Send + Sync + 'static,
        D: Fn(Point, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            epsilon,
            domain,
            initial_guess: InitialGuess::Constant(0.0),
            nonlinearity: Arc::new(FnNonlinearity { f, df }),
            bounds: None,
            exact: None,
        }
    }

    pub fn with_initial_guess(mut self, guess: InitialGuess) -> Self {
        self.initial_guess = guess;
        self
    }

    pub fn f(&self, x: Point, u: f64) -> f64 {
        self.nonlinearity.value(x, u)
    }

    pub fn df(&self, x: Point, u: f64) -> f64 {
        self.nonlinearity.derivative(x, u)
    }

    /// Stability constants, when bounds on `f` are known.
    pub fn stability_constants(&self) -> Option<StabilityConstants> {
        let b = self.bounds?;
        let c_p = poincare_constant(&self.domain)?;
        Some(StabilityConstants::new(self.epsilon, b, c_p))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem `{0}` (see list-problems)")]
    UnknownProblem(String),
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuBound {
    Coercive(f64),
    NotCoercive,
}

impl MuBound {
    pub fn value(self) -> Option<f64> {
        match self {
            MuBound::Coercive(mu) => Some(mu),
            MuBound::NotCoercive => None,
        }
    }
}

/// `μ = (εC_P⁻² − σ_f) / (εC_P⁻² + 1)` when `σ_f < εC_P⁻²`.
pub fn compute_mu(epsilon: f64, sigma_f: f64, c_p: f64) -> MuBound {
    let a = epsilon / (c_p * c_p);
    if sigma_f < a {
        MuBound::Coercive((a - sigma_f) / (a + 1.0))
    } else {
        MuBound::NotCoercive
    }
}

/// Diagnostic bound `L = L_f′ / ε` (the domain constant is taken as 1).
pub fn lipschitz_bound(epsilon: f64, l_fprime: f64) -> f64 {
    l_fprime / epsilon
}

/// Poincaré constant `λ₁^{-1/2}` from the first Dirichlet eigenvalue, for
/// intervals and squares.
pub fn poincare_constant(domain: &DomainSpec) -> Option<f64> {
    match *domain {
        DomainSpec::Interval { a, b } => Some((b - a) / PI),
        DomainSpec::Square { lo, hi } => Some((hi - lo) / (PI * 2f64.sqrt())),
        DomainSpec::Polygon { .. } => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConstants {
    pub sigma_f: f64,
    pub l_fprime: f64,
    pub c_p: f64,
    pub mu: MuBound,
    pub l: f64,
}

impl StabilityConstants {
    pub fn new(epsilon: f64, bounds: NonlinearityBounds, c_p: f64) -> Self {
        Self {
            sigma_f: bounds.sigma_f,
            l_fprime: bounds.l_fprime,
            c_p,
            mu: compute_mu(epsilon, bounds.sigma_f, c_p),
            l: lipschitz_bound(epsilon, bounds.l_fprime),
        }
    }
}

/// Names and one-line descriptions of the built-in problems.
pub fn list_builtins() -> &'static [(&'static str, &'static str)] {
    &[
        ("sine-gordon", "f(u) = -sin(u) - u + 1 on (0,1)^2, u0 = 1/2 on interior nodes"),
        ("ginzburg-landau", "f(u) = u(1 - u^2) on (-1,1)^2, u0 = 1 on interior nodes"),
        (
            "manufactured-linear",
            "f(x,u) = -u + g(x) on (0,1)^2 with exact solution sin(pi x) sin(pi y)",
        ),
    ]
}

pub fn builtin(name: &str, epsilon: f64) -> Result<ProblemSpec, ProblemError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ProblemError::InvalidEpsilon(epsilon));
    }
    let spec = match name {
        "sine-gordon" => ProblemSpec {
            initial_guess: InitialGuess::Constant(0.5),
            // f′ = −cos u − 1 ≤ 0 and |f″| = |sin u| ≤ 1
            bounds: Some(NonlinearityBounds { sigma_f: 0.0, l_fprime: 1.0 }),
            ..ProblemSpec::new(
                name,
                epsilon,
                DomainSpec::unit_square(),
                |_, u: f64| -u.sin() - u + 1.0,
                |_, u: f64| -u.cos() - 1.0,
            )
        },
        "ginzburg-landau" => ProblemSpec {
            initial_guess: InitialGuess::Constant(1.0),
            // f′ = 1 − 3u² ≤ 1; |f″| = 6|u| ≤ 6 for |u| ≤ 1
            bounds: Some(NonlinearityBounds { sigma_f: 1.0, l_fprime: 6.0 }),
            ..ProblemSpec::new(
                name,
                epsilon,
                DomainSpec::Square { lo: -1.0, hi: 1.0 },
                |_, u: f64| u * (1.0 - u * u),
                |_, u: f64| 1.0 - 3.0 * u * u,
            )
        },
        "manufactured-linear" => {
            let c = 2.0 * PI * PI * epsilon + 1.0;
            ProblemSpec {
                bounds: Some(NonlinearityBounds { sigma_f: -1.0, l_fprime: 0.0 }),
                exact: Some(ExactSolution {
                    value: Arc::new(|x: Point| (PI * x[0]).sin() * (PI * x[1]).sin()),
                    gradient: Arc::new(|x: Point| {
                        let (s0, c0) = (PI * x[0]).sin_cos();
                        let (s1, c1) = (PI * x[1]).sin_cos();
                        [PI * c0 * s1, PI * s0 * c1]
                    }),
                }),
                ..ProblemSpec::new(
                    name,
                    epsilon,
                    DomainSpec::unit_square(),
                    move |x: Point, u: f64| -u + c * (PI * x[0]).sin() * (PI * x[1]).sin(),
                    |_, _| -1.0,
                )
            }
        }
        other => return Err(ProblemError::UnknownProblem(other.to_string())),
    };
    Ok(spec)
}

/// `sup f′` over the given nodal values.
pub fn sigma_f_over(spec: &ProblemSpec, points: &[Point], values: &[f64]) -> f64 {
    points
        .iter()
        .zip(values)
        .map(|(&x, &u)| spec.df(x, u))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
        assert!(f(a) * f(b) < 0.0);
        while b - a > tol {
            let m = 0.5 * (a + b);
            if f(a) * f(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (name, _) in list_builtins() {
            let spec = builtin(name, 0.01).unwrap();
            for _ in 0..100 {
                let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                let u: f64 = rng.gen_range(-2.0..2.0);
                let h = 1e-5;
                let fd = (spec.f(x, u + h) - spec.f(x, u - h)) / (2.0 * h);
                assert!((fd - spec.df(x, u)).abs() <= 1e-6, "{name} at u = {u}");
            }
        }
    }

    #[test]
    fn sine_gordon_positive_zero() {
        let spec = builtin("sine-gordon", 1.0).unwrap();
        let z = bisect(|u| spec.f([0.5, 0.5], u), 0.0, 1.0, 1e-10);
        assert!((z - 0.5109).abs() < 1e-4, "zero at {z}");
        // f is strictly decreasing, so the zero is unique
        assert!(spec.df([0.5, 0.5], z) < 0.0);
    }

    #[test]
    fn ginzburg_landau_zeros_and_odd_symmetry() {
        let spec = builtin("ginzburg-landau", 1e-3).unwrap();
        for u in [0.0, 1.0, -1.0] {
            assert_eq!(spec.f([0.0, 0.0], u), 0.0);
        }
        for u in [0.1, 0.7, 1.3, 5.0] {
            assert_eq!(spec.f([0.0, 0.0], -u), -spec.f([0.0, 0.0], u));
        }
    }

    #[test]
    fn manufactured_solution_satisfies_the_strong_form() {
        let eps = 0.3;
        let spec = builtin("manufactured-linear", eps).unwrap();
        let exact = spec.exact.clone().unwrap();
        for x in [[0.2, 0.7], [0.5, 0.5], [0.9, 0.1]] {
            // −εΔu* = 2π²ε u*
            let lap = -2.0 * PI * PI * (exact.value)(x);
            let res = -eps * lap - spec.f(x, (exact.value)(x));
            assert!(res.abs() < 1e-12);
        }
    }

    #[test]
    fn mu_examples() {
        assert_eq!(compute_mu(1.0, 0.0, 1.0), MuBound::Coercive(0.5));
        assert_eq!(compute_mu(1.0, 1.0, 1.0), MuBound::NotCoercive);
        let c_p = poincare_constant(&DomainSpec::unit_square()).unwrap();
        let lambda = 2.0 * PI * PI;
        assert_relative_eq!(
            compute_mu(1.0, 0.0, c_p).value().unwrap(),
            lambda / (lambda + 1.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn unknown_names_and_bad_epsilon_are_rejected() {
        assert_eq!(builtin("allen-cahn", 1.0).unwrap_err(), ProblemError::UnknownProblem("allen-cahn".into()));
        assert!(builtin("sine-gordon", 0.0).is_err());
        assert!(builtin("sine-gordon", f64::NAN).is_err());
    }
}
