//! Quadrature rules on simplices, expressed in barycentric coordinates with
//! weights normalized to sum to one (multiply by the element measure).

use std::f64::consts::PI;

use crate::mesh::Dim;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Barycentric coordinates; intervals use the first two entries.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    /// Default rule per dimension: the symmetric 6-point triangle rule
    /// (degree 4) and 3-point Gauss on intervals (degree 5).
    pub fn default_for(dim: Dim) -> Self {
        match dim {
            Dim::One => Self::interval(5),
            Dim::Two => Self::triangle(4),
        }
    }

    pub fn for_degree(dim: Dim, degree: usize) -> Self {
        match dim {
            Dim::One => Self::interval(degree),
            Dim::Two => Self::triangle(degree),
        }
    }

    /// Gauss–Legendre rule on an interval, exact for polynomials of `degree`.
    pub fn interval(degree: usize) -> Self {
        let n = degree / 2 + 1;
        let (x, w) = gauss_legendre_unit(n);
        let points = x.iter().map(|&t| [1.0 - t, t, 0.0]).collect();
        Self { points, weights: w, degree: 2 * n - 1 }
    }

    /// Triangle rule exact for polynomials of `degree`.
    ///
    /// Degrees up to 4 use the symmetric 6-point rule; higher degrees use a
    /// collapsed (Duffy) tensor product of Gauss–Legendre rules.
    pub fn triangle(degree: usize) -> Self {
        if degree <= 4 {
            return Self::triangle_six_point();
        }
        // the collapsed map adds one degree in the first variable
        let n = (degree + 3) / 2;
        let (x, w) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (xi, wi) in x.iter().zip(&w) {
            for (eta, wj) in x.iter().zip(&w) {
                let px = *xi;
                let py = (1.0 - xi) * eta;
                points.push([1.0 - px - py, px, py]);
                weights.push(2.0 * wi * wj * (1.0 - xi));
            }
        }
        Self { points, weights, degree: 2 * n - 2 }
    }

    fn triangle_six_point() -> Self {
        const A1: f64 = 0.445_948_490_915_965;
        const W1: f64 = 0.223_381_589_678_011;
        const A2: f64 = 0.091_576_213_509_771;
        const W2: f64 = 0.109_951_743_655_322;
        let mut points = Vec::with_capacity(6);
        let mut weights = Vec::with_capacity(6);
        for (a, w) in [(A1, W1), (A2, W2)] {
            let b = 1.0 - 2.0 * a;
            for p in [[b, a, a], [a, b, a], [a, a, b]] {
                points.push(p);
                weights.push(w);
            }
        }
        Self { points, weights, degree: 4 }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss–Legendre nodes and weights mapped to `[0, 1]` (weights sum to 1).
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    let unit_nodes = nodes.iter().map(|x| 0.5 * (x + 1.0)).collect();
    let unit_weights = weights.iter().map(|w| 0.5 * w).collect();
    (unit_nodes, unit_weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// ∫_T x^a y^b over the reference triangle = a! b! / (a+b+2)!, divided by |T| = 1/2.
    fn monomial_mean(a: u32, b: u32) -> f64 {
        2.0 * factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn triangle_rules_integrate_monomials_exactly() {
        for degree in [4usize, 6, 9, 12] {
            let rule = QuadratureRule::triangle(degree);
            assert!(rule.degree >= degree);
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                        .sum();
                    assert_relative_eq!(q, monomial_mean(a, b), max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn interval_rule_degree() {
        let rule = QuadratureRule::interval(5);
        assert_eq!(rule.len(), 3);
        for k in 0..=5 {
            let q: f64 = rule.points.iter().zip(&rule.weights).map(|(p, w)| w * p[1].powi(k)).sum();
            assert_relative_eq!(q, 1.0 / (k as f64 + 1.0), max_relative = 1e-14);
        }
    }
}
