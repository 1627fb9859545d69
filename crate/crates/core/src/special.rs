//! Gamma function and Gauss quadrature rules used by the kernel compression
//! and by the test oracles.

use nalgebra::{DMatrix, SymmetricEigen};

/// Gamma function for real arguments (Lanczos approximation).
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// A quadrature rule on `[0, 1]`: `∫₀¹ w(x) g(x) dx ≈ Σ weights[i]·g(nodes[i])`.
#[derive(Debug, Clone)]
pub struct UnitRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnitRule {
    /// Gauss–Legendre rule with `n` points on `[0, 1]`.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let (mut y, mut w) = golub_welsch(
            n,
            |_| 0.0,
            |k| {
                let k = (k + 1) as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            },
            2.0,
        );
        // polish nodes and weights with Newton steps on P_n
        for (yi, wi) in y.iter_mut().zip(w.iter_mut()) {
            for _ in 0..3 {
                let (p, dp) = legendre_with_derivative(n, *yi);
                *yi -= p / dp;
            }
            let (_, dp) = legendre_with_derivative(n, *yi);
            *wi = 2.0 / ((1.0 - *yi * *yi) * dp * dp);
        }
        Self::from_symmetric(&y, &w, 0.0)
    }

    /// Gauss–Jacobi rule with `n` points for the weight `x^exponent` on `[0, 1]`,
    /// `exponent > -1`.
    pub fn jacobi_left(n: usize, exponent: f64) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        assert!(exponent > -1.0, "Jacobi exponent must exceed -1");
        if exponent == 0.0 {
            return Self::legendre(n);
        }
        // weight (1-y)^a (1+y)^b on [-1, 1] with a = 0, b = exponent
        let a = 0.0;
        let b = exponent;
        let diag = |k: usize| {
            let k = k as f64;
            if k == 0.0 {
                (b - a) / (a + b + 2.0)
            } else {
                let s = 2.0 * k + a + b;
                (b * b - a * a) / (s * (s + 2.0))
            }
        };
        let off = |k: usize| {
            let k1 = (k + 1) as f64;
            let s = 2.0 * k1 + a + b;
            2.0 / s * (k1 * (k1 + a) * (k1 + b) * (k1 + a + b) / ((s + 1.0) * (s - 1.0))).sqrt()
        };
        let mu0 = 2f64.powf(a + b + 1.0) * gamma(a + 1.0) * gamma(b + 1.0) / gamma(a + b + 2.0);
        let (y, w) = golub_welsch(n, diag, off, mu0);
        Self::from_symmetric(&y, &w, b)
    }

    fn from_symmetric(y: &[f64], w: &[f64], b: f64) -> Self {
        let scale = 2f64.powf(-b - 1.0);
        let mut pairs: Vec<(f64, f64)> = y
            .iter()
            .zip(w)
            .map(|(&yi, &wi)| (0.5 * (1.0 + yi), wi * scale))
            .collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Integrate `g` over `[a, b]` with the rule mapped affinely (weight ignored).
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, g: F) -> f64 {
        let len = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(a + len * x))
            .sum::<f64>()
            * len
    }
}

fn legendre_with_derivative(n: usize, y: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = y;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * y * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (y * p1 - p0) / (y * y - 1.0);
    (p1, dp)
}

fn golub_welsch(n: usize, diag: impl Fn(usize) -> f64, off: impl Fn(usize) -> f64, mu0: f64) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![diag(0)], vec![mu0]);
    }
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jac[(k, k)] = diag(k);
        if k + 1 < n {
            let e = off(k);
            jac[(k, k + 1)] = e;
            jac[(k + 1, k)] = e;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let nodes = eig.eigenvalues.iter().copied().collect();
    let weights = (0..n)
        .map(|j| {
            let v0 = eig.eigenvectors[(0, j)];
            mu0 * v0 * v0
        })
        .collect();
    (nodes, weights)
}

/// Adaptive Gauss–Kronrod-free reference integrator: composite Gauss–Legendre
/// with interval bisection until two levels agree. Used by tests as an
/// independent oracle for closed forms.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(g: &F, rule: &UnitRule, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = rule.integrate(a, m, g);
        let right = rule.integrate(m, b, g);
        if depth == 0 || (left + right - whole).abs() <= tol {
            left + right
        } else {
            rec(g, rule, a, m, left, 0.5 * tol, depth - 1) + rec(g, rule, m, b, right, 0.5 * tol, depth - 1)
        }
    }
    let rule = UnitRule::legendre(10);
    let whole = rule.integrate(a, b, g);
    rec(g, &rule, a, b, whole, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gamma_half_is_sqrt_pi() {
        assert!((gamma(0.5) - PI.sqrt()).abs() <= 1e-13 * PI.sqrt());
    }

    #[test]
    fn gamma_recurrence() {
        for &x in &[0.1, 0.35, 0.5, 0.9, 1.3, 2.1, 2.5, 3.7] {
            let lhs = gamma(x + 1.0);
            let rhs = x * gamma(x);
            assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs(), "x={x}");
        }
        assert!((gamma(2.5) - 1.329_340_388_179_137).abs() < 1e-14);
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = UnitRule::legendre(6);
        // exact up to degree 11
        let val = rule.integrate(0.0, 2.0, |x| x.powi(11));
        assert!((val - 2f64.powi(12) / 12.0).abs() < 1e-10);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_handles_endpoint_singularity() {
        // ∫₀¹ x^(b) · x^2 dx = 1/(b+3)
        for &b in &[-0.8, -0.5, -0.1, 0.4] {
            for n in [3usize, 5, 8] {
                let rule = UnitRule::jacobi_left(n, b);
                let val: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x * x).sum();
                assert!((val - 1.0 / (b + 3.0)).abs() < 1e-13, "b={b} n={n}");
                assert!(rule.nodes.iter().all(|&x| x > 0.0 && x < 1.0));
            }
        }
    }

    #[test]
    fn adaptive_integrator_matches_closed_form() {
        let v = adaptive_integrate(&|x: f64| (-3.0 * x).exp(), 0.0, 1.0, 1e-15);
        assert!((v - (1.0 - (-3f64).exp()) / 3.0).abs() < 1e-14);
    }
}
