//! Fractional orders of the multi-term operator and the offset σ.

use crate::error::{Error, Result};
use crate::special::gamma;

/// Orders `1 < α_m < … < α_0 < 2` with positive weights `λ_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTermOrders {
    alphas: Vec<f64>,
    lambdas: Vec<f64>,
}

impl MultiTermOrders {
    pub fn new(alphas: Vec<f64>, lambdas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidOrders("at least one order required".into()));
        }
        if alphas.len() != lambdas.len() {
            return Err(Error::InvalidOrders(format!(
                "{} orders but {} weights",
                alphas.len(),
                lambdas.len()
            )));
        }
        for (r, &a) in alphas.iter().enumerate() {
            if !(a > 1.0 && a < 2.0) {
                return Err(Error::InvalidOrders(format!("alpha[{r}] = {a} not in (1,2)")));
            }
        }
        for (r, w) in alphas.windows(2).enumerate() {
            if !(w[0] > w[1]) {
                return Err(Error::InvalidOrders(format!(
                    "orders must be strictly decreasing: alpha[{}] = {} is not above alpha[{}] = {}",
                    r,
                    w[0],
                    r + 1,
                    w[1]
                )));
            }
        }
        for (r, &l) in lambdas.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidOrders(format!(
                    "lambda[{r}] = {l} must be positive and finite"
                )));
            }
        }
        Ok(Self { alphas, lambdas })
    }

    /// Single order with unit weight.
    pub fn single(alpha: f64) -> Result<Self> {
        Self::new(vec![alpha], vec![1.0])
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `β_r = α_r − 1`.
    pub fn betas(&self) -> Vec<f64> {
        self.alphas.iter().map(|a| a - 1.0).collect()
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// `[1 − β₀/2, 1 − β_m/2]`.
    pub fn sigma_bracket(&self) -> (f64, f64) {
        let b0 = self.alphas[0] - 1.0;
        let bm = self.alphas[self.alphas.len() - 1] - 1.0;
        (1.0 - b0 / 2.0, 1.0 - bm / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaValue {
    pub sigma: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    /// `F(σ)` divided by the sum of the term magnitudes.
    pub residual: f64,
}

struct SigmaEquation {
    /// `(λ_r τ^{2−β_r}/Γ(3−β_r), β_r)`
    terms: Vec<(f64, f64)>,
    scale: f64,
}

impl SigmaEquation {
    fn new(orders: &MultiTermOrders, tau: f64) -> Self {
        let terms: Vec<(f64, f64)> = orders
            .betas()
            .into_iter()
            .zip(orders.lambdas())
            .map(|(b, &l)| (l * tau.powf(2.0 - b) / gamma(3.0 - b), b))
            .collect();
        let scale = terms.iter().map(|t| t.0).sum();
        Self { terms, scale }
    }

    /// Normalized `F(σ)` and `F'(σ)`.
    fn eval(&self, s: f64) -> (f64, f64) {
        let mut f = 0.0;
        let mut df = 0.0;
        for &(c, b) in &self.terms {
            let p = s.powf(1.0 - b);
            let shift = s - (1.0 - b / 2.0);
            f += c * p * shift;
            df += c * ((1.0 - b) * p / s * shift + p);
        }
        (f / self.scale, df / self.scale)
    }
}

/// Root of `F(σ) = Σ_r λ_r σ^{1−β_r}/Γ(3−β_r)·[σ − (1 − β_r/2)]·τ^{2−β_r}`
/// on `[1 − β₀/2, 1 − β_m/2]`, by safeguarded Newton iteration.
pub fn solve_sigma(orders: &MultiTermOrders, tau: f64) -> Result<SigmaValue> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(crate::error::invalid("tau", format!("{tau} must be positive")));
    }
    let (lo, hi) = orders.sigma_bracket();
    if orders.len() == 1 {
        return Ok(SigmaValue {
            sigma: lo,
            bracket_lo: lo,
            bracket_hi: hi,
            residual: 0.0,
        });
    }
    let eq = SigmaEquation::new(orders, tau);
    let (flo, _) = eq.eval(lo);
    let (fhi, _) = eq.eval(hi);
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::SigmaBracket { lo, hi });
    }

    let (mut a, mut b) = (lo, hi);
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, df) = eq.eval(s);
        if f.abs() <= 1e-15 {
            break;
        }
        if f < 0.0 {
            a = s;
        } else {
            b = s;
        }
        let newton = s - f / df;
        let next = if newton > a && newton < b && df > 0.0 {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - s).abs() <= 1e-16 * s || b - a <= 2.0 * f64::EPSILON * b {
            s = next;
            break;
        }
        s = next;
    }
    let residual = eq.eval(s).0;
    Ok(SigmaValue {
        sigma: s,
        bracket_lo: lo,
        bracket_hi: hi,
        residual,
    })
}
