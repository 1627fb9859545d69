//! Discrete coefficients of the multi-term L2-1σ operator.
//!
//! Two families share one interface. The direct family evaluates the
//! L2-1σ weights `ĝ_k^{(n+1)} = Σ_r λ_r g_k^{(n+1,β_r)}` from the closed-form
//! `a_l`, `b_l` sequences. The fast family replaces the history kernel by a
//! sum of exponentials, giving weights `ᶠĝ_k^{(n+1)}` built from per-node
//! `A_j`, `B_j`. Both expose the refined **g** row used by the weighted
//! scheme, the correction `b_n` and the pseudo-level factor `b̃_n`.
//!
//! Rows depend on `(n, k)` only through three pieces: the head entry `k = 0`,
//! the top entry `k = n` (constant in `n`), and the middle entries, which are
//! functions of the lag `l = n − k` alone.

use crate::analysis::format_sci;
use crate::error::{Error, Result};
use crate::sigma::{solve_sigma, MultiTermOrders, SigmaValue};
use crate::soe::SoeApprox;
use crate::special::gamma;

/// Below this `x = s_j τ` the `A_j`, `B_j` brackets are summed from their
/// Taylor series.
const AB_SERIES_SWITCH: f64 = 0.5;
/// Lag beyond which `b_l` is evaluated from its asymptotic series.
const B_SERIES_SWITCH: f64 = 2.0;

/// `a_l^{(β)}` for the exponent `q = 1 − β`.
pub fn a_coef(q: f64, sigma: f64, l: usize) -> f64 {
    if l == 0 {
        return sigma.powf(q);
    }
    let c = l as f64 + sigma;
    // c^q − (c−1)^q = −c^q·expm1(q·ln(1 − 1/c))
    -c.powf(q) * (q * (-1.0 / c).ln_1p()).exp_m1()
}

/// `b_l^{(β)}` for `l ≥ 1` and the exponent `q = 1 − β`:
/// `∫_{c−1}^{c} s^q ds − ½(c^q + (c−1)^q)` with `c = l + σ`.
pub fn b_coef(q: f64, sigma: f64, l: usize) -> f64 {
    debug_assert!(l >= 1);
    let c = l as f64 + sigma;
    if c < B_SERIES_SWITCH {
        let c1 = c - 1.0;
        return (c.powf(q + 1.0) - c1.powf(q + 1.0)) / (q + 1.0) - 0.5 * (c.powf(q) + c1.powf(q));
    }
    // c^q Σ_{j≥2} C(q,j)(−u)^j (1−j)/(2(j+1)), u = 1/c
    let u = 1.0 / c;
    let mut binom = 1.0;
    let mut sum = 0.0;
    for j in 1..80 {
        let jf = j as f64;
        binom *= (q - jf + 1.0) / jf * (-u);
        if j >= 2 {
            let term = binom * (1.0 - jf) / (2.0 * (jf + 1.0));
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
    }
    c.powf(q) * sum
}

/// Single-order L2-1σ row `g_k^{(n+1,β)}`, `k = 0..=n`.
pub fn l21sigma_row(beta: f64, sigma: f64, tau: f64, n: usize) -> Vec<f64> {
    let q = 1.0 - beta;
    let mu = tau.powf(-beta) / gamma(2.0 - beta);
    if n == 0 {
        return vec![mu * a_coef(q, sigma, 0)];
    }
    let a: Vec<f64> = (0..=n).map(|l| a_coef(q, sigma, l)).collect();
    let b: Vec<f64> = (0..=n)
        .map(|l| if l == 0 { 0.0 } else { b_coef(q, sigma, l) })
        .collect();
    let mut row = Vec::with_capacity(n + 1);
    row.push(mu * (a[n] - b[n]));
    for k in 1..n {
        let l = n - k;
        row.push(mu * (a[l] + b[l + 1] - b[l]));
    }
    row.push(mu * (a[0] + b[1]));
    row
}

/// `(A, B)` for `x = s τ`:
/// `A = ∫₀¹ (3/2 − s) e^{−x(σ+1−s)} ds`, `B = ∫₀¹ (s − 1/2) e^{−x(σ+1−s)} ds`.
pub fn ab_pair(x: f64, sigma: f64) -> (f64, f64) {
    let (p, q) = if x <= AB_SERIES_SWITCH {
        // P = ½ Σ (−x)^k/(k+1)!,  Q = Σ (−x)^k/(k!(k+2))
        let mut p = 0.0;
        let mut q = 0.0;
        let mut pow_fact = 1.0; // (−x)^k / k!
        for k in 0..40 {
            let kf = k as f64;
            let tp = 0.5 * pow_fact / (kf + 1.0);
            let tq = pow_fact / (kf + 2.0);
            p += tp;
            q += tq;
            if tq.abs() < 1e-18 {
                break;
            }
            pow_fact *= -x / (kf + 1.0);
        }
        (p, q)
    } else {
        let e = (-x).exp();
        (-(-x).exp_m1() / (2.0 * x), (1.0 - (1.0 + x) * e) / (x * x))
    };
    let shift = (-x * sigma).exp();
    (shift * (p + q), shift * (p - q))
}

/// Per-node data of the fast family, flattened over `(order r, node j)`.
#[derive(Debug, Clone)]
pub struct FastNodes {
    pub order: Vec<usize>,
    /// `x_j = s_j τ`.
    pub x: Vec<f64>,
    /// `λ_r ω̂_j = λ_r ω_j / Γ(1 − β_r)`.
    pub cw: Vec<f64>,
    /// `e^{−s_j τ}`.
    pub decay: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl FastNodes {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `Σ_{r,j} cw·e^{−p x}·A` and `Σ cw·e^{−p x}·B`.
    fn decayed_sums(&self, p: f64) -> (f64, f64) {
        let mut sa = 0.0;
        let mut sb = 0.0;
        for i in 0..self.len() {
            let w = self.cw[i] * (-p * self.x[i]).exp();
            sa += w * self.a[i];
            sb += w * self.b[i];
        }
        (sa, sb)
    }
}

#[derive(Debug, Clone)]
struct DirectTables {
    /// `Σ_r λ_r μ_r a_l^{(β_r)}`
    a: Vec<f64>,
    /// `Σ_r λ_r μ_r b_l^{(β_r)}`, entry 0 unused
    b: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Family {
    Direct(DirectTables),
    Fast { soes: Vec<SoeApprox>, nodes: FastNodes },
}

/// Refined row `𝐠_k^{(n+1)}` with its correction terms.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedRow {
    pub row: Vec<f64>,
    /// `b̃_n`; zero at `n = 0`.
    pub b_tilde: f64,
    /// `b_n`; zero at `n = 0`.
    pub b_n: f64,
    pub check: StepCheck,
}

/// Outcome of the per-step coefficient inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCheck {
    /// `𝐠₀^{(n+1)} > 0`
    pub g0_positive: bool,
    /// `(2σ−1)𝐠_n − σ𝐠_{n−1} > 0` (vacuous at `n = 0`)
    pub sign_ok: bool,
    /// `b_n < 2𝐠₀^{(n+1)}` (vacuous at `n = 0`)
    pub bn_bound_ok: bool,
    /// `b_n > 0` (vacuous at `n = 0`)
    pub bn_positive: bool,
}

impl StepCheck {
    pub fn all_ok(&self) -> bool {
        self.g0_positive && self.sign_ok && self.bn_bound_ok && self.bn_positive
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if !self.g0_positive {
            parts.push("g0 <= 0");
        }
        if !self.sign_ok {
            parts.push("(2σ-1)g_n - σ g_(n-1) <= 0");
        }
        if !self.bn_bound_ok {
            parts.push("b_n >= 2 g0");
        }
        if !self.bn_positive {
            parts.push("b_n <= 0");
        }
        parts.join(", ")
    }
}

/// The few scalars a time step needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub n: usize,
    /// `𝐠₀^{(n+1)}` (for `n = 0`, `𝐠₀^{(1)} = ĝ₀^{(1)}/(1−σ)`).
    pub g0: f64,
    /// `𝐠_n^{(n+1)}`.
    pub top: f64,
    /// `𝐠_{n−1}^{(n+1)}` for `n ≥ 1`.
    pub prev: f64,
    pub b_n: f64,
    pub b_tilde: f64,
    pub check: StepCheck,
}

/// All per-step scalar coefficients for fixed `(orders, σ, τ)`.
#[derive(Debug, Clone)]
pub struct CoefficientEngine {
    orders: MultiTermOrders,
    sigma: SigmaValue,
    tau: f64,
    mu: Vec<f64>,
    a0_agg: f64,
    family: Family,
}

impl CoefficientEngine {
    /// Direct family with tables for steps `n ≤ capacity`.
    pub fn direct(orders: &MultiTermOrders, tau: f64, capacity: usize) -> Result<Self> {
        let sigma = solve_sigma(orders, tau)?;
        let s = sigma.sigma;
        let mut a = vec![0.0; capacity + 2];
        let mut b = vec![0.0; capacity + 2];
        for (beta, &lambda) in orders.betas().into_iter().zip(orders.lambdas()) {
            let q = 1.0 - beta;
            let c = lambda * tau.powf(-beta) / gamma(2.0 - beta);
            for l in 0..capacity + 2 {
                a[l] += c * a_coef(q, s, l);
                if l >= 1 {
                    b[l] += c * b_coef(q, s, l);
                }
            }
        }
        Self::assemble(orders, tau, sigma, Family::Direct(DirectTables { a, b }))
    }

    /// Fast family from prebuilt approximations, one per order.
    pub fn fast(orders: &MultiTermOrders, tau: f64, soes: Vec<SoeApprox>) -> Result<Self> {
        if soes.len() != orders.len() {
            return Err(Error::DimensionMismatch {
                expected: orders.len(),
                found: soes.len(),
            });
        }
        let sigma = solve_sigma(orders, tau)?;
        let mut nodes = FastNodes {
            order: Vec::new(),
            x: Vec::new(),
            cw: Vec::new(),
            decay: Vec::new(),
            a: Vec::new(),
            b: Vec::new(),
        };
        for (r, (soe, (beta, &lambda))) in soes
            .iter()
            .zip(orders.betas().into_iter().zip(orders.lambdas()))
            .enumerate()
        {
            if (soe.beta - beta).abs() > 1e-12 {
                return Err(crate::error::invalid(
                    "soes",
                    format!("approximation {r} has beta={} but order needs {beta}", soe.beta),
                ));
            }
            let g = gamma(1.0 - beta);
            for (&s, &w) in soe.nodes.iter().zip(&soe.weights) {
                let x = s * tau;
                let (aj, bj) = ab_pair(x, sigma.sigma);
                nodes.order.push(r);
                nodes.x.push(x);
                nodes.cw.push(lambda * w / g);
                nodes.decay.push((-x).exp());
                nodes.a.push(aj);
                nodes.b.push(bj);
            }
        }
        Self::assemble(orders, tau, sigma, Family::Fast { soes, nodes })
    }

    /// Fast family, building each kernel approximation with tolerance
    /// `eps[r]` on `[στ, t_final]`.
    pub fn fast_with_eps(orders: &MultiTermOrders, tau: f64, eps: &[f64], t_final: f64) -> Result<Self> {
        if eps.len() != orders.len() {
            return Err(Error::DimensionMismatch {
                expected: orders.len(),
                found: eps.len(),
            });
        }
        let sigma = solve_sigma(orders, tau)?;
        let tau_hat = sigma.sigma * tau;
        let betas = orders.betas();
        let soes = crate::par::map(&(0..orders.len()).collect::<Vec<_>>(), |&r| {
            SoeApprox::build(betas[r], eps[r], tau_hat, t_final)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Self::fast(orders, tau, soes)
    }

    fn assemble(orders: &MultiTermOrders, tau: f64, sigma: SigmaValue, family: Family) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(crate::error::invalid("tau", format!("{tau} must be positive")));
        }
        let mu: Vec<f64> = orders.betas().iter().map(|&b| tau.powf(-b) / gamma(2.0 - b)).collect();
        let a0_agg = orders
            .betas()
            .iter()
            .zip(orders.lambdas())
            .zip(&mu)
            .map(|((&b, &l), &m)| l * m * a_coef(1.0 - b, sigma.sigma, 0))
            .sum();
        Ok(Self {
            orders: orders.clone(),
            sigma,
            tau,
            mu,
            a0_agg,
            family,
        })
    }

    pub fn orders(&self) -> &MultiTermOrders {
        &self.orders
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.sigma
    }

    pub fn sigma_value(&self) -> SigmaValue {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `μ^{(β_r)} = τ^{−β_r}/Γ(2−β_r)`.
    pub fn mu(&self, r: usize) -> f64 {
        self.mu[r]
    }

    /// `Σ_r λ_r μ^{(β_r)} a₀^{(β_r)}`.
    pub fn a0_agg(&self) -> f64 {
        self.a0_agg
    }

    pub fn is_fast(&self) -> bool {
        matches!(self.family, Family::Fast { .. })
    }

    /// Largest step index the direct tables cover; unbounded for the fast family.
    pub fn capacity(&self) -> usize {
        match &self.family {
            Family::Direct(t) => t.a.len() - 2,
            Family::Fast { .. } => usize::MAX,
        }
    }

    pub fn soes(&self) -> Option<&[SoeApprox]> {
        match &self.family {
            Family::Fast { soes, .. } => Some(soes),
            Family::Direct(_) => None,
        }
    }

    /// Total number of exponentials `Σ_r N^{(β_r)}` (0 for the direct family).
    pub fn n_exp_total(&self) -> usize {
        match &self.family {
            Family::Fast { nodes, .. } => nodes.len(),
            Family::Direct(_) => 0,
        }
    }

    /// `(A_j, B_j)` and node data of the fast family.
    pub fn fast_ab(&self) -> Result<&FastNodes> {
        match &self.family {
            Family::Fast { nodes, .. } => Ok(nodes),
            Family::Direct(_) => Err(Error::NotFastMode),
        }
    }

    /// Single-order direct row `g_k^{(n+1,β_r)}`.
    pub fn direct_g_row(&self, r: usize, n: usize) -> Vec<f64> {
        l21sigma_row(self.orders.betas()[r], self.sigma.sigma, self.tau, n)
    }

    /// `ĝ_k^{(n+1)} = Σ_r λ_r g_k^{(n+1,β_r)}`, evaluated from scratch.
    pub fn multiterm_direct_row(&self, n: usize) -> Vec<f64> {
        let mut row = vec![0.0; n + 1];
        for (r, &lambda) in self.orders.lambdas().iter().enumerate() {
            for (acc, g) in row.iter_mut().zip(self.direct_g_row(r, n)) {
                *acc += lambda * g;
            }
        }
        row
    }

    /// `ᶠĝ_k^{(n+1)}`.
    pub fn fast_g_row(&self, n: usize) -> Result<Vec<f64>> {
        self.fast_ab()?;
        self.row(n)
    }

    fn check_capacity(&self, n: usize) -> Result<()> {
        if n > self.capacity() {
            return Err(Error::TableCapacity {
                capacity: self.capacity(),
                requested: n,
            });
        }
        Ok(())
    }

    /// Head entry `ĝ₀^{(n+1)}` of this family's row.
    pub fn head(&self, n: usize) -> Result<f64> {
        self.check_capacity(n)?;
        if n == 0 {
            return Ok(self.a0_agg);
        }
        Ok(match &self.family {
            Family::Direct(t) => t.a[n] - t.b[n],
            Family::Fast { nodes, .. } => nodes.decayed_sums((n - 1) as f64).0,
        })
    }

    /// Top entry `ĝ_n^{(n+1)}` (`n ≥ 1`), the same for every `n`.
    pub fn top(&self) -> f64 {
        match &self.family {
            Family::Direct(t) => t.a[0] + t.b[1],
            Family::Fast { nodes, .. } => nodes.decayed_sums(0.0).1 + self.a0_agg,
        }
    }

    /// Middle entry `ĝ_{n−l}^{(n+1)}` at lag `l ≥ 1` (valid for `1 ≤ n − l`).
    pub fn mid(&self, l: usize) -> Result<f64> {
        debug_assert!(l >= 1);
        self.check_capacity(l)?;
        Ok(match &self.family {
            Family::Direct(t) => t.a[l] + t.b[l + 1] - t.b[l],
            Family::Fast { nodes, .. } => {
                let mut s = 0.0;
                for i in 0..nodes.len() {
                    let d = (-((l - 1) as f64) * nodes.x[i]).exp();
                    s += nodes.cw[i] * d * (nodes.a[i] + nodes.decay[i] * nodes.b[i]);
                }
                s
            }
        })
    }

    /// Family row `ĝ_k^{(n+1)}` (direct tables or fast).
    pub fn row(&self, n: usize) -> Result<Vec<f64>> {
        self.check_capacity(n)?;
        if n == 0 {
            return Ok(vec![self.a0_agg]);
        }
        let mut row = Vec::with_capacity(n + 1);
        row.push(self.head(n)?);
        for k in 1..n {
            row.push(self.mid(n - k)?);
        }
        row.push(self.top());
        Ok(row)
    }

    /// `b_n = ĝ₁^{(n+1)} − ĝ₀^{(n)}` for `n ≥ 1`. In the fast family this is
    /// `Σ_r λ_r Σ_j ω̂_j e^{−(n−1)s_jτ} B_j`.
    pub fn bn_value(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(crate::error::invalid("n", "b_n is defined for n >= 1"));
        }
        self.check_capacity(n)?;
        Ok(match &self.family {
            Family::Direct(t) => t.b[n],
            Family::Fast { nodes, .. } => nodes.decayed_sums((n - 1) as f64).1,
        })
    }

    /// Scalars needed to advance step `n` (`O(Σ N^{(β)})` in the fast family).
    pub fn step_coefficients(&self, n: usize) -> Result<StepCoefficients> {
        if n == 0 {
            let g0 = self.a0_agg / (1.0 - self.sigma.sigma);
            return Ok(StepCoefficients {
                n,
                g0,
                top: g0,
                prev: f64::NAN,
                b_n: 0.0,
                b_tilde: 0.0,
                check: StepCheck {
                    g0_positive: g0 > 0.0,
                    sign_ok: true,
                    bn_bound_ok: true,
                    bn_positive: true,
                },
            });
        }
        let head = self.head(n)?;
        let b_n = self.bn_value(n)?;
        let top = self.top();
        let prev = if n == 1 { f64::NAN } else { self.mid(1)? };
        Ok(self.finish_step(n, head, b_n, top, prev))
    }

    fn finish_step(&self, n: usize, head: f64, b_n: f64, top: f64, prev: f64) -> StepCoefficients {
        let s = self.sigma.sigma;
        let g0 = head - 0.5 * b_n;
        let prev = if n == 1 { g0 } else { prev };
        StepCoefficients {
            n,
            g0,
            top,
            prev,
            b_n,
            b_tilde: (3.0 * s - 1.0) * b_n / (2.0 * (1.0 - s) * g0),
            check: StepCheck {
                g0_positive: g0 > 0.0,
                sign_ok: (2.0 * s - 1.0) * top - s * prev > 0.0,
                bn_bound_ok: b_n < 2.0 * g0,
                bn_positive: b_n > 0.0,
            },
        }
    }

    /// Iterator over `step_coefficients(1), step_coefficients(2), …` that
    /// updates the fast-family decay accumulators with one multiply per node
    /// per step.
    pub fn step_stream(&self) -> StepStream<'_> {
        StepStream {
            engine: self,
            cursor: self.step_cursor(),
        }
    }

    /// Owned state for [`Self::next_step`], starting at `n = 1`.
    pub fn step_cursor(&self) -> StepCursor {
        let powers = match &self.family {
            Family::Fast { nodes, .. } => nodes.cw.clone(),
            Family::Direct(_) => Vec::new(),
        };
        StepCursor {
            n: 1,
            powers,
            mid1: self.mid(1).unwrap_or(f64::NAN),
        }
    }

    /// Coefficients for the cursor's step; advances the cursor.
    pub fn next_step(&self, cursor: &mut StepCursor) -> StepCoefficients {
        let n = cursor.n;
        let (head, b_n) = match &self.family {
            Family::Fast { nodes, .. } => {
                let mut sa = 0.0;
                let mut sb = 0.0;
                for i in 0..nodes.len() {
                    let p = cursor.powers[i];
                    sa += p * nodes.a[i];
                    sb += p * nodes.b[i];
                    cursor.powers[i] = p * nodes.decay[i];
                }
                (sa, sb)
            }
            Family::Direct(t) => (t.a[n] - t.b[n], t.b[n]),
        };
        cursor.n += 1;
        self.finish_step(n, head, b_n, self.top(), cursor.mid1)
    }

    /// `𝐠_k^{(n+1)}` with `b_n`, `b̃_n` and the step inequalities.
    pub fn refined_g_row(&self, n: usize) -> Result<RefinedRow> {
        let sc = self.step_coefficients(n)?;
        if n == 0 {
            return Ok(RefinedRow {
                row: vec![sc.g0],
                b_tilde: 0.0,
                b_n: 0.0,
                check: sc.check,
            });
        }
        let mut row = self.row(n)?;
        row[0] = sc.g0;
        Ok(RefinedRow {
            row,
            b_tilde: sc.b_tilde,
            b_n: sc.b_n,
            check: sc.check,
        })
    }

    /// Evaluate the coefficient inequalities for every `1 ≤ n ≤ n_max`.
    pub fn coeff_property_check(&self, n_max: usize) -> Result<PropertyReport> {
        if n_max == 0 {
            return Err(crate::error::invalid("n_max", "must be at least 1"));
        }
        self.check_capacity(n_max)?;
        let s = self.sigma.sigma;
        let alpha0 = self.orders.alphas()[0];
        let top = self.top();
        // mids[l] for l = 1..n_max−1, and running checks of the middle chain
        let mids: Vec<f64> = (1..n_max).map(|l| self.mid(l)).collect::<Result<_>>()?;
        // mid_chain_ok[l]: mids strictly decreasing in l over 1..=l and positive
        let mut mid_chain_ok = vec![true; n_max];
        let mut inv_mid_sum = vec![0.0; n_max];
        for l in 1..n_max {
            let m = mids[l - 1];
            let ok_here = m > 0.0 && (l == 1 || m < mids[l - 2]);
            mid_chain_ok[l] = mid_chain_ok[l - 1] && ok_here;
            inv_mid_sum[l] = inv_mid_sum[l - 1] + 1.0 / m;
        }

        let mut rows = Vec::with_capacity(n_max);
        let mut report = PropertyReport {
            rows: Vec::new(),
            all_monotone: true,
            all_sign: true,
            all_bn_bound: true,
            all_bn_positive: true,
            b1_positive: false,
            worst_sign_margin: f64::INFINITY,
            worst_bn_ratio: 0.0,
            g1_over_g0_max: 0.0,
            inverse_sum_constant: 0.0,
        };
        let mut stream = self.step_stream();
        for n in 1..=n_max {
            let sc = stream.next_step();
            let monotone = if n == 1 {
                top > sc.g0 && sc.g0 > 0.0
            } else {
                top > mids[0] && mid_chain_ok[n - 1] && mids[n - 2] > sc.g0 && sc.g0 > 0.0
            };
            let sign_margin = ((2.0 * s - 1.0) * top - s * sc.prev) / top;
            let bn_ratio = sc.b_n / (2.0 * sc.g0);
            let g1 = if n == 1 { top } else { mids[n - 2] };
            let inv_sum = 1.0 / sc.g0 + inv_mid_sum[n - 1] + 1.0 / top;
            let t = (n as f64 + s) * self.tau;
            report.g1_over_g0_max = report.g1_over_g0_max.max(g1 / sc.g0);
            report.inverse_sum_constant = report
                .inverse_sum_constant
                .max(self.tau * inv_sum / t.powf(2.0 - alpha0));
            report.worst_sign_margin = report.worst_sign_margin.min(sign_margin);
            report.worst_bn_ratio = report.worst_bn_ratio.max(bn_ratio);
            report.all_monotone &= monotone;
            report.all_sign &= sc.check.sign_ok;
            report.all_bn_bound &= sc.check.bn_bound_ok;
            report.all_bn_positive &= sc.check.bn_positive;
            if n == 1 {
                report.b1_positive = sc.b_n > 0.0;
            }
            rows.push(PropertyRow {
                n,
                g0: sc.g0,
                gn: top,
                monotone_ok: monotone,
                sign_ok: sc.check.sign_ok,
                bn_ratio,
            });
        }
        report.rows = rows;
        Ok(report)
    }
}

/// Position of an incremental coefficient sweep.
#[derive(Debug, Clone)]
pub struct StepCursor {
    n: usize,
    /// `cw_j e^{−(n−1)x_j}`
    powers: Vec<f64>,
    mid1: f64,
}

impl StepCursor {
    /// Step the next call will produce.
    pub fn n(&self) -> usize {
        self.n
    }
}

/// Incremental producer of [`StepCoefficients`], see
/// [`CoefficientEngine::step_stream`].
pub struct StepStream<'a> {
    engine: &'a CoefficientEngine,
    cursor: StepCursor,
}

impl StepStream<'_> {
    pub fn next_step(&mut self) -> StepCoefficients {
        self.engine.next_step(&mut self.cursor)
    }
}

impl Iterator for StepStream<'_> {
    type Item = StepCoefficients;

    fn next(&mut self) -> Option<StepCoefficients> {
        if self.cursor.n > self.engine.capacity() {
            return None;
        }
        Some(self.next_step())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyRow {
    pub n: usize,
    pub g0: f64,
    pub gn: f64,
    pub monotone_ok: bool,
    pub sign_ok: bool,
    /// `b_n / (2𝐠₀^{(n+1)})`, below 1 when the bound holds.
    pub bn_ratio: f64,
}

/// Result of [`CoefficientEngine::coeff_property_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub rows: Vec<PropertyRow>,
    pub all_monotone: bool,
    pub all_sign: bool,
    pub all_bn_bound: bool,
    pub all_bn_positive: bool,
    pub b1_positive: bool,
    /// `min_n ((2σ−1)𝐠_n − σ𝐠_{n−1}) / 𝐠_n`.
    pub worst_sign_margin: f64,
    pub worst_bn_ratio: f64,
    /// Empirical constant in `𝐠₁ ≤ C𝐠₀`.
    pub g1_over_g0_max: f64,
    /// Empirical constant in `τΣ_k 1/𝐠_k ≤ C t_{n+σ}^{2−α₀}`.
    pub inverse_sum_constant: f64,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.all_monotone && self.all_sign && self.all_bn_bound && self.all_bn_positive
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,g0,gn,monotone_ok,sign_ok,bn_ratio")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                format_sci(r.g0),
                format_sci(r.gn),
                r.monotone_ok,
                r.sign_ok,
                format_sci(r.bn_ratio)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::adaptive_integrate;

    fn three_term() -> MultiTermOrders {
        MultiTermOrders::new(vec![1.9, 1.5, 1.2], vec![3.0, 2.0, 1.0]).unwrap()
    }

    #[test]
    fn first_level_value() {
        // μ σ^{0.5} with μ = 0.01^{-0.5}/Γ(1.5)
        let row = l21sigma_row(0.5, 0.75, 0.01, 0);
        let expected = 10.0 / gamma(1.5) * 0.75f64.sqrt();
        assert!((row[0] - expected).abs() < 1e-12);
        assert!((row[0] - 9.772050238058398).abs() < 1e-12);
    }

    #[test]
    fn n1_branch_instantiation() {
        let (beta, sigma, tau): (f64, f64, f64) = (0.4, 0.8, 0.02);
        let q = 1.0 - beta;
        let mu = tau.powf(-beta) / gamma(2.0 - beta);
        let row = l21sigma_row(beta, sigma, tau, 1);
        let (a0, a1, b1) = (a_coef(q, sigma, 0), a_coef(q, sigma, 1), b_coef(q, sigma, 1));
        assert!((row[0] - mu * (a1 - b1)).abs() < 1e-13 * row[0]);
        assert!((row[1] - mu * (a0 + b1)).abs() < 1e-13 * row[1]);
    }

    #[test]
    fn b_series_matches_quadrature() {
        for &q in &[0.1, 0.5, 0.9] {
            for &l in &[1usize, 2, 3, 10, 1000] {
                let c = l as f64 + 0.7;
                let integral = adaptive_integrate(&|s: f64| s.powf(q), c - 1.0, c, 1e-16);
                let expected = integral - 0.5 * (c.powf(q) + (c - 1.0).powf(q));
                let got = b_coef(q, 0.7, l);
                let scale = c.powf(q);
                assert!((got - expected).abs() <= 1e-14 * scale, "q={q} l={l} {got} {expected}");
                assert!(got > 0.0);
            }
        }
    }

    #[test]
    fn ab_limit_and_quadrature() {
        let (a, b) = ab_pair(1e-12, 0.75);
        assert!((a - 1.0).abs() < 1e-11 && b.abs() < 1e-11);
        for &x in &[1e-3, 0.3, 0.5, 0.5000001, 1.0, 7.0] {
            let sigma = 0.75;
            let ea = adaptive_integrate(&|s: f64| (1.5 - s) * (-x * (sigma + 1.0 - s)).exp(), 0.0, 1.0, 1e-16);
            let eb = adaptive_integrate(&|s: f64| (s - 0.5) * (-x * (sigma + 1.0 - s)).exp(), 0.0, 1.0, 1e-16);
            let (a, b) = ab_pair(x, sigma);
            assert!((a - ea).abs() < 1e-12, "x={x}");
            assert!((b - eb).abs() < 1e-12, "x={x}");
            assert!(a > b && b > 0.0);
        }
    }

    #[test]
    fn direct_tables_match_scratch_rows() {
        let orders = three_term();
        let engine = CoefficientEngine::direct(&orders, 1.0 / 40.0, 50).unwrap();
        for n in [0usize, 1, 2, 7, 50] {
            let a = engine.row(n).unwrap();
            let b = engine.multiterm_direct_row(n);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * y.abs(), "n={n}");
            }
        }
        assert!(engine.row(51).is_err());
    }

    #[test]
    fn stream_matches_closed_form() {
        let orders = three_term();
        let tau: f64 = 1.0 / 40.0;
        let eps: Vec<f64> = orders.alphas().iter().map(|a| tau.powf(4.0 - a) * 1e-3).collect();
        let engine = CoefficientEngine::fast_with_eps(&orders, tau, &eps, 1.0).unwrap();
        let mut stream = engine.step_stream();
        for n in 1..=40 {
            let a = stream.next_step();
            let b = engine.step_coefficients(n).unwrap();
            assert!((a.g0 - b.g0).abs() <= 1e-12 * b.g0.abs());
            assert!((a.b_n - b.b_n).abs() <= 1e-12 * b.b_n.abs());
        }
    }

    #[test]
    fn b_tilde_identity() {
        let orders = three_term();
        let engine = CoefficientEngine::direct(&orders, 0.05, 20).unwrap();
        let s = engine.sigma();
        for n in 1..=20 {
            let r = engine.refined_g_row(n).unwrap();
            let lhs = r.b_tilde * r.row[0];
            let rhs = (3.0 * s - 1.0) * r.b_n / (2.0 * (1.0 - s));
            assert!((lhs - rhs).abs() <= 1e-14 * rhs.abs());
        }
    }

    #[test]
    fn huge_eps_fails_sign_check() {
        let orders = MultiTermOrders::single(1.5).unwrap();
        let tau = 0.01;
        let sigma = 0.75;
        // a crude two-node sum that overweights the history: ε of order 1e4
        let soe = SoeApprox::from_parts(0.5, sigma * tau, 1.0, vec![0.5, 3.0], vec![1e4, 1e4]).unwrap();
        assert!(soe.eps_achieved > 1.0);
        let engine = CoefficientEngine::fast(&orders, tau, vec![soe]).unwrap();
        let report = engine.coeff_property_check(100).unwrap();
        assert!(!report.all_sign);
        assert!(!report.passed());
    }

    #[test]
    fn property_report_single_term() {
        let orders = MultiTermOrders::single(1.5).unwrap();
        let engine = CoefficientEngine::fast_with_eps(&orders, 0.01, &[1e-10], 1.0).unwrap();
        let report = engine.coeff_property_check(100).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.b1_positive);
        assert!(report.worst_bn_ratio < 1.0);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,g0,gn,monotone_ok,sign_ok,bn_ratio\n"));
        assert_eq!(text.lines().count(), 101);
    }

    #[test]
    fn family_mismatch_is_reported() {
        let orders = three_term();
        let engine = CoefficientEngine::direct(&orders, 0.05, 4).unwrap();
        assert!(matches!(engine.fast_g_row(2), Err(Error::NotFastMode)));
    }
}
