//! Linearized weighted scheme and its driver.
//!
//! With `v̂^{n+1−σ} = (2−2σ)(u^{n+1}−u^n)/τ + (2σ−1)(u^{n+1}−u^{n−1})/(2τ)`,
//! each step solves
//!
//! ```text
//! 𝒟̂ u^{n+1} = δ_x²((w^{n+1} + w^n)/2) + f(u^n) + p(·, t_n)
//! ```
//!
//! for `u^{n+1}`, where `𝒟̂` is the refined **g**-weighted sum over the
//! `v̂` levels (kept either as a compressed fast history or as the full
//! sequence) and `w^n` is the second-order weighted level. The unknown
//! enters linearly, so every step is one constant-coefficient tridiagonal
//! solve.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{norms, NormTriple};
use crate::coefficients::{CoefficientEngine, StepCoefficients, StepCursor};
use crate::error::{invalid, Error, Result};
use crate::grid::{delta_x2, delta_x2_interior, Grid1D, GridFunction};
use crate::history::{HistoryState, VhatSequence};
use crate::par::Exec;
use crate::problems::ProblemSpec;
use crate::sigma::MultiTermOrders;
use crate::tridiag::{ThomasFactor, TridiagonalSystem};

/// How the history term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Sum-of-exponentials recursion.
    Fast,
    /// Full summation over stored levels.
    Direct,
}

impl Backend {
    pub fn label(self) -> &'static str {
        match self {
            Backend::Fast => "fast",
            Backend::Direct => "direct",
        }
    }

    /// Table heading name.
    pub fn scheme_name(self) -> &'static str {
        match self {
            Backend::Fast => "scheme1",
            Backend::Direct => "scheme2",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Reaction to a failed per-step coefficient inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    /// Abort the run.
    Strict,
    /// Record the violation and continue.
    #[default]
    Warn,
}

/// Kernel tolerance per order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EpsRule {
    /// `ε_r = τ^{4−α_r}·10⁻³`
    #[default]
    Table1,
    /// `ε_r = τ^{4−α_r}`
    Tau4,
    /// The same `ε` for every order.
    Fixed(f64),
}

impl EpsRule {
    pub fn eps(&self, orders: &MultiTermOrders, tau: f64) -> Vec<f64> {
        orders
            .alphas()
            .iter()
            .map(|&a| match *self {
                EpsRule::Table1 => tau.powf(4.0 - a) * 1e-3,
                EpsRule::Tau4 => tau.powf(4.0 - a),
                EpsRule::Fixed(v) => v,
            })
            .collect()
    }
}

impl FromStr for EpsRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "table1" => Ok(EpsRule::Table1),
            "tau4" => Ok(EpsRule::Tau4),
            other => {
                let v = other
                    .strip_prefix("fixed:")
                    .ok_or_else(|| invalid("eps_rule", format!("unknown rule '{other}'")))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| invalid("eps_rule", format!("bad tolerance in '{other}'")))?;
                if !(v > 0.0 && v < 1.0) {
                    return Err(invalid("eps_rule", format!("tolerance {v} must lie in (0, 1)")));
                }
                Ok(EpsRule::Fixed(v))
            }
        }
    }
}

impl fmt::Display for EpsRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsRule::Table1 => f.write_str("table1"),
            EpsRule::Tau4 => f.write_str("tau4"),
            EpsRule::Fixed(v) => write!(f, "fixed:{v:e}"),
        }
    }
}

impl Serialize for EpsRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EpsRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Grid sizes and solver options for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    /// spatial intervals `M`
    pub m: usize,
    /// time steps `N`, `τ = T/N`
    pub n: usize,
    pub backend: Backend,
    pub eps_rule: EpsRule,
    pub validation: ValidationMode,
    pub exec: Exec,
    /// keep every time level in the output
    pub keep_trajectory: bool,
}

impl Discretization {
    pub fn new(m: usize, n: usize, backend: Backend) -> Self {
        Self {
            m,
            n,
            backend,
            eps_rule: EpsRule::Table1,
            validation: ValidationMode::Warn,
            exec: Exec::Parallel,
            keep_trajectory: false,
        }
    }

    pub fn tau(&self, t_final: f64) -> f64 {
        t_final / self.n as f64
    }

    /// Coefficient engine for this discretization.
    pub fn engine(&self, orders: &MultiTermOrders, t_final: f64) -> Result<CoefficientEngine> {
        if self.n == 0 {
            return Err(invalid("n", "need at least one time step"));
        }
        let tau = self.tau(t_final);
        match self.backend {
            Backend::Direct => CoefficientEngine::direct(orders, tau, self.n),
            Backend::Fast => CoefficientEngine::fast_with_eps(orders, tau, &self.eps_rule.eps(orders, tau), t_final),
        }
    }
}

/// Per-run cost counters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counters {
    /// history multiply-adds
    pub work: u64,
    /// peak reals held by levels, history and coefficient tables
    pub stored_reals: usize,
    pub n_exp_total: usize,
    pub wall_ms: f64,
}

/// A failed coefficient inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub detail: String,
}

/// Running error maxima against the exact solution, over `0 ≤ n ≤ N`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorSummary {
    pub max: NormTriple,
    /// errors at `n = 1`
    pub first: NormTriple,
    /// errors at `n = N`
    pub last: NormTriple,
}

impl ErrorSummary {
    fn absorb(&mut self, e: NormTriple) {
        self.max.l2 = self.max.l2.max(e.l2);
        self.max.semi_h1 = self.max.semi_h1.max(e.semi_h1);
        self.max.h1 = self.max.h1.max(e.h1);
    }
}

/// Everything a run reports.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub backend: Backend,
    pub m: usize,
    pub n: usize,
    pub tau: f64,
    pub h: f64,
    pub sigma: f64,
    pub final_u: GridFunction,
    pub errors: Option<ErrorSummary>,
    pub counters: Counters,
    pub violations: Vec<Violation>,
    pub trajectory: Option<Vec<GridFunction>>,
}

impl RunOutput {
    /// `max_n ‖e^n‖_{H¹}`.
    pub fn e1(&self) -> Result<f64> {
        self.errors.map(|e| e.max.h1).ok_or(Error::NoExactSolution)
    }
}

/// `w¹ = (3/2−σ)[σu¹+(1−σ)u⁰] + (σ−1/2)[σu⁰+(1−σ)(u¹−2τψ)]`.
pub fn build_w_first(sigma: f64, tau: f64, u1: &[f64], u0: &[f64], psi: &[f64]) -> Vec<f64> {
    let (c, d) = (1.5 - sigma, sigma - 0.5);
    (0..u1.len())
        .map(|i| {
            c * (sigma * u1[i] + (1.0 - sigma) * u0[i])
                + d * (sigma * u0[i] + (1.0 - sigma) * (u1[i] - 2.0 * tau * psi[i]))
        })
        .collect()
}

/// `wⁿ = (3/2−σ)[σuⁿ+(1−σ)u^{n−1}] + (σ−1/2)[σu^{n−1}+(1−σ)u^{n−2}]`.
pub fn build_w(sigma: f64, un: &[f64], un1: &[f64], un2: &[f64]) -> Vec<f64> {
    let (c, d) = (1.5 - sigma, sigma - 0.5);
    (0..un.len())
        .map(|i| c * (sigma * un[i] + (1.0 - sigma) * un1[i]) + d * (sigma * un1[i] + (1.0 - sigma) * un2[i]))
        .collect()
}

enum HistoryBackend {
    Fast(HistoryState),
    Direct(VhatSequence),
}

/// Step-by-step solver state. Vectors hold interior values only.
pub struct Solver<'a> {
    problem: &'a ProblemSpec,
    grid: Grid1D,
    engine: CoefficientEngine,
    validation: ValidationMode,
    exec: Exec,
    tau: f64,
    sigma: f64,
    kappa: f64,
    c2: f64,
    factor: ThomasFactor,
    /// index of `u_curr`
    n: usize,
    u_prev: Vec<f64>,
    u_curr: Vec<f64>,
    psi: Vec<f64>,
    /// `v̂^{n−σ}` for the current `n`
    vhat: Vec<f64>,
    /// `v̂^{n−1−σ}` (fast backend, `n ≥ 2`)
    vhat_prev: Vec<f64>,
    /// `v¹ = (v̂^{1−σ} − σψ)/(1−σ)`
    v1: Vec<f64>,
    w_curr: Vec<f64>,
    history: Option<HistoryBackend>,
    pending: Option<PendingStep>,
    cursor: StepCursor,
    work: u64,
    peak_reals: usize,
    violations: Vec<Violation>,
}

/// Data carried from assembly to completion of one step.
struct PendingStep {
    vtrial: Vec<f64>,
    base: Vec<f64>,
    wrest: Vec<f64>,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a ProblemSpec, disc: &Discretization, engine: CoefficientEngine) -> Result<Self> {
        if disc.backend == Backend::Fast && !engine.is_fast() {
            return Err(Error::NotFastMode);
        }
        if disc.backend == Backend::Direct && engine.capacity() < disc.n {
            return Err(Error::TableCapacity {
                capacity: engine.capacity(),
                requested: disc.n,
            });
        }
        let grid = Grid1D::new(problem.x_left, problem.x_right, disc.m)?;
        let tau = engine.tau();
        let sigma = engine.sigma();
        let kappa = (3.0 - 2.0 * sigma) / (2.0 * tau);
        let c2 = (1.5 - sigma) * sigma / 2.0;
        let top = engine.top();
        let c1 = top * kappa;
        if !(c1 > 0.0) {
            return Err(Error::Validation {
                step: 1,
                detail: format!("leading coefficient {c1:e} is not positive"),
            });
        }
        let h2 = grid.h * grid.h;
        let factor = ThomasFactor::constant(grid.interior_len(), c1 + 2.0 * c2 / h2, -c2 / h2)?;
        let interior =
            |f: &crate::problems::ScalarFn| -> Vec<f64> { grid.interior_nodes().iter().map(|&x| f(x)).collect() };
        let u0 = interior(&problem.phi);
        let psi = interior(&problem.psi);
        let m = grid.interior_len();
        let cursor = engine.step_cursor();
        Ok(Self {
            problem,
            grid,
            engine,
            validation: disc.validation,
            exec: disc.exec,
            tau,
            sigma,
            kappa,
            c2,
            factor,
            n: 0,
            u_prev: vec![0.0; m],
            u_curr: u0,
            psi,
            vhat: vec![0.0; m],
            vhat_prev: vec![0.0; m],
            v1: vec![0.0; m],
            w_curr: vec![0.0; m],
            history: None,
            pending: None,
            cursor,
            work: 0,
            peak_reals: 0,
            violations: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn engine(&self) -> &CoefficientEngine {
        &self.engine
    }

    pub fn work(&self) -> u64 {
        self.work
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// `u^n` with boundary values.
    pub fn current(&self) -> GridFunction {
        GridFunction::from_interior(&self.u_curr)
    }

    /// `w^n` (interior).
    pub fn w_current(&self) -> &[f64] {
        &self.w_curr
    }

    /// `v̂^{n−σ}` (interior).
    pub fn vhat_current(&self) -> &[f64] {
        &self.vhat
    }

    fn check(&mut self, sc: &StepCoefficients) -> Result<()> {
        if sc.check.all_ok() {
            return Ok(());
        }
        let detail = sc.check.describe();
        match self.validation {
            ValidationMode::Strict => Err(Error::Validation { step: sc.n, detail }),
            ValidationMode::Warn => {
                if self.violations.is_empty() {
                    log::warn!("coefficient check failed at step {}: {detail}", sc.n);
                }
                self.violations.push(Violation { step: sc.n, detail });
                Ok(())
            }
        }
    }

    /// Reals currently held by levels, history and coefficient data.
    pub fn stored_reals(&self) -> usize {
        let m = self.grid.interior_len();
        // u_prev, u_curr, psi, vhat, vhat_prev, v1, w_curr
        let levels = 7 * m;
        let history = match &self.history {
            Some(HistoryBackend::Fast(h)) => h.stored_reals(),
            Some(HistoryBackend::Direct(s)) => s.stored_reals(),
            None => 0,
        };
        let coeffs = if self.engine.is_fast() {
            6 * self.engine.n_exp_total()
        } else {
            2 * (self.engine.capacity() + 2)
        };
        levels + history + coeffs
    }

    fn note_reals(&mut self) {
        self.peak_reals = self.peak_reals.max(self.stored_reals());
    }

    /// Explicit first level `u¹`.
    pub fn first_step(&mut self) -> Result<()> {
        if self.n != 0 {
            return Err(invalid("first_step", format!("solver is at level {}", self.n)));
        }
        let sc = self.engine.step_coefficients(0)?;
        self.check(&sc)?;
        let (s, tau) = (self.sigma, self.tau);
        let g = &self.grid;
        let p = self.problem;
        let nodes = g.interior_nodes();
        let second = |analytic: &Option<crate::problems::ScalarFn>, f: &crate::problems::ScalarFn| -> Vec<f64> {
            match analytic {
                Some(d2) => nodes.iter().map(|&x| d2(x)).collect(),
                None => delta_x2(g, &GridFunction::from_fn(g, |x| f(x))).interior().to_vec(),
            }
        };
        let phi_xx = second(&p.phi_xx, &p.phi);
        let psi_xx = second(&p.psi_xx, &p.psi);
        let u0 = self.u_curr.clone();
        let scale = tau / ((2.0 - 2.0 * s) * sc.g0);
        let u1: Vec<f64> = (0..nodes.len())
            .map(|i| {
                let arg = u0[i] + s * tau * self.psi[i];
                let rhs = phi_xx[i] + s * tau * psi_xx[i] + (p.f)(arg) + (p.p)(nodes[i], s * tau);
                u0[i] + tau * self.psi[i] + scale * rhs
            })
            .collect();
        self.vhat = (0..u1.len())
            .map(|i| (2.0 - 2.0 * s) * (u1[i] - u0[i]) / tau + (2.0 * s - 1.0) * self.psi[i])
            .collect();
        self.v1 = (0..u1.len())
            .map(|i| (self.vhat[i] - s * self.psi[i]) / (1.0 - s))
            .collect();
        self.w_curr = build_w_first(s, tau, &u1, &u0, &self.psi);
        self.history = Some(if self.engine.is_fast() {
            HistoryBackend::Fast(HistoryState::new(&self.engine, u1.len(), self.exec)?)
        } else {
            HistoryBackend::Direct(VhatSequence::new(&self.psi, &self.vhat, self.exec)?)
        });
        self.u_prev = u0;
        self.u_curr = u1;
        self.n = 1;
        self.work += self.u_curr.len() as u64;
        self.note_reals();
        Ok(())
    }

    /// Assemble the tridiagonal system for `u^{n+1}`; must be followed by
    /// [`Self::finish_step`].
    pub fn step_system(&mut self) -> Result<TridiagonalSystem> {
        if self.n == 0 {
            return Err(invalid("step", "first_step has not run"));
        }
        if self.pending.is_some() {
            return Err(invalid("step", "previous step not finished"));
        }
        let n = self.n;
        debug_assert_eq!(self.cursor.n(), n);
        let sc = self.engine.next_step(&mut self.cursor);
        self.check(&sc)?;
        let (s, tau) = (self.sigma, self.tau);
        let mlen = self.u_curr.len();
        let (un, un1) = (&self.u_curr, &self.u_prev);
        let vtrial: Vec<f64> = (0..mlen)
            .map(|i| -(2.0 - 2.0 * s) / tau * un[i] - (2.0 * s - 1.0) / (2.0 * tau) * un1[i])
            .collect();
        let (known, coeff, base) = match self.history.as_mut().expect("seeded by first_step") {
            HistoryBackend::Fast(state) => {
                let (staged, base) = if n == 1 {
                    (state.seed_partial(&self.psi, &self.v1)?, self.v1.clone())
                } else {
                    let d: Vec<f64> = (0..mlen).map(|i| self.vhat[i] - self.vhat_prev[i]).collect();
                    (state.stage(&d)?, self.vhat.clone())
                };
                self.work += (state.n_nodes() * mlen) as u64;
                let kp = state.known_part(&self.engine, &staged, &vtrial, &base, &self.vhat);
                (kp.values, kp.unknown_coeff, base)
            }
            HistoryBackend::Direct(seq) => {
                let mut acc = seq.partial_apply(&self.engine, n, sc.g0, sc.b_tilde)?;
                for i in 0..mlen {
                    acc[i] += sc.top * (vtrial[i] - self.vhat[i]);
                }
                self.work += (n * mlen) as u64;
                (acc, sc.top * self.kappa, self.vhat.clone())
            }
        };
        let wrest: Vec<f64> = (0..mlen)
            .map(|i| (1.5 - s) * (1.0 - s) * un[i] + (s - 0.5) * (s * un[i] + (1.0 - s) * un1[i]))
            .collect();
        let sum: Vec<f64> = (0..mlen).map(|i| wrest[i] + self.w_curr[i]).collect();
        let mut lap = vec![0.0; mlen];
        delta_x2_interior(self.grid.h, &sum, &mut lap);
        let t_n = n as f64 * tau;
        let nodes = self.grid.interior_nodes();
        let rhs: Vec<f64> = (0..mlen)
            .map(|i| 0.5 * lap[i] + (self.problem.f)(un[i]) + (self.problem.p)(nodes[i], t_n) - known[i])
            .collect();
        let h2 = self.grid.h * self.grid.h;
        let off = -self.c2 / h2;
        self.pending = Some(PendingStep { vtrial, base, wrest });
        Ok(TridiagonalSystem {
            sub: vec![off; mlen],
            diag: vec![coeff + 2.0 * self.c2 / h2; mlen],
            sup: vec![off; mlen],
            rhs,
        })
    }

    /// Accept `u^{n+1}` and update levels and history.
    pub fn finish_step(&mut self, u_next: &[f64]) -> Result<()> {
        let mlen = self.u_curr.len();
        if u_next.len() != mlen {
            return Err(Error::DimensionMismatch {
                expected: mlen,
                found: u_next.len(),
            });
        }
        let pending = self
            .pending
            .take()
            .ok_or_else(|| invalid("finish_step", "no step assembled"))?;
        let s = self.sigma;
        let vnext: Vec<f64> = (0..mlen).map(|i| pending.vtrial[i] + self.kappa * u_next[i]).collect();
        match self.history.as_mut().expect("seeded by first_step") {
            HistoryBackend::Fast(state) => {
                let d: Vec<f64> = (0..mlen).map(|i| vnext[i] - pending.base[i]).collect();
                state.complete(&d)?;
            }
            HistoryBackend::Direct(seq) => seq.push(&vnext)?,
        }
        self.w_curr = (0..mlen)
            .map(|i| pending.wrest[i] + (1.5 - s) * s * u_next[i])
            .collect();
        self.vhat_prev = std::mem::replace(&mut self.vhat, vnext);
        self.u_prev = std::mem::replace(&mut self.u_curr, u_next.to_vec());
        self.n += 1;
        self.note_reals();
        Ok(())
    }

    /// Implicit step `u^n → u^{n+1}`.
    pub fn step_n(&mut self) -> Result<()> {
        let sys = self.step_system()?;
        let mut x = sys.rhs;
        self.factor.solve_in_place(&mut x);
        self.finish_step(&x)
    }

    /// Error `u^n − u(·, t_n)` on the full grid.
    pub fn error_now(&self) -> Option<GridFunction> {
        let exact = self.problem.exact.as_ref()?;
        let t = self.n as f64 * self.tau;
        let u = self.current();
        Some(GridFunction {
            values: (0..=self.grid.m)
                .map(|i| u.values[i] - exact(self.grid.x(i), t))
                .collect(),
        })
    }
}

/// Run `first_step` and `N − 1` implicit steps.
pub fn run_solver(problem: &ProblemSpec, disc: &Discretization) -> Result<RunOutput> {
    let start = Instant::now();
    let engine = disc.engine(&problem.orders, problem.t_final)?;
    run_with_engine(problem, disc, engine, start)
}

/// [`run_solver`] with a prebuilt engine; `start` anchors the wall clock.
pub fn run_with_engine(
    problem: &ProblemSpec,
    disc: &Discretization,
    engine: CoefficientEngine,
    start: Instant,
) -> Result<RunOutput> {
    let n_exp_total = engine.n_exp_total();
    let mut solver = Solver::new(problem, disc, engine)?;
    let track = problem.exact.is_some();
    let mut summary = ErrorSummary::default();
    let mut trajectory = disc.keep_trajectory.then(Vec::new);
    let mut record = |solver: &Solver, summary: &mut ErrorSummary| {
        if let Some(t) = trajectory.as_mut() {
            t.push(solver.current());
        }
        if let Some(e) = solver.error_now() {
            let nt = norms(&solver.grid, &e);
            summary.absorb(nt);
            if solver.n == 1 {
                summary.first = nt;
            }
            summary.last = nt;
        }
    };
    record(&solver, &mut summary);
    solver.first_step()?;
    record(&solver, &mut summary);
    for _ in 1..disc.n {
        solver.step_n()?;
        record(&solver, &mut summary);
    }
    let counters = Counters {
        work: solver.work,
        stored_reals: solver.peak_reals,
        n_exp_total,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(RunOutput {
        backend: disc.backend,
        m: disc.m,
        n: disc.n,
        tau: solver.tau,
        h: solver.grid.h,
        sigma: solver.sigma,
        final_u: solver.current(),
        errors: track.then_some(summary),
        counters,
        violations: solver.violations,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{custom_problem, manufactured_problem, Case, CustomExpressions, ForcingVariant};

    #[test]
    fn eps_rule_parsing() {
        assert_eq!("table1".parse::<EpsRule>().unwrap(), EpsRule::Table1);
        assert_eq!("tau4".parse::<EpsRule>().unwrap(), EpsRule::Tau4);
        assert_eq!("fixed:1e-9".parse::<EpsRule>().unwrap(), EpsRule::Fixed(1e-9));
        assert!("fixed:x".parse::<EpsRule>().is_err());
        assert!("bogus".parse::<EpsRule>().is_err());
        let o = MultiTermOrders::single(1.5).unwrap();
        let e = EpsRule::Table1.eps(&o, 0.25);
        assert!((e[0] - 0.25f64.powf(2.5) * 1e-3).abs() < 1e-18);
    }

    #[test]
    fn w_of_constant_levels() {
        let c = vec![2.5; 3];
        for w in build_w(0.8, &c, &c, &c) {
            assert!((w - 2.5).abs() < 1e-15);
        }
        for w in build_w_first(0.8, 0.1, &c, &c, &[0.0; 3]) {
            assert!((w - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn w_hand_expansion() {
        // σ = 3/4, u^k = k: (3/4)(3n/4 + (n−1)/4) + (1/4)(3(n−1)/4 + (n−2)/4)
        let n = 5.0;
        let w = build_w(0.75, &[n], &[n - 1.0], &[n - 2.0])[0];
        let hand = 0.75 * (0.75 * n + 0.25 * (n - 1.0)) + 0.25 * (0.75 * (n - 1.0) + 0.25 * (n - 2.0));
        assert!((w - hand).abs() < 1e-15);
        assert!((w - (n - 0.5)).abs() < 1e-14);
    }

    fn zero_problem(f: &str, p: &str) -> ProblemSpec {
        let o = MultiTermOrders::new(vec![1.7, 1.3], vec![1.0, 0.5]).unwrap();
        custom_problem(
            &o,
            &CustomExpressions {
                f: f.into(),
                p: p.into(),
                ..Default::default()
            },
            (0.0, 1.0),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_problem_stays_zero() {
        let prob = zero_problem("0", "0");
        for backend in [Backend::Fast, Backend::Direct] {
            let out = run_solver(&prob, &Discretization::new(16, 12, backend)).unwrap();
            assert!(out.final_u.values.iter().all(|&v| v == 0.0));
            assert!(out.errors.is_none());
        }
    }

    #[test]
    fn constant_forcing_first_step() {
        let prob = zero_problem("sqrt(u^2+5)", "0");
        let disc = Discretization::new(8, 1, Backend::Direct);
        let out = run_solver(&prob, &disc).unwrap();
        let engine = disc.engine(&prob.orders, 1.0).unwrap();
        let s = engine.sigma();
        let g0 = engine.step_coefficients(0).unwrap().g0;
        let expected = 1.0 * 5f64.sqrt() / ((2.0 - 2.0 * s) * g0);
        let u = &out.final_u.values;
        assert_eq!(u[0], 0.0);
        assert_eq!(u[8], 0.0);
        for &v in &u[1..8] {
            assert!((v - expected).abs() < 1e-14 * expected);
        }
    }

    #[test]
    fn table2_first_entry() {
        let o = MultiTermOrders::new(vec![1.9, 1.5, 1.2], vec![3.0, 2.0, 1.0]).unwrap();
        let prob = manufactured_problem(&o, Case::Cubic, ForcingVariant::CaputoCorrected);
        let out = run_solver(&prob, &Discretization::new(1000, 20, Backend::Direct)).unwrap();
        let e = out.errors.unwrap().max.l2;
        assert!((e - 2.7876e-3).abs() < 5e-7, "{e:e}");
        assert!(out.violations.is_empty());
    }

    #[test]
    fn backends_agree() {
        let o = MultiTermOrders::new(vec![1.6, 1.5, 1.2], vec![1.0, 2.0, 3.0]).unwrap();
        let prob = manufactured_problem(&o, Case::Sine, ForcingVariant::CaputoCorrected);
        let mut disc = Discretization::new(64, 40, Backend::Direct);
        disc.eps_rule = EpsRule::Fixed(1e-12);
        let d = run_solver(&prob, &disc).unwrap();
        disc.backend = Backend::Fast;
        let f = run_solver(&prob, &disc).unwrap();
        let diff = (d.e1().unwrap() - f.e1().unwrap()).abs();
        assert!(diff < 1e-9, "{diff:e}");
    }

    #[test]
    fn step_protocol_is_enforced() {
        let prob = zero_problem("0", "1");
        let disc = Discretization::new(8, 4, Backend::Fast);
        let engine = disc.engine(&prob.orders, 1.0).unwrap();
        let mut s = Solver::new(&prob, &disc, engine).unwrap();
        assert!(s.step_n().is_err());
        s.first_step().unwrap();
        assert!(s.first_step().is_err());
        s.step_system().unwrap();
        assert!(s.step_system().is_err());
        assert!(s.finish_step(&[0.0; 3]).is_err());
    }
}
