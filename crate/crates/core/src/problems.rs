//! Problem definitions for
//!
//! ```text
//! Σ_r λ_r ᶜD_t^{α_r} u = u_xx + f(u) + p(x, t),   u(a,t) = u(b,t) = 0,
//! u(x,0) = φ(x),  u_t(x,0) = ψ(x).
//! ```
//!
//! `ProblemSpec::f` is the reaction in this form. The manufactured cases
//! use the reaction `−f_case(u)` with the forcing built from `+f_case`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::expr::Expr;
use crate::sigma::MultiTermOrders;
use crate::special::gamma;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Immutable problem data; clones share the callables.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub x_left: f64,
    pub x_right: f64,
    pub t_final: f64,
    pub orders: MultiTermOrders,
    pub f: ScalarFn,
    pub p: SpaceTimeFn,
    pub phi: ScalarFn,
    pub psi: ScalarFn,
    pub exact: Option<SpaceTimeFn>,
    pub phi_xx: Option<ScalarFn>,
    pub psi_xx: Option<ScalarFn>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &(self.x_left, self.x_right))
            .field("t_final", &self.t_final)
            .field("orders", &self.orders)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

/// The three manufactured nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    #[serde(rename = "case1")]
    Cubic,
    #[serde(rename = "case2")]
    Sine,
    #[serde(rename = "case3")]
    Root,
}

impl Case {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Case::Cubic),
            2 => Some(Case::Sine),
            3 => Some(Case::Root),
            _ => None,
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Case::Cubic => 1,
            Case::Sine => 2,
            Case::Root => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Case::Cubic => "case1",
            Case::Sine => "case2",
            Case::Root => "case3",
        }
    }
}

/// `2u³`, `sin u`, `√(u²+5)`.
pub fn nonlinearity(case: Case, u: f64) -> f64 {
    match case {
        Case::Cubic => 2.0 * u * u * u,
        Case::Sine => u.sin(),
        Case::Root => (u * u + 5.0).sqrt(),
    }
}

/// Gamma factor in the time-derivative part of the manufactured forcing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingVariant {
    /// `24 t^{4−α}/Γ(5−α)`, the Caputo derivative of `t⁴`.
    #[default]
    CaputoCorrected,
    /// `24 t^{4−α}/Γ(4−α)`.
    AsPrinted,
}

/// `ᶜD_t^α t⁴ = 24 t^{4−α}/Γ(5−α)`.
pub fn caputo_t4(alpha: f64, t: f64) -> f64 {
    24.0 * t.powf(4.0 - alpha) / gamma(5.0 - alpha)
}

/// `[Σ 24λ_r t^{4−α_r}/Γ(·) + π²t⁴] sin(πx) + f_case(sin(πx) t⁴)`.
pub fn manufactured_forcing(x: f64, t: f64, orders: &MultiTermOrders, case: Case, variant: ForcingVariant) -> f64 {
    let shift = match variant {
        ForcingVariant::CaputoCorrected => 5.0,
        ForcingVariant::AsPrinted => 4.0,
    };
    let pi = std::f64::consts::PI;
    let time: f64 = orders
        .alphas()
        .iter()
        .zip(orders.lambdas())
        .map(|(&a, &l)| 24.0 * l * t.powf(4.0 - a) / gamma(shift - a))
        .sum();
    let s = (pi * x).sin();
    (time + pi * pi * t.powi(4)) * s + nonlinearity(case, s * t.powi(4))
}

/// Problem with exact solution `sin(πx)t⁴` on `(0,1) × (0,1]`.
pub fn manufactured_problem(orders: &MultiTermOrders, case: Case, variant: ForcingVariant) -> ProblemSpec {
    let pi = std::f64::consts::PI;
    let o = orders.clone();
    ProblemSpec {
        name: case.label().to_string(),
        x_left: 0.0,
        x_right: 1.0,
        t_final: 1.0,
        orders: orders.clone(),
        f: Arc::new(move |u| -nonlinearity(case, u)),
        p: Arc::new(move |x, t| manufactured_forcing(x, t, &o, case, variant)),
        phi: Arc::new(|_| 0.0),
        psi: Arc::new(|_| 0.0),
        exact: Some(Arc::new(move |x, t| (pi * x).sin() * t.powi(4))),
        phi_xx: Some(Arc::new(|_| 0.0)),
        psi_xx: Some(Arc::new(|_| 0.0)),
    }
}

/// Expression sources for a user-defined problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomExpressions {
    /// reaction `f(u)`
    pub f: String,
    /// forcing `p(x, t)`
    pub p: String,
    /// `φ(x)`
    #[serde(default = "zero_expr")]
    pub phi: String,
    /// `ψ(x)`
    #[serde(default = "zero_expr")]
    pub psi: String,
    #[serde(default)]
    pub exact: Option<String>,
    #[serde(default)]
    pub phi_xx: Option<String>,
    #[serde(default)]
    pub psi_xx: Option<String>,
}

fn zero_expr() -> String {
    "0".into()
}

impl Default for CustomExpressions {
    fn default() -> Self {
        Self {
            f: zero_expr(),
            p: zero_expr(),
            phi: zero_expr(),
            psi: zero_expr(),
            exact: None,
            phi_xx: None,
            psi_xx: None,
        }
    }
}

fn parse_in(field: &'static str, src: &str, allowed: &[&str]) -> Result<Expr> {
    let e = Expr::parse(src).map_err(|err| invalid(field, err.to_string()))?;
    for v in ["x", "t", "u"] {
        if e.uses(v) && !allowed.contains(&v) {
            return Err(invalid(field, format!("'{src}' may not use variable {v}")));
        }
    }
    Ok(e)
}

/// Problem from expression strings.
pub fn custom_problem(
    orders: &MultiTermOrders,
    exprs: &CustomExpressions,
    domain: (f64, f64),
    t_final: f64,
) -> Result<ProblemSpec> {
    if !(domain.1 > domain.0) {
        return Err(invalid("domain", format!("need x_left < x_right, got {domain:?}")));
    }
    if !(t_final > 0.0) {
        return Err(invalid("t_final", format!("{t_final} must be positive")));
    }
    let f = parse_in("problem.f", &exprs.f, &["u"])?;
    let p = parse_in("problem.p", &exprs.p, &["x", "t"])?;
    let phi = parse_in("problem.phi", &exprs.phi, &["x"])?;
    let psi = parse_in("problem.psi", &exprs.psi, &["x"])?;
    let exact = exprs
        .exact
        .as_deref()
        .map(|s| parse_in("problem.exact", s, &["x", "t"]))
        .transpose()?;
    let phi_xx = exprs
        .phi_xx
        .as_deref()
        .map(|s| parse_in("problem.phi_xx", s, &["x"]))
        .transpose()?;
    let psi_xx = exprs
        .psi_xx
        .as_deref()
        .map(|s| parse_in("problem.psi_xx", s, &["x"]))
        .transpose()?;
    let space = |e: Expr| -> ScalarFn { Arc::new(move |x| e.eval(x, 0.0, 0.0)) };
    let space_time = |e: Expr| -> SpaceTimeFn { Arc::new(move |x, t| e.eval(x, t, 0.0)) };
    Ok(ProblemSpec {
        name: "custom".into(),
        x_left: domain.0,
        x_right: domain.1,
        t_final,
        orders: orders.clone(),
        f: Arc::new(move |u| f.eval(0.0, 0.0, u)),
        p: space_time(p),
        phi: space(phi),
        psi: space(psi),
        exact: exact.map(space_time),
        phi_xx: phi_xx.map(space),
        psi_xx: psi_xx.map(space),
    })
}

/// L1 approximation of `ᶜD^α u(t)` for `α ∈ (1,2)` from the exact
/// derivative `u'`, on `n` uniform steps.
pub fn l1_caputo(alpha: f64, du: impl Fn(f64) -> f64, t: f64, n: usize) -> f64 {
    let beta = alpha - 1.0;
    let tau = t / n as f64;
    let q = 1.0 - beta;
    let v: Vec<f64> = (0..=n).map(|k| du(k as f64 * tau)).collect();
    let mut acc = 0.0;
    for k in 0..n {
        let j = (n - k - 1) as f64;
        let a = (j + 1.0).powf(q) - j.powf(q);
        acc += a * (v[k + 1] - v[k]);
    }
    acc * tau.powf(-beta) / gamma(2.0 - beta)
}

/// Residual of the continuous equation for the manufactured solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub variant: ForcingVariant,
    /// max over the sample points, closed-form Caputo derivative
    pub max_residual: f64,
    /// max gap between the closed form and the L1 cross-check
    pub max_l1_gap: f64,
}

/// Residual `Σλ ᶜD^α u − u_xx − f(u) − p` of `u = sin(πx)t⁴` at
/// `(x,t) ∈ {0.3, 0.7} × {0.25, 0.75}`.
pub fn manufactured_residual(
    orders: &MultiTermOrders,
    case: Case,
    variant: ForcingVariant,
    l1_steps: usize,
) -> ResidualReport {
    let prob = manufactured_problem(orders, case, variant);
    let pi = std::f64::consts::PI;
    let mut max_residual: f64 = 0.0;
    let mut max_l1_gap: f64 = 0.0;
    for &x in &[0.3f64, 0.7] {
        for &t in &[0.25f64, 0.75] {
            let s = (pi * x).sin();
            let u = s * t.powi(4);
            let mut lhs = 0.0;
            for (&a, &l) in orders.alphas().iter().zip(orders.lambdas()) {
                let closed = s * caputo_t4(a, t);
                let l1 = s * l1_caputo(a, |r| 4.0 * r * r * r, t, l1_steps);
                max_l1_gap = max_l1_gap.max((closed - l1).abs());
                lhs += l * closed;
            }
            let u_xx = -pi * pi * u;
            let r = lhs - u_xx - (prob.f)(u) - (prob.p)(x, t);
            max_residual = max_residual.max(r.abs());
        }
    }
    ResidualReport {
        variant,
        max_residual,
        max_l1_gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn nonlinearity_values() {
        assert!((nonlinearity(Case::Root, 0.0) - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(nonlinearity(Case::Cubic, 0.5), 0.25);
        assert_eq!(nonlinearity(Case::Sine, PI / 2.0), 1.0);
    }

    #[test]
    fn forcing_at_t0() {
        let o = MultiTermOrders::new(vec![1.9, 1.5, 1.2], vec![3.0, 2.0, 1.0]).unwrap();
        for v in [ForcingVariant::CaputoCorrected, ForcingVariant::AsPrinted] {
            assert_eq!(manufactured_forcing(0.37, 0.0, &o, Case::Cubic, v), 0.0);
            assert!((manufactured_forcing(0.5, 0.0, &o, Case::Root, v) - 5f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn forcing_hand_value() {
        // Γ(2.5) = 1.329340388179137, Γ(3.5) = 3.323350970447843
        let o = MultiTermOrders::single(1.5).unwrap();
        let printed = manufactured_forcing(0.5, 1.0, &o, Case::Sine, ForcingVariant::AsPrinted);
        assert!((printed - (24.0 / 1.329340388179137 + PI * PI + 1f64.sin())).abs() < 1e-12);
        let corrected = manufactured_forcing(0.5, 1.0, &o, Case::Sine, ForcingVariant::CaputoCorrected);
        assert!((corrected - (24.0 / 3.323350970447843 + PI * PI + 1f64.sin())).abs() < 1e-12);
    }

    #[test]
    fn manufactured_data() {
        let o = MultiTermOrders::single(1.5).unwrap();
        let p = manufactured_problem(&o, Case::Cubic, ForcingVariant::default());
        assert!(((p.exact.as_ref().unwrap())(0.5, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!((p.phi)(0.3), 0.0);
        assert_eq!((p.psi)(0.3), 0.0);
        assert_eq!((p.f)(0.5), -0.25);
    }

    #[test]
    fn caputo_t4_matches_quadrature() {
        // ᶜD^α t⁴ = (1/Γ(2−α)) ∫₀ᵗ (t−s)^{1−α} 12 s² ds
        for &alpha in &[1.2, 1.5, 1.9] {
            let t: f64 = 0.8;
            let rule = crate::special::UnitRule::jacobi_left(40, 1.0 - alpha);
            // s = t − t·r, (t−s)^{1−α} = t^{1−α} r^{1−α}
            let integral: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&r, &w)| w * 12.0 * (t - t * r).powi(2))
                .sum::<f64>()
                * t.powf(2.0 - alpha);
            let reference = integral / gamma(2.0 - alpha);
            assert!((caputo_t4(alpha, t) - reference).abs() < 1e-12 * reference);
        }
    }

    #[test]
    fn residual_identifies_variant() {
        let o = MultiTermOrders::new(vec![1.6, 1.5, 1.2], vec![1.0, 2.0, 3.0]).unwrap();
        let good = manufactured_residual(&o, Case::Sine, ForcingVariant::CaputoCorrected, 100_000);
        let bad = manufactured_residual(&o, Case::Sine, ForcingVariant::AsPrinted, 100_000);
        assert!(good.max_residual <= 1e-6, "{good:?}");
        assert!(bad.max_residual > 1e-1, "{bad:?}");
        assert!(good.max_l1_gap <= 1e-6, "{good:?}");
    }

    #[test]
    fn custom_problem_from_expressions() {
        let o = MultiTermOrders::single(1.5).unwrap();
        let exprs = CustomExpressions {
            f: "-2*u^3".into(),
            p: "sin(pi*x)*t^2".into(),
            exact: Some("sin(pi*x)*t^4".into()),
            ..Default::default()
        };
        let p = custom_problem(&o, &exprs, (0.0, 1.0), 1.0).unwrap();
        assert_eq!((p.f)(0.5), -0.25);
        assert!(((p.p)(0.5, 2.0) - 4.0).abs() < 1e-14);
        assert_eq!((p.phi)(0.2), 0.0);
        assert!(p.phi_xx.is_none());

        let bad = CustomExpressions {
            f: "u + x".into(),
            p: "0".into(),
            ..Default::default()
        };
        assert!(custom_problem(&o, &bad, (0.0, 1.0), 1.0).is_err());
    }
}
