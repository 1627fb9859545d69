//! Linearized fast solver for nonlinear multi-term time-fractional wave
//! equations
//!
//! ```text
//! Σ_r λ_r ᶜD_t^{α_r} u = u_xx + f(u) + p(x, t),   1 < α_m < … < α_0 < 2,
//! ```
//!
//! on an interval with homogeneous Dirichlet data. Time is discretized by a
//! weighted L2-1σ formula whose history term is evaluated either through a
//! sum-of-exponentials recursion ([`scheme::Backend::Fast`]) or by direct
//! summation ([`scheme::Backend::Direct`]); space by central differences.
//!
//! Module map:
//! - [`soe`]: certified sum-of-exponentials approximations of `t^{−β}`
//! - [`sigma`], [`coefficients`]: the shifted point `σ` and the step weights
//! - [`history`]: fast and direct history operators
//! - [`scheme`], [`grid`], [`tridiag`]: the time stepper
//! - [`problems`], [`expr`]: manufactured and user-defined problems
//! - [`analysis`]: norms, rates, CSV and tables
//! - [`config`], [`runner`]: JSON experiments
//!
//! The `parallel` feature (default) routes data-parallel loops through rayon;
//! without it every [`par::Exec`] request runs sequentially.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coefficients;
pub mod config;
pub mod error;
pub mod expr;
pub mod grid;
pub mod history;
pub mod par;
pub mod problems;
pub mod runner;
pub mod scheme;
pub mod sigma;
pub mod soe;
pub mod special;
pub mod tridiag;

pub use coefficients::CoefficientEngine;
pub use error::{Error, Result};
pub use problems::{manufactured_problem, Case, ForcingVariant, ProblemSpec};
pub use scheme::{run_solver, Backend, Discretization, EpsRule, RunOutput};
pub use sigma::MultiTermOrders;
