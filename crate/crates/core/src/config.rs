//! Experiment configuration (JSON).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::ErrorNorm;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::problems::{Case, CustomExpressions, ForcingVariant};
use crate::scheme::{Backend, EpsRule};
use crate::sigma::MultiTermOrders;

/// Spatial intervals used for the `paper-h-proxy` alias.
pub const H_PROXY: usize = 1000;
/// Spatial intervals used for the `paper-h-proxy-50` alias.
pub const H_PROXY_50: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    TemporalStudy,
    SpatialStudy,
    CompareBackends,
    CoeffCheck,
    SoeCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::TemporalStudy => "temporal-study",
            Command::SpatialStudy => "spatial-study",
            Command::CompareBackends => "compare-backends",
            Command::CoeffCheck => "coeff-check",
            Command::SoeCheck => "soe-check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Command::Solve,
            Command::TemporalStudy,
            Command::SpatialStudy,
            Command::CompareBackends,
            Command::CoeffCheck,
            Command::SoeCheck,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }
}

/// `"case1"`…`"case3"` or `{"custom": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemChoice {
    Case(Case),
    Custom { custom: CustomExpressions },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderTerm {
    pub alpha: f64,
    pub lambda: f64,
}

/// Spatial interval count, literal or alias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MSpec {
    Count(usize),
    Alias(String),
}

impl MSpec {
    pub fn resolve(&self) -> Result<usize> {
        match self {
            MSpec::Count(m) => Ok(*m),
            MSpec::Alias(a) => match a.as_str() {
                "paper-h-proxy" => {
                    log::info!("h = pi/1000 on (0,1) is not a whole grid; using M = {H_PROXY}");
                    Ok(H_PROXY)
                }
                "paper-h-proxy-50" => {
                    log::info!("h = pi/50 on (0,1) is not a whole grid; using M = {H_PROXY_50}");
                    Ok(H_PROXY_50)
                }
                other => Err(Error::Config(format!("grid: unknown alias '{other}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub m: Option<MSpec>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub m_ladder: Option<Vec<MSpec>>,
    #[serde(default)]
    pub n_ladder: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Fast,
    Direct,
    Both,
}

impl BackendChoice {
    pub fn backends(self) -> Vec<Backend> {
        match self {
            BackendChoice::Fast => vec![Backend::Fast],
            BackendChoice::Direct => vec![Backend::Direct],
            BackendChoice::Both => vec![Backend::Fast, Backend::Direct],
        }
    }
}

/// One JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; the command line decides when absent.
    #[serde(default)]
    pub command: Option<Command>,
    pub problem: ProblemChoice,
    pub orders: Vec<OrderTerm>,
    /// Extra weight sets run alongside the weights in `orders`, one table
    /// column pair each.
    #[serde(default)]
    pub lambda_sets: Vec<Vec<f64>>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub eps_rule: EpsRule,
    #[serde(default)]
    pub backend: BackendChoice,
    #[serde(default)]
    pub strict_validation: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub forcing: ForcingVariant,
    #[serde(default)]
    pub error_norm: ErrorNorm,
    #[serde(default)]
    pub exec: Exec,
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Timed repetitions per point in `compare-backends`; the minimum is kept.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
}

fn default_domain() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_t_final() -> f64 {
    1.0
}

fn default_repetitions() -> usize {
    1
}

/// Strict parse with line/column diagnostics, then semantic checks.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn check_doubling(field: &str, ladder: &[usize]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::Config(format!("{field}: ladder is empty")));
    }
    if let Some(w) = ladder.windows(2).find(|w| w[1] != 2 * w[0]) {
        return Err(Error::Config(format!(
            "{field}: ladders must double at each entry, found {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.orders()?;
        for (k, set) in self.lambda_sets.iter().enumerate() {
            if set.len() != self.orders.len() {
                return Err(Error::Config(format!(
                    "lambda_sets[{k}]: has {} weights, orders has {}",
                    set.len(),
                    self.orders.len()
                )));
            }
            if let Some(j) = set.iter().position(|l| !(*l > 0.0)) {
                return Err(Error::Config(format!(
                    "lambda_sets[{k}][{j}]: weights must be positive"
                )));
            }
        }
        if !(self.domain[1] > self.domain[0]) {
            return Err(Error::Config(format!(
                "domain: need x_left < x_right, got {:?}",
                self.domain
            )));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config(format!("t_final: {} must be positive", self.t_final)));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions: must be at least 1".into()));
        }
        if let ProblemChoice::Case(_) = self.problem {
            if self.domain != [0.0, 1.0] || self.t_final != 1.0 {
                return Err(Error::Config(
                    "domain/t_final: manufactured cases are fixed to (0,1) and T = 1".into(),
                ));
            }
        }
        if let Some(m) = &self.grid.m {
            check_m("grid.m", m.resolve()?)?;
        }
        if let Some(n) = self.grid.n {
            if n == 0 {
                return Err(Error::Config("grid.n: need at least one step".into()));
            }
        }
        if let Some(l) = &self.grid.m_ladder {
            let ms = l.iter().map(MSpec::resolve).collect::<Result<Vec<_>>>()?;
            for &m in &ms {
                check_m("grid.m_ladder", m)?;
            }
            check_doubling("grid.m_ladder", &ms)?;
        }
        if let Some(l) = &self.grid.n_ladder {
            if l.contains(&0) {
                return Err(Error::Config("grid.n_ladder: entries must be positive".into()));
            }
            check_doubling("grid.n_ladder", l)?;
        }
        Ok(())
    }

    /// Orders with the weights given in `orders`.
    pub fn orders(&self) -> Result<MultiTermOrders> {
        if self.orders.is_empty() {
            return Err(Error::Config("orders: at least one term is required".into()));
        }
        for (k, w) in self.orders.windows(2).enumerate() {
            if !(w[0].alpha > w[1].alpha) {
                return Err(Error::Config(format!(
                    "orders[{}].alpha: {} must be below orders[{k}].alpha = {} (strictly decreasing)",
                    k + 1,
                    w[1].alpha,
                    w[0].alpha
                )));
            }
        }
        MultiTermOrders::new(
            self.orders.iter().map(|t| t.alpha).collect(),
            self.orders.iter().map(|t| t.lambda).collect(),
        )
        .map_err(|e| Error::Config(format!("orders: {e}")))
    }

    /// All weight sets: the one in `orders` followed by `lambda_sets`.
    pub fn all_orders(&self) -> Result<Vec<MultiTermOrders>> {
        let base = self.orders()?;
        let mut out = vec![base.clone()];
        for set in &self.lambda_sets {
            out.push(
                MultiTermOrders::new(base.alphas().to_vec(), set.clone())
                    .map_err(|e| Error::Config(format!("lambda_sets: {e}")))?,
            );
        }
        Ok(out)
    }

    /// `M` for runs with a single spatial grid.
    pub fn m_or(&self, default: usize) -> Result<usize> {
        self.grid.m.as_ref().map_or(Ok(default), MSpec::resolve)
    }

    pub fn n_or(&self, default: usize) -> usize {
        self.grid.n.unwrap_or(default)
    }

    pub fn n_ladder_or(&self, default: &[usize]) -> Vec<usize> {
        self.grid.n_ladder.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn m_ladder_or(&self, default: &[usize]) -> Result<Vec<usize>> {
        match &self.grid.m_ladder {
            Some(l) => l.iter().map(MSpec::resolve).collect(),
            None => Ok(default.to_vec()),
        }
    }
}

fn check_m(field: &str, m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::Config(format!("{field}: need at least 2 intervals, got {m}")));
    }
    Ok(())
}
