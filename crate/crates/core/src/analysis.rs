//! Discrete norms, convergence rates and report formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid1D, GridFunction};
use crate::scheme::{Backend, ErrorSummary};

/// `‖v‖`, `|v|₁` and `‖v‖_{H¹} = √(‖v‖² + |v|₁²)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormTriple {
    pub l2: f64,
    pub semi_h1: f64,
    pub h1: f64,
}

/// `‖v‖ = √(h Σ_{i=1}^{M−1} v_i²)`, `|v|₁ = √(h Σ_{i=1}^{M} ((v_i − v_{i−1})/h)²)`.
pub fn norms(grid: &Grid1D, v: &GridFunction) -> NormTriple {
    let h = grid.h;
    let vals = &v.values;
    let l2 = (h * vals[1..vals.len() - 1].iter().map(|x| x * x).sum::<f64>()).sqrt();
    let semi = (vals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / h).sqrt();
    NormTriple {
        l2,
        semi_h1: semi,
        h1: l2.hypot(semi),
    }
}

/// Norm used for the reported `E1` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNorm {
    #[default]
    H1,
    L2,
}

impl ErrorNorm {
    pub fn pick(self, t: &NormTriple) -> f64 {
        match self {
            ErrorNorm::H1 => t.h1,
            ErrorNorm::L2 => t.l2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorNorm::H1 => "h1",
            ErrorNorm::L2 => "l2",
        }
    }
}

/// `max_n ‖e^n‖` in the chosen norm.
pub fn e1_error(errors: Option<&ErrorSummary>, norm: ErrorNorm) -> Result<f64> {
    errors.map(|e| norm.pick(&e.max)).ok_or(Error::NoExactSolution)
}

/// `rate_k = log₂(E_{k−1}/E_k)`.
pub fn rate_ladder(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.len() < 2 {
        return Err(invalid("errors", "need at least two ladder entries"));
    }
    if let Some(bad) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(invalid("errors", format!("entries must be positive, got {bad}")));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("fit", "need at least two matching points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(invalid("fit", "log-log fit needs positive data"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("fit", "abscissae are all equal"));
    }
    Ok(sxy / sxx)
}

/// Scientific notation with 5 significant digits and a signed two-digit
/// exponent: `2.7876e-03`.
pub fn format_sci(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.4e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

/// Round to the 5 significant digits that [`format_sci`] prints.
pub fn round_sig5(v: f64) -> f64 {
    format_sci(v).parse().unwrap_or(v)
}

/// Refinement direction of a ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Temporal,
    Spatial,
    Single,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Temporal => "temporal",
            Direction::Spatial => "spatial",
            Direction::Single => "single",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "temporal" => Ok(Direction::Temporal),
            "spatial" => Ok(Direction::Spatial),
            "single" => Ok(Direction::Single),
            other => Err(Error::Config(format!("unknown direction '{other}'"))),
        }
    }
}

/// One ladder point.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderEntry {
    pub tau: f64,
    pub h: f64,
    pub e1: f64,
    /// `None` for the first entry
    pub rate: Option<f64>,
    pub n_exp_total: usize,
    pub stored_reals: usize,
    pub wall_ms: f64,
}

/// A refinement ladder for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub direction: Direction,
    pub case: String,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub eps_rule: String,
    pub backend: Backend,
    pub norm: ErrorNorm,
    pub entries: Vec<LadderEntry>,
}

impl ConvergenceReport {
    /// Fill in rates from the `E1` values rounded to the printed 5 digits,
    /// so that rates recomputed from the emitted table agree exactly.
    pub fn compute_rates(&mut self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        self.entries[0].rate = None;
        if self.entries.len() < 2 {
            return Ok(());
        }
        let e: Vec<f64> = self.entries.iter().map(|x| round_sig5(x.e1)).collect();
        let rates = rate_ladder(&e)?;
        for (entry, r) in self.entries[1..].iter_mut().zip(rates) {
            entry.rate = Some(r);
        }
        Ok(())
    }

    pub fn rates(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.rate).collect()
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        self.entries
            .iter()
            .map(|e| ResultRow {
                direction: self.direction,
                case: self.case.clone(),
                alphas: self.alphas.clone(),
                lambdas: self.lambdas.clone(),
                tau: e.tau,
                h: e.h,
                e1: e.e1,
                rate: e.rate,
                backend: self.backend,
                n_exp_total: e.n_exp_total,
                stored_reals: e.stored_reals,
                wall_ms: e.wall_ms,
            })
            .collect()
    }
}

/// One CSV record.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub direction: Direction,
    pub case: String,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub tau: f64,
    pub h: f64,
    pub e1: f64,
    pub rate: Option<f64>,
    pub backend: Backend,
    pub n_exp_total: usize,
    pub stored_reals: usize,
    pub wall_ms: f64,
}

pub const CSV_HEADER: [&str; 12] = [
    "direction",
    "case",
    "alphas",
    "lambdas",
    "tau",
    "h",
    "E1",
    "rate",
    "backend",
    "n_exp_total",
    "stored_reals",
    "wall_ms",
];

fn join_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(';')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{t}' in list '{s}'")))
        })
        .collect()
}

/// Write rows under the fixed header. With `with_timing = false` the
/// `wall_ms` column is left empty so output is reproducible.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W, with_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(to_io)?;
    for r in rows {
        w.write_record([
            r.direction.label().to_string(),
            r.case.clone(),
            join_list(&r.alphas),
            join_list(&r.lambdas),
            format_sci(r.tau),
            format_sci(r.h),
            format_sci(r.e1),
            r.rate.map(format_sci).unwrap_or_default(),
            r.backend.label().to_string(),
            r.n_exp_total.to_string(),
            r.stored_reals.to_string(),
            if with_timing {
                format_sci(r.wall_ms)
            } else {
                String::new()
            },
        ])
        .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a results CSV written by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let bad = |e: csv::Error| Error::Config(format!("results csv: {e}"));
    let header = rdr.headers().map_err(bad)?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Config(format!("unexpected results header: {header:?}")));
    }
    let num = |s: &str, col: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Config(format!("bad value '{s}' in column {col}")))
    };
    let int = |s: &str, col: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::Config(format!("bad value '{s}' in column {col}")))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(bad)?;
        let backend = match &rec[8] {
            "fast" => Backend::Fast,
            "direct" => Backend::Direct,
            other => return Err(Error::Config(format!("unknown backend '{other}'"))),
        };
        rows.push(ResultRow {
            direction: Direction::parse(&rec[0])?,
            case: rec[1].to_string(),
            alphas: parse_list(&rec[2])?,
            lambdas: parse_list(&rec[3])?,
            tau: num(&rec[4], "tau")?,
            h: num(&rec[5], "h")?,
            e1: num(&rec[6], "E1")?,
            rate: if rec[7].is_empty() {
                None
            } else {
                Some(num(&rec[7], "rate")?)
            },
            backend,
            n_exp_total: int(&rec[9], "n_exp_total")?,
            stored_reals: int(&rec[10], "stored_reals")?,
            wall_ms: if rec[11].is_empty() {
                f64::NAN
            } else {
                num(&rec[11], "wall_ms")?
            },
        });
    }
    Ok(rows)
}

fn fraction_label(v: f64) -> String {
    let inv = 1.0 / v;
    if (inv - inv.round()).abs() < 1e-9 * inv {
        format!("1/{}", inv.round() as u64)
    } else {
        format_sci(v)
    }
}

fn tuple_label(v: &[f64]) -> String {
    format!("({})", v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(","))
}

/// Plain-text table in the layout of the published convergence tables:
/// one block per (case, orders), one `E1`/rate column pair per weight set,
/// `∗` for the first rate of each ladder.
pub fn text_table(reports: &[ConvergenceReport]) -> String {
    let mut out = String::new();
    // group by (backend, direction, case, alphas) keeping first-seen order
    let mut order: Vec<(Backend, Direction, String, String)> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&ConvergenceReport>> = BTreeMap::new();
    for r in reports {
        let key = (r.backend, r.direction, r.case.clone(), tuple_label(&r.alphas));
        let idx = order.iter().position(|k| *k == key).unwrap_or_else(|| {
            order.push(key.clone());
            order.len() - 1
        });
        groups.entry(idx).or_default().push(r);
    }
    let mut last_header: Option<(Backend, Direction, Vec<String>)> = None;
    for (idx, (backend, direction, case, alphas)) in order.iter().enumerate() {
        let group = &groups[&idx];
        let lambda_labels: Vec<String> = group.iter().map(|r| tuple_label(&r.lambdas)).collect();
        let step = if *direction == Direction::Spatial { "h" } else { "tau" };
        let rate = if *direction == Direction::Spatial {
            "Rate2"
        } else {
            "Rate1"
        };
        let header = (*backend, *direction, lambda_labels.clone());
        if last_header.as_ref() != Some(&header) {
            if last_header.is_some() {
                out.push('\n');
            }
            let _ = writeln!(
                out,
                "{} {} convergence, E1 = max_n ||e^n||_{}",
                backend.scheme_name(),
                direction.label(),
                group[0].norm.label()
            );
            let mut line = format!("{:<8}{:<16}{:<8}", "", "alphas", step);
            for l in &lambda_labels {
                let _ = write!(line, "{:<24}", format!("lambda={l}"));
            }
            let _ = writeln!(out, "{}", line.trim_end());
            let mut line = format!("{:<8}{:<16}{:<8}", "", "", "");
            for _ in &lambda_labels {
                let _ = write!(line, "{:<13}{:<11}", "E1", rate);
            }
            let _ = writeln!(out, "{}", line.trim_end());
            last_header = Some(header);
        }
        let rows = group.iter().map(|r| r.entries.len()).max().unwrap_or(0);
        for k in 0..rows {
            let first = group.iter().find_map(|r| r.entries.get(k));
            let step_val = first
                .map(|e| if *direction == Direction::Spatial { e.h } else { e.tau })
                .unwrap_or(f64::NAN);
            let (c, a) = if k == 0 {
                (case.as_str(), alphas.as_str())
            } else {
                ("", "")
            };
            let mut line = format!("{:<8}{:<16}{:<8}", c, a, fraction_label(step_val));
            for r in group {
                match r.entries.get(k) {
                    Some(e) => {
                        let rate = e.rate.map(|v| format!("{v:.4}")).unwrap_or_else(|| "∗".into());
                        let _ = write!(line, "{:<13}{:<11}", format_sci(e.e1), rate);
                    }
                    None => {
                        let _ = write!(line, "{:<24}", "");
                    }
                }
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
    }
    out
}

/// One point of a cost comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub backend: Backend,
    pub wall_ms: f64,
    pub stored_reals: usize,
    pub work: u64,
    pub n_exp_total: usize,
}

/// Cost growth of both backends over an `N` ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// fitted exponent of total work against `N`
    pub work_exponent: BTreeMap<String, f64>,
    /// fitted exponent of peak stored reals against `N`
    pub memory_exponent: BTreeMap<String, f64>,
    /// direct wall time over fast wall time, per `N`
    pub speedup: Vec<(usize, f64)>,
    pub fast_memory_constant: bool,
}

/// Fit cost exponents; needs at least three distinct `N`.
pub fn scaling_report(rows: Vec<ScalingRow>) -> Result<ScalingReport> {
    let mut work_exponent = BTreeMap::new();
    let mut memory_exponent = BTreeMap::new();
    for backend in [Backend::Fast, Backend::Direct] {
        let pts: Vec<&ScalingRow> = rows.iter().filter(|r| r.backend == backend).collect();
        if pts.is_empty() {
            continue;
        }
        if pts.len() < 3 {
            return Err(invalid(
                "scaling",
                format!("{} backend needs at least 3 ladder points", backend.label()),
            ));
        }
        let ns: Vec<f64> = pts.iter().map(|r| r.n as f64).collect();
        let work: Vec<f64> = pts.iter().map(|r| r.work as f64).collect();
        let mem: Vec<f64> = pts.iter().map(|r| r.stored_reals as f64).collect();
        work_exponent.insert(backend.label().to_string(), fit_exponent(&ns, &work)?);
        memory_exponent.insert(backend.label().to_string(), fit_exponent(&ns, &mem)?);
    }
    let mut speedup = Vec::new();
    for f in rows.iter().filter(|r| r.backend == Backend::Fast) {
        if let Some(d) = rows.iter().find(|r| r.backend == Backend::Direct && r.n == f.n) {
            speedup.push((f.n, d.wall_ms / f.wall_ms));
        }
    }
    let fast: Vec<usize> = rows
        .iter()
        .filter(|r| r.backend == Backend::Fast)
        .map(|r| r.stored_reals)
        .collect();
    let fast_memory_constant = fast.windows(2).all(|w| w[0] == w[1]);
    Ok(ScalingReport {
        rows,
        work_exponent,
        memory_exponent,
        speedup,
        fast_memory_constant,
    })
}

impl ScalingReport {
    /// Aligned text table in the layout of the CPU-time comparison.
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8}{:<9}{:>12}{:>14}{:>16}{:>8}",
            "N", "backend", "wall_s", "stored_reals", "work", "n_exp"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8}{:<9}{:>12.3}{:>14}{:>16}{:>8}",
                r.n,
                r.backend.scheme_name(),
                r.wall_ms / 1e3,
                r.stored_reals,
                r.work,
                r.n_exp_total
            );
        }
        for (k, v) in &self.work_exponent {
            let _ = writeln!(out, "work exponent ({k}): {v:.3}");
        }
        for (k, v) in &self.memory_exponent {
            let _ = writeln!(out, "memory exponent ({k}): {v:.3}");
        }
        for (n, s) in &self.speedup {
            let _ = writeln!(out, "speedup at N={n}: {s:.2}x");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_has_zero_norms() {
        let g = Grid1D::new(0.0, 1.0, 8).unwrap();
        assert_eq!(norms(&g, &GridFunction::zeros(&g)), NormTriple::default());
    }

    #[test]
    fn sine_l2_hand_value() {
        let g = Grid1D::new(0.0, 1.0, 4).unwrap();
        let v = GridFunction::from_fn(&g, |x| (PI * x).sin());
        let n = norms(&g, &v);
        assert!((n.l2 - 0.5f64.sqrt()).abs() < 1e-15);
        // |v|₁² = 4·Σ (Δv)²
        let d = [
            0.5f64.sqrt(),
            1.0 - 0.5f64.sqrt(),
            0.5f64.sqrt() - 1.0,
            -(0.5f64.sqrt()),
        ];
        let semi = (4.0 * d.iter().map(|x| x * x).sum::<f64>()).sqrt();
        assert!((n.semi_h1 - semi).abs() < 1e-14);
    }

    #[test]
    fn rates() {
        assert_eq!(rate_ladder(&[4e-4, 1e-4]).unwrap(), vec![2.0]);
        let r = rate_ladder(&[2.7876e-03, 6.8270e-04]).unwrap()[0];
        assert!((r - 2.0297).abs() < 5e-5);
        assert_eq!(rate_ladder(&[1e-3, 1e-3]).unwrap(), vec![0.0]);
        assert!(rate_ladder(&[1e-3, 0.0]).is_err());
        assert!(rate_ladder(&[1e-3]).is_err());
    }

    #[test]
    fn sci_format() {
        assert_eq!(format_sci(2.7876e-3), "2.7876e-03");
        assert_eq!(format_sci(6.82705e-4), "6.8271e-04");
        assert_eq!(format_sci(2.0297), "2.0297e+00");
        assert_eq!(format_sci(1234567.0), "1.2346e+06");
        assert_eq!(format_sci(0.0), "0.0000e+00");
        assert_eq!(format_sci(-1.5e-120), "-1.5000e-120");
    }

    #[test]
    fn exponent_fit() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        assert!((fit_exponent(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
    }

    fn sample_report() -> ConvergenceReport {
        let mut r = ConvergenceReport {
            direction: Direction::Temporal,
            case: "case1".into(),
            alphas: vec![1.9, 1.5, 1.2],
            lambdas: vec![3.0, 2.0, 1.0],
            eps_rule: "table1".into(),
            backend: Backend::Direct,
            norm: ErrorNorm::L2,
            entries: [2.78761e-3, 6.82712e-4, 1.66893e-4]
                .iter()
                .enumerate()
                .map(|(k, &e)| LadderEntry {
                    tau: 1.0 / (20.0 * 2f64.powi(k as i32)),
                    h: 1e-3,
                    e1: e,
                    rate: None,
                    n_exp_total: 0,
                    stored_reals: 100 * (k + 1),
                    wall_ms: 1.5,
                })
                .collect(),
        };
        r.compute_rates().unwrap();
        r
    }

    #[test]
    fn csv_round_trip() {
        let report = sample_report();
        let mut buf = Vec::new();
        write_csv(&report.rows(), &mut buf, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(
            text.starts_with("direction,case,alphas,lambdas,tau,h,E1,rate,backend,n_exp_total,stored_reals,wall_ms\n")
        );
        assert!(text.contains("2.7876e-03"));
        let rows = read_csv(&buf[..]).unwrap();
        let e: Vec<f64> = rows.iter().map(|r| r.e1).collect();
        let again = rate_ladder(&e).unwrap();
        for (row, r) in rows[1..].iter().zip(again) {
            assert_eq!(format_sci(row.rate.unwrap()), format_sci(r));
        }
        assert_eq!(rows[0].alphas, vec![1.9, 1.5, 1.2]);
        assert!(rows[0].rate.is_none());
    }

    #[test]
    fn table_layout() {
        let a = sample_report();
        let mut b = sample_report();
        b.lambdas = vec![1.0, 2.0, 3.0];
        let t = text_table(&[a, b]);
        assert!(t.contains("lambda=(3,2,1)"));
        assert!(t.contains("lambda=(1,2,3)"));
        let first = t.lines().find(|l| l.starts_with("case1")).unwrap();
        assert!(first.contains("(1.9,1.5,1.2)"));
        assert!(first.contains("1/20"));
        assert_eq!(first.matches('∗').count(), 2);
        assert!(t.contains("1/80"));
    }
}
