//! History of the fractional operator.
//!
//! [`HistoryState`] keeps one grid function per exponential node and
//! advances it with the recursion
//!
//! ```text
//! V_j ← e^{−s_j τ} V_j + A_j (v̂^{n−σ} − v̂^{n−1−σ}) + B_j (v̂^{n+1−σ} − v̂^{n−σ})
//! ```
//!
//! so the memory term costs `O(Σ N^{(β)})` per grid point and step.
//! [`VhatSequence`] stores every level instead and evaluates the refined
//! **g**-weighted sum directly; it is both the direct backend and the oracle
//! for the recursion.
//!
//! The B-part of each advance depends on the level being solved for, so the
//! solver splits it: [`HistoryState::stage`] applies decay and the A-part and
//! returns the weighted sum, [`HistoryState::complete`] records the B-part
//! once the new level is known. The pending B-part is folded into the next
//! stage.

use crate::coefficients::CoefficientEngine;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Below this many node-point updates per step the recursion stays on the
/// calling thread.
const PARALLEL_MIN_WORK: usize = 1 << 15;
/// Lags per task in the direct history sum.
const DIRECT_CHUNK: usize = 512;

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Dot product with independent partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    lanes.iter().sum::<f64>() + tail
}

/// Compressed history: `V[r][j]` over the interior grid points.
#[derive(Debug, Clone)]
pub struct HistoryState {
    m: usize,
    k: usize,
    sigma: f64,
    cw: Vec<f64>,
    decay: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    /// point-major: `v[i·k + j]`
    v: Vec<f64>,
    pending: Option<Vec<f64>>,
    seeded: bool,
    exec: Exec,
}

impl HistoryState {
    /// Zero state for `m` interior points.
    pub fn new(engine: &CoefficientEngine, m: usize, exec: Exec) -> Result<Self> {
        let nodes = engine.fast_ab()?;
        let k = nodes.len();
        Ok(Self {
            m,
            k,
            sigma: engine.sigma(),
            cw: nodes.cw.clone(),
            decay: nodes.decay.clone(),
            a: nodes.a.clone(),
            b: nodes.b.clone(),
            v: vec![0.0; m * k],
            pending: None,
            seeded: false,
            exec,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.k
    }

    pub fn is_seeded(&self) -> bool {
        self.seeded
    }

    fn exec_for_size(&self) -> Exec {
        if self.m * self.k >= PARALLEL_MIN_WORK {
            self.exec
        } else {
            Exec::Sequential
        }
    }

    /// `Σ_{r,j} λ_r ω̂_j B_j`.
    pub fn b_weight(&self) -> f64 {
        self.cw.iter().zip(&self.b).map(|(c, b)| c * b).sum()
    }

    /// Reals held by the state: node values, pending increment and per-node
    /// scalars.
    pub fn stored_reals(&self) -> usize {
        self.v.len() + self.m + 4 * self.k
    }

    /// `V_j = (1−σ)[A_j(v¹ − v⁰) + B_j(v² − v¹)]`.
    pub fn seed(&mut self, v0: &[f64], v1: &[f64], v2: &[f64]) -> Result<()> {
        check_len(self.m, v2.len())?;
        self.seed_partial(v0, v1)?;
        let dnext: Vec<f64> = v2.iter().zip(v1).map(|(b, a)| (1.0 - self.sigma) * (b - a)).collect();
        self.complete(&dnext)
    }

    /// First half of the seed, `V_j = (1−σ)A_j(v¹ − v⁰)`; returns
    /// `Σ λ ω̂ V`. The B-part is supplied later through [`Self::complete`]
    /// as `v̂^{2−σ} − v¹ = (1−σ)(v² − v¹)`.
    pub fn seed_partial(&mut self, v0: &[f64], v1: &[f64]) -> Result<Vec<f64>> {
        check_len(self.m, v0.len())?;
        check_len(self.m, v1.len())?;
        let k = self.k;
        let s1 = 1.0 - self.sigma;
        let (a, cw) = (&self.a, &self.cw);
        let mut sum = vec![0.0; self.m];
        par::rows_mut(self.exec_for_size(), &mut self.v, k, &mut sum, |i, row, out| {
            let d = s1 * (v1[i] - v0[i]);
            let mut acc = 0.0;
            for j in 0..k {
                let val = a[j] * d;
                row[j] = val;
                acc += cw[j] * val;
            }
            *out = acc;
        });
        self.pending = None;
        self.seeded = true;
        Ok(sum)
    }

    /// Decay plus A-part: `V_j ← e^{−s_jτ}(V_j + B_j·pending) + A_j·dv_prev`.
    /// Returns `Σ λ ω̂ V` after the update.
    pub fn stage(&mut self, dv_prev: &[f64]) -> Result<Vec<f64>> {
        if !self.seeded {
            return Err(Error::HistoryNotSeeded);
        }
        check_len(self.m, dv_prev.len())?;
        let k = self.k;
        let (a, b, cw, decay) = (&self.a, &self.b, &self.cw, &self.decay);
        let pending = self.pending.take();
        let pending = pending.as_deref();
        let mut sum = vec![0.0; self.m];
        let exec = if self.m * self.k >= PARALLEL_MIN_WORK {
            self.exec
        } else {
            Exec::Sequential
        };
        par::rows_mut(exec, &mut self.v, k, &mut sum, |i, row, out| {
            let p = pending.map_or(0.0, |p| p[i]);
            let d = dv_prev[i];
            for (((v, &dj), &bj), &aj) in row.iter_mut().zip(decay).zip(b).zip(a) {
                *v = dj * (*v + bj * p) + aj * d;
            }
            *out = dot(cw, row);
        });
        Ok(sum)
    }

    /// Record the B-part `B_j·dv_next` of the current advance.
    pub fn complete(&mut self, dv_next: &[f64]) -> Result<()> {
        if !self.seeded {
            return Err(Error::HistoryNotSeeded);
        }
        check_len(self.m, dv_next.len())?;
        if let Some(p) = self.pending.take() {
            // two completes in a row: fold the older one first
            for (row, &pi) in self.v.chunks_exact_mut(self.k).zip(&p) {
                for (v, &b) in row.iter_mut().zip(&self.b) {
                    *v += b * pi;
                }
            }
        }
        self.pending = Some(dv_next.to_vec());
        Ok(())
    }

    /// Full advance `V ← e^{−s_jτ}V + A_j dv_prev + B_j dv_next`.
    pub fn advance(&mut self, dv_prev: &[f64], dv_next: &[f64]) -> Result<()> {
        self.stage(dv_prev)?;
        self.complete(dv_next)
    }

    /// `V_j` at interior point `i` for flattened node `j`, including any
    /// pending B-part.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        let p = self.pending.as_ref().map_or(0.0, |p| p[i]);
        self.v[i * self.k + j] + self.b[j] * p
    }

    /// `Σ_{r,j} λ_r ω̂_j V_j` pointwise, pending B-part included.
    pub fn weighted_sum(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                let p = self.pending.as_ref().map_or(0.0, |p| p[i]);
                let row = &self.v[i * self.k..(i + 1) * self.k];
                (0..self.k).map(|j| self.cw[j] * (row[j] + self.b[j] * p)).sum()
            })
            .collect()
    }

    /// Maximum magnitude over all node values.
    pub fn max_abs(&self) -> f64 {
        (0..self.m)
            .flat_map(|i| (0..self.k).map(move |j| (i, j)))
            .map(|(i, j)| self.value(i, j).abs())
            .fold(0.0, f64::max)
    }

    /// Known part of the fast operator at step `n`, given the sum returned by
    /// [`Self::seed_partial`] (`n = 1`) or [`Self::stage`] (`n ≥ 2`).
    ///
    /// With `v̂^{n+1−σ} = vtrial + κ u^{n+1}`, `κ = (3−2σ)/(2τ)`, the
    /// operator is `values + unknown_coeff·u^{n+1}`. `base` is `v¹` at
    /// `n = 1` and `v̂^{n−σ}` afterwards.
    pub fn known_part(
        &self,
        engine: &CoefficientEngine,
        staged_sum: &[f64],
        vtrial: &[f64],
        base: &[f64],
        vhat_n: &[f64],
    ) -> KnownPart {
        let bw = self.b_weight();
        let a0 = engine.a0_agg();
        let kappa = (3.0 - 2.0 * self.sigma) / (2.0 * engine.tau());
        let values = (0..self.m)
            .map(|i| staged_sum[i] + bw * (vtrial[i] - base[i]) + a0 * (vtrial[i] - vhat_n[i]))
            .collect();
        KnownPart {
            values,
            unknown_coeff: (bw + a0) * kappa,
        }
    }
}

/// Operator split into its known values and the scalar multiplying the
/// unknown level.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownPart {
    pub values: Vec<f64>,
    pub unknown_coeff: f64,
}

/// Stored levels `v̂^{k+1−σ}`, kept as the first offset `v̂^{1−σ} − ψ` and
/// the increments `v̂^{k+1−σ} − v̂^{k−σ}`, `k ≥ 1`.
#[derive(Debug, Clone)]
pub struct VhatSequence {
    m: usize,
    first: Vec<f64>,
    /// `incs[(k−1)·m + i]`
    incs: Vec<f64>,
    last: Vec<f64>,
    exec: Exec,
}

impl VhatSequence {
    /// Start from `ψ` and `v̂^{1−σ}`.
    pub fn new(psi: &[f64], vhat1: &[f64], exec: Exec) -> Result<Self> {
        check_len(psi.len(), vhat1.len())?;
        Ok(Self {
            m: psi.len(),
            first: vhat1.iter().zip(psi).map(|(v, p)| v - p).collect(),
            incs: Vec::new(),
            last: vhat1.to_vec(),
            exec,
        })
    }

    /// Append `v̂^{k+2−σ}` after the last stored level.
    pub fn push(&mut self, vhat_next: &[f64]) -> Result<()> {
        check_len(self.m, vhat_next.len())?;
        for (i, &v) in vhat_next.iter().enumerate() {
            self.incs.push(v - self.last[i]);
        }
        self.last.copy_from_slice(vhat_next);
        Ok(())
    }

    /// Number of stored levels `v̂^{1−σ}, …`.
    pub fn levels(&self) -> usize {
        1 + self.incs.len() / self.m.max(1)
    }

    pub fn last(&self) -> &[f64] {
        &self.last
    }

    pub fn stored_reals(&self) -> usize {
        self.first.len() + self.incs.len() + self.last.len()
    }

    /// `𝐠₀(1−b̃_n)(v̂^{1−σ}−ψ) + Σ_{k=1}^{n−1} 𝐠_k (v̂^{k+1−σ} − v̂^{k−σ})`:
    /// every term of the step-`n` operator except `k = n`.
    pub fn partial_apply(&self, engine: &CoefficientEngine, n: usize, g0: f64, b_tilde: f64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(crate::error::invalid("n", "history sum starts at n = 1"));
        }
        let have = self.levels();
        if have < n {
            return Err(Error::IncompleteSequence { needed: n, have });
        }
        let m = self.m;
        // 𝐠_k = mid(n − k) for 1 ≤ k ≤ n − 1
        let coeffs: Vec<f64> = (1..n).map(|k| engine.mid(n - k)).collect::<Result<_>>()?;
        let exec = if (n - 1) * m >= PARALLEL_MIN_WORK {
            self.exec
        } else {
            Exec::Sequential
        };
        let incs = &self.incs;
        let mut acc = par::chunked_sum(exec, n - 1, DIRECT_CHUNK, m, |range, acc| {
            for k0 in range {
                let g = coeffs[k0];
                let d = &incs[k0 * m..(k0 + 1) * m];
                for (a, &x) in acc.iter_mut().zip(d) {
                    *a += g * x;
                }
            }
        });
        let c0 = g0 * (1.0 - b_tilde);
        for (a, &e) in acc.iter_mut().zip(&self.first) {
            *a += c0 * e;
        }
        Ok(acc)
    }

    /// `Σ_{k=0}^{n} 𝐠_k^{(n+1)} (v̂^{k+1−σ} − v̂^{k−σ})` with
    /// `v̂^{−σ} = b̃_n(v̂^{1−σ} − ψ) + ψ`. Needs levels through `v̂^{n+1−σ}`.
    pub fn direct_history_apply(&self, engine: &CoefficientEngine, n: usize) -> Result<Vec<f64>> {
        let have = self.levels();
        if have < n + 1 {
            return Err(Error::IncompleteSequence { needed: n + 1, have });
        }
        let sc = engine.step_coefficients(n)?;
        if n == 0 {
            return Ok(self.first.iter().map(|e| sc.g0 * e).collect());
        }
        let mut acc = self.partial_apply(engine, n, sc.g0, sc.b_tilde)?;
        let m = self.m;
        let d = &self.incs[(n - 1) * m..n * m];
        for (a, &x) in acc.iter_mut().zip(d) {
            *a += sc.top * x;
        }
        Ok(acc)
    }
}

/// Reference evaluation of the fast operator over a full sequence of levels:
/// returns the operator at `n = 1..=levels−2` (`levels = vhats.len()`,
/// `vhats[k] = v̂^{k+1−σ}`), driving a [`HistoryState`] through its seed and
/// advance protocol.
pub fn fast_operator_sequence(
    engine: &CoefficientEngine,
    psi: &[f64],
    vhats: &[Vec<f64>],
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    let m = psi.len();
    let s = engine.sigma();
    let a0 = engine.a0_agg();
    let mut state = HistoryState::new(engine, m, exec)?;
    let v1: Vec<f64> = (0..m).map(|i| (vhats[0][i] - s * psi[i]) / (1.0 - s)).collect();
    let mut out = Vec::new();
    for n in 1..vhats.len() {
        let cur = &vhats[n - 1];
        let next = &vhats[n];
        if n == 1 {
            state.seed_partial(psi, &v1)?;
            let dnext: Vec<f64> = (0..m).map(|i| next[i] - v1[i]).collect();
            state.complete(&dnext)?;
        } else {
            let prev = &vhats[n - 2];
            let dprev: Vec<f64> = (0..m).map(|i| cur[i] - prev[i]).collect();
            let dnext: Vec<f64> = (0..m).map(|i| next[i] - cur[i]).collect();
            state.advance(&dprev, &dnext)?;
        }
        let w = state.weighted_sum();
        out.push((0..m).map(|i| w[i] + a0 * (next[i] - cur[i])).collect());
    }
    Ok(out)
}
