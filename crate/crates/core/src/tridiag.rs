use crate::error::{Error, Result};

/// Tridiagonal system `sub[i]·x[i−1] + diag[i]·x[i] + sup[i]·x[i+1] = rhs[i]`.
/// `sub[0]` and `sup[n−1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

/// Thomas elimination factors for a fixed matrix, reusable across right-hand
/// sides.
#[derive(Debug, Clone)]
pub struct ThomasFactor {
    sub: Vec<f64>,
    /// modified super-diagonal `c'_i`
    c: Vec<f64>,
    /// pivots `d_i − a_i c'_{i−1}`
    pivot: Vec<f64>,
}

impl ThomasFactor {
    /// Factor after checking (weak, with one strict row) diagonal dominance.
    pub fn new(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self> {
        let n = diag.len();
        if sub.len() != n || sup.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: sub.len().min(sup.len()),
            });
        }
        let mut strict = false;
        for i in 0..n {
            let off = if i > 0 { sub[i].abs() } else { 0.0 } + if i + 1 < n { sup[i].abs() } else { 0.0 };
            if diag[i].abs() < off || !diag[i].is_finite() {
                return Err(Error::NotDiagonallyDominant { row: i });
            }
            strict |= diag[i].abs() > off;
        }
        if n > 0 && !strict {
            return Err(Error::NotDiagonallyDominant { row: 0 });
        }
        let mut c = vec![0.0; n];
        let mut pivot = vec![0.0; n];
        for i in 0..n {
            let p = if i == 0 { diag[0] } else { diag[i] - sub[i] * c[i - 1] };
            if p == 0.0 {
                return Err(Error::NotDiagonallyDominant { row: i });
            }
            pivot[i] = p;
            c[i] = if i + 1 < n { sup[i] / p } else { 0.0 };
        }
        Ok(Self {
            sub: sub.to_vec(),
            c,
            pivot,
        })
    }

    /// Constant-coefficient matrix with `diag` on the diagonal and `off` on
    /// both neighbours.
    pub fn constant(n: usize, diag: f64, off: f64) -> Result<Self> {
        Self::new(&vec![off; n], &vec![diag; n], &vec![off; n])
    }

    pub fn len(&self) -> usize {
        self.pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivot.is_empty()
    }

    /// Solve in place: `x` holds the right-hand side on entry.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.pivot.len();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let prev = if i == 0 { 0.0 } else { self.sub[i] * x[i - 1] };
            x[i] = (x[i] - prev) / self.pivot[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.c[i] * x[i + 1];
        }
    }
}

/// Solve a tridiagonal system by the Thomas algorithm.
pub fn thomas_solve(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    if sys.rhs.len() != sys.diag.len() {
        return Err(Error::DimensionMismatch {
            expected: sys.diag.len(),
            found: sys.rhs.len(),
        });
    }
    let f = ThomasFactor::new(&sys.sub, &sys.diag, &sys.sup)?;
    let mut x = sys.rhs.clone();
    f.solve_in_place(&mut x);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let n = 5;
        let sys = TridiagonalSystem {
            sub: vec![0.0; n],
            diag: vec![1.0; n],
            sup: vec![0.0; n],
            rhs: vec![1.0, -2.0, 3.0, 0.5, 7.0],
        };
        assert_eq!(thomas_solve(&sys).unwrap(), sys.rhs);
    }

    #[test]
    fn hand_eliminated_3x3() {
        let sys = TridiagonalSystem {
            sub: vec![-1.0; 3],
            diag: vec![2.0; 3],
            sup: vec![-1.0; 3],
            rhs: vec![1.0, 0.0, 1.0],
        };
        let x = thomas_solve(&sys).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_dominant() {
        let sys = TridiagonalSystem {
            sub: vec![3.0; 3],
            diag: vec![1.0; 3],
            sup: vec![3.0; 3],
            rhs: vec![1.0; 3],
        };
        assert!(matches!(thomas_solve(&sys), Err(Error::NotDiagonallyDominant { .. })));
    }
}
