use crate::error::{invalid, Result};

/// Uniform grid `x_i = x_left + i·h`, `i = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub x_left: f64,
    pub x_right: f64,
    pub m: usize,
    pub h: f64,
}

impl Grid1D {
    pub fn new(x_left: f64, x_right: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(invalid("m", format!("need at least 2 intervals, got {m}")));
        }
        if !(x_right > x_left) || !x_left.is_finite() || !x_right.is_finite() {
            return Err(invalid(
                "domain",
                format!("need x_left < x_right, got ({x_left}, {x_right})"),
            ));
        }
        Ok(Self {
            x_left,
            x_right,
            m,
            h: (x_right - x_left) / m as f64,
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.m {
            self.x_right
        } else {
            self.x_left + i as f64 * self.h
        }
    }

    /// Number of interior points `M − 1`.
    pub fn interior_len(&self) -> usize {
        self.m - 1
    }

    pub fn interior_nodes(&self) -> Vec<f64> {
        (1..self.m).map(|i| self.x(i)).collect()
    }
}

/// Values at all `M + 1` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Grid1D) -> Self {
        Self {
            values: vec![0.0; grid.m + 1],
        }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &Grid1D, f: F) -> Self {
        Self {
            values: (0..=grid.m).map(|i| f(grid.x(i))).collect(),
        }
    }

    /// Embed interior values with zero boundary slots.
    pub fn from_interior(interior: &[f64]) -> Self {
        let mut values = Vec::with_capacity(interior.len() + 2);
        values.push(0.0);
        values.extend_from_slice(interior);
        values.push(0.0);
        Self { values }
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[1..self.values.len() - 1]
    }

    pub fn interior_mut(&mut self) -> &mut [f64] {
        let n = self.values.len();
        &mut self.values[1..n - 1]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `δ_x² u_i = (u_{i+1} − 2u_i + u_{i−1})/h²` at interior nodes, 0 in the
/// boundary slots.
pub fn delta_x2(grid: &Grid1D, u: &GridFunction) -> GridFunction {
    let v = &u.values;
    let inv = 1.0 / (grid.h * grid.h);
    let mut out = vec![0.0; v.len()];
    for i in 1..v.len() - 1 {
        out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) * inv;
    }
    GridFunction { values: out }
}

/// `δ_x²` on interior values with homogeneous boundary values; `out` and `u`
/// have length `M − 1`.
pub(crate) fn delta_x2_interior(h: f64, u: &[f64], out: &mut [f64]) {
    let n = u.len();
    let inv = 1.0 / (h * h);
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { u[i - 1] };
        let right = if i + 1 == n { 0.0 } else { u[i + 1] };
        out[i] = (right - 2.0 * u[i] + left) * inv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn affine_is_annihilated() {
        let g = Grid1D::new(0.0, 2.0, 17).unwrap();
        let u = GridFunction::from_fn(&g, |x| 3.0 * x - 1.0);
        let d = delta_x2(&g, &u);
        assert!(d.values.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn quadratic_gives_two() {
        let g = Grid1D::new(0.0, 1.0, 10).unwrap();
        let u = GridFunction::from_fn(&g, |x| x * x);
        let d = delta_x2(&g, &u);
        for i in 1..10 {
            assert!((d.values[i] - 2.0).abs() < 1e-10);
        }
        assert_eq!(d.values[0], 0.0);
        assert_eq!(d.values[10], 0.0);
    }

    #[test]
    fn sine_taylor_remainder() {
        let g = Grid1D::new(0.0, 1.0, 100).unwrap();
        let u = GridFunction::from_fn(&g, |x| (PI * x).sin());
        let d = delta_x2(&g, &u);
        let bound = PI.powi(4) * g.h * g.h / 12.0 * 1.01;
        for i in 1..100 {
            let exact = -PI * PI * (PI * g.x(i)).sin();
            assert!((d.values[i] - exact).abs() <= bound);
        }
    }

    #[test]
    fn interior_version_matches() {
        let g = Grid1D::new(0.0, 1.0, 8).unwrap();
        let u = GridFunction::from_fn(&g, |x| (PI * x).sin() + x * (1.0 - x));
        let mut u0 = u.clone();
        u0.values[0] = 0.0;
        u0.values[8] = 0.0;
        let full = delta_x2(&g, &u0);
        let mut out = vec![0.0; 7];
        delta_x2_interior(g.h, u0.interior(), &mut out);
        for (a, b) in out.iter().zip(full.interior()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid1D::new(0.0, 1.0, 1).is_err());
        assert!(Grid1D::new(1.0, 1.0, 4).is_err());
    }
}
