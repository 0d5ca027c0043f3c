//! Uniform one-dimensional grids and the small interpolation kernels shared by
//! the coordinate transforms.

use serde::{Deserialize, Serialize};

use crate::error::{ChError, Result};

/// Uniform grid with `n` nodes on `[min, max]`, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1d {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Grid1d {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(ChError::InvalidGrid(format!("need at least 4 nodes, got {n}")));
        }
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(ChError::InvalidGrid(format!("bad range [{min}, {max}]")));
        }
        Ok(Self { min, max, n })
    }

    /// Symmetric grid on `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n)
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        // Pin the last node so that `node(n - 1) == max` bit-exactly.
        if i + 1 == self.n {
            self.max
        } else {
            self.min + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Cell index and fractional offset of `s`, clamped to the grid.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let h = self.spacing();
        let r = (s - self.min) / h;
        if r <= 0.0 {
            return (0, 0.0);
        }
        let last = self.n - 2;
        let i = (r.floor() as usize).min(last);
        let theta = (r - i as f64).min(1.0);
        (i, theta)
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.min && s <= self.max
    }

    /// Trapezoid weights for this grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }

    pub fn trapezoid(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n);
        let h = self.spacing();
        let inner: f64 = f[1..f.len() - 1].iter().sum();
        h * (inner + 0.5 * (f[0] + f[f.len() - 1]))
    }

    /// Trapezoid L2 norm of a sampled function.
    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
        self.trapezoid(&sq).sqrt()
    }

    pub fn same_as(&self, other: &Grid1d) -> bool {
        self.n == other.n && self.min == other.min && self.max == other.max
    }
}

/// Cubic Hermite interpolation on one cell of width `h`, `t` in `[0, 1]`.
#[inline]
pub fn hermite(f0: f64, f1: f64, d0: f64, d1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1
}

/// Derivative of [`hermite`] with respect to the physical coordinate.
#[inline]
pub fn hermite_slope(f0: f64, f1: f64, d0: f64, d1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let dh00 = 6.0 * t2 - 6.0 * t;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = -6.0 * t2 + 6.0 * t;
    let dh11 = 3.0 * t2 - 2.0 * t;
    (dh00 * f0 + dh01 * f1) / h + dh10 * d0 + dh11 * d1
}

/// Four-point Lagrange weights for nodes at offsets -1, 0, 1, 2 and evaluation
/// point `t` in `[0, 1]`.
#[inline]
pub fn lagrange4_weights(t: f64) -> [f64; 4] {
    let tm1 = t - 1.0;
    let tm2 = t - 2.0;
    let tp1 = t + 1.0;
    [
        -t * tm1 * tm2 / 6.0,
        tp1 * tm1 * tm2 / 2.0,
        -tp1 * t * tm2 / 2.0,
        tp1 * t * tm1 / 6.0,
    ]
}

/// Derivative of the four-point Lagrange weights with respect to `t`.
#[inline]
pub fn lagrange4_weight_slopes(t: f64) -> [f64; 4] {
    let t2 = t * t;
    [
        -(3.0 * t2 - 6.0 * t + 2.0) / 6.0,
        (3.0 * t2 - 4.0 * t - 1.0) / 2.0,
        -(3.0 * t2 - 2.0 * t - 2.0) / 2.0,
        (3.0 * t2 - 1.0) / 6.0,
    ]
}

/// Interpolates node values at cell `i`, offset `t`, with a four-point stencil
/// when it fits inside the array and linear interpolation otherwise.
pub fn interp_cubic(values: &[f64], i: usize, t: f64) -> f64 {
    let n = values.len();
    if i >= 1 && i + 2 < n {
        let w = lagrange4_weights(t);
        w[0] * values[i - 1] + w[1] * values[i] + w[2] * values[i + 1] + w[3] * values[i + 2]
    } else {
        let j = (i + 1).min(n - 1);
        values[i] + t * (values[j] - values[i])
    }
}

/// Linear interpolation between nodes `i` and `i + 1`.
#[inline]
pub fn interp_linear(values: &[f64], i: usize, t: f64) -> f64 {
    let j = (i + 1).min(values.len() - 1);
    values[i] + t * (values[j] - values[i])
}

/// Index of the last node with `values[k] <= s` in a nondecreasing array, or
/// `None` when `s` lies below the first value.
pub fn bracket_sorted(values: &[f64], s: f64) -> Option<usize> {
    if values.is_empty() || s < values[0] {
        return None;
    }
    let k = values.partition_point(|&v| v <= s);
    Some(k - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_node_is_exact() {
        let g = Grid1d::new(-30.0, 30.0, 4096).unwrap();
        assert_eq!(g.node(4095), 30.0);
        assert_eq!(g.node(0), -30.0);
    }

    #[test]
    fn locate_clamps() {
        let g = Grid1d::new(0.0, 1.0, 11).unwrap();
        assert_eq!(g.locate(-1.0), (0, 0.0));
        let (i, t) = g.locate(2.0);
        assert_eq!(i, 9);
        assert_eq!(t, 1.0);
        let (i, t) = g.locate(0.35);
        assert_eq!(i, 3);
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lagrange_reproduces_cubics() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.25 * x * x * x;
        let vals: Vec<f64> = (0..6).map(|k| f(k as f64)).collect();
        for &t in &[0.0, 0.3, 0.77, 1.0] {
            let v = interp_cubic(&vals, 2, t);
            assert!((v - f(2.0 + t)).abs() < 1e-12);
            let s = lagrange4_weight_slopes(t);
            let d: f64 = (0..4).map(|k| s[k] * vals[1 + k]).sum();
            let exact = -2.0 + (2.0 + t) - 0.75 * (2.0 + t) * (2.0 + t);
            assert!((d - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn hermite_matches_endpoint_data() {
        let h = 0.3;
        assert!((hermite(1.0, 2.0, 0.5, -1.0, h, 0.0) - 1.0).abs() < 1e-15);
        assert!((hermite(1.0, 2.0, 0.5, -1.0, h, 1.0) - 2.0).abs() < 1e-15);
        assert!((hermite_slope(1.0, 2.0, 0.5, -1.0, h, 0.0) - 0.5).abs() < 1e-14);
        assert!((hermite_slope(1.0, 2.0, 0.5, -1.0, h, 1.0) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn bracket_sorted_finds_last_leq() {
        let v = [0.0, 1.0, 1.0, 2.0];
        assert_eq!(bracket_sorted(&v, -0.5), None);
        assert_eq!(bracket_sorted(&v, 1.0), Some(2));
        assert_eq!(bracket_sorted(&v, 1.5), Some(2));
        assert_eq!(bracket_sorted(&v, 5.0), Some(3));
    }
}
