//! The nonlocal fields P and Q in label space, evaluated in linear time.
//!
//! Both are exponential-kernel convolutions against the weight
//! w = (2Ū² + 4cŪχ(y))y_ξ + h plus a background term carried by g:
//!
//! P(ξ) = ¼∫e^{−|y(ξ)−y(η)|}w(η)dη + c²g(y(ξ))
//! Q(ξ) = −¼∫sign(ξ−η)e^{−|y(ξ)−y(η)|}w(η)dη + c²g′(y(ξ))
//!
//! Since y is nondecreasing the kernel factors through cell decay factors
//! e^{−(y_{i+1}−y_i)}, so a forward and a backward scan give the trapezoid
//! rule exactly in O(n).

use serde::{Deserialize, Serialize};

use crate::error::{ChError, Result};
use crate::lagrangian::LagrangianState;
use crate::partition::PartitionSetup;

/// P and Q sampled on the label grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlocalFields {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Weight magnitude at the two grid ends, a proxy for the truncated mass.
    pub tail_weight: f64,
}

/// Tolerated backward step of y before the state is rejected. Near a
/// collision the RK stages can reorder nearly coincident characteristics by
/// roughly the local truncation error; such steps are read as zero distance.
pub const MONOTONE_TOL: f64 = 1e-5;

/// Convolution weight w at every node.
pub fn kernel_weight(x: &LagrangianState, setup: &PartitionSetup) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let ub = x.ubar[i];
            let chi = setup.chi(x.y_at(i));
            (2.0 * ub * ub + 4.0 * x.c * ub * chi) * (1.0 + x.zeta_xi[i]) + x.h[i]
        })
        .collect()
}

fn decay_factors(y: &[f64]) -> Result<Vec<f64>> {
    let mut e = Vec::with_capacity(y.len().saturating_sub(1));
    for (i, w) in y.windows(2).enumerate() {
        let d = w[1] - w[0];
        if d < -MONOTONE_TOL || !d.is_finite() {
            return Err(ChError::NonMonotoneY { index: i, drop: -d });
        }
        e.push((-d.max(0.0)).exp());
    }
    Ok(e)
}

/// Forward and backward exponentially weighted trapezoid sums.
///
/// `a[i]` is the trapezoid over η ≤ ξ_i of e^{−(y_i − y(η))}w(η) and `b[i]`
/// the mirror image over η ≥ ξ_i.
pub fn kernel_scan(decay: &[f64], w: &[f64], spacing: f64) -> (Vec<f64>, Vec<f64>) {
    let n = w.len();
    let half = 0.5 * spacing;
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for i in 0..n - 1 {
        let e = decay[i];
        a[i + 1] = e * a[i] + half * (e * w[i] + w[i + 1]);
    }
    for i in (1..n).rev() {
        let e = decay[i - 1];
        b[i - 1] = e * b[i] + half * (w[i - 1] + e * w[i]);
    }
    (a, b)
}

/// Blocked version of [`kernel_scan`]: each block scans from a zero carry and
/// the carries are stitched with the cumulative decay inside the block.
pub fn kernel_scan_blocked(
    y: &[f64],
    decay: &[f64],
    w: &[f64],
    spacing: f64,
    threads: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = w.len();
    let blocks = threads.clamp(1, (n / 1024).max(1));
    if blocks == 1 {
        return kernel_scan(decay, w, spacing);
    }
    let half = 0.5 * spacing;
    let edges: Vec<usize> = (0..=blocks).map(|k| k * (n - 1) / blocks).collect();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];

    // Local scans. Block k owns nodes edges[k]..=edges[k+1]; the shared edge
    // node is written by the later pass below.
    let mut fwd_local: Vec<Vec<f64>> = vec![Vec::new(); blocks];
    let mut bwd_local: Vec<Vec<f64>> = vec![Vec::new(); blocks];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..blocks)
            .map(|k| {
                let (lo, hi) = (edges[k], edges[k + 1]);
                scope.spawn(move || {
                    let len = hi - lo + 1;
                    let mut fa = vec![0.0; len];
                    let mut fb = vec![0.0; len];
                    for j in 0..len - 1 {
                        let e = decay[lo + j];
                        fa[j + 1] = e * fa[j] + half * (e * w[lo + j] + w[lo + j + 1]);
                    }
                    for j in (1..len).rev() {
                        let e = decay[lo + j - 1];
                        fb[j - 1] = e * fb[j] + half * (w[lo + j - 1] + e * w[lo + j]);
                    }
                    (fa, fb)
                })
            })
            .collect();
        for (k, hnd) in handles.into_iter().enumerate() {
            let (fa, fb) = hnd.join().expect("scan worker panicked");
            fwd_local[k] = fa;
            bwd_local[k] = fb;
        }
    });

    // Sequential carry propagation over the block boundaries.
    let mut carry_a = vec![0.0; blocks];
    for k in 1..blocks {
        let (lo, hi) = (edges[k - 1], edges[k]);
        let span = (-(y[hi] - y[lo]).max(0.0)).exp();
        carry_a[k] = span * carry_a[k - 1] + fwd_local[k - 1][hi - lo];
    }
    let mut carry_b = vec![0.0; blocks];
    for k in (0..blocks - 1).rev() {
        let (lo, hi) = (edges[k + 1], edges[k + 2]);
        let span = (-(y[hi] - y[lo]).max(0.0)).exp();
        carry_b[k] = span * carry_b[k + 1] + bwd_local[k + 1][0];
    }

    std::thread::scope(|scope| {
        let mut a_rest: &mut [f64] = &mut a;
        let mut b_rest: &mut [f64] = &mut b;
        let mut offset = 0;
        for k in 0..blocks {
            let (lo, hi) = (edges[k], edges[k + 1]);
            let end = if k + 1 == blocks { n } else { hi };
            let (a_chunk, a_tail) = a_rest.split_at_mut(end - offset);
            let (b_chunk, b_tail) = b_rest.split_at_mut(end - offset);
            a_rest = a_tail;
            b_rest = b_tail;
            offset = end;
            let fa = &fwd_local[k];
            let fb = &bwd_local[k];
            let (ca, cb) = (carry_a[k], carry_b[k]);
            scope.spawn(move || {
                for (j, slot) in a_chunk.iter_mut().enumerate() {
                    let i = lo + j;
                    *slot = fa[j] + (-(y[i] - y[lo]).max(0.0)).exp() * ca;
                }
                for (j, slot) in b_chunk.iter_mut().enumerate() {
                    let i = lo + j;
                    *slot = fb[j] + (-(y[hi] - y[i]).max(0.0)).exp() * cb;
                }
            });
        }
    });
    (a, b)
}

/// P and Q at every node, sequential scan.
pub fn compute_pq(x: &LagrangianState, setup: &PartitionSetup) -> Result<NonlocalFields> {
    compute_pq_threads(x, setup, 1)
}

/// P and Q with the scan split over up to `threads` workers.
pub fn compute_pq_threads(
    x: &LagrangianState,
    setup: &PartitionSetup,
    threads: usize,
) -> Result<NonlocalFields> {
    x.check_lengths()?;
    let y = x.y();
    let decay = decay_factors(&y)?;
    let w = kernel_weight(x, setup);
    let d = x.grid.spacing();
    let (a, b) = if threads <= 1 {
        kernel_scan(&decay, &w, d)
    } else {
        kernel_scan_blocked(&y, &decay, &w, d, threads)
    };
    let c2 = x.c * x.c;
    let mut p = Vec::with_capacity(x.len());
    let mut q = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let (g, gp) = if c2 == 0.0 { (0.0, 0.0) } else { (setup.g(y[i]), setup.g_prime(y[i])) };
        p.push(0.25 * (a[i] + b[i]) + c2 * g);
        q.push(-0.25 * (a[i] - b[i]) + c2 * gp);
    }
    let tail_weight = w[0].abs() + w[x.len() - 1].abs();
    Ok(NonlocalFields { p, q, tail_weight })
}

/// Residuals of Q_ξ = −½h − (U² − P)y_ξ and P_ξ = Qy_ξ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub q_residual: f64,
    pub p_residual: f64,
}

/// Central-difference residuals of the two derivative identities over the
/// interior nodes.
pub fn check_identities(
    x: &LagrangianState,
    fields: &NonlocalFields,
    setup: &PartitionSetup,
) -> IdentityReport {
    check_identities_where(x, fields, setup, |_| true)
}

/// As [`check_identities`], restricted to nodes accepted by `keep`.
pub fn check_identities_where<F: Fn(f64) -> bool>(
    x: &LagrangianState,
    fields: &NonlocalFields,
    setup: &PartitionSetup,
    keep: F,
) -> IdentityReport {
    let (u, _) = x.velocity(setup);
    let d2 = 2.0 * x.grid.spacing();
    let mut r = IdentityReport::default();
    for i in 1..x.len() - 1 {
        if !keep(x.grid.node(i)) {
            continue;
        }
        let yx = 1.0 + x.zeta_xi[i];
        let dq = (fields.q[i + 1] - fields.q[i - 1]) / d2;
        let dp = (fields.p[i + 1] - fields.p[i - 1]) / d2;
        let rq = dq + 0.5 * x.h[i] + (u[i] * u[i] - fields.p[i]) * yx;
        let rp = dp - fields.q[i] * yx;
        r.q_residual = r.q_residual.max(rq.abs());
        r.p_residual = r.p_residual.max(rp.abs());
    }
    r
}

/// A priori bound on sup|P| and sup|Q| in terms of Γ and the asymptote.
pub fn pq_bound(gamma: f64, c: f64) -> f64 {
    5.0 * gamma + 10.0 * c * c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1d;

    fn peakon(n: usize) -> LagrangianState {
        let grid = Grid1d::symmetric(30.0, n).unwrap();
        let mut x = LagrangianState::zero(grid);
        for i in 0..n {
            let s = grid.node(i);
            let e = (-s.abs()).exp();
            x.ubar[i] = e;
            x.ubar_xi[i] = if s >= 0.0 { -e } else { e };
            x.h[i] = e * e;
        }
        x
    }

    #[test]
    fn zero_state_gives_zero_fields() {
        let s = PartitionSetup::quintic();
        let x = LagrangianState::zero(Grid1d::symmetric(5.0, 64).unwrap());
        let f = compute_pq(&x, &s).unwrap();
        assert!(f.p.iter().chain(&f.q).all(|&v| v == 0.0));
    }

    #[test]
    fn kink_state_is_pure_background() {
        let s = PartitionSetup::quintic();
        let mut x = LagrangianState::zero(Grid1d::symmetric(5.0, 201).unwrap());
        x.c = 0.75;
        let f = compute_pq(&x, &s).unwrap();
        for i in 0..x.len() {
            let y = x.y_at(i);
            assert_eq!(f.p[i], 0.5625 * s.g(y));
            assert_eq!(f.q[i], 0.5625 * s.g_prime(y));
            assert!(f.q[i] >= 0.0);
        }
    }

    #[test]
    fn peakon_pressure_at_crest() {
        let s = PartitionSetup::quintic();
        let x = peakon(6001);
        let f = compute_pq(&x, &s).unwrap();
        let mid = 3000;
        assert!((f.p[mid] - 0.5).abs() < 1e-4, "P(0) = {}", f.p[mid]);
        assert!(f.q[mid].abs() < 1e-12);
    }

    #[test]
    fn blocked_scan_matches_sequential() {
        let s = PartitionSetup::quintic();
        let mut x = peakon(10_001);
        x.c = 0.4;
        let a = compute_pq(&x, &s).unwrap();
        for t in [2, 3, 8] {
            let b = compute_pq_threads(&x, &s, t).unwrap();
            for i in 0..x.len() {
                assert!((a.p[i] - b.p[i]).abs() <= 1e-14 * (1.0 + a.p[i].abs()));
                assert!((a.q[i] - b.q[i]).abs() <= 1e-14 * (1.0 + a.q[i].abs()));
            }
        }
    }

    #[test]
    fn decreasing_y_is_rejected() {
        let s = PartitionSetup::quintic();
        let mut x = LagrangianState::zero(Grid1d::symmetric(5.0, 64).unwrap());
        x.zeta[10] = 1.0;
        assert!(matches!(compute_pq(&x, &s), Err(ChError::NonMonotoneY { index: 10, .. })));
    }
}
