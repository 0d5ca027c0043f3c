//! Weak-form residuals of a computed conservative solution, paired with
//! compactly supported space-time bumps.
//!
//! The momentum equation and the balance law for ν = u²dx + μ are evaluated
//! on the characteristics, where ν pulls back to (U²y_ξ + h)dξ and atoms need
//! no special treatment. The P equation and the absolutely continuous energy
//! balance are evaluated on the Eulerian samples produced by M.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ChError, Result};
use crate::evolution::Trajectory;
use crate::grid::Grid1d;
use crate::operators::compute_pq;
use crate::partition::PartitionSetup;
use crate::transforms::{pushforward_pq, to_eulerian_on};

/// φ(t, x) = b(s_t)·b(s_x) with b(s) = exp(1 − 1/(1 − s²)) on the box
/// [t0, t1] × [x0, x1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpTest {
    pub t0: f64,
    pub t1: f64,
    pub x0: f64,
    pub x1: f64,
}

fn bump(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let r = 1.0 - s * s;
    let b = (1.0 - 1.0 / r).exp();
    (b, -2.0 * s / (r * r) * b)
}

impl BumpTest {
    /// (φ, φ_t, φ_x)
    pub fn eval(&self, t: f64, x: f64) -> (f64, f64, f64) {
        let at = 2.0 / (self.t1 - self.t0);
        let ax = 2.0 / (self.x1 - self.x0);
        let (bt, dbt) = bump(at * (t - self.t0) - 1.0);
        let (bx, dbx) = bump(ax * (x - self.x0) - 1.0);
        (bt * bx, at * dbt * bx, ax * bt * dbx)
    }
}

/// A reproducible family of boxes inside `t_range` × `x_range`.
pub fn bump_family(seed: u64, count: usize, t_range: (f64, f64), x_range: (f64, f64)) -> Vec<BumpTest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ta, tb) = t_range;
    let (xa, xb) = x_range;
    (0..count)
        .map(|_| {
            let tw = (tb - ta) * rng.gen_range(0.3..0.8);
            let xw = (xb - xa) * rng.gen_range(0.15..0.5);
            let t0 = ta + rng.gen_range(0.0..1.0) * (tb - ta - tw);
            let x0 = xa + rng.gen_range(0.0..1.0) * (xb - xa - xw);
            BumpTest { t0, t1: t0 + tw, x0, x1: x0 + xw }
        })
        .collect()
}

/// Residual of each weak form for each test function.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeakReport {
    /// ∫∫ −uφ_t + (uu_x + P_x)φ
    pub momentum: Vec<f64>,
    /// ∫∫ (P − u² − ½u_x²)φ + P_xφ_x
    pub pressure: Vec<f64>,
    /// ∫∫ (u² + u_x²)φ_t + (u(u² + u_x²) − (u³ − 2Pu))φ_x
    pub energy: Vec<f64>,
    /// ∫∫ (φ_t + uφ_x)dν − (u³ − 2Pu)φ_x dx
    pub measure: Vec<f64>,
}

impl WeakReport {
    /// Largest absolute residual of each form, in the order momentum,
    /// pressure, energy, measure.
    pub fn max_abs(&self) -> [f64; 4] {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        [m(&self.momentum), m(&self.pressure), m(&self.energy), m(&self.measure)]
    }
}

/// Time-trapezoid weights for possibly uneven snapshot times.
fn time_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for k in 0..n - 1 {
        let h = times[k + 1] - times[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

/// Pairs every snapshot of `traj` with the test functions. Eulerian
/// quantities are sampled on `x_grid`.
pub fn weak_residual(
    traj: &Trajectory,
    setup: &PartitionSetup,
    x_grid: Grid1d,
    tests: &[BumpTest],
) -> Result<WeakReport> {
    let ns = traj.states.len();
    if ns < 3 {
        return Err(ChError::InsufficientSnapshots { needed: 3, got: ns });
    }
    let (ta, tb) = (traj.times[0], traj.times[ns - 1]);
    for b in tests {
        if !(b.t0 >= ta && b.t1 <= tb && b.t1 > b.t0) {
            return Err(ChError::SupportEscape(format!(
                "time window [{}, {}] outside [{ta}, {tb}]",
                b.t0, b.t1
            )));
        }
        if !(b.x0 > x_grid.min && b.x1 < x_grid.max && b.x1 > b.x0) {
            return Err(ChError::SupportEscape(format!(
                "space window [{}, {}] outside ({}, {})",
                b.x0, b.x1, x_grid.min, x_grid.max
            )));
        }
    }
    let nt = tests.len();
    let mut rep = WeakReport {
        momentum: vec![0.0; nt],
        pressure: vec![0.0; nt],
        energy: vec![0.0; nt],
        measure: vec![0.0; nt],
    };
    let wt = time_weights(&traj.times);
    let xs = x_grid.nodes();
    let wx = x_grid.trapezoid_weights();
    for (k, x) in traj.states.iter().enumerate() {
        let t = traj.times[k];
        if !tests.iter().any(|b| t > b.t0 && t < b.t1) {
            continue;
        }
        let f = compute_pq(x, setup)?;
        let (u, ux) = x.velocity(setup);
        let y = x.y();
        let yx = x.y_xi();
        let wl = x.grid.trapezoid_weights();

        let eul = to_eulerian_on(x, setup, x_grid)?;
        let ue = eul.u(setup);
        let dens = &eul.measure.density;
        let (pe, qe) = pushforward_pq(x, &f, setup, x_grid)?;

        for (j, b) in tests.iter().enumerate() {
            if !(t > b.t0 && t < b.t1) {
                continue;
            }
            let (mut r1, mut r2, mut r3, mut r4) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..x.len() {
                if y[i] <= b.x0 || y[i] >= b.x1 {
                    continue;
                }
                let (phi, phi_t, phi_x) = b.eval(t, y[i]);
                let flux = u[i] * u[i] * u[i] - 2.0 * f.p[i] * u[i];
                r1 += wl[i] * (-u[i] * phi_t * yx[i] + (u[i] * ux[i] + f.q[i] * yx[i]) * phi);
                r4 += wl[i]
                    * ((phi_t + u[i] * phi_x) * (u[i] * u[i] * yx[i] + x.h[i])
                        - flux * phi_x * yx[i]);
            }
            for i in 0..xs.len() {
                if xs[i] <= b.x0 || xs[i] >= b.x1 {
                    continue;
                }
                let (phi, phi_t, phi_x) = b.eval(t, xs[i]);
                let (v, d) = (ue[i], dens[i]);
                let e = v * v + d;
                r2 += wx[i] * ((pe[i] - v * v - 0.5 * d) * phi + qe[i] * phi_x);
                r3 += wx[i] * (e * phi_t + (v * e - (v * v * v - 2.0 * pe[i] * v)) * phi_x);
            }
            rep.momentum[j] += wt[k] * r1;
            rep.pressure[j] += wt[k] * r2;
            rep.energy[j] += wt[k] * r3;
            rep.measure[j] += wt[k] * r4;
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{evolve, EvolveOptions};
    use crate::lagrangian::LagrangianState;

    #[test]
    fn bump_derivatives_match_differences() {
        let b = BumpTest { t0: 0.1, t1: 0.9, x0: -1.0, x1: 2.0 };
        let (t, x, e) = (0.37, 0.4, 1e-6);
        let (_, pt, px) = b.eval(t, x);
        let dt = (b.eval(t + e, x).0 - b.eval(t - e, x).0) / (2.0 * e);
        let dx = (b.eval(t, x + e).0 - b.eval(t, x - e).0) / (2.0 * e);
        assert!((pt - dt).abs() < 1e-7 && (px - dx).abs() < 1e-7);
        assert_eq!(b.eval(0.05, x).0, 0.0);
    }

    #[test]
    fn zero_solution_has_zero_residuals() {
        let s = PartitionSetup::quintic();
        let grid = Grid1d::symmetric(6.0, 121).unwrap();
        let x = LagrangianState::zero(grid);
        let traj =
            evolve(&x, 1.0, EvolveOptions { dt: 0.05, snapshot_every: 1, threads: 1 }, &s).unwrap();
        let tests = bump_family(7, 16, (0.0, 1.0), (-4.0, 4.0));
        let r = weak_residual(&traj, &s, grid, &tests).unwrap();
        assert_eq!(r.max_abs(), [0.0; 4]);
        let wide = [BumpTest { t0: 0.1, t1: 0.5, x0: -7.0, x1: 0.0 }];
        assert!(matches!(weak_residual(&traj, &s, grid, &wide), Err(ChError::SupportEscape(_))));
    }
}
