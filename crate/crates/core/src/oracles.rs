//! Slow reference computations used to check the fast paths.
//!
//! Nothing here shares code with the scan, the transforms or the time
//! stepper beyond grid utilities and the partition tables.

use serde::{Deserialize, Serialize};

use crate::error::{ChError, Result};
use crate::grid::Grid1d;
use crate::lagrangian::LagrangianState;
use crate::operators::NonlocalFields;
use crate::partition::PartitionSetup;

/// Direct O(n²) trapezoid evaluation of P and Q.
pub fn naive_pq(x: &LagrangianState, setup: &PartitionSetup) -> Result<NonlocalFields> {
    x.check_lengths()?;
    let n = x.len();
    let g = &x.grid;
    let y: Vec<f64> = (0..n).map(|i| g.node(i) + x.zeta[i]).collect();
    for i in 0..n - 1 {
        if y[i + 1] < y[i] - 1e-10 {
            return Err(ChError::NonMonotoneY { index: i, drop: y[i] - y[i + 1] });
        }
    }
    let weights = g.trapezoid_weights();
    let w: Vec<f64> = (0..n)
        .map(|j| {
            let yxi = 1.0 + x.zeta_xi[j];
            let ub = x.ubar[j];
            weights[j] * ((2.0 * ub * ub + 4.0 * x.c * ub * setup.chi(y[j])) * yxi + x.h[j])
        })
        .collect();
    let c2 = x.c * x.c;
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let (mut sp, mut sq) = (0.0, 0.0);
        for j in 0..n {
            let k = (-(y[i] - y[j]).abs()).exp() * w[j];
            sp += k;
            match j.cmp(&i) {
                std::cmp::Ordering::Less => sq += k,
                std::cmp::Ordering::Greater => sq -= k,
                std::cmp::Ordering::Equal => {}
            }
        }
        p[i] = 0.25 * sp + c2 * setup.g(y[i]);
        q[i] = -0.25 * sq + c2 * setup.g_prime(y[i]);
    }
    Ok(NonlocalFields { p, q, tail_weight: w[0].abs() + w[n - 1].abs() })
}

/// Positions and momenta of a multipeakon along its orbit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeakonOrbit {
    pub times: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

fn peakon_rhs(p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = p.len();
    let mut dp = vec![0.0; n];
    let mut dq = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let e = (-(q[i] - q[j]).abs()).exp();
            dq[i] += p[j] * e;
            if i != j {
                dp[i] += p[i] * p[j] * (q[i] - q[j]).signum() * e;
            }
        }
    }
    (dp, dq)
}

/// ½∑ᵢⱼpᵢpⱼe^{−|qᵢ−qⱼ|}, conserved by the multipeakon flow.
pub fn peakon_hamiltonian(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        for j in 0..p.len() {
            s += p[i] * p[j] * (-(q[i] - q[j]).abs()).exp();
        }
    }
    0.5 * s
}

/// Classical RK4 on the multipeakon system; stops with an error once two
/// peakons come closer than `min_separation`.
pub fn multipeakon_ode(
    p0: &[f64],
    q0: &[f64],
    t_final: f64,
    dt: f64,
    min_separation: f64,
) -> Result<PeakonOrbit> {
    let n = p0.len();
    let sep = |q: &[f64]| {
        let mut m = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                m = m.min((q[i] - q[j]).abs());
            }
        }
        m
    };
    let mut p = p0.to_vec();
    let mut q = q0.to_vec();
    let steps = (t_final / dt).round().max(0.0) as usize;
    let mut orbit = PeakonOrbit { times: vec![0.0], p: vec![p.clone()], q: vec![q.clone()] };
    for k in 0..steps {
        let t = k as f64 * dt;
        let s = sep(&q);
        if s < min_separation {
            return Err(ChError::CollisionApproach { time: t, separation: s });
        }
        let axpy = |a: &[f64], b: &[f64], h: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + h * y).collect()
        };
        let (k1p, k1q) = peakon_rhs(&p, &q);
        let (k2p, k2q) = peakon_rhs(&axpy(&p, &k1p, 0.5 * dt), &axpy(&q, &k1q, 0.5 * dt));
        let (k3p, k3q) = peakon_rhs(&axpy(&p, &k2p, 0.5 * dt), &axpy(&q, &k2q, 0.5 * dt));
        let (k4p, k4q) = peakon_rhs(&axpy(&p, &k3p, dt), &axpy(&q, &k3q, dt));
        for i in 0..n {
            p[i] += dt / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i]);
            q[i] += dt / 6.0 * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]);
        }
        orbit.times.push((k + 1) as f64 * dt);
        orbit.p.push(p.clone());
        orbit.q.push(q.clone());
    }
    Ok(orbit)
}

/// Closed-form orbit of the antisymmetric pair (p₀ at −q₀, −p₀ at q₀).
#[derive(Clone, Copy, Debug)]
pub struct AntisymmetricPair {
    pub p0: f64,
    pub q0: f64,
}

impl AntisymmetricPair {
    /// Conserved value p²(1 − e^{−2q}).
    pub fn energy(&self) -> f64 {
        self.p0 * self.p0 * (1.0 - (-2.0 * self.q0).exp())
    }

    pub fn collision_time(&self) -> f64 {
        self.q0.exp().acosh() / self.energy().sqrt()
    }

    /// Half-separation q(t) and momentum p(t) before the collision; after it
    /// the conservative continuation mirrors the orbit in time.
    pub fn state(&self, t: f64) -> (f64, f64) {
        let e = self.energy();
        let q = (e.sqrt() * (self.collision_time() - t)).cosh().ln().abs();
        let p = (e / (1.0 - (-2.0 * q).exp())).sqrt() * self.p0.signum();
        (q, p)
    }

    /// u(t, x) of the pair for t below the collision time.
    pub fn profile(&self, t: f64, x: f64) -> f64 {
        let (q, p) = self.state(t);
        p * (-(x + q).abs()).exp() - p * (-(x - q).abs()).exp()
    }
}

/// u(t, x) = a·e^{−|x − x₀ − at|}.
pub fn exact_peakon(a: f64, x0: f64, t: f64, x: f64) -> f64 {
    a * (-(x - x0 - a * t).abs()).exp()
}

/// Second-order finite-difference solve of P − P_xx = u² + ½u_x² with
/// Dirichlet values `bc` at the two grid ends. Without `ux`, u_x is taken
/// from central differences.
pub fn eulerian_helmholtz(
    u: &[f64],
    ux: Option<&[f64]>,
    grid: &Grid1d,
    bc: (f64, f64),
) -> Result<Vec<f64>> {
    let n = grid.n;
    if u.len() != n || ux.is_some_and(|v| v.len() != n) {
        return Err(ChError::GridMismatch("helmholtz input does not match grid".into()));
    }
    let d = grid.spacing();
    let slope = |i: usize| -> f64 {
        match ux {
            Some(v) => v[i],
            None => (u[i + 1] - u[i - 1]) / (2.0 * d),
        }
    };
    // Interior unknowns 1..n-1 of a symmetric tridiagonal system.
    let m = n - 2;
    let off = -1.0 / (d * d);
    let diag = 1.0 + 2.0 / (d * d);
    let mut rhs: Vec<f64> = (1..n - 1)
        .map(|i| {
            let s = slope(i);
            u[i] * u[i] + 0.5 * s * s
        })
        .collect();
    rhs[0] -= off * bc.0;
    rhs[m - 1] -= off * bc.1;
    let mut cprime = vec![0.0; m];
    let mut piv = diag;
    if piv.abs() < 1e-300 {
        return Err(ChError::SingularSystem(0));
    }
    cprime[0] = off / piv;
    rhs[0] /= piv;
    for k in 1..m {
        piv = diag - off * cprime[k - 1];
        if piv.abs() < 1e-300 {
            return Err(ChError::SingularSystem(k));
        }
        cprime[k] = off / piv;
        rhs[k] = (rhs[k] - off * rhs[k - 1]) / piv;
    }
    for k in (0..m - 1).rev() {
        rhs[k] -= cprime[k] * rhs[k + 1];
    }
    let mut p = Vec::with_capacity(n);
    p.push(bc.0);
    p.extend(rhs);
    p.push(bc.1);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_peakon_travels_at_its_height() {
        let o = multipeakon_ode(&[0.7], &[1.0], 2.0, 1e-3, 1e-6).unwrap();
        let last = o.q.len() - 1;
        assert!((o.q[last][0] - 2.4).abs() < 1e-12);
        assert_eq!(o.p[last][0], 0.7);
    }

    #[test]
    fn hamiltonian_is_conserved() {
        let p = [1.0, 0.5, -0.3];
        let q = [-4.0, 0.0, 3.0];
        let h0 = peakon_hamiltonian(&p, &q);
        let o = multipeakon_ode(&p, &q, 3.0, 1e-3, 1e-3).unwrap();
        let k = o.q.len() - 1;
        assert!((peakon_hamiltonian(&o.p[k], &o.q[k]) - h0).abs() < 1e-8);
    }

    #[test]
    fn antisymmetric_pair_stays_antisymmetric_and_matches_closed_form() {
        let pair = AntisymmetricPair { p0: 1.0, q0: 2.0 };
        let tstar = pair.collision_time();
        let o = multipeakon_ode(&[1.0, -1.0], &[-2.0, 2.0], 0.8 * tstar, 1e-4, 1e-3).unwrap();
        for (p, q) in o.p.iter().zip(&o.q) {
            assert!((p[0] + p[1]).abs() < 1e-12);
            assert!((q[0] + q[1]).abs() < 1e-12);
        }
        let k = o.times.len() - 1;
        let (q, p) = pair.state(o.times[k]);
        assert!((o.q[k][1] - q).abs() < 1e-8);
        assert!((o.p[k][0] - p).abs() < 1e-8);
        let err = multipeakon_ode(&[1.0, -1.0], &[-2.0, 2.0], 2.0 * tstar, 1e-3, 1e-2);
        assert!(matches!(err, Err(ChError::CollisionApproach { .. })));
    }

    #[test]
    fn helmholtz_peakon_pressure() {
        let grid = Grid1d::symmetric(30.0, 12_001).unwrap();
        let xs = grid.nodes();
        let u: Vec<f64> = xs.iter().map(|x| (-x.abs()).exp()).collect();
        let ux: Vec<f64> = xs.iter().map(|x| -x.signum() * (-x.abs()).exp()).collect();
        let p = eulerian_helmholtz(&u, Some(&ux), &grid, (0.0, 0.0)).unwrap();
        assert!((p[6000] - 0.5).abs() < 1e-4);
        let zero = eulerian_helmholtz(&vec![0.0; grid.n], None, &grid, (0.0, 0.0)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }
}
