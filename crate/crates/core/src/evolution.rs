//! The Lagrangian semigroup: right-hand side, RK4 stepping, energy
//! diagnostics and the reduction of κ and the left asymptote.

use serde::{Deserialize, Serialize};

use crate::error::{ChError, Result};
use crate::lagrangian::{GTolerance, LagrangianState};
use crate::operators::{compute_pq_threads, NonlocalFields};
use crate::partition::PartitionSetup;
use crate::transforms::EulerianState;

/// Time derivatives of the prognostic fields. c is not evolved.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivative {
    pub zeta: Vec<f64>,
    pub ubar: Vec<f64>,
    pub h: Vec<f64>,
    pub zeta_xi: Vec<f64>,
    pub ubar_xi: Vec<f64>,
}

/// Right-hand side together with the fields it was computed from.
pub fn rhs_with_fields(
    x: &LagrangianState,
    setup: &PartitionSetup,
    threads: usize,
) -> Result<(Derivative, NonlocalFields)> {
    let f = compute_pq_threads(x, setup, threads)?;
    let n = x.len();
    let c = x.c;
    let mut d = Derivative {
        zeta: Vec::with_capacity(n),
        ubar: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
        zeta_xi: Vec::with_capacity(n),
        ubar_xi: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (chi, chi_p, chi_pp) = setup.eval_chi(x.y_at(i));
        let yx = 1.0 + x.zeta_xi[i];
        let u = x.ubar[i] + c * chi;
        let ux = x.ubar_xi[i] + c * chi_p * yx;
        let a = u * u - f.p[i];
        d.zeta.push(u);
        d.ubar.push(-f.q[i] - c * chi_p * u);
        d.h.push(2.0 * a * ux);
        d.zeta_xi.push(ux);
        d.ubar_xi.push(0.5 * x.h[i] + a * yx - c * chi_pp * yx * u - c * chi_p * ux);
    }
    Ok((d, f))
}

pub fn rhs(x: &LagrangianState, setup: &PartitionSetup) -> Result<Derivative> {
    rhs_with_fields(x, setup, 1).map(|(d, _)| d)
}

fn advance(x: &LagrangianState, d: &Derivative, dt: f64) -> LagrangianState {
    let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p + dt * q).collect();
    LagrangianState {
        grid: x.grid,
        time: x.time + dt,
        c: x.c,
        zeta: add(&x.zeta, &d.zeta),
        ubar: add(&x.ubar, &d.ubar),
        h: add(&x.h, &d.h),
        zeta_xi: add(&x.zeta_xi, &d.zeta_xi),
        ubar_xi: add(&x.ubar_xi, &d.ubar_xi),
    }
}

/// Outcome of one step besides the new state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    /// Total magnitude removed by clamping negative y_ξ and h to zero.
    pub clip: f64,
}

/// One classical RK4 step. Negative y_ξ and h are clamped to zero afterwards
/// and the removed magnitude is reported; the y_ξh = U_ξ² relation is left
/// alone.
pub fn step_rk4(
    x: &LagrangianState,
    dt: f64,
    setup: &PartitionSetup,
    threads: usize,
) -> Result<(LagrangianState, StepReport)> {
    if !(dt > 0.0) {
        return Err(ChError::Unsupported(format!("time step must be positive, got {dt}")));
    }
    let blow = || ChError::Blowup { last_good_time: x.time };
    let map_err = |e: ChError| match e {
        ChError::NonMonotoneY { .. } => e,
        _ => blow(),
    };
    let k1 = rhs_with_fields(x, setup, threads).map_err(map_err)?.0;
    let k2 = rhs_with_fields(&advance(x, &k1, 0.5 * dt), setup, threads).map_err(map_err)?.0;
    let k3 = rhs_with_fields(&advance(x, &k2, 0.5 * dt), setup, threads).map_err(map_err)?.0;
    let k4 = rhs_with_fields(&advance(x, &k3, dt), setup, threads).map_err(map_err)?.0;
    let w = dt / 6.0;
    let comb = |v: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..v.len())
            .map(|i| v[i] + w * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
            .collect()
    };
    let mut out = LagrangianState {
        grid: x.grid,
        time: x.time + dt,
        c: x.c,
        zeta: comb(&x.zeta, &k1.zeta, &k2.zeta, &k3.zeta, &k4.zeta),
        ubar: comb(&x.ubar, &k1.ubar, &k2.ubar, &k3.ubar, &k4.ubar),
        h: comb(&x.h, &k1.h, &k2.h, &k3.h, &k4.h),
        zeta_xi: comb(&x.zeta_xi, &k1.zeta_xi, &k2.zeta_xi, &k3.zeta_xi, &k4.zeta_xi),
        ubar_xi: comb(&x.ubar_xi, &k1.ubar_xi, &k2.ubar_xi, &k3.ubar_xi, &k4.ubar_xi),
    };
    let finite = [&out.zeta, &out.ubar, &out.h, &out.zeta_xi, &out.ubar_xi]
        .iter()
        .all(|v| v.iter().all(|a| a.is_finite()));
    if !finite {
        return Err(blow());
    }
    let mut clip = 0.0;
    for z in out.zeta_xi.iter_mut() {
        if *z < -1.0 {
            clip += -1.0 - *z;
            *z = -1.0;
        }
    }
    for h in out.h.iter_mut() {
        if *h < 0.0 {
            clip += -*h;
            *h = 0.0;
        }
    }
    clip += restore_monotone(&mut out);
    Ok((out, StepReport { clip }))
}

/// Pools adjacent violators so that y = ξ + ζ is nondecreasing again after
/// round-off sized backward steps near breaking. Returns the total shift.
fn restore_monotone(x: &mut LagrangianState) -> f64 {
    let y = x.y();
    if y.windows(2).all(|w| w[1] >= w[0]) {
        return 0.0;
    }
    // Blocks of (sum, count) whose means increase.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in &y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / n0 as f64 <= s1 / n1 as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.len() - 1;
            blocks[last] = (s0 + s1, n0 + n1);
        }
    }
    let mut moved = 0.0;
    let mut i = 0;
    for (s, n) in blocks {
        let mean = s / n as f64;
        for _ in 0..n {
            if y[i] != mean {
                moved += (y[i] - mean).abs();
                x.zeta[i] = mean - x.grid.node(i);
            }
            i += 1;
        }
    }
    moved
}

/// Default time step min(10⁻³, 0.1Δξ/(1 + sup|U|)).
pub fn default_dt(x: &LagrangianState, setup: &PartitionSetup) -> f64 {
    let (u, _) = x.velocity(setup);
    let sup = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (1e-3f64).min(0.1 * x.grid.spacing() / (1.0 + sup))
}

/// Scalar diagnostics recorded with every snapshot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub gamma: f64,
    pub total_h: f64,
    /// ∫(h + U²y_ξ)dξ, the conserved energy.
    pub total_energy: f64,
    pub g3_drift: f64,
    /// Cumulative clamp magnitude since the start of the run.
    pub clip: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<LagrangianState>,
    pub energy: Vec<EnergyRecord>,
    /// Time step actually used.
    pub dt: f64,
}

impl Trajectory {
    pub fn last(&self) -> &LagrangianState {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// Largest relative y_ξh = U_ξ² drift over all snapshots.
    pub fn max_g3_drift(&self) -> f64 {
        self.energy.iter().fold(0.0f64, |a, e| a.max(e.g3_drift))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EvolveOptions {
    /// Upper bound on the time step; the actual step divides the final time
    /// evenly.
    pub dt: f64,
    /// Steps between stored snapshots.
    pub snapshot_every: usize,
    pub threads: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { dt: 1e-3, snapshot_every: 100, threads: 1 }
    }
}

fn record(x: &LagrangianState, setup: &PartitionSetup, clip: f64) -> EnergyRecord {
    EnergyRecord {
        t: x.time,
        gamma: energy_gamma(x, setup).gamma,
        total_h: x.total_h(),
        total_energy: x.total_energy(setup),
        g3_drift: x.validate_g(setup, GTolerance::default()).g3,
        clip,
    }
}

/// Marches to `t_final` and keeps whatever was computed if a step fails.
pub fn evolve_partial(
    x0: &LagrangianState,
    t_final: f64,
    opts: EvolveOptions,
    setup: &PartitionSetup,
) -> (Trajectory, Option<ChError>) {
    let steps = if t_final > 0.0 { (t_final / opts.dt - 1e-9).ceil().max(1.0) as usize } else { 0 };
    let dt = if steps > 0 { t_final / steps as f64 } else { opts.dt };
    let every = opts.snapshot_every.max(1);
    let mut traj = Trajectory {
        times: vec![x0.time],
        states: vec![x0.clone()],
        energy: vec![record(x0, setup, 0.0)],
        dt,
    };
    let t0 = x0.time;
    let mut x = x0.clone();
    let mut clip = 0.0;
    for k in 1..=steps {
        match step_rk4(&x, dt, setup, opts.threads) {
            Ok((mut next, rep)) => {
                // Keep times on the uniform lattice instead of accumulating.
                next.time = t0 + k as f64 * dt;
                clip += rep.clip;
                x = next;
            }
            Err(e) => return (traj, Some(e)),
        }
        if k % every == 0 || k == steps {
            traj.times.push(x.time);
            traj.energy.push(record(&x, setup, clip));
            traj.states.push(x.clone());
        }
    }
    (traj, None)
}

pub fn evolve(
    x0: &LagrangianState,
    t_final: f64,
    opts: EvolveOptions,
    setup: &PartitionSetup,
) -> Result<Trajectory> {
    match evolve_partial(x0, t_final, opts, setup) {
        (t, None) => Ok(t),
        (_, Some(e)) => Err(e),
    }
}

/// Γ with the a priori bound on sup|Ū|.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    /// ∫Ū²y_ξ dξ + ∫h dξ
    pub gamma: f64,
    pub sup_ubar_sq: f64,
    /// 2Γ + c²‖χ′‖²_{L²}
    pub ubar_bound: f64,
    pub within_bound: bool,
}

pub fn energy_gamma(x: &LagrangianState, setup: &PartitionSetup) -> GammaReport {
    let f: Vec<f64> = (0..x.len())
        .map(|i| x.ubar[i] * x.ubar[i] * (1.0 + x.zeta_xi[i]) + x.h[i])
        .collect();
    let gamma = x.grid.trapezoid(&f);
    let sup_ubar_sq = x.ubar.iter().fold(0.0f64, |a, v| a.max(v * v));
    let chi_l2 = chi_prime_l2_sq(setup);
    let ubar_bound = 2.0 * gamma + x.c * x.c * chi_l2;
    GammaReport { gamma, sup_ubar_sq, ubar_bound, within_bound: sup_ubar_sq <= ubar_bound * (1.0 + 1e-9) }
}

fn chi_prime_l2_sq(setup: &PartitionSetup) -> f64 {
    let m = 512;
    (0..m)
        .map(|k| {
            let a = k as f64 / m as f64;
            crate::partition::gauss_legendre(a, a + 1.0 / m as f64, |z| setup.eval_chi(z).1.powi(2))
        })
        .sum()
}

/// Residual series of the balance law Ĥ_t = U³ − 2PU for the cumulative
/// energy Ĥ(t, ξ) = ∫_{ξ₀}^{ξ}(h + U²y_ξ).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct HhatReport {
    pub times: Vec<f64>,
    /// max_ξ |D_tĤ − (f(ξ) − f(ξ₀))| with f = U³ − 2PU. Contains the spatial
    /// quadrature error of Ĥ as a floor.
    pub flux_residual: Vec<f64>,
    /// max_ξ |D_tĤ − ∂_tĤ| against the exact time derivative of the discrete
    /// Ĥ; isolates the time discretization.
    pub time_residual: Vec<f64>,
}

impl HhatReport {
    pub fn max_flux(&self) -> f64 {
        self.flux_residual.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    pub fn max_time(&self) -> f64 {
        self.time_residual.iter().fold(0.0f64, |a, &b| a.max(b))
    }
}

fn cumulative(grid: &crate::grid::Grid1d, f: &[f64]) -> Vec<f64> {
    let d = grid.spacing();
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in f.windows(2) {
        acc += 0.5 * d * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Central time differences of Ĥ over uniformly spaced snapshots.
pub fn hhat_balance(traj: &Trajectory, setup: &PartitionSetup) -> Result<HhatReport> {
    let m = traj.states.len();
    if m < 3 {
        return Err(ChError::InsufficientSnapshots { needed: 3, got: m });
    }
    let hhat: Vec<Vec<f64>> = traj
        .states
        .iter()
        .map(|x| {
            let (u, _) = x.velocity(setup);
            let dens: Vec<f64> =
                (0..x.len()).map(|i| x.h[i] + u[i] * u[i] * (1.0 + x.zeta_xi[i])).collect();
            cumulative(&x.grid, &dens)
        })
        .collect();
    let mut rep = HhatReport::default();
    for k in 1..m - 1 {
        let x = &traj.states[k];
        let span = traj.times[k + 1] - traj.times[k - 1];
        let (d, f) = rhs_with_fields(x, setup, 1)?;
        let (u, ux) = x.velocity(setup);
        let flux: Vec<f64> = (0..x.len()).map(|i| u[i].powi(3) - 2.0 * f.p[i] * u[i]).collect();
        let rate: Vec<f64> = (0..x.len())
            .map(|i| d.h[i] + 2.0 * u[i] * (-f.q[i]) * (1.0 + x.zeta_xi[i]) + u[i] * u[i] * ux[i])
            .collect();
        let exact_rate = cumulative(&x.grid, &rate);
        let (mut rf, mut rt) = (0.0f64, 0.0f64);
        for i in 0..x.len() {
            let dt_h = (hhat[k + 1][i] - hhat[k - 1][i]) / span;
            rf = rf.max((dt_h - (flux[i] - flux[0])).abs());
            rt = rt.max((dt_h - exact_rate[i]).abs());
        }
        rep.times.push(traj.times[k]);
        rep.flux_residual.push(rf);
        rep.time_residual.push(rt);
    }
    Ok(rep)
}

/// Record of the change of variables v(t, x) = αu(αt, x − βt) + β.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
    /// κ of the reduced problem, ακ − 2β.
    pub kappa_reduced: f64,
}

impl ShiftRecord {
    /// Maps a reduced solution at time `t` back to the original variables:
    /// u(t, x) = v(t, x + βt) − β.
    pub fn restore(&self, v: &EulerianState, t: f64, setup: &PartitionSetup) -> Result<EulerianState> {
        v.shifted(-self.beta * t, -self.beta, setup)
    }
}

/// Shifts data so that its left asymptote vanishes. Returns `None` for the
/// record when nothing needs to change.
pub fn kappa_reduce(
    u0: &EulerianState,
    kappa: f64,
    setup: &PartitionSetup,
) -> Result<(EulerianState, Option<ShiftRecord>)> {
    let beta = -u0.profile.c_minus;
    if beta == 0.0 && kappa == 0.0 {
        return Ok((u0.clone(), None));
    }
    let rec = ShiftRecord { kappa, alpha: 1.0, beta, kappa_reduced: kappa - 2.0 * beta };
    Ok((u0.shifted(0.0, beta, setup)?, Some(rec)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1d;

    #[test]
    fn zero_state_is_a_fixed_point() {
        let s = PartitionSetup::quintic();
        let x = LagrangianState::zero(Grid1d::symmetric(5.0, 65).unwrap());
        let d = rhs(&x, &s).unwrap();
        assert!(d.zeta.iter().chain(&d.ubar).chain(&d.h).all(|&v| v == 0.0));
        let (y, rep) = step_rk4(&x, 0.3, &s, 1).unwrap();
        assert_eq!(y.zeta, x.zeta);
        assert_eq!(rep.clip, 0.0);
    }

    #[test]
    fn kink_energy_rate() {
        let s = PartitionSetup::quintic();
        let mut x = LagrangianState::zero(Grid1d::symmetric(5.0, 201).unwrap());
        x.c = 1.0;
        let d = rhs(&x, &s).unwrap();
        for i in 0..x.len() {
            let y = x.y_at(i);
            let (chi, chi_p, _) = s.eval_chi(y);
            let expect = 2.0 * (chi * chi - s.g(y)) * chi_p;
            assert!((d.h[i] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn c_is_never_touched() {
        let s = PartitionSetup::quintic();
        let mut x = LagrangianState::zero(Grid1d::symmetric(8.0, 201).unwrap());
        x.c = 0.123_456_789;
        let traj = evolve(&x, 0.05, EvolveOptions { dt: 0.01, snapshot_every: 1, threads: 1 }, &s)
            .unwrap();
        assert!(traj.states.iter().all(|st| st.c == x.c));
        assert_eq!(traj.states.len(), 6);
    }
}
