//! Invariant suites at reference resolution, each producing a residual
//! table with pass/fail per row.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ChError, Result};
use crate::evolution::{evolve, EvolveOptions};
use crate::grid::Grid1d;
use crate::initial_data::{kink, peakon, seeded_state, with_atom, zero};
use crate::lagrangian::{e_norm_distance, make_relabeling, RelabelKind};
use crate::operators::{check_identities, compute_pq};
use crate::oracles::naive_pq;
use crate::partition::{convert_representation, PartitionSetup};
use crate::transforms::{
    bump_family, centered_label_grid, distance_d, to_eulerian, to_lagrangian, to_lagrangian_on,
    weak_residual, EulerianState, D_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Identities,
    Roundtrip,
    Equivariance,
    Weakform,
    Metric,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Suite::Identities, Suite::Roundtrip, Suite::Equivariance, Suite::Weakform, Suite::Metric];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Roundtrip => "roundtrip",
            Suite::Equivariance => "equivariance",
            Suite::Weakform => "weakform",
            Suite::Metric => "metric",
        }
    }

    pub fn run(self, setup: &PartitionSetup) -> Result<SuiteReport> {
        match self {
            Suite::Identities => identities(setup),
            Suite::Roundtrip => roundtrip(setup),
            Suite::Equivariance => equivariance(setup),
            Suite::Weakform => weakform(setup),
            Suite::Metric => metric(setup),
        }
    }
}

impl FromStr for Suite {
    type Err = ChError;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ChError::Parse(format!("unknown suite '{s}'")))
    }
}

/// One measured quantity against its bound. `lower` rows pass when the value
/// is at least the bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    pub value: f64,
    pub bound: f64,
    pub lower: bool,
    pub pass: bool,
}

impl Row {
    pub fn at_most(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { label: label.into(), value, bound, lower: false, pass: value <= bound }
    }

    pub fn at_least(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { label: label.into(), value, bound, lower: true, pass: value >= bound }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub rows: Vec<Row>,
}

impl SuiteReport {
    fn new(suite: Suite) -> Self {
        Self { suite: suite.name().into(), rows: vec![] }
    }

    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&Row> {
        self.rows.iter().filter(|r| !r.pass).collect()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {}", self.suite)?;
        let w = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
        for r in &self.rows {
            let op = if r.lower { ">=" } else { "<=" };
            let mark = if r.pass { "ok" } else { "FAIL" };
            writeln!(f, "  {:w$}  {:>11.4e} {op} {:<10.3e} {mark}", r.label, r.value, r.bound)?;
        }
        write!(f, "suite {}: {}", self.suite, if self.pass() { "pass" } else { "FAIL" })
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
}

/// Fast scans against the O(n²) oracle on seeded states, convergence of the
/// derivative identities, and the background kernel g.
pub fn identities(setup: &PartitionSetup) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new(Suite::Identities);

    let grid = Grid1d::symmetric(12.0, 1024)?;
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let x = to_lagrangian(&seeded_state(seed, grid, setup, 0.3), setup)?;
        let fast = compute_pq(&x, setup)?;
        let slow = naive_pq(&x, setup)?;
        worst = worst.max(max_abs_diff(&fast.p, &slow.p)).max(max_abs_diff(&fast.q, &slow.q));
    }
    rep.rows.push(Row::at_most("scan vs naive P,Q (20 states, n=1024)", worst, 1e-12));

    let mut prev: Option<(f64, f64)> = None;
    for n in [1024usize, 2048, 4096] {
        let g = Grid1d::symmetric(12.0, n)?;
        let e = kink(0.75, 0.3, -2.0, 1.0, g, setup);
        let x = to_lagrangian(&e, setup)?;
        let r = check_identities(&x, &compute_pq(&x, setup)?, setup);
        rep.rows.push(Row::at_most(format!("Q_xi identity n={n}"), r.q_residual, 1e-2));
        rep.rows.push(Row::at_most(format!("P_xi identity n={n}"), r.p_residual, 1e-2));
        if let Some((q0, p0)) = prev {
            rep.rows.push(Row::at_least(format!("Q_xi reduction to n={n}"), q0 / r.q_residual, 3.5));
            rep.rows.push(Row::at_least(format!("P_xi reduction to n={n}"), p0 / r.p_residual, 3.5));
        }
        prev = Some((r.q_residual, r.p_residual));
    }

    rep.rows.push(Row::at_most("max |g - g'' - chi^2|", setup.g_residual, 1e-8));
    let (mut min_gp, mut gp_err) = (f64::INFINITY, 0.0f64);
    let d = 1e-3;
    for i in 0..=4000 {
        let x = -10.0 + 20.0 * i as f64 / 4000.0;
        min_gp = min_gp.min(setup.g_prime(x));
        let c = |h: f64| (setup.g(x + h) - setup.g(x - h)) / (2.0 * h);
        let fd = (4.0 * c(0.5 * d) - c(d)) / 3.0;
        gp_err = gp_err.max((setup.g_prime(x) - fd).abs());
    }
    rep.rows.push(Row::at_least("min g'", min_gp, 0.0));
    rep.rows.push(Row::at_most("g' vs differences of g", gp_err, 1e-8));
    let l = 20.0f64;
    let tails = setup.g(-l).abs().max((1.0 - setup.g(l)).abs());
    rep.rows.push(Row::at_most("tail gap of g at |x|=20", tails, (-l).exp()));
    Ok(rep)
}

/// The six round-trip cases. A C² partition function limits the kink cases
/// to roughly 10⁻⁶ at n ≈ 4000, so the suite runs on a fine grid.
pub fn roundtrip_cases(grid: Grid1d, setup: &PartitionSetup) -> Result<Vec<(&'static str, EulerianState)>> {
    Ok(vec![
        ("zero", zero(grid)),
        ("bump", kink(0.0, 0.5, 0.0, 1.0, grid, setup)),
        ("kink c=0.75 + bump", kink(0.75, 0.3, -2.0, 1.0, grid, setup)),
        ("kink c=1", kink(1.0, 0.0, 0.0, 1.0, grid, setup)),
        ("bump + atom", with_atom(kink(0.0, 0.5, 1.0, 0.8, grid, setup), -5.0, 0.5)?),
        (
            "kink c=1 + two atoms",
            with_atom(with_atom(kink(1.0, 0.2, -1.0, 0.7, grid, setup), -5.5, 0.3)?, 4.5, 0.7)?,
        ),
    ])
}

pub fn roundtrip(setup: &PartitionSetup) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new(Suite::Roundtrip);
    let grid = Grid1d::symmetric(10.0, 64001)?;
    for (name, e) in roundtrip_cases(grid, setup)? {
        let back = to_eulerian(&to_lagrangian(&e, setup)?, setup)?;
        rep.rows.push(Row::at_most(format!("d_D(M(L(e)), e) {name}"), distance_d(&back, &e, setup)?, 1e-8));
        let atoms = (back.measure.atom_mass() - e.measure.atom_mass()).abs();
        rep.rows.push(Row::at_most(format!("atom mass {name}"), atoms, 1e-8));
    }
    Ok(rep)
}

/// Evolving X∘f and X then projecting onto F₀ gives the same state.
pub fn equivariance(setup: &PartitionSetup) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new(Suite::Equivariance);
    let grid = Grid1d::symmetric(20.0, 4097)?;
    let x = to_lagrangian(&kink(0.75, 0.3, -2.0, 1.0, grid, setup), setup)?;
    let f = make_relabeling(RelabelKind::SmoothShift { amplitude: 0.3, center: 0.0, width: 1.0 }, grid)?;
    let xf = x.relabel(&f)?;
    let opts = EvolveOptions { dt: 1e-3, snapshot_every: 1000, threads: 1 };
    let a = evolve(&x, 1.0, opts, setup)?;
    let b = evolve(&xf, 1.0, opts, setup)?;
    let d0 = e_norm_distance(&x.project_f0()?, &xf.project_f0()?, setup)?;
    let d1 = e_norm_distance(&a.last().project_f0()?, &b.last().project_f0()?, setup)?;
    rep.rows.push(Row::at_most("E-distance of projections t=0", d0, 1e-4));
    rep.rows.push(Row::at_most("E-distance of projections t=1", d1, 1e-4));
    Ok(rep)
}

/// Residual maxima of the four weak forms on the peakon run at one
/// resolution, in the order momentum, pressure, energy, measure.
pub fn peakon_weak_residuals(setup: &PartitionSetup, n: usize, dt: f64) -> Result<[f64; 4]> {
    let grid = Grid1d::symmetric(30.0, n)?;
    let e = peakon(1.0, 0.0, grid);
    let x0 = to_lagrangian_on(&e, setup, centered_label_grid(&e, 0.0)?, D_TOL)?;
    let traj = evolve(&x0, 1.0, EvolveOptions { dt, snapshot_every: 5, threads: 1 }, setup)?;
    let tests = bump_family(2024, 16, (0.0, 1.0), (-4.0, 5.0));
    Ok(weak_residual(&traj, setup, grid, &tests)?.max_abs())
}

pub fn weakform(setup: &PartitionSetup) -> Result<SuiteReport> {
    const NAMES: [&str; 4] = ["momentum", "pressure", "energy", "measure"];
    let mut rep = SuiteReport::new(Suite::Weakform);
    let runs = [(1025usize, 4e-3), (2049, 2e-3), (4097, 1e-3)];
    let res = runs
        .iter()
        .map(|&(n, dt)| peakon_weak_residuals(setup, n, dt))
        .collect::<Result<Vec<_>>>()?;
    for k in 0..4 {
        for j in 1..runs.len() {
            let order = (res[j - 1][k] / res[j][k]).log2();
            rep.rows.push(Row::at_least(format!("{} order to n={}", NAMES[k], runs[j].0), order, 1.0));
        }
        rep.rows.push(Row::at_most(format!("{} residual n={}", NAMES[k], runs[2].0), res[2][k], 1e-3));
    }
    Ok(rep)
}

/// d_D under `setup` against d_D under a second partition function, on 50
/// seeded pairs; the ratio must stay within the conversion norm Ĉ.
pub fn metric(setup: &PartitionSetup) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new(Suite::Metric);
    let other = PartitionSetup::smooth();
    let c_hat = setup.psi_norm(&other);
    let grid = Grid1d::symmetric(12.0, 2001)?;
    let conv = |e: &EulerianState| -> Result<EulerianState> {
        Ok(EulerianState {
            profile: convert_representation(&e.profile, setup, &other)?,
            measure: e.measure.clone(),
        })
    };
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 0..50u64 {
        let a = seeded_state(1000 + 2 * k, grid, setup, 0.3);
        let b = seeded_state(1001 + 2 * k, grid, setup, 0.3);
        let d = distance_d(&a, &b, setup)?;
        let dt = distance_d(&conv(&a)?, &conv(&b)?, &other)?;
        lo = lo.min(dt / d);
        hi = hi.max(dt / d);
    }
    rep.rows.push(Row::at_least("min ratio (bound 1/C)", lo, 1.0 / c_hat));
    rep.rows.push(Row::at_most("max ratio (bound C)", hi, c_hat));
    Ok(rep)
}
