//! Eulerian states (u, μ), the maps L and M to and from Lagrangian
//! coordinates, the solution operator T_t = M S_t L and the distance d_D.
//!
//! L builds F(x) = x + μ((−∞, x)) with left-open atoms and takes its
//! generalized inverse y(ξ) = sup{y : F(y) < ξ} on the label grid. Atoms turn
//! into plateaus of y where y_ξ = 0 and h = 1. M pushes h dξ forward by y:
//! plateaus become atoms again, the rest becomes the density h/y_ξ.

use serde::{Deserialize, Serialize};

use crate::error::{ChError, Result};
use crate::evolution::{evolve_partial, EvolveOptions, Trajectory};
use crate::grid::{bracket_sorted, hermite, hermite_slope, lagrange4_weights, Grid1d};
use crate::lagrangian::{e_norm_distance, LagrangianState};
use crate::operators::NonlocalFields;
use crate::partition::{DecomposedProfile, PartitionSetup};

pub use crate::weak::{bump_family, weak_residual, BumpTest, WeakReport};

/// Point mass of the energy measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub pos: f64,
    pub mass: f64,
}

/// Absolutely continuous density on the x-grid plus atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyMeasure {
    pub density: Vec<f64>,
    pub atoms: Vec<Atom>,
}

impl EnergyMeasure {
    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().fold(0.0, |a, m| a + m.mass)
    }
}

/// A pair (u, μ) with u decomposed against the partition function.
#[derive(Clone, Debug, PartialEq)]
pub struct EulerianState {
    pub profile: DecomposedProfile,
    pub measure: EnergyMeasure,
}

impl EulerianState {
    pub fn grid(&self) -> Grid1d {
        self.profile.grid
    }

    pub fn u(&self, setup: &PartitionSetup) -> Vec<f64> {
        let p = &self.profile;
        p.grid
            .nodes()
            .iter()
            .zip(&p.ubar)
            .map(|(&x, &ub)| ub + p.c_minus * setup.chi(-x) + p.c_plus * setup.chi(x))
            .collect()
    }

    /// ∫u²dx + μ(ℝ), the quantity conserved by conservative solutions when
    /// both asymptotes vanish.
    pub fn total_energy(&self, setup: &PartitionSetup) -> f64 {
        let u = self.u(setup);
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        let g = self.grid();
        g.trapezoid(&sq) + g.trapezoid(&self.measure.density) + self.measure.atom_mass()
    }

    /// μ(ℝ) alone.
    pub fn measure_mass(&self) -> f64 {
        self.grid().trapezoid(&self.measure.density) + self.measure.atom_mass()
    }

    /// The state w(x) = u(x − dx) + du on the translated grid.
    pub fn shifted(&self, dx: f64, du: f64, setup: &PartitionSetup) -> Result<Self> {
        let g = self.grid();
        let grid = Grid1d::new(g.min + dx, g.max + dx, g.n)?;
        let u = self.u(setup);
        let c_minus = self.profile.c_minus + du;
        let c_plus = self.profile.c_plus + du;
        let ubar = grid
            .nodes()
            .iter()
            .zip(&u)
            .map(|(&x, &v)| v + du - c_minus * setup.chi(-x) - c_plus * setup.chi(x))
            .collect();
        Ok(Self {
            profile: DecomposedProfile { grid, ubar, c_minus, c_plus },
            measure: EnergyMeasure {
                density: self.measure.density.clone(),
                atoms: self.measure.atoms.iter().map(|a| Atom { pos: a.pos + dx, mass: a.mass }).collect(),
            },
        })
    }

    /// Relative L¹ mismatch between the density and u_x² from central
    /// differences. Kinks contribute O(Δx).
    pub fn density_mismatch(&self, setup: &PartitionSetup) -> f64 {
        let g = self.grid();
        let u = self.u(setup);
        let d = g.spacing();
        let n = g.n;
        let ux2: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i == 0 {
                    (u[1] - u[0]) / d
                } else if i == n - 1 {
                    (u[n - 1] - u[n - 2]) / d
                } else {
                    (u[i + 1] - u[i - 1]) / (2.0 * d)
                };
                s * s
            })
            .collect();
        let diff: Vec<f64> =
            self.measure.density.iter().zip(&ux2).map(|(a, b)| (a - b).abs()).collect();
        let scale = g.trapezoid(&self.measure.density) + g.trapezoid(&ux2) + 1e-300;
        g.trapezoid(&diff) / scale
    }

    /// Structural membership test for D: matching lengths, nonnegative
    /// density, positive atoms inside the grid and density ≈ u_x².
    pub fn check_in_d(&self, setup: &PartitionSetup, tol: f64) -> Result<()> {
        let g = self.grid();
        if self.profile.ubar.len() != g.n || self.measure.density.len() != g.n {
            return Err(ChError::GridMismatch("profile and density must match the grid".into()));
        }
        if let Some((i, &v)) =
            self.measure.density.iter().enumerate().find(|(_, &v)| !(v >= 0.0))
        {
            return Err(ChError::NotInD(format!("density {v:.3e} at node {i}")));
        }
        for a in &self.measure.atoms {
            if !(a.mass > 0.0) {
                return Err(ChError::NonpositiveMass(a.mass));
            }
            if !g.contains(a.pos) {
                return Err(ChError::NotInD(format!("atom at {} lies outside the grid", a.pos)));
            }
        }
        let m = self.density_mismatch(setup);
        if m > tol {
            return Err(ChError::NotInD(format!(
                "density differs from u_x^2 by {m:.3e} (relative L1)"
            )));
        }
        Ok(())
    }
}

/// Default tolerance of the density consistency check in [`to_lagrangian`].
pub const D_TOL: f64 = 0.05;

/// Below this density U_ξ comes from the slope of the velocity interpolant
/// and the nodal slopes from finite differences; above it U_ξ = ±√p·y_ξ.
const SQRT_SWITCH: f64 = 1e-4;

const JUMP_SLACK: f64 = 1e-11;

/// Integrals from 0 to θ of the four-point Lagrange weights, offsets −1..2.
fn lagrange4_integrals(th: f64) -> [f64; 4] {
    let t2 = th * th;
    let t3 = t2 * th;
    let t4 = t3 * th;
    [
        -t2 / 6.0 + t3 / 6.0 - t4 / 24.0,
        th - t2 / 4.0 - t3 / 3.0 + t4 / 8.0,
        t2 / 2.0 + t3 / 6.0 - t4 / 8.0,
        -t2 / 12.0 + t4 / 24.0,
    ]
}

/// Piecewise cubic density model with cumulative mass, linear in cells where
/// the cubic would dip below zero.
struct DensityModel<'a> {
    grid: Grid1d,
    p: &'a [f64],
    cubic: Vec<bool>,
    mass: Vec<f64>,
}

impl<'a> DensityModel<'a> {
    fn new(grid: Grid1d, p: &'a [f64]) -> Self {
        let n = grid.n;
        let d = grid.spacing();
        let mut cubic = vec![false; n - 1];
        let mut mass = vec![0.0; n];
        for i in 0..n - 1 {
            if i >= 1 && i + 2 < n {
                cubic[i] = (0..=8).all(|k| {
                    let w = lagrange4_weights(k as f64 / 8.0);
                    w[0] * p[i - 1] + w[1] * p[i] + w[2] * p[i + 1] + w[3] * p[i + 2] >= 0.0
                });
            }
            let cell = if cubic[i] {
                let w = lagrange4_integrals(1.0);
                d * (w[0] * p[i - 1] + w[1] * p[i] + w[2] * p[i + 1] + w[3] * p[i + 2])
            } else {
                0.5 * d * (p[i] + p[i + 1])
            };
            mass[i + 1] = mass[i] + cell;
        }
        Self { grid, p, cubic, mass }
    }

    fn value(&self, i: usize, t: f64) -> f64 {
        let p = self.p;
        if self.cubic[i] {
            let w = lagrange4_weights(t);
            (w[0] * p[i - 1] + w[1] * p[i] + w[2] * p[i + 1] + w[3] * p[i + 2]).max(0.0)
        } else {
            p[i] + t * (p[i + 1] - p[i])
        }
    }

    /// ∫_{x_0}^{x_i + tΔ} density.
    fn cumulative(&self, i: usize, t: f64) -> f64 {
        let d = self.grid.spacing();
        let p = self.p;
        let part = if self.cubic[i] {
            let w = lagrange4_integrals(t);
            d * (w[0] * p[i - 1] + w[1] * p[i] + w[2] * p[i + 1] + w[3] * p[i + 2])
        } else {
            d * (p[i] * t + 0.5 * t * t * (p[i + 1] - p[i]))
        };
        self.mass[i] + part
    }
}

/// Velocity interpolant on the x-grid: cubic Hermite with nodal slopes taken
/// from √density where it is large (one-sided at kinks) and from fourth-order
/// differences where it is small.
struct VelocityModel {
    d: f64,
    u: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl VelocityModel {
    fn new(grid: &Grid1d, u: Vec<f64>, p: &[f64]) -> Self {
        let n = grid.n;
        let d = grid.spacing();
        let fd = |i: usize| -> f64 {
            if i >= 2 && i + 2 < n {
                (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]) / (12.0 * d)
            } else if i >= 1 && i + 1 < n {
                (u[i + 1] - u[i - 1]) / (2.0 * d)
            } else if i == 0 {
                (u[1] - u[0]) / d
            } else {
                (u[n - 1] - u[n - 2]) / d
            }
        };
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        for i in 0..n {
            let s = p[i].max(0.0).sqrt();
            if p[i] < SQRT_SWITCH || i == 0 || i + 1 == n {
                left[i] = fd(i);
                right[i] = left[i];
                continue;
            }
            let dl = u[i] - u[i - 1];
            let dr = u[i + 1] - u[i];
            let kink = dl * dr < 0.0 && s * d > 0.75 * dl.abs().max(dr.abs());
            if kink {
                left[i] = dl.signum() * s;
                right[i] = dr.signum() * s;
            } else {
                let sg = (u[i + 1] - u[i - 1]).signum();
                left[i] = sg * s;
                right[i] = sg * s;
            }
        }
        Self { d, u, left, right }
    }

    fn eval(&self, i: usize, t: f64) -> (f64, f64) {
        let (f0, f1, d0, d1) = (self.u[i], self.u[i + 1], self.right[i], self.left[i + 1]);
        (hermite(f0, f1, d0, d1, self.d, t), hermite_slope(f0, f1, d0, d1, self.d, t))
    }
}

/// L on the x-grid of the state.
pub fn to_lagrangian(eul: &EulerianState, setup: &PartitionSetup) -> Result<LagrangianState> {
    to_lagrangian_on(eul, setup, eul.grid(), D_TOL)
}

/// L onto an explicit label grid with a given density-consistency tolerance.
pub fn to_lagrangian_on(
    eul: &EulerianState,
    setup: &PartitionSetup,
    xi_grid: Grid1d,
    tol: f64,
) -> Result<LagrangianState> {
    if eul.profile.c_minus != 0.0 {
        return Err(ChError::Unsupported(
            "nonzero left asymptote; reduce the data first".into(),
        ));
    }
    eul.check_in_d(setup, tol)?;
    let g = eul.grid();
    let d = g.spacing();
    let n = g.n;
    let c = eul.profile.c_plus;
    let dens = DensityModel::new(g, &eul.measure.density);
    let vel = VelocityModel::new(&g, eul.u(setup), &eul.measure.density);

    let mut atoms = eul.measure.atoms.clone();
    atoms.sort_by(|a, b| a.pos.total_cmp(&b.pos));
    // Continuous part F_c(x) = x + M(x) at the nodes.
    let fc_nodes: Vec<f64> = (0..n).map(|i| g.node(i) + dens.mass[i]).collect();
    let fc = |x: f64| -> f64 {
        let (i, t) = g.locate(x);
        x + dens.cumulative(i, t)
    };
    // Jump intervals [F(a⁻), F(a⁻) + m] of each atom.
    let mut jumps = Vec::with_capacity(atoms.len());
    let mut before = 0.0;
    for a in &atoms {
        let lo = fc(a.pos) + before;
        jumps.push((lo, lo + a.mass, before));
        before += a.mass;
    }

    // Solves F_c(x) = target for x in the grid range by Newton with bisection.
    let invert_fc = |target: f64| -> f64 {
        if target <= fc_nodes[0] {
            return g.min + (target - fc_nodes[0]);
        }
        if target >= fc_nodes[n - 1] {
            return g.max + (target - fc_nodes[n - 1]);
        }
        let i = bracket_sorted(&fc_nodes, target).unwrap_or(0).min(n - 2);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut t = (target - fc_nodes[i]) / (fc_nodes[i + 1] - fc_nodes[i]);
        for _ in 0..60 {
            let r = g.node(i) + t * d + dens.cumulative(i, t) - target;
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if r.abs() <= 1e-15 * (1.0 + target.abs()) {
                break;
            }
            let slope = d * (1.0 + dens.value(i, t));
            let next = t - r / slope;
            t = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-16 {
                break;
            }
        }
        g.node(i) + t * d
    };

    let mut out = LagrangianState::zero(xi_grid);
    out.c = c;
    let mut k = 0usize;
    for j in 0..xi_grid.n {
        let xi = xi_grid.node(j);
        // Labels within round-off of a jump end count as on the plateau so
        // that repeated round trips classify boundary nodes the same way.
        let slack = JUMP_SLACK * (1.0 + xi.abs());
        while k < jumps.len() && xi > jumps[k].1 + slack {
            k += 1;
        }
        let on_atom = k < jumps.len() && xi >= jumps[k].0 - slack;
        let (y, yx, h, ux);
        let u;
        if on_atom {
            y = atoms[k].pos;
            yx = 0.0;
            h = 1.0;
            ux = 0.0;
            let (i, t) = g.locate(y);
            u = vel.eval(i, t).0;
        } else {
            let shift = if k > 0 { jumps[k - 1].2 + atoms[k - 1].mass } else { 0.0 };
            y = invert_fc(xi - shift);
            if y < g.min || y > g.max {
                // Beyond the data the profile sits at its asymptote.
                let end = if y < g.min { 0 } else { n - 1 };
                yx = 1.0;
                h = 0.0;
                ux = 0.0;
                u = vel.u[end];
            } else {
                let (i, t) = g.locate(y);
                let p = dens.value(i, t);
                let (uv, slope) = vel.eval(i, t);
                yx = 1.0 / (1.0 + p);
                if p >= SQRT_SWITCH {
                    let sg = if slope != 0.0 { slope.signum() } else { 0.0 };
                    ux = sg * p.sqrt() * yx;
                    h = p * yx;
                } else {
                    // √p would amplify the interpolation error of a small
                    // density; take the slope and make h consistent with it.
                    ux = slope * yx;
                    h = slope * slope * yx;
                }
                u = uv;
            }
        }
        let (chi, chi_p, _) = setup.eval_chi(y);
        out.zeta[j] = y - xi;
        out.zeta_xi[j] = yx - 1.0;
        out.h[j] = h;
        out.ubar[j] = u - c * chi;
        out.ubar_xi[j] = ux - c * chi_p * yx;
    }
    Ok(out)
}

/// F(x) = x + μ((−∞, x)), the distribution function that L inverts, with
/// the same density model as L.
pub fn distribution_function(eul: &EulerianState, x: f64) -> f64 {
    let g = eul.grid();
    let dens = DensityModel::new(g, &eul.measure.density);
    let atoms: f64 = eul.measure.atoms.iter().filter(|a| a.pos < x).map(|a| a.mass).sum();
    let cont = if x <= g.min {
        0.0
    } else if x >= g.max {
        dens.mass[g.n - 1]
    } else {
        let (i, t) = g.locate(x);
        dens.cumulative(i, t)
    };
    x + cont + atoms
}

/// A label grid with the spacing of the state's grid, shifted by at most
/// half a cell so that the label of `anchor` falls at a cell midpoint.
///
/// Along a kink the energy density jumps in label space once t > 0. With
/// the jump at a midpoint the trapezoid sums behind P and Q stay second
/// order; with the jump on a node they drop to first order.
pub fn centered_label_grid(eul: &EulerianState, anchor: f64) -> Result<Grid1d> {
    let g = eul.grid();
    let d = g.spacing();
    let label = distribution_function(eul, anchor);
    let k = ((label - g.min) / d - 0.5).round();
    let off = label - (g.min + (k + 0.5) * d);
    Grid1d::new(g.min + off, g.max + off, g.n)
}

/// Where an x-node sits relative to the characteristics.
#[derive(Clone, Copy, Debug)]
enum Loc {
    Left,
    Right,
    Cell(usize, f64),
}

/// Inverts y on the label grid at every node of `x_grid`, using cubic
/// Hermite pieces with slopes capped at three times the secant so each piece
/// stays monotone.
fn locate_characteristics(x: &LagrangianState, x_grid: &Grid1d) -> Result<Vec<Loc>> {
    let y = x.y();
    let n = x.len();
    let d = x.grid.spacing();
    for i in 0..n - 1 {
        if y[i + 1] < y[i] - crate::operators::MONOTONE_TOL {
            return Err(ChError::NonMonotoneY { index: i, drop: y[i] - y[i + 1] });
        }
    }
    let yx: Vec<f64> = x.zeta_xi.iter().map(|z| (1.0 + z).max(0.0)).collect();
    let mut out = Vec::with_capacity(x_grid.n);
    for k in 0..x_grid.n {
        let xk = x_grid.node(k);
        if xk < y[0] {
            out.push(Loc::Left);
            continue;
        }
        if xk > y[n - 1] {
            out.push(Loc::Right);
            continue;
        }
        let mut i = bracket_sorted(&y, xk).unwrap_or(0);
        if i >= n - 1 {
            i = n - 2;
        }
        // On a plateau several cells qualify; take the first one that ends at
        // or beyond the target.
        let (y0, y1) = (y[i], y[i + 1]);
        if y1 <= y0 {
            out.push(Loc::Cell(i, 0.0));
            continue;
        }
        let sec = (y1 - y0) / d;
        let m0 = yx[i].min(3.0 * sec);
        let m1 = yx[i + 1].min(3.0 * sec);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut t = ((xk - y0) / (y1 - y0)).clamp(0.0, 1.0);
        for _ in 0..60 {
            let r = hermite(y0, y1, m0, m1, d, t) - xk;
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if r.abs() <= 1e-15 * (1.0 + xk.abs()) || hi - lo < 1e-16 {
                break;
            }
            let s = hermite_slope(y0, y1, m0, m1, d, t);
            let next = if s > 0.0 { t - r / (s * d) } else { f64::NAN };
            t = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        }
        out.push(Loc::Cell(i, t));
    }
    Ok(out)
}

/// Cells whose image is shorter than this fraction of an output cell count
/// as compressed.
pub const COMPRESSED_FRACTION: f64 = 0.05;

/// Nodes whose energy M reports as atoms: exact plateaus, plus runs of
/// compressed nodes whose whole image fits inside one output cell of width
/// `dx`. The latter cannot be told apart from an atom at that resolution.
pub fn atom_mask(x: &LagrangianState, dx: f64) -> Vec<bool> {
    let mut mask = x.plateau_mask();
    let n = x.len();
    let d = x.grid.spacing();
    let squeezed: Vec<bool> =
        (0..n).map(|i| (1.0 + x.zeta_xi[i]) * d < COMPRESSED_FRACTION * dx).collect();
    let mut i = 0;
    while i < n {
        if !squeezed[i] {
            i += 1;
            continue;
        }
        let i0 = i;
        while i + 1 < n && squeezed[i + 1] {
            i += 1;
        }
        if i > i0 && x.y_at(i) - x.y_at(i0) <= dx {
            mask[i0..=i].iter_mut().for_each(|m| *m = true);
        }
        i += 1;
    }
    mask
}

/// Runs of `mask` as atoms.
pub fn plateau_atoms(x: &LagrangianState, mask: &[bool]) -> Vec<Atom> {
    let n = x.len();
    let d = x.grid.spacing();
    let yx = |i: usize| 1.0 + x.zeta_xi[i];
    let mut atoms = Vec::new();
    let mut i = 0;
    while i < n {
        if !mask[i] {
            i += 1;
            continue;
        }
        let i0 = i;
        while i + 1 < n && mask[i + 1] {
            i += 1;
        }
        let i1 = i;
        i += 1;
        let hsum: f64 = x.h[i0..=i1].iter().sum();
        let pos = if hsum > 0.0 {
            (i0..=i1).map(|k| x.h[k] * x.y_at(k)).sum::<f64>() / hsum
        } else {
            (i0..=i1).map(|k| x.y_at(k)).sum::<f64>() / (i1 - i0 + 1) as f64
        };
        let mut mass: f64 = (i0..i1).map(|k| 0.5 * d * (x.h[k] + x.h[k + 1])).sum();
        if i0 > 0 {
            let b = i0 - 1;
            let start = if yx(b) > 0.0 {
                (x.grid.node(b) + (pos - x.y_at(b)) / yx(b)).clamp(x.grid.node(b), x.grid.node(i0))
            } else {
                x.grid.node(b)
            };
            mass += (x.grid.node(i0) - start) * x.h[i0];
        }
        if i1 + 1 < n {
            let b = i1 + 1;
            let end = if yx(b) > 0.0 {
                (x.grid.node(b) - (x.y_at(b) - pos) / yx(b)).clamp(x.grid.node(i1), x.grid.node(b))
            } else {
                x.grid.node(b)
            };
            mass += (end - x.grid.node(i1)) * x.h[i1];
        }
        if mass > 0.0 {
            atoms.push(Atom { pos, mass });
        }
    }
    atoms
}

/// Interpolates a label-space field with its label derivative at the located
/// x-nodes.
fn push_values(x: &LagrangianState, locs: &[Loc], v: &[f64], dv: &[f64], ends: (f64, f64)) -> Vec<f64> {
    let d = x.grid.spacing();
    locs.iter()
        .map(|l| match *l {
            Loc::Left => ends.0,
            Loc::Right => ends.1,
            Loc::Cell(i, t) => hermite(v[i], v[i + 1], dv[i], dv[i + 1], d, t),
        })
        .collect()
}

/// M onto the label grid itself.
pub fn to_eulerian(x: &LagrangianState, setup: &PartitionSetup) -> Result<EulerianState> {
    to_eulerian_on(x, setup, x.grid)
}

/// M: (y, U, h) ↦ (u, μ) sampled on `x_grid`.
pub fn to_eulerian_on(
    x: &LagrangianState,
    setup: &PartitionSetup,
    x_grid: Grid1d,
) -> Result<EulerianState> {
    x.check_lengths()?;
    let locs = locate_characteristics(x, &x_grid)?;
    let n = x.len();
    let (u, ux) = x.velocity(setup);
    let c = x.c;
    let uvals = push_values(x, &locs, &u, &ux, (x.ubar[0], x.ubar[n - 1] + c));
    let mask = atom_mask(x, x_grid.spacing());
    let dens_nodes: Vec<f64> = (0..n)
        .map(|i| if mask[i] { f64::NAN } else { x.h[i] / (1.0 + x.zeta_xi[i]) })
        .collect();
    let valid = |i: usize| !mask[i];
    let density: Vec<f64> = locs
        .iter()
        .map(|l| match *l {
            Loc::Left | Loc::Right => 0.0,
            Loc::Cell(i, t) => {
                if i >= 1 && i + 2 < n && (i - 1..=i + 2).all(valid) {
                    let w = lagrange4_weights(t);
                    (w[0] * dens_nodes[i - 1]
                        + w[1] * dens_nodes[i]
                        + w[2] * dens_nodes[i + 1]
                        + w[3] * dens_nodes[i + 2])
                        .max(0.0)
                } else if valid(i) && valid(i + 1) {
                    dens_nodes[i] + t * (dens_nodes[i + 1] - dens_nodes[i])
                } else if valid(i) {
                    dens_nodes[i]
                } else if valid(i + 1) {
                    dens_nodes[i + 1]
                } else {
                    // Exactly at an atom: average the densities beside the run.
                    let mut l = i;
                    while l > 0 && !valid(l) {
                        l -= 1;
                    }
                    let mut r = i + 1;
                    while r + 1 < n && !valid(r) {
                        r += 1;
                    }
                    let a = if valid(l) { dens_nodes[l] } else { 0.0 };
                    let b = if valid(r) { dens_nodes[r] } else { 0.0 };
                    0.5 * (a + b)
                }
            }
        })
        .collect();
    let ubar = x_grid
        .nodes()
        .iter()
        .zip(&uvals)
        .map(|(&xk, &v)| v - c * setup.chi(xk))
        .collect();
    Ok(EulerianState {
        profile: DecomposedProfile { grid: x_grid, ubar, c_minus: 0.0, c_plus: c },
        measure: EnergyMeasure { density, atoms: plateau_atoms(x, &mask) },
    })
}

/// P and its x-derivative Q pushed forward to `x_grid`.
pub fn pushforward_pq(
    x: &LagrangianState,
    fields: &NonlocalFields,
    setup: &PartitionSetup,
    x_grid: Grid1d,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let locs = locate_characteristics(x, &x_grid)?;
    let n = x.len();
    let (u, _) = x.velocity(setup);
    let yx = x.y_xi();
    let p_xi: Vec<f64> = (0..n).map(|i| fields.q[i] * yx[i]).collect();
    let q_xi: Vec<f64> =
        (0..n).map(|i| -0.5 * x.h[i] - (u[i] * u[i] - fields.p[i]) * yx[i]).collect();
    let c2 = x.c * x.c;
    // Outside the characteristics only the background remains.
    let edge = |xk: f64| (c2 * setup.g(xk), c2 * setup.g_prime(xk));
    let mut p = push_values(x, &locs, &fields.p, &p_xi, (0.0, 0.0));
    let mut q = push_values(x, &locs, &fields.q, &q_xi, (0.0, 0.0));
    for (k, l) in locs.iter().enumerate() {
        if !matches!(l, Loc::Cell(..)) {
            let (a, b) = edge(x_grid.node(k));
            p[k] = a;
            q[k] = b;
        }
    }
    Ok((p, q))
}

/// d_D via the normalized Lagrangian representatives.
pub fn distance_d(a: &EulerianState, b: &EulerianState, setup: &PartitionSetup) -> Result<f64> {
    let xa = to_lagrangian(a, setup)?.project_f0()?;
    let xb = to_lagrangian(b, setup)?.project_f0()?;
    e_norm_distance(&xa, &xb, setup)
}

/// Output of [`conservative_solve`].
#[derive(Clone, Debug)]
pub struct Solution {
    pub times: Vec<f64>,
    pub eulerian: Vec<EulerianState>,
    pub trajectory: Trajectory,
    /// Set when the march stopped early.
    pub failure: Option<String>,
    pub last_good_time: f64,
}

/// T_t = M S_t L at every snapshot. A failing step keeps the snapshots
/// computed so far and reports the failure.
pub fn conservative_solve(
    eul0: &EulerianState,
    t_final: f64,
    opts: EvolveOptions,
    setup: &PartitionSetup,
) -> Result<Solution> {
    conservative_solve_on(eul0, eul0.grid(), t_final, opts, setup)
}

/// [`conservative_solve`] with an explicit label grid. The outputs are
/// sampled on the grid of `eul0` whatever the labeling.
pub fn conservative_solve_on(
    eul0: &EulerianState,
    xi_grid: Grid1d,
    t_final: f64,
    opts: EvolveOptions,
    setup: &PartitionSetup,
) -> Result<Solution> {
    let x0 = to_lagrangian_on(eul0, setup, xi_grid, D_TOL)?;
    let (trajectory, err) = evolve_partial(&x0, t_final, opts, setup);
    let grid = eul0.grid();
    let eulerian = trajectory
        .states
        .iter()
        .map(|x| to_eulerian_on(x, setup, grid))
        .collect::<Result<Vec<_>>>()?;
    let last_good_time = *trajectory.times.last().unwrap_or(&0.0);
    Ok(Solution {
        times: trajectory.times.clone(),
        eulerian,
        failure: err.map(|e| e.to_string()),
        last_good_time,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_eul(grid: Grid1d) -> EulerianState {
        EulerianState {
            profile: DecomposedProfile { grid, ubar: vec![0.0; grid.n], c_minus: 0.0, c_plus: 0.0 },
            measure: EnergyMeasure { density: vec![0.0; grid.n], atoms: vec![] },
        }
    }

    #[test]
    fn lagrange_integrals_match_quadrature() {
        for &th in &[0.0, 0.3, 1.0] {
            let exact = lagrange4_integrals(th);
            let m = 2000;
            let mut num = [0.0; 4];
            for k in 0..m {
                let t = (k as f64 + 0.5) / m as f64 * th;
                let w = lagrange4_weights(t);
                for j in 0..4 {
                    num[j] += w[j] * th / m as f64;
                }
            }
            for j in 0..4 {
                assert!((exact[j] - num[j]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn zero_maps_to_identity() {
        let s = PartitionSetup::quintic();
        let e = zero_eul(Grid1d::symmetric(5.0, 101).unwrap());
        let x = to_lagrangian(&e, &s).unwrap();
        assert!(x.zeta.iter().chain(&x.h).chain(&x.ubar).all(|&v| v.abs() < 1e-14));
        let back = to_eulerian(&x, &s).unwrap();
        assert!(back.measure.atoms.is_empty());
        assert!(back.profile.ubar.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_atom_becomes_plateau_and_back() {
        let s = PartitionSetup::quintic();
        let grid = Grid1d::new(-5.0, 5.0, 101).unwrap();
        let mut e = zero_eul(grid);
        e.measure.atoms.push(Atom { pos: 0.0, mass: 1.0 });
        let x = to_lagrangian(&e, &s).unwrap();
        for j in 0..grid.n {
            let xi = grid.node(j);
            let y = x.y_at(j);
            let expect = if xi <= 0.0 { xi } else if xi <= 1.0 { 0.0 } else { xi - 1.0 };
            assert!((y - expect).abs() < 1e-12, "xi = {xi}: y = {y}");
            let on = (-1e-12..=1.0 + 1e-12).contains(&xi);
            assert_eq!(x.h[j], if on { 1.0 } else { 0.0 });
        }
        let back = to_eulerian(&x, &s).unwrap();
        assert_eq!(back.measure.atoms.len(), 1);
        assert!((back.measure.atoms[0].mass - 1.0).abs() < 1e-8);
        assert!(back.measure.atoms[0].pos.abs() < 1e-12);
    }
}
