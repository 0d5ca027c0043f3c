//! Lagrangian states X = (ζ, Ū, c, h), the admissible set, the relabeling
//! group action and the projection onto the normalized section y + H = id.

use serde::{Deserialize, Serialize};

use crate::error::{ChError, Result};
use crate::grid::{hermite, lagrange4_weights, Grid1d};
use crate::partition::PartitionSetup;

/// Sampled Lagrangian state on a uniform label grid.
///
/// The velocity is stored decomposed: U = Ū + c·χ(y) with y = ξ + ζ, and
/// U_ξ = Ū_ξ + c·χ′(y)·y_ξ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianState {
    pub grid: Grid1d,
    pub time: f64,
    pub c: f64,
    pub zeta: Vec<f64>,
    pub ubar: Vec<f64>,
    pub h: Vec<f64>,
    pub zeta_xi: Vec<f64>,
    pub ubar_xi: Vec<f64>,
}

/// Nodewise maxima of the admissibility violations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GReport {
    pub pass: bool,
    /// max(0, −y_ξ)
    pub y_xi: f64,
    /// max(0, −h)
    pub h: f64,
    /// max(0, tol − (y_ξ + h))
    pub positivity: f64,
    /// |y_ξh − U_ξ²| / (1 + y_ξh)
    pub g3: f64,
}

/// Thresholds used by [`LagrangianState::validate_g`].
#[derive(Clone, Copy, Debug)]
pub struct GTolerance {
    pub positivity: f64,
    pub drift: f64,
}

impl Default for GTolerance {
    fn default() -> Self {
        Self { positivity: 1e-12, drift: 1e-6 }
    }
}

impl LagrangianState {
    /// Identity labeling with no velocity and no energy.
    pub fn zero(grid: Grid1d) -> Self {
        let n = grid.n;
        Self {
            grid,
            time: 0.0,
            c: 0.0,
            zeta: vec![0.0; n],
            ubar: vec![0.0; n],
            h: vec![0.0; n],
            zeta_xi: vec![0.0; n],
            ubar_xi: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.grid.n
    }

    pub fn is_empty(&self) -> bool {
        self.grid.n == 0
    }

    pub fn check_lengths(&self) -> Result<()> {
        let n = self.grid.n;
        for (name, v) in [
            ("zeta", &self.zeta),
            ("ubar", &self.ubar),
            ("h", &self.h),
            ("zeta_xi", &self.zeta_xi),
            ("ubar_xi", &self.ubar_xi),
        ] {
            if v.len() != n {
                return Err(ChError::GridMismatch(format!(
                    "{name} has {} samples, grid has {n}",
                    v.len()
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn y_at(&self, i: usize) -> f64 {
        self.grid.node(i) + self.zeta[i]
    }

    pub fn y(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.y_at(i)).collect()
    }

    pub fn y_xi(&self) -> Vec<f64> {
        self.zeta_xi.iter().map(|z| 1.0 + z).collect()
    }

    /// Full velocity U and its label derivative U_ξ.
    pub fn velocity(&self, setup: &PartitionSetup) -> (Vec<f64>, Vec<f64>) {
        let mut u = Vec::with_capacity(self.len());
        let mut u_xi = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let (chi, chi_p, _) = setup.eval_chi(self.y_at(i));
            u.push(self.ubar[i] + self.c * chi);
            u_xi.push(self.ubar_xi[i] + self.c * chi_p * (1.0 + self.zeta_xi[i]));
        }
        (u, u_xi)
    }

    pub fn validate_g(&self, setup: &PartitionSetup, tol: GTolerance) -> GReport {
        let (_, u_xi) = self.velocity(setup);
        let mut r = GReport::default();
        for i in 0..self.len() {
            let yx = 1.0 + self.zeta_xi[i];
            let h = self.h[i];
            r.y_xi = r.y_xi.max(-yx);
            r.h = r.h.max(-h);
            r.positivity = r.positivity.max(tol.positivity - (yx + h));
            let yh = yx * h;
            r.g3 = r.g3.max((yh - u_xi[i] * u_xi[i]).abs() / (1.0 + yh.abs()));
        }
        r.pass = r.y_xi <= 0.0 && r.h <= 0.0 && r.positivity <= 0.0 && r.g3 <= tol.drift;
        r
    }

    /// Cumulative energy H(ξ) with H(ξ₀) = 0.
    ///
    /// Each cell adds the trapezoid of y_ξ + h minus the increment of y, so
    /// that y + H is exactly the label whenever y_ξ + h ≡ 1. For y = id this
    /// is the plain trapezoid of h. Cells without energy add nothing.
    pub fn cumulative_h(&self) -> Result<Vec<f64>> {
        let tol = 1e-12;
        if let Some((i, &v)) = self.h.iter().enumerate().find(|(_, &v)| v < -tol) {
            return Err(ChError::NegativeDensity { index: i, value: v });
        }
        let d = self.grid.spacing();
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 0..self.len() - 1 {
            let s0 = 1.0 + self.zeta_xi[i] + self.h[i];
            let s1 = 1.0 + self.zeta_xi[i + 1] + self.h[i + 1];
            if self.h[i] + self.h[i + 1] > 0.0 {
                let dy = self.y_at(i + 1) - self.y_at(i);
                acc += (0.5 * d * (s0 + s1) - dy).max(0.0);
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Trapezoid of h over the grid.
    pub fn total_h(&self) -> f64 {
        self.grid.trapezoid(&self.h)
    }

    /// Conserved total energy ∫(h + U²y_ξ)dξ, the Lagrangian form of
    /// ∫u²dx + μ(ℝ).
    pub fn total_energy(&self, setup: &PartitionSetup) -> f64 {
        let (u, _) = self.velocity(setup);
        let f: Vec<f64> = (0..self.len())
            .map(|i| self.h[i] + u[i] * u[i] * (1.0 + self.zeta_xi[i]))
            .collect();
        self.grid.trapezoid(&f)
    }

    /// Boolean mask of nodes where y_ξ has collapsed (atoms).
    pub fn plateau_mask(&self) -> Vec<bool> {
        let sup = self.zeta_xi.iter().fold(0.0f64, |a, &z| a.max(1.0 + z));
        let thr = PLATEAU_REL * (1.0 + sup);
        self.zeta_xi.iter().map(|z| 1.0 + z < thr).collect()
    }

    /// Field values at an arbitrary label `s`, continued beyond the grid by
    /// the trivial labeling (y_ξ = 1, h = 0, Ū frozen).
    pub(crate) fn sample(&self, plateau: &[bool], s: f64) -> Sample {
        let g = &self.grid;
        let n = self.len();
        if s < g.min || s > g.max {
            let i = if s < g.min { 0 } else { n - 1 };
            return Sample {
                y: self.y_at(i) + (s - g.node(i)),
                ubar: self.ubar[i],
                h: 0.0,
                y_xi: 1.0,
                ubar_xi: 0.0,
            };
        }
        let (i, t) = g.locate(s);
        let d = g.spacing();
        let yx = |k: usize| 1.0 + self.zeta_xi[k];
        let y = hermite(self.y_at(i), self.y_at(i + 1), yx(i), yx(i + 1), d, t);
        let ubar = hermite(self.ubar[i], self.ubar[i + 1], self.ubar_xi[i], self.ubar_xi[i + 1], d, t);
        let cubic = i >= 1 && i + 2 < n && {
            let p = &plateau[i - 1..=i + 2];
            p.iter().all(|&b| b) || p.iter().all(|&b| !b)
        };
        let pick = |v: &dyn Fn(usize) -> f64| -> f64 {
            if cubic {
                let w = lagrange4_weights(t);
                w[0] * v(i - 1) + w[1] * v(i) + w[2] * v(i + 1) + w[3] * v(i + 2)
            } else {
                v(i) + t * (v(i + 1) - v(i))
            }
        };
        Sample {
            y,
            ubar,
            h: pick(&|k| self.h[k]).max(0.0),
            y_xi: pick(&|k| yx(k)).max(0.0),
            ubar_xi: pick(&|k| self.ubar_xi[k]),
        }
    }

    /// Builds a state from samples at the labels `f` with Jacobian `f_xi`.
    fn compose(&self, f: &[f64], f_xi: &[f64]) -> Self {
        let plateau = self.plateau_mask();
        let mut out = LagrangianState::zero(self.grid);
        out.c = self.c;
        out.time = self.time;
        for j in 0..self.len() {
            let s = self.sample(&plateau, f[j]);
            out.zeta[j] = s.y - self.grid.node(j);
            out.ubar[j] = s.ubar;
            out.h[j] = s.h * f_xi[j];
            out.zeta_xi[j] = s.y_xi * f_xi[j] - 1.0;
            out.ubar_xi[j] = s.ubar_xi * f_xi[j];
        }
        out
    }

    /// Action of a relabeling: (y∘f, U∘f, h∘f·f_ξ).
    pub fn relabel(&self, f: &RelabelingMap) -> Result<Self> {
        if !f.grid.same_as(&self.grid) {
            return Err(ChError::InvalidRelabeling("relabeling lives on a different grid".into()));
        }
        f.check()?;
        Ok(self.compose(&f.f, &f.f_xi))
    }

    /// Projection onto the section y + H = id, Γ(X) = X∘(y + H)⁻¹.
    pub fn project_f0(&self) -> Result<Self> {
        let hh = self.cumulative_h()?;
        let n = self.len();
        let g = &self.grid;
        let d = g.spacing();
        let phi: Vec<f64> = (0..n).map(|i| self.y_at(i) + hh[i]).collect();
        let s: Vec<f64> = (0..n).map(|i| 1.0 + self.zeta_xi[i] + self.h[i]).collect();

        let mut flat = 0usize;
        for w in phi.windows(2) {
            if w[1] - w[0] <= 1e-14 * d {
                flat += 1;
                if flat > 1 {
                    return Err(ChError::DegenerateLabeling { cells: flat });
                }
            } else {
                flat = 0;
            }
        }

        let plateau = self.plateau_mask();
        let mut f = vec![0.0; n];
        let mut f_xi = vec![0.0; n];
        let mut k = 0usize;
        for j in 0..n {
            let target = g.node(j);
            let label = if target <= phi[0] {
                g.min - (phi[0] - target)
            } else if target >= phi[n - 1] {
                g.max + (target - phi[n - 1])
            } else {
                while k + 2 < n && phi[k + 1] <= target {
                    k += 1;
                }
                // Within a cell φ is the integral of the linear interpolant of
                // y_ξ + h, rescaled to hit the node values.
                let dphi = phi[k + 1] - phi[k];
                let kappa = dphi / (0.5 * d * (s[k] + s[k + 1]));
                let r = (target - phi[k]) / (kappa * d);
                let a = 0.5 * (s[k + 1] - s[k]);
                let b = s[k];
                let disc = (b * b + 4.0 * a * r).max(0.0);
                let theta = (2.0 * r / (b + disc.sqrt())).clamp(0.0, 1.0);
                g.node(k) + theta * d
            };
            f[j] = label;
            let smp = self.sample(&plateau, label);
            let sum = smp.y_xi + smp.h;
            f_xi[j] = if sum > 1e-300 {
                1.0 / sum
            } else {
                let (i, t) = g.locate(label);
                1.0 / (s[i] + t * (s[i + 1] - s[i]))
            };
        }
        Ok(self.compose(&f, &f_xi))
    }
}

/// Relative threshold on y_ξ below which a node belongs to an atom plateau.
pub const PLATEAU_REL: f64 = 1e-8;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Sample {
    pub y: f64,
    pub ubar: f64,
    pub h: f64,
    pub y_xi: f64,
    pub ubar_xi: f64,
}

/// ‖Δζ‖_∞ + ‖Δζ_ξ‖_{L²} + ‖ΔŪ^E‖_{H¹} + |Δc| + ‖Δh‖_{L²}, where the velocity
/// is decomposed against the label, Ū^E = U − cχ(ξ).
pub fn e_norm_distance(a: &LagrangianState, b: &LagrangianState, setup: &PartitionSetup) -> Result<f64> {
    a.check_lengths()?;
    b.check_lengths()?;
    if !a.grid.same_as(&b.grid) {
        return Err(ChError::GridMismatch("states live on different grids".into()));
    }
    let g = &a.grid;
    let (ua, uxa) = a.velocity(setup);
    let (ub, uxb) = b.velocity(setup);
    let mut sup_zeta = 0.0f64;
    let mut dz = Vec::with_capacity(g.n);
    let mut du = Vec::with_capacity(g.n);
    let mut dux = Vec::with_capacity(g.n);
    let mut dh = Vec::with_capacity(g.n);
    let dc = a.c - b.c;
    for i in 0..g.n {
        let (chi, chi_p, _) = setup.eval_chi(g.node(i));
        sup_zeta = sup_zeta.max((a.zeta[i] - b.zeta[i]).abs());
        dz.push(a.zeta_xi[i] - b.zeta_xi[i]);
        du.push(ua[i] - ub[i] - dc * chi);
        dux.push(uxa[i] - uxb[i] - dc * chi_p);
        dh.push(a.h[i] - b.h[i]);
    }
    let sq = |v: &[f64]| g.trapezoid(&v.iter().map(|x| x * x).collect::<Vec<_>>());
    Ok(sup_zeta + sq(&dz).sqrt() + (sq(&du) + sq(&dux)).sqrt() + dc.abs() + sq(&dh).sqrt())
}

/// Analytic families of relabelings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RelabelKind {
    Identity,
    /// f(ξ) = ξ + a·exp(−((ξ − center)/width)²)
    SmoothShift { amplitude: f64, center: f64, width: f64 },
    /// f(ξ) = ξ − s·w·tanh((ξ − center)/w); slope dips to 1 − s at the center.
    Compress { strength: f64, center: f64, width: f64 },
}

impl RelabelKind {
    /// f and f′ at `s`.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        match *self {
            RelabelKind::Identity => (s, 1.0),
            RelabelKind::SmoothShift { amplitude, center, width } => {
                let z = (s - center) / width;
                let e = (-z * z).exp();
                (s + amplitude * e, 1.0 - 2.0 * amplitude * z * e / width)
            }
            RelabelKind::Compress { strength, center, width } => {
                let th = ((s - center) / width).tanh();
                (s - strength * width * th, 1.0 - strength * (1.0 - th * th))
            }
        }
    }
}

/// Sampled homeomorphism f with f − id bounded, and its inverse.
#[derive(Clone, Debug)]
pub struct RelabelingMap {
    pub grid: Grid1d,
    pub f: Vec<f64>,
    pub f_xi: Vec<f64>,
    pub finv: Vec<f64>,
    pub finv_xi: Vec<f64>,
    /// ‖f − id‖_{W^{1,∞}} + ‖f⁻¹ − id‖_{W^{1,∞}}
    pub alpha: f64,
}

impl RelabelingMap {
    /// Samples a map given pointwise by `(f, f′)`; the inverse is found by
    /// safeguarded Newton iteration.
    pub fn from_fn<F: Fn(f64) -> (f64, f64)>(grid: Grid1d, map: F) -> Result<Self> {
        let nodes = grid.nodes();
        let (f, f_xi): (Vec<f64>, Vec<f64>) = nodes.iter().map(|&s| map(s)).unzip();
        let min_slope = f_xi.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_slope > 0.0) || f.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChError::NotMonotone { min_slope });
        }
        let shift = nodes.iter().zip(&f).fold(0.0f64, |a, (s, v)| a.max((v - s).abs()));
        let mut finv = Vec::with_capacity(grid.n);
        let mut finv_xi = Vec::with_capacity(grid.n);
        for &target in &nodes {
            let (mut lo, mut hi) = (target - shift - 1.0, target + shift + 1.0);
            let mut x = target;
            for _ in 0..100 {
                let (v, dv) = map(x);
                let r = v - target;
                if r > 0.0 {
                    hi = x;
                } else {
                    lo = x;
                }
                if r.abs() <= 1e-15 * (1.0 + target.abs()) {
                    break;
                }
                let next = x - r / dv;
                x = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            }
            finv.push(x);
            finv_xi.push(1.0 / map(x).1);
        }
        let sup = |a: &[f64], b: &dyn Fn(usize) -> f64| {
            a.iter().enumerate().fold(0.0f64, |m, (i, v)| m.max((v - b(i)).abs()))
        };
        let alpha = sup(&f, &|i| nodes[i])
            + sup(&f_xi, &|_| 1.0)
            + sup(&finv, &|i| nodes[i])
            + sup(&finv_xi, &|_| 1.0);
        Ok(Self { grid, f, f_xi, finv, finv_xi, alpha })
    }

    pub fn inverse(&self) -> Self {
        Self {
            grid: self.grid,
            f: self.finv.clone(),
            f_xi: self.finv_xi.clone(),
            finv: self.f.clone(),
            finv_xi: self.f_xi.clone(),
            alpha: self.alpha,
        }
    }

    fn check(&self) -> Result<()> {
        let min_slope = self.f_xi.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_slope > 0.0) || self.f.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChError::NotMonotone { min_slope });
        }
        if self.f.len() != self.grid.n || self.f_xi.len() != self.grid.n {
            return Err(ChError::InvalidRelabeling("sample count does not match grid".into()));
        }
        Ok(())
    }
}

pub fn make_relabeling(kind: RelabelKind, grid: Grid1d) -> Result<RelabelingMap> {
    if let RelabelKind::SmoothShift { width, .. } | RelabelKind::Compress { width, .. } = kind {
        if !(width > 0.0) {
            return Err(ChError::InvalidRelabeling(format!("width must be positive, got {width}")));
        }
    }
    if let RelabelKind::Compress { strength, .. } = kind {
        if strength >= 1.0 {
            return Err(ChError::NotMonotone { min_slope: 1.0 - strength });
        }
    }
    RelabelingMap::from_fn(grid, |s| kind.eval(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peakon_state(n: usize, half: f64) -> LagrangianState {
        let grid = Grid1d::symmetric(half, n).unwrap();
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
    fn zero_state_is_admissible() {
        let s = PartitionSetup::quintic();
        let x = LagrangianState::zero(Grid1d::symmetric(5.0, 101).unwrap());
        assert!(x.validate_g(&s, GTolerance::default()).pass);
        assert!(x.cumulative_h().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn collapsed_node_is_reported() {
        let s = PartitionSetup::quintic();
        let mut x = LagrangianState::zero(Grid1d::symmetric(5.0, 101).unwrap());
        x.zeta_xi[40] = -1.1;
        let r = x.validate_g(&s, GTolerance::default());
        assert!(!r.pass);
        assert!((r.y_xi - 0.1).abs() < 1e-12);
    }

    #[test]
    fn peakon_energy_and_g3() {
        let s = PartitionSetup::quintic();
        let x = peakon_state(4001, 20.0);
        let r = x.validate_g(&s, GTolerance::default());
        assert!(r.pass);
        assert_eq!(r.g3, 0.0);
        let hh = x.cumulative_h().unwrap();
        assert!((hh[4000] - 1.0).abs() < 1e-4);
        assert!(hh.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn smooth_shift_is_monotone_and_compress_to_zero_is_not() {
        let grid = Grid1d::symmetric(10.0, 401).unwrap();
        let f = make_relabeling(
            RelabelKind::SmoothShift { amplitude: 0.3, center: 0.0, width: 1.0 },
            grid,
        )
        .unwrap();
        let bound = 0.3 * 2f64.sqrt() * (-0.5f64).exp();
        let dev = f.f_xi.iter().fold(0.0f64, |a, &d| a.max((d - 1.0).abs()));
        assert!(dev <= bound + 1e-12 && bound < 1.0);
        let id = make_relabeling(RelabelKind::Identity, grid).unwrap();
        assert_eq!(id.alpha, 0.0);
        let bad = make_relabeling(
            RelabelKind::Compress { strength: 1.0, center: 0.0, width: 1.0 },
            grid,
        );
        assert!(matches!(bad, Err(ChError::NotMonotone { .. })));
    }

    #[test]
    fn projection_of_normalized_state_is_identity() {
        let s = PartitionSetup::quintic();
        let grid = Grid1d::symmetric(10.0, 801).unwrap();
        let mut x = LagrangianState::zero(grid);
        // A smooth state with y_ξ + h = 1.
        for i in 0..grid.n {
            let t = grid.node(i);
            let p = 0.5 * (-t * t).exp();
            x.h[i] = p / (1.0 + p);
            x.zeta_xi[i] = 1.0 / (1.0 + p) - 1.0;
        }
        let hh: Vec<f64> = x.cumulative_h().unwrap();
        for i in 0..grid.n {
            x.zeta[i] = -hh[i];
        }
        let p = x.project_f0().unwrap();
        assert!(e_norm_distance(&x, &p, &s).unwrap() < 1e-10);
    }
}
