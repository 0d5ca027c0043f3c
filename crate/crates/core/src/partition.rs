//! Partition functions χ, the background kernel g with g − g″ = χ², and the
//! embedding of decaying profiles plus asymptotic constants.
//!
//! A partition function is monotone, vanishes on (−∞, 0] and equals one on
//! [1, ∞). Only χ, χ′ and χ″ enter the solver, so the default is the quintic
//! smoothstep. Arbitrary admissible choices are accepted as tables.
//!
//! The kernel g is the Helmholtz smoothing of χ²,
//! g(x) = ½∫e^{−|x−z|}χ²(z)dz, tabulated on [0, 1] and continued by the exact
//! exponential tails g = κ₋eˣ (x ≤ 0) and g = 1 + κ₊e^{−x} (x ≥ 1).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ChError, Result};
use crate::grid::{hermite, interp_linear, Grid1d};

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Eight-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS.iter())
        .map(|(&s, &w)| w * f(mid + half * s))
        .sum::<f64>()
        * half
}

/// Closed-form quintic smoothstep and its first two derivatives on `[0, 1]`.
#[inline]
fn quintic(x: f64) -> (f64, f64, f64) {
    let x2 = x * x;
    let om = 1.0 - x;
    (
        x2 * x * (10.0 - 15.0 * x + 6.0 * x2),
        30.0 * x2 * om * om,
        60.0 * x * om * (1.0 - 2.0 * x),
    )
}

/// C∞ partition function ψ(x)/(ψ(x)+ψ(1−x)) with ψ(x) = e^{−1/x}.
pub fn smooth_step(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let y = 1.0 - x;
    let a = (-1.0 / x).exp();
    let b = (-1.0 / y).exp();
    let a1 = a / (x * x);
    let b1 = -b / (y * y);
    let a2 = a * (1.0 / x.powi(4) - 2.0 / x.powi(3));
    let b2 = b * (1.0 / y.powi(4) - 2.0 / y.powi(3));
    let s = a + b;
    let num = a1 * b - a * b1;
    let num1 = a2 * b - a * b2;
    (a / s, num / (s * s), num1 / (s * s) - 2.0 * num * (a1 + b1) / (s * s * s))
}

/// Which partition function is in use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChiVariant {
    Quintic,
    CustomTable,
}

/// χ, χ′, χ″ tabulated on a uniform grid over `[0, 1]`, together with the
/// cached kernel tables once [`PartitionFunction::build_g`] has run.
#[derive(Clone, Debug)]
pub struct PartitionFunction {
    pub variant: ChiVariant,
    pub chi_samples: Vec<f64>,
    pub chi_prime_samples: Vec<f64>,
    pub chi_second_samples: Vec<f64>,
}

/// Partition function with its background kernel tables.
#[derive(Clone, Debug)]
pub struct PartitionSetup {
    pub chi: PartitionFunction,
    pub g_table: Vec<f64>,
    pub g_prime_table: Vec<f64>,
    pub kappa_minus: f64,
    pub kappa_plus: f64,
    /// Left-tail coefficient of g′, so that g′ = gp_left·eˣ for x ≤ 0.
    gp_left: f64,
    /// Right-tail coefficient of g′, so that g′ = gp_right·e^{−x} for x ≥ 1.
    gp_right: f64,
    lower_cum: Vec<f64>,
    upper_cum: Vec<f64>,
    /// Largest |g − g″ − χ²| seen while validating the tables.
    pub g_residual: f64,
}

/// JSON description of a partition setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Two-column CSV `(x, chi)` for the custom-table variant.
    #[serde(default)]
    pub table: Option<String>,
}

fn default_variant() -> String {
    "quintic".to_string()
}

fn default_resolution() -> usize {
    2048
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            variant: default_variant(),
            x_min: None,
            x_max: None,
            resolution: default_resolution(),
            table: None,
        }
    }
}

/// Tolerance on max |g − g″ − χ²| accepted by [`PartitionFunction::build_g`].
pub const G_RESIDUAL_TOL: f64 = 1e-8;

impl PartitionFunction {
    pub fn quintic(resolution: usize) -> Result<Self> {
        let mut pf = Self::from_fn(resolution, quintic)?;
        pf.variant = ChiVariant::Quintic;
        Ok(pf)
    }

    /// Samples χ and its derivatives from a closure on `resolution` cells.
    pub fn from_fn<F: Fn(f64) -> (f64, f64, f64)>(resolution: usize, f: F) -> Result<Self> {
        if resolution < 16 {
            return Err(ChError::InvalidPartition(format!(
                "table resolution {resolution} too small"
            )));
        }
        let m = resolution;
        let mut chi = Vec::with_capacity(m + 1);
        let mut chi_p = Vec::with_capacity(m + 1);
        let mut chi_pp = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let (a, b, c) = f(k as f64 / m as f64);
            chi.push(a);
            chi_p.push(b);
            chi_pp.push(c);
        }
        let pf = Self {
            variant: ChiVariant::CustomTable,
            chi_samples: chi,
            chi_prime_samples: chi_p,
            chi_second_samples: chi_pp,
        };
        pf.validate()?;
        Ok(pf)
    }

    /// Builds a table from scattered `(x, chi)` points; derivatives come from
    /// finite differences of the resampled table.
    pub fn from_points(xs: &[f64], chis: &[f64], resolution: usize) -> Result<Self> {
        if xs.len() != chis.len() || xs.len() < 2 {
            return Err(ChError::InvalidPartition("need matching x and chi columns".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChError::InvalidPartition("x column must be increasing".into()));
        }
        let at = |x: f64| -> f64 {
            if x <= xs[0] {
                return if x <= 0.0 { 0.0 } else { chis[0] };
            }
            if x >= xs[xs.len() - 1] {
                return if x >= 1.0 { 1.0 } else { chis[chis.len() - 1] };
            }
            let k = xs.partition_point(|&v| v <= x) - 1;
            let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
            chis[k] + t * (chis[k + 1] - chis[k])
        };
        let m = resolution.max(16);
        let h = 1.0 / m as f64;
        let chi: Vec<f64> = (0..=m).map(|k| at(k as f64 * h).clamp(0.0, 1.0)).collect();
        let ext = |k: isize| -> f64 {
            if k < 0 {
                0.0
            } else if k as usize > m {
                1.0
            } else {
                chi[k as usize]
            }
        };
        let chi_p: Vec<f64> = (0..=m as isize)
            .map(|k| (ext(k + 1) - ext(k - 1)) / (2.0 * h))
            .collect();
        let chi_pp: Vec<f64> = (0..=m as isize)
            .map(|k| (ext(k + 1) - 2.0 * ext(k) + ext(k - 1)) / (h * h))
            .collect();
        let pf = Self {
            variant: ChiVariant::CustomTable,
            chi_samples: chi,
            chi_prime_samples: chi_p,
            chi_second_samples: chi_pp,
        };
        pf.validate()?;
        Ok(pf)
    }

    /// Reads a two-column CSV `(x, chi)`; a header row is optional.
    pub fn from_csv<P: AsRef<Path>>(path: P, resolution: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut xs = Vec::new();
        let mut cs = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(ChError::Parse("chi table rows need two columns".into()));
            }
            let (Ok(x), Ok(c)) = (rec[0].parse::<f64>(), rec[1].parse::<f64>()) else {
                if xs.is_empty() {
                    continue; // header row
                }
                return Err(ChError::Parse(format!("bad chi table row {:?}", rec)));
            };
            xs.push(x);
            cs.push(c);
        }
        Self::from_points(&xs, &cs, resolution)
    }

    pub fn resolution(&self) -> usize {
        self.chi_samples.len() - 1
    }

    fn validate(&self) -> Result<()> {
        let m = self.resolution();
        let tol = 1e-9;
        if self.chi_samples[0].abs() > tol || (self.chi_samples[m] - 1.0).abs() > tol {
            return Err(ChError::InvalidPartition(format!(
                "chi(0) = {}, chi(1) = {}; expected 0 and 1",
                self.chi_samples[0], self.chi_samples[m]
            )));
        }
        if self.chi_samples.windows(2).any(|w| w[1] < w[0] - tol)
            || self.chi_prime_samples.iter().any(|&d| d < -tol)
        {
            return Err(ChError::InvalidPartition("chi must be nondecreasing".into()));
        }
        Ok(())
    }

    /// χ, χ′, χ″ at `x`; exact constants outside `[0, 1]`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        if x <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        if x >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        if self.variant == ChiVariant::Quintic {
            return quintic(x);
        }
        let m = self.resolution();
        let h = 1.0 / m as f64;
        let r = x * m as f64;
        let k = (r.floor() as usize).min(m - 1);
        let t = r - k as f64;
        let (c0, c1) = (self.chi_samples[k], self.chi_samples[k + 1]);
        let (d0, d1) = (self.chi_prime_samples[k], self.chi_prime_samples[k + 1]);
        let (e0, e1) = (self.chi_second_samples[k], self.chi_second_samples[k + 1]);
        (
            hermite(c0, c1, d0, d1, h, t),
            hermite(d0, d1, e0, e1, h, t),
            interp_linear(&self.chi_second_samples, k, t),
        )
    }

    #[inline]
    pub fn chi(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    /// Tabulates g and g′ on `[0, 1]` and validates g − g″ = χ².
    pub fn build_g(self, tol: f64) -> Result<PartitionSetup> {
        let m = self.resolution();
        let h = 1.0 / m as f64;
        let chi2 = |z: f64| {
            let c = self.chi(z);
            c * c
        };
        // Cumulative ∫₀ˣ e^{z}χ² and ∫ₓ¹ e^{−z}χ² at the table nodes.
        let mut lower = vec![0.0; m + 1];
        let mut upper = vec![0.0; m + 1];
        for k in 0..m {
            let a = k as f64 * h;
            lower[k + 1] = lower[k] + gauss_legendre(a, a + h, |z| z.exp() * chi2(z));
        }
        for k in (0..m).rev() {
            let a = k as f64 * h;
            upper[k] = upper[k + 1] + gauss_legendre(a, a + h, |z| (-z).exp() * chi2(z));
        }
        let e_inv = (-1.0f64).exp();
        let mut g = Vec::with_capacity(m + 1);
        let mut gp = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let x = k as f64 * h;
            let left = (-x).exp() * lower[k];
            let right = x.exp() * (upper[k] + e_inv);
            g.push(0.5 * (left + right));
            gp.push(0.5 * (right - left));
        }
        let kappa_minus = 0.5 * (upper[0] + e_inv);
        let kappa_plus = 0.5 * (lower[m] - std::f64::consts::E);
        let mut setup = PartitionSetup {
            chi: self,
            g_table: g,
            g_prime_table: gp,
            kappa_minus,
            kappa_plus,
            gp_left: kappa_minus,
            gp_right: -kappa_plus,
            lower_cum: lower,
            upper_cum: upper,
            g_residual: 0.0,
        };
        let residual = setup.helmholtz_residual();
        setup.g_residual = residual;
        if !(residual <= tol) {
            return Err(ChError::QuadratureFailure { residual, tol });
        }
        if setup.g_prime_table.iter().any(|&d| d < -1e-14)
            || setup.g_table.iter().any(|&v| !(-1e-14..=1.0 + 1e-14).contains(&v))
        {
            return Err(ChError::QuadratureFailure { residual: f64::NAN, tol });
        }
        Ok(setup)
    }
}

impl PartitionSetup {
    /// Quintic smoothstep at the default table resolution.
    pub fn quintic() -> Self {
        PartitionFunction::quintic(default_resolution())
            .and_then(|pf| pf.build_g(G_RESIDUAL_TOL))
            .expect("quintic partition setup is always valid")
    }

    /// The C∞ partition function [`smooth_step`] as a custom table.
    pub fn smooth() -> Self {
        PartitionFunction::from_fn(default_resolution(), smooth_step)
            .and_then(|pf| pf.build_g(G_RESIDUAL_TOL))
            .expect("smooth partition setup is always valid")
    }

    /// Builds a setup from its JSON/TOML description. Relative table paths are
    /// resolved against `base`.
    pub fn from_config(cfg: &PartitionConfig, base: Option<&Path>) -> Result<Self> {
        let pf = match cfg.variant.as_str() {
            "quintic" => PartitionFunction::quintic(cfg.resolution)?,
            "smooth" => PartitionFunction::from_fn(cfg.resolution, smooth_step)?,
            "custom-table" => {
                let Some(table) = &cfg.table else {
                    return Err(ChError::InvalidPartition(
                        "custom-table variant needs a table path".into(),
                    ));
                };
                let path = match base {
                    Some(b) if Path::new(table).is_relative() => b.join(table),
                    _ => Path::new(table).to_path_buf(),
                };
                PartitionFunction::from_csv(path, cfg.resolution)?
            }
            other => {
                return Err(ChError::InvalidPartition(format!("unknown variant {other:?}")));
            }
        };
        pf.build_g(G_RESIDUAL_TOL)
    }

    #[inline]
    pub fn eval_chi(&self, x: f64) -> (f64, f64, f64) {
        self.chi.eval(x)
    }

    #[inline]
    pub fn chi(&self, x: f64) -> f64 {
        self.chi.eval(x).0
    }

    fn cell(&self, x: f64) -> (usize, f64, f64) {
        let m = self.g_table.len() - 1;
        let r = x * m as f64;
        let k = (r.floor() as usize).min(m - 1);
        (k, r - k as f64, 1.0 / m as f64)
    }

    fn g_second_at(&self, k: usize) -> f64 {
        let c = self.chi.chi_samples[k];
        self.g_table[k] - c * c
    }

    /// Cached g(x).
    pub fn g(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.kappa_minus * x.exp();
        }
        if x >= 1.0 {
            return 1.0 + self.kappa_plus * (-x).exp();
        }
        let (k, t, h) = self.cell(x);
        hermite(
            self.g_table[k],
            self.g_table[k + 1],
            self.g_prime_table[k],
            self.g_prime_table[k + 1],
            h,
            t,
        )
    }

    /// Cached g′(x).
    pub fn g_prime(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.gp_left * x.exp();
        }
        if x >= 1.0 {
            return self.gp_right * (-x).exp();
        }
        let (k, t, h) = self.cell(x);
        hermite(
            self.g_prime_table[k],
            self.g_prime_table[k + 1],
            self.g_second_at(k),
            self.g_second_at(k + 1),
            h,
            t,
        )
    }

    /// g and g′ by quadrature at an arbitrary point, bypassing the cell
    /// interpolants.
    pub fn g_direct(&self, x: f64) -> (f64, f64) {
        if x <= 0.0 {
            return (self.kappa_minus * x.exp(), self.gp_left * x.exp());
        }
        if x >= 1.0 {
            let e = (-x).exp();
            return (1.0 + self.kappa_plus * e, self.gp_right * e);
        }
        let (k, _, h) = self.cell(x);
        let a = k as f64 * h;
        let chi2 = |z: f64| {
            let c = self.chi(z);
            c * c
        };
        let lower = self.lower_cum[k] + gauss_legendre(a, x, |z| z.exp() * chi2(z));
        let upper = self.upper_cum[k + 1] + gauss_legendre(x, a + h, |z| (-z).exp() * chi2(z));
        let left = (-x).exp() * lower;
        let right = x.exp() * (upper + (-1.0f64).exp());
        (0.5 * (left + right), 0.5 * (right - left))
    }

    /// Largest violation of g − g″ = χ² on a sample grid covering the
    /// transition region and both tails, with g″ from Richardson-extrapolated
    /// second differences refined until converged. Also folds in the gap
    /// between the cached interpolants and direct quadrature.
    pub fn helmholtz_residual(&self) -> f64 {
        let second = |x: f64, d: f64| {
            (self.g_direct(x + d).0 - 2.0 * self.g_direct(x).0 + self.g_direct(x - d).0) / (d * d)
        };
        let mut worst = 0.0f64;
        let samples = 7 * 256;
        for i in 0..=samples {
            let x = -3.0 + 7.0 * i as f64 / samples as f64;
            let mut d = 1.6e-2;
            let mut prev = f64::NAN;
            let mut gpp = second(x, d);
            for _ in 0..5 {
                let r = (4.0 * second(x, 0.5 * d) - second(x, d)) / 3.0;
                d *= 0.5;
                let converged = (r - prev).abs() < 1e-10;
                prev = r;
                gpp = r;
                if converged {
                    break;
                }
            }
            let (gd, gpd) = self.g_direct(x);
            let c = self.chi(x);
            worst = worst
                .max((gd - gpp - c * c).abs())
                .max((self.g(x) - gd).abs())
                .max((self.g_prime(x) - gpd).abs());
        }
        worst
    }

    /// g and g′ on an arbitrary grid, for diagnostics and dumps.
    pub fn g_on_grid(&self, grid: &Grid1d) -> (Vec<f64>, Vec<f64>) {
        grid.nodes().iter().map(|&x| (self.g(x), self.g_prime(x))).unzip()
    }

    /// H¹ norm of χ − χ̃ for another partition function, by quadrature.
    pub fn chi_h1_distance(&self, other: &PartitionSetup) -> f64 {
        let m = 256;
        let h = 1.0 / m as f64;
        let mut acc = 0.0;
        for k in 0..m {
            let a = k as f64 * h;
            acc += gauss_legendre(a, a + h, |z| {
                let (c0, d0, _) = self.eval_chi(z);
                let (c1, d1, _) = other.eval_chi(z);
                (c0 - c1).powi(2) + (d0 - d1).powi(2)
            });
        }
        acc.sqrt()
    }

    /// Operator norm bound of the conversion Ψ between the two conventions,
    /// measured in ‖ū‖_{H¹} + |c₋| + |c₊|.
    pub fn psi_norm(&self, other: &PartitionSetup) -> f64 {
        1.0 + self.chi_h1_distance(other)
    }

    /// Slope of χ never exceeds this value; used in a priori bounds.
    pub fn chi_prime_max(&self) -> f64 {
        self.chi
            .chi_prime_samples
            .iter()
            .fold(0.0f64, |a, &b| a.max(b.abs()))
    }
}

/// Decaying part plus the two asymptotic constants of a profile.
#[derive(Clone, Debug, PartialEq)]
pub struct DecomposedProfile {
    pub grid: Grid1d,
    pub ubar: Vec<f64>,
    pub c_minus: f64,
    pub c_plus: f64,
}

/// Options for [`decompose`].
#[derive(Clone, Copy, Debug)]
pub struct DecomposeOptions {
    /// Fraction of the grid at each end used to read off the asymptotes.
    pub window_fraction: f64,
    /// Largest tolerated variation of u inside each window.
    pub tol: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self { window_fraction: 0.1, tol: 1e-8 }
    }
}

/// u = ū + c₋χ(−x) + c₊χ(x).
pub fn embed(profile: &DecomposedProfile, setup: &PartitionSetup) -> Result<Vec<f64>> {
    if profile.ubar.len() != profile.grid.n {
        return Err(ChError::GridMismatch(format!(
            "{} samples on a {}-node grid",
            profile.ubar.len(),
            profile.grid.n
        )));
    }
    Ok(profile
        .grid
        .nodes()
        .iter()
        .zip(&profile.ubar)
        .map(|(&x, &ub)| ub + profile.c_minus * setup.chi(-x) + profile.c_plus * setup.chi(x))
        .collect())
}

/// Reads off the asymptotes as tail means and subtracts the background.
pub fn decompose(
    u: &[f64],
    grid: &Grid1d,
    setup: &PartitionSetup,
    opts: DecomposeOptions,
) -> Result<DecomposedProfile> {
    if u.len() != grid.n {
        return Err(ChError::GridMismatch(format!(
            "{} samples on a {}-node grid",
            u.len(),
            grid.n
        )));
    }
    let w = ((grid.n as f64 * opts.window_fraction).round() as usize).clamp(2, grid.n / 2);
    let settle = |win: &[f64], side: &'static str| -> Result<f64> {
        let lo = win.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = win.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let variation = hi - lo;
        if !(variation <= opts.tol) {
            return Err(ChError::UnsettledTails { side, variation, tol: opts.tol });
        }
        Ok(win.iter().sum::<f64>() / win.len() as f64)
    };
    let c_minus = settle(&u[..w], "left")?;
    let c_plus = settle(&u[grid.n - w..], "right")?;
    let ubar = grid
        .nodes()
        .iter()
        .zip(u)
        .map(|(&x, &v)| v - c_minus * setup.chi(-x) - c_plus * setup.chi(x))
        .collect();
    Ok(DecomposedProfile { grid: *grid, ubar, c_minus, c_plus })
}

/// Re-expresses a profile in the convention of another partition function
/// without changing the represented u.
pub fn convert_representation(
    profile: &DecomposedProfile,
    from: &PartitionSetup,
    to: &PartitionSetup,
) -> Result<DecomposedProfile> {
    if profile.ubar.len() != profile.grid.n {
        return Err(ChError::GridMismatch("profile samples do not match grid".into()));
    }
    let ubar = profile
        .grid
        .nodes()
        .iter()
        .zip(&profile.ubar)
        .map(|(&x, &ub)| {
            ub + profile.c_minus * (from.chi(-x) - to.chi(-x))
                + profile.c_plus * (from.chi(x) - to.chi(x))
        })
        .collect();
    Ok(DecomposedProfile { ubar, ..profile.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_constants_outside_unit_interval() {
        let s = PartitionSetup::quintic();
        assert_eq!(s.eval_chi(-1.0), (0.0, 0.0, 0.0));
        assert_eq!(s.eval_chi(2.0), (1.0, 0.0, 0.0));
        assert!((s.chi(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quintic_kernel_matches_derivative_form() {
        // Independent evaluation of g = χ² + ½∫e^{−|x−z|}(2χ′² + 2χχ″)dz.
        let s = PartitionSetup::quintic();
        let oracle = |x: f64| {
            let f = |z: f64| {
                let (c, d, e) = quintic(z);
                (-(x - z).abs()).exp() * (2.0 * d * d + 2.0 * c * e)
            };
            let m = 400;
            let mut acc = 0.0;
            let cuts = [0.0, x.clamp(0.0, 1.0), 1.0];
            for w in cuts.windows(2) {
                for k in 0..m {
                    let a = w[0] + (w[1] - w[0]) * k as f64 / m as f64;
                    let b = w[0] + (w[1] - w[0]) * (k + 1) as f64 / m as f64;
                    acc += gauss_legendre(a, b, f);
                }
            }
            let c = if x <= 0.0 { 0.0 } else if x >= 1.0 { 1.0 } else { quintic(x).0 };
            c * c + 0.5 * acc
        };
        for &x in &[-10.0, -2.0, -0.3, 0.0, 0.2, 0.5, 0.77, 1.0, 1.4, 3.0, 10.0] {
            assert!((s.g(x) - oracle(x)).abs() < 1e-10, "x = {x}");
        }
        assert!(s.g(-10.0) < 1e-4 * s.kappa_minus);
        assert!(s.kappa_plus <= 0.0);
    }

    #[test]
    fn g_prime_is_the_derivative_of_g() {
        let s = PartitionSetup::quintic();
        let e = 1e-6;
        for i in 0..=600 {
            let x = -3.0 + 6.0 * i as f64 / 600.0;
            let fd = (s.g(x + e) - s.g(x - e)) / (2.0 * e);
            assert!((s.g_prime(x) - fd).abs() < 1e-7, "x = {x}: {} vs {fd}", s.g_prime(x));
        }
    }

    #[test]
    fn kernel_residual_and_monotonicity() {
        for s in [PartitionSetup::quintic(), PartitionSetup::smooth()] {
            assert!(s.g_residual <= 1e-8, "residual {}", s.g_residual);
            for i in 0..=4000 {
                let x = -20.0 + 40.0 * i as f64 / 4000.0;
                assert!(s.g_prime(x) >= 0.0);
                let g = s.g(x);
                assert!((0.0..=1.0).contains(&g));
            }
            assert!((s.g(40.0) - 1.0).abs() < 1e-16 + (-40.0f64).exp());
        }
    }

    #[test]
    fn embed_decompose_round_trip() {
        let s = PartitionSetup::quintic();
        let grid = Grid1d::symmetric(20.0, 801).unwrap();
        let ubar: Vec<f64> = grid.nodes().iter().map(|x| (-x * x).exp()).collect();
        let p = DecomposedProfile { grid, ubar, c_minus: -0.4, c_plus: 1.3 };
        let u = embed(&p, &s).unwrap();
        let q = decompose(&u, &grid, &s, DecomposeOptions::default()).unwrap();
        assert!((q.c_minus + 0.4).abs() < 1e-14);
        assert!((q.c_plus - 1.3).abs() < 1e-14);
        for (a, b) in p.ubar.iter().zip(&q.ubar) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn oscillating_tails_are_rejected() {
        let s = PartitionSetup::quintic();
        let grid = Grid1d::symmetric(20.0, 401).unwrap();
        let u: Vec<f64> = grid.nodes().iter().map(|x| (3.0 * x).sin()).collect();
        let err = decompose(&u, &grid, &s, DecomposeOptions::default()).unwrap_err();
        assert!(matches!(err, ChError::UnsettledTails { .. }));
    }

    #[test]
    fn conversion_preserves_u_and_inverts() {
        let a = PartitionSetup::quintic();
        let b = PartitionSetup::smooth();
        let grid = Grid1d::symmetric(10.0, 401).unwrap();
        let ubar: Vec<f64> = grid.nodes().iter().map(|x| 0.3 * (-(x - 1.0).powi(2)).exp()).collect();
        let p = DecomposedProfile { grid, ubar, c_minus: 0.7, c_plus: -1.1 };
        let q = convert_representation(&p, &a, &b).unwrap();
        let ua = embed(&p, &a).unwrap();
        let ub = embed(&q, &b).unwrap();
        for (x, y) in ua.iter().zip(&ub) {
            assert!((x - y).abs() < 1e-14);
        }
        let back = convert_representation(&q, &b, &a).unwrap();
        for (x, y) in p.ubar.iter().zip(&back.ubar) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(a.psi_norm(&b) > 1.0);
    }

    #[test]
    fn csv_table_is_accepted() {
        let dir = std::env::temp_dir().join(format!("chi-table-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("chi.csv");
        let mut body = String::from("x,chi\n");
        for k in 0..=400 {
            let x = k as f64 / 400.0;
            body.push_str(&format!("{x},{}\n", quintic(x).0));
        }
        std::fs::write(&path, body).unwrap();
        let pf = PartitionFunction::from_csv(&path, 1024).unwrap();
        assert!((pf.chi(0.3) - quintic(0.3).0).abs() < 1e-5);
        let _ = std::fs::remove_dir_all(&dir);
    }
}
