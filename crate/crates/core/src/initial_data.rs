//! Initial data: peakons, kinks over a Gaussian bump, and atomic measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ChError, Result};
use crate::grid::Grid1d;
use crate::partition::{DecomposedProfile, PartitionSetup};
use crate::transforms::{Atom, EnergyMeasure, EulerianState};

/// u = a·e^{−|x − x0|}.
pub fn peakon(a: f64, x0: f64, grid: Grid1d) -> EulerianState {
    multipeakon(&[a], &[x0], grid).expect("a single position cannot coincide")
}

/// u = ∑pᵢe^{−|x − qᵢ|} with the analytic density u_x². At a kink node the
/// density is the mean of the two one-sided values.
pub fn multipeakon(p: &[f64], q: &[f64], grid: Grid1d) -> Result<EulerianState> {
    if p.len() != q.len() {
        return Err(ChError::GridMismatch("masses and positions differ in length".into()));
    }
    let mut sorted = q.to_vec();
    sorted.sort_by(f64::total_cmp);
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(ChError::CoincidentPositions(w[0]));
    }
    let xs = grid.nodes();
    let ubar = xs
        .iter()
        .map(|&x| p.iter().zip(q).map(|(a, b)| a * (-(x - b).abs()).exp()).sum())
        .collect();
    let slope = |x: f64, side: f64| -> f64 {
        p.iter()
            .zip(q)
            .map(|(a, b)| {
                let s = if x == *b { side } else { (x - b).signum() };
                -a * s * (-(x - b).abs()).exp()
            })
            .sum()
    };
    let density = xs
        .iter()
        .map(|&x| {
            let (l, r) = (slope(x, -1.0), slope(x, 1.0));
            0.5 * (l * l + r * r)
        })
        .collect();
    Ok(EulerianState {
        profile: DecomposedProfile { grid, ubar, c_minus: 0.0, c_plus: 0.0 },
        measure: EnergyMeasure { density, atoms: vec![] },
    })
}

/// u = A·exp(−((x − x_c)/w)²) + cχ(x).
pub fn kink(
    c: f64,
    amplitude: f64,
    center: f64,
    width: f64,
    grid: Grid1d,
    setup: &PartitionSetup,
) -> EulerianState {
    let xs = grid.nodes();
    let mut ubar = Vec::with_capacity(grid.n);
    let mut density = Vec::with_capacity(grid.n);
    for &x in &xs {
        let s = (x - center) / width;
        let b = amplitude * (-s * s).exp();
        let db = -2.0 * s / width * b;
        let ux = db + c * setup.eval_chi(x).1;
        ubar.push(b);
        density.push(ux * ux);
    }
    EulerianState {
        profile: DecomposedProfile { grid, ubar, c_minus: 0.0, c_plus: c },
        measure: EnergyMeasure { density, atoms: vec![] },
    }
}

/// Adds a point mass to the energy measure.
pub fn with_atom(base: EulerianState, pos: f64, mass: f64) -> Result<EulerianState> {
    if !(mass > 0.0) {
        return Err(ChError::NonpositiveMass(mass));
    }
    let mut out = base;
    out.measure.atoms.push(Atom { pos, mass });
    out.measure.atoms.sort_by(|a, b| a.pos.total_cmp(&b.pos));
    Ok(out)
}

/// The zero profile with no energy.
pub fn zero(grid: Grid1d) -> EulerianState {
    EulerianState {
        profile: DecomposedProfile { grid, ubar: vec![0.0; grid.n], c_minus: 0.0, c_plus: 0.0 },
        measure: EnergyMeasure { density: vec![0.0; grid.n], atoms: vec![] },
    }
}

/// A reproducible smooth state: up to three Gaussian bumps over cχ with
/// c ∈ [−1, 1], plus an atom with probability `atom_prob`.
pub fn seeded_state(seed: u64, grid: Grid1d, setup: &PartitionSetup, atom_prob: f64) -> EulerianState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.gen_range(-1.0..1.0);
    let span = 0.4 * (grid.max - grid.min);
    let mid = 0.5 * (grid.max + grid.min);
    let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| {
            (rng.gen_range(-0.6..0.6), mid + rng.gen_range(-0.5..0.5) * span, rng.gen_range(0.6..1.6))
        })
        .collect();
    let mut ubar = Vec::with_capacity(grid.n);
    let mut density = Vec::with_capacity(grid.n);
    for x in grid.nodes() {
        let (mut b, mut db) = (0.0, 0.0);
        for &(a, x0, w) in &bumps {
            let s = (x - x0) / w;
            let v = a * (-s * s).exp();
            b += v;
            db += -2.0 * s / w * v;
        }
        let ux = db + c * setup.eval_chi(x).1;
        ubar.push(b);
        density.push(ux * ux);
    }
    let mut out = EulerianState {
        profile: DecomposedProfile { grid, ubar, c_minus: 0.0, c_plus: c },
        measure: EnergyMeasure { density, atoms: vec![] },
    };
    if rng.gen_bool(atom_prob) {
        let pos = mid + rng.gen_range(-0.5..0.5) * span;
        out.measure.atoms.push(Atom { pos, mass: rng.gen_range(0.1..0.8) });
    }
    out
}

/// Parameters of the peakon–antipeakon preset.
pub const ANTISYM_P0: f64 = 1.0;
pub const ANTISYM_Q0: f64 = 1.0;

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 5] = ["peakon1", "antisym-collision", "kink-c075", "kink-c1", "atom-release"];

/// Named initial data on `grid`.
///
/// `kink-c075` uses the asymptotes 0 and 3/4 of the glued-cuspon figure
/// (whose second parameter, k = −7/8, has no role here).
pub fn preset(name: &str, grid: Grid1d, setup: &PartitionSetup) -> Result<EulerianState> {
    match name {
        "peakon1" => Ok(peakon(1.0, 0.0, grid)),
        "antisym-collision" => {
            multipeakon(&[ANTISYM_P0, -ANTISYM_P0], &[-ANTISYM_Q0, ANTISYM_Q0], grid)
        }
        "kink-c075" => Ok(kink(0.75, 0.3, -3.0, 1.0, grid, setup)),
        "kink-c1" => Ok(kink(1.0, 0.0, 0.0, 1.0, grid, setup)),
        "atom-release" => with_atom(zero(grid), 0.0, 1.0),
        other => Err(ChError::Parse(format!(
            "unknown preset '{other}', expected one of {}",
            PRESETS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peakon_energy_is_two_a_squared() {
        let s = PartitionSetup::quintic();
        let e = peakon(0.8, 0.0, Grid1d::symmetric(30.0, 6001).unwrap());
        assert_eq!(e.profile.ubar[3000], 0.8);
        assert!((e.total_energy(&s) - 2.0 * 0.64).abs() < 1e-4);
    }

    #[test]
    fn antisymmetric_pair_is_odd() {
        let g = Grid1d::symmetric(10.0, 2001).unwrap();
        let e = multipeakon(&[1.0, -1.0], &[-1.0, 1.0], g).unwrap();
        assert!(e.profile.ubar[1000].abs() < 1e-15);
        for i in 0..g.n {
            assert!((e.profile.ubar[i] + e.profile.ubar[g.n - 1 - i]).abs() < 1e-14);
        }
        assert!(matches!(
            multipeakon(&[1.0, 1.0], &[0.5, 0.5], g),
            Err(ChError::CoincidentPositions(_))
        ));
    }

    #[test]
    fn seeded_states_are_reproducible() {
        let s = PartitionSetup::quintic();
        let g = Grid1d::symmetric(10.0, 401).unwrap();
        let a = seeded_state(5, g, &s, 0.5);
        assert_eq!(a.profile, seeded_state(5, g, &s, 0.5).profile);
        assert_ne!(a.profile, seeded_state(6, g, &s, 0.5).profile);
        a.check_in_d(&s, 0.05).unwrap();
    }

    #[test]
    fn generators_land_in_d() {
        let s = PartitionSetup::quintic();
        let g = Grid1d::symmetric(20.0, 4001).unwrap();
        for name in PRESETS {
            let e = preset(name, g, &s).unwrap();
            e.check_in_d(&s, 0.05).unwrap();
        }
        assert!(matches!(with_atom(zero(g), 0.0, 0.0), Err(ChError::NonpositiveMass(_))));
    }
}
