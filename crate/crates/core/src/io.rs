//! File formats.
//!
//! Eulerian snapshots are CSV (x, u, density) with a JSON sidecar holding c,
//! t and the atoms. Lagrangian snapshots are CSV (xi, zeta, ubar, h, zeta_xi,
//! ubar_xi) whose first line is `# ` followed by a JSON header. Floats are
//! written in shortest round-trip form, so reading a file back is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ChError, Result};
use crate::evolution::EnergyRecord;
use crate::grid::Grid1d;
use crate::lagrangian::LagrangianState;
use crate::partition::{DecomposedProfile, PartitionSetup};
use crate::transforms::{Atom, EnergyMeasure, EulerianState};

/// Contents of the JSON file next to an Eulerian CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerianSidecar {
    pub c: f64,
    #[serde(default)]
    pub c_minus: f64,
    pub t: f64,
    pub atoms: Vec<Atom>,
}

/// Shortest round-trip text in scientific notation.
trait FmtE {
    fn fmt_e(&self) -> String;
}

impl FmtE for f64 {
    fn fmt_e(&self) -> String {
        format!("{self:e}")
    }
}

/// `snap.csv` → `snap.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Checks that sampled positions form a uniform grid and returns it.
fn grid_from_samples(xs: &[f64]) -> Result<Grid1d> {
    if xs.len() < 2 {
        return Err(ChError::Parse("need at least two rows".into()));
    }
    let g = Grid1d::new(xs[0], xs[xs.len() - 1], xs.len())?;
    let tol = 1e-9 * (1.0 + g.max.abs().max(g.min.abs()));
    if let Some(i) = (0..xs.len()).find(|&i| (xs[i] - g.node(i)).abs() > tol) {
        return Err(ChError::GridMismatch(format!("sample {i} at {} is off the uniform grid", xs[i])));
    }
    Ok(g)
}

pub fn write_eulerian(path: &Path, eul: &EulerianState, t: f64, setup: &PartitionSetup) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "u", "density"])?;
    let u = eul.u(setup);
    let g = eul.grid();
    for i in 0..g.n {
        w.write_record(&[g.node(i).fmt_e(), u[i].fmt_e(), eul.measure.density[i].fmt_e()])?;
    }
    w.flush()?;
    let side = EulerianSidecar {
        c: eul.profile.c_plus,
        c_minus: eul.profile.c_minus,
        t,
        atoms: eul.measure.atoms.clone(),
    };
    let f = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(f, &side)?;
    Ok(())
}

/// Reads an Eulerian snapshot. Without a sidecar the state is taken to have
/// no atoms and asymptotes read off the end samples.
pub fn read_eulerian(path: &Path, setup: &PartitionSetup) -> Result<(EulerianState, f64)> {
    let mut r = csv::Reader::from_path(path)?;
    let (mut xs, mut us, mut ds) = (vec![], vec![], vec![]);
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| ChError::Parse(format!("row {}: missing column {k}", line + 2)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| ChError::Parse(format!("row {}: {e}", line + 2)))
        };
        xs.push(field(0)?);
        us.push(field(1)?);
        ds.push(field(2)?);
    }
    let grid = grid_from_samples(&xs)?;
    let side_path = sidecar_path(path);
    let side = if side_path.exists() {
        serde_json::from_reader(BufReader::new(File::open(side_path)?))?
    } else {
        EulerianSidecar { c: us[us.len() - 1], c_minus: us[0], t: 0.0, atoms: vec![] }
    };
    let ubar = xs
        .iter()
        .zip(&us)
        .map(|(&x, &u)| u - side.c_minus * setup.chi(-x) - side.c * setup.chi(x))
        .collect();
    let eul = EulerianState {
        profile: DecomposedProfile { grid, ubar, c_minus: side.c_minus, c_plus: side.c },
        measure: EnergyMeasure { density: ds, atoms: side.atoms },
    };
    Ok((eul, side.t))
}

/// JSON header line of a Lagrangian snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianHeader {
    pub c: f64,
    /// Half-width of the label interval.
    #[serde(rename = "L")]
    pub half_width: f64,
    pub n: usize,
    pub time: f64,
    pub xi_min: f64,
    pub xi_max: f64,
}

pub fn write_lagrangian(path: &Path, x: &LagrangianState) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    let head = LagrangianHeader {
        c: x.c,
        half_width: 0.5 * (x.grid.max - x.grid.min),
        n: x.grid.n,
        time: x.time,
        xi_min: x.grid.min,
        xi_max: x.grid.max,
    };
    writeln!(f, "# {}", serde_json::to_string(&head)?)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["xi", "zeta", "ubar", "h", "zeta_xi", "ubar_xi"])?;
    for i in 0..x.len() {
        w.write_record(&[
            x.grid.node(i).fmt_e(),
            x.zeta[i].fmt_e(),
            x.ubar[i].fmt_e(),
            x.h[i].fmt_e(),
            x.zeta_xi[i].fmt_e(),
            x.ubar_xi[i].fmt_e(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_lagrangian(path: &Path) -> Result<LagrangianState> {
    let mut rd = BufReader::new(File::open(path)?);
    let mut first = String::new();
    rd.read_line(&mut first)?;
    let json = first
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| ChError::Parse("missing '# {json}' header line".into()))?;
    let head: LagrangianHeader = serde_json::from_str(json.trim())?;
    let grid = Grid1d::new(head.xi_min, head.xi_max, head.n)?;
    let mut x = LagrangianState::zero(grid);
    x.c = head.c;
    x.time = head.time;
    let mut r = csv::Reader::from_reader(rd);
    let mut count = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if i >= head.n {
            return Err(ChError::GridMismatch(format!("more than {} rows", head.n)));
        }
        let mut vals = [0.0; 6];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = rec
                .get(k)
                .ok_or_else(|| ChError::Parse(format!("row {}: missing column {k}", i + 3)))?
                .trim()
                .parse()
                .map_err(|e| ChError::Parse(format!("row {}: {e}", i + 3)))?;
        }
        x.zeta[i] = vals[1];
        x.ubar[i] = vals[2];
        x.h[i] = vals[3];
        x.zeta_xi[i] = vals[4];
        x.ubar_xi[i] = vals[5];
        count += 1;
    }
    if count != head.n {
        return Err(ChError::GridMismatch(format!("header says {} rows, found {count}", head.n)));
    }
    Ok(x)
}

/// One row of energy.csv.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub t: f64,
    pub gamma: f64,
    pub total_h: f64,
    pub g3_drift: f64,
    pub clip: f64,
    pub atom_mass: f64,
    pub total_energy: f64,
}

impl EnergyRow {
    pub fn new(rec: &EnergyRecord, atom_mass: f64) -> Self {
        Self {
            t: rec.t,
            gamma: rec.gamma,
            total_h: rec.total_h,
            g3_drift: rec.g3_drift,
            clip: rec.clip,
            atom_mass,
            total_energy: rec.total_energy,
        }
    }
}

pub fn write_energy(path: &Path, rows: &[EnergyRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_energy(path: &Path) -> Result<Vec<EnergyRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(ChError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::{kink, with_atom};

    #[test]
    fn eulerian_file_round_trip_is_exact() {
        let s = PartitionSetup::quintic();
        let g = Grid1d::symmetric(6.0, 121).unwrap();
        let e = with_atom(kink(0.75, 0.3, -2.0, 1.0, g, &s), 1.5, 0.25).unwrap();
        let dir = std::env::temp_dir().join(format!("chcons-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("e.csv");
        write_eulerian(&p, &e, 0.5, &s).unwrap();
        let (back, t) = read_eulerian(&p, &s).unwrap();
        assert_eq!(t, 0.5);
        assert_eq!(back.measure, e.measure);
        assert_eq!(back.u(&s), e.u(&s));
        std::fs::remove_dir_all(dir).ok();
    }
}
