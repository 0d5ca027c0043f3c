//! `chsolve run`: evolve the configured initial data and write snapshots,
//! the energy series, a manifest and a gnuplot script.

use std::fs;
use std::path::{Path, PathBuf};

use chcons::evolution::{default_dt, evolve_partial, EvolveOptions};
use chcons::initial_data::preset;
use chcons::io::{read_eulerian, write_energy, write_eulerian, write_lagrangian, EnergyRow};
use chcons::oracles::exact_peakon;
use chcons::partition::PartitionSetup;
use chcons::transforms::{centered_label_grid, to_eulerian_on, to_lagrangian_on, EulerianState, D_TOL};
use chcons::Grid1d;
use serde::Serialize;

use crate::config::Config;
use crate::Fail;

#[derive(Serialize)]
struct SnapshotEntry {
    index: usize,
    t: f64,
    lagrangian: Option<String>,
    eulerian: Option<String>,
}

#[derive(Serialize, Default)]
struct Diagnostics {
    energy_initial: f64,
    /// max |E(t) − E(0)|/E(0) of ∫(h + U²y_ξ)dξ
    energy_rel_drift: f64,
    max_g3_drift: f64,
    clip: f64,
    max_atom_mass: f64,
    /// sup |u − e^{−|x−t|}| over all snapshots; peakon1 only.
    peakon_sup_error: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    config: &'a Config,
    /// No randomness enters a run; recorded for completeness.
    seeds: Vec<u64>,
    status: &'static str,
    failure: Option<String>,
    last_good_time: f64,
    dt_used: f64,
    steps: usize,
    snapshots: Vec<SnapshotEntry>,
    diagnostics: Diagnostics,
}

fn initial_state(cfg: &Config, base: Option<&Path>, setup: &PartitionSetup) -> Result<EulerianState, Fail> {
    if let Some(input) = &cfg.initial.input {
        let path = Config::resolve(base, input);
        let (eul, _) = read_eulerian(&path, setup).map_err(|e| Fail::config(format!("{}: {e}", path.display())))?;
        return Ok(eul);
    }
    let name = cfg.initial.preset.as_deref().unwrap_or("peakon1");
    let g = &cfg.grid;
    let grid = Grid1d::new(g.x_min, g.x_max, g.n).map_err(|e| Fail::config(format!("[grid] {e}")))?;
    preset(name, grid, setup).map_err(|e| Fail::config(format!("[initial] {e}")))
}

/// Makes relative paths absolute so the echoed config works from any
/// directory.
fn absolutize(cfg: &mut Config, base: Option<&Path>) {
    let abs = |p: &str| {
        let r = Config::resolve(base, p);
        fs::canonicalize(&r).unwrap_or(r).to_string_lossy().into_owned()
    };
    if let Some(i) = cfg.initial.input.take() {
        cfg.initial.input = Some(abs(&i));
    }
    if let Some(t) = cfg.partition.table.take() {
        cfg.partition.table = Some(abs(&t));
    }
}

pub fn run(mut cfg: Config, base: Option<&Path>) -> Result<PathBuf, Fail> {
    cfg.validate().map_err(Fail::config)?;
    absolutize(&mut cfg, base);
    let setup = PartitionSetup::from_config(&cfg.partition, None).map_err(|e| Fail::config(format!("[partition] {e}")))?;
    let eul0 = initial_state(&cfg, base, &setup)?;
    let grid = eul0.grid();
    cfg.grid.x_min = grid.min;
    cfg.grid.x_max = grid.max;
    cfg.grid.n = grid.n;
    let labels = match cfg.grid.label_anchor {
        Some(a) => centered_label_grid(&eul0, a).map_err(|e| Fail::config(format!("[grid] label_anchor: {e}")))?,
        None => grid,
    };
    let x0 = to_lagrangian_on(&eul0, &setup, labels, D_TOL).map_err(|e| Fail::config(format!("initial data: {e}")))?;
    let dt = *cfg.time.dt.get_or_insert_with(|| default_dt(&x0, &setup));

    let out = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&out).map_err(|e| Fail::io(&out, e))?;
    if cfg.output.eulerian {
        fs::create_dir_all(out.join("eulerian")).map_err(|e| Fail::io(&out, e))?;
    }

    let opts = EvolveOptions { dt, snapshot_every: cfg.time.snapshot_every, threads: cfg.time.threads };
    let (traj, mut failure) = evolve_partial(&x0, cfg.time.t_final, opts, &setup);

    let e0 = traj.energy[0].total_energy;
    let mut diag = Diagnostics { energy_initial: e0, ..Default::default() };
    let mut rows = Vec::with_capacity(traj.states.len());
    let mut snaps = Vec::with_capacity(traj.states.len());
    let is_peakon = cfg.initial.preset.as_deref() == Some("peakon1") && cfg.initial.input.is_none();
    for (k, x) in traj.states.iter().enumerate() {
        let eul = match to_eulerian_on(x, &setup, grid) {
            Ok(e) => e,
            Err(e) => {
                failure.get_or_insert(e);
                break;
            }
        };
        let rec = &traj.energy[k];
        let atoms = eul.measure.atom_mass();
        rows.push(EnergyRow::new(rec, atoms));
        diag.energy_rel_drift = diag.energy_rel_drift.max((rec.total_energy - e0).abs() / e0.max(f64::MIN_POSITIVE));
        diag.max_g3_drift = diag.max_g3_drift.max(rec.g3_drift);
        diag.clip = rec.clip;
        diag.max_atom_mass = diag.max_atom_mass.max(atoms);
        if is_peakon {
            let u = eul.u(&setup);
            let err = grid
                .nodes()
                .iter()
                .zip(&u)
                .fold(0.0f64, |a, (&xv, &uv)| a.max((uv - exact_peakon(1.0, 0.0, traj.times[k], xv)).abs()));
            diag.peakon_sup_error = Some(diag.peakon_sup_error.unwrap_or(0.0).max(err));
        }
        let name = format!("t_{k:04}.csv");
        let mut entry = SnapshotEntry { index: k, t: traj.times[k], lagrangian: None, eulerian: None };
        if cfg.output.lagrangian {
            let p = out.join(&name);
            write_lagrangian(&p, x).map_err(|e| Fail::io(&p, e))?;
            entry.lagrangian = Some(name.clone());
        }
        if cfg.output.eulerian {
            let p = out.join("eulerian").join(&name);
            write_eulerian(&p, &eul, traj.times[k], &setup).map_err(|e| Fail::io(&p, e))?;
            entry.eulerian = Some(format!("eulerian/{name}"));
        }
        snaps.push(entry);
    }
    let energy = out.join("energy.csv");
    write_energy(&energy, &rows).map_err(|e| Fail::io(&energy, e))?;
    if cfg.output.plot {
        let p = out.join("plot.gp");
        fs::write(&p, plot_script(&cfg, snaps.len())).map_err(|e| Fail::io(&p, e))?;
    }

    let last_good_time = snaps.last().map_or(0.0, |s| s.t);
    let steps = if cfg.time.t_final > 0.0 { (cfg.time.t_final / traj.dt).round() as usize } else { 0 };
    let manifest = Manifest {
        program: "chsolve",
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        seeds: vec![],
        status: if failure.is_some() { "blowup" } else { "ok" },
        failure: failure.as_ref().map(|e| e.to_string()),
        last_good_time,
        dt_used: traj.dt,
        steps,
        snapshots: snaps,
        diagnostics: diag,
    };
    let mp = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mp, text + "\n").map_err(|e| Fail::io(&mp, e))?;
    if let Some(e) = failure {
        return Err(Fail { code: 3, msg: format!("{e}; last good time {last_good_time}; see {}", mp.display()) });
    }
    Ok(out)
}

fn plot_script(cfg: &Config, count: usize) -> String {
    let last = count.saturating_sub(1);
    let mut s = String::new();
    s.push_str("# gnuplot script; run from the output directory: gnuplot plot.gp\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 1000,700\n\n");
    if cfg.output.eulerian {
        s.push_str("set output 'waterfall.png'\n");
        s.push_str("set xlabel 'x'\nset ylabel 'u(t,x) + 0.25 k'\nset key off\n");
        s.push_str(&format!(
            "plot for [k=0:{last}] sprintf('eulerian/t_%04d.csv', k) every ::1 using 1:($2 + 0.25*k) with lines lc rgb '#1f4e79'\n\n"
        ));
    }
    s.push_str("set output 'energy.png'\nset xlabel 't'\nset ylabel 'energy'\nset key top right\n");
    s.push_str("plot 'energy.csv' every ::1 using 1:7 with lines title 'total', \\\n");
    s.push_str("     'energy.csv' every ::1 using 1:6 with lines title 'atom mass', \\\n");
    s.push_str("     'energy.csv' every ::1 using 1:3 with lines title 'sum h'\n");
    s
}
