use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_chsolve");

fn chsolve(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "[grid]\nx_min = -12\nx_max = 12\nn = 1025\n[time]\nt_final = 0.2\nsnapshot_every = 50\n";

#[test]
fn small_run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let o = chsolve(&["run", "--config", "c.toml", "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("o");
    for f in ["t_0000.csv", "eulerian/t_0000.csv", "eulerian/t_0000.json", "energy.csv", "plot.gp", "manifest.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "ok");
    assert!(m["dt_used"].as_f64().unwrap() > 0.0);
    assert_eq!(m["config"]["grid"]["n"], 1025);
    let last = m["snapshots"].as_array().unwrap().last().unwrap()["t"].as_f64().unwrap();
    assert!((last - 0.2).abs() < 1e-12);
}

#[test]
fn malformed_config_exits_2_and_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[grid]\nx_min = -5\nnodes = 10\n").unwrap();
    let o = chsolve(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("nodes") && e.contains("line 3"), "{e}");

    std::fs::write(dir.path().join("bad2.toml"), "[initial]\npreset = \"nope\"\n").unwrap();
    let o = chsolve(&["run", "--config", "bad2.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn unknown_suite_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = chsolve(&["verify", "nosuch"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn blowup_exits_3_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL.replace("t_final = 0.2", "t_final = 20\ndt = 5")).unwrap();
    let o = chsolve(&["run", "--config", "c.toml", "--out", "o", "--preset", "antisym-collision"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let m: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "blowup");
    assert!(m["failure"].is_string());
    assert!(m["last_good_time"].as_f64().unwrap() < 20.0);
}

#[test]
fn convert_round_trips_through_lagrangian() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL.replace("t_final = 0.2", "t_final = 0")).unwrap();
    let o = chsolve(&["run", "--config", "c.toml", "--out", "o", "--preset", "kink-c075"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = chsolve(&["convert", "o/eulerian/t_0000.csv", "lag.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(dir.path().join("lag.csv")).unwrap().starts_with("# {"));
    let o = chsolve(&["convert", "lag.csv", "eul.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let read = |p: &str| -> Vec<Vec<f64>> {
        csv::Reader::from_path(dir.path().join(p))
            .unwrap()
            .records()
            .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let (a, b) = (read("o/eulerian/t_0000.csv"), read("eul.csv"));
    assert_eq!(a.len(), b.len());
    let du = a.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p[1] - q[1]).abs()));
    // Interpolation error on a coarse grid; the round trip converges with n.
    assert!(du < 1e-4, "u differs by {du}");
}
