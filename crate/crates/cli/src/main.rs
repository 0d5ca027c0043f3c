//! chsolve: run, verify and benchmark conservative Camassa–Holm solutions.

mod config;
mod run;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use chcons::initial_data::kink;
use chcons::io::{read_eulerian, read_lagrangian, write_eulerian, write_lagrangian};
use chcons::operators::compute_pq_threads;
use chcons::oracles::naive_pq;
use chcons::partition::{PartitionConfig, PartitionSetup};
use chcons::transforms::{to_eulerian, to_lagrangian};
use chcons::verify::Suite;
use chcons::Grid1d;
use clap::{Args, Parser, Subcommand};

use config::{parse_domain, Config};

/// Failure with the process exit code it maps to: 1 for failed checks and
/// I/O, 2 for configuration errors, 3 for a run that blew up.
#[derive(Debug)]
pub struct Fail {
    pub code: u8,
    pub msg: String,
}

impl Fail {
    pub fn config(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }

    pub fn io(path: &Path, e: impl Display) -> Self {
        Self { code: 1, msg: format!("{}: {e}", path.display()) }
    }
}

#[derive(Parser)]
#[command(name = "chsolve", version, about = "Conservative Camassa-Holm solutions with nonvanishing asymptotics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve a preset or an input profile and write snapshots.
    ///
    /// Config defaults: [grid] x_min = -30, x_max = 30, n = 4097, no
    /// label_anchor; [time] t_final = 1, dt = min(1e-3, 0.1 dxi/(1+sup|U|)),
    /// snapshot_every = 100, threads = 1; [initial] preset = "peakon1";
    /// [partition] variant = "quintic", resolution = 2048; [output] dir =
    /// "out", eulerian = lagrangian = plot = true. Exit code 2 on a bad
    /// config, 3 if the run blows up.
    Run(RunArgs),
    /// Run an invariant suite and print its residual table; exit code 1 on
    /// any failed row.
    Verify(VerifyArgs),
    /// Time the O(n) scans against the O(n^2) oracle.
    Bench(BenchArgs),
    /// Convert an Eulerian CSV to a Lagrangian CSV or back.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config, or a run manifest to repeat a run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output] dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// L for [-L, L], or a,b.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// identities, roundtrip, equivariance, weakform, metric or all.
    #[arg(default_value = "all")]
    suite: String,
    /// Config whose [partition] section selects the partition function.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Ascending grid sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [2048usize, 16384, 131072])]
    sizes: Vec<usize>,
    /// Largest size at which the O(n^2) oracle is timed.
    #[arg(long, default_value_t = 16384)]
    naive_max: usize,
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ConvertArgs {
    /// Eulerian CSV (x, u, density) or Lagrangian CSV with a '# {json}' header.
    input: PathBuf,
    output: PathBuf,
    /// Config whose [partition] section selects the partition function.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn partition_from(config: Option<&Path>) -> Result<PartitionSetup, Fail> {
    let pc = match config {
        Some(p) => Config::load(p).map_err(Fail::config)?.partition,
        None => PartitionConfig::default(),
    };
    let base = config.and_then(Path::parent);
    PartitionSetup::from_config(&pc, base).map_err(|e| Fail::config(format!("[partition] {e}")))
}

fn cmd_run(a: RunArgs) -> Result<(), Fail> {
    let mut cfg = match &a.config {
        Some(p) => Config::load(p).map_err(Fail::config)?,
        None => Config::default(),
    };
    if let Some(v) = a.preset {
        cfg.initial.preset = Some(v);
        cfg.initial.input = None;
    }
    if let Some(v) = a.t_final {
        cfg.time.t_final = v;
    }
    if let Some(v) = a.dt {
        cfg.time.dt = Some(v);
    }
    if let Some(v) = a.threads {
        cfg.time.threads = v;
    }
    if let Some(v) = a.n {
        cfg.grid.n = v;
    }
    if let Some(d) = &a.domain {
        (cfg.grid.x_min, cfg.grid.x_max) = parse_domain(d).map_err(Fail::config)?;
    }
    if let Some(o) = a.out {
        cfg.output.dir = o.to_string_lossy().into_owned();
    }
    let base = a.config.as_deref().and_then(Path::parent);
    let out = run::run(cfg, base)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<(), Fail> {
    let setup = partition_from(a.config.as_deref())?;
    let suites = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![a.suite.parse::<Suite>().map_err(|e| Fail::config(e.to_string()))?]
    };
    let mut reports = Vec::new();
    for s in suites {
        let rep = s.run(&setup).map_err(|e| Fail { code: 1, msg: format!("suite {}: {e}", s.name()) })?;
        println!("{rep}");
        reports.push(rep);
    }
    if let Some(p) = &a.out {
        let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
        std::fs::write(p, text).map_err(|e| Fail::io(p, e))?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass()).map(|r| r.suite.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Fail { code: 1, msg: format!("failed suites: {}", failed.join(", ")) })
    }
}

/// Median over five samples of the mean time per call, each sample
/// repeating the call for at least 20 ms.
fn median_time<F: FnMut()>(mut f: F) -> f64 {
    let mut samples = Vec::with_capacity(5);
    for _ in 0..5 {
        let start = Instant::now();
        let mut calls = 0u32;
        while calls == 0 || start.elapsed().as_secs_f64() < 0.02 {
            f();
            calls += 1;
        }
        samples.push(start.elapsed().as_secs_f64() / calls as f64);
    }
    samples.sort_by(f64::total_cmp);
    samples[2]
}

fn cmd_bench(a: BenchArgs) -> Result<(), Fail> {
    if a.sizes.is_empty() || a.sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Fail::config("--sizes must be nonempty and ascending"));
    }
    let setup = PartitionSetup::quintic();
    let mut rows: Vec<(usize, f64, Option<f64>, Option<f64>)> = Vec::new();
    for &n in &a.sizes {
        let grid = Grid1d::symmetric(30.0, n).map_err(|e| Fail::config(e.to_string()))?;
        let x = to_lagrangian(&kink(0.75, 0.3, -2.0, 1.0, grid, &setup), &setup)
            .map_err(|e| Fail { code: 1, msg: e.to_string() })?;
        let run_fast = || compute_pq_threads(&x, &setup, a.threads).expect("admissible state");
        let t_fast = median_time(|| {
            std::hint::black_box(run_fast());
        });
        let (t_naive, agree) = if n <= a.naive_max {
            let fast = run_fast();
            let slow = naive_pq(&x, &setup).expect("admissible state");
            let diff = fast
                .p
                .iter()
                .zip(&slow.p)
                .chain(fast.q.iter().zip(&slow.q))
                .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            let t = median_time(|| {
                std::hint::black_box(naive_pq(&x, &setup).expect("admissible state"));
            });
            (Some(t), Some(diff))
        } else {
            (None, None)
        };
        println!(
            "n={n:>8} fast {t_fast:.3e}s naive {} max|fast-naive| {}",
            t_naive.map_or("-".into(), |t| format!("{t:.3e}s")),
            agree.map_or("-".into(), |d| format!("{d:.2e}"))
        );
        rows.push((n, t_fast, t_naive, agree));
    }
    let mut w = csv::Writer::from_path(&a.out).map_err(|e| Fail::io(&a.out, e))?;
    w.write_record(["n", "t_fast", "t_naive", "max_abs_diff"]).map_err(|e| Fail::io(&a.out, e))?;
    for (n, tf, tn, d) in &rows {
        let opt = |v: &Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        w.write_record([n.to_string(), format!("{tf:e}"), opt(tn), opt(d)]).map_err(|e| Fail::io(&a.out, e))?;
    }
    w.flush().map_err(|e| Fail::io(&a.out, e))?;

    let mut bad = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if let Some(d) = r.3 {
            if d > 1e-12 {
                bad.push(format!("n={}: fast and naive differ by {d:.2e}", r.0));
            }
        }
        for s in &rows[i + 1..] {
            if s.0 != 8 * r.0 {
                continue;
            }
            let fast = s.1 / r.1;
            println!("n={} -> {}: fast ratio {fast:.2} (band [6, 12])", r.0, s.0);
            if !(6.0..=12.0).contains(&fast) {
                bad.push(format!("fast ratio {fast:.2} outside [6, 12]"));
            }
            if let (Some(a), Some(b)) = (r.2, s.2) {
                let naive = b / a;
                println!("n={} -> {}: naive ratio {naive:.2} (band [40, 90])", r.0, s.0);
                if !(40.0..=90.0).contains(&naive) {
                    bad.push(format!("naive ratio {naive:.2} outside [40, 90]"));
                }
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Fail { code: 1, msg: bad.join("; ") })
    }
}

fn cmd_convert(a: ConvertArgs) -> Result<(), Fail> {
    let setup = partition_from(a.config.as_deref())?;
    let head = std::fs::read_to_string(&a.input).map_err(|e| Fail::io(&a.input, e))?;
    let bad = |e: chcons::ChError| Fail::config(format!("{}: {e}", a.input.display()));
    if head.starts_with('#') {
        let x = read_lagrangian(&a.input).map_err(bad)?;
        let eul = to_eulerian(&x, &setup).map_err(bad)?;
        write_eulerian(&a.output, &eul, x.time, &setup).map_err(|e| Fail::io(&a.output, e))?;
    } else {
        let (eul, t) = read_eulerian(&a.input, &setup).map_err(bad)?;
        let mut x = to_lagrangian(&eul, &setup).map_err(bad)?;
        x.time = t;
        write_lagrangian(&a.output, &x).map_err(|e| Fail::io(&a.output, e))?;
    }
    println!("wrote {}", a.output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Convert(a) => cmd_convert(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("chsolve: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
