//! Run configuration. TOML with sections [grid], [time], [initial],
//! [partition] and [output]; a run manifest (JSON) is accepted as well, so
//! any run can be repeated from its manifest.

use std::path::{Path, PathBuf};

use chcons::partition::PartitionConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_x_min")]
    pub x_min: f64,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    /// Node count; odd counts put x = 0 on a node.
    #[serde(default = "default_n")]
    pub n: usize,
    /// When set, labels are shifted by at most half a cell so that the
    /// label of this point falls at a cell midpoint. Use at a peakon crest.
    #[serde(default)]
    pub label_anchor: Option<f64>,
}

fn default_x_min() -> f64 {
    -30.0
}
fn default_x_max() -> f64 {
    30.0
}
fn default_n() -> usize {
    4097
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { x_min: default_x_min(), x_max: default_x_max(), n: default_n(), label_anchor: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Upper bound on the step. Unset means min(10⁻³, 0.1Δξ/(1 + sup|U|)),
    /// resolved at start-up and echoed into the manifest.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_t_final() -> f64 {
    1.0
}
fn default_snapshot_every() -> usize {
    100
}
fn default_threads() -> usize {
    1
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_final: default_t_final(),
            dt: None,
            snapshot_every: default_snapshot_every(),
            threads: default_threads(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// One of the named presets.
    #[serde(default)]
    pub preset: Option<String>,
    /// Eulerian CSV (x, u, density) with an optional JSON sidecar.
    #[serde(default)]
    pub input: Option<String>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { preset: Some("peakon1".into()), input: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "yes")]
    pub eulerian: bool,
    #[serde(default = "yes")]
    pub lagrangian: bool,
    #[serde(default = "yes")]
    pub plot: bool,
}

fn default_dir() -> String {
    "out".into()
}
fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), eulerian: true, lagrangian: true, plot: true }
    }
}

/// The manifest shape, as far as loading a config from it is concerned.
#[derive(Deserialize)]
struct ManifestConfig {
    config: Config,
}

impl Config {
    /// Reads TOML, or JSON (a bare config or a run manifest).
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))?;
            let parsed = if value.get("config").is_some() {
                serde_json::from_value::<ManifestConfig>(value).map(|m| m.config)
            } else {
                serde_json::from_value::<Config>(value)
            };
            parsed.map_err(|e| format!("{}: {e}", path.display()))
        } else {
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let g = &self.grid;
        if !(g.x_min.is_finite() && g.x_max.is_finite() && g.x_max > g.x_min) {
            return Err(format!("[grid] needs x_min < x_max, got {} and {}", g.x_min, g.x_max));
        }
        if g.n < 16 {
            return Err(format!("[grid] n = {} is too small (at least 16)", g.n));
        }
        let t = &self.time;
        if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
            return Err(format!("[time] t_final must be finite and nonnegative, got {}", t.t_final));
        }
        if let Some(dt) = t.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(format!("[time] dt must be positive, got {dt}"));
            }
        }
        if t.snapshot_every == 0 {
            return Err("[time] snapshot_every must be at least 1".into());
        }
        if t.threads == 0 {
            return Err("[time] threads must be at least 1".into());
        }
        match (&self.initial.preset, &self.initial.input) {
            (Some(_), Some(_)) => Err("[initial] set either preset or input, not both".into()),
            (None, None) => Err("[initial] needs a preset or an input file".into()),
            (Some(p), None) if !chcons::initial_data::PRESETS.contains(&p.as_str()) => Err(format!(
                "[initial] preset: unknown '{p}', expected one of {}",
                chcons::initial_data::PRESETS.join(", ")
            )),
            _ => Ok(()),
        }
    }

    /// Resolves a path from the config relative to the config's directory.
    pub fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
        match base {
            Some(b) if Path::new(p).is_relative() => b.join(p),
            _ => PathBuf::from(p),
        }
    }
}

/// `L` for [−L, L] or `a,b` / `a:b`.
pub fn parse_domain(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split([',', ':']).map(str::trim).collect();
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("--domain '{s}': {e}"));
    match parts.as_slice() {
        [l] => {
            let l = num(l)?;
            Ok((-l, l))
        }
        [a, b] => Ok((num(a)?, num(b)?)),
        _ => Err(format!("--domain '{s}': expected L or a,b")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_gives_defaults() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c.grid, GridConfig::default());
        assert_eq!(c.initial.preset.as_deref(), Some("peakon1"));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_field_names_the_field() {
        let e = toml::from_str::<Config>("[grid]\nnn = 3\n").unwrap_err().to_string();
        assert!(e.contains("nn") && e.contains("line"), "{e}");
    }

    #[test]
    fn domain_forms() {
        assert_eq!(parse_domain("20").unwrap(), (-20.0, 20.0));
        assert_eq!(parse_domain("-5,7.5").unwrap(), (-5.0, 7.5));
        assert_eq!(parse_domain("-5:7").unwrap(), (-5.0, 7.0));
        assert!(parse_domain("a").is_err());
    }
}
