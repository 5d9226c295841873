//! Run configuration: a JSON file with a versioned schema, validated by
//! hand so every complaint carries the exact field path.

use serde_json::Value;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use transcoord_core::geometry::Chart;
use transcoord_core::wavepacket::{Principle, WaveFunction};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration; exits with status 2.
    Config { path: String, message: String },
    /// A toolkit operation refused the inputs; exits with status 1.
    Module { name: String, message: String },
    /// Filesystem trouble; exits with status 1.
    Io { context: String, message: String },
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { path, message } => {
                write!(f, "config error at {path}: {message}")
            }
            CliError::Module { name, message } => write!(f, "error: {name}: {message}"),
            CliError::Io { context, message } => write!(f, "error: Io: {context}: {message}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}

pub fn config_err(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config { path: path.into(), message: message.into() }
}

/// Wraps a toolkit error, naming it by its outermost variant so scripted
/// callers can match on a stable identifier.
pub fn module_err<E: fmt::Debug + fmt::Display>(e: E) -> CliError {
    let debug = format!("{e:?}");
    let name: String = debug.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
    CliError::Module { name, message: format!("{e}") }
}

pub fn io_err(context: impl fmt::Display, e: std::io::Error) -> CliError {
    CliError::Io { context: context.to_string(), message: e.to_string() }
}

type Result<T> = std::result::Result<T, CliError>;

pub struct Config {
    root: Value,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path.display(), e))?;
        let root: Value = serde_json::from_str(&text)
            .map_err(|e| config_err(path.display().to_string(), format!("invalid JSON: {e}")))?;
        if !root.is_object() {
            return Err(config_err(path.display().to_string(), "top level must be an object"));
        }
        Ok(Config { root })
    }

    /// Checks the schema version and that the file was written for the
    /// command being run.
    pub fn validate_header(&self, command: &str) -> Result<()> {
        let v = self.u64("schema_version")?;
        if v != SCHEMA_VERSION {
            return Err(config_err(
                "schema_version",
                format!("unsupported version {v}, this build reads {SCHEMA_VERSION}"),
            ));
        }
        let named = self.str("command")?;
        if named != command {
            return Err(config_err(
                "command",
                format!("file is for '{named}' but '{command}' was invoked"),
            ));
        }
        Ok(())
    }

    /// Master seed: the config value, overridden by the command line.
    pub fn seed(&self, cli: Option<u64>) -> Result<u64> {
        if let Some(s) = cli {
            return Ok(s);
        }
        self.u64_or("seed", 0)
    }

    fn get(&self, path: &str) -> Option<&Value> {
        let mut v = &self.root;
        for part in path.split('.') {
            v = v.as_object()?.get(part)?;
        }
        Some(v)
    }

    pub fn has(&self, path: &str) -> bool {
        self.get(path).is_some()
    }

    pub fn f64(&self, path: &str) -> Result<f64> {
        match self.get(path) {
            None => Err(config_err(path, "missing required number")),
            Some(v) => v.as_f64().ok_or_else(|| config_err(path, "expected a number")),
        }
    }

    pub fn f64_or(&self, path: &str, default: f64) -> Result<f64> {
        match self.get(path) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| config_err(path, "expected a number")),
        }
    }

    pub fn u64(&self, path: &str) -> Result<u64> {
        match self.get(path) {
            None => Err(config_err(path, "missing required nonnegative integer")),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| config_err(path, "expected a nonnegative integer")),
        }
    }

    pub fn u64_or(&self, path: &str, default: u64) -> Result<u64> {
        match self.get(path) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| config_err(path, "expected a nonnegative integer")),
        }
    }

    pub fn str(&self, path: &str) -> Result<String> {
        match self.get(path) {
            None => Err(config_err(path, "missing required string")),
            Some(v) => v
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| config_err(path, "expected a string")),
        }
    }

    pub fn str_or(&self, path: &str, default: &str) -> Result<String> {
        match self.get(path) {
            None => Ok(default.to_string()),
            Some(v) => v
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| config_err(path, "expected a string")),
        }
    }

    pub fn pair(&self, path: &str) -> Result<[f64; 2]> {
        match self.get(path) {
            None => Err(config_err(path, "missing required pair of numbers")),
            Some(v) => pair_value(v, path),
        }
    }

    pub fn pair_or(&self, path: &str, default: [f64; 2]) -> Result<[f64; 2]> {
        match self.get(path) {
            None => Ok(default),
            Some(v) => pair_value(v, path),
        }
    }

    pub fn f64_list(&self, path: &str) -> Result<Vec<f64>> {
        let arr = self.array(path)?;
        arr.iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_f64()
                    .ok_or_else(|| config_err(format!("{path}[{i}]"), "expected a number"))
            })
            .collect()
    }

    pub fn f64_list_or_empty(&self, path: &str) -> Result<Vec<f64>> {
        if self.has(path) {
            self.f64_list(path)
        } else {
            Ok(Vec::new())
        }
    }

    pub fn pair_list(&self, path: &str) -> Result<Vec<[f64; 2]>> {
        let arr = self.array(path)?;
        arr.iter()
            .enumerate()
            .map(|(i, v)| pair_value(v, &format!("{path}[{i}]")))
            .collect()
    }

    pub fn array(&self, path: &str) -> Result<&[Value]> {
        match self.get(path) {
            None => Err(config_err(path, "missing required array")),
            Some(v) => v
                .as_array()
                .map(Vec::as_slice)
                .ok_or_else(|| config_err(path, "expected an array")),
        }
    }
}

fn pair_value(v: &Value, path: &str) -> Result<[f64; 2]> {
    let arr = v
        .as_array()
        .ok_or_else(|| config_err(path, "expected a pair of numbers"))?;
    if arr.len() != 2 {
        return Err(config_err(path, format!("expected 2 entries, found {}", arr.len())));
    }
    let a = arr[0]
        .as_f64()
        .ok_or_else(|| config_err(format!("{path}[0]"), "expected a number"))?;
    let b = arr[1]
        .as_f64()
        .ok_or_else(|| config_err(format!("{path}[1]"), "expected a number"))?;
    Ok([a, b])
}

fn field_f64(v: &Value, path: &str, key: &str, default: Option<f64>) -> Result<f64> {
    let obj = v
        .as_object()
        .ok_or_else(|| config_err(path, "expected an object"))?;
    match obj.get(key) {
        None => default.ok_or_else(|| config_err(format!("{path}.{key}"), "missing required number")),
        Some(n) => n
            .as_f64()
            .ok_or_else(|| config_err(format!("{path}.{key}"), "expected a number")),
    }
}

fn field_pair(v: &Value, path: &str, key: &str) -> Result<[f64; 2]> {
    let obj = v
        .as_object()
        .ok_or_else(|| config_err(path, "expected an object"))?;
    match obj.get(key) {
        None => Err(config_err(format!("{path}.{key}"), "missing required pair of numbers")),
        Some(n) => pair_value(n, &format!("{path}.{key}")),
    }
}

/// Builds the chart named under `prefix`; absent means the flat default.
pub fn chart_from(cfg: &Config, prefix: &str) -> Result<Arc<Chart>> {
    if !cfg.has(prefix) {
        return Ok(Chart::minkowski());
    }
    let kind = cfg.str_or(&format!("{prefix}.kind"), "minkowski")?;
    match kind.as_str() {
        "minkowski" => Ok(Chart::minkowski()),
        "rindler" => {
            let [lo, hi] = cfg.pair_or(&format!("{prefix}.domain"), [0.2, 8.0])?;
            if !(lo > 0.0 && lo < hi) {
                return Err(config_err(format!("{prefix}.domain"), "needs 0 < lo < hi"));
            }
            Chart::static_diagonal("rindler", |x| -(x * x), |_| 1.0, (lo, hi)).map_err(module_err)
        }
        other => Err(config_err(
            format!("{prefix}.kind"),
            format!("unknown chart kind '{other}' (expected minkowski or rindler)"),
        )),
    }
}

fn principle_from(cfg: &Config, prefix: &str, mass: f64) -> Result<Principle> {
    let name = cfg.str_or(&format!("{prefix}.principle"), "schroedinger")?;
    match name.as_str() {
        "schroedinger" => Ok(Principle::Schroedinger { mass }),
        "klein_gordon" => Ok(Principle::KleinGordon { mass }),
        other => Err(config_err(
            format!("{prefix}.principle"),
            format!("unknown principle '{other}' (expected schroedinger or klein_gordon)"),
        )),
    }
}

/// Builds the wave packet described under `prefix` on the given chart.
pub fn packet_from(cfg: &Config, chart: &Arc<Chart>, prefix: &str) -> Result<WaveFunction> {
    let kind = cfg.str(&format!("{prefix}.kind"))?;
    let mass_path = format!("{prefix}.mass");
    let mass = cfg.f64_or(&mass_path, 1.0)?;
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(config_err(mass_path, "mass must be positive"));
    }
    match kind.as_str() {
        "gaussian" => {
            let sigma0 = cfg.f64_or(&format!("{prefix}.sigma0"), 1.0)?;
            if !(sigma0 > 0.0) {
                return Err(config_err(format!("{prefix}.sigma0"), "must be positive"));
            }
            let x0 = cfg.f64_or(&format!("{prefix}.x0"), 0.0)?;
            let k0 = cfg.f64_or(&format!("{prefix}.k0"), 0.0)?;
            Ok(WaveFunction::gaussian(chart.clone(), mass, sigma0, x0, k0))
        }
        "plane" => {
            let k = cfg.f64(&format!("{prefix}.k"))?;
            let principle = principle_from(cfg, prefix, mass)?;
            Ok(WaveFunction::plane_wave(chart.clone(), principle, k))
        }
        "boxcar" => {
            let center = cfg.f64_or(&format!("{prefix}.center"), 0.0)?;
            let width = cfg.f64(&format!("{prefix}.width"))?;
            if !(width > 0.0) {
                return Err(config_err(format!("{prefix}.width"), "must be positive"));
            }
            let principle = principle_from(cfg, prefix, mass)?;
            Ok(WaveFunction::uniform_box(chart.clone(), principle, center, width))
        }
        "gaussian_sum" => {
            let terms_path = format!("{prefix}.terms");
            let arr = cfg.array(&terms_path)?;
            let mut terms = Vec::with_capacity(arr.len());
            for (i, v) in arr.iter().enumerate() {
                let path = format!("{terms_path}[{i}]");
                let [re, im] = field_pair(v, &path, "weight")?;
                let sigma0 = field_f64(v, &path, "sigma0", Some(1.0))?;
                if !(sigma0 > 0.0) {
                    return Err(config_err(format!("{path}.sigma0"), "must be positive"));
                }
                let x0 = field_f64(v, &path, "x0", Some(0.0))?;
                let k0 = field_f64(v, &path, "k0", Some(0.0))?;
                terms.push((num_complex::Complex64::new(re, im), sigma0, x0, k0));
            }
            WaveFunction::gaussian_superposition(chart.clone(), mass, terms).map_err(module_err)
        }
        "mode_sum" => {
            let terms_path = format!("{prefix}.terms");
            let arr = cfg.array(&terms_path)?;
            let mut terms = Vec::with_capacity(arr.len());
            for (i, v) in arr.iter().enumerate() {
                let path = format!("{terms_path}[{i}]");
                let [re, im] = field_pair(v, &path, "weight")?;
                let k = field_f64(v, &path, "k", None)?;
                terms.push((num_complex::Complex64::new(re, im), k));
            }
            Ok(WaveFunction::mode_sum(chart.clone(), mass, terms))
        }
        other => Err(config_err(
            format!("{prefix}.kind"),
            format!(
                "unknown packet kind '{other}' \
                 (expected gaussian, plane, boxcar, gaussian_sum, or mode_sum)"
            ),
        )),
    }
}
