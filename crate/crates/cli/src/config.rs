//! Run configuration: a flat `key = value` file merged with command-line
//! overrides, validated in full before any computation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use stokes_ocp::bench::ExampleId;
use stokes_ocp::ocp::PdasConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),
    #[error("invalid value '{value}' for key '{key}': {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key '{0}'")]
    Missing(&'static str),
    #[error("{path}: line {line}: expected 'key = value'")]
    Syntax { path: String, line: usize },
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Invalid(String),
}

pub const KEYS: &[&str] = &[
    "example",
    "h",
    "k",
    "alpha",
    "beta",
    "qbound_upper",
    "qbound_lower",
    "out",
    "ref",
    "workers",
    "tol_feas",
    "tol_comp",
    "tol_stationarity",
    "tol_minres",
    "minres_max_iter",
    "max_outer",
    "c_state",
    "c_ctrl",
    "warm_start",
    "timing",
    "errors",
    "omega",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleChoice {
    Ocp(ExampleId),
    ManufacturedStokes,
    ManufacturedStationary,
}

impl fmt::Display for ExampleChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExampleChoice::Ocp(id) => write!(f, "{id}"),
            ExampleChoice::ManufacturedStokes => f.write_str("manufactured-stokes"),
            ExampleChoice::ManufacturedStationary => f.write_str("manufactured-stationary"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub example: ExampleChoice,
    /// Subdivisions per direction, one per requested `h`.
    pub n: Vec<usize>,
    /// Slab counts, one per requested `k`.
    pub m: Vec<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub upper: Option<f64>,
    pub lower: Option<f64>,
    pub out: PathBuf,
    pub reference: Option<PathBuf>,
    pub workers: usize,
    pub pdas: PdasConfig,
    pub warm_start: bool,
    pub timing: bool,
    pub errors: ErrorMode,
    pub omega: f64,
    /// Resolved key/value pairs including defaults, echoed into outputs.
    pub resolved: BTreeMap<String, String>,
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_pairs(&text, &path.display().to_string())
}

pub fn parse_pairs(text: &str, origin: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            path: origin.to_string(),
            line: i + 1,
        })?;
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

/// `0.125`, `1/8` or `2^-3`.
fn parse_step(key: &str, tok: &str) -> Result<f64, ConfigError> {
    let tok = tok.trim();
    let v = if let Some((a, b)) = tok.split_once('/') {
        let a: f64 = a.trim().parse().map_err(|_| invalid(key, tok, "bad numerator"))?;
        let b: f64 = b.trim().parse().map_err(|_| invalid(key, tok, "bad denominator"))?;
        a / b
    } else if let Some((b, e)) = tok.split_once('^') {
        let b: f64 = b.trim().parse().map_err(|_| invalid(key, tok, "bad base"))?;
        let e: f64 = e.trim().parse().map_err(|_| invalid(key, tok, "bad exponent"))?;
        b.powf(e)
    } else {
        tok.parse().map_err(|_| invalid(key, tok, "not a number"))?
    };
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(key, tok, "must be positive"));
    }
    Ok(v)
}

/// Step list to subdivision counts `1 / step`, which must be integers.
fn parse_counts(key: &str, value: &str, horizon: f64) -> Result<Vec<usize>, ConfigError> {
    let mut out = Vec::new();
    for tok in value.split(',').filter(|t| !t.trim().is_empty()) {
        let s = parse_step(key, tok)?;
        let count = (horizon / s).round();
        if count < 1.0 || (count * s - horizon).abs() > 1e-9 * horizon {
            return Err(invalid(key, tok, "the step must divide the interval evenly"));
        }
        out.push(count as usize);
    }
    if out.is_empty() {
        return Err(invalid(key, value, "empty list"));
    }
    Ok(out)
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    match v.trim() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        t => t.parse().map_err(|_| invalid(key, v, "not a number")),
    }
}

fn parse_positive(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x = parse_f64(key, v)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(key, v, "must be positive and finite"));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str, min: usize) -> Result<usize, ConfigError> {
    let x: usize = v.trim().parse().map_err(|_| invalid(key, v, "not a non-negative integer"))?;
    if x < min {
        return Err(invalid(key, v, format!("must be at least {min}")));
    }
    Ok(x)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(invalid(key, v, "expected true or false")),
    }
}

fn parse_example(v: &str) -> Result<ExampleChoice, ConfigError> {
    match v.trim() {
        "manufactured-stokes" => Ok(ExampleChoice::ManufacturedStokes),
        "manufactured-stationary" => Ok(ExampleChoice::ManufacturedStationary),
        t => t
            .parse::<ExampleId>()
            .map(ExampleChoice::Ocp)
            .map_err(|_| invalid("example", v, "expected 1, 2, 3, manufactured-stokes or manufactured-stationary")),
    }
}

impl RunConfig {
    /// Validates every key of `pairs` and fills defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some(k) = pairs.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let example = parse_example(get("example").ok_or(ConfigError::Missing("example"))?)?;
        let n = parse_counts("h", get("h").ok_or(ConfigError::Missing("h"))?, 1.0)?;
        let m = match (get("k"), example) {
            (Some(v), _) => parse_counts("k", v, 1.0)?,
            (None, ExampleChoice::ManufacturedStationary) => vec![1],
            (None, _) => return Err(ConfigError::Missing("k")),
        };
        let opt_f64 = |k: &str| get(k).map(|v| parse_f64(k, v)).transpose();
        let alpha = get("alpha").map(|v| parse_positive("alpha", v)).transpose()?;
        let beta = opt_f64("beta")?;
        if let Some(b) = beta {
            if !(b > 0.0) {
                return Err(invalid("beta", get("beta").unwrap_or(""), "must be positive (inf disables the constraint)"));
            }
        }
        let upper = opt_f64("qbound_upper")?;
        let lower = opt_f64("qbound_lower")?;
        if let (Some(a), Some(b)) = (lower, upper) {
            if !(a < b) {
                return Err(ConfigError::Invalid(format!("qbound_lower = {a} must be below qbound_upper = {b}")));
            }
        }
        let effective_beta = match example {
            ExampleChoice::Ocp(id) => beta.unwrap_or(id.definition().spec.beta),
            _ => 1.0,
        };
        let mut pdas = PdasConfig::for_beta(effective_beta);
        if let Some(v) = get("tol_feas") {
            pdas.tolerances.feasibility = parse_positive("tol_feas", v)?;
        }
        if let Some(v) = get("tol_comp") {
            pdas.tolerances.complementarity = parse_positive("tol_comp", v)?;
        }
        if let Some(v) = get("tol_stationarity") {
            pdas.tolerances.stationarity = parse_positive("tol_stationarity", v)?;
        }
        if let Some(v) = get("tol_minres") {
            pdas.minres_rel_tol = parse_positive("tol_minres", v)?;
        }
        if let Some(v) = get("minres_max_iter") {
            pdas.minres_max_iter = parse_usize("minres_max_iter", v, 1)?;
        }
        if let Some(v) = get("max_outer") {
            pdas.max_outer = parse_usize("max_outer", v, 1)?;
        }
        if let Some(v) = get("c_state") {
            pdas.c_state = parse_positive("c_state", v)?;
        }
        if let Some(v) = get("c_ctrl") {
            pdas.c_ctrl = parse_positive("c_ctrl", v)?;
        }
        let workers = get("workers").map(|v| parse_usize("workers", v, 0)).transpose()?.unwrap_or(0);
        let warm_start = get("warm_start").map(|v| parse_bool("warm_start", v)).transpose()?.unwrap_or(true);
        let timing = get("timing").map(|v| parse_bool("timing", v)).transpose()?.unwrap_or(false);
        let errors = match get("errors").map(str::trim) {
            None | Some("auto") => ErrorMode::Auto,
            Some("on") => ErrorMode::On,
            Some("off") => ErrorMode::Off,
            Some(v) => return Err(invalid("errors", v, "expected auto, on or off")),
        };
        let omega = get("omega").map(|v| parse_positive("omega", v)).transpose()?.unwrap_or(4.0);
        let out = PathBuf::from(get("out").unwrap_or("out"));
        let reference = get("ref").map(PathBuf::from);

        let mut resolved = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            resolved.insert(k.to_string(), v);
        };
        put("example", example.to_string());
        put("h", n.iter().map(|n| format!("1/{n}")).collect::<Vec<_>>().join(","));
        put("k", m.iter().map(|m| format!("1/{m}")).collect::<Vec<_>>().join(","));
        if let ExampleChoice::Ocp(id) = example {
            let spec = id.definition().spec;
            let bound = |o: Option<f64>, b: [f64; 2]| match o {
                Some(v) => v.to_string(),
                None if b[0] == b[1] => b[0].to_string(),
                None => format!("{},{}", b[0], b[1]),
            };
            put("alpha", alpha.unwrap_or(spec.alpha).to_string());
            put("beta", beta.unwrap_or(spec.beta).to_string());
            put("qbound_upper", bound(upper, spec.upper));
            put("qbound_lower", bound(lower, spec.lower));
        }
        put("out", out.display().to_string());
        put("ref", reference.as_ref().map_or("none".into(), |p| p.display().to_string()));
        put("workers", workers.to_string());
        put("tol_feas", format!("{:e}", pdas.tolerances.feasibility));
        put("tol_comp", format!("{:e}", pdas.tolerances.complementarity));
        put("tol_stationarity", format!("{:e}", pdas.tolerances.stationarity));
        put("tol_minres", format!("{:e}", pdas.minres_rel_tol));
        put("minres_max_iter", pdas.minres_max_iter.to_string());
        put("max_outer", pdas.max_outer.to_string());
        put("c_state", pdas.c_state.to_string());
        put("c_ctrl", pdas.c_ctrl.to_string());
        put("warm_start", warm_start.to_string());
        put("timing", timing.to_string());
        put("errors", format!("{errors:?}").to_lowercase());
        put("omega", omega.to_string());

        Ok(RunConfig {
            example,
            n,
            m,
            alpha,
            beta,
            upper,
            lower,
            out,
            reference,
            workers,
            pdas,
            warm_start,
            timing,
            errors,
            omega,
            resolved,
        })
    }

    pub fn echo(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(text: &str) -> BTreeMap<String, String> {
        parse_pairs(text, "test").unwrap()
    }

    #[test]
    fn parses_steps() {
        let c = RunConfig::from_pairs(&pairs("example = 1\nh = 1/8, 2^-4, 0.03125\nk = 0.001")).unwrap();
        assert_eq!(c.n, vec![8, 16, 32]);
        assert_eq!(c.m, vec![1000]);
        assert!(c.warm_start && !c.timing);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        let e = RunConfig::from_pairs(&pairs("example = 1\nh = 1/8\nk = 1/10\nfoo = 3")).unwrap_err();
        assert!(e.to_string().contains("'foo'"));
        let e = RunConfig::from_pairs(&pairs("example = 1\nh = 0.3\nk = 1/10")).unwrap_err();
        assert!(e.to_string().contains("'h'"));
        let e = RunConfig::from_pairs(&pairs("example = 7\nh = 1/8\nk = 1/10")).unwrap_err();
        assert!(e.to_string().contains("'example'"));
        assert!(RunConfig::from_pairs(&pairs("example = 1\nh = 1/8")).is_err());
        assert!(RunConfig::from_pairs(&pairs("example = manufactured-stationary\nh = 1/8")).is_ok());
        assert!(parse_pairs("no equals sign", "t").is_err());
    }
}
