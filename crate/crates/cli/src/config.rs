//! Experiment configuration: `key = value` files, flag overrides and sweeps.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use curveflow::{FlowModel, NormalWeights, OmegaRule, Scheme};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

fn bad(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Mcf,
    Apmcf,
    HeleShaw,
}

impl FromStr for Flow {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mcf" => Ok(Flow::Mcf),
            "apmcf" => Ok(Flow::Apmcf),
            "heleshaw" | "hele-shaw" => Ok(Flow::HeleShaw),
            _ => Err("expected mcf, apmcf or heleshaw".into()),
        }
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flow::Mcf => "mcf",
            Flow::Apmcf => "apmcf",
            Flow::HeleShaw => "heleshaw",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemeName(pub Scheme);

impl FromStr for SchemeName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "implicit" => Ok(SchemeName(Scheme::Implicit)),
            "rk4" => Ok(SchemeName(Scheme::Rk4)),
            "midpoint-srk" => Ok(SchemeName(Scheme::MidpointSrk)),
            "gauss2-srk" => Ok(SchemeName(Scheme::Gauss2Srk)),
            _ => Err("expected implicit, rk4, midpoint-srk or gauss2-srk".into()),
        }
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            Scheme::Implicit => "implicit",
            Scheme::Rk4 => "rk4",
            Scheme::MidpointSrk => "midpoint-srk",
            Scheme::Gauss2Srk => "gauss2-srk",
        })
    }
}

/// `paper` (`10 N / dt`) or a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaSpec(pub OmegaRule);

impl FromStr for OmegaSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "paper" {
            return Ok(OmegaSpec(OmegaRule::default()));
        }
        s.parse::<f64>()
            .map(|w| OmegaSpec(OmegaRule::Constant(w)))
            .map_err(|_| "expected `paper` or a number".into())
    }
}

impl fmt::Display for OmegaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            OmegaRule::PerStep { factor } if factor == 10.0 => f.write_str("paper"),
            OmegaRule::PerStep { factor } => write!(f, "perstep:{factor}"),
            OmegaRule::Constant(w) => write!(f, "{w}"),
        }
    }
}

/// `bisector`, `decomposition`, `edge-length` or `blended:<width>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightsSpec(pub NormalWeights);

impl FromStr for WeightsSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let w = match s {
            "bisector" => NormalWeights::Bisector,
            "decomposition" => NormalWeights::Decomposition,
            "edge-length" => NormalWeights::EdgeLength,
            _ => {
                let width = s
                    .strip_prefix("blended:")
                    .and_then(|w| w.parse::<f64>().ok())
                    .ok_or("expected bisector, decomposition, edge-length or blended:<width>")?;
                NormalWeights::Blended { width }
            }
        };
        Ok(WeightsSpec(w))
    }
}

impl fmt::Display for WeightsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            NormalWeights::Bisector => f.write_str("bisector"),
            NormalWeights::Decomposition => f.write_str("decomposition"),
            NormalWeights::EdgeLength => f.write_str("edge-length"),
            NormalWeights::Blended { width } => write!(f, "blended:{width}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub flow: Flow,
    pub scheme: SchemeName,
    pub n: usize,
    pub tau: f64,
    pub omega: OmegaSpec,
    /// Surface tension for Hele-Shaw.
    pub sigma: f64,
    pub tol: f64,
    pub t_end: f64,
    /// Uniform step instead of the adaptive rule.
    pub dt: Option<f64>,
    /// Snapshot spacing in time.
    pub snapshots: Option<f64>,
    pub out: PathBuf,
    pub svg: bool,
    pub weights: WeightsSpec,
    pub max_halvings: usize,
    /// Redistribute the initial vertices before the run.
    pub redistribute: bool,
    pub tol_u: f64,
    /// Seeds the vertex jitter.
    pub seed: u64,
    /// Random displacement of each initial vertex, as a fraction of `L/N`.
    pub jitter: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            flow: Flow::Apmcf,
            scheme: SchemeName(Scheme::Implicit),
            n: 50,
            tau: 0.01,
            omega: OmegaSpec(OmegaRule::default()),
            sigma: 1.0,
            tol: 1e-8,
            t_end: 1.0,
            dt: None,
            snapshots: None,
            out: PathBuf::from("out"),
            svg: false,
            weights: WeightsSpec(NormalWeights::default()),
            max_halvings: 10,
            redistribute: true,
            tol_u: 1e-10,
            seed: 0,
            jitter: 0.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(key, value, e))
}

fn optional(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    match value {
        "" | "none" => Ok(None),
        _ => parse(key, value).map(Some),
    }
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "flow",
        "scheme",
        "n",
        "tau",
        "omega_rule",
        "sigma",
        "tol",
        "t_end",
        "dt",
        "snapshots",
        "out",
        "svg",
        "weights",
        "max_halvings",
        "redistribute",
        "tol_u",
        "seed",
        "jitter",
    ];

    /// Sets one field from its textual form. Dashes in keys are accepted
    /// in place of underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let k = key.trim().to_ascii_lowercase().replace('-', "_");
        let v = value.trim();
        match k.as_str() {
            "flow" => self.flow = parse(&k, v)?,
            "scheme" => self.scheme = parse(&k, v)?,
            "n" => self.n = parse(&k, v)?,
            "tau" => self.tau = parse(&k, v)?,
            "omega_rule" | "omega" => self.omega = parse(&k, v)?,
            "sigma" => self.sigma = parse(&k, v)?,
            "tol" => self.tol = parse(&k, v)?,
            "t_end" => self.t_end = parse(&k, v)?,
            "dt" => self.dt = optional(&k, v)?,
            "snapshots" => self.snapshots = optional(&k, v)?,
            "out" => self.out = PathBuf::from(v),
            "svg" => self.svg = parse(&k, v)?,
            "weights" => self.weights = parse(&k, v)?,
            "max_halvings" => self.max_halvings = parse(&k, v)?,
            "redistribute" => self.redistribute = parse(&k, v)?,
            "tol_u" => self.tol_u = parse(&k, v)?,
            "seed" => self.seed = parse(&k, v)?,
            "jitter" => self.jitter = parse(&k, v)?,
            _ => return Err(ConfigError::UnknownKey(key.trim().into())),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (key, value) in pairs(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = read(path)?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
            }
        };
        if self.n < 3 {
            return Err(ConfigError::Invalid(format!("N must be at least 3, got {}", self.n)));
        }
        positive("tau", self.tau)?;
        positive("tol", self.tol)?;
        positive("tol_u", self.tol_u)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(ConfigError::Invalid(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if let Some(dt) = self.dt {
            positive("dt", dt)?;
        }
        if let Some(s) = self.snapshots {
            positive("snapshots", s)?;
        }
        if let OmegaRule::Constant(w) = self.omega.0 {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(ConfigError::Invalid(format!("omega must be finite and >= 0, got {w}")));
            }
        }
        if self.flow == Flow::HeleShaw {
            positive("sigma", self.sigma)?;
        }
        if !(self.jitter >= 0.0 && self.jitter < 0.5) {
            return Err(ConfigError::Invalid(format!("jitter must lie in [0, 0.5), got {}", self.jitter)));
        }
        Ok(())
    }

    pub fn model(&self) -> FlowModel {
        match self.flow {
            Flow::Mcf => FlowModel::Mcf,
            Flow::Apmcf => FlowModel::Apmcf,
            Flow::HeleShaw => FlowModel::hele_shaw(self.sigma),
        }
    }

    /// The effective configuration, in the same format `apply_text` reads.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| v.to_string());
        [
            format!("flow = {}", self.flow),
            format!("scheme = {}", self.scheme),
            format!("n = {}", self.n),
            format!("tau = {}", self.tau),
            format!("omega_rule = {}", self.omega),
            format!("sigma = {}", self.sigma),
            format!("tol = {}", self.tol),
            format!("t_end = {}", self.t_end),
            format!("dt = {}", opt(self.dt)),
            format!("snapshots = {}", opt(self.snapshots)),
            format!("out = {}", self.out.display()),
            format!("svg = {}", self.svg),
            format!("weights = {}", self.weights),
            format!("max_halvings = {}", self.max_halvings),
            format!("redistribute = {}", self.redistribute),
            format!("tol_u = {}", self.tol_u),
            format!("seed = {}", self.seed),
            format!("jitter = {}", self.jitter),
        ]
        .join("\n")
            + "\n"
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.into(),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// One named run of a sweep; its output goes to `<out>/<name>`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub name: String,
    pub config: ExperimentConfig,
}

/// Parses a sweep file: `[name]` headers, each followed by `key = value`
/// overrides of `base`.
pub fn parse_sweep(text: &str, base: &ExperimentConfig) -> Result<Vec<SweepEntry>, ConfigError> {
    let mut entries: Vec<SweepEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            let valid = !name.is_empty()
                && name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
                && name != "."
                && name != "..";
            if !valid {
                return Err(ConfigError::Invalid(format!("line {}: bad run name {name:?}", i + 1)));
            }
            if entries.iter().any(|e| e.name == name) {
                return Err(ConfigError::Invalid(format!("duplicate run name {name:?}")));
            }
            let mut config = base.clone();
            config.out = base.out.join(name);
            entries.push(SweepEntry {
                name: name.into(),
                config,
            });
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.into(),
        })?;
        let entry = entries
            .last_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("line {}: setting before the first [name]", i + 1)))?;
        if k.trim().eq_ignore_ascii_case("out") {
            return Err(ConfigError::Invalid(format!(
                "line {}: runs of a sweep always write to <out>/<name>",
                i + 1
            )));
        }
        entry.config.set(k, v)?;
    }
    if entries.is_empty() {
        return Err(ConfigError::Invalid("sweep file defines no runs".into()));
    }
    Ok(entries)
}

pub fn read_sweep(path: &Path, base: &ExperimentConfig) -> Result<Vec<SweepEntry>, ConfigError> {
    parse_sweep(&read(path)?, base)
}
