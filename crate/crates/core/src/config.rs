//! `key = value` run configuration with position-precise diagnostics.
//!
//! ```text
//! # comments run to the end of the line
//! command = grow
//! theta2 = 1/1
//! particles = 100
//! seed = 7
//! ```
//!
//! Angles are tangent ratios `p/q` (`1/0` and `-1/0` are the vertical rays).
//! A plain decimal such as `0.3927` is read as an angle in radians and
//! replaced by a rational tangent within `1e-9`, with a warning.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dla::SamplerParams;
use crate::estimates::{Backend, InnerRing};
use crate::geometry::{Side, Site, SiteSet, Slope, WedgeSpec};

/// Tolerance for converting decimal angles to rational tangents.
pub const ANGLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Grow,
    Escape,
    Beurling,
    Dominance,
    Ring,
    FarExit,
    Converge,
    Oracle,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Grow,
        Command::Escape,
        Command::Beurling,
        Command::Dominance,
        Command::Ring,
        Command::FarExit,
        Command::Converge,
        Command::Oracle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Grow => "grow",
            Command::Escape => "escape",
            Command::Beurling => "beurling",
            Command::Dominance => "dominance",
            Command::Ring => "ring",
            Command::FarExit => "far-exit",
            Command::Converge => "converge",
            Command::Oracle => "oracle",
        }
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| format!("unknown command {s:?}"))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Barrier family for the Beurling experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierKind {
    /// `W^r` plus one boundary ray.
    Ray,
    /// `W^L ∪ ∂W^L`.
    Sector,
}

impl FromStr for BarrierKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ray" => Ok(BarrierKind::Ray),
            "sector" => Ok(BarrierKind::Sector),
            other => Err(format!("unknown set {other:?} (expected ray|sector)")),
        }
    }
}

impl fmt::Display for BarrierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BarrierKind::Ray => "ray",
            BarrierKind::Sector => "sector",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    /// Hitting law of `targets` from `source` on `W^radius`.
    Hit,
    /// Effective resistance from `source` to `targets` on `W^radius`.
    Resistance,
}

impl FromStr for OracleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "hit" => Ok(OracleMode::Hit),
            "resistance" => Ok(OracleMode::Resistance),
            other => Err(format!("unknown mode {other:?} (expected hit|resistance)")),
        }
    }
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMode::Hit => "hit",
            OracleMode::Resistance => "resistance",
        })
    }
}

/// Typed parameters of each command.
#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Grow {
        particles: u64,
        sampler: SamplerParams,
        /// Dial radii; `None` picks `4, 8, 16, …` from the exponent.
        dials: Option<Vec<f64>>,
        /// Exponent for the stabilization report; `None` uses the stronger
        /// exponent when `φ < π/4` and skips the report otherwise.
        exponent: Option<f64>,
    },
    Escape { r: f64, l: f64, side: Side, inner: InnerRing, backend: Backend, trials: u64 },
    Beurling { r: f64, ls: Vec<f64>, side: Side, set: BarrierKind, backend: Backend, trials: u64 },
    Dominance { r: f64, l: f64, sets: u64 },
    Ring { r: f64, c: f64, eps: Vec<f64>, backend: Backend, trials: u64 },
    FarExit { r: f64, ts: Vec<f64>, eps: f64, starts: usize, trials: u64, hit_r: f64, hit_t: f64 },
    Converge { seed_radius: f64, rs: Vec<f64> },
    Oracle { radius: f64, source: Site, targets: SiteSet, mode: OracleMode },
}

/// A validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub command: Command,
    pub lower: Slope,
    pub upper: Slope,
    pub spec: WedgeSpec,
    pub seed: u64,
    pub workers: usize,
    pub experiment: Experiment,
    /// Conversions applied while parsing, e.g. decimal angles.
    pub warnings: Vec<String>,
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn sites_text(s: &SiteSet) -> String {
    s.iter().map(|p| format!("{},{}", p.x, p.y)).collect::<Vec<_>>().join(";")
}

impl RunRequest {
    /// Every parameter with defaults applied, as canonical strings.
    /// `workers` is left out: it never changes outputs.
    pub fn params(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("command", self.command.to_string());
        put("theta1", self.lower.to_string());
        put("theta2", self.upper.to_string());
        put("seed", self.seed.to_string());
        match &self.experiment {
            Experiment::Grow { particles, sampler, dials, exponent } => {
                put("particles", particles.to_string());
                put("start_factor", sampler.start_factor.to_string());
                put("start_margin", sampler.start_margin.to_string());
                put("escape_factor", sampler.escape_factor.to_string());
                put("max_restarts", sampler.max_restarts.to_string());
                put("step_cap", sampler.step_cap.to_string());
                put("accelerate", sampler.accelerate.to_string());
                put("dials", dials.as_ref().map_or("auto".into(), |d| list(d)));
                put("exponent", exponent.map_or("auto".into(), |a| a.to_string()));
            }
            Experiment::Escape { r, l, side, inner, backend, trials } => {
                put("r", r.to_string());
                put("l", l.to_string());
                put("side", side_name(*side).into());
                put("inner", inner_name(*inner).into());
                put("backend", backend.to_string());
                put("trials", trials.to_string());
            }
            Experiment::Beurling { r, ls, side, set, backend, trials } => {
                put("r", r.to_string());
                put("ls", list(ls));
                put("side", side_name(*side).into());
                put("set", set.to_string());
                put("backend", backend.to_string());
                put("trials", trials.to_string());
            }
            Experiment::Dominance { r, l, sets } => {
                put("r", r.to_string());
                put("l", l.to_string());
                put("sets", sets.to_string());
            }
            Experiment::Ring { r, c, eps, backend, trials } => {
                put("r", r.to_string());
                put("c", c.to_string());
                put("eps", list(eps));
                put("backend", backend.to_string());
                put("trials", trials.to_string());
            }
            Experiment::FarExit { r, ts, eps, starts, trials, hit_r, hit_t } => {
                put("r", r.to_string());
                put("ts", list(ts));
                put("eps", eps.to_string());
                put("starts", starts.to_string());
                put("trials", trials.to_string());
                put("hit_r", hit_r.to_string());
                put("hit_t", hit_t.to_string());
            }
            Experiment::Converge { seed_radius, rs } => {
                put("seed_radius", seed_radius.to_string());
                put("rs", list(rs));
            }
            Experiment::Oracle { radius, source, targets, mode } => {
                put("radius", radius.to_string());
                put("source", format!("{},{}", source.x, source.y));
                put("targets", sites_text(targets));
                put("mode", mode.to_string());
            }
        }
        m
    }

    /// Configuration text that parses back to this request.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.params() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str(&format!("workers = {}\n", self.workers));
        out
    }
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Upper => "upper",
        Side::Lower => "lower",
    }
}

fn inner_name(i: InnerRing) -> &'static str {
    match i {
        InnerRing::Open => "open",
        InnerRing::Absorbing => "absorbing",
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    key_col: usize,
    value_col: usize,
}

struct Fields {
    entries: BTreeMap<String, Entry>,
    last_line: usize,
}

impl Fields {
    fn err_at(e: &Entry, msg: impl Into<String>) -> ConfigError {
        ConfigError { line: e.line, column: e.value_col, message: msg.into() }
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn parse<T>(&mut self, key: &str, default: Option<T>, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, ConfigError> {
        match self.take(key) {
            Some(e) => parse(e.value.trim()).map_err(|m| Fields::err_at(&e, format!("{key}: {m}"))),
            None => default.ok_or_else(|| ConfigError {
                line: self.last_line + 1,
                column: 1,
                message: format!("missing required key {key:?}"),
            }),
        }
    }

    fn num<T: FromStr>(&mut self, key: &str, default: Option<T>) -> Result<T, ConfigError> {
        self.parse(key, default, |s| s.parse::<T>().map_err(|_| format!("cannot parse {s:?}")))
    }

    fn real(&mut self, key: &str, default: Option<f64>, check: impl Fn(f64) -> bool, rule: &str) -> Result<f64, ConfigError> {
        self.parse(key, default, |s| {
            let v: f64 = s.parse().map_err(|_| format!("cannot parse {s:?} as a number"))?;
            if v.is_finite() && check(v) { Ok(v) } else { Err(format!("{v} must be {rule}")) }
        })
    }

    fn reals(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        self.parse(key, Some(default.to_vec()), parse_reals)
    }

    fn leftover(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().min_by_key(|(_, e)| e.line) {
            Some((k, e)) => Err(ConfigError { line: e.line, column: e.key_col, message: format!("unknown key {k:?}") }),
            None => Ok(()),
        }
    }
}

fn parse_reals(s: &str) -> Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("cannot parse {t:?} as a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() || v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err("expected a comma-separated list of positive numbers".into());
    }
    Ok(v)
}

fn parse_site(s: &str) -> Result<Site, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected x,y, got {s:?}"))?;
    let x = x.trim().parse().map_err(|_| format!("bad x in {s:?}"))?;
    let y = y.trim().parse().map_err(|_| format!("bad y in {s:?}"))?;
    Ok(Site::new(x, y))
}

fn parse_sites(s: &str) -> Result<SiteSet, String> {
    let set = s.split(';').filter(|t| !t.trim().is_empty()).map(|t| parse_site(t.trim())).collect::<Result<SiteSet, _>>()?;
    if set.is_empty() {
        return Err("expected at least one site x,y;x,y".into());
    }
    Ok(set)
}

fn positive(v: f64) -> bool {
    v > 0.0
}

/// Tangent ratio, or decimal radians converted with a warning.
fn parse_angle(s: &str, warnings: &mut Vec<String>, key: &str) -> Result<Slope, String> {
    if s.contains('/') || s.parse::<i64>().is_ok() {
        return s.parse::<Slope>().map_err(|e| e.to_string());
    }
    let angle: f64 = s.parse().map_err(|_| format!("expected p/q or radians, got {s:?}"))?;
    let slope = Slope::approximate(angle, ANGLE_TOLERANCE).map_err(|e| e.to_string())?;
    warnings.push(format!("{key} = {s} rad converted to tangent {slope} (angle {:.12})", slope.angle()));
    Ok(slope)
}

fn split_entries(text: &str) -> Result<(BTreeMap<String, Entry>, usize), ConfigError> {
    let mut entries = BTreeMap::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let key_col = content.len() - content.trim_start().len() + 1;
        let Some(eq) = content.find('=') else {
            return Err(ConfigError { line, column: key_col, message: "expected key = value".into() });
        };
        let key = content[..eq].trim();
        if key.is_empty() {
            return Err(ConfigError { line, column: key_col, message: "empty key".into() });
        }
        let after = &content[eq + 1..];
        let value_col = eq + 2 + (after.len() - after.trim_start().len());
        let value = after.trim();
        if value.is_empty() {
            return Err(ConfigError { line, column: value_col, message: format!("empty value for {key:?}") });
        }
        let entry = Entry { value: value.to_string(), line, key_col, value_col };
        if let Some(prev) = entries.insert(key.to_string(), entry) {
            return Err(ConfigError {
                line,
                column: key_col,
                message: format!("duplicate key {key:?} (first set on line {})", prev.line),
            });
        }
    }
    Ok((entries, last_line))
}

/// Parses and validates a configuration, applying defaults.
pub fn parse_config(text: &str) -> Result<RunRequest, ConfigError> {
    let (entries, last_line) = split_entries(text)?;
    let mut f = Fields { entries, last_line };
    let mut warnings = Vec::new();
    let command: Command = f.parse("command", Some(Command::Grow), |s| s.parse())?;
    let theta1_entry = f.entries.get("theta1").cloned();
    let lower = f.parse("theta1", Some(Slope::horizontal()), |s| parse_angle(s, &mut Vec::new(), "theta1"))?;
    let upper_entry = f.entries.get("theta2").cloned();
    let upper = f.parse("theta2", None, |s| parse_angle(s, &mut Vec::new(), "theta2"))?;
    // Re-run the conversions once to collect warnings in order.
    for (key, e) in [("theta1", &theta1_entry), ("theta2", &upper_entry)] {
        if let Some(e) = e {
            let _ = parse_angle(e.value.trim(), &mut warnings, key);
        }
    }
    let spec = WedgeSpec::new(lower, upper).map_err(|e| {
        let at = upper_entry.as_ref().or(theta1_entry.as_ref());
        ConfigError {
            line: at.map_or(1, |e| e.line),
            column: at.map_or(1, |e| e.value_col),
            message: format!("invalid wedge: {e}"),
        }
    })?;
    let seed = f.num("seed", Some(0u64))?;
    let workers = f.parse("workers", Some(1usize), |s| match s.parse::<usize>() {
        Ok(w) if w >= 1 => Ok(w),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    })?;
    let backend = |f: &mut Fields, d: Backend| f.parse("backend", Some(d), |s| s.parse());
    let side = |f: &mut Fields| f.parse("side", Some(Side::Lower), |s| s.parse());
    let trials = |f: &mut Fields, d: u64| {
        f.parse("trials", Some(d), |s| match s.parse::<u64>() {
            Ok(t) if t >= 1 => Ok(t),
            _ => Err(format!("expected a positive integer, got {s:?}")),
        })
    };
    let experiment = match command {
        Command::Grow => {
            let particles = f.parse("particles", None, |s| match s.parse::<u64>() {
                Ok(0) => Err("at least one particle is required".to_string()),
                Ok(n) => Ok(n),
                Err(_) => Err(format!("expected a positive integer, got {s:?}")),
            })?;
            let d = SamplerParams::default();
            let sampler = SamplerParams {
                start_factor: f.real("start_factor", Some(d.start_factor), |v| v >= 4.0, "at least 4")?,
                start_margin: f.real("start_margin", Some(d.start_margin), |v| v >= 1.0, "at least 1")?,
                escape_factor: f.real("escape_factor", Some(d.escape_factor), |v| v >= 2.0, "at least 2")?,
                max_restarts: f.num("max_restarts", Some(d.max_restarts))?,
                step_cap: f.num("step_cap", Some(d.step_cap))?,
                accelerate: f.num("accelerate", Some(d.accelerate))?,
            };
            let dials = f.parse("dials", Some(None), |s| if s == "auto" { Ok(None) } else { parse_reals(s).map(Some) })?;
            let exponent = f.parse("exponent", Some(None), |s| {
                if s == "auto" {
                    return Ok(None);
                }
                match s.parse::<f64>() {
                    Ok(a) if a > 0.0 && a.is_finite() => Ok(Some(a)),
                    _ => Err(format!("expected a positive number or auto, got {s:?}")),
                }
            })?;
            Experiment::Grow { particles, sampler, dials, exponent }
        }
        Command::Escape => Experiment::Escape {
            r: f.real("r", Some(64.0), |v| v >= 1.0, "at least 1")?,
            l: f.real("l", Some(256.0), positive, "positive")?,
            side: side(&mut f)?,
            inner: f.parse("inner", Some(InnerRing::Open), |s| s.parse())?,
            backend: backend(&mut f, Backend::Oracle)?,
            trials: trials(&mut f, 10_000)?,
        },
        Command::Beurling => Experiment::Beurling {
            r: f.real("r", Some(16.0), |v| v >= 1.0, "at least 1")?,
            ls: f.reals("ls", &[64.0, 128.0, 256.0])?,
            side: side(&mut f)?,
            set: f.parse("set", Some(BarrierKind::Ray), |s| s.parse())?,
            backend: backend(&mut f, Backend::Oracle)?,
            trials: trials(&mut f, 10_000)?,
        },
        Command::Dominance => Experiment::Dominance {
            r: f.real("r", Some(6.0), |v| v >= 1.0, "at least 1")?,
            l: f.real("l", Some(24.0), positive, "positive")?,
            sets: f.num("sets", Some(100u64))?,
        },
        Command::Ring => Experiment::Ring {
            r: f.real("r", Some(128.0), positive, "positive")?,
            c: f.real("c", Some(4.0), |v| v > 1.0, "greater than 1")?,
            eps: f.reals("eps", &[1.0, 2.0])?,
            backend: backend(&mut f, Backend::MonteCarlo)?,
            trials: trials(&mut f, 100_000)?,
        },
        Command::FarExit => Experiment::FarExit {
            r: f.real("r", Some(16.0), |v| v >= 1.0, "at least 1")?,
            ts: f.reals("ts", &[4.0, 16.0, 64.0])?,
            eps: f.real("eps", Some(0.25), positive, "positive")?,
            starts: f.parse("starts", Some(5usize), |s| match s.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(format!("expected a positive integer, got {s:?}")),
            })?,
            trials: trials(&mut f, 10_000)?,
            hit_r: f.real("hit_r", Some(64.0), |v| v >= 2.0, "at least 2")?,
            hit_t: f.real("hit_t", Some(1.0), positive, "positive")?,
        },
        Command::Converge => Experiment::Converge {
            seed_radius: f.real("seed_radius", Some(4.0), positive, "positive")?,
            rs: f.reals("rs", &[16.0, 32.0, 64.0])?,
        },
        Command::Oracle => Experiment::Oracle {
            radius: f.real("radius", Some(30.0), positive, "positive")?,
            source: f.parse("source", Some(Site::new(20, 5)), parse_site)?,
            targets: f.parse(
                "targets",
                Some([(0, 0), (1, 0), (2, 0), (2, 1), (3, 1)].into_iter().map(|(x, y)| Site::new(x, y)).collect()),
                parse_sites,
            )?,
            mode: f.parse("mode", Some(OracleMode::Hit), |s| s.parse())?,
        },
    };
    f.leftover()?;
    Ok(RunRequest { command, lower, upper, spec, seed, workers, experiment, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_grow_config() {
        let req = parse_config("theta2=1/1\nparticles=100\nseed=7\n").unwrap();
        assert_eq!(req.command, Command::Grow);
        assert_eq!(req.lower, Slope::horizontal());
        assert_eq!(req.seed, 7);
        assert_eq!(req.workers, 1);
        match &req.experiment {
            Experiment::Grow { particles, sampler, dials, exponent } => {
                assert_eq!(*particles, 100);
                assert_eq!(*sampler, SamplerParams::default());
                assert!(dials.is_none() && exponent.is_none());
            }
            other => panic!("{other:?}"),
        }
        assert!(req.warnings.is_empty());
    }

    #[test]
    fn round_trip_through_text() {
        for text in [
            "command = escape\ntheta1 = -1/2\ntheta2 = 1/1\nbackend = mc\ntrials = 50",
            "command = beurling\ntheta2 = 1/1\nls = 64, 128\nset = sector",
            "command = oracle\ntheta2 = 1/0\ntargets = 0,0;1,0\nmode = resistance",
            "command = grow\ntheta2 = 2/5\nparticles = 9\ndials = 2,3\nexponent = 5",
        ] {
            let req = parse_config(text).unwrap();
            assert_eq!(parse_config(&req.to_config_text()).unwrap(), req, "{text}");
        }
    }

    #[test]
    fn inverted_wedge_rejected() {
        let err = parse_config("theta1 = 1/1\ntheta2 = 0/1\nparticles = 5").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("invalid wedge"), "{err}");
        assert!(parse_config("theta1 = 1/2\ntheta2 = 1/2\nparticles = 5").is_err());
    }

    #[test]
    fn zero_particles_rejected() {
        let err = parse_config("theta2 = 1/1\nparticles = 0\n").unwrap_err();
        assert_eq!((err.line, err.column), (2, 13));
        assert!(err.message.contains("at least one particle"));
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let err = parse_config("theta2 = 1/1\nparticles = 5\n  colour = red\n").unwrap_err();
        assert_eq!((err.line, err.column), (3, 3));
        let err = parse_config("theta2 = 1/1\ntheta2 = 1/2\nparticles = 5").unwrap_err();
        assert!(err.message.contains("duplicate"));
        let err = parse_config("command = ring\ntheta2 = 1/1\nparticles = 5").unwrap_err();
        assert!(err.message.contains("unknown key \"particles\""));
        assert!(parse_config("theta2 = 1/1\nparticles").is_err());
    }

    #[test]
    fn missing_required_key() {
        let err = parse_config("theta2 = 1/1\n").unwrap_err();
        assert!(err.message.contains("particles"));
    }

    #[test]
    fn decimal_angle_converted_with_warning() {
        let req = parse_config("theta2 = 0.39269908169872414\nparticles = 1").unwrap();
        assert!((req.spec.phi() - std::f64::consts::PI / 8.0).abs() <= ANGLE_TOLERANCE);
        assert_eq!(req.warnings.len(), 1);
        assert!(req.params()["theta2"].contains('/'));
    }
}
