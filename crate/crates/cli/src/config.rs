//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! [model]
//! n = 10
//! sensor = exp(mean=1)
//! eta1 = 2
//! [policy]
//! rule = maf
//! s = auto
//! [run]
//! horizon_polls = 100000
//! replicates = 30
//! seed = 1
//! ```

use std::fmt;
use std::str::FromStr;

use aoi_core::analytics::{s_hat, s_star};
use aoi_core::stochastic::{fit_hyperexponential, splitmix64, RngStream};
use aoi_core::{DistributionSpec, Horizon, Moments, SelectionRule, SimConfig, SystemModel};

use crate::error::CliError;

/// Mixed into the base seed for the stream that draws heterogeneous sensor means.
const MEANS_STREAM_TAG: u64 = 0x4D45_414E_5300_0001;

/// How the sensor laws are specified.
#[derive(Debug, Clone, PartialEq)]
pub enum Sensors {
    /// The same law for all `n` sensors.
    Iid(DistributionSpec),
    /// One law per sensor.
    List(Vec<DistributionSpec>),
    /// Means drawn uniformly from `(lo, hi)` with the experiment's stream.
    RandomMeans { lo: f64, hi: f64, family: Family },
}

/// Family used when only a mean is given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Exponential,
    /// Hyperexponential with fixed squared coefficient of variation.
    Hyperexponential {
        scv: f64,
    },
}

impl Family {
    fn with_mean(&self, mean: f64) -> aoi_core::Result<DistributionSpec> {
        match *self {
            Family::Exponential => Ok(DistributionSpec::exponential(mean)),
            Family::Hyperexponential { scv } => fit_hyperexponential(mean, scv * mean * mean),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Exponential => f.write_str("exp"),
            Family::Hyperexponential { scv } => write!(f, "hyperexp(scv={scv})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n: usize,
    pub sensors: Sensors,
    pub monitor: Option<DistributionSpec>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
}

/// A send threshold choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SChoice {
    Fixed(usize),
    /// `round(sqrt(eta1 n))`.
    Auto,
    /// Exhaustive closed-form optimum; iid sensors only.
    Opt,
}

impl fmt::Display for SChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SChoice::Fixed(s) => write!(f, "{s}"),
            SChoice::Auto => f.write_str("auto"),
            SChoice::Opt => f.write_str("opt"),
        }
    }
}

impl FromStr for SChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "auto" => Ok(SChoice::Auto),
            "opt" => Ok(SChoice::Opt),
            other => other
                .parse::<usize>()
                .map(SChoice::Fixed)
                .map_err(|_| format!("`{other}` is not an integer, `auto` or `opt`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCfg {
    pub rules: Vec<SelectionRule>,
    /// Empty means "every s in 1..=n" where an experiment sweeps.
    pub s: Vec<SChoice>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunCfg {
    pub horizon: Horizon,
    pub warmup: Option<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub decisions: u64,
    pub seeds: u64,
    pub trace: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCfg {
    pub n_values: Vec<usize>,
    pub eta1: Vec<f64>,
    /// Monitor variance ratio per `eta1`; `None` means equal to `eta1`.
    pub eta2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub policy: PolicyCfg,
    pub run: RunCfg,
    pub sweep: SweepCfg,
}

pub const DEFAULT_REPLICATES: usize = 30;
pub const DEFAULT_POLLS: u64 = 100_000;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                n: 10,
                sensors: Sensors::Iid(DistributionSpec::exponential(1.0)),
                monitor: None,
                eta1: None,
                eta2: None,
            },
            policy: PolicyCfg {
                rules: vec![SelectionRule::Maf],
                s: Vec::new(),
            },
            run: RunCfg {
                horizon: Horizon::Polls(DEFAULT_POLLS),
                warmup: None,
                replicates: DEFAULT_REPLICATES,
                seed: 1,
                decisions: 100_000,
                seeds: 10,
                trace: None,
            },
            sweep: SweepCfg {
                n_values: (4..=64).collect(),
                eta1: vec![0.25, 0.5, 1.0, 2.0, 4.0],
                eta2: None,
            },
        }
    }
}

fn list<T>(value: &str, sep: char, parse: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    value
        .split(sep)
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(parse)
        .collect()
}

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.trim()
        .parse::<T>()
        .map_err(|_| format!("`{}` is not a valid number", v.trim()))
}

/// `4..64` (inclusive) or a comma list.
fn n_values(v: &str) -> Result<Vec<usize>, String> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b) = (num::<usize>(a)?, num::<usize>(b)?);
        if a == 0 || b < a {
            return Err(format!("empty or invalid range `{v}`"));
        }
        return Ok((a..=b).collect());
    }
    list(v, ',', num)
}

fn family(v: &str) -> Result<Family, String> {
    let v = v.trim();
    if v == "exp" {
        return Ok(Family::Exponential);
    }
    let inner = v
        .strip_prefix("hyperexp(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| format!("unknown family `{v}` (exp | hyperexp(scv=..))"))?;
    let scv = inner
        .trim()
        .strip_prefix("scv")
        .map(|r| r.trim_start().trim_start_matches('='))
        .unwrap_or(inner);
    let scv: f64 = num(scv)?;
    if scv <= 1.0 {
        return Err(format!("hyperexponential family needs scv > 1, got {scv}"));
    }
    Ok(Family::Hyperexponential { scv })
}

fn range_pair(v: &str) -> Result<(f64, f64), String> {
    let inner = v
        .trim()
        .strip_prefix("uniform(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| format!("expected `uniform(lo, hi)`, got `{v}`"))?;
    let parts = list(inner, ',', num::<f64>)?;
    match parts[..] {
        [lo, hi] if lo >= 0.0 && hi > lo => Ok((lo, hi)),
        _ => Err(format!("expected 0 <= lo < hi in `{v}`")),
    }
}

impl ExperimentConfig {
    /// Parses the `key = value` / `[section]` format. Keys absent from the
    /// text keep their defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        let mut family_seen: Option<Family> = None;
        let mut means_seen: Option<(f64, f64)> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Config { line: line_no, msg };
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !matches!(section.as_str(), "model" | "policy" | "run" | "sweep") {
                    return Err(err(format!("unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let dist = |v: &str| v.parse::<DistributionSpec>().map_err(|e| e.to_string());
            let res: Result<(), String> = (|| {
                match (section.as_str(), key) {
                    ("model", "n") => cfg.model.n = num(value)?,
                    ("model", "sensor") => cfg.model.sensors = Sensors::Iid(dist(value)?),
                    ("model", "sensors") => cfg.model.sensors = Sensors::List(list(value, ';', dist)?),
                    ("model", "sensor_means") => means_seen = Some(range_pair(value)?),
                    ("model", "sensor_family") => family_seen = Some(family(value)?),
                    ("model", "monitor") => cfg.model.monitor = Some(dist(value)?),
                    ("model", "eta1") => cfg.model.eta1 = Some(num(value)?),
                    ("model", "eta2") => cfg.model.eta2 = Some(num(value)?),
                    ("policy", "rule" | "rules") => {
                        cfg.policy.rules = list(value, ',', |r| r.parse::<SelectionRule>().map_err(|e| e.to_string()))?
                    }
                    ("policy", "s") => {
                        cfg.policy.s = if value == "all" {
                            Vec::new()
                        } else {
                            list(value, ',', str::parse::<SChoice>)?
                        }
                    }
                    ("run", "horizon_polls") => cfg.run.horizon = Horizon::Polls(num(value)?),
                    ("run", "horizon_sends") => cfg.run.horizon = Horizon::Deliveries(num(value)?),
                    ("run", "horizon_time") => cfg.run.horizon = Horizon::Time(num(value)?),
                    ("run", "warmup") => cfg.run.warmup = if value == "default" { None } else { Some(num(value)?) },
                    ("run", "replicates") => cfg.run.replicates = num(value)?,
                    ("run", "seed") => cfg.run.seed = num(value)?,
                    ("run", "decisions") => cfg.run.decisions = num(value)?,
                    ("run", "seeds") => cfg.run.seeds = num(value)?,
                    ("run", "trace") => cfg.run.trace = Some(value.to_string()),
                    ("sweep", "n") => cfg.sweep.n_values = n_values(value)?,
                    ("sweep", "eta1") => cfg.sweep.eta1 = list(value, ',', num)?,
                    ("sweep", "eta2") => cfg.sweep.eta2 = Some(list(value, ',', num)?),
                    ("", _) => return Err(format!("`{key}` appears before any [section]")),
                    (sec, k) => return Err(format!("unknown key `{k}` in [{sec}]")),
                }
                Ok(())
            })();
            res.map_err(err)?;
        }
        if let Some((lo, hi)) = means_seen {
            cfg.model.sensors = Sensors::RandomMeans {
                lo,
                hi,
                family: family_seen.unwrap_or(Family::Exponential),
            };
        } else if family_seen.is_some() {
            return Err(CliError::Usage("sensor_family needs sensor_means".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks that do not need a built model.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.model.n == 0 {
            return bad("n must be >= 1".into());
        }
        if let Sensors::List(l) = &self.model.sensors {
            if l.len() != self.model.n {
                return bad(format!("{} sensor laws listed for n = {}", l.len(), self.model.n));
            }
        }
        if self.model.monitor.is_some() && (self.model.eta1.is_some() || self.model.eta2.is_some()) {
            return bad("give either monitor or eta1/eta2, not both".into());
        }
        if self.policy.rules.is_empty() {
            return bad("at least one rule is required".into());
        }
        for s in &self.policy.s {
            if let SChoice::Fixed(v) = s {
                if *v == 0 || *v > self.model.n {
                    return bad(format!("s = {v} outside 1..={}", self.model.n));
                }
            }
        }
        if self.run.replicates == 0 || self.run.seeds == 0 || self.run.decisions == 0 {
            return bad("replicates, seeds and decisions must be >= 1".into());
        }
        if let Some(eta2) = &self.sweep.eta2 {
            if eta2.len() != self.sweep.eta1.len() {
                return bad("sweep eta2 must list one value per eta1".into());
            }
        }
        Ok(())
    }

    /// Builds the system model. Random sensor means come from a stream
    /// derived from the base seed.
    pub fn build_model(&self) -> Result<SystemModel, CliError> {
        let n = self.model.n;
        let (sensors, family) = match &self.model.sensors {
            Sensors::Iid(d) => (vec![*d; n], None),
            Sensors::List(l) => (l.clone(), None),
            Sensors::RandomMeans { lo, hi, family } => {
                let mut rng = RngStream::new(splitmix64(self.run.seed ^ MEANS_STREAM_TAG));
                let laws = (0..n)
                    .map(|_| family.with_mean(lo + (hi - lo) * rng.open01()))
                    .collect::<aoi_core::Result<Vec<_>>>()?;
                (laws, Some(*family))
            }
        };
        let monitor = match (self.model.monitor, self.model.eta1) {
            (Some(m), _) => m,
            (None, eta1) => {
                let eta1 = eta1.unwrap_or(1.0);
                match family {
                    // Heterogeneous: scale the average sensor mean.
                    Some(fam) => {
                        let avg = sensors.iter().map(|d| d.mean()).sum::<aoi_core::Result<f64>>()? / n as f64;
                        let mean0 = eta1 * avg;
                        match (fam, self.model.eta2) {
                            (Family::Exponential, _) => DistributionSpec::exponential(mean0),
                            (Family::Hyperexponential { .. }, Some(eta2)) => {
                                let avg_var =
                                    sensors.iter().map(|d| d.variance()).sum::<aoi_core::Result<f64>>()? / n as f64;
                                fit_hyperexponential(mean0, eta2 * avg_var)?
                            }
                            (f @ Family::Hyperexponential { .. }, None) => f.with_mean(mean0)?,
                        }
                    }
                    None => {
                        if self.model.eta1.is_none() && self.model.eta2.is_none() {
                            sensors[0]
                        } else {
                            if !sensors.windows(2).all(|w| w[0] == w[1]) {
                                return Err(CliError::Usage(
                                    "eta1/eta2 scaling of a sensor list needs identical laws; give monitor".into(),
                                ));
                            }
                            sensors[0].with_moment_ratios(eta1, self.model.eta2)?
                        }
                    }
                }
            }
        };
        Ok(SystemModel::new(sensors, monitor)?)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            horizon: self.run.horizon,
            warmup: self.run.warmup,
            seed: self.run.seed,
            trace: false,
        }
    }
}

/// `(eta1, eta2)` of a model: monitor moments over average sensor moments.
/// `eta2` is `None` when sensor times are deterministic.
pub fn model_etas(model: &SystemModel) -> (f64, Option<f64>) {
    let n = model.n() as f64;
    let ms: Vec<Moments> = model
        .sensor_dists()
        .iter()
        .map(|d| d.moments().expect("validated"))
        .collect();
    let mean = ms.iter().map(|m| m.mean).sum::<f64>() / n;
    let var = ms.iter().map(|m| m.variance).sum::<f64>() / n;
    let m0 = model.monitor_dist().moments().expect("validated");
    (m0.mean / mean, (var > 0.0).then(|| m0.variance / var))
}

/// Resolves a threshold choice against a model.
pub fn resolve_s(choice: SChoice, model: &SystemModel) -> Result<usize, CliError> {
    let n = model.n();
    match choice {
        SChoice::Fixed(s) if s >= 1 && s <= n => Ok(s),
        SChoice::Fixed(s) => Err(CliError::Usage(format!("s = {s} outside 1..={n}"))),
        SChoice::Auto => Ok(s_hat(n, model_etas(model).0)?),
        SChoice::Opt => {
            if !model.is_iid() {
                return Err(CliError::Usage("s = opt needs identically distributed sensors".into()));
            }
            Ok(s_star(
                n,
                model.sensor_dist(0).moments()?,
                model.monitor_dist().moments()?,
            )?)
        }
    }
}

impl fmt::Display for ExperimentConfig {
    /// Canonical form, parseable by [`ExperimentConfig::parse`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.model;
        writeln!(f, "[model]")?;
        writeln!(f, "n = {}", m.n)?;
        match &m.sensors {
            Sensors::Iid(d) => writeln!(f, "sensor = {d}")?,
            Sensors::List(l) => {
                let parts: Vec<String> = l.iter().map(ToString::to_string).collect();
                writeln!(f, "sensors = {}", parts.join("; "))?
            }
            Sensors::RandomMeans { lo, hi, family } => {
                writeln!(f, "sensor_means = uniform({lo}, {hi})")?;
                writeln!(f, "sensor_family = {family}")?
            }
        }
        if let Some(mon) = &m.monitor {
            writeln!(f, "monitor = {mon}")?;
        }
        if let Some(e) = m.eta1 {
            writeln!(f, "eta1 = {e}")?;
        }
        if let Some(e) = m.eta2 {
            writeln!(f, "eta2 = {e}")?;
        }
        writeln!(f, "[policy]")?;
        let rules: Vec<&str> = self.policy.rules.iter().map(|r| r.name()).collect();
        writeln!(f, "rules = {}", rules.join(", "))?;
        if self.policy.s.is_empty() {
            writeln!(f, "s = all")?;
        } else {
            let s: Vec<String> = self.policy.s.iter().map(ToString::to_string).collect();
            writeln!(f, "s = {}", s.join(", "))?;
        }
        writeln!(f, "[run]")?;
        match self.run.horizon {
            Horizon::Polls(p) => writeln!(f, "horizon_polls = {p}")?,
            Horizon::Deliveries(k) => writeln!(f, "horizon_sends = {k}")?,
            Horizon::Time(t) => writeln!(f, "horizon_time = {t}")?,
        }
        match self.run.warmup {
            Some(w) => writeln!(f, "warmup = {w}")?,
            None => writeln!(f, "warmup = default")?,
        }
        writeln!(f, "replicates = {}", self.run.replicates)?;
        writeln!(f, "seed = {}", self.run.seed)?;
        writeln!(f, "decisions = {}", self.run.decisions)?;
        writeln!(f, "seeds = {}", self.run.seeds)?;
        if let Some(t) = &self.run.trace {
            writeln!(f, "trace = {t}")?;
        }
        writeln!(f, "[sweep]")?;
        let ns: Vec<String> = self.sweep.n_values.iter().map(ToString::to_string).collect();
        writeln!(f, "n = {}", ns.join(", "))?;
        let e1: Vec<String> = self.sweep.eta1.iter().map(ToString::to_string).collect();
        writeln!(f, "eta1 = {}", e1.join(", "))?;
        if let Some(e2) = &self.sweep.eta2 {
            let e2: Vec<String> = e2.iter().map(ToString::to_string).collect();
            writeln!(f, "eta2 = {}", e2.join(", "))?;
        }
        Ok(())
    }
}
