//! Experiment kinds and their CSV reports.

use std::fmt::Write as _;
use std::str::FromStr;

use aoi_core::analytics::{avg_age_approx, avg_age_exact, l_moments, s_hat, s_star, HomogeneousParams};
use aoi_core::coupling::{verify_dominance, CoupledRun};
use aoi_core::simulator::{format_trace, replicate_seed};
use aoi_core::{replicate, run, Moments, PolicyConfig, SelectionRule, SimConfig, SystemModel};

use crate::config::{model_etas, resolve_s, ExperimentConfig, SChoice};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    Analyze,
    SweepS,
    SweepN,
    ComparePolicies,
    VerifyCoupling,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Analyze => "analyze",
            Experiment::SweepS => "sweep-s",
            Experiment::SweepN => "sweep-n",
            Experiment::ComparePolicies => "compare-policies",
            Experiment::VerifyCoupling => "verify-coupling",
        }
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        [
            Experiment::Simulate,
            Experiment::Analyze,
            Experiment::SweepS,
            Experiment::SweepN,
            Experiment::ComparePolicies,
            Experiment::VerifyCoupling,
        ]
        .into_iter()
        .find(|e| e.name() == s)
        .ok_or_else(|| CliError::Usage(format!("unknown experiment `{s}`")))
    }
}

/// A CSV table plus the metadata that precedes it.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: Experiment,
    pub metadata: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Config snippets reproducing each property violation found.
    pub violations: Vec<String>,
}

impl Report {
    pub fn body(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// `#`-prefixed metadata, optional timestamp line, then the table.
    pub fn to_csv(&self, timestamp: bool) -> String {
        let mut out = String::new();
        for line in &self.metadata {
            let _ = writeln!(out, "# {line}");
        }
        if timestamp {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let _ = writeln!(out, "# timestamp = {secs}");
        }
        out.push_str(&self.body());
        out
    }

    /// Value of `column` in row `row`.
    pub fn get(&self, row: usize, column: &str) -> Option<&str> {
        let idx = self.columns.iter().position(|c| *c == column)?;
        self.rows.get(row).map(|r| r[idx].as_str())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metadata(kind: Experiment, cfg: &ExperimentConfig, model: Option<&SystemModel>) -> Vec<String> {
    let mut m = vec![
        format!("tool = aoi-gateway {}", env!("CARGO_PKG_VERSION")),
        format!("experiment = {}", kind.name()),
        format!("base_seed = {}", cfg.run.seed),
        "rng = chacha8; replicate seed = splitmix64(base ^ splitmix64(r))".to_string(),
        "hyperexp = balanced-means two-moment fit".to_string(),
    ];
    if let Some(model) = model {
        for (i, d) in model.sensor_dists().iter().enumerate() {
            m.push(format!("sensor[{i}] = {d}"));
        }
        m.push(format!("monitor = {}", model.monitor_dist()));
        if kind != Experiment::VerifyCoupling && kind != Experiment::Analyze {
            m.push(format!(
                "warmup_used = {}",
                cfg.run
                    .warmup
                    .unwrap_or_else(|| aoi_core::simulator::default_warmup(model))
            ));
        }
    }
    m.push("config:".to_string());
    m.extend(cfg.to_string().lines().map(|l| format!("  {l}")));
    m
}

/// Thresholds to run: the configured choices, or every `s` when none given.
fn thresholds(cfg: &ExperimentConfig, model: &SystemModel) -> Result<Vec<(SChoice, usize)>, CliError> {
    if cfg.policy.s.is_empty() {
        return Ok((1..=model.n()).map(|s| (SChoice::Fixed(s), s)).collect());
    }
    cfg.policy
        .s
        .iter()
        .map(|&c| resolve_s(c, model).map(|s| (c, s)))
        .collect()
}

fn analytic(model: &SystemModel, s: usize) -> Result<Option<f64>, CliError> {
    if !model.is_iid() {
        return Ok(None);
    }
    Ok(Some(avg_age_exact(&HomogeneousParams::from_model(model, s)?)?))
}

/// Runs `kind` and collects its report.
pub fn run_experiment(kind: Experiment, cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    if kind == Experiment::SweepN {
        return sweep_n(cfg);
    }
    let model = cfg.build_model()?;
    let (eta1, eta2) = model_etas(&model);
    let sim_cfg = cfg.sim_config();
    let n = model.n();
    let reps = cfg.run.replicates;
    let mut report = Report {
        experiment: kind,
        metadata: metadata(kind, cfg, Some(&model)),
        columns: Vec::new(),
        rows: Vec::new(),
        violations: Vec::new(),
    };

    match kind {
        Experiment::Simulate | Experiment::ComparePolicies => {
            report.columns = vec![
                "n",
                "s",
                "s_choice",
                "rule",
                "eta1",
                "eta2",
                "sim_aoi",
                "std",
                "ci_lo",
                "ci_hi",
                "replicates",
                "seed",
            ];
            let ths = thresholds(cfg, &model)?;
            let ths = if kind == Experiment::Simulate && cfg.policy.s.is_empty() {
                vec![(SChoice::Auto, resolve_s(SChoice::Auto, &model)?)]
            } else {
                ths
            };
            for &rule in &cfg.policy.rules {
                for &(choice, s) in &ths {
                    let sum = replicate(&model, PolicyConfig::new(s, rule), &sim_cfg, reps)?;
                    report.rows.push(vec![
                        n.to_string(),
                        s.to_string(),
                        choice.to_string(),
                        rule.to_string(),
                        eta1.to_string(),
                        fmt_opt(eta2),
                        sum.mean.to_string(),
                        sum.std.to_string(),
                        sum.ci_lo.to_string(),
                        sum.ci_hi.to_string(),
                        reps.to_string(),
                        cfg.run.seed.to_string(),
                    ]);
                }
            }
            if kind == Experiment::Simulate {
                if let Some(path) = &cfg.run.trace {
                    let (_, s) = ths[0];
                    let traced = SimConfig {
                        trace: true,
                        ..sim_cfg.with_seed(replicate_seed(&sim_cfg, 0))
                    };
                    let res = run(&model, PolicyConfig::new(s, cfg.policy.rules[0]), &traced)?;
                    let text = format_trace(res.trace.as_deref().unwrap_or(&[]));
                    std::fs::write(path, text).map_err(|source| CliError::Io {
                        path: path.clone(),
                        source,
                    })?;
                }
            }
        }
        Experiment::Analyze => {
            if !model.is_iid() {
                return Err(CliError::Usage("analyze needs identically distributed sensors".into()));
            }
            report.columns = vec![
                "n",
                "s",
                "eta1",
                "eta2",
                "e_l",
                "e_l2",
                "e_lr",
                "analytic_aoi",
                "approx_aoi",
                "s_star",
                "s_hat",
            ];
            let sensor = model.sensor_dist(0).moments()?;
            let monitor = model.monitor_dist().moments()?;
            let star = s_star(n, sensor, monitor)?;
            let hat = s_hat(n, eta1)?;
            for (_, s) in thresholds(cfg, &model)? {
                let p = HomogeneousParams::from_moments(n, s, sensor, monitor)?;
                let lm = l_moments(n, s)?;
                report.rows.push(vec![
                    n.to_string(),
                    s.to_string(),
                    eta1.to_string(),
                    fmt_opt(eta2),
                    lm.e_l.to_string(),
                    lm.e_l2.to_string(),
                    lm.e_lr.to_string(),
                    avg_age_exact(&p)?.to_string(),
                    avg_age_approx(&p)?.to_string(),
                    star.to_string(),
                    hat.to_string(),
                ]);
            }
        }
        Experiment::SweepS => {
            report.columns = vec![
                "n",
                "s",
                "rule",
                "eta1",
                "eta2",
                "analytic_aoi",
                "sim_aoi",
                "ci_lo",
                "ci_hi",
                "replicates",
                "seed",
            ];
            for &rule in &cfg.policy.rules {
                for s in 1..=n {
                    let sum = replicate(&model, PolicyConfig::new(s, rule), &sim_cfg, reps)?;
                    let exact = if rule == SelectionRule::Maf || rule == SelectionRule::Mca {
                        analytic(&model, s)?
                    } else {
                        None
                    };
                    report.rows.push(vec![
                        n.to_string(),
                        s.to_string(),
                        rule.to_string(),
                        eta1.to_string(),
                        fmt_opt(eta2),
                        fmt_opt(exact),
                        sum.mean.to_string(),
                        sum.ci_lo.to_string(),
                        sum.ci_hi.to_string(),
                        reps.to_string(),
                        cfg.run.seed.to_string(),
                    ]);
                }
            }
        }
        Experiment::VerifyCoupling => {
            if !model.is_iid() {
                return Err(CliError::Usage(
                    "verify-coupling needs identically distributed sensors".into(),
                ));
            }
            report.columns = vec![
                "n",
                "s",
                "rule",
                "seed",
                "decisions",
                "holds",
                "violation_decision",
                "violation_vector",
                "violation_position",
                "maf_value",
                "alt_value",
            ];
            for &rule in &cfg.policy.rules {
                for (_, s) in thresholds(cfg, &model)? {
                    for k in 0..cfg.run.seeds {
                        let coupled = CoupledRun {
                            model: model.clone(),
                            s,
                            alt_rule: rule,
                            decisions: cfg.run.decisions,
                            seed: cfg.run.seed.wrapping_add(k),
                        };
                        let rep = verify_dominance(&coupled)?;
                        let v = rep.first_violation;
                        if v.is_some() {
                            report.violations.push(coupled.reproducer());
                        }
                        report.rows.push(vec![
                            n.to_string(),
                            s.to_string(),
                            rule.to_string(),
                            coupled.seed.to_string(),
                            rep.decisions_checked.to_string(),
                            rep.holds.to_string(),
                            v.map(|v| v.decision.to_string()).unwrap_or_default(),
                            v.map(|v| format!("{:?}", v.vector).to_lowercase()).unwrap_or_default(),
                            v.map(|v| v.position.to_string()).unwrap_or_default(),
                            v.map(|v| v.maf_value.to_string()).unwrap_or_default(),
                            v.map(|v| v.alt_value.to_string()).unwrap_or_default(),
                        ]);
                    }
                }
            }
        }
        Experiment::SweepN => unreachable!(),
    }
    Ok(report)
}

/// `s_star` and `s_hat` per `(n, eta1)`, from sensor moments and a monitor
/// with mean `eta1 E[X]` and variance `eta2 Var[X]`.
fn sweep_n(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let base = match &cfg.model.sensors {
        crate::config::Sensors::Iid(d) => d.moments()?,
        _ => return Err(CliError::Usage("sweep-n needs a single iid `sensor` law".into())),
    };
    let mut report = Report {
        experiment: Experiment::SweepN,
        metadata: metadata(Experiment::SweepN, cfg, None),
        columns: vec![
            "n",
            "eta1",
            "eta2",
            "s_star",
            "s_hat",
            "sqrt_eta1_n",
            "aoi_s_star",
            "aoi_s_hat",
        ],
        rows: Vec::new(),
        violations: Vec::new(),
    };
    for (k, &eta1) in cfg.sweep.eta1.iter().enumerate() {
        let eta2 = cfg.sweep.eta2.as_ref().map_or(eta1, |v| v[k]);
        let monitor = Moments {
            mean: eta1 * base.mean,
            variance: eta2 * base.variance,
        };
        for &n in &cfg.sweep.n_values {
            let star = s_star(n, base, monitor)?;
            let hat = s_hat(n, eta1)?;
            let age = |s| avg_age_exact(&HomogeneousParams::from_moments(n, s, base, monitor)?);
            report.rows.push(vec![
                n.to_string(),
                eta1.to_string(),
                eta2.to_string(),
                star.to_string(),
                hat.to_string(),
                (eta1 * n as f64).sqrt().to_string(),
                age(star)?.to_string(),
                age(hat)?.to_string(),
            ]);
        }
    }
    Ok(report)
}
