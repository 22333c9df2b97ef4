//! Event-by-event execution of a policy on a model.
//!
//! Only one transmission is ever in flight, so the simulation is a plain
//! sequence of (decision, duration) steps. Each sensor's monitor age is a
//! sawtooth; the area over a step of length `d` starting from age `a` is
//! `a*d + d²/2`, accumulated exactly.
//!
//! The measurement window opens at the first send completion at or after
//! the warmup and closes at the last send completion inside the horizon, so
//! every measured interval is made of whole send cycles.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AgeState, Decision, SystemModel};
use crate::policies::{Policy, PolicyConfig};
use crate::stochastic::{derive_seed, RngStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    /// Total simulated time, warmup included.
    Time(f64),
    /// Number of monitor deliveries inside the measurement window.
    Deliveries(u64),
    /// Minimum number of polls inside the measurement window; the run stops
    /// at the first send completion after reaching it.
    Polls(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: Horizon,
    /// Time discarded before measuring; `None` picks [`default_warmup`].
    pub warmup: Option<f64>,
    pub seed: u64,
    pub trace: bool,
}

impl SimConfig {
    pub fn new(horizon: Horizon, seed: u64) -> Self {
        Self {
            horizon,
            warmup: None,
            seed,
            trace: false,
        }
    }

    pub fn with_warmup(mut self, warmup: f64) -> Self {
        self.warmup = Some(warmup);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = true;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn resolve_warmup(&self, model: &SystemModel) -> Result<f64> {
        let warmup = self.warmup.unwrap_or_else(|| default_warmup(model));
        if !(warmup.is_finite() && warmup >= 0.0) {
            return Err(Error::SimConfig(format!("warmup must be >= 0, got {warmup}")));
        }
        match self.horizon {
            Horizon::Time(t) if !(t.is_finite() && t > warmup) => Err(Error::SimConfig(format!(
                "time horizon {t} must exceed warmup {warmup}"
            ))),
            Horizon::Deliveries(0) | Horizon::Polls(0) => Err(Error::SimConfig("event budget must be >= 1".into())),
            _ => Ok(warmup),
        }
    }
}

/// `10 * n * (largest sensor mean + monitor mean)`: several polling rounds.
pub fn default_warmup(model: &SystemModel) -> f64 {
    let max_sensor = model.sensor_means().into_iter().fold(0.0, f64::max);
    let monitor = model.monitor_dist().mean().expect("validated model");
    10.0 * model.n() as f64 * (max_sensor + monitor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Poll(usize),
    Send,
}

/// One transmission on the shared medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub t_start: f64,
    pub t_end: f64,
    pub kind: EventKind,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceEntry {
    Event(EventRecord),
    /// A send delivered a fresh update of `sensor`; its monitor age is now `new_age`.
    Reset {
        t: f64,
        sensor: usize,
        new_age: f64,
    },
}

/// Tab-separated trace: `t_start t_end kind sensor duration` per event and
/// `t RESET sensor new_age` per fresh delivery.
pub fn format_trace(entries: &[TraceEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        match e {
            TraceEntry::Event(r) => {
                let (kind, sensor) = match r.kind {
                    EventKind::Poll(i) => ("POLL", i.to_string()),
                    EventKind::Send => ("SEND", "-".to_string()),
                };
                let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", r.t_start, r.t_end, kind, sensor, r.duration);
            }
            TraceEntry::Reset { t, sensor, new_age } => {
                let _ = writeln!(out, "{t}\tRESET\t{sensor}\t{new_age}");
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Time-average monitor age of each sensor over the measured window.
    pub avg_age_per_sensor: Vec<f64>,
    /// Mean of `avg_age_per_sensor`.
    pub aoi: f64,
    pub polls_per_sensor: Vec<u64>,
    pub sends: u64,
    pub measured_time: f64,
    pub warmup: f64,
    /// Fresh deliveries of each sensor inside the window (the opening send excluded).
    pub per_sensor_reset_count: Vec<u64>,
    /// Renewal-cycle estimates over complete cycles inside the window.
    /// `None` for a sensor with no complete cycle.
    pub mean_y_per_sensor: Vec<Option<f64>>,
    pub mean_t_per_sensor: Vec<Option<f64>>,
    pub mean_y2_per_sensor: Vec<Option<f64>>,
    /// Mean of `Y_k * T_{k-1}`, the cycle length times the age that started it.
    pub mean_yt_per_sensor: Vec<Option<f64>>,
    pub trace: Option<Vec<TraceEntry>>,
}

impl SimResult {
    pub fn total_polls(&self) -> u64 {
        self.polls_per_sensor.iter().sum()
    }

    /// `(E[YT] + E[Y²]/2) / E[Y]` from this run's own cycle samples.
    pub fn renewal_estimate(&self, sensor: usize) -> Option<f64> {
        let y = self.mean_y_per_sensor[sensor]?;
        let y2 = self.mean_y2_per_sensor[sensor]?;
        let yt = self.mean_yt_per_sensor[sensor]?;
        Some((yt + 0.5 * y2) / y)
    }
}

/// A running simulation, advanced one transmission at a time.
#[derive(Debug, Clone)]
pub struct Simulation<'m> {
    model: &'m SystemModel,
    policy: Policy,
    state: AgeState,
    rng: RngStream,
}

impl<'m> Simulation<'m> {
    pub fn new(model: &'m SystemModel, policy: PolicyConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            model,
            policy: Policy::new(policy, model)?,
            state: AgeState::new(model.n()),
            rng: RngStream::new(seed),
        })
    }

    pub fn state(&self) -> &AgeState {
        &self.state
    }

    /// Decide, draw the transmission time, apply it.
    pub fn step(&mut self) -> EventRecord {
        let decision = self.policy.decide(&self.state, &mut self.rng);
        let (duration, kind) = match decision {
            Decision::Poll { sensor } => (
                self.model.sensor_dist(sensor).draw(&mut self.rng),
                EventKind::Poll(sensor),
            ),
            Decision::SendToMonitor => (self.model.monitor_dist().draw(&mut self.rng), EventKind::Send),
        };
        let t_start = self.state.t;
        self.state
            .apply(decision, duration)
            .expect("decision and duration valid by construction");
        EventRecord {
            t_start,
            t_end: self.state.t,
            kind,
            duration,
        }
    }
}

#[derive(Default, Clone, Copy)]
struct CycleSums {
    count: u64,
    y: f64,
    y2: f64,
    yt: f64,
}

impl CycleSums {
    fn mean(&self, sum: f64) -> Option<f64> {
        (self.count > 0).then(|| sum / self.count as f64)
    }
}

/// Runs one replicate. Deterministic in `(model, policy, cfg)`.
pub fn run(model: &SystemModel, policy: PolicyConfig, cfg: &SimConfig) -> Result<SimResult> {
    let warmup = cfg.resolve_warmup(model)?;
    let n = model.n();
    let mut sim = Simulation::new(model, policy, cfg.seed)?;
    let mut trace = cfg.trace.then(Vec::new);

    // Committed (window) and pending (current send cycle) accumulators.
    let mut area = vec![0.0; n];
    let mut pending_area = vec![0.0; n];
    let mut polls = vec![0u64; n];
    let mut pending_polls = vec![0u64; n];
    let mut polled_this_cycle = vec![false; n];

    let mut open: Option<f64> = None;
    let mut close = 0.0;
    let mut sends = 0u64;
    let mut resets = vec![0u64; n];
    let mut t_sum = vec![0.0; n];
    let mut cycles = vec![CycleSums::default(); n];
    let mut last_reset: Vec<Option<(f64, f64)>> = vec![None; n];

    let mut ages_before = vec![0.0; n];
    loop {
        ages_before.copy_from_slice(&sim.state().age_mon);
        let ev = sim.step();
        if let Some(tr) = trace.as_mut() {
            tr.push(TraceEntry::Event(ev));
        }
        let d = ev.duration;
        if open.is_some() {
            for (acc, a) in pending_area.iter_mut().zip(&ages_before) {
                *acc += a * d + 0.5 * d * d;
            }
        }
        match ev.kind {
            EventKind::Poll(i) => {
                polled_this_cycle[i] = true;
                if open.is_some() {
                    pending_polls[i] += 1;
                }
            }
            EventKind::Send => {
                let b = ev.t_end;
                if let Horizon::Time(t_max) = cfg.horizon {
                    if b > t_max {
                        break;
                    }
                }
                let measuring = open.is_some();
                if measuring {
                    for i in 0..n {
                        area[i] += pending_area[i];
                        polls[i] += pending_polls[i];
                    }
                    sends += 1;
                    close = b;
                } else if b >= warmup {
                    open = Some(b);
                    close = b;
                }
                pending_area.fill(0.0);
                pending_polls.fill(0);

                let state = sim.state();
                for i in 0..n {
                    if !std::mem::take(&mut polled_this_cycle[i]) {
                        continue;
                    }
                    let age = state.age_mon[i];
                    if let Some(tr) = trace.as_mut() {
                        tr.push(TraceEntry::Reset {
                            t: b,
                            sensor: i,
                            new_age: age,
                        });
                    }
                    if measuring {
                        resets[i] += 1;
                        t_sum[i] += age;
                        if let Some((prev_b, prev_t)) = last_reset[i] {
                            if prev_b >= open.unwrap() {
                                let y = b - prev_b;
                                let c = &mut cycles[i];
                                c.count += 1;
                                c.y += y;
                                c.y2 += y * y;
                                c.yt += y * prev_t;
                            }
                        }
                    }
                    last_reset[i] = Some((b, age));
                }

                let done = match cfg.horizon {
                    Horizon::Time(_) => false,
                    Horizon::Deliveries(k) => sends >= k,
                    Horizon::Polls(p) => polls.iter().sum::<u64>() >= p,
                };
                if done {
                    break;
                }
            }
        }
    }

    let Some(open) = open else {
        return Err(Error::InsufficientHorizon);
    };
    let measured_time = close - open;
    if sends == 0 || measured_time <= 0.0 {
        return Err(Error::InsufficientHorizon);
    }
    let avg_age_per_sensor: Vec<f64> = area.iter().map(|a| a / measured_time).collect();
    let aoi = avg_age_per_sensor.iter().sum::<f64>() / n as f64;
    Ok(SimResult {
        aoi,
        avg_age_per_sensor,
        polls_per_sensor: polls,
        sends,
        measured_time,
        warmup,
        mean_t_per_sensor: resets
            .iter()
            .zip(&t_sum)
            .map(|(&c, &s)| (c > 0).then(|| s / c as f64))
            .collect(),
        per_sensor_reset_count: resets,
        mean_y_per_sensor: cycles.iter().map(|c| c.mean(c.y)).collect(),
        mean_y2_per_sensor: cycles.iter().map(|c| c.mean(c.y2)).collect(),
        mean_yt_per_sensor: cycles.iter().map(|c| c.mean(c.yt)).collect(),
        trace,
    })
}

/// Aggregate of independent replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSummary {
    pub mean: f64,
    /// Sample standard deviation (zero for a single replicate).
    pub std: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Per-replicate AoI in replicate order.
    pub values: Vec<f64>,
}

impl ReplicateSummary {
    pub fn from_values(values: Vec<f64>) -> Self {
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
        } else {
            0.0
        };
        let half = 1.96 * std / r.sqrt();
        Self {
            mean,
            std,
            ci_lo: mean - half,
            ci_hi: mean + half,
            values,
        }
    }

    pub fn replicates(&self) -> usize {
        self.values.len()
    }

    /// True when this interval lies entirely below `other`'s.
    pub fn below(&self, other: &ReplicateSummary) -> bool {
        self.ci_hi < other.ci_lo
    }
}

/// Seed of replicate `r` for a run configured with `cfg`.
pub fn replicate_seed(cfg: &SimConfig, r: u64) -> u64 {
    derive_seed(cfg.seed, r)
}

/// Runs `replicates` independently seeded copies in parallel; the summary
/// does not depend on completion order.
pub fn replicate(
    model: &SystemModel,
    policy: PolicyConfig,
    cfg: &SimConfig,
    replicates: usize,
) -> Result<ReplicateSummary> {
    if replicates == 0 {
        return Err(Error::SimConfig("replicates must be >= 1".into()));
    }
    let base = SimConfig { trace: false, ..*cfg };
    let aoi: Result<Vec<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| run(model, policy, &base.with_seed(replicate_seed(cfg, r))).map(|res| res.aoi))
        .collect();
    Ok(ReplicateSummary::from_values(aoi?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::SelectionRule;
    use crate::stochastic::DistributionSpec;

    fn det_model(n: usize) -> SystemModel {
        SystemModel::homogeneous(
            n,
            DistributionSpec::deterministic(1.0),
            DistributionSpec::deterministic(1.0),
        )
        .unwrap()
    }

    #[test]
    fn deterministic_four_sensors() {
        let cfg = SimConfig::new(Horizon::Time(600.0), 1).with_warmup(60.0);
        let res = run(&det_model(4), PolicyConfig::new(2, SelectionRule::Maf), &cfg).unwrap();
        assert!((res.aoi - 5.5).abs() < 0.02, "aoi {}", res.aoi);
        let mut per = res.avg_age_per_sensor.clone();
        per.sort_by(f64::total_cmp);
        assert!((per[0] - 5.0).abs() < 0.05 && (per[3] - 6.0).abs() < 0.05, "{per:?}");
    }

    #[test]
    fn single_sensor_cycle() {
        let cfg = SimConfig::new(Horizon::Time(1000.0), 1).with_warmup(10.0);
        let res = run(&det_model(1), PolicyConfig::new(1, SelectionRule::Maf), &cfg).unwrap();
        assert!((res.aoi - 3.0).abs() < 0.02);
        assert_eq!(res.mean_y_per_sensor[0], Some(2.0));
        assert_eq!(res.mean_t_per_sensor[0], Some(2.0));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let model = SystemModel::homogeneous(
            5,
            DistributionSpec::exponential(1.0),
            DistributionSpec::exponential(2.0),
        )
        .unwrap();
        let cfg = SimConfig::new(Horizon::Deliveries(2000), 77).with_trace();
        let p = PolicyConfig::new(2, SelectionRule::RandomUniform);
        assert_eq!(run(&model, p, &cfg).unwrap(), run(&model, p, &cfg).unwrap());
    }

    #[test]
    fn horizon_too_short() {
        let cfg = SimConfig::new(Horizon::Time(5.0), 1).with_warmup(4.0);
        let err = run(&det_model(4), PolicyConfig::new(2, SelectionRule::Maf), &cfg).unwrap_err();
        assert_eq!(err, Error::InsufficientHorizon);
        let cfg = SimConfig::new(Horizon::Time(5.0), 1).with_warmup(6.0);
        assert!(matches!(
            run(&det_model(4), PolicyConfig::new(2, SelectionRule::Maf), &cfg),
            Err(Error::SimConfig(_))
        ));
    }

    #[test]
    fn send_boundary_bookkeeping() {
        let model = SystemModel::homogeneous(
            6,
            DistributionSpec::uniform(0.0, 2.0),
            DistributionSpec::exponential(1.0),
        )
        .unwrap();
        let s = 4;
        let res = run(
            &model,
            PolicyConfig::new(s, SelectionRule::Maf),
            &SimConfig::new(Horizon::Polls(1000), 3),
        )
        .unwrap();
        assert_eq!(res.sends * s as u64, res.total_polls());
        assert!(res.total_polls() >= 1000);
        let res = run(
            &model,
            PolicyConfig::new(s, SelectionRule::Maf),
            &SimConfig::new(Horizon::Deliveries(10), 3),
        )
        .unwrap();
        assert_eq!(res.sends, 10);
    }

    #[test]
    fn replicate_summary_edge_cases() {
        let cfg = SimConfig::new(Horizon::Time(600.0), 1).with_warmup(60.0);
        let p = PolicyConfig::new(2, SelectionRule::Maf);
        let one = replicate(&det_model(4), p, &cfg, 1).unwrap();
        let single = run(&det_model(4), p, &cfg.with_seed(replicate_seed(&cfg, 0))).unwrap();
        assert_eq!(one.mean, single.aoi);
        assert_eq!(one.ci_lo, one.ci_hi);
        let many = replicate(&det_model(4), p, &cfg, 8).unwrap();
        assert_eq!(many.std, 0.0);
        assert!(replicate(&det_model(4), p, &cfg, 0).is_err());
    }

    #[test]
    fn trace_format() {
        let cfg = SimConfig::new(Horizon::Deliveries(1), 1).with_warmup(0.0).with_trace();
        let res = run(&det_model(2), PolicyConfig::new(1, SelectionRule::Maf), &cfg).unwrap();
        let text = format_trace(res.trace.as_deref().unwrap());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "0\t1\tPOLL\t0\t1");
        assert_eq!(lines[1], "1\t2\tSEND\t-\t1");
        assert_eq!(lines[2], "2\tRESET\t0\t2");
    }
}
