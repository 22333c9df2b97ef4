//! Poll-`s`-then-send policies and their sensor-selection rules.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{AgeState, Decision, SystemModel};
use crate::stochastic::RngStream;

/// How the gateway picks the next sensor to poll.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionRule {
    /// Largest gateway age first.
    Maf,
    /// Smallest `E[X_i] - age_gw[i]/n` first.
    Mca,
    /// Cycle through sensors in index order.
    RoundRobin,
    /// Uniformly random sensor.
    RandomUniform,
    /// Smallest gateway age first.
    MinAgeFirst,
}

impl SelectionRule {
    pub const ALL: [SelectionRule; 5] = [
        SelectionRule::Maf,
        SelectionRule::Mca,
        SelectionRule::RoundRobin,
        SelectionRule::RandomUniform,
        SelectionRule::MinAgeFirst,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Maf => "maf",
            Self::Mca => "mca",
            Self::RoundRobin => "rr",
            Self::RandomUniform => "random",
            Self::MinAgeFirst => "minage",
        }
    }
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s.trim())
            .ok_or_else(|| Error::Policy(format!("unknown rule `{s}` (maf | mca | rr | random | minage)")))
    }
}

/// A member of the fixed-`s` family: poll `s` sensors, then send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PolicyConfig {
    pub s: usize,
    pub rule: SelectionRule,
}

impl PolicyConfig {
    pub fn new(s: usize, rule: SelectionRule) -> Self {
        Self { s, rule }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.s == 0 || self.s > n {
            return Err(Error::Policy(format!(
                "s must satisfy 1 <= s <= n = {n}, got {}",
                self.s
            )));
        }
        Ok(())
    }
}

/// Per-run decision maker: a [`PolicyConfig`] plus the mutable state some
/// rules need (the round-robin cursor, the MCA score offsets).
#[derive(Debug, Clone)]
pub struct Policy {
    cfg: PolicyConfig,
    cursor: usize,
    means: Vec<f64>,
    n: usize,
}

impl Policy {
    pub fn new(cfg: PolicyConfig, model: &SystemModel) -> Result<Self> {
        cfg.validate(model.n())?;
        let means = if cfg.rule == SelectionRule::Mca {
            model.sensor_means()
        } else {
            Vec::new()
        };
        Ok(Self {
            cfg,
            cursor: 0,
            means,
            n: model.n(),
        })
    }

    pub fn config(&self) -> PolicyConfig {
        self.cfg
    }

    /// Sends once `s` polls have accumulated, otherwise polls the sensor the
    /// rule selects. Ties go to the lowest index. Only `RandomUniform` reads
    /// from `rng`, exactly one draw per poll.
    pub fn decide(&mut self, state: &AgeState, rng: &mut RngStream) -> Decision {
        debug_assert_eq!(state.n(), self.n);
        debug_assert!(state.polls_since_send <= self.cfg.s);
        if state.polls_since_send >= self.cfg.s {
            return Decision::SendToMonitor;
        }
        let sensor = match self.cfg.rule {
            SelectionRule::Maf => argmax(&state.age_gw),
            SelectionRule::MinAgeFirst => argmin(state.age_gw.iter().copied()),
            SelectionRule::Mca => {
                let n = self.n as f64;
                argmin(self.means.iter().zip(&state.age_gw).map(|(m, a)| m - a / n))
            }
            SelectionRule::RoundRobin => {
                let next = self.cursor;
                self.cursor = (self.cursor + 1) % self.n;
                next
            }
            SelectionRule::RandomUniform => rng.index(self.n),
        };
        Decision::Poll { sensor }
    }
}

/// First index of the maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// First index of the minimum.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
