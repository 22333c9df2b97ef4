//! Sample-path comparison of maximum-age-first against another selection
//! rule when both see the same transmission times.
//!
//! With iid sensors and a common threshold `s`, both policies have the same
//! poll/send slot pattern, so decision `j` of each can consume the `j`-th
//! shared draw. Along such a coupled path the sorted gateway ages under MAF
//! should be elementwise no larger than under any other rule, and the same
//! for monitor ages at every send completion.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{AgeState, Decision, SystemModel};
use crate::policies::{Policy, PolicyConfig, SelectionRule};
use crate::simulator::{replicate, ReplicateSummary, SimConfig};
use crate::stochastic::{splitmix64, RngStream};

/// Mixed into the seed of the stream the alternative rule selects with, so
/// its choices never consume the shared transmission-time draws.
const SELECTION_STREAM_TAG: u64 = 0x5E1E_C7A1_7E5E_ED00;

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    pub model: SystemModel,
    pub s: usize,
    pub alt_rule: SelectionRule,
    pub decisions: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgeVector {
    Gateway,
    Monitor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    /// 0-based index of the decision after whose completion the check failed.
    pub decision: u64,
    pub vector: AgeVector,
    /// Position in the ascending sort.
    pub position: usize,
    pub maf_value: f64,
    pub alt_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub holds: bool,
    pub first_violation: Option<Violation>,
    pub decisions_checked: u64,
}

impl CoupledRun {
    /// Config snippet that reproduces this run through the `verify-coupling`
    /// subcommand.
    pub fn reproducer(&self) -> String {
        format!(
            "[model]\nn = {}\nsensor = {}\nmonitor = {}\n[policy]\ns = {}\nrules = {}\n[run]\ndecisions = {}\nseed = {}\nseeds = 1\n",
            self.model.n(),
            self.model.sensor_dist(0),
            self.model.monitor_dist(),
            self.s,
            self.alt_rule,
            self.decisions,
            self.seed
        )
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "decision {}: sorted {:?} age at position {} is {} under maf but {} under the alternative",
            self.decision, self.vector, self.position, self.maf_value, self.alt_value
        )
    }
}

fn first_excess(maf: &[f64], alt: &[f64], scratch: &mut (Vec<f64>, Vec<f64>)) -> Option<(usize, f64, f64)> {
    scratch.0.clear();
    scratch.0.extend_from_slice(maf);
    scratch.1.clear();
    scratch.1.extend_from_slice(alt);
    scratch.0.sort_unstable_by(f64::total_cmp);
    scratch.1.sort_unstable_by(f64::total_cmp);
    scratch
        .0
        .iter()
        .zip(&scratch.1)
        .position(|(m, a)| m > a)
        .map(|i| (i, scratch.0[i], scratch.1[i]))
}

/// Runs MAF and `run.alt_rule` on shared draws and checks sorted-age
/// dominance after every decision.
pub fn verify_dominance(run: &CoupledRun) -> Result<DominanceReport> {
    if !run.model.is_iid() {
        return Err(Error::CouplingNotApplicable(
            "coupling needs identically distributed sensors".into(),
        ));
    }
    let n = run.model.n();
    let mut maf = Policy::new(PolicyConfig::new(run.s, SelectionRule::Maf), &run.model)?;
    let mut alt = Policy::new(PolicyConfig::new(run.s, run.alt_rule), &run.model)?;
    let mut draws = RngStream::new(run.seed);
    let mut alt_choices = RngStream::new(splitmix64(run.seed ^ SELECTION_STREAM_TAG));
    let sensor_dist = *run.model.sensor_dist(0);
    let monitor_dist = *run.model.monitor_dist();

    let mut maf_state = AgeState::new(n);
    let mut alt_state = AgeState::new(n);
    let mut scratch = (Vec::with_capacity(n), Vec::with_capacity(n));

    for j in 0..run.decisions {
        let dm = maf.decide(&maf_state, &mut draws);
        let da = alt.decide(&alt_state, &mut alt_choices);
        let is_send = dm == Decision::SendToMonitor;
        debug_assert_eq!(is_send, da == Decision::SendToMonitor);
        let x = if is_send {
            monitor_dist.draw(&mut draws)
        } else {
            sensor_dist.draw(&mut draws)
        };
        maf_state.apply(dm, x)?;
        alt_state.apply(da, x)?;

        let mut check = |vector, m: &[f64], a: &[f64]| {
            first_excess(m, a, &mut scratch).map(|(position, maf_value, alt_value)| Violation {
                decision: j,
                vector,
                position,
                maf_value,
                alt_value,
            })
        };
        let violation = check(AgeVector::Gateway, &maf_state.age_gw, &alt_state.age_gw).or_else(|| {
            if is_send {
                check(AgeVector::Monitor, &maf_state.age_mon, &alt_state.age_mon)
            } else {
                None
            }
        });
        if let Some(v) = violation {
            return Ok(DominanceReport {
                holds: false,
                first_violation: Some(v),
                decisions_checked: j + 1,
            });
        }
    }
    Ok(DominanceReport {
        holds: true,
        first_violation: None,
        decisions_checked: run.decisions,
    })
}

/// The MAF trajectory of a coupled run: the state after each decision.
/// Draws are consumed exactly as [`verify_dominance`] consumes them.
pub fn coupled_maf_states(model: &SystemModel, s: usize, decisions: u64, seed: u64) -> Result<Vec<AgeState>> {
    if !model.is_iid() {
        return Err(Error::CouplingNotApplicable(
            "coupling needs identically distributed sensors".into(),
        ));
    }
    let mut maf = Policy::new(PolicyConfig::new(s, SelectionRule::Maf), model)?;
    let mut draws = RngStream::new(seed);
    let mut state = AgeState::new(model.n());
    let mut out = Vec::with_capacity(decisions as usize);
    for _ in 0..decisions {
        let d = maf.decide(&state, &mut draws);
        let x = match d {
            Decision::SendToMonitor => model.monitor_dist().draw(&mut draws),
            Decision::Poll { .. } => model.sensor_dist(0).draw(&mut draws),
        };
        state.apply(d, x)?;
        out.push(state.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSummary {
    pub rule: SelectionRule,
    pub summary: ReplicateSummary,
}

/// Uncoupled long-run AoI of each rule at threshold `s`, every rule run on
/// the same replicate seeds.
pub fn aoi_dominance_summary(
    model: &SystemModel,
    s: usize,
    rules: &[SelectionRule],
    replicates: usize,
    cfg: &SimConfig,
) -> Result<Vec<RuleSummary>> {
    rules
        .iter()
        .map(|&rule| {
            Ok(RuleSummary {
                rule,
                summary: replicate(model, PolicyConfig::new(s, rule), cfg, replicates)?,
            })
        })
        .collect()
}
