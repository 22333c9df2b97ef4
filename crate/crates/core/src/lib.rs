//! Age of information for sensors polled by a gateway that relays their
//! updates to a monitor over the same shared medium.
//!
//! - [`stochastic`]: transmission-time laws, exact moments, seeded streams.
//! - [`model`]: gateway/monitor age vectors and their evolution.
//! - [`policies`]: poll-`s`-then-send policies and selection rules.
//! - [`simulator`]: event-by-event runs with exact age integration.
//! - [`analytics`]: closed-form average age and the choice of `s`.
//! - [`coupling`]: shared-randomness comparison of selection rules.

pub mod analytics;
pub mod coupling;
mod error;
pub mod model;
pub mod policies;
pub mod simulator;
pub mod stochastic;

pub use error::{Error, Result};
pub use model::{AgeState, Decision, SystemModel};
pub use policies::{Policy, PolicyConfig, SelectionRule};
pub use simulator::{replicate, run, Horizon, ReplicateSummary, SimConfig, SimResult};
pub use stochastic::{fit_hyperexponential, DistributionSpec, Moments, RngStream};
