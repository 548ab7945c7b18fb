//! Simulator for a trust-game economy with scoundrels and responsive agents.
//!
//! The library computes the economy's equilibria in closed form, integrates
//! belief-adjustment and invasion dynamics, and drives the quantitative
//! experiments around them (basin sizes, total-cheating curves, minimum
//! disrupting invasion sizes). The `trustdyn` binary exposes all of it on
//! the command line.
//!
//! Module map:
//!
//! - [`model`]: social cost, offers, cutoffs, and the best-response map.
//! - [`equilibria`]: regime classification, interior roots, thresholds.
//! - [`dynamics`]: the two-perception flow, its integrator and classifier.
//! - [`experiments`]: invasion-size bisection, halfway construction, sweeps.
//! - [`cli`]: argument parsing, config files, CSV/JSON emission.
//!
//! All computations are pure functions of their inputs; identical inputs
//! produce bit-identical outputs, including across thread-pool sizes.

pub mod cli;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod experiments;
pub mod fmt;
pub mod model;

pub use dynamics::{
    ClassifiedLimit, IntegratorConfig, LimitLabel, PopulationState, Preset, Trajectory,
};
pub use equilibria::{EquilibriumSet, Regime};
pub use error::{Error, Result};
pub use experiments::{LambdaStarResult, QMode};
pub use model::{CostProfile, ModelParams};
