//! Error type shared across the library.

use crate::equilibria::Regime;

/// Errors produced by model evaluation, equilibrium computation, dynamics,
/// and the experiment drivers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument or parameter fell outside its admissible range.
    #[error("{field} = {value} violates: {requirement}")]
    Domain {
        field: &'static str,
        value: f64,
        requirement: &'static str,
    },

    /// An operation only defined in certain equilibrium regimes was invoked
    /// in the wrong one.
    #[error("operation requires the {required} regime, but parameters yield {found}")]
    Regime {
        required: &'static str,
        found: Regime,
    },

    /// `classify_limit` was called on a state whose insider/outsider
    /// perceptions have not yet collapsed onto each other.
    #[error("perception gap |s0 - s1| = {gap:e} exceeds classification tolerance {tol:e}")]
    GapTooWide { gap: f64, tol: f64 },

    /// More than one rest point lies within the classification tolerance of
    /// the terminal state.
    #[error("terminal s1 = {s1} lies within tolerance of more than one rest point")]
    AmbiguousLimit { s1: f64 },

    /// A bisection probe failed to resolve even after the time-horizon retry.
    #[error("probe at lambda = {lambda} hit t_max = {t_max} without convergence (after retry)")]
    UnresolvedProbe { lambda: f64, t_max: f64 },

    /// Root bracketing failed, or bisection exhausted its iteration budget.
    #[error("bisection on {what} failed: {detail}")]
    BisectionFailed {
        what: &'static str,
        detail: &'static str,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
