//! Belief-adjustment dynamics.
//!
//! Perceptions of cheating move toward realized cheating. With a common
//! perception the flow is one-dimensional and its rest points are exactly
//! the equilibria. After an invasion the population splits into insiders
//! (fraction `1 - lambda`, perception `s1`) and outsiders (fraction
//! `lambda`, perception `s0`); random matching yields four match types and
//! the realized cheating rate
//!
//! ```text
//! s = (1-L)^2 z11 + L(1-L) (z10 + z01) + L^2 z00,
//! z_ij = min{1, max{0, x_i - f(s_j)}},   x_i = max{f(s_i), 1/2 + 1/2 f(s_i)},
//! ```
//!
//! driving `ds1/dt = delta (s - s1)` and `ds0/dt = delta (s - s0)`. The
//! perception gap `s0 - s1` then decays exactly like `e^{-delta t}`, which
//! doubles as an integrator diagnostic.

use std::cmp::Ordering;
use std::io::{self, Write};

use serde::Serialize;

use crate::equilibria::{equilibrium_set, Regime};
use crate::error::{Error, Result};
use crate::fmt as numfmt;
use crate::model::{clamp_unit, ModelParams};

/// Absolute distance to a rest point within which a terminal state is
/// classified as having reached it.
pub const CLASSIFICATION_TOL: f64 = 1e-6;

/// Flow magnitude below which a state parked near the unstable equilibrium
/// counts as converged to it (the point is repelling, so anything larger
/// means the trajectory is still in transit).
pub const UNSTABLE_FLOW_TOL: f64 = 1e-10;

/// Joint perception state of insiders and outsiders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationState {
    /// Time coordinate (nonnegative).
    pub t: f64,
    /// Insider perception of responsive cheating.
    pub s1: f64,
    /// Outsider perception of responsive cheating.
    pub s0: f64,
    /// Outsider fraction, fixed along a trajectory.
    pub lambda: f64,
}

impl PopulationState {
    pub fn new(t: f64, s1: f64, s0: f64, lambda: f64) -> Result<Self> {
        let state = Self { t, s1, s0, lambda };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t.is_finite() || self.t < 0.0 {
            return Err(Error::Domain {
                field: "t",
                value: self.t,
                requirement: "t >= 0 and finite",
            });
        }
        check_unit("s1", self.s1)?;
        check_unit("s0", self.s0)?;
        check_unit("lambda", self.lambda)
    }
}

/// Terminal classification of an integrated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitLabel {
    Good,
    Unstable,
    Bad,
    MaxTimeExceeded,
}

impl std::fmt::Display for LimitLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            LimitLabel::Good => "good",
            LimitLabel::Unstable => "unstable",
            LimitLabel::Bad => "bad",
            LimitLabel::MaxTimeExceeded => "max-time-exceeded",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifiedLimit {
    pub label: LimitLabel,
    /// Terminal insider perception.
    pub value: f64,
    /// Final `|s - s1| + |s0 - s1|`.
    pub residual: f64,
}

/// Fixed-step integrator configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    /// Step size `h`.
    pub step: f64,
    /// Time horizon measured from the initial state's `t`.
    pub t_max: f64,
    /// Convergence tolerance on `|s - s1|` and `|s0 - s1|`.
    pub tol: f64,
    /// Consecutive below-tolerance steps required to declare convergence.
    pub n_hold: usize,
    /// Record every `stride`-th step (the initial and terminal states are
    /// always recorded).
    pub stride: usize,
}

impl IntegratorConfig {
    /// Defaults for adjustment speed `delta`: `h = min(1e-2, 1e-1/delta)`,
    /// `t_max = 1e3/delta`, tolerance `1e-10`, hold count 10, stride 10.
    ///
    /// The slowest mode of the flow decays like `e^{-delta t}`, so a horizon
    /// of `1e3/delta` drives residuals far below tolerance everywhere except
    /// at the unstable equilibrium.
    pub fn for_delta(delta: f64) -> Self {
        Self {
            step: (1e-2_f64).min(1e-1 / delta),
            t_max: 1e3 / delta,
            tol: 1e-10,
            n_hold: 10,
            stride: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(Error::Domain {
                field: "step",
                value: self.step,
                requirement: "step > 0 and finite",
            });
        }
        if self.t_max.is_nan() || self.t_max <= 0.0 {
            return Err(Error::Domain {
                field: "t_max",
                value: self.t_max,
                requirement: "t_max > 0",
            });
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Domain {
                field: "tol",
                value: self.tol,
                requirement: "tol > 0",
            });
        }
        if self.n_hold == 0 {
            return Err(Error::Domain {
                field: "n_hold",
                value: 0.0,
                requirement: "n_hold >= 1",
            });
        }
        if self.stride == 0 {
            return Err(Error::Domain {
                field: "stride",
                value: 0.0,
                requirement: "stride >= 1",
            });
        }
        Ok(())
    }
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub s1: f64,
    pub s0: f64,
    /// Realized responsive cheating at this state.
    pub s: f64,
}

/// An integrated path of the two-perception system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub initial: PopulationState,
    pub samples: Vec<TrajectorySample>,
    pub terminal: ClassifiedLimit,
}

impl Trajectory {
    /// Writes the samples as CSV with header `t,s1,s0,s`, every number
    /// rendered with 17 significant digits so values round-trip exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,s1,s0,s")?;
        for row in &self.samples {
            writeln!(
                w,
                "{},{},{},{}",
                numfmt::machine(row.t),
                numfmt::machine(row.s1),
                numfmt::machine(row.s0),
                numfmt::machine(row.s)
            )?;
        }
        Ok(())
    }
}

/// Canonical initial conditions for the invasion experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Insiders at the good equilibrium, outsiders arriving from the bad
    /// one: `s1(0) = 0`, `s0(0) = s_b`.
    Invasion,
    /// The swapped scenario: `s1(0) = s_b`, `s0(0) = 0`.
    CounterInvasion,
}

impl Preset {
    /// Builds the preset state; requires parameters with a bad equilibrium.
    pub fn initial_state(&self, lambda: f64, params: &ModelParams) -> Result<PopulationState> {
        let set = equilibrium_set(params);
        let s_b = match set.regime {
            Regime::Tripartite | Regime::Boundary => set.s_b.expect("s_b present"),
            other => {
                return Err(Error::Regime {
                    required: "tripartite",
                    found: other,
                })
            }
        };
        match self {
            Preset::Invasion => PopulationState::new(0.0, 0.0, s_b, lambda),
            Preset::CounterInvasion => PopulationState::new(0.0, s_b, 0.0, lambda),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "invasion" => Ok(Preset::Invasion),
            "counter-invasion" => Ok(Preset::CounterInvasion),
            other => Err(format!(
                "unknown preset `{other}` (expected `invasion` or `counter-invasion`)"
            )),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Invasion => "invasion",
            Preset::CounterInvasion => "counter-invasion",
        })
    }
}

/// Realized responsive cheating for split perceptions `(s1, s0)` and
/// outsider fraction `lambda`.
pub fn realized_mixture(s1: f64, s0: f64, lambda: f64, params: &ModelParams) -> Result<f64> {
    check_unit("s1", s1)?;
    check_unit("s0", s0)?;
    check_unit("lambda", lambda)?;
    Ok(mixture_inner(s1, s0, lambda, params))
}

/// Mixture evaluation for integrator stage states, which may poke a hair
/// outside the unit square mid-step.
#[inline]
fn mixture_clamped(s1: f64, s0: f64, lambda: f64, params: &ModelParams) -> f64 {
    mixture_inner(clamp_unit(s1), clamp_unit(s0), lambda, params)
}

#[inline]
fn mixture_inner(s1: f64, s0: f64, lambda: f64, params: &ModelParams) -> f64 {
    let f1 = params.social_cost_raw(s1);
    let f0 = params.social_cost_raw(s0);
    let x1 = f1.max(0.5 + 0.5 * f1);
    let x0 = f0.max(0.5 + 0.5 * f0);
    let z11 = clamp_unit(x1 - f1);
    let z10 = clamp_unit(x1 - f0);
    let z01 = clamp_unit(x0 - f1);
    let z00 = clamp_unit(x0 - f0);
    let lm = 1.0 - lambda;
    // Grouped so the sum is bit-for-bit symmetric under the relabeling
    // (s1, s0, lambda) -> (s0, s1, 1 - lambda) whenever the complement of
    // lambda is exact in floating point.
    (lm * lm * z11 + lambda * lambda * z00) + (lm * lambda * z10 + lambda * lm * z01)
}

#[inline]
fn rates(s1: f64, s0: f64, lambda: f64, params: &ModelParams, delta: f64) -> (f64, f64) {
    let s = mixture_clamped(s1, s0, lambda, params);
    (delta * (s - s1), delta * (s - s0))
}

/// Integrates the two-perception system with the classical fourth-order
/// scheme at fixed step.
///
/// Terminates when `|s - s1|` and `|s0 - s1|` stay below `config.tol` for
/// `config.n_hold` consecutive steps, or when the horizon `config.t_max`
/// runs out; the terminal state is then classified against the rest points.
/// Hitting the horizon is reported through the [`LimitLabel::MaxTimeExceeded`]
/// label, not an error.
pub fn integrate(
    initial: &PopulationState,
    params: &ModelParams,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    initial.validate()?;
    let delta = params.delta();
    let lambda = initial.lambda;
    let h = config.step;
    let t0 = initial.t;
    let mut s1 = initial.s1;
    let mut s0 = initial.s0;
    let mut samples = Vec::new();
    let mut hold = 0usize;
    let mut n: u64 = 0;
    let mut last_recorded: Option<u64> = None;

    let final_t = loop {
        let t = t0 + n as f64 * h;
        let s = mixture_clamped(s1, s0, lambda, params);
        if n.is_multiple_of(config.stride as u64) {
            samples.push(TrajectorySample { t, s1, s0, s });
            last_recorded = Some(n);
        }
        if (s - s1).abs() < config.tol && (s0 - s1).abs() < config.tol {
            hold += 1;
        } else {
            hold = 0;
        }
        if hold >= config.n_hold || t >= t0 + config.t_max {
            break t;
        }
        let (k1a, k1b) = rates(s1, s0, lambda, params, delta);
        let (k2a, k2b) = rates(s1 + 0.5 * h * k1a, s0 + 0.5 * h * k1b, lambda, params, delta);
        let (k3a, k3b) = rates(s1 + 0.5 * h * k2a, s0 + 0.5 * h * k2b, lambda, params, delta);
        let (k4a, k4b) = rates(s1 + h * k3a, s0 + h * k3b, lambda, params, delta);
        s1 += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        s0 += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        n += 1;
    };

    if last_recorded != Some(n) {
        let s = mixture_clamped(s1, s0, lambda, params);
        samples.push(TrajectorySample { t: final_t, s1, s0, s });
    }

    let terminal_state = PopulationState {
        t: final_t,
        s1: clamp_unit(s1),
        s0: clamp_unit(s0),
        lambda,
    };
    let terminal = match classify_limit(&terminal_state, params, CLASSIFICATION_TOL) {
        Ok(limit) => limit,
        Err(Error::GapTooWide { .. }) => {
            let s = mixture_clamped(s1, s0, lambda, params);
            ClassifiedLimit {
                label: LimitLabel::MaxTimeExceeded,
                value: s1,
                residual: (s - s1).abs() + (s0 - s1).abs(),
            }
        }
        Err(e) => return Err(e),
    };

    Ok(Trajectory {
        params: *params,
        initial: *initial,
        samples,
        terminal,
    })
}

/// The signed insider/outsider perception gap `s0(t) - s1(t)` at every
/// recorded sample. Along any exact solution the gap equals
/// `e^{-delta (t - t0)}` times its initial value.
pub fn perception_gap(trajectory: &Trajectory) -> Vec<(f64, f64)> {
    trajectory
        .samples
        .iter()
        .map(|row| (row.t, row.s0 - row.s1))
        .collect()
}

/// Sign of the one-dimensional common-perception flow at `s_p`:
/// `Less`/`Greater` mean the perception is falling/rising.
///
/// Only meaningful when the interior rest points exist, so other regimes
/// are rejected.
pub fn flow_direction(s_p: f64, params: &ModelParams) -> Result<Ordering> {
    let set = equilibrium_set(params);
    match set.regime {
        Regime::Tripartite | Regime::Boundary => {}
        other => {
            return Err(Error::Regime {
                required: "tripartite",
                found: other,
            })
        }
    }
    let realized = params.realized_cheating(s_p)?;
    Ok(realized
        .partial_cmp(&s_p)
        .expect("flow values are finite"))
}

/// Labels a terminal state by the nearest rest point.
///
/// Requires the perceptions to have already collapsed (`|s0 - s1| < tol`).
/// A state near the unstable equilibrium is only labeled `Unstable` when the
/// flow there is below [`UNSTABLE_FLOW_TOL`]; otherwise the trajectory is
/// still in transit and the state is reported as unclassified via
/// `MaxTimeExceeded`. More than one rest point within `tol` is an error.
pub fn classify_limit(
    terminal: &PopulationState,
    params: &ModelParams,
    tol: f64,
) -> Result<ClassifiedLimit> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Domain {
            field: "tol",
            value: tol,
            requirement: "tol > 0",
        });
    }
    let gap = (terminal.s0 - terminal.s1).abs();
    if gap >= tol {
        return Err(Error::GapTooWide { gap, tol });
    }
    let s = mixture_clamped(terminal.s1, terminal.s0, terminal.lambda, params);
    let flow = (s - terminal.s1).abs();
    let residual = flow + gap;
    let value = terminal.s1;

    let set = equilibrium_set(params);
    let mut candidates: Vec<(f64, LimitLabel)> = Vec::new();
    match set.regime {
        Regime::UniqueInterior => {
            // The lone attractor carries some cheating, which is the role
            // the bad label plays everywhere else.
            candidates.push((set.s_interior.expect("present"), LimitLabel::Bad));
        }
        Regime::GoodOnly => candidates.push((0.0, LimitLabel::Good)),
        Regime::Boundary => {
            candidates.push((0.0, LimitLabel::Good));
            candidates.push((set.s_b.expect("present"), LimitLabel::Bad));
        }
        Regime::Tripartite => {
            candidates.push((0.0, LimitLabel::Good));
            let s_u = set.s_u.expect("present");
            // theta = 1 degenerates s_u onto s_g; keep one candidate.
            if s_u > 0.0 {
                candidates.push((s_u, LimitLabel::Unstable));
            }
            candidates.push((set.s_b.expect("present"), LimitLabel::Bad));
        }
    }

    let within: Vec<&(f64, LimitLabel)> = candidates
        .iter()
        .filter(|(rest, _)| (value - rest).abs() <= tol)
        .collect();
    match within.as_slice() {
        [] => Ok(ClassifiedLimit {
            label: LimitLabel::MaxTimeExceeded,
            value,
            residual,
        }),
        [(_, label)] => {
            if *label == LimitLabel::Unstable && flow >= UNSTABLE_FLOW_TOL {
                return Ok(ClassifiedLimit {
                    label: LimitLabel::MaxTimeExceeded,
                    value,
                    residual,
                });
            }
            Ok(ClassifiedLimit {
                label: *label,
                value,
                residual,
            })
        }
        _ => Err(Error::AmbiguousLimit { s1: value }),
    }
}

fn check_unit(field: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Domain {
            field,
            value,
            requirement: "value in [0, 1]",
        });
    }
    Ok(())
}
