//! Primitive functions of the trust economy.
//!
//! A unit mass of agents is matched pairwise each period. A proposer offers a
//! stake `x >= 0`; the receiver either honors it (both sides earn `x`) or
//! cheats (receiver earns `2x` minus a cost, proposer earns nothing). A
//! fraction `q` of receivers are scoundrels who always cheat; the rest are
//! responsive and cheat only when a private cost draw `z ~ U[0,1]` plus the
//! social cost of cheating falls below the offer.
//!
//! The social cost is proportional to the posterior probability that an
//! observed cheater is a scoundrel:
//!
//! ```text
//! f(s) = theta * q / (q + (1 - q) * s)
//! ```
//!
//! where `s` is the proportion of responsives who cheat and `theta > 0`
//! weighs the social against the private component. Everything else in the
//! crate is built from `f` and the best responses it induces.

use serde::Serialize;

use crate::error::{Error, Result};

/// Primitives of the economy: social-cost weight `theta`, scoundrel fraction
/// `q`, and belief-adjustment speed `delta`.
///
/// `q = 0` and `q = 1` are excluded: at `q = 0` the social cost is ill-defined
/// at `s = 0`, and at `q = 1` there are no responsives to speak of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    theta: f64,
    q: f64,
    delta: f64,
}

impl ModelParams {
    /// Validated constructor with the default adjustment speed `delta = 1`.
    pub fn new(theta: f64, q: f64) -> Result<Self> {
        Self::with_delta(theta, q, 1.0)
    }

    /// Validated constructor with an explicit adjustment speed.
    pub fn with_delta(theta: f64, q: f64, delta: f64) -> Result<Self> {
        if !theta.is_finite() || theta <= 0.0 {
            return Err(Error::Domain {
                field: "theta",
                value: theta,
                requirement: "theta > 0 and finite",
            });
        }
        if q.is_nan() || q <= 0.0 || q >= 1.0 {
            return Err(Error::Domain {
                field: "q",
                value: q,
                requirement: "0 < q < 1",
            });
        }
        if !delta.is_finite() || delta <= 0.0 {
            return Err(Error::Domain {
                field: "delta",
                value: delta,
                requirement: "delta > 0 and finite",
            });
        }
        Ok(Self { theta, q, delta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Social cost of cheating `f(s) = theta q / (q + (1-q) s)`.
    ///
    /// Strictly decreasing and strictly convex on `[0, 1]`, with `f(0) =
    /// theta` and `f(1) = theta q`.
    pub fn social_cost(&self, s: f64) -> Result<f64> {
        check_unit("s", s)?;
        Ok(self.social_cost_raw(s))
    }

    /// `f(s)` without the range check. Callers must keep `s` within
    /// `[0, 1]` (the denominator stays positive for any `s > -q/(1-q)`).
    #[inline]
    pub(crate) fn social_cost_raw(&self, s: f64) -> f64 {
        self.theta * self.q / (self.q + (1.0 - self.q) * s)
    }

    /// The cutoff on the private cost below which a responsive facing offer
    /// `x` cheats: `min{1, max{0, x - f(s)}}`.
    ///
    /// The upper clamp never binds in equilibrium but does bind out of
    /// equilibrium, when a proposer expecting little cheating meets a
    /// receiver expecting a lot.
    pub fn cheat_cutoff(&self, x: f64, s: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain {
                field: "x",
                value: x,
                requirement: "x >= 0",
            });
        }
        let f = self.social_cost(s)?;
        Ok(clamp_unit(x - f))
    }

    /// Perception level `s*` below which proposers fully deter responsive
    /// cheating: the solution of `f(s*) = 1`, i.e. `q (theta - 1) / (1 - q)`.
    ///
    /// Negative when `theta < 1`; callers read that as "the interior branch
    /// is always active" rather than as a proportion.
    pub fn s_star(&self) -> f64 {
        self.q * (self.theta - 1.0) / (1.0 - self.q)
    }

    /// The proposer's optimal offer given a perceived cheating level:
    /// `max{f(s), 1/2 + 1/2 f(s)}`.
    ///
    /// Equals `f(s)` (full deterrence) exactly when `f(s) >= 1`, i.e. when
    /// `s <= s*`; otherwise the interior first-order condition applies.
    pub fn optimal_offer(&self, s_perceived: f64) -> Result<f64> {
        let f = self.social_cost(s_perceived)?;
        Ok(f.max(0.5 + 0.5 * f))
    }

    /// Expected proposer payoff from offering `x` when responsives cheat at
    /// rate given by the cutoff: `(1 - ((1-q) zeta(x, s) + q)) x`.
    ///
    /// Serves as the brute-force objective against which `optimal_offer` is
    /// checked.
    pub fn proposer_payoff(&self, x: f64, s: f64) -> Result<f64> {
        let zeta = self.cheat_cutoff(x, s)?;
        Ok((1.0 - ((1.0 - self.q) * zeta + self.q)) * x)
    }

    /// Best-response map from a common perception `s_p` to realized
    /// responsive cheating: `0` on `s_p <= s*`, else `1/2 - 1/2 f(s_p)`.
    ///
    /// Always lands in `[0, 1/2)`, and the two branches agree at the seam
    /// `s_p = s*` (where `f = 1`), so the comparison is exact with no
    /// epsilon.
    pub fn realized_cheating(&self, s_p: f64) -> Result<f64> {
        check_unit("s_p", s_p)?;
        Ok(self.realized_cheating_raw(s_p))
    }

    #[inline]
    pub(crate) fn realized_cheating_raw(&self, s_p: f64) -> f64 {
        if s_p <= self.s_star() {
            0.0
        } else {
            0.5 - 0.5 * self.social_cost_raw(s_p)
        }
    }
}

/// A responsive receiver's situation: private cost draw `z` and the
/// prevailing proportion `s` of responsives who cheat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostProfile {
    z: f64,
    s: f64,
}

impl CostProfile {
    pub fn new(z: f64, s: f64) -> Result<Self> {
        check_unit("z", z)?;
        check_unit("s", s)?;
        Ok(Self { z, s })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Total cost of cheating `c(z, s) = z + f(s)`.
    pub fn total_cost(&self, params: &ModelParams) -> f64 {
        self.z + params.social_cost_raw(self.s)
    }
}

#[inline]
pub(crate) fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
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
