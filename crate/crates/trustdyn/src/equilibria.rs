//! Closed-form equilibria of the trust economy.
//!
//! Interior equilibria are fixed points of the best-response map, i.e.
//! solutions of `f(s) = 1 - 2s`, which reduces to the quadratic
//!
//! ```text
//! 2 (1-q) s^2 + (3q - 1) s + q (theta - 1) = 0.
//! ```
//!
//! For `theta > 1` the no-cheating point `s_g = 0` is always an equilibrium,
//! and the quadratic has two roots `s_u < s_b` precisely when the scoundrel
//! fraction is below the threshold `q_hat(theta)`. For `theta < 1` the
//! quadratic has a unique positive root and it is the only equilibrium.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Absolute tolerance on `|q - q_hat|` below which parameters are classified
/// as sitting on the fold where the interior roots coincide.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Discriminant values in `(-DISCRIMINANT_EPS, 0)` are treated as exactly
/// zero: floating-point noise at the fold must not poison the square root.
pub const DISCRIMINANT_EPS: f64 = 1e-14;

/// Residual tolerance to which every reported interior root satisfies its
/// defining equation `f(s) = 1 - 2s`.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-10;

/// Which equilibria exist for the given parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `theta < 1`: a single interior equilibrium with some cheating.
    UniqueInterior,
    /// `theta >= 1`, `q > q_hat`: only the no-cheating equilibrium.
    GoodOnly,
    /// `q = q_hat` within [`BOUNDARY_TOL`]: the interior roots coincide.
    Boundary,
    /// `theta > 1`, `q < q_hat`: good, unstable, and bad equilibria.
    Tripartite,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Regime::UniqueInterior => "unique-interior",
            Regime::GoodOnly => "good-only",
            Regime::Boundary => "boundary",
            Regime::Tripartite => "tripartite",
        };
        f.write_str(name)
    }
}

/// The complete rest-point inventory for one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumSet {
    pub regime: Regime,
    /// No-cheating equilibrium; present whenever `theta >= 1`.
    pub s_g: Option<f64>,
    /// Smaller interior root (basin boundary); present in
    /// `Boundary`/`Tripartite`.
    pub s_u: Option<f64>,
    /// Larger interior root (bad equilibrium); present in
    /// `Boundary`/`Tripartite`.
    pub s_b: Option<f64>,
    /// Unique interior equilibrium of the `theta < 1` regime.
    pub s_interior: Option<f64>,
    /// Scoundrel threshold `q_hat(theta)`; undefined for `theta < 1`.
    pub q_hat: Option<f64>,
    /// Full-deterrence perception level `s*` (may be negative).
    pub s_star: f64,
}

/// Scoundrel-fraction threshold above which only the good equilibrium
/// exists:
///
/// ```text
/// q_hat(theta) = (4 theta - 1 - 4 sqrt(theta (theta - 1))) / (1 + 8 theta)
/// ```
///
/// evaluated in the rationalized form `1 / (4 theta - 1 + 4 sqrt(theta
/// (theta - 1)))`, which is the same expression with the catastrophic
/// cancellation at large `theta` removed. Decreasing in `theta`, with
/// `q_hat(1) = 1/3` and limit 0.
pub fn q_hat(theta: f64) -> Result<f64> {
    if theta.is_nan() || theta < 1.0 {
        return Err(Error::Domain {
            field: "theta",
            value: theta,
            requirement: "theta >= 1 for q_hat",
        });
    }
    Ok(1.0 / (4.0 * theta - 1.0 + 4.0 * (theta * (theta - 1.0)).sqrt()))
}

/// Interior roots `(s_u, s_b)` of `f(s) = 1 - 2s` for `theta > 1`.
///
/// Returns `None` when `q > q_hat(theta)` (no interior equilibria). Presence
/// is decided by the `q_hat` comparison alone, never by inspecting root
/// signs. `s_b` comes from the explicit radical formula; `s_u` is recovered
/// from the product of roots `q (theta - 1) / (2 (1 - q))`, which avoids the
/// cancellation the difference form suffers for small `q`.
pub fn interior_roots(params: &ModelParams) -> Result<Option<(f64, f64)>> {
    if params.theta() <= 1.0 {
        return Err(Error::Domain {
            field: "theta",
            value: params.theta(),
            requirement: "theta > 1 for interior roots",
        });
    }
    Ok(roots_unchecked(params.theta(), params.q()))
}

/// Root computation shared with `equilibrium_set`, which also needs the
/// degenerate `theta = 1` case (where `s_u = 0` merges with `s_g`).
fn roots_unchecked(theta: f64, q: f64) -> Option<(f64, f64)> {
    let qh = 1.0 / (4.0 * theta - 1.0 + 4.0 * (theta * (theta - 1.0)).sqrt());
    if q > qh {
        return None;
    }
    let mut disc = (q + 1.0) * (q + 1.0) - 8.0 * theta * q * (1.0 - q);
    if disc < 0.0 {
        if disc > -DISCRIMINANT_EPS {
            disc = 0.0;
        } else {
            // q <= q_hat guarantees a nonnegative discriminant; anything
            // beyond the noise band means the caller fed us a fold point
            // that q_hat itself could not resolve.
            return None;
        }
    }
    let s_b = (1.0 - 3.0 * q + disc.sqrt()) / (4.0 * (1.0 - q));
    let s_u = if s_b > 0.0 {
        q * (theta - 1.0) / (2.0 * (1.0 - q) * s_b)
    } else {
        0.0
    };
    Some((s_u, s_b))
}

/// The unique positive root of `2(1-q)s^2 + (3q-1)s + q(theta-1) = 0` for
/// `theta < 1`, equivalently the unique fixed point of the best-response
/// map.
///
/// With `theta < 1` the constant term is negative, so the roots straddle
/// zero; the positive one is picked via the sign-stable resolvent.
pub fn unique_interior_root(params: &ModelParams) -> Result<f64> {
    let theta = params.theta();
    if theta >= 1.0 {
        return Err(Error::Domain {
            field: "theta",
            value: theta,
            requirement: "theta < 1 for the unique interior equilibrium",
        });
    }
    let q = params.q();
    let a = 2.0 * (1.0 - q);
    let b = 3.0 * q - 1.0;
    let c = q * (theta - 1.0);
    let disc = (b * b - 4.0 * a * c).sqrt();
    // resolvent = -(b + sign(b) sqrt(D)) / 2 keeps the additions
    // cancellation-free; the two roots are resolvent/a and c/resolvent.
    let resolvent = if b >= 0.0 {
        -0.5 * (b + disc)
    } else {
        -0.5 * (b - disc)
    };
    let r1 = resolvent / a;
    let r2 = c / resolvent;
    Ok(r1.max(r2))
}

/// Classifies the regime and assembles every rest point present.
pub fn equilibrium_set(params: &ModelParams) -> EquilibriumSet {
    let theta = params.theta();
    let q = params.q();
    let s_star = params.s_star();
    if theta < 1.0 {
        let root = unique_interior_root(params).expect("theta < 1 checked");
        return EquilibriumSet {
            regime: Regime::UniqueInterior,
            s_g: None,
            s_u: None,
            s_b: None,
            s_interior: Some(root),
            q_hat: None,
            s_star,
        };
    }
    let qh = q_hat(theta).expect("theta >= 1 checked");
    if (q - qh).abs() <= BOUNDARY_TOL {
        // Coincident roots at the fold.
        let root = (1.0 - 3.0 * q) / (4.0 * (1.0 - q));
        return EquilibriumSet {
            regime: Regime::Boundary,
            s_g: Some(0.0),
            s_u: Some(root),
            s_b: Some(root),
            s_interior: None,
            q_hat: Some(qh),
            s_star,
        };
    }
    if q > qh {
        return EquilibriumSet {
            regime: Regime::GoodOnly,
            s_g: Some(0.0),
            s_u: None,
            s_b: None,
            s_interior: None,
            q_hat: Some(qh),
            s_star,
        };
    }
    let (s_u, s_b) = roots_unchecked(theta, q).expect("q < q_hat guarantees roots");
    EquilibriumSet {
        regime: Regime::Tripartite,
        s_g: Some(0.0),
        s_u: Some(s_u),
        s_b: Some(s_b),
        s_interior: None,
        q_hat: Some(qh),
        s_star,
    }
}

/// Total incidence of cheating counting scoundrels: `q + (1 - q) s_resp`.
pub fn total_cheating(params: &ModelParams, s_resp: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s_resp) {
        return Err(Error::Domain {
            field: "s_resp",
            value: s_resp,
            requirement: "value in [0, 1]",
        });
    }
    Ok(params.q() + (1.0 - params.q()) * s_resp)
}

/// Boundary `s_u` between the basin `[0, s_u)` of the good equilibrium and
/// the basin `(s_u, 1]` of the bad one; `None` when only one stable
/// equilibrium exists.
pub fn basin_boundary(params: &ModelParams) -> Option<f64> {
    let set = equilibrium_set(params);
    match set.regime {
        Regime::Tripartite | Regime::Boundary => set.s_u,
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(theta: f64, q: f64) -> ModelParams {
        ModelParams::new(theta, q).unwrap()
    }

    #[test]
    fn q_hat_landmarks() {
        assert_abs_diff_eq!(q_hat(1.0).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q_hat(1.5).unwrap(), 0.118146, epsilon = 1e-6);
        assert!(q_hat(1e6).unwrap() < 1e-3);
        assert!(q_hat(0.99).is_err());
    }

    #[test]
    fn q_hat_rationalized_form_matches_textbook_form() {
        for i in 0..=100 {
            let theta = 1.0 + (i as f64) * 0.99;
            let textbook = (4.0 * theta - 1.0 - 4.0 * (theta * (theta - 1.0)).sqrt())
                / (1.0 + 8.0 * theta);
            assert_abs_diff_eq!(q_hat(theta).unwrap(), textbook, epsilon = 1e-12);
        }
    }

    #[test]
    fn interior_roots_fig2_right_panel() {
        let (s_u, s_b) = interior_roots(&params(1.375, 0.1)).unwrap().unwrap();
        assert_abs_diff_eq!(s_u, 0.064155, epsilon = 1e-6);
        assert_abs_diff_eq!(s_b, 0.324734, epsilon = 1e-6);
    }

    #[test]
    fn interior_roots_absent_above_threshold() {
        assert!(interior_roots(&params(1.5, 0.2)).unwrap().is_none());
        assert!(interior_roots(&params(1.0, 0.1)).is_err());
    }

    #[test]
    fn interior_roots_small_q_limits() {
        let (s_u, s_b) = interior_roots(&params(2.0, 1e-9)).unwrap().unwrap();
        assert!(s_u > 0.0 && s_u < 1e-8);
        assert!(s_b > 0.499 && s_b < 0.5);
    }

    #[test]
    fn roots_satisfy_defining_equation() {
        for &(theta, q) in &[(1.375, 0.1), (2.0, 0.05), (1.5, 0.11), (3.0, 0.03)] {
            let p = params(theta, q);
            let (s_u, s_b) = interior_roots(&p).unwrap().unwrap();
            for root in [s_u, s_b] {
                let f = p.social_cost(root).unwrap();
                assert!(
                    (f - (1.0 - 2.0 * root)).abs() <= ROOT_RESIDUAL_TOL,
                    "residual too large at ({theta}, {q}), root {root}"
                );
            }
        }
    }

    #[test]
    fn unique_interior_root_fig2_left_panel() {
        let p = params(0.9, 0.1);
        let root = unique_interior_root(&p).unwrap();
        assert_abs_diff_eq!(root, 0.402685, epsilon = 1e-6);
        // Fixed point of the best-response map.
        assert_abs_diff_eq!(
            p.realized_cheating(root).unwrap(),
            root,
            epsilon = 1e-10
        );
        // Quadratic oracle: 1.8 s^2 - 0.7 s - 0.01 = 0.
        let res = 1.8 * root * root - 0.7 * root - 0.01;
        assert_abs_diff_eq!(res, 0.0, epsilon = 1e-12);
        assert!(unique_interior_root(&params(1.5, 0.1)).is_err());
    }

    #[test]
    fn unique_interior_root_continuous_near_theta_one() {
        let r1 = unique_interior_root(&params(1.0 - 1e-9, 0.1)).unwrap();
        let r2 = unique_interior_root(&params(1.0 - 2e-9, 0.1)).unwrap();
        assert_abs_diff_eq!(r1, r2, epsilon = 1e-8);
    }

    #[test]
    fn equilibrium_set_dispatch() {
        let trip = equilibrium_set(&params(1.375, 0.1));
        assert_eq!(trip.regime, Regime::Tripartite);
        assert_eq!(trip.s_g, Some(0.0));
        assert_abs_diff_eq!(trip.s_u.unwrap(), 0.064155, epsilon = 1e-6);
        assert_abs_diff_eq!(trip.s_b.unwrap(), 0.324734, epsilon = 1e-6);

        let good = equilibrium_set(&params(2.0, 0.3));
        assert_eq!(good.regime, Regime::GoodOnly);
        assert_abs_diff_eq!(good.q_hat.unwrap(), 0.079009, epsilon = 1e-6);
        assert!(good.s_u.is_none() && good.s_b.is_none());

        let interior = equilibrium_set(&params(0.9, 0.1));
        assert_eq!(interior.regime, Regime::UniqueInterior);
        assert!(interior.s_g.is_none());
        assert!(interior.q_hat.is_none());
    }

    #[test]
    fn equilibrium_set_boundary_coincident_root() {
        let qh = q_hat(1.5).unwrap();
        let set = equilibrium_set(&params(1.5, qh));
        assert_eq!(set.regime, Regime::Boundary);
        let root = set.s_u.unwrap();
        assert_eq!(set.s_b, Some(root));
        assert_abs_diff_eq!(root, 0.183012, epsilon = 1e-6);
    }

    #[test]
    fn equilibrium_set_theta_exactly_one() {
        // q > 1/3: good equilibrium only.
        let set = equilibrium_set(&params(1.0, 0.5));
        assert_eq!(set.regime, Regime::GoodOnly);
        // q < 1/3: the quadratic degenerates to s_u = 0 = s_g.
        let set = equilibrium_set(&params(1.0, 0.2));
        assert_eq!(set.regime, Regime::Tripartite);
        assert_abs_diff_eq!(set.s_u.unwrap(), 0.0, epsilon = 1e-12);
        let s_b = set.s_b.unwrap();
        assert_abs_diff_eq!(s_b, (1.0 - 0.6) / (2.0 * 0.8), epsilon = 1e-12);
    }

    #[test]
    fn total_cheating_values() {
        let p = params(1.5, 0.118146);
        assert_eq!(total_cheating(&p, 0.0).unwrap(), 0.118146);
        let qh = q_hat(1.5).unwrap();
        let pb = params(1.5, qh);
        let s_b = equilibrium_set(&pb).s_b.unwrap();
        assert_abs_diff_eq!(
            total_cheating(&pb, s_b).unwrap(),
            0.279536,
            epsilon = 1e-6
        );
        assert!(total_cheating(&p, 1.5).is_err());
    }

    #[test]
    fn basin_boundary_presence_and_monotonicity() {
        assert_abs_diff_eq!(
            basin_boundary(&params(1.375, 0.1)).unwrap(),
            0.064155,
            epsilon = 1e-6
        );
        assert!(basin_boundary(&params(2.0, 0.3)).is_none());
        // Prop: the boundary moves up with q.
        let lo = basin_boundary(&params(1.375, 0.1)).unwrap();
        let hi = basin_boundary(&params(1.375, 0.11)).unwrap();
        assert!(hi > lo);
    }
}
