//! Numerical experiments: minimum disrupting invasion sizes, the halfway
//! scoundrel fraction, and the parameter sweeps behind the headline curves.
//!
//! Invasion monotonicity (smaller invasions are assimilated whenever larger
//! ones are) makes the minimum disrupting size `lambda*` bisectable with the
//! integrator as the oracle. Everything here is deterministic: identical
//! inputs produce bit-identical records.

use std::io::{self, Write};

use serde::Serialize;

use crate::dynamics::{integrate, IntegratorConfig, LimitLabel, Preset};
use crate::equilibria::{equilibrium_set, interior_roots, q_hat, total_cheating, Regime};
use crate::error::{Error, Result};
use crate::fmt as numfmt;
use crate::model::ModelParams;

/// Smallest admissible bisection tolerance for `lambda*`. Tighter requests
/// would be dominated by integrator error near the threshold.
pub const MIN_LAMBDA_TOL: f64 = 1e-12;

/// Default `lambda*` bisection tolerance.
pub const DEFAULT_LAMBDA_TOL: f64 = 1e-12;

/// Inset applied to the `q` bracket endpoints in [`halfway_q`] so the
/// discriminant is never evaluated exactly at the fold.
pub const BRACKET_INSET: f64 = 1e-9;

/// Factor by which the horizon is stretched when a probe times out.
const RETRY_FACTOR: f64 = 10.0;

/// Result of a minimum-disrupting-invasion search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaStarResult {
    pub params: ModelParams,
    /// The threshold, or `None` when no invasion of size `<= 1/2` disrupts
    /// the good equilibrium.
    pub lambda_star: Option<f64>,
    /// Final bisection bracket `(lo, hi)` with `hi - lo <= tol` (degenerate
    /// when a probe converged to the unstable equilibrium, or when no
    /// threshold exists).
    pub bracket: (f64, f64),
    /// Every probed invasion size with its verdict, sorted by size.
    pub verdicts: Vec<(f64, LimitLabel)>,
}

/// Locates the minimum invasion size `lambda* in [0, 1/2]` that disrupts
/// the good equilibrium, by bisection over integrations from the invasion
/// preset (`s1(0) = 0`, `s0(0) = s_b`).
///
/// Requires the tripartite regime. Probes that hit the horizon are retried
/// once with a tenfold horizon before the search fails. A probe converging
/// to the unstable equilibrium is the threshold itself and short-circuits
/// the search.
pub fn lambda_star(
    params: &ModelParams,
    tol: f64,
    config: &IntegratorConfig,
) -> Result<LambdaStarResult> {
    if !tol.is_finite() || tol < MIN_LAMBDA_TOL {
        return Err(Error::Domain {
            field: "tol",
            value: tol,
            requirement: "tol >= 1e-12",
        });
    }
    let regime = equilibrium_set(params).regime;
    if regime != Regime::Tripartite {
        return Err(Error::Regime {
            required: "tripartite",
            found: regime,
        });
    }

    let mut verdicts: Vec<(f64, LimitLabel)> = Vec::new();
    let mut probe = |lambda: f64| -> Result<LimitLabel> {
        let label = probe_invasion(lambda, params, config)?;
        verdicts.push((lambda, label));
        Ok(label)
    };

    // The largest admissible invasion decides whether a threshold exists.
    if probe(0.5)? == LimitLabel::Good {
        verdicts.sort_by(|a, b| a.0.total_cmp(&b.0));
        return Ok(LambdaStarResult {
            params: *params,
            lambda_star: None,
            bracket: (0.5, 0.5),
            verdicts,
        });
    }
    // lambda = 0 leaves the good equilibrium at a rest point.
    probe(0.0)?;

    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    let mut pinned = None;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match probe(mid)? {
            LimitLabel::Good => lo = mid,
            LimitLabel::Bad => hi = mid,
            LimitLabel::Unstable => {
                // Exactly the threshold trajectory.
                pinned = Some(mid);
                lo = mid;
                hi = mid;
                break;
            }
            LimitLabel::MaxTimeExceeded => unreachable!("probe retries or errors"),
        }
    }
    verdicts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(LambdaStarResult {
        params: *params,
        lambda_star: Some(pinned.unwrap_or(0.5 * (lo + hi))),
        bracket: (lo, hi),
        verdicts,
    })
}

fn probe_invasion(
    lambda: f64,
    params: &ModelParams,
    config: &IntegratorConfig,
) -> Result<LimitLabel> {
    let initial = Preset::Invasion.initial_state(lambda, params)?;
    let run = integrate(&initial, params, config)?;
    if run.terminal.label != LimitLabel::MaxTimeExceeded {
        return Ok(run.terminal.label);
    }
    let retry_config = IntegratorConfig {
        t_max: config.t_max * RETRY_FACTOR,
        ..*config
    };
    let run = integrate(&initial, params, &retry_config)?;
    if run.terminal.label == LimitLabel::MaxTimeExceeded {
        return Err(Error::UnresolvedProbe {
            lambda,
            t_max: retry_config.t_max,
        });
    }
    Ok(run.terminal.label)
}

/// The scoundrel fraction at which the unstable equilibrium sits exactly
/// halfway between the good and bad equilibria (`s_u = s_b / 2`), located by
/// bisection on `(0, q_hat(theta))`.
///
/// The bracket is sound because `s_u - s_b/2` tends to `0 - 1/4 < 0` as
/// `q -> 0` and equals `+s_b/2 > 0` at the fold where the roots coincide.
/// `tol` bounds the residual `|s_u - s_b/2|` at the returned `q`.
pub fn halfway_q(theta: f64, tol: f64) -> Result<f64> {
    if !theta.is_finite() || theta <= 1.0 {
        return Err(Error::Domain {
            field: "theta",
            value: theta,
            requirement: "theta > 1",
        });
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Domain {
            field: "tol",
            value: tol,
            requirement: "tol > 0",
        });
    }
    let residual = |q: f64| -> Result<f64> {
        let params = ModelParams::new(theta, q)?;
        let (s_u, s_b) = interior_roots(&params)?
            .expect("bracket stays strictly inside (0, q_hat)");
        Ok(s_u - 0.5 * s_b)
    };
    let mut lo = BRACKET_INSET;
    let mut hi = q_hat(theta)? - BRACKET_INSET;
    if residual(lo)? >= 0.0 || residual(hi)? <= 0.0 {
        return Err(Error::BisectionFailed {
            what: "halfway_q",
            detail: "bracket endpoints do not straddle the root",
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid)?;
        if r.abs() <= tol {
            return Ok(mid);
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if lo >= hi {
            break;
        }
    }
    Err(Error::BisectionFailed {
        what: "halfway_q",
        detail: "residual tolerance not reached within the iteration budget",
    })
}

/// One row of the total-cheating sweep (the bad-equilibrium cheating curve).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheatingSweepRecord {
    pub q: f64,
    /// Bad-equilibrium responsive cheating; absent when only the good
    /// equilibrium exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_b: Option<f64>,
    /// `q + (1-q) s` at the prevailing equilibrium (`s = s_b` where it
    /// exists, else 0).
    pub total_cheating: f64,
    pub regime: Regime,
}

/// Total cheating in the worst surviving equilibrium, for each `q` on the
/// grid.
pub fn sweep_total_cheating(theta: f64, q_grid: &[f64]) -> Result<Vec<CheatingSweepRecord>> {
    if !theta.is_finite() || theta <= 1.0 {
        return Err(Error::Domain {
            field: "theta",
            value: theta,
            requirement: "theta > 1",
        });
    }
    q_grid
        .iter()
        .map(|&q| {
            let params = ModelParams::new(theta, q)?;
            let set = equilibrium_set(&params);
            let (s_b, s_resp) = match set.regime {
                Regime::Tripartite | Regime::Boundary => {
                    let s_b = set.s_b.expect("present");
                    (Some(s_b), s_b)
                }
                _ => (None, 0.0),
            };
            Ok(CheatingSweepRecord {
                q,
                s_b,
                total_cheating: total_cheating(&params, s_resp)?,
                regime: set.regime,
            })
        })
        .collect()
}

/// How the scoundrel fraction is chosen for each `theta` in a `lambda*`
/// sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum QMode {
    /// Use the same `q` everywhere; `theta` values whose regime is not
    /// tripartite produce flagged (empty) records.
    Fixed(f64),
    /// Solve `s_u = s_b / 2` for `q` at each `theta`.
    Halfway,
}

/// Outcome of one `lambda*` sweep record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepStatus {
    Ok,
    /// Skipped: parameters are outside the tripartite regime.
    SkippedRegime,
    /// A probe failed to resolve even after the horizon retry.
    ProbeFailed,
}

/// One row of a `lambda*` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaStarSweepRecord {
    pub theta: f64,
    pub q: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,
    /// Number of probes behind the record (0 when skipped).
    pub verdict_count: usize,
    #[serde(skip)]
    pub status: SweepStatus,
}

/// Computes `lambda*` for every `theta` on the grid, with `q` chosen per
/// [`QMode`]. Per-record failures are flagged in the record, never raised.
///
/// Records are independent, so with `jobs > 1` they are computed on a
/// bounded worker pool; results are reassembled in input order either way.
pub fn sweep_lambda_star(
    theta_grid: &[f64],
    q_mode: QMode,
    tol: f64,
    delta: f64,
    config: &IntegratorConfig,
    jobs: usize,
) -> Result<Vec<LambdaStarSweepRecord>> {
    for &theta in theta_grid {
        if !theta.is_finite() || theta <= 1.0 {
            return Err(Error::Domain {
                field: "theta_grid",
                value: theta,
                requirement: "every theta > 1",
            });
        }
    }
    if jobs == 0 {
        return Err(Error::Domain {
            field: "jobs",
            value: 0.0,
            requirement: "jobs >= 1",
        });
    }

    let one = |&theta: &f64| -> LambdaStarSweepRecord {
        lambda_star_record(theta, q_mode, tol, delta, config)
    };

    if jobs == 1 || theta_grid.len() <= 1 {
        return Ok(theta_grid.iter().map(one).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("worker pool");
    Ok(pool.install(|| {
        use rayon::prelude::*;
        theta_grid.par_iter().map(one).collect()
    }))
}

fn lambda_star_record(
    theta: f64,
    q_mode: QMode,
    tol: f64,
    delta: f64,
    config: &IntegratorConfig,
) -> LambdaStarSweepRecord {
    let q = match q_mode {
        QMode::Fixed(q) => q,
        QMode::Halfway => match halfway_q(theta, tol.max(MIN_LAMBDA_TOL)) {
            Ok(q) => q,
            Err(_) => {
                return LambdaStarSweepRecord {
                    theta,
                    q: f64::NAN,
                    lambda_star: None,
                    verdict_count: 0,
                    status: SweepStatus::ProbeFailed,
                }
            }
        },
    };
    let params = match ModelParams::with_delta(theta, q, delta) {
        Ok(p) => p,
        Err(_) => {
            return LambdaStarSweepRecord {
                theta,
                q,
                lambda_star: None,
                verdict_count: 0,
                status: SweepStatus::SkippedRegime,
            }
        }
    };
    match lambda_star(&params, tol, config) {
        Ok(result) => LambdaStarSweepRecord {
            theta,
            q,
            lambda_star: result.lambda_star,
            verdict_count: result.verdicts.len(),
            status: SweepStatus::Ok,
        },
        Err(Error::Regime { .. }) => LambdaStarSweepRecord {
            theta,
            q,
            lambda_star: None,
            verdict_count: 0,
            status: SweepStatus::SkippedRegime,
        },
        Err(_) => LambdaStarSweepRecord {
            theta,
            q,
            lambda_star: None,
            verdict_count: 0,
            status: SweepStatus::ProbeFailed,
        },
    }
}

/// CSV with header `q,s_b,total_cheating,regime`.
pub fn write_cheating_csv<W: Write>(
    records: &[CheatingSweepRecord],
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "q,s_b,total_cheating,regime")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{}",
            numfmt::machine(r.q),
            numfmt::machine_opt(r.s_b),
            numfmt::machine(r.total_cheating),
            r.regime
        )?;
    }
    Ok(())
}

/// CSV with header `theta,q,lambda_star,verdict_count`.
pub fn write_lambda_star_csv<W: Write>(
    records: &[LambdaStarSweepRecord],
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "theta,q,lambda_star,verdict_count")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{}",
            numfmt::machine(r.theta),
            numfmt::machine(r.q),
            numfmt::machine_opt(r.lambda_star),
            r.verdict_count
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(theta: f64, q: f64) -> ModelParams {
        ModelParams::new(theta, q).unwrap()
    }

    #[test]
    fn lambda_star_requires_tripartite_and_sane_tol() {
        let config = IntegratorConfig::for_delta(1.0);
        assert!(matches!(
            lambda_star(&params(2.0, 0.3), 1e-9, &config),
            Err(Error::Regime { .. })
        ));
        assert!(matches!(
            lambda_star(&params(2.0, 0.05), 1e-13, &config),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn lambda_star_fig7_left_parameters() {
        let config = IntegratorConfig::for_delta(1.0);
        let result = lambda_star(&params(2.0, 0.05), 1e-6, &config).unwrap();
        let ls = result.lambda_star.expect("threshold exists");
        // Disruption is observed at lambda = 0.118.
        assert!(ls <= 0.118, "lambda* = {ls}");
        assert!(ls > 0.1);
        assert!(result.bracket.1 - result.bracket.0 <= 1e-6);
        // Verdict map is monotone: no Good above a Bad.
        let mut seen_bad = false;
        for (_, label) in &result.verdicts {
            match label {
                LimitLabel::Bad => seen_bad = true,
                LimitLabel::Good => assert!(!seen_bad, "Good probe above a Bad probe"),
                _ => {}
            }
        }
    }

    #[test]
    fn lambda_star_near_threshold_q_verifies_continuous_value() {
        // Near-threshold parameter point: the continuous-time system puts
        // the threshold a hair above 0.2 (verified independently against
        // the reduced single-perception form of the same dynamic).
        let config = IntegratorConfig::for_delta(1.0);
        let result = lambda_star(&params(2.0, 0.0634), 1e-6, &config).unwrap();
        let ls = result.lambda_star.expect("threshold exists");
        assert_abs_diff_eq!(ls, 0.202163, epsilon = 5e-4);
    }

    #[test]
    fn lambda_star_near_the_fold_is_well_defined() {
        // Close to q_hat(1.5) = 0.118146 the interior roots nearly merge;
        // the search still yields either a threshold in (0, 1/2] or none,
        // with a monotone verdict map.
        let config = IntegratorConfig::for_delta(1.0);
        let result = lambda_star(&params(1.5, 0.115), 1e-4, &config).unwrap();
        if let Some(ls) = result.lambda_star {
            assert!(ls > 0.0 && ls <= 0.5);
        }
        let mut seen_bad = false;
        for (_, label) in &result.verdicts {
            match label {
                LimitLabel::Bad => seen_bad = true,
                LimitLabel::Good => assert!(!seen_bad),
                _ => {}
            }
        }
    }

    #[test]
    fn halfway_q_matches_closed_form() {
        // s_u = s_b/2 reduces to 9 theta q^2 - (9 theta - 3) q + 1 = 0,
        // whose relevant root is the smaller one.
        for theta in [1.2f64, 1.5, 2.0, 3.0] {
            let b = 9.0 * theta - 3.0;
            let expected = (b - (b * b - 36.0 * theta).sqrt()) / (18.0 * theta);
            let got = halfway_q(theta, 1e-12).unwrap();
            assert_abs_diff_eq!(got, expected, epsilon = 1e-9);
        }
        // Two of the roots are rational: 1/6 at theta = 1.2, 1/9 at 1.5.
        assert_abs_diff_eq!(halfway_q(1.2, 1e-12).unwrap(), 1.0 / 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(halfway_q(1.5, 1e-12).unwrap(), 1.0 / 9.0, epsilon = 1e-9);
    }

    #[test]
    fn halfway_q_residual_and_interval() {
        let theta = 2.0;
        let q = halfway_q(theta, 1e-12).unwrap();
        let qh = q_hat(theta).unwrap();
        assert!(q > 0.0 && q < qh);
        let (s_u, s_b) = interior_roots(&params(theta, q)).unwrap().unwrap();
        assert!((s_u - 0.5 * s_b).abs() <= 1e-12);
        assert!(halfway_q(1.0, 1e-12).is_err());
        assert!(halfway_q(0.9, 1e-12).is_err());
    }

    #[test]
    fn halfway_q_bracket_signs() {
        let theta = 2.0;
        let qh = q_hat(theta).unwrap();
        let g = |q: f64| {
            let (s_u, s_b) = interior_roots(&params(theta, q)).unwrap().unwrap();
            s_u - 0.5 * s_b
        };
        assert!(g(1e-6) < 0.0);
        assert!(g(qh - 1e-9) > 0.0);
    }

    #[test]
    fn sweep_total_cheating_spans_the_fold() {
        let theta = 1.5;
        let qh = q_hat(theta).unwrap();
        let grid = [1e-6, 0.05, qh - 1e-6, qh + 1e-6, 0.3];
        let records = sweep_total_cheating(theta, &grid).unwrap();
        assert_eq!(records.len(), 5);
        assert_abs_diff_eq!(records[0].total_cheating, 0.5, epsilon = 1e-3);
        assert_eq!(records[0].regime, Regime::Tripartite);
        assert!(records[2].s_b.is_some());
        assert_eq!(records[3].regime, Regime::GoodOnly);
        assert!(records[3].s_b.is_none());
        assert_abs_diff_eq!(records[3].total_cheating, qh + 1e-6, epsilon = 1e-15);
        assert!(sweep_total_cheating(1.0, &grid).is_err());
    }

    #[test]
    fn sweep_lambda_star_flags_non_tripartite_records() {
        let config = IntegratorConfig::for_delta(1.0);
        let records = sweep_lambda_star(
            &[1.5, 2.0],
            QMode::Fixed(0.09),
            1e-3,
            1.0,
            &config,
            1,
        )
        .unwrap();
        // q = 0.09 < q_hat(1.5) but > q_hat(2.0) = 0.079.
        assert_eq!(records[0].status, SweepStatus::Ok);
        assert!(records[0].verdict_count > 0);
        assert_eq!(records[1].status, SweepStatus::SkippedRegime);
        assert_eq!(records[1].lambda_star, None);
        assert_eq!(records[1].verdict_count, 0);
    }

    #[test]
    fn sweep_lambda_star_parallel_matches_sequential() {
        let config = IntegratorConfig::for_delta(1.0);
        let grid = [1.3, 1.6, 2.0];
        let seq =
            sweep_lambda_star(&grid, QMode::Halfway, 1e-4, 1.0, &config, 1).unwrap();
        let par =
            sweep_lambda_star(&grid, QMode::Halfway, 1e-4, 1.0, &config, 3).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn csv_writers_emit_pinned_headers() {
        let records = sweep_total_cheating(1.5, &[0.05, 0.2]).unwrap();
        let mut buf = Vec::new();
        write_cheating_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("q,s_b,total_cheating,regime\n"));
        // GoodOnly rows leave the s_b field empty.
        assert!(text.lines().nth(2).unwrap().contains(",,"));

        let record = LambdaStarSweepRecord {
            theta: 2.0,
            q: 0.05,
            lambda_star: None,
            verdict_count: 1,
            status: SweepStatus::Ok,
        };
        let mut buf = Vec::new();
        write_lambda_star_csv(&[record], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("theta,q,lambda_star,verdict_count\n"));
        assert!(text.lines().nth(1).unwrap().ends_with(",,1"));
    }

    #[test]
    fn probe_retry_is_wired_through() {
        // A horizon far too short forces the retry; with tenfold stretch the
        // probe still cannot resolve and the search reports the failure.
        let config = IntegratorConfig {
            step: 0.01,
            t_max: 0.05,
            tol: 1e-10,
            n_hold: 10,
            stride: 10,
        };
        let err = lambda_star(&params(2.0, 0.05), 1e-3, &config);
        assert!(matches!(err, Err(Error::UnresolvedProbe { .. })));
    }
}
