//! Shared helpers for the integration suites: seeded parameter sampling and
//! the brute-force oracles the closed forms are checked against.

use rand::Rng;
use trustdyn::equilibria::q_hat;
use trustdyn::ModelParams;

/// Random parameters strictly inside the tripartite region.
pub fn random_tripartite(rng: &mut impl Rng) -> ModelParams {
    let theta = 1.05 + 1.95 * rng.gen::<f64>();
    let qh = q_hat(theta).unwrap();
    let q = qh * (0.05 + 0.9 * rng.gen::<f64>());
    ModelParams::new(theta, q).unwrap()
}

/// Dyadic invasion fraction in (0, 1/2): exactly representable together with
/// its complement, so relabeling identities hold bit-for-bit.
pub fn random_dyadic_lambda(rng: &mut impl Rng) -> f64 {
    let k = rng.gen_range(1..512u32);
    k as f64 / 1024.0
}

/// Fixed points of the best-response map located by scanning
/// `realized_cheating(s) - s` for exact zeros and sign changes on an
/// `n`-point grid. Returned values are accurate to about one grid cell.
pub fn fixed_point_scan(params: &ModelParams, n: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..n {
        let s = i as f64 / (n - 1) as f64;
        let g = params.realized_cheating(s).unwrap() - s;
        if g == 0.0 {
            roots.push(s);
        } else if let Some((s_prev, g_prev)) = prev {
            if g_prev != 0.0 && g_prev.signum() != g.signum() {
                roots.push(0.5 * (s_prev + s));
            }
        }
        prev = Some((s, g));
    }
    roots
}

/// Brute-force proposer problem: the payoff-maximizing offer over an
/// `n`-point grid on `[0, f(s) + 1)`.
pub fn grid_search_offer(params: &ModelParams, s: f64, n: usize) -> f64 {
    let upper = params.social_cost(s).unwrap() + 1.0;
    let mut best_x = 0.0;
    let mut best_payoff = f64::NEG_INFINITY;
    for i in 0..n {
        let x = upper * i as f64 / n as f64;
        let payoff = params.proposer_payoff(x, s).unwrap();
        if payoff > best_payoff {
            best_payoff = payoff;
            best_x = x;
        }
    }
    best_x
}
