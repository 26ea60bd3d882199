//! Bandwidth-coupled rate weights shared by the subflows of one connection.
//!
//! Each subflow i gets a weight
//!
//!   beta_i = bw_i * max_j(bw_j) / sum_j(bw_j^2)
//!
//! and a cruise gain alpha_i = (4*beta_i - 1) / 3, so that the mean of its
//! pacing-gain cycle {1.25, 0.75, alpha, alpha, alpha, alpha, alpha, alpha}
//! is exactly beta_i. Two identities follow and are enforced by tests:
//! sum_i(beta_i * bw_i) = max_j(bw_j), and beta_i / bw_i is the same for all
//! subflows with nonzero bandwidth. An alpha at or below zero means the
//! subflow cannot carry its share and falls back to four packets per RTT.

use super::dd::{two_prod, Dd};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledGains {
    pub beta: f64,
    pub alpha: f64,
    /// Best sibling bandwidth at computation time; a subflow in the
    /// non-positive-alpha fallback probes against a quarter of this so its
    /// own estimate can regrow to a share worth rejoining with.
    pub sibling_max_bps: f64,
}

impl CoupledGains {
    /// Gains of a lone subflow: full weight, conventional unity cruise gain.
    pub const SINGLE: CoupledGains = CoupledGains {
        beta: 1.0,
        alpha: 1.0,
        sibling_max_bps: 0.0,
    };
}

/// Computes (beta_i, alpha_i) for every entry of `bw`. Entries with zero
/// bandwidth get beta = 0 and the fallback alpha = -1/3; an all-zero vector
/// therefore sends every subflow to the fallback.
pub fn coupled_gains(bw: &[f64]) -> Vec<CoupledGains> {
    debug_assert!(bw.iter().all(|b| *b >= 0.0 && b.is_finite()));
    let max = bw.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return bw.iter().map(|_| gains_from_beta(0.0, 0.0)).collect();
    }
    let mut sum_sq = Dd::ZERO;
    for &b in bw {
        sum_sq = sum_sq.add(two_prod(b, b));
    }
    bw.iter()
        .map(|&b| {
            let beta = two_prod(b, max).div(sum_sq).to_f64();
            gains_from_beta(beta, max)
        })
        .collect()
}

fn gains_from_beta(beta: f64, sibling_max: f64) -> CoupledGains {
    // (4*beta - 1) / 3 in double-double, rounded once.
    let alpha = Dd::from(4.0 * beta)
        .add_f64(-1.0)
        .div(Dd::from(3.0))
        .to_f64();
    CoupledGains {
        beta,
        alpha,
        sibling_max_bps: sibling_max,
    }
}

/// Mean of the eight-slot gain cycle, (1.25 + 0.75 + 6*alpha) / 8, evaluated
/// in double-double and rounded once. Equals beta by construction.
pub fn mean_cycle_gain(alpha: f64) -> f64 {
    two_prod(6.0, alpha).add_f64(2.0).scale(0.125).to_f64()
}

/// sum_i(beta_i * bw_i) accumulated in double-double. Used by identity
/// checks; the simulator itself never needs the aggregate.
pub fn weighted_rate_sum(gains: &[CoupledGains], bw: &[f64]) -> f64 {
    let mut acc = Dd::ZERO;
    for (g, &b) in gains.iter().zip(bw) {
        acc = acc.add(two_prod(g.beta, b));
    }
    acc.to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cc::dd::ulp;

    #[test]
    fn symmetric_pair_splits_evenly() {
        let g = coupled_gains(&[100e6, 100e6]);
        assert_eq!(g[0].beta, 0.5);
        assert_eq!(g[1].beta, 0.5);
        assert_eq!(g[0].alpha, 1.0 / 3.0);
    }

    #[test]
    fn two_to_one_bandwidth() {
        // bw = [100, 50] Mbps: beta = [0.8, 0.4], alpha = [2.2/3, 0.2],
        // and sum(beta*bw) = 100 Mbps.
        let bw = [100e6, 50e6];
        let g = coupled_gains(&bw);
        assert!((g[0].beta - 0.8).abs() <= ulp(0.8));
        assert!((g[1].beta - 0.4).abs() <= ulp(0.4));
        assert!((g[0].alpha - 2.2 / 3.0).abs() <= ulp(1.0));
        assert!((g[1].alpha - 0.2).abs() <= ulp(0.2));
        assert!((weighted_rate_sum(&g, &bw) - 100e6).abs() <= ulp(100e6));
    }

    #[test]
    fn weak_subflow_falls_below_zero_alpha() {
        // bw = [100, 20]: beta_2 = 2000/10400 < 1/4, so alpha_2 < 0.
        let g = coupled_gains(&[100e6, 20e6]);
        let expect = 2000.0 / 10400.0;
        assert!((g[1].beta - expect).abs() <= ulp(expect));
        assert!(g[1].alpha < 0.0);
        assert!(g[0].alpha > 0.0);
    }

    #[test]
    fn single_subflow_reduces_to_unity() {
        let g = coupled_gains(&[37.5e6]);
        assert_eq!(g[0].beta, 1.0);
        assert_eq!(g[0].alpha, 1.0);
        assert_eq!(mean_cycle_gain(1.0), 1.0);
    }

    #[test]
    fn all_zero_vector_hits_fallback() {
        let g = coupled_gains(&[0.0, 0.0]);
        for gi in g {
            assert_eq!(gi.beta, 0.0);
            assert!(gi.alpha <= 0.0);
        }
    }

    #[test]
    fn mean_cycle_gain_matches_beta() {
        assert_eq!(mean_cycle_gain(1.0 / 3.0), 0.5);
        let g = coupled_gains(&[100e6, 50e6]);
        for gi in g {
            assert!((mean_cycle_gain(gi.alpha) - gi.beta).abs() <= ulp(1.0));
        }
    }

    #[test]
    fn beta_over_bw_is_constant() {
        let bw = [90e6, 40e6, 15e6];
        let g = coupled_gains(&bw);
        let k0 = g[0].beta / bw[0];
        for (gi, b) in g.iter().zip(&bw) {
            assert!((gi.beta / b - k0).abs() < 1e-18);
        }
    }
}
