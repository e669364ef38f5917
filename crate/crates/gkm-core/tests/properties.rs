//! Property tests for the allocation invariants.

mod common;

use gkm_core::channel::{rayleigh_cdf, rayleigh_quantile};
use gkm_core::gkm_auction::{market_power, proportional_allocation};
use gkm_core::lower_level::{allocate_fractions, valuation};
use proptest::prelude::*;

fn alpha_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..10.0, 1..=5)
}

proptest! {
    #[test]
    fn rayleigh_quantile_inverts_the_cdf(
        eps in 0.0f64..0.999,
        sigma in 0.05f64..50.0,
    ) {
        let q = rayleigh_quantile(eps, sigma).unwrap();
        let back = rayleigh_cdf(q, sigma);
        prop_assert!((back - eps).abs() <= 1e-12, "{back} vs {eps}");
    }

    #[test]
    fn proportional_allocation_conserves_and_orders(
        bids in prop::collection::vec(0.01f64..100.0, 2..8),
        total in 1.0f64..1e9,
    ) {
        let shares = proportional_allocation(&bids, total).unwrap();
        prop_assert_eq!(shares.iter().sum::<f64>(), total);
        prop_assert!(shares.iter().all(|&r| r >= 0.0));
        // Bidding more means getting more (up to the drift-polish ulp).
        let ulp = total * f64::EPSILON;
        for (i, &bi) in bids.iter().enumerate() {
            for (j, &bj) in bids.iter().enumerate() {
                if bi > bj {
                    prop_assert!(shares[i] >= shares[j] - 4.0 * ulp);
                }
            }
        }
    }

    #[test]
    fn raising_a_bid_strictly_raises_the_share(
        bids in prop::collection::vec(0.01f64..100.0, 2..8),
        total in 1.0f64..1e9,
        which in 0usize..8,
        factor in 1.01f64..10.0,
    ) {
        let which = which % bids.len();
        let before = proportional_allocation(&bids, total).unwrap();
        let mut raised = bids.clone();
        raised[which] *= factor;
        let after = proportional_allocation(&raised, total).unwrap();
        prop_assert!(after[which] > before[which]);
    }

    #[test]
    fn market_power_is_a_distribution(
        bids in prop::collection::vec(0.01f64..100.0, 1..8),
    ) {
        let mu = market_power(&bids).unwrap();
        prop_assert!((mu.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(mu.iter().all(|&m| (0.0..=1.0).contains(&m)));
    }

    #[test]
    fn water_filling_satisfies_complementary_slackness(
        alphas in alpha_vec(),
        r in 1.0f64..1e7,
    ) {
        let res = allocate_fractions(r, &alphas).unwrap();
        let x: Vec<f64> = res.allocations.iter().map(|a| a.fraction).collect();
        let total: f64 = x.iter().sum();
        prop_assert!(total <= 1.0 + 1e-9);
        let resid = common::slackness_residual(r, &alphas, &x, res.multiplier);
        prop_assert!(resid <= 1e-8, "slackness residual {resid}");
    }

    #[test]
    fn valuation_is_concave_in_bandwidth(
        alphas in alpha_vec(),
        r1 in 1.0f64..1e6,
        scale in 1.1f64..50.0,
        t in 0.01f64..0.99,
    ) {
        let r2 = r1 * scale;
        let mid = valuation(t * r1 + (1.0 - t) * r2, &alphas).unwrap();
        let chord = t * valuation(r1, &alphas).unwrap()
            + (1.0 - t) * valuation(r2, &alphas).unwrap();
        prop_assert!(mid >= chord - 1e-9);
    }

    #[test]
    fn closed_form_beats_any_feasible_point(
        alphas in alpha_vec(),
        r in 1.0f64..1e7,
        raw in prop::collection::vec(0.0f64..1.0, 1..=5),
    ) {
        let n = alphas.len();
        let mut x = vec![0.0; n];
        let sum: f64 = raw.iter().take(n).sum();
        if sum > 0.0 {
            for i in 0..n.min(raw.len()) {
                x[i] = raw[i] / sum.max(1.0);
            }
        }
        let feasible = common::lower_objective(r, &alphas, &x);
        let best = valuation(r, &alphas).unwrap();
        prop_assert!(best >= feasible - 1e-9 * feasible.abs().max(1.0));
    }
}
