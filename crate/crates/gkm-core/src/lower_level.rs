//! User-level bandwidth allocation inside one operator's slice.
//!
//! Given a bandwidth share `r` and per-user spectral efficiencies `alpha`,
//! the operator solves
//!
//! ```text
//! maximize   sum_s ln(x_s * r * alpha_s + 1)
//! subject to sum_s x_s <= 1,   x_s >= 0
//! ```
//!
//! The maximizer has a water-filling closed form: with active set `A`,
//!
//! ```text
//! 1/lambda = (r + sum_{A} 1/alpha_s) / |A|,
//! x_s      = (1/lambda - 1/alpha_s) / r,
//! ```
//!
//! and users whose closed-form share goes negative are pinned to zero with
//! `lambda` recomputed over the rest, repeated to a fixed point. The optimal
//! value `v(r)` (natural log) is the operator's valuation in the upper-level
//! auction, and by the envelope theorem its derivative `v'(r)` equals the
//! multiplier `lambda`, which is what the best-response bids consume.

use serde::{Deserialize, Serialize};

use crate::channel::{outage_spectral_efficiency, UserChannel};
use crate::error::{Error, Result};

/// One user's share of its operator's bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserAllocation {
    /// Fraction of the operator's bandwidth, in `[0, 1]`.
    pub fraction: f64,
    /// Resulting rate `fraction * r * alpha` (bits/s).
    pub rate: f64,
    /// The user's spectral efficiency (bits/s/Hz).
    pub alpha: f64,
}

/// Result of the user-level optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerLevelResult {
    pub allocations: Vec<UserAllocation>,
    /// Optimal objective value `sum ln(rate + 1)` (nats).
    pub valuation: f64,
    /// Dual price of the bandwidth budget; equals `v'(r)`.
    pub multiplier: f64,
}

impl LowerLevelResult {
    /// Total user rate delivered by this allocation (bits/s).
    pub fn total_rate(&self) -> f64 {
        self.allocations.iter().map(|a| a.rate).sum()
    }

    fn degenerate(alphas: &[f64]) -> Self {
        LowerLevelResult {
            allocations: alphas
                .iter()
                .map(|&alpha| UserAllocation {
                    fraction: 0.0,
                    rate: 0.0,
                    alpha,
                })
                .collect(),
            valuation: 0.0,
            multiplier: 0.0,
        }
    }
}

fn check_inputs(r: f64, alphas: &[f64]) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::domain("bandwidth share must be nonnegative and finite"));
    }
    if alphas.is_empty() {
        return Err(Error::domain("operator has no users"));
    }
    if alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(Error::domain("spectral efficiencies must be nonnegative and finite"));
    }
    Ok(())
}

/// Optimal per-user fractions of a bandwidth share `r`.
///
/// With `r = 0` or all-zero efficiencies the problem is degenerate and every
/// fraction is zero (valuation 0); otherwise the fractions sum to one.
pub fn allocate_fractions(r: f64, alphas: &[f64]) -> Result<LowerLevelResult> {
    check_inputs(r, alphas)?;

    // Users with zero efficiency can never contribute; keep them out of the
    // water level.
    let mut active: Vec<usize> = (0..alphas.len())
        .filter(|&s| alphas[s] > 0.0 && alphas[s].recip().is_finite())
        .collect();
    if r == 0.0 || active.is_empty() {
        return Ok(LowerLevelResult::degenerate(alphas));
    }

    let mut fractions = vec![0.0; alphas.len()];
    let mut multiplier;
    loop {
        let inv_sum: f64 = active.iter().map(|&s| alphas[s].recip()).sum();
        let inv_lambda = (r + inv_sum) / active.len() as f64;
        multiplier = inv_lambda.recip();

        let mut any_negative = false;
        for &s in &active {
            let x = (inv_lambda - alphas[s].recip()) / r;
            if x < 0.0 {
                any_negative = true;
            }
            fractions[s] = x;
        }
        if !any_negative {
            break;
        }
        for &s in &active {
            if fractions[s] < 0.0 {
                fractions[s] = 0.0;
            }
        }
        active.retain(|&s| fractions[s] > 0.0);
        if active.is_empty() {
            return Ok(LowerLevelResult::degenerate(alphas));
        }
    }

    let allocations: Vec<UserAllocation> = alphas
        .iter()
        .zip(&fractions)
        .map(|(&alpha, &fraction)| UserAllocation {
            fraction,
            rate: fraction * r * alpha,
            alpha,
        })
        .collect();
    let valuation = allocations.iter().map(|a| (a.rate + 1.0).ln()).sum();
    Ok(LowerLevelResult {
        allocations,
        valuation,
        multiplier,
    })
}

/// Optimal objective value `v(r)` of the user-level problem (nats).
pub fn valuation(r: f64, alphas: &[f64]) -> Result<f64> {
    Ok(allocate_fractions(r, alphas)?.valuation)
}

/// Marginal valuation `v'(r)`, via the envelope theorem.
///
/// Evaluates `sum_s x_s alpha_s / (x_s r alpha_s + 1)` at the optimal
/// fractions, which collapses to the dual multiplier. Strictly positive when
/// any user has positive efficiency, and nonincreasing in `r`.
pub fn marginal_valuation(r: f64, alphas: &[f64]) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::domain("marginal valuation requires r > 0"));
    }
    let res = allocate_fractions(r, alphas)?;
    Ok(res
        .allocations
        .iter()
        .map(|a| a.fraction * a.alpha / (a.rate + 1.0))
        .sum())
}

/// Same optimization with the deterministic efficiencies replaced by the
/// outage-constrained effective rates at threshold `epsilon`.
pub fn allocate_fractions_outage(
    r: f64,
    users: &[UserChannel],
    epsilon: f64,
) -> Result<LowerLevelResult> {
    let alphas = users
        .iter()
        .map(|u| outage_spectral_efficiency(u, epsilon))
        .collect::<Result<Vec<f64>>>()?;
    allocate_fractions(r, &alphas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetric_users_split_equally() {
        let res = allocate_fractions(1e6, &[2.0, 2.0, 2.0, 2.0]).unwrap();
        for a in &res.allocations {
            assert_relative_eq!(a.fraction, 0.25, max_relative = 1e-12);
        }
        let total: f64 = res.allocations.iter().map(|a| a.fraction).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    /// Brute-force maximizer over a 1e-3 grid for two users.
    fn grid_best(r: f64, alphas: &[f64; 2]) -> ([f64; 2], f64) {
        let mut best = ([0.0, 0.0], f64::NEG_INFINITY);
        for i in 0..=1000 {
            let x1 = i as f64 / 1000.0;
            let x2 = 1.0 - x1;
            let v = (x1 * r * alphas[0] + 1.0).ln() + (x2 * r * alphas[1] + 1.0).ln();
            if v > best.1 {
                best = ([x1, x2], v);
            }
        }
        best
    }

    #[test]
    fn asymmetric_pair_matches_grid_search() {
        let r = 1e6;
        let alphas = [4.0, 1.0];
        let res = allocate_fractions(r, &alphas).unwrap();
        let (gx, gv) = grid_best(r, &alphas);
        for (a, g) in res.allocations.iter().zip(gx) {
            assert!((a.fraction - g).abs() <= 1e-3, "{} vs {}", a.fraction, g);
        }
        assert_relative_eq!(res.valuation, gv, max_relative = 1e-6);
    }

    #[test]
    fn weak_user_is_pinned_to_zero() {
        let res = allocate_fractions(10.0, &[10.0, 0.001]).unwrap();
        assert_relative_eq!(res.allocations[0].fraction, 1.0, max_relative = 1e-12);
        assert_eq!(res.allocations[1].fraction, 0.0);
        // The pinned user's marginal utility at zero sits below the water
        // level, so pinning satisfies the optimality conditions.
        assert!(0.001 <= res.multiplier + 1e-12);
    }

    #[test]
    fn zero_bandwidth_and_zero_efficiency_are_degenerate() {
        let res = allocate_fractions(0.0, &[3.0, 1.0]).unwrap();
        assert_eq!(res.valuation, 0.0);
        let res = allocate_fractions(1e6, &[0.0, 0.0]).unwrap();
        assert_eq!(res.valuation, 0.0);
        assert!(res.allocations.iter().all(|a| a.fraction == 0.0));
    }

    #[test]
    fn invalid_inputs_are_domain_errors() {
        assert!(matches!(allocate_fractions(-1.0, &[1.0]), Err(Error::Domain(_))));
        assert!(matches!(allocate_fractions(1.0, &[]), Err(Error::Domain(_))));
        assert!(matches!(allocate_fractions(1.0, &[-0.5]), Err(Error::Domain(_))));
        assert!(matches!(marginal_valuation(0.0, &[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn single_user_valuation_and_marginal() {
        let v = valuation(1e6, &[2.0]).unwrap();
        assert_relative_eq!(v, (2e6f64 + 1.0).ln(), max_relative = 1e-12);
        assert_relative_eq!(v, 14.509, epsilon = 1e-3);

        let m = marginal_valuation(1e6, &[2.0]).unwrap();
        assert_relative_eq!(m, 2.0 / (2e6 + 1.0), max_relative = 1e-9);
    }

    #[test]
    fn valuation_zero_at_origin() {
        assert_eq!(valuation(0.0, &[1.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn marginal_matches_finite_differences_on_symmetric_instance() {
        let alphas = [3.0, 3.0, 3.0, 3.0];
        for r in [1e3, 1e4, 1e5, 1e6, 1e7] {
            let h = 1e-4 * r;
            let fd = (valuation(r + h, &alphas).unwrap() - valuation(r - h, &alphas).unwrap())
                / (2.0 * h);
            let an = marginal_valuation(r, &alphas).unwrap();
            assert_relative_eq!(an, fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn marginal_nonincreasing_in_r() {
        let alphas = [5.0, 2.0, 0.5];
        let mut prev = f64::INFINITY;
        let mut r = 10.0;
        while r <= 1e7 {
            let m = marginal_valuation(r, &alphas).unwrap();
            assert!(m <= prev * (1.0 + 1e-12), "marginal grew at r={r}");
            assert!(m > 0.0);
            prev = m;
            r *= 2.0;
        }
    }

    #[test]
    fn valuation_concave_in_r() {
        let alphas = [4.0, 1.5, 0.8];
        let pairs = [(1e3, 5e5), (2.0, 1e4), (1e5, 9e6)];
        for (r1, r2) in pairs {
            for t in [0.2, 0.5, 0.8] {
                let mid = valuation(t * r1 + (1.0 - t) * r2, &alphas).unwrap();
                let chord = t * valuation(r1, &alphas).unwrap()
                    + (1.0 - t) * valuation(r2, &alphas).unwrap();
                assert!(mid >= chord - 1e-9, "concavity violated at t={t}");
            }
        }
    }

    #[test]
    fn outage_variant_composes_with_effective_rates() {
        let users = [
            UserChannel::new(100.0, 1.0, 1.0, 1.0, 1.0).unwrap(),
            UserChannel::new(200.0, 1.0, 2.0, 1.0, 1.0).unwrap(),
        ];
        let eps = 0.5;
        let nus: Vec<f64> = users
            .iter()
            .map(|u| outage_spectral_efficiency(u, eps).unwrap())
            .collect();
        let direct = allocate_fractions_outage(1e6, &users, eps).unwrap();
        let composed = allocate_fractions(1e6, &nus).unwrap();
        assert_eq!(direct, composed);
    }

    #[test]
    fn outage_with_zero_epsilon_is_degenerate() {
        let users = [UserChannel::new(100.0, 1.0, 1.0, 1.0, 1.0).unwrap()];
        let res = allocate_fractions_outage(1e5, &users, 0.0).unwrap();
        assert_eq!(res.valuation, 0.0);
    }

    #[test]
    fn outage_identical_users_split_equally() {
        let u = UserChannel::new(150.0, 1.0, 1.5, 1.0, 2.0).unwrap();
        let res = allocate_fractions_outage(1e6, &[u, u, u], 0.3).unwrap();
        for a in &res.allocations {
            assert_relative_eq!(a.fraction, 1.0 / 3.0, max_relative = 1e-12);
        }
    }
}
