//! Comparison mechanisms and the exact-welfare oracle.
//!
//! - Equal sharing: the provider splits the pool evenly.
//! - Classic proportional-share auction: unit penalties, no penalty control,
//!   bidders still anticipate their price impact (the efficiency loss the
//!   penalty mechanism exists to remove).
//! - Its price-taking variant, which is welfare-optimal by the classic
//!   efficiency result and doubles as a cross-check of the oracle.
//! - The welfare optimum itself, solved by bisecting the common marginal
//!   value: each operator's marginal valuation is piecewise-hyperbolic and
//!   strictly decreasing, so it inverts in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gkm_auction::{run_with_options, AuctionTrace, EngineOptions, GkmConfig};
use crate::instance::SliceInstance;
use crate::lower_level::valuation;

/// Outcome of one mechanism on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutcome {
    pub mechanism: String,
    /// Bandwidth per operator (Hz).
    pub allocations: Vec<f64>,
    /// Valuation per operator (nats).
    pub valuations: Vec<f64>,
    /// Sum of valuations.
    pub welfare: f64,
    /// Hash of the scenario the instance was drawn from, for pairing checks.
    pub scenario_hash: String,
}

impl MechanismOutcome {
    pub fn from_allocations(
        mechanism: impl Into<String>,
        instance: &SliceInstance,
        allocations: Vec<f64>,
        scenario_hash: impl Into<String>,
    ) -> Result<Self> {
        let valuations = instance
            .mvnos
            .iter()
            .zip(&allocations)
            .map(|(mv, &r)| valuation(r, &mv.alphas))
            .collect::<Result<Vec<f64>>>()?;
        let welfare = valuations.iter().sum();
        Ok(MechanismOutcome {
            mechanism: mechanism.into(),
            allocations,
            valuations,
            welfare,
            scenario_hash: scenario_hash.into(),
        })
    }
}

/// Even split of the pool.
pub fn equal_share(total: f64, operators: usize) -> Result<Vec<f64>> {
    if operators == 0 {
        return Err(Error::domain("equal sharing needs at least one operator"));
    }
    if !(total > 0.0) {
        return Err(Error::domain("capacity must be positive"));
    }
    Ok(vec![total / operators as f64; operators])
}

/// Proportional-share auction with unit penalties and price-anticipating
/// bidders.
pub fn kelly_auction(instance: &SliceInstance, config: &GkmConfig) -> Result<AuctionTrace> {
    run_with_options(instance, config, EngineOptions::KELLY)
}

/// Unit-penalty auction with market power forced to zero. Converges to the
/// welfare optimum.
pub fn kelly_price_taking(instance: &SliceInstance, config: &GkmConfig) -> Result<AuctionTrace> {
    run_with_options(instance, config, EngineOptions::KELLY_PRICE_TAKING)
}

/// Closed-form inverse of one operator's marginal valuation at level `rho`:
/// the bandwidth at which its marginal value drops to `rho`.
fn invert_marginal(alphas: &[f64], rho: f64) -> f64 {
    // Users participate exactly when their efficiency exceeds the level.
    let mut count = 0usize;
    let mut inv_sum = 0.0;
    for &a in alphas {
        if a > rho {
            count += 1;
            inv_sum += a.recip();
        }
    }
    if count == 0 {
        return 0.0;
    }
    (count as f64 / rho - inv_sum).max(0.0)
}

/// Welfare-maximizing division of the pool.
///
/// Bisects the common marginal value `rho`: per operator the demanded
/// bandwidth at `rho` has a closed form, the total demand is continuous and
/// strictly decreasing, and the optimum is where demand meets capacity
/// (within `1e-6 * R`).
pub fn optimal_welfare(
    instance: &SliceInstance,
    scenario_hash: impl Into<String>,
) -> Result<MechanismOutcome> {
    let total = instance.bandwidth;
    if instance.mvnos.is_empty() {
        return Err(Error::domain("no operators"));
    }
    let alpha_max = instance
        .mvnos
        .iter()
        .flat_map(|m| m.alphas.iter().copied())
        .fold(0.0f64, f64::max);
    if alpha_max == 0.0 {
        // Nobody values bandwidth; any feasible split is optimal.
        let allocations = equal_share(total, instance.mvno_count())?;
        return MechanismOutcome::from_allocations("optimal", instance, allocations, scenario_hash);
    }

    let demand = |rho: f64| -> f64 {
        instance
            .mvnos
            .iter()
            .map(|m| invert_marginal(&m.alphas, rho))
            .sum()
    };

    // Bracket: demand vanishes at the best efficiency and exceeds the pool
    // for small enough levels.
    let mut hi = alpha_max;
    let mut lo = alpha_max;
    let mut steps = 0;
    while demand(lo) <= total {
        lo *= 0.5;
        steps += 1;
        if steps > 2000 {
            return Err(Error::numerical(format!(
                "no marginal level with demand above the pool (R={total}, alpha_max={alpha_max})"
            )));
        }
    }

    // Demand is closed-form, so drive the bisection well past the required
    // 1e-6 * R feasibility bound.
    let tol = 1e-12 * total;
    let mut rho = 0.5 * (lo + hi);
    for _ in 0..500 {
        rho = 0.5 * (lo + hi);
        let d = demand(rho);
        if (d - total).abs() <= tol {
            break;
        }
        if d > total {
            lo = rho;
        } else {
            hi = rho;
        }
    }
    let allocations: Vec<f64> = instance
        .mvnos
        .iter()
        .map(|m| invert_marginal(&m.alphas, rho))
        .collect();
    if (allocations.iter().sum::<f64>() - total).abs() > 1e-6 * total {
        return Err(Error::numerical(format!(
            "marginal-level bisection stalled: demand {} vs pool {}",
            allocations.iter().sum::<f64>(),
            total
        )));
    }
    MechanismOutcome::from_allocations("optimal", instance, allocations, scenario_hash)
}

/// Side-by-side comparison of mechanism outcomes on one instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub mechanism: String,
    pub welfare: f64,
    pub valuations: Vec<f64>,
    /// `(W_opt - W) / W_opt`, when an optimal outcome is present.
    pub gap_to_optimal: Option<f64>,
    /// `(W_gkm - W) / W`, when a gkm outcome is present.
    pub gkm_gain_over: Option<f64>,
}

/// Build the comparison table. All outcomes must come from the same
/// scenario.
pub fn efficiency_report(outcomes: &[MechanismOutcome]) -> Result<Vec<EfficiencyRow>> {
    if outcomes.is_empty() {
        return Err(Error::domain("no outcomes to compare"));
    }
    let hash = &outcomes[0].scenario_hash;
    if outcomes.iter().any(|o| &o.scenario_hash != hash) {
        return Err(Error::domain("outcomes come from different scenarios"));
    }
    let optimal = outcomes.iter().find(|o| o.mechanism == "optimal");
    let gkm = outcomes.iter().find(|o| o.mechanism == "gkm");
    Ok(outcomes
        .iter()
        .map(|o| EfficiencyRow {
            mechanism: o.mechanism.clone(),
            welfare: o.welfare,
            valuations: o.valuations.clone(),
            gap_to_optimal: optimal.map(|opt| (opt.welfare - o.welfare) / opt.welfare),
            gkm_gain_over: gkm.map(|g| (g.welfare - o.welfare) / o.welfare),
        })
        .collect())
}
