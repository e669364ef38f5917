//! Upper-level bandwidth auction between the infrastructure provider and the
//! operators.
//!
//! Each round the provider quotes a per-bid penalty, operators submit
//! best-response bids, and the pool is split proportionally to the bids. The
//! penalty update steers the fixed point to the allocation where marginal
//! valuations equalize, i.e. the welfare optimum, while the provider never
//! observes a valuation directly:
//!
//! 1. each operator gauges its market power from the previous round,
//! 2. the provider refreshes penalties from the previous allocations,
//! 3. operators bid `b = r * v'(r) * (1 - mu) / q`,
//! 4. the provider posts the clearing price `beta = sum(b) / R` and
//!    allocates `r_m = b_m / beta`,
//! 5. operators re-solve their user-level problems for the new shares.
//!
//! Rounds use the previous round's aggregates throughout (one synchronous
//! sweep), so the trace is independent of operator ordering. The penalty
//! update conserves the penalty total, which makes the total's initial scale
//! part of the mechanism: it must match the pool size `R` for the update to
//! realize its fixed-point relation; see [`GkmConfig::q_init`].

use serde::{Deserialize, Serialize};

use crate::channel::UserChannel;
use crate::error::{Error, Result};
use crate::instance::SliceInstance;
use crate::lower_level::{marginal_valuation, valuation};

/// State of one bidding operator at a point of the auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvnoState {
    /// Current bid (currency).
    pub bid: f64,
    /// Per-bid penalty quoted by the provider.
    pub penalty: f64,
    /// Market influence power in `[0, 1)`.
    pub market_power: f64,
    /// Bandwidth currently allocated (Hz).
    pub allocation: f64,
    /// Valuation of the current allocation (nats).
    pub valuation: f64,
    /// The operator's user channels.
    pub users: Vec<UserChannel>,
}

impl MvnoState {
    /// Per-operator states at the end of a run.
    pub fn from_trace(trace: &AuctionTrace, instance: &SliceInstance) -> Result<Vec<MvnoState>> {
        let last = trace.last();
        let shares = market_power(&last.bids)?;
        Ok((0..instance.mvno_count())
            .map(|m| MvnoState {
                bid: last.bids[m],
                penalty: last.penalties[m],
                market_power: shares[m],
                allocation: last.allocations[m],
                valuation: last.valuations[m],
                users: instance.mvnos[m].channels.clone(),
            })
            .collect())
    }
}

/// One round of the auction as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSnapshot {
    pub bids: Vec<f64>,
    pub penalties: Vec<f64>,
    /// Clearing price of bandwidth (currency per Hz).
    pub price: f64,
    pub allocations: Vec<f64>,
    pub valuations: Vec<f64>,
}

/// Full record of an auction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionTrace {
    pub iterations: Vec<RoundSnapshot>,
    pub converged: bool,
    pub rounds_used: usize,
}

impl AuctionTrace {
    pub fn last(&self) -> &RoundSnapshot {
        self.iterations.last().expect("trace has at least one round")
    }

    pub fn final_allocations(&self) -> &[f64] {
        &self.last().allocations
    }

    pub fn final_valuations(&self) -> &[f64] {
        &self.last().valuations
    }

    pub fn welfare(&self) -> f64 {
        self.final_valuations().iter().sum()
    }
}

/// Tuning knobs of the auction loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GkmConfig {
    pub max_iterations: usize,
    /// Relative per-round bid change below which the run has converged.
    pub bid_tolerance: f64,
    /// Initial penalty per operator. `None` uses `R / M`, which puts the
    /// conserved penalty total at the pool size `R`; with the total at `R`
    /// the update assigns each penalty its fixed-point value
    /// `(R - r_m) / (M - 1)` in one step instead of oscillating.
    pub q_init: Option<f64>,
    /// Initial bid per operator.
    pub b_init: f64,
    /// Floor keeping penalties positive.
    pub q_min: f64,
    /// Cap keeping market power strictly below one.
    pub mu_max: f64,
    /// Optional per-operator initial bids (overrides `b_init`).
    pub initial_bids: Option<Vec<f64>>,
}

impl Default for GkmConfig {
    fn default() -> Self {
        GkmConfig {
            max_iterations: 1000,
            bid_tolerance: 1e-6,
            q_init: None,
            b_init: 1.0,
            q_min: 1e-9,
            mu_max: 1.0 - 1e-6,
            initial_bids: None,
        }
    }
}

impl GkmConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::domain("max_iterations must be at least 1"));
        }
        if !(self.bid_tolerance > 0.0) {
            return Err(Error::domain("bid tolerance must be positive"));
        }
        if !(self.q_min > 0.0) {
            return Err(Error::domain("penalty floor must be positive"));
        }
        if !(self.mu_max < 1.0) || !(self.mu_max >= 0.0) {
            return Err(Error::domain("market power cap must lie in [0, 1)"));
        }
        if let Some(q) = self.q_init {
            if !(q > 0.0) {
                return Err(Error::domain("initial penalty must be positive"));
            }
        }
        Ok(())
    }
}

/// Split the pool proportionally to the bids: `r_m = b_m / sum(b) * R`.
///
/// The last share is assigned as the remainder so the returned vector sums
/// to `R` exactly.
pub fn proportional_allocation(bids: &[f64], total: f64) -> Result<Vec<f64>> {
    if !(total > 0.0) {
        return Err(Error::domain("resource capacity must be positive"));
    }
    if bids.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
        return Err(Error::domain("bids must be nonnegative and finite"));
    }
    let sum: f64 = bids.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::degenerate("all bids are zero"));
    }
    let n = bids.len();
    let mut shares = vec![0.0; n];
    let mut partial = 0.0;
    for i in 0..n - 1 {
        shares[i] = bids[i] / sum * total;
        partial += shares[i];
    }
    shares[n - 1] = total - partial;
    // Kill any rounding drift so the shares always sum to the capacity. The
    // correction goes into the share with the finest float spacing; full
    // steps first, then damped steps, because a round-to-even tie can
    // oscillate forever under whole-ulp nudges.
    for scale in [1.0, 1.0, 0.5, 0.5, 0.25, 0.25, 0.125, 0.125] {
        let drift = total - shares.iter().sum::<f64>();
        if drift == 0.0 {
            break;
        }
        let step = drift * scale;
        let absorber = shares
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s + step > 0.0)
            .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap());
        match absorber {
            Some((i, _)) => shares[i] += step,
            None => break,
        }
    }
    Ok(shares)
}

/// Clearing price of the pool: total bids per unit of resource.
pub fn virtual_price(bids: &[f64], total: f64) -> Result<f64> {
    if !(total > 0.0) {
        return Err(Error::domain("resource capacity must be positive"));
    }
    Ok(bids.iter().sum::<f64>() / total)
}

/// Market influence power of every bidder: its share of the total bid.
pub fn market_power(bids: &[f64]) -> Result<Vec<f64>> {
    let sum: f64 = bids.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::degenerate("all bids are zero"));
    }
    Ok(bids.iter().map(|b| b / sum).collect())
}

/// A single operator's estimate of its own market power from its previous
/// round: `mu = 1 - b*q / (r * v'(r))`, clamped to `[0, mu_max]`.
///
/// At a fixed point of the bid dynamics this coincides with the bid-share
/// market power.
pub fn market_power_estimate(
    prev_bid: f64,
    prev_penalty: f64,
    prev_alloc: f64,
    prev_marginal: f64,
    mu_max: f64,
) -> Result<f64> {
    let scale = prev_alloc * prev_marginal;
    if !(scale > 0.0) {
        return Err(Error::domain(
            "market power estimate needs a positive allocation and marginal",
        ));
    }
    let raw = 1.0 - prev_bid * prev_penalty / scale;
    Ok(raw.clamp(0.0, mu_max))
}

/// Provider-side penalty refresh from the previous round.
///
/// `q_m <- q_m + (R - r_m)/(M - 1) - R*q_m/sum(q)`, floored at `q_min`. The
/// update conserves `sum(q)` (before flooring) and is stationary exactly when
/// every penalty is proportional to the bandwidth left to the other bidders.
pub fn penalty_update(
    prev_penalties: &[f64],
    prev_allocs: &[f64],
    total: f64,
    q_min: f64,
) -> Result<Vec<f64>> {
    let m = prev_penalties.len();
    if m < 2 {
        return Err(Error::domain("penalty update needs at least two bidders"));
    }
    if prev_allocs.len() != m {
        return Err(Error::domain("penalty and allocation vectors differ in length"));
    }
    if prev_penalties.iter().any(|q| !(*q > 0.0)) {
        return Err(Error::domain("penalties must be positive"));
    }
    let q_sum: f64 = prev_penalties.iter().sum();
    Ok(prev_penalties
        .iter()
        .zip(prev_allocs)
        .map(|(&q, &r)| {
            let next = q + (total - r) / (m as f64 - 1.0) - total * q / q_sum;
            next.max(q_min)
        })
        .collect())
}

/// Best-response bid `b = r * v'(r) * (1 - mu) / q`.
pub fn best_response_bid(penalty: f64, allocation: f64, marginal: f64, mu: f64) -> Result<f64> {
    if !(penalty > 0.0) {
        return Err(Error::domain("penalty must be positive"));
    }
    if !(allocation >= 0.0) || !(marginal >= 0.0) {
        return Err(Error::domain("allocation and marginal must be nonnegative"));
    }
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::domain("market power must lie in [0, 1)"));
    }
    Ok(allocation * marginal * (1.0 - mu) / penalty)
}

/// Which auction variant the shared loop runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct EngineOptions {
    /// Refresh penalties each round; otherwise they stay at their initial
    /// value.
    pub update_penalties: bool,
    /// Fixed penalty used when updates are disabled (the classic
    /// proportional-share auction uses 1).
    pub fixed_penalty: Option<f64>,
    /// Force price-taking behaviour (market power pinned to zero).
    pub price_taking: bool,
}

impl EngineOptions {
    pub(crate) const GKM: EngineOptions = EngineOptions {
        update_penalties: true,
        fixed_penalty: None,
        price_taking: false,
    };
    pub(crate) const KELLY: EngineOptions = EngineOptions {
        update_penalties: false,
        fixed_penalty: Some(1.0),
        price_taking: false,
    };
    pub(crate) const KELLY_PRICE_TAKING: EngineOptions = EngineOptions {
        update_penalties: false,
        fixed_penalty: Some(1.0),
        price_taking: true,
    };
}

pub(crate) fn run_with_options(
    instance: &SliceInstance,
    config: &GkmConfig,
    options: EngineOptions,
) -> Result<AuctionTrace> {
    config.validate()?;
    let m = instance.mvno_count();
    if m < 2 {
        return Err(Error::domain("the auction needs at least two operators"));
    }
    let total = instance.bandwidth;

    let mut bids = match &config.initial_bids {
        Some(b) => {
            if b.len() != m {
                return Err(Error::domain("initial bid vector length mismatch"));
            }
            if b.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::domain("initial bids must be positive"));
            }
            b.clone()
        }
        None => {
            if !(config.b_init > 0.0) {
                return Err(Error::domain("initial bid must be positive"));
            }
            vec![config.b_init; m]
        }
    };
    let mut penalties = match options.fixed_penalty {
        Some(q) => vec![q; m],
        None => vec![config.q_init.unwrap_or(total / m as f64); m],
    };
    let mut allocations = proportional_allocation(&bids, total)?;

    let mut iterations = Vec::new();
    let mut converged = false;

    for round in 1..=config.max_iterations {
        // Market power from the previous round's aggregates; the opening
        // round starts as a price taker because there is nothing to gauge.
        let mus: Vec<f64> = if options.price_taking || round == 1 {
            vec![0.0; m]
        } else {
            market_power(&bids)?
                .into_iter()
                .map(|mu| mu.min(config.mu_max))
                .collect()
        };

        if options.update_penalties {
            penalties = penalty_update(&penalties, &allocations, total, config.q_min)?;
        }

        let mut new_bids = Vec::with_capacity(m);
        for i in 0..m {
            let marginal = marginal_valuation(allocations[i], &instance.mvnos[i].alphas)?;
            new_bids.push(best_response_bid(penalties[i], allocations[i], marginal, mus[i])?);
        }

        let price = virtual_price(&new_bids, total)?;
        if !(price > 0.0) {
            return Err(Error::degenerate("clearing price collapsed to zero"));
        }
        let new_allocations = proportional_allocation(&new_bids, total)?;
        let valuations = instance
            .mvnos
            .iter()
            .zip(&new_allocations)
            .map(|(mv, &r)| valuation(r, &mv.alphas))
            .collect::<Result<Vec<f64>>>()?;

        let change = bids
            .iter()
            .zip(&new_bids)
            .map(|(&old, &new)| (new - old).abs() / old.max(1e-12))
            .fold(0.0, f64::max);

        iterations.push(RoundSnapshot {
            bids: new_bids.clone(),
            penalties: penalties.clone(),
            price,
            allocations: new_allocations.clone(),
            valuations,
        });

        bids = new_bids;
        allocations = new_allocations;

        if round > 1 && change < config.bid_tolerance {
            converged = true;
            break;
        }
    }

    let rounds_used = iterations.len();
    Ok(AuctionTrace {
        iterations,
        converged,
        rounds_used,
    })
}

/// Run the full penalty-controlled auction to its equilibrium.
pub fn run_auction(instance: &SliceInstance, config: &GkmConfig) -> Result<AuctionTrace> {
    run_with_options(instance, config, EngineOptions::GKM)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance.
fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol.max(f64::MIN_POSITIVE), 40)
}

/// The surrogate objective whose maximizer characterizes the auction's
/// equilibrium allocation:
///
/// `vhat(r) = (1/q)(1 - r/R) v(r) + (1/(qR)) * integral_0^r v(z) dz`.
///
/// The integral is evaluated by adaptive quadrature with absolute tolerance
/// `1e-8 * v(r)`.
pub fn modified_valuation<F: Fn(f64) -> f64>(
    r: f64,
    total: f64,
    penalty: f64,
    valuation_fn: F,
) -> Result<f64> {
    if !(total > 0.0) || !(penalty > 0.0) {
        return Err(Error::domain("capacity and penalty must be positive"));
    }
    if !(0.0..=total).contains(&r) {
        return Err(Error::domain("share must lie in [0, R]"));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let v_r = valuation_fn(r);
    let tol = 1e-8 * v_r.abs();
    let integral = adaptive_simpson(&valuation_fn, 0.0, r, tol);
    Ok((1.0 - r / total) * v_r / penalty + integral / (penalty * total))
}

/// Residuals measuring how far a converged trace sits from the equilibrium
/// conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// Per operator: `|v'(r)(1 - mu)/q - beta| / beta`.
    pub stationarity: Vec<f64>,
    /// Per operator: `|r - b*q / (v'(r)(1 - mu))| / r`.
    pub allocation_identity: Vec<f64>,
    /// `|sum(r) - R| / R`.
    pub capacity: f64,
    /// Per operator with a positive bid: deviation of the first-order
    /// optimality product from one.
    pub uniqueness_active: Vec<f64>,
    /// Per operator with a zero bid: `v'(0+)/q` (must not exceed one).
    pub uniqueness_inactive: Vec<f64>,
}

impl EquilibriumReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity
            .iter()
            .chain(&self.allocation_identity)
            .chain(std::iter::once(&self.capacity))
            .fold(0.0f64, |acc, &x| acc.max(x))
    }

    /// Worst violation of the uniqueness conditions (0 when satisfied).
    pub fn max_uniqueness_violation(&self) -> f64 {
        let active = self.uniqueness_active.iter().fold(0.0f64, |a, &x| a.max(x));
        let inactive = self
            .uniqueness_inactive
            .iter()
            .fold(0.0f64, |a, &x| a.max(x - 1.0));
        active.max(inactive)
    }
}

/// Check the equilibrium conditions on a converged trace.
pub fn verify_equilibrium(
    trace: &AuctionTrace,
    instance: &SliceInstance,
) -> Result<EquilibriumReport> {
    if !trace.converged {
        return Err(Error::domain("equilibrium verification needs a converged trace"));
    }
    let last = trace.last();
    let total = instance.bandwidth;
    let bid_sum: f64 = last.bids.iter().sum();
    if !(bid_sum > 0.0) {
        return Err(Error::degenerate("converged trace has zero total bid"));
    }
    let beta = last.price;

    let mut stationarity = Vec::new();
    let mut allocation_identity = Vec::new();
    let mut uniqueness_active = Vec::new();
    let mut uniqueness_inactive = Vec::new();

    for (i, mv) in instance.mvnos.iter().enumerate() {
        let b = last.bids[i];
        let q = last.penalties[i];
        let r = last.allocations[i];
        let mu = b / bid_sum;
        if b > 0.0 {
            let marginal = marginal_valuation(r, &mv.alphas)?;
            stationarity.push((marginal * (1.0 - mu) / q - beta).abs() / beta);
            let implied = b * q / (marginal * (1.0 - mu));
            allocation_identity.push((r - implied).abs() / r);
            let product =
                marginal / q * (total / bid_sum - b * total / (bid_sum * bid_sum));
            uniqueness_active.push((product - 1.0).abs());
        } else {
            let marginal = marginal_valuation(1e-6 * total, &mv.alphas)?;
            uniqueness_inactive.push(marginal / q);
        }
    }

    let capacity = (last.allocations.iter().sum::<f64>() - total).abs() / total;
    Ok(EquilibriumReport {
        stationarity,
        allocation_identity,
        capacity,
        uniqueness_active,
        uniqueness_inactive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::UserChannel;
    use crate::instance::MvnoSlice;
    use approx::assert_relative_eq;

    fn slice_of(alphas: &[f64]) -> MvnoSlice {
        let channels = alphas
            .iter()
            .map(|&a| {
                // Channel whose spectral efficiency is exactly `a`.
                let snr = 2f64.powf(a) - 1.0;
                UserChannel::new(100.0, snr, 1.0, 1.0, 1.0).unwrap()
            })
            .collect();
        MvnoSlice {
            channels,
            alphas: alphas.to_vec(),
        }
    }

    fn four_mvno_instance() -> SliceInstance {
        let counts = [10usize, 5, 4, 3];
        let mvnos = counts
            .iter()
            .map(|&n| slice_of(&vec![4.0; n]))
            .collect();
        SliceInstance::new(1e7, mvnos).unwrap()
    }

    #[test]
    fn proportional_split_is_exact() {
        let shares = proportional_allocation(&[1.0, 1.0], 1e7).unwrap();
        assert_eq!(shares, vec![5e6, 5e6]);

        let shares = proportional_allocation(&[10.0, 5.0, 4.0, 3.0], 1e7).unwrap();
        let expected = [4_545_454.545454545, 2_272_727.272727273, 1_818_181.818181818];
        for (s, e) in shares.iter().zip(expected) {
            assert_relative_eq!(*s, e, max_relative = 1e-9);
        }
        assert_relative_eq!(shares[3], 1_363_636.3636363635, max_relative = 1e-9);
        assert_eq!(shares.iter().sum::<f64>(), 1e7);
    }

    #[test]
    fn zero_bids_are_degenerate() {
        assert!(matches!(
            proportional_allocation(&[0.0, 0.0], 10.0),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(market_power(&[0.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn virtual_price_examples() {
        assert_eq!(virtual_price(&[4.0, 6.0], 10.0).unwrap(), 1.0);
        assert_relative_eq!(
            virtual_price(&[10.0, 5.0, 4.0, 3.0], 1e7).unwrap(),
            2.2e-6,
            max_relative = 1e-12
        );
        assert_eq!(virtual_price(&[], 10.0).unwrap(), 0.0);
    }

    #[test]
    fn market_power_shares() {
        let mu = market_power(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(mu.iter().all(|&m| (m - 0.25).abs() < 1e-15));
        assert_eq!(market_power(&[3.0]).unwrap(), vec![1.0]);
        let mu = market_power(&[10.0, 5.0, 4.0, 3.0]).unwrap();
        assert_relative_eq!(mu[0], 10.0 / 22.0, max_relative = 1e-15);
        assert_relative_eq!(mu.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn market_power_estimate_inverts_best_response() {
        // Bid generated with mu = 0.3 must be decoded back to 0.3.
        let (q, r, v) = (4.0, 5.0, 2.0);
        let bid = best_response_bid(q, r, v, 0.3).unwrap();
        let mu = market_power_estimate(bid, q, r, v, 1.0 - 1e-6).unwrap();
        assert_relative_eq!(mu, 0.3, max_relative = 1e-12);

        // Price-taking limit.
        assert_eq!(market_power_estimate(10.0, 1.0, 5.0, 2.0, 0.999).unwrap(), 0.0);
        // Payment above the marginal surplus clamps at zero.
        assert_eq!(market_power_estimate(11.0, 1.0, 5.0, 2.0, 0.999).unwrap(), 0.0);
        assert!(matches!(
            market_power_estimate(1.0, 1.0, 0.0, 2.0, 0.999),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn penalty_update_fixed_point_and_floor() {
        // Symmetric state is stationary.
        let q = penalty_update(&[1.0, 1.0, 1.0, 1.0], &[2.5e6; 4], 1e7, 1e-9).unwrap();
        for v in &q {
            assert_relative_eq!(*v, 1.0, max_relative = 1e-12);
        }

        // Two bidders, lopsided allocation: one penalty hits the floor.
        let q = penalty_update(&[1.0, 1.0], &[7.5e6, 2.5e6], 1e7, 1e-9).unwrap();
        assert_eq!(q[0], 1e-9);
        assert_relative_eq!(q[1], 2.5e6 + 1.0, max_relative = 1e-12);

        assert!(matches!(
            penalty_update(&[1.0], &[1e7], 1e7, 1e-9),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn best_response_examples() {
        assert_relative_eq!(best_response_bid(1.0, 2.0, 3.0, 0.0).unwrap(), 6.0);
        let mu_max = 1.0 - 1e-6;
        let b = best_response_bid(2.0, 4.0, 3.0, mu_max).unwrap();
        assert_relative_eq!(b, 4.0 * 3.0 * (1.0 - mu_max) / 2.0, max_relative = 1e-12);
        assert!(matches!(
            best_response_bid(0.0, 1.0, 1.0, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn identical_operators_stay_symmetric() {
        let mvnos = vec![slice_of(&[3.0, 3.0]), slice_of(&[3.0, 3.0])];
        let instance = SliceInstance::new(1e7, mvnos).unwrap();
        let trace = run_auction(&instance, &GkmConfig::default()).unwrap();
        assert!(trace.converged);
        for round in &trace.iterations {
            assert_relative_eq!(round.bids[0], round.bids[1], max_relative = 1e-12);
            assert_relative_eq!(round.allocations[0], 5e6, max_relative = 1e-12);
            assert_relative_eq!(round.allocations[1], 5e6, max_relative = 1e-12);
        }
        // Symmetry closes the equilibrium conditions essentially exactly.
        let report = verify_equilibrium(&trace, &instance).unwrap();
        assert!(report.max_residual() <= 1e-10, "{report:?}");
    }

    #[test]
    fn four_operators_split_by_user_count() {
        let instance = four_mvno_instance();
        let trace = run_auction(&instance, &GkmConfig::default()).unwrap();
        assert!(trace.converged);
        assert!(trace.rounds_used <= 10, "took {} rounds", trace.rounds_used);
        let expected = [10.0, 5.0, 4.0, 3.0].map(|s| s / 22.0 * 1e7);
        for (r, e) in trace.final_allocations().iter().zip(expected) {
            assert_relative_eq!(*r, e, max_relative = 1e-3);
        }
    }

    #[test]
    fn trace_conserves_capacity_every_round() {
        let instance = four_mvno_instance();
        let trace = run_auction(&instance, &GkmConfig::default()).unwrap();
        for round in &trace.iterations {
            assert_eq!(round.allocations.iter().sum::<f64>(), 1e7);
            assert!(round.allocations.iter().all(|&r| r >= 0.0));
            let beta = round.bids.iter().sum::<f64>() / 1e7;
            assert_eq!(round.price, beta);
        }
    }

    #[test]
    fn equilibrium_report_flags_perturbations() {
        let instance = four_mvno_instance();
        let trace = run_auction(&instance, &GkmConfig::default()).unwrap();
        let report = verify_equilibrium(&trace, &instance).unwrap();
        assert!(report.max_residual() <= 1e-4, "{report:?}");
        assert!(report.max_uniqueness_violation() <= 1e-4);

        // Bump one bid by 10% and rebuild a consistent final round: the
        // stationarity residual must light up.
        let mut forged = trace.clone();
        let last = forged.iterations.last_mut().unwrap();
        last.bids[0] *= 1.1;
        last.allocations = proportional_allocation(&last.bids, 1e7).unwrap();
        last.price = virtual_price(&last.bids, 1e7).unwrap();
        let report = verify_equilibrium(&forged, &instance).unwrap();
        assert!(
            report.stationarity[0] > 1e-2,
            "perturbed residual {}",
            report.stationarity[0]
        );

        let mut unconverged = trace;
        unconverged.converged = false;
        assert!(verify_equilibrium(&unconverged, &instance).is_err());
    }

    #[test]
    fn modified_valuation_examples() {
        // Linear valuation has a closed-form surrogate.
        let vhat = modified_valuation(4.0, 10.0, 1.0, |z| z).unwrap();
        assert_relative_eq!(vhat, 3.2, max_relative = 1e-8);

        assert_eq!(modified_valuation(0.0, 10.0, 1.0, |z| z).unwrap(), 0.0);

        // At r = R only the integral term survives.
        let vhat = modified_valuation(10.0, 10.0, 2.0, |z| z).unwrap();
        assert_relative_eq!(vhat, 50.0 / 20.0, max_relative = 1e-8);

        assert!(modified_valuation(11.0, 10.0, 1.0, |z| z).is_err());
    }

    #[test]
    fn modified_valuation_derivative_matches_discounted_marginal() {
        // d vhat / dr = (1 - r/R) v'(r) / q, checked by central differences
        // against the closed-form marginal.
        let alphas = vec![4.0; 6];
        let total = 1e7;
        let q = 1.7;
        let v = |z: f64| valuation(z, &alphas).unwrap();
        for r in [2e6, 5e6, 8e6] {
            let h = 1e-4 * r;
            let fd = (modified_valuation(r + h, total, q, v).unwrap()
                - modified_valuation(r - h, total, q, v).unwrap())
                / (2.0 * h);
            let expected = (1.0 - r / total) * marginal_valuation(r, &alphas).unwrap() / q;
            assert_relative_eq!(fd, expected, max_relative = 1e-5);
        }
    }
}
