//! Auctioning several divisible resources at once.
//!
//! Each resource row (bandwidth, power) runs its own penalty-controlled
//! proportional auction; an operator's valuation couples the rows because
//! its users' rates depend on both the bandwidth and the power it won:
//!
//! ```text
//! v(r, P) = max over fractions x, y of
//!           sum_s ln( x_s r log2(1 + y_s P h_s / (N_s x_s r)) + 1 )
//! ```
//!
//! Power enters through the per-user SNR, bandwidth through the per-user
//! rate, so pinning the power density to the bandwidth split (`y = x`,
//! `P/r` fixed) recovers the single-resource valuation term for term.
//!
//! The inner problem is jointly concave (each rate is a perspective of
//! `log2(1+z)` in the per-user bandwidth/power amounts), so alternating
//! exact coordinate maximization over the two simplices converges to the
//! global optimum. Each block is solved by bisecting its dual price, with a
//! monotone per-user root-find inside. Marginals for the bidding loop come
//! from central finite differences of the joint valuation.

use serde::{Deserialize, Serialize};

use crate::channel::UserChannel;
use crate::error::{Error, Result};
use crate::gkm_auction::{
    market_power, penalty_update, proportional_allocation, run_auction, virtual_price,
    AuctionTrace, GkmConfig,
};
use crate::instance::MvnoSlice;
use crate::lower_level::valuation;

/// One divisible resource owned by the provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceKind {
    pub label: ResourceLabel,
    /// Capacity in the resource's own unit (Hz or W).
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceLabel {
    Bandwidth,
    Power,
}

impl std::fmt::Display for ResourceLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResourceLabel::Bandwidth => write!(f, "bandwidth"),
            ResourceLabel::Power => write!(f, "power"),
        }
    }
}

impl ResourceKind {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity > 0.0) || !self.capacity.is_finite() {
            return Err(Error::domain("resource capacity must be positive"));
        }
        Ok(())
    }
}

/// What a resources-by-operators matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixRole {
    Allocation,
    Penalty,
    Bid,
}

/// Dense resources-by-operators matrix (row per resource).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceMatrix {
    pub role: MatrixRole,
    pub entries: Vec<Vec<f64>>,
}

impl ResourceMatrix {
    pub fn new(role: MatrixRole, entries: Vec<Vec<f64>>) -> Result<Self> {
        if entries.iter().any(|row| row.iter().any(|e| !(*e >= 0.0))) {
            return Err(Error::domain("matrix entries must be nonnegative"));
        }
        let width = entries.first().map_or(0, Vec::len);
        if entries.iter().any(|row| row.len() != width) {
            return Err(Error::domain("matrix rows differ in length"));
        }
        Ok(ResourceMatrix { role, entries })
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        self.entries.iter().map(|row| row[m]).collect()
    }
}

/// A realized multi-resource competition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiInstance {
    pub resources: Vec<ResourceKind>,
    pub mvnos: Vec<MvnoSlice>,
}

impl MultiInstance {
    pub fn new(resources: Vec<ResourceKind>, mvnos: Vec<MvnoSlice>) -> Result<Self> {
        if resources.is_empty() {
            return Err(Error::domain("at least one resource is required"));
        }
        for r in &resources {
            r.validate()?;
        }
        let labels: Vec<ResourceLabel> = resources.iter().map(|r| r.label).collect();
        if labels[0] != ResourceLabel::Bandwidth
            || labels.len() > 2
            || (labels.len() == 2 && labels[1] != ResourceLabel::Power)
        {
            return Err(Error::domain(
                "supported resource sets: [bandwidth] or [bandwidth, power]",
            ));
        }
        if mvnos.iter().any(|m| m.channels.is_empty()) {
            return Err(Error::domain("every operator needs at least one user"));
        }
        Ok(MultiInstance { resources, mvnos })
    }
}

/// One round of the multi-resource auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRound {
    pub bids: ResourceMatrix,
    pub penalties: ResourceMatrix,
    /// Clearing price per resource.
    pub prices: Vec<f64>,
    pub allocations: ResourceMatrix,
    pub valuations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTrace {
    pub rounds: Vec<MultiRound>,
    pub converged: bool,
    pub rounds_used: usize,
}

impl MultiTrace {
    pub fn last(&self) -> &MultiRound {
        self.rounds.last().expect("trace has at least one round")
    }
}

/// Proportional split of one resource row.
pub fn allocate_resource_row(bids_row: &[f64], capacity: f64) -> Result<Vec<f64>> {
    proportional_allocation(bids_row, capacity)
}

/// The user-level split behind a joint valuation.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSplit {
    pub bandwidth_fractions: Vec<f64>,
    pub power_fractions: Vec<f64>,
    pub value: f64,
    /// Envelope marginal of the value in the bandwidth amount (per Hz).
    pub bandwidth_marginal: f64,
    /// Envelope marginal of the value in the power amount (per W).
    pub power_marginal: f64,
}

fn log2_1p(z: f64) -> f64 {
    z.ln_1p() / std::f64::consts::LN_2
}

/// d/dz log2(1+z)
fn dlog2_1p(z: f64) -> f64 {
    1.0 / ((1.0 + z) * std::f64::consts::LN_2)
}

struct JointProblem {
    bandwidth: f64,
    power: f64,
    /// Per-user gain over reference noise, h_s / N_s.
    gains: Vec<f64>,
}

impl JointProblem {
    fn rate(&self, s: usize, x: f64, y: f64) -> f64 {
        if x <= 0.0 || y <= 0.0 {
            return 0.0;
        }
        let z = y * self.power * self.gains[s] / (x * self.bandwidth);
        x * self.bandwidth * log2_1p(z)
    }

    fn objective(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.gains.len())
            .map(|s| (self.rate(s, x[s], y[s]) + 1.0).ln())
            .sum()
    }

    /// d/dx of one user's utility term at (x, y), for x > 0.
    fn marginal_x(&self, s: usize, x: f64, y: f64) -> f64 {
        let z = y * self.power * self.gains[s] / (x * self.bandwidth);
        let num = self.bandwidth * (log2_1p(z) - z * dlog2_1p(z));
        num / (self.rate(s, x, y) + 1.0)
    }

    /// d/dy of one user's utility term at (x, y), for x > 0.
    fn marginal_y(&self, s: usize, x: f64, y: f64) -> f64 {
        let z = y * self.power * self.gains[s] / (x * self.bandwidth);
        self.power * self.gains[s] * dlog2_1p(z) / (self.rate(s, x, y) + 1.0)
    }
}

/// Monotone-decreasing root-find of `f(t) = level` on `(0, 1]`, via the
/// Illinois variant of false position.
fn invert_marginal_on_unit<F: Fn(f64) -> f64>(f: F, level: f64) -> f64 {
    let mut hi = 1.0;
    let mut f_hi = f(1.0) - level;
    if f_hi >= 0.0 {
        return 1.0;
    }
    let mut lo = 1e-15;
    let mut f_lo = f(lo) - level;
    if f_lo <= 0.0 {
        return lo;
    }
    let mut side = 0i8;
    for _ in 0..60 {
        let mut t = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        let f_t = f(t) - level;
        if f_t.abs() <= 1e-12 * level.abs().max(1e-300) {
            return t;
        }
        if f_t > 0.0 {
            lo = t;
            f_lo = f_t;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = t;
            f_hi = f_t;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Solve one simplex block: find the dual level at which the per-user
/// demands sum to one. `demand(s, level)` must be nonincreasing in `level`.
/// Returns the level and the (rescaled) demands.
fn solve_block<D: Fn(usize, f64) -> f64>(
    active: &[usize],
    demand: D,
    level_lo: f64,
    level_hi: f64,
) -> (f64, Vec<(usize, f64)>) {
    let mut lo = level_lo;
    let mut hi = level_hi;
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        let total: f64 = active.iter().map(|&s| demand(s, mid)).sum();
        if total >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let level = 0.5 * (lo + hi);
    let mut out: Vec<(usize, f64)> = active.iter().map(|&s| (s, demand(s, level))).collect();
    // Remove the simplex residual by scaling; the bisection already puts it
    // at the 1e-15 level.
    let total: f64 = out.iter().map(|&(_, v)| v).sum();
    if total > 0.0 {
        for v in &mut out {
            v.1 /= total;
        }
    }
    (level, out)
}

/// Joint optimum over bandwidth and power fractions for one operator.
///
/// `amounts[0]` is bandwidth (Hz); `amounts[1]`, when present, is power (W).
/// With a single amount this is exactly the single-resource user problem.
pub fn joint_user_allocation(amounts: &[f64], channels: &[UserChannel]) -> Result<JointSplit> {
    if channels.is_empty() {
        return Err(Error::domain("operator has no users"));
    }
    match amounts {
        [r] => {
            let slice = MvnoSlice::deterministic(channels.to_vec());
            let res = crate::lower_level::allocate_fractions(*r, &slice.alphas)?;
            let x: Vec<f64> = res.allocations.iter().map(|a| a.fraction).collect();
            Ok(JointSplit {
                power_fractions: x.clone(),
                bandwidth_fractions: x,
                value: res.valuation,
                bandwidth_marginal: res.multiplier,
                power_marginal: 0.0,
            })
        }
        [r, p] => joint_two_resource(*r, *p, channels),
        _ => Err(Error::domain(
            "joint valuation supports one (bandwidth) or two (bandwidth, power) resources",
        )),
    }
}

fn joint_two_resource(r: f64, p: f64, channels: &[UserChannel]) -> Result<JointSplit> {
    joint_two_resource_warm(r, p, channels, None)
}

/// As [`joint_two_resource`], optionally seeded with fractions from a nearby
/// solve (the bidding loop evaluates the valuation at clustered points).
fn joint_two_resource_warm(
    r: f64,
    p: f64,
    channels: &[UserChannel],
    warm: Option<&JointSplit>,
) -> Result<JointSplit> {
    joint_two_resource_tol(r, p, channels, warm, 1e-12)
}

fn joint_two_resource_tol(
    r: f64,
    p: f64,
    channels: &[UserChannel],
    warm: Option<&JointSplit>,
    rel_tol: f64,
) -> Result<JointSplit> {
    if !(r >= 0.0) || !(p >= 0.0) {
        return Err(Error::domain("resource amounts must be nonnegative"));
    }
    let n = channels.len();
    let zeros = JointSplit {
        bandwidth_fractions: vec![0.0; n],
        power_fractions: vec![0.0; n],
        value: 0.0,
        bandwidth_marginal: 0.0,
        power_marginal: 0.0,
    };
    if r == 0.0 || p == 0.0 {
        return Ok(zeros);
    }
    let problem = JointProblem {
        bandwidth: r,
        power: p,
        gains: channels.iter().map(|c| c.gain_h / c.noise_density).collect(),
    };
    let active: Vec<usize> = (0..n).filter(|&s| problem.gains[s] > 0.0).collect();
    if active.is_empty() {
        return Ok(zeros);
    }

    let k = active.len() as f64;
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    for &s in &active {
        x[s] = 1.0 / k;
        y[s] = 1.0 / k;
    }
    if let Some(seed) = warm {
        if seed.bandwidth_fractions.len() == n && seed.power_fractions.len() == n {
            let sx: f64 = active.iter().map(|&s| seed.bandwidth_fractions[s].max(0.0)).sum();
            let sy: f64 = active.iter().map(|&s| seed.power_fractions[s].max(0.0)).sum();
            if sx > 0.0 && sy > 0.0 {
                for &s in &active {
                    x[s] = seed.bandwidth_fractions[s].max(0.0) / sx;
                    y[s] = seed.power_fractions[s].max(0.0) / sy;
                }
            }
        }
    }

    let mut value = problem.objective(&x, &y);
    let mut x_level = 0.0;
    let mut y_level = 0.0;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    for sweep in 0..200 {
        // Bandwidth block: exact maximization over x given y.
        let lo = active
            .iter()
            .map(|&s| problem.marginal_x(s, 1.0, y[s]))
            .fold(f64::INFINITY, f64::min);
        let hi = active
            .iter()
            .map(|&s| problem.marginal_x(s, 1.0 / k, y[s]))
            .fold(0.0f64, f64::max);
        let (level, demands) = solve_block(
            &active,
            |s, level| invert_marginal_on_unit(|t| problem.marginal_x(s, t, y[s]), level),
            lo.min(hi),
            hi.max(lo),
        );
        x_level = level;
        for (s, v) in demands {
            x[s] = v;
        }

        // Power block: exact maximization over y given x.
        let lo = active
            .iter()
            .map(|&s| problem.marginal_y(s, x[s], 1.0))
            .fold(f64::INFINITY, f64::min);
        let hi = active
            .iter()
            .map(|&s| problem.marginal_y(s, x[s], 0.0))
            .fold(0.0f64, f64::max);
        let (level, demands) = solve_block(
            &active,
            |s, level| invert_marginal_on_unit(|t| problem.marginal_y(s, x[s], t), level),
            lo.min(hi),
            hi.max(lo),
        );
        y_level = level;
        for (s, v) in demands {
            y[s] = v;
        }

        let next = problem.objective(&x, &y);
        let change = (next - value).abs();
        value = next;
        last_change = change;
        // Aim for machine-level agreement, but accept a slightly looser
        // fixed point when the per-user root precision floors the sweeps.
        let scale = value.abs().max(1.0);
        if change <= rel_tol * scale || (sweep >= 60 && change <= 1e2 * rel_tol * scale) {
            converged = true;
            break;
        }
    }
    if !converged && last_change > 1e-8 * value.abs().max(1.0) {
        return Err(Error::numerical(
            "joint bandwidth/power split did not settle within 200 sweeps",
        ));
    }
    // Envelope marginals: the dual level of a block is the derivative of one
    // user's term in its fraction, so the value's derivative in the total
    // amount is the level divided by the amount.
    Ok(JointSplit {
        bandwidth_fractions: x,
        power_fractions: y,
        value,
        bandwidth_marginal: x_level / r,
        power_marginal: y_level / p,
    })
}

/// Optimal joint valuation of a resource column.
pub fn joint_valuation(amounts: &[f64], channels: &[UserChannel]) -> Result<f64> {
    if amounts.len() == 1 {
        // Keep the single-resource path identical to the dedicated solver.
        let slice = MvnoSlice::deterministic(channels.to_vec());
        return valuation(amounts[0], &slice.alphas);
    }
    Ok(joint_user_allocation(amounts, channels)?.value)
}

fn fd_marginal(
    amounts: &[f64],
    channels: &[UserChannel],
    c: usize,
    warm: Option<&JointSplit>,
) -> Result<f64> {
    let h = 1e-4 * amounts[c];
    let mut up = amounts.to_vec();
    let mut down = amounts.to_vec();
    up[c] += h;
    down[c] -= h;
    let v_up = joint_two_resource_warm(up[0], up[1], channels, warm)?.value;
    let v_down = joint_two_resource_warm(down[0], down[1], channels, warm)?.value;
    Ok((v_up - v_down) / (2.0 * h))
}

/// One operator's best response to the previous round's aggregates.
///
/// The bid rule is implicit in the operator's own bid (the bid moves its own
/// allocation, which moves its marginals), so the candidate column solves
/// `e_c = R_c - B_c / (k_c * v_c(e))` with `B_c` the others' bids and
/// `k_c = (1 - mu)/q`. Plain fixed-point sweeps with periodic Aitken
/// extrapolation; the cheap envelope marginals drive the solve.
fn implicit_best_response(
    channels: &[UserChannel],
    capacities: &[f64],
    other_bids: &[f64],
    k_factors: &[f64],
    start: Vec<f64>,
) -> Result<(Vec<f64>, JointSplit)> {
    let c = capacities.len();
    let lo: Vec<f64> = capacities.iter().map(|&r| 1e-12 * r).collect();
    let hi: Vec<f64> = capacities.iter().map(|&r| (1.0 - 1e-12) * r).collect();

    let mut e: Vec<f64> = start
        .iter()
        .zip(0..c)
        .map(|(&v, ci)| v.clamp(lo[ci], hi[ci]))
        .collect();
    let mut split = joint_two_resource_tol(e[0], e[1], channels, None, 1e-10)?;
    let mut history: Vec<Vec<f64>> = vec![e.clone()];
    for it in 0..60 {
        let marginals = [split.bandwidth_marginal, split.power_marginal];
        let mut next = vec![0.0; c];
        for ci in 0..c {
            next[ci] = if marginals[ci] > 0.0 && k_factors[ci] > 0.0 {
                (capacities[ci] - other_bids[ci] / (k_factors[ci] * marginals[ci]))
                    .clamp(lo[ci], hi[ci])
            } else {
                lo[ci]
            };
        }
        let change = e
            .iter()
            .zip(&next)
            .map(|(a, b)| (b - a).abs() / a.abs().max(1e-300))
            .fold(0.0, f64::max);
        history.push(next.clone());
        if it % 3 == 2 && history.len() >= 3 {
            let n = history.len();
            let (u0, u1, u2) = (&history[n - 3], &history[n - 2], &history[n - 1]);
            let mut accel = u2.clone();
            let mut used = false;
            for ci in 0..c {
                let d1 = u1[ci] - u0[ci];
                let d2 = u2[ci] - u1[ci];
                let denom = d2 - d1;
                if denom.abs() > 1e-14 * u2[ci].abs().max(1e-300) {
                    accel[ci] = (u2[ci] - d2 * d2 / denom).clamp(lo[ci], hi[ci]);
                    used = true;
                }
            }
            if used {
                next = accel;
                history.clear();
                history.push(next.clone());
            }
        }
        e = next;
        split = joint_two_resource_tol(e[0], e[1], channels, Some(&split), 1e-10)?;
        if change < 1e-9 {
            break;
        }
    }
    Ok((e, split))
}

/// Multi-resource auction: the single-resource round structure applied to
/// every resource row.
///
/// Per round: market powers from the previous round's bid shares, penalties
/// refreshed row-wise, then each operator submits its best-response bids
/// (solved implicitly in its own column, since the bandwidth/power marginals
/// couple through the allocation) priced at central-finite-difference
/// marginals of the joint valuation (step `1e-4 *` amount), and every row is
/// cleared proportionally.
///
/// With a single bandwidth resource this delegates to the dedicated
/// single-resource loop, so the traces agree exactly.
pub fn run_multi_auction(instance: &MultiInstance, config: &GkmConfig) -> Result<MultiTrace> {
    let m = instance.mvnos.len();
    if m < 2 {
        return Err(Error::domain("the auction needs at least two operators"));
    }
    let c = instance.resources.len();

    if c == 1 && instance.resources[0].label == ResourceLabel::Bandwidth {
        let single = crate::instance::SliceInstance::new(
            instance.resources[0].capacity,
            instance.mvnos.clone(),
        )?;
        return Ok(wrap_single_trace(run_auction(&single, config)?));
    }

    let capacities: Vec<f64> = instance.resources.iter().map(|r| r.capacity).collect();
    let mut bids = vec![vec![config.b_init; m]; c];
    let mut penalties: Vec<Vec<f64>> = capacities
        .iter()
        .map(|&cap| vec![config.q_init.unwrap_or(cap / m as f64); m])
        .collect();
    let mut allocations: Vec<Vec<f64>> = bids
        .iter()
        .zip(&capacities)
        .map(|(row, &cap)| proportional_allocation(row, cap))
        .collect::<Result<Vec<_>>>()?;

    let mut rounds = Vec::new();
    let mut converged = false;

    for round in 1..=config.max_iterations {
        let mus: Vec<Vec<f64>> = if round == 1 {
            vec![vec![0.0; m]; c]
        } else {
            bids.iter()
                .map(|row| {
                    market_power(row).map(|v| {
                        v.into_iter().map(|mu| mu.min(config.mu_max)).collect()
                    })
                })
                .collect::<Result<Vec<Vec<f64>>>>()?
        };

        for ci in 0..c {
            penalties[ci] =
                penalty_update(&penalties[ci], &allocations[ci], capacities[ci], config.q_min)?;
        }

        let mut new_bids = vec![vec![0.0; m]; c];
        for mi in 0..m {
            let other_bids: Vec<f64> = (0..c)
                .map(|ci| {
                    bids[ci]
                        .iter()
                        .enumerate()
                        .filter(|(n, _)| *n != mi)
                        .map(|(_, b)| b)
                        .sum()
                })
                .collect();
            let k_factors: Vec<f64> = (0..c)
                .map(|ci| (1.0 - mus[ci][mi]) / penalties[ci][mi])
                .collect();
            let start: Vec<f64> = (0..c).map(|ci| allocations[ci][mi]).collect();
            let (column, split) = implicit_best_response(
                &instance.mvnos[mi].channels,
                &capacities,
                &other_bids,
                &k_factors,
                start,
            )?;
            // The submitted bid prices the solved column at the
            // finite-difference marginal.
            for ci in 0..c {
                let marginal =
                    fd_marginal(&column, &instance.mvnos[mi].channels, ci, Some(&split))?;
                new_bids[ci][mi] = column[ci] * marginal.max(0.0) * k_factors[ci];
            }
        }

        let prices = new_bids
            .iter()
            .zip(&capacities)
            .map(|(row, &cap)| virtual_price(row, cap))
            .collect::<Result<Vec<f64>>>()?;
        let new_allocations: Vec<Vec<f64>> = new_bids
            .iter()
            .zip(&capacities)
            .map(|(row, &cap)| proportional_allocation(row, cap))
            .collect::<Result<Vec<_>>>()?;
        let valuations = (0..m)
            .map(|mi| {
                let column: Vec<f64> = (0..c).map(|ci| new_allocations[ci][mi]).collect();
                joint_valuation(&column, &instance.mvnos[mi].channels)
            })
            .collect::<Result<Vec<f64>>>()?;

        let change = bids
            .iter()
            .flatten()
            .zip(new_bids.iter().flatten())
            .map(|(&old, &new)| (new - old).abs() / old.max(1e-12))
            .fold(0.0, f64::max);

        rounds.push(MultiRound {
            bids: ResourceMatrix::new(MatrixRole::Bid, new_bids.clone())?,
            penalties: ResourceMatrix::new(MatrixRole::Penalty, penalties.clone())?,
            prices,
            allocations: ResourceMatrix::new(MatrixRole::Allocation, new_allocations.clone())?,
            valuations,
        });

        bids = new_bids;
        allocations = new_allocations;

        if round > 1 && change < config.bid_tolerance {
            converged = true;
            break;
        }
    }

    let rounds_used = rounds.len();
    Ok(MultiTrace {
        rounds,
        converged,
        rounds_used,
    })
}

fn wrap_single_trace(trace: AuctionTrace) -> MultiTrace {
    let rounds = trace
        .iterations
        .into_iter()
        .map(|snap| MultiRound {
            bids: ResourceMatrix {
                role: MatrixRole::Bid,
                entries: vec![snap.bids],
            },
            penalties: ResourceMatrix {
                role: MatrixRole::Penalty,
                entries: vec![snap.penalties],
            },
            prices: vec![snap.price],
            allocations: ResourceMatrix {
                role: MatrixRole::Allocation,
                entries: vec![snap.allocations],
            },
            valuations: snap.valuations,
        })
        .collect();
    MultiTrace {
        rounds,
        converged: trace.converged,
        rounds_used: trace.rounds_used,
    }
}
