//! The multi-item diffusion mechanism.
//!
//! 1. Each branch `B_i` of the seller gets the posted price
//!    `(1 + t)^(-1/t)` with `t = k_{-i} / x`, the single-item optimal price
//!    for `t` buyers evaluated at the average size of the other branches.
//! 2. Items are split across branches in proportion to branch size
//!    ([`allocate_quotas`]).
//! 3. Buyers whose value exceeds their branch price are interested; each
//!    branch serves up to its quota, shallowest first, then most
//!    participating children, then at random.
//! 4. A winner in branch `w` pays `p_w`; every other buyer `l` on the path
//!    from the seller to the winner receives `p_w * alpha * 2^(-d_l)`.

use std::cmp::Reverse;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::network::{EffectiveMarket, NodeId, ValuationProfile};

pub const DEFAULT_REWARD_FACTOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("branch count must be positive")]
    NoBranches,
    #[error("reward factor {0} must lie in [0, 1)")]
    InvalidRewardFactor(f64),
    #[error("no valuation for participant {0}")]
    MissingValuation(NodeId),
    #[error("node {0} is not a buyer of this outcome")]
    UnknownBuyer(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MechanismParams {
    pub items: usize,
    pub reward_factor: f64,
}

impl MechanismParams {
    pub fn new(items: usize, reward_factor: f64) -> Result<Self, MechanismError> {
        if !(0.0..1.0).contains(&reward_factor) {
            return Err(MechanismError::InvalidRewardFactor(reward_factor));
        }
        Ok(Self {
            items,
            reward_factor,
        })
    }

    pub fn with_default_reward(items: usize) -> Self {
        Self {
            items,
            reward_factor: DEFAULT_REWARD_FACTOR,
        }
    }
}

/// Price and item quota announced to one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchPlan {
    pub branch_root: NodeId,
    pub price: f64,
    pub quota: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismOutcome {
    pub seller: NodeId,
    /// `allocation[v]` is true iff buyer `v` receives an item.
    pub allocation: Vec<bool>,
    /// Net transfer from each buyer to the seller; negative means the buyer
    /// was paid a diffusion reward.
    pub net_payment: Vec<f64>,
    pub branch_plans: Vec<BranchPlan>,
    /// Winners in ascending id order.
    pub winners: Vec<NodeId>,
    /// Winners per branch, aligned with `branch_plans`.
    pub branch_winners: Vec<usize>,
    pub seller_revenue: f64,
}

/// Wire form of an outcome: plans, winners, net payments, revenue.
#[derive(Debug, Serialize)]
struct OutcomeRecord<'a> {
    branch_plans: &'a [BranchPlan],
    winners: &'a [NodeId],
    net_payments: Vec<(NodeId, f64)>,
    seller_revenue: f64,
}

impl MechanismOutcome {
    fn empty() -> Self {
        Self {
            seller: 0,
            allocation: Vec::new(),
            net_payment: Vec::new(),
            branch_plans: Vec::new(),
            winners: Vec::new(),
            branch_winners: Vec::new(),
            seller_revenue: 0.0,
        }
    }

    /// Sum of winner payments before rewards.
    pub fn gross_revenue(&self) -> f64 {
        self.branch_plans
            .iter()
            .zip(&self.branch_winners)
            .map(|(plan, &w)| plan.price * w as f64)
            .sum()
    }

    pub fn item_count_sold(&self) -> usize {
        self.winners.len()
    }

    /// JSON with every buyer whose net payment is non-zero.
    pub fn to_json(&self) -> String {
        let record = OutcomeRecord {
            branch_plans: &self.branch_plans,
            winners: &self.winners,
            net_payments: self
                .net_payment
                .iter()
                .enumerate()
                .filter(|&(v, &p)| v != self.seller && p != 0.0)
                .map(|(v, &p)| (v, p))
                .collect(),
            seller_revenue: self.seller_revenue,
        };
        serde_json::to_string_pretty(&record).expect("outcome serializes")
    }
}

/// Posted price of a branch given the size of all other branches
/// (`others`) and the branch count `branches`.
///
/// With `t = others / branches` this is `(1 + t)^(-1/t)`; at `others = 0`
/// it is the `t -> 0` limit `e^{-1}`. The branch's own size never enters.
pub fn branch_price(others: usize, branches: usize) -> Result<f64, MechanismError> {
    if branches == 0 {
        return Err(MechanismError::NoBranches);
    }
    if others == 0 {
        return Ok((-1.0f64).exp());
    }
    let t = others as f64 / branches as f64;
    Ok((-t.ln_1p() / t).exp())
}

/// Splits `items` over branches of the given sizes.
///
/// Each branch first gets `floor(items * size / total)` capped at its size.
/// The remaining `min(items, total) - sum` items go one each to the
/// branches with the largest fractional remainder, ties to the earlier
/// branch, skipping full branches.
pub fn allocate_quotas(items: usize, sizes: &[usize]) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 || items == 0 {
        return vec![0; sizes.len()];
    }
    let (items_w, total_w) = (items as u128, total as u128);
    let mut quotas: Vec<usize> = sizes
        .iter()
        .map(|&k| ((items_w * k as u128 / total_w) as usize).min(k))
        .collect();
    let assigned: usize = quotas.iter().sum();
    let mut leftover = items.min(total) - assigned;
    if leftover == 0 {
        return quotas;
    }
    let mut by_remainder: Vec<usize> = (0..sizes.len()).collect();
    // Remainders compared exactly as integers (numerators over `total`).
    by_remainder.sort_by_key(|&i| (Reverse(items_w * sizes[i] as u128 % total_w), i));
    for &i in by_remainder.iter().cycle().take(sizes.len() * 2) {
        if leftover == 0 {
            break;
        }
        if quotas[i] < sizes[i] {
            quotas[i] += 1;
            leftover -= 1;
        }
    }
    debug_assert_eq!(leftover, 0);
    quotas
}

/// Prices and quotas for a fixed market; reusable across valuation draws.
#[derive(Debug, Clone)]
pub struct MechanismPlan<'m, 't> {
    market: &'m EffectiveMarket<'t>,
    params: MechanismParams,
    plans: Vec<BranchPlan>,
    /// Participants grouped by branch, breadth-first within a branch.
    members: Vec<Member>,
    offsets: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Member {
    node: NodeId,
    depth: u32,
    children: u32,
}

/// Reusable buffers for [`MechanismPlan::execute_with`].
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    interested: Vec<Member>,
    candidates: Vec<Candidate>,
    rewards: Vec<f64>,
    below: Vec<u32>,
    won: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    depth: u32,
    children: u32,
    key: u64,
    node: NodeId,
}

impl<'m, 't> MechanismPlan<'m, 't> {
    pub fn new(
        market: &'m EffectiveMarket<'t>,
        params: MechanismParams,
    ) -> Result<Self, MechanismError> {
        if !(0.0..1.0).contains(&params.reward_factor) {
            return Err(MechanismError::InvalidRewardFactor(params.reward_factor));
        }
        let branches = market.branch_count();
        let sizes: Vec<usize> = market.branches().iter().map(|b| b.size).collect();
        let quotas = allocate_quotas(params.items, &sizes);
        let plans = market
            .branches()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                Ok(BranchPlan {
                    branch_root: b.root,
                    price: branch_price(market.others_size(i), branches)?,
                    quota: quotas[i],
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut offsets = vec![0usize; branches + 1];
        for (i, b) in market.branches().iter().enumerate() {
            offsets[i + 1] = offsets[i] + b.size;
        }
        let mut fill = offsets.clone();
        let mut members = vec![Member::default(); market.total_size()];
        for &v in market.participants() {
            let b = market.branch_index(v).expect("participant has a branch");
            members[fill[b]] = Member {
                node: v,
                depth: market.depth(v).expect("participant depth"),
                children: market.child_count(v),
            };
            fill[b] += 1;
        }
        Ok(Self {
            market,
            params,
            plans,
            members,
            offsets,
        })
    }

    pub fn branch_plans(&self) -> &[BranchPlan] {
        &self.plans
    }

    pub fn market(&self) -> &'m EffectiveMarket<'t> {
        self.market
    }

    pub fn execute<R: Rng + ?Sized>(
        &self,
        values: &ValuationProfile,
        rng: &mut R,
    ) -> Result<MechanismOutcome, MechanismError> {
        let mut out = MechanismOutcome::empty();
        self.execute_into(values, rng, &mut out)?;
        Ok(out)
    }

    /// As [`MechanismPlan::execute`], reusing the buffers of `out`.
    pub fn execute_into<R: Rng + ?Sized>(
        &self,
        values: &ValuationProfile,
        rng: &mut R,
        out: &mut MechanismOutcome,
    ) -> Result<(), MechanismError> {
        self.execute_with(values, rng, out, &mut Scratch::default())
    }

    /// As [`MechanismPlan::execute_into`] with caller-owned scratch space.
    pub fn execute_with<R: Rng + ?Sized>(
        &self,
        values: &ValuationProfile,
        rng: &mut R,
        out: &mut MechanismOutcome,
        scratch: &mut Scratch,
    ) -> Result<(), MechanismError> {
        let Scratch {
            interested,
            candidates,
            rewards,
            below,
            ..
        } = scratch;
        let market = self.market;
        let tree = market.tree();
        let n = tree.node_count();
        let participants = market.participants();
        if values.len() < n {
            if let Some(&v) = participants.iter().find(|&&v| v >= values.len()) {
                return Err(MechanismError::MissingValuation(v));
            }
        }
        let values = values.as_slice();

        out.seller = tree.root();
        out.allocation.clear();
        out.allocation.resize(n, false);
        out.net_payment.clear();
        out.net_payment.resize(n, 0.0);
        out.branch_plans.clear();
        out.branch_plans.extend_from_slice(&self.plans);
        out.winners.clear();
        out.branch_winners.clear();
        out.branch_winners.resize(self.plans.len(), 0);

        for (b, plan) in self.plans.iter().enumerate() {
            if plan.quota == 0 {
                continue;
            }
            interested.clear();
            interested.extend(
                self.members[self.offsets[b]..self.offsets[b + 1]]
                    .iter()
                    .filter(|m| values[m.node] > plan.price),
            );
            if interested.is_empty() {
                continue;
            }
            let first = out.winners.len();
            if interested.len() <= plan.quota {
                out.winners.extend(interested.iter().map(|m| m.node));
            } else {
                candidates.clear();
                candidates.extend(interested.iter().map(|m| Candidate {
                    depth: m.depth,
                    children: m.children,
                    key: rng.random(),
                    node: m.node,
                }));
                let rank = |c: &Candidate| (c.depth, Reverse(c.children), c.key, c.node);
                candidates.select_nth_unstable_by_key(plan.quota - 1, rank);
                out.winners
                    .extend(candidates[..plan.quota].iter().map(|c| c.node));
            }
            out.branch_winners[b] = out.winners.len() - first;
            for &w in &out.winners[first..] {
                out.allocation[w] = true;
                out.net_payment[w] = plan.price;
            }
        }
        out.winners.sort_unstable();

        let branch_count = self.plans.len();
        rewards.clear();
        rewards.resize(branch_count, 0.0);
        let alpha = self.params.reward_factor;
        if alpha > 0.0 && !out.winners.is_empty() {
            // Winners strictly below each node, accumulated bottom-up.
            let root = tree.root();
            below.clear();
            below.resize(n, 0);
            for (b, plan) in self.plans.iter().enumerate() {
                if out.branch_winners[b] == 0 {
                    continue;
                }
                let members = &self.members[self.offsets[b]..self.offsets[b + 1]];
                for m in members.iter().rev() {
                    let p = tree.parent(m.node).expect("buyer has a parent");
                    if p != root {
                        below[p] += below[m.node] + out.allocation[m.node] as u32;
                    }
                }
                for m in members {
                    if below[m.node] == 0 {
                        continue;
                    }
                    let reward = plan.price
                        * alpha
                        * 0.5f64.powi(m.depth.min(i32::MAX as u32) as i32)
                        * below[m.node] as f64;
                    out.net_payment[m.node] -= reward;
                    rewards[b] += reward;
                }
            }
        }

        out.seller_revenue = self
            .plans
            .iter()
            .zip(&out.branch_winners)
            .zip(rewards.iter())
            .map(|((plan, &w), &r)| plan.price * w as f64 - r)
            .sum();
        Ok(())
    }
}

impl MechanismPlan<'_, '_> {
    /// Equals `buyer_utility(&self.execute(values, rng)?, values, buyer)`
    /// bit for bit, resolving only the buyer's branch. The state of `rng`
    /// afterwards is unspecified.
    pub fn utility_of<R: Rng + ?Sized>(
        &self,
        values: &ValuationProfile,
        rng: &mut R,
        buyer: NodeId,
        scratch: &mut Scratch,
    ) -> Result<f64, MechanismError> {
        let market = self.market;
        let tree = market.tree();
        let n = tree.node_count();
        if buyer == tree.root() || buyer >= n {
            return Err(MechanismError::UnknownBuyer(buyer));
        }
        if values.len() < n {
            if let Some(&v) = market.participants().iter().find(|&&v| v >= values.len()) {
                return Err(MechanismError::MissingValuation(v));
            }
        }
        let Some(target) = market.branch_index(buyer) else {
            return Ok(0.0);
        };
        let values = values.as_slice();
        let branch = |b: usize| &self.members[self.offsets[b]..self.offsets[b + 1]];

        // Earlier oversubscribed branches consume one key per interested buyer.
        for (b, plan) in self.plans[..target].iter().enumerate() {
            if plan.quota == 0 {
                continue;
            }
            let count = branch(b)
                .iter()
                .filter(|m| values[m.node] > plan.price)
                .count();
            if count > plan.quota {
                for _ in 0..count {
                    rng.random::<u64>();
                }
            }
        }

        let plan = &self.plans[target];
        let members = branch(target);
        let Scratch {
            interested,
            candidates,
            below,
            won,
            ..
        } = scratch;
        if plan.quota == 0 {
            return Ok(0.0);
        }
        interested.clear();
        interested.extend(members.iter().filter(|m| values[m.node] > plan.price));
        if interested.is_empty() {
            return Ok(0.0);
        }
        won.clear();
        won.resize(n, false);
        if interested.len() <= plan.quota {
            interested.iter().for_each(|m| won[m.node] = true);
        } else {
            candidates.clear();
            candidates.extend(interested.iter().map(|m| Candidate {
                depth: m.depth,
                children: m.children,
                key: rng.random(),
                node: m.node,
            }));
            let rank = |c: &Candidate| (c.depth, Reverse(c.children), c.key, c.node);
            candidates.select_nth_unstable_by_key(plan.quota - 1, rank);
            candidates[..plan.quota]
                .iter()
                .for_each(|c| won[c.node] = true);
        }

        let mut net = if won[buyer] { plan.price } else { 0.0 };
        let alpha = self.params.reward_factor;
        if alpha > 0.0 {
            let root = tree.root();
            below.clear();
            below.resize(n, 0);
            for m in members.iter().rev() {
                let p = tree.parent(m.node).expect("buyer has a parent");
                if p != root {
                    below[p] += below[m.node] + won[m.node] as u32;
                }
            }
            if below[buyer] > 0 {
                let depth = market.depth(buyer).expect("participant depth");
                net -= plan.price
                    * alpha
                    * 0.5f64.powi(depth.min(i32::MAX as u32) as i32)
                    * below[buyer] as f64;
            }
        }
        let gain = if won[buyer] { values[buyer] } else { 0.0 };
        Ok(gain - net)
    }
}

/// Runs the mechanism once on `market`.
pub fn run_mechanism<R: Rng + ?Sized>(
    market: &EffectiveMarket<'_>,
    values: &ValuationProfile,
    params: MechanismParams,
    rng: &mut R,
) -> Result<MechanismOutcome, MechanismError> {
    MechanismPlan::new(market, params)?.execute(values, rng)
}

/// `pi_i * v_i - p_i`.
pub fn buyer_utility(
    outcome: &MechanismOutcome,
    values: &ValuationProfile,
    buyer: NodeId,
) -> Result<f64, MechanismError> {
    if buyer == outcome.seller || buyer >= outcome.allocation.len() {
        return Err(MechanismError::UnknownBuyer(buyer));
    }
    let gain = if outcome.allocation[buyer] {
        values
            .get(buyer)
            .ok_or(MechanismError::MissingValuation(buyer))?
    } else {
        0.0
    };
    Ok(gain - outcome.net_payment[buyer])
}
