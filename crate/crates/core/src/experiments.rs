//! Seeded Monte-Carlo harness comparing the diffusion mechanism with the
//! fixed-price baselines.
//!
//! A trial draws one tree and one valuation profile, then computes the
//! mechanism revenue `R_D`, the neighbours-only fixed-price revenue `R_0`
//! and the all-buyers fixed-price revenue `R_opt` on that same draw.
//! Trial `i` of a group uses the seed `derive_seed(master, [group, i])`, so
//! every row can be regenerated on its own and results do not depend on the
//! number of worker threads.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::auctions::{
    baseline_revenue_cached, optimal_revenue_cached, AuctionError, OptimalPriceCache,
};
use crate::mechanism::{branch_price, MechanismError, MechanismParams, MechanismPlan};
use crate::network::{
    random_tree, ActionProfile, EffectiveMarket, NetworkError, NodeId, SocialTree, ValuationProfile,
};
use crate::seed::{derive_seed, rng_from_seed, SimRng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error("invalid experiment parameter: {0}")]
    Parameter(String),
}

/// How many items to sell in a tree with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ItemRule {
    /// `max(1, n / divisor)`.
    PerNodes(usize),
    Fixed(usize),
}

impl Default for ItemRule {
    fn default() -> Self {
        ItemRule::PerNodes(20)
    }
}

impl ItemRule {
    pub fn items(self, nodes: usize) -> usize {
        match self {
            ItemRule::PerNodes(d) => (nodes / d.max(1)).max(1),
            ItemRule::Fixed(m) => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialResult {
    pub nodes: usize,
    pub items: usize,
    pub alpha: f64,
    pub rd: f64,
    pub r0: f64,
    pub ropt: f64,
    pub seed: u64,
}

/// `R_D`, `R_0`, `R_opt` on a given tree and valuation draw, under full
/// diffusion. Random tie-breaks are drawn from `rng` in that order.
pub fn revenues_on<R: Rng + ?Sized>(
    tree: &SocialTree,
    items: usize,
    alpha: f64,
    values: &ValuationProfile,
    cache: &OptimalPriceCache,
    rng: &mut R,
) -> Result<(f64, f64, f64), ExperimentError> {
    let market = EffectiveMarket::new(tree, &ActionProfile::full(tree));
    let params = MechanismParams::new(items, alpha)?;
    let rd = MechanismPlan::new(&market, params)?
        .execute(values, rng)?
        .seller_revenue;
    let r0 = baseline_revenue_cached(tree, items, values, cache, rng)?;
    let ropt = optimal_revenue_cached(tree, items, values, cache, rng)?;
    Ok((rd, r0, ropt))
}

/// One trial on a uniform random tree with `nodes` nodes (seller included).
pub fn run_trial(
    nodes: usize,
    items: usize,
    alpha: f64,
    seed: u64,
    cache: &OptimalPriceCache,
) -> Result<TrialResult, ExperimentError> {
    if items == 0 {
        return Err(ExperimentError::Parameter(
            "item count must be positive".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let tree = random_tree(nodes, &mut rng)?;
    trial_on_tree(&tree, items, alpha, seed, &mut rng, cache)
}

fn trial_on_tree(
    tree: &SocialTree,
    items: usize,
    alpha: f64,
    seed: u64,
    rng: &mut SimRng,
    cache: &OptimalPriceCache,
) -> Result<TrialResult, ExperimentError> {
    let values = ValuationProfile::sample(tree, rng);
    let (rd, r0, ropt) = revenues_on(tree, items, alpha, &values, cache, rng)?;
    Ok(TrialResult {
        nodes: tree.node_count(),
        items,
        alpha,
        rd,
        r0,
        ropt,
        seed,
    })
}

/// Fixed-point accumulator: integer addition makes merging exact, so
/// partial sums combine to the same bits in any order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExactSum(i128);

impl ExactSum {
    const SCALE: f64 = (1u64 << 40) as f64;

    pub fn add(&mut self, x: f64) {
        self.0 += (x * Self::SCALE).round() as i128;
    }

    pub fn merge(&mut self, other: ExactSum) {
        self.0 += other.0;
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / Self::SCALE
    }
}

/// Running sums for a ratio-of-sums estimator `sum(num) / sum(den)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RatioAccumulator {
    pub count: u64,
    num: ExactSum,
    den: ExactSum,
    num_sq: ExactSum,
    den_sq: ExactSum,
    cross: ExactSum,
}

impl RatioAccumulator {
    pub fn push(&mut self, num: f64, den: f64) {
        self.count += 1;
        self.num.add(num);
        self.den.add(den);
        self.num_sq.add(num * num);
        self.den_sq.add(den * den);
        self.cross.add(num * den);
    }

    pub fn merge(&mut self, other: &RatioAccumulator) {
        self.count += other.count;
        self.num.merge(other.num);
        self.den.merge(other.den);
        self.num_sq.merge(other.num_sq);
        self.den_sq.merge(other.den_sq);
        self.cross.merge(other.cross);
    }

    pub fn ratio(&self) -> f64 {
        let den = self.den.value();
        if den == 0.0 {
            f64::NAN
        } else {
            self.num.value() / den
        }
    }

    /// Delta-method standard error of the ratio of sums.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        let r = self.ratio();
        let resid =
            self.num_sq.value() - 2.0 * r * self.cross.value() + r * r * self.den_sq.value();
        let mean_den = self.den.value() / n;
        (resid.max(0.0) / (n * (n - 1.0))).sqrt() / mean_den
    }

    pub fn mean_num(&self) -> f64 {
        self.num.value() / self.count.max(1) as f64
    }

    pub fn mean_den(&self) -> f64 {
        self.den.value() / self.count.max(1) as f64
    }
}

/// Accumulated trial revenues of one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GroupStats {
    pub vs_baseline: RatioAccumulator,
    pub vs_optimal: RatioAccumulator,
}

impl GroupStats {
    pub fn push(&mut self, t: &TrialResult) {
        self.vs_baseline.push(t.rd, t.r0);
        self.vs_optimal.push(t.rd, t.ropt);
    }

    pub fn merge(&mut self, other: &GroupStats) {
        self.vs_baseline.merge(&other.vs_baseline);
        self.vs_optimal.merge(&other.vs_optimal);
    }

    pub fn from_trials(trials: &[TrialResult]) -> Self {
        let mut s = Self::default();
        trials.iter().for_each(|t| s.push(t));
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum GroupKey {
    Size { n: usize },
    Branches { mean_branches: f64, mean_size: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub key: GroupKey,
    pub items: usize,
    pub alpha: f64,
    pub trials: u64,
    pub rd_r0_ratio: f64,
    pub rd_r0_stderr: f64,
    pub rd_ropt_ratio: f64,
    pub rd_ropt_stderr: f64,
    pub mean_rd: f64,
    pub mean_r0: f64,
    pub mean_ropt: f64,
    pub seed: u64,
}

impl RatioReport {
    pub fn from_stats(
        key: GroupKey,
        items: usize,
        alpha: f64,
        seed: u64,
        stats: &GroupStats,
    ) -> Self {
        Self {
            key,
            items,
            alpha,
            trials: stats.vs_optimal.count,
            rd_r0_ratio: stats.vs_baseline.ratio(),
            rd_r0_stderr: stats.vs_baseline.std_error(),
            rd_ropt_ratio: stats.vs_optimal.ratio(),
            rd_ropt_stderr: stats.vs_optimal.std_error(),
            mean_rd: stats.vs_optimal.mean_num(),
            mean_r0: stats.vs_baseline.mean_den(),
            mean_ropt: stats.vs_optimal.mean_den(),
            seed,
        }
    }
}

/// Reports plus the per-trial rows that produced them.
#[derive(Debug, Clone, Serialize)]
pub struct TableRun {
    pub reports: Vec<RatioReport>,
    pub trials: Vec<Vec<TrialResult>>,
}

/// Runs `f(i)` for `i in 0..count` on `jobs` threads; output in index order.
pub fn parallel_map<T, F>(count: u64, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    if jobs <= 1 {
        return (0..count).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}

/// Size sweep on uniform random trees. Group `n` uses seeds
/// `derive_seed(master_seed, [n, i])`.
pub fn ratio_table(
    sizes: &[usize],
    rule: ItemRule,
    alpha: f64,
    trials: u64,
    master_seed: u64,
    jobs: usize,
) -> Result<TableRun, ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::Parameter(
            "trial count must be positive".into(),
        ));
    }
    let cache = OptimalPriceCache::new();
    let mut run = TableRun {
        reports: Vec::new(),
        trials: Vec::new(),
    };
    for &n in sizes {
        let items = rule.items(n);
        let rows = parallel_map(trials, jobs, |i| {
            run_trial(
                n,
                items,
                alpha,
                derive_seed(master_seed, &[n as u64, i]),
                &cache,
            )
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let stats = GroupStats::from_trials(&rows);
        run.reports.push(RatioReport::from_stats(
            GroupKey::Size { n },
            items,
            alpha,
            master_seed,
            &stats,
        ));
        run.trials.push(rows);
    }
    Ok(run)
}

/// Tree with a controlled number and size of seller branches.
///
/// Branch count is `1 + Poisson(mean_branches - 1)` (never zero, mean
/// `mean_branches`). The branches share `round(count * mean_size)` buyers
/// (at least one each): one per branch, the rest multinomially with equal
/// weights. Each branch is a uniform random labeled tree on its size, hung
/// from the seller by its local label 0.
pub fn branch_controlled_tree<R: Rng + ?Sized>(
    mean_branches: f64,
    mean_size: f64,
    rng: &mut R,
) -> Result<SocialTree, ExperimentError> {
    if !(mean_branches >= 1.0 && mean_size >= 1.0) {
        return Err(ExperimentError::Parameter(format!(
            "branch means must be >= 1, got ({mean_branches}, {mean_size})"
        )));
    }
    let extra = if mean_branches > 1.0 {
        Poisson::new(mean_branches - 1.0)
            .map_err(|e| ExperimentError::Parameter(e.to_string()))?
            .sample(rng) as usize
    } else {
        0
    };
    let branches = 1 + extra;
    let buyers = ((branches as f64 * mean_size).round() as usize).max(branches);
    let mut sizes = vec![1usize; branches];
    for _ in 0..buyers - branches {
        sizes[rng.random_range(0..branches)] += 1;
    }

    let mut parent: Vec<Option<NodeId>> = Vec::with_capacity(buyers + 1);
    parent.push(None);
    for &size in &sizes {
        let offset = parent.len();
        parent.push(Some(0));
        if size >= 2 {
            let local = random_tree(size, rng)?;
            for v in 1..size {
                parent.push(local.parent(v).map(|p| p + offset));
            }
        }
    }
    Ok(SocialTree::from_parents(0, parent))
}

/// Branch-shape sweep: one group per `(mean_branches, mean_size)` pair.
/// Items follow `rule` applied to the expected node count.
pub fn branch_table(
    shapes: &[(f64, f64)],
    rule: ItemRule,
    alpha: f64,
    trials: u64,
    master_seed: u64,
    jobs: usize,
) -> Result<TableRun, ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::Parameter(
            "trial count must be positive".into(),
        ));
    }
    let cache = OptimalPriceCache::new();
    let mut run = TableRun {
        reports: Vec::new(),
        trials: Vec::new(),
    };
    for (g, &(mean_branches, mean_size)) in shapes.iter().enumerate() {
        let expected_nodes = 1 + (mean_branches * mean_size).round() as usize;
        let items = rule.items(expected_nodes);
        let rows = parallel_map(trials, jobs, |i| {
            let seed = derive_seed(master_seed, &[u64::MAX - g as u64, i]);
            let mut rng = rng_from_seed(seed);
            let tree = branch_controlled_tree(mean_branches, mean_size, &mut rng)?;
            trial_on_tree(&tree, items, alpha, seed, &mut rng, &cache)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let stats = GroupStats::from_trials(&rows);
        let key = GroupKey::Branches {
            mean_branches,
            mean_size,
        };
        run.reports.push(RatioReport::from_stats(
            key,
            items,
            alpha,
            master_seed,
            &stats,
        ));
        run.trials.push(rows);
    }
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstCaseReport {
    pub buyers: usize,
    pub trials: u64,
    pub branch_price: f64,
    /// `p (1 - p)` at the branch price.
    pub predicted_rd: f64,
    pub mean_rd: f64,
    pub mean_ropt: f64,
    pub ratio: f64,
    pub std_error: f64,
    pub seed: u64,
}

/// One item, `buyers` leaves all attached to the seller.
pub fn worst_case_star(
    buyers: usize,
    trials: u64,
    alpha: f64,
    master_seed: u64,
    jobs: usize,
) -> Result<WorstCaseReport, ExperimentError> {
    if buyers == 0 || trials == 0 {
        return Err(ExperimentError::Parameter(
            "buyers and trials must be positive".into(),
        ));
    }
    let tree = SocialTree::star(buyers);
    let market = EffectiveMarket::new(&tree, &ActionProfile::full(&tree));
    let params = MechanismParams::new(1, alpha)?;
    let plan = MechanismPlan::new(&market, params)?;
    let cache = OptimalPriceCache::new();
    cache.get(buyers, 1)?;
    let rows = parallel_map(trials, jobs, |i| -> Result<(f64, f64), ExperimentError> {
        let mut rng = rng_from_seed(derive_seed(master_seed, &[buyers as u64, i]));
        let values = ValuationProfile::sample(&tree, &mut rng);
        let rd = plan.execute(&values, &mut rng)?.seller_revenue;
        let ropt = optimal_revenue_cached(&tree, 1, &values, &cache, &mut rng)?;
        Ok((rd, ropt))
    });
    let mut acc = RatioAccumulator::default();
    for row in rows {
        let (rd, ropt) = row?;
        acc.push(rd, ropt);
    }
    let price = branch_price(buyers - 1, buyers)?;
    Ok(WorstCaseReport {
        buyers,
        trials,
        branch_price: price,
        predicted_rd: price * (1.0 - price),
        mean_rd: acc.mean_num(),
        mean_ropt: acc.mean_den(),
        ratio: acc.ratio(),
        std_error: acc.std_error(),
        seed: master_seed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub trials: u64,
    pub mean_rd: f64,
    pub rd_stderr: f64,
    /// Mean winner payments before rewards.
    pub mean_gross: f64,
    /// `1 - mean_rd / mean_rd(alpha = 0)`; `None` when the sweep has no zero.
    pub relative_loss: Option<f64>,
    pub seed: u64,
}

/// Mean mechanism revenue per reward factor. Every alpha sees the same
/// trees, valuations and tie-break streams.
pub fn alpha_sweep(
    nodes: usize,
    items: usize,
    alphas: &[f64],
    trials: u64,
    master_seed: u64,
    jobs: usize,
) -> Result<Vec<AlphaRow>, ExperimentError> {
    if let Some(&bad) = alphas.iter().find(|a| !(0.0..=0.5).contains(*a)) {
        return Err(ExperimentError::Parameter(format!(
            "alpha {bad} outside [0, 0.5]"
        )));
    }
    if trials == 0 {
        return Err(ExperimentError::Parameter(
            "trial count must be positive".into(),
        ));
    }
    let per_trial = parallel_map(
        trials,
        jobs,
        |i| -> Result<Vec<(f64, f64)>, ExperimentError> {
            let seed = derive_seed(master_seed, &[nodes as u64, i]);
            let mut rng = rng_from_seed(seed);
            let tree = random_tree(nodes, &mut rng)?;
            let values = ValuationProfile::sample(&tree, &mut rng);
            let tie_seed: u64 = rng.random();
            let market = EffectiveMarket::new(&tree, &ActionProfile::full(&tree));
            alphas
                .iter()
                .map(|&alpha| {
                    let plan = MechanismPlan::new(&market, MechanismParams::new(items, alpha)?)?;
                    let out = plan.execute(&values, &mut rng_from_seed(tie_seed))?;
                    Ok((out.seller_revenue, out.gross_revenue()))
                })
                .collect()
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let n = trials as f64;
    let mut rows: Vec<AlphaRow> = alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let mut rd = ExactSum::default();
            let mut rd_sq = ExactSum::default();
            let mut gross = ExactSum::default();
            for t in &per_trial {
                rd.add(t[a].0);
                rd_sq.add(t[a].0 * t[a].0);
                gross.add(t[a].1);
            }
            let mean = rd.value() / n;
            let var = if trials > 1 {
                ((rd_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            AlphaRow {
                alpha,
                trials,
                mean_rd: mean,
                rd_stderr: (var / n).sqrt(),
                mean_gross: gross.value() / n,
                relative_loss: None,
                seed: master_seed,
            }
        })
        .collect();
    if let Some(base) = rows.iter().find(|r| r.alpha == 0.0).map(|r| r.mean_rd) {
        for r in &mut rows {
            r.relative_loss = Some(if base > 0.0 {
                1.0 - r.mean_rd / base
            } else {
                0.0
            });
        }
    }
    Ok(rows)
}

/// Mean depth of a uniformly chosen buyer in uniform random trees.
/// Diagnostic only.
pub fn mean_buyer_depth(
    nodes: usize,
    trials: u64,
    master_seed: u64,
) -> Result<f64, ExperimentError> {
    let mut total = 0.0;
    for i in 0..trials {
        let mut rng = rng_from_seed(derive_seed(master_seed, &[nodes as u64, i]));
        let tree = random_tree(nodes, &mut rng)?;
        let depths = tree.depths();
        total += depths.iter().sum::<usize>() as f64 / (nodes - 1) as f64;
    }
    Ok(total / trials as f64)
}
