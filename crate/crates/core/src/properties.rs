//! Executable checks of the mechanism's guarantees.
//!
//! Individual rationality and feasibility are checked exactly on realized
//! outcomes. Diffusion incentive compatibility is checked in expectation:
//! for every buyer and every way of withholding the sale from some of its
//! children, expected utility under full diffusion is compared with the
//! deviation over paired valuation draws.

use std::time::{Duration, Instant};

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use crate::mechanism::{
    buyer_utility, MechanismError, MechanismOutcome, MechanismParams, MechanismPlan, Scratch,
};
use crate::network::{
    random_tree, ActionProfile, EffectiveMarket, NetworkError, NodeId, SocialTree, TreeFile,
    ValuationProfile,
};
use crate::seed::{derive_seed, rng_from_seed};

/// Largest tree `check_dic` will enumerate.
pub const MAX_DIC_NODES: usize = 14;

/// Flag threshold in standard errors.
pub const DIC_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropertyError {
    #[error("tree has {0} nodes; exhaustive deviation checks support at most {MAX_DIC_NODES}")]
    TreeTooLarge(usize),
    #[error("sample count must be positive")]
    NoSamples,
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IrViolation {
    pub buyer: NodeId,
    pub utility: f64,
}

/// Buyers with negative utility in `outcome`.
pub fn ir_violations(
    outcome: &MechanismOutcome,
    values: &ValuationProfile,
) -> Result<Vec<IrViolation>, MechanismError> {
    let mut found = Vec::new();
    for buyer in (0..outcome.allocation.len()).filter(|&v| v != outcome.seller) {
        let utility = buyer_utility(outcome, values, buyer)?;
        if utility < 0.0 {
            found.push(IrViolation { buyer, utility });
        }
    }
    Ok(found)
}

/// Runs the mechanism and reports every buyer with negative utility.
pub fn check_ir<R: Rng + ?Sized>(
    market: &EffectiveMarket<'_>,
    values: &ValuationProfile,
    params: MechanismParams,
    rng: &mut R,
) -> Result<Vec<IrViolation>, MechanismError> {
    let outcome = MechanismPlan::new(market, params)?.execute(values, rng)?;
    ir_violations(&outcome, values)
}

/// Non-participants get nothing and at most `items` are allocated.
pub fn check_feasibility(
    outcome: &MechanismOutcome,
    market: &EffectiveMarket<'_>,
    items: usize,
) -> bool {
    let allocated = outcome.allocation.iter().filter(|&&a| a).count();
    let outsiders_clear = outcome
        .allocation
        .iter()
        .enumerate()
        .all(|(v, &a)| !a || market.is_participant(v));
    let quotas_respected = outcome
        .branch_plans
        .iter()
        .zip(&outcome.branch_winners)
        .all(|(plan, &w)| w <= plan.quota);
    outsiders_clear && allocated <= items && quotas_respected
}

/// A unilateral deviation: `buyer` informs only `informed`, everyone else
/// diffuses fully.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub buyer: NodeId,
    pub informed: Vec<NodeId>,
    pub profile: ActionProfile,
}

/// All `2^c - 1` proper subsets of `buyer`'s children as deviations.
///
/// # Panics
/// If the buyer has more than 30 children.
pub fn enumerate_deviations(tree: &SocialTree, buyer: NodeId) -> Vec<Deviation> {
    let children = tree.children(buyer);
    if children.is_empty() || !tree.is_buyer(buyer) {
        return Vec::new();
    }
    assert!(children.len() <= 30, "too many children to enumerate");
    let full: u32 = (1 << children.len()) - 1;
    (0..full)
        .map(|mask| {
            let informed: Vec<NodeId> = children
                .iter()
                .enumerate()
                .filter(|(bit, _)| mask >> bit & 1 == 1)
                .map(|(_, &c)| c)
                .collect();
            let profile = ActionProfile::full(tree)
                .with_informed(tree, buyer, &informed)
                .expect("subset of children");
            Deviation {
                buyer,
                informed,
                profile,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub buyer: NodeId,
    /// Children the buyer informs under the deviation.
    pub deviation: Vec<NodeId>,
    pub mean_utility_truthful: f64,
    pub mean_utility_deviating: f64,
    /// Standard error of the paired difference.
    pub std_error: f64,
    pub sample_count: u64,
    /// Price of the buyer's branch under each arm.
    pub branch_price_truthful: f64,
    pub branch_price_deviating: f64,
}

impl DeviationReport {
    pub fn gap(&self) -> f64 {
        self.mean_utility_truthful - self.mean_utility_deviating
    }

    pub fn is_violation(&self) -> bool {
        self.mean_utility_deviating > self.mean_utility_truthful + DIC_SIGMA * self.std_error
    }
}

#[derive(Default, Clone, Copy)]
struct Paired {
    truthful: f64,
    deviating: f64,
    diff: f64,
    diff_sq: f64,
}

/// Estimates truthful vs deviating expected utility for every buyer and
/// every deviation of `tree`.
///
/// Sample `s` draws one valuation profile and one tie-breaking seed from the
/// stream seeded by `seed`; both arms of every comparison see the same
/// draw. Re-running with the same arguments reproduces every report.
pub fn check_dic(
    tree: &SocialTree,
    params: MechanismParams,
    samples: u64,
    seed: u64,
) -> Result<Vec<DeviationReport>, PropertyError> {
    if tree.node_count() > MAX_DIC_NODES {
        return Err(PropertyError::TreeTooLarge(tree.node_count()));
    }
    if samples == 0 {
        return Err(PropertyError::NoSamples);
    }
    let deviations: Vec<Deviation> = tree
        .buyers()
        .flat_map(|b| enumerate_deviations(tree, b))
        .collect();
    if deviations.is_empty() {
        return Ok(Vec::new());
    }
    let full = ActionProfile::full(tree);
    let truth_market = EffectiveMarket::new(tree, &full);
    let truth_plan = MechanismPlan::new(&truth_market, params)?;
    let markets: Vec<EffectiveMarket<'_>> = deviations
        .iter()
        .map(|d| EffectiveMarket::new(tree, &d.profile))
        .collect();
    let plans = markets
        .iter()
        .map(|m| MechanismPlan::new(m, params))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = rng_from_seed(seed);
    let mut values = ValuationProfile::sample(tree, &mut rng);
    let mut truth_out = truth_plan.execute(&values, &mut SmallRng::seed_from_u64(0))?;
    let mut truthful_utility = vec![0.0; tree.node_count()];
    let mut acc = vec![Paired::default(); deviations.len()];
    let mut scratch = Scratch::default();

    for s in 0..samples {
        if s > 0 {
            values.resample(tree, &mut rng);
        }
        let tie_seed: u64 = rng.random();
        truth_plan.execute_with(
            &values,
            &mut SmallRng::seed_from_u64(tie_seed),
            &mut truth_out,
            &mut scratch,
        )?;
        for b in tree.buyers() {
            truthful_utility[b] = buyer_utility(&truth_out, &values, b)?;
        }
        for ((dev, plan), a) in deviations.iter().zip(&plans).zip(acc.iter_mut()) {
            let u_dev = plan.utility_of(
                &values,
                &mut SmallRng::seed_from_u64(tie_seed),
                dev.buyer,
                &mut scratch,
            )?;
            let u_truth = truthful_utility[dev.buyer];
            let d = u_truth - u_dev;
            a.truthful += u_truth;
            a.deviating += u_dev;
            a.diff += d;
            a.diff_sq += d * d;
        }
    }

    let n = samples as f64;
    let price_of = |plan: &MechanismPlan<'_, '_>, market: &EffectiveMarket<'_>, buyer: NodeId| {
        market
            .branch_index(buyer)
            .map_or(f64::NAN, |b| plan.branch_plans()[b].price)
    };
    Ok(deviations
        .iter()
        .zip(&acc)
        .zip(plans.iter().zip(&markets))
        .map(|((dev, a), (plan, market))| {
            let mean_diff = a.diff / n;
            let var = if samples > 1 {
                ((a.diff_sq - n * mean_diff * mean_diff) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            DeviationReport {
                buyer: dev.buyer,
                deviation: dev.informed.clone(),
                mean_utility_truthful: a.truthful / n,
                mean_utility_deviating: a.deviating / n,
                std_error: (var / n).sqrt(),
                sample_count: samples,
                branch_price_truthful: price_of(&truth_plan, &truth_market, dev.buyer),
                branch_price_deviating: price_of(plan, market, dev.buyer),
            }
        })
        .collect())
}

/// Reproducible record of a flagged deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub tree: TreeFile,
    pub seed: u64,
    pub items: usize,
    pub reward_factor: f64,
    pub buyer: NodeId,
    pub deviation: Vec<NodeId>,
    pub mean_utility_truthful: f64,
    pub mean_utility_deviating: f64,
    pub std_error: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DicSweep {
    pub trees: usize,
    pub comparisons: usize,
    pub violations: Vec<Counterexample>,
    /// Smallest `gap / std_error` seen (most suspicious comparison).
    pub min_z: Option<f64>,
}

/// Runs [`check_dic`] over every rooted tree shape with `2..=max_nodes`
/// nodes and every `(items, alpha)` combination.
pub fn dic_sweep(
    max_nodes: usize,
    item_counts: &[usize],
    alphas: &[f64],
    samples: u64,
    master_seed: u64,
) -> Result<DicSweep, PropertyError> {
    let mut sweep = DicSweep::default();
    for nodes in 2..=max_nodes {
        for (t, tree) in rooted_trees(nodes).iter().enumerate() {
            sweep.trees += 1;
            for &items in item_counts {
                for (a, &alpha) in alphas.iter().enumerate() {
                    let params = MechanismParams::new(items, alpha)?;
                    let seed = derive_seed(
                        master_seed,
                        &[nodes as u64, t as u64, items as u64, a as u64],
                    );
                    for report in check_dic(tree, params, samples, seed)? {
                        sweep.comparisons += 1;
                        if report.std_error > 0.0 {
                            let z = report.gap() / report.std_error;
                            sweep.min_z = Some(sweep.min_z.map_or(z, |m: f64| m.min(z)));
                        }
                        if report.is_violation() {
                            sweep.violations.push(Counterexample {
                                tree: tree.to_file(),
                                seed,
                                items,
                                reward_factor: alpha,
                                buyer: report.buyer,
                                deviation: report.deviation,
                                mean_utility_truthful: report.mean_utility_truthful,
                                mean_utility_deviating: report.mean_utility_deviating,
                                std_error: report.std_error,
                                samples,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(sweep)
}

/// Reward factors drawn by [`outcome_sweep`].
pub const SWEEP_ALPHAS: [f64; 3] = [0.0, 0.01, 0.1];

/// A random instance whose outcome broke IR or feasibility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceFailure {
    pub instance: u64,
    pub seed: u64,
    pub nodes: usize,
    pub items: usize,
    pub reward_factor: f64,
    pub ir: Vec<IrViolation>,
    pub feasible: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct OutcomeSweep {
    pub instances: u64,
    pub ir_violations: usize,
    pub feasibility_violations: usize,
    pub failures: Vec<InstanceFailure>,
}

/// Checks IR and feasibility exactly on `instances` random instances.
///
/// Instance `i` is seeded by `derive_seed(master_seed, [i])` and draws
/// `n` in `2..=max_nodes`, `m` in `1..=n`, alpha from [`SWEEP_ALPHAS`], a
/// uniform random tree and valuations. Every fourth instance also lets each
/// buyer withhold the sale from each child with probability 1/4.
pub fn outcome_sweep(
    instances: u64,
    max_nodes: usize,
    master_seed: u64,
) -> Result<OutcomeSweep, PropertyError> {
    let mut sweep = OutcomeSweep::default();
    let max_nodes = max_nodes.max(2);
    for i in 0..instances {
        let seed = derive_seed(master_seed, &[i]);
        let mut rng = rng_from_seed(seed);
        let nodes = rng.random_range(2..=max_nodes);
        let items = rng.random_range(1..=nodes);
        let alpha = SWEEP_ALPHAS[rng.random_range(0..SWEEP_ALPHAS.len())];
        let tree = random_tree(nodes, &mut rng)?;
        let mut actions = ActionProfile::full(&tree);
        if i % 4 == 3 {
            for b in tree.buyers() {
                let kept: Vec<NodeId> = tree
                    .children(b)
                    .iter()
                    .copied()
                    .filter(|_| rng.random_range(0..4) != 0)
                    .collect();
                actions.set_informed(&tree, b, &kept)?;
            }
        }
        let values = ValuationProfile::sample(&tree, &mut rng);
        let market = EffectiveMarket::new(&tree, &actions);
        let params = MechanismParams::new(items, alpha)?;
        let outcome = MechanismPlan::new(&market, params)?.execute(&values, &mut rng)?;
        let ir = ir_violations(&outcome, &values)?;
        let feasible = check_feasibility(&outcome, &market, items);
        sweep.instances += 1;
        if !ir.is_empty() || !feasible {
            sweep.ir_violations += ir.len();
            sweep.feasibility_violations += usize::from(!feasible);
            sweep.failures.push(InstanceFailure {
                instance: i,
                seed,
                nodes,
                items,
                reward_factor: alpha,
                ir,
                feasible,
            });
        }
    }
    Ok(sweep)
}

/// One representative of every unlabeled rooted tree on `node_count` nodes,
/// labeled in preorder with the root at 0 (Beyer-Hedetniemi level
/// sequences).
pub fn rooted_trees(node_count: usize) -> Vec<SocialTree> {
    if node_count == 0 {
        return Vec::new();
    }
    let mut levels: Vec<usize> = (0..node_count).collect();
    let mut out = Vec::new();
    loop {
        out.push(tree_from_levels(&levels));
        let Some(p) = (1..node_count).rev().find(|&i| levels[i] > 1) else {
            break;
        };
        let q = (0..p)
            .rev()
            .find(|&i| levels[i] == levels[p] - 1)
            .expect("parent level exists");
        for i in p..node_count {
            levels[i] = levels[i - (p - q)];
        }
    }
    out
}

fn tree_from_levels(levels: &[usize]) -> SocialTree {
    let mut parent = vec![None; levels.len()];
    let mut last_at_level: Vec<NodeId> = Vec::with_capacity(levels.len());
    for (v, &l) in levels.iter().enumerate() {
        last_at_level.truncate(l);
        if l > 0 {
            parent[v] = Some(last_at_level[l - 1]);
        }
        last_at_level.push(v);
    }
    SocialTree::from_parents(0, parent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeShape {
    Star,
    Path,
    Random,
}

impl TreeShape {
    pub fn build<R: Rng + ?Sized>(self, node_count: usize, rng: &mut R) -> SocialTree {
        match self {
            TreeShape::Star => SocialTree::star(node_count - 1),
            TreeShape::Path => SocialTree::path(node_count),
            TreeShape::Random => random_tree(node_count.max(2), rng).expect("node count >= 2"),
        }
    }
}

impl std::str::FromStr for TreeShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "star" => Ok(Self::Star),
            "path" => Ok(Self::Path),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown tree shape {other:?} (star|path|random)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimingRow {
    pub nodes: usize,
    pub seconds: f64,
    pub repetitions: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityReport {
    pub shape: TreeShape,
    pub rows: Vec<TimingRow>,
    /// Least-squares fit `seconds = intercept + slope * nodes`.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square relative residual of the fit.
    pub relative_residual: f64,
}

impl ComplexityReport {
    /// Time ratios between consecutive rows.
    pub fn step_ratios(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| w[1].seconds / w[0].seconds)
            .collect()
    }
}

/// Items sold in benchmark runs.
pub fn bench_items(node_count: usize) -> usize {
    (node_count / 20).max(1)
}

/// Wall time of one full mechanism execution (reachability pass, planning,
/// winner selection, payments) per tree size. Sizes are timed round-robin
/// until each has at least three repetitions and `min_time` of measured
/// time; the fastest repetition is reported.
pub fn measure_complexity<R: Rng + ?Sized>(
    sizes: &[usize],
    shape: TreeShape,
    min_time: Duration,
    rng: &mut R,
) -> Result<ComplexityReport, PropertyError> {
    struct Case {
        tree: SocialTree,
        values: ValuationProfile,
        actions: ActionProfile,
        params: MechanismParams,
        best: f64,
        spent: f64,
        reps: u32,
    }
    let mut cases = sizes
        .iter()
        .map(|&nodes| {
            let tree = shape.build(nodes, rng);
            let values = ValuationProfile::sample(&tree, rng);
            let actions = ActionProfile::full(&tree);
            let params = MechanismParams::new(bench_items(nodes), 0.01)?;
            Ok(Case {
                tree,
                values,
                actions,
                params,
                best: f64::INFINITY,
                spent: 0.0,
                reps: 0,
            })
        })
        .collect::<Result<Vec<_>, PropertyError>>()?;
    let target = min_time.as_secs_f64();
    while cases.iter().any(|c| c.reps < 3 || c.spent < target) {
        for c in cases.iter_mut().filter(|c| c.reps < 3 || c.spent < target) {
            let mut tie = SmallRng::seed_from_u64(c.reps as u64);
            let t0 = Instant::now();
            let market = EffectiveMarket::new(&c.tree, &c.actions);
            let outcome = MechanismPlan::new(&market, c.params)?.execute(&c.values, &mut tie)?;
            std::hint::black_box(outcome.seller_revenue);
            drop(outcome);
            drop(market);
            let dt = t0.elapsed().as_secs_f64();
            c.best = c.best.min(dt);
            c.spent += dt;
            c.reps += 1;
        }
    }
    let rows: Vec<TimingRow> = cases
        .iter()
        .map(|c| TimingRow {
            nodes: c.tree.node_count(),
            seconds: c.best,
            repetitions: c.reps,
        })
        .collect();
    let (slope, intercept) = linear_fit(&rows);
    let relative_residual = if rows.is_empty() {
        0.0
    } else {
        (rows
            .iter()
            .map(|r| ((intercept + slope * r.nodes as f64 - r.seconds) / r.seconds).powi(2))
            .sum::<f64>()
            / rows.len() as f64)
            .sqrt()
    };
    Ok(ComplexityReport {
        shape,
        rows,
        slope,
        intercept,
        relative_residual,
    })
}

fn linear_fit(rows: &[TimingRow]) -> (f64, f64) {
    let n = rows.len() as f64;
    if rows.len() < 2 {
        return (
            rows.first().map_or(0.0, |r| r.seconds / r.nodes as f64),
            0.0,
        );
    }
    let mx = rows.iter().map(|r| r.nodes as f64).sum::<f64>() / n;
    let my = rows.iter().map(|r| r.seconds).sum::<f64>() / n;
    let sxy: f64 = rows
        .iter()
        .map(|r| (r.nodes as f64 - mx) * (r.seconds - my))
        .sum();
    let sxx: f64 = rows.iter().map(|r| (r.nodes as f64 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
