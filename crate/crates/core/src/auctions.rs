//! Fixed-price auctions used as baselines.
//!
//! The seller posts one price to a set of buyers; everyone whose value
//! exceeds it is interested and, if there are more interested buyers than
//! items, the items go to a uniformly random subset of them.
//!
//! With i.i.d. `U[0, 1]` values the number of interested buyers at price
//! `p` is `Binomial(n, 1 - p)`, so the expected revenue is
//! `p * E[min(X, m)]`. The optimal price is chosen ex ante on that curve.

use std::collections::HashMap;
use std::sync::RwLock;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::network::{NodeId, SocialTree, ValuationProfile};
use crate::numeric::binomial_expectation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuctionError {
    #[error("price {0} outside [0, 1]")]
    PriceOutOfRange(f64),
    #[error("buyer count must be positive")]
    NoBuyers,
    #[error("item count must be positive")]
    NoItems,
    #[error("expected {expected} valuations, got {actual}")]
    ValuationCount { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPriceConfig {
    pub buyers: usize,
    pub items: usize,
    pub price: f64,
}

impl FixedPriceConfig {
    pub fn new(buyers: usize, items: usize, price: f64) -> Result<Self, AuctionError> {
        if buyers == 0 {
            return Err(AuctionError::NoBuyers);
        }
        if items == 0 {
            return Err(AuctionError::NoItems);
        }
        check_price(price)?;
        Ok(Self {
            buyers,
            items,
            price,
        })
    }
}

fn check_price(price: f64) -> Result<(), AuctionError> {
    if (0.0..=1.0).contains(&price) {
        Ok(())
    } else {
        Err(AuctionError::PriceOutOfRange(price))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPriceOutcome {
    /// Indices into the valuation slice.
    pub winners: Vec<usize>,
    pub revenue: f64,
}

/// Realized outcome of one fixed-price auction.
pub fn run_fp_auction<R: Rng + ?Sized>(
    config: &FixedPriceConfig,
    values: &[f64],
    rng: &mut R,
) -> Result<FixedPriceOutcome, AuctionError> {
    if values.len() != config.buyers {
        return Err(AuctionError::ValuationCount {
            expected: config.buyers,
            actual: values.len(),
        });
    }
    let mut interested: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] > config.price)
        .collect();
    if interested.len() > config.items {
        interested.partial_shuffle(rng, config.items);
        interested.truncate(config.items);
    }
    interested.sort_unstable();
    let revenue = config.price * interested.len() as f64;
    Ok(FixedPriceOutcome {
        winners: interested,
        revenue,
    })
}

/// `p * sum_j min(j, m) C(n, j) (1-p)^j p^(n-j)`.
pub fn expected_fp_revenue(buyers: usize, items: usize, price: f64) -> Result<f64, AuctionError> {
    check_price(price)?;
    Ok(expected_revenue_unchecked(
        buyers as u64,
        items as u64,
        price,
    ))
}

fn expected_revenue_unchecked(n: u64, m: u64, p: f64) -> f64 {
    if p == 0.0 || m == 0 {
        return 0.0;
    }
    p * binomial_expectation(n, 1.0 - p, |j| j.min(m) as f64)
}

/// Single-item optimum `(1/(1+n))^(1/n)`.
pub fn single_item_optimal_price(buyers: usize) -> Result<f64, AuctionError> {
    if buyers == 0 {
        return Err(AuctionError::NoBuyers);
    }
    let n = buyers as f64;
    Ok((-n.ln_1p() / n).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PricePoint {
    pub price: f64,
    pub expected_revenue: f64,
}

const GRID_STEP: f64 = 1e-3;
const PRICE_TOLERANCE: f64 = 1e-9;

/// Price maximizing [`expected_fp_revenue`]: grid scan at step `1e-3`, then
/// golden-section search on the bracketing cells.
pub fn optimal_fp_price(buyers: usize, items: usize) -> Result<PricePoint, AuctionError> {
    if buyers == 0 {
        return Err(AuctionError::NoBuyers);
    }
    if items == 0 {
        return Err(AuctionError::NoItems);
    }
    let (n, m) = (buyers as u64, items as u64);
    let f = |p: f64| expected_revenue_unchecked(n, m, p);
    let cells = (1.0 / GRID_STEP).round() as usize;
    let (best, _) = (0..=cells).map(|i| (i, f(i as f64 * GRID_STEP))).fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, r)| if r > acc.1 { (i, r) } else { acc },
    );
    let lo = best.saturating_sub(1) as f64 * GRID_STEP;
    let hi = ((best + 1).min(cells) as f64 * GRID_STEP).min(1.0);
    let price = golden_section_max(f, lo, hi, PRICE_TOLERANCE);
    Ok(PricePoint {
        price,
        expected_revenue: f(price),
    })
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Memoized [`optimal_fp_price`], shareable across worker threads.
#[derive(Debug, Default)]
pub struct OptimalPriceCache {
    table: RwLock<HashMap<(usize, usize), PricePoint>>,
}

impl OptimalPriceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, buyers: usize, items: usize) -> Result<PricePoint, AuctionError> {
        if let Some(&hit) = self.table.read().expect("cache lock").get(&(buyers, items)) {
            return Ok(hit);
        }
        let point = optimal_fp_price(buyers, items)?;
        self.table
            .write()
            .expect("cache lock")
            .insert((buyers, items), point);
        Ok(point)
    }
}

fn auction_among<R: Rng + ?Sized>(
    buyers: &[NodeId],
    items: usize,
    values: &ValuationProfile,
    cache: &OptimalPriceCache,
    rng: &mut R,
) -> Result<f64, AuctionError> {
    if buyers.is_empty() || items == 0 {
        return Ok(0.0);
    }
    let slice: Vec<f64> = buyers
        .iter()
        .map(|&v| {
            values.get(v).ok_or(AuctionError::ValuationCount {
                expected: v + 1,
                actual: values.len(),
            })
        })
        .collect::<Result<_, _>>()?;
    let price = cache.get(buyers.len(), items)?.price;
    let config = FixedPriceConfig::new(buyers.len(), items, price)?;
    Ok(run_fp_auction(&config, &slice, rng)?.revenue)
}

/// `R_0`: optimal fixed-price auction among the seller's direct neighbours.
pub fn baseline_revenue<R: Rng + ?Sized>(
    tree: &SocialTree,
    items: usize,
    values: &ValuationProfile,
    rng: &mut R,
) -> Result<f64, AuctionError> {
    baseline_revenue_cached(tree, items, values, &OptimalPriceCache::new(), rng)
}

pub fn baseline_revenue_cached<R: Rng + ?Sized>(
    tree: &SocialTree,
    items: usize,
    values: &ValuationProfile,
    cache: &OptimalPriceCache,
    rng: &mut R,
) -> Result<f64, AuctionError> {
    auction_among(tree.children(tree.root()), items, values, cache, rng)
}

/// `R_opt`: optimal fixed-price auction among every buyer in the tree.
pub fn optimal_revenue<R: Rng + ?Sized>(
    tree: &SocialTree,
    items: usize,
    values: &ValuationProfile,
    rng: &mut R,
) -> Result<f64, AuctionError> {
    optimal_revenue_cached(tree, items, values, &OptimalPriceCache::new(), rng)
}

pub fn optimal_revenue_cached<R: Rng + ?Sized>(
    tree: &SocialTree,
    items: usize,
    values: &ValuationProfile,
    cache: &OptimalPriceCache,
    rng: &mut R,
) -> Result<f64, AuctionError> {
    let buyers: Vec<NodeId> = tree.buyers().collect();
    auction_among(&buyers, items, values, cache, rng)
}
