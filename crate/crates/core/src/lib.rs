//! Simulation and verification toolkit for a multi-item fixed-price
//! diffusion mechanism on tree-structured social-network markets.
//!
//! The seller sits at the root of a tree; every other node is a buyer with a
//! private valuation drawn from `U[0, 1]`. Buyers may forward the sale to
//! their children. The mechanism prices each branch of the seller from the
//! sizes of the *other* branches, splits the items across branches in
//! proportion to branch size, and pays a small depth-discounted reward to
//! every ancestor of a winner.
//!
//! Modules:
//! - [`network`]: trees, Prüfer coding, uniform random trees, reachability.
//! - [`mechanism`]: branch prices, quotas, winner selection, payments.
//! - [`auctions`]: fixed-price baselines and their expected revenue.
//! - [`properties`]: individual rationality, feasibility, diffusion
//!   incentive compatibility and runtime checks.
//! - [`experiments`]: seeded Monte-Carlo harness and ratio tables.

pub mod auctions;
pub mod experiments;
pub mod mechanism;
pub mod network;
pub mod numeric;
pub mod properties;
pub mod seed;

pub use network::{ActionProfile, EffectiveMarket, NodeId, SocialTree, ValuationProfile};
