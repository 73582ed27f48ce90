//! Tree-structured markets.
//!
//! Node ids are dense integers `0..n`; the seller is the root (label 0 for
//! every generated tree) and every other node is a buyer. Children are kept
//! in ascending id order so that all downstream tie-breaking is reproducible.

mod actions;
mod market;
mod pruefer;
mod tree;

pub use actions::ActionProfile;
pub use market::{Branch, EffectiveMarket};
pub use pruefer::{decode_pruefer, encode_pruefer, parse_pruefer_lines, random_tree};
pub use tree::{SocialTree, TreeFile};

use rand::Rng;
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("edge set contains a cycle (closing edge touches node {0})")]
    Cycle(NodeId),
    #[error("graph is disconnected: node {0} cannot be reached from the root")]
    Disconnected(NodeId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(NodeId, NodeId),
    #[error("root {0} does not appear in the edge set")]
    RootAbsent(NodeId),
    #[error("label {label} out of range for a tree with {node_count} nodes")]
    LabelOutOfRange { label: NodeId, node_count: usize },
    #[error("Prüfer sequence has length {actual}, expected {expected}")]
    SequenceLength { expected: usize, actual: usize },
    #[error("need at least {min} nodes, got {actual}")]
    TooSmall { min: usize, actual: usize },
    #[error("node {0} is not a buyer")]
    NotABuyer(NodeId),
    #[error("node {child} is not a child of buyer {buyer}")]
    NotAChild { buyer: NodeId, child: NodeId },
    #[error("profile covers {actual} nodes but the tree has {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("valuation {value} of buyer {buyer} is outside [0, 1]")]
    InvalidValuation { buyer: NodeId, value: f64 },
    #[error("malformed tree description: {0}")]
    Format(String),
}

/// Private valuations indexed by node id. The seller's slot is unused and
/// holds 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationProfile {
    values: Vec<f64>,
}

impl ValuationProfile {
    /// Builds a profile from per-node values; entry 0 (the seller) is ignored
    /// when the tree is rooted at 0 but must still lie in `[0, 1]`.
    pub fn new(values: Vec<f64>) -> Result<Self, NetworkError> {
        if let Some((buyer, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(NetworkError::InvalidValuation { buyer, value });
        }
        Ok(Self { values })
    }

    /// Draws i.i.d. `U[0, 1)` values for every buyer of `tree`.
    pub fn sample<R: Rng + ?Sized>(tree: &SocialTree, rng: &mut R) -> Self {
        let mut values = Vec::with_capacity(tree.node_count());
        Self::resample_into(tree, rng, &mut values);
        Self { values }
    }

    /// Redraws every buyer value in place, reusing the allocation.
    pub fn resample<R: Rng + ?Sized>(&mut self, tree: &SocialTree, rng: &mut R) {
        Self::resample_into(tree, rng, &mut self.values);
    }

    fn resample_into<R: Rng + ?Sized>(tree: &SocialTree, rng: &mut R, values: &mut Vec<f64>) {
        values.clear();
        let root = tree.root();
        values.extend((0..tree.node_count()).map(|v| {
            if v == root {
                0.0
            } else {
                rng.random::<f64>()
            }
        }));
    }

    pub fn get(&self, node: NodeId) -> Option<f64> {
        self.values.get(node).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Every buyer forwards the sale to all of its children.
pub fn full_diffusion(tree: &SocialTree) -> ActionProfile {
    ActionProfile::full(tree)
}

/// Participants, branches, depths and child counts under `actions`.
pub fn effective_market<'t>(tree: &'t SocialTree, actions: &ActionProfile) -> EffectiveMarket<'t> {
    EffectiveMarket::new(tree, actions)
}
