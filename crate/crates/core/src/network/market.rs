use serde::Serialize;

use super::{ActionProfile, NodeId, SocialTree};

const NONE: u32 = u32::MAX;

/// A subtree hanging off the seller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Branch {
    pub root: NodeId,
    /// Number of participating buyers in the branch (`k_i`).
    pub size: usize,
}

/// The part of a tree reached by the sale under an action profile.
///
/// Built with a single breadth-first pass. Branches are ordered by ascending
/// branch-root id.
#[derive(Debug, Clone)]
pub struct EffectiveMarket<'t> {
    tree: &'t SocialTree,
    order: Vec<NodeId>,
    depth: Vec<u32>,
    child_count: Vec<u32>,
    branch_of: Vec<u32>,
    branches: Vec<Branch>,
    total_size: usize,
}

impl<'t> EffectiveMarket<'t> {
    /// # Panics
    /// If `actions` was built for a tree of a different size.
    pub fn new(tree: &'t SocialTree, actions: &ActionProfile) -> Self {
        assert_eq!(
            actions.node_count(),
            tree.node_count(),
            "action profile does not match the tree"
        );
        let n = tree.node_count();
        let root = tree.root();
        let mut depth = vec![NONE; n];
        let mut child_count = vec![0u32; n];
        let mut branch_of = vec![NONE; n];
        let mut order = Vec::with_capacity(n.saturating_sub(1));
        let mut branches = Vec::with_capacity(tree.children(root).len());
        depth[root] = 0;

        for (b, &c) in tree.children(root).iter().enumerate() {
            depth[c] = 1;
            branch_of[c] = b as u32;
            order.push(c);
            branches.push(Branch { root: c, size: 0 });
        }
        child_count[root] = branches.len() as u32;
        // `order` doubles as the BFS queue.
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            let b = branch_of[u];
            branches[b as usize].size += 1;
            for &c in tree.children(u) {
                if actions.is_informed(tree, c) {
                    depth[c] = depth[u] + 1;
                    branch_of[c] = b;
                    child_count[u] += 1;
                    order.push(c);
                }
            }
        }
        let total_size = order.len();
        Self {
            tree,
            order,
            depth,
            child_count,
            branch_of,
            branches,
            total_size,
        }
    }

    pub fn tree(&self) -> &'t SocialTree {
        self.tree
    }

    /// Participating buyers in breadth-first order.
    pub fn participants(&self) -> &[NodeId] {
        &self.order
    }

    pub fn is_participant(&self, node: NodeId) -> bool {
        node != self.tree.root() && self.depth[node] != NONE
    }

    /// Number of branches (`x`).
    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Total participating buyers (`k`).
    pub fn total_size(&self) -> usize {
        self.total_size
    }

    /// Participants outside branch `index` (`k_{-i}`).
    pub fn others_size(&self, index: usize) -> usize {
        self.total_size - self.branches[index].size
    }

    /// Index into [`EffectiveMarket::branches`] for a participant.
    pub fn branch_index(&self, node: NodeId) -> Option<usize> {
        match self.branch_of[node] {
            NONE => None,
            b => Some(b as usize),
        }
    }

    pub fn branch_root(&self, node: NodeId) -> Option<NodeId> {
        self.branch_index(node).map(|b| self.branches[b].root)
    }

    /// Depth from the seller; `None` for non-participants.
    pub fn depth(&self, node: NodeId) -> Option<u32> {
        match self.depth[node] {
            NONE => None,
            d => Some(d),
        }
    }

    /// Number of participating children.
    pub fn child_count(&self, node: NodeId) -> u32 {
        self.child_count[node]
    }

    /// Buyers on the path from the seller down to `node`, excluding the
    /// seller and `node` itself, nearest first.
    pub fn ancestors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let root = self.tree.root();
        std::iter::successors(self.tree.parent(node), move |&p| self.tree.parent(p))
            .take_while(move |&p| p != root)
    }
}
