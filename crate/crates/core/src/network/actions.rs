use super::{NetworkError, NodeId, SocialTree};

/// Per-buyer diffusion decisions.
///
/// Each node has exactly one parent, so "buyer `i` informs child `c`" is
/// stored as a flag on `c`. `informed(i)` is therefore always a subset of
/// `children(i)`. The seller always informs its own children; their flags
/// are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionProfile {
    informed_by_parent: Vec<bool>,
}

impl ActionProfile {
    /// Truthful profile: every buyer informs all of its children.
    pub fn full(tree: &SocialTree) -> Self {
        let root = tree.root();
        Self {
            informed_by_parent: (0..tree.node_count()).map(|v| v != root).collect(),
        }
    }

    /// No buyer diffuses; only the seller's children take part.
    pub fn silent(tree: &SocialTree) -> Self {
        let root = tree.root();
        Self {
            informed_by_parent: (0..tree.node_count())
                .map(|v| tree.parent(v) == Some(root))
                .collect(),
        }
    }

    /// Replaces buyer `buyer`'s action with "inform exactly `children`".
    pub fn set_informed(
        &mut self,
        tree: &SocialTree,
        buyer: NodeId,
        children: &[NodeId],
    ) -> Result<(), NetworkError> {
        self.check_size(tree)?;
        if !tree.is_buyer(buyer) {
            return Err(NetworkError::NotABuyer(buyer));
        }
        if let Some(&child) = children
            .iter()
            .find(|&&c| c >= tree.node_count() || tree.parent(c) != Some(buyer))
        {
            return Err(NetworkError::NotAChild { buyer, child });
        }
        for &c in tree.children(buyer) {
            self.informed_by_parent[c] = false;
        }
        for &c in children {
            self.informed_by_parent[c] = true;
        }
        Ok(())
    }

    /// Builder form of [`ActionProfile::set_informed`].
    pub fn with_informed(
        mut self,
        tree: &SocialTree,
        buyer: NodeId,
        children: &[NodeId],
    ) -> Result<Self, NetworkError> {
        self.set_informed(tree, buyer, children)?;
        Ok(self)
    }

    /// Whether `node`'s parent forwards the sale to it.
    pub fn is_informed(&self, tree: &SocialTree, node: NodeId) -> bool {
        match tree.parent(node) {
            Some(p) if p == tree.root() => true,
            Some(_) => self.informed_by_parent[node],
            None => false,
        }
    }

    /// The children `buyer` diffuses to, ascending.
    pub fn informed_children<'a>(
        &'a self,
        tree: &'a SocialTree,
        buyer: NodeId,
    ) -> impl Iterator<Item = NodeId> + 'a {
        tree.children(buyer)
            .iter()
            .copied()
            .filter(move |&c| self.is_informed(tree, c))
    }

    pub fn node_count(&self) -> usize {
        self.informed_by_parent.len()
    }

    fn check_size(&self, tree: &SocialTree) -> Result<(), NetworkError> {
        if self.node_count() != tree.node_count() {
            return Err(NetworkError::SizeMismatch {
                expected: tree.node_count(),
                actual: self.node_count(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_profile_on_path_and_star() {
        let path = SocialTree::path(3);
        let a = ActionProfile::full(&path);
        assert_eq!(a.informed_children(&path, 1).collect::<Vec<_>>(), vec![2]);
        let star = SocialTree::star(4);
        let s = ActionProfile::full(&star);
        for leaf in 1..=4 {
            assert_eq!(s.informed_children(&star, leaf).count(), 0);
        }
    }

    #[test]
    fn subset_enforced() {
        let t = SocialTree::from_edges(&[(0, 1), (0, 2), (1, 3), (1, 4)], 0).unwrap();
        let a = ActionProfile::full(&t).with_informed(&t, 1, &[4]).unwrap();
        assert_eq!(a.informed_children(&t, 1).collect::<Vec<_>>(), vec![4]);
        assert_eq!(
            ActionProfile::full(&t).with_informed(&t, 1, &[2]),
            Err(NetworkError::NotAChild { buyer: 1, child: 2 })
        );
        assert_eq!(
            ActionProfile::full(&t).with_informed(&t, 0, &[]),
            Err(NetworkError::NotABuyer(0))
        );
    }

    #[test]
    fn seller_children_always_informed() {
        let t = SocialTree::star(2);
        let a = ActionProfile::silent(&t);
        assert!(a.is_informed(&t, 1) && a.is_informed(&t, 2));
    }
}
