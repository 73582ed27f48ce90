use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{NetworkError, NodeId};

/// Rooted labeled tree. The root is the seller; all other nodes are buyers.
///
/// Children are stored in one flat array (CSR layout) in ascending id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialTree {
    root: NodeId,
    parent: Vec<Option<NodeId>>,
    child_offsets: Vec<usize>,
    child_list: Vec<NodeId>,
}

/// On-disk JSON form: `{"n": <int>, "root": 0, "edges": [[u, v], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeFile {
    pub n: usize,
    pub root: NodeId,
    pub edges: Vec<[NodeId; 2]>,
}

impl SocialTree {
    /// Orients an undirected edge list away from `root`.
    ///
    /// The node set is `0..=max(label)`; every label in that range must be
    /// covered. A lone root with no edges is the one-node tree.
    pub fn from_edges(edges: &[(NodeId, NodeId)], root: NodeId) -> Result<Self, NetworkError> {
        if edges.is_empty() {
            return if root == 0 {
                Ok(Self::from_parents(0, vec![None]))
            } else {
                Err(NetworkError::Disconnected(0))
            };
        }
        let node_count = edges.iter().map(|&(u, v)| u.max(v)).max().unwrap_or(0) + 1;
        Self::validated(node_count, edges, root)
    }

    /// Like [`SocialTree::from_edges`] but with an explicit node count, so a
    /// label `>= node_count` is reported as out of range.
    pub fn from_edges_with_count(
        node_count: usize,
        edges: &[(NodeId, NodeId)],
        root: NodeId,
    ) -> Result<Self, NetworkError> {
        if node_count == 0 {
            return Err(NetworkError::TooSmall { min: 1, actual: 0 });
        }
        for &label in edges
            .iter()
            .flat_map(|(u, v)| [u, v])
            .chain(std::iter::once(&root))
        {
            if label >= node_count {
                return Err(NetworkError::LabelOutOfRange { label, node_count });
            }
        }
        if edges.is_empty() {
            return if node_count == 1 {
                Ok(Self::from_parents(root, vec![None]))
            } else {
                Err(NetworkError::Disconnected(if root == 0 { 1 } else { 0 }))
            };
        }
        Self::validated(node_count, edges, root)
    }

    fn validated(
        node_count: usize,
        edges: &[(NodeId, NodeId)],
        root: NodeId,
    ) -> Result<Self, NetworkError> {
        let mut seen = HashSet::with_capacity(edges.len());
        for &(u, v) in edges {
            if u == v {
                return Err(NetworkError::Cycle(u));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(NetworkError::DuplicateEdge(u, v));
            }
        }
        if !edges.iter().any(|&(u, v)| u == root || v == root) {
            return Err(NetworkError::RootAbsent(root));
        }
        let mut sets = DisjointSets::new(node_count);
        for &(u, v) in edges {
            if !sets.union(u, v) {
                return Err(NetworkError::Cycle(v));
            }
        }
        let root_set = sets.find(root);
        if let Some(stray) = (0..node_count).find(|&v| sets.find(v) != root_set) {
            return Err(NetworkError::Disconnected(stray));
        }
        Ok(Self::from_undirected(node_count, edges, root))
    }

    /// Orients a known-valid spanning tree away from `root`.
    pub(crate) fn from_undirected(
        node_count: usize,
        edges: &[(NodeId, NodeId)],
        root: NodeId,
    ) -> Self {
        let mut degree = vec![0usize; node_count + 1];
        for &(u, v) in edges {
            degree[u + 1] += 1;
            degree[v + 1] += 1;
        }
        for i in 0..node_count {
            degree[i + 1] += degree[i];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut adjacency = vec![0; offsets[node_count]];
        for &(u, v) in edges {
            adjacency[fill[u]] = v;
            fill[u] += 1;
            adjacency[fill[v]] = u;
            fill[v] += 1;
        }

        let mut parent = vec![None; node_count];
        let mut visited = vec![false; node_count];
        let mut queue = VecDeque::with_capacity(node_count);
        visited[root] = true;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            for &w in &adjacency[offsets[u]..offsets[u + 1]] {
                if !visited[w] {
                    visited[w] = true;
                    parent[w] = Some(u);
                    queue.push_back(w);
                }
            }
        }
        Self::from_parents(root, parent)
    }

    /// Builds the child index from a parent array. `parent[root]` must be
    /// `None` and the links must form a tree.
    pub(crate) fn from_parents(root: NodeId, parent: Vec<Option<NodeId>>) -> Self {
        let n = parent.len();
        let mut child_offsets = vec![0usize; n + 1];
        for p in parent.iter().flatten() {
            child_offsets[p + 1] += 1;
        }
        for i in 0..n {
            child_offsets[i + 1] += child_offsets[i];
        }
        let mut fill = child_offsets.clone();
        let mut child_list = vec![0; n.saturating_sub(1)];
        // Ascending v gives ascending children per parent.
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                child_list[fill[p]] = v;
                fill[p] += 1;
            }
        }
        Self {
            root,
            parent,
            child_offsets,
            child_list,
        }
    }

    /// Path `0 - 1 - ... - (node_count - 1)` rooted at 0.
    pub fn path(node_count: usize) -> Self {
        assert!(node_count >= 1, "a tree has at least one node");
        let parent = (0..node_count).map(|v| v.checked_sub(1)).collect();
        Self::from_parents(0, parent)
    }

    /// Seller 0 connected directly to `buyers` leaves.
    pub fn star(buyers: usize) -> Self {
        let parent = (0..=buyers)
            .map(|v| if v == 0 { None } else { Some(0) })
            .collect();
        Self::from_parents(0, parent)
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn buyer_count(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.parent[node]
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.child_list[self.child_offsets[node]..self.child_offsets[node + 1]]
    }

    pub fn is_buyer(&self, node: NodeId) -> bool {
        node < self.node_count() && node != self.root
    }

    pub fn buyers(&self) -> impl Iterator<Item = NodeId> + '_ {
        let root = self.root;
        (0..self.node_count()).filter(move |&v| v != root)
    }

    /// `(parent, child)` pairs in ascending child order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|p| (p, v)))
            .collect()
    }

    /// Undirected neighbours of `node`: its parent (if any) then its children.
    pub fn neighbours(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.parent[node]
            .into_iter()
            .chain(self.children(node).iter().copied())
    }

    /// Depth of every node, root at 0.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.node_count()];
        let mut queue = VecDeque::from([self.root]);
        while let Some(u) = queue.pop_front() {
            for &c in self.children(u) {
                depth[c] = depth[u] + 1;
                queue.push_back(c);
            }
        }
        depth
    }

    pub fn to_file(&self) -> TreeFile {
        TreeFile {
            n: self.node_count(),
            root: self.root,
            edges: self.edges().into_iter().map(|(u, v)| [u, v]).collect(),
        }
    }

    pub fn from_file(file: &TreeFile) -> Result<Self, NetworkError> {
        let edges: Vec<_> = file.edges.iter().map(|&[u, v]| (u, v)).collect();
        Self::from_edges_with_count(file.n, &edges, file.root)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("tree file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: TreeFile =
            serde_json::from_str(text).map_err(|e| NetworkError::Format(e.to_string()))?;
        Self::from_file(&file)
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_market() {
        let t = SocialTree::from_edges(&[(0, 1)], 0).unwrap();
        assert_eq!(t.node_count(), 2);
        assert_eq!(t.children(0), &[1]);
        assert_eq!(t.parent(1), Some(0));
        assert_eq!(t.depths(), vec![0, 1]);
    }

    #[test]
    fn two_branches() {
        let t = SocialTree::from_edges(&[(0, 1), (1, 2), (0, 3)], 0).unwrap();
        assert_eq!(t.children(0), &[1, 3]);
        assert_eq!(t.children(1), &[2]);
        assert!(t.children(3).is_empty());
    }

    #[test]
    fn orientation_follows_root() {
        let t = SocialTree::from_edges(&[(0, 1), (1, 2)], 2).unwrap();
        assert_eq!(t.root(), 2);
        assert_eq!(t.parent(0), Some(1));
        assert_eq!(t.parent(2), None);
    }

    #[test]
    fn rejects_cycle() {
        assert!(matches!(
            SocialTree::from_edges(&[(0, 1), (1, 2), (2, 0)], 0),
            Err(NetworkError::Cycle(_))
        ));
        assert!(matches!(
            SocialTree::from_edges(&[(0, 1), (1, 1)], 0),
            Err(NetworkError::Cycle(1))
        ));
    }

    #[test]
    fn rejects_disconnected_duplicate_and_absent_root() {
        assert!(matches!(
            SocialTree::from_edges(&[(0, 1), (2, 3)], 0),
            Err(NetworkError::Disconnected(_))
        ));
        assert_eq!(
            SocialTree::from_edges(&[(0, 1), (1, 0)], 0),
            Err(NetworkError::DuplicateEdge(1, 0))
        );
        assert_eq!(
            SocialTree::from_edges(&[(1, 2)], 0),
            Err(NetworkError::RootAbsent(0))
        );
        assert!(matches!(
            SocialTree::from_edges(&[(0, 2)], 0),
            Err(NetworkError::Disconnected(1))
        ));
    }

    #[test]
    fn file_round_trip_and_range_check() {
        let t = SocialTree::from_edges(&[(0, 1), (1, 2), (0, 3)], 0).unwrap();
        let json = t.to_json();
        assert_eq!(json, r#"{"n":4,"root":0,"edges":[[0,1],[1,2],[0,3]]}"#);
        assert_eq!(SocialTree::from_json(&json).unwrap(), t);
        assert!(matches!(
            SocialTree::from_json(r#"{"n":3,"root":0,"edges":[[0,1],[1,3]]}"#),
            Err(NetworkError::LabelOutOfRange {
                label: 3,
                node_count: 3
            })
        ));
        assert!(matches!(
            SocialTree::from_json("{"),
            Err(NetworkError::Format(_))
        ));
    }

    #[test]
    fn path_and_star_shapes() {
        let p = SocialTree::path(4);
        assert_eq!(p.depths(), vec![0, 1, 2, 3]);
        let s = SocialTree::star(3);
        assert_eq!(s.children(0), &[1, 2, 3]);
        assert_eq!(s.buyers().collect::<Vec<_>>(), vec![1, 2, 3]);
    }
}
