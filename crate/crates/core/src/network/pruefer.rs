use std::collections::VecDeque;

use rand::Rng;

use super::{NetworkError, NodeId, SocialTree};

/// Decodes a Prüfer sequence of length `node_count - 2` into a labeled tree
/// rooted at label 0. Linear time.
pub fn decode_pruefer(seq: &[NodeId], node_count: usize) -> Result<SocialTree, NetworkError> {
    if node_count < 2 {
        return Err(NetworkError::TooSmall {
            min: 2,
            actual: node_count,
        });
    }
    if seq.len() != node_count - 2 {
        return Err(NetworkError::SequenceLength {
            expected: node_count - 2,
            actual: seq.len(),
        });
    }
    if let Some(&label) = seq.iter().find(|&&x| x >= node_count) {
        return Err(NetworkError::LabelOutOfRange { label, node_count });
    }
    let edges = decode_edges(seq, node_count);
    Ok(SocialTree::from_undirected(node_count, &edges, 0))
}

fn decode_edges(seq: &[NodeId], n: usize) -> Vec<(NodeId, NodeId)> {
    let mut degree = vec![1usize; n];
    for &x in seq {
        degree[x] += 1;
    }
    let mut ptr = degree
        .iter()
        .position(|&d| d == 1)
        .expect("a tree has a leaf");
    let mut leaf = ptr;
    let mut edges = Vec::with_capacity(n - 1);
    for &x in seq {
        edges.push((leaf, x));
        degree[x] -= 1;
        if degree[x] == 1 && x < ptr {
            leaf = x;
        } else {
            ptr += 1;
            while degree[ptr] != 1 {
                ptr += 1;
            }
            leaf = ptr;
        }
    }
    edges.push((leaf, n - 1));
    edges
}

/// Prüfer sequence of `tree` (labels are the node ids). Independent of which
/// node is the root.
pub fn encode_pruefer(tree: &SocialTree) -> Result<Vec<NodeId>, NetworkError> {
    let n = tree.node_count();
    if n < 2 {
        return Err(NetworkError::TooSmall { min: 2, actual: n });
    }
    // Re-root at n - 1, the node that is never removed.
    let mut parent = vec![usize::MAX; n];
    let mut queue = VecDeque::from([n - 1]);
    parent[n - 1] = n - 1;
    while let Some(u) = queue.pop_front() {
        for w in tree.neighbours(u) {
            if parent[w] == usize::MAX {
                parent[w] = u;
                queue.push_back(w);
            }
        }
    }
    let mut degree: Vec<usize> = (0..n).map(|v| tree.neighbours(v).count()).collect();
    let mut ptr = degree
        .iter()
        .position(|&d| d == 1)
        .expect("a tree has a leaf");
    let mut leaf = ptr;
    let mut code = Vec::with_capacity(n - 2);
    for _ in 0..n - 2 {
        let next = parent[leaf];
        code.push(next);
        degree[next] -= 1;
        if degree[next] == 1 && next < ptr {
            leaf = next;
        } else {
            ptr += 1;
            while degree[ptr] != 1 {
                ptr += 1;
            }
            leaf = ptr;
        }
    }
    Ok(code)
}

/// Uniformly random labeled tree on `node_count` nodes, rooted at 0.
pub fn random_tree<R: Rng + ?Sized>(
    node_count: usize,
    rng: &mut R,
) -> Result<SocialTree, NetworkError> {
    if node_count < 2 {
        return Err(NetworkError::TooSmall {
            min: 2,
            actual: node_count,
        });
    }
    let seq: Vec<NodeId> = (0..node_count - 2)
        .map(|_| rng.random_range(0..node_count))
        .collect();
    Ok(SocialTree::from_undirected(
        node_count,
        &decode_edges(&seq, node_count),
        0,
    ))
}

/// Parses the text format: whitespace-separated labels, one sequence per
/// line, node count = length + 2. Blank lines are skipped.
pub fn parse_pruefer_lines(text: &str) -> Result<Vec<SocialTree>, NetworkError> {
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .map(|line| {
            let seq = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<NodeId>()
                        .map_err(|e| NetworkError::Format(format!("{tok:?}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            decode_pruefer(&seq, seq.len() + 2)
        })
        .collect()
}
