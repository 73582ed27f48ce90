use std::collections::BTreeSet;

use diffusion_mech::network::{decode_pruefer, encode_pruefer, random_tree, SocialTree};
use diffusion_mech::seed::rng_from_seed;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type EdgeSet = BTreeSet<(usize, usize)>;

fn undirected(tree: &SocialTree) -> EdgeSet {
    tree.edges()
        .into_iter()
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Every spanning tree of K_n, by checking all (n-1)-edge subsets for cycles.
fn spanning_trees(n: usize) -> Vec<EdgeSet> {
    let all: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    let mut found = Vec::new();
    let mut chosen = Vec::with_capacity(n - 1);
    fn rec(
        all: &[(usize, usize)],
        start: usize,
        k: usize,
        n: usize,
        chosen: &mut Vec<usize>,
        out: &mut Vec<EdgeSet>,
    ) {
        if chosen.len() == k {
            let mut parent: Vec<usize> = (0..n).collect();
            for &e in chosen.iter() {
                let (a, b) = all[e];
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra == rb {
                    return;
                }
                parent[ra] = rb;
            }
            out.push(chosen.iter().map(|&e| all[e]).collect());
            return;
        }
        for e in start..all.len() {
            if all.len() - e < k - chosen.len() {
                break;
            }
            chosen.push(e);
            rec(all, e + 1, k, n, chosen, out);
            chosen.pop();
        }
    }
    rec(&all, 0, n - 1, n, &mut chosen, &mut found);
    found
}

fn sequences(n: usize) -> Vec<Vec<usize>> {
    let len = n - 2;
    let total = n.pow(len as u32);
    (0..total)
        .map(|mut code| {
            (0..len)
                .map(|_| {
                    let d = code % n;
                    code /= n;
                    d
                })
                .collect()
        })
        .collect()
}

#[test]
fn decode_is_a_bijection_onto_spanning_trees() {
    for n in 2..=7 {
        let oracle: BTreeSet<EdgeSet> = spanning_trees(n).into_iter().collect();
        assert_eq!(oracle.len(), n.pow(n as u32 - 2), "Cayley count at n={n}");
        let mut decoded = BTreeSet::new();
        for seq in sequences(n) {
            let tree = decode_pruefer(&seq, n).unwrap();
            assert_eq!(tree.root(), 0);
            assert_eq!(encode_pruefer(&tree).unwrap(), seq, "round trip at n={n}");
            decoded.insert(undirected(&tree));
        }
        assert_eq!(decoded, oracle, "n={n}");
    }
}

#[test]
fn encode_ignores_the_root() {
    let edges = [(0, 3), (3, 1), (3, 2), (2, 4)];
    let at0 = SocialTree::from_edges(&edges, 0).unwrap();
    let at4 = SocialTree::from_edges(&edges, 4).unwrap();
    assert_eq!(encode_pruefer(&at0).unwrap(), encode_pruefer(&at4).unwrap());
}

#[test]
fn random_trees_are_uniform_at_five_nodes() {
    let n: usize = 5;
    let cells = n.pow(3);
    let samples = 1_000_000u64;
    let mut counts = vec![0u64; cells];
    let mut rng = rng_from_seed(0xC41);
    for _ in 0..samples {
        let seq = encode_pruefer(&random_tree(n, &mut rng).unwrap()).unwrap();
        counts[seq.iter().fold(0, |acc, &d| acc * n + d)] += 1;
    }
    let expected = samples as f64 / cells as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let critical = ChiSquared::new((cells - 1) as f64)
        .unwrap()
        .inverse_cdf(0.999);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
}
