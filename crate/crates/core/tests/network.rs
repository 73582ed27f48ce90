use std::collections::BTreeSet;

use diffusion_mech::network::{
    random_tree, ActionProfile, EffectiveMarket, NetworkError, SocialTree,
};
use diffusion_mech::seed::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

/// Participants by walking informed edges from the seller.
fn reachable(tree: &SocialTree, actions: &ActionProfile) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![tree.root()];
    while let Some(v) = stack.pop() {
        for &c in tree.children(v) {
            if actions.is_informed(tree, c) {
                seen.insert(c);
                stack.push(c);
            }
        }
    }
    seen
}

fn random_actions(tree: &SocialTree, keep: f64, rng: &mut impl Rng) -> ActionProfile {
    let mut actions = ActionProfile::full(tree);
    for b in tree.buyers() {
        let kept: Vec<usize> = tree
            .children(b)
            .iter()
            .copied()
            .filter(|_| rng.random_bool(keep))
            .collect();
        actions.set_informed(tree, b, &kept).unwrap();
    }
    actions
}

#[test]
fn malformed_edge_lists_are_rejected() {
    assert!(matches!(
        SocialTree::from_edges(&[(0, 1), (1, 2), (2, 0)], 0),
        Err(NetworkError::Cycle(_))
    ));
    assert!(matches!(
        SocialTree::from_edges(&[(0, 1), (0, 1)], 0),
        Err(NetworkError::DuplicateEdge(..))
    ));
    assert!(SocialTree::from_edges(&[(0, 1), (2, 3)], 0).is_err());
    assert!(SocialTree::from_edges(&[(0, 1)], 5).is_err());
}

#[test]
fn json_round_trip() {
    let mut rng = rng_from_seed(4);
    for n in [2, 3, 10, 57] {
        let tree = random_tree(n, &mut rng).unwrap();
        let back = SocialTree::from_json(&tree.to_json()).unwrap();
        assert_eq!(back, tree);
    }
    assert!(SocialTree::from_json("{\"n\":3,\"root\":0,\"edges\":[[0,1]]}").is_err());
    assert!(SocialTree::from_json("not json").is_err());
}

#[test]
fn branch_sizes_partition_the_participants() {
    let mut rng = rng_from_seed(11);
    for _ in 0..200 {
        let n = rng.random_range(2..60);
        let tree = random_tree(n, &mut rng).unwrap();
        let actions = random_actions(&tree, 0.7, &mut rng);
        let market = EffectiveMarket::new(&tree, &actions);
        let total: usize = market.branches().iter().map(|b| b.size).sum();
        assert_eq!(total, market.participants().len());
        assert_eq!(market.branch_count(), tree.children(tree.root()).len());
        for (i, b) in market.branches().iter().enumerate() {
            assert_eq!(market.others_size(i), total - b.size);
            let members = market
                .participants()
                .iter()
                .filter(|&&v| market.branch_index(v) == Some(i))
                .count();
            assert_eq!(members, b.size);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn participants_match_reachability(n in 2usize..80, seed: u64, keep in 0.0f64..1.0) {
        let mut rng = rng_from_seed(seed);
        let tree = random_tree(n, &mut rng).unwrap();
        let actions = random_actions(&tree, keep, &mut rng);
        let market = EffectiveMarket::new(&tree, &actions);
        let got: BTreeSet<usize> = market.participants().iter().copied().collect();
        prop_assert_eq!(&got, &reachable(&tree, &actions));
        for v in 0..n {
            prop_assert_eq!(market.is_participant(v), got.contains(&v));
        }
    }

    #[test]
    fn withholding_never_adds_participants(n in 2usize..80, seed: u64) {
        let mut rng = rng_from_seed(seed);
        let tree = random_tree(n, &mut rng).unwrap();
        let full = EffectiveMarket::new(&tree, &ActionProfile::full(&tree));
        let coarse = random_actions(&tree, 0.8, &mut rng);
        // Withholding further from `coarse` shrinks it again.
        let mut finer = coarse.clone();
        for b in tree.buyers() {
            let kept: Vec<usize> = coarse.informed_children(&tree, b).filter(|_| rng.random_bool(0.5)).collect();
            finer.set_informed(&tree, b, &kept).unwrap();
        }
        let a: BTreeSet<usize> = full.participants().iter().copied().collect();
        let b: BTreeSet<usize> = EffectiveMarket::new(&tree, &coarse).participants().iter().copied().collect();
        let c: BTreeSet<usize> = EffectiveMarket::new(&tree, &finer).participants().iter().copied().collect();
        prop_assert!(b.is_subset(&a));
        prop_assert!(c.is_subset(&b));
        prop_assert_eq!(a.len(), n - 1);
    }

    #[test]
    fn depths_follow_parents(n in 2usize..200, seed: u64) {
        let tree = random_tree(n, &mut rng_from_seed(seed)).unwrap();
        let market = EffectiveMarket::new(&tree, &ActionProfile::full(&tree));
        for v in tree.buyers() {
            let p = tree.parent(v).unwrap();
            let expected = if p == tree.root() { 1 } else { market.depth(p).unwrap() + 1 };
            prop_assert_eq!(market.depth(v), Some(expected));
            prop_assert_eq!(market.child_count(v) as usize, tree.children(v).len());
        }
    }
}
