#![allow(dead_code)]

use rand::Rng;
use truckflow::gbt::{GbtModel, Hyperparams, Node, Tree};
use truckflow::rng::{self, Prng};

pub fn names(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("x{i}")).collect()
}

/// Random tree with split probability 0.8 per level, positive covers that
/// add up, and leaf values in [-2, 2).
pub fn random_tree(r: &mut Prng, n_features: usize, max_depth: usize, features: &[usize]) -> Tree {
    fn grow(r: &mut Prng, nodes: &mut Vec<Node>, depth: usize, max_depth: usize, features: &[usize]) -> (usize, f64) {
        let at = nodes.len();
        if depth < max_depth && r.random::<f64>() < 0.8 {
            let feature = features[r.random_range(0..features.len() as u64) as usize];
            let threshold = r.random::<f64>();
            nodes.push(Node::Split { feature, threshold, left: 0, right: 0, cover: 0.0 });
            let (l, cl) = grow(r, nodes, depth + 1, max_depth, features);
            let (rr, cr) = grow(r, nodes, depth + 1, max_depth, features);
            nodes[at] = Node::Split { feature, threshold, left: l, right: rr, cover: cl + cr };
            (at, cl + cr)
        } else {
            let cover = 0.5 + 9.5 * r.random::<f64>();
            let value = 4.0 * r.random::<f64>() - 2.0;
            nodes.push(Node::Leaf { value, cover });
            (at, cover)
        }
    }
    let _ = n_features;
    let mut nodes = Vec::new();
    grow(r, &mut nodes, 0, max_depth, features);
    Tree::from_nodes(nodes)
}

pub fn random_model(seed: u64, n_features: usize, max_trees: usize, max_depth: usize) -> GbtModel {
    let mut r = rng::stream(seed, &[7]);
    let all: Vec<usize> = (0..n_features).collect();
    let n_trees = 1 + r.random_range(0..max_trees as u64) as usize;
    let trees = (0..n_trees).map(|_| random_tree(&mut r, n_features, max_depth, &all)).collect();
    let base = r.random::<f64>() * 4.0 - 2.0;
    GbtModel::from_parts(base, trees, Hyperparams::default(), names(n_features)).unwrap()
}

pub fn random_instance(seed: u64, n_features: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, &[8]);
    (0..n_features).map(|_| r.random::<f64>()).collect()
}
