use std::collections::BTreeSet;

/// A node of a binary regression tree. Children always have larger indices
/// than their parent; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }

    fn set_cover(&mut self, c: f64) {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover = c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Caller guarantees the node layout invariants; see [`Tree::check`].
    pub fn from_nodes(nodes: Vec<Node>) -> Self {
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// Index of the leaf reached by `x`: left iff `x[feature] < threshold`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Distinct features tested anywhere in the tree.
    pub fn features_used(&self) -> BTreeSet<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    /// Replaces every cover by the number of `rows` reaching the node.
    pub(crate) fn recompute_covers<'a, I>(&mut self, rows: I)
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut counts = vec![0.0; self.nodes.len()];
        for x in rows {
            counts[self.leaf_index(x)] += 1.0;
        }
        for i in (0..self.nodes.len()).rev() {
            if let Node::Split { left, right, .. } = self.nodes[i] {
                counts[i] = counts[left] + counts[right];
            }
        }
        for (node, c) in self.nodes.iter_mut().zip(counts) {
            node.set_cover(c);
        }
    }

    /// Structural validation: child links point forward and in range, every
    /// non-root node has exactly one parent, features are in range, values
    /// and covers are finite and covers positive and additive.
    pub fn check(&self, n_features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let cover = node.cover();
            if !(cover.is_finite() && cover > 0.0) {
                return Err(format!("node {i}: cover must be positive, got {cover}"));
            }
            match *node {
                Node::Leaf { value, .. } => {
                    if !value.is_finite() {
                        return Err(format!("node {i}: non-finite leaf value"));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    cover,
                } => {
                    if feature >= n_features {
                        return Err(format!("node {i}: feature {feature} out of range"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i}: non-finite threshold"));
                    }
                    for c in [left, right] {
                        if c <= i || c >= self.nodes.len() {
                            return Err(format!("node {i}: bad child index {c}"));
                        }
                        parents[c] += 1;
                    }
                    if left == right {
                        return Err(format!("node {i}: both children are {left}"));
                    }
                    let sum = self.nodes[left].cover() + self.nodes[right].cover();
                    if (sum - cover).abs() > 1e-9 * cover.max(1.0) {
                        return Err(format!("node {i}: cover {cover} != children sum {sum}"));
                    }
                }
            }
        }
        if let Some(i) = (1..self.nodes.len()).find(|&i| parents[i] != 1) {
            return Err(format!("node {i} has {} parents", parents[i]));
        }
        Ok(())
    }
}
