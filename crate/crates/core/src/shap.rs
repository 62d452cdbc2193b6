//! Shapley attributions and pairwise Shapley interaction values for the
//! boosted ensemble.
//!
//! The coalition value is the path-dependent conditional expectation: for a
//! feature subset `S`, a split on a feature in `S` follows the instance, a
//! split on any other feature averages both branches weighted by their
//! training covers. `v(S) = base_score + sum over trees of v_T(S)`.
//!
//! Two routes compute the same numbers:
//!
//! * [`shap_exact`] / [`shap_interactions_exact`] enumerate all `2^M`
//!   coalitions of the model's features (M <= 20),
//! * [`shap_fast`] / [`shap_interactions`] split each tree's value function
//!   into one product game per leaf. Along a root-to-leaf path, each distinct
//!   feature `f` contributes a factor `o_f` (the instance follows the path) when
//!   `f` is in the coalition and `z_f` (the cover fraction) otherwise. The
//!   Shapley sums of a product game reduce to weighted coefficients of the
//!   polynomial `prod_j (z_j + o_j t)`, so each leaf costs `O(d^2)` for path
//!   length `d` and only the leaf's own features are visited. Features outside
//!   a tree are null players of its game and receive nothing from it.

use rayon::prelude::*;
use thiserror::Error;

use crate::gbt::{GbtModel, ModelError, Node, Tree};

/// Largest feature count accepted by the enumeration route.
pub const MAX_EXACT_FEATURES: usize = 20;
/// Default smoothing window for [`zero_crossing_threshold`].
pub const DEFAULT_SMOOTHING_WINDOW: usize = 51;
/// Minimum number of dependence points for threshold detection.
pub const MIN_THRESHOLD_POINTS: usize = 10;

#[derive(Debug, Error)]
pub enum ShapError {
    #[error("{features} features exceed the enumeration limit of {limit}; use the fast path")]
    TooManyFeatures { features: usize, limit: usize },
    #[error("tree {tree}, node {node}: non-positive cover")]
    ZeroCover { tree: usize, node: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, ShapError>;

/// Attribution of one prediction: `base_value + phi.sum()` equals the model
/// output for the explained instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapExplanation {
    pub base_value: f64,
    pub phi: Vec<f64>,
}

impl ShapExplanation {
    pub fn total(&self) -> f64 {
        self.base_value + self.phi.iter().sum::<f64>()
    }
}

/// Symmetric `M x M` Shapley interaction matrix. Off-diagonal entries hold
/// half of the pair's interaction index each; the diagonal holds the main
/// effect `phi_i - sum_{j != i} Phi_ij`, so rows sum to `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    pub base_value: f64,
    n: usize,
    values: Vec<f64>,
}

impl InteractionMatrix {
    pub fn n_features(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.values[i * self.n..(i + 1) * self.n].iter().sum()
    }

    fn from_pairs(base_value: f64, phi: &[f64], pairs: &[f64]) -> Self {
        let n = phi.len();
        let mut values = pairs.to_vec();
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| pairs[i * n + j]).sum();
            values[i * n + i] = phi[i] - off;
        }
        InteractionMatrix { base_value, n, values }
    }
}

// ---------------------------------------------------------------------------
// Enumeration route

/// `v_T(S)` for one tree, with `S` given as a membership mask over features.
pub fn tree_conditional_expectation(tree: &Tree, x: &[f64], in_set: &[bool]) -> Result<f64> {
    fn walk(nodes: &[Node], i: usize, x: &[f64], in_set: &[bool]) -> std::result::Result<f64, usize> {
        match nodes[i] {
            Node::Leaf { value, .. } => Ok(value),
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                if in_set[feature] {
                    let next = if x[feature] < threshold { left } else { right };
                    walk(nodes, next, x, in_set)
                } else {
                    let (cl, cr) = (nodes[left].cover(), nodes[right].cover());
                    if !(cl > 0.0 && cr > 0.0) {
                        return Err(if cl > 0.0 { right } else { left });
                    }
                    let vl = walk(nodes, left, x, in_set)?;
                    let vr = walk(nodes, right, x, in_set)?;
                    Ok((cl * vl + cr * vr) / (cl + cr))
                }
            }
        }
    }
    walk(tree.nodes(), 0, x, in_set).map_err(|node| ShapError::ZeroCover { tree: 0, node })
}

/// `v(S)` for the whole ensemble.
pub fn coalition_value(model: &GbtModel, x: &[f64], in_set: &[bool]) -> Result<f64> {
    let mut v = model.base_score();
    for (t, tree) in model.trees().iter().enumerate() {
        v += tree_conditional_expectation(tree, x, in_set).map_err(|e| match e {
            ShapError::ZeroCover { node, .. } => ShapError::ZeroCover { tree: t, node },
            other => other,
        })?;
    }
    Ok(v)
}

fn all_coalition_values(model: &GbtModel, x: &[f64]) -> Result<Vec<f64>> {
    let m = model.n_features();
    if m > MAX_EXACT_FEATURES {
        return Err(ShapError::TooManyFeatures {
            features: m,
            limit: MAX_EXACT_FEATURES,
        });
    }
    model.check_row(x)?;
    let mut in_set = vec![false; m];
    (0..1usize << m)
        .map(|mask| {
            for (f, slot) in in_set.iter_mut().enumerate() {
                *slot = mask >> f & 1 == 1;
            }
            coalition_value(model, x, &in_set)
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `|S|! (m - |S| - 1)! / m!` indexed by `|S|`.
fn shapley_weights(m: usize) -> Vec<f64> {
    (0..m).map(|s| 1.0 / (m as f64 * binomial(m - 1, s))).collect()
}

/// `|S|! (m - |S| - 2)! / (2 (m - 1)!)` indexed by `|S|`.
fn interaction_weights(m: usize) -> Vec<f64> {
    if m < 2 {
        return Vec::new();
    }
    (0..m - 1)
        .map(|s| 1.0 / (2.0 * (m - 1) as f64 * binomial(m - 2, s)))
        .collect()
}

/// Shapley values by enumerating every coalition of the model's features.
pub fn shap_exact(model: &GbtModel, x: &[f64]) -> Result<ShapExplanation> {
    let m = model.n_features();
    let v = all_coalition_values(model, x)?;
    let w = shapley_weights(m);
    let phi = (0..m)
        .map(|i| {
            let bit = 1usize << i;
            (0..v.len())
                .filter(|s| s & bit == 0)
                .map(|s| w[s.count_ones() as usize] * (v[s | bit] - v[s]))
                .sum()
        })
        .collect();
    Ok(ShapExplanation { base_value: v[0], phi })
}

/// Interaction matrix by enumerating every coalition of the model's features.
pub fn shap_interactions_exact(model: &GbtModel, x: &[f64]) -> Result<InteractionMatrix> {
    let m = model.n_features();
    let v = all_coalition_values(model, x)?;
    let phi = shap_exact(model, x)?.phi;
    let w = interaction_weights(m);
    let mut pairs = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let (bi, bj) = (1usize << i, 1usize << j);
            let value: f64 = (0..v.len())
                .filter(|s| s & (bi | bj) == 0)
                .map(|s| w[s.count_ones() as usize] * (v[s | bi | bj] - v[s | bi] - v[s | bj] + v[s]))
                .sum();
            pairs[i * m + j] = value;
            pairs[j * m + i] = value;
        }
    }
    Ok(InteractionMatrix::from_pairs(v[0], &phi, &pairs))
}

// ---------------------------------------------------------------------------
// Per-leaf product-game route

#[derive(Clone, Copy)]
struct PathFactor {
    feature: usize,
    /// 1 when the instance follows every split on `feature` along the path.
    one: f64,
    /// Product of cover fractions of the splits on `feature` along the path.
    zero: f64,
}

/// Distinct-feature factors of the current root-to-node path together with
/// the coefficients of `prod_j (zero_j + one_j t)` for every prefix, so a
/// leaf's polynomial is available without recomputation.
struct PathState {
    factors: Vec<PathFactor>,
    /// `polys[k]` holds the product over the first `k` factors.
    polys: Vec<Vec<f64>>,
}

impl PathState {
    fn new() -> Self {
        PathState {
            factors: Vec::new(),
            polys: vec![vec![1.0]],
        }
    }

    fn poly(&self) -> &[f64] {
        &self.polys[self.factors.len()]
    }

    /// Rebuilds `polys[k + 1..]` from factor `k` on.
    fn rebuild_from(&mut self, k: usize) {
        for i in k..self.factors.len() {
            if self.polys.len() <= i + 1 {
                self.polys.push(Vec::new());
            }
            let (head, tail) = self.polys.split_at_mut(i + 1);
            multiply_factor(&head[i], &self.factors[i], &mut tail[0]);
        }
    }

    fn push(&mut self, f: PathFactor) {
        self.factors.push(f);
        self.rebuild_from(self.factors.len() - 1);
    }

    fn pop(&mut self) {
        self.factors.pop();
    }

    fn replace(&mut self, k: usize, f: PathFactor) {
        self.factors[k] = f;
        self.rebuild_from(k);
    }
}

fn multiply_factor(poly: &[f64], p: &PathFactor, out: &mut Vec<f64>) {
    out.clear();
    out.resize(poly.len() + 1, 0.0);
    for (k, &c) in poly.iter().enumerate() {
        out[k] += c * p.zero;
        out[k + 1] += c * p.one;
    }
}

/// Visits every leaf with the distinct-feature factors of its path and their
/// product polynomial.
fn for_each_leaf<F>(tree: &Tree, x: &[f64], mut visit: F) -> std::result::Result<(), usize>
where
    F: FnMut(f64, &[PathFactor], &[f64]),
{
    fn walk<F: FnMut(f64, &[PathFactor], &[f64])>(
        nodes: &[Node],
        i: usize,
        x: &[f64],
        state: &mut PathState,
        visit: &mut F,
    ) -> std::result::Result<(), usize> {
        match nodes[i] {
            Node::Leaf { value, .. } => {
                visit(value, &state.factors, state.poly());
                Ok(())
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let (cl, cr) = (nodes[left].cover(), nodes[right].cover());
                if !(cl > 0.0 && cr > 0.0) {
                    return Err(if cl > 0.0 { right } else { left });
                }
                let goes_left = x[feature] < threshold;
                for (child, cover, followed) in [(left, cl, goes_left), (right, cr, !goes_left)] {
                    let one = if followed { 1.0 } else { 0.0 };
                    let zero = cover / (cl + cr);
                    match state.factors.iter().position(|p| p.feature == feature) {
                        Some(k) => {
                            let saved = state.factors[k];
                            let merged = PathFactor {
                                feature,
                                one: saved.one * one,
                                zero: saved.zero * zero,
                            };
                            state.replace(k, merged);
                            walk(nodes, child, x, state, visit)?;
                            state.replace(k, saved);
                        }
                        None => {
                            state.push(PathFactor { feature, one, zero });
                            walk(nodes, child, x, state, visit)?;
                            state.pop();
                        }
                    }
                }
                Ok(())
            }
        }
    }
    walk(tree.nodes(), 0, x, &mut PathState::new(), &mut visit)
}

/// Divides `poly` by `(zero + one t)` into `out`; `one` is 0 or 1 and
/// `zero > 0`.
fn divide_factor(poly: &[f64], p: &PathFactor, out: &mut Vec<f64>) {
    let d = poly.len() - 1;
    out.clear();
    out.resize(d, 0.0);
    if p.one == 0.0 {
        for k in 0..d {
            out[k] = poly[k] / p.zero;
        }
    } else {
        // poly_k = zero * q_k + q_{k-1}, solved from the top down
        out[d - 1] = poly[d];
        for k in (1..d).rev() {
            out[k - 1] = poly[k] - p.zero * out[k];
        }
    }
}

fn weighted_sum(weights: &[f64], coeffs: &[f64]) -> f64 {
    weights.iter().zip(coeffs).map(|(w, c)| w * c).sum()
}

/// Weight tables indexed by path length.
struct WeightCache {
    shapley: Vec<Vec<f64>>,
    interaction: Vec<Vec<f64>>,
}

impl WeightCache {
    fn new(max_len: usize) -> Self {
        WeightCache {
            shapley: (0..=max_len).map(|d| if d == 0 { Vec::new() } else { shapley_weights(d) }).collect(),
            interaction: (0..=max_len).map(interaction_weights).collect(),
        }
    }
}

fn max_path_features(model: &GbtModel) -> usize {
    model
        .trees()
        .iter()
        .map(|t| t.depth().min(model.n_features()))
        .max()
        .unwrap_or(0)
}

fn zero_cover(tree: usize) -> impl Fn(usize) -> ShapError {
    move |node| ShapError::ZeroCover { tree, node }
}

/// Exact Shapley values via per-leaf product games.
pub fn shap_fast(model: &GbtModel, x: &[f64]) -> Result<ShapExplanation> {
    model.check_row(x)?;
    let cache = WeightCache::new(max_path_features(model));
    shap_fast_with(model, x, &cache)
}

fn shap_fast_with(model: &GbtModel, x: &[f64], cache: &WeightCache) -> Result<ShapExplanation> {
    let mut phi = vec![0.0; model.n_features()];
    let mut base_value = model.base_score();
    let mut rest = Vec::new();
    for (t, tree) in model.trees().iter().enumerate() {
        let mut empty = 0.0;
        for_each_leaf(tree, x, |value, path, poly| {
            empty += value * poly[0];
            if value == 0.0 {
                return;
            }
            let w = &cache.shapley[path.len()];
            // dividing by a factor with one = 0 only rescales by 1 / zero,
            // which cancels against the (0 - zero) multiplier
            let unfollowed = -value * weighted_sum(w, &poly[..path.len()]);
            for p in path {
                if p.one == 0.0 {
                    phi[p.feature] += unfollowed;
                } else {
                    divide_factor(poly, p, &mut rest);
                    phi[p.feature] += value * (1.0 - p.zero) * weighted_sum(w, &rest);
                }
            }
        })
        .map_err(zero_cover(t))?;
        base_value += empty;
    }
    Ok(ShapExplanation { base_value, phi })
}

/// Exact interaction matrix via per-leaf product games.
pub fn shap_interactions(model: &GbtModel, x: &[f64]) -> Result<InteractionMatrix> {
    model.check_row(x)?;
    let cache = WeightCache::new(max_path_features(model));
    shap_interactions_with(model, x, &cache)
}

fn shap_interactions_with(model: &GbtModel, x: &[f64], cache: &WeightCache) -> Result<InteractionMatrix> {
    let m = model.n_features();
    let explanation = shap_fast_with(model, x, cache)?;
    let mut pairs = vec![0.0; m * m];
    let (mut without_a, mut rest) = (Vec::new(), Vec::new());
    for (t, tree) in model.trees().iter().enumerate() {
        for_each_leaf(tree, x, |value, path, poly| {
            if value == 0.0 || path.len() < 2 {
                return;
            }
            let w = &cache.interaction[path.len()];
            for (a, pa) in path.iter().enumerate() {
                divide_factor(poly, pa, &mut without_a);
                for pb in &path[a + 1..] {
                    divide_factor(&without_a, pb, &mut rest);
                    let contrib = value * (pa.one - pa.zero) * (pb.one - pb.zero) * weighted_sum(w, &rest);
                    pairs[pa.feature * m + pb.feature] += contrib;
                    pairs[pb.feature * m + pa.feature] += contrib;
                }
            }
        })
        .map_err(zero_cover(t))?;
    }
    Ok(InteractionMatrix::from_pairs(explanation.base_value, &explanation.phi, &pairs))
}

/// Fast-path explanations for many rows, computed in parallel; output order
/// matches input order.
pub fn explain_rows<'a, I>(model: &GbtModel, rows: I) -> Result<Vec<ShapExplanation>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let rows: Vec<&[f64]> = rows.into_iter().collect();
    for r in &rows {
        model.check_row(r)?;
    }
    let cache = WeightCache::new(max_path_features(model));
    rows.par_iter().map(|x| shap_fast_with(model, x, &cache)).collect()
}

/// Interaction matrices for many rows, in input order.
pub fn interactions_rows<'a, I>(model: &GbtModel, rows: I) -> Result<Vec<InteractionMatrix>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let rows: Vec<&[f64]> = rows.into_iter().collect();
    for r in &rows {
        model.check_row(r)?;
    }
    let cache = WeightCache::new(max_path_features(model));
    rows.par_iter().map(|x| shap_interactions_with(model, x, &cache)).collect()
}

// ---------------------------------------------------------------------------
// Summaries

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    pub feature: usize,
    pub name: String,
    /// Mean absolute Shapley value over the sample.
    pub mean_abs_phi: f64,
    /// Pearson correlation between the feature's values and either its
    /// Shapley values or the target; 0 when either side has no variance.
    pub correlation: f64,
}

/// Features sorted by descending mean |phi| (ties keep feature order).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalImportance {
    pub features: Vec<FeatureImportance>,
}

/// What the correlation sign is measured against.
#[derive(Debug, Clone, Copy)]
pub enum SignReference<'a> {
    /// The feature's own Shapley values.
    Attribution,
    /// The regression target of each explained row.
    Target(&'a [f64]),
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

impl GlobalImportance {
    /// Summarises explanations of `rows` (feature values, one slice per
    /// explained row, same order as `explanations`).
    pub fn from_explanations(
        names: &[String],
        rows: &[&[f64]],
        explanations: &[ShapExplanation],
        sign: SignReference<'_>,
    ) -> Result<Self> {
        if explanations.is_empty() || rows.len() != explanations.len() {
            return Err(ShapError::Input(format!(
                "need a non-empty sample with one explanation per row ({} rows, {} explanations)",
                rows.len(),
                explanations.len()
            )));
        }
        let n = explanations.len() as f64;
        let mut features: Vec<FeatureImportance> = names
            .iter()
            .enumerate()
            .map(|(f, name)| {
                let phi: Vec<f64> = explanations.iter().map(|e| e.phi[f]).collect();
                let values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
                let correlation = match sign {
                    SignReference::Attribution => pearson(&values, &phi),
                    SignReference::Target(t) => pearson(&values, t),
                };
                FeatureImportance {
                    feature: f,
                    name: name.clone(),
                    mean_abs_phi: phi.iter().map(|p| p.abs()).sum::<f64>() / n,
                    correlation,
                }
            })
            .collect();
        features.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi).then(a.feature.cmp(&b.feature)));
        Ok(GlobalImportance { features })
    }

    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

/// Explains every row of `sample` and summarises.
pub fn global_importance(
    model: &GbtModel,
    sample: &crate::features::FeatureMatrix,
    sign: SignReference<'_>,
) -> Result<GlobalImportance> {
    let explanations = explain_rows(model, sample.rows())?;
    let rows: Vec<&[f64]> = sample.rows().collect();
    GlobalImportance::from_explanations(sample.feature_names(), &rows, &explanations, sign)
}

/// Feature value at which a dependence curve changes sign.
///
/// Points are sorted by feature value and the attributions smoothed with a
/// centred moving average of `window` points (clipped at both ends; the whole
/// sample when it has fewer points). The first sign change of the smoothed
/// curve is located by linear interpolation between the bracketing points; a
/// smoothed value of exactly zero returns that point's feature value.
/// Returns `None` for fewer than ten points or when no sign change occurs.
pub fn zero_crossing_threshold(points: &[(f64, f64)], window: usize) -> Option<f64> {
    let n = points.len();
    if n < MIN_THRESHOLD_POINTS {
        return None;
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let half = window.max(1).min(n) / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for p in &pts {
        prefix.push(prefix.last().unwrap() + p.1);
    }
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect();
    for i in 0..n {
        if smoothed[i] == 0.0 {
            return Some(pts[i].0);
        }
        if i + 1 < n && (smoothed[i] > 0.0) != (smoothed[i + 1] > 0.0) && smoothed[i + 1] != 0.0 {
            let (x0, x1) = (pts[i].0, pts[i + 1].0);
            let (s0, s1) = (smoothed[i], smoothed[i + 1]);
            return Some(x0 + (x1 - x0) * s0 / (s0 - s1));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Tables

/// One explained row as written to `shap_values.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapRow {
    pub origin_zone: String,
    pub destination_zone: String,
    pub base_value: f64,
    pub phi: Vec<f64>,
    pub prediction: f64,
    pub values: Vec<f64>,
    pub target: f64,
}

/// Explained rows with their feature values. Columns: `origin_zone`,
/// `destination_zone`, `base_value`, `phi_<name>` per feature, `prediction`,
/// `value_<name>` per feature, `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<ShapRow>,
}

impl ShapTable {
    pub fn new(matrix: &crate::features::FeatureMatrix, explanations: &[ShapExplanation]) -> Result<Self> {
        if matrix.n_rows() != explanations.len() {
            return Err(ShapError::Input(format!(
                "{} rows for {} explanations",
                matrix.n_rows(),
                explanations.len()
            )));
        }
        let rows = explanations
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let key = &matrix.row_keys()[i];
                ShapRow {
                    origin_zone: key.origin.clone(),
                    destination_zone: key.destination.clone(),
                    base_value: e.base_value,
                    phi: e.phi.clone(),
                    prediction: e.total(),
                    values: matrix.row(i).to_vec(),
                    target: matrix.target()[i],
                }
            })
            .collect();
        Ok(ShapTable {
            feature_names: matrix.feature_names().to_vec(),
            rows,
        })
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values[feature]).collect()
    }

    pub fn phi_column(&self, feature: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.phi[feature]).collect()
    }

    pub fn explanations(&self) -> Vec<ShapExplanation> {
        self.rows
            .iter()
            .map(|r| ShapExplanation {
                base_value: r.base_value,
                phi: r.phi.clone(),
            })
            .collect()
    }

    pub fn value_rows(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.values.as_slice()).collect()
    }

    pub fn importance(&self, sign: SignReference<'_>) -> Result<GlobalImportance> {
        GlobalImportance::from_explanations(&self.feature_names, &self.value_rows(), &self.explanations(), sign)
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    pub fn write<W: std::io::Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["origin_zone".to_string(), "destination_zone".into(), "base_value".into()];
        header.extend(self.feature_names.iter().map(|n| format!("phi_{n}")));
        header.push("prediction".into());
        header.extend(self.feature_names.iter().map(|n| format!("value_{n}")));
        header.push("target".into());
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.origin_zone.clone(), r.destination_zone.clone(), r.base_value.to_string()];
            rec.extend(r.phi.iter().map(f64::to_string));
            rec.push(r.prediction.to_string());
            rec.extend(r.values.iter().map(f64::to_string));
            rec.push(r.target.to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: std::io::Read>(r: R) -> Result<Self> {
        let bad = |m: String| ShapError::Input(m);
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        let names: Vec<String> = header
            .iter()
            .filter_map(|h| h.strip_prefix("phi_").map(str::to_string))
            .collect();
        let m = names.len();
        let mut expected = vec!["origin_zone".to_string(), "destination_zone".into(), "base_value".into()];
        expected.extend(names.iter().map(|n| format!("phi_{n}")));
        expected.push("prediction".into());
        expected.extend(names.iter().map(|n| format!("value_{n}")));
        expected.push("target".into());
        if m == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(bad("not a shap_values table: unexpected header".into()));
        }
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("line {}: bad number `{}` in {}", line + 2, &rec[k], &header[k])))
            };
            rows.push(ShapRow {
                origin_zone: rec[0].to_string(),
                destination_zone: rec[1].to_string(),
                base_value: num(2)?,
                phi: (0..m).map(|f| num(3 + f)).collect::<Result<_>>()?,
                prediction: num(3 + m)?,
                values: (0..m).map(|f| num(4 + m + f)).collect::<Result<_>>()?,
                target: num(4 + 2 * m)?,
            });
        }
        Ok(ShapTable {
            feature_names: names,
            rows,
        })
    }
}

/// Writes one pair's interaction values: `origin_zone`, `destination_zone`,
/// `value_<a>`, `value_<b>`, `interaction` (the symmetric half `Phi_ab`).
pub fn write_interaction_csv<W: std::io::Write>(
    w: W,
    matrix: &crate::features::FeatureMatrix,
    interactions: &[InteractionMatrix],
    a: usize,
    b: usize,
) -> std::result::Result<(), csv::Error> {
    let names = matrix.feature_names();
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "origin_zone".to_string(),
        "destination_zone".into(),
        format!("value_{}", names[a]),
        format!("value_{}", names[b]),
        "interaction".into(),
    ])?;
    for (i, m) in interactions.iter().enumerate() {
        let key = &matrix.row_keys()[i];
        out.write_record([
            key.origin.clone(),
            key.destination.clone(),
            matrix.value(i, a).to_string(),
            matrix.value(i, b).to_string(),
            m.get(a, b).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a pair file back as `(value_a, value_b, interaction)` columns and
/// the two feature names.
pub fn read_interaction_csv<R: std::io::Read>(r: R) -> Result<((String, String), Vec<[f64; 3]>)> {
    let bad = |m: String| ShapError::Input(m);
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let shape_ok = header.len() == 5
        && &header[0] == "origin_zone"
        && &header[1] == "destination_zone"
        && header[2].starts_with("value_")
        && header[3].starts_with("value_")
        && &header[4] == "interaction";
    if !shape_ok {
        return Err(bad("not an interaction table: unexpected header".into()));
    }
    let names = (header[2][6..].to_string(), header[3][6..].to_string());
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let mut v = [0.0; 3];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec[k + 2]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("line {}: bad number `{}`", line + 2, &rec[k + 2])))?;
        }
        out.push(v);
    }
    Ok((names, out))
}
