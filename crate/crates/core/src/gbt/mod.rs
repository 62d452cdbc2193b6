//! Second-order gradient-boosted regression trees.
//!
//! The objective is squared error on the (log) target, so every row has
//! gradient `prediction - target` and hessian 1; `min_child_weight` is then a
//! minimum child row count. Trees are grown depth-first with exact greedy
//! split search over pre-sorted feature values. Leaf values are stored already
//! multiplied by `eta`.
//!
//! Training is single-threaded and fully determined by the data and
//! [`Hyperparams::seed`]: round `r` draws its row and column samples from the
//! sub-stream `(seed, r)`.

mod model_file;
mod split;
mod tree;

pub use model_file::{read_model, write_model, FORMAT_VERSION};
pub use split::{best_split, best_split_for_feature, leaf_weight, split_gain, GradPair, SplitCandidate, SplitParams};
pub use tree::{Node, Tree};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid hyperparameter: {0}")]
    InvalidParams(String),
    #[error("training needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("expected {expected} features, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("feature {feature} is not finite ({value})")]
    NonFinite { feature: usize, value: f64 },
    #[error("model file parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("model integrity: {0}")]
    Integrity(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Boosting hyperparameters. The defaults are the tuned values the model was
/// reported with, plus 500 rounds, `lambda = 1` and `gamma = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub eta: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub rounds: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Stop when validation RMSE has not improved for this many rounds.
    /// Only used when a validation matrix is supplied.
    #[serde(default)]
    pub early_stopping_rounds: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            max_depth: 10,
            min_child_weight: 6.0,
            eta: 0.01,
            subsample: 0.8,
            colsample_bytree: 1.0,
            rounds: 500,
            lambda: 1.0,
            gamma: 0.0,
            seed: 0,
            early_stopping_rounds: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::InvalidParams(msg));
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must be in (0, 1], got {}", self.eta));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample must be in (0, 1], got {}", self.subsample));
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad(format!("colsample_bytree must be in (0, 1], got {}", self.colsample_bytree));
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1".into());
        }
        if self.rounds < 1 {
            return bad("rounds must be at least 1".into());
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad(format!("min_child_weight must be >= 0, got {}", self.min_child_weight));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.early_stopping_rounds == Some(0) {
            return bad("early_stopping_rounds must be at least 1".into());
        }
        Ok(())
    }

    fn split_params(&self) -> SplitParams {
        SplitParams {
            lambda: self.lambda,
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    base_score: f64,
    trees: Vec<Tree>,
    params: Hyperparams,
    feature_names: Vec<String>,
}

impl GbtModel {
    /// Assembles a model from parts, validating every tree.
    pub fn from_parts(base_score: f64, trees: Vec<Tree>, params: Hyperparams, feature_names: Vec<String>) -> Result<Self> {
        if !base_score.is_finite() {
            return Err(ModelError::Integrity("non-finite base score".into()));
        }
        for (i, t) in trees.iter().enumerate() {
            t.check(feature_names.len())
                .map_err(|e| ModelError::Integrity(format!("tree {i}: {e}")))?;
        }
        Ok(GbtModel {
            base_score,
            trees,
            params,
            feature_names,
        })
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn params(&self) -> &Hyperparams {
        &self.params
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn check_row(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(ModelError::FeatureCount {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        if let Some((feature, &value)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ModelError::NonFinite { feature, value });
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_row(x)?;
        Ok(self.predict_unchecked(x))
    }

    /// `base_score` plus every tree's leaf value, summed in tree order.
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.trees.iter().fold(self.base_score, |acc, t| acc + t.predict(x))
    }

    pub fn predict_batch(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        if matrix.n_features() != self.n_features() {
            return Err(ModelError::FeatureCount {
                expected: self.n_features(),
                got: matrix.n_features(),
            });
        }
        Ok(matrix.rows().map(|x| self.predict_unchecked(x)).collect())
    }

    /// Keeps only the first `n` trees.
    pub fn truncate(&mut self, n: usize) {
        self.trees.truncate(n);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, write_model(self)).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        read_model(&text)
    }
}

/// Per-round RMSE history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    /// Training-set RMSE after each round.
    pub train_rmse: Vec<f64>,
    /// Validation RMSE after each round, when a validation set was supplied.
    pub valid_rmse: Vec<f64>,
    /// Number of trees kept (differs from rounds run after early stopping).
    pub best_rounds: usize,
}

pub fn train(matrix: &FeatureMatrix, params: &Hyperparams) -> Result<GbtModel> {
    train_with_log(matrix, params, None).map(|(m, _)| m)
}

/// Trains and records per-round RMSE. With a validation matrix and
/// `early_stopping_rounds`, training stops once validation RMSE has not
/// improved for that many rounds and the model is cut back to its best round.
pub fn train_with_log(
    matrix: &FeatureMatrix,
    params: &Hyperparams,
    valid: Option<&FeatureMatrix>,
) -> Result<(GbtModel, TrainingLog)> {
    params.validate()?;
    let n = matrix.n_rows();
    let m = matrix.n_features();
    if n < 2 {
        return Err(ModelError::TooFewRows(n));
    }
    if let Some(v) = valid {
        if v.n_features() != m {
            return Err(ModelError::FeatureCount {
                expected: m,
                got: v.n_features(),
            });
        }
    }
    let target = matrix.target();
    let base_score = target.iter().sum::<f64>() / n as f64;
    let mut preds = vec![base_score; n];
    let mut valid_preds: Vec<f64> = valid.map(|v| vec![base_score; v.n_rows()]).unwrap_or_default();

    let sorted = presort(matrix);
    let hess = vec![1.0; n];
    let mut grad = vec![0.0; n];
    let n_rows_sampled = sample_size(params.subsample, n);
    let n_cols_sampled = sample_size(params.colsample_bytree, m);

    let mut trees = Vec::with_capacity(params.rounds);
    let mut log = TrainingLog::default();
    let mut best = (f64::INFINITY, 0usize);

    for round in 0..params.rounds {
        let mut rng = rng::stream(params.seed, &[round as u64]);
        let in_sample: Vec<bool> = if n_rows_sampled == n {
            vec![true; n]
        } else {
            let mut mask = vec![false; n];
            for i in rng::sample_indices(&mut rng, n, n_rows_sampled) {
                mask[i] = true;
            }
            mask
        };
        let columns: Vec<usize> = if n_cols_sampled == m {
            (0..m).collect()
        } else {
            rng::sample_indices(&mut rng, m, n_cols_sampled)
        };

        for i in 0..n {
            grad[i] = preds[i] - target[i];
        }
        let lists: Vec<Vec<u32>> = columns
            .iter()
            .map(|&f| sorted[f].iter().copied().filter(|&r| in_sample[r as usize]).collect())
            .collect();

        let mut builder = TreeBuilder {
            matrix,
            grad: &grad,
            hess: &hess,
            params,
            split: params.split_params(),
            columns: &columns,
            nodes: Vec::new(),
            go_left: vec![false; n],
        };
        builder.grow(lists, 0);
        let mut tree = Tree::from_nodes(builder.nodes);
        tree.recompute_covers(matrix.rows());

        for (p, x) in preds.iter_mut().zip(matrix.rows()) {
            *p += tree.predict(x);
        }
        log.train_rmse.push(rmse(&preds, target));
        if let Some(v) = valid {
            for (p, x) in valid_preds.iter_mut().zip(v.rows()) {
                *p += tree.predict(x);
            }
            let score = rmse(&valid_preds, v.target());
            log.valid_rmse.push(score);
            if score < best.0 {
                best = (score, round + 1);
            }
        }
        trees.push(tree);
        if let (Some(_), Some(patience)) = (valid, params.early_stopping_rounds) {
            if round + 1 - best.1 >= patience {
                break;
            }
        }
    }
    if valid.is_some() && params.early_stopping_rounds.is_some() {
        trees.truncate(best.1);
    }
    log.best_rounds = trees.len();
    let model = GbtModel {
        base_score,
        trees,
        params: params.clone(),
        feature_names: matrix.feature_names().to_vec(),
    };
    Ok((model, log))
}

fn sample_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n)
}

fn rmse(pred: &[f64], actual: &[f64]) -> f64 {
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    (sse / pred.len() as f64).sqrt()
}

/// Row indices sorted by each feature's value, ties by row index.
fn presort(matrix: &FeatureMatrix) -> Vec<Vec<u32>> {
    (0..matrix.n_features())
        .map(|f| {
            let mut idx: Vec<u32> = (0..matrix.n_rows() as u32).collect();
            idx.sort_by(|&a, &b| {
                matrix
                    .value(a as usize, f)
                    .total_cmp(&matrix.value(b as usize, f))
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect()
}

struct TreeBuilder<'a> {
    matrix: &'a FeatureMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a Hyperparams,
    split: SplitParams,
    /// Feature index of each entry in the per-node sorted lists.
    columns: &'a [usize],
    nodes: Vec<Node>,
    go_left: Vec<bool>,
}

impl TreeBuilder<'_> {
    /// Grows the subtree over the rows in `lists` (one ascending list per
    /// sampled column, all holding the same rows) and returns its index.
    fn grow(&mut self, lists: Vec<Vec<u32>>, depth: usize) -> usize {
        let rows = &lists[0];
        let mut total = GradPair::default();
        for &r in rows {
            total += GradPair::new(self.grad[r as usize], self.hess[r as usize]);
        }

        let candidate = if depth < self.params.max_depth && rows.len() >= 2 {
            best_split(self.columns.iter().zip(&lists).map(|(&f, list)| {
                let entries = list.iter().map(|&r| {
                    let r = r as usize;
                    (self.matrix.value(r, f), self.grad[r], self.hess[r])
                });
                best_split_for_feature(f, entries, total, &self.split)
            }))
        } else {
            None
        };

        let index = self.nodes.len();
        let Some(split) = candidate else {
            let w = leaf_weight(total.grad, total.hess, self.params.lambda);
            // + 0.0 turns -0.0 into 0.0
            let value = self.params.eta * w + 0.0;
            self.nodes.push(Node::Leaf {
                value,
                cover: total.hess,
            });
            return index;
        };

        self.nodes.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
            cover: total.hess,
        });
        for &r in rows {
            self.go_left[r as usize] = self.matrix.value(r as usize, split.feature) < split.threshold;
        }
        let (left_lists, right_lists): (Vec<Vec<u32>>, Vec<Vec<u32>>) = lists
            .into_iter()
            .map(|list| list.into_iter().partition(|&r| self.go_left[r as usize]))
            .unzip();
        let left = self.grow(left_lists, depth + 1);
        let right = self.grow(right_lists, depth + 1);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[index]
        {
            *l = left;
            *r = right;
        }
        index
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rounds: usize, depth: usize, eta: f64) -> Hyperparams {
        Hyperparams {
            max_depth: depth,
            min_child_weight: 1.0,
            eta,
            subsample: 1.0,
            colsample_bytree: 1.0,
            rounds,
            lambda: 1.0,
            gamma: 0.0,
            seed: 1,
            early_stopping_rounds: None,
        }
    }

    fn step_data(n: usize) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64, ((i * 7) % 5) as f64]).collect();
        let y = rows.iter().map(|r| if r[0] < 0.5 { 1.0 } else { 3.0 }).collect();
        FeatureMatrix::from_rows(&["x1", "x2"], &rows, y).unwrap()
    }

    #[test]
    fn constant_target_predicts_constant() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let m = FeatureMatrix::from_rows(&["a", "b"], &rows, vec![4.25; 20]).unwrap();
        let model = train(&m, &params(5, 3, 0.3)).unwrap();
        assert_eq!(model.base_score(), 4.25);
        for t in model.trees() {
            assert_eq!(t.nodes().len(), 1);
            assert!(matches!(t.root(), Node::Leaf { value, .. } if *value == 0.0 && value.is_sign_positive()));
        }
        assert_eq!(model.predict(&[100.0, -3.0]).unwrap(), 4.25);
    }

    #[test]
    fn step_function_is_learned() {
        let m = step_data(200);
        let model = train(&m, &params(300, 1, 0.1)).unwrap();
        let pred = model.predict_batch(&m).unwrap();
        assert!(rmse(&pred, m.target()) < 0.01);
    }

    #[test]
    fn depth_and_child_weight_respected() {
        let m = step_data(300);
        let mut p = params(10, 3, 0.3);
        p.min_child_weight = 20.0;
        let model = train(&m, &p).unwrap();
        for t in model.trees() {
            assert!(t.depth() <= 3);
            assert_eq!(t.root().cover(), 300.0);
            t.check(2).unwrap();
        }
    }

    #[test]
    fn rejects_bad_params_and_tiny_data() {
        let m = step_data(10);
        let mut p = params(1, 1, 0.0);
        assert!(matches!(train(&m, &p), Err(ModelError::InvalidParams(_))));
        p.eta = 0.1;
        p.subsample = 1.5;
        assert!(train(&m, &p).is_err());
        let one = FeatureMatrix::from_rows(&["a"], &[vec![1.0]], vec![1.0]).unwrap();
        assert!(matches!(train(&one, &params(1, 1, 0.1)), Err(ModelError::TooFewRows(1))));
    }

    #[test]
    fn predict_rejects_nan_and_wrong_width() {
        let model = train(&step_data(20), &params(2, 1, 0.1)).unwrap();
        assert!(matches!(model.predict(&[f64::NAN, 0.0]), Err(ModelError::NonFinite { feature: 0, .. })));
        assert!(matches!(model.predict(&[0.0]), Err(ModelError::FeatureCount { .. })));
    }

    #[test]
    fn early_stopping_truncates_to_best_round() {
        let train_m = step_data(100);
        let valid_rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0, 0.0]).collect();
        // validation target disagrees with training, so it gets worse quickly
        let valid = FeatureMatrix::from_rows(&["x1", "x2"], &valid_rows, vec![2.0; 20]).unwrap();
        let mut p = params(200, 2, 0.3);
        p.early_stopping_rounds = Some(5);
        let (model, log) = train_with_log(&train_m, &p, Some(&valid)).unwrap();
        assert!(log.valid_rmse.len() < 200);
        assert_eq!(model.trees().len(), log.best_rounds);
        let best = log.valid_rmse.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(log.valid_rmse[log.best_rounds - 1], best);
    }

    #[test]
    fn sample_size_rounding() {
        assert_eq!(sample_size(0.8, 10), 8);
        assert_eq!(sample_size(0.7, 10), 7);
        assert_eq!(sample_size(1.0, 11), 11);
        assert_eq!(sample_size(0.01, 10), 1);
    }
}
