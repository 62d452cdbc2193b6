//! Train/test splitting, k-fold cross-validation, grid search and metrics.
//!
//! Targets and predictions live in log space, so "RMSLE" here is the RMSE of
//! log predictions against log targets. [`MetricVariant::PlusOne`] instead
//! compares `ln(1 + trips)` on both sides.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::gbt::{self, GbtModel, Hyperparams, ModelError};
use crate::rng;

const SPLIT_STREAM: u64 = 1;
const FOLD_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Invalid(String),
    #[error("r-squared is undefined when the actual values have zero variance")]
    ZeroVariance,
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.7,
            seed: 42,
        }
    }
}

/// Shuffled row indices: the first `ceil(fraction * n)` go to training
/// (clamped so both sides are non-empty), the rest to test.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(HarnessError::Invalid(format!(
            "train fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if n < 2 {
        return Err(HarnessError::Invalid(format!("cannot split {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(spec.seed, &[SPLIT_STREAM]), &mut order);
    // the epsilon keeps 0.7 * 10 = 7.000000000000001 at 7
    let n_train = ((spec.train_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
    let test = order.split_off(n_train);
    Ok((order, test))
}

pub fn train_test_split(matrix: &FeatureMatrix, spec: &SplitSpec) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let (train, test) = split_indices(matrix.n_rows(), spec)?;
    Ok((matrix.select_rows(&train), matrix.select_rows(&test)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MetricVariant {
    /// RMSE between log predictions and log targets.
    #[default]
    LogSpace,
    /// RMSE between `ln(1 + exp(p))` and `ln(1 + exp(a))`.
    PlusOne,
}

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(HarnessError::Invalid(format!(
            "need equal non-empty lengths, got {} and {}",
            pred.len(),
            actual.len()
        )));
    }
    Ok(())
}

pub fn rmsle(pred_log: &[f64], actual_log: &[f64]) -> Result<f64> {
    check_lengths(pred_log, actual_log)?;
    let sse: f64 = pred_log.iter().zip(actual_log).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / pred_log.len() as f64).sqrt())
}

pub fn rmsle_with(pred_log: &[f64], actual_log: &[f64], variant: MetricVariant) -> Result<f64> {
    match variant {
        MetricVariant::LogSpace => rmsle(pred_log, actual_log),
        MetricVariant::PlusOne => {
            let shift = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x.exp().ln_1p()).collect() };
            rmsle(&shift(pred_log), &shift(actual_log))
        }
    }
}

pub fn r_squared(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(HarnessError::ZeroVariance);
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub rmsle: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn evaluate(model: &GbtModel, matrix: &FeatureMatrix, variant: MetricVariant) -> Result<MetricsReport> {
    let pred = model.predict_batch(matrix)?;
    Ok(MetricsReport {
        rmsle: rmsle_with(&pred, matrix.target(), variant)?,
        r_squared: r_squared(&pred, matrix.target())?,
        n: matrix.n_rows(),
    })
}

pub fn write_metrics_csv<W: Write>(mut w: W, m: &MetricsReport) -> io::Result<()> {
    writeln!(w, "n,rmsle,r_squared")?;
    writeln!(w, "{},{},{}", m.n, m.rmsle, m.r_squared)?;
    w.flush()
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Fold id of each row. Sizes differ by at most one; depends only on
/// `(n, k, seed)`.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(HarnessError::Invalid(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(HarnessError::Invalid(format!("{n} rows cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(seed, &[FOLD_STREAM]), &mut order);
    let mut fold = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &row in &order[pos..pos + size] {
            fold[row] = f;
        }
        pos += size;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<MetricsReport>,
    pub mean_rmsle: f64,
    pub std_rmsle: f64,
    pub mean_r_squared: f64,
    pub std_r_squared: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains on `k - 1` folds and scores the held-out fold, for every fold.
/// Folds run in parallel; results are reported in fold order.
pub fn kfold_cv(
    matrix: &FeatureMatrix,
    k: usize,
    params: &Hyperparams,
    seed: u64,
    variant: MetricVariant,
) -> Result<CvReport> {
    params.validate()?;
    let fold = fold_assignment(matrix.n_rows(), k, seed)?;
    let folds = (0..k)
        .into_par_iter()
        .map(|f| {
            let (valid, train): (Vec<usize>, Vec<usize>) = (0..matrix.n_rows()).partition(|&i| fold[i] == f);
            let model = gbt::train(&matrix.select_rows(&train), params)?;
            evaluate(&model, &matrix.select_rows(&valid), variant)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean_rmsle, std_rmsle) = mean_std(&folds.iter().map(|m| m.rmsle).collect::<Vec<_>>());
    let (mean_r_squared, std_r_squared) = mean_std(&folds.iter().map(|m| m.r_squared).collect::<Vec<_>>());
    Ok(CvReport {
        folds,
        mean_rmsle,
        std_rmsle,
        mean_r_squared,
        std_r_squared,
    })
}

pub fn write_cv_csv<W: Write>(mut w: W, report: &CvReport) -> io::Result<()> {
    writeln!(w, "fold,n,rmsle,r_squared")?;
    for (i, m) in report.folds.iter().enumerate() {
        writeln!(w, "{i},{},{},{}", m.n, m.rmsle, m.r_squared)?;
    }
    w.flush()
}

// ---------------------------------------------------------------------------
// Grid search

/// Candidate values per hyperparameter. Empty lists fall back to the base
/// parameters' value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub max_depth: Vec<usize>,
    pub min_child_weight: Vec<f64>,
    pub eta: Vec<f64>,
    pub subsample: Vec<f64>,
    pub colsample_bytree: Vec<f64>,
    pub rounds: Vec<usize>,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Grid {
    /// Parses `name,value,value,...` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Grid> {
        let mut grid = Grid::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let name = parts.next().unwrap_or("");
            let values: Vec<&str> = parts.filter(|s| !s.is_empty()).collect();
            let err = |msg: String| HarnessError::Invalid(format!("grid line {}: {msg}", lineno + 1));
            if values.is_empty() {
                return Err(err(format!("`{name}` has no values")));
            }
            fn parse_all<T: std::str::FromStr>(values: &[&str]) -> std::result::Result<Vec<T>, String> {
                values
                    .iter()
                    .map(|v| v.parse::<T>().map_err(|_| format!("bad value `{v}`")))
                    .collect()
            }
            let r: std::result::Result<(), String> = match name {
                "max_depth" => parse_all(&values).map(|v| grid.max_depth = v),
                "min_child_weight" => parse_all(&values).map(|v| grid.min_child_weight = v),
                "eta" => parse_all(&values).map(|v| grid.eta = v),
                "subsample" => parse_all(&values).map(|v| grid.subsample = v),
                "colsample_bytree" => parse_all(&values).map(|v| grid.colsample_bytree = v),
                "rounds" => parse_all(&values).map(|v| grid.rounds = v),
                "lambda" => parse_all(&values).map(|v| grid.lambda = v),
                "gamma" => parse_all(&values).map(|v| grid.gamma = v),
                other => Err(format!("unknown hyperparameter `{other}`")),
            };
            r.map_err(err)?;
        }
        Ok(grid)
    }

    /// Cartesian product in row-major order: `max_depth` varies slowest,
    /// `gamma` fastest.
    pub fn configurations(&self, base: &Hyperparams) -> Vec<Hyperparams> {
        fn or<T: Clone>(v: &[T], d: T) -> Vec<T> {
            if v.is_empty() {
                vec![d]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for &max_depth in &or(&self.max_depth, base.max_depth) {
            for &min_child_weight in &or(&self.min_child_weight, base.min_child_weight) {
                for &eta in &or(&self.eta, base.eta) {
                    for &subsample in &or(&self.subsample, base.subsample) {
                        for &colsample_bytree in &or(&self.colsample_bytree, base.colsample_bytree) {
                            for &rounds in &or(&self.rounds, base.rounds) {
                                for &lambda in &or(&self.lambda, base.lambda) {
                                    for &gamma in &or(&self.gamma, base.gamma) {
                                        out.push(Hyperparams {
                                            max_depth,
                                            min_child_weight,
                                            eta,
                                            subsample,
                                            colsample_bytree,
                                            rounds,
                                            lambda,
                                            gamma,
                                            ..base.clone()
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub params: Hyperparams,
    pub cv: CvReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub table: Vec<GridRow>,
    /// Index into `table` of the lowest mean CV RMSLE; ties go to the first.
    pub best: usize,
}

impl GridSearchResult {
    pub fn best_params(&self) -> &Hyperparams {
        &self.table[self.best].params
    }
}

/// Index of the smallest value; the first one wins ties.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if v >= b => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// Cross-validates every grid configuration (in parallel) and picks the one
/// with the lowest mean RMSLE.
pub fn grid_search(
    matrix: &FeatureMatrix,
    grid: &Grid,
    base: &Hyperparams,
    k: usize,
    seed: u64,
    variant: MetricVariant,
) -> Result<GridSearchResult> {
    let configs = grid.configurations(base);
    let table = configs
        .into_par_iter()
        .map(|params| {
            let cv = kfold_cv(matrix, k, &params, seed, variant)?;
            Ok(GridRow { params, cv })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = table.iter().map(|r| r.cv.mean_rmsle).collect();
    let best = argmin_first(&scores).ok_or_else(|| HarnessError::Invalid("empty grid".into()))?;
    Ok(GridSearchResult { table, best })
}

pub fn write_grid_csv<W: Write>(mut w: W, result: &GridSearchResult) -> io::Result<()> {
    writeln!(
        w,
        "config,max_depth,min_child_weight,eta,subsample,colsample_bytree,rounds,lambda,gamma,mean_rmsle,std_rmsle,mean_r_squared,std_r_squared,best"
    )?;
    for (i, row) in result.table.iter().enumerate() {
        let p = &row.params;
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.max_depth,
            p.min_child_weight,
            p.eta,
            p.subsample,
            p.colsample_bytree,
            p.rounds,
            p.lambda,
            p.gamma,
            row.cv.mean_rmsle,
            row.cv.std_rmsle,
            row.cv.mean_r_squared,
            row.cv.std_r_squared,
            u8::from(i == result.best)
        )?;
    }
    w.flush()
}
