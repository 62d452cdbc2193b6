//! Exact greedy split evaluation for the second-order objective.

/// Gradient and hessian sums over a set of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradPair {
    pub grad: f64,
    pub hess: f64,
}

impl GradPair {
    pub fn new(grad: f64, hess: f64) -> Self {
        GradPair { grad, hess }
    }
}

impl std::ops::Sub for GradPair {
    type Output = GradPair;
    fn sub(self, rhs: GradPair) -> GradPair {
        GradPair::new(self.grad - rhs.grad, self.hess - rhs.hess)
    }
}

impl std::ops::AddAssign for GradPair {
    fn add_assign(&mut self, rhs: GradPair) {
        self.grad += rhs.grad;
        self.hess += rhs.hess;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Rows with `value < threshold` go left.
    pub threshold: f64,
    pub gain: f64,
    pub left: GradPair,
    pub right: GradPair,
}

/// Gains closer than this (relative) count as tied. Gradient sums depend on
/// summation order in the last bits, so exact comparison would let row order
/// decide between equally good splits.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-10;

fn gains_tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= GAIN_TIE_TOLERANCE * a.abs().max(b.abs())
}

impl SplitCandidate {
    /// Higher gain wins; tied gains prefer the lower feature index, then the
    /// lower threshold.
    fn beats(&self, other: &SplitCandidate) -> bool {
        if !gains_tied(self.gain, other.gain) {
            return self.gain > other.gain;
        }
        (self.feature, self.threshold) < (other.feature, other.threshold)
    }
}

/// Optimal leaf weight `-G / (H + lambda)`.
pub fn leaf_weight(grad: f64, hess: f64, lambda: f64) -> f64 {
    -grad / (hess + lambda)
}

fn score(g: GradPair, lambda: f64) -> f64 {
    g.grad * g.grad / (g.hess + lambda)
}

/// Loss reduction of splitting a node into `left` and `right`.
pub fn split_gain(left: GradPair, right: GradPair, params: &SplitParams) -> f64 {
    let parent = GradPair::new(left.grad + right.grad, left.hess + right.hess);
    0.5 * (score(left, params.lambda) + score(right, params.lambda) - score(parent, params.lambda)) - params.gamma
}

/// Threshold strictly above `lo` and at most `hi`, normally their midpoint.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) * 0.5;
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Scans one feature's rows in ascending value order and returns the best
/// admissible split.
///
/// `entries` yields `(value, grad, hess)`; `total` is the node's sum over the
/// same rows. A candidate is admissible when both children reach
/// `min_child_weight` and its gain is strictly positive.
pub fn best_split_for_feature<I>(feature: usize, entries: I, total: GradPair, params: &SplitParams) -> Option<SplitCandidate>
where
    I: IntoIterator<Item = (f64, f64, f64)>,
{
    let mut best: Option<SplitCandidate> = None;
    let mut left = GradPair::default();
    let mut prev: Option<f64> = None;
    for (value, grad, hess) in entries {
        if let Some(p) = prev {
            if value > p && left.hess >= params.min_child_weight {
                let right = total - left;
                if right.hess >= params.min_child_weight {
                    let gain = split_gain(left, right, params);
                    if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain && !gains_tied(gain, b.gain)) {
                        best = Some(SplitCandidate {
                            feature,
                            threshold: midpoint(p, value),
                            gain,
                            left,
                            right,
                        });
                    }
                }
            }
        }
        left += GradPair::new(grad, hess);
        prev = Some(value);
    }
    best
}

/// Reduces per-feature winners with the documented tie-breaking, so the
/// result does not depend on the order candidates arrive in.
pub fn best_split<I>(candidates: I) -> Option<SplitCandidate>
where
    I: IntoIterator<Item = Option<SplitCandidate>>,
{
    candidates
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<SplitCandidate>, c| match acc {
            Some(b) if !c.beats(&b) => Some(b),
            _ => Some(c),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: SplitParams = SplitParams {
        lambda: 1.0,
        gamma: 0.0,
        min_child_weight: 1.0,
    };

    #[test]
    fn hand_evaluated_gain() {
        let gain = split_gain(GradPair::new(-2.0, 2.0), GradPair::new(2.0, 2.0), &P);
        assert!((gain - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn leaf_weight_cases() {
        assert_eq!(leaf_weight(3.0, 2.0, 1.0), -1.0);
        assert_eq!(leaf_weight(0.0, 5.0, 1.0), 0.0);
        let ws: Vec<f64> = [0.0, 1.0, 10.0, 100.0, 1e6].iter().map(|&l| leaf_weight(3.0, 2.0, l).abs()).collect();
        assert!(ws.windows(2).all(|w| w[1] < w[0]));
        assert!(ws[4] < 1e-5);
    }

    #[test]
    fn finds_the_step() {
        let entries = [(0.0, -1.0, 1.0), (1.0, -1.0, 1.0), (2.0, 1.0, 1.0), (3.0, 1.0, 1.0)];
        let c = best_split_for_feature(4, entries, GradPair::new(0.0, 4.0), &P).unwrap();
        assert_eq!(c.feature, 4);
        assert_eq!(c.threshold, 1.5);
        assert!((c.gain - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.left, GradPair::new(-2.0, 2.0));
    }

    #[test]
    fn identical_values_give_none() {
        let entries = [(5.0, -1.0, 1.0), (5.0, 1.0, 1.0), (5.0, 3.0, 1.0)];
        assert!(best_split_for_feature(0, entries, GradPair::new(3.0, 3.0), &P).is_none());
    }

    #[test]
    fn light_children_rejected() {
        // 5 rows left, 7 right: the only split with a visible gain has a light child
        let mut entries = vec![];
        for i in 0..12 {
            let g = if i < 5 { -1.0 } else { 1.0 };
            entries.push((i as f64, g, 1.0));
        }
        let total = GradPair::new(2.0, 12.0);
        let strict = SplitParams {
            min_child_weight: 6.0,
            ..P
        };
        let c = best_split_for_feature(0, entries.clone(), total, &strict).unwrap();
        assert!(c.left.hess >= 6.0 && c.right.hess >= 6.0);
        assert_eq!(c.threshold, 5.5);
        let loose = best_split_for_feature(0, entries, total, &P).unwrap();
        assert_eq!(loose.threshold, 4.5);
    }

    #[test]
    fn ties_prefer_low_feature_then_low_threshold() {
        let mk = |feature, threshold| SplitCandidate {
            feature,
            threshold,
            gain: 1.0,
            left: GradPair::default(),
            right: GradPair::default(),
        };
        let best = best_split([Some(mk(3, 0.5)), None, Some(mk(1, 2.0)), Some(mk(1, 1.0))]).unwrap();
        assert_eq!((best.feature, best.threshold), (1, 1.0));
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let t = midpoint(lo, hi);
        assert!(lo < t && t <= hi);
        assert_eq!(midpoint(0.0, 1.0), 0.5);
    }
}
