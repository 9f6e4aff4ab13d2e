//! Gradient-boosted regression trees for the abnormality stage.
//!
//! A binary classifier over the 6-d probability vectors: logistic loss,
//! exact greedy splits on squared-residual reduction, Newton leaf values
//! `Σ residual / Σ p(1-p)`, and shrinkage-weighted stagewise updates on top
//! of the base-rate log-odds.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use crate::heads::ProbabilityVector6;
use crate::math;
use crate::nn::sigmoid_scalar;
use crate::taxonomy::{CellType, LabelSet};

/// Splits with gain at or below this are not taken; keeps degenerate
/// floating-point gains on constant residuals from growing useless nodes.
pub const MIN_SPLIT_GAIN: f64 = 1e-12;

const NEWTON_HESSIAN_FLOOR: f64 = 1e-12;
const BASE_RATE_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GbmError {
    EmptyDataset,
    LengthMismatch,
}

impl fmt::Display for GbmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GbmError::EmptyDataset => f.write_str("empty dataset"),
            GbmError::LengthMismatch => f.write_str("features and targets differ in length"),
        }
    }
}

impl core::error::Error for GbmError {}

/// A binary regression tree over 6-d inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressionTree {
    Leaf(f64),
    Split {
        dim: usize,
        value: f64,
        left: Box<RegressionTree>,
        right: Box<RegressionTree>,
    },
}

impl RegressionTree {
    /// Walks the tree: `x[dim] <= value` goes left.
    pub fn predict(&self, x: &[f64; 6]) -> f64 {
        match self {
            RegressionTree::Leaf(v) => *v,
            RegressionTree::Split { dim, value, left, right } => {
                if x[*dim] <= *value {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RegressionTree::Leaf(_) => 0,
            RegressionTree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig { rounds: 100, max_depth: 3, shrinkage: 0.1 }
    }
}

/// Initial log-odds plus the boosted tree sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmModel {
    pub f0: f64,
    pub shrinkage: f64,
    pub trees: Vec<RegressionTree>,
}

/// True when the set contains any of the five abnormal types (everything
/// except oval/disc). The empty set maps to normal.
pub fn labelset_is_abnormal(labels: LabelSet) -> bool {
    let abnormal = LabelSet::from_types(&[
        CellType::ElongatedSickle,
        CellType::Reticulocyte,
        CellType::Granular,
        CellType::Echinocyte,
        CellType::Stomatocyte,
    ]);
    labels.intersects(abnormal)
}

/// Newton leaf value with a floored hessian sum.
fn leaf_value(indices: &[usize], residuals: &[f64], hessians: &[f64]) -> f64 {
    let num: f64 = indices.iter().map(|&i| residuals[i]).sum();
    let den: f64 = indices.iter().map(|&i| hessians[i]).sum();
    num / math::fmax(den, NEWTON_HESSIAN_FLOOR)
}

/// Exhaustive greedy split search.
///
/// Every (dimension, midpoint-between-consecutive-distinct-values) split is
/// scored by squared-residual reduction; ties break toward the lowest
/// dimension, then the lowest split value. Recursion stops at the depth
/// budget, a single sample, or no positive gain.
pub fn tree_split_search(
    features: &[[f64; 6]],
    residuals: &[f64],
    hessians: &[f64],
    indices: &[usize],
    depth_budget: usize,
) -> RegressionTree {
    if depth_budget == 0 || indices.len() <= 1 {
        return RegressionTree::Leaf(leaf_value(indices, residuals, hessians));
    }

    let total: f64 = indices.iter().map(|&i| residuals[i]).sum();
    let n = indices.len() as f64;
    let parent_score = total * total / n;

    let mut best: Option<(f64, usize, f64)> = None; // (gain, dim, value)
    let mut sorted = indices.to_vec();
    for dim in 0..6 {
        sorted.sort_by(|&a, &b| {
            features[a][dim]
                .partial_cmp(&features[b][dim])
                .expect("features are finite")
        });
        let mut left_sum = 0.0;
        for k in 0..sorted.len() - 1 {
            left_sum += residuals[sorted[k]];
            let lo = features[sorted[k]][dim];
            let hi = features[sorted[k + 1]][dim];
            if lo == hi {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = n - nl;
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent_score;
            let value = (lo + hi) / 2.0;
            let better = match &best {
                None => gain > MIN_SPLIT_GAIN,
                Some((bg, bd, bv)) => {
                    gain > *bg || (gain == *bg && (dim < *bd || (dim == *bd && value < *bv)))
                }
            };
            if better && gain > MIN_SPLIT_GAIN {
                best = Some((gain, dim, value));
            }
        }
    }

    match best {
        None => RegressionTree::Leaf(leaf_value(indices, residuals, hessians)),
        Some((_, dim, value)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                indices.iter().partition(|&&i| features[i][dim] <= value);
            let left = tree_split_search(features, residuals, hessians, &left_idx, depth_budget - 1);
            let right =
                tree_split_search(features, residuals, hessians, &right_idx, depth_budget - 1);
            RegressionTree::Split { dim, value, left: Box::new(left), right: Box::new(right) }
        }
    }
}

fn mean_logistic_loss(margins: &[f64], y: &[f64]) -> f64 {
    let mut loss = 0.0;
    for (&f, &yi) in margins.iter().zip(y) {
        let p = math::clamp(sigmoid_scalar(f), 1e-12, 1.0 - 1e-12);
        loss -= yi * math::ln(p) + (1.0 - yi) * math::ln(1.0 - p);
    }
    loss / margins.len() as f64
}

/// Fits the boosted model and returns the per-round training loss curve
/// (element 0 is the loss of the base rate alone).
pub fn fit_gbm_traced(
    x: &[ProbabilityVector6],
    y: &[bool],
    cfg: &GbmConfig,
) -> Result<(GbmModel, Vec<f64>), GbmError> {
    if x.is_empty() {
        return Err(GbmError::EmptyDataset);
    }
    if x.len() != y.len() {
        return Err(GbmError::LengthMismatch);
    }
    let features: Vec<[f64; 6]> = x.iter().map(|p| p.0).collect();
    let targets: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let n = x.len();

    let base_rate = math::clamp(
        targets.iter().sum::<f64>() / n as f64,
        BASE_RATE_CLAMP,
        1.0 - BASE_RATE_CLAMP,
    );
    let f0 = math::ln(base_rate / (1.0 - base_rate));

    let mut margins = alloc::vec![f0; n];
    let mut residuals = alloc::vec![0.0; n];
    let mut hessians = alloc::vec![0.0; n];
    let indices: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.rounds + 1);
    losses.push(mean_logistic_loss(&margins, &targets));

    let mut trees = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        for i in 0..n {
            let p = sigmoid_scalar(margins[i]);
            residuals[i] = targets[i] - p;
            hessians[i] = p * (1.0 - p);
        }
        let tree = tree_split_search(&features, &residuals, &hessians, &indices, cfg.max_depth);
        for i in 0..n {
            margins[i] += cfg.shrinkage * tree.predict(&features[i]);
        }
        let loss = mean_logistic_loss(&margins, &targets);
        debug_assert!(
            loss <= losses.last().copied().unwrap_or(f64::INFINITY) + 1e-9,
            "boosting loss increased: {loss}"
        );
        losses.push(loss);
        trees.push(tree);
    }

    Ok((GbmModel { f0, shrinkage: cfg.shrinkage, trees }, losses))
}

/// Fits the boosted model. Deterministic for a given dataset and config.
pub fn fit_gbm(x: &[ProbabilityVector6], y: &[bool], cfg: &GbmConfig) -> Result<GbmModel, GbmError> {
    fit_gbm_traced(x, y, cfg).map(|(model, _)| model)
}

/// Abnormality probability and the thresholded decision at 0.5.
pub fn predict_abnormal(model: &GbmModel, x: &ProbabilityVector6) -> (f64, bool) {
    let margin = model.f0
        + model.shrinkage
            * model
                .trees
                .iter()
                .map(|t| t.predict(&x.0))
                .sum::<f64>();
    let p = sigmoid_scalar(margin);
    (p, p > 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::taxonomy::CellType::*;

    fn pv(vals: [f64; 6]) -> ProbabilityVector6 {
        ProbabilityVector6(vals)
    }

    #[test]
    fn abnormality_rule() {
        assert!(!labelset_is_abnormal(LabelSet::from_types(&[OvalDisc])));
        assert!(labelset_is_abnormal(LabelSet::from_types(&[OvalDisc, Granular])));
        assert!(!labelset_is_abnormal(LabelSet::new()));
        for t in [ElongatedSickle, Reticulocyte, Granular, Echinocyte, Stomatocyte] {
            assert!(labelset_is_abnormal(LabelSet::from_types(&[t])));
        }
    }

    #[test]
    fn pure_class_fit_predicts_near_one() {
        let x: Vec<ProbabilityVector6> = (0..8).map(|i| pv([i as f64 / 8.0; 6])).collect();
        let y = alloc::vec![true; 8];
        let model = fit_gbm(&x, &y, &GbmConfig::default()).unwrap();
        for xi in &x {
            let (p, flag) = predict_abnormal(&model, xi);
            assert!(p > 0.99);
            assert!(flag);
        }
    }

    #[test]
    fn component_threshold_rule_is_learned_exactly() {
        let mut rng = Rng::new(40);
        let x: Vec<ProbabilityVector6> = (0..200)
            .map(|_| {
                let mut v = [0.0; 6];
                for vi in &mut v {
                    *vi = rng.next_f64();
                }
                pv(v)
            })
            .collect();
        let y: Vec<bool> = x.iter().map(|p| p.0[2] > 0.5).collect();
        let cfg = GbmConfig { rounds: 50, max_depth: 3, shrinkage: 0.1 };
        let model = fit_gbm(&x, &y, &cfg).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(xi, &yi)| predict_abnormal(&model, xi).1 == yi)
            .count();
        assert_eq!(correct, 200);
    }

    #[test]
    fn newton_leaves_match_hand_computation() {
        // Four points, depth 1, shrinkage 1: base rate 0.5 so F0 = 0, every
        // residual is ±0.5 with hessian 0.25; leaves are ∓2 by hand.
        let x = alloc::vec![
            pv([0.1, 0.5, 0.5, 0.5, 0.5, 0.5]),
            pv([0.2, 0.5, 0.5, 0.5, 0.5, 0.5]),
            pv([0.8, 0.5, 0.5, 0.5, 0.5, 0.5]),
            pv([0.9, 0.5, 0.5, 0.5, 0.5, 0.5]),
        ];
        let y = alloc::vec![false, false, true, true];
        let cfg = GbmConfig { rounds: 1, max_depth: 1, shrinkage: 1.0 };
        let model = fit_gbm(&x, &y, &cfg).unwrap();
        assert_eq!(model.f0, 0.0);
        match &model.trees[0] {
            RegressionTree::Split { dim, value, left, right } => {
                assert_eq!(*dim, 0);
                assert!((value - 0.5).abs() < 1e-12);
                assert_eq!(**left, RegressionTree::Leaf(-2.0));
                assert_eq!(**right, RegressionTree::Leaf(2.0));
            }
            RegressionTree::Leaf(_) => panic!("expected a split"),
        }
    }

    #[test]
    fn constant_residuals_make_single_leaf() {
        let features = alloc::vec![[0.1, 0.0, 0.0, 0.0, 0.0, 0.0], [0.9, 0.0, 0.0, 0.0, 0.0, 0.0]];
        let residuals = alloc::vec![0.25, 0.25];
        let hessians = alloc::vec![0.1875, 0.1875];
        let tree = tree_split_search(&features, &residuals, &hessians, &[0, 1], 3);
        match tree {
            RegressionTree::Leaf(v) => assert!((v - 0.5 / 0.375).abs() < 1e-12),
            _ => panic!("expected single leaf"),
        }
    }

    #[test]
    fn single_sample_is_a_leaf_with_newton_value() {
        let features = alloc::vec![[0.5; 6]];
        let tree = tree_split_search(&features, &[0.3], &[0.21], &[0], 3);
        assert_eq!(tree, RegressionTree::Leaf(0.3 / 0.21));
    }

    #[test]
    fn perfect_split_found_by_dimension_zero() {
        let features = alloc::vec![
            [0.0, 9.0, 0.0, 0.0, 0.0, 0.0],
            [0.1, 3.0, 0.0, 0.0, 0.0, 0.0],
            [0.8, 7.0, 0.0, 0.0, 0.0, 0.0],
            [0.9, 5.0, 0.0, 0.0, 0.0, 0.0],
        ];
        let residuals = alloc::vec![-1.0, -1.0, 1.0, 1.0];
        let hessians = alloc::vec![0.25; 4];
        let tree = tree_split_search(&features, &residuals, &hessians, &[0, 1, 2, 3], 1);
        match tree {
            RegressionTree::Split { dim, value, .. } => {
                assert_eq!(dim, 0);
                assert!((value - 0.45).abs() < 1e-12);
            }
            _ => panic!("expected a split"),
        }
        assert!(tree.depth() == 1);
    }

    #[test]
    fn training_loss_is_non_increasing() {
        let mut rng = Rng::new(10);
        let x: Vec<ProbabilityVector6> = (0..120)
            .map(|_| {
                let mut v = [0.0; 6];
                for vi in &mut v {
                    *vi = rng.next_f64();
                }
                pv(v)
            })
            .collect();
        let y: Vec<bool> = x.iter().map(|p| p.0[0] + p.0[3] > 0.9).collect();
        let (_, losses) = fit_gbm_traced(&x, &y, &GbmConfig::default()).unwrap();
        assert_eq!(losses.len(), 101);
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_tree_model_predicts_from_f0() {
        let model = GbmModel { f0: 0.0, shrinkage: 0.1, trees: alloc::vec![] };
        let (p, flag) = predict_abnormal(&model, &pv([0.5; 6]));
        assert_eq!(p, 0.5);
        assert!(!flag);
    }

    #[test]
    fn prediction_matches_manual_tree_walk() {
        let mut rng = Rng::new(3);
        let x: Vec<ProbabilityVector6> = (0..60)
            .map(|_| {
                let mut v = [0.0; 6];
                for vi in &mut v {
                    *vi = rng.next_f64();
                }
                pv(v)
            })
            .collect();
        let y: Vec<bool> = x.iter().map(|p| p.0[1] > 0.4).collect();
        let cfg = GbmConfig { rounds: 12, max_depth: 3, shrinkage: 0.25 };
        let model = fit_gbm(&x, &y, &cfg).unwrap();

        // Independent walker.
        fn walk(tree: &RegressionTree, x: &[f64; 6]) -> f64 {
            let mut node = tree;
            loop {
                match node {
                    RegressionTree::Leaf(v) => return *v,
                    RegressionTree::Split { dim, value, left, right } => {
                        node = if x[*dim] <= *value { left } else { right };
                    }
                }
            }
        }
        let probe = pv([0.3, 0.41, 0.9, 0.1, 0.5, 0.7]);
        let manual = sigmoid_scalar(
            model.f0 + model.shrinkage * model.trees.iter().map(|t| walk(t, &probe.0)).sum::<f64>(),
        );
        let (p, _) = predict_abnormal(&model, &probe);
        assert_eq!(p, manual);
    }

    #[test]
    fn fit_is_deterministic() {
        let x = alloc::vec![pv([0.2; 6]), pv([0.8; 6]), pv([0.4; 6])];
        let y = alloc::vec![false, true, false];
        let cfg = GbmConfig::default();
        assert_eq!(fit_gbm(&x, &y, &cfg).unwrap(), fit_gbm(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn empty_and_mismatched_inputs_fail() {
        let cfg = GbmConfig::default();
        assert_eq!(fit_gbm(&[], &[], &cfg), Err(GbmError::EmptyDataset));
        assert_eq!(
            fit_gbm(&[pv([0.0; 6])], &[true, false], &cfg),
            Err(GbmError::LengthMismatch)
        );
    }
}
