//! The six binary-relevance classification heads.
//!
//! Each head is a 2048→512→1 network with a ReLU hidden layer and sigmoid
//! output, trained independently with Adam (learning rate 1e-5) on binary
//! cross-entropy with L2 regularization. The six sigmoid outputs form an
//! unnormalized 6-d probability vector; thresholding at 0.5 (strictly
//! greater) yields the predicted label set, which may be empty.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::featurizer::{FeatureVector, FEATURE_DIM};
use crate::nn::{
    adam_step_multi, bce_l2_loss, dense_backward_batch, dense_forward, dense_forward_batch,
    relu_inplace, sigmoid_scalar, AdamState, DenseLayer,
};
use crate::par;
use crate::rng::{mix, Rng};
use crate::taxonomy::{CellType, LabelSet};

pub const HIDDEN_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeadsError {
    EmptyDataset,
    LengthMismatch(String),
    /// AUC needs at least one positive and one negative.
    AucUndefined,
}

impl fmt::Display for HeadsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadsError::EmptyDataset => f.write_str("empty dataset"),
            HeadsError::LengthMismatch(msg) => write!(f, "length mismatch: {msg}"),
            HeadsError::AucUndefined => f.write_str("AUC undefined"),
        }
    }
}

impl core::error::Error for HeadsError {}

/// Unnormalized per-type probabilities in the fixed type order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityVector6(pub [f64; 6]);

impl ProbabilityVector6 {
    #[inline]
    pub fn values(&self) -> &[f64; 6] {
        &self.0
    }

    pub fn get(&self, t: CellType) -> f64 {
        self.0[t.index()]
    }
}

/// One binary classification network: 2048→512 (ReLU) →1 (sigmoid).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryHead {
    pub dense1: DenseLayer,
    pub dense2: DenseLayer,
    pub adam: AdamState,
}

impl BinaryHead {
    /// All-zero parameters; predicts exactly 0.5 everywhere.
    pub fn zeroed(learning_rate: f64) -> BinaryHead {
        let dense1 = DenseLayer::zeros(HIDDEN_DIM, FEATURE_DIM);
        let dense2 = DenseLayer::zeros(1, HIDDEN_DIM);
        let n = dense1.param_count() + dense2.param_count();
        BinaryHead { dense1, dense2, adam: AdamState::new(n, learning_rate) }
    }

    /// He-initialized hidden layer; the output layer starts near zero so the
    /// initial prediction is close to 0.5 while gradients still flow.
    pub fn seeded(seed: u64, learning_rate: f64) -> BinaryHead {
        let mut rng = Rng::new(seed);
        let dense1 = DenseLayer::seeded(HIDDEN_DIM, FEATURE_DIM, &mut rng);
        let mut dense2 = DenseLayer::zeros(1, HIDDEN_DIM);
        for w in dense2.weights.data_mut() {
            *w = rng.gaussian() * 5e-3;
        }
        let n = dense1.param_count() + dense2.param_count();
        BinaryHead { dense1, dense2, adam: AdamState::new(n, learning_rate) }
    }

    /// Pre-sigmoid output for one feature vector.
    pub fn logit(&self, features: &[f64]) -> f64 {
        let mut hidden = dense_forward(&self.dense1, features).expect("head shapes are static");
        relu_inplace(&mut hidden);
        dense_forward(&self.dense2, &hidden).expect("head shapes are static")[0]
    }

    pub fn prob(&self, features: &[f64]) -> f64 {
        sigmoid_scalar(self.logit(features))
    }

    fn l2_of_params(&self) -> f64 {
        let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
        sq(self.dense1.weights.data())
            + sq(self.dense1.bias.data())
            + sq(self.dense2.weights.data())
            + sq(self.dense2.bias.data())
    }
}

/// Training configuration shared by the six heads.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadsConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for HeadsConfig {
    fn default() -> Self {
        HeadsConfig {
            epochs: 200,
            batch_size: 32,
            lambda: 1e-4,
            learning_rate: 1e-5,
            seed: 0,
        }
    }
}

/// Trained heads plus loss bookkeeping.
#[derive(Debug, Clone)]
pub struct HeadsFit {
    /// One head per cell type, in the fixed type order.
    pub heads: Vec<BinaryHead>,
    /// Full-dataset loss (data + L2) before any update, per head.
    pub initial_losses: [f64; 6],
    /// Full-dataset loss after the last epoch, per head.
    pub final_losses: [f64; 6],
    /// Mean per-batch data loss of each epoch, per head.
    pub epoch_losses: Vec<[f64; 6]>,
}

/// Full-dataset loss of one head: mean BCE plus `lambda * Σ param²`.
fn dataset_loss(head: &BinaryHead, xs: &[f64], targets: &[f64], lambda: f64) -> f64 {
    let n = targets.len();
    let preds: Vec<f64> = (0..n)
        .map(|i| head.prob(&xs[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]))
        .collect();
    bce_l2_loss(&preds, targets, &[], 0.0).loss + lambda * head.l2_of_params()
}

struct HeadTrainResult {
    head: BinaryHead,
    initial_loss: f64,
    final_loss: f64,
    epoch_losses: Vec<f64>,
}

fn train_one_head(
    xs: &[f64],
    targets: &[f64],
    cfg: &HeadsConfig,
    head_seed: u64,
) -> HeadTrainResult {
    let n = targets.len();
    let mut head = BinaryHead::seeded(head_seed, cfg.learning_rate);
    let initial_loss = dataset_loss(&head, xs, targets, cfg.lambda);

    let bcap = cfg.batch_size.min(n).max(1);
    let mut rng = Rng::new(mix(head_seed, 0x7ea1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut xb = vec![0.0; bcap * FEATURE_DIM];
    let mut yb = vec![0.0; bcap];
    let mut gw1 = vec![0.0; HIDDEN_DIM * FEATURE_DIM];
    let mut gb1 = vec![0.0; HIDDEN_DIM];
    let mut gw2 = vec![0.0; HIDDEN_DIM];
    let mut gb2 = vec![0.0; 1];
    let mut g_hidden = vec![0.0; bcap * HIDDEN_DIM];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(bcap) {
            let b = chunk.len();
            for (row, &src) in chunk.iter().enumerate() {
                xb[row * FEATURE_DIM..(row + 1) * FEATURE_DIM]
                    .copy_from_slice(&xs[src * FEATURE_DIM..(src + 1) * FEATURE_DIM]);
                yb[row] = targets[src];
            }
            let mut hidden = dense_forward_batch(&head.dense1, &xb[..b * FEATURE_DIM], b)
                .expect("head shapes are static");
            relu_inplace(&mut hidden);
            let logits = dense_forward_batch(&head.dense2, &hidden, b)
                .expect("head shapes are static");
            let probs: Vec<f64> = logits.iter().map(|&z| sigmoid_scalar(z)).collect();
            let bce = bce_l2_loss(&probs, &yb[..b], &[], 0.0);
            loss_sum += bce.loss;
            batches += 1;

            dense_backward_batch(
                &head.dense2,
                &hidden,
                &bce.grad_logits,
                b,
                true,
                &mut gw2,
                &mut gb2,
                &mut g_hidden[..b * HIDDEN_DIM],
            )
            .expect("head shapes are static");
            // ReLU gate: hidden value 0 means the unit was inactive.
            for (g, &a) in g_hidden[..b * HIDDEN_DIM].iter_mut().zip(&hidden) {
                if a == 0.0 {
                    *g = 0.0;
                }
            }
            dense_backward_batch(
                &head.dense1,
                &xb[..b * FEATURE_DIM],
                &g_hidden[..b * HIDDEN_DIM],
                b,
                false,
                &mut gw1,
                &mut gb1,
                &mut [],
            )
            .expect("head shapes are static");

            let lam2 = 2.0 * cfg.lambda;
            for (g, w) in gw1.iter_mut().zip(head.dense1.weights.data()) {
                *g += lam2 * w;
            }
            for (g, w) in gb1.iter_mut().zip(head.dense1.bias.data()) {
                *g += lam2 * w;
            }
            for (g, w) in gw2.iter_mut().zip(head.dense2.weights.data()) {
                *g += lam2 * w;
            }
            for (g, w) in gb2.iter_mut().zip(head.dense2.bias.data()) {
                *g += lam2 * w;
            }

            adam_step_multi(
                &mut [
                    (head.dense1.weights.data_mut(), &gw1),
                    (head.dense1.bias.data_mut(), &gb1),
                    (head.dense2.weights.data_mut(), &gw2),
                    (head.dense2.bias.data_mut(), &gb2),
                ],
                &mut head.adam,
            )
            .expect("finite gradients from finite data");
        }
        epoch_losses.push(loss_sum / batches.max(1) as f64);
    }

    let final_loss = dataset_loss(&head, xs, targets, cfg.lambda);
    HeadTrainResult { head, initial_loss, final_loss, epoch_losses }
}

/// Trains the six binary-relevance heads.
///
/// Head `k` learns the target "type `k` is in the label set". A type that
/// never occurs simply trains toward the constant negative predictor.
/// Deterministic for a given config; heads may train concurrently since
/// their state is disjoint.
pub fn train_heads(
    features: &[FeatureVector],
    labels: &[LabelSet],
    cfg: &HeadsConfig,
) -> Result<HeadsFit, HeadsError> {
    if features.is_empty() {
        return Err(HeadsError::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(HeadsError::LengthMismatch(String::from("features vs labels")));
    }
    let n = features.len();
    let mut xs = vec![0.0; n * FEATURE_DIM];
    for (i, f) in features.iter().enumerate() {
        xs[i * FEATURE_DIM..(i + 1) * FEATURE_DIM].copy_from_slice(f.values());
    }
    let xs = &xs;

    let jobs: Vec<_> = CellType::ALL
        .into_iter()
        .map(|cell_type| {
            let targets: Vec<f64> = labels
                .iter()
                .map(|ls| if ls.contains(cell_type) { 1.0 } else { 0.0 })
                .collect();
            let head_seed = mix(cfg.seed, 0x6ead + cell_type.index() as u64);
            move || train_one_head(xs, &targets, cfg, head_seed)
        })
        .collect();
    let results = par::par_run(jobs);

    let mut fit = HeadsFit {
        heads: Vec::with_capacity(6),
        initial_losses: [0.0; 6],
        final_losses: [0.0; 6],
        epoch_losses: vec![[0.0; 6]; cfg.epochs],
    };
    for (k, r) in results.into_iter().enumerate() {
        fit.initial_losses[k] = r.initial_loss;
        fit.final_losses[k] = r.final_loss;
        for (e, &l) in r.epoch_losses.iter().enumerate() {
            fit.epoch_losses[e][k] = l;
        }
        fit.heads.push(r.head);
    }
    Ok(fit)
}

/// Runs all six heads on one feature vector. No normalization across
/// components: each value is an independent sigmoid output.
pub fn predict_probs(heads: &[BinaryHead], features: &FeatureVector) -> ProbabilityVector6 {
    assert_eq!(heads.len(), 6, "expected one head per cell type");
    let mut out = [0.0; 6];
    for (o, head) in out.iter_mut().zip(heads) {
        *o = head.prob(features.values());
    }
    ProbabilityVector6(out)
}

/// Types whose probability is strictly greater than `threshold`.
pub fn probs_to_labels(probs: &ProbabilityVector6, threshold: f64) -> LabelSet {
    let mut labels = LabelSet::new();
    for t in CellType::ALL {
        if probs.get(t) > threshold {
            labels.insert(t);
        }
    }
    labels
}

/// ROC-AUC via the rank-sum form of the Mann-Whitney statistic; ties get
/// average ranks (each tied positive-negative pair counts one half).
pub fn roc_auc(scores: &[f64], positives: &[bool]) -> Result<f64, HeadsError> {
    if scores.len() != positives.len() {
        return Err(HeadsError::LengthMismatch(String::from("scores vs positives")));
    }
    let pos = positives.iter().filter(|p| **p).count();
    let neg = positives.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(HeadsError::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("scores are finite"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share the average rank.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if positives[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = pos as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Fraction of samples whose predicted label set equals the ground truth
/// exactly; empty-vs-empty counts as a match.
pub fn exact_match_accuracy(pred: &[LabelSet], gt: &[LabelSet]) -> Result<f64, HeadsError> {
    if pred.len() != gt.len() {
        return Err(HeadsError::LengthMismatch(String::from("pred vs gt")));
    }
    if pred.is_empty() {
        return Err(HeadsError::EmptyDataset);
    }
    let hits = pred.iter().zip(gt).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}
