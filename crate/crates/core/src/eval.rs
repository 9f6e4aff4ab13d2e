//! Experiment replication: stratified k-fold cross-validation, the
//! Model A / A* / B protocol, detector evaluation, and end-to-end analysis
//! of a full image.
//!
//! Model A trains and tests on the mixed dataset (single- plus multi-cell
//! patches), Model A* trains on the mixed dataset but tests only on
//! single-cell patches, and Model B trains only on single-cell patches and
//! tests on the mixed dataset. All three share fold assignments for a given
//! seed, so their metrics are directly comparable.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::boxes::ScoredBox;
use crate::detector::{
    average_precision, ground_truth_boxes, match_detections, propose_regions, DetectorError,
    DetectorModel,
};
use crate::featurizer::{FeatureExtractor, FeatureVector, FeaturizerError, PATCH_SIDE};
use crate::gbm::{fit_gbm, labelset_is_abnormal, predict_abnormal, GbmConfig, GbmError, GbmModel};
use crate::heads::{
    exact_match_accuracy, predict_probs, probs_to_labels, roc_auc, train_heads, BinaryHead,
    HeadsConfig, HeadsError, ProbabilityVector6,
};
use crate::par;
use crate::raster::{crop, resize_bilinear, BinaryMask, Raster};
use crate::rng::{mix, Rng};
use crate::synth::{instances_covering, LabeledScene, COVERAGE_FRACTION};
use crate::taxonomy::{CellType, LabelSet};

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    BadDataset(String),
    BadFolds(String),
    Detector(DetectorError),
    Heads(HeadsError),
    Gbm(GbmError),
    Featurizer(FeaturizerError),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::BadDataset(msg) => write!(f, "bad dataset: {msg}"),
            EvalError::BadFolds(msg) => write!(f, "bad fold request: {msg}"),
            EvalError::Detector(e) => write!(f, "detector: {e}"),
            EvalError::Heads(e) => write!(f, "heads: {e}"),
            EvalError::Gbm(e) => write!(f, "gbm: {e}"),
            EvalError::Featurizer(e) => write!(f, "featurizer: {e}"),
        }
    }
}

impl core::error::Error for EvalError {}

impl From<DetectorError> for EvalError {
    fn from(e: DetectorError) -> Self {
        EvalError::Detector(e)
    }
}

impl From<HeadsError> for EvalError {
    fn from(e: HeadsError) -> Self {
        EvalError::Heads(e)
    }
}

impl From<GbmError> for EvalError {
    fn from(e: GbmError) -> Self {
        EvalError::Gbm(e)
    }
}

impl From<FeaturizerError> for EvalError {
    fn from(e: FeaturizerError) -> Self {
        EvalError::Featurizer(e)
    }
}

/// Deterministic partition of `0..n` into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    /// Fold index of each sample.
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Shuffled k-fold split; fold sizes differ by at most one.
///
/// With `strata` given (one key per sample), each stratum is shuffled and
/// dealt to the currently least-filled fold, spreading every stratum as
/// evenly as possible.
pub fn kfold_split(
    n: usize,
    k: usize,
    seed: u64,
    strata: Option<&[u64]>,
) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::BadFolds(String::from("k must be at least 2")));
    }
    if n < k {
        return Err(EvalError::BadFolds(String::from("fewer samples than folds")));
    }
    if let Some(keys) = strata {
        if keys.len() != n {
            return Err(EvalError::BadFolds(String::from("strata length mismatch")));
        }
    }
    let mut rng = Rng::new(mix(seed, 0xf01d));
    let mut assignment = vec![0usize; n];
    match strata {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            for (pos, &sample) in order.iter().enumerate() {
                assignment[sample] = pos % k;
            }
        }
        Some(keys) => {
            // Group samples by key, in sorted key order for determinism.
            let mut unique: Vec<u64> = keys.to_vec();
            unique.sort_unstable();
            unique.dedup();
            let mut fill = vec![0usize; k];
            for key in unique {
                let mut members: Vec<usize> =
                    (0..n).filter(|&i| keys[i] == key).collect();
                rng.shuffle(&mut members);
                for sample in members {
                    let fold = (0..k).min_by_key(|&f| (fill[f], f)).expect("k >= 2");
                    assignment[sample] = fold;
                    fill[fold] += 1;
                }
            }
        }
    }
    Ok(FoldAssignment { k, assignment, seed })
}

/// The three experiment protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    /// Mixed train, mixed test.
    ModelA,
    /// Mixed train, single-cell test.
    ModelAStar,
    /// Single-cell train, mixed test.
    ModelB,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::ModelA => "model_a",
            ExperimentId::ModelAStar => "model_a_star",
            ExperimentId::ModelB => "model_b",
        }
    }

    pub fn from_name(name: &str) -> Option<ExperimentId> {
        [ExperimentId::ModelA, ExperimentId::ModelAStar, ExperimentId::ModelB]
            .into_iter()
            .find(|e| e.name() == name)
    }
}

/// One classification patch: a 224×224 crop with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub patch: Raster,
    pub labels: LabelSet,
    /// True when the source region held two or more cell instances.
    pub multi: bool,
}

/// Extracts the classification patches of a scene: one per mask component of
/// at least `min_area` pixels, resized to 224×224, labeled through instance
/// footprint coverage.
pub fn scene_patches(scene: &LabeledScene, min_area: u32) -> Vec<PatchSample> {
    ground_truth_boxes(&scene.mask, min_area)
        .iter()
        .map(|bbox| {
            let instances: Vec<_> = instances_covering(scene, bbox, COVERAGE_FRACTION).collect();
            let labels: LabelSet = instances.iter().map(|i| i.cell_type).collect();
            let region = crop(&scene.image, bbox).expect("component box lies in the image");
            PatchSample {
                patch: resize_bilinear(&region, PATCH_SIDE, PATCH_SIDE),
                labels,
                multi: instances.len() >= 2,
            }
        })
        .collect()
}

/// Patch extraction for datasets that carry only instance boxes (the
/// manifest wire form): coverage uses box intersection instead of footprint
/// pixels.
pub fn patches_from_instances(
    image: &Raster,
    mask: &BinaryMask,
    instances: &[(CellType, crate::boxes::BoundingBox)],
    min_area: u32,
) -> Vec<PatchSample> {
    ground_truth_boxes(mask, min_area)
        .iter()
        .map(|bbox| {
            let covered: Vec<CellType> = instances
                .iter()
                .filter(|(_, ib)| {
                    ib.intersection_area(bbox) as f64 > COVERAGE_FRACTION * ib.area() as f64
                })
                .map(|(t, _)| *t)
                .collect();
            let region = crop(image, bbox).expect("component box lies in the image");
            PatchSample {
                patch: resize_bilinear(&region, PATCH_SIDE, PATCH_SIDE),
                labels: covered.iter().copied().collect(),
                multi: covered.len() >= 2,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub fold_seed: u64,
    pub heads: HeadsConfig,
    pub gbm: GbmConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            folds: 5,
            fold_seed: 0,
            heads: HeadsConfig::default(),
            gbm: GbmConfig::default(),
        }
    }
}

/// Metrics of one cross-validation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldMetrics {
    /// Per-type test AUC; `None` when the fold's test selection has a
    /// single class for that type.
    pub auc: [Option<f64>; 6],
    pub exact_match: f64,
    /// Present for Model A, which carries the abnormality stage.
    pub gbm_accuracy: Option<f64>,
    pub train_size: usize,
    pub test_size: usize,
}

/// Cross-validated experiment result.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: ExperimentId,
    pub folds: usize,
    pub fold_seed: u64,
    pub fold_assignment: Vec<usize>,
    pub per_fold: Vec<FoldMetrics>,
    /// Fold-mean AUC per type over folds where it was defined.
    pub mean_auc: [Option<f64>; 6],
    pub mean_exact_match: f64,
    pub mean_gbm_accuracy: Option<f64>,
}

/// Runs one experiment protocol over the patch set with k-fold
/// cross-validation. Deterministic for a given config.
pub fn run_experiment(
    id: ExperimentId,
    patches: &[PatchSample],
    extractor: &FeatureExtractor,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, EvalError> {
    if patches.is_empty() {
        return Err(EvalError::BadDataset(String::from("no patches")));
    }
    if !patches.iter().any(|p| p.multi) || !patches.iter().any(|p| !p.multi) {
        return Err(EvalError::BadDataset(String::from(
            "experiments need both single-cell and multi-cell patches",
        )));
    }

    let features: Vec<FeatureVector> = par::par_map(patches, |_, p| {
        extractor
            .extract_features(&p.patch)
            .expect("patches are 224×224 by construction")
    });

    // Stratify by (label-set signature, single-vs-multi).
    let strata: Vec<u64> = patches
        .iter()
        .map(|p| ((p.labels.bits() as u64) << 1) | p.multi as u64)
        .collect();
    let folds = kfold_split(patches.len(), cfg.folds, cfg.fold_seed, Some(&strata))?;

    let mut per_fold = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        let train_idx: Vec<usize> = (0..patches.len())
            .filter(|&i| folds.assignment[i] != fold)
            .filter(|&i| match id {
                ExperimentId::ModelB => !patches[i].multi,
                _ => true,
            })
            .collect();
        let test_idx: Vec<usize> = (0..patches.len())
            .filter(|&i| folds.assignment[i] == fold)
            .filter(|&i| match id {
                ExperimentId::ModelAStar => !patches[i].multi,
                _ => true,
            })
            .collect();
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err(EvalError::BadDataset(String::from(
                "a fold has an empty train or test selection",
            )));
        }

        let train_features: Vec<FeatureVector> =
            train_idx.iter().map(|&i| features[i].clone()).collect();
        let train_labels: Vec<LabelSet> = train_idx.iter().map(|&i| patches[i].labels).collect();
        let heads_cfg = HeadsConfig { seed: mix(cfg.heads.seed, fold as u64), ..cfg.heads.clone() };
        let fit = train_heads(&train_features, &train_labels, &heads_cfg)?;

        let test_probs: Vec<ProbabilityVector6> = test_idx
            .iter()
            .map(|&i| predict_probs(&fit.heads, &features[i]))
            .collect();
        let test_labels: Vec<LabelSet> = test_idx.iter().map(|&i| patches[i].labels).collect();

        let mut auc = [None; 6];
        for t in CellType::ALL {
            let scores: Vec<f64> = test_probs.iter().map(|p| p.get(t)).collect();
            let positives: Vec<bool> = test_labels.iter().map(|l| l.contains(t)).collect();
            auc[t.index()] = match roc_auc(&scores, &positives) {
                Ok(v) => Some(v),
                Err(HeadsError::AucUndefined) => None,
                Err(e) => return Err(e.into()),
            };
        }

        let predicted: Vec<LabelSet> =
            test_probs.iter().map(|p| probs_to_labels(p, 0.5)).collect();
        let exact_match = exact_match_accuracy(&predicted, &test_labels)?;

        let gbm_accuracy = if id == ExperimentId::ModelA {
            let train_probs: Vec<ProbabilityVector6> = train_idx
                .iter()
                .map(|&i| predict_probs(&fit.heads, &features[i]))
                .collect();
            let train_abnormal: Vec<bool> = train_idx
                .iter()
                .map(|&i| labelset_is_abnormal(patches[i].labels))
                .collect();
            let model = fit_gbm(&train_probs, &train_abnormal, &cfg.gbm)?;
            let correct = test_idx
                .iter()
                .zip(&test_probs)
                .filter(|(&i, probs)| {
                    predict_abnormal(&model, probs).1 == labelset_is_abnormal(patches[i].labels)
                })
                .count();
            Some(correct as f64 / test_idx.len() as f64)
        } else {
            None
        };

        per_fold.push(FoldMetrics {
            auc,
            exact_match,
            gbm_accuracy,
            train_size: train_idx.len(),
            test_size: test_idx.len(),
        });
    }

    let mut mean_auc = [None; 6];
    for t in 0..6 {
        let defined: Vec<f64> = per_fold.iter().filter_map(|f| f.auc[t]).collect();
        if !defined.is_empty() {
            mean_auc[t] = Some(defined.iter().sum::<f64>() / defined.len() as f64);
        }
    }
    let mean_exact_match =
        per_fold.iter().map(|f| f.exact_match).sum::<f64>() / per_fold.len() as f64;
    let mean_gbm_accuracy = if id == ExperimentId::ModelA {
        Some(
            per_fold.iter().filter_map(|f| f.gbm_accuracy).sum::<f64>() / per_fold.len() as f64,
        )
    } else {
        None
    };

    Ok(ExperimentReport {
        experiment: id,
        folds: cfg.folds,
        fold_seed: cfg.fold_seed,
        fold_assignment: folds.assignment,
        per_fold,
        mean_auc,
        mean_exact_match,
        mean_gbm_accuracy,
    })
}

/// Match counts of one evaluated scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneMatchSummary {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorEval {
    pub ap: f64,
    pub per_scene: Vec<SceneMatchSummary>,
}

/// Pools detections over all scenes and computes average precision at the
/// given IoU threshold.
pub fn evaluate_detector(
    model: &DetectorModel,
    scenes: &[(&Raster, &BinaryMask)],
    iou_threshold: f64,
) -> Result<DetectorEval, EvalError> {
    let mut pooled: Vec<(f64, bool)> = Vec::new();
    let mut per_scene = Vec::with_capacity(scenes.len());
    let mut total_gt = 0usize;
    for (image, mask) in scenes {
        let gt = ground_truth_boxes(mask, model.min_area);
        total_gt += gt.len();
        let proposals = propose_regions(model, image);
        let matched = match_detections(&proposals, &gt, iou_threshold);
        per_scene.push(SceneMatchSummary {
            true_positives: matched.true_positives.len(),
            false_positives: matched.false_positives.len(),
            false_negatives: matched.false_negatives.len(),
        });
        for (sb, _) in &matched.true_positives {
            pooled.push((sb.score, true));
        }
        for sb in &matched.false_positives {
            pooled.push((sb.score, false));
        }
    }
    let ap = average_precision(&pooled, total_gt)?;
    Ok(DetectorEval { ap, per_scene })
}

/// One fully analyzed region of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzedRegion {
    pub region: ScoredBox,
    pub probs: ProbabilityVector6,
    pub labels: LabelSet,
    pub abnormal_prob: f64,
    pub abnormal: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalyzedImage {
    pub regions: Vec<AnalyzedRegion>,
}

/// Full pipeline on one image: propose → crop → resize → features → six
/// heads → threshold → abnormality.
pub fn analyze_image(
    image: &Raster,
    detector: &DetectorModel,
    heads: &[BinaryHead],
    gbm: &GbmModel,
    extractor: &FeatureExtractor,
) -> Result<AnalyzedImage, EvalError> {
    let mut regions = Vec::new();
    for sb in propose_regions(detector, image) {
        let patch = crop(image, &sb.bbox).expect("proposals are clamped to the image");
        let patch = resize_bilinear(&patch, PATCH_SIDE, PATCH_SIDE);
        let features = extractor.extract_features(&patch)?;
        let probs = predict_probs(heads, &features);
        let labels = probs_to_labels(&probs, 0.5);
        let (abnormal_prob, abnormal) = predict_abnormal(gbm, &probs);
        regions.push(AnalyzedRegion { region: sb, probs, labels, abnormal_prob, abnormal });
    }
    Ok(AnalyzedImage { regions })
}
