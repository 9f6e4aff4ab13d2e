//! Core pipeline for multi-instance red-blood-cell detection and
//! multi-label cell-type classification on microscopy images.
//!
//! The pipeline has four stages:
//!
//! 1. **Region proposal** ([`detector`]): a trainable foreground scorer over
//!    local window statistics, connected components and NMS produce scored
//!    candidate boxes from a full-scale image.
//! 2. **Feature extraction** ([`featurizer`]): a frozen, seeded convolutional
//!    stack maps every 224×224 patch to a 2048-d feature vector.
//! 3. **Multi-label classification** ([`heads`]): six independent binary
//!    heads (one per cell type) turn a feature vector into an unnormalized
//!    6-d probability vector and a thresholded label set.
//! 4. **Abnormality scoring** ([`gbm`]): a gradient-boosted tree classifier
//!    maps the 6-d vector to a normal/abnormal decision.
//!
//! [`synth`] generates deterministic labeled scenes so the whole pipeline can
//! be trained and evaluated without clinical data, and [`eval`] replicates
//! the cross-validated experiment protocol on top of it.
//!
//! Everything in this crate is `no_std`-compatible (`alloc` required); the
//! `std` feature only enables threaded batch helpers and changes no results.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod boxes;
pub mod components;
pub mod detector;
pub mod eval;
pub mod featurizer;
pub mod gbm;
pub mod heads;
pub(crate) mod math;
pub mod nn;
pub(crate) mod par;
pub mod raster;
pub mod rng;
pub mod synth;
pub mod taxonomy;

pub use boxes::{iou, nms, BoundingBox, ScoredBox};
pub use components::{bounding_box, connected_components, PixelRegion};
pub use detector::{
    average_precision, ground_truth_boxes, match_detections, propose_regions, train_detector,
    DetectionMatch, DetectorConfig, DetectorModel,
};
pub use eval::{
    analyze_image, evaluate_detector, kfold_split, run_experiment, scene_patches, AnalyzedImage,
    ExperimentConfig, ExperimentId, ExperimentReport, FoldAssignment, PatchSample,
};
pub use featurizer::{FeatureExtractor, FeatureVector, FEATURE_DIM};
pub use gbm::{fit_gbm, labelset_is_abnormal, predict_abnormal, GbmConfig, GbmModel, RegressionTree};
pub use heads::{
    exact_match_accuracy, predict_probs, probs_to_labels, roc_auc, train_heads, BinaryHead,
    HeadsConfig, ProbabilityVector6,
};
pub use raster::{crop, resize_bilinear, BinaryMask, Raster};
pub use rng::Rng;
pub use synth::{
    generate_scene, patch_labelset, plan_dataset, CellInstance, DatasetConfig, LabeledScene,
    OverlapMode, SceneSpec, ShapeParams,
};
pub use taxonomy::{CellType, LabelSet};
