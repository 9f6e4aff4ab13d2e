//! Region proposal and detection evaluation.
//!
//! The proposal stage scores 16×16 windows (stride 8) of the image with a
//! small trainable foreground network over per-window statistics, bilinearly
//! spreads the window probabilities back to pixels, thresholds, and turns
//! the connected components into candidate boxes. A second small network
//! scores each candidate (objectness) and NMS removes duplicates.
//!
//! Training follows the stated recipe: momentum optimizer with learning rate
//! 1e-3, decay 1e-6, momentum 0.9, batch size 10, binary cross-entropy.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::boxes::{iou, nms, BoundingBox, ScoredBox};
use crate::components::connected_components;
use crate::math;
use crate::nn::{
    bce_l2_loss, dense_backward_batch, dense_forward, dense_forward_batch, momentum_step_multi,
    relu_inplace, sigmoid_scalar, DenseLayer, MomentumState,
};
use crate::raster::{BinaryMask, Raster};
use crate::rng::{mix, Rng};

pub const WINDOW: u32 = 16;
pub const STRIDE: u32 = 8;
/// Mean, variance, edge energy and range per channel.
pub const STAT_DIM: usize = 12;
/// Region stats plus area and aspect shape cues.
pub const OBJ_DIM: usize = 14;
const HIDDEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectorError {
    EmptyDataset,
    BadInput(String),
    /// Average precision needs at least one ground-truth region.
    UndefinedRecall,
}

impl fmt::Display for DetectorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorError::EmptyDataset => f.write_str("empty dataset"),
            DetectorError::BadInput(msg) => write!(f, "bad input: {msg}"),
            DetectorError::UndefinedRecall => f.write_str("undefined recall: zero ground truth"),
        }
    }
}

impl core::error::Error for DetectorError {}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub momentum: f64,
    pub seed: u64,
    pub fg_threshold: f64,
    pub nms_iou: f64,
    pub min_area: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            epochs: 50,
            batch_size: 10,
            learning_rate: 1e-3,
            decay: 1e-6,
            momentum: 0.9,
            seed: 0,
            fg_threshold: 0.5,
            nms_iou: 0.5,
            min_area: 30,
        }
    }
}

/// Trained proposal model: two small MLP scorers plus pipeline thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub fg1: DenseLayer,
    pub fg2: DenseLayer,
    pub obj1: DenseLayer,
    pub obj2: DenseLayer,
    pub fg_threshold: f64,
    pub nms_iou: f64,
    pub min_area: u32,
}

impl DetectorModel {
    pub fn foreground_prob(&self, stats: &[f64; STAT_DIM]) -> f64 {
        mlp_prob(&self.fg1, &self.fg2, stats)
    }

    pub fn objectness(&self, features: &[f64; OBJ_DIM]) -> f64 {
        mlp_prob(&self.obj1, &self.obj2, features)
    }
}

fn mlp_prob(l1: &DenseLayer, l2: &DenseLayer, x: &[f64]) -> f64 {
    let mut hidden = dense_forward(l1, x).expect("scorer shapes are static");
    relu_inplace(&mut hidden);
    sigmoid_scalar(dense_forward(l2, &hidden).expect("scorer shapes are static")[0])
}

/// Matched/unmatched detections of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMatch {
    /// Proposals matched to a ground-truth box, with its index.
    pub true_positives: Vec<(ScoredBox, usize)>,
    pub false_positives: Vec<ScoredBox>,
    /// Indices of ground-truth boxes no proposal matched.
    pub false_negatives: Vec<usize>,
}

/// Per-channel mean, variance, edge energy and range over a box, with
/// samples normalized to [0, 1].
pub fn region_stats(image: &Raster, bbox: &BoundingBox) -> [f64; STAT_DIM] {
    let ch = image.channels() as usize;
    debug_assert_eq!(ch, 3);
    let mut sum = [0.0; 3];
    let mut sum_sq = [0.0; 3];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut edge = [0.0; 3];
    let mut edge_terms = 0u64;
    for y in bbox.y_min()..=bbox.y_max() {
        for x in bbox.x_min()..=bbox.x_max() {
            let px = image.pixel(x, y);
            for c in 0..3 {
                let v = px[c] as f64 / 255.0;
                sum[c] += v;
                sum_sq[c] += v * v;
                lo[c] = math::fmin(lo[c], v);
                hi[c] = math::fmax(hi[c], v);
            }
            if x < bbox.x_max() {
                let right = image.pixel(x + 1, y);
                for c in 0..3 {
                    let d = (px[c] as f64 - right[c] as f64) / 255.0;
                    edge[c] += d * d;
                }
                edge_terms += 1;
            }
            if y < bbox.y_max() {
                let below = image.pixel(x, y + 1);
                for c in 0..3 {
                    let d = (px[c] as f64 - below[c] as f64) / 255.0;
                    edge[c] += d * d;
                }
                edge_terms += 1;
            }
        }
    }
    let n = bbox.area() as f64;
    let mut out = [0.0; STAT_DIM];
    for c in 0..3 {
        let mean = sum[c] / n;
        out[c] = mean;
        out[3 + c] = math::fmax(sum_sq[c] / n - mean * mean, 0.0);
        out[6 + c] = if edge_terms > 0 { edge[c] / edge_terms as f64 } else { 0.0 };
        out[9 + c] = hi[c] - lo[c];
    }
    out
}

fn objectness_features(image: &Raster, bbox: &BoundingBox) -> [f64; OBJ_DIM] {
    let stats = region_stats(image, bbox);
    let mut out = [0.0; OBJ_DIM];
    out[..STAT_DIM].copy_from_slice(&stats);
    let area_frac = bbox.area() as f64 / (image.width() as f64 * image.height() as f64);
    out[STAT_DIM] = math::sqrt(area_frac);
    out[STAT_DIM + 1] =
        bbox.width().min(bbox.height()) as f64 / bbox.width().max(bbox.height()) as f64;
    out
}

/// Window top-left offsets along one axis: stride steps plus a final
/// flush-right window when the stride does not divide evenly.
fn window_starts(extent: u32) -> Vec<u32> {
    let mut xs = Vec::new();
    if extent < WINDOW {
        return xs;
    }
    let last = extent - WINDOW;
    let mut x = 0;
    while x <= last {
        xs.push(x);
        x += STRIDE;
    }
    if *xs.last().expect("at least one window") != last {
        xs.push(last);
    }
    xs
}

/// Bounding boxes of mask components, skipping regions under `min_area`
/// pixels. Order follows the component scan.
pub fn ground_truth_boxes(mask: &BinaryMask, min_area: u32) -> Vec<BoundingBox> {
    connected_components(mask)
        .iter()
        .filter(|r| r.len() >= min_area as usize)
        .map(|r| r.bbox())
        .collect()
}

#[derive(Debug, Clone)]
struct MlpFit {
    l1: DenseLayer,
    l2: DenseLayer,
    initial_loss: f64,
    final_loss: f64,
    epoch_losses: Vec<f64>,
}

/// Trains one `dim→16→1` sigmoid scorer with the momentum optimizer.
fn train_mlp(
    samples: &[f64],
    dim: usize,
    targets: &[f64],
    cfg: &DetectorConfig,
    seed: u64,
) -> MlpFit {
    let n = targets.len();
    let mut rng = Rng::new(seed);
    let l1 = DenseLayer::seeded(HIDDEN, dim, &mut rng);
    let mut l2 = DenseLayer::zeros(1, HIDDEN);
    for w in l2.weights.data_mut() {
        *w = rng.gaussian() * 5e-3;
    }
    let mut fit = MlpFit { l1, l2, initial_loss: 0.0, final_loss: 0.0, epoch_losses: Vec::new() };
    if n == 0 {
        return fit;
    }

    let full_loss = |l1: &DenseLayer, l2: &DenseLayer| -> f64 {
        let preds: Vec<f64> = (0..n)
            .map(|i| mlp_prob(l1, l2, &samples[i * dim..(i + 1) * dim]))
            .collect();
        bce_l2_loss(&preds, targets, &[], 0.0).loss
    };
    fit.initial_loss = full_loss(&fit.l1, &fit.l2);

    let total_params = fit.l1.param_count() + fit.l2.param_count();
    let mut opt = MomentumState::new(total_params);
    opt.learning_rate = cfg.learning_rate;
    opt.decay = cfg.decay;
    opt.momentum = cfg.momentum;

    let bcap = cfg.batch_size.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut xb = vec![0.0; bcap * dim];
    let mut yb = vec![0.0; bcap];
    let mut gw1 = vec![0.0; HIDDEN * dim];
    let mut gb1 = vec![0.0; HIDDEN];
    let mut gw2 = vec![0.0; HIDDEN];
    let mut gb2 = vec![0.0; 1];
    let mut g_hidden = vec![0.0; bcap * HIDDEN];

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(bcap) {
            let b = chunk.len();
            for (row, &src) in chunk.iter().enumerate() {
                xb[row * dim..(row + 1) * dim].copy_from_slice(&samples[src * dim..(src + 1) * dim]);
                yb[row] = targets[src];
            }
            let mut hidden =
                dense_forward_batch(&fit.l1, &xb[..b * dim], b).expect("scorer shapes are static");
            relu_inplace(&mut hidden);
            let logits =
                dense_forward_batch(&fit.l2, &hidden, b).expect("scorer shapes are static");
            let probs: Vec<f64> = logits.iter().map(|&z| sigmoid_scalar(z)).collect();
            let bce = bce_l2_loss(&probs, &yb[..b], &[], 0.0);
            loss_sum += bce.loss;
            batches += 1;

            dense_backward_batch(
                &fit.l2,
                &hidden,
                &bce.grad_logits,
                b,
                true,
                &mut gw2,
                &mut gb2,
                &mut g_hidden[..b * HIDDEN],
            )
            .expect("scorer shapes are static");
            for (g, &a) in g_hidden[..b * HIDDEN].iter_mut().zip(&hidden) {
                if a == 0.0 {
                    *g = 0.0;
                }
            }
            dense_backward_batch(
                &fit.l1,
                &xb[..b * dim],
                &g_hidden[..b * HIDDEN],
                b,
                false,
                &mut gw1,
                &mut gb1,
                &mut [],
            )
            .expect("scorer shapes are static");

            momentum_step_multi(
                &mut [
                    (fit.l1.weights.data_mut(), &gw1),
                    (fit.l1.bias.data_mut(), &gb1),
                    (fit.l2.weights.data_mut(), &gw2),
                    (fit.l2.bias.data_mut(), &gb2),
                ],
                &mut opt,
            )
            .expect("finite gradients from finite data");
        }
        fit.epoch_losses.push(loss_sum / batches.max(1) as f64);
    }
    fit.final_loss = full_loss(&fit.l1, &fit.l2);
    fit
}

/// Training trace of both scorers.
#[derive(Debug, Clone)]
pub struct DetectorFit {
    pub model: DetectorModel,
    pub fg_initial_loss: f64,
    pub fg_final_loss: f64,
    pub obj_initial_loss: f64,
    pub obj_final_loss: f64,
}

/// Trains the foreground and objectness scorers; see [`train_detector`].
pub fn train_detector_traced(
    scenes: &[(&Raster, &BinaryMask)],
    cfg: &DetectorConfig,
) -> Result<DetectorFit, DetectorError> {
    if scenes.is_empty() {
        return Err(DetectorError::EmptyDataset);
    }
    for (image, mask) in scenes {
        if image.width() != mask.width() || image.height() != mask.height() {
            return Err(DetectorError::BadInput(String::from("image/mask size mismatch")));
        }
        if image.channels() != 3 {
            return Err(DetectorError::BadInput(String::from("detector expects RGB scenes")));
        }
    }

    // Foreground samples: every window of every scene, labeled by the mask
    // value at the window center.
    let mut fg_samples: Vec<f64> = Vec::new();
    let mut fg_targets: Vec<f64> = Vec::new();
    for (image, mask) in scenes {
        let xs = window_starts(image.width());
        let ys = window_starts(image.height());
        for &y0 in &ys {
            for &x0 in &xs {
                let bbox = BoundingBox::new(x0, y0, x0 + WINDOW - 1, y0 + WINDOW - 1)
                    .expect("window within bounds");
                fg_samples.extend_from_slice(&region_stats(image, &bbox));
                let center = mask.get(x0 + WINDOW / 2, y0 + WINDOW / 2);
                fg_targets.push(if center { 1.0 } else { 0.0 });
            }
        }
    }

    // Objectness samples: ground-truth regions versus jittered and random
    // background boxes.
    let mut obj_samples: Vec<f64> = Vec::new();
    let mut obj_targets: Vec<f64> = Vec::new();
    let mut rng = Rng::new(mix(cfg.seed, 0x0bea));
    for (image, mask) in scenes {
        let gt = ground_truth_boxes(mask, cfg.min_area);
        let (w, h) = (image.width(), image.height());
        for bbox in &gt {
            obj_samples.extend_from_slice(&objectness_features(image, bbox));
            obj_targets.push(1.0);
            for negative in 0..3 {
                for _attempt in 0..20 {
                    let cand = if negative < 2 {
                        jitter_box(bbox, w, h, &mut rng)
                    } else {
                        random_box(w, h, &mut rng)
                    };
                    let max_iou = if negative < 2 { 0.3 } else { 0.05 };
                    if gt.iter().all(|g| iou(g, &cand) < max_iou) {
                        obj_samples.extend_from_slice(&objectness_features(image, &cand));
                        obj_targets.push(0.0);
                        break;
                    }
                }
            }
        }
    }

    let fg = train_mlp(&fg_samples, STAT_DIM, &fg_targets, cfg, mix(cfg.seed, 0xf0));
    let obj = train_mlp(&obj_samples, OBJ_DIM, &obj_targets, cfg, mix(cfg.seed, 0x0b));

    Ok(DetectorFit {
        model: DetectorModel {
            fg1: fg.l1,
            fg2: fg.l2,
            obj1: obj.l1,
            obj2: obj.l2,
            fg_threshold: cfg.fg_threshold,
            nms_iou: cfg.nms_iou,
            min_area: cfg.min_area,
        },
        fg_initial_loss: fg.initial_loss,
        fg_final_loss: fg.final_loss,
        obj_initial_loss: obj.initial_loss,
        obj_final_loss: obj.final_loss,
    })
}

/// Trains the detector on labeled scenes. Deterministic for a given config.
pub fn train_detector(
    scenes: &[(&Raster, &BinaryMask)],
    cfg: &DetectorConfig,
) -> Result<DetectorModel, DetectorError> {
    train_detector_traced(scenes, cfg).map(|fit| fit.model)
}

fn jitter_box(bbox: &BoundingBox, w: u32, h: u32, rng: &mut Rng) -> BoundingBox {
    let bw = bbox.width() as f64;
    let bh = bbox.height() as f64;
    let scale = if rng.next_f64() < 0.5 { rng.uniform(0.4, 0.7) } else { rng.uniform(1.5, 2.2) };
    let dx = rng.uniform(-0.9, 0.9) * bw;
    let dy = rng.uniform(-0.9, 0.9) * bh;
    let cx = (bbox.x_min() as f64 + bw / 2.0 + dx).max(1.0);
    let cy = (bbox.y_min() as f64 + bh / 2.0 + dy).max(1.0);
    let half_w = (bw * scale / 2.0).max(2.0);
    let half_h = (bh * scale / 2.0).max(2.0);
    clamped_box(cx, cy, half_w, half_h, w, h)
}

fn random_box(w: u32, h: u32, rng: &mut Rng) -> BoundingBox {
    let half_w = rng.uniform(8.0, 32.0);
    let half_h = rng.uniform(8.0, 32.0);
    let cx = rng.uniform(half_w, w as f64 - half_w);
    let cy = rng.uniform(half_h, h as f64 - half_h);
    clamped_box(cx, cy, half_w, half_h, w, h)
}

fn clamped_box(cx: f64, cy: f64, half_w: f64, half_h: f64, w: u32, h: u32) -> BoundingBox {
    let x0 = math::clamp(cx - half_w, 0.0, (w - 2) as f64) as u32;
    let y0 = math::clamp(cy - half_h, 0.0, (h - 2) as f64) as u32;
    let x1 = math::clamp(cx + half_w, (x0 + 1) as f64, (w - 1) as f64) as u32;
    let y1 = math::clamp(cy + half_h, (y0 + 1) as f64, (h - 1) as f64) as u32;
    BoundingBox::new(x0, y0, x1, y1).expect("clamped coordinates are ordered")
}

/// Piecewise-linear interpolation index: for each pixel coordinate, the
/// window-grid segment it falls in and the fraction along it.
fn axis_interp(centers: &[u32], extent: u32) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(extent as usize);
    for p in 0..extent {
        let pf = p as f64;
        if centers.len() == 1 || pf <= centers[0] as f64 {
            out.push((0, 0.0));
            continue;
        }
        if pf >= *centers.last().expect("non-empty centers") as f64 {
            out.push((centers.len() - 2, 1.0));
            continue;
        }
        let mut seg = 0;
        while centers[seg + 1] as f64 <= pf {
            seg += 1;
        }
        let span = (centers[seg + 1] - centers[seg]) as f64;
        out.push((seg, (pf - centers[seg] as f64) / span));
    }
    out
}

/// Produces scored candidate boxes for one image.
///
/// Pipeline: window foreground probabilities → bilinear pixel map →
/// threshold → connected components → minimum-area filter → 2 px dilation →
/// objectness scoring → NMS. Returns boxes sorted by descending score.
pub fn propose_regions(model: &DetectorModel, image: &Raster) -> Vec<ScoredBox> {
    let (w, h) = (image.width(), image.height());
    let xs = window_starts(w);
    let ys = window_starts(h);
    if xs.is_empty() || ys.is_empty() {
        return Vec::new();
    }
    let (gw, gh) = (xs.len(), ys.len());
    let mut grid = vec![0.0; gw * gh];
    for (gy, &y0) in ys.iter().enumerate() {
        for (gx, &x0) in xs.iter().enumerate() {
            let bbox = BoundingBox::new(x0, y0, x0 + WINDOW - 1, y0 + WINDOW - 1)
                .expect("window within bounds");
            grid[gy * gw + gx] = model.foreground_prob(&region_stats(image, &bbox));
        }
    }

    let x_centers: Vec<u32> = xs.iter().map(|&x| x + WINDOW / 2).collect();
    let y_centers: Vec<u32> = ys.iter().map(|&y| y + WINDOW / 2).collect();
    let xi = axis_interp(&x_centers, w);
    let yi = axis_interp(&y_centers, h);
    let mut mask = BinaryMask::blank(w, h);
    for y in 0..h {
        let (sy, fy) = yi[y as usize];
        for x in 0..w {
            let (sx, fx) = xi[x as usize];
            let p00 = grid[sy * gw + sx];
            let p10 = grid[sy * gw + (sx + 1).min(gw - 1)];
            let p01 = grid[(sy + 1).min(gh - 1) * gw + sx];
            let p11 = grid[(sy + 1).min(gh - 1) * gw + (sx + 1).min(gw - 1)];
            let top = p00 * (1.0 - fx) + p10 * fx;
            let bottom = p01 * (1.0 - fx) + p11 * fx;
            if top * (1.0 - fy) + bottom * fy > model.fg_threshold {
                mask.set(x, y, true);
            }
        }
    }

    let candidates: Vec<ScoredBox> = connected_components(&mask)
        .iter()
        .filter(|r| r.len() >= model.min_area as usize)
        .map(|r| {
            let bbox = r.bbox().dilate(2, w, h);
            ScoredBox::new(bbox, model.objectness(&objectness_features(image, &bbox)))
        })
        .collect();
    nms(&candidates, model.nms_iou)
}

/// Greedy matching: proposals in descending score order take the
/// highest-IoU unmatched ground-truth box when the IoU clears the
/// threshold, otherwise count as false positives.
pub fn match_detections(
    proposals: &[ScoredBox],
    gt_boxes: &[BoundingBox],
    iou_threshold: f64,
) -> DetectionMatch {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        proposals[b]
            .score
            .partial_cmp(&proposals[a].score)
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; gt_boxes.len()];
    let mut result = DetectionMatch {
        true_positives: Vec::new(),
        false_positives: Vec::new(),
        false_negatives: Vec::new(),
    };
    for idx in order {
        let prop = &proposals[idx];
        let mut best: Option<(f64, usize)> = None;
        for (gi, gt) in gt_boxes.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let overlap = iou(&prop.bbox, gt);
            let better = match best {
                None => true,
                Some((bo, _)) => overlap > bo,
            };
            if better {
                best = Some((overlap, gi));
            }
        }
        match best {
            Some((overlap, gi)) if overlap >= iou_threshold => {
                taken[gi] = true;
                result.true_positives.push((*prop, gi));
            }
            _ => result.false_positives.push(*prop),
        }
    }
    result.false_negatives = (0..gt_boxes.len()).filter(|&i| !taken[i]).collect();
    result
}

/// Area under the precision-recall curve by step integration.
///
/// `detections` are `(score, is_true_positive)` pairs pooled over scenes;
/// they are sorted by descending score (ties keep input order) and each
/// true positive contributes `ΔR · P` at its position.
pub fn average_precision(
    detections: &[(f64, bool)],
    total_gt: usize,
) -> Result<f64, DetectorError> {
    if total_gt == 0 {
        return Err(DetectorError::UndefinedRecall);
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .0
            .partial_cmp(&detections[a].0)
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0.0;
    for idx in order {
        seen += 1;
        if detections[idx].1 {
            tp += 1;
            let precision = tp as f64 / seen as f64;
            ap += precision / total_gt as f64; // ΔR = 1 / total_gt per TP
        }
    }
    Ok(ap)
}
