//! Axis-aligned bounding boxes with inclusive integer coordinates,
//! intersection-over-union and non-maximum suppression.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxError(pub String);

impl fmt::Display for BoxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid box: {}", self.0)
    }
}

impl core::error::Error for BoxError {}

/// Inclusive pixel-coordinate box: a single pixel is `(x, y, x, y)` and has
/// area 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundingBox {
    x_min: u32,
    y_min: u32,
    x_max: u32,
    y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<BoundingBox, BoxError> {
        if x_min > x_max || y_min > y_max {
            return Err(BoxError(String::from("min corner beyond max corner")));
        }
        Ok(BoundingBox { x_min, y_min, x_max, y_max })
    }

    #[inline]
    pub fn x_min(&self) -> u32 {
        self.x_min
    }

    #[inline]
    pub fn y_min(&self) -> u32 {
        self.y_min
    }

    #[inline]
    pub fn x_max(&self) -> u32 {
        self.x_max
    }

    #[inline]
    pub fn y_max(&self) -> u32 {
        self.y_max
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.y_max - self.y_min + 1
    }

    #[inline]
    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Intersection box, if any.
    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        if x_min > x_max || y_min > y_max {
            None
        } else {
            Some(BoundingBox { x_min, y_min, x_max, y_max })
        }
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        self.intersection(other).map_or(0, |b| b.area())
    }

    /// Grows the box by `margin` pixels on every side, clamped to the raster
    /// `(width, height)`.
    pub fn dilate(&self, margin: u32, width: u32, height: u32) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.saturating_sub(margin),
            y_min: self.y_min.saturating_sub(margin),
            x_max: (self.x_max + margin).min(width - 1),
            y_max: (self.y_max + margin).min(height - 1),
        }
    }

    /// `[x_min, y_min, x_max, y_max]`, the manifest wire order.
    pub fn to_array(&self) -> [u32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// A box plus a detection confidence in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: BoundingBox,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(bbox: BoundingBox, score: f64) -> ScoredBox {
        debug_assert!((0.0..=1.0).contains(&score));
        ScoredBox { bbox, score }
    }
}

/// Intersection over union with inclusive-pixel areas.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Greedy non-maximum suppression.
///
/// Candidates are processed by descending score (ties keep input order); a
/// candidate is dropped when its IoU with an already-kept box exceeds
/// `iou_threshold`. The result is sorted by descending score.
pub fn nms(candidates: &[ScoredBox], iou_threshold: f64) -> Vec<ScoredBox> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .score
            .partial_cmp(&candidates[a].score)
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let mut kept: Vec<ScoredBox> = Vec::new();
    for idx in order {
        let cand = &candidates[idx];
        if kept.iter().all(|k| iou(&k.bbox, &cand.bbox) <= iou_threshold) {
            kept.push(*cand);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x0: u32, y0: u32, x1: u32, y1: u32) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn box_validation_and_area() {
        assert!(BoundingBox::new(3, 1, 2, 4).is_err());
        assert_eq!(bb(2, 3, 2, 3).area(), 1);
        assert_eq!(bb(0, 0, 4, 2).area(), 15);
    }

    #[test]
    fn iou_identical_is_one() {
        let a = bb(5, 5, 9, 9);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        assert_eq!(iou(&bb(0, 0, 1, 1), &bb(5, 5, 6, 6)), 0.0);
    }

    #[test]
    fn iou_hand_counted_overlap() {
        // Intersection 2 px, union 6 px.
        let v = iou(&bb(0, 0, 1, 1), &bb(1, 0, 2, 1));
        assert!((v - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn nms_single_candidate_passes_through() {
        let c = ScoredBox::new(bb(0, 0, 3, 3), 0.7);
        assert_eq!(nms(&[c], 0.5), vec![c]);
    }

    #[test]
    fn nms_suppresses_duplicate() {
        let a = ScoredBox::new(bb(0, 0, 3, 3), 0.9);
        let b = ScoredBox::new(bb(0, 0, 3, 3), 0.8);
        assert_eq!(nms(&[b, a], 0.5), vec![a]);
    }

    #[test]
    fn nms_keeps_disjoint_boxes() {
        // A overlaps B above threshold, C is disjoint: keep {A, C}.
        let a = ScoredBox::new(bb(0, 0, 9, 9), 0.9);
        let b = ScoredBox::new(bb(0, 2, 9, 11), 0.8); // IoU(a,b) = 80/120 ≈ 0.67
        let c = ScoredBox::new(bb(20, 20, 25, 25), 0.5);
        assert!(iou(&a.bbox, &b.bbox) > 0.5);
        assert_eq!(nms(&[a, b, c], 0.5), vec![a, c]);
    }

    #[test]
    fn nms_tie_keeps_input_order() {
        let a = ScoredBox::new(bb(0, 0, 3, 3), 0.8);
        let b = ScoredBox::new(bb(0, 0, 3, 3), 0.8);
        let kept = nms(&[a, b], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].bbox, a.bbox);
    }

    #[test]
    fn dilate_clamps_to_raster() {
        let b = bb(1, 1, 8, 8).dilate(2, 10, 10);
        assert_eq!(b.to_array(), [0, 0, 9, 9]);
    }
}
