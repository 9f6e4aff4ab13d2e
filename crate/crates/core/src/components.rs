//! Connected-component labeling of binary masks via breadth-first search.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::boxes::BoundingBox;
use crate::raster::BinaryMask;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmptyRegion;

impl fmt::Display for EmptyRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("empty region")
    }
}

impl core::error::Error for EmptyRegion {}

/// A non-empty set of mutually 8-connected pixels, sorted row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelRegion {
    pixels: Vec<(u32, u32)>,
}

impl PixelRegion {
    pub fn new(mut pixels: Vec<(u32, u32)>) -> Result<PixelRegion, EmptyRegion> {
        if pixels.is_empty() {
            return Err(EmptyRegion);
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        Ok(PixelRegion { pixels })
    }

    #[inline]
    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Tightest box containing the region.
    pub fn bbox(&self) -> BoundingBox {
        bounding_box(&self.pixels).expect("region is non-empty")
    }
}

/// Tightest axis-aligned box containing every listed pixel.
pub fn bounding_box(pixels: &[(u32, u32)]) -> Result<BoundingBox, EmptyRegion> {
    let (first, rest) = pixels.split_first().ok_or(EmptyRegion)?;
    let (mut x_min, mut y_min) = *first;
    let (mut x_max, mut y_max) = *first;
    for &(x, y) in rest {
        x_min = x_min.min(x);
        y_min = y_min.min(y);
        x_max = x_max.max(x);
        y_max = y_max.max(y);
    }
    Ok(BoundingBox::new(x_min, y_min, x_max, y_max).expect("min/max are ordered"))
}

/// Finds every maximal 8-connected region of true pixels by BFS.
///
/// Regions are returned in row-major order of their top-left-most pixel,
/// which is also the order the scan first reaches them.
pub fn connected_components(mask: &BinaryMask) -> Vec<PixelRegion> {
    let w = mask.width();
    let h = mask.height();
    let mut visited = vec![false; w as usize * h as usize];
    let mut regions = Vec::new();
    let mut queue: VecDeque<(u32, u32)> = VecDeque::new();

    for y in 0..h {
        for x in 0..w {
            let idx = y as usize * w as usize + x as usize;
            if visited[idx] || !mask.get(x, y) {
                continue;
            }
            visited[idx] = true;
            queue.push_back((x, y));
            let mut pixels = Vec::new();
            while let Some((cx, cy)) = queue.pop_front() {
                pixels.push((cx, cy));
                let x_lo = cx.saturating_sub(1);
                let y_lo = cy.saturating_sub(1);
                for ny in y_lo..=(cy + 1).min(h - 1) {
                    for nx in x_lo..=(cx + 1).min(w - 1) {
                        let nidx = ny as usize * w as usize + nx as usize;
                        if !visited[nidx] && mask.get(nx, ny) {
                            visited[nidx] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            regions.push(PixelRegion::new(pixels).expect("BFS found at least one pixel"));
        }
    }
    regions
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from_rows(rows: &[&str]) -> BinaryMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let bits = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| b == b'#'))
            .collect();
        BinaryMask::new(w, h, bits).unwrap()
    }

    #[test]
    fn all_false_mask_has_no_regions() {
        let mask = BinaryMask::blank(5, 5);
        assert!(connected_components(&mask).is_empty());
    }

    #[test]
    fn solid_block_is_one_region() {
        let mask = mask_from_rows(&["###", "###", "###"]);
        let regions = connected_components(&mask);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].len(), 9);
    }

    #[test]
    fn diagonal_pixels_join_under_8_connectivity() {
        let mask = mask_from_rows(&["#..", ".#.", "..."]);
        let regions = connected_components(&mask);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].pixels(), &[(0, 0), (1, 1)]);
    }

    #[test]
    fn separate_blobs_ordered_by_topleft_pixel() {
        let mask = mask_from_rows(&[
            "..##..#",
            "..##..#",
            ".......",
            "#......",
        ]);
        let regions = connected_components(&mask);
        assert_eq!(regions.len(), 3);
        assert_eq!(regions[0].pixels()[0], (2, 0));
        assert_eq!(regions[1].pixels()[0], (6, 0));
        assert_eq!(regions[2].pixels()[0], (0, 3));
    }

    #[test]
    fn bounding_box_examples() {
        assert_eq!(
            bounding_box(&[(2, 3)]).unwrap(),
            BoundingBox::new(2, 3, 2, 3).unwrap()
        );
        assert_eq!(
            bounding_box(&[(0, 0), (4, 2)]).unwrap(),
            BoundingBox::new(0, 0, 4, 2).unwrap()
        );
        let block: Vec<(u32, u32)> = (0..3).flat_map(|y| (0..3).map(move |x| (x, y))).collect();
        assert_eq!(
            bounding_box(&block).unwrap(),
            BoundingBox::new(0, 0, 2, 2).unwrap()
        );
        assert_eq!(bounding_box(&[]), Err(EmptyRegion));
    }

    #[test]
    fn pixel_region_rejects_empty() {
        assert_eq!(PixelRegion::new(Vec::new()), Err(EmptyRegion));
    }
}
