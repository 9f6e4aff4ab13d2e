//! Raster images, binary masks, cropping and bilinear resize.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::boxes::BoundingBox;
use crate::math;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RasterError {
    /// Data length or channel count inconsistent with the dimensions.
    BadShape(String),
    /// Crop box exceeds the raster bounds.
    BoxExceedsRaster,
}

impl fmt::Display for RasterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RasterError::BadShape(msg) => write!(f, "bad raster shape: {msg}"),
            RasterError::BoxExceedsRaster => write!(f, "box exceeds raster"),
        }
    }
}

impl core::error::Error for RasterError {}

/// An 8-bit raster image, row-major, 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Raster, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::BadShape(String::from("zero dimension")));
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::BadShape(String::from("channels must be 1 or 3")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(RasterError::BadShape(String::from("data length mismatch")));
        }
        Ok(Raster { width, height, channels, data })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Raster {
        let len = width as usize * height as usize * channels as usize;
        Raster::new(width, height, channels, vec![value; len]).expect("valid fill dimensions")
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> u8 {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// Samples of pixel (x, y), one per channel.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, value: &[u8]) {
        let o = self.offset(x, y);
        self.data[o..o + self.channels as usize].copy_from_slice(value);
    }

    pub fn contains_box(&self, b: &BoundingBox) -> bool {
        b.x_max() < self.width && b.y_max() < self.height
    }
}

/// Row-major boolean mask; true marks a cell pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<BinaryMask, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::BadShape(String::from("zero dimension")));
        }
        if bits.len() != width as usize * height as usize {
            return Err(RasterError::BadShape(String::from("bit length mismatch")));
        }
        Ok(BinaryMask { width, height, bits })
    }

    pub fn blank(width: u32, height: u32) -> BinaryMask {
        BinaryMask::new(width, height, vec![false; width as usize * height as usize])
            .expect("valid blank dimensions")
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Thresholds a 1-channel raster: any sample ≥ 128 becomes true.
    pub fn from_gray(gray: &Raster) -> Result<BinaryMask, RasterError> {
        if gray.channels() != 1 {
            return Err(RasterError::BadShape(String::from("mask source must be 1-channel")));
        }
        let bits = gray.data().iter().map(|&v| v >= 128).collect();
        BinaryMask::new(gray.width(), gray.height(), bits)
    }
}

/// Copies the pixels inside `bbox` (inclusive coordinates) into a new raster.
pub fn crop(image: &Raster, bbox: &BoundingBox) -> Result<Raster, RasterError> {
    if !image.contains_box(bbox) {
        return Err(RasterError::BoxExceedsRaster);
    }
    let w = bbox.width();
    let h = bbox.height();
    let ch = image.channels() as usize;
    let mut data = Vec::with_capacity(w as usize * h as usize * ch);
    for y in bbox.y_min()..=bbox.y_max() {
        let row = image.offset(bbox.x_min(), y);
        data.extend_from_slice(&image.data[row..row + w as usize * ch]);
    }
    Raster::new(w, h, image.channels(), data)
}

/// Bilinear resize with half-pixel centers: the source coordinate of output
/// pixel `dx` is `(dx + 0.5) * w_src / w_dst - 0.5`, clamped to the valid
/// range. Samples are rounded to the nearest integer.
pub fn resize_bilinear(image: &Raster, out_w: u32, out_h: u32) -> Raster {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be positive");
    let ch = image.channels() as usize;
    let sw = image.width() as f64;
    let sh = image.height() as f64;
    let mut data = vec![0u8; out_w as usize * out_h as usize * ch];

    for dy in 0..out_h {
        let sy = math::clamp((dy as f64 + 0.5) * sh / out_h as f64 - 0.5, 0.0, sh - 1.0);
        let y0 = math::floor(sy) as u32;
        let y1 = (y0 + 1).min(image.height() - 1);
        let fy = sy - y0 as f64;
        for dx in 0..out_w {
            let sx = math::clamp((dx as f64 + 0.5) * sw / out_w as f64 - 0.5, 0.0, sw - 1.0);
            let x0 = math::floor(sx) as u32;
            let x1 = (x0 + 1).min(image.width() - 1);
            let fx = sx - x0 as f64;
            let o = (dy as usize * out_w as usize + dx as usize) * ch;
            for c in 0..ch {
                let p00 = image.pixel(x0, y0)[c] as f64;
                let p10 = image.pixel(x1, y0)[c] as f64;
                let p01 = image.pixel(x0, y1)[c] as f64;
                let p11 = image.pixel(x1, y1)[c] as f64;
                let top = p00 * (1.0 - fx) + p10 * fx;
                let bottom = p01 * (1.0 - fx) + p11 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data[o + c] = math::clamp(math::round(v), 0.0, 255.0) as u8;
            }
        }
    }
    Raster::new(out_w, out_h, image.channels(), data).expect("valid resize dimensions")
}
