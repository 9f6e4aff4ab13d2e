//! Frozen, seeded convolutional feature extractor.
//!
//! Maps a 224×224 RGB patch to a 2048-d feature vector through four
//! stride-2 conv layers (3→16→32→64→128 channels, 3×3 kernels, ReLU),
//! global average pooling and a fixed linear projection to 2048 dimensions.
//! All parameters are generated from a single seed with orthonormalized
//! kernel rows and never change, so the extractor serializes as just its
//! seed and regenerates bit-identically.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::nn::{conv2d_forward, relu_inplace, ConvLayer, Tensor};
use crate::par;
use crate::raster::Raster;
use crate::rng::{mix, Rng};

/// Output dimensionality of the extractor.
pub const FEATURE_DIM: usize = 2048;

/// Required input patch side length.
pub const PATCH_SIDE: u32 = 224;

const CHANNEL_PLAN: [usize; 5] = [3, 16, 32, 64, 128];
const KERNEL: usize = 3;
const STRIDE: usize = 2;
/// Per-layer gain applied after row orthonormalization, compensating the
/// halving effect of ReLU on zero-mean activations.
const LAYER_GAIN: f64 = core::f64::consts::SQRT_2;
/// Extra projection gain keeping feature magnitudes near unit scale, which
/// the downstream heads' fixed 1e-5 learning rate is sized for.
const PROJECTION_GAIN: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeaturizerError(pub String);

impl fmt::Display for FeaturizerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl core::error::Error for FeaturizerError {}

/// A 2048-d feature vector; every value finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<FeatureVector, FeaturizerError> {
        if values.len() != FEATURE_DIM {
            return Err(FeaturizerError(format!(
                "feature vector must have {FEATURE_DIM} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeaturizerError(String::from("non-finite feature value")));
        }
        Ok(FeatureVector(values))
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Frozen conv stack + projection, fully determined by `seed`.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    convs: Vec<ConvLayer>,
    /// `[FEATURE_DIM, 128]`
    projection: Tensor,
    seed: u64,
}

impl FeatureExtractor {
    pub fn new(seed: u64) -> FeatureExtractor {
        let mut convs = Vec::with_capacity(4);
        for layer in 0..4 {
            let (in_c, out_c) = (CHANNEL_PLAN[layer], CHANNEL_PLAN[layer + 1]);
            let mut rng = Rng::new(mix(seed, 0x10 + layer as u64));
            let rows = orthonormal_rows(&mut rng, out_c, in_c * KERNEL * KERNEL);
            let kernels = Tensor::new(
                vec![out_c, in_c, KERNEL, KERNEL],
                rows.into_iter().flatten().map(|v| v * LAYER_GAIN).collect(),
            )
            .expect("generated kernels are finite");
            convs.push(ConvLayer::new(kernels, STRIDE).expect("valid conv configuration"));
        }
        let mut rng = Rng::new(mix(seed, 0x20));
        let scale = PROJECTION_GAIN / math::sqrt(CHANNEL_PLAN[4] as f64);
        let projection = Tensor::new(
            vec![FEATURE_DIM, CHANNEL_PLAN[4]],
            (0..FEATURE_DIM * CHANNEL_PLAN[4])
                .map(|_| rng.gaussian() * scale)
                .collect(),
        )
        .expect("generated projection is finite");
        FeatureExtractor { convs, projection, seed }
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Extracts the 2048-d feature vector of one 224×224×3 patch.
    pub fn extract_features(&self, patch: &Raster) -> Result<FeatureVector, FeaturizerError> {
        if patch.width() != PATCH_SIDE || patch.height() != PATCH_SIDE || patch.channels() != 3 {
            return Err(FeaturizerError(String::from("expected 224×224 input")));
        }
        let side = PATCH_SIDE as usize;
        let mut planes = vec![0.0; 3 * side * side];
        // HWC u8 → CHW f64 in [0, 1].
        for (i, px) in patch.data().chunks_exact(3).enumerate() {
            planes[i] = px[0] as f64 / 255.0;
            planes[side * side + i] = px[1] as f64 / 255.0;
            planes[2 * side * side + i] = px[2] as f64 / 255.0;
        }
        let mut acts = Tensor::new(vec![3, side, side], planes).expect("normalized samples are finite");
        for conv in &self.convs {
            let mut out = conv2d_forward(conv, &acts).expect("conv stack shapes are static");
            relu_inplace(out.data_mut());
            acts = out;
        }
        // Global average pool over each channel plane.
        let (c, h, w) = (acts.shape()[0], acts.shape()[1], acts.shape()[2]);
        let plane = h * w;
        let pooled: Vec<f64> = (0..c)
            .map(|ch| acts.data()[ch * plane..(ch + 1) * plane].iter().sum::<f64>() / plane as f64)
            .collect();
        let proj = self.projection.data();
        let features = (0..FEATURE_DIM)
            .map(|j| {
                proj[j * c..(j + 1) * c]
                    .iter()
                    .zip(&pooled)
                    .map(|(p, v)| p * v)
                    .sum()
            })
            .collect();
        FeatureVector::new(features)
    }

    /// Extracts features for a batch; order preserved, element `i` equals
    /// `extract_features(patches[i])`. A bad patch fails with its index.
    pub fn extract_batch(&self, patches: &[Raster]) -> Result<Vec<FeatureVector>, FeaturizerError> {
        for (i, p) in patches.iter().enumerate() {
            if p.width() != PATCH_SIDE || p.height() != PATCH_SIDE || p.channels() != 3 {
                return Err(FeaturizerError(format!("patch {i}: expected 224×224 input")));
            }
        }
        Ok(par::par_map(patches, |_, p| {
            self.extract_features(p).expect("patch was validated above")
        }))
    }

    /// Upper bound on |feature| for inputs in [0, 1], from kernel and
    /// projection L1 norms.
    pub fn magnitude_bound(&self) -> f64 {
        let mut bound: f64 = 1.0;
        for conv in &self.convs {
            let k2 = conv.kernel_size() * conv.kernel_size();
            let in_c = conv.in_channels();
            let per_out = in_c * k2;
            let max_l1 = (0..conv.out_channels())
                .map(|oc| {
                    conv.kernels.data()[oc * per_out..(oc + 1) * per_out]
                        .iter()
                        .map(|v| math::abs(*v))
                        .sum::<f64>()
                })
                .fold(0.0, math::fmax);
            bound *= max_l1;
        }
        let c = CHANNEL_PLAN[4];
        let max_proj_l1 = (0..FEATURE_DIM)
            .map(|j| {
                self.projection.data()[j * c..(j + 1) * c]
                    .iter()
                    .map(|v| math::abs(*v))
                    .sum::<f64>()
            })
            .fold(0.0, math::fmax);
        bound * max_proj_l1
    }
}

/// Gram-Schmidt orthonormalization of seeded Gaussian rows.
fn orthonormal_rows(rng: &mut Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    assert!(rows <= cols, "cannot orthonormalize {rows} rows in {cols} dims");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| rng.gaussian()).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= dot * bi;
            }
        }
        let norm = math::sqrt(v.iter().map(|a| a * a).sum::<f64>());
        if norm < 1e-9 {
            continue; // degenerate draw; take the next one
        }
        for vi in &mut v {
            *vi /= norm;
        }
        basis.push(v);
    }
    basis
}
