//! Minimal neural-network numerics: tensors, dense and convolution layers,
//! the stable sigmoid, binary cross-entropy with L2 regularization, Adam and
//! momentum optimizers, and finite-difference gradient checking.
//!
//! Everything runs on 64-bit floats with fixed summation order, so training
//! is deterministic for a given seed. Convolution layers are forward-only;
//! only dense parameters are ever trained.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NnError {
    ShapeMismatch(String),
    /// A gradient or parameter stopped being finite.
    Divergence,
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            NnError::Divergence => f.write_str("divergence: non-finite gradient"),
        }
    }
}

impl core::error::Error for NnError {}

/// Dense row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor, NnError> {
        let len: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(NnError::ShapeMismatch(String::from("zero-sized dimension")));
        }
        if data.len() != len {
            return Err(NnError::ShapeMismatch(String::from("data length != shape product")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::ShapeMismatch(String::from("non-finite value")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape, data: vec![0.0; len] }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Fully-connected layer: `y = W x + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn zeros(out_dim: usize, in_dim: usize) -> DenseLayer {
        DenseLayer {
            weights: Tensor::zeros(vec![out_dim, in_dim]),
            bias: Tensor::zeros(vec![out_dim]),
        }
    }

    /// He-style init: zero-mean Gaussian weights with std `sqrt(2 / in)`,
    /// zero bias.
    pub fn seeded(out_dim: usize, in_dim: usize, rng: &mut Rng) -> DenseLayer {
        let std = math::sqrt(2.0 / in_dim as f64);
        let data = (0..out_dim * in_dim).map(|_| rng.gaussian() * std).collect();
        DenseLayer {
            weights: Tensor::new(vec![out_dim, in_dim], data).expect("generated weights are finite"),
            bias: Tensor::zeros(vec![out_dim]),
        }
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Checks x against the layer input dimension.
fn check_dense_input(layer: &DenseLayer, len: usize) -> Result<(), NnError> {
    if len != layer.in_dim() {
        return Err(NnError::ShapeMismatch(String::from("dense input length")));
    }
    Ok(())
}

/// Four-accumulator dot product. Every dense path sums in this order, so
/// single and batched forwards agree bit for bit.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let n4 = a.len() / 4 * 4;
    let mut i = 0;
    while i < n4 {
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    while i < a.len() {
        sum += a[i] * b[i];
        i += 1;
    }
    sum
}

/// `y += alpha * x`.
#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `W x + b` for a single input vector.
pub fn dense_forward(layer: &DenseLayer, x: &[f64]) -> Result<Vec<f64>, NnError> {
    check_dense_input(layer, x.len())?;
    let in_dim = layer.in_dim();
    let w = layer.weights.data();
    let out = layer
        .bias
        .data()
        .iter()
        .enumerate()
        .map(|(j, &b)| b + dot(&w[j * in_dim..(j + 1) * in_dim], x))
        .collect();
    Ok(out)
}

/// Analytic gradients of a dense layer for one sample.
///
/// Returns `(grad_weights, grad_bias, grad_x)` given the upstream gradient
/// with respect to the layer output.
pub fn dense_backward(
    layer: &DenseLayer,
    x: &[f64],
    upstream: &[f64],
) -> Result<(Tensor, Tensor, Vec<f64>), NnError> {
    check_dense_input(layer, x.len())?;
    if upstream.len() != layer.out_dim() {
        return Err(NnError::ShapeMismatch(String::from("dense upstream length")));
    }
    let in_dim = layer.in_dim();
    let w = layer.weights.data();
    let mut grad_w = vec![0.0; w.len()];
    let mut grad_x = vec![0.0; in_dim];
    for (j, &u) in upstream.iter().enumerate() {
        let row = &w[j * in_dim..(j + 1) * in_dim];
        let grow = &mut grad_w[j * in_dim..(j + 1) * in_dim];
        for i in 0..in_dim {
            grow[i] = u * x[i];
            grad_x[i] += u * row[i];
        }
    }
    Ok((
        Tensor::new(vec![layer.out_dim(), in_dim], grad_w)?,
        Tensor::new(vec![layer.out_dim()], upstream.to_vec())?,
        grad_x,
    ))
}

/// Batched `W x + b`: `xs` is `[batch, in]` row-major, output `[batch, out]`.
///
/// Iterates output units in the outer loop so each weight row is streamed
/// once per batch; per-sample results are bit-identical to [`dense_forward`].
pub fn dense_forward_batch(
    layer: &DenseLayer,
    xs: &[f64],
    batch: usize,
) -> Result<Vec<f64>, NnError> {
    let in_dim = layer.in_dim();
    let out_dim = layer.out_dim();
    if xs.len() != batch * in_dim {
        return Err(NnError::ShapeMismatch(String::from("batch input length")));
    }
    let w = layer.weights.data();
    let b = layer.bias.data();
    let mut out = vec![0.0; batch * out_dim];
    for j in 0..out_dim {
        let row = &w[j * in_dim..(j + 1) * in_dim];
        for s in 0..batch {
            let x = &xs[s * in_dim..(s + 1) * in_dim];
            out[s * out_dim + j] = b[j] + dot(row, x);
        }
    }
    Ok(out)
}

/// Batched dense backward, accumulating over the batch.
///
/// `upstream` is `[batch, out]`. Gradients are summed across samples in
/// input order; `grad_x` (per sample, `[batch, in]`) is computed only when
/// `want_grad_x` is set (the first layer of a network does not need it).
pub fn dense_backward_batch(
    layer: &DenseLayer,
    xs: &[f64],
    upstream: &[f64],
    batch: usize,
    want_grad_x: bool,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    grad_x: &mut [f64],
) -> Result<(), NnError> {
    let in_dim = layer.in_dim();
    let out_dim = layer.out_dim();
    if xs.len() != batch * in_dim || upstream.len() != batch * out_dim {
        return Err(NnError::ShapeMismatch(String::from("batch backward lengths")));
    }
    if grad_w.len() != in_dim * out_dim || grad_b.len() != out_dim {
        return Err(NnError::ShapeMismatch(String::from("gradient buffer lengths")));
    }
    grad_w.fill(0.0);
    grad_b.fill(0.0);
    if want_grad_x {
        if grad_x.len() != batch * in_dim {
            return Err(NnError::ShapeMismatch(String::from("grad_x buffer length")));
        }
        grad_x.fill(0.0);
    }
    let w = layer.weights.data();
    for j in 0..out_dim {
        let row = &w[j * in_dim..(j + 1) * in_dim];
        let grow = &mut grad_w[j * in_dim..(j + 1) * in_dim];
        for s in 0..batch {
            let u = upstream[s * out_dim + j];
            if u == 0.0 {
                continue;
            }
            grad_b[j] += u;
            let x = &xs[s * in_dim..(s + 1) * in_dim];
            axpy(u, x, grow);
            if want_grad_x {
                axpy(u, row, &mut grad_x[s * in_dim..(s + 1) * in_dim]);
            }
        }
    }
    Ok(())
}

/// Convolution layer (cross-correlation), no bias, odd square kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `[out_c, in_c, k, k]`
    pub kernels: Tensor,
    pub stride: usize,
}

impl ConvLayer {
    pub fn new(kernels: Tensor, stride: usize) -> Result<ConvLayer, NnError> {
        if kernels.shape().len() != 4 {
            return Err(NnError::ShapeMismatch(String::from("kernels must be 4-d")));
        }
        let k = kernels.shape()[2];
        if k != kernels.shape()[3] || k % 2 == 0 {
            return Err(NnError::ShapeMismatch(String::from("kernel must be square with odd size")));
        }
        if stride == 0 {
            return Err(NnError::ShapeMismatch(String::from("stride must be positive")));
        }
        Ok(ConvLayer { kernels, stride })
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[2]
    }
}

/// Valid-padding cross-correlation. Input `[in_c, h, w]`, output
/// `[out_c, h', w']` with `h' = (h - k) / stride + 1` (floor).
pub fn conv2d_forward(layer: &ConvLayer, x: &Tensor) -> Result<Tensor, NnError> {
    if x.shape().len() != 3 || x.shape()[0] != layer.in_channels() {
        return Err(NnError::ShapeMismatch(String::from("conv input shape")));
    }
    let (in_c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let k = layer.kernel_size();
    if h < k || w < k {
        return Err(NnError::ShapeMismatch(String::from("input smaller than kernel")));
    }
    let stride = layer.stride;
    let out_c = layer.out_channels();
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let kern = layer.kernels.data();
    let xd = x.data();
    let mut out = vec![0.0; out_c * oh * ow];
    for oc in 0..out_c {
        for ic in 0..in_c {
            let kbase = (oc * in_c + ic) * k * k;
            let xbase = ic * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ky in 0..k {
                        let xrow = xbase + (oy * stride + ky) * w + ox * stride;
                        let krow = kbase + ky * k;
                        for kx in 0..k {
                            acc += xd[xrow + kx] * kern[krow + kx];
                        }
                    }
                    out[(oc * oh + oy) * ow + ox] += acc;
                }
            }
        }
    }
    Tensor::new(vec![out_c, oh, ow], out)
}

/// Numerically stable logistic function, elementwise.
pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + math::exp(-x))
    } else {
        let e = math::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Result of [`bce_l2_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct BceL2 {
    pub loss: f64,
    /// Gradient of the data term with respect to each logit: `(p - y) / batch`.
    pub grad_logits: Vec<f64>,
    /// Gradient of the L2 term with respect to each parameter: `2 λ p`.
    pub grad_params: Vec<f64>,
}

/// Mean binary cross-entropy plus `lambda * Σ param²`.
///
/// Probabilities are clamped to `[1e-12, 1 - 1e-12]` inside the logs.
pub fn bce_l2_loss(pred: &[f64], targets: &[f64], params: &[f64], lambda: f64) -> BceL2 {
    debug_assert_eq!(pred.len(), targets.len());
    let batch = pred.len().max(1) as f64;
    let mut data_loss = 0.0;
    let grad_logits = pred
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let pc = math::clamp(p, 1e-12, 1.0 - 1e-12);
            data_loss -= y * math::ln(pc) + (1.0 - y) * math::ln(1.0 - pc);
            (p - y) / batch
        })
        .collect();
    let l2: f64 = params.iter().map(|&p| p * p).sum();
    BceL2 {
        loss: data_loss / batch + lambda * l2,
        grad_logits,
        grad_params: params.iter().map(|&p| 2.0 * lambda * p).collect(),
    }
}

/// Adam optimizer state; `m`/`v` cover the flattened parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Defaults: β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(param_count: usize, learning_rate: f64) -> AdamState {
        AdamState {
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update over a contiguous parameter slice.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<(), NnError> {
    adam_step_multi(&mut [(params, grads)], state)
}

/// One Adam update over disjoint parameter segments sharing one state.
///
/// Segments are visited in order and must jointly match the state length;
/// results equal [`adam_step`] on the concatenation.
pub fn adam_step_multi(
    segments: &mut [(&mut [f64], &[f64])],
    state: &mut AdamState,
) -> Result<(), NnError> {
    let total: usize = segments.iter().map(|(p, _)| p.len()).sum();
    if total != state.m.len() || segments.iter().any(|(p, g)| p.len() != g.len()) {
        return Err(NnError::ShapeMismatch(String::from("adam state/parameter lengths")));
    }
    if segments.iter().any(|(_, g)| g.iter().any(|v| !v.is_finite())) {
        return Err(NnError::Divergence);
    }
    state.t += 1;
    let t = state.t as i64;
    let bc1 = 1.0 - math::pow(state.beta1, t as f64);
    let bc2 = 1.0 - math::pow(state.beta2, t as f64);
    let mut offset = 0;
    for (params, grads) in segments.iter_mut() {
        for (i, (p, &g)) in params.iter_mut().zip(grads.iter()).enumerate() {
            let k = offset + i;
            state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g;
            state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g;
            let m_hat = state.m[k] / bc1;
            let v_hat = state.v[k] / bc2;
            *p -= state.learning_rate * m_hat / (math::sqrt(v_hat) + state.epsilon);
        }
        offset += params.len();
    }
    Ok(())
}

/// Momentum optimizer state with per-step learning-rate decay.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub t: u64,
    pub velocity: Vec<f64>,
    pub learning_rate: f64,
    pub decay: f64,
    pub momentum: f64,
}

impl MomentumState {
    /// Defaults: learning rate 1e-3, decay 1e-6, momentum 0.9.
    pub fn new(param_count: usize) -> MomentumState {
        MomentumState {
            t: 0,
            velocity: vec![0.0; param_count],
            learning_rate: 1e-3,
            decay: 1e-6,
            momentum: 0.9,
        }
    }
}

/// One momentum update: `lr_t = lr / (1 + decay·t)`,
/// `v ← momentum·v − lr_t·g`, `p += v`, then `t += 1`.
pub fn momentum_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut MomentumState,
) -> Result<(), NnError> {
    momentum_step_multi(&mut [(params, grads)], state)
}

/// Segmented variant of [`momentum_step`]; see [`adam_step_multi`].
pub fn momentum_step_multi(
    segments: &mut [(&mut [f64], &[f64])],
    state: &mut MomentumState,
) -> Result<(), NnError> {
    let total: usize = segments.iter().map(|(p, _)| p.len()).sum();
    if total != state.velocity.len() || segments.iter().any(|(p, g)| p.len() != g.len()) {
        return Err(NnError::ShapeMismatch(String::from("momentum state/parameter lengths")));
    }
    if segments.iter().any(|(_, g)| g.iter().any(|v| !v.is_finite())) {
        return Err(NnError::Divergence);
    }
    let lr_t = state.learning_rate / (1.0 + state.decay * state.t as f64);
    let mut offset = 0;
    for (params, grads) in segments.iter_mut() {
        for (i, (p, &g)) in params.iter_mut().zip(grads.iter()).enumerate() {
            let k = offset + i;
            state.velocity[k] = state.momentum * state.velocity[k] - lr_t * g;
            *p += state.velocity[k];
        }
        offset += params.len();
    }
    state.t += 1;
    Ok(())
}

/// Compares an analytic gradient against central finite differences.
///
/// Returns the maximum over coordinates of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn gradcheck<F>(mut loss: F, analytic: &[f64], params: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(analytic.len(), params.len());
    let mut probe = params.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let up = loss(&probe);
        probe[i] = params[i] - h;
        let down = loss(&probe);
        probe[i] = params[i];
        let numeric = (up - down) / (2.0 * h);
        let denom = math::fmax(math::fmax(math::abs(analytic[i]), math::abs(numeric)), 1e-8);
        worst = math::fmax(worst, math::abs(analytic[i] - numeric) / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_validation() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2], vec![f64::NAN, 0.0]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let mut layer = DenseLayer::zeros(3, 3);
        for i in 0..3 {
            layer.weights.data_mut()[i * 3 + i] = 1.0;
        }
        let y = dense_forward(&layer, &[1.5, -2.0, 0.25]).unwrap();
        assert_eq!(y, vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn dense_zero_weights_output_bias() {
        let mut layer = DenseLayer::zeros(2, 4);
        layer.bias.data_mut().copy_from_slice(&[0.5, -1.0]);
        let y = dense_forward(&layer, &[9.0, 9.0, 9.0, 9.0]).unwrap();
        assert_eq!(y, vec![0.5, -1.0]);
    }

    #[test]
    fn dense_shape_mismatch_fails() {
        let layer = DenseLayer::zeros(2, 4);
        assert!(dense_forward(&layer, &[1.0, 2.0]).is_err());
        assert!(dense_backward(&layer, &[0.0; 4], &[0.0; 3]).is_err());
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = Rng::new(99);
        let layer = DenseLayer::seeded(2, 3, &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let upstream: Vec<f64> = (0..2).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let (gw, gb, gx) = dense_backward(&layer, &x, &upstream).unwrap();

        // Scalar objective: upstream · forward(params, x).
        let flat: Vec<f64> = layer
            .weights
            .data()
            .iter()
            .chain(layer.bias.data())
            .copied()
            .collect();
        let analytic: Vec<f64> = gw.data().iter().chain(gb.data()).copied().collect();
        let x_for_loss = x.clone();
        let up = upstream.clone();
        let err = gradcheck(
            |p| {
                let mut l = DenseLayer::zeros(2, 3);
                l.weights.data_mut().copy_from_slice(&p[..6]);
                l.bias.data_mut().copy_from_slice(&p[6..]);
                dense_forward(&l, &x_for_loss)
                    .unwrap()
                    .iter()
                    .zip(&up)
                    .map(|(y, u)| y * u)
                    .sum()
            },
            &analytic,
            &flat,
            1e-5,
        );
        assert!(err < 1e-6, "weight/bias gradcheck err {err}");

        let err_x = gradcheck(
            |p| {
                dense_forward(&layer, p)
                    .unwrap()
                    .iter()
                    .zip(&upstream)
                    .map(|(y, u)| y * u)
                    .sum()
            },
            &gx,
            &x,
            1e-5,
        );
        assert!(err_x < 1e-6, "input gradcheck err {err_x}");
    }

    #[test]
    fn batch_dense_matches_single() {
        let mut rng = Rng::new(4);
        let layer = DenseLayer::seeded(5, 7, &mut rng);
        let batch = 3;
        let xs: Vec<f64> = (0..batch * 7).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let ys = dense_forward_batch(&layer, &xs, batch).unwrap();
        for s in 0..batch {
            let single = dense_forward(&layer, &xs[s * 7..(s + 1) * 7]).unwrap();
            assert_eq!(&ys[s * 5..(s + 1) * 5], single.as_slice());
        }
    }

    #[test]
    fn batch_backward_accumulates_sample_gradients() {
        let mut rng = Rng::new(5);
        let layer = DenseLayer::seeded(4, 6, &mut rng);
        let batch = 3;
        let xs: Vec<f64> = (0..batch * 6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let ups: Vec<f64> = (0..batch * 4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut gw = vec![0.0; 24];
        let mut gb = vec![0.0; 4];
        let mut gx = vec![0.0; batch * 6];
        dense_backward_batch(&layer, &xs, &ups, batch, true, &mut gw, &mut gb, &mut gx).unwrap();

        let mut want_w = vec![0.0; 24];
        let mut want_b = vec![0.0; 4];
        for s in 0..batch {
            let (w, b, x) = dense_backward(
                &layer,
                &xs[s * 6..(s + 1) * 6],
                &ups[s * 4..(s + 1) * 4],
            )
            .unwrap();
            for (acc, v) in want_w.iter_mut().zip(w.data()) {
                *acc += v;
            }
            for (acc, v) in want_b.iter_mut().zip(b.data()) {
                *acc += v;
            }
            for (got, want) in gx[s * 6..(s + 1) * 6].iter().zip(&x) {
                assert!((got - want).abs() < 1e-12);
            }
        }
        for (got, want) in gw.iter().zip(&want_w) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in gb.iter().zip(&want_b) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    fn conv(kernels: Tensor, stride: usize) -> ConvLayer {
        ConvLayer::new(kernels, stride).unwrap()
    }

    #[test]
    fn conv_1x1_identity() {
        let layer = conv(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap(), 1);
        let x = Tensor::new(vec![1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = conv2d_forward(&layer, &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_zero_input_zero_output() {
        let mut rng = Rng::new(1);
        let kern: Vec<f64> = (0..2 * 1 * 9).map(|_| rng.gaussian()).collect();
        let layer = conv(Tensor::new(vec![2, 1, 3, 3], kern).unwrap(), 2);
        let x = Tensor::zeros(vec![1, 7, 7]);
        let y = conv2d_forward(&layer, &x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_matches_quadruple_loop_oracle() {
        // 3x3 kernel over a known 5x5 input, stride 1: direct oracle.
        let x_vals: Vec<f64> = (0..25).map(|i| (i % 7) as f64 - 3.0).collect();
        let k_vals: Vec<f64> = (0..9).map(|i| (i as f64) * 0.5 - 2.0).collect();
        let layer = conv(Tensor::new(vec![1, 1, 3, 3], k_vals.clone()).unwrap(), 1);
        let x = Tensor::new(vec![1, 5, 5], x_vals.clone()).unwrap();
        let y = conv2d_forward(&layer, &x).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        for oy in 0..3 {
            for ox in 0..3 {
                let mut want = 0.0;
                for ky in 0..3 {
                    for kx in 0..3 {
                        want += x_vals[(oy + ky) * 5 + ox + kx] * k_vals[ky * 3 + kx];
                    }
                }
                let got = y.data()[oy * 3 + ox];
                assert!((got - want).abs() < 1e-12, "({ox},{oy}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn conv_rejects_even_kernel() {
        assert!(ConvLayer::new(Tensor::zeros(vec![1, 1, 2, 2]), 1).is_err());
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert_eq!(sigmoid_scalar(-1000.0), 0.0);
        assert_eq!(sigmoid_scalar(1000.0), 1.0);
        assert!((sigmoid_scalar(1.0) - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_monotone_and_bounded() {
        let mut prev = -1.0;
        for i in -600..=600 {
            let v = sigmoid_scalar(i as f64 * 0.5);
            assert!(v > 0.0 || i < -100);
            assert!((0.0..=1.0).contains(&v));
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let r = bce_l2_loss(&[1.0, 0.0], &[1.0, 0.0], &[], 0.0);
        assert!(r.loss.abs() < 1e-10);
    }

    #[test]
    fn bce_uniform_prediction_is_ln2() {
        let r = bce_l2_loss(&[0.5; 4], &[1.0, 0.0, 1.0, 0.0], &[], 0.0);
        assert!((r.loss - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_hand_evaluated_with_l2() {
        // -ln 0.8 + 0.1 * 2² = 0.6231435513142098
        let r = bce_l2_loss(&[0.8], &[1.0], &[2.0], 0.1);
        assert!((r.loss - 0.6231435513142098).abs() < 1e-12);
        assert!((r.grad_logits[0] - (0.8 - 1.0)).abs() < 1e-15);
        assert!((r.grad_params[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn bce_nonnegative_property() {
        let mut rng = Rng::new(17);
        for _ in 0..200 {
            let n = 1 + rng.index(8);
            let pred: Vec<f64> = (0..n).map(|_| rng.uniform(1e-6, 1.0 - 1e-6)).collect();
            let targets: Vec<f64> = (0..n).map(|_| (rng.index(2)) as f64).collect();
            let params: Vec<f64> = (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let r = bce_l2_loss(&pred, &targets, &params, rng.uniform(0.0, 0.5));
            assert!(r.loss >= 0.0);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut params = vec![1.0, -2.0];
        let mut st = AdamState::new(2, 0.1);
        adam_step(&mut params, &[0.0, 0.0], &mut st).unwrap();
        assert_eq!(params, vec![1.0, -2.0]);
        assert_eq!(st.m, vec![0.0, 0.0]);
        assert_eq!(st.v, vec![0.0, 0.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        // At t = 1, m̂/√v̂ = g/|g| exactly, so |Δ| = lr/(1 + ε) ≈ lr.
        for &g in &[0.003, -5.0, 42.0] {
            let mut params = vec![0.0];
            let mut st = AdamState::new(1, 0.05);
            adam_step(&mut params, &[g], &mut st).unwrap();
            let delta = params[0].abs();
            assert!((delta - 0.05).abs() < 0.05 * 1e-5, "g={g} delta={delta}");
            assert_eq!(params[0] < 0.0, g > 0.0);
        }
    }

    #[test]
    fn adam_two_steps_match_scalar_recurrence() {
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        // Independent scalar oracle of the stated recurrence.
        let mut p_expect = 0.0;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            let g = 1.0;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - libm::pow(b1, t as f64));
            let v_hat = v / (1.0 - libm::pow(b2, t as f64));
            p_expect -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }

        let mut params = vec![0.0];
        let mut st = AdamState::new(1, lr);
        adam_step(&mut params, &[1.0], &mut st).unwrap();
        adam_step(&mut params, &[1.0], &mut st).unwrap();
        assert!((params[0] - p_expect).abs() < 1e-15, "{} vs {p_expect}", params[0]);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut params = vec![0.0];
        let mut st = AdamState::new(1, 0.1);
        assert_eq!(
            adam_step(&mut params, &[f64::NAN], &mut st),
            Err(NnError::Divergence)
        );
    }

    #[test]
    fn adam_multi_equals_concatenated_single() {
        let mut rng = Rng::new(8);
        let grads: Vec<f64> = (0..10).map(|_| rng.gaussian()).collect();
        let init: Vec<f64> = (0..10).map(|_| rng.gaussian()).collect();

        let mut joint = init.clone();
        let mut st_joint = AdamState::new(10, 0.01);
        for _ in 0..5 {
            adam_step(&mut joint, &grads, &mut st_joint).unwrap();
        }

        let mut split = init.clone();
        let mut st_split = AdamState::new(10, 0.01);
        for _ in 0..5 {
            let (a, b) = split.split_at_mut(4);
            adam_step_multi(&mut [(a, &grads[..4]), (b, &grads[4..])], &mut st_split).unwrap();
        }
        assert_eq!(joint, split);
    }

    #[test]
    fn momentum_zero_gradient_keeps_params() {
        let mut params = vec![3.0];
        let mut st = MomentumState::new(1);
        momentum_step(&mut params, &[0.0], &mut st).unwrap();
        assert_eq!(params, vec![3.0]);
    }

    #[test]
    fn momentum_single_step_is_minus_lr() {
        let mut params = vec![0.0];
        let mut st = MomentumState::new(1);
        momentum_step(&mut params, &[1.0], &mut st).unwrap();
        assert!((params[0] + st.learning_rate).abs() < 1e-18);
    }

    #[test]
    fn momentum_three_steps_match_scalar_oracle() {
        let (lr, decay, mu) = (1e-3, 1e-6, 0.9);
        let mut p_expect = 0.0;
        let mut vel = 0.0;
        for t in 0..3u64 {
            let lr_t = lr / (1.0 + decay * t as f64);
            vel = mu * vel - lr_t * 1.0;
            p_expect += vel;
        }
        let mut params = vec![0.0];
        let mut st = MomentumState::new(1);
        for _ in 0..3 {
            momentum_step(&mut params, &[1.0], &mut st).unwrap();
        }
        assert!((params[0] - p_expect).abs() < 1e-18);
    }

    #[test]
    fn gradcheck_quadratic_is_exact() {
        let err = gradcheck(|p| 0.5 * p[0] * p[0], &[3.0], &[3.0], 1e-5);
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn gradcheck_constant_loss_is_zero_both_ways() {
        let err = gradcheck(|_| 7.25, &[0.0, 0.0], &[1.0, -2.0], 1e-5);
        assert_eq!(err, 0.0);
    }
}
