//! Compact differentiable CNN steganalyzer.
//!
//! Front end is a fixed 5×5 high-pass residual kernel, followed by three
//! convolution groups (8, 16, 32 channels): an absolute-value unit after the
//! first conv, bounded tanh nonlinearities in groups 1–2, per-channel
//! normalization in every group, 2×2 average pooling between groups, global
//! average pooling, and a two-way linear head with softmax. Beyond
//! classification, the model exposes the gradient of the cover probability
//! with respect to every input pixel — the signal that steers flip
//! directions during embedding.
//!
//! Training normalizes with batch statistics; inference (and the attack-time
//! input gradient) uses running statistics frozen at the end of training.

mod layers;
mod serial;
mod train;

pub use train::{train, training_gradients, training_loss, TrainConfig, TrainOutput};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use layers::{
    abs_backward, abs_forward, avg_pool_backward, avg_pool_forward, fixed_conv_backward,
    fixed_conv_forward, global_avg_backward, global_avg_forward, softmax2, tanh_backward,
    tanh_forward, Conv, Linear, Norm, Tensor,
};

/// Channel widths of the three conv groups.
pub const GROUP_CHANNELS: [usize; 3] = [8, 16, 32];

/// Spatial kernel size of the trainable convolutions.
pub const CONV_KERNEL: usize = 3;

/// Default square input side.
pub const DEFAULT_INPUT_SIDE: usize = 64;

const NORM_EPS: f64 = 1e-5;
const PIXEL_SCALE: f64 = 255.0;

// Fixed 5×5 KV high-pass residual kernel (scaled by 1/12).
const HPF_BASE: [f64; 25] = [
    -1.0, 2.0, -2.0, 2.0, -1.0, //
    2.0, -6.0, 8.0, -6.0, 2.0, //
    -2.0, 8.0, -12.0, 8.0, -2.0, //
    2.0, -6.0, 8.0, -6.0, 2.0, //
    -1.0, 2.0, -2.0, 2.0, -1.0,
];

fn hpf_kernel() -> [f64; 25] {
    let mut k = HPF_BASE;
    for v in &mut k {
        *v /= 12.0;
    }
    k
}

/// Class labels in head order: index 0 is cover, index 1 is stego.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Cover,
    Stego,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Cover => 0,
            Label::Stego => 1,
        }
    }
}

/// Gradient of a class probability with respect to each input pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GradientMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Elementwise signs of a gradient map; exact zeros resolve to +1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMap {
    width: usize,
    height: usize,
    signs: Vec<i8>,
}

impl SignMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn sign(&self, row: usize, col: usize) -> i8 {
        self.signs[row * self.width + col]
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// Renders the map as an image: −1 → 0, +1 → 255.
    pub fn to_pgm(&self) -> GrayImage {
        let pixels = self.signs.iter().map(|&s| if s > 0 { 255 } else { 0 }).collect();
        GrayImage::new(self.width, self.height, pixels).expect("sign map has image shape")
    }
}

/// `sgn` of the gradient with the tie at exactly zero resolved to +1.
pub fn sign_map(grad: &GradientMap) -> SignMap {
    SignMap {
        width: grad.width,
        height: grad.height,
        signs: grad
            .values
            .iter()
            .map(|&g| if g < 0.0 { -1i8 } else { 1i8 })
            .collect(),
    }
}

/// The steganalyzer: fixed high-pass front end plus trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    input_side: usize,
    conv1: Conv,
    norm1: Norm,
    conv2: Conv,
    norm2: Norm,
    conv3: Conv,
    norm3: Norm,
    head: Linear,
}

impl CnnModel {
    /// Fresh model with uniform fan-in initialization drawn from the seed.
    pub fn new(input_side: usize, seed: u64) -> Result<Self> {
        if input_side < 8 || !input_side.is_multiple_of(4) {
            return Err(Error::InvalidArgument(format!(
                "input side must be >= 8 and divisible by 4, got {input_side}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv1 = Conv::zeros(1, GROUP_CHANNELS[0], CONV_KERNEL);
        let mut conv2 = Conv::zeros(GROUP_CHANNELS[0], GROUP_CHANNELS[1], CONV_KERNEL);
        let mut conv3 = Conv::zeros(GROUP_CHANNELS[1], GROUP_CHANNELS[2], CONV_KERNEL);
        let mut head = Linear::zeros(GROUP_CHANNELS[2], 2);
        for conv in [&mut conv1, &mut conv2, &mut conv3] {
            let bound = 1.0 / ((conv.in_channels * conv.kernel * conv.kernel) as f64).sqrt();
            for w in &mut conv.weights {
                *w = rng.gen_range(-bound..bound);
            }
        }
        let bound = 1.0 / (head.in_dim as f64).sqrt();
        for w in &mut head.weights {
            *w = rng.gen_range(-bound..bound);
        }
        Ok(Self {
            input_side,
            conv1,
            norm1: Norm::new(GROUP_CHANNELS[0], NORM_EPS),
            conv2,
            norm2: Norm::new(GROUP_CHANNELS[1], NORM_EPS),
            conv3,
            norm3: Norm::new(GROUP_CHANNELS[2], NORM_EPS),
            head,
        })
    }

    pub fn input_side(&self) -> usize {
        self.input_side
    }

    fn check_shape(&self, width: usize, height: usize) -> Result<()> {
        if width != self.input_side || height != self.input_side {
            return Err(Error::InvalidArgument(format!(
                "model expects {0}x{0} input, got {width}x{height}",
                self.input_side
            )));
        }
        Ok(())
    }

    fn plane_from_values(&self, pixels: &[f64]) -> Tensor {
        let scaled = pixels.iter().map(|&p| p / PIXEL_SCALE).collect();
        Tensor::from_plane(scaled, self.input_side, self.input_side)
    }

    /// Classifies an image, returning `(p_cover, p_stego)`.
    pub fn forward(&self, img: &GrayImage) -> Result<(f64, f64)> {
        self.check_shape(img.width(), img.height())?;
        self.forward_values(&img.to_f64())
    }

    /// Like [`forward`](Self::forward) but on real-valued pixels, so callers
    /// can probe the model off the integer grid.
    pub fn forward_values(&self, pixels: &[f64]) -> Result<(f64, f64)> {
        if pixels.len() != self.input_side * self.input_side {
            return Err(Error::InvalidArgument(format!(
                "expected {} pixel values, got {}",
                self.input_side * self.input_side,
                pixels.len()
            )));
        }
        let cache = self.run_inference(self.plane_from_values(pixels));
        let (p_c, p_s) = softmax2(&cache.logits);
        if !p_c.is_finite() || !p_s.is_finite() {
            return Err(Error::Numeric("non-finite activation in forward pass".into()));
        }
        Ok((p_c, p_s))
    }

    /// Gradient of the probability of `target` with respect to every input
    /// pixel, computed in inference mode (frozen normalization statistics).
    pub fn input_gradient(&self, img: &GrayImage, target: Label) -> Result<GradientMap> {
        self.check_shape(img.width(), img.height())?;
        self.input_gradient_values(&img.to_f64(), target)
    }

    /// Real-valued-pixel variant of [`input_gradient`](Self::input_gradient).
    pub fn input_gradient_values(&self, pixels: &[f64], target: Label) -> Result<GradientMap> {
        if pixels.len() != self.input_side * self.input_side {
            return Err(Error::InvalidArgument(format!(
                "expected {} pixel values, got {}",
                self.input_side * self.input_side,
                pixels.len()
            )));
        }
        let cache = self.run_inference(self.plane_from_values(pixels));
        let (p_c, p_s) = softmax2(&cache.logits);
        // d p_target / d logits: the softmax Jacobian row for the target.
        let seed = match target {
            Label::Cover => [p_c * (1.0 - p_c), -p_c * p_s],
            Label::Stego => [-p_c * p_s, p_s * (1.0 - p_s)],
        };
        let grad_plane = self.backward_inference(&cache, &seed);
        let values: Vec<f64> = grad_plane.data.iter().map(|g| g / PIXEL_SCALE).collect();
        if values.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite input gradient".into()));
        }
        Ok(GradientMap {
            width: self.input_side,
            height: self.input_side,
            values,
        })
    }

    fn run_inference(&self, plane: Tensor) -> InferenceCache {
        let hpf = hpf_kernel();
        let hpf_out = fixed_conv_forward(&plane, &hpf, 5);

        let conv1_out = self.conv1.forward(&hpf_out);
        let abs_out = abs_forward(&conv1_out);
        let (norm1_out, _) = self.norm1.forward_inference(&abs_out);
        let tanh1_out = tanh_forward(&norm1_out);
        let pool1_out = avg_pool_forward(&tanh1_out);

        let conv2_out = self.conv2.forward(&pool1_out);
        let (norm2_out, _) = self.norm2.forward_inference(&conv2_out);
        let tanh2_out = tanh_forward(&norm2_out);
        let pool2_out = avg_pool_forward(&tanh2_out);

        let conv3_out = self.conv3.forward(&pool2_out);
        let (norm3_out, _) = self.norm3.forward_inference(&conv3_out);
        let features = global_avg_forward(&norm3_out);
        let logits = self.head.forward(&features);

        InferenceCache {
            hpf_out,
            conv1_out,
            tanh1_out,
            pool1_out,
            tanh2_out,
            pool2_out,
            norm3_shape: (norm3_out.channels, norm3_out.height, norm3_out.width),
            features,
            logits,
        }
    }

    // Backward pass in inference mode; returns the gradient at the scaled
    // input plane.
    fn backward_inference(&self, cache: &InferenceCache, dlogits: &[f64; 2]) -> Tensor {
        let mut head_dw = vec![0.0; self.head.weights.len()];
        let mut head_db = vec![0.0; self.head.bias.len()];
        let dfeatures = self
            .head
            .backward(&cache.features, dlogits, &mut head_dw, &mut head_db);

        let (c3, h3, w3) = cache.norm3_shape;
        let dnorm3 = global_avg_backward(&dfeatures, c3, h3, w3);
        let dconv3 = self.norm3.backward_inference(&dnorm3);
        let mut dw3 = vec![0.0; self.conv3.weights.len()];
        let mut db3 = vec![0.0; self.conv3.bias.len()];
        let dpool2 = self.conv3.backward(&cache.pool2_out, &dconv3, &mut dw3, &mut db3);

        let dtanh2 = avg_pool_backward(&dpool2, cache.tanh2_out.height, cache.tanh2_out.width);
        let dnorm2 = tanh_backward(&cache.tanh2_out, &dtanh2);
        let dconv2 = self.norm2.backward_inference(&dnorm2);
        let mut dw2 = vec![0.0; self.conv2.weights.len()];
        let mut db2 = vec![0.0; self.conv2.bias.len()];
        let dpool1 = self.conv2.backward(&cache.pool1_out, &dconv2, &mut dw2, &mut db2);

        let dtanh1 = avg_pool_backward(&dpool1, cache.tanh1_out.height, cache.tanh1_out.width);
        let dnorm1 = tanh_backward(&cache.tanh1_out, &dtanh1);
        let dabs = self.norm1.backward_inference(&dnorm1);
        let dconv1 = abs_backward(&cache.conv1_out, &dabs);
        let mut dw1 = vec![0.0; self.conv1.weights.len()];
        let mut db1 = vec![0.0; self.conv1.bias.len()];
        let dhpf = self.conv1.backward(&cache.hpf_out, &dconv1, &mut dw1, &mut db1);

        fixed_conv_backward(&dhpf, &hpf_kernel(), 5)
    }

    // Canonical trainable-parameter ordering shared by the optimizer, the
    // flat accessors, and serialization.
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            &self.conv1.weights,
            &self.conv1.bias,
            &self.norm1.gamma,
            &self.norm1.beta,
            &self.conv2.weights,
            &self.conv2.bias,
            &self.norm2.gamma,
            &self.norm2.beta,
            &self.conv3.weights,
            &self.conv3.bias,
            &self.norm3.gamma,
            &self.norm3.beta,
            &self.head.weights,
            &self.head.bias,
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut Vec<f64>> {
        vec![
            &mut self.conv1.weights,
            &mut self.conv1.bias,
            &mut self.norm1.gamma,
            &mut self.norm1.beta,
            &mut self.conv2.weights,
            &mut self.conv2.bias,
            &mut self.norm2.gamma,
            &mut self.norm2.beta,
            &mut self.conv3.weights,
            &mut self.conv3.bias,
            &mut self.norm3.gamma,
            &mut self.norm3.beta,
            &mut self.head.weights,
            &mut self.head.bias,
        ]
    }

    /// Replaces the running normalization statistics with exact population
    /// statistics over the given images. [`train`] already does this at the
    /// end of a run; it is exposed for recalibrating a model against a new
    /// cover source.
    pub fn calibrate_norm_stats(&mut self, images: &[&GrayImage]) -> Result<()> {
        if images.is_empty() {
            return Err(Error::InvalidArgument(
                "calibration needs at least one image".into(),
            ));
        }
        for img in images {
            self.check_shape(img.width(), img.height())?;
        }
        train::calibrate_norm_stats(self, images);
        Ok(())
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Reads trainable parameter `i` in canonical order.
    pub fn param(&self, mut i: usize) -> f64 {
        for slice in self.param_slices() {
            if i < slice.len() {
                return slice[i];
            }
            i -= slice.len();
        }
        panic!("parameter index out of range");
    }

    /// Writes trainable parameter `i` in canonical order.
    pub fn set_param(&mut self, mut i: usize, value: f64) {
        for slice in self.param_slices_mut() {
            if i < slice.len() {
                slice[i] = value;
                return;
            }
            i -= slice.len();
        }
        panic!("parameter index out of range");
    }
}

struct InferenceCache {
    hpf_out: Tensor,
    conv1_out: Tensor,
    tanh1_out: Tensor,
    pool1_out: Tensor,
    tanh2_out: Tensor,
    pool2_out: Tensor,
    norm3_shape: (usize, usize, usize),
    features: Vec<f64>,
    logits: Vec<f64>,
}
