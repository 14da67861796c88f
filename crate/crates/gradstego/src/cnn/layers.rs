//! Dense layer primitives: plain `f64` loops, forward and backward.
//!
//! Convolutions are stride-1, zero-padded, output the input's spatial size.
//! Normalization runs in one of two modes: batch statistics while training,
//! frozen running statistics at inference/attack time.

/// Channel-major activation block: `data[(c*height + y)*width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_plane(plane: Vec<f64>, height: usize, width: usize) -> Self {
        debug_assert_eq!(plane.len(), height * width);
        Self {
            channels: 1,
            height,
            width,
            data: plane,
        }
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f64] {
        let size = self.height * self.width;
        &self.data[c * size..(c + 1) * size]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let size = self.height * self.width;
        &mut self.data[c * size..(c + 1) * size]
    }
}

/// Trainable convolution, weights laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    fn weight_base(&self, o: usize, i: usize) -> usize {
        (o * self.in_channels + i) * self.kernel * self.kernel
    }

    pub fn forward(&self, input: &Tensor) -> Tensor {
        let (h, w) = (input.height, input.width);
        let k = self.kernel;
        let c = (k - 1) / 2;
        let mut out = Tensor::zeros(self.out_channels, h, w);
        for o in 0..self.out_channels {
            let out_ch = out.channel_mut(o);
            out_ch.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let in_ch = input.channel(i);
                let wbase = self.weight_base(o, i);
                for ky in 0..k {
                    let dy = ky as isize - c as isize;
                    for kx in 0..k {
                        let dx = kx as isize - c as isize;
                        let weight = self.weights[wbase + ky * k + kx];
                        if weight == 0.0 {
                            continue;
                        }
                        let y0 = (-dy).max(0) as usize;
                        let y1 = (h as isize - dy).min(h as isize) as usize;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        for y in y0..y1 {
                            let src_row = ((y as isize + dy) as usize) * w;
                            let dst_row = y * w;
                            for x in x0..x1 {
                                out_ch[dst_row + x] +=
                                    weight * in_ch[src_row + (x as isize + dx) as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates weight/bias gradients into `dw`/`db` and returns the
    /// gradient with respect to the layer input.
    pub fn backward(
        &self,
        input: &Tensor,
        grad_out: &Tensor,
        dw: &mut [f64],
        db: &mut [f64],
    ) -> Tensor {
        let (h, w) = (input.height, input.width);
        let k = self.kernel;
        let c = (k - 1) / 2;
        let mut grad_in = Tensor::zeros(self.in_channels, h, w);
        for (o, db_o) in db.iter_mut().enumerate() {
            let gout = grad_out.channel(o);
            *db_o += gout.iter().sum::<f64>();
            for i in 0..self.in_channels {
                let in_ch = input.channel(i);
                let gin = grad_in.channel_mut(i);
                let wbase = self.weight_base(o, i);
                for ky in 0..k {
                    let dy = ky as isize - c as isize;
                    for kx in 0..k {
                        let dx = kx as isize - c as isize;
                        let widx = wbase + ky * k + kx;
                        let weight = self.weights[widx];
                        let mut wgrad = 0.0;
                        let y0 = (-dy).max(0) as usize;
                        let y1 = (h as isize - dy).min(h as isize) as usize;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        for y in y0..y1 {
                            let src_row = ((y as isize + dy) as usize) * w;
                            let dst_row = y * w;
                            for x in x0..x1 {
                                let g = gout[dst_row + x];
                                let src = src_row + (x as isize + dx) as usize;
                                wgrad += g * in_ch[src];
                                gin[src] += g * weight;
                            }
                        }
                        dw[widx] += wgrad;
                    }
                }
            }
        }
        grad_in
    }
}

/// Fixed (non-trainable) single-channel convolution for the high-pass front
/// end.
pub fn fixed_conv_forward(input: &Tensor, kernel: &[f64], k: usize) -> Tensor {
    let proxy = Conv {
        in_channels: 1,
        out_channels: 1,
        kernel: k,
        weights: kernel.to_vec(),
        bias: vec![0.0],
    };
    proxy.forward(input)
}

pub fn fixed_conv_backward(grad_out: &Tensor, kernel: &[f64], k: usize) -> Tensor {
    let proxy = Conv {
        in_channels: 1,
        out_channels: 1,
        kernel: k,
        weights: kernel.to_vec(),
        bias: vec![0.0],
    };
    let dummy_input = Tensor::zeros(1, grad_out.height, grad_out.width);
    let mut dw = vec![0.0; k * k];
    let mut db = vec![0.0];
    proxy.backward(&dummy_input, grad_out, &mut dw, &mut db)
}

/// Per-channel normalization with trainable scale/shift and running
/// statistics for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
}

impl Norm {
    pub fn new(channels: usize, eps: f64) -> Self {
        Self {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps,
        }
    }

    /// Inference: affine transform from frozen running statistics.
    pub fn forward_inference(&self, input: &Tensor) -> (Tensor, Tensor) {
        let mut normalized = input.clone();
        let mut out = input.clone();
        for c in 0..self.channels {
            let inv = 1.0 / (self.running_var[c] + self.eps).sqrt();
            let mean = self.running_mean[c];
            let (gamma, beta) = (self.gamma[c], self.beta[c]);
            for (n, o) in normalized
                .channel_mut(c)
                .iter_mut()
                .zip(out.channel_mut(c).iter_mut())
            {
                let xhat = (*n - mean) * inv;
                *n = xhat;
                *o = gamma * xhat + beta;
            }
        }
        (out, normalized)
    }

    pub fn backward_inference(&self, grad_out: &Tensor) -> Tensor {
        let mut grad_in = grad_out.clone();
        for c in 0..self.channels {
            let scale = self.gamma[c] / (self.running_var[c] + self.eps).sqrt();
            for g in grad_in.channel_mut(c) {
                *g *= scale;
            }
        }
        grad_in
    }

    /// Training: normalize the whole batch with its own statistics. Returns
    /// per-image (output, x̂) plus the batch mean/variance per channel.
    #[allow(clippy::type_complexity)]
    pub fn forward_batch(&self, inputs: &[Tensor]) -> (Vec<Tensor>, Vec<Tensor>, Vec<f64>, Vec<f64>) {
        let count = (inputs.len() * inputs[0].height * inputs[0].width) as f64;
        let mut mean = vec![0.0; self.channels];
        let mut var = vec![0.0; self.channels];
        for c in 0..self.channels {
            let mut acc = 0.0;
            for t in inputs {
                acc += t.channel(c).iter().sum::<f64>();
            }
            mean[c] = acc / count;
            let mut acc2 = 0.0;
            for t in inputs {
                acc2 += t.channel(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
            }
            var[c] = acc2 / count;
        }
        let mut outs = Vec::with_capacity(inputs.len());
        let mut xhats = Vec::with_capacity(inputs.len());
        for t in inputs {
            let mut out = t.clone();
            let mut xhat = t.clone();
            for c in 0..self.channels {
                let inv = 1.0 / (var[c] + self.eps).sqrt();
                let (gamma, beta) = (self.gamma[c], self.beta[c]);
                for (o, n) in out
                    .channel_mut(c)
                    .iter_mut()
                    .zip(xhat.channel_mut(c).iter_mut())
                {
                    let v = (*o - mean[c]) * inv;
                    *n = v;
                    *o = gamma * v + beta;
                }
            }
            outs.push(out);
            xhats.push(xhat);
        }
        (outs, xhats, mean, var)
    }

    /// Training backward: the batch-statistics path couples every sample, so
    /// the gradients flow through the shared mean and variance too.
    pub fn backward_batch(
        &self,
        xhats: &[Tensor],
        grad_outs: &[Tensor],
        var: &[f64],
        dgamma: &mut [f64],
        dbeta: &mut [f64],
    ) -> Vec<Tensor> {
        let count = (xhats.len() * xhats[0].height * xhats[0].width) as f64;
        let mut sum_dy = vec![0.0; self.channels];
        let mut sum_dy_xhat = vec![0.0; self.channels];
        for (xhat, gout) in xhats.iter().zip(grad_outs) {
            for c in 0..self.channels {
                for (&x, &g) in xhat.channel(c).iter().zip(gout.channel(c)) {
                    sum_dy[c] += g;
                    sum_dy_xhat[c] += g * x;
                }
            }
        }
        for c in 0..self.channels {
            dgamma[c] += sum_dy_xhat[c];
            dbeta[c] += sum_dy[c];
        }
        xhats
            .iter()
            .zip(grad_outs)
            .map(|(xhat, gout)| {
                let mut gin = gout.clone();
                for c in 0..self.channels {
                    let inv = 1.0 / (var[c] + self.eps).sqrt();
                    let scale = self.gamma[c] * inv;
                    let mean_dy = sum_dy[c] / count;
                    let mean_dy_xhat = sum_dy_xhat[c] / count;
                    for (g, &x) in gin.channel_mut(c).iter_mut().zip(xhat.channel(c)) {
                        *g = scale * (*g - mean_dy - x * mean_dy_xhat);
                    }
                }
                gin
            })
            .collect()
    }

    pub fn update_running_stats(&mut self, mean: &[f64], var: &[f64], momentum: f64) {
        for c in 0..self.channels {
            self.running_mean[c] = (1.0 - momentum) * self.running_mean[c] + momentum * mean[c];
            self.running_var[c] = (1.0 - momentum) * self.running_var[c] + momentum * var[c];
        }
    }
}

pub fn abs_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in &mut out.data {
        *v = v.abs();
    }
    out
}

// d|x|/dx as sign(x) with sign(0) = 0, which is also what a central
// difference at zero reports.
pub fn abs_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut grad_in = grad_out.clone();
    for (g, &x) in grad_in.data.iter_mut().zip(&input.data) {
        *g *= if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    grad_in
}

pub fn tanh_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in &mut out.data {
        *v = v.tanh();
    }
    out
}

pub fn tanh_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut grad_in = grad_out.clone();
    for (g, &y) in grad_in.data.iter_mut().zip(&output.data) {
        *g *= 1.0 - y * y;
    }
    grad_in
}

/// 2×2 average pooling, stride 2.
pub fn avg_pool_forward(input: &Tensor) -> Tensor {
    let (oh, ow) = (input.height / 2, input.width / 2);
    let mut out = Tensor::zeros(input.channels, oh, ow);
    for c in 0..input.channels {
        let src = input.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..oh {
            for x in 0..ow {
                let base = 2 * y * input.width + 2 * x;
                dst[y * ow + x] = 0.25
                    * (src[base] + src[base + 1] + src[base + input.width] + src[base + input.width + 1]);
            }
        }
    }
    out
}

pub fn avg_pool_backward(grad_out: &Tensor, in_height: usize, in_width: usize) -> Tensor {
    let mut grad_in = Tensor::zeros(grad_out.channels, in_height, in_width);
    for c in 0..grad_out.channels {
        let gout = grad_out.channel(c);
        let gin = grad_in.channel_mut(c);
        for y in 0..grad_out.height {
            for x in 0..grad_out.width {
                let g = 0.25 * gout[y * grad_out.width + x];
                let base = 2 * y * in_width + 2 * x;
                gin[base] += g;
                gin[base + 1] += g;
                gin[base + in_width] += g;
                gin[base + in_width + 1] += g;
            }
        }
    }
    grad_in
}

/// Global average pooling to one value per channel.
pub fn global_avg_forward(input: &Tensor) -> Vec<f64> {
    let area = (input.height * input.width) as f64;
    (0..input.channels)
        .map(|c| input.channel(c).iter().sum::<f64>() / area)
        .collect()
}

pub fn global_avg_backward(grad_out: &[f64], channels: usize, height: usize, width: usize) -> Tensor {
    let mut grad_in = Tensor::zeros(channels, height, width);
    let area = (height * width) as f64;
    for (c, &g_out) in grad_out.iter().enumerate().take(channels) {
        grad_in.channel_mut(c).fill(g_out / area);
    }
    grad_in
}

/// Fully connected head, weights laid out `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|o| {
                self.bias[o]
                    + self.weights[o * self.in_dim..(o + 1) * self.in_dim]
                        .iter()
                        .zip(input)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn backward(
        &self,
        input: &[f64],
        grad_out: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
    ) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            db[o] += grad_out[o];
            for i in 0..self.in_dim {
                dw[o * self.in_dim + i] += grad_out[o] * input[i];
                grad_in[i] += grad_out[o] * self.weights[o * self.in_dim + i];
            }
        }
        grad_in
    }
}

/// Numerically stable two-way softmax.
pub fn softmax2(logits: &[f64]) -> (f64, f64) {
    let p0 = 1.0 / (1.0 + (logits[1] - logits[0]).exp());
    let p1 = 1.0 / (1.0 + (logits[0] - logits[1]).exp());
    (p0, p1)
}
