//! Seeded momentum-SGD training on paired cover/stego batches.
//!
//! Every batch keeps each cover next to its stego so the normalization
//! statistics see both classes. All shuffling and initialization derive from
//! the config seed; per-image work inside a batch fans out with rayon but is
//! reduced in fixed index order, so training is bit-reproducible.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::layers::{
    abs_backward, abs_forward, avg_pool_backward, avg_pool_forward, fixed_conv_forward,
    global_avg_backward, global_avg_forward, softmax2, tanh_backward, tanh_forward, Tensor,
};
use super::{hpf_kernel, CnnModel, Label};
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Hyperparameters for one training run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Images per batch (two per cover/stego pair); even and ≥ 2.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Momentum of the running normalization statistics.
    pub norm_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            momentum: 0.9,
            batch_size: 32,
            epochs: 30,
            seed: 1,
            norm_momentum: 0.1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "batch size must be even and at least 2, got {}",
                self.batch_size
            )));
        }
        if self.norm_momentum.is_nan() || self.norm_momentum <= 0.0 || self.norm_momentum > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "normalization momentum must lie in (0, 1], got {}",
                self.norm_momentum
            )));
        }
        Ok(())
    }
}

/// Final model plus the mean training loss per epoch.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: CnnModel,
    pub epoch_losses: Vec<f64>,
}

/// Trains a fresh model on cover/stego pairs.
pub fn train(config: &TrainConfig, pairs: &[(GrayImage, GrayImage)]) -> Result<TrainOutput> {
    config.validate()?;
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 cover/stego pairs, got {}",
            pairs.len()
        )));
    }
    let side = pairs[0].0.width();
    for (cover, stego) in pairs {
        for img in [cover, stego] {
            if img.width() != side || img.height() != side {
                return Err(Error::InvalidArgument(
                    "all training images must share one square shape".into(),
                ));
            }
        }
    }

    let mut model = CnnModel::new(side, config.seed)?;
    let mut velocity = vec![0.0; model.param_count()];
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let pairs_per_batch = config.batch_size / 2;
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut image_count = 0usize;
        for chunk in order.chunks(pairs_per_batch) {
            let mut planes = Vec::with_capacity(chunk.len() * 2);
            let mut labels = Vec::with_capacity(chunk.len() * 2);
            for &i in chunk {
                planes.push(model.plane_from_values(&pairs[i].0.to_f64()));
                labels.push(Label::Cover);
                planes.push(model.plane_from_values(&pairs[i].1.to_f64()));
                labels.push(Label::Stego);
            }
            let cache = forward_train(&model, planes);
            let batch = cache.logits.len();
            let mut seeds = Vec::with_capacity(batch);
            let mut batch_loss = 0.0;
            for (logits, &label) in cache.logits.iter().zip(&labels) {
                let (p_c, p_s) = softmax2(logits);
                let p_label = if label == Label::Cover { p_c } else { p_s };
                batch_loss -= p_label.ln();
                let scale = 1.0 / batch as f64;
                let target = [f64::from(label == Label::Cover), f64::from(label == Label::Stego)];
                seeds.push([(p_c - target[0]) * scale, (p_s - target[1]) * scale]);
            }
            batch_loss /= batch as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged at epoch {epoch} (loss {batch_loss})"
                )));
            }

            let grads = backward_train(&model, &cache, &seeds);
            for ((slot, velocity), grad) in model
                .param_slices_mut()
                .into_iter()
                .flat_map(|s| s.iter_mut())
                .zip(velocity.iter_mut())
                .zip(&grads)
            {
                *velocity = config.momentum * *velocity - config.learning_rate * grad;
                *slot += *velocity;
            }
            model
                .norm1
                .update_running_stats(&cache.mean1, &cache.var1, config.norm_momentum);
            model
                .norm2
                .update_running_stats(&cache.mean2, &cache.var2, config.norm_momentum);
            model
                .norm3
                .update_running_stats(&cache.mean3, &cache.var3, config.norm_momentum);

            loss_sum += batch_loss * batch as f64;
            image_count += batch;
        }
        epoch_losses.push(loss_sum / image_count as f64);
    }

    // Freeze inference statistics as exact population statistics over the
    // training images. The EMA collected above tracks batch statistics well
    // enough mid-training, but the classifier deployed for testing (and
    // attacked through its input gradient) should normalize against the
    // training distribution itself.
    if config.epochs > 0 {
        let calibration: Vec<&GrayImage> = pairs.iter().flat_map(|(c, s)| [c, s]).collect();
        calibrate_norm_stats(&mut model, &calibration);
    }

    Ok(TrainOutput { model, epoch_losses })
}

/// Mean cross-entropy of a labeled batch in training mode (batch-statistics
/// normalization), without touching the model.
pub fn training_loss(model: &CnnModel, batch: &[(&GrayImage, Label)]) -> Result<f64> {
    let cache = forward_checked(model, batch)?;
    let batch_len = cache.logits.len() as f64;
    let mut loss = 0.0;
    for (logits, (_, label)) in cache.logits.iter().zip(batch) {
        let (p_c, p_s) = softmax2(logits);
        loss -= match label {
            Label::Cover => p_c.ln(),
            Label::Stego => p_s.ln(),
        };
    }
    let loss = loss / batch_len;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite training loss {loss}")));
    }
    Ok(loss)
}

/// Training-mode loss and its gradient for every trainable parameter, flat in
/// the model's canonical parameter order.
pub fn training_gradients(model: &CnnModel, batch: &[(&GrayImage, Label)]) -> Result<(f64, Vec<f64>)> {
    let cache = forward_checked(model, batch)?;
    let batch_len = cache.logits.len();
    let scale = 1.0 / batch_len as f64;
    let mut seeds = Vec::with_capacity(batch_len);
    let mut loss = 0.0;
    for (logits, (_, label)) in cache.logits.iter().zip(batch) {
        let (p_c, p_s) = softmax2(logits);
        loss -= match label {
            Label::Cover => p_c.ln(),
            Label::Stego => p_s.ln(),
        };
        let target = [
            f64::from(*label == Label::Cover),
            f64::from(*label == Label::Stego),
        ];
        seeds.push([(p_c - target[0]) * scale, (p_s - target[1]) * scale]);
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite training loss {loss}")));
    }
    let grads = backward_train(model, &cache, &seeds);
    Ok((loss, grads))
}

fn forward_checked(model: &CnnModel, batch: &[(&GrayImage, Label)]) -> Result<BatchCache> {
    if batch.len() < 2 {
        return Err(Error::InvalidArgument(
            "training-mode evaluation needs a batch of at least 2 images".into(),
        ));
    }
    let mut planes = Vec::with_capacity(batch.len());
    for (img, _) in batch {
        model.check_shape(img.width(), img.height())?;
        planes.push(model.plane_from_values(&img.to_f64()));
    }
    Ok(forward_train(model, planes))
}

struct BatchCache {
    hpf_outs: Vec<Tensor>,
    conv1_outs: Vec<Tensor>,
    xhat1: Vec<Tensor>,
    mean1: Vec<f64>,
    var1: Vec<f64>,
    tanh1_outs: Vec<Tensor>,
    pool1_outs: Vec<Tensor>,
    xhat2: Vec<Tensor>,
    mean2: Vec<f64>,
    var2: Vec<f64>,
    tanh2_outs: Vec<Tensor>,
    pool2_outs: Vec<Tensor>,
    xhat3: Vec<Tensor>,
    mean3: Vec<f64>,
    var3: Vec<f64>,
    norm3_shape: (usize, usize, usize),
    features: Vec<Vec<f64>>,
    logits: Vec<Vec<f64>>,
}

fn forward_train(model: &CnnModel, planes: Vec<Tensor>) -> BatchCache {
    let hpf = hpf_kernel();
    let (hpf_outs, conv1_outs, abs_outs): (Vec<_>, Vec<_>, Vec<_>) = planes
        .par_iter()
        .map(|plane| {
            let hpf_out = fixed_conv_forward(plane, &hpf, 5);
            let conv1_out = model.conv1.forward(&hpf_out);
            let abs_out = abs_forward(&conv1_out);
            (hpf_out, conv1_out, abs_out)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((Vec::new(), Vec::new(), Vec::new()), |mut acc, (a, b, c)| {
            acc.0.push(a);
            acc.1.push(b);
            acc.2.push(c);
            acc
        });

    let (norm1_outs, xhat1, mean1, var1) = model.norm1.forward_batch(&abs_outs);
    drop(abs_outs);

    let (tanh1_outs, pool1_outs, conv2_outs): (Vec<_>, Vec<_>, Vec<_>) = norm1_outs
        .par_iter()
        .map(|n| {
            let t = tanh_forward(n);
            let p = avg_pool_forward(&t);
            let c = model.conv2.forward(&p);
            (t, p, c)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((Vec::new(), Vec::new(), Vec::new()), |mut acc, (a, b, c)| {
            acc.0.push(a);
            acc.1.push(b);
            acc.2.push(c);
            acc
        });

    let (norm2_outs, xhat2, mean2, var2) = model.norm2.forward_batch(&conv2_outs);

    let (tanh2_outs, pool2_outs, conv3_outs): (Vec<_>, Vec<_>, Vec<_>) = norm2_outs
        .par_iter()
        .map(|n| {
            let t = tanh_forward(n);
            let p = avg_pool_forward(&t);
            let c = model.conv3.forward(&p);
            (t, p, c)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((Vec::new(), Vec::new(), Vec::new()), |mut acc, (a, b, c)| {
            acc.0.push(a);
            acc.1.push(b);
            acc.2.push(c);
            acc
        });

    let (norm3_outs, xhat3, mean3, var3) = model.norm3.forward_batch(&conv3_outs);
    let norm3_shape = (
        norm3_outs[0].channels,
        norm3_outs[0].height,
        norm3_outs[0].width,
    );

    let features: Vec<Vec<f64>> = norm3_outs.iter().map(global_avg_forward).collect();
    let logits: Vec<Vec<f64>> = features.iter().map(|f| model.head.forward(f)).collect();

    BatchCache {
        hpf_outs,
        conv1_outs,
        xhat1,
        mean1,
        var1,
        tanh1_outs,
        pool1_outs,
        xhat2,
        mean2,
        var2,
        tanh2_outs,
        pool2_outs,
        xhat3,
        mean3,
        var3,
        norm3_shape,
        features,
        logits,
    }
}

// Gradients for every trainable parameter, flat in canonical order. Per-image
// conv gradients are computed in parallel and reduced in index order.
fn backward_train(model: &CnnModel, cache: &BatchCache, seeds: &[[f64; 2]]) -> Vec<f64> {
    let mut head_dw = vec![0.0; model.head.weights.len()];
    let mut head_db = vec![0.0; model.head.bias.len()];
    let mut dnorm3 = Vec::with_capacity(seeds.len());
    let (c3, h3, w3) = cache.norm3_shape;
    for (i, seed) in seeds.iter().enumerate() {
        let dfeatures = model
            .head
            .backward(&cache.features[i], seed, &mut head_dw, &mut head_db);
        dnorm3.push(global_avg_backward(&dfeatures, c3, h3, w3));
    }

    let mut n3_gamma = vec![0.0; model.norm3.channels];
    let mut n3_beta = vec![0.0; model.norm3.channels];
    let dconv3 = model
        .norm3
        .backward_batch(&cache.xhat3, &dnorm3, &cache.var3, &mut n3_gamma, &mut n3_beta);
    drop(dnorm3);

    let stage3: Vec<(Vec<f64>, Vec<f64>, Tensor)> = dconv3
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut dw = vec![0.0; model.conv3.weights.len()];
            let mut db = vec![0.0; model.conv3.bias.len()];
            let dpool2 = model.conv3.backward(&cache.pool2_outs[i], d, &mut dw, &mut db);
            let dtanh2 = avg_pool_backward(
                &dpool2,
                cache.tanh2_outs[i].height,
                cache.tanh2_outs[i].width,
            );
            let dnorm2 = tanh_backward(&cache.tanh2_outs[i], &dtanh2);
            (dw, db, dnorm2)
        })
        .collect();
    let mut conv3_dw = vec![0.0; model.conv3.weights.len()];
    let mut conv3_db = vec![0.0; model.conv3.bias.len()];
    let mut dnorm2 = Vec::with_capacity(seeds.len());
    for (dw, db, d) in stage3 {
        add_into(&mut conv3_dw, &dw);
        add_into(&mut conv3_db, &db);
        dnorm2.push(d);
    }

    let mut n2_gamma = vec![0.0; model.norm2.channels];
    let mut n2_beta = vec![0.0; model.norm2.channels];
    let dconv2 = model
        .norm2
        .backward_batch(&cache.xhat2, &dnorm2, &cache.var2, &mut n2_gamma, &mut n2_beta);
    drop(dnorm2);

    let stage2: Vec<(Vec<f64>, Vec<f64>, Tensor)> = dconv2
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut dw = vec![0.0; model.conv2.weights.len()];
            let mut db = vec![0.0; model.conv2.bias.len()];
            let dpool1 = model.conv2.backward(&cache.pool1_outs[i], d, &mut dw, &mut db);
            let dtanh1 = avg_pool_backward(
                &dpool1,
                cache.tanh1_outs[i].height,
                cache.tanh1_outs[i].width,
            );
            let dnorm1 = tanh_backward(&cache.tanh1_outs[i], &dtanh1);
            (dw, db, dnorm1)
        })
        .collect();
    let mut conv2_dw = vec![0.0; model.conv2.weights.len()];
    let mut conv2_db = vec![0.0; model.conv2.bias.len()];
    let mut dnorm1 = Vec::with_capacity(seeds.len());
    for (dw, db, d) in stage2 {
        add_into(&mut conv2_dw, &dw);
        add_into(&mut conv2_db, &db);
        dnorm1.push(d);
    }

    let mut n1_gamma = vec![0.0; model.norm1.channels];
    let mut n1_beta = vec![0.0; model.norm1.channels];
    let dabs = model
        .norm1
        .backward_batch(&cache.xhat1, &dnorm1, &cache.var1, &mut n1_gamma, &mut n1_beta);
    drop(dnorm1);

    let stage1: Vec<(Vec<f64>, Vec<f64>)> = dabs
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let dconv1 = abs_backward(&cache.conv1_outs[i], d);
            let mut dw = vec![0.0; model.conv1.weights.len()];
            let mut db = vec![0.0; model.conv1.bias.len()];
            model.conv1.backward(&cache.hpf_outs[i], &dconv1, &mut dw, &mut db);
            (dw, db)
        })
        .collect();
    let mut conv1_dw = vec![0.0; model.conv1.weights.len()];
    let mut conv1_db = vec![0.0; model.conv1.bias.len()];
    for (dw, db) in stage1 {
        add_into(&mut conv1_dw, &dw);
        add_into(&mut conv1_db, &db);
    }

    // Canonical order, matching CnnModel::param_slices.
    let mut flat = Vec::with_capacity(model.param_count());
    for grads in [
        conv1_dw, conv1_db, n1_gamma, n1_beta, conv2_dw, conv2_db, n2_gamma, n2_beta, conv3_dw,
        conv3_db, n3_gamma, n3_beta, head_dw, head_db,
    ] {
        flat.extend(grads);
    }
    flat
}

fn add_into(acc: &mut [f64], src: &[f64]) {
    for (a, s) in acc.iter_mut().zip(src) {
        *a += s;
    }
}

// Replaces the EMA running statistics with exact population statistics over
// `images`, layer by layer: each group's statistics are computed with the
// earlier groups already normalized by their final statistics.
pub(super) fn calibrate_norm_stats(model: &mut CnnModel, images: &[&GrayImage]) {
    let hpf = hpf_kernel();
    let planes: Vec<Tensor> = images
        .iter()
        .map(|img| model.plane_from_values(&img.to_f64()))
        .collect();

    let abs_outs: Vec<Tensor> = planes
        .par_iter()
        .map(|plane| {
            let hpf_out = fixed_conv_forward(plane, &hpf, 5);
            abs_forward(&model.conv1.forward(&hpf_out))
        })
        .collect();
    let (mean1, var1) = population_stats(&abs_outs, model.norm1.channels);
    model.norm1.running_mean = mean1;
    model.norm1.running_var = var1;

    let conv2_outs: Vec<Tensor> = abs_outs
        .par_iter()
        .map(|t| {
            let (n, _) = model.norm1.forward_inference(t);
            model.conv2.forward(&avg_pool_forward(&tanh_forward(&n)))
        })
        .collect();
    drop(abs_outs);
    let (mean2, var2) = population_stats(&conv2_outs, model.norm2.channels);
    model.norm2.running_mean = mean2;
    model.norm2.running_var = var2;

    let conv3_outs: Vec<Tensor> = conv2_outs
        .par_iter()
        .map(|t| {
            let (n, _) = model.norm2.forward_inference(t);
            model.conv3.forward(&avg_pool_forward(&tanh_forward(&n)))
        })
        .collect();
    drop(conv2_outs);
    let (mean3, var3) = population_stats(&conv3_outs, model.norm3.channels);
    model.norm3.running_mean = mean3;
    model.norm3.running_var = var3;
}

fn population_stats(tensors: &[Tensor], channels: usize) -> (Vec<f64>, Vec<f64>) {
    let count = (tensors.len() * tensors[0].height * tensors[0].width) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for c in 0..channels {
        let mut acc = 0.0;
        for t in tensors {
            acc += t.channel(c).iter().sum::<f64>();
        }
        mean[c] = acc / count;
        let mut acc2 = 0.0;
        for t in tensors {
            acc2 += t.channel(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
        }
        var[c] = acc2 / count;
    }
    (mean, var)
}
