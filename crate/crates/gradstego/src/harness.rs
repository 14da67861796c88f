//! Dataset synthesis, per-rate train/test orchestration, and detection-error
//! reporting.
//!
//! For every payload rate the protocol: (1) splits the covers into disjoint
//! train/test halves, (2) builds plain stegos for the training half and
//! trains one steganalyzer on those pairs, (3) builds two paired test sets
//! from the held-out half — cover/plain-stego and cover/adversarial-stego,
//! the adversarial images generated against the very model under test —
//! and (4) reports the average detection error `(P_FA + P_MD) / 2` for both
//! sets. An error of 0.5 means the detector is guessing, which is the
//! embedder's ideal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversarial::{generate_adversarial_stego, generate_plain_stego, CodeParams};
use crate::cnn::{train, CnnModel, Label, TrainConfig};
use crate::distortion::{CostAlgorithm, CostProfile};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::stc::{message_len_for_rate, BitVector};

/// Default payload-rate sweep of the benchmark.
pub const DEFAULT_PAYLOAD_RATES: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.4];

/// Corpus geometry and split policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub corpus_size: usize,
    /// Square image side in pixels.
    pub image_size: usize,
    #[serde(default = "default_rates")]
    pub payload_rates: Vec<f64>,
    pub split_seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_rates() -> Vec<f64> {
    DEFAULT_PAYLOAD_RATES.to_vec()
}

fn default_train_fraction() -> f64 {
    0.5
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            corpus_size: 500,
            image_size: 64,
            payload_rates: default_rates(),
            split_seed: 7,
            train_fraction: 0.5,
        }
    }
}

impl DatasetSpec {
    fn validate(&self) -> Result<()> {
        if self.corpus_size < 20 {
            return Err(Error::InvalidArgument(format!(
                "corpus must hold at least 20 images, got {}",
                self.corpus_size
            )));
        }
        if self.image_size < 8 || !self.image_size.is_multiple_of(4) {
            return Err(Error::InvalidArgument(format!(
                "image size must be >= 8 and divisible by 4, got {}",
                self.image_size
            )));
        }
        if self.payload_rates.is_empty()
            || self
                .payload_rates
                .iter()
                .any(|&a| a.is_nan() || a <= 0.0 || a > 0.5)
        {
            return Err(Error::InvalidArgument(
                "payload rates must lie in (0, 0.5]".into(),
            ));
        }
        if self.train_fraction.is_nan() || self.train_fraction <= 0.0 || self.train_fraction >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Training hyperparameters as they appear in the evaluation spec JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainParams {
    pub fn to_config(self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            momentum: self.momentum,
            batch_size: self.batch,
            epochs: self.epochs,
            seed: self.seed,
            norm_momentum: 0.1,
        }
    }
}

impl Default for TrainParams {
    fn default() -> Self {
        let config = TrainConfig::default();
        Self {
            lr: config.learning_rate,
            momentum: config.momentum,
            batch: config.batch_size,
            epochs: config.epochs,
            seed: config.seed,
        }
    }
}

/// Full evaluation request: dataset, training, and the cost algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSpec {
    #[serde(flatten)]
    pub dataset: DatasetSpec,
    pub train: TrainParams,
    pub algo: CostAlgorithm,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            train: TrainParams::default(),
            algo: CostAlgorithm::Hill,
        }
    }
}

// Splitmix-style seed derivation so every image/rate gets an independent
// deterministic stream.
fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Synthesizes a deterministic cover corpus: a smooth base gradient plus a
/// low-frequency wave, band-limited noise patches, and one or two saturated
/// strips so wet pixels always exist.
pub fn synthesize_corpus(spec: &DatasetSpec) -> Result<Vec<GrayImage>> {
    spec.validate()?;
    let side = spec.image_size;
    let images = (0..spec.corpus_size)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.split_seed, 1, i as u64));
            let base = rng.gen_range(70.0..190.0);
            let gx = rng.gen_range(-1.0..1.0);
            let gy = rng.gen_range(-1.0..1.0);
            let wave_amp = rng.gen_range(0.0..18.0);
            let wave_period = rng.gen_range(10.0..40.0);
            let wave_phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let mut plane = vec![0.0f64; side * side];
            for r in 0..side {
                for c in 0..side {
                    plane[r * side + c] = base
                        + gx * c as f64
                        + gy * r as f64
                        + wave_amp
                            * ((c as f64 + 2.0 * r as f64) / wave_period * std::f64::consts::TAU
                                + wave_phase)
                                .sin();
                }
            }

            // Textured patches: uniform noise band-limited by a 3x3 box blur.
            for _ in 0..rng.gen_range(1..=3) {
                let pw = rng.gen_range(side / 6..=side / 2);
                let ph = rng.gen_range(side / 6..=side / 2);
                let r0 = rng.gen_range(0..side - ph);
                let c0 = rng.gen_range(0..side - pw);
                let amp = rng.gen_range(8.0..56.0);
                let mut noise = vec![0.0f64; pw * ph];
                for v in &mut noise {
                    *v = rng.gen_range(-amp..amp);
                }
                for r in 0..ph {
                    for c in 0..pw {
                        let mut acc = 0.0;
                        let mut count = 0.0;
                        for dr in -1i64..=1 {
                            for dc in -1i64..=1 {
                                let rr = r as i64 + dr;
                                let cc = c as i64 + dc;
                                if rr >= 0 && rr < ph as i64 && cc >= 0 && cc < pw as i64 {
                                    acc += noise[rr as usize * pw + cc as usize];
                                    count += 1.0;
                                }
                            }
                        }
                        plane[(r0 + r) * side + c0 + c] += acc / count;
                    }
                }
            }

            // Saturated strips: hard 0 or 255 rows/columns (the wet pixels).
            for _ in 0..rng.gen_range(1..=2) {
                let value = if rng.gen_bool(0.5) { 0.0 } else { 255.0 };
                let thickness = rng.gen_range(1..=2);
                if rng.gen_bool(0.5) {
                    let r0 = rng.gen_range(0..side - thickness);
                    for r in r0..r0 + thickness {
                        for c in 0..side {
                            plane[r * side + c] = value;
                        }
                    }
                } else {
                    let c0 = rng.gen_range(0..side - thickness);
                    for c in c0..c0 + thickness {
                        for r in 0..side {
                            plane[r * side + c] = value;
                        }
                    }
                }
            }

            GrayImage::from_fn(side, side, |r, c| {
                plane[r * side + c].round().clamp(0.0, 255.0) as u8
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(images)
}

/// Disjoint train/test cover indices drawn from the split seed.
pub fn split_covers(count: usize, train_fraction: f64, split_seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(split_seed, 0, 0));
    order.shuffle(&mut rng);
    let train_len = ((count as f64) * train_fraction).round() as usize;
    let train_len = train_len.clamp(1, count - 1);
    let train = order[..train_len].to_vec();
    let test = order[train_len..].to_vec();
    (train, test)
}

/// Detection metrics of one classifier against one cover/stego test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub false_alarms: usize,
    pub missed_detections: usize,
    pub n_cover: usize,
    pub n_stego: usize,
    pub p_fa: f64,
    pub p_md: f64,
    pub p_e: f64,
}

/// Scores a classifier on paired cover/stego sets; `P̄_E = (P_FA + P_MD)/2`.
pub fn evaluate_detection<F>(classify: F, covers: &[GrayImage], stegos: &[GrayImage]) -> SetMetrics
where
    F: Fn(&GrayImage) -> Label + Sync,
{
    let false_alarms = covers
        .par_iter()
        .map(|img| usize::from(classify(img) == Label::Stego))
        .sum();
    let missed_detections = stegos
        .par_iter()
        .map(|img| usize::from(classify(img) == Label::Cover))
        .sum();
    let p_fa = false_alarms as f64 / covers.len() as f64;
    let p_md = missed_detections as f64 / stegos.len() as f64;
    SetMetrics {
        false_alarms,
        missed_detections,
        n_cover: covers.len(),
        n_stego: stegos.len(),
        p_fa,
        p_md,
        p_e: (p_fa + p_md) / 2.0,
    }
}

/// Classification rule used throughout: cover wins ties at `p_c = 0.5`.
pub fn classify(model: &CnnModel, img: &GrayImage) -> Label {
    let (p_c, _) = model.forward(img).expect("evaluation images match the model");
    if p_c >= 0.5 {
        Label::Cover
    } else {
        Label::Stego
    }
}

/// Results for one payload rate: the same detector scored against the plain
/// stego set and the adversarial set built on identical covers and messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub alpha: f64,
    /// Hex digest prefix identifying the per-rate trained model.
    pub model_id: String,
    pub stego: SetMetrics,
    pub adversarial: SetMetrics,
}

/// Full protocol output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub algo: CostAlgorithm,
    pub split_seed: u64,
    pub train_seed: u64,
    pub rates: Vec<RateReport>,
}

fn check_covers(covers: &[GrayImage]) -> Result<usize> {
    if covers.len() < 20 {
        return Err(Error::InvalidArgument(format!(
            "need at least 20 covers, got {}",
            covers.len()
        )));
    }
    let side = covers[0].width();
    for img in covers {
        if img.width() != side || img.height() != side {
            return Err(Error::InvalidArgument(
                "all covers must share one square shape".into(),
            ));
        }
    }
    Ok(side)
}

/// The seeded per-image message for payload-rate slot `rate_no`.
pub fn protocol_message(
    spec: &EvaluationSpec,
    cover_index: usize,
    rate_no: usize,
    l: usize,
) -> BitVector {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        spec.dataset.split_seed,
        2 + rate_no as u64,
        cover_index as u64,
    ));
    BitVector::from_bits((0..l).map(|_| rng.gen_range(0..2u8)).collect()).expect("bits are 0/1")
}

/// The seeded coin-direction stream for one cover at one rate slot.
pub fn protocol_direction_seed(spec: &EvaluationSpec, cover_index: usize, rate_no: usize) -> u64 {
    derive_seed(spec.dataset.split_seed, 100 + rate_no as u64, cover_index as u64)
}

/// Trains the steganalyzer for payload-rate slot `rate_no` of the spec:
/// plain stegos over the training half of the covers, one fresh model.
/// `run_protocol` goes through this, so a model trained standalone is
/// byte-identical to the one scored in the report.
pub fn train_rate_model(
    spec: &EvaluationSpec,
    covers: &[GrayImage],
    rate_no: usize,
) -> Result<CnnModel> {
    spec.dataset.validate()?;
    let side = check_covers(covers)?;
    let alpha = *spec
        .dataset
        .payload_rates
        .get(rate_no)
        .ok_or_else(|| Error::InvalidArgument(format!("no payload rate slot {rate_no}")))?;
    let params = CodeParams {
        alpha,
        ..CodeParams::new(alpha)
    };
    let l = message_len_for_rate(side * side, alpha);
    let profile = CostProfile::for_algorithm(spec.algo);
    let (train_idx, _) =
        split_covers(covers.len(), spec.dataset.train_fraction, spec.dataset.split_seed);

    let pairs: Vec<(GrayImage, GrayImage)> = train_idx
        .par_iter()
        .map(|&i| {
            let stego = generate_plain_stego(
                &covers[i],
                &protocol_message(spec, i, rate_no, l),
                &profile,
                &params,
                protocol_direction_seed(spec, i, rate_no),
            )?;
            Ok((covers[i].clone(), stego))
        })
        .collect::<Result<_>>()?;

    let mut config = spec.train.to_config();
    config.seed = derive_seed(spec.train.seed, 200 + rate_no as u64, 0);
    let trained = train(&config, &pairs)
        .map_err(|e| Error::Numeric(format!("training failed at alpha={alpha}: {e}")))?;
    Ok(trained.model)
}

/// Runs the full per-rate protocol on the given covers.
pub fn run_protocol(spec: &EvaluationSpec, covers: &[GrayImage]) -> Result<DetectionReport> {
    spec.dataset.validate()?;
    let side = check_covers(covers)?;
    let n_pixels = side * side;
    let profile = CostProfile::for_algorithm(spec.algo);
    let (_, test_idx) =
        split_covers(covers.len(), spec.dataset.train_fraction, spec.dataset.split_seed);

    let mut rates = Vec::with_capacity(spec.dataset.payload_rates.len());
    for (rate_no, &alpha) in spec.dataset.payload_rates.iter().enumerate() {
        let params = CodeParams {
            alpha,
            ..CodeParams::new(alpha)
        };
        let l = message_len_for_rate(n_pixels, alpha);
        let model = train_rate_model(spec, covers, rate_no)?;
        let model_id = hex::encode(&Sha256::digest(model.to_bytes())[..6]);

        // Paired test sets over the held-out half: identical covers and
        // messages; only the flip directions differ.
        let test_covers: Vec<GrayImage> = test_idx.iter().map(|&i| covers[i].clone()).collect();
        let plain_stegos: Vec<GrayImage> = test_idx
            .par_iter()
            .map(|&i| {
                generate_plain_stego(
                    &covers[i],
                    &protocol_message(spec, i, rate_no, l),
                    &profile,
                    &params,
                    protocol_direction_seed(spec, i, rate_no),
                )
            })
            .collect::<Result<_>>()?;
        let adversarial_stegos: Vec<GrayImage> = test_idx
            .par_iter()
            .map(|&i| {
                generate_adversarial_stego(
                    &covers[i],
                    &protocol_message(spec, i, rate_no, l),
                    &model,
                    &profile,
                    &params,
                )
                .map(|(img, _)| img)
            })
            .collect::<Result<_>>()?;

        let stego_metrics =
            evaluate_detection(|img| classify(&model, img), &test_covers, &plain_stegos);
        let adversarial_metrics =
            evaluate_detection(|img| classify(&model, img), &test_covers, &adversarial_stegos);

        rates.push(RateReport {
            alpha,
            model_id,
            stego: stego_metrics,
            adversarial: adversarial_metrics,
        });
    }

    Ok(DetectionReport {
        algo: spec.algo,
        split_seed: spec.dataset.split_seed,
        train_seed: spec.train.seed,
        rates,
    })
}

/// Synthesizes the corpus from the spec and runs the protocol on it.
pub fn run_evaluation(spec: &EvaluationSpec) -> Result<DetectionReport> {
    let covers = synthesize_corpus(&spec.dataset)?;
    run_protocol(spec, &covers)
}

/// CSV rendering: header `algo,alpha,set,p_fa,p_md,p_e,n_cover,n_stego,seed`,
/// rows ordered by (algo, alpha, set), six-decimal rates. The seed column
/// carries the split seed.
pub fn report_to_csv(report: &DetectionReport) -> String {
    let mut rows: Vec<(String, String, &SetMetrics)> = Vec::new();
    for rate in &report.rates {
        rows.push((format!("{:.6}", rate.alpha), "adversarial".into(), &rate.adversarial));
        rows.push((format!("{:.6}", rate.alpha), "stego".into(), &rate.stego));
    }
    rows.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    let mut out = String::from("algo,alpha,set,p_fa,p_md,p_e,n_cover,n_stego,seed\n");
    for (alpha, set, m) in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{},{},{}\n",
            report.algo, alpha, set, m.p_fa, m.p_md, m.p_e, m.n_cover, m.n_stego, report.split_seed
        ));
    }
    out
}

/// Writes the CSV report.
pub fn emit_report(report: &DetectionReport, path: impl AsRef<std::path::Path>) -> Result<()> {
    std::fs::write(path, report_to_csv(report))?;
    Ok(())
}
