//! Three-step adversarial stego generation.
//!
//! 1. Back-propagate the steganalyzer on the cover with the output label
//!    forced to cover, giving the gradient sign of the cover probability for
//!    every pixel.
//! 2. Run the single-layered syndrome-trellis embedder on the cover LSBs and
//!    the distortion map to pick the modification positions.
//! 3. Apply each ±1 flip in the direction of its gradient sign; saturated
//!    pixels are forced (0 → +1, 255 → −1).
//!
//! Both +1 and −1 toggle the LSB, so step 3 cannot break extraction: the
//! gradient only claims the direction degree of freedom that plain embedding
//! resolves with a coin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cnn::{sign_map, CnnModel, Label, SignMap};
use crate::distortion::{compute_cost, flatten_costs, CostProfile};
use crate::error::{Error, Result};
use crate::image::{apply_flips, FlipDirection, GrayImage, PixelFlip};
use crate::stc::{
    build_code, lsb_vector, message_len_for_rate, stc_embed, stc_extract, BitVector, StcCode,
    DEFAULT_CONSTRAINT_HEIGHT,
};

/// Code geometry shared by embedder and extractor. The payload-rate-to-
/// message-length mapping lives here so the two sides can never disagree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    /// Payload rate α in bits per pixel.
    pub alpha: f64,
    /// Constraint height of the trellis.
    pub height: u32,
    /// Seed for the sub-matrix columns.
    pub seed: u64,
}

impl CodeParams {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            height: DEFAULT_CONSTRAINT_HEIGHT,
            seed: 1,
        }
    }

    /// Message length for a cover of `n` pixels.
    pub fn message_len(&self, n: usize) -> usize {
        message_len_for_rate(n, self.alpha)
    }

    pub fn build(&self, n: usize) -> Result<StcCode> {
        build_code(n, self.message_len(n), self.height, self.seed)
    }
}

/// Audit record of one adversarial embedding: which pixels moved, in which
/// direction, and a digest of the message they carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialPlan {
    /// Flipped pixel indices, row-major ascending.
    pub positions: Vec<usize>,
    /// Direction per flipped position (+1 or −1), after the wet override.
    pub directions: Vec<i8>,
    /// Payload rate α the code was built for.
    pub payload_rate: f64,
    /// Hex SHA-256 of the embedded message bits packed MSB-first.
    pub message_digest: String,
}

impl AdversarialPlan {
    pub fn flip_count(&self) -> usize {
        self.positions.len()
    }
}

/// Digest used in plans and reports: message bits packed MSB-first, hashed.
pub fn message_digest(message: &BitVector) -> String {
    hex::encode(Sha256::digest(message.to_bytes_msb()))
}

fn check_cover(cover: &GrayImage, message: &BitVector, params: &CodeParams) -> Result<()> {
    let n = cover.len();
    let expected = params.message_len(n);
    if message.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "message has {} bits but alpha={} on {n} pixels needs {expected}",
            message.len(),
            params.alpha
        )));
    }
    Ok(())
}

// Shared step 2: trellis embedding against the cost map.
fn select_positions(
    cover: &GrayImage,
    message: &BitVector,
    profile: &CostProfile,
    params: &CodeParams,
) -> Result<(Vec<usize>, StcCode)> {
    let costs = compute_cost(cover, profile)?;
    let rho: Vec<f64> = flatten_costs(&costs).into_iter().map(|(_, c)| c).collect();
    let code = params.build(cover.len())?;
    let embedding = stc_embed(&lsb_vector(cover), message, &rho, &code)?;
    let positions = embedding
        .flip_pattern
        .bits()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 1)
        .map(|(i, _)| i)
        .collect();
    Ok((positions, code))
}

// Step 3 direction rule: saturated pixels are forced, everything else
// follows the supplied chooser.
fn direction_for(pixel: u8, free_choice: impl FnOnce() -> FlipDirection) -> FlipDirection {
    match pixel {
        0 => FlipDirection::Plus,
        255 => FlipDirection::Minus,
        _ => free_choice(),
    }
}

/// Generates the adversarial stego image for a cover and message, steering
/// every free flip by the sign of the model's cover-probability gradient.
pub fn generate_adversarial_stego(
    cover: &GrayImage,
    message: &BitVector,
    model: &CnnModel,
    profile: &CostProfile,
    params: &CodeParams,
) -> Result<(GrayImage, AdversarialPlan)> {
    check_cover(cover, message, params)?;
    // Step 1: gradient feature map of the cover, label forced to cover.
    let gradient = model.input_gradient(cover, Label::Cover)?;
    let signs = sign_map(&gradient);
    // Step 2: modification positions from the cost-minimizing code.
    let (positions, _) = select_positions(cover, message, profile, params)?;
    // Step 3: signed ±1 application.
    let (stego, directions) = apply_directed_flips(cover, &positions, |row, col| {
        if signs.sign(row, col) >= 0 {
            FlipDirection::Plus
        } else {
            FlipDirection::Minus
        }
    })?;
    let plan = AdversarialPlan {
        positions,
        directions,
        payload_rate: params.alpha,
        message_digest: message_digest(message),
    };
    Ok((stego, plan))
}

/// Baseline embedding: identical position selection, but free directions come
/// from a seeded coin instead of the gradient.
pub fn generate_plain_stego(
    cover: &GrayImage,
    message: &BitVector,
    profile: &CostProfile,
    params: &CodeParams,
    direction_seed: u64,
) -> Result<GrayImage> {
    check_cover(cover, message, params)?;
    let (positions, _) = select_positions(cover, message, profile, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(direction_seed);
    let (stego, _) = apply_directed_flips(cover, &positions, |_, _| {
        if rng.gen_bool(0.5) {
            FlipDirection::Plus
        } else {
            FlipDirection::Minus
        }
    })?;
    Ok(stego)
}

fn apply_directed_flips(
    cover: &GrayImage,
    positions: &[usize],
    mut free_choice: impl FnMut(usize, usize) -> FlipDirection,
) -> Result<(GrayImage, Vec<i8>)> {
    let width = cover.width();
    let mut flips = Vec::with_capacity(positions.len());
    let mut directions = Vec::with_capacity(positions.len());
    for &idx in positions {
        let (row, col) = (idx / width, idx % width);
        let direction = direction_for(cover.pixel(row, col), || free_choice(row, col));
        directions.push(direction.delta() as i8);
        flips.push(PixelFlip { row, col, direction });
    }
    let stego = apply_flips(cover, &flips)?;
    Ok((stego, directions))
}

/// Recovers the message bits from a stego image's LSBs.
pub fn extract_message(stego: &GrayImage, params: &CodeParams) -> Result<BitVector> {
    let code = params.build(stego.len())?;
    stc_extract(&lsb_vector(stego), &code)
}

/// Cover probabilities reported by [`attack_delta`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackDelta {
    pub p_cover: f64,
    pub p_stego: f64,
    pub p_adversarial: f64,
}

/// Diagnostic: the model's cover probability for the cover, the plain stego,
/// and the adversarial stego.
pub fn attack_delta(
    model: &CnnModel,
    cover: &GrayImage,
    stego: &GrayImage,
    adversarial: &GrayImage,
) -> Result<AttackDelta> {
    Ok(AttackDelta {
        p_cover: model.forward(cover)?.0,
        p_stego: model.forward(stego)?.0,
        p_adversarial: model.forward(adversarial)?.0,
    })
}

/// Restriction of a sign map to chosen positions with the wet override
/// applied; this is the direction rule in one callable piece for tests and
/// diagnostics.
pub fn planned_direction(cover: &GrayImage, signs: &SignMap, row: usize, col: usize) -> i8 {
    match cover.pixel(row, col) {
        0 => 1,
        255 => -1,
        _ => signs.sign(row, col),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cover(rng: &mut ChaCha8Rng, side: usize) -> GrayImage {
        GrayImage::from_fn(side, side, |_, _| rng.gen_range(1..255)).unwrap()
    }

    fn random_message(rng: &mut ChaCha8Rng, len: usize) -> BitVector {
        BitVector::from_bits((0..len).map(|_| rng.gen_range(0..2u8)).collect()).unwrap()
    }

    #[test]
    fn satisfied_single_bit_message_leaves_cover_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let cover = random_cover(&mut rng, 16);
        let params = CodeParams::new(1.0 / 256.0);
        assert_eq!(params.message_len(cover.len()), 1);
        // Message chosen to already satisfy the syndrome.
        let message = extract_message(&cover, &params).unwrap();
        let model = CnnModel::new(16, 2).unwrap();
        let profile = CostProfile::hill();
        let (stego, plan) =
            generate_adversarial_stego(&cover, &message, &model, &profile, &params).unwrap();
        assert_eq!(stego, cover);
        assert_eq!(plan.flip_count(), 0);
    }

    #[test]
    fn saturated_cover_flips_move_inward_regardless_of_gradient() {
        let cover = GrayImage::new(16, 16, vec![255; 256]).unwrap();
        let params = CodeParams::new(0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        let message = random_message(&mut rng, params.message_len(256));
        let model = CnnModel::new(16, 3).unwrap();
        let (stego, plan) =
            generate_adversarial_stego(&cover, &message, &model, &CostProfile::hill(), &params)
                .unwrap();
        assert!(plan.flip_count() > 0);
        for (&idx, &dir) in plan.positions.iter().zip(&plan.directions) {
            assert_eq!(dir, -1);
            assert_eq!(stego.pixels()[idx], 254);
        }
        assert_eq!(extract_message(&stego, &params).unwrap(), message);
    }

    #[test]
    fn adversarial_embedding_round_trips_and_follows_the_sign_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let model = CnnModel::new(32, 4).unwrap();
        let params = CodeParams::new(0.4);
        let profile = CostProfile::hill();
        for _ in 0..5 {
            let cover = random_cover(&mut rng, 32);
            let message = random_message(&mut rng, params.message_len(cover.len()));
            let (stego, plan) =
                generate_adversarial_stego(&cover, &message, &model, &profile, &params).unwrap();

            assert_eq!(extract_message(&stego, &params).unwrap(), message);

            // Recompute the expected directions independently.
            let signs = sign_map(&model.input_gradient(&cover, Label::Cover).unwrap());
            for (&idx, &dir) in plan.positions.iter().zip(&plan.directions) {
                let (row, col) = (idx / 32, idx % 32);
                assert_eq!(dir, planned_direction(&cover, &signs, row, col));
                let delta = i16::from(stego.pixels()[idx]) - i16::from(cover.pixels()[idx]);
                assert_eq!(delta, i16::from(dir));
            }
            // Untouched everywhere else.
            let mut expected_diffs = plan.positions.clone();
            expected_diffs.sort_unstable();
            let actual_diffs: Vec<usize> = cover
                .pixels()
                .iter()
                .zip(stego.pixels())
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(actual_diffs, expected_diffs);
        }
    }

    #[test]
    fn plain_and_adversarial_flip_identical_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(84);
        let model = CnnModel::new(16, 5).unwrap();
        let params = CodeParams::new(0.3);
        let profile = CostProfile::suniward();
        for _ in 0..10 {
            let cover = random_cover(&mut rng, 16);
            let message = random_message(&mut rng, params.message_len(cover.len()));
            let (adv, plan) =
                generate_adversarial_stego(&cover, &message, &model, &profile, &params).unwrap();
            let plain =
                generate_plain_stego(&cover, &message, &profile, &params, rng.gen()).unwrap();

            let plain_positions: Vec<usize> = cover
                .pixels()
                .iter()
                .zip(plain.pixels())
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(plain_positions, plan.positions);
            assert_eq!(extract_message(&plain, &params).unwrap(), message);
            assert_eq!(extract_message(&adv, &params).unwrap(), message);
        }
    }

    #[test]
    fn plain_directions_are_a_fair_coin() {
        let mut rng = ChaCha8Rng::seed_from_u64(85);
        let params = CodeParams::new(0.4);
        let profile = CostProfile::hill();
        let mut plus = 0u64;
        let mut total = 0u64;
        let mut image_seed = 0u64;
        while total < 10_000 {
            image_seed += 1;
            let mut img_rng = ChaCha8Rng::seed_from_u64(image_seed);
            let cover = random_cover(&mut img_rng, 32);
            let message = random_message(&mut rng, params.message_len(cover.len()));
            let plain =
                generate_plain_stego(&cover, &message, &profile, &params, image_seed).unwrap();
            for (a, b) in cover.pixels().iter().zip(plain.pixels()) {
                if b > a {
                    plus += 1;
                    total += 1;
                } else if b < a {
                    total += 1;
                }
            }
        }
        let ratio = plus as f64 / total as f64;
        assert!((ratio - 0.5).abs() <= 0.02, "direction ratio {ratio}");
    }

    #[test]
    fn attack_delta_is_pure_and_degenerate_on_equal_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(86);
        let model = CnnModel::new(16, 6).unwrap();
        let cover = random_cover(&mut rng, 16);
        let stego = random_cover(&mut rng, 16);
        let delta = attack_delta(&model, &cover, &stego, &stego).unwrap();
        assert_eq!(delta.p_stego, delta.p_adversarial);
        let again = attack_delta(&model, &cover, &stego, &stego).unwrap();
        assert_eq!(delta.p_cover, again.p_cover);
    }

    #[test]
    fn oversized_payload_is_a_payload_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(87);
        let cover = random_cover(&mut rng, 16);
        let params = CodeParams::new(0.6);
        let message = random_message(&mut rng, params.message_len(cover.len()));
        let model = CnnModel::new(16, 0).unwrap();
        let result =
            generate_adversarial_stego(&cover, &message, &model, &CostProfile::hill(), &params);
        assert!(matches!(result, Err(Error::Payload(_))));
    }

    #[test]
    fn plan_serializes_with_digest() {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let cover = random_cover(&mut rng, 16);
        let params = CodeParams::new(0.2);
        let message = random_message(&mut rng, params.message_len(cover.len()));
        let model = CnnModel::new(16, 1).unwrap();
        let (_, plan) =
            generate_adversarial_stego(&cover, &message, &model, &CostProfile::hill(), &params)
                .unwrap();
        assert_eq!(plan.message_digest.len(), 64);
        assert_eq!(plan.message_digest, message_digest(&message));
        let json = serde_json::to_string(&plan).unwrap();
        let back: AdversarialPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plan);
    }
}
