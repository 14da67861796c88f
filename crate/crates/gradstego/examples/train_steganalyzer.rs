//! Train the CNN steganalyzer on a small synthetic corpus and report how well
//! it separates covers from plain stegos on held-out images.
//!
//! Run with: `cargo run --release --example train_steganalyzer`

use gradstego::adversarial::{generate_plain_stego, CodeParams};
use gradstego::cnn::{train, TrainConfig};
use gradstego::distortion::CostProfile;
use gradstego::harness::{classify, evaluate_detection, split_covers, synthesize_corpus, DatasetSpec};
use gradstego::image::GrayImage;
use gradstego::stc::BitVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> gradstego::Result<()> {
    let dataset = DatasetSpec {
        corpus_size: 200,
        image_size: 64,
        split_seed: 11,
        ..DatasetSpec::default()
    };
    let covers = synthesize_corpus(&dataset)?;
    let (train_idx, test_idx) = split_covers(covers.len(), 0.5, dataset.split_seed);

    let alpha = 0.4;
    let params = CodeParams::new(alpha);
    let profile = CostProfile::hill();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let l = params.message_len(dataset.image_size * dataset.image_size);
    let mut stego_for = |cover: &GrayImage| -> gradstego::Result<GrayImage> {
        let message = BitVector::from_bits((0..l).map(|_| rng.gen_range(0..2)).collect())?;
        generate_plain_stego(cover, &message, &profile, &params, rng.gen())
    };

    let pairs: Vec<(GrayImage, GrayImage)> = train_idx
        .iter()
        .map(|&i| Ok((covers[i].clone(), stego_for(&covers[i])?)))
        .collect::<gradstego::Result<_>>()?;

    let config = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    println!(
        "training on {} pairs at alpha={alpha} ({} epochs)...",
        pairs.len(),
        config.epochs
    );
    let output = train(&config, &pairs)?;
    println!(
        "cross-entropy per epoch: first {:.3}, last {:.3}",
        output.epoch_losses.first().unwrap(),
        output.epoch_losses.last().unwrap()
    );

    let test_covers: Vec<GrayImage> = test_idx.iter().map(|&i| covers[i].clone()).collect();
    let test_stegos: Vec<GrayImage> = test_idx
        .iter()
        .map(|&i| stego_for(&covers[i]))
        .collect::<gradstego::Result<_>>()?;
    let metrics = evaluate_detection(
        |img| classify(&output.model, img),
        &test_covers,
        &test_stegos,
    );
    println!(
        "held-out detection: P_FA={:.3} P_MD={:.3} P_E={:.3} (0.5 would be guessing)",
        metrics.p_fa, metrics.p_md, metrics.p_e
    );

    let out_dir = std::env::temp_dir().join("gradstego-examples");
    std::fs::create_dir_all(&out_dir)?;
    let model_path = out_dir.join("steganalyzer.bin");
    output.model.save(&model_path)?;
    println!("model saved to {}", model_path.display());
    Ok(())
}
