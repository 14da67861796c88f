//! Inspect the steganalyzer's input gradient: the per-pixel direction that
//! raises the cover probability. The sign map of this gradient is what the
//! adversarial embedder feeds into step 3.
//!
//! Run with: `cargo run --release --example gradient_signs`

use gradstego::cnn::{sign_map, CnnModel, Label};
use gradstego::harness::{synthesize_corpus, DatasetSpec};
use gradstego::image::save_pgm;

fn main() -> gradstego::Result<()> {
    let covers = synthesize_corpus(&DatasetSpec {
        corpus_size: 20,
        image_size: 64,
        split_seed: 5,
        ..DatasetSpec::default()
    })?;
    let cover = &covers[3];
    let model = CnnModel::new(64, 1234)?;

    let (p_c, p_s) = model.forward(cover)?;
    println!("fresh model verdict: p_cover={p_c:.4}, p_stego={p_s:.4} (sum {:.1e} from 1)",
        (p_c + p_s - 1.0).abs());

    // Gradient of the cover probability, label forced to cover.
    let toward_cover = model.input_gradient(cover, Label::Cover)?;
    let toward_stego = model.input_gradient(cover, Label::Stego)?;
    let max_abs = toward_cover.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let opposition = toward_cover
        .values()
        .iter()
        .zip(toward_stego.values())
        .map(|(a, b)| (a + b).abs())
        .fold(0.0, f64::max);
    println!("gradient magnitude: max |dp_c/dx| = {max_abs:.3e}");
    println!("opposite-direction residual: max |∇p_c + ∇p_s| = {opposition:.3e}");

    let signs = sign_map(&toward_cover);
    let positive = signs.signs().iter().filter(|&&s| s > 0).count();
    println!(
        "sign map: {positive} of {} pixels push up (+1), rest push down (−1)",
        signs.signs().len()
    );

    let out_dir = std::env::temp_dir().join("gradstego-examples");
    std::fs::create_dir_all(&out_dir)?;
    let path = out_dir.join("gradient_signs.pgm");
    save_pgm(&signs.to_pgm(), &path)?;
    println!("sign map written to {} (black = −1, white = +1)", path.display());
    Ok(())
}
