//! Compute HILL and S-UNIWARD cost maps for a synthetic cover and dump them
//! as heat images (dark = cheap to modify, bright = expensive, white = wet).
//!
//! Run with: `cargo run --release --example cost_maps`

use gradstego::distortion::{compute_cost, CostProfile, WET_COST};
use gradstego::harness::{synthesize_corpus, DatasetSpec};
use gradstego::image::save_pgm;

fn main() -> gradstego::Result<()> {
    let out_dir = std::env::temp_dir().join("gradstego-examples");
    std::fs::create_dir_all(&out_dir)?;

    let covers = synthesize_corpus(&DatasetSpec {
        corpus_size: 20,
        image_size: 64,
        split_seed: 42,
        ..DatasetSpec::default()
    })?;
    let cover = &covers[0];
    save_pgm(cover, out_dir.join("cover.pgm"))?;

    for profile in [CostProfile::hill(), CostProfile::suniward()] {
        let map = compute_cost(cover, &profile)?;
        let non_wet: Vec<f64> = map
            .costs()
            .iter()
            .copied()
            .filter(|&c| c < WET_COST)
            .collect();
        let lo = non_wet.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = non_wet.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let wet = map.costs().len() - non_wet.len();
        println!(
            "{:<8}  cost range [{lo:.4}, {hi:.4}]  wet pixels: {wet}",
            format!("{}:", profile.algorithm),
        );

        let name = format!("costs_{}.pgm", profile.algorithm);
        save_pgm(&map.to_heat_pgm(), out_dir.join(&name))?;
    }

    println!("wrote cover.pgm, costs_hill.pgm, costs_suniward.pgm to {}", out_dir.display());
    Ok(())
}
