//! End-to-end acceptance suite. One test per criterion; each prints a
//! `acceptance N (<name>): PASS` line (visible with `--nocapture`) after its
//! assertions hold at the stated tolerance.
//!
//! Run with: `cargo test -p gradstego --test acceptance -- --nocapture`

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gradstego::adversarial::{
    extract_message, generate_adversarial_stego, generate_plain_stego, CodeParams,
};
use gradstego::cnn::{training_gradients, training_loss, CnnModel, Label};
use gradstego::distortion::{CostAlgorithm, CostProfile};
use gradstego::harness::{synthesize_corpus, DatasetSpec, EvaluationSpec, TrainParams};
use gradstego::image::{wet_mask, GrayImage};
use gradstego::stc::{brute_force_embed, build_code, stc_embed, BitVector};

fn random_bits(rng: &mut ChaCha8Rng, len: usize) -> BitVector {
    BitVector::from_bits((0..len).map(|_| rng.gen_range(0..2u8)).collect()).unwrap()
}

// Independent GF(2) syndrome check through the dense parity-check matrix.
fn dense_syndrome(y: &BitVector, code: &gradstego::stc::StcCode) -> BitVector {
    let matrix = code.dense_parity_matrix();
    BitVector::from_bits(
        matrix
            .iter()
            .map(|row| {
                row.iter()
                    .zip(y.bits())
                    .fold(0u8, |acc, (&h, &yi)| acc ^ (h & yi))
            })
            .collect(),
    )
    .unwrap()
}

/// Criterion 1: the trellis embedder is exactly optimal against exhaustive
/// search on 1,000 random instances (n ≤ 16, h ∈ {2,…,7}), and every result
/// satisfies the syndrome constraint. Budget: 30 s.
#[test]
fn acceptance_1_stc_optimality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0001);
    for trial in 0..1000 {
        let n = rng.gen_range(4..=16);
        let l = rng.gen_range(1..=n / 2);
        let h = rng.gen_range(2..=7);
        let code = build_code(n, l, h, rng.gen()).unwrap();
        let x = random_bits(&mut rng, n);
        let m = random_bits(&mut rng, l);
        let rho: Vec<f64> = (0..n).map(|_| rng.gen_range(f64::EPSILON..1.0)).collect();

        let trellis = stc_embed(&x, &m, &rho, &code).unwrap();
        let brute = brute_force_embed(&x, &m, &rho, &code).unwrap();
        assert_eq!(
            trellis.total_cost, brute.total_cost,
            "trial {trial}: trellis cost {} != exhaustive optimum {} (n={n}, l={l}, h={h})",
            trellis.total_cost, brute.total_cost
        );
        assert_eq!(dense_syndrome(&trellis.stego_lsb, &code), m, "trial {trial}: H*y != m");
        assert_eq!(dense_syndrome(&brute.stego_lsb, &code), m);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}, budget 30 s");
    println!("acceptance 1 (stc optimality, 1000 instances in {elapsed:?}): PASS");
}

/// Criterion 2: extraction recovers the message bit-exactly from both plain
/// and adversarial stegos, 1,000 random (cover, message) pairs at each of
/// α = 0.05 and α = 0.4.
#[test]
fn acceptance_2_round_trip() {
    let start = Instant::now();
    let side = 32;
    let corpus = synthesize_corpus(&DatasetSpec {
        corpus_size: 1000,
        image_size: side,
        payload_rates: vec![0.05, 0.4],
        split_seed: 0xACCE_0002,
        train_fraction: 0.5,
    })
    .unwrap();
    let model = CnnModel::new(side, 2).unwrap();
    let profile = CostProfile::hill();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
    for alpha in [0.05, 0.4] {
        let params = CodeParams::new(alpha);
        let l = params.message_len(side * side);
        for cover in &corpus {
            let message = random_bits(&mut rng, l);
            let plain = generate_plain_stego(cover, &message, &profile, &params, rng.gen()).unwrap();
            assert_eq!(
                extract_message(&plain, &params).unwrap(),
                message,
                "plain round trip failed at alpha={alpha}"
            );
            let (adversarial, _) =
                generate_adversarial_stego(cover, &message, &model, &profile, &params).unwrap();
            assert_eq!(
                extract_message(&adversarial, &params).unwrap(),
                message,
                "adversarial round trip failed at alpha={alpha}"
            );
        }
    }
    println!(
        "acceptance 2 (round trip, 1000 pairs x {{0.05, 0.4}} x {{plain, adversarial}} in {:?}): PASS",
        start.elapsed()
    );
}

/// Criterion 3: input gradients match a full-Jacobian central difference and
/// parameter gradients match central differences (relative error < 1e-4) on
/// 5 random model/image instances at 16×16; the probability identity holds to
/// 1e-12 and the opposite-gradient identity to 1e-9 on every pass. Budget:
/// 60 s.
#[test]
fn acceptance_3_gradient_correctness() {
    let start = Instant::now();
    let side = 16;
    let step = 1e-3;
    let tol = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0004);

    for instance in 0..5 {
        let model = CnnModel::new(side, 1000 + instance).unwrap();
        let img = GrayImage::from_fn(side, side, |_, _| rng.gen()).unwrap();
        let pixels = img.to_f64();

        // Probability identity p_c + p_s = 1.
        let (p_c, p_s) = model.forward(&img).unwrap();
        assert!((p_c + p_s - 1.0).abs() < 1e-12, "instance {instance}: |p_c+p_s-1| too large");

        // Opposite-direction identity on the full maps.
        let toward_cover = model.input_gradient(&img, Label::Cover).unwrap();
        let toward_stego = model.input_gradient(&img, Label::Stego).unwrap();
        let residual = toward_cover
            .values()
            .iter()
            .zip(toward_stego.values())
            .map(|(a, b)| (a + b).abs())
            .fold(0.0, f64::max);
        assert!(residual < 1e-9, "instance {instance}: gradient residual {residual}");

        // Full-Jacobian finite-difference sweep over every pixel.
        for idx in 0..pixels.len() {
            let mut plus = pixels.clone();
            plus[idx] += step;
            let mut minus = pixels.clone();
            minus[idx] -= step;
            let (pp, ps_p) = model.forward_values(&plus).unwrap();
            assert!((pp + ps_p - 1.0).abs() < 1e-12);
            let (pm, _) = model.forward_values(&minus).unwrap();
            let fd = (pp - pm) / (2.0 * step);
            let analytic = toward_cover.values()[idx];
            let scale = fd.abs().max(analytic.abs());
            assert!(
                (fd - analytic).abs() <= tol * scale + 1e-10,
                "instance {instance}, pixel {idx}: fd {fd} vs analytic {analytic}"
            );
        }

        // Parameter gradients in training mode against central differences.
        let cover = GrayImage::from_fn(side, side, |_, _| rng.gen()).unwrap();
        let stego = GrayImage::from_fn(side, side, |r, c| {
            let p = cover.pixel(r, c);
            if rng.gen_bool(0.2) {
                if p == 255 || (p > 0 && rng.gen_bool(0.5)) {
                    p - 1
                } else {
                    p + 1
                }
            } else {
                p
            }
        })
        .unwrap();
        let batch: Vec<(&GrayImage, Label)> = vec![
            (&cover, Label::Cover),
            (&stego, Label::Stego),
            (&img, Label::Cover),
            (&stego, Label::Stego),
        ];
        let (_, grads) = training_gradients(&model, &batch).unwrap();
        let n = model.param_count();
        let fd_step = 1e-4;
        for probe in 0..40 {
            let i = (probe * 7919 + instance as usize * 104729) % n;
            let mut plus = model.clone();
            plus.set_param(i, model.param(i) + fd_step);
            let mut minus = model.clone();
            minus.set_param(i, model.param(i) - fd_step);
            let fd = (training_loss(&plus, &batch).unwrap()
                - training_loss(&minus, &batch).unwrap())
                / (2.0 * fd_step);
            let analytic = grads[i];
            let scale = fd.abs().max(analytic.abs());
            assert!(
                (fd - analytic).abs() <= tol * scale + 1e-10,
                "instance {instance}, parameter {i}: fd {fd} vs analytic {analytic}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 60 s");
    println!("acceptance 3 (gradient correctness, 5 instances in {elapsed:?}): PASS");
}

fn default_desk_spec(train_seed: u64) -> EvaluationSpec {
    EvaluationSpec {
        dataset: DatasetSpec {
            corpus_size: 500,
            image_size: 64,
            payload_rates: vec![0.4],
            split_seed: 7,
            train_fraction: 0.5,
        },
        train: TrainParams {
            lr: 0.02,
            momentum: 0.9,
            batch: 32,
            epochs: 30,
            seed: train_seed,
        },
        algo: CostAlgorithm::Hill,
    }
}

/// Criterion 4: with the default desk-scale harness (500 covers, 64×64,
/// α = 0.4, HILL) the trained detector reaches P̄_E ≤ 0.40 on the plain test
/// set (and calls at least 70% of held-out covers cover) while the
/// adversarial set gains at least +0.10 of detection error. Three seeds; the
/// median run must pass, i.e. at least two of three.
#[test]
fn acceptance_4_attack_efficacy() {
    let start = Instant::now();
    let mut passes = 0;
    for train_seed in [1, 2, 3] {
        let spec = default_desk_spec(train_seed);
        let report = gradstego::harness::run_evaluation(&spec).unwrap();
        let rate = &report.rates[0];
        let delta = rate.adversarial.p_e - rate.stego.p_e;
        let ok = rate.stego.p_e <= 0.40 && delta >= 0.10 && rate.stego.p_fa <= 0.30;
        println!(
            "  seed {train_seed}: plain p_e={:.3} (p_fa={:.3}), adversarial p_e={:.3}, delta={delta:+.3} -> {}",
            rate.stego.p_e,
            rate.stego.p_fa,
            rate.adversarial.p_e,
            if ok { "pass" } else { "fail" }
        );
        passes += usize::from(ok);
    }
    assert!(passes >= 2, "only {passes}/3 seeds passed");
    println!(
        "acceptance 4 (attack efficacy, {passes}/3 seeds in {:?}): PASS",
        start.elapsed()
    );
}

/// Criterion 5: on a corpus with ≥ 1% wet pixels, every modified wet pixel
/// moves 0 → +1 or 255 → −1; zero violations across plain and adversarial
/// embeddings of the full test set.
#[test]
fn acceptance_5_wet_pixel_rule() {
    let start = Instant::now();
    let side = 64;
    let corpus = synthesize_corpus(&DatasetSpec {
        corpus_size: 100,
        image_size: side,
        payload_rates: vec![0.4],
        split_seed: 0xACCE_0005,
        train_fraction: 0.5,
    })
    .unwrap();
    let wet_total: usize = corpus.iter().map(|img| wet_mask(img).count()).sum();
    let pixel_total: usize = corpus.iter().map(|img| img.len()).sum();
    assert!(
        wet_total as f64 / pixel_total as f64 >= 0.01,
        "corpus has too few wet pixels for the gate"
    );

    let model = CnnModel::new(side, 9).unwrap();
    let profile = CostProfile::hill();
    let params = CodeParams::new(0.4);
    let l = params.message_len(side * side);
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0006);
    let mut violations = 0usize;
    let mut wet_changes = 0usize;
    for cover in &corpus {
        let mask = wet_mask(cover);
        let message = random_bits(&mut rng, l);
        let plain = generate_plain_stego(cover, &message, &profile, &params, rng.gen()).unwrap();
        let (adversarial, _) =
            generate_adversarial_stego(cover, &message, &model, &profile, &params).unwrap();
        for stego in [&plain, &adversarial] {
            for row in 0..side {
                for col in 0..side {
                    let before = cover.pixel(row, col);
                    let after = stego.pixel(row, col);
                    if before == after {
                        continue;
                    }
                    if mask.is_wet(row, col) {
                        wet_changes += 1;
                        let legal = (before == 0 && after == 1) || (before == 255 && after == 254);
                        if !legal {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    assert_eq!(violations, 0, "wet-direction violations found");
    println!(
        "acceptance 5 (wet-pixel rule, {wet_changes} wet modifications, 0 violations in {:?}): PASS",
        start.elapsed()
    );
}

/// Criterion 6: plain and adversarial stegos from identical inputs flip
/// exactly the same pixel set, 100 random cases.
#[test]
fn acceptance_6_position_invariance() {
    let start = Instant::now();
    let side = 32;
    let corpus = synthesize_corpus(&DatasetSpec {
        corpus_size: 100,
        image_size: side,
        payload_rates: vec![0.3],
        split_seed: 0xACCE_0007,
        train_fraction: 0.5,
    })
    .unwrap();
    let model = CnnModel::new(side, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0008);
    for (case, cover) in corpus.iter().enumerate() {
        let alpha = [0.1, 0.2, 0.3][case % 3];
        let params = CodeParams::new(alpha);
        let profile = if case % 2 == 0 {
            CostProfile::hill()
        } else {
            CostProfile::suniward()
        };
        let message = random_bits(&mut rng, params.message_len(side * side));
        let (adversarial, plan) =
            generate_adversarial_stego(cover, &message, &model, &profile, &params).unwrap();
        let plain = generate_plain_stego(cover, &message, &profile, &params, rng.gen()).unwrap();

        let positions = |img: &GrayImage| -> Vec<usize> {
            cover
                .pixels()
                .iter()
                .zip(img.pixels())
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(i, _)| i)
                .collect()
        };
        let plain_positions = positions(&plain);
        assert_eq!(plain_positions, positions(&adversarial), "case {case}");
        assert_eq!(plain_positions, plan.positions, "case {case}");
    }
    println!(
        "acceptance 6 (position invariance, 100 cases in {:?}): PASS",
        start.elapsed()
    );
}

/// Criterion 7: two `evaluate` runs of the compiled binary with an identical
/// spec produce byte-identical CSV reports.
#[test]
fn acceptance_7_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(
        &spec_path,
        r#"{
            "corpus_size": 24,
            "image_size": 16,
            "payload_rates": [0.1, 0.4],
            "split_seed": 3,
            "train": {"lr": 0.02, "momentum": 0.9, "batch": 8, "epochs": 2, "seed": 5},
            "algo": "hill"
        }"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let csv_path = dir.path().join(format!("report_{run}.csv"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_gradstego"))
            .args(["evaluate", "--spec"])
            .arg(&spec_path)
            .arg("--out")
            .arg(&csv_path)
            .status()
            .expect("binary runs");
        assert!(status.success(), "evaluate exited with {status}");
        outputs.push(std::fs::read(&csv_path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "CSV reports differ between runs");
    assert!(outputs[0].starts_with(b"algo,alpha,set,p_fa,p_md,p_e,n_cover,n_stego,seed\n"));
    println!(
        "acceptance 7 (byte-identical evaluate runs in {:?}): PASS",
        start.elapsed()
    );
}
