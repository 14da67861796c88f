//! Command-line front end. All heavy lifting lives in the library; every run
//! with identical flags and seeds produces byte-identical outputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gradstego::adversarial::{
    attack_delta, extract_message, generate_adversarial_stego, generate_plain_stego, CodeParams,
};
use gradstego::cnn::{sign_map, CnnModel, Label};
use gradstego::distortion::{compute_cost, CostAlgorithm, CostProfile};
use gradstego::harness::{
    emit_report, run_protocol, synthesize_corpus, train_rate_model, EvaluationSpec,
};
use gradstego::image::{load_pgm, save_pgm, GrayImage};
use gradstego::stc::{message_len_for_rate, BitVector, DEFAULT_CONSTRAINT_HEIGHT};
use gradstego::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gradstego",
    version,
    about = "Adaptive grayscale steganography with gradient-steered flip directions"
)]
struct Cli {
    /// Cap the number of parallel worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
#[group(id = "payload", required = true, multiple = false)]
struct PayloadSource {
    /// Message bytes as a hex string.
    #[arg(long, value_name = "HEX")]
    message_hex: Option<String>,

    /// File whose bytes are the message.
    #[arg(long, value_name = "PATH")]
    message_file: Option<PathBuf>,

    /// Payload rate in bits per pixel; the message is drawn from
    /// --message-seed and its hex is printed.
    #[arg(long, value_name = "RATE")]
    alpha: Option<f64>,
}

#[derive(clap::Args)]
struct CodeFlags {
    /// Trellis constraint height.
    #[arg(long, default_value_t = DEFAULT_CONSTRAINT_HEIGHT)]
    height: u32,

    /// Seed for the parity-check sub-matrix.
    #[arg(long, default_value_t = 1)]
    code_seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a message with coin-flip directions (plain stego baseline).
    Embed {
        #[arg(long, value_name = "PGM")]
        cover: PathBuf,
        #[arg(long, value_name = "PGM")]
        out: PathBuf,
        #[arg(long, value_parser = ["hill", "suniward"])]
        algo: String,
        #[command(flatten)]
        payload: PayloadSource,
        #[command(flatten)]
        code: CodeFlags,
        /// Seed for the ±1 coin at non-saturated positions.
        #[arg(long, default_value_t = 7)]
        direction_seed: u64,
        /// Seed for the generated message when --alpha is used.
        #[arg(long, default_value_t = 1)]
        message_seed: u64,
        /// Also write the cost map as a min-max normalized heat PGM.
        #[arg(long, value_name = "PGM")]
        dump_cost: Option<PathBuf>,
    },

    /// Recover a message from a stego image's LSBs; prints hex.
    Extract {
        #[arg(long, value_name = "PGM")]
        stego: PathBuf,
        /// Message length in bits.
        #[arg(long, value_name = "N", conflicts_with = "alpha")]
        nbits: Option<usize>,
        /// Payload rate the message was embedded at.
        #[arg(long, value_name = "RATE", required_unless_present = "nbits")]
        alpha: Option<f64>,
        #[command(flatten)]
        code: CodeFlags,
    },

    /// Dump the steganalyzer's gradient sign map for an image as a PGM
    /// (0 where the sign is −1, 255 where it is +1).
    Gradmap {
        #[arg(long, value_name = "PGM")]
        image: PathBuf,
        #[arg(long, value_name = "MODEL")]
        model: PathBuf,
        #[arg(long, value_name = "PGM")]
        out: PathBuf,
    },

    /// Embed with flip directions steered by the steganalyzer's cover
    /// gradient (adversarial stego).
    AdvEmbed {
        #[arg(long, value_name = "PGM")]
        cover: PathBuf,
        #[arg(long, value_name = "MODEL")]
        model: PathBuf,
        #[arg(long, value_name = "PGM")]
        out: PathBuf,
        #[arg(long, value_parser = ["hill", "suniward"])]
        algo: String,
        #[command(flatten)]
        payload: PayloadSource,
        #[command(flatten)]
        code: CodeFlags,
        #[arg(long, default_value_t = 1)]
        message_seed: u64,
        /// Write the flip plan (positions, directions, digest) as JSON.
        #[arg(long, value_name = "JSON")]
        plan: Option<PathBuf>,
        #[arg(long, value_name = "PGM")]
        dump_cost: Option<PathBuf>,
        /// Also report p_cover for cover, plain stego, and adversarial stego.
        #[arg(long)]
        report_delta: bool,
    },

    /// Train the steganalyzer for one payload rate of an evaluation spec and
    /// save the model file.
    Train {
        /// Evaluation spec JSON (corpus, split, training hyperparameters).
        #[arg(long, value_name = "JSON")]
        spec: PathBuf,
        /// Payload rate to train at; must be listed in the spec.
        #[arg(long, value_name = "RATE")]
        alpha: f64,
        #[arg(long, value_name = "MODEL")]
        out: PathBuf,
        /// Directory of cover PGMs to use instead of the synthetic corpus.
        #[arg(long, value_name = "DIR")]
        corpus_dir: Option<PathBuf>,
    },

    /// Run the full detection-error protocol and write the CSV report.
    Evaluate {
        #[arg(long, value_name = "JSON")]
        spec: PathBuf,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        #[arg(long, value_name = "DIR")]
        corpus_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    if let Some(jobs) = cli.jobs {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .is_err()
        {
            eprintln!("error: worker pool already initialized");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn parse_algo(algo: &str) -> CostAlgorithm {
    match algo {
        "hill" => CostAlgorithm::Hill,
        _ => CostAlgorithm::Suniward,
    }
}

// Resolves the payload flags into message bits plus the code geometry.
fn resolve_payload(
    payload: &PayloadSource,
    code: &CodeFlags,
    n_pixels: usize,
    message_seed: u64,
) -> Result<(BitVector, CodeParams, bool)> {
    let explicit_bytes = match (&payload.message_hex, &payload.message_file) {
        (Some(hex_str), _) => Some(
            hex::decode(hex_str.trim())
                .map_err(|e| Error::InvalidArgument(format!("bad hex message: {e}")))?,
        ),
        (_, Some(path)) => Some(std::fs::read(path)?),
        _ => None,
    };
    match explicit_bytes {
        Some(bytes) => {
            if bytes.is_empty() {
                return Err(Error::InvalidArgument("message is empty".into()));
            }
            let bits = BitVector::from_bytes_msb(&bytes);
            let params = CodeParams {
                alpha: bits.len() as f64 / n_pixels as f64,
                height: code.height,
                seed: code.code_seed,
            };
            Ok((bits, params, false))
        }
        None => {
            let alpha = payload.alpha.expect("clap group guarantees one source");
            let params = CodeParams {
                alpha,
                height: code.height,
                seed: code.code_seed,
            };
            let l = message_len_for_rate(n_pixels, alpha);
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(message_seed);
            let bits =
                BitVector::from_bits((0..l).map(|_| rng.gen_range(0..2u8)).collect()).expect("0/1");
            Ok((bits, params, true))
        }
    }
}

fn load_covers(spec: &EvaluationSpec, corpus_dir: &Option<PathBuf>) -> Result<Vec<GrayImage>> {
    match corpus_dir {
        Some(dir) => load_corpus_dir(dir),
        None => synthesize_corpus(&spec.dataset),
    }
}

fn load_corpus_dir(dir: &Path) -> Result<Vec<GrayImage>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|ext| ext.eq_ignore_ascii_case("pgm"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .pgm files in {}",
            dir.display()
        )));
    }
    paths.iter().map(load_pgm).collect()
}

fn read_spec(path: &Path) -> Result<EvaluationSpec> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad spec JSON: {e}")))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Embed {
            cover,
            out,
            algo,
            payload,
            code,
            direction_seed,
            message_seed,
            dump_cost,
        } => {
            let cover = load_pgm(cover)?;
            let profile = CostProfile::for_algorithm(parse_algo(&algo));
            let (message, params, generated) =
                resolve_payload(&payload, &code, cover.len(), message_seed)?;
            if let Some(path) = dump_cost {
                save_pgm(&compute_cost(&cover, &profile)?.to_heat_pgm(), path)?;
            }
            let stego = generate_plain_stego(&cover, &message, &profile, &params, direction_seed)?;
            save_pgm(&stego, out)?;
            if generated {
                println!("{}", hex::encode(message.to_bytes_msb()));
            }
            Ok(())
        }

        Command::Extract {
            stego,
            nbits,
            alpha,
            code,
        } => {
            let stego = load_pgm(stego)?;
            let params = match nbits {
                Some(bits) => {
                    if bits == 0 {
                        return Err(Error::InvalidArgument("--nbits must be positive".into()));
                    }
                    CodeParams {
                        alpha: bits as f64 / stego.len() as f64,
                        height: code.height,
                        seed: code.code_seed,
                    }
                }
                None => CodeParams {
                    alpha: alpha.expect("clap requires one of nbits/alpha"),
                    height: code.height,
                    seed: code.code_seed,
                },
            };
            let message = extract_message(&stego, &params)?;
            println!("{}", hex::encode(message.to_bytes_msb()));
            Ok(())
        }

        Command::Gradmap { image, model, out } => {
            let image = load_pgm(image)?;
            let model = CnnModel::load(model)?;
            let grad = model.input_gradient(&image, Label::Cover)?;
            save_pgm(&sign_map(&grad).to_pgm(), out)?;
            Ok(())
        }

        Command::AdvEmbed {
            cover,
            model,
            out,
            algo,
            payload,
            code,
            message_seed,
            plan,
            dump_cost,
            report_delta,
        } => {
            let cover = load_pgm(cover)?;
            let model = CnnModel::load(model)?;
            let profile = CostProfile::for_algorithm(parse_algo(&algo));
            let (message, params, generated) =
                resolve_payload(&payload, &code, cover.len(), message_seed)?;
            if let Some(path) = dump_cost {
                save_pgm(&compute_cost(&cover, &profile)?.to_heat_pgm(), path)?;
            }
            let (stego, flip_plan) =
                generate_adversarial_stego(&cover, &message, &model, &profile, &params)?;
            save_pgm(&stego, out)?;
            if let Some(path) = plan {
                let json = serde_json::to_string_pretty(&flip_plan)
                    .map_err(|e| Error::Internal(format!("plan serialization: {e}")))?;
                std::fs::write(path, json)?;
            }
            if generated {
                println!("{}", hex::encode(message.to_bytes_msb()));
            }
            if report_delta {
                let plain =
                    generate_plain_stego(&cover, &message, &profile, &params, message_seed)?;
                let delta = attack_delta(&model, &cover, &plain, &stego)?;
                println!(
                    "p_cover={:.6} p_stego={:.6} p_adversarial={:.6}",
                    delta.p_cover, delta.p_stego, delta.p_adversarial
                );
            }
            Ok(())
        }

        Command::Train {
            spec,
            alpha,
            out,
            corpus_dir,
        } => {
            let spec = read_spec(&spec)?;
            let rate_no = spec
                .dataset
                .payload_rates
                .iter()
                .position(|&a| a == alpha)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "alpha {alpha} is not one of the spec's payload rates {:?}",
                        spec.dataset.payload_rates
                    ))
                })?;
            let covers = load_covers(&spec, &corpus_dir)?;
            let model = train_rate_model(&spec, &covers, rate_no)?;
            model.save(out)?;
            Ok(())
        }

        Command::Evaluate {
            spec,
            out,
            corpus_dir,
        } => {
            let spec = read_spec(&spec)?;
            let covers = load_covers(&spec, &corpus_dir)?;
            let report = run_protocol(&spec, &covers)?;
            emit_report(&report, out)?;
            Ok(())
        }
    }
}
