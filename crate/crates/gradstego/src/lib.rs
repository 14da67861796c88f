//! Adaptive grayscale steganography with gradient-steered flip directions.
//!
//! The pipeline embeds a message into an 8-bit cover image in three steps:
//!
//! 1. compute the input-gradient sign map of a CNN steganalyzer for the
//!    cover, with the output label forced to "cover";
//! 2. pick the modification positions with a single-layered syndrome-trellis
//!    code minimizing an additive distortion (HILL or S-UNIWARD costs);
//! 3. apply each ±1 flip in the direction of the gradient sign (saturated
//!    pixels are forced: 0 → +1, 255 → −1).
//!
//! Because +1 and −1 toggle the LSB identically, the direction choice never
//! affects decodability — it only nudges the steganalyzer toward the cover
//! class. The [`harness`] module benchmarks the effect as the average
//! detection error rate over paired cover/stego test sets.

pub mod adversarial;
pub mod cnn;
pub mod distortion;
pub mod error;
pub mod harness;
pub mod image;
pub mod stc;

pub use error::{Error, Result};
