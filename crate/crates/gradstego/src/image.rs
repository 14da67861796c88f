//! Grayscale image values, wet-pixel semantics, and binary PGM (P5) round-trip I/O.
//!
//! Images are immutable: every operation returns a new value, so a shared
//! image can be processed by many threads at once.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit grayscale image, pixels stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    /// Builds an image from row-major pixel data. Zero-sized images and
    /// mismatched buffer lengths are rejected.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer has {} entries, expected {}",
                pixels.len(),
                width * height
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // zero-sized images are rejected at construction
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Pixel values widened to `f64`, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p)).collect()
    }
}

/// Direction of a single ±1 pixel modification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipDirection {
    Plus,
    Minus,
}

impl FlipDirection {
    pub fn delta(self) -> i16 {
        match self {
            FlipDirection::Plus => 1,
            FlipDirection::Minus => -1,
        }
    }
}

/// One ±1 modification at a pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelFlip {
    pub row: usize,
    pub col: usize,
    pub direction: FlipDirection,
}

/// Marks saturated pixels (value 0 or 255), whose flip direction is forced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WetMask {
    width: usize,
    height: usize,
    flags: Vec<bool>,
}

impl WetMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_wet(&self, row: usize, col: usize) -> bool {
        self.flags[row * self.width + col]
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    /// Number of wet pixels.
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Flags every pixel valued 0 or 255.
pub fn wet_mask(img: &GrayImage) -> WetMask {
    WetMask {
        width: img.width,
        height: img.height,
        flags: img.pixels.iter().map(|&p| p == 0 || p == 255).collect(),
    }
}

/// Applies a set of ±1 flips, returning a new image. Each flip must target a
/// distinct pixel and must keep the pixel inside [0, 255].
pub fn apply_flips(img: &GrayImage, flips: &[PixelFlip]) -> Result<GrayImage> {
    let mut pixels = img.pixels.clone();
    let mut touched = vec![false; pixels.len()];
    for flip in flips {
        if flip.row >= img.height || flip.col >= img.width {
            return Err(Error::InvalidArgument(format!(
                "flip position ({}, {}) outside {}x{} image",
                flip.row, flip.col, img.width, img.height
            )));
        }
        let idx = flip.row * img.width + flip.col;
        if touched[idx] {
            return Err(Error::InvalidArgument(format!(
                "duplicate flip at ({}, {})",
                flip.row, flip.col
            )));
        }
        touched[idx] = true;
        let value = i16::from(pixels[idx]) + flip.direction.delta();
        if !(0..=255).contains(&value) {
            return Err(Error::Bounds(format!(
                "flip at ({}, {}) moves pixel {} out of range",
                flip.row, flip.col, pixels[idx]
            )));
        }
        pixels[idx] = value as u8;
    }
    GrayImage::new(img.width, img.height, pixels)
}

/// Reads a binary PGM (P5) file with maxval 255. Header comments (`#` to end
/// of line) are accepted.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes)
}

/// Parses binary PGM (P5) bytes.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        let magic = String::from_utf8_lossy(bytes.get(0..2).unwrap_or(b""));
        return Err(Error::Format(format!(
            "not a binary PGM (expected magic P5, got {magic:?})"
        )));
    }
    let mut pos = 2;
    let width = read_header_int(bytes, &mut pos)?;
    let height = read_header_int(bytes, &mut pos)?;
    let maxval = read_header_int(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(Error::Unsupported(format!(
            "only maxval 255 is supported, got {maxval}"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing separator before pixel data".into())),
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("zero-sized image".into()));
    }
    let expected = width * height;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            format!("pixel data truncated: expected {expected} bytes, got {}", data.len()),
        )));
    }
    GrayImage::new(width, height, data[..expected].to_vec())
}

// Reads one ASCII integer token, skipping whitespace and `#` comments.
fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_digit() => break,
            Some(b) => {
                return Err(Error::Format(format!(
                    "unexpected byte 0x{b:02x} in PGM header"
                )))
            }
            None => return Err(Error::Format("PGM header ended early".into())),
        }
    }
    let start = *pos;
    while matches!(bytes.get(*pos), Some(b) if b.is_ascii_digit()) {
        *pos += 1;
    }
    let token = std::str::from_utf8(&bytes[start..*pos]).expect("digits are valid UTF-8");
    token
        .parse::<usize>()
        .map_err(|_| Error::Format(format!("header value {token} out of range")))
}

/// Serializes the image as `P5\n<width> <height>\n255\n<raw bytes>`.
pub fn pgm_bytes(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixels.len() + 32);
    out.extend_from_slice(format!("P5\n{} {}\n255\n", img.width, img.height).as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

/// Writes a binary PGM (P5) file. `load_pgm(save_pgm(img)) == img` bit-exactly.
pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&pgm_bytes(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng) -> GrayImage {
        let width = rng.gen_range(1..40);
        let height = rng.gen_range(1..40);
        let pixels = (0..width * height).map(|_| rng.gen::<u8>()).collect();
        GrayImage::new(width, height, pixels).unwrap()
    }

    #[test]
    fn load_pgm_exact_bytes() {
        let bytes = b"P5\n2 2\n255\n\x00\x80\xff\x07";
        let img = parse_pgm(bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0, 128, 255, 7]);
    }

    #[test]
    fn load_pgm_rejects_ascii_p2() {
        let bytes = b"P2\n2 2\n255\n0 128 255 7\n";
        assert!(matches!(parse_pgm(bytes), Err(Error::Format(_))));
    }

    #[test]
    fn load_pgm_rejects_16_bit_maxval() {
        let bytes = b"P5\n2 2\n65535\n\x00\x00\x00\x80\x00\xff\x00\x07";
        assert!(matches!(parse_pgm(bytes), Err(Error::Unsupported(_))));
    }

    #[test]
    fn load_pgm_truncated_data_is_io_error() {
        let bytes = b"P5\n2 2\n255\n\x00\x80";
        assert!(matches!(parse_pgm(bytes), Err(Error::Io(_))));
    }

    #[test]
    fn load_pgm_accepts_header_comments() {
        let bytes = b"P5\n# made by a scanner\n2 1 # inline\n255\n\x01\x02";
        let img = parse_pgm(bytes).unwrap();
        assert_eq!(img.pixels(), &[1, 2]);
    }

    #[test]
    fn pgm_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dir = tempfile::tempdir().unwrap();
        for i in 0..50 {
            let img = random_image(&mut rng);
            let path = dir.path().join(format!("rt_{i}.pgm"));
            save_pgm(&img, &path).unwrap();
            let back = load_pgm(&path).unwrap();
            assert_eq!(back, img);
        }
    }

    #[test]
    fn single_pixel_file_ends_in_its_value() {
        let img = GrayImage::new(1, 1, vec![255]).unwrap();
        let bytes = pgm_bytes(&img);
        assert_eq!(bytes, b"P5\n1 1\n255\n\xff");
        assert_eq!(*bytes.last().unwrap(), 0xff);
    }

    #[test]
    fn zero_sized_image_rejected_at_construction() {
        assert!(matches!(
            GrayImage::new(0, 0, vec![]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn apply_flips_moves_single_pixel() {
        let img = GrayImage::new(2, 2, vec![100, 1, 2, 3]).unwrap();
        let out = apply_flips(
            &img,
            &[PixelFlip { row: 0, col: 0, direction: FlipDirection::Plus }],
        )
        .unwrap();
        assert_eq!(out.pixel(0, 0), 101);
        assert_eq!(img.pixel(0, 0), 100); // input untouched
        assert_eq!(out.pixels()[1..], img.pixels()[1..]);
    }

    #[test]
    fn apply_flips_empty_list_is_identity() {
        let img = GrayImage::new(3, 2, vec![9; 6]).unwrap();
        assert_eq!(apply_flips(&img, &[]).unwrap(), img);
    }

    #[test]
    fn apply_flips_rejects_out_of_range_result() {
        let img = GrayImage::new(1, 1, vec![255]).unwrap();
        let err = apply_flips(
            &img,
            &[PixelFlip { row: 0, col: 0, direction: FlipDirection::Plus }],
        );
        assert!(matches!(err, Err(Error::Bounds(_))));
    }

    #[test]
    fn apply_flips_rejects_duplicate_position() {
        let img = GrayImage::new(2, 1, vec![10, 20]).unwrap();
        let flips = [
            PixelFlip { row: 0, col: 1, direction: FlipDirection::Plus },
            PixelFlip { row: 0, col: 1, direction: FlipDirection::Minus },
        ];
        assert!(matches!(apply_flips(&img, &flips), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn apply_flips_changes_l1_distance_by_flip_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let img = random_image(&mut rng);
            let mut flips = Vec::new();
            for r in 0..img.height() {
                for c in 0..img.width() {
                    if rng.gen_bool(0.2) {
                        let p = img.pixel(r, c);
                        let direction = match p {
                            255 => FlipDirection::Minus,
                            0 => FlipDirection::Plus,
                            _ if rng.gen_bool(0.5) => FlipDirection::Plus,
                            _ => FlipDirection::Minus,
                        };
                        flips.push(PixelFlip { row: r, col: c, direction });
                    }
                }
            }
            let out = apply_flips(&img, &flips).unwrap();
            let l1: u64 = img
                .pixels()
                .iter()
                .zip(out.pixels())
                .map(|(&a, &b)| (i64::from(a) - i64::from(b)).unsigned_abs())
                .sum();
            assert_eq!(l1, flips.len() as u64);
        }
    }

    #[test]
    fn wet_mask_flags_saturated_pixels() {
        let img = GrayImage::new(2, 2, vec![0, 128, 255, 7]).unwrap();
        let mask = wet_mask(&img);
        assert_eq!(mask.flags(), &[true, false, true, false]);
        assert_eq!(mask.count(), 2);
    }

    #[test]
    fn wet_mask_all_interior_and_all_saturated() {
        let mid = GrayImage::new(3, 3, vec![128; 9]).unwrap();
        assert_eq!(wet_mask(&mid).count(), 0);
        let zeros = GrayImage::new(3, 3, vec![0; 9]).unwrap();
        assert_eq!(wet_mask(&zeros).count(), 9);
    }

    #[test]
    fn wet_mask_matches_single_step_feasibility() {
        // A pixel is wet iff one of the two ±1 directions would leave [0, 255].
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let img = random_image(&mut rng);
            let mask = wet_mask(&img);
            for r in 0..img.height() {
                for c in 0..img.width() {
                    let p = i16::from(img.pixel(r, c));
                    let both_ok = (0..=255).contains(&(p + 1)) && (0..=255).contains(&(p - 1));
                    assert_eq!(mask.is_wet(r, c), !both_ok);
                }
            }
        }
    }
}
