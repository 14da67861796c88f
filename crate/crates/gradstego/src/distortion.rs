//! Additive per-pixel embedding cost maps.
//!
//! Both constructions assign low cost where local high-frequency content can
//! hide a ±1 change and high cost in smooth regions:
//!
//! * HILL: `ρ = 1 / (A2 ⊛ (A1 ⊛ |KB ⊛ X|) + σ)` with the 3×3 high-pass
//!   kernel `KB`, a 3×3 mean filter `A1`, and a 15×15 mean filter `A2`.
//! * S-UNIWARD family: three directional residuals from an 8-tap Daubechies
//!   filter bank; `ρ_ij = Σ_k Σ_{(u,v) ∈ N(i,j)} 1 / (|W_k(u,v)| + σ)`, where
//!   `N(i,j)` is the 8×8 residual window influenced by pixel `(i,j)`.
//!
//! All convolutions mirror-pad at the image boundary. Saturated (wet) pixels
//! are forced to [`WET_COST`].

use crate::error::{Error, Result};
use crate::image::{wet_mask, GrayImage};

/// Sentinel cost for wet pixels. Far above any achievable textured-region
/// cost, far below anything that risks losing additive precision in a path
/// sum.
pub const WET_COST: f64 = 1e13;

/// Default stabilizer for the HILL denominator; caps flat-region costs at
/// 1e10.
pub const HILL_STABILIZER: f64 = 1e-10;

/// Default stabilizer for the S-UNIWARD residual terms.
pub const SUNIWARD_STABILIZER: f64 = 1.0;

/// Cost construction selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostAlgorithm {
    Hill,
    Suniward,
}

impl std::fmt::Display for CostAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostAlgorithm::Hill => write!(f, "hill"),
            CostAlgorithm::Suniward => write!(f, "suniward"),
        }
    }
}

/// Boundary padding rule for the filter chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Mirror,
}

/// Parameters of a cost computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostProfile {
    pub algorithm: CostAlgorithm,
    pub stabilizer: f64,
    pub boundary: Boundary,
}

impl CostProfile {
    pub fn hill() -> Self {
        Self {
            algorithm: CostAlgorithm::Hill,
            stabilizer: HILL_STABILIZER,
            boundary: Boundary::Mirror,
        }
    }

    pub fn suniward() -> Self {
        Self {
            algorithm: CostAlgorithm::Suniward,
            stabilizer: SUNIWARD_STABILIZER,
            boundary: Boundary::Mirror,
        }
    }

    pub fn for_algorithm(algorithm: CostAlgorithm) -> Self {
        match algorithm {
            CostAlgorithm::Hill => Self::hill(),
            CostAlgorithm::Suniward => Self::suniward(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.stabilizer.is_nan() || self.stabilizer <= 0.0 || !self.stabilizer.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "stabilizer must be a positive real, got {}",
                self.stabilizer
            )));
        }
        Ok(())
    }
}

/// Per-pixel embedding costs for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    width: usize,
    height: usize,
    costs: Vec<f64>,
    wet_cost: f64,
}

impl CostMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cost(&self, row: usize, col: usize) -> f64 {
        self.costs[row * self.width + col]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn wet_cost(&self) -> f64 {
        self.wet_cost
    }

    /// Min-max normalized heat image for debugging: dark = cheap, bright =
    /// expensive; wet pixels render as 255.
    pub fn to_heat_pgm(&self) -> GrayImage {
        let non_wet: Vec<f64> = self
            .costs
            .iter()
            .copied()
            .filter(|&c| c < self.wet_cost)
            .collect();
        let lo = non_wet.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = non_wet.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let pixels = self
            .costs
            .iter()
            .map(|&c| {
                if c >= self.wet_cost {
                    255
                } else if span > 0.0 {
                    ((c - lo) / span * 255.0).round() as u8
                } else {
                    0
                }
            })
            .collect();
        GrayImage::new(self.width, self.height, pixels).expect("same shape as a valid image")
    }
}

/// Row-major `(pixel index, cost)` pairs bridging the 2-D map to the codec's
/// 1-D cost sequence.
pub fn flatten_costs(map: &CostMap) -> Vec<(usize, f64)> {
    map.costs.iter().copied().enumerate().collect()
}

/// Dispatches on the profile's algorithm.
pub fn compute_cost(img: &GrayImage, profile: &CostProfile) -> Result<CostMap> {
    match profile.algorithm {
        CostAlgorithm::Hill => hill_cost(img, profile),
        CostAlgorithm::Suniward => suniward_cost(img, profile),
    }
}

// Mirror reflection about the boundary samples (period 2(n-1)).
#[inline]
fn mirror_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

// Same-size 2-D convolution with mirror padding; kernel anchored at
// (⌊(kh-1)/2⌋, ⌊(kw-1)/2⌋).
fn conv2_same_mirror(
    src: &[f64],
    width: usize,
    height: usize,
    kernel: &[f64],
    kw: usize,
    kh: usize,
) -> Vec<f64> {
    let cy = (kh - 1) / 2;
    let cx = (kw - 1) / 2;
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for ky in 0..kh {
                let sy = mirror_index(y as isize + ky as isize - cy as isize, height);
                for kx in 0..kw {
                    let sx = mirror_index(x as isize + kx as isize - cx as isize, width);
                    acc += kernel[ky * kw + kx] * src[sy * width + sx];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

// 1-D pass along rows (filtering in x), mirror padded, center ⌊(len-1)/2⌋.
fn filter_rows(src: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let c = (taps.len() - 1) / 2;
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (a, &t) in taps.iter().enumerate() {
                let sx = mirror_index(x as isize + a as isize - c as isize, width);
                acc += t * src[y * width + sx];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

// 1-D pass along columns (filtering in y).
fn filter_cols(src: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let c = (taps.len() - 1) / 2;
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (a, &t) in taps.iter().enumerate() {
                let sy = mirror_index(y as isize + a as isize - c as isize, height);
                acc += t * src[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// 3×3 high-pass residual kernel used by HILL.
pub const HILL_KB: [f64; 9] = [-1.0, 2.0, -1.0, 2.0, -4.0, 2.0, -1.0, 2.0, -1.0];

/// HILL cost map: inverse of the smoothed high-pass magnitude.
pub fn hill_cost(img: &GrayImage, profile: &CostProfile) -> Result<CostMap> {
    profile.validate()?;
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::InvalidArgument(format!(
            "HILL needs at least a 3x3 image, got {w}x{h}"
        )));
    }
    let plane = img.to_f64();
    let residual = conv2_same_mirror(&plane, w, h, &HILL_KB, 3, 3);
    let magnitude: Vec<f64> = residual.iter().map(|r| r.abs()).collect();
    let mean3 = vec![1.0 / 9.0; 9];
    let smoothed = conv2_same_mirror(&magnitude, w, h, &mean3, 3, 3);
    let mean15 = vec![1.0 / 225.0; 225];
    let spread = conv2_same_mirror(&smoothed, w, h, &mean15, 15, 15);
    let costs: Vec<f64> = spread.iter().map(|v| 1.0 / (v + profile.stabilizer)).collect();
    finalize(img, costs)
}

/// 8-tap Daubechies scaling (low-pass) filter.
pub const DB4_LO: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

/// Matching wavelet (high-pass) filter, `g[k] = (-1)^k · lo[7-k]`.
pub const DB4_HI: [f64; 8] = [
    -0.010_597_401_784_997_278,
    -0.032_883_011_666_982_945,
    0.030_841_381_835_986_965,
    0.187_034_811_718_881_14,
    -0.027_983_769_416_983_85,
    -0.630_880_767_929_590_4,
    0.714_846_570_552_541_5,
    -0.230_377_813_308_855_23,
];

// Residual window influenced by a pixel: 8 taps anchored at index 3 touch
// output offsets -4..=3 in each axis.
const WINDOW_OFFSETS: std::ops::RangeInclusive<isize> = -4..=3;

/// S-UNIWARD-family cost map: reciprocal residual magnitudes accumulated over
/// the three directional subbands and the affected neighborhood.
pub fn suniward_cost(img: &GrayImage, profile: &CostProfile) -> Result<CostMap> {
    profile.validate()?;
    let (w, h) = (img.width(), img.height());
    if w < 8 || h < 8 {
        return Err(Error::InvalidArgument(format!(
            "S-UNIWARD needs at least an 8x8 image, got {w}x{h}"
        )));
    }
    let plane = img.to_f64();
    let row_lo = filter_rows(&plane, w, h, &DB4_LO);
    let row_hi = filter_rows(&plane, w, h, &DB4_HI);
    let subbands = [
        filter_cols(&row_lo, w, h, &DB4_HI), // horizontal detail
        filter_cols(&row_hi, w, h, &DB4_LO), // vertical detail
        filter_cols(&row_hi, w, h, &DB4_HI), // diagonal detail
    ];

    // Reciprocal magnitude per subband, then window sums.
    let reciprocal: Vec<Vec<f64>> = subbands
        .iter()
        .map(|band| band.iter().map(|v| 1.0 / (v.abs() + profile.stabilizer)).collect())
        .collect();

    let mut costs = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for band in &reciprocal {
                for du in WINDOW_OFFSETS {
                    let sy = mirror_index(y as isize + du, h);
                    for dv in WINDOW_OFFSETS {
                        let sx = mirror_index(x as isize + dv, w);
                        acc += band[sy * w + sx];
                    }
                }
            }
            costs[y * w + x] = acc;
        }
    }
    finalize(img, costs)
}

// Applies the wet override and checks the finiteness invariant.
fn finalize(img: &GrayImage, mut costs: Vec<f64>) -> Result<CostMap> {
    let mask = wet_mask(img);
    for (cost, &wet) in costs.iter_mut().zip(mask.flags()) {
        if wet {
            *cost = WET_COST;
        } else if !cost.is_finite() || *cost < 0.0 {
            return Err(Error::Numeric(format!("cost map produced {cost}")));
        }
    }
    Ok(CostMap {
        width: img.width(),
        height: img.height(),
        costs,
        wet_cost: WET_COST,
    })
}
