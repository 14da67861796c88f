//! Single-layered syndrome-trellis code.
//!
//! Embedding solves `arg min Σ ρ_i·s_i` subject to `H × y = m` over GF(2),
//! where `y` is the stego LSB vector and `s = x ⊕ y` the flip pattern. `H` is
//! an `l×n` band matrix tiled from a small sub-matrix `Ĥ`: message row `i`
//! owns a block of consecutive columns, and the column placed in block `i`
//! covers rows `i .. i+h-1` (truncated at `l`). A Viterbi search over the
//! 2^h partial-syndrome states finds the exact optimum for this banded
//! structure; [`brute_force_embed`] provides the exhaustive cross-check for
//! small `n`.
//!
//! Column patterns are integers with bit `k` giving the entry for row `i+k`,
//! so bit 0 is the top row of the band. Every column keeps bit 0 set, which
//! makes any syndrome reachable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// A sequence of bits, each stored as 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVector(Vec<u8>);

impl BitVector {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidArgument(format!("bit value {b} is not 0/1")));
        }
        Ok(Self(bits))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    /// Unpacks bytes most-significant-bit first; the result has `8×len` bits.
    pub fn from_bytes_msb(bytes: &[u8]) -> Self {
        let mut bits = Vec::with_capacity(bytes.len() * 8);
        for &byte in bytes {
            for shift in (0..8).rev() {
                bits.push((byte >> shift) & 1);
            }
        }
        Self(bits)
    }

    /// Packs bits most-significant-bit first, zero-padding the final byte.
    pub fn to_bytes_msb(&self) -> Vec<u8> {
        let mut bytes = vec![0u8; self.0.len().div_ceil(8)];
        for (i, &bit) in self.0.iter().enumerate() {
            bytes[i / 8] |= bit << (7 - (i % 8));
        }
        bytes
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn xor(&self, other: &BitVector) -> BitVector {
        assert_eq!(self.len(), other.len());
        BitVector(self.0.iter().zip(&other.0).map(|(a, b)| a ^ b).collect())
    }

    /// Number of set bits.
    pub fn weight(&self) -> usize {
        self.0.iter().map(|&b| b as usize).sum()
    }
}

/// The LSB vector of an image, row-major.
pub fn lsb_vector(img: &GrayImage) -> BitVector {
    BitVector(img.pixels().iter().map(|&p| p & 1).collect())
}

/// Parity-check structure for one cover length / message length pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StcCode {
    n: usize,
    l: usize,
    h: u32,
    columns: Vec<u32>,
}

pub const MIN_CONSTRAINT_HEIGHT: u32 = 2;
pub const MAX_CONSTRAINT_HEIGHT: u32 = 10;

/// Default constraint height used by the embedding pipeline.
pub const DEFAULT_CONSTRAINT_HEIGHT: u32 = 7;

impl StcCode {
    /// Builds a code from explicit sub-matrix columns. Block `i` of the band
    /// uses the first `w_i` entries of `columns`, where the block widths
    /// alternate between ⌊n/l⌋ and ⌈n/l⌉ to cover `n` exactly.
    pub fn with_columns(n: usize, l: usize, h: u32, columns: Vec<u32>) -> Result<Self> {
        if n == 0 || l == 0 || l > n {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= l <= n, got l={l}, n={n}"
            )));
        }
        if !(MIN_CONSTRAINT_HEIGHT..=MAX_CONSTRAINT_HEIGHT).contains(&h) {
            return Err(Error::InvalidArgument(format!(
                "constraint height {h} outside [{MIN_CONSTRAINT_HEIGHT}, {MAX_CONSTRAINT_HEIGHT}]"
            )));
        }
        let max_width = n.div_ceil(l);
        if columns.len() != max_width {
            return Err(Error::InvalidArgument(format!(
                "expected {max_width} sub-matrix columns for n={n}, l={l}, got {}",
                columns.len()
            )));
        }
        for &col in &columns {
            if col >= (1 << h) {
                return Err(Error::InvalidArgument(format!(
                    "column pattern {col} does not fit in height {h}"
                )));
            }
            if col & 1 == 0 {
                return Err(Error::InvalidArgument(format!(
                    "column pattern {col:#b} has its top bit clear"
                )));
            }
        }
        Ok(Self { n, l, h, columns })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn message_len(&self) -> usize {
        self.l
    }

    pub fn constraint_height(&self) -> u32 {
        self.h
    }

    pub fn columns(&self) -> &[u32] {
        &self.columns
    }

    /// Width of the column block owned by message row `i`.
    pub fn block_width(&self, i: usize) -> usize {
        ((i + 1) * self.n) / self.l - (i * self.n) / self.l
    }

    /// The dense `l×n` parity-check matrix, entries 0/1. Intended for tests
    /// and diagnostics; embedding never materializes it.
    pub fn dense_parity_matrix(&self) -> Vec<Vec<u8>> {
        let mut matrix = vec![vec![0u8; self.n]; self.l];
        let mut idx = 0;
        for block in 0..self.l {
            for j in 0..self.block_width(block) {
                let col = self.columns[j];
                for k in 0..self.h as usize {
                    let row = block + k;
                    if row < self.l && (col >> k) & 1 == 1 {
                        matrix[row][idx] = 1;
                    }
                }
                idx += 1;
            }
        }
        debug_assert_eq!(idx, self.n);
        matrix
    }
}

/// Message length for payload rate `alpha` (bits per cover element).
pub fn message_len_for_rate(n: usize, alpha: f64) -> usize {
    (alpha * n as f64).round() as usize
}

/// Builds the default code for a given geometry: the first sub-matrix column
/// is all-ones (and the last too, once the width allows it); interior columns
/// are drawn from the seed with the top bit forced and never duplicate the
/// all-ones pattern. A repeated all-ones column would collapse a whole block
/// to a single parity degree of freedom, which is what forces flips onto wet
/// positions when a block lands entirely on saturated pixels.
pub fn build_code(n: usize, l: usize, h: u32, seed: u64) -> Result<StcCode> {
    if l == 0 || 2 * l > n {
        return Err(Error::Payload(format!(
            "message of {l} bits exceeds the single-layer rate bound for n={n} (need l <= n/2)"
        )));
    }
    if !(MIN_CONSTRAINT_HEIGHT..=MAX_CONSTRAINT_HEIGHT).contains(&h) {
        return Err(Error::InvalidArgument(format!(
            "constraint height {h} outside [{MIN_CONSTRAINT_HEIGHT}, {MAX_CONSTRAINT_HEIGHT}]"
        )));
    }
    let width = n.div_ceil(l);
    let all_ones = (1u32 << h) - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = Vec::with_capacity(width);
    for j in 0..width {
        if j == 0 || (j == width - 1 && width > 2) {
            columns.push(all_ones);
        } else {
            let col = loop {
                let candidate = (rng.gen::<u32>() & all_ones) | 1;
                if candidate != all_ones {
                    break candidate;
                }
            };
            columns.push(col);
        }
    }
    StcCode::with_columns(n, l, h, columns)
}

/// Outcome of an embedding: the stego LSB vector, which positions flipped,
/// and the cost actually paid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedResult {
    pub stego_lsb: BitVector,
    pub flip_pattern: BitVector,
    pub total_cost: f64,
}

// Survivor decisions, one bit per (position, state).
struct PathBits {
    words: Vec<u64>,
    states: usize,
}

impl PathBits {
    fn new(n: usize, states: usize) -> Self {
        Self {
            words: vec![0u64; (n * states).div_ceil(64)],
            states,
        }
    }

    #[inline]
    fn set(&mut self, pos: usize, state: usize, bit: u8) {
        let i = pos * self.states + state;
        if bit == 1 {
            self.words[i / 64] |= 1u64 << (i % 64);
        }
    }

    #[inline]
    fn get(&self, pos: usize, state: usize) -> u8 {
        let i = pos * self.states + state;
        ((self.words[i / 64] >> (i % 64)) & 1) as u8
    }
}

/// Embeds `m` into the LSB vector `x` with per-position costs `rho`,
/// returning the cost-minimal solution of `H × y = m` for the code's banded
/// parity-check matrix. Ties are broken toward fewer flips, then toward the
/// 0-bit branch, so results are deterministic.
pub fn stc_embed(x: &BitVector, m: &BitVector, rho: &[f64], code: &StcCode) -> Result<EmbedResult> {
    let n = code.n;
    let l = code.l;
    if x.len() != n {
        return Err(Error::InvalidArgument(format!(
            "cover vector has {} bits, code expects {n}",
            x.len()
        )));
    }
    if m.len() != l {
        return Err(Error::InvalidArgument(format!(
            "message has {} bits, code expects {l}",
            m.len()
        )));
    }
    if rho.len() != n {
        return Err(Error::InvalidArgument(format!(
            "cost sequence has {} entries, code expects {n}",
            rho.len()
        )));
    }
    if let Some(bad) = rho.iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "costs must be finite and nonnegative, got {bad}"
        )));
    }

    let states = 1usize << code.h;
    let mut cost = vec![f64::INFINITY; states];
    let mut flips = vec![u32::MAX; states];
    cost[0] = 0.0;
    flips[0] = 0;
    let mut next_cost = vec![f64::INFINITY; states];
    let mut next_flips = vec![u32::MAX; states];
    let mut path = PathBits::new(n, states);

    let mut idx = 0;
    for block in 0..l {
        let remaining = (l - block) as u32;
        let mask = if remaining < code.h {
            (1u32 << remaining) - 1
        } else {
            (1u32 << code.h) - 1
        };
        for j in 0..code.block_width(block) {
            let col = (code.columns[j] & mask) as usize;
            let xi = x.get(idx);
            let rho_i = rho[idx];
            let cost_y0 = if xi == 1 { rho_i } else { 0.0 };
            let cost_y1 = if xi == 0 { rho_i } else { 0.0 };
            let extra_flip_y0 = u32::from(xi == 1);
            let extra_flip_y1 = u32::from(xi == 0);
            for state in 0..states {
                let c0 = cost[state] + cost_y0;
                let f0 = flips[state].saturating_add(extra_flip_y0);
                let from = state ^ col;
                let c1 = cost[from] + cost_y1;
                let f1 = flips[from].saturating_add(extra_flip_y1);
                // Tie rule: lower cost, then fewer flips, then the 0 branch.
                let take_one = c1 < c0 || (c1 == c0 && f1 < f0);
                if take_one {
                    next_cost[state] = c1;
                    next_flips[state] = f1;
                    path.set(idx, state, 1);
                } else {
                    next_cost[state] = c0;
                    next_flips[state] = f0;
                }
            }
            std::mem::swap(&mut cost, &mut next_cost);
            std::mem::swap(&mut flips, &mut next_flips);
            idx += 1;
        }
        // Consume message row `block`: keep states whose bottom bit matches
        // the message bit, then shift the band window down one row.
        let mbit = m.get(block) as usize;
        for state in 0..states / 2 {
            cost[state] = cost[2 * state + mbit];
            flips[state] = flips[2 * state + mbit];
        }
        for state in states / 2..states {
            cost[state] = f64::INFINITY;
            flips[state] = u32::MAX;
        }
    }
    debug_assert_eq!(idx, n);

    if !cost[0].is_finite() {
        return Err(Error::Internal(
            "trellis terminated with no feasible path".into(),
        ));
    }

    // Backtrack from the terminal state, undoing each message-bit cut.
    let mut y = vec![0u8; n];
    let mut state = 0usize;
    for block in (0..l).rev() {
        state = 2 * state + m.get(block) as usize;
        let remaining = (l - block) as u32;
        let mask = if remaining < code.h {
            (1u32 << remaining) - 1
        } else {
            (1u32 << code.h) - 1
        };
        for j in (0..code.block_width(block)).rev() {
            idx -= 1;
            let bit = path.get(idx, state);
            y[idx] = bit;
            if bit == 1 {
                state ^= (code.columns[j] & mask) as usize;
            }
        }
    }
    if state != 0 {
        return Err(Error::Internal("trellis backtrack left a dangling state".into()));
    }

    Ok(finish_embed(x, rho, BitVector(y)))
}

// Recomputes the flip pattern and index-order cost sum for a solution vector,
// so equal flip sets always report bit-identical totals.
fn finish_embed(x: &BitVector, rho: &[f64], y: BitVector) -> EmbedResult {
    let flip_pattern = x.xor(&y);
    let total_cost = flip_pattern
        .bits()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 1)
        .map(|(i, _)| rho[i])
        .sum();
    EmbedResult {
        stego_lsb: y,
        flip_pattern,
        total_cost,
    }
}

/// Extracts the message as `H × y` over GF(2), computed column by column from
/// the band layout.
pub fn stc_extract(y: &BitVector, code: &StcCode) -> Result<BitVector> {
    if y.len() != code.n {
        return Err(Error::InvalidArgument(format!(
            "stego vector has {} bits, code expects {}",
            y.len(),
            code.n
        )));
    }
    let mut m = vec![0u8; code.l];
    let mut idx = 0;
    for block in 0..code.l {
        for j in 0..code.block_width(block) {
            if y.get(idx) == 1 {
                let col = code.columns[j];
                for k in 0..code.h as usize {
                    let row = block + k;
                    if row < code.l && (col >> k) & 1 == 1 {
                        m[row] ^= 1;
                    }
                }
            }
            idx += 1;
        }
    }
    Ok(BitVector(m))
}

/// Maximum cover length accepted by [`brute_force_embed`].
pub const BRUTE_FORCE_MAX_N: usize = 20;

/// Exhaustive reference embedder: enumerates all 2^n candidate vectors and
/// keeps the cheapest one satisfying the syndrome constraint (ties: fewer
/// flips, then the numerically smallest vector). Exact by construction.
pub fn brute_force_embed(
    x: &BitVector,
    m: &BitVector,
    rho: &[f64],
    code: &StcCode,
) -> Result<EmbedResult> {
    let n = code.n;
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::Size(format!(
            "brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}"
        )));
    }
    if x.len() != n || rho.len() != n || m.len() != code.l {
        return Err(Error::InvalidArgument("length mismatch".into()));
    }

    // Row mask per position: which message rows its column touches.
    let matrix = code.dense_parity_matrix();
    let mut row_masks = vec![0u32; n];
    for (row, cols) in matrix.iter().enumerate() {
        for (pos, &entry) in cols.iter().enumerate() {
            if entry == 1 {
                row_masks[pos] |= 1 << row;
            }
        }
    }
    let target: u32 = (0..code.l).map(|i| u32::from(m.get(i)) << i).sum();

    let evaluate = |y_bits: u64| -> (f64, u32) {
        let mut total = 0.0;
        let mut nflips = 0u32;
        for (i, &cost) in rho.iter().enumerate() {
            let yi = ((y_bits >> i) & 1) as u8;
            if yi != x.get(i) {
                total += cost;
                nflips += 1;
            }
        }
        (total, nflips)
    };

    let mut best: Option<(f64, u32, u64)> = None;
    let mut consider = |y_bits: u64| {
        let (total, nflips) = evaluate(y_bits);
        let better = match &best {
            None => true,
            Some((bc, bf, by)) => {
                total < *bc || (total == *bc && (nflips < *bf || (nflips == *bf && y_bits < *by)))
            }
        };
        if better {
            best = Some((total, nflips, y_bits));
        }
    };

    // Gray-code walk keeps the syndrome update to a single XOR per candidate.
    let mut syndrome = 0u32;
    let mut y_bits = 0u64;
    if syndrome == target {
        consider(y_bits);
    }
    for t in 1u64..(1u64 << n) {
        let toggled = t.trailing_zeros() as usize;
        y_bits ^= 1 << toggled;
        syndrome ^= row_masks[toggled];
        if syndrome == target {
            consider(y_bits);
        }
    }

    let (_, _, y_bits) = best.ok_or_else(|| {
        Error::Internal("no vector satisfies the syndrome constraint".into())
    })?;
    let y = BitVector((0..n).map(|i| ((y_bits >> i) & 1) as u8).collect());
    Ok(finish_embed(x, rho, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bits(rng: &mut ChaCha8Rng, len: usize) -> BitVector {
        BitVector::from_bits((0..len).map(|_| rng.gen_range(0..2u8)).collect()).unwrap()
    }

    fn random_costs(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(f64::EPSILON..1.0)).collect()
    }

    // Independent syndrome check through the dense matrix.
    fn dense_syndrome(y: &BitVector, code: &StcCode) -> BitVector {
        let matrix = code.dense_parity_matrix();
        let bits = matrix
            .iter()
            .map(|row| {
                row.iter()
                    .zip(y.bits())
                    .fold(0u8, |acc, (&h, &yi)| acc ^ (h & yi))
            })
            .collect();
        BitVector::from_bits(bits).unwrap()
    }

    #[test]
    fn banded_matrix_matches_hand_tiling() {
        // n=8, l=4, h=2, Ĥ columns [1,1] and [1,0] (top row first).
        let code = StcCode::with_columns(8, 4, 2, vec![0b11, 0b01]).unwrap();
        let expected = vec![
            vec![1, 1, 0, 0, 0, 0, 0, 0],
            vec![1, 0, 1, 1, 0, 0, 0, 0],
            vec![0, 0, 1, 0, 1, 1, 0, 0],
            vec![0, 0, 0, 0, 1, 0, 1, 1],
        ];
        assert_eq!(code.dense_parity_matrix(), expected);
    }

    #[test]
    fn build_code_is_deterministic() {
        let a = build_code(100, 37, 7, 99).unwrap();
        let b = build_code(100, 37, 7, 99).unwrap();
        assert_eq!(a, b);
        let c = build_code(100, 37, 7, 100).unwrap();
        assert_ne!(a.columns(), c.columns());
    }

    #[test]
    fn build_code_rejects_overfull_payload() {
        assert!(matches!(build_code(8, 5, 2, 0), Err(Error::Payload(_))));
    }

    #[test]
    fn build_code_pins_first_and_last_columns() {
        let code = build_code(64, 13, 7, 5).unwrap();
        let all_ones = (1 << 7) - 1;
        assert_eq!(*code.columns().first().unwrap(), all_ones);
        assert_eq!(*code.columns().last().unwrap(), all_ones);
        assert!(code.columns().iter().all(|c| c & 1 == 1));
        // Interior columns must not repeat the all-ones pattern.
        assert!(code.columns()[1..code.columns().len() - 1]
            .iter()
            .all(|&c| c != all_ones));
    }

    #[test]
    fn build_code_width_two_avoids_duplicate_columns() {
        // Half-rate payloads give two-column blocks; a duplicated all-ones
        // pair would pin every block parity.
        let code = build_code(64, 32, 7, 5).unwrap();
        assert_eq!(code.columns().len(), 2);
        assert_eq!(code.columns()[0], (1 << 7) - 1);
        assert_ne!(code.columns()[1], (1 << 7) - 1);
        assert_eq!(code.columns()[1] & 1, 1);
    }

    #[test]
    fn block_widths_cover_n_exactly() {
        for (n, l) in [(8, 4), (10, 3), (64, 13), (17, 5), (9, 9)] {
            let code = StcCode::with_columns(n, l, 2, vec![3; n.div_ceil(l)]).unwrap();
            let total: usize = (0..l).map(|i| code.block_width(i)).sum();
            assert_eq!(total, n);
        }
    }

    #[test]
    fn satisfied_message_needs_no_flips() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let code = build_code(24, 8, 4, rng.gen()).unwrap();
            let x = random_bits(&mut rng, 24);
            let m = dense_syndrome(&x, &code);
            let rho = random_costs(&mut rng, 24);
            let result = stc_embed(&x, &m, &rho, &code).unwrap();
            assert_eq!(result.total_cost, 0.0);
            assert_eq!(result.flip_pattern.weight(), 0);
            assert_eq!(result.stego_lsb, x);
        }
    }

    #[test]
    fn embed_matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let n = rng.gen_range(4..=16);
            let l = rng.gen_range(1..=n / 2);
            let h = rng.gen_range(2..=7);
            let code = build_code(n, l, h, rng.gen()).unwrap();
            let x = random_bits(&mut rng, n);
            let m = random_bits(&mut rng, l);
            let rho = random_costs(&mut rng, n);

            let trellis = stc_embed(&x, &m, &rho, &code).unwrap();
            let brute = brute_force_embed(&x, &m, &rho, &code).unwrap();
            assert_eq!(
                trellis.total_cost, brute.total_cost,
                "suboptimal trellis at n={n}, l={l}, h={h}"
            );
            assert_eq!(dense_syndrome(&trellis.stego_lsb, &code), m);
            assert_eq!(dense_syndrome(&brute.stego_lsb, &code), m);
        }
    }

    #[test]
    fn uniform_costs_give_minimum_hamming_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.gen_range(4..=14);
            let l = rng.gen_range(1..=n / 2);
            let code = build_code(n, l, 3, rng.gen()).unwrap();
            let x = random_bits(&mut rng, n);
            let m = random_bits(&mut rng, l);
            let rho = vec![1.0; n];
            let trellis = stc_embed(&x, &m, &rho, &code).unwrap();
            let brute = brute_force_embed(&x, &m, &rho, &code).unwrap();
            assert_eq!(trellis.total_cost, brute.total_cost);
            assert_eq!(trellis.flip_pattern.weight(), brute.flip_pattern.weight());
        }
    }

    #[test]
    fn raising_a_flipped_cost_never_lowers_the_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..100 {
            let n = rng.gen_range(8..=40);
            let l = rng.gen_range(2..=n / 2);
            let code = build_code(n, l, rng.gen_range(2..=7), rng.gen()).unwrap();
            let x = random_bits(&mut rng, n);
            let m = random_bits(&mut rng, l);
            let mut rho = random_costs(&mut rng, n);
            let first = stc_embed(&x, &m, &rho, &code).unwrap();
            let Some(pos) = first.flip_pattern.bits().iter().position(|&s| s == 1) else {
                continue;
            };
            rho[pos] += rng.gen_range(0.1..10.0);
            let second = stc_embed(&x, &m, &rho, &code).unwrap();
            assert!(second.total_cost >= first.total_cost);
        }
    }

    // Is there a y with H·y = m that agrees with x on every wet position?
    // Gaussian elimination over GF(2) with the wet coordinates pinned.
    fn wet_free_feasible(code: &StcCode, x: &BitVector, m: &BitVector, wet: &[usize]) -> bool {
        let matrix = code.dense_parity_matrix();
        let l = code.message_len();
        let free: Vec<usize> = (0..code.n()).filter(|p| !wet.contains(p)).collect();
        let mut rows: Vec<(Vec<u8>, u8)> = (0..l)
            .map(|r| {
                let coeffs: Vec<u8> = free.iter().map(|&p| matrix[r][p]).collect();
                let mut rhs = m.get(r);
                for &p in wet {
                    rhs ^= matrix[r][p] & x.get(p);
                }
                (coeffs, rhs)
            })
            .collect();
        let mut pivot_row = 0;
        for col in 0..free.len() {
            let Some(src) = (pivot_row..l).find(|&r| rows[r].0[col] == 1) else {
                continue;
            };
            rows.swap(pivot_row, src);
            for r in 0..l {
                if r != pivot_row && rows[r].0[col] == 1 {
                    let (head, tail) = rows.split_at_mut(r.max(pivot_row));
                    let (a, b) = if r < pivot_row {
                        (&mut head[r], &tail[0])
                    } else {
                        (&mut tail[0], &head[pivot_row])
                    };
                    for (av, bv) in a.0.iter_mut().zip(&b.0) {
                        *av ^= bv;
                    }
                    a.1 ^= b.1;
                }
            }
            pivot_row += 1;
            if pivot_row == l {
                break;
            }
        }
        // Inconsistent iff some all-zero row has rhs 1.
        rows.iter().all(|(coeffs, rhs)| *rhs == 0 || coeffs.contains(&1))
    }

    fn wet_trial(
        rng: &mut ChaCha8Rng,
        max_l: usize,
    ) -> (StcCode, BitVector, BitVector, Vec<usize>, EmbedResult) {
        let n = 64;
        let wet_cost = 1e13;
        let l = rng.gen_range(2..=max_l);
        let code = build_code(n, l, rng.gen_range(6..=7), rng.gen()).unwrap();
        let x = random_bits(rng, n);
        let m = random_bits(rng, l);
        let mut rho = random_costs(rng, n);
        let wet_count = rng.gen_range(0..=n / 10);
        let mut wet_positions = Vec::new();
        while wet_positions.len() < wet_count {
            let p = rng.gen_range(0..n);
            if !wet_positions.contains(&p) {
                wet_positions.push(p);
                rho[p] = wet_cost;
            }
        }
        let result = stc_embed(&x, &m, &rho, &code).unwrap();
        (code, x, m, wet_positions, result)
    }

    #[test]
    fn wet_positions_survive_embedding() {
        // ≤10% wet positions scattered at payloads up to n/3: the minimizer
        // routes every flip around them. (At rates pushing n/2 a fully-wet
        // two-column block near the trellis boundary can make avoidance
        // mathematically infeasible; that regime is covered by the forced-only
        // test below.)
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..1000 {
            let (_, _, _, wet_positions, result) = wet_trial(&mut rng, 64 / 3);
            for &p in &wet_positions {
                assert_eq!(result.flip_pattern.get(p), 0, "wet position {p} flipped");
            }
        }
    }

    #[test]
    fn wet_positions_flip_only_when_no_alternative_exists() {
        // Full payload envelope (l up to n/2). Whenever a wet position does
        // flip, Gaussian elimination must confirm that no syndrome solution
        // avoids the wet set.
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let mut forced = 0;
        for _ in 0..1000 {
            let (code, x, m, wet_positions, result) = wet_trial(&mut rng, 32);
            if wet_positions.iter().any(|&p| result.flip_pattern.get(p) == 1) {
                assert!(
                    !wet_free_feasible(&code, &x, &m, &wet_positions),
                    "embedder flipped a wet position although an alternative existed"
                );
                forced += 1;
            }
        }
        // Forced cases exist but stay rare.
        assert!(forced <= 5, "unexpectedly many forced wet flips: {forced}");
    }

    #[test]
    fn extract_round_trips_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for _ in 0..100 {
            let n = rng.gen_range(8..=64);
            let l = rng.gen_range(1..=n / 2);
            let code = build_code(n, l, rng.gen_range(2..=10), rng.gen()).unwrap();
            let x = random_bits(&mut rng, n);
            let m = random_bits(&mut rng, l);
            let rho = random_costs(&mut rng, n);
            let result = stc_embed(&x, &m, &rho, &code).unwrap();
            assert_eq!(stc_extract(&result.stego_lsb, &code).unwrap(), m);
        }
    }

    #[test]
    fn extract_of_zero_vector_is_zero_message() {
        let code = build_code(32, 8, 5, 1).unwrap();
        let y = BitVector::zeros(32);
        assert_eq!(stc_extract(&y, &code).unwrap(), BitVector::zeros(8));
    }

    #[test]
    fn single_bit_flip_toggles_exactly_its_column_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..50 {
            let n = rng.gen_range(8..=32);
            let l = rng.gen_range(2..=n / 2);
            let code = build_code(n, l, rng.gen_range(2..=7), rng.gen()).unwrap();
            let y = random_bits(&mut rng, n);
            let pos = rng.gen_range(0..n);
            let mut flipped_bits = y.bits().to_vec();
            flipped_bits[pos] ^= 1;
            let y_flipped = BitVector::from_bits(flipped_bits).unwrap();

            // Expected affected rows, recomputed from the band layout.
            let mut block = 0;
            let mut offset = pos;
            while offset >= code.block_width(block) {
                offset -= code.block_width(block);
                block += 1;
            }
            let col = code.columns()[offset];
            let expected: Vec<usize> = (0..code.constraint_height() as usize)
                .filter(|&k| (col >> k) & 1 == 1 && block + k < l)
                .map(|k| block + k)
                .collect();

            let before = stc_extract(&y, &code).unwrap();
            let after = stc_extract(&y_flipped, &code).unwrap();
            let changed: Vec<usize> = (0..l).filter(|&i| before.get(i) != after.get(i)).collect();
            assert_eq!(changed, expected);
        }
    }

    #[test]
    fn brute_force_rejects_large_instances() {
        let code = build_code(24, 8, 4, 0).unwrap();
        let x = BitVector::zeros(24);
        let m = BitVector::zeros(8);
        let rho = vec![1.0; 24];
        assert!(matches!(
            brute_force_embed(&x, &m, &rho, &code),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn brute_force_full_rate_invertible_code_is_forced() {
        // l = n with unit-width blocks gives a lower-triangular banded H with
        // a unit diagonal; the solution is unique and found by forward
        // substitution.
        let n = 10;
        let h = 3;
        let code = StcCode::with_columns(n, n, h, vec![0b111]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let x = random_bits(&mut rng, n);
        let m = random_bits(&mut rng, n);
        let rho = random_costs(&mut rng, n);

        let matrix = code.dense_parity_matrix();
        let mut expected = vec![0u8; n];
        for i in 0..n {
            let mut acc = m.get(i);
            for j in 0..i {
                acc ^= matrix[i][j] & expected[j];
            }
            expected[i] = acc; // diagonal entry is 1
        }

        let result = brute_force_embed(&x, &m, &rho, &code).unwrap();
        assert_eq!(result.stego_lsb.bits(), &expected[..]);
    }

    #[test]
    fn bytes_round_trip_msb_first() {
        let bytes = [0xA5, 0x01, 0xFF, 0x00];
        let bits = BitVector::from_bytes_msb(&bytes);
        assert_eq!(&bits.bits()[..8], &[1, 0, 1, 0, 0, 1, 0, 1]);
        assert_eq!(bits.to_bytes_msb(), bytes);
    }
}
