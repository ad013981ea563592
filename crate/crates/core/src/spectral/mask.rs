//! Random selection of high-frequency spectrum blocks.
//!
//! Blocks tile the DC-centered spectrum. Block `(r, c)` mirrors to
//! `(rows - 1 - r, cols - 1 - c)`; a block is eligible only when it and its
//! mirror both lie entirely outside the low-frequency disk. The pixel region
//! that is actually replaced is the union of selected blocks and their
//! pixel-wise point reflections through DC, which keeps the replaced set
//! closed under `S[u,v] <-> S[-u,-v]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskParams {
    pub block_size: usize,
    /// Fraction of eligible blocks to select, in `(0, 1]`.
    pub replace_fraction: f64,
    /// Radius of the protected low-frequency disk as a fraction of
    /// `min(H, W) / 2`.
    pub exclusion_radius: f64,
}

impl MaskParams {
    pub const DEFAULT_FRACTION: f64 = 0.3;
    pub const DEFAULT_EXCLUSION: f64 = 0.25;

    /// Defaults: 16 px blocks at 256, scaled proportionally to `size`.
    pub fn for_size(size: usize) -> Self {
        MaskParams {
            block_size: (16 * size / 256).max(1),
            replace_fraction: Self::DEFAULT_FRACTION,
            exclusion_radius: Self::DEFAULT_EXCLUSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockMask {
    pub height: usize,
    pub width: usize,
    pub block_size: usize,
    /// Sorted `(row, col)` block indices.
    pub selected: Vec<(usize, usize)>,
    pub exclusion_radius: f64,
}

impl BlockMask {
    /// A mask that selects nothing.
    pub fn empty(height: usize, width: usize, block_size: usize) -> Self {
        BlockMask {
            height,
            width,
            block_size,
            selected: Vec::new(),
            exclusion_radius: MaskParams::DEFAULT_EXCLUSION,
        }
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.block_size, self.width / self.block_size)
    }

    pub fn mirror(&self, block: (usize, usize)) -> (usize, usize) {
        let (rows, cols) = self.grid();
        (rows - 1 - block.0, cols - 1 - block.1)
    }

    pub fn is_selected(&self, block: (usize, usize)) -> bool {
        self.selected.binary_search(&block).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Radius (pixels) of the protected disk.
    pub fn exclusion_pixels(&self) -> f64 {
        exclusion_pixels(self.height, self.width, self.exclusion_radius)
    }

    /// Pixels (DC-centered order) whose coefficients get replaced.
    pub fn region(&self) -> Vec<bool> {
        let (h, w, b) = (self.height, self.width, self.block_size);
        let mut out = vec![false; h * w];
        for &(br, bc) in &self.selected {
            for r in br * b..(br + 1) * b {
                for c in bc * b..(bc + 1) * b {
                    out[r * w + c] = true;
                    out[((h - r) % h) * w + (w - c) % w] = true;
                }
            }
        }
        out
    }
}

fn exclusion_pixels(h: usize, w: usize, fraction: f64) -> f64 {
    fraction * (h.min(w) as f64 / 2.0)
}

/// Smallest distance from DC `(H/2, W/2)` to any pixel of the block.
pub fn block_min_radius(h: usize, w: usize, b: usize, block: (usize, usize)) -> f64 {
    let gap = |center: usize, start: usize| -> f64 {
        let end = start + b - 1;
        if center < start {
            (start - center) as f64
        } else if center > end {
            (center - end) as f64
        } else {
            0.0
        }
    };
    let dr = gap(h / 2, block.0 * b);
    let dc = gap(w / 2, block.1 * b);
    libm::sqrt(dr * dr + dc * dc)
}

/// Draws a mirror-closed high-frequency block mask. Deterministic in `seed`.
pub fn sample_block_mask(
    seed: u64,
    height: usize,
    width: usize,
    params: &MaskParams,
) -> Result<BlockMask> {
    let b = params.block_size;
    if b == 0 || !height.is_multiple_of(b) || !width.is_multiple_of(b) {
        return Err(Error::arg(format!(
            "block size {b} must divide the {height}x{width} grid"
        )));
    }
    if !(params.replace_fraction > 0.0 && params.replace_fraction <= 1.0) {
        return Err(Error::arg(format!(
            "replace fraction {} outside (0, 1]",
            params.replace_fraction
        )));
    }
    if params.exclusion_radius.is_nan() || params.exclusion_radius < 0.0 {
        return Err(Error::arg("exclusion radius must be >= 0"));
    }
    let radius = exclusion_pixels(height, width, params.exclusion_radius);
    let (rows, cols) = (height / b, width / b);
    let outside = |blk: (usize, usize)| block_min_radius(height, width, b, blk) > radius;
    let eligible: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .filter(|&blk| outside(blk) && outside((rows - 1 - blk.0, cols - 1 - blk.1)))
        .collect();
    if eligible.is_empty() {
        return Err(Error::arg(format!(
            "exclusion disk of radius {radius:.1} px leaves no eligible {b}px block \
             in a {height}x{width} spectrum"
        )));
    }
    let count = libm::round(params.replace_fraction * eligible.len() as f64) as usize;
    let mut order = eligible;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut selected: Vec<(usize, usize)> = Vec::with_capacity(2 * count);
    for &blk in order.iter().take(count) {
        selected.push(blk);
        selected.push((rows - 1 - blk.0, cols - 1 - blk.1));
    }
    selected.sort_unstable();
    selected.dedup();
    Ok(BlockMask {
        height,
        width,
        block_size: b,
        selected,
        exclusion_radius: params.exclusion_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(fraction: f64) -> MaskParams {
        MaskParams {
            block_size: 8,
            replace_fraction: fraction,
            exclusion_radius: 0.25,
        }
    }

    #[test]
    fn tiny_fraction_gives_empty_mask() {
        let m = sample_block_mask(1, 64, 64, &params(1e-3)).unwrap();
        assert!(m.is_empty());
        assert!(m.region().iter().all(|&x| !x));
    }

    #[test]
    fn deterministic_in_seed() {
        let a = sample_block_mask(5, 64, 64, &params(0.3)).unwrap();
        let b = sample_block_mask(5, 64, 64, &params(0.3)).unwrap();
        let c = sample_block_mask(6, 64, 64, &params(0.3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.selected, c.selected);
    }

    #[test]
    fn mirror_closed_and_outside_disk() {
        let m = sample_block_mask(9, 64, 64, &params(0.5)).unwrap();
        assert!(!m.is_empty());
        for &blk in &m.selected {
            assert!(m.is_selected(m.mirror(blk)));
            assert!(block_min_radius(64, 64, 8, blk) > m.exclusion_pixels());
        }
    }

    #[test]
    fn rejects_full_exclusion_and_bad_args() {
        let mut p = params(0.3);
        p.exclusion_radius = 2.0;
        assert!(sample_block_mask(0, 64, 64, &p).is_err());
        assert!(sample_block_mask(0, 60, 64, &params(0.3)).is_err());
        assert!(sample_block_mask(0, 64, 64, &params(0.0)).is_err());
        assert!(sample_block_mask(0, 64, 64, &params(1.5)).is_err());
    }

    #[test]
    fn default_block_size_scales() {
        assert_eq!(MaskParams::for_size(256).block_size, 16);
        assert_eq!(MaskParams::for_size(64).block_size, 4);
    }
}
