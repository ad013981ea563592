use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Depth supervision target: live maps are a normalized bump in `[0, 1]`,
/// spoof maps are identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthLabel {
    pub size: usize,
    pub values: Vec<f32>,
    pub is_live: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthParams {
    /// Map side length (32 at full scale, `image_size / 8` in general).
    pub size: usize,
    /// Bump width as a fraction of `size`.
    pub sigma: f64,
    /// Maximal center offset from the map center, as a fraction of `size`.
    pub jitter: f64,
}

impl Default for DepthParams {
    fn default() -> Self {
        DepthParams {
            size: 32,
            sigma: 0.2,
            jitter: 1.0 / 16.0,
        }
    }
}

impl DepthParams {
    pub fn with_size(size: usize) -> Self {
        DepthParams {
            size,
            ..Self::default()
        }
    }
}

/// Procedural live-face depth: a Gaussian bump near the center with seeded
/// jitter of position and width, min-max normalized per map.
pub fn make_live_depth_label(params: &DepthParams, seed: u64) -> DepthLabel {
    let n = params.size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (n as f64 - 1.0) / 2.0;
    let span = params.jitter * n as f64;
    let cy = half + rng.random_range(-1.0..=1.0) * span;
    let cx = half + rng.random_range(-1.0..=1.0) * span;
    let sigma = params.sigma * n as f64 * rng.random_range(0.9..=1.1);
    let raw: Vec<f64> = (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as f64, (i % n) as f64);
            let d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            libm::exp(-d2 / (2.0 * sigma * sigma))
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if hi > lo {
        raw.iter().map(|&v| ((v - lo) / (hi - lo)) as f32).collect()
    } else {
        vec![1.0; n * n]
    };
    DepthLabel {
        size: n,
        values,
        is_live: true,
    }
}

pub fn make_spoof_depth_label(size: usize) -> DepthLabel {
    DepthLabel {
        size,
        values: vec![0.0; size * size],
        is_live: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn live_label_range_and_peak() {
        for seed in 0..20 {
            let l = make_live_depth_label(&DepthParams::default(), seed);
            let max = l.values.iter().copied().fold(f32::MIN, f32::max);
            let min = l.values.iter().copied().fold(f32::MAX, f32::min);
            assert_eq!(max, 1.0);
            assert_eq!(min, 0.0);
            let center = l.values[16 * 32 + 16];
            for corner in [0, 31, 31 * 32, 32 * 32 - 1] {
                assert!(center > l.values[corner]);
            }
        }
    }

    #[test]
    fn live_label_is_smooth() {
        for seed in 0..50 {
            let l = make_live_depth_label(&DepthParams::default(), seed);
            for y in 0..32 {
                for x in 0..32 {
                    let v = l.values[y * 32 + x];
                    if x + 1 < 32 {
                        assert!((v - l.values[y * 32 + x + 1]).abs() < 0.2);
                    }
                    if y + 1 < 32 {
                        assert!((v - l.values[(y + 1) * 32 + x]).abs() < 0.2);
                    }
                }
            }
        }
    }

    #[test]
    fn spoof_label_is_zero() {
        let l = make_spoof_depth_label(32);
        assert!(!l.is_live);
        assert_eq!(l.values.len(), 1024);
        assert!(l.values.iter().all(|&v| v == 0.0));
    }
}
