//! Procedural desk-scale anti-spoofing dataset.
//!
//! Live clips are smooth synthetic "faces" (an elliptical Gaussian blob with
//! two darker eye blobs over a shaded background) drifting slowly across
//! frames. Spoof clips start from a fresh live clip and receive
//! high-frequency corruption (white noise plus a color-shifted moire grating)
//! through spectrum block replacement, so the spoof cue lives in the high
//! band of the spectrum.
//!
//! Sequence `i` (live first, then spoof) draws from its own generator seeded
//! with `seed ^ i`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FrameSequence, Label, RgbImage, Split};
use crate::error::{Error, Result};
use crate::spectral::{synthesize_sequence, MaskParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub n_live: usize,
    pub n_spoof: usize,
    pub frames: usize,
    pub image_size: usize,
    pub seed: u64,
    /// Sequences per class placed in the validation split.
    pub val_per_class: usize,
    /// Sequences per class placed in the test split.
    pub test_per_class: usize,
    /// Amplitude of the high-frequency corruption applied to spoof donors.
    pub corruption: f64,
    pub mask: MaskParams,
}

impl ToyConfig {
    pub const DEFAULT_CORRUPTION: f64 = 0.12;

    pub fn new(n_live: usize, n_spoof: usize, frames: usize, image_size: usize, seed: u64) -> Self {
        ToyConfig {
            n_live,
            n_spoof,
            frames,
            image_size,
            seed,
            val_per_class: 0,
            test_per_class: 0,
            corruption: Self::DEFAULT_CORRUPTION,
            mask: MaskParams::for_size(image_size),
        }
    }

    pub fn with_splits(mut self, val_per_class: usize, test_per_class: usize) -> Self {
        self.val_per_class = val_per_class;
        self.test_per_class = test_per_class;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_live == 0 || self.n_spoof == 0 {
            return Err(Error::arg(format!(
                "need at least one sequence per class (live {}, spoof {})",
                self.n_live, self.n_spoof
            )));
        }
        if self.frames == 0 {
            return Err(Error::arg("frames per sequence must be >= 1"));
        }
        if self.image_size < 16 || !self.image_size.is_power_of_two() {
            return Err(Error::arg(format!(
                "image size must be a power of two >= 16, got {}",
                self.image_size
            )));
        }
        let held = self.val_per_class + self.test_per_class;
        if held > self.n_live || held > self.n_spoof {
            return Err(Error::arg(format!(
                "{held} held-out sequences per class exceed the class counts"
            )));
        }
        Ok(())
    }

    fn split_of(&self, index_in_class: usize, class_count: usize) -> Split {
        let train = class_count - self.val_per_class - self.test_per_class;
        if index_in_class < train {
            Split::Train
        } else if index_in_class < train + self.val_per_class {
            Split::Val
        } else {
            Split::Test
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub sequence: FrameSequence,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub samples: Vec<ToySample>,
}

impl ToyDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &FrameSequence> {
        self.samples
            .iter()
            .filter(move |s| s.split == split)
            .map(|s| &s.sequence)
    }
}

struct FaceClip {
    bg: [f64; 3],
    grad: [f64; 2],
    skin: [f64; 3],
    center: [f64; 2],
    velocity: [f64; 2],
    sigma: [f64; 2],
    flicker: f64,
}

impl FaceClip {
    fn draw(rng: &mut ChaCha8Rng, size: usize) -> Self {
        let s = size as f64;
        let sy = s * rng.random_range(0.18..0.24);
        FaceClip {
            bg: [
                rng.random_range(0.2..0.6),
                rng.random_range(0.2..0.6),
                rng.random_range(0.2..0.6),
            ],
            grad: [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)],
            skin: [
                rng.random_range(0.7..0.9),
                rng.random_range(0.5..0.7),
                rng.random_range(0.4..0.6),
            ],
            center: [
                s * rng.random_range(0.4..0.6),
                s * rng.random_range(0.4..0.6),
            ],
            velocity: [
                s * rng.random_range(-0.01..0.01),
                s * rng.random_range(-0.01..0.01),
            ],
            sigma: [sy, sy * rng.random_range(0.75..0.9)],
            flicker: rng.random_range(0.0..0.03),
        }
    }

    fn frame(&self, t: usize, size: usize) -> RgbImage {
        let n = size * size;
        let s = size as f64;
        let cy = self.center[0] + self.velocity[0] * t as f64;
        let cx = self.center[1] + self.velocity[1] * t as f64;
        let gain = 1.0 + self.flicker * libm::sin(t as f64);
        let eye_dy = -0.25 * self.sigma[0];
        let eye_dx = 0.35 * self.sigma[1];
        let eye_r = 0.12 * self.sigma[0];
        let mut data = alloc::vec![0.0f32; 3 * n];
        for y in 0..size {
            for x in 0..size {
                let (fy, fx) = (y as f64, x as f64);
                let ny = (fy - cy) / self.sigma[0];
                let nx = (fx - cx) / self.sigma[1];
                let face = libm::exp(-0.5 * (ny * ny + nx * nx));
                let eye = |ex: f64| {
                    let dy = fy - (cy + eye_dy);
                    let dx = fx - (cx + ex);
                    libm::exp(-0.5 * (dy * dy + dx * dx) / (eye_r * eye_r))
                };
                let eyes = eye(-eye_dx) + eye(eye_dx);
                let shade = self.grad[0] * (fy / s - 0.5) + self.grad[1] * (fx / s - 0.5);
                for c in 0..3 {
                    let bg = self.bg[c] + shade;
                    let v = (bg * (1.0 - face) + self.skin[c] * face) * (1.0 - 0.5 * eyes);
                    data[c * n + y * size + x] = (v * gain).clamp(0.0, 1.0) as f32;
                }
            }
        }
        RgbImage {
            height: size,
            width: size,
            data,
        }
    }

    fn sequence(&self, frames: usize, size: usize) -> Vec<RgbImage> {
        (0..frames).map(|t| self.frame(t, size)).collect()
    }
}

/// Adds white noise and a moire grating with a per-channel phase shift.
fn corrupt(img: &RgbImage, rng: &mut ChaCha8Rng, amplitude: f64, grating: [f64; 3]) -> RgbImage {
    let [fy, fx, phase] = grating;
    let n = img.height * img.width;
    let mut out = img.clone();
    for c in 0..3 {
        let shift = phase + c as f64 * 2.0 * PI / 3.0;
        for y in 0..img.height {
            for x in 0..img.width {
                let i = c * n + y * img.width + x;
                let moire =
                    0.5 * amplitude * libm::sin(2.0 * PI * (fy * y as f64 + fx * x as f64) + shift);
                let noise = amplitude * rng.random_range(-1.0..1.0);
                out.data[i] = (img.data[i] as f64 + moire + noise).clamp(0.0, 1.0) as f32;
            }
        }
    }
    out
}

fn live_clip(cfg: &ToyConfig, index: usize) -> Result<FrameSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ index as u64);
    let face = FaceClip::draw(&mut rng, cfg.image_size);
    FrameSequence::new(
        format!("live_{index:04}"),
        Label::Live,
        face.sequence(cfg.frames, cfg.image_size),
    )
}

fn spoof_clip(cfg: &ToyConfig, index: usize, ordinal: usize) -> Result<FrameSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ index as u64);
    let face = FaceClip::draw(&mut rng, cfg.image_size);
    let base = FrameSequence::new(
        "base",
        Label::Live,
        face.sequence(cfg.frames, cfg.image_size),
    )?;
    let grating = [
        rng.random_range(0.25..0.45),
        rng.random_range(0.25..0.45),
        rng.random_range(0.0..2.0 * PI),
    ];
    let donor_frames = base
        .frames
        .iter()
        .map(|f| corrupt(f, &mut rng, cfg.corruption, grating))
        .collect();
    let donor = FrameSequence::new("donor", Label::Spoof, donor_frames)?;
    let mask_seed = rng.random::<u64>();
    let (mut seq, _) = synthesize_sequence(&base, &donor, mask_seed, &cfg.mask)?;
    seq.id = format!("spoof_{ordinal:04}");
    Ok(seq)
}

/// Generates `n_live + n_spoof` labeled clips. Deterministic in `cfg.seed`.
pub fn generate_toy_dataset(cfg: &ToyConfig) -> Result<ToyDataset> {
    cfg.validate()?;
    let mut samples = Vec::with_capacity(cfg.n_live + cfg.n_spoof);
    for i in 0..cfg.n_live {
        samples.push(ToySample {
            sequence: live_clip(cfg, i)?,
            split: cfg.split_of(i, cfg.n_live),
        });
    }
    for j in 0..cfg.n_spoof {
        samples.push(ToySample {
            sequence: spoof_clip(cfg, cfg.n_live + j, j)?,
            split: cfg.split_of(j, cfg.n_spoof),
        });
    }
    Ok(ToyDataset { samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_labels() {
        let ds = generate_toy_dataset(&ToyConfig::new(4, 4, 2, 32, 1).with_splits(1, 1)).unwrap();
        assert_eq!(ds.samples.len(), 8);
        let live = ds
            .samples
            .iter()
            .filter(|s| s.sequence.label == Label::Live)
            .count();
        assert_eq!(live, 4);
        assert_eq!(ds.split(Split::Train).count(), 4);
        assert_eq!(ds.split(Split::Val).count(), 2);
        assert_eq!(ds.split(Split::Test).count(), 2);
        for s in &ds.samples {
            assert_eq!(s.sequence.len(), 2);
            assert_eq!(s.sequence.extent(), (32, 32));
            assert!(s
                .sequence
                .frames
                .iter()
                .all(|f| f.data.iter().all(|v| (0.0..=1.0).contains(v))));
        }
    }

    #[test]
    fn deterministic() {
        let cfg = ToyConfig::new(2, 2, 2, 32, 9);
        assert_eq!(
            generate_toy_dataset(&cfg).unwrap(),
            generate_toy_dataset(&cfg).unwrap()
        );
    }

    #[test]
    fn rejects_empty_class() {
        assert!(generate_toy_dataset(&ToyConfig::new(2, 0, 2, 32, 9)).is_err());
        assert!(generate_toy_dataset(&ToyConfig::new(2, 2, 2, 48, 9)).is_err());
        assert!(generate_toy_dataset(&ToyConfig::new(2, 2, 2, 32, 9).with_splits(2, 1)).is_err());
    }

    #[test]
    fn live_frames_drift() {
        let ds = generate_toy_dataset(&ToyConfig::new(1, 1, 3, 32, 4)).unwrap();
        let f = &ds.samples[0].sequence.frames;
        assert_ne!(f[0], f[2]);
    }
}
