//! 2-D Fourier analysis of frames and Fourier-domain spoof synthesis.
//!
//! Transforms are unnormalized forward / `1/(H*W)` inverse. Spectra are kept
//! in raw FFT order unless `dc_centered` is set, in which case index
//! `(H/2, W/2)` holds the DC bin.

mod fft;
pub mod mask;
pub mod synth;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use mask::{sample_block_mask, BlockMask, MaskParams};
pub use synth::{synthesize_sequence, transfer_spoof_pattern};

/// Largest Hermitian violation accepted by [`ifft2d`], relative to
/// `max(1, max |S|)`.
pub const HERMITIAN_TOLERANCE: f64 = 1e-3;

/// Largest imaginary residual silently dropped by [`ifft2d`].
pub const IMAG_RESIDUAL_TOLERANCE: f64 = 1e-6;

/// A single-channel real image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "plane {height}x{width} given {} values",
                data.len()
            )));
        }
        Ok(Plane {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Plane {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Plane {
            height,
            width,
            data,
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn max_abs_diff(&self, other: &Plane) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub height: usize,
    pub width: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub dc_centered: bool,
}

fn shift_buffer(h: usize, w: usize, src: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for r in 0..h {
        let sr = (r + h / 2) % h;
        for c in 0..w {
            out[r * w + c] = src[sr * w + (c + w / 2) % w];
        }
    }
    out
}

impl ComplexSpectrum {
    /// Toggles between raw FFT order and DC-centered order. Extents are
    /// even, so the shift is its own inverse.
    pub fn shifted(&self) -> ComplexSpectrum {
        ComplexSpectrum {
            height: self.height,
            width: self.width,
            re: shift_buffer(self.height, self.width, &self.re),
            im: shift_buffer(self.height, self.width, &self.im),
            dc_centered: !self.dc_centered,
        }
    }

    pub fn centered(&self) -> ComplexSpectrum {
        if self.dc_centered {
            self.clone()
        } else {
            self.shifted()
        }
    }

    pub fn raw(&self) -> ComplexSpectrum {
        if self.dc_centered {
            self.shifted()
        } else {
            self.clone()
        }
    }

    pub fn magnitude(&self, i: usize) -> f64 {
        libm::hypot(self.re[i], self.im[i])
    }

    pub fn max_magnitude(&self) -> f64 {
        (0..self.re.len()).fold(0.0, |m, i| f64::max(m, self.magnitude(i)))
    }

    pub fn energy(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum()
    }

    /// `max |S[u,v] - conj(S[-u,-v])|` over all bins.
    pub fn hermitian_violation(&self) -> f64 {
        let s = self.raw();
        let (h, w) = (s.height, s.width);
        let mut worst: f64 = 0.0;
        for u in 0..h {
            for v in 0..w {
                let a = u * w + v;
                let b = ((h - u) % h) * w + (w - v) % w;
                let dr = s.re[a] - s.re[b];
                let di = s.im[a] + s.im[b];
                worst = worst.max(libm::hypot(dr, di));
            }
        }
        worst
    }

    /// Replaces each bin by the mean of itself and its conjugate mirror.
    pub fn symmetrize(&mut self) {
        let (h, w) = (self.height, self.width);
        // in both orders index i mirrors to (H - i) mod H
        let mirror = |u: usize, v: usize| ((h - u) % h) * w + (w - v) % w;
        let (re, im) = (self.re.clone(), self.im.clone());
        for u in 0..h {
            for v in 0..w {
                let a = u * w + v;
                let b = mirror(u, v);
                self.re[a] = 0.5 * (re[a] + re[b]);
                self.im[a] = 0.5 * (im[a] - im[b]);
            }
        }
    }

    /// Energy of bins strictly outside the DC-centered disk of `radius` pixels.
    pub fn band_energy_outside(&self, radius: f64) -> f64 {
        let s = self.centered();
        let (h, w) = (s.height, s.width);
        let mut e = 0.0;
        for r in 0..h {
            for c in 0..w {
                let dr = r as f64 - (h / 2) as f64;
                let dc = c as f64 - (w / 2) as f64;
                if libm::sqrt(dr * dr + dc * dc) > radius {
                    let i = r * w + c;
                    e += s.re[i] * s.re[i] + s.im[i] * s.im[i];
                }
            }
        }
        e
    }
}

/// Log-magnitude spectrum, DC-centered, min-max normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumImage {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

fn check_extents(h: usize, w: usize) -> Result<()> {
    if h < 2 || w < 2 || !h.is_power_of_two() || !w.is_power_of_two() {
        return Err(Error::arg(format!(
            "2-D FFT needs power-of-two extents >= 2, got {h}x{w}; resize the image \
             (e.g. bilinear to {}x{}) first",
            h.max(2).next_power_of_two(),
            w.max(2).next_power_of_two()
        )));
    }
    Ok(())
}

/// Unnormalized forward 2-D DFT of a real image.
pub fn fft2d(image: &Plane) -> Result<ComplexSpectrum> {
    check_extents(image.height, image.width)?;
    let mut re = image.data.clone();
    let mut im = vec![0.0; re.len()];
    fft::fft_2d(image.height, image.width, &mut re, &mut im, false);
    Ok(ComplexSpectrum {
        height: image.height,
        width: image.width,
        re,
        im,
        dc_centered: false,
    })
}

/// Inverse 2-D DFT back to a real image. Rejects spectra that are not
/// Hermitian within [`HERMITIAN_TOLERANCE`].
pub fn ifft2d(spectrum: &ComplexSpectrum) -> Result<Plane> {
    let (h, w) = (spectrum.height, spectrum.width);
    check_extents(h, w)?;
    let scale = spectrum.max_magnitude().max(1.0);
    let violation = spectrum.hermitian_violation() / scale;
    if violation > HERMITIAN_TOLERANCE {
        return Err(Error::arg(format!(
            "spectrum is not Hermitian (relative violation {violation:e}); \
             its inverse would not be a real image"
        )));
    }
    let mut s = spectrum.raw();
    s.symmetrize();
    let (mut re, mut im) = (s.re, s.im);
    fft::fft_2d(h, w, &mut re, &mut im, true);
    let n = (h * w) as f64;
    let residual = im.iter().fold(0.0, |m: f64, v| m.max(v.abs())) / n;
    if residual > IMAG_RESIDUAL_TOLERANCE * (scale / n).max(1.0) {
        return Err(Error::Numeric(format!(
            "inverse FFT left imaginary residual {residual:e}"
        )));
    }
    Plane::new(h, w, re.into_iter().map(|v| v / n).collect())
}

/// `log(1 + |S|)` in DC-centered order, before normalization.
pub fn log_magnitude(spectrum: &ComplexSpectrum) -> Plane {
    let s = spectrum.centered();
    let data = (0..s.re.len())
        .map(|i| libm::log1p(s.magnitude(i)))
        .collect();
    Plane {
        height: s.height,
        width: s.width,
        data,
    }
}

/// DC-centered, log-magnitude, min-max normalized spectrum image.
///
/// A flat nonzero spectrum normalizes to all ones; an all-zero spectrum
/// yields all zeros.
pub fn to_spectrum_image(spectrum: &ComplexSpectrum) -> SpectrumImage {
    let lm = log_magnitude(spectrum);
    let (lo, hi) = lm
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let values = if hi <= 0.0 {
        vec![0.0; lm.data.len()]
    } else if hi == lo {
        vec![1.0; lm.data.len()]
    } else {
        lm.data.iter().map(|&v| (v - lo) / (hi - lo)).collect()
    };
    SpectrumImage {
        height: lm.height,
        width: lm.width,
        values,
    }
}
