//! Block-replacement transfer of spoof patterns between spectra.

use alloc::format;
use alloc::vec::Vec;

use super::mask::{sample_block_mask, BlockMask, MaskParams};
use super::{fft2d, ifft2d, Plane};
use crate::data::{FrameSequence, Label, RgbImage};
use crate::error::{Error, Result};

/// Overwrites the masked coefficients (real and imaginary parts) of the live
/// spectrum with the spoof spectrum's, restores Hermitian symmetry, inverts,
/// and clamps to `[0, 1]`.
pub fn transfer_spoof_pattern(live: &Plane, spoof: &Plane, mask: &BlockMask) -> Result<Plane> {
    if live.height != spoof.height || live.width != spoof.width {
        return Err(Error::shape(format!(
            "live {}x{} vs spoof {}x{}",
            live.height, live.width, spoof.height, spoof.width
        )));
    }
    if mask.height != live.height || mask.width != live.width {
        return Err(Error::shape(format!(
            "mask grid {}x{} does not match image {}x{}",
            mask.height, mask.width, live.height, live.width
        )));
    }
    let (h, w) = (live.height, live.width);
    let donor = fft2d(spoof)?.centered();
    let mut spec = fft2d(live)?.centered();
    for (i, take) in mask.region().into_iter().enumerate() {
        if take {
            spec.re[i] = donor.re[i];
            spec.im[i] = donor.im[i];
        }
    }
    spec.symmetrize();
    let mut out = ifft2d(&spec)?;
    for v in &mut out.data {
        *v = v.clamp(0.0, 1.0);
    }
    debug_assert_eq!((out.height, out.width), (h, w));
    Ok(out)
}

fn transfer_rgb(live: &RgbImage, spoof: &RgbImage, mask: &BlockMask) -> Result<RgbImage> {
    let planes = (0..3)
        .map(|c| transfer_spoof_pattern(&live.channel(c), &spoof.channel(c), mask))
        .collect::<Result<Vec<_>>>()?;
    RgbImage::from_planes(&planes)
}

/// Synthesizes a spoof sequence: one mask is drawn for frame 0 and reused for
/// every frame, frame `t` taking its donor blocks from spoof frame `t`.
pub fn synthesize_sequence(
    live: &FrameSequence,
    spoof: &FrameSequence,
    seed: u64,
    params: &MaskParams,
) -> Result<(FrameSequence, BlockMask)> {
    if live.len() != spoof.len() {
        return Err(Error::shape(format!(
            "live sequence has {} frames, spoof donor has {}",
            live.len(),
            spoof.len()
        )));
    }
    let (h, w) = live.extent();
    if spoof.extent() != (h, w) {
        return Err(Error::shape(format!(
            "live frames {h}x{w} vs spoof frames {:?}",
            spoof.extent()
        )));
    }
    let mask = sample_block_mask(seed, h, w, params)?;
    let frames = live
        .frames
        .iter()
        .zip(&spoof.frames)
        .map(|(l, s)| transfer_rgb(l, s, &mask))
        .collect::<Result<Vec<_>>>()?;
    let seq = FrameSequence::new(format!("{}-synth", live.id), Label::Spoof, frames)?;
    Ok((seq, mask))
}
