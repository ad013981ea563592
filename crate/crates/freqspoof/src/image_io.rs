//! 8-bit PNG frames.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use freqspoof_core::data::RgbImage;
use png::{BitDepth, ColorType, Decoder, Encoder, Transformations};

use crate::error::{Error, Result};

/// Decodes any 8/16-bit PNG to planar RGB in `[0, 1]`. Gray is replicated,
/// alpha dropped.
pub fn read_png(path: &Path) -> Result<RgbImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let undecodable =
        |e: png::DecodingError| Error::Data(format!("{}: cannot decode PNG: {e}", path.display()));
    let mut decoder = Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(undecodable)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Data(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(undecodable)?;
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => {
            return Err(Error::Data(format!(
                "{}: unexpanded palette",
                path.display()
            )))
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let n = w * h;
    let mut data = vec![0.0f32; 3 * n];
    for y in 0..h {
        let row = &buf[y * info.line_size..];
        for x in 0..w {
            let px = &row[x * channels..];
            for c in 0..3 {
                let v = if channels < 3 { px[0] } else { px[c] };
                data[c * n + y * w + x] = v as f32 / 255.0;
            }
        }
    }
    Ok(RgbImage::new(h, w, data)?)
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write(path: &Path, width: usize, height: usize, color: ColorType, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(BitDepth::Eight);
    let encode_err =
        |e: png::EncodingError| Error::Data(format!("{}: cannot encode PNG: {e}", path.display()));
    let mut writer = enc.write_header().map_err(encode_err)?;
    writer.write_image_data(bytes).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

/// Writes an RGB frame, quantizing `[0, 1]` to 8 bits.
pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    let n = img.height * img.width;
    let mut bytes = Vec::with_capacity(3 * n);
    for i in 0..n {
        for c in 0..3 {
            bytes.push(quantize(img.data[c * n + i] as f64));
        }
    }
    write(path, img.width, img.height, ColorType::Rgb, &bytes)
}

/// Writes a row-major single-channel map in `[0, 1]` as 8-bit grayscale.
pub fn write_gray_png(path: &Path, height: usize, width: usize, values: &[f64]) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::Data(format!(
            "{}: {height}x{width} map given {} values",
            path.display(),
            values.len()
        )));
    }
    let bytes: Vec<u8> = values.iter().map(|&v| quantize(v)).collect();
    write(path, width, height, ColorType::Grayscale, &bytes)
}
