use alloc::vec::Vec;

use super::RgbImage;
use crate::spectral::Plane;

/// Hexcone RGB -> HSV, all components in `[0, 1]` (hue divided by 360
/// degrees). Achromatic pixels get `H = 0, S = 0`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return [0.0, 0.0, v];
    }
    let sector = if max == r {
        let x = (g - b) / delta;
        if x < 0.0 {
            x + 6.0
        } else {
            x
        }
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let h = sector / 6.0;
    [if h >= 1.0 { h - 1.0 } else { h }, s, v]
}

pub fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    if s <= 0.0 {
        return [v, v, v];
    }
    let hh = (h - libm::floor(h)) * 6.0;
    let sector = libm::floor(hh);
    let f = hh - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Planar HSV version of an RGB image.
pub fn hsv_image(img: &RgbImage) -> RgbImage {
    let n = img.height * img.width;
    let mut data = alloc::vec![0.0f32; 3 * n];
    for i in 0..n {
        let rgb = [
            img.data[i] as f64,
            img.data[n + i] as f64,
            img.data[2 * n + i] as f64,
        ];
        let hsv = rgb_to_hsv(rgb);
        for c in 0..3 {
            data[c * n + i] = hsv[c] as f32;
        }
    }
    RgbImage {
        height: img.height,
        width: img.width,
        data,
    }
}

/// `0.299 R + 0.587 G + 0.114 B`.
pub fn luma(img: &RgbImage) -> Plane {
    let n = img.height * img.width;
    let data = (0..n)
        .map(|i| {
            0.299 * img.data[i] as f64
                + 0.587 * img.data[n + i] as f64
                + 0.114 * img.data[2 * n + i] as f64
        })
        .collect();
    Plane {
        height: img.height,
        width: img.width,
        data,
    }
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
/// Identity when the size is unchanged.
pub fn resize_bilinear(img: &RgbImage, height: usize, width: usize) -> RgbImage {
    if img.height == height && img.width == width {
        return img.clone();
    }
    let sy = img.height as f64 / height as f64;
    let sx = img.width as f64 / width as f64;
    let coord = |o: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (libm::floor(src) as usize).min(len - 1);
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, src - i0 as f64)
    };
    let ys: Vec<_> = (0..height).map(|y| coord(y, sy, img.height)).collect();
    let xs: Vec<_> = (0..width).map(|x| coord(x, sx, img.width)).collect();
    let mut data = Vec::with_capacity(3 * height * width);
    for c in 0..3 {
        let p = img.plane(c);
        let at = |y: usize, x: usize| p[y * img.width + x] as f64;
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                data.push((top * (1.0 - fy) + bot * fy) as f32);
            }
        }
    }
    RgbImage {
        height,
        width,
        data,
    }
}
