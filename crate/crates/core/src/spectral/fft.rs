//! Iterative radix-2 Cooley-Tukey transforms on split real/imaginary buffers.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

fn bit_reverse_permute(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
}

/// In-place unnormalized DFT of length `re.len()` (a power of two).
/// `inverse` flips the twiddle sign; no `1/n` scaling is applied.
pub(crate) fn fft_1d(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    debug_assert!(n.is_power_of_two() && im.len() == n);
    if n < 2 {
        return;
    }
    bit_reverse_permute(re, im);
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        let (tw_re, tw_im): (Vec<f64>, Vec<f64>) = (0..half)
            .map(|k| {
                let a = step * k as f64;
                (libm::cos(a), libm::sin(a))
            })
            .unzip();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (a, b) = (start + k, start + k + half);
                let xr = re[b] * tw_re[k] - im[b] * tw_im[k];
                let xi = re[b] * tw_im[k] + im[b] * tw_re[k];
                re[b] = re[a] - xr;
                im[b] = im[a] - xi;
                re[a] += xr;
                im[a] += xi;
            }
        }
        len <<= 1;
    }
}

/// Row-major 2-D transform: rows, then columns.
pub(crate) fn fft_2d(h: usize, w: usize, re: &mut [f64], im: &mut [f64], inverse: bool) {
    for r in 0..h {
        fft_1d(
            &mut re[r * w..(r + 1) * w],
            &mut im[r * w..(r + 1) * w],
            inverse,
        );
    }
    let mut cr = vec![0.0; h];
    let mut ci = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            cr[r] = re[r * w + c];
            ci[r] = im[r * w + c];
        }
        fft_1d(&mut cr, &mut ci, inverse);
        for r in 0..h {
            re[r * w + c] = cr[r];
            im[r * w + c] = ci[r];
        }
    }
}
