use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default standard deviation for weight initialization.
pub const INIT_STD: f64 = 0.02;

/// Tensor of i.i.d. normal samples; deterministic for a fixed seed.
pub fn init_normal<T: Scalar>(dims: &[usize], mean: f64, std: f64, seed: u64) -> Result<Tensor<T>> {
    let normal = Normal::new(mean, std)
        .map_err(|_| Error::arg(alloc::format!("invalid normal std {std}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| T::of(normal.sample(&mut rng))).collect();
    Tensor::new(dims, data)
}
