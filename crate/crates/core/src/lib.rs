//! Two-stream frequency/spatial/temporal face anti-spoofing.
//!
//! The crate is `no_std` (it needs `alloc`) and carries everything that is
//! pure computation:
//!
//! - [`tensor`]: dense tensors, forward/backward kernels, a small reverse-mode
//!   tape, parameter initialization, SGD and learning-rate schedules.
//! - [`spectral`]: radix-2 2-D FFT, spectrum images, and the block-replacement
//!   spoof synthesizer with temporal mask locking.
//! - [`model`]: SpatialConvNet, FreqTempNet, TemporalConvNet, fusion head and
//!   the joint depth + classification loss.
//! - [`data`]: color conversion, procedural depth labels and a procedural toy
//!   dataset generator.
//! - [`training`]: two-phase optimization (cosine decay for the spatial stream,
//!   warmup for everything else) and split evaluation.
//! - [`eval`]: APCER / BPCER / ACER / HTER / TPR@FPR / EER.
//!
//! File formats, image decoding and the command-line driver live in the
//! companion `freqspoof` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod scalar;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{ParamStore, Parameter, Tensor};
