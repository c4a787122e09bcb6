//! Core engine for light field reconstruction.
//!
//! A light field is a 4D grid of views: two angular coordinates `(u, v)`
//! select a sub-aperture image, two spatial coordinates `(w, h)` select a
//! pixel within it. This crate provides everything needed to synthesize a
//! densely sampled view grid from a sparsely sampled one with a separable
//! spatio-angular convolutional network:
//!
//! - [`tensor`]: 5D mode tensors with zero-copy spatial/angular reshaping,
//!   zero-padded 2D convolution over either domain, channel concatenation,
//!   and activations.
//! - [`tape`]: reverse-mode autodiff over the tensor primitives, plus a
//!   finite-difference gradient checker.
//! - [`net`]: network assembly (correlation blocks, dense skip wiring,
//!   bottleneck, reconstruction head), parameter and MAC audits, and the
//!   binary checkpoint codec.
//! - [`train`]: MSE loss, Adam, joint spatio-angular dihedral augmentation,
//!   the deterministic patch sampler, and the training stepper.
//! - [`data`]: light fields, view patterns, color conversion, chroma angular
//!   upsampling, lenslet/tiled grid decoding, and a synthetic generator.
//! - [`metrics`]: PSNR, SSIM, error heat maps, and EPI slices.
//!
//! The crate is `no_std` (alloc required); all file and image IO lives in
//! the companion CLI crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub(crate) mod codec;
pub mod data;
pub mod metrics;
pub mod net;
pub mod tape;
pub mod tensor;
pub mod train;

pub use tensor::{Activation, ConvKernel, Mode, ModeTensor, Padding, Real};
