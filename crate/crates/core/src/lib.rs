//! Multi-coil MRI reconstruction with a parallel-imaging GAN and transfer learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: tensors, centered FFT, convolution, reverse-mode autodiff, Adam
//! - [`encoding`]: sampling masks, coil sensitivities, the `y = MFSx + n` operator,
//!   zero-filled and CG-SENSE reconstruction
//! - [`phantoms`]: procedural multi-domain datasets
//! - [`network`]: generator / discriminator and checkpoints
//! - [`training`]: composite losses, GAN training, fine-tuning
//! - [`metrics`]: PSNR, SSIM, NRMSE, ROI moments, Wilcoxon signed-rank

pub mod encoding;
pub mod error;
pub mod metrics;
pub mod network;
pub mod numerics;
pub mod pgm;
pub mod phantoms;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{ComplexImage, Tensor};
