//! Dense tensors, FFT, convolution, reverse-mode autodiff and Adam.

pub mod adam;
pub mod complex;
pub mod conv;
pub mod fft;
pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use adam::AdamState;
pub use complex::ComplexImage;
pub use conv::conv2d;
pub use fft::{fft2c, ifft2c};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
