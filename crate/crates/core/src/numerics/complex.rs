use crate::error::{shape_err, Result};
use crate::numerics::Tensor;

/// H×W complex field stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    pub height: usize,
    pub width: usize,
    pub re: Tensor,
    pub im: Tensor,
}

impl ComplexImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            re: Tensor::zeros(&[height, width]),
            im: Tensor::zeros(&[height, width]),
        }
    }

    pub fn from_parts(re: Tensor, im: Tensor) -> Result<Self> {
        re.expect_same_shape(&im)?;
        if re.rank() != 2 {
            return Err(shape_err!(
                "complex planes must be rank 2, got {:?}",
                re.shape()
            ));
        }
        let (height, width) = (re.shape()[0], re.shape()[1]);
        Ok(Self {
            height,
            width,
            re,
            im,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> (f64, f64),
    ) -> Self {
        let mut out = Self::zeros(height, width);
        for r in 0..height {
            for c in 0..width {
                let (a, b) = f(r, c);
                out.re.data_mut()[r * width + c] = a;
                out.im.data_mut()[r * width + c] = b;
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_dims(&self, other: &ComplexImage) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(shape_err!(
                "complex image {}x{} vs {}x{}",
                self.height,
                self.width,
                other.height,
                other.width
            ));
        }
        Ok(())
    }

    /// Stack as a `[2, H, W]` tensor (channel 0 real, 1 imaginary).
    pub fn to_channels(&self) -> Tensor {
        let mut data = Vec::with_capacity(2 * self.len());
        data.extend_from_slice(self.re.data());
        data.extend_from_slice(self.im.data());
        Tensor::new(&[2, self.height, self.width], data).unwrap()
    }

    /// Inverse of [`to_channels`](Self::to_channels); accepts `[2,H,W]` or `[1,2,H,W]`.
    pub fn from_channels(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        let (h, w) = match s {
            [2, h, w] | [1, 2, h, w] => (*h, *w),
            _ => return Err(shape_err!("expected [2,H,W] complex channels, got {:?}", s)),
        };
        let n = h * w;
        let re = Tensor::new(&[h, w], t.data()[..n].to_vec())?;
        let im = Tensor::new(&[h, w], t.data()[n..].to_vec())?;
        Self::from_parts(re, im)
    }

    pub fn magnitude(&self) -> Tensor {
        let data = self
            .re
            .data()
            .iter()
            .zip(self.im.data())
            .map(|(a, b)| a.hypot(*b))
            .collect();
        Tensor::new(&[self.height, self.width], data).unwrap()
    }

    /// Pointwise complex product.
    pub fn mul(&self, other: &ComplexImage) -> Result<ComplexImage> {
        self.same_dims(other)?;
        let mut out = ComplexImage::zeros(self.height, self.width);
        for i in 0..self.len() {
            let (a, b) = (self.re.data()[i], self.im.data()[i]);
            let (c, d) = (other.re.data()[i], other.im.data()[i]);
            out.re.data_mut()[i] = a * c - b * d;
            out.im.data_mut()[i] = a * d + b * c;
        }
        Ok(out)
    }

    /// Pointwise `conj(self) * other`.
    pub fn conj_mul(&self, other: &ComplexImage) -> Result<ComplexImage> {
        self.same_dims(other)?;
        let mut out = ComplexImage::zeros(self.height, self.width);
        for i in 0..self.len() {
            let (a, b) = (self.re.data()[i], -self.im.data()[i]);
            let (c, d) = (other.re.data()[i], other.im.data()[i]);
            out.re.data_mut()[i] = a * c - b * d;
            out.im.data_mut()[i] = a * d + b * c;
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &ComplexImage) -> Result<()> {
        self.same_dims(other)?;
        self.re.add_assign(&other.re)?;
        self.im.add_assign(&other.im)
    }

    pub fn scaled(&self, factor: f64) -> ComplexImage {
        let mut out = self.clone();
        out.re.scale(factor);
        out.im.scale(factor);
        out
    }

    /// Complex inner product `Σ conj(self) · other` as `(re, im)`.
    pub fn inner(&self, other: &ComplexImage) -> Result<(f64, f64)> {
        self.same_dims(other)?;
        let mut acc = (0.0, 0.0);
        for i in 0..self.len() {
            let (a, b) = (self.re.data()[i], self.im.data()[i]);
            let (c, d) = (other.re.data()[i], other.im.data()[i]);
            acc.0 += a * c + b * d;
            acc.1 += a * d - b * c;
        }
        Ok(acc)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re
            .data()
            .iter()
            .chain(self.im.data())
            .map(|v| v * v)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs_diff(&self, other: &ComplexImage) -> f64 {
        self.re
            .data()
            .iter()
            .zip(other.re.data())
            .chain(self.im.data().iter().zip(other.im.data()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
