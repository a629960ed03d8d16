//! 2-D cross-correlation via im2col + GEMM.
//!
//! Zero padding `(k-1)/2` before the first row/column; output extents are
//! `ceil(H/stride) × ceil(W/stride)`. For odd kernels at stride 1 this is
//! "same" padding; 4×4 kernels at stride 2 behave like pad-1 DCGAN layers.

use crate::error::{shape_err, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize) -> Result<Self> {
        let (&[batch, in_ch, in_h, in_w], &[out_ch, k_in, kh, kw]) = (input, kernel) else {
            return Err(shape_err!(
                "conv2d expects [N,C,H,W] input and [Co,Ci,kh,kw] kernel, got {:?} and {:?}",
                input,
                kernel
            ));
        };
        if k_in != in_ch {
            return Err(shape_err!(
                "conv2d channel mismatch: input has {in_ch}, kernel expects {k_in}"
            ));
        }
        if stride == 0 {
            return Err(shape_err!("conv2d stride must be positive"));
        }
        Ok(Self {
            batch,
            in_ch,
            in_h,
            in_w,
            out_ch,
            kh,
            kw,
            stride,
        })
    }

    pub fn out_h(&self) -> usize {
        self.in_h.div_ceil(self.stride)
    }

    pub fn out_w(&self) -> usize {
        self.in_w.div_ceil(self.stride)
    }

    fn pad_h(&self) -> isize {
        ((self.kh - 1) / 2) as isize
    }

    fn pad_w(&self) -> isize {
        ((self.kw - 1) / 2) as isize
    }

    /// Rows of the im2col matrix (`Ci·kh·kw`).
    pub fn patch_len(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.batch, self.out_ch, self.out_h(), self.out_w()]
    }
}

/// Output columns `ox` whose input column `ox·stride − pw + j` lies inside `[0, in_w)`.
fn valid_span(g: &ConvGeometry, j: usize) -> (usize, usize) {
    let off = g.pad_w() - j as isize;
    let s = g.stride as isize;
    let lo = if off > 0 { (off + s - 1) / s } else { 0 } as usize;
    let hi = ((g.in_w as isize + off + s - 1) / s).clamp(0, g.out_w() as isize) as usize;
    (lo.min(hi), hi)
}

/// Append the column matrix `[patch_len, out_pixels]` of one batch element to `col`.
fn im2col(g: &ConvGeometry, input: &[f64], col: &mut Vec<f64>) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let ph = g.pad_h();
    let off_w = g.pad_w();
    for c in 0..g.in_ch {
        let plane = &input[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let (lo, hi) = valid_span(g, j);
                for oy in 0..oh {
                    let y = (oy * g.stride) as isize - ph + i as isize;
                    if y < 0 || y >= g.in_h as isize || lo == hi {
                        col.extend(std::iter::repeat(0.0).take(ow));
                        continue;
                    }
                    let src = &plane[y as usize * g.in_w..(y as usize + 1) * g.in_w];
                    let x0 = (lo * g.stride) as isize - off_w + j as isize;
                    let x0 = x0 as usize;
                    col.extend(std::iter::repeat(0.0).take(lo));
                    if g.stride == 1 {
                        col.extend_from_slice(&src[x0..x0 + hi - lo]);
                    } else {
                        col.extend(src[x0..].iter().step_by(g.stride).take(hi - lo));
                    }
                    col.extend(std::iter::repeat(0.0).take(ow - hi));
                }
            }
        }
    }
}

fn col2im_add(g: &ConvGeometry, col: &[f64], grad_input: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let ph = g.pad_h();
    let off_w = g.pad_w();
    let mut row = 0;
    for c in 0..g.in_ch {
        let plane = &mut grad_input[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let (lo, hi) = valid_span(g, j);
                let src = &col[row * oh * ow..(row + 1) * oh * ow];
                row += 1;
                if lo == hi {
                    continue;
                }
                let x0 = ((lo * g.stride) as isize - off_w + j as isize) as usize;
                for oy in 0..oh {
                    let y = (oy * g.stride) as isize - ph + i as isize;
                    if y < 0 || y >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[y as usize * g.in_w..(y as usize + 1) * g.in_w];
                    let s = &src[oy * ow + lo..oy * ow + hi];
                    if g.stride == 1 {
                        for (d, v) in dst[x0..x0 + hi - lo].iter_mut().zip(s) {
                            *d += v;
                        }
                    } else {
                        for (d, v) in dst[x0..].iter_mut().step_by(g.stride).zip(s) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// `c[m,n] = beta·c + a[m,k]·b[k,n]` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    // SAFETY: every (row, col) pair addressed through the strides lies inside
    // the slices; callers pass buffers sized m×k, k×n and m×n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Forward pass; returns the output and the im2col buffers (one per batch element).
pub(crate) fn forward(
    g: &ConvGeometry,
    input: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
    keep_cols: bool,
) -> (Vec<f64>, Vec<f64>) {
    let (kl, np) = (g.patch_len(), g.out_pixels());
    let in_stride = g.in_ch * g.in_h * g.in_w;
    let out_stride = g.out_ch * np;
    let mut out = vec![0.0; g.batch * out_stride];
    let mut cols = Vec::with_capacity(if keep_cols {
        g.batch * kl * np
    } else {
        kl * np
    });
    for n in 0..g.batch {
        if !keep_cols {
            cols.clear();
        }
        let start = cols.len();
        im2col(g, &input[n * in_stride..(n + 1) * in_stride], &mut cols);
        let col = &cols[start..];
        let dst = &mut out[n * out_stride..(n + 1) * out_stride];
        let beta = match bias {
            Some(b) => {
                for (o, chunk) in dst.chunks_exact_mut(np).enumerate() {
                    chunk.fill(b[o]);
                }
                1.0
            }
            None => 0.0,
        };
        gemm(
            g.out_ch,
            kl,
            np,
            weight,
            (kl as isize, 1),
            col,
            (np as isize, 1),
            beta,
            dst,
        );
    }
    if !keep_cols {
        cols = Vec::new();
    }
    (out, cols)
}

/// Gradients w.r.t. input, weight and bias; each is computed only when requested.
pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

pub(crate) fn backward(
    g: &ConvGeometry,
    grad_out: &[f64],
    cols: &[f64],
    weight: &[f64],
    want: (bool, bool, bool),
) -> ConvGrads {
    let (kl, np) = (g.patch_len(), g.out_pixels());
    let out_stride = g.out_ch * np;
    let in_stride = g.in_ch * g.in_h * g.in_w;
    let mut gi = want.0.then(|| vec![0.0; g.batch * in_stride]);
    let mut gw = want.1.then(|| vec![0.0; g.out_ch * kl]);
    let mut gb = want.2.then(|| vec![0.0; g.out_ch]);
    let mut dcol = if want.0 {
        vec![0.0; kl * np]
    } else {
        Vec::new()
    };
    for n in 0..g.batch {
        let go = &grad_out[n * out_stride..(n + 1) * out_stride];
        if let Some(gb) = gb.as_mut() {
            for (o, chunk) in go.chunks_exact(np).enumerate() {
                gb[o] += chunk.iter().sum::<f64>();
            }
        }
        if let Some(gw) = gw.as_mut() {
            let col = &cols[n * kl * np..(n + 1) * kl * np];
            // dW[Co,K] += dOut[Co,P] · colᵀ[P,K]
            gemm(
                g.out_ch,
                np,
                kl,
                go,
                (np as isize, 1),
                col,
                (1, np as isize),
                1.0,
                gw,
            );
        }
        if let Some(gi) = gi.as_mut() {
            // dCol[K,P] = Wᵀ[K,Co] · dOut[Co,P]
            gemm(
                kl,
                g.out_ch,
                np,
                weight,
                (1, kl as isize),
                go,
                (np as isize, 1),
                0.0,
                &mut dcol,
            );
            col2im_add(g, &dcol, &mut gi[n * in_stride..(n + 1) * in_stride]);
        }
    }
    ConvGrads {
        input: gi,
        weight: gw,
        bias: gb,
    }
}

/// Stand-alone convolution (no tape).
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    bias: Option<&Tensor>,
) -> Result<Tensor> {
    let g = ConvGeometry::new(input.shape(), kernel.shape(), stride)?;
    if let Some(b) = bias {
        if b.shape() != [g.out_ch] {
            return Err(shape_err!(
                "conv2d bias shape {:?}, expected [{}]",
                b.shape(),
                g.out_ch
            ));
        }
    }
    let (out, _) = forward(
        &g,
        input.data(),
        kernel.data(),
        bias.map(|b| b.data()),
        false,
    );
    Tensor::new(&g.out_shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct nested-loop cross-correlation with the same padding rule.
    fn naive(input: &Tensor, kernel: &Tensor, stride: usize, bias: &Tensor) -> Tensor {
        let [n, ci, h, w] = input.shape().try_into().unwrap();
        let [co, _, kh, kw] = kernel.shape().try_into().unwrap();
        let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
        let (ph, pw) = (((kh - 1) / 2) as isize, ((kw - 1) / 2) as isize);
        let mut out = Tensor::zeros(&[n, co, oh, ow]);
        for b in 0..n {
            for o in 0..co {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = bias.data()[o];
                        for c in 0..ci {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let yy = (y * stride) as isize - ph + i as isize;
                                    let xx = (x * stride) as isize - pw + j as isize;
                                    if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w
                                    {
                                        acc += input.data()
                                            [((b * ci + c) * h + yy as usize) * w + xx as usize]
                                            * kernel.data()[((o * ci + c) * kh + i) * kw + j];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((b * co + o) * oh + y) * ow + x] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel() {
        let input = random(&[1, 1, 4, 4], 1);
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        assert_eq!(conv2d(&input, &k, 1, None).unwrap(), input);
    }

    #[test]
    fn stride_two_halves() {
        let out = conv2d(
            &random(&[1, 1, 8, 8], 2),
            &random(&[5, 1, 3, 3], 3),
            2,
            None,
        )
        .unwrap();
        assert_eq!(out.shape(), &[1, 5, 4, 4]);
    }

    #[test]
    fn matches_loop_oracle() {
        let input = random(&[1, 2, 5, 5], 4);
        let kernel = random(&[3, 2, 3, 3], 5);
        let bias = random(&[3], 6);
        for stride in [1, 2] {
            let fast = conv2d(&input, &kernel, stride, Some(&bias)).unwrap();
            let slow = naive(&input, &kernel, stride, &bias);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        // even kernel, batch > 1
        let input = random(&[2, 3, 8, 6], 7);
        let kernel = random(&[2, 3, 4, 4], 8);
        let bias = random(&[2], 9);
        let fast = conv2d(&input, &kernel, 2, Some(&bias)).unwrap();
        let slow = naive(&input, &kernel, 2, &bias);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (k, stride, seed) in [(1, 1, 10), (1, 2, 11), (5, 2, 12), (4, 1, 13), (3, 3, 14)] {
            let input = random(&[2, 2, 7, 9], seed);
            let kernel = random(&[3, 2, k, k], seed + 100);
            let bias = random(&[3], seed + 200);
            let fast = conv2d(&input, &kernel, stride, Some(&bias)).unwrap();
            let slow = naive(&input, &kernel, stride, &bias);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() <= 1e-12, "k={k} stride={stride}");
            }
        }
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let r = conv2d(
            &random(&[1, 2, 4, 4], 1),
            &random(&[1, 3, 3, 3], 2),
            1,
            None,
        );
        assert!(matches!(r, Err(crate::Error::Shape(_))));
    }
}
