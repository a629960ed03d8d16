//! Unitary, centered 2-D FFT (radix-2).
//!
//! k-space is kept fftshifted everywhere: the zero frequency of an H×W
//! transform sits at `(H/2, W/2)`, so autocalibration lines are literally
//! the central rows. Both directions scale by `1/sqrt(HW)`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::numerics::ComplexImage;

pub fn check_pow2(h: usize, w: usize) -> Result<()> {
    if !h.is_power_of_two() || !w.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "FFT extents must be powers of two, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Centered forward transform.
pub fn fft2c(z: &ComplexImage) -> Result<ComplexImage> {
    transform(z, false)
}

/// Centered inverse transform.
pub fn ifft2c(z: &ComplexImage) -> Result<ComplexImage> {
    transform(z, true)
}

fn transform(z: &ComplexImage, inverse: bool) -> Result<ComplexImage> {
    check_pow2(z.height, z.width)?;
    let mut out = z.clone();
    fft2c_planes(
        out.re.data_mut(),
        out.im.data_mut(),
        z.height,
        z.width,
        inverse,
    );
    Ok(out)
}

/// In-place centered unitary transform of one `h×w` plane pair.
/// Extents must already be validated as powers of two.
pub(crate) fn fft2c_planes(re: &mut [f64], im: &mut [f64], h: usize, w: usize, inverse: bool) {
    debug_assert!(h.is_power_of_two() && w.is_power_of_two());
    swap_quadrants(re, h, w);
    swap_quadrants(im, h, w);

    let row_tw = Twiddles::cached(w, inverse);
    for r in 0..h {
        let span = r * w..(r + 1) * w;
        fft_1d(&mut re[span.clone()], &mut im[span], &row_tw);
    }
    let col_tw = Twiddles::cached(h, inverse);
    let mut cre = vec![0.0; h];
    let mut cim = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            cre[r] = re[r * w + c];
            cim[r] = im[r * w + c];
        }
        fft_1d(&mut cre, &mut cim, &col_tw);
        for r in 0..h {
            re[r * w + c] = cre[r];
            im[r * w + c] = cim[r];
        }
    }

    swap_quadrants(re, h, w);
    swap_quadrants(im, h, w);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    re.iter_mut().chain(im.iter_mut()).for_each(|v| *v *= scale);
}

/// fftshift for even extents (identical to ifftshift); extent 1 is a no-op.
fn swap_quadrants(buf: &mut [f64], h: usize, w: usize) {
    let (hh, hw) = (h / 2, w / 2);
    if hw > 0 {
        for r in 0..h {
            buf[r * w..(r + 1) * w].rotate_left(hw);
        }
    }
    if hh > 0 {
        buf.rotate_left(hh * w);
    }
}

struct Twiddles {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

thread_local! {
    static TWIDDLES: RefCell<HashMap<(usize, bool), Rc<Twiddles>>> = RefCell::new(HashMap::new());
}

impl Twiddles {
    fn cached(n: usize, inverse: bool) -> Rc<Self> {
        TWIDDLES.with(|t| {
            t.borrow_mut()
                .entry((n, inverse))
                .or_insert_with(|| Rc::new(Self::new(n, inverse)))
                .clone()
        })
    }

    fn new(n: usize, inverse: bool) -> Self {
        let sign = if inverse { 1.0 } else { -1.0 };
        let half = n / 2;
        let (cos, sin) = (0..half)
            .map(|k| {
                let a = sign * 2.0 * PI * k as f64 / n as f64;
                (a.cos(), a.sin())
            })
            .unzip();
        Self { cos, sin }
    }
}

/// Unnormalized iterative Cooley-Tukey on a power-of-two length.
fn fft_1d(re: &mut [f64], im: &mut [f64], tw: &Twiddles) {
    let n = re.len();
    if n < 2 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (wr, wi) = (tw.cos[k * step], tw.sin[k * step]);
                let (a, b) = (start + k, start + k + half);
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}
