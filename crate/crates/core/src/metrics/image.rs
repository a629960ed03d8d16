use crate::error::{shape_err, Error, Result};
use crate::numerics::Tensor;

/// Side of the SSIM Gaussian window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn planar(a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    a.expect_same_shape(b)?;
    match a.shape() {
        [h, w] | [1, h, w] => Ok((*h, *w)),
        s => Err(shape_err!("metrics expect [H,W] or [1,H,W], got {:?}", s)),
    }
}

/// `20·log10(1/rmse)` with peak 1.0; `+∞` when the images are identical.
pub fn psnr(estimate: &Tensor, truth: &Tensor) -> Result<f64> {
    estimate.expect_same_shape(truth)?;
    let mse = estimate
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / truth.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// Normalization used by [`nrmse_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NrmseNorm {
    /// `‖x̂ − x‖₂ / ‖x‖₂`.
    #[default]
    L2,
    /// Root-mean-square error divided by `max(x) − min(x)`.
    Range,
}

pub fn nrmse(estimate: &Tensor, truth: &Tensor) -> Result<f64> {
    nrmse_with(estimate, truth, NrmseNorm::L2)
}

pub fn nrmse_with(estimate: &Tensor, truth: &Tensor, norm: NrmseNorm) -> Result<f64> {
    estimate.expect_same_shape(truth)?;
    let se: f64 = estimate
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    match norm {
        NrmseNorm::L2 => {
            let n = truth.norm2();
            if n == 0.0 {
                return Err(Error::Domain("NRMSE reference has zero norm".into()));
            }
            Ok(se.sqrt() / n)
        }
        NrmseNorm::Range => {
            let (lo, hi) = truth
                .data()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                    (l.min(v), h.max(v))
                });
            if hi <= lo {
                return Err(Error::Domain("NRMSE reference has zero range".into()));
            }
            Ok((se / truth.len() as f64).sqrt() / (hi - lo))
        }
    }
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of an `h×w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(j, t)| t * x[r * w + c + j])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(j, t)| t * rows[(r + j) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5, L = 1).
pub fn ssim(estimate: &Tensor, truth: &Tensor) -> Result<f64> {
    let (h, w) = planar(estimate, truth)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (x, y) = (estimate.data(), truth.data());
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        x.iter().zip(y).map(|(a, b)| f(*a, *b)).collect()
    };
    let mx = filter_valid(x, h, w, &taps);
    let my = filter_valid(y, h, w, &taps);
    let mxx = filter_valid(&prod(&|a, _| a * a), h, w, &taps);
    let myy = filter_valid(&prod(&|_, b| b * b), h, w, &taps);
    let mxy = filter_valid(&prod(&|a, b| a * b), h, w, &taps);
    let (c1, c2) = (K1 * K1, K2 * K2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}
