//! Central finite-difference checks for tape gradients.

use crate::numerics::Tensor;

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)` over the probed entries.
    pub relative_error: f64,
}

/// Probe `indices` of `x` with step `h`; `f` must evaluate the same scalar
/// the analytic gradient was taken of.
pub fn check(
    f: &mut dyn FnMut(&Tensor) -> f64,
    x: &Tensor,
    analytic: &Tensor,
    indices: &[usize],
    h: f64,
) -> GradCheck {
    let mut probe = x.clone();
    let mut numeric = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        numeric.push((plus - minus) / (2.0 * h));
    }
    let analytic: Vec<f64> = indices.iter().map(|&i| analytic.data()[i]).collect();
    let diff = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = na.max(nn);
    let relative_error = if denom == 0.0 { 0.0 } else { diff / denom };
    GradCheck {
        analytic,
        numeric,
        relative_error,
    }
}

/// Evenly spread probe indices (at most `count`) over a buffer of length `len`.
pub fn spread_indices(len: usize, count: usize) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    (0..count)
        .map(|i| i * len / count + (i * 7919) % (len / count).max(1))
        .collect()
}
