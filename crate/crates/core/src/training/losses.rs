use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::encoding::{CoilSensitivities, SamplingMask};
use crate::error::{shape_err, Error, Result};
use crate::numerics::{fft2c, ComplexImage, Tape, Tensor, Var};

/// Weights of the image-domain and the two frequency-domain MAE terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Multiplier on `L_GEN` (1 in the standard objective; 0 gives a pure MAE ablation).
    #[serde(default = "unit")]
    pub adversarial: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 10.0,
            gamma: 10.0,
            adversarial: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("adversarial", self.adversarial),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "loss weight {name} must be finite and ≥ 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Where coil sensitivities enter the fidelity terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    /// Compare the coil-combined estimate with the target directly (`F x̂` vs `F x_t`).
    #[default]
    Symmetric,
    /// Apply each `S_c` to the estimate only (`F S_c x̂` vs `F x_t`), averaged over coils.
    Verbatim,
}

/// Individual generator-loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub gen: f64,
    pub imae: f64,
    pub fmae_m: f64,
    pub fmae_notm: f64,
}

/// `L_GEN + α·L_iMAE + β·L_fMAE,M + γ·L_fMAE,1−M`.
pub fn total_generator_loss(t: &LossTerms, w: &LossWeights) -> f64 {
    w.adversarial * t.gen + w.alpha * t.imae + w.beta * t.fmae_m + w.gamma * t.fmae_notm
}

/// `−ln d_fake`; `d_fake` must lie in (0, 1].
pub fn loss_gen(d_fake: f64) -> Result<f64> {
    if !(d_fake > 0.0 && d_fake <= 1.0) {
        return Err(Error::Domain(format!(
            "discriminator output {d_fake} outside (0, 1]"
        )));
    }
    Ok(-d_fake.ln())
}

/// `−ln d_real − ln(1 − d_fake)`.
pub fn loss_disc(d_real: f64, d_fake: f64) -> Result<f64> {
    if !(d_real > 0.0 && d_real <= 1.0) || !(d_fake >= 0.0 && d_fake < 1.0) {
        return Err(Error::Domain(format!(
            "discriminator outputs ({d_real}, {d_fake}) outside the open unit interval"
        )));
    }
    Ok(-d_real.ln() - (-d_fake).ln_1p())
}

/// `−log σ(a)` on a logit node.
pub fn gen_loss_graph(tape: &mut Tape, fake_logit: Var) -> Var {
    let l = tape.log_sigmoid(fake_logit);
    tape.scale(l, -1.0)
}

/// `−log σ(a_real) − log σ(−a_fake)`.
pub fn disc_loss_graph(tape: &mut Tape, real_logit: Var, fake_logit: Var) -> Result<Var> {
    let r = tape.log_sigmoid(real_logit);
    let neg = tape.scale(fake_logit, -1.0);
    let f = tape.log_sigmoid(neg);
    let s = tape.add(r, f)?;
    Ok(tape.scale(s, -1.0))
}

/// Per-sample constants of the fidelity terms, in `[1,2,H,W]` layout.
#[derive(Clone, Debug)]
pub struct FidelityTarget {
    pub truth: Arc<Tensor>,
    pub truth_k: Arc<Tensor>,
    pub maps: Vec<Arc<Tensor>>,
    /// `1/(2|M|)` on sampled entries, zero elsewhere (all zero when `|M| = 0`).
    pub weight_m: Arc<Tensor>,
    pub weight_notm: Arc<Tensor>,
}

impl FidelityTarget {
    pub fn new(truth: &ComplexImage, s: &CoilSensitivities, mask: &SamplingMask) -> Result<Self> {
        let (h, w) = (truth.height, truth.width);
        if s.dims() != (h, w) || mask.height != h || mask.width != w {
            return Err(shape_err!(
                "fidelity target {}x{} vs maps {:?} / mask {}x{}",
                h,
                w,
                s.dims(),
                mask.height,
                mask.width
            ));
        }
        let as4 = |t: Tensor| t.reshape(&[1, 2, h, w]);
        let sampled = mask.sampled_rows() * w;
        let unsampled = h * w - sampled;
        let weights = |on: bool, count: usize| -> Result<Arc<Tensor>> {
            let v = if count == 0 {
                0.0
            } else {
                1.0 / (2 * count) as f64
            };
            let mut t = Tensor::zeros(&[1, 2, h, w]);
            for (r, &row_on) in mask.rows.iter().enumerate() {
                if row_on == on {
                    for c in 0..2 {
                        let base = c * h * w + r * w;
                        t.data_mut()[base..base + w].fill(v);
                    }
                }
            }
            Ok(Arc::new(t))
        };
        Ok(Self {
            truth: Arc::new(as4(truth.to_channels())?),
            truth_k: Arc::new(as4(fft2c(truth)?.to_channels())?),
            maps: s.maps.iter().map(|m| Arc::new(m.to_channels())).collect(),
            weight_m: weights(true, sampled)?,
            weight_notm: weights(false, unsampled)?,
        })
    }
}

/// Image-domain MAE node.
pub fn imae_graph(
    tape: &mut Tape,
    xhat: Var,
    target: &FidelityTarget,
    variant: LossVariant,
) -> Result<Var> {
    let truth = tape.constant((*target.truth).clone());
    match variant {
        LossVariant::Symmetric => {
            let d = tape.sub(xhat, truth)?;
            let a = tape.abs(d);
            Ok(tape.mean(a))
        }
        LossVariant::Verbatim => {
            let mut acc: Option<Var> = None;
            for map in &target.maps {
                let sx = tape.complex_mul_const(xhat, map.clone())?;
                let d = tape.sub(sx, truth)?;
                let a = tape.abs(d);
                let m = tape.mean(a);
                acc = Some(match acc {
                    Some(prev) => tape.add(prev, m)?,
                    None => m,
                });
            }
            Ok(tape.scale(
                acc.expect("at least one coil"),
                1.0 / target.maps.len() as f64,
            ))
        }
    }
}

/// Frequency-domain MAE nodes on the sampled rows and on their complement.
pub fn fmae_graph(
    tape: &mut Tape,
    xhat: Var,
    target: &FidelityTarget,
    variant: LossVariant,
) -> Result<(Var, Var)> {
    let truth_k = tape.constant((*target.truth_k).clone());
    let branches: Vec<Var> = match variant {
        LossVariant::Symmetric => vec![xhat],
        LossVariant::Verbatim => target
            .maps
            .iter()
            .map(|m| tape.complex_mul_const(xhat, m.clone()))
            .collect::<Result<_>>()?,
    };
    let scale = 1.0 / branches.len() as f64;
    let mut on = Vec::new();
    let mut off = Vec::new();
    for b in branches {
        let k = tape.fft2c(b, false)?;
        let d = tape.sub(k, truth_k)?;
        let a = tape.abs(d);
        let wm = tape.mul_const(a, target.weight_m.clone())?;
        let wn = tape.mul_const(a, target.weight_notm.clone())?;
        on.push(tape.sum(wm));
        off.push(tape.sum(wn));
    }
    let mut reduce = |parts: Vec<Var>| -> Result<Var> {
        let mut acc = parts[0];
        for p in &parts[1..] {
            acc = tape.add(acc, *p)?;
        }
        Ok(tape.scale(acc, scale))
    };
    Ok((reduce(on)?, reduce(off)?))
}

fn with_constant_graph(
    xhat: &ComplexImage,
    f: impl FnOnce(&mut Tape, Var) -> Result<Vec<Var>>,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = tape.constant(
        xhat.to_channels()
            .reshape(&[1, 2, xhat.height, xhat.width])?,
    );
    let outs = f(&mut tape, x)?;
    Ok(outs.iter().map(|v| tape.value(*v).data()[0]).collect())
}

fn check_pair(a: &ComplexImage, b: &ComplexImage) -> Result<()> {
    a.same_dims(b)
}

/// Mean absolute error over the real and imaginary parts of the coil-combined image.
pub fn loss_imae(xhat: &ComplexImage, truth: &ComplexImage) -> Result<f64> {
    check_pair(xhat, truth)?;
    let n = 2 * truth.len();
    let s: f64 = xhat
        .re
        .data()
        .iter()
        .chain(xhat.im.data())
        .zip(truth.re.data().iter().chain(truth.im.data()))
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(s / n as f64)
}

/// `‖S x̂ − x_t‖₁` mean, with `S` applied to the estimate only.
pub fn loss_imae_verbatim(
    xhat: &ComplexImage,
    truth: &ComplexImage,
    s: &CoilSensitivities,
) -> Result<f64> {
    check_pair(xhat, truth)?;
    let target = FidelityTarget::new(truth, s, &SamplingMask::full(truth.height, truth.width))?;
    Ok(with_constant_graph(xhat, |t, x| {
        Ok(vec![imae_graph(t, x, &target, LossVariant::Verbatim)?])
    })?[0])
}

/// Frequency MAE on sampled rows; see [`LossVariant`] for the role of `S`.
pub fn loss_fmae_m(
    xhat: &ComplexImage,
    truth: &ComplexImage,
    s: &CoilSensitivities,
    mask: &SamplingMask,
    variant: LossVariant,
) -> Result<f64> {
    Ok(fmae_pair(xhat, truth, s, mask, variant)?.0)
}

/// Frequency MAE on the unsampled rows.
pub fn loss_fmae_notm(
    xhat: &ComplexImage,
    truth: &ComplexImage,
    s: &CoilSensitivities,
    mask: &SamplingMask,
    variant: LossVariant,
) -> Result<f64> {
    Ok(fmae_pair(xhat, truth, s, mask, variant)?.1)
}

fn fmae_pair(
    xhat: &ComplexImage,
    truth: &ComplexImage,
    s: &CoilSensitivities,
    mask: &SamplingMask,
    variant: LossVariant,
) -> Result<(f64, f64)> {
    check_pair(xhat, truth)?;
    let target = FidelityTarget::new(truth, s, mask)?;
    let v = with_constant_graph(xhat, |t, x| {
        let (a, b) = fmae_graph(t, x, &target, variant)?;
        Ok(vec![a, b])
    })?;
    Ok((v[0], v[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::make_mask;
    use num_complex::Complex64 as C;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(n: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexImage::from_fn(n, n, |_, _| {
            (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn maps(c: usize, n: usize, seed: u64) -> CoilSensitivities {
        CoilSensitivities::normalized((0..c).map(|i| random_image(n, seed + i as u64)).collect())
            .unwrap()
    }

    #[test]
    fn weights_and_total() {
        let w = LossWeights::default();
        assert_eq!((w.alpha, w.beta, w.gamma), (1.0, 10.0, 10.0));
        assert_eq!(total_generator_loss(&LossTerms::default(), &w), 0.0);
        let ones = LossTerms {
            gen: 1.0,
            imae: 1.0,
            fmae_m: 1.0,
            fmae_notm: 1.0,
        };
        assert_eq!(total_generator_loss(&ones, &w), 22.0);
        assert!(LossWeights { alpha: -1.0, ..w }.validate().is_err());
    }

    #[test]
    fn adversarial_closed_forms() {
        assert_eq!(loss_gen(1.0).unwrap(), 0.0);
        assert!((loss_disc(0.5, 0.5).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
        for bad in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(loss_gen(bad), Err(Error::Domain(_))));
        }
        assert!(loss_disc(0.0, 0.5).is_err());
        assert!(loss_disc(0.5, 1.0).is_err());
        let mut t = Tape::new();
        let a = t.constant(Tensor::scalar(0.3));
        let b = t.constant(Tensor::scalar(-1.2));
        let g = gen_loss_graph(&mut t, b);
        let d = disc_loss_graph(&mut t, a, b).unwrap();
        let s = crate::numerics::tape::sigmoid;
        assert!((t.value(g).data()[0] - loss_gen(s(-1.2)).unwrap()).abs() < 1e-14);
        assert!((t.value(d).data()[0] - loss_disc(s(0.3), s(-1.2)).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn imae_cases() {
        let x = random_image(8, 1);
        assert_eq!(loss_imae(&x, &x).unwrap(), 0.0);
        let mut shifted = x.clone();
        shifted.re.data_mut().iter_mut().for_each(|v| *v += 0.25);
        shifted.im.data_mut().iter_mut().for_each(|v| *v += 0.25);
        assert!((loss_imae(&shifted, &x).unwrap() - 0.25).abs() < 1e-12);
        let y = random_image(8, 2);
        let mut acc = 0.0;
        for i in 0..64 {
            acc +=
                (x.re.data()[i] - y.re.data()[i]).abs() + (x.im.data()[i] - y.im.data()[i]).abs();
        }
        assert!((loss_imae(&x, &y).unwrap() - acc / 128.0).abs() <= 1e-12);
        assert!(loss_imae(&x, &random_image(4, 1)).is_err());
        let mut t = Tape::new();
        let target = FidelityTarget::new(&y, &maps(2, 8, 3), &SamplingMask::full(8, 8)).unwrap();
        let xv = t.constant(x.to_channels().reshape(&[1, 2, 8, 8]).unwrap());
        let g = imae_graph(&mut t, xv, &target, LossVariant::Symmetric).unwrap();
        assert!((t.value(g).data()[0] - loss_imae(&x, &y).unwrap()).abs() <= 1e-14);
    }

    /// Masked MAE of explicitly summed centered DFTs.
    fn brute_fmae(
        xhat: &ComplexImage,
        truth: &ComplexImage,
        s: Option<&CoilSensitivities>,
        m: &SamplingMask,
    ) -> (f64, f64) {
        let n = truth.height;
        let dft = |img: &dyn Fn(usize) -> C| -> Vec<C> {
            let mut out = vec![C::new(0.0, 0.0); n * n];
            for (k, o) in out.iter_mut().enumerate() {
                let (u, v) = (
                    (k / n) as f64 - n as f64 / 2.0,
                    (k % n) as f64 - n as f64 / 2.0,
                );
                for p in 0..n * n {
                    let (y, x) = (
                        (p / n) as f64 - n as f64 / 2.0,
                        (p % n) as f64 - n as f64 / 2.0,
                    );
                    *o += img(p)
                        * C::from_polar(1.0, -std::f64::consts::TAU * (u * y + v * x) / n as f64);
                }
                *o /= n as f64;
            }
            out
        };
        let px = |im: &ComplexImage, p: usize| C::new(im.re.data()[p], im.im.data()[p]);
        let kt = dft(&|p| px(truth, p));
        let branches: Vec<Vec<C>> = match s {
            None => vec![dft(&|p| px(xhat, p))],
            Some(s) => s
                .maps
                .iter()
                .map(|mp| dft(&|p| px(mp, p) * px(xhat, p)))
                .collect(),
        };
        let (mut on, mut off, mut n_on, mut n_off) = (0.0, 0.0, 0usize, 0usize);
        for b in &branches {
            for k in 0..n * n {
                let d = b[k] - kt[k];
                let e = d.re.abs() + d.im.abs();
                if m.rows[k / n] {
                    on += e;
                    n_on += 2;
                } else {
                    off += e;
                    n_off += 2;
                }
            }
        }
        let mean = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
        (mean(on, n_on), mean(off, n_off))
    }

    #[test]
    fn fmae_matches_brute_force_dft() {
        let (x, y) = (random_image(8, 4), random_image(8, 5));
        let s = maps(3, 8, 6);
        let m = make_mask(8, 8, 2.0, 2, 1).unwrap();
        let (on, off) = brute_fmae(&x, &y, None, &m);
        assert!((loss_fmae_m(&x, &y, &s, &m, LossVariant::Symmetric).unwrap() - on).abs() <= 1e-10);
        assert!(
            (loss_fmae_notm(&x, &y, &s, &m, LossVariant::Symmetric).unwrap() - off).abs() <= 1e-10
        );
        let (on, off) = brute_fmae(&x, &y, Some(&s), &m);
        assert!((loss_fmae_m(&x, &y, &s, &m, LossVariant::Verbatim).unwrap() - on).abs() <= 1e-10);
        assert!(
            (loss_fmae_notm(&x, &y, &s, &m, LossVariant::Verbatim).unwrap() - off).abs() <= 1e-10
        );
    }

    #[test]
    fn fmae_anchors() {
        let (x, y) = (random_image(8, 7), random_image(8, 8));
        let s = maps(2, 8, 9);
        let m = make_mask(8, 8, 4.0, 2, 2).unwrap();
        assert_eq!(
            loss_fmae_m(&x, &x, &s, &m, LossVariant::Symmetric).unwrap(),
            0.0
        );
        assert_eq!(
            loss_fmae_notm(&x, &x, &s, &m, LossVariant::Symmetric).unwrap(),
            0.0
        );
        let full = SamplingMask::full(8, 8);
        assert_eq!(
            loss_fmae_notm(&x, &y, &s, &full, LossVariant::Symmetric).unwrap(),
            0.0
        );
        assert_eq!(
            loss_fmae_notm(&x, &y, &s, &full, LossVariant::Verbatim).unwrap(),
            0.0
        );
        assert!(loss_fmae_m(&x, &y, &s, &m, LossVariant::Symmetric).unwrap() > 0.0);
        assert!(loss_imae_verbatim(&x, &y, &s).unwrap() > 0.0);
    }
}
