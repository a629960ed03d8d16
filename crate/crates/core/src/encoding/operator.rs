use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::encoding::{CoilSensitivities, SamplingMask};
use crate::error::{shape_err, Error, Result};
use crate::numerics::{fft2c, ifft2c, ComplexImage, Tensor};

/// Per-coil undersampled k-space together with the mask that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceData {
    pub coils: Vec<ComplexImage>,
    pub mask: SamplingMask,
}

impl KSpaceData {
    pub fn coil_count(&self) -> usize {
        self.coils.len()
    }

    /// `[C, 2, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        stack_coils(&self.coils)
    }

    pub fn from_tensor(t: &Tensor, mask: SamplingMask) -> Result<Self> {
        let coils = unstack_coils(t)?;
        if coils
            .iter()
            .any(|c| c.height != mask.height || c.width != mask.width)
        {
            return Err(shape_err!(
                "k-space {:?} does not match mask {}x{}",
                t.shape(),
                mask.height,
                mask.width
            ));
        }
        Ok(Self { coils, mask })
    }
}

pub(crate) fn stack_coils(coils: &[ComplexImage]) -> Tensor {
    let (h, w) = (coils[0].height, coils[0].width);
    let mut data = Vec::with_capacity(coils.len() * 2 * h * w);
    for c in coils {
        data.extend_from_slice(c.re.data());
        data.extend_from_slice(c.im.data());
    }
    Tensor::new(&[coils.len(), 2, h, w], data).unwrap()
}

pub(crate) fn unstack_coils(t: &Tensor) -> Result<Vec<ComplexImage>> {
    let &[c, 2, h, w] = t.shape() else {
        return Err(shape_err!("expected [C,2,H,W], got {:?}", t.shape()));
    };
    let hw = h * w;
    (0..c)
        .map(|i| {
            let base = i * 2 * hw;
            ComplexImage::from_parts(
                Tensor::new(&[h, w], t.data()[base..base + hw].to_vec())?,
                Tensor::new(&[h, w], t.data()[base + hw..base + 2 * hw].to_vec())?,
            )
        })
        .collect()
}

fn check_shapes(x: &ComplexImage, s: &CoilSensitivities, m: &SamplingMask) -> Result<()> {
    if s.coil_count() == 0 {
        return Err(Error::Shape("no coil sensitivities".into()));
    }
    let (h, w) = s.dims();
    if x.height != h || x.width != w || m.height != h || m.width != w {
        return Err(shape_err!(
            "image {}x{}, sensitivities {}x{}, mask {}x{}",
            x.height,
            x.width,
            h,
            w,
            m.height,
            m.width
        ));
    }
    Ok(())
}

/// `y_c = M F (S_c x) + M n_c`, with `n_c` complex Gaussian of per-component
/// std `noise_sigma`, drawn in coil / row-major order on sampled rows only.
pub fn forward_encode(
    x: &ComplexImage,
    s: &CoilSensitivities,
    m: &SamplingMask,
    noise_sigma: f64,
    seed: u64,
) -> Result<KSpaceData> {
    check_shapes(x, s, m)?;
    if !(noise_sigma >= 0.0) {
        return Err(Error::Config(format!(
            "noise sigma must be ≥ 0, got {noise_sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).unwrap());
    let w = x.width;
    let mut coils = Vec::with_capacity(s.coil_count());
    for map in &s.maps {
        let mut k = m.apply(&fft2c(&map.mul(x)?)?)?;
        if let Some(normal) = &normal {
            for (r, _) in m.rows.iter().enumerate().filter(|(_, on)| **on) {
                for i in r * w..(r + 1) * w {
                    k.re.data_mut()[i] += normal.sample(&mut rng);
                    k.im.data_mut()[i] += normal.sample(&mut rng);
                }
            }
        }
        coils.push(k);
    }
    Ok(KSpaceData {
        coils,
        mask: m.clone(),
    })
}

/// Zero-filled coil-combined reconstruction `Σ_c conj(S_c) · F⁻¹ y_c`.
pub fn adjoint_decode(y: &KSpaceData, s: &CoilSensitivities) -> Result<ComplexImage> {
    if y.coil_count() != s.coil_count() {
        return Err(shape_err!(
            "k-space has {} coils, sensitivities {}",
            y.coil_count(),
            s.coil_count()
        ));
    }
    let (h, w) = s.dims();
    let mut acc = ComplexImage::zeros(h, w);
    for (k, map) in y.coils.iter().zip(&s.maps) {
        acc.add_assign(&map.conj_mul(&ifft2c(k)?)?)?;
    }
    Ok(acc)
}

/// Normal operator `A^H A x`.
pub fn normal_apply(
    x: &ComplexImage,
    s: &CoilSensitivities,
    m: &SamplingMask,
) -> Result<ComplexImage> {
    let y = forward_encode(x, s, m, 0.0, 0)?;
    adjoint_decode(&y, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::make_mask;
    use rand::Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexImage::from_fn(h, w, |_, _| {
            (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn random_maps(c: usize, h: usize, w: usize, seed: u64) -> CoilSensitivities {
        let maps = (0..c)
            .map(|i| random_image(h, w, seed * 31 + i as u64))
            .collect();
        CoilSensitivities::normalized(maps).unwrap()
    }

    #[test]
    fn single_unit_coil_full_mask_is_fft() {
        let x = random_image(8, 8, 1);
        let s =
            CoilSensitivities::new(vec![ComplexImage::from_fn(8, 8, |_, _| (1.0, 0.0))]).unwrap();
        let y = forward_encode(&x, &s, &SamplingMask::full(8, 8), 0.0, 0).unwrap();
        assert_eq!(y.coils[0], fft2c(&x).unwrap());
    }

    #[test]
    fn zero_in_zero_out() {
        let s = random_maps(3, 8, 8, 2);
        let m = make_mask(8, 8, 2.0, 2, 0).unwrap();
        let y = forward_encode(&ComplexImage::zeros(8, 8), &s, &m, 0.0, 0).unwrap();
        assert!(y.coils.iter().all(|k| k.norm() == 0.0));
        assert_eq!(adjoint_decode(&y, &s).unwrap().norm(), 0.0);
    }

    #[test]
    fn full_sampling_recovers_image() {
        let x = random_image(16, 16, 3);
        let s = random_maps(4, 16, 16, 4);
        let y = forward_encode(&x, &s, &SamplingMask::full(16, 16), 0.0, 0).unwrap();
        assert!(adjoint_decode(&y, &s).unwrap().max_abs_diff(&x) <= 1e-10);
    }

    #[test]
    fn unsampled_rows_are_exactly_zero_even_with_noise() {
        let x = random_image(16, 16, 5);
        let s = random_maps(2, 16, 16, 6);
        let m = make_mask(16, 16, 4.0, 2, 7).unwrap();
        let y = forward_encode(&x, &s, &m, 0.1, 8).unwrap();
        for k in &y.coils {
            for (r, &on) in m.rows.iter().enumerate() {
                let row = &k.re.data()[r * 16..(r + 1) * 16];
                assert_eq!(row.iter().all(|&v| v == 0.0), !on);
            }
        }
        assert_eq!(y, forward_encode(&x, &s, &m, 0.1, 8).unwrap());
    }

    #[test]
    fn coil_mismatch_and_shape_errors() {
        let x = random_image(8, 8, 1);
        let s = random_maps(2, 8, 8, 1);
        let m = make_mask(8, 8, 2.0, 2, 0).unwrap();
        let mut y = forward_encode(&x, &s, &m, 0.0, 0).unwrap();
        y.coils.pop();
        assert!(adjoint_decode(&y, &s).is_err());
        assert!(forward_encode(&random_image(8, 4, 1), &s, &m, 0.0, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn adjoint_pair_and_linearity(seed in 0u64..200, coils in 1usize..4, af in 1.0f64..5.0) {
            let s = random_maps(coils, 16, 8, seed);
            let m = make_mask(16, 8, af, 2, seed).unwrap();
            let x = random_image(16, 8, seed + 1);
            let z = random_image(16, 8, seed + 2);
            let ax = forward_encode(&x, &s, &m, 0.0, 0).unwrap();
            let yk = KSpaceData {
                coils: (0..coils).map(|c| m.apply(&random_image(16, 8, seed * 5 + c as u64)).unwrap()).collect(),
                mask: m.clone(),
            };
            let mut lhs = (0.0, 0.0);
            for (a, b) in ax.coils.iter().zip(&yk.coils) {
                let ip = a.inner(b).unwrap();
                lhs.0 += ip.0;
                lhs.1 += ip.1;
            }
            let rhs = x.inner(&adjoint_decode(&yk, &s).unwrap()).unwrap();
            proptest::prop_assert!((lhs.0 - rhs.0).abs() <= 1e-10 && (lhs.1 - rhs.1).abs() <= 1e-10);

            let mut combo = x.scaled(2.5);
            combo.add_assign(&z.scaled(-0.75)).unwrap();
            let a_combo = forward_encode(&combo, &s, &m, 0.0, 0).unwrap();
            let az = forward_encode(&z, &s, &m, 0.0, 0).unwrap();
            for c in 0..coils {
                let mut expect = ax.coils[c].scaled(2.5);
                expect.add_assign(&az.coils[c].scaled(-0.75)).unwrap();
                proptest::prop_assert!(a_combo.coils[c].max_abs_diff(&expect) <= 1e-10);
                let twice = m.apply(&a_combo.coils[c]).unwrap();
                proptest::prop_assert_eq!(&twice, &a_combo.coils[c]);
            }
        }
    }
}
