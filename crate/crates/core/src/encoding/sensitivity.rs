use crate::encoding::operator::{stack_coils, unstack_coils};
use crate::encoding::KSpaceData;
use crate::error::{shape_err, Error, Result};
use crate::numerics::{ifft2c, ComplexImage, Tensor};

/// Division floor used when dividing coil images by their root-sum-of-squares.
pub const RSS_FLOOR: f64 = 1e-8;

/// Per-coil complex sensitivity maps.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilSensitivities {
    pub maps: Vec<ComplexImage>,
}

impl CoilSensitivities {
    pub fn new(maps: Vec<ComplexImage>) -> Result<Self> {
        let Some(first) = maps.first() else {
            return Err(Error::Shape("at least one coil map is required".into()));
        };
        for m in &maps {
            first.same_dims(m)?;
        }
        Ok(Self { maps })
    }

    /// Build and rescale so that `Σ_c |S_c|² = 1` wherever any coil is nonzero.
    pub fn normalized(maps: Vec<ComplexImage>) -> Result<Self> {
        let mut s = Self::new(maps)?;
        s.normalize();
        Ok(s)
    }

    pub fn coil_count(&self) -> usize {
        self.maps.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.maps[0].height, self.maps[0].width)
    }

    /// Pixelwise `Σ_c |S_c|²`.
    pub fn sum_of_squares(&self) -> Vec<f64> {
        let (h, w) = self.dims();
        let mut acc = vec![0.0; h * w];
        for m in &self.maps {
            for (i, a) in acc.iter_mut().enumerate() {
                *a += m.re.data()[i].powi(2) + m.im.data()[i].powi(2);
            }
        }
        acc
    }

    pub fn normalize(&mut self) {
        let sos = self.sum_of_squares();
        for m in &mut self.maps {
            for (i, &e) in sos.iter().enumerate() {
                if e > 0.0 {
                    let inv = 1.0 / e.sqrt();
                    m.re.data_mut()[i] *= inv;
                    m.im.data_mut()[i] *= inv;
                }
            }
        }
    }

    /// Largest `|Σ_c |S_c|² − 1|` over pixels where `support` is true.
    pub fn normalization_error(&self, support: impl Fn(usize) -> bool) -> f64 {
        self.sum_of_squares()
            .iter()
            .enumerate()
            .filter(|(i, _)| support(*i))
            .map(|(_, e)| (e - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `[C, 2, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        stack_coils(&self.maps)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        Self::new(unstack_coils(t)?)
    }

    pub fn magnitudes(&self) -> Vec<Tensor> {
        self.maps.iter().map(|m| m.magnitude()).collect()
    }
}

/// Low-resolution sensitivity estimate from the ACS block of `y`.
///
/// Each coil's ACS-only k-space is inverse transformed, divided by the
/// root-sum-of-squares image (floored at [`RSS_FLOOR`]), then renormalized.
pub fn estimate_sensitivities_acs(y: &KSpaceData) -> Result<CoilSensitivities> {
    let m = &y.mask;
    if m.acs == 0 {
        return Err(Error::Domain(
            "sensitivity estimation needs a nonempty ACS block".into(),
        ));
    }
    let w = m.width;
    let acs = m.acs_rows();
    let mut images = Vec::with_capacity(y.coil_count());
    for k in &y.coils {
        if k.height != m.height || k.width != w {
            return Err(shape_err!(
                "coil k-space {}x{} vs mask {}x{}",
                k.height,
                k.width,
                m.height,
                w
            ));
        }
        let mut low = ComplexImage::zeros(k.height, w);
        let span = acs.start * w..acs.end * w;
        low.re.data_mut()[span.clone()].copy_from_slice(&k.re.data()[span.clone()]);
        low.im.data_mut()[span.clone()].copy_from_slice(&k.im.data()[span]);
        images.push(ifft2c(&low)?);
    }
    let mut s = CoilSensitivities::new(images)?;
    let rss: Vec<f64> = s.sum_of_squares().iter().map(|e| e.sqrt()).collect();
    if rss.iter().all(|&r| r == 0.0) {
        return Err(Error::Domain("ACS block is all zero".into()));
    }
    for map in &mut s.maps {
        for (i, &r) in rss.iter().enumerate() {
            let inv = 1.0 / r.max(RSS_FLOOR);
            map.re.data_mut()[i] *= inv;
            map.im.data_mut()[i] *= inv;
        }
    }
    s.normalize();
    Ok(s)
}
