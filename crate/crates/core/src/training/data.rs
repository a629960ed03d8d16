use serde::{Deserialize, Serialize};

use crate::encoding::{
    adjoint_decode, estimate_sensitivities_acs, forward_encode, make_mask, CoilSensitivities,
    KSpaceData, SamplingMask,
};
use crate::error::Result;
use crate::network::generator_input;
use crate::numerics::{ComplexImage, Tensor};
use crate::phantoms::{sample_seed, Sample};
use crate::training::losses::FidelityTarget;

/// Which coil maps feed the generator and the fidelity terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapSource {
    /// Simulator ground-truth maps.
    #[default]
    Truth,
    /// Low-resolution estimate from the ACS block.
    AcsEstimate,
}

/// How a ground-truth sample is turned into measured data.
#[derive(Clone, Debug, PartialEq)]
pub struct Acquisition {
    pub mask: SamplingMask,
    pub noise_sigma: f64,
    /// Per-sample noise seeds derive from this and the sample index.
    pub noise_seed: u64,
    pub maps: MapSource,
}

impl Acquisition {
    /// Mask drawn from `mask_seed`; noise seeds derive from the same value.
    pub fn new(
        height: usize,
        width: usize,
        af: f64,
        acs: usize,
        mask_seed: u64,
        noise_sigma: f64,
        maps: MapSource,
    ) -> Result<Self> {
        Ok(Self {
            mask: make_mask(height, width, af, acs, mask_seed)?,
            noise_sigma,
            noise_seed: mask_seed ^ 0x6e6f_6973_65,
            maps,
        })
    }
}

/// A sample with its simulated measurement and all training-time constants.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub index: usize,
    pub truth: ComplexImage,
    pub kspace: KSpaceData,
    pub maps: CoilSensitivities,
    pub zero_filled: ComplexImage,
    /// Generator input `[1, 2+2C, H, W]`.
    pub input: Tensor,
    /// Zero-filled image `[1, 2, H, W]`.
    pub xu: Tensor,
    /// `|x_t|` as `[1, 1, H, W]`.
    pub truth_mag: Tensor,
    pub target: FidelityTarget,
    /// Lesion mask when the sample carries one.
    pub roi: Option<Tensor>,
}

pub fn prepare(sample: &Sample, acq: &Acquisition) -> Result<Prepared> {
    let seed = sample_seed(acq.noise_seed, sample.index);
    let kspace = forward_encode(
        &sample.image,
        &sample.sensitivities,
        &acq.mask,
        acq.noise_sigma,
        seed,
    )?;
    let maps = match acq.maps {
        MapSource::Truth => sample.sensitivities.clone(),
        MapSource::AcsEstimate => estimate_sensitivities_acs(&kspace)?,
    };
    let zero_filled = adjoint_decode(&kspace, &maps)?;
    let (h, w) = (sample.image.height, sample.image.width);
    Ok(Prepared {
        index: sample.index,
        input: generator_input(&zero_filled, &maps)?,
        xu: zero_filled.to_channels().reshape(&[1, 2, h, w])?,
        truth_mag: sample.image.magnitude().reshape(&[1, 1, h, w])?,
        target: FidelityTarget::new(&sample.image, &maps, &acq.mask)?,
        truth: sample.image.clone(),
        roi: sample.roi.clone(),
        kspace,
        maps,
        zero_filled,
    })
}

pub fn prepare_all(samples: &[Sample], acq: &Acquisition) -> Result<Vec<Prepared>> {
    samples.iter().map(|s| prepare(s, acq)).collect()
}

/// Magnitude clamped to [0, 1], the form every metric consumes.
pub fn display_magnitude(x: &ComplexImage) -> Tensor {
    x.magnitude().map(|v| v.clamp(0.0, 1.0))
}
