use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numerics::{ComplexImage, Tensor};

/// 1-D Cartesian phase-encode line mask with a central ACS block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    pub height: usize,
    pub width: usize,
    pub rows: Vec<bool>,
    pub af: f64,
    pub acs: usize,
}

/// Number of lines kept for a nominal acceleration factor.
pub fn line_count(height: usize, af: f64) -> usize {
    (height as f64 / af).round() as usize
}

/// First row of the centered ACS block.
pub fn acs_start(height: usize, acs: usize) -> usize {
    height / 2 - acs / 2
}

/// Draw a mask with `round(H/af)` lines: the `acs` central rows plus rows
/// sampled uniformly without replacement from the rest.
pub fn make_mask(
    height: usize,
    width: usize,
    af: f64,
    acs: usize,
    seed: u64,
) -> Result<SamplingMask> {
    if !(af >= 1.0) || !af.is_finite() {
        return Err(Error::Config(format!(
            "acceleration factor must be ≥ 1, got {af}"
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::Config("mask extents must be positive".into()));
    }
    let lines = line_count(height, af);
    if acs > lines {
        return Err(Error::Config(format!(
            "ACS block of {acs} rows exceeds the {lines} lines allowed by H={height}, AF={af}"
        )));
    }
    let mut rows = vec![false; height];
    let start = acs_start(height, acs);
    rows[start..start + acs].fill(true);
    let mut rest: Vec<usize> = (0..height).filter(|&r| !rows[r]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    for &r in rest.iter().take(lines - acs) {
        rows[r] = true;
    }
    Ok(SamplingMask {
        height,
        width,
        rows,
        af,
        acs,
    })
}

impl SamplingMask {
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            rows: vec![true; height],
            af: 1.0,
            acs: height,
        }
    }

    pub fn sampled_rows(&self) -> usize {
        self.rows.iter().filter(|&&r| r).count()
    }

    pub fn acs_rows(&self) -> std::ops::Range<usize> {
        let s = acs_start(self.height, self.acs);
        s..s + self.acs
    }

    /// H×W 0/1 mask.
    pub fn expand(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.height, self.width]);
        for (r, &on) in self.rows.iter().enumerate() {
            if on {
                t.data_mut()[r * self.width..(r + 1) * self.width].fill(1.0);
            }
        }
        t
    }

    /// Zero every unsampled row.
    pub fn apply(&self, k: &ComplexImage) -> Result<ComplexImage> {
        if k.height != self.height || k.width != self.width {
            return Err(shape_err!(
                "mask {}x{} vs data {}x{}",
                self.height,
                self.width,
                k.height,
                k.width
            ));
        }
        let mut out = k.clone();
        for (r, &on) in self.rows.iter().enumerate() {
            if !on {
                out.re.data_mut()[r * self.width..(r + 1) * self.width].fill(0.0);
                out.im.data_mut()[r * self.width..(r + 1) * self.width].fill(0.0);
            }
        }
        Ok(out)
    }

    /// Rank-1 0/1 row tensor (the persisted form).
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            &[self.height],
            self.rows
                .iter()
                .map(|&r| if r { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap()
    }

    /// Rebuild from the persisted row tensor; `af` is taken as `H / lines` and
    /// the ACS size as the longest contiguous sampled run through the centre.
    pub fn from_tensor(t: &Tensor, width: usize) -> Result<Self> {
        if t.rank() != 1 {
            return Err(shape_err!(
                "mask tensor must be rank 1, got {:?}",
                t.shape()
            ));
        }
        if t.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Format("mask tensor must hold only 0/1".into()));
        }
        let rows: Vec<bool> = t.data().iter().map(|&v| v == 1.0).collect();
        let height = rows.len();
        let lines = rows.iter().filter(|&&r| r).count();
        if lines == 0 {
            return Err(Error::Format("mask samples no rows".into()));
        }
        let mut acs = 0;
        while acs < height {
            let s = acs_start(height, acs + 1);
            if rows[s..s + acs + 1].iter().all(|&r| r) {
                acs += 1;
            } else {
                break;
            }
        }
        Ok(Self {
            height,
            width,
            rows,
            af: height as f64 / lines as f64,
            acs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_acceleration_samples_everything() {
        for acs in [0, 4, 16] {
            let m = make_mask(16, 8, 1.0, acs, 3).unwrap();
            assert!(m.rows.iter().all(|&r| r));
        }
    }

    #[test]
    fn desk_mask_counts() {
        let m = make_mask(64, 64, 4.0, 8, 1).unwrap();
        assert_eq!(m.sampled_rows(), 16);
        assert!(m.rows[28..=35].iter().all(|&r| r));
    }

    #[test]
    fn full_scale_mask_counts() {
        let m = make_mask(256, 256, 4.0, 24, 1).unwrap();
        assert_eq!(m.sampled_rows(), 64);
        assert_eq!(m.acs_rows(), 116..140);
        assert!(m.rows[116..140].iter().all(|&r| r));
    }

    #[test]
    fn acs_larger_than_budget_is_config_error() {
        assert!(matches!(
            make_mask(64, 64, 4.0, 17, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            make_mask(64, 64, 0.5, 0, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_mask(64, 64, 4.0, 8, 9).unwrap();
        assert_eq!(a, make_mask(64, 64, 4.0, 8, 9).unwrap());
        assert_ne!(a.rows, make_mask(64, 64, 4.0, 8, 10).unwrap().rows);
    }

    #[test]
    fn tensor_round_trip_recovers_rows() {
        let m = make_mask(64, 32, 4.0, 8, 5).unwrap();
        let back = SamplingMask::from_tensor(&m.to_tensor(), 32).unwrap();
        assert_eq!(back.rows, m.rows);
        assert!(back.acs >= 8);
        assert_eq!(back.af, 4.0);
    }

    proptest::proptest! {
        #[test]
        fn mask_invariants(h_pow in 3u32..8, af in 1.0f64..8.0, acs_frac in 0.0f64..1.0, seed in 0u64..1000) {
            let h = 1usize << h_pow;
            let lines = line_count(h, af);
            let acs = ((lines as f64) * acs_frac) as usize;
            let m = make_mask(h, 4, af, acs, seed).unwrap();
            proptest::prop_assert_eq!(m.sampled_rows(), lines);
            proptest::prop_assert!(m.rows[m.acs_rows()].iter().all(|&r| r));
            let e = m.expand();
            proptest::prop_assert!(e.data().iter().all(|&v| v * v == v));
        }
    }
}
