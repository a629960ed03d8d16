//! Parallel-imaging physics: masks, coil sensitivities, the encoding
//! operator `y = MFSx + n`, zero-filled and CG-SENSE reconstruction.

mod cg;
mod mask;
mod operator;
mod sensitivity;

pub use cg::{cg_sense, CgConfig, CgResult};
pub use mask::{acs_start, line_count, make_mask, SamplingMask};
pub use operator::{adjoint_decode, forward_encode, normal_apply, KSpaceData};
pub use sensitivity::{estimate_sensitivities_acs, CoilSensitivities, RSS_FLOOR};
