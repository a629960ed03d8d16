//! Shared fixtures for the criterion benches.

use pigan_core::network::{GeneratorConfig, ModelConfig, ModelParams};
use pigan_core::phantoms::{Dataset, DatasetConfig, Domain, SplitCounts};
use pigan_core::training::{prepare, protocol, Prepared, TrainConfig};

/// One prepared brainlike sample at the desk protocol (AF 4, 8 ACS lines).
pub fn sample(size: usize, coils: usize) -> Prepared {
    let ds = Dataset::generate(&DatasetConfig {
        domain: Domain::Brainlike,
        counts: SplitCounts {
            train: 1,
            val: 0,
            test: 0,
        },
        size,
        coils,
        base_seed: 0,
    })
    .expect("fixture dataset");
    let acq = protocol(&ds, &TrainConfig::desk()).expect("fixture protocol");
    prepare(&ds.train[0], &acq).expect("fixture sample")
}

pub fn model(coils: usize, width: usize, bottleneck: usize) -> ModelParams {
    ModelParams::init(
        ModelConfig::symmetric(GeneratorConfig {
            coils,
            width,
            bottleneck,
        }),
        0,
    )
}
