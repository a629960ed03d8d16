//! Procedural multi-coil phantoms for four anatomy-like domains, and their on-disk datasets.

mod dataset;
mod shapes;

pub use dataset::{
    build_dataset, read_manifest, sample_file, sample_seed, Dataset, DatasetConfig, Manifest,
    Sample, Split, SplitCounts, SplitIndices, MANIFEST_NAME,
};
pub use shapes::{gen_phantom, gen_phantom_full, Domain, Phantom, PhantomSpec};
