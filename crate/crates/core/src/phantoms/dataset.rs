use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::CoilSensitivities;
use crate::error::{Error, Result};
use crate::numerics::{ComplexImage, Tensor};
use crate::phantoms::shapes::{gen_phantom_full, Domain, PhantomSpec};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub domain: Domain,
    pub counts: SplitCounts,
    pub size: usize,
    pub coils: usize,
    pub base_seed: u64,
}

/// Global sample indices run train → val → test, so splits never overlap.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub domain: Domain,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "C")]
    pub coils: usize,
    pub counts: SplitCounts,
    pub base_seed: u64,
    pub indices: SplitIndices,
    /// Per-sample phantom seed, keyed by global index.
    pub seeds: BTreeMap<usize, u64>,
    /// CRC32 of every sample file, keyed by file name.
    pub checksums: BTreeMap<String, u32>,
}

impl Manifest {
    pub fn config(&self) -> DatasetConfig {
        DatasetConfig {
            domain: self.domain,
            counts: self.counts,
            size: self.height,
            coils: self.coils,
            base_seed: self.base_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub image: ComplexImage,
    pub sensitivities: CoilSensitivities,
    pub roi: Option<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Phantom seed of sample `index`; a pure function of `(base_seed, index)`.
pub fn sample_seed(base_seed: u64, index: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(index as u64))
}

pub fn sample_file(split: Split, index: usize, kind: &str) -> String {
    format!("{split}_{index}_{kind}.tns")
}

impl Dataset {
    pub fn generate(cfg: &DatasetConfig) -> Result<Self> {
        let mut next = 0;
        let mut take = |n: usize| {
            let r: Vec<usize> = (next..next + n).collect();
            next += n;
            r
        };
        let indices = SplitIndices {
            train: take(cfg.counts.train),
            val: take(cfg.counts.val),
            test: take(cfg.counts.test),
        };
        let mut seeds = BTreeMap::new();
        let mut build = |idx: &[usize]| -> Result<Vec<Sample>> {
            idx.iter()
                .map(|&index| {
                    let seed = sample_seed(cfg.base_seed, index);
                    seeds.insert(index, seed);
                    let spec = PhantomSpec {
                        domain: cfg.domain,
                        size: cfg.size,
                        coils: cfg.coils,
                        seed,
                    };
                    let p = gen_phantom_full(&spec)?;
                    Ok(Sample {
                        index,
                        image: p.image,
                        sensitivities: p.sensitivities,
                        roi: p.roi,
                    })
                })
                .collect()
        };
        let train = build(&indices.train)?;
        let val = build(&indices.val)?;
        let test = build(&indices.test)?;
        let manifest = Manifest {
            domain: cfg.domain,
            height: cfg.size,
            width: cfg.size,
            coils: cfg.coils,
            counts: cfg.counts,
            base_seed: cfg.base_seed,
            indices,
            seeds,
            checksums: BTreeMap::new(),
        };
        let mut ds = Self {
            manifest,
            train,
            val,
            test,
        };
        ds.manifest.checksums = ds
            .encoded_files()
            .into_iter()
            .map(|(name, bytes)| (name, crc32(&bytes)))
            .collect();
        Ok(ds)
    }

    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn encoded_files(&self) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        for split in Split::ALL {
            for s in self.split(split) {
                out.push((
                    sample_file(split, s.index, "x"),
                    s.image.to_channels().to_bytes(),
                ));
                out.push((
                    sample_file(split, s.index, "s"),
                    s.sensitivities.to_tensor().to_bytes(),
                ));
                if let Some(roi) = &s.roi {
                    out.push((sample_file(split, s.index, "roi"), roi.to_bytes()));
                }
            }
        }
        out
    }

    /// Write every sample file plus `manifest.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, bytes) in self.encoded_files() {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(MANIFEST_NAME);
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    /// Read a saved dataset, verifying each file against its manifest checksum.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = read_manifest(dir)?;
        let read = |name: String| -> Result<Tensor> {
            let path = dir.join(&name);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let expect = manifest
                .checksums
                .get(&name)
                .ok_or_else(|| Error::Format(format!("{name} is not listed in the manifest")))?;
            if crc32(&bytes) != *expect {
                return Err(Error::Format(format!(
                    "checksum mismatch for {}",
                    path.display()
                )));
            }
            Tensor::read_from(&mut bytes.as_slice())
        };
        let mut splits = Vec::new();
        for split in Split::ALL {
            let samples = manifest
                .indices
                .get(split)
                .iter()
                .map(|&index| {
                    let image =
                        ComplexImage::from_channels(&read(sample_file(split, index, "x"))?)?;
                    let sensitivities =
                        CoilSensitivities::from_tensor(&read(sample_file(split, index, "s"))?)?;
                    let roi_name = sample_file(split, index, "roi");
                    let roi = if manifest.checksums.contains_key(&roi_name) {
                        Some(read(roi_name)?)
                    } else {
                        None
                    };
                    if (image.height, image.width) != (manifest.height, manifest.width)
                        || sensitivities.coil_count() != manifest.coils
                    {
                        return Err(Error::Format(format!(
                            "sample {index} does not match the manifest geometry"
                        )));
                    }
                    Ok(Sample {
                        index,
                        image,
                        sensitivities,
                        roi,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            splits.push(samples);
        }
        let test = splits.pop().unwrap();
        let val = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        Ok(Self {
            manifest,
            train,
            val,
            test,
        })
    }
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_NAME);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Generate and persist a dataset; returns the in-memory copy.
pub fn build_dataset(cfg: &DatasetConfig, out: impl AsRef<Path>) -> Result<Dataset> {
    let ds = Dataset::generate(cfg)?;
    ds.save(out)?;
    Ok(ds)
}

fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(train: usize, val: usize, test: usize) -> DatasetConfig {
        DatasetConfig {
            domain: Domain::Tumorlike,
            counts: SplitCounts { train, val, test },
            size: 32,
            coils: 2,
            base_seed: 11,
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = build_dataset(&cfg(3, 2, 2), dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds, back);
        let all: Vec<usize> = Split::ALL
            .iter()
            .flat_map(|s| back.manifest.indices.get(*s).to_vec())
            .collect();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
        assert!(back.test.iter().all(|s| s.roi.is_some()));
    }

    #[test]
    fn empty_train_split_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        build_dataset(&cfg(0, 1, 0), dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert!(back.train.is_empty());
        assert_eq!(back.manifest.counts.train, 0);
    }

    #[test]
    fn corrupted_file_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        build_dataset(&cfg(1, 0, 0), dir.path()).unwrap();
        let path = dir.path().join("train_0_x.tns");
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn desk_split_regenerates_from_manifest_seeds() {
        let c = DatasetConfig {
            domain: Domain::Brainlike,
            counts: SplitCounts {
                train: 200,
                val: 20,
                test: 40,
            },
            size: 64,
            coils: 4,
            base_seed: 7,
        };
        let ds = Dataset::generate(&c).unwrap();
        let again = Dataset::generate(&ds.manifest.config()).unwrap();
        assert_eq!(ds.manifest, again.manifest);
        for (index, seed) in &ds.manifest.seeds {
            assert_eq!(*seed, sample_seed(7, *index));
        }
        assert_eq!(ds.manifest.checksums.len(), 2 * 260);
    }

    #[test]
    fn seeds_are_order_independent() {
        let a = Dataset::generate(&cfg(2, 0, 0)).unwrap();
        let b = Dataset::generate(&cfg(5, 1, 0)).unwrap();
        assert_eq!(a.train[..], b.train[..2]);
    }
}
