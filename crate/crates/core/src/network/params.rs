//! Named weight tensors and the `PGN1` checkpoint format.
//!
//! Layout on disk: `PGN1`, u32 little-endian header length, UTF-8 JSON
//! header ([`CheckpointHeader`]), then one `TNS1` block per tensor in
//! fingerprint order (generator first, then discriminator).

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::config::{discriminator_layout, generator_layout, ModelConfig, ParamSpec};
use crate::numerics::{Tape, Tensor, Var};

pub const FORMAT_VERSION: u32 = 1;
const PGN_MAGIC: &[u8; 4] = b"PGN1";
/// Init-std multipliers: residual-branch tails and the generator output start small
/// so every block is close to the identity and `G(x_u)` is close to zero.
const RESIDUAL_TAIL_SCALE: f64 = 0.1;
const OUTPUT_SCALE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Generator and discriminator weights in layout order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub version: u32,
    pub config: ModelConfig,
    pub generator: Vec<NamedTensor>,
    pub discriminator: Vec<NamedTensor>,
}

/// Training-state summary carried in checkpoint headers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub epoch: usize,
    pub af: f64,
    pub acs: usize,
    pub domain: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub fingerprint: Vec<ParamSpec>,
    pub state: TrainingState,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Architecture notes embedded in every checkpoint.
pub const ARCHITECTURE_NOTES: &[&str] = &[
    "generator blocks use a constant channel width at every scale",
    "decoder upsampling is nearest-neighbour x2 followed by a 3x3 conv",
    "discriminator input is the magnitude image",
    "residual-branch tails start at 0.1x and the generator output conv at 0.01x He scale",
];

fn build(layout: Vec<ParamSpec>, mut fill: impl FnMut(&ParamSpec) -> Tensor) -> Vec<NamedTensor> {
    layout
        .into_iter()
        .map(|spec| NamedTensor {
            tensor: fill(&spec),
            name: spec.name,
        })
        .collect()
}

impl ModelParams {
    /// He-normal weights (`std = sqrt(2/fan_in)`) and zero biases; the last conv of
    /// every residual branch is scaled by 0.1 and the generator output conv by 0.01.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |spec: &ParamSpec| {
            if spec.shape.len() == 1 {
                return Tensor::zeros(&spec.shape);
            }
            let fan_in: usize = spec.shape[1..].iter().product();
            let gain = if spec.name == "g.final.w" {
                OUTPUT_SCALE
            } else if spec.name.ends_with(".res.conv2.w") {
                RESIDUAL_TAIL_SCALE
            } else {
                1.0
            };
            let normal = Normal::new(0.0, gain * (2.0 / fan_in as f64).sqrt()).unwrap();
            let n = spec.shape.iter().product();
            Tensor::new(
                &spec.shape,
                (0..n).map(|_| normal.sample(&mut rng)).collect(),
            )
            .unwrap()
        };
        let generator = build(generator_layout(&config.generator), &mut fill);
        let discriminator = build(discriminator_layout(&config.discriminator), &mut fill);
        Self {
            version: FORMAT_VERSION,
            config,
            generator,
            discriminator,
        }
    }

    pub fn zeros(config: ModelConfig) -> Self {
        let generator = build(generator_layout(&config.generator), |s| {
            Tensor::zeros(&s.shape)
        });
        let discriminator = build(discriminator_layout(&config.discriminator), |s| {
            Tensor::zeros(&s.shape)
        });
        Self {
            version: FORMAT_VERSION,
            config,
            generator,
            discriminator,
        }
    }

    /// Ordered (name, shape) list of every tensor: generator, then discriminator.
    pub fn fingerprint(&self) -> Vec<ParamSpec> {
        self.generator
            .iter()
            .chain(&self.discriminator)
            .map(|t| ParamSpec {
                name: t.name.clone(),
                shape: t.tensor.shape().to_vec(),
            })
            .collect()
    }

    pub fn generator_count(&self) -> usize {
        self.generator.iter().map(|t| t.tensor.len()).sum()
    }

    pub fn discriminator_count(&self) -> usize {
        self.discriminator.iter().map(|t| t.tensor.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.generator
            .iter()
            .chain(&self.discriminator)
            .find(|t| t.name == name)
            .map(|t| &t.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.generator
            .iter_mut()
            .chain(&mut self.discriminator)
            .find(|t| t.name == name)
            .map(|t| &mut t.tensor)
    }

    /// Error naming the first tensor whose name or shape differs from `expected`.
    pub fn check_compatible(&self, expected: &ModelConfig) -> Result<()> {
        compare_fingerprints(
            &ModelParams::zeros(*expected).fingerprint(),
            &self.fingerprint(),
        )
    }

    pub fn header(&self, state: TrainingState) -> CheckpointHeader {
        CheckpointHeader {
            format: "PGN1".into(),
            version: self.version,
            config: self.config,
            fingerprint: self.fingerprint(),
            state,
            notes: ARCHITECTURE_NOTES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn to_bytes(&self, state: TrainingState) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header(state))?;
        let mut out = Vec::new();
        out.extend_from_slice(PGN_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.generator.iter().chain(&self.discriminator) {
            t.tensor
                .write_to(&mut out)
                .expect("writing to a Vec cannot fail");
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, CheckpointHeader)> {
        if bytes.len() < 8 || &bytes[..4] != PGN_MAGIC {
            return Err(Error::Format("not a PGN1 checkpoint".into()));
        }
        let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let json = bytes
            .get(8..8 + len)
            .ok_or_else(|| Error::Format("truncated PGN1 header".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(json)?;
        compare_fingerprints(
            &ModelParams::zeros(header.config).fingerprint(),
            &header.fingerprint,
        )?;
        let mut cursor = &bytes[8 + len..];
        let mut read = |specs: &[ParamSpec]| -> Result<Vec<NamedTensor>> {
            specs
                .iter()
                .map(|spec| {
                    let tensor = Tensor::read_from(&mut cursor)?;
                    if tensor.shape() != spec.shape.as_slice() {
                        return Err(Error::Format(format!(
                            "tensor {} stored as {:?}, header says {:?}",
                            spec.name,
                            tensor.shape(),
                            spec.shape
                        )));
                    }
                    Ok(NamedTensor {
                        name: spec.name.clone(),
                        tensor,
                    })
                })
                .collect()
        };
        let n_gen = generator_layout(&header.config.generator).len();
        let generator = read(&header.fingerprint[..n_gen])?;
        let discriminator = read(&header.fingerprint[n_gen..])?;
        if !cursor.is_empty() {
            return Err(Error::Format("trailing bytes after PGN1 tensors".into()));
        }
        let params = Self {
            version: header.version,
            config: header.config,
            generator,
            discriminator,
        };
        Ok((params, header))
    }

    pub fn save(&self, path: impl AsRef<Path>, state: TrainingState) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes(state)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, CheckpointHeader)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Load and require the architecture of `expected`.
    pub fn load_for(
        path: impl AsRef<Path>,
        expected: &ModelConfig,
    ) -> Result<(Self, CheckpointHeader)> {
        let (p, h) = Self::load(path)?;
        p.check_compatible(expected)?;
        Ok((p, h))
    }
}

fn compare_fingerprints(expected: &[ParamSpec], found: &[ParamSpec]) -> Result<()> {
    for (i, e) in expected.iter().enumerate() {
        match found.get(i) {
            None => {
                return Err(Error::Incompatible(format!(
                    "missing tensor {} {:?}",
                    e.name, e.shape
                )))
            }
            Some(f) if f != e => {
                return Err(Error::Incompatible(format!(
                    "tensor #{i}: expected {} {:?}, found {} {:?}",
                    e.name, e.shape, f.name, f.shape
                )))
            }
            _ => {}
        }
    }
    if let Some(extra) = found.get(expected.len()) {
        return Err(Error::Incompatible(format!(
            "unexpected tensor {} {:?}",
            extra.name, extra.shape
        )));
    }
    Ok(())
}

/// Parameters registered on a tape, addressable by name.
pub struct BoundParams {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    /// Register tensors as trainable leaves (or constants when `trainable` is false).
    pub fn bind(tape: &mut Tape, tensors: &[NamedTensor], trainable: bool) -> Self {
        let mut vars = Vec::with_capacity(tensors.len());
        let mut index = HashMap::with_capacity(tensors.len());
        for (i, t) in tensors.iter().enumerate() {
            let v = if trainable {
                tape.param(t.tensor.clone())
            } else {
                tape.constant(t.tensor.clone())
            };
            vars.push(v);
            index.insert(t.name.clone(), i);
        }
        Self { vars, index }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Incompatible(format!("parameter {name} not bound")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
