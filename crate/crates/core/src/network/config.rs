use serde::{Deserialize, Serialize};

/// Generator: residual U-Net with four encoder and four decoder blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub coils: usize,
    /// Feature maps of every block (constant across scales).
    pub width: usize,
    /// Feature maps of the middle convolution of each residual block.
    pub bottleneck: usize,
}

/// Number of stride-2 stages in the generator encoder.
pub const GENERATOR_DEPTH: usize = 4;

impl GeneratorConfig {
    /// Full-size widths (64 / 32).
    pub fn full(coils: usize) -> Self {
        Self {
            coils,
            width: 64,
            bottleneck: 32,
        }
    }

    /// Sixteen-times cheaper than `full` (32 / 16).
    pub fn desk(coils: usize) -> Self {
        Self {
            coils,
            width: 32,
            bottleneck: 16,
        }
    }

    /// Single-core acceptance width (8 / 4).
    pub fn compact(coils: usize) -> Self {
        Self {
            coils,
            width: 8,
            bottleneck: 4,
        }
    }

    /// Zero-filled re/im plus re/im for every coil map.
    pub fn in_channels(&self) -> usize {
        2 + 2 * self.coils
    }
}

/// Discriminator: two 4×4 LeakyReLU layers, four encoder blocks, a 1-channel head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub width: usize,
    pub bottleneck: usize,
}

/// Smallest spatial extent the discriminator accepts.
pub const DISCRIMINATOR_MIN_EXTENT: usize = 16;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl ModelConfig {
    /// Generator and discriminator sharing the same widths.
    pub fn symmetric(generator: GeneratorConfig) -> Self {
        Self {
            generator,
            discriminator: DiscriminatorConfig {
                width: generator.width,
                bottleneck: generator.bottleneck,
            },
        }
    }
}

/// Name and shape of one weight tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

fn conv(out: &mut Vec<ParamSpec>, name: &str, cin: usize, cout: usize, k: usize) {
    out.push(ParamSpec {
        name: format!("{name}.w"),
        shape: vec![cout, cin, k, k],
    });
    out.push(ParamSpec {
        name: format!("{name}.b"),
        shape: vec![cout],
    });
}

/// Entry conv, residual block (conv0/conv1/conv2) and exit conv.
fn block(
    out: &mut Vec<ParamSpec>,
    prefix: &str,
    entry: &str,
    cin: usize,
    width: usize,
    bottleneck: usize,
) {
    conv(out, &format!("{prefix}.{entry}"), cin, width, 3);
    conv(out, &format!("{prefix}.res.conv0"), width, width, 3);
    conv(out, &format!("{prefix}.res.conv1"), width, bottleneck, 3);
    conv(out, &format!("{prefix}.res.conv2"), bottleneck, width, 3);
    conv(out, &format!("{prefix}.out"), width, width, 3);
}

/// Ordered generator parameter layout.
pub fn generator_layout(cfg: &GeneratorConfig) -> Vec<ParamSpec> {
    let (w, b, cin) = (cfg.width, cfg.bottleneck, cfg.in_channels());
    let mut out = Vec::new();
    for k in 1..=GENERATOR_DEPTH {
        block(
            &mut out,
            &format!("g.enc{k}"),
            "down",
            if k == 1 { cin } else { w },
            w,
            b,
        );
    }
    for k in 1..=GENERATOR_DEPTH {
        let skip = if k == GENERATOR_DEPTH { cin } else { w };
        block(&mut out, &format!("g.dec{k}"), "up", w + skip, w, b);
    }
    conv(&mut out, "g.final", w, 2, 3);
    out
}

/// Ordered discriminator parameter layout.
pub fn discriminator_layout(cfg: &DiscriminatorConfig) -> Vec<ParamSpec> {
    let (w, b) = (cfg.width, cfg.bottleneck);
    let mut out = Vec::new();
    conv(&mut out, "d.l1", 1, w, 4);
    conv(&mut out, "d.l2", w, w, 4);
    for l in 3..=6 {
        block(&mut out, &format!("d.l{l}"), "down", w, w, b);
    }
    conv(&mut out, "d.l7", w, 1, 3);
    out
}

pub fn parameter_count(layout: &[ParamSpec]) -> usize {
    layout
        .iter()
        .map(|p| p.shape.iter().product::<usize>())
        .sum()
}
