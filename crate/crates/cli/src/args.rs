use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pigan_core::metrics::NrmseNorm;
use pigan_core::phantoms::Domain;
use pigan_core::training::{LossVariant, MapSource, MaskPolicy};

#[derive(Debug, Parser)]
#[command(
    name = "pigan",
    version,
    about = "Parallel-imaging GAN reconstruction with transfer learning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-coil phantom dataset.
    Simulate(SimulateArgs),
    /// Train a generator/discriminator pair from scratch (or from --init).
    Pretrain(TrainArgs),
    /// Continue training a checkpoint on a new dataset or acceleration.
    Finetune(TrainArgs),
    /// Reconstruct one split and write magnitude and error images.
    Reconstruct(ReconstructArgs),
    /// Score reconstructions against ground truth; two directories add paired tests.
    Evaluate(EvaluateArgs),
    /// Run a transfer-learning experiment described by a JSON recipe.
    Recipe(RecipeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_domain)]
    pub domain: Domain,
    #[arg(long, default_value_t = 200)]
    pub n_train: usize,
    #[arg(long, default_value_t = 20)]
    pub n_val: usize,
    #[arg(long, default_value_t = 40)]
    pub n_test: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 4)]
    pub coils: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Starting checkpoint (required by `finetune`).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub af: Option<f64>,
    #[arg(long)]
    pub acs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mask_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mask_policy: Option<MaskPolicyArg>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub maps: Option<MapSourceArg>,
    #[arg(long, value_enum)]
    pub loss_variant: Option<LossVariantArg>,
    #[arg(long)]
    pub validation_every: Option<usize>,
    /// Comma-separated 1-based epochs to snapshot.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<usize>>,
    #[arg(long)]
    pub max_grad_norm: Option<f64>,
    /// Weight of the adversarial term.
    #[arg(long)]
    pub adversarial: Option<f64>,
    /// Generator/discriminator feature width for a fresh model.
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 16)]
    pub bottleneck: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Zf,
    Cgsense,
    Gan,
    /// Ground truth through the same export path.
    Truth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    pub af: f64,
    #[arg(long, default_value_t = 8)]
    pub acs: usize,
    /// Defaults to the dataset's base seed, the training default.
    #[arg(long)]
    pub mask_seed: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, value_enum, default_value_t = MapSourceArg::Truth)]
    pub maps: MapSourceArg,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 1e-4)]
    pub cg_lambda: f64,
    #[arg(long, default_value_t = 50)]
    pub cg_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// One directory per method (at most two).
    #[arg(long, required = true, num_args = 1)]
    pub recon_dir: Vec<PathBuf>,
    /// Dataset manifest (or its directory) holding the ground truth.
    #[arg(long)]
    pub gt_manifest: PathBuf,
    /// ROI mask (TNS1 or PGM) applied to every image.
    #[arg(long, conflicts_with = "dataset_roi")]
    pub roi: Option<PathBuf>,
    /// Use the per-sample lesion masks stored in the dataset.
    #[arg(long)]
    pub dataset_roi: bool,
    #[arg(long, value_enum, default_value_t = NrmseArg::L2)]
    pub nrmse_norm: NrmseArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecipeArgs {
    pub recipe: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_domain(s: &str) -> Result<Domain, String> {
    s.parse().map_err(|e: pigan_core::Error| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MaskPolicyArg {
    Fixed,
    PerEpoch,
}

impl From<MaskPolicyArg> for MaskPolicy {
    fn from(v: MaskPolicyArg) -> Self {
        match v {
            MaskPolicyArg::Fixed => MaskPolicy::Fixed,
            MaskPolicyArg::PerEpoch => MaskPolicy::PerEpoch,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MapSourceArg {
    Truth,
    AcsEstimate,
}

impl From<MapSourceArg> for MapSource {
    fn from(v: MapSourceArg) -> Self {
        match v {
            MapSourceArg::Truth => MapSource::Truth,
            MapSourceArg::AcsEstimate => MapSource::AcsEstimate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossVariantArg {
    Symmetric,
    Verbatim,
}

impl From<LossVariantArg> for LossVariant {
    fn from(v: LossVariantArg) -> Self {
        match v {
            LossVariantArg::Symmetric => LossVariant::Symmetric,
            LossVariantArg::Verbatim => LossVariant::Verbatim,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NrmseArg {
    L2,
    Range,
}

impl From<NrmseArg> for NrmseNorm {
    fn from(v: NrmseArg) -> Self {
        match v {
            NrmseArg::L2 => NrmseNorm::L2,
            NrmseArg::Range => NrmseNorm::Range,
        }
    }
}
