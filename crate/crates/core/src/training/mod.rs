//! Composite generator loss, adversarial losses, the GAN training loop and fine-tuning.

mod config;
mod data;
mod losses;
mod report;
mod trainer;

pub use config::{LrSchedule, MaskPolicy, TrainConfig};
pub use data::{display_magnitude, prepare, prepare_all, Acquisition, MapSource, Prepared};
pub use losses::{
    disc_loss_graph, fmae_graph, gen_loss_graph, imae_graph, loss_disc, loss_fmae_m,
    loss_fmae_notm, loss_gen, loss_imae, loss_imae_verbatim, total_generator_loss, FidelityTarget,
    LossTerms, LossVariant, LossWeights,
};
pub use report::{EpochRecord, TrainReport, REPORT_COLUMNS};
pub use trainer::{
    finetune, generator_loss_graph, mean_psnr, mean_zf_psnr, protocol, reconstruct_gan, train,
    GeneratorLoss, TrainOutcome,
};
