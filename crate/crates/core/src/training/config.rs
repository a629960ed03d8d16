use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::data::MapSource;
use crate::training::losses::{LossVariant, LossWeights};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    /// Per-step linear decay from the initial rate to zero over the epoch budget.
    #[default]
    Linear,
    Constant,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskPolicy {
    /// One mask per acquisition protocol, shared by every split.
    #[default]
    Fixed,
    /// Redraw the training mask at the start of every epoch (validation keeps the fixed mask).
    PerEpoch,
}

/// Everything that determines a training run besides the data and architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    /// Validate every this many epochs (and always after the last one).
    pub validation_every: usize,
    pub af: f64,
    pub acs: usize,
    /// Seed of the sampling mask; `None` uses the dataset's base seed so every
    /// run on one dataset sees the same acquisition.
    pub mask_seed: Option<u64>,
    pub mask_policy: MaskPolicy,
    /// Per-component standard deviation of simulated k-space noise.
    pub noise_sigma: f64,
    pub sensitivities: MapSource,
    pub weights: LossWeights,
    pub loss_variant: LossVariant,
    /// 1-based epochs after which a snapshot is kept. Empty in a fine-tune
    /// means 20/40/60/80/100 % of the budget.
    pub checkpoint_epochs: Vec<usize>,
    /// Rescale each network's batch gradient to at most this global L2 norm.
    pub max_grad_norm: Option<f64>,
    /// Discriminator learning rate as a multiple of the generator's.
    pub disc_lr_factor: f64,
}

impl Default for TrainConfig {
    /// Full-scale protocol: 1000 epochs, batch 8, lr 1e-4, AF 4 with 24 ACS lines.
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 8,
            learning_rate: 1e-4,
            lr_schedule: LrSchedule::Linear,
            seed: 0,
            validation_every: 1,
            af: 4.0,
            acs: 24,
            mask_seed: None,
            mask_policy: MaskPolicy::Fixed,
            noise_sigma: 0.0,
            sensitivities: MapSource::Truth,
            weights: LossWeights::default(),
            loss_variant: LossVariant::Symmetric,
            checkpoint_epochs: Vec::new(),
            max_grad_norm: None,
            disc_lr_factor: 1.0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale pretraining: 60 epochs, batch 4, lr 1e-3, 8 ACS lines, adversarial weight 0.01,
    /// gradients clipped at norm 5.
    pub fn desk() -> Self {
        Self {
            epochs: 60,
            batch_size: 4,
            learning_rate: 1e-3,
            acs: 8,
            max_grad_norm: Some(5.0),
            weights: LossWeights {
                adversarial: 0.01,
                ..LossWeights::default()
            },
            ..Self::default()
        }
    }

    /// Desk-scale fine-tuning: 30 epochs, otherwise as [`desk`](Self::desk).
    pub fn desk_finetune() -> Self {
        Self {
            epochs: 30,
            ..Self::desk()
        }
    }

    pub fn mask_seed(&self, dataset_seed: u64) -> u64 {
        self.mask_seed.unwrap_or(dataset_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be finite and ≥ 0, got {}",
                self.learning_rate
            )));
        }
        if self.validation_every == 0 {
            return Err(Error::Config("validation cadence must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise sigma must be ≥ 0".into()));
        }
        if let Some(&e) = self
            .checkpoint_epochs
            .iter()
            .find(|&&e| e == 0 || e > self.epochs)
        {
            return Err(Error::Config(format!(
                "checkpoint epoch {e} outside 1..={}",
                self.epochs
            )));
        }
        if !(self.disc_lr_factor >= 0.0) || !self.disc_lr_factor.is_finite() {
            return Err(Error::Config(format!(
                "discriminator lr factor must be finite and ≥ 0, got {}",
                self.disc_lr_factor
            )));
        }
        if let Some(c) = self.max_grad_norm {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Config(format!(
                    "gradient clip must be finite and > 0, got {c}"
                )));
            }
        }
        self.weights.validate()
    }

    /// Rate used by optimizer step `step` of `total` (0-based).
    pub fn step_lr(&self, step: usize, total: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Linear => self.learning_rate * (1.0 - step as f64 / total.max(1) as f64),
        }
    }

    /// Scheduled rate once epoch `epoch` (0-based) has finished; zero after the last.
    pub fn epoch_lr(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Linear => {
                self.learning_rate * (1.0 - (epoch + 1) as f64 / self.epochs.max(1) as f64)
            }
        }
    }

    /// Checkpoints at 20, 40, 60, 80 and 100 % of the budget.
    pub fn fractional_checkpoints(epochs: usize) -> Vec<usize> {
        let mut v: Vec<usize> = [1, 2, 3, 4, 5]
            .iter()
            .map(|k| (k * epochs).div_ceil(5))
            .filter(|&e| e > 0)
            .collect();
        v.dedup();
        v
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_slice(&bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_defaults() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.epochs, c.batch_size, c.learning_rate, c.acs),
            (1000, 8, 1e-4, 24)
        );
    }

    #[test]
    fn schedule_is_non_increasing_and_ends_at_zero() {
        let c = TrainConfig {
            epochs: 7,
            ..TrainConfig::desk()
        };
        let trace: Vec<f64> = (0..7).map(|e| c.epoch_lr(e)).collect();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(trace[6], 0.0);
        assert_eq!(c.step_lr(0, 10), c.learning_rate);
        assert!(c.step_lr(9, 10) > 0.0);
    }

    #[test]
    fn checkpoint_fractions() {
        assert_eq!(
            TrainConfig::fractional_checkpoints(30),
            vec![6, 12, 18, 24, 30]
        );
        assert_eq!(TrainConfig::fractional_checkpoints(3), vec![1, 2, 3]);
        assert!(TrainConfig::fractional_checkpoints(0).is_empty());
    }

    #[test]
    fn json_round_trip_with_partial_fields() {
        let c: TrainConfig =
            serde_json::from_str(r#"{"epochs": 5, "seed": 3, "af": 2.0}"#).unwrap();
        assert_eq!((c.epochs, c.seed, c.af, c.batch_size), (5, 3, 2.0, 8));
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(TrainConfig {
            checkpoint_epochs: vec![6],
            epochs: 5,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig { batch_size: 0, ..c }.validate().is_err());
    }
}
