//! Canned transfer-learning experiments.
//!
//! A recipe names a source and a target dataset, a pretraining protocol
//! (possibly at several accelerations) and a fine-tuning protocol. For every
//! seed it pretrains, scores the pretrained model on the target without
//! tuning, fine-tunes it, optionally trains a model directly on the target
//! data, and writes comparison and convergence tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use pigan_core::encoding::{cg_sense, CgConfig};
use pigan_core::metrics::{format_float, wilcoxon_signed_rank, MetricsReport, Scored};
use pigan_core::network::{GeneratorConfig, ModelConfig, ModelParams};
use pigan_core::phantoms::{build_dataset, Dataset, DatasetConfig};
use pigan_core::training::{
    display_magnitude, finetune, prepare_all, reconstruct_gan, train, Acquisition, Prepared,
    TrainConfig,
};
use pigan_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::commands::{create_dir, read_json, write, write_json, write_training};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    TumorTransfer,
    AnatomyTransfer,
    AfTransfer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub width: usize,
    pub bottleneck: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRecipe {
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub model: Widths,
    pub source: DatasetConfig,
    pub target: DatasetConfig,
    /// Pretraining protocol; its `af` is replaced by each entry of `pretrain_afs`.
    pub pretrain: TrainConfig,
    pub pretrain_afs: Vec<f64>,
    /// Fine-tuning protocol; its `af`/`acs` also define the target test acquisition.
    pub finetune: TrainConfig,
    /// Protocol of the model trained from scratch on the target training split.
    #[serde(default)]
    pub direct: Option<TrainConfig>,
    /// Also write both datasets under `<out>/data`.
    #[serde(default)]
    pub save_data: bool,
}

impl ExperimentRecipe {
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let r: Self = read_json(path.as_ref())?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Usage("recipe needs at least one seed".into()));
        }
        if self.pretrain_afs.is_empty() {
            return Err(CliError::Usage(
                "recipe needs at least one pretraining AF".into(),
            ));
        }
        if self.source.coils != self.target.coils || self.source.size != self.target.size {
            return Err(CliError::Usage(
                "source and target datasets must share size and coil count".into(),
            ));
        }
        self.pretrain.validate()?;
        self.finetune.validate()?;
        if let Some(d) = &self.direct {
            d.validate()?;
        }
        Ok(())
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig::symmetric(GeneratorConfig {
            coils: self.source.coils,
            width: self.model.width,
            bottleneck: self.model.bottleneck,
        })
    }
}

/// Test-split scores of one arm for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub seed: u64,
    /// `zf`, `cgsense`, `zero-shot`, `tl` or `direct`.
    pub arm: String,
    pub pretrain_af: Option<f64>,
    pub report: MetricsReport,
}

/// Target test PSNR of a fine-tune checkpoint (epoch 0 is the pretrained model).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub seed: u64,
    pub pretrain_af: f64,
    pub epoch: usize,
    pub psnr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecipeOutcome {
    pub arms: Vec<ArmResult>,
    pub convergence: Vec<ConvergencePoint>,
    /// Paired PSNR p-value of TL against direct training, per seed and pretraining AF.
    pub tl_vs_direct_p: Vec<(u64, f64, f64)>,
    /// Ground-truth ROI kurtosis/skewness means when the target carries lesion masks.
    pub truth_roi: Option<(f64, f64)>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => values[n / 2],
        _ => 0.5 * (values[n / 2 - 1] + values[n / 2]),
    }
}

impl RecipeOutcome {
    /// Per-seed mean test PSNR of `arm` (pretrained at `af` when given).
    pub fn psnr(&self, arm: &str, af: Option<f64>) -> Vec<f64> {
        self.arms
            .iter()
            .filter(|a| a.arm == arm && (af.is_none() || a.pretrain_af == af))
            .map(|a| a.report.psnr.mean)
            .collect()
    }

    pub fn median_psnr(&self, arm: &str, af: Option<f64>) -> f64 {
        median(&mut self.psnr(arm, af))
    }

    /// Convergence curve of one seed, in epoch order.
    pub fn curve(&self, seed: u64, af: f64) -> Vec<(usize, f64)> {
        self.convergence
            .iter()
            .filter(|c| c.seed == seed && c.pretrain_af == af)
            .map(|c| (c.epoch, c.psnr))
            .collect()
    }

    pub fn comparison_csv(&self) -> String {
        let mut s =
            String::from("seed,arm,pretrain_af,psnr,psnr_std,ssim,nrmse,kurtosis,skewness\n");
        for a in &self.arms {
            let r = &a.report;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                a.seed,
                a.arm,
                a.pretrain_af.map(format_float).unwrap_or_default(),
                format_float(r.psnr.mean),
                format_float(r.psnr.std),
                format_float(r.ssim.mean),
                format_float(r.nrmse.mean),
                r.kurtosis.map(|k| format_float(k.mean)).unwrap_or_default(),
                r.skewness.map(|k| format_float(k.mean)).unwrap_or_default(),
            );
        }
        s
    }

    pub fn convergence_csv(&self) -> String {
        let mut s = String::from("seed,pretrain_af,epoch,psnr\n");
        for c in &self.convergence {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                c.seed,
                format_float(c.pretrain_af),
                c.epoch,
                format_float(c.psnr)
            );
        }
        s
    }
}

fn score(
    params: Option<&ModelParams>,
    test: &[Prepared],
    roi: bool,
    cg: bool,
) -> CliResult<MetricsReport> {
    let mut est = Vec::with_capacity(test.len());
    for p in test {
        let x = match params {
            Some(m) => reconstruct_gan(m, p)?,
            None if cg => cg_sense(&p.kspace, &p.maps, &CgConfig::default())?.image,
            None => p.zero_filled.clone(),
        };
        est.push(display_magnitude(&x));
    }
    let truth: Vec<Tensor> = test.iter().map(|p| display_magnitude(&p.truth)).collect();
    let rois: Vec<Option<&Tensor>> = test
        .iter()
        .map(|p| p.roi.as_ref().filter(|_| roi))
        .collect();
    let items: Vec<Scored> = (0..test.len())
        .map(|i| Scored {
            index: test[i].index,
            estimate: &est[i],
            truth: &truth[i],
            roi: rois[i],
        })
        .collect();
    Ok(MetricsReport::compute(&items)?)
}

/// Source of already-trained models, keyed by (seed, pretraining AF).
pub type PretrainedLookup<'a> = dyn FnMut(u64, f64) -> Option<ModelParams> + 'a;

/// Run `recipe`, writing everything under `out`.
pub fn run(recipe: &ExperimentRecipe, out: &Path) -> CliResult<RecipeOutcome> {
    run_with(recipe, out, &mut |_, _| None)
}

/// As [`run`], but pretraining is skipped for every (seed, AF) that `pretrained` supplies.
pub fn run_with(
    recipe: &ExperimentRecipe,
    out: &Path,
    pretrained: &mut PretrainedLookup,
) -> CliResult<RecipeOutcome> {
    recipe.validate()?;
    create_dir(out)?;
    write_json(&out.join("recipe.json"), recipe)?;
    let (source, target) = if recipe.save_data {
        (
            build_dataset(&recipe.source, out.join("data/source"))?,
            build_dataset(&recipe.target, out.join("data/target"))?,
        )
    } else {
        (
            Dataset::generate(&recipe.source)?,
            Dataset::generate(&recipe.target)?,
        )
    };
    let ft = &recipe.finetune;
    let m = &target.manifest;
    let acq = Acquisition::new(
        m.height,
        m.width,
        ft.af,
        ft.acs,
        ft.mask_seed(m.base_seed),
        ft.noise_sigma,
        ft.sensitivities,
    )?;
    let test = prepare_all(&target.test, &acq)?;
    let roi = test.iter().all(|p| p.roi.is_some()) && !test.is_empty();

    let mut outcome = RecipeOutcome::default();
    if roi {
        let truth: Vec<Tensor> = test.iter().map(|p| display_magnitude(&p.truth)).collect();
        let items: Vec<Scored> = test
            .iter()
            .zip(&truth)
            .map(|(p, t)| Scored {
                index: p.index,
                estimate: t,
                truth: t,
                roi: p.roi.as_ref(),
            })
            .collect();
        let r = MetricsReport::compute(&items)?;
        outcome.truth_roi = r.kurtosis.zip(r.skewness).map(|(k, s)| (k.mean, s.mean));
    }
    let zf = score(None, &test, roi, false)?;
    let cg = score(None, &test, roi, true)?;

    for &seed in &recipe.seeds {
        let dir = out.join(format!("seed_{seed}"));
        outcome.arms.push(ArmResult {
            seed,
            arm: "zf".into(),
            pretrain_af: None,
            report: zf.clone(),
        });
        outcome.arms.push(ArmResult {
            seed,
            arm: "cgsense".into(),
            pretrain_af: None,
            report: cg.clone(),
        });
        let direct = match &recipe.direct {
            Some(cfg) => {
                let cfg = TrainConfig {
                    seed,
                    af: ft.af,
                    acs: ft.acs,
                    ..cfg.clone()
                };
                let run = train(&target, recipe.model(), &cfg, None)?;
                write_training(
                    &dir.join("direct"),
                    "direct",
                    &cfg,
                    &target.manifest,
                    &run,
                    None,
                )?;
                let report = score(Some(&run.best), &test, roi, false)?;
                outcome.arms.push(ArmResult {
                    seed,
                    arm: "direct".into(),
                    pretrain_af: None,
                    report: report.clone(),
                });
                Some(report)
            }
            None => None,
        };
        for &af in &recipe.pretrain_afs {
            let tag = format_float(af);
            let base = match pretrained(seed, af) {
                Some(p) => p,
                None => {
                    let cfg = TrainConfig {
                        seed,
                        af,
                        ..recipe.pretrain.clone()
                    };
                    let run = train(&source, recipe.model(), &cfg, None)?;
                    write_training(
                        &dir.join(format!("pretrain_af{tag}")),
                        "pretrain",
                        &cfg,
                        &source.manifest,
                        &run,
                        None,
                    )?;
                    run.best
                }
            };
            let zero_shot = score(Some(&base), &test, roi, false)?;
            outcome.convergence.push(ConvergencePoint {
                seed,
                pretrain_af: af,
                epoch: 0,
                psnr: zero_shot.psnr.mean,
            });
            outcome.arms.push(ArmResult {
                seed,
                arm: "zero-shot".into(),
                pretrain_af: Some(af),
                report: zero_shot,
            });

            let cfg = TrainConfig { seed, ..ft.clone() };
            let run = finetune(&base, &target, &cfg)?;
            write_training(
                &dir.join(format!("finetune_af{tag}")),
                "finetune",
                &cfg,
                &target.manifest,
                &run,
                None,
            )?;
            for (epoch, p) in &run.checkpoints {
                let psnr = score(Some(p), &test, false, false)?.psnr.mean;
                outcome.convergence.push(ConvergencePoint {
                    seed,
                    pretrain_af: af,
                    epoch: *epoch,
                    psnr,
                });
            }
            let tl = score(Some(&run.best), &test, roi, false)?;
            if let Some(d) = &direct {
                let a: Vec<f64> = tl.images.iter().map(|m| m.psnr).collect();
                let b: Vec<f64> = d.images.iter().map(|m| m.psnr).collect();
                outcome
                    .tl_vs_direct_p
                    .push((seed, af, wilcoxon_signed_rank(&a, &b)?));
            }
            outcome.arms.push(ArmResult {
                seed,
                arm: "tl".into(),
                pretrain_af: Some(af),
                report: tl,
            });
        }
    }

    write(&out.join("comparison.csv"), outcome.comparison_csv())?;
    write(&out.join("convergence.csv"), outcome.convergence_csv())?;
    let mut medians = BTreeMap::new();
    for a in &outcome.arms {
        let key = match a.pretrain_af {
            Some(af) => format!("{}@af{}", a.arm, format_float(af)),
            None => a.arm.clone(),
        };
        medians
            .entry(key)
            .or_insert_with(Vec::new)
            .push(a.report.psnr.mean);
    }
    let medians: BTreeMap<String, f64> = medians
        .into_iter()
        .map(|(k, mut v)| (k, median(&mut v)))
        .collect();
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({ "median_psnr": medians, "outcome": &outcome }),
    )?;
    Ok(outcome)
}
