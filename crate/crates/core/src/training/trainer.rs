use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::make_mask;
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::network::{
    discriminator_logit, generator_forward, generator_graph, BoundParams, ModelConfig, ModelParams,
};
use crate::numerics::{AdamState, ComplexImage, Tape, Tensor, Var};
use crate::phantoms::{sample_seed, Dataset};
use crate::training::config::{MaskPolicy, TrainConfig};
use crate::training::data::{display_magnitude, prepare_all, Acquisition, Prepared};
use crate::training::losses::{
    disc_loss_graph, fmae_graph, gen_loss_graph, imae_graph, LossVariant, LossWeights,
};
use crate::training::report::{EpochRecord, TrainReport};

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the final ones without validation data).
    pub best: ModelParams,
    pub last: ModelParams,
    /// `(epoch, params)` snapshots for every configured checkpoint epoch.
    pub checkpoints: Vec<(usize, ModelParams)>,
    pub report: TrainReport,
}

/// Loss nodes of one generator step.
pub struct GeneratorLoss {
    pub total: Var,
    pub gen: Var,
    pub imae: Var,
    pub fmae_m: Var,
    pub fmae_notm: Var,
}

/// Append the discriminator (weights as bound) and the composite loss for `xhat`.
pub fn generator_loss_graph(
    tape: &mut Tape,
    disc: &BoundParams,
    xhat: Var,
    sample: &Prepared,
    weights: &LossWeights,
    variant: LossVariant,
) -> Result<GeneratorLoss> {
    let mag = tape.magnitude(xhat)?;
    let logit = discriminator_logit(tape, disc, mag)?;
    let gen = gen_loss_graph(tape, logit);
    let imae = imae_graph(tape, xhat, &sample.target, variant)?;
    let (fmae_m, fmae_notm) = fmae_graph(tape, xhat, &sample.target, variant)?;
    let g = tape.scale(gen, weights.adversarial);
    let a = tape.scale(imae, weights.alpha);
    let b = tape.scale(fmae_m, weights.beta);
    let c = tape.scale(fmae_notm, weights.gamma);
    let mut total = tape.add(g, a)?;
    total = tape.add(total, b)?;
    total = tape.add(total, c)?;
    Ok(GeneratorLoss {
        total,
        gen,
        imae,
        fmae_m,
        fmae_notm,
    })
}

/// Generator reconstruction of one prepared sample.
pub fn reconstruct_gan(params: &ModelParams, sample: &Prepared) -> Result<ComplexImage> {
    generator_forward(params, &sample.zero_filled, &sample.maps)
}

/// Mean PSNR of generator reconstructions (clamped magnitudes) against `|x_t|`.
pub fn mean_psnr(params: &ModelParams, samples: &[Prepared]) -> Result<f64> {
    let mut acc = 0.0;
    for s in samples {
        let x = reconstruct_gan(params, s)?;
        acc += psnr(&display_magnitude(&x), &s.truth.magnitude())?;
    }
    Ok(acc / samples.len() as f64)
}

/// Mean PSNR of the zero-filled inputs.
pub fn mean_zf_psnr(samples: &[Prepared]) -> Result<f64> {
    let mut acc = 0.0;
    for s in samples {
        acc += psnr(&display_magnitude(&s.zero_filled), &s.truth.magnitude())?;
    }
    Ok(acc / samples.len() as f64)
}

/// Acquisition protocol used for the validation and test splits.
pub fn protocol(dataset: &Dataset, cfg: &TrainConfig) -> Result<Acquisition> {
    let m = &dataset.manifest;
    Acquisition::new(
        m.height,
        m.width,
        cfg.af,
        cfg.acs,
        cfg.mask_seed(m.base_seed),
        cfg.noise_sigma,
        cfg.sensitivities,
    )
}

fn accumulate(acc: &mut Option<Vec<Tensor>>, grads: Vec<Tensor>) -> Result<()> {
    match acc {
        None => *acc = Some(grads),
        Some(a) => {
            for (x, g) in a.iter_mut().zip(&grads) {
                x.add_assign(g)?;
            }
        }
    }
    Ok(())
}

fn guard(value: f64, what: &str, epoch: usize, step: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Divergence {
            epoch,
            step,
            what: format!("{what} = {value}"),
        })
    }
}

/// GAN training: per batch, one discriminator step on `|x_t|` vs detached `|x̂|`,
/// then one generator step through the updated discriminator.
pub fn train(
    dataset: &Dataset,
    model: ModelConfig,
    cfg: &TrainConfig,
    init: Option<&ModelParams>,
) -> Result<TrainOutcome> {
    train_with_checkpoints(dataset, model, cfg, init, &cfg.checkpoint_epochs)
}

/// Continue training from `pretrained`; checkpoints default to 20 % steps of the budget.
pub fn finetune(
    pretrained: &ModelParams,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let checkpoints = if cfg.checkpoint_epochs.is_empty() {
        TrainConfig::fractional_checkpoints(cfg.epochs)
    } else {
        cfg.checkpoint_epochs.clone()
    };
    train_with_checkpoints(
        dataset,
        pretrained.config,
        cfg,
        Some(pretrained),
        &checkpoints,
    )
}

/// Global L2 norm of `grads` before clipping to `limit`.
fn clip(grads: &mut [Tensor], limit: Option<f64>) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if let Some(c) = limit {
        if norm > c {
            grads.iter_mut().for_each(|g| g.scale(c / norm));
        }
    }
    norm
}

fn train_with_checkpoints(
    dataset: &Dataset,
    model: ModelConfig,
    cfg: &TrainConfig,
    init: Option<&ModelParams>,
    checkpoint_epochs: &[usize],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let mut params = match init {
        Some(p) => {
            p.check_compatible(&model)?;
            p.clone()
        }
        None => ModelParams::init(model, cfg.seed),
    };
    if dataset.manifest.coils != model.generator.coils {
        return Err(Error::Incompatible(format!(
            "dataset has {} coils, model expects {}",
            dataset.manifest.coils, model.generator.coils
        )));
    }
    if cfg.epochs == 0 {
        let report = TrainReport {
            wall_seconds: started.elapsed().as_secs_f64(),
            ..Default::default()
        };
        return Ok(TrainOutcome {
            best: params.clone(),
            last: params,
            checkpoints: Vec::new(),
            report,
        });
    }
    if dataset.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let acq = protocol(dataset, cfg)?;
    let mut train_set = prepare_all(&dataset.train, &acq)?;
    let val_set = prepare_all(&dataset.val, &acq)?;

    let mut adam_g = AdamState::new(
        params.generator.iter().map(|t| t.tensor.shape()),
        cfg.learning_rate,
    );
    let mut adam_d = AdamState::new(
        params.discriminator.iter().map(|t| t.tensor.shape()),
        cfg.learning_rate,
    );
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut report = TrainReport::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut checkpoints = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        if cfg.mask_policy == MaskPolicy::PerEpoch && epoch > 0 {
            let m = &dataset.manifest;
            let mask_seed = sample_seed(cfg.mask_seed(m.base_seed), epoch);
            let epoch_acq = Acquisition {
                mask: make_mask(m.height, m.width, cfg.af, cfg.acs, mask_seed)?,
                ..acq.clone()
            };
            train_set = prepare_all(&dataset.train, &epoch_acq)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);

        let mut sums = [0.0; 5];
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let global = epoch * steps_per_epoch + b;
            let lr = cfg.step_lr(global, total_steps);
            let inv = 1.0 / batch.len() as f64;

            let mut tapes = Vec::with_capacity(batch.len());
            for &i in batch {
                let s = &train_set[i];
                let mut tape = Tape::new();
                let gb = BoundParams::bind(&mut tape, &params.generator, true);
                let input = tape.constant(s.input.clone());
                let xu = tape.constant(s.xu.clone());
                let xhat = generator_graph(&mut tape, &gb, input, xu)?;
                tapes.push((tape, gb, xhat));
            }

            let mut d_grads = None;
            for ((tape, _, xhat), &i) in tapes.iter().zip(batch) {
                let s = &train_set[i];
                let fake = ComplexImage::from_channels(tape.value(*xhat))?.magnitude();
                let (h, w) = (fake.shape()[0], fake.shape()[1]);
                let mut dt = Tape::new();
                let db = BoundParams::bind(&mut dt, &params.discriminator, true);
                let real = dt.constant(s.truth_mag.clone());
                let fake = dt.constant(fake.reshape(&[1, 1, h, w])?);
                let ar = discriminator_logit(&mut dt, &db, real)?;
                let af = discriminator_logit(&mut dt, &db, fake)?;
                let l = disc_loss_graph(&mut dt, ar, af)?;
                sums[4] += guard(dt.value(l).data()[0], "L_DISC", epoch + 1, b)? * inv;
                let mut g = dt.backward(l)?;
                accumulate(&mut d_grads, db.vars().iter().map(|v| g.take(*v)).collect())?;
            }
            let mut d_grads = d_grads.expect("non-empty batch");
            d_grads.iter_mut().for_each(|g| g.scale(inv));
            clip(&mut d_grads, cfg.max_grad_norm);
            adam_d.learning_rate = lr * cfg.disc_lr_factor;
            adam_d.update_refs(
                params
                    .discriminator
                    .iter_mut()
                    .map(|t| &mut t.tensor)
                    .collect(),
                &d_grads,
            )?;

            let mut g_grads = None;
            for ((mut tape, gb, xhat), &i) in tapes.into_iter().zip(batch) {
                let s = &train_set[i];
                let db = BoundParams::bind(&mut tape, &params.discriminator, false);
                let loss =
                    generator_loss_graph(&mut tape, &db, xhat, s, &cfg.weights, cfg.loss_variant)?;
                let value = |v: Var| tape.value(v).data()[0];
                sums[0] += guard(value(loss.gen), "L_GEN", epoch + 1, b)? * inv;
                sums[1] += guard(value(loss.imae), "L_iMAE", epoch + 1, b)? * inv;
                sums[2] += guard(value(loss.fmae_m), "L_fMAE_M", epoch + 1, b)? * inv;
                sums[3] += guard(value(loss.fmae_notm), "L_fMAE_notM", epoch + 1, b)? * inv;
                guard(value(loss.total), "generator loss", epoch + 1, b)?;
                let mut g = tape.backward(loss.total)?;
                accumulate(&mut g_grads, gb.vars().iter().map(|v| g.take(*v)).collect())?;
            }
            let mut g_grads = g_grads.expect("non-empty batch");
            g_grads.iter_mut().for_each(|g| g.scale(inv));
            clip(&mut g_grads, cfg.max_grad_norm);
            if g_grads.iter().chain(&d_grads).any(|g| !g.all_finite()) {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    step: b,
                    what: "non-finite gradient".into(),
                });
            }
            adam_g.learning_rate = lr;
            adam_g.update_refs(
                params.generator.iter_mut().map(|t| &mut t.tensor).collect(),
                &g_grads,
            )?;
        }

        let n = steps_per_epoch as f64;
        let validate = !val_set.is_empty()
            && ((epoch + 1) % cfg.validation_every == 0 || epoch + 1 == cfg.epochs);
        let val_psnr = if validate {
            Some(mean_psnr(&params, &val_set)?)
        } else {
            None
        };
        if let Some(p) = val_psnr {
            if best.as_ref().map_or(true, |(b, _)| p > *b) {
                best = Some((p, params.clone()));
                report.best_epoch = Some(epoch + 1);
                report.best_val_psnr = Some(p);
            }
        }
        report.epochs.push(EpochRecord {
            epoch: epoch + 1,
            lr: cfg.epoch_lr(epoch),
            l_gen: sums[0] / n,
            l_imae: sums[1] / n,
            l_fmae_m: sums[2] / n,
            l_fmae_notm: sums[3] / n,
            l_disc: sums[4] / n,
            val_psnr,
        });
        if checkpoint_epochs.contains(&(epoch + 1)) {
            checkpoints.push((epoch + 1, params.clone()));
        }
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    let best = best.map(|(_, p)| p).unwrap_or_else(|| params.clone());
    Ok(TrainOutcome {
        best,
        last: params,
        checkpoints,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_rescales_only_above_the_limit() {
        let mut g = vec![
            Tensor::new(&[2], vec![3.0, 0.0]).unwrap(),
            Tensor::new(&[1], vec![4.0]).unwrap(),
        ];
        assert_eq!(clip(&mut g, Some(10.0)), 5.0);
        assert_eq!(g[0].data(), &[3.0, 0.0]);
        assert_eq!(clip(&mut g, Some(1.0)), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15 && (g[1].data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(clip(&mut g, None), clip(&mut g.clone(), Some(2.0)));
    }
}
