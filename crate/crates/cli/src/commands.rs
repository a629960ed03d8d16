use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pigan_core::encoding::{cg_sense, CgConfig};
use pigan_core::metrics::{evaluate_image, nrmse_with, MetricsReport, NrmseNorm, Scored};
use pigan_core::network::{GeneratorConfig, ModelConfig, ModelParams, TrainingState};
use pigan_core::numerics::ComplexImage;
use pigan_core::pgm::{decode_pgm, encode_pgm16, read_pgm};
use pigan_core::phantoms::{
    build_dataset, Dataset, DatasetConfig, Manifest, Split, SplitCounts, MANIFEST_NAME,
};
use pigan_core::training::{
    display_magnitude, finetune, prepare, reconstruct_gan, train, Acquisition, MapSource,
    TrainConfig, TrainOutcome, TrainReport,
};
use pigan_core::{Error, Tensor};
use serde::{Deserialize, Serialize};

use crate::args::{EvaluateArgs, Method, ReconstructArgs, SimulateArgs, SplitArg, TrainArgs};
use crate::error::{io_err, CliError, CliResult};

pub const RECON_META: &str = "recon.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const BEST_CKPT: &str = "best.pgn1";
pub const LAST_CKPT: &str = "last.pgn1";

pub fn epoch_ckpt(epoch: usize) -> String {
    format!("epoch_{epoch:04}.pgn1")
}

pub(crate) fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

pub(crate) fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(path, s)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let s = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

pub fn simulate(a: &SimulateArgs) -> CliResult<Manifest> {
    let cfg = DatasetConfig {
        domain: a.domain,
        counts: SplitCounts {
            train: a.n_train,
            val: a.n_val,
            test: a.n_test,
        },
        size: a.size,
        coils: a.coils,
        base_seed: a.seed,
    };
    Ok(build_dataset(&cfg, &a.out)?.manifest)
}

/// `base` with every flag given on the command line applied.
pub fn train_config(a: &TrainArgs, base: TrainConfig) -> CliResult<TrainConfig> {
    let mut c = match &a.config {
        Some(p) => read_json::<TrainConfig>(p)?,
        None => base,
    };
    macro_rules! set {
        ($field:ident, $flag:expr) => {
            if let Some(v) = $flag {
                c.$field = v.into();
            }
        };
    }
    set!(af, a.af);
    set!(acs, a.acs);
    set!(epochs, a.epochs);
    set!(batch_size, a.batch);
    set!(learning_rate, a.lr);
    set!(seed, a.seed);
    set!(noise_sigma, a.noise_sigma);
    set!(validation_every, a.validation_every);
    if a.mask_seed.is_some() {
        c.mask_seed = a.mask_seed;
    }
    set!(mask_policy, a.mask_policy);
    set!(sensitivities, a.maps);
    set!(loss_variant, a.loss_variant);
    if let Some(v) = &a.checkpoints {
        c.checkpoint_epochs = v.clone();
    }
    if a.max_grad_norm.is_some() {
        c.max_grad_norm = a.max_grad_norm;
    }
    if let Some(w) = a.adversarial {
        c.weights.adversarial = w;
    }
    c.validate()?;
    Ok(c)
}

/// Training report plus the config and acquisition that produced it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub command: String,
    pub config: TrainConfig,
    pub model: ModelConfig,
    pub dataset: DatasetConfig,
    pub mask_seed: u64,
    pub mask_rows: Vec<usize>,
    pub checkpoints: Vec<String>,
    pub best_epoch: Option<usize>,
    #[serde(with = "opt_f64")]
    pub best_val_psnr: Option<f64>,
    pub epochs: Vec<pigan_core::training::EpochRecord>,
}

mod opt_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "pigan_core::metrics::sentinel")] f64);

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

pub fn pretrain(a: &TrainArgs) -> CliResult<TrainSummary> {
    run_training(a, "pretrain", TrainConfig::desk())
}

pub fn finetune_cmd(a: &TrainArgs) -> CliResult<TrainSummary> {
    if a.init.is_none() {
        return Err(CliError::Usage("finetune needs --init <checkpoint>".into()));
    }
    run_training(a, "finetune", TrainConfig::desk_finetune())
}

fn run_training(a: &TrainArgs, command: &str, base: TrainConfig) -> CliResult<TrainSummary> {
    let cfg = train_config(a, base)?;
    let dataset = Dataset::load(&a.data)?;
    let init = a.init.as_ref().map(ModelParams::load).transpose()?;
    let started = Instant::now();
    let outcome = match (&init, command) {
        (Some((p, _)), "finetune") => finetune(p, &dataset, &cfg)?,
        (Some((p, _)), _) => train(&dataset, p.config, &cfg, Some(p))?,
        (None, _) => {
            let g = GeneratorConfig {
                coils: dataset.manifest.coils,
                width: a.width,
                bottleneck: a.bottleneck,
            };
            train(&dataset, ModelConfig::symmetric(g), &cfg, None)?
        }
    };
    eprintln!("{command}: {:.1} s", started.elapsed().as_secs_f64());
    let inherited = init
        .as_ref()
        .filter(|_| cfg.epochs == 0)
        .map(|(_, h)| h.state.clone());
    write_training(
        &a.out,
        command,
        &cfg,
        &dataset.manifest,
        &outcome,
        inherited,
    )
}

/// Write checkpoints and reports of a finished run into `out`.
///
/// `inherited` replaces the header state of every checkpoint (used for a
/// zero-epoch run, whose output must equal its input).
pub fn write_training(
    out: &Path,
    command: &str,
    cfg: &TrainConfig,
    manifest: &Manifest,
    outcome: &TrainOutcome,
    inherited: Option<TrainingState>,
) -> CliResult<TrainSummary> {
    create_dir(out)?;
    let state = |epoch: usize| {
        inherited.clone().unwrap_or_else(|| TrainingState {
            epoch,
            af: cfg.af,
            acs: cfg.acs,
            domain: manifest.domain.to_string(),
            seed: cfg.seed,
        })
    };
    let report: &TrainReport = &outcome.report;
    outcome.best.save(
        out.join(BEST_CKPT),
        state(report.best_epoch.unwrap_or(cfg.epochs)),
    )?;
    outcome.last.save(out.join(LAST_CKPT), state(cfg.epochs))?;
    let mut names = Vec::new();
    for (e, p) in &outcome.checkpoints {
        let name = epoch_ckpt(*e);
        p.save(out.join(&name), state(*e))?;
        names.push(name);
    }
    write(&out.join(REPORT_CSV), report.to_csv())?;
    let mask_seed = cfg.mask_seed(manifest.base_seed);
    let acq = Acquisition::new(
        manifest.height,
        manifest.width,
        cfg.af,
        cfg.acs,
        mask_seed,
        0.0,
        MapSource::Truth,
    )?;
    let summary = TrainSummary {
        command: command.into(),
        config: cfg.clone(),
        model: outcome.best.config,
        dataset: manifest.config(),
        mask_seed,
        mask_rows: sampled_rows(&acq),
        checkpoints: names,
        best_epoch: report.best_epoch,
        best_val_psnr: report.best_val_psnr,
        epochs: report.epochs.clone(),
    };
    write_json(&out.join(REPORT_JSON), &summary)?;
    Ok(summary)
}

fn sampled_rows(acq: &Acquisition) -> Vec<usize> {
    acq.mask
        .rows
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(r, _)| r)
        .collect()
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

/// Metadata written next to reconstructed images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconMeta {
    pub method: String,
    pub split: Split,
    pub indices: Vec<usize>,
    pub af: f64,
    pub acs: usize,
    pub mask_seed: u64,
    pub mask_rows: Vec<usize>,
    pub noise_sigma: f64,
    pub maps: MapSource,
    pub checkpoint: Option<String>,
    pub dataset: DatasetConfig,
}

pub fn image_name(split: Split, index: usize) -> String {
    format!("{split}_{index}.pgm")
}

pub fn error_name(split: Split, index: usize) -> String {
    format!("{split}_{index}_err.pgm")
}

pub fn reconstruct(a: &ReconstructArgs) -> CliResult<ReconMeta> {
    let params = match (a.method, &a.ckpt) {
        (Method::Gan, None) => return Err(CliError::Usage("--method gan needs --ckpt".into())),
        (Method::Gan, Some(p)) => Some(ModelParams::load(p)?.0),
        _ => None,
    };
    let dataset = Dataset::load(&a.data)?;
    let m = &dataset.manifest;
    let mask_seed = a.mask_seed.unwrap_or(m.base_seed);
    let acq = Acquisition::new(
        m.height,
        m.width,
        a.af,
        a.acs,
        mask_seed,
        a.noise_sigma,
        a.maps.into(),
    )?;
    let split: Split = a.split.into();
    let cg = CgConfig {
        lambda: a.cg_lambda,
        max_iters: a.cg_iters,
        ..CgConfig::default()
    };
    create_dir(&a.out)?;
    let mut indices = Vec::new();
    for sample in dataset.split(split) {
        let p = prepare(sample, &acq)?;
        let image: ComplexImage = match a.method {
            Method::Zf => p.zero_filled.clone(),
            Method::Cgsense => cg_sense(&p.kspace, &p.maps, &cg)?.image,
            Method::Gan => reconstruct_gan(params.as_ref().expect("checked above"), &p)?,
            Method::Truth => p.truth.clone(),
        };
        let est = display_magnitude(&image);
        let truth = display_magnitude(&p.truth);
        let err = est.zip_map(&truth, |x, y| (x - y).abs())?;
        write(
            &a.out.join(image_name(split, sample.index)),
            encode_pgm16(&est)?,
        )?;
        write(
            &a.out.join(error_name(split, sample.index)),
            encode_pgm16(&err)?,
        )?;
        indices.push(sample.index);
    }
    let meta = ReconMeta {
        method: format!("{:?}", a.method).to_lowercase(),
        split,
        indices,
        af: a.af,
        acs: a.acs,
        mask_seed,
        mask_rows: sampled_rows(&acq),
        noise_sigma: a.noise_sigma,
        maps: a.maps.into(),
        checkpoint: a.ckpt.as_ref().map(|p| p.display().to_string()),
        dataset: m.config(),
    };
    write_json(&a.out.join(RECON_META), &meta)?;
    Ok(meta)
}

/// Ground truth on the 16-bit PGM grid, so exported truth scores as identical.
pub fn quantized_truth(x: &ComplexImage) -> CliResult<Tensor> {
    Ok(decode_pgm(&encode_pgm16(&display_magnitude(x))?)?.to_unit())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub dir: String,
    pub method: String,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Evaluation {
    pub methods: Vec<MethodMetrics>,
    /// Paired signed-rank p-values (first directory vs second).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_values: Option<std::collections::BTreeMap<String, f64>>,
}

fn dataset_dir(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.to_path_buf()
    } else {
        p.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

fn load_roi(path: &Path) -> CliResult<Tensor> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"P5") {
        return Ok(decode_pgm(&bytes)?
            .to_unit()
            .map(|v| if v > 0.0 { 1.0 } else { 0.0 }));
    }
    Ok(Tensor::read_from(&mut bytes.as_slice())?)
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<Evaluation> {
    if a.recon_dir.len() > 2 {
        return Err(CliError::Usage(
            "evaluate takes one or two --recon-dir".into(),
        ));
    }
    let dataset = Dataset::load(dataset_dir(&a.gt_manifest))?;
    let shared_roi = a.roi.as_deref().map(load_roi).transpose()?;
    let norm: NrmseNorm = a.nrmse_norm.into();
    let mut methods = Vec::new();
    for dir in &a.recon_dir {
        let meta: ReconMeta = read_json(&dir.join(RECON_META))?;
        let samples = dataset.split(meta.split);
        let missing: Vec<usize> = samples
            .iter()
            .map(|s| s.index)
            .filter(|i| {
                !meta.indices.contains(i) || !dir.join(image_name(meta.split, *i)).is_file()
            })
            .collect();
        let unknown: Vec<usize> = meta
            .indices
            .iter()
            .copied()
            .filter(|i| !samples.iter().any(|s| s.index == *i))
            .collect();
        if !missing.is_empty() || !unknown.is_empty() {
            return Err(CliError::Core(Error::Shape(format!(
                "{}: {} reconstructions for {} ground-truth samples; missing indices {missing:?}, unknown indices {unknown:?}",
                dir.display(),
                meta.indices.len(),
                samples.len()
            ))));
        }
        let mut images = Vec::with_capacity(samples.len());
        for s in samples {
            let est = read_pgm(dir.join(image_name(meta.split, s.index)))?.to_unit();
            let truth = quantized_truth(&s.image)?;
            let roi = match (&shared_roi, a.dataset_roi) {
                (Some(r), _) => Some(r),
                (None, true) => Some(s.roi.as_ref().ok_or_else(|| {
                    CliError::Usage(format!(
                        "sample {} has no lesion mask; drop --dataset-roi",
                        s.index
                    ))
                })?),
                (None, false) => None,
            };
            let mut m = evaluate_image(&Scored {
                index: s.index,
                estimate: &est,
                truth: &truth,
                roi,
            })?;
            if norm != NrmseNorm::L2 {
                m.nrmse = nrmse_with(&est, &truth, norm)?;
            }
            images.push(m);
        }
        methods.push(MethodMetrics {
            dir: dir.display().to_string(),
            method: meta.method,
            report: MetricsReport::from_images(images),
        });
    }
    let p_values = match methods.as_slice() {
        [a, b] => Some(a.report.paired_p_values(&b.report)?),
        _ => None,
    };
    create_dir(&a.out)?;
    for (k, m) in methods.iter().enumerate() {
        write(&a.out.join(format!("metrics_{k}.csv")), m.report.to_csv())?;
    }
    if let Some(p) = &p_values {
        let mut csv = String::from("metric,p_value\n");
        for (name, v) in p {
            csv.push_str(&format!(
                "{name},{}\n",
                pigan_core::metrics::format_float(*v)
            ));
        }
        write(&a.out.join("paired.csv"), csv)?;
    }
    let eval = Evaluation { methods, p_values };
    write_json(&a.out.join("metrics.json"), &eval)?;
    Ok(eval)
}

/// Manifest path inside a dataset directory.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_NAME)
}
