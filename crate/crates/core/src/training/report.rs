use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics::{format_float, sentinel};

pub const REPORT_COLUMNS: &str = "epoch,lr,L_GEN,L_iMAE,L_fMAE_M,L_fMAE_notM,L_DISC,val_PSNR";

/// Epoch means of every loss term; `val_psnr` is present on validation epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub l_gen: f64,
    pub l_imae: f64,
    pub l_fmae_m: f64,
    pub l_fmae_notm: f64,
    pub l_disc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_psnr: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose validation PSNR is the (first) maximum.
    pub best_epoch: Option<usize>,
    #[serde(default, with = "opt_sentinel")]
    pub best_val_psnr: Option<f64>,
    pub wall_seconds: f64,
}

mod opt_sentinel {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::sentinel")] f64);

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

impl TrainReport {
    /// Validation PSNR values in epoch order.
    pub fn val_trace(&self) -> Vec<(usize, f64)> {
        self.epochs
            .iter()
            .filter_map(|e| e.val_psnr.map(|p| (e.epoch, p)))
            .collect()
    }

    pub fn lr_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }

    /// Everything except wall time; two runs with one seed agree on this exactly.
    pub fn deterministic_part(&self) -> (&[EpochRecord], Option<usize>, Option<f64>) {
        (&self.epochs, self.best_epoch, self.best_val_psnr)
    }

    /// Fixed-column CSV; `val_PSNR` is empty on epochs without validation.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_COLUMNS}\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                e.epoch,
                format_float(e.lr),
                format_float(e.l_gen),
                format_float(e.l_imae),
                format_float(e.l_fmae_m),
                format_float(e.l_fmae_notm),
                format_float(e.l_disc),
                e.val_psnr.map(format_float).unwrap_or_default()
            );
        }
        s
    }
}
