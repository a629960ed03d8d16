use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{nrmse, psnr, roi_histogram_stats, ssim, wilcoxon_signed_rank, RoiStats};
use crate::numerics::Tensor;

/// Serde adapter storing non-finite floats as the strings `"inf"`, `"-inf"` and `"nan"`.
pub mod sentinel {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&super::format_float(*v))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Shortest round-trip formatting; infinities as `inf` / `-inf`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub index: usize,
    #[serde(with = "sentinel")]
    pub psnr: f64,
    pub ssim: f64,
    pub nrmse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<RoiStats>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(with = "sentinel")]
    pub mean: f64,
    /// Sample standard deviation (zero for fewer than two values).
    #[serde(with = "sentinel")]
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 || !mean.is_finite() {
            return Self { mean, std: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub images: Vec<ImageMetrics>,
    pub psnr: Aggregate,
    pub ssim: Aggregate,
    pub nrmse: Aggregate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kurtosis: Option<Aggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skewness: Option<Aggregate>,
    /// Paired Wilcoxon p-values keyed by metric name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub p_values: BTreeMap<String, f64>,
}

/// One reconstruction to score: magnitude estimate, magnitude truth, optional ROI.
pub struct Scored<'a> {
    pub index: usize,
    pub estimate: &'a Tensor,
    pub truth: &'a Tensor,
    pub roi: Option<&'a Tensor>,
}

pub fn evaluate_image(item: &Scored) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        index: item.index,
        psnr: psnr(item.estimate, item.truth)?,
        ssim: ssim(item.estimate, item.truth)?,
        nrmse: nrmse(item.estimate, item.truth)?,
        roi: item
            .roi
            .map(|r| roi_histogram_stats(item.estimate, r))
            .transpose()?,
    })
}

impl MetricsReport {
    pub fn compute(items: &[Scored]) -> Result<Self> {
        let images = items
            .iter()
            .map(evaluate_image)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_images(images))
    }

    pub fn from_images(images: Vec<ImageMetrics>) -> Self {
        let col = |f: &dyn Fn(&ImageMetrics) -> f64| images.iter().map(f).collect::<Vec<_>>();
        let roi: Vec<RoiStats> = images.iter().filter_map(|m| m.roi).collect();
        let has_roi = !roi.is_empty();
        Self {
            psnr: Aggregate::of(&col(&|m| m.psnr)),
            ssim: Aggregate::of(&col(&|m| m.ssim)),
            nrmse: Aggregate::of(&col(&|m| m.nrmse)),
            kurtosis: has_roi
                .then(|| Aggregate::of(&roi.iter().map(|r| r.kurtosis).collect::<Vec<_>>())),
            skewness: has_roi
                .then(|| Aggregate::of(&roi.iter().map(|r| r.skewness).collect::<Vec<_>>())),
            images,
            p_values: BTreeMap::new(),
        }
    }

    /// Paired signed-rank p-values of PSNR, SSIM and NRMSE against `other`
    /// (matched by image index). Fails if the index sets differ.
    pub fn paired_p_values(&self, other: &MetricsReport) -> Result<BTreeMap<String, f64>> {
        let ours: Vec<usize> = self.images.iter().map(|m| m.index).collect();
        let theirs: Vec<usize> = other.images.iter().map(|m| m.index).collect();
        if ours != theirs {
            return Err(crate::error::Error::Shape(format!(
                "paired reports cover different images: {ours:?} vs {theirs:?}"
            )));
        }
        let mut out = BTreeMap::new();
        for (name, f) in [
            (
                "psnr",
                (|m: &ImageMetrics| m.psnr) as fn(&ImageMetrics) -> f64,
            ),
            ("ssim", |m| m.ssim),
            ("nrmse", |m| m.nrmse),
        ] {
            let a: Vec<f64> = self.images.iter().map(f).collect();
            let b: Vec<f64> = other.images.iter().map(f).collect();
            out.insert(name.to_string(), wilcoxon_signed_rank(&a, &b)?);
        }
        Ok(out)
    }

    /// Per-image CSV: `index,psnr,ssim,nrmse[,kurtosis,skewness]`.
    pub fn to_csv(&self) -> String {
        let roi = self.images.iter().any(|m| m.roi.is_some());
        let mut s = String::from("index,psnr,ssim,nrmse");
        if roi {
            s.push_str(",kurtosis,skewness");
        }
        s.push('\n');
        for m in &self.images {
            let _ = write!(
                s,
                "{},{},{},{}",
                m.index,
                format_float(m.psnr),
                format_float(m.ssim),
                format_float(m.nrmse)
            );
            if roi {
                let (k, sk) = m
                    .roi
                    .map_or((f64::NAN, f64::NAN), |r| (r.kurtosis, r.skewness));
                let _ = write!(s, ",{},{}", format_float(k), format_float(sk));
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_hit_sentinels() {
        let t = Tensor::new(&[16, 16], (0..256).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let items: Vec<Scored> = (0..5)
            .map(|i| Scored {
                index: i,
                estimate: &t,
                truth: &t,
                roi: None,
            })
            .collect();
        let r = MetricsReport::compute(&items).unwrap();
        assert!(r
            .images
            .iter()
            .all(|m| m.psnr == f64::INFINITY && m.ssim == 1.0 && m.nrmse == 0.0));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"inf\""));
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.paired_p_values(&r).unwrap().values().all(|&p| p == 1.0));
        assert!(r
            .to_csv()
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("0,inf,1.0,0.0"));
    }

    #[test]
    fn aggregates() {
        let a = Aggregate::of(&[1.0, 2.0, 3.0]);
        assert_eq!(a.mean, 2.0);
        assert_eq!(a.std, 1.0);
        assert_eq!(Aggregate::of(&[4.0]).std, 0.0);
    }
}
