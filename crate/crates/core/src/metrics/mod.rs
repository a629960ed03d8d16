//! Image-quality metrics, ROI histogram moments and the paired signed-rank test.
//!
//! Every image metric takes magnitude images in [0, 1] with peak 1.

mod image;
mod report;
mod stats;

pub use image::{gaussian_taps, nrmse, nrmse_with, psnr, ssim, NrmseNorm, SSIM_SIGMA, SSIM_WINDOW};
pub use report::{
    evaluate_image, format_float, sentinel, Aggregate, ImageMetrics, MetricsReport, Scored,
};
pub use stats::{
    moments, roi_histogram_stats, wilcoxon_exact, wilcoxon_normal, wilcoxon_signed_rank, RoiStats,
    WILCOXON_EXACT_MAX, WILCOXON_MIN,
};
