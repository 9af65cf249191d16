//! Image quality metrics and their CSV reports.
//!
//! Both metrics work in the `[0, 1]` domain with unit peak value, which
//! gives the same PSNR as the usual 8-bit computation with peak 255.

mod quality;
mod report;

pub use quality::{
    gaussian_taps, mse, psnr, psnr_raw, ssim, ssim_raw, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW,
};
pub use report::{
    fmt_psnr, fmt_sigma, fmt_ssim, write_aggregate_csv, AggregateRow, MetricRow, MetricsReport,
    SummaryTable,
};
