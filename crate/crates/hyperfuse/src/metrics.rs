//! Image quality metrics: structural similarity (SSIM) and peak
//! signal-to-noise ratio (PSNR), plus per-band cube evaluation.
//!
//! SSIM follows the standard form
//! `(2·μx·μy + c1)(2·σxy + c2) / ((μx² + μy² + c1)(σx² + σy² + c2))`
//! with `c1 = (k1·L)²`, `c2 = (k2·L)²` and population (divide-by-N)
//! moments. PSNR is `10·log10(R²/MSE)` in decibels; identical images
//! report positive infinity.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::datacube::{HyperCube, Plane};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("no complete evaluation window fits the image")]
    EmptyImage,
    #[error("peak value must be positive, got {0}")]
    InvalidPeak(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How `ssim` aggregates over the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsimMode {
    /// One evaluation over the entire image.
    Global,
    /// Mean over non-overlapping `window`-sized tiles; partial edge
    /// tiles are dropped.
    WindowedMean,
}

#[derive(Debug, Clone, Copy)]
pub struct SsimConfig {
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the pixel values.
    pub l: f64,
    /// Side length of a square evaluation window (windowed mode only).
    pub window: usize,
    pub mode: SsimMode,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            l: 1.0,
            window: 8,
            mode: SsimMode::Global,
        }
    }
}

/// Per-band quality summary for a fused cube against its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub ssim: Vec<f64>,
    pub psnr: Vec<f64>,
    pub mean_ssim: f64,
    pub mean_psnr: f64,
    pub std_ssim: f64,
    pub std_psnr: f64,
}

fn ssim_from_values(xs: &[f64], ys: &[f64], c1: f64, c2: f64) -> f64 {
    let n = xs.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for i in 0..xs.len() {
        sx += xs[i];
        sy += ys[i];
    }
    let mx = sx / n;
    let my = sy / n;
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut cov = 0.0;
    for i in 0..xs.len() {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        vx += dx * dx;
        vy += dy * dy;
        cov += dx * dy;
    }
    let num = (2.0 * (mx * my) + c1) * (2.0 * (cov / n) + c2);
    let den = (mx * mx + my * my + c1) * (vx / n + vy / n + c2);
    num / den
}

fn check_same_dims(x: &Plane, y: &Plane) -> Result<(), MetricsError> {
    if x.rows() != y.rows() || x.cols() != y.cols() {
        return Err(MetricsError::DimMismatch(format!(
            "{}x{} vs {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    Ok(())
}

/// Structural similarity between two equal-sized images. Inputs are
/// assumed finite. Returns a value in [-1, 1]; identical images give
/// exactly 1.0.
pub fn ssim(x: &Plane, y: &Plane, cfg: &SsimConfig) -> Result<f64, MetricsError> {
    check_same_dims(x, y)?;
    let c1 = (cfg.k1 * cfg.l).powi(2);
    let c2 = (cfg.k2 * cfg.l).powi(2);
    match cfg.mode {
        SsimMode::Global => Ok(ssim_from_values(x.data(), y.data(), c1, c2)),
        SsimMode::WindowedMean => {
            let w = cfg.window;
            let tiles_r = x.rows() / w;
            let tiles_c = x.cols() / w;
            if w < 2 || tiles_r == 0 || tiles_c == 0 {
                return Err(MetricsError::EmptyImage);
            }
            let mut sum = 0.0;
            let mut xs = Vec::with_capacity(w * w);
            let mut ys = Vec::with_capacity(w * w);
            for tr in 0..tiles_r {
                for tc in 0..tiles_c {
                    xs.clear();
                    ys.clear();
                    for r in 0..w {
                        for c in 0..w {
                            xs.push(x.get(tr * w + r, tc * w + c));
                            ys.push(y.get(tr * w + r, tc * w + c));
                        }
                    }
                    sum += ssim_from_values(&xs, &ys, c1, c2);
                }
            }
            Ok(sum / (tiles_r * tiles_c) as f64)
        }
    }
}

/// Peak signal-to-noise ratio in decibels with peak value `r`.
/// Identical images return `f64::INFINITY`.
pub fn psnr(x: &Plane, y: &Plane, r: f64) -> Result<f64, MetricsError> {
    check_same_dims(x, y)?;
    if !(r > 0.0) {
        return Err(MetricsError::InvalidPeak(r));
    }
    let mut sum_sq = 0.0;
    for i in 0..x.data().len() {
        let d = x.data()[i] - y.data()[i];
        sum_sq += d * d;
    }
    let mse = sum_sq / x.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (r * r / mse).log10())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (N-1 denominator); 0.0 for a single value.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Evaluates a fused cube against its reference band by band. SSIM uses
/// `cfg` as given; PSNR uses the per-band maximum of the reference as the
/// peak. Means and sample standard deviations are taken across bands;
/// infinite PSNR entries propagate into the summary.
pub fn evaluate_cube(
    fused: &HyperCube,
    reference: &HyperCube,
    cfg: &SsimConfig,
) -> Result<QualityReport, MetricsError> {
    if fused.rows() != reference.rows()
        || fused.cols() != reference.cols()
        || fused.bands() != reference.bands()
    {
        return Err(MetricsError::DimMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            fused.rows(),
            fused.cols(),
            fused.bands(),
            reference.rows(),
            reference.cols(),
            reference.bands()
        )));
    }
    let mut ssims = Vec::with_capacity(fused.bands());
    let mut psnrs = Vec::with_capacity(fused.bands());
    for b in 0..fused.bands() {
        let f = fused.band(b).expect("band index in range");
        let r = reference.band(b).expect("band index in range");
        let (_, peak) = r.min_max();
        ssims.push(ssim(&f, &r, cfg)?);
        psnrs.push(psnr(&f, &r, peak)?);
    }
    Ok(QualityReport {
        mean_ssim: mean(&ssims),
        mean_psnr: mean(&psnrs),
        std_ssim: sample_std(&ssims),
        std_psnr: sample_std(&psnrs),
        ssim: ssims,
        psnr: psnrs,
    })
}

/// Serializes a report as CSV: a `band,ssim,psnr` header, one row per
/// band, then `mean` and `std` summary rows.
pub fn report_to_csv(report: &QualityReport) -> String {
    let mut s = String::from("band,ssim,psnr\n");
    for (b, (sv, pv)) in report.ssim.iter().zip(&report.psnr).enumerate() {
        let _ = writeln!(s, "{b},{sv},{pv}");
    }
    let _ = writeln!(s, "mean,{},{}", report.mean_ssim, report.mean_psnr);
    let _ = writeln!(s, "std,{},{}", report.std_ssim, report.std_psnr);
    s
}

pub fn write_report(report: &QualityReport, path: impl AsRef<Path>) -> Result<(), MetricsError> {
    fs::write(path.as_ref(), report_to_csv(report))?;
    Ok(())
}
