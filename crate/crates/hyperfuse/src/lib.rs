//! Hyperspectral-multispectral image fusion toolkit.
//!
//! Pairs a low-spatial-resolution hyperspectral cube with a
//! high-spatial-resolution multispectral image and reconstructs a cube
//! with both resolutions: the hyperspectral data is split into a
//! per-pixel intensity plane and unit spectral signatures, an LSTM
//! trained on multi-scale patches predicts the high-resolution
//! intensity, and the signatures are re-applied to the prediction.
//! Supporting modules cover the on-disk cube format, input simulation,
//! and SSIM/PSNR evaluation.

pub mod datacube;
pub mod fusion;
pub mod lstm;
pub mod metrics;
pub mod simulate;
