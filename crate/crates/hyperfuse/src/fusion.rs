//! Three-step super-resolution fusion.
//!
//! Step 1 splits the hyperspectral cube into a per-pixel intensity
//! plane (the Euclidean norm of each spectrum) and unit-norm spectral
//! signatures. Step 2 trains an LSTM on multi-scale patch sequences to
//! predict high-resolution intensity from the low-resolution intensity
//! plus the downsampled multispectral bands. Step 3 multiplies the
//! enhanced intensity back onto the signatures, yielding a cube with
//! both high spatial and high spectral resolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::datacube::{CubeError, HyperCube, Plane};
use crate::lstm::{self, LstmError, LstmParams};
use crate::metrics::{self, MetricsError, QualityReport, SsimConfig};
use crate::simulate::{self, BandRange, SimulateError};

const ZERO_INTENSITY_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("patch size {size} exceeds grid {rows}x{cols}")]
    SizeTooLarge {
        size: usize,
        rows: usize,
        cols: usize,
    },
    #[error("requested {requested} patches but only {available} unique locations exist")]
    CountTooLarge { requested: usize, available: usize },
    #[error("parameters are all zero; train or load a checkpoint first")]
    UntrainedParams,
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    DivergenceDetected { epoch: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Intensity plane plus unit spectral signatures; multiplying them back
/// together reconstructs the source cube.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub intensity: Plane,
    pub signatures: HyperCube,
}

/// One training pair: the multi-scale input sequence (largest patch
/// first) and the flattened target intensity patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub sequence: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

/// A named family of square patch sizes with extracted training pairs,
/// all rescaled to the canonical (largest) size.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub name: String,
    pub sizes: Vec<usize>,
    pub train_fraction: f64,
    pub samples: Vec<PatchSample>,
}

#[derive(Debug, Clone)]
pub struct FusionConfig {
    /// Square patch side lengths, strictly decreasing, each >= 2.
    pub sizes: Vec<usize>,
    pub train_fraction: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_units: usize,
    pub seed: u64,
    pub decimation_factor: usize,
    /// Number of patch locations to draw.
    pub patch_count: usize,
    pub msi_ranges: Vec<BandRange>,
    /// Global gradient-norm clip threshold, if any.
    pub clip_norm: Option<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            sizes: vec![8, 6, 4, 2],
            train_fraction: 0.8,
            epochs: 100,
            learning_rate: 0.5,
            hidden_units: 8,
            seed: 0,
            decimation_factor: 4,
            patch_count: 179,
            msi_ranges: simulate::default_msi_ranges(),
            clip_norm: None,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        validate_sizes(&self.sizes)?;
        if self.epochs == 0 {
            return Err(FusionError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(FusionError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.hidden_units == 0 {
            return Err(FusionError::InvalidConfig("hidden units must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(FusionError::InvalidConfig(format!(
                "train fraction must be in (0, 1], got {}",
                self.train_fraction
            )));
        }
        if self.decimation_factor < 2 {
            return Err(FusionError::InvalidConfig(
                "decimation factor must be >= 2".into(),
            ));
        }
        if self.patch_count == 0 {
            return Err(FusionError::InvalidConfig("patch count must be >= 1".into()));
        }
        Ok(())
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<usize, FusionError> {
    if sizes.is_empty() {
        return Err(FusionError::InvalidConfig("no patch sizes given".into()));
    }
    for s in sizes {
        if *s < 2 {
            return Err(FusionError::InvalidConfig(format!(
                "patch size {s} is below the minimum of 2"
            )));
        }
    }
    for w in sizes.windows(2) {
        if w[1] >= w[0] {
            return Err(FusionError::InvalidConfig(format!(
                "patch sizes must be strictly decreasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(sizes[0])
}

/// Splits a cube into per-pixel intensity (L2 norm of the spectrum) and
/// unit signatures. Pixels with intensity below 1e-12 get the uniform
/// signature `1/sqrt(bands)` so the reconstruction product stays exact.
pub fn decompose(hsi: &HyperCube) -> SpectralDecomposition {
    let rows = hsi.rows();
    let cols = hsi.cols();
    let bands = hsi.bands();
    let uniform = 1.0 / (bands as f64).sqrt();
    let mut intensity = Plane::zeros(rows, cols);
    let mut signatures = vec![0.0f32; rows * cols * bands];
    for r in 0..rows {
        for c in 0..cols {
            let mut norm_sq = 0.0f64;
            for b in 0..bands {
                let v = hsi.get(r, c, b) as f64;
                norm_sq += v * v;
            }
            let norm = norm_sq.sqrt();
            intensity.set(r, c, norm);
            for b in 0..bands {
                let sig = if norm > ZERO_INTENSITY_EPS {
                    hsi.get(r, c, b) as f64 / norm
                } else {
                    uniform
                };
                signatures[b * rows * cols + r * cols + c] = sig as f32;
            }
        }
    }
    let signatures = HyperCube::new(rows, cols, bands, hsi.wavelengths_nm().to_vec(), signatures)
        .expect("signature values are finite unit components");
    SpectralDecomposition {
        intensity,
        signatures,
    }
}

/// Multiplies an enhanced intensity plane onto nearest-neighbor
/// upsampled signatures, producing the fused cube.
pub fn recompose(
    intensity_hi: &Plane,
    signatures_lo: &HyperCube,
    factor: usize,
) -> Result<HyperCube, FusionError> {
    if factor == 0 {
        return Err(FusionError::InvalidConfig("factor must be >= 1".into()));
    }
    if intensity_hi.rows() != signatures_lo.rows() * factor
        || intensity_hi.cols() != signatures_lo.cols() * factor
    {
        return Err(FusionError::DimMismatch(format!(
            "intensity {}x{} vs signatures {}x{} at factor {factor}",
            intensity_hi.rows(),
            intensity_hi.cols(),
            signatures_lo.rows(),
            signatures_lo.cols()
        )));
    }
    let rows = intensity_hi.rows();
    let cols = intensity_hi.cols();
    let bands = signatures_lo.bands();
    let mut data = vec![0.0f32; rows * cols * bands];
    for b in 0..bands {
        for r in 0..rows {
            for c in 0..cols {
                let sig = signatures_lo.get(r / factor, c / factor, b) as f64;
                data[b * rows * cols + r * cols + c] = (sig * intensity_hi.get(r, c)) as f32;
            }
        }
    }
    Ok(HyperCube::new(
        rows,
        cols,
        bands,
        signatures_lo.wavelengths_nm().to_vec(),
        data,
    )?)
}

/// Nearest-neighbor upsampling of every band; the comparison baseline
/// for fusion quality.
pub fn nearest_upsample(cube: &HyperCube, factor: usize) -> Result<HyperCube, FusionError> {
    if factor == 0 {
        return Err(FusionError::InvalidConfig("factor must be >= 1".into()));
    }
    let rows = cube.rows() * factor;
    let cols = cube.cols() * factor;
    let out = HyperCube::from_fn(
        rows,
        cols,
        cube.bands(),
        cube.wavelengths_nm().to_vec(),
        |r, c, b| cube.get(r / factor, c / factor, b),
    )?;
    Ok(out)
}

/// Bilinear resampling of a row-major patch; endpoints map onto
/// endpoints, so equal input and output sizes give the identity.
fn resize_patch(src: &[f64], sr: usize, sc: usize, dr: usize, dc: usize) -> Vec<f64> {
    if sr == dr && sc == dc {
        return src.to_vec();
    }
    let pos = |k: usize, d: usize, s: usize| -> f64 {
        if d == 1 {
            0.0
        } else {
            k as f64 * (s - 1) as f64 / (d - 1) as f64
        }
    };
    let mut out = vec![0.0; dr * dc];
    for r in 0..dr {
        let pr = pos(r, dr, sr);
        let r0 = pr.floor() as usize;
        let r1 = (r0 + 1).min(sr - 1);
        let fr = pr - r0 as f64;
        for c in 0..dc {
            let pc = pos(c, dc, sc);
            let c0 = pc.floor() as usize;
            let c1 = (c0 + 1).min(sc - 1);
            let fc = pc - c0 as f64;
            out[r * dc + c] = (1.0 - fr) * (1.0 - fc) * src[r0 * sc + c0]
                + (1.0 - fr) * fc * src[r0 * sc + c1]
                + fr * (1.0 - fc) * src[r1 * sc + c0]
                + fr * fc * src[r1 * sc + c1];
        }
    }
    out
}

/// Bilinear resize of a full plane.
pub fn bilinear_resize(plane: &Plane, out_rows: usize, out_cols: usize) -> Plane {
    let data = resize_patch(
        plane.data(),
        plane.rows(),
        plane.cols(),
        out_rows,
        out_cols,
    );
    Plane::new(out_rows, out_cols, data).expect("non-empty resize target")
}

/// Band-concatenates the low-res intensity plane with the MSI resampled
/// down to the same grid: output band 0 is the intensity, bands 1..
/// are the downsampled MSI bands.
pub fn build_input_stack(
    hsi_lo: &HyperCube,
    msi: &HyperCube,
    factor: usize,
) -> Result<HyperCube, FusionError> {
    let msi_ds = simulate::quintic_downsample_msi(msi, factor)?;
    if msi_ds.rows() != hsi_lo.rows() || msi_ds.cols() != hsi_lo.cols() {
        return Err(FusionError::DimMismatch(format!(
            "downsampled MSI is {}x{} but the HSI grid is {}x{}",
            msi_ds.rows(),
            msi_ds.cols(),
            hsi_lo.rows(),
            hsi_lo.cols()
        )));
    }
    let rows = hsi_lo.rows();
    let cols = hsi_lo.cols();
    let bands = 1 + msi_ds.bands();
    let intensity = decompose(hsi_lo).intensity;
    let mut data = vec![0.0f32; rows * cols * bands];
    for r in 0..rows {
        for c in 0..cols {
            data[r * cols + c] = intensity.get(r, c) as f32;
        }
    }
    for b in 0..msi_ds.bands() {
        let src = msi_ds.band_slice(b).expect("band index in range");
        data[(b + 1) * rows * cols..(b + 2) * rows * cols].copy_from_slice(src);
    }
    Ok(HyperCube::new(rows, cols, bands, vec![], data)?)
}

/// The multi-scale input sequence for the canonical window whose
/// top-left corner is (r0, c0): per size, the concentric window of that
/// size, bilinearly rescaled to the canonical size and flattened
/// band-major.
fn window_sequence(
    stack: &HyperCube,
    r0: usize,
    c0: usize,
    sizes: &[usize],
    canon: usize,
) -> Vec<Vec<f64>> {
    let bands = stack.bands();
    let mut sequence = Vec::with_capacity(sizes.len());
    let mut window = Vec::new();
    for &s in sizes {
        let off = (canon - s) / 2;
        let mut element = Vec::with_capacity(canon * canon * bands);
        for b in 0..bands {
            window.clear();
            for r in 0..s {
                for c in 0..s {
                    window.push(stack.get(r0 + off + r, c0 + off + c, b) as f64);
                }
            }
            element.extend(resize_patch(&window, s, s, canon, canon));
        }
        sequence.push(element);
    }
    sequence
}

/// Draws `count` distinct grid positions uniformly at random via a
/// seeded partial shuffle.
fn sample_locations(
    row_options: usize,
    col_options: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>, FusionError> {
    let total = row_options * col_options;
    if count > total {
        return Err(FusionError::CountTooLarge {
            requested: count,
            available: total,
        });
    }
    let mut indices: Vec<usize> = (0..total).collect();
    for i in 0..count {
        let j = rng.gen_range(i..total);
        indices.swap(i, j);
    }
    Ok(indices[..count]
        .iter()
        .map(|&i| (i / col_options, i % col_options))
        .collect())
}

/// Extracts a seeded random patch set. Input windows come from the
/// low-res stack; targets are the co-located high-res intensity
/// windows rescaled down to the canonical size. The high-res grid must
/// be an integer multiple of the stack grid.
pub fn extract_patches(
    stack: &HyperCube,
    target_intensity: &Plane,
    sizes: &[usize],
    count: usize,
    seed: u64,
) -> Result<PatchSet, FusionError> {
    let canon = validate_sizes(sizes)?;
    if canon > stack.rows() || canon > stack.cols() {
        return Err(FusionError::SizeTooLarge {
            size: canon,
            rows: stack.rows(),
            cols: stack.cols(),
        });
    }
    if target_intensity.rows() % stack.rows() != 0
        || target_intensity.cols() % stack.cols() != 0
        || target_intensity.rows() / stack.rows() != target_intensity.cols() / stack.cols()
        || target_intensity.rows() < stack.rows()
    {
        return Err(FusionError::DimMismatch(format!(
            "target grid {}x{} is not an integer multiple of the stack grid {}x{}",
            target_intensity.rows(),
            target_intensity.cols(),
            stack.rows(),
            stack.cols()
        )));
    }
    let factor = target_intensity.rows() / stack.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locations = sample_locations(
        stack.rows() - canon + 1,
        stack.cols() - canon + 1,
        count,
        &mut rng,
    )?;
    let hi = canon * factor;
    let mut samples = Vec::with_capacity(count);
    let mut hi_window = Vec::with_capacity(hi * hi);
    for (r0, c0) in locations {
        let sequence = window_sequence(stack, r0, c0, sizes, canon);
        hi_window.clear();
        for r in 0..hi {
            for c in 0..hi {
                hi_window.push(target_intensity.get(r0 * factor + r, c0 * factor + c));
            }
        }
        let target = resize_patch(&hi_window, hi, hi, canon, canon);
        samples.push(PatchSample { sequence, target });
    }
    Ok(PatchSet {
        name: "custom".into(),
        sizes: sizes.to_vec(),
        train_fraction: 1.0,
        samples,
    })
}

/// Trains the LSTM by per-sample gradient descent on mean squared
/// error at the final sequence step. Uses the first
/// `max(1, floor(n * train_fraction))` samples in their stored order,
/// so a fixed seed gives a bit-identical loss history. Returns the
/// trained parameters and the per-epoch mean training loss.
pub fn train(
    patchset: &PatchSet,
    cfg: &FusionConfig,
) -> Result<(LstmParams, Vec<f64>), FusionError> {
    cfg.validate()?;
    if patchset.samples.is_empty() {
        return Err(FusionError::InvalidConfig("patch set is empty".into()));
    }
    let n_train = ((patchset.samples.len() as f64) * patchset.train_fraction).floor() as usize;
    let n_train = n_train.max(1).min(patchset.samples.len());
    let train_samples = &patchset.samples[..n_train];
    let input = train_samples[0].sequence[0].len();
    let output = train_samples[0].target.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = LstmParams::init(input, cfg.hidden_units, output, &mut rng);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for sample in train_samples {
            let cache = lstm::forward(&params, &sample.sequence)?;
            let y = cache.final_output();
            let m = output as f64;
            let mut loss = 0.0;
            let mut loss_grad = vec![0.0; output];
            for j in 0..output {
                let d = y[j] - sample.target[j];
                loss += d * d;
                loss_grad[j] = 2.0 * d / m;
            }
            epoch_loss += loss / m;
            let mut grads = lstm::backward(&params, &cache, &loss_grad)?;
            if let Some(max_norm) = cfg.clip_norm {
                lstm::clip_gradients(&mut grads, max_norm);
            }
            lstm::sgd_update(&mut params, &grads, cfg.learning_rate)?;
        }
        epoch_loss /= train_samples.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(FusionError::DivergenceDetected { epoch });
        }
        history.push(epoch_loss);
    }
    Ok((params, history))
}

/// Window start positions with stride `canon`, edge-clamped so the last
/// window ends exactly at the grid boundary.
fn window_starts(extent: usize, canon: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..=extent - canon).step_by(canon).collect();
    if *starts.last().expect("at least one window") != extent - canon {
        starts.push(extent - canon);
    }
    starts
}

/// Runs the trained LSTM over every canonical window of the stack,
/// assembles the predicted low-res intensity plane, and bilinearly
/// upsamples it by the decimation factor.
pub fn enhance(
    stack: &HyperCube,
    params: &LstmParams,
    sizes: &[usize],
    factor: usize,
) -> Result<Plane, FusionError> {
    let canon = validate_sizes(sizes)?;
    if params.l2_norm() == 0.0 {
        return Err(FusionError::UntrainedParams);
    }
    if canon > stack.rows() || canon > stack.cols() {
        return Err(FusionError::SizeTooLarge {
            size: canon,
            rows: stack.rows(),
            cols: stack.cols(),
        });
    }
    let expected_input = canon * canon * stack.bands();
    if params.input != expected_input || params.output != canon * canon {
        return Err(FusionError::DimMismatch(format!(
            "parameters expect input {} / output {}, stack windows give {} / {}",
            params.input,
            params.output,
            expected_input,
            canon * canon
        )));
    }
    let mut predicted = Plane::zeros(stack.rows(), stack.cols());
    for &r0 in &window_starts(stack.rows(), canon) {
        for &c0 in &window_starts(stack.cols(), canon) {
            let sequence = window_sequence(stack, r0, c0, sizes, canon);
            let cache = lstm::forward(params, &sequence)?;
            let y = cache.final_output();
            for r in 0..canon {
                for c in 0..canon {
                    predicted.set(r0 + r, c0 + c, y[r * canon + c]);
                }
            }
        }
    }
    Ok(bilinear_resize(
        &predicted,
        stack.rows() * factor,
        stack.cols() * factor,
    ))
}

/// Everything the full pipeline produces.
#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub fused: HyperCube,
    pub reference_cropped: HyperCube,
    pub report: QualityReport,
    pub loss_history: Vec<f64>,
    pub params: LstmParams,
}

fn crop_cube(cube: &HyperCube, rows: usize, cols: usize) -> HyperCube {
    HyperCube::from_fn(
        rows,
        cols,
        cube.bands(),
        cube.wavelengths_nm().to_vec(),
        |r, c, b| cube.get(r, c, b),
    )
    .expect("crop of a valid cube is valid")
}

fn scale_cube(cube: &HyperCube, scale: f64) -> HyperCube {
    HyperCube::from_fn(
        cube.rows(),
        cube.cols(),
        cube.bands(),
        cube.wavelengths_nm().to_vec(),
        |r, c, b| (cube.get(r, c, b) as f64 * scale) as f32,
    )
    .expect("scaling a valid cube by a finite factor")
}

/// Full simulate-train-fuse-evaluate pipeline against a reference cube.
///
/// The reference is cropped to factor-aligned dims and normalized by
/// its peak magnitude so training sees order-one values; the fused
/// output is scaled back before evaluation. Every downstream stage is
/// seeded from the config, so identical configs give identical output.
pub fn fuse_pipeline(
    reference: &HyperCube,
    cfg: &FusionConfig,
) -> Result<FusionOutput, FusionError> {
    cfg.validate()?;
    let factor = cfg.decimation_factor;
    if reference.rows() < factor || reference.cols() < factor {
        return Err(FusionError::DimMismatch(format!(
            "reference {}x{} is smaller than the decimation factor {factor}",
            reference.rows(),
            reference.cols()
        )));
    }
    let rows = (reference.rows() / factor) * factor;
    let cols = (reference.cols() / factor) * factor;
    let cropped = crop_cube(reference, rows, cols);
    let peak = cropped
        .data()
        .iter()
        .fold(0.0f32, |acc, v| acc.max(v.abs())) as f64;
    if peak == 0.0 {
        return Err(FusionError::InvalidConfig(
            "reference cube is identically zero".into(),
        ));
    }
    let scaled = scale_cube(&cropped, 1.0 / peak);

    let hsi_lo = simulate::decimate(&scaled, factor)?;
    let msi = simulate::synthesize_msi(&scaled, &cfg.msi_ranges)?;
    let stack = build_input_stack(&hsi_lo, &msi, factor)?;
    let target_intensity = decompose(&scaled).intensity;

    let mut patchset = extract_patches(
        &stack,
        &target_intensity,
        &cfg.sizes,
        cfg.patch_count,
        cfg.seed,
    )?;
    patchset.train_fraction = cfg.train_fraction;
    let (params, loss_history) = train(&patchset, cfg)?;

    let intensity_hi = enhance(&stack, &params, &cfg.sizes, factor)?;
    let fused_scaled = recompose(&intensity_hi, &decompose(&hsi_lo).signatures, factor)?;
    let fused = scale_cube(&fused_scaled, peak);

    let (lo, hi) = cropped
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = (hi - lo) as f64;
    let ssim_cfg = SsimConfig {
        l: if range > 0.0 { range } else { 1.0 },
        ..SsimConfig::default()
    };
    let report = metrics::evaluate_cube(&fused, &cropped, &ssim_cfg)?;
    Ok(FusionOutput {
        fused,
        reference_cropped: cropped,
        report,
        loss_history,
        params,
    })
}
