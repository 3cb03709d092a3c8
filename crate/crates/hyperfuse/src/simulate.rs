//! Simulated experiment inputs: a low-spatial-resolution hyperspectral
//! cube produced by block-mean decimation of a reference cube, and a
//! high-spatial-resolution multispectral image produced by averaging
//! bands over broad spectral ranges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::datacube::{CubeError, HyperCube};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("decimation factor must be >= 2, got {0}")]
    InvalidFactor(usize),
    #[error("decimation factor {factor} exceeds image dims {rows}x{cols}")]
    FactorTooLarge {
        factor: usize,
        rows: usize,
        cols: usize,
    },
    #[error("cube has no wavelength metadata")]
    NoWavelengths,
    #[error("range `{0}` contains no band centers")]
    EmptyRange(String),
    #[error("image too small: {0}")]
    TooSmall(String),
    #[error(transparent)]
    Cube(#[from] CubeError),
}

/// A named wavelength interval, inclusive at both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRange {
    pub name: String,
    pub lo_nm: f64,
    pub hi_nm: f64,
}

impl BandRange {
    pub fn new(name: impl Into<String>, lo_nm: f64, hi_nm: f64) -> Result<Self, SimulateError> {
        let name = name.into();
        if !(lo_nm < hi_nm) {
            return Err(SimulateError::TooSmall(format!(
                "range `{name}` is degenerate: {lo_nm}..{hi_nm}"
            )));
        }
        Ok(Self { name, lo_nm, hi_nm })
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo_nm + self.hi_nm) / 2.0
    }

    pub fn contains(&self, wavelength_nm: f64) -> bool {
        self.lo_nm <= wavelength_nm && wavelength_nm <= self.hi_nm
    }
}

/// Default multispectral band ranges: blue, green, red, near-infrared.
pub fn default_msi_ranges() -> Vec<BandRange> {
    vec![
        BandRange::new("blue", 445.0, 516.0).unwrap(),
        BandRange::new("green", 506.0, 595.0).unwrap(),
        BandRange::new("red", 632.0, 698.0).unwrap(),
        BandRange::new("nir", 757.0, 853.0).unwrap(),
    ]
}

/// Full input-simulation recipe.
#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub decimation_factor: usize,
    pub msi_ranges: Vec<BandRange>,
}

impl SimulationSpec {
    pub fn new(decimation_factor: usize, msi_ranges: Vec<BandRange>) -> Result<Self, SimulateError> {
        if decimation_factor < 2 {
            return Err(SimulateError::InvalidFactor(decimation_factor));
        }
        if msi_ranges.is_empty() {
            return Err(SimulateError::TooSmall("no band ranges given".into()));
        }
        Ok(Self {
            decimation_factor,
            msi_ranges,
        })
    }
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            decimation_factor: 4,
            msi_ranges: default_msi_ranges(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecimationMethod {
    /// Each output pixel is the mean of its factor x factor block.
    Mean,
    /// Each output pixel is the top-left sample of its block.
    Subsample,
}

/// Block-mean downsampling by `factor`. Output dims are
/// (rows/factor, cols/factor) with floor division; trailing rows and
/// columns that do not fill a block are dropped. Wavelengths carry over.
pub fn decimate(cube: &HyperCube, factor: usize) -> Result<HyperCube, SimulateError> {
    decimate_with(cube, factor, DecimationMethod::Mean)
}

pub fn decimate_with(
    cube: &HyperCube,
    factor: usize,
    method: DecimationMethod,
) -> Result<HyperCube, SimulateError> {
    if factor < 2 {
        return Err(SimulateError::InvalidFactor(factor));
    }
    if cube.rows() < factor || cube.cols() < factor {
        return Err(SimulateError::FactorTooLarge {
            factor,
            rows: cube.rows(),
            cols: cube.cols(),
        });
    }
    let out_rows = cube.rows() / factor;
    let out_cols = cube.cols() / factor;
    let mut data = vec![0.0f32; out_rows * out_cols * cube.bands()];
    for b in 0..cube.bands() {
        for r in 0..out_rows {
            for c in 0..out_cols {
                let v = match method {
                    DecimationMethod::Mean => {
                        let mut acc = 0.0f64;
                        for dr in 0..factor {
                            for dc in 0..factor {
                                acc += cube.get(r * factor + dr, c * factor + dc, b) as f64;
                            }
                        }
                        (acc / (factor * factor) as f64) as f32
                    }
                    DecimationMethod::Subsample => cube.get(r * factor, c * factor, b),
                };
                data[b * out_rows * out_cols + r * out_cols + c] = v;
            }
        }
    }
    Ok(HyperCube::new(
        out_rows,
        out_cols,
        cube.bands(),
        cube.wavelengths_nm().to_vec(),
        data,
    )?)
}

/// Synthesizes a broad-band multispectral image by averaging, per pixel,
/// all bands whose center wavelength falls inside each range (endpoints
/// inclusive). Output wavelengths are the range midpoints.
pub fn synthesize_msi(cube: &HyperCube, ranges: &[BandRange]) -> Result<HyperCube, SimulateError> {
    if cube.wavelengths_nm().is_empty() {
        return Err(SimulateError::NoWavelengths);
    }
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(ranges.len());
    for range in ranges {
        let idx: Vec<usize> = cube
            .wavelengths_nm()
            .iter()
            .enumerate()
            .filter(|(_, &w)| range.contains(w))
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(SimulateError::EmptyRange(range.name.clone()));
        }
        members.push(idx);
    }
    let plane = cube.rows() * cube.cols();
    let mut data = vec![0.0f32; plane * ranges.len()];
    for (k, idx) in members.iter().enumerate() {
        for r in 0..cube.rows() {
            for c in 0..cube.cols() {
                let mut acc = 0.0f64;
                for &b in idx {
                    acc += cube.get(r, c, b) as f64;
                }
                data[k * plane + r * cube.cols() + c] = (acc / idx.len() as f64) as f32;
            }
        }
    }
    let wavelengths: Vec<f64> = ranges.iter().map(|r| r.midpoint()).collect();
    Ok(HyperCube::new(
        cube.rows(),
        cube.cols(),
        ranges.len(),
        wavelengths,
        data,
    )?)
}

/// Evaluates the degree-5 Lagrange interpolant of a length-`n` sample
/// line at fractional position `x`, using the 6-point window around `x`
/// (clamped at the edges).
fn lagrange6(line: &[f64], x: f64) -> f64 {
    let n = line.len();
    let i0 = (x.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
    let mut acc = 0.0;
    for j in i0..i0 + 6 {
        let mut basis = 1.0;
        for m in i0..i0 + 6 {
            if m != j {
                basis *= (x - m as f64) / (j as f64 - m as f64);
            }
        }
        acc += line[j] * basis;
    }
    acc
}

/// Resamples an MSI down to the coarse grid (rows/factor, cols/factor,
/// floored) with separable degree-5 polynomial interpolation evaluated
/// at the block-center positions `k*factor + (factor-1)/2`. Reproduces
/// any per-axis polynomial of degree at most 5 exactly.
pub fn quintic_downsample_msi(msi: &HyperCube, factor: usize) -> Result<HyperCube, SimulateError> {
    if factor < 2 {
        return Err(SimulateError::InvalidFactor(factor));
    }
    if msi.rows() < 6 || msi.cols() < 6 || msi.rows() < factor || msi.cols() < factor {
        return Err(SimulateError::TooSmall(format!(
            "{}x{} image does not support degree-5 resampling by factor {factor}",
            msi.rows(),
            msi.cols()
        )));
    }
    let out_rows = msi.rows() / factor;
    let out_cols = msi.cols() / factor;
    let pos = |k: usize| k as f64 * factor as f64 + (factor as f64 - 1.0) / 2.0;
    let mut data = vec![0.0f32; out_rows * out_cols * msi.bands()];
    let mut column = vec![0.0f64; msi.rows()];
    let mut inter = vec![0.0f64; out_rows * msi.cols()];
    for b in 0..msi.bands() {
        for c in 0..msi.cols() {
            for r in 0..msi.rows() {
                column[r] = msi.get(r, c, b) as f64;
            }
            for k in 0..out_rows {
                inter[k * msi.cols() + c] = lagrange6(&column, pos(k));
            }
        }
        for k in 0..out_rows {
            let row = &inter[k * msi.cols()..(k + 1) * msi.cols()];
            for l in 0..out_cols {
                data[b * out_rows * out_cols + k * out_cols + l] = lagrange6(row, pos(l)) as f32;
            }
        }
    }
    Ok(HyperCube::new(
        out_rows,
        out_cols,
        msi.bands(),
        msi.wavelengths_nm().to_vec(),
        data,
    )?)
}

/// Deterministic smooth positive test cube: a seeded sum of shared 2-D
/// Gaussian bumps with per-band weights over a constant base level.
/// Wavelengths cover the default blue/green/red/NIR ranges for the first
/// four bands, then continue past them at 10 nm spacing.
pub fn synthetic_cube(rows: usize, cols: usize, bands: usize, seed: u64) -> HyperCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bumps = 4;
    let scale = rows.min(cols) as f64;
    let mut bumps = Vec::with_capacity(n_bumps);
    for _ in 0..n_bumps {
        let cr = rng.gen_range(0.0..rows as f64);
        let cc = rng.gen_range(0.0..cols as f64);
        let sigma = rng.gen_range(0.10..0.20) * scale;
        bumps.push((cr, cc, sigma));
    }
    let weights: Vec<Vec<f64>> = (0..bands)
        .map(|_| (0..n_bumps).map(|_| rng.gen_range(0.3..1.0)).collect())
        .collect();
    let midpoints = [480.5, 550.5, 665.0, 805.0];
    let wavelengths: Vec<f64> = (0..bands)
        .map(|k| {
            if k < midpoints.len() {
                midpoints[k]
            } else {
                860.0 + 10.0 * (k - midpoints.len()) as f64
            }
        })
        .collect();
    HyperCube::from_fn(rows, cols, bands, wavelengths, |r, c, b| {
        let mut v = 0.2f64;
        for (j, &(cr, cc, sigma)) in bumps.iter().enumerate() {
            let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
            v += weights[b][j] * (-d2 / (2.0 * sigma * sigma)).exp();
        }
        v as f32
    })
    .expect("generator output is finite and positive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bands: usize) -> HyperCube {
        HyperCube::from_fn(rows, cols, bands, vec![], |_, _, _| rng.gen_range(0.0..1.0)).unwrap()
    }

    #[test]
    fn constant_block_mean() {
        let cube = HyperCube::from_fn(4, 4, 1, vec![], |_, _, _| 7.0).unwrap();
        let out = decimate(&cube, 4).unwrap();
        assert_eq!((out.rows(), out.cols(), out.bands()), (1, 1, 1));
        assert_eq!(out.get(0, 0, 0), 7.0);
    }

    #[test]
    fn floor_dims_and_wavelength_carry() {
        let cube = HyperCube::from_fn(145, 145, 3, vec![400.0, 500.0, 600.0], |r, c, b| {
            (r + c + b) as f32
        })
        .unwrap();
        let out = decimate(&cube, 4).unwrap();
        assert_eq!((out.rows(), out.cols(), out.bands()), (36, 36, 3));
        assert_eq!(out.wavelengths_nm(), &[400.0, 500.0, 600.0]);
    }

    #[test]
    fn block_mean_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cube = random_cube(&mut rng, 8, 8, 2);
        let out = decimate(&cube, 2).unwrap();
        for b in 0..2 {
            for r in 0..4 {
                for c in 0..4 {
                    let want = (cube.get(2 * r, 2 * c, b)
                        + cube.get(2 * r, 2 * c + 1, b)
                        + cube.get(2 * r + 1, 2 * c, b)
                        + cube.get(2 * r + 1, 2 * c + 1, b)) as f64
                        / 4.0;
                    let got = out.get(r, c, b) as f64;
                    assert!((got - want).abs() < 1e-6, "({r},{c},{b}): {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn mean_preserved_over_retained_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cube = random_cube(&mut rng, 9, 9, 1);
        let out = decimate(&cube, 2).unwrap();
        let mut retained = 0.0f64;
        for r in 0..8 {
            for c in 0..8 {
                retained += cube.get(r, c, 0) as f64;
            }
        }
        retained /= 64.0;
        let got = out.data().iter().map(|&v| v as f64).sum::<f64>() / 16.0;
        assert!((got - retained).abs() / retained.abs() < 1e-5);
    }

    #[test]
    fn block_means_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cube = random_cube(&mut rng, 8, 8, 2);
        let two_step = decimate(&decimate(&cube, 2).unwrap(), 2).unwrap();
        let one_step = decimate(&cube, 4).unwrap();
        for (a, b) in two_step.data().iter().zip(one_step.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn subsample_takes_block_corner() {
        let cube = HyperCube::from_fn(4, 4, 1, vec![], |r, c, _| (r * 4 + c) as f32).unwrap();
        let out = decimate_with(&cube, 2, DecimationMethod::Subsample).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn decimate_rejects_bad_factors() {
        let cube = HyperCube::from_fn(4, 4, 1, vec![], |_, _, _| 1.0).unwrap();
        assert!(matches!(decimate(&cube, 1), Err(SimulateError::InvalidFactor(1))));
        assert!(matches!(
            decimate(&cube, 5),
            Err(SimulateError::FactorTooLarge { factor: 5, .. })
        ));
    }

    #[test]
    fn msi_mean_of_identical_bands() {
        let cube = HyperCube::from_fn(3, 3, 2, vec![450.0, 500.0], |_, _, _| 1.0).unwrap();
        let ranges = vec![BandRange::new("blue", 445.0, 516.0).unwrap()];
        let out = synthesize_msi(&cube, &ranges).unwrap();
        assert_eq!((out.rows(), out.cols(), out.bands()), (3, 3, 1));
        assert!(out.data().iter().all(|&v| v == 1.0));
        assert_eq!(out.wavelengths_nm(), &[480.5]);
    }

    #[test]
    fn msi_default_ranges_membership() {
        // Band centers 450 and 510 fall in blue; 510 also sits inside
        // green's 506..595, so green averages bands 510 and 550.
        let wl = vec![450.0, 510.0, 550.0, 650.0, 800.0];
        let cube = HyperCube::from_fn(2, 2, 5, wl, |_, _, b| (b + 1) as f32).unwrap();
        let out = synthesize_msi(&cube, &default_msi_ranges()).unwrap();
        assert_eq!(out.bands(), 4);
        assert_eq!(out.get(0, 0, 0), 1.5);
        assert_eq!(out.get(0, 0, 1), 2.5);
        assert_eq!(out.get(0, 0, 2), 4.0);
        assert_eq!(out.get(0, 0, 3), 5.0);
        assert_eq!(out.wavelengths_nm(), &[480.5, 550.5, 665.0, 805.0]);
    }

    #[test]
    fn msi_inclusive_endpoints() {
        let cube = HyperCube::from_fn(1, 1, 3, vec![500.0, 550.0, 600.0], |_, _, b| b as f32).unwrap();
        let ranges = vec![BandRange::new("mid", 500.0, 600.0).unwrap()];
        let out = synthesize_msi(&cube, &ranges).unwrap();
        assert_eq!(out.get(0, 0, 0), 1.0);
    }

    #[test]
    fn msi_empty_range_named() {
        let cube = HyperCube::from_fn(2, 2, 2, vec![450.0, 550.0], |_, _, _| 1.0).unwrap();
        let ranges = vec![BandRange::new("swir", 900.0, 950.0).unwrap()];
        match synthesize_msi(&cube, &ranges) {
            Err(SimulateError::EmptyRange(name)) => assert_eq!(name, "swir"),
            other => panic!("expected EmptyRange, got {other:?}"),
        }
    }

    #[test]
    fn msi_requires_wavelengths() {
        let cube = HyperCube::from_fn(2, 2, 2, vec![], |_, _, _| 1.0).unwrap();
        assert!(matches!(
            synthesize_msi(&cube, &default_msi_ranges()),
            Err(SimulateError::NoWavelengths)
        ));
    }

    #[test]
    fn msi_bounded_by_contributing_bands() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let wl: Vec<f64> = (0..6).map(|b| 450.0 + 10.0 * b as f64).collect();
        let cube =
            HyperCube::from_fn(4, 4, 6, wl, |_, _, _| rng.gen_range(0.0..1.0)).unwrap();
        let ranges = vec![BandRange::new("blue", 445.0, 516.0).unwrap()];
        let out = synthesize_msi(&cube, &ranges).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let vals: Vec<f32> = (0..6).map(|b| cube.get(r, c, b)).collect();
                let lo = vals.iter().cloned().fold(f32::INFINITY, f32::min);
                let hi = vals.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let v = out.get(r, c, 0);
                assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
            }
        }
    }

    #[test]
    fn quintic_preserves_constants() {
        let msi = HyperCube::from_fn(16, 16, 2, vec![], |_, _, _| 3.25).unwrap();
        let out = quintic_downsample_msi(&msi, 4).unwrap();
        assert_eq!((out.rows(), out.cols(), out.bands()), (4, 4, 2));
        for &v in out.data() {
            assert!((v - 3.25).abs() < 1e-6);
        }
    }

    #[test]
    fn quintic_reproduces_degree5_polynomials() {
        // Separable interpolation is exact on any field whose per-axis
        // degree is at most 5; compare against direct evaluation at the
        // block-center sample positions.
        let rows = 24;
        let cols = 24;
        let p = |r: f64, c: f64| {
            let u = r / rows as f64;
            let v = c / cols as f64;
            0.4 + 0.9 * u - 1.3 * u.powi(3) + 0.7 * u.powi(5) + 0.5 * v.powi(2)
                - 0.8 * v.powi(5)
                + 0.6 * u.powi(4) * v.powi(3)
        };
        let msi = HyperCube::from_fn(rows, cols, 1, vec![], |r, c, _| p(r as f64, c as f64) as f32)
            .unwrap();
        let out = quintic_downsample_msi(&msi, 4).unwrap();
        for k in 0..out.rows() {
            for l in 0..out.cols() {
                let want = p(k as f64 * 4.0 + 1.5, l as f64 * 4.0 + 1.5);
                let got = out.get(k, l, 0) as f64;
                assert!((got - want).abs() < 1e-5, "({k},{l}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn quintic_rejects_small_images() {
        let msi = HyperCube::from_fn(4, 4, 1, vec![], |_, _, _| 1.0).unwrap();
        assert!(matches!(
            quintic_downsample_msi(&msi, 4),
            Err(SimulateError::TooSmall(_))
        ));
    }

    #[test]
    fn synthetic_cube_is_smooth_positive_and_seeded() {
        let a = synthetic_cube(32, 32, 8, 99);
        let b = synthetic_cube(32, 32, 8, 99);
        let c = synthetic_cube(32, 32, 8, 100);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.data().iter().all(|&v| v > 0.0));
        // Default MSI synthesis must find at least one band per range.
        assert!(synthesize_msi(&a, &default_msi_ranges()).is_ok());
        // Neighboring pixels stay close on a smooth field.
        for r in 0..31 {
            for c in 0..32 {
                let d = (a.get(r, c, 0) - a.get(r + 1, c, 0)).abs();
                assert!(d < 0.25, "jump {d} at ({r},{c})");
            }
        }
    }
}
