//! Hyperspectral cube data model and on-disk format.
//!
//! A cube is stored as a two-file pair: a UTF-8 `key = value` header
//! (`.hdr`) and a raw payload (`.bin`) of little-endian 32-bit floats in
//! band-sequential (BSQ) order: all pixels of band 0, then band 1, and so
//! on, row-major within each band.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CubeError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("header parse error at line {line}: {message}")]
    HeaderParse { line: usize, message: String },
    #[error("payload size mismatch: expected {expected} bytes, found {actual}")]
    PayloadSizeMismatch { expected: u64, actual: u64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("band {band} out of range for cube with {bands} bands")]
    BandOutOfRange { band: usize, bands: usize },
    #[error("invalid dimensions: {0}")]
    Dimensions(String),
    #[error("invalid wavelengths: {0}")]
    Wavelengths(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Band interleave of the payload. Only BSQ is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    Bsq,
}

/// Parsed `.hdr` contents.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeHeader {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub interleave: Interleave,
    pub wavelengths_nm: Option<Vec<f64>>,
    pub name: Option<String>,
}

/// Dense rows x cols x bands array of finite 32-bit values in BSQ order,
/// with optional per-band center wavelengths.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    rows: usize,
    cols: usize,
    bands: usize,
    wavelengths_nm: Vec<f64>,
    name: Option<String>,
    data: Vec<f32>,
}

impl HyperCube {
    /// Builds a cube, validating every invariant: data length matches the
    /// dimensions, wavelengths are empty or strictly increasing with one
    /// entry per band, and all values are finite.
    pub fn new(
        rows: usize,
        cols: usize,
        bands: usize,
        wavelengths_nm: Vec<f64>,
        data: Vec<f32>,
    ) -> Result<Self, CubeError> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(CubeError::Dimensions(format!(
                "counts must be positive, got {rows}x{cols}x{bands}"
            )));
        }
        let expected = rows * cols * bands;
        if data.len() != expected {
            return Err(CubeError::Dimensions(format!(
                "data length {} does not match {rows}x{cols}x{bands} = {expected}",
                data.len()
            )));
        }
        if !wavelengths_nm.is_empty() {
            if wavelengths_nm.len() != bands {
                return Err(CubeError::Wavelengths(format!(
                    "{} wavelengths for {bands} bands",
                    wavelengths_nm.len()
                )));
            }
            for w in wavelengths_nm.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(CubeError::Wavelengths(format!(
                        "not strictly increasing: {} then {}",
                        w[0], w[1]
                    )));
                }
            }
        }
        check_finite(&data)?;
        Ok(Self {
            rows,
            cols,
            bands,
            wavelengths_nm,
            name: None,
            data,
        })
    }

    /// Builds a cube by evaluating `f(row, col, band)` over the grid.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        bands: usize,
        wavelengths_nm: Vec<f64>,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, CubeError> {
        let mut data = vec![0.0f32; rows.max(1) * cols.max(1) * bands.max(1)];
        for b in 0..bands {
            for r in 0..rows {
                for c in 0..cols {
                    data[b * rows * cols + r * cols + c] = f(r, c, b);
                }
            }
        }
        Self::new(rows, cols, bands, wavelengths_nm, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn wavelengths_nm(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn set_name(&mut self, name: Option<String>) {
        self.name = name;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable payload access. Callers can break the finiteness invariant
    /// through this; `save_cube` re-validates before writing.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Flat index of (row, col, band) in BSQ order.
    #[inline]
    pub fn index(&self, row: usize, col: usize, band: usize) -> usize {
        band * self.rows * self.cols + row * self.cols + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f32 {
        self.data[self.index(row, col, band)]
    }

    /// Contiguous slice holding band `b`.
    pub fn band_slice(&self, b: usize) -> Result<&[f32], CubeError> {
        if b >= self.bands {
            return Err(CubeError::BandOutOfRange {
                band: b,
                bands: self.bands,
            });
        }
        let len = self.rows * self.cols;
        Ok(&self.data[b * len..(b + 1) * len])
    }

    /// Copy of band `b` as a 2-D image plane.
    pub fn band(&self, b: usize) -> Result<Plane, CubeError> {
        let slice = self.band_slice(b)?;
        Ok(Plane {
            rows: self.rows,
            cols: self.cols,
            data: slice.iter().map(|&v| v as f64).collect(),
        })
    }

    pub fn header(&self) -> CubeHeader {
        CubeHeader {
            rows: self.rows,
            cols: self.cols,
            bands: self.bands,
            interleave: Interleave::Bsq,
            wavelengths_nm: if self.wavelengths_nm.is_empty() {
                None
            } else {
                Some(self.wavelengths_nm.clone())
            },
            name: self.name.clone(),
        }
    }
}

fn check_finite(data: &[f32]) -> Result<(), CubeError> {
    for (index, v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(CubeError::NonFinite { index });
        }
    }
    Ok(())
}

/// 2-D image plane in 64-bit precision, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, CubeError> {
        if rows == 0 || cols == 0 {
            return Err(CubeError::Dimensions("empty plane".into()));
        }
        if data.len() != rows * cols {
            return Err(CubeError::Dimensions(format!(
                "plane data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] = f(r, c);
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

fn payload_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("bin")
}

/// Serializes the header in the fixed key order. Saving the same cube twice
/// yields byte-identical text.
fn format_header(h: &CubeHeader) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "rows = {}", h.rows);
    let _ = writeln!(s, "cols = {}", h.cols);
    let _ = writeln!(s, "bands = {}", h.bands);
    let _ = writeln!(s, "dtype = f32le");
    let _ = writeln!(s, "interleave = bsq");
    if let Some(wl) = &h.wavelengths_nm {
        let joined: Vec<String> = wl.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(s, "wavelengths_nm = {}", joined.join(","));
    }
    if let Some(name) = &h.name {
        let _ = writeln!(s, "name = {name}");
    }
    s
}

fn parse_count(line: usize, key: &str, value: &str) -> Result<usize, CubeError> {
    let n: usize = value.parse().map_err(|_| CubeError::HeaderParse {
        line,
        message: format!("{key} must be a positive integer, got `{value}`"),
    })?;
    if n == 0 {
        return Err(CubeError::HeaderParse {
            line,
            message: format!("{key} must be positive"),
        });
    }
    Ok(n)
}

/// Parses `.hdr` text. Keys must appear in the fixed order `rows`, `cols`,
/// `bands`, `dtype`, `interleave`, then optional `wavelengths_nm` and
/// `name`; unknown keys are rejected.
pub fn parse_header(text: &str) -> Result<CubeHeader, CubeError> {
    let mut rows = None;
    let mut cols = None;
    let mut bands = None;
    let mut dtype_seen = false;
    let mut interleave_seen = false;
    let mut wavelengths = None;
    let mut name = None;
    // Position in the fixed key order; optional keys may be skipped but not reordered.
    let mut next_slot = 0usize;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CubeError::HeaderParse {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let slot = match key {
            "rows" => 0,
            "cols" => 1,
            "bands" => 2,
            "dtype" => 3,
            "interleave" => 4,
            "wavelengths_nm" => 5,
            "name" => 6,
            other => {
                return Err(CubeError::HeaderParse {
                    line: line_no,
                    message: format!("unknown key `{other}`"),
                })
            }
        };
        if slot < next_slot {
            return Err(CubeError::HeaderParse {
                line: line_no,
                message: format!("key `{key}` out of order"),
            });
        }
        next_slot = slot + 1;
        match key {
            "rows" => rows = Some(parse_count(line_no, key, value)?),
            "cols" => cols = Some(parse_count(line_no, key, value)?),
            "bands" => bands = Some(parse_count(line_no, key, value)?),
            "dtype" => {
                if value != "f32le" {
                    return Err(CubeError::HeaderParse {
                        line: line_no,
                        message: format!("dtype must be `f32le`, got `{value}`"),
                    });
                }
                dtype_seen = true;
            }
            "interleave" => {
                if value != "bsq" {
                    return Err(CubeError::HeaderParse {
                        line: line_no,
                        message: format!("interleave must be `bsq`, got `{value}`"),
                    });
                }
                interleave_seen = true;
            }
            "wavelengths_nm" => {
                let mut parsed = Vec::new();
                for part in value.split(',') {
                    let w: f64 = part.trim().parse().map_err(|_| CubeError::HeaderParse {
                        line: line_no,
                        message: format!("bad wavelength `{part}`"),
                    })?;
                    parsed.push(w);
                }
                wavelengths = Some(parsed);
            }
            "name" => name = Some(value.to_string()),
            _ => unreachable!(),
        }
    }

    let missing = |what: &str| CubeError::HeaderParse {
        line: text.lines().count(),
        message: format!("missing required key `{what}`"),
    };
    let rows = rows.ok_or_else(|| missing("rows"))?;
    let cols = cols.ok_or_else(|| missing("cols"))?;
    let bands = bands.ok_or_else(|| missing("bands"))?;
    if !dtype_seen {
        return Err(missing("dtype"));
    }
    if !interleave_seen {
        return Err(missing("interleave"));
    }
    Ok(CubeHeader {
        rows,
        cols,
        bands,
        interleave: Interleave::Bsq,
        wavelengths_nm: wavelengths,
        name,
    })
}

/// Loads a cube from `path` (the `.hdr` file; the payload is read from the
/// same path with a `.bin` extension).
pub fn load_cube(path: impl AsRef<Path>) -> Result<HyperCube, CubeError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(CubeError::MissingFile(path.to_path_buf()));
    }
    let bin = payload_path(path);
    if !bin.exists() {
        return Err(CubeError::MissingFile(bin));
    }
    let header = parse_header(&fs::read_to_string(path)?)?;
    let bytes = fs::read(&bin)?;
    cube_from_payload(&header, &bytes)
}

/// Decodes a raw BSQ payload against a parsed header.
pub fn cube_from_payload(header: &CubeHeader, bytes: &[u8]) -> Result<HyperCube, CubeError> {
    let count = header.rows * header.cols * header.bands;
    let expected = count as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(CubeError::PayloadSizeMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let mut data = Vec::with_capacity(count);
    for chunk in bytes.chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
    }
    let mut cube = HyperCube::new(
        header.rows,
        header.cols,
        header.bands,
        header.wavelengths_nm.clone().unwrap_or_default(),
        data,
    )?;
    cube.set_name(header.name.clone());
    Ok(cube)
}

/// Writes the `.hdr`/`.bin` pair for `cube` at `path` (the `.hdr` file).
/// The byte layout is deterministic; re-saving an unchanged cube produces
/// byte-identical files.
pub fn save_cube(cube: &HyperCube, path: impl AsRef<Path>) -> Result<(), CubeError> {
    check_finite(cube.data())?;
    let path = path.as_ref();
    fs::write(path, format_header(&cube.header()))?;
    let mut payload = fs::File::create(payload_path(path))?;
    let mut buf = Vec::with_capacity(cube.data().len() * 4);
    for v in cube.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    payload.write_all(&buf)?;
    Ok(())
}

/// Writes a binary PGM (P5, maxval 255) after min-max scaling the plane to
/// 0..=255. A constant plane maps to all zeros.
pub fn export_band_image(image: &Plane, path: impl AsRef<Path>) -> Result<(), CubeError> {
    for (index, v) in image.data().iter().enumerate() {
        if !v.is_finite() {
            return Err(CubeError::NonFinite { index });
        }
    }
    let (lo, hi) = image.min_max();
    let range = hi - lo;
    let mut out = Vec::with_capacity(32 + image.data().len());
    out.extend_from_slice(format!("P5\n{} {}\n255\n", image.cols(), image.rows()).as_bytes());
    for &v in image.data() {
        let scaled = if range > 0.0 {
            ((v - lo) / range * 255.0).round()
        } else {
            0.0
        };
        out.push(scaled as u8);
    }
    fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cube() -> HyperCube {
        HyperCube::new(2, 2, 3, vec![], (0..12).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn layout_index_matches_bsq() {
        let c = small_cube();
        // BSQ: band-major, then row-major within the band.
        assert_eq!(c.get(0, 0, 0), 0.0);
        assert_eq!(c.get(0, 1, 0), 1.0);
        assert_eq!(c.get(1, 0, 0), 2.0);
        assert_eq!(c.get(0, 0, 1), 4.0);
        assert_eq!(c.get(1, 1, 2), 11.0);
    }

    #[test]
    fn layout_property_random_cubes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let rows = rng.gen_range(1..6);
            let cols = rng.gen_range(1..6);
            let bands = rng.gen_range(1..5);
            let data: Vec<f32> = (0..rows * cols * bands).map(|_| rng.gen::<f32>()).collect();
            let cube = HyperCube::new(rows, cols, bands, vec![], data.clone()).unwrap();
            for b in 0..bands {
                for r in 0..rows {
                    for c in 0..cols {
                        assert_eq!(cube.get(r, c, b), data[b * rows * cols + r * cols + c]);
                    }
                }
            }
        }
    }

    #[test]
    fn band_returns_contiguous_copy() {
        let c = small_cube();
        let b0 = c.band(0).unwrap();
        assert_eq!(b0.data(), &[0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(
            c.band(3),
            Err(CubeError::BandOutOfRange { band: 3, bands: 3 })
        ));
    }

    #[test]
    fn rejects_bad_wavelengths_and_nonfinite() {
        let err = HyperCube::new(1, 1, 2, vec![500.0, 400.0], vec![1.0, 2.0]);
        assert!(matches!(err, Err(CubeError::Wavelengths(_))));
        let err = HyperCube::new(1, 1, 2, vec![400.0], vec![1.0, 2.0]);
        assert!(matches!(err, Err(CubeError::Wavelengths(_))));
        let err = HyperCube::new(1, 2, 1, vec![], vec![1.0, f32::NAN]);
        assert!(matches!(err, Err(CubeError::NonFinite { index: 1 })));
    }

    #[test]
    fn roundtrip_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.hdr");
        let mut cube = small_cube();
        cube.set_name(Some("tiny".into()));
        save_cube(&cube, &path).unwrap();
        let back = load_cube(&path).unwrap();
        assert_eq!(cube, back);
    }

    #[test]
    fn roundtrip_random_cubes_with_wavelengths() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..10 {
            let rows = rng.gen_range(1..7);
            let cols = rng.gen_range(1..7);
            let bands = rng.gen_range(1..5);
            let wl: Vec<f64> = (0..bands).map(|b| 400.0 + b as f64 * 10.0 + rng.gen::<f64>()).collect();
            let data: Vec<f32> = (0..rows * cols * bands)
                .map(|_| rng.gen_range(-100.0..100.0))
                .collect();
            let cube = HyperCube::new(rows, cols, bands, wl, data).unwrap();
            let path = dir.path().join(format!("c{i}.hdr"));
            save_cube(&cube, &path).unwrap();
            assert_eq!(load_cube(&path).unwrap(), cube);
        }
    }

    #[test]
    fn header_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let cube = HyperCube::new(2, 2, 1, vec![532.5], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let a = dir.path().join("a.hdr");
        let b = dir.path().join("b.hdr");
        save_cube(&cube, &a).unwrap();
        save_cube(&cube, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(
            fs::read(a.with_extension("bin")).unwrap(),
            fs::read(b.with_extension("bin")).unwrap()
        );
    }

    #[test]
    fn payload_bytes_are_le_floats_row_major() {
        let dir = tempfile::tempdir().unwrap();
        let cube = HyperCube::new(2, 2, 1, vec![], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let path = dir.path().join("p.hdr");
        save_cube(&cube, &path).unwrap();
        let bytes = fs::read(path.with_extension("bin")).unwrap();
        let mut expected = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 4.0] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, expected);
    }

    #[test]
    fn truncated_payload_detected() {
        let dir = tempfile::tempdir().unwrap();
        let cube = small_cube();
        let path = dir.path().join("t.hdr");
        save_cube(&cube, &path).unwrap();
        let bin = path.with_extension("bin");
        let mut bytes = fs::read(&bin).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&bin, bytes).unwrap();
        match load_cube(&path) {
            Err(CubeError::PayloadSizeMismatch { expected, actual }) => {
                assert_eq!(expected, 48);
                assert_eq!(actual, 44);
            }
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }

    #[test]
    fn nan_refused_at_save() {
        let dir = tempfile::tempdir().unwrap();
        let mut cube = small_cube();
        cube.data_mut()[5] = f32::NAN;
        match save_cube(&cube, dir.path().join("n.hdr")) {
            Err(CubeError::NonFinite { index }) => assert_eq!(index, 5),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_and_unknown_key() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_cube(dir.path().join("absent.hdr")),
            Err(CubeError::MissingFile(_))
        ));
        let err = parse_header("rows = 1\ncols = 1\nbands = 1\ndtype = f32le\ninterleave = bsq\nshape = odd\n");
        match err {
            Err(CubeError::HeaderParse { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("shape"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_key_order_enforced() {
        let err = parse_header("cols = 1\nrows = 1\nbands = 1\ndtype = f32le\ninterleave = bsq\n");
        assert!(matches!(err, Err(CubeError::HeaderParse { line: 2, .. })));
    }

    #[test]
    fn paper_scale_payload_size() {
        let dir = tempfile::tempdir().unwrap();
        let cube = HyperCube::new(145, 145, 200, vec![], vec![0.25; 145 * 145 * 200]).unwrap();
        let path = dir.path().join("big.hdr");
        save_cube(&cube, &path).unwrap();
        let meta = fs::metadata(path.with_extension("bin")).unwrap();
        assert_eq!(meta.len(), 16_820_000);
    }

    #[test]
    fn pgm_min_max_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let img = Plane::new(1, 2, vec![0.0, 1.0]).unwrap();
        let path = dir.path().join("a.pgm");
        export_band_image(&img, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..9], b"P5\n2 1\n25");
        assert_eq!(&bytes[bytes.len() - 2..], &[0u8, 255u8]);
    }

    #[test]
    fn pgm_constant_maps_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let img = Plane::new(1, 2, vec![5.0, 5.0]).unwrap();
        let path = dir.path().join("c.pgm");
        export_band_image(&img, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[bytes.len() - 2..], &[0u8, 0u8]);
    }

    #[test]
    fn pgm_ramp_rounds_scaled_values() {
        // round(v * 255 / 8) for v = 0..=8
        let dir = tempfile::tempdir().unwrap();
        let img = Plane::from_fn(3, 3, |r, c| (r * 3 + c) as f64);
        let path = dir.path().join("r.pgm");
        export_band_image(&img, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let pixels = &bytes[bytes.len() - 9..];
        assert_eq!(pixels, &[0u8, 32, 64, 96, 128, 159, 191, 223, 255]);
    }
}
