//! Acceptance suite: one test per shipping criterion, each printing a
//! single PASS/FAIL line (visible with `--nocapture`, and always on
//! failure). Every expected value here is computed by an independent
//! route — brute-force formulas, finite differences, hand enumeration —
//! not by calling the code under test twice.

use std::fs;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hyperfuse::datacube::{HyperCube, Plane};
use hyperfuse::fusion::{self, FusionConfig};
use hyperfuse::lstm::{self, LstmParams};
use hyperfuse::metrics::{self, SsimConfig};
use hyperfuse::simulate::{self, BandRange};

fn criterion(number: u32, name: &str, budget: Option<Duration>, work: impl FnOnce() -> String) {
    let started = Instant::now();
    match catch_unwind(AssertUnwindSafe(work)) {
        Ok(detail) => {
            let elapsed = started.elapsed();
            if let Some(limit) = budget {
                assert!(
                    elapsed < limit,
                    "ACCEPTANCE {number} {name}: FAIL (took {elapsed:.2?}, budget {limit:.2?})"
                );
            }
            println!("ACCEPTANCE {number} {name}: PASS ({detail}; {elapsed:.2?})");
        }
        Err(cause) => {
            println!("ACCEPTANCE {number} {name}: FAIL");
            resume_unwind(cause);
        }
    }
}

fn random_plane(rng: &mut impl Rng, rows: usize, cols: usize) -> Plane {
    Plane::from_fn(rows, cols, |_, _| rng.gen_range(0.0..1.0))
}

/// SSIM straight from the textbook formula via raw power sums —
/// a different computation path than the two-pass library version.
fn ssim_raw_sums(x: &Plane, y: &Plane, k1: f64, k2: f64, l: f64) -> f64 {
    let n = (x.rows() * x.cols()) as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.data().iter().zip(y.data()) {
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let (mx, my) = (sx / n, sy / n);
    let vx = sxx / n - mx * mx;
    let vy = syy / n - my * my;
    let cov = sxy / n - mx * my;
    let c1 = (k1 * l) * (k1 * l);
    let c2 = (k2 * l) * (k2 * l);
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

fn psnr_brute_force(x: &Plane, y: &Plane, r: f64) -> f64 {
    let mut sq = 0.0;
    let mut n = 0usize;
    for (a, b) in x.data().iter().zip(y.data()) {
        sq += (a - b) * (a - b);
        n += 1;
    }
    let mse = sq / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (r * r / mse).log10()
    }
}

#[test]
fn acceptance_1_metric_oracles() {
    criterion(1, "metric-oracles", Some(Duration::from_secs(5)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let cfg = SsimConfig::default();
        let mut worst_ssim = 0.0f64;
        let mut worst_psnr = 0.0f64;
        for _ in 0..200 {
            let x = random_plane(&mut rng, 8, 8);
            let y = random_plane(&mut rng, 8, 8);
            let got = metrics::ssim(&x, &y, &cfg).unwrap();
            let want = ssim_raw_sums(&x, &y, cfg.k1, cfg.k2, cfg.l);
            worst_ssim = worst_ssim.max((got - want).abs());
            assert!((got - want).abs() < 1e-9, "ssim {got} vs oracle {want}");

            let got = metrics::psnr(&x, &y, 1.0).unwrap();
            let want = psnr_brute_force(&x, &y, 1.0);
            worst_psnr = worst_psnr.max((got - want).abs());
            assert!((got - want).abs() < 1e-9, "psnr {got} vs oracle {want}");

            let identity = metrics::ssim(&x, &x, &cfg).unwrap();
            assert_eq!(identity, 1.0, "ssim(x,x) must be exactly 1");
        }
        format!("200 pairs, max |Δssim|={worst_ssim:.2e}, max |Δpsnr|={worst_psnr:.2e}")
    });
}

/// The fields of an LSTM parameter set, in checkpoint order, as
/// mutable references — the finite-difference loop walks these.
fn param_fields(p: &mut LstmParams) -> [&mut Vec<f64>; 14] {
    [
        &mut p.u_f, &mut p.w_f, &mut p.b_f, &mut p.u_i, &mut p.w_i, &mut p.b_i, &mut p.u_c,
        &mut p.w_c, &mut p.b_c, &mut p.u_o, &mut p.w_o, &mut p.b_o, &mut p.v, &mut p.b_v,
    ]
}

fn mse_loss(params: &LstmParams, sequence: &[Vec<f64>], target: &[f64]) -> f64 {
    let cache = lstm::forward(params, sequence).unwrap();
    let y = cache.final_output();
    y.iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64
}

#[test]
fn acceptance_2_lstm_gradient_check() {
    criterion(2, "lstm-gradient-check", Some(Duration::from_secs(10)), || {
        let (input, hidden, output, steps) = (2usize, 3usize, 2usize, 4usize);
        let step_h = 1e-5;
        let mut checked = 0usize;
        for seed in 1..=5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + 17);
            let mut params = LstmParams::init(input, hidden, output, &mut rng);
            let sequence: Vec<Vec<f64>> = (0..steps)
                .map(|_| (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let target: Vec<f64> = (0..output).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let cache = lstm::forward(&params, &sequence).unwrap();
            let m = output as f64;
            let loss_grad: Vec<f64> = cache
                .final_output()
                .iter()
                .zip(&target)
                .map(|(y, t)| 2.0 * (y - t) / m)
                .collect();
            let mut grads = lstm::backward(&params, &cache, &loss_grad).unwrap();

            for t in 0..14 {
                let len = param_fields(&mut grads)[t].len();
                for i in 0..len {
                    let original = param_fields(&mut params)[t][i];
                    param_fields(&mut params)[t][i] = original + step_h;
                    let up = mse_loss(&params, &sequence, &target);
                    param_fields(&mut params)[t][i] = original - step_h;
                    let down = mse_loss(&params, &sequence, &target);
                    param_fields(&mut params)[t][i] = original;
                    let fd = (up - down) / (2.0 * step_h);
                    let analytic = param_fields(&mut grads)[t][i];
                    if analytic.abs() < 1e-8 && fd.abs() < 1e-8 {
                        continue;
                    }
                    let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs());
                    assert!(
                        rel <= 1e-4,
                        "seed {seed} tensor {t} elem {i}: bptt {analytic} vs fd {fd} (rel {rel:.2e})"
                    );
                    checked += 1;
                }
            }
        }
        format!("5 seeds, {checked} parameter gradients within 1e-4 of central differences")
    });
}

#[test]
fn acceptance_3_decomposition_exactness() {
    criterion(3, "decomposition-exactness", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut checked = 0usize;
        for _ in 0..100 {
            let rows = rng.gen_range(1..=8);
            let cols = rng.gen_range(1..=8);
            let bands = rng.gen_range(1..=16);
            let mut cube = HyperCube::from_fn(rows, cols, bands, vec![], |_, _, _| {
                rng.gen_range(0.0..2.0) as f32
            })
            .unwrap();
            // Plant whole-spectrum zero pixels, the awkward case for a
            // magnitude/direction split.
            {
                let zeros: Vec<(usize, usize)> = (0..2)
                    .map(|_| (rng.gen_range(0..rows), rng.gen_range(0..cols)))
                    .collect();
                let data = cube.data_mut();
                for b in 0..bands {
                    for &(r, c) in &zeros {
                        data[b * rows * cols + r * cols + c] = 0.0;
                    }
                }
            }
            let parts = fusion::decompose(&cube);
            let back = fusion::recompose(&parts.intensity, &parts.signatures, 1).unwrap();
            for r in 0..rows {
                for c in 0..cols {
                    for b in 0..bands {
                        let a = cube.get(r, c, b) as f64;
                        let z = back.get(r, c, b) as f64;
                        if a == 0.0 && z == 0.0 {
                            continue;
                        }
                        let rel = (a - z).abs() / a.abs().max(z.abs());
                        assert!(rel <= 1e-5, "({r},{c},{b}): {a} vs {z}, rel {rel:.2e}");
                        checked += 1;
                    }
                }
            }
        }
        format!("100 cubes with planted zero pixels, {checked} elements within 1e-5")
    });
}

#[test]
fn acceptance_4_end_to_end_fusion_gain() {
    criterion(4, "fusion-gain", Some(Duration::from_secs(120)), || {
        let reference = simulate::synthetic_cube(32, 32, 8, 7);
        let cfg = FusionConfig {
            sizes: vec![8, 6, 4, 2],
            train_fraction: 1.0,
            epochs: 300,
            learning_rate: 1.0,
            hidden_units: 8,
            seed: 0,
            decimation_factor: 4,
            patch_count: 1,
            ..FusionConfig::default()
        };
        assert!(cfg.epochs <= 500 && cfg.hidden_units <= 8);
        let out = fusion::fuse_pipeline(&reference, &cfg).unwrap();

        // Baseline: nearest-neighbor upsampling of the same decimated
        // cube, scored with the same dynamic range.
        let cropped = &out.reference_cropped;
        let hsi_lo = simulate::decimate(cropped, 4).unwrap();
        let baseline = fusion::nearest_upsample(&hsi_lo, 4).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in cropped.data() {
            lo = lo.min(v as f64);
            hi = hi.max(v as f64);
        }
        let ssim_cfg = SsimConfig {
            l: if hi > lo { hi - lo } else { 1.0 },
            ..SsimConfig::default()
        };
        let base_report = metrics::evaluate_cube(&baseline, cropped, &ssim_cfg).unwrap();

        let margin = out.report.mean_ssim - base_report.mean_ssim;
        assert!(
            margin >= 0.02,
            "fused {:.5} vs baseline {:.5}, margin {margin:.5} < 0.02",
            out.report.mean_ssim,
            base_report.mean_ssim
        );
        format!(
            "fused SSIM {:.4} vs nearest-neighbor {:.4}, margin {margin:.4}",
            out.report.mean_ssim, base_report.mean_ssim
        )
    });
}

const SWEEP: [u64; 8] = [
    4 * 1024,
    16 * 1024,
    32 * 1024,
    64 * 1024,
    128 * 1024,
    1024 * 1024,
    10 * 1024 * 1024,
    100 * 1024 * 1024,
];

fn dir_registry(dir: &Path, n: usize) -> chunkstore::NodeRegistry {
    let nodes = (0..n)
        .map(|i| chunkstore::Node::dir(format!("n{i}"), dir.join(format!("n{i}"))))
        .collect();
    chunkstore::NodeRegistry::new(nodes).unwrap()
}

#[test]
fn acceptance_5_chunk_store_integrity() {
    criterion(5, "chunk-store-integrity", Some(Duration::from_secs(30)), || {
        let mut data = vec![0u8; 10 * 1024 * 1024];
        ChaCha8Rng::seed_from_u64(99).fill_bytes(&mut data);
        let dir = tempfile::tempdir().unwrap();
        let mut reg = dir_registry(dir.path(), 3);

        for &size in &SWEEP {
            let m = chunkstore::put(&data, "ten.bin", size, 2, &reg, size).unwrap();
            assert_eq!(chunkstore::get(&m, &reg).unwrap(), data, "size {size}");
            chunkstore::delete(&m, &reg).unwrap();
        }

        // Replication 2 on 3 nodes: any single node can die.
        let m = chunkstore::put(&data, "ten.bin", 1024 * 1024, 2, &reg, 0).unwrap();
        for victim in ["n0", "n1", "n2"] {
            reg.mark_dead(victim).unwrap();
            assert_eq!(chunkstore::get(&m, &reg).unwrap(), data, "lost {victim}");
            reg.mark_alive(victim).unwrap();
        }

        // Corrupt every replica of one chunk: the CRC catches it.
        let chunk = &m.chunks[3];
        for node in &chunk.placements {
            let path = dir
                .path()
                .join(node)
                .join(format!("{:032x}.chunk", chunk.id));
            let mut bytes = fs::read(&path).unwrap();
            bytes[0] ^= 0xA5;
            fs::write(&path, &bytes).unwrap();
        }
        match chunkstore::get(&m, &reg) {
            Err(chunkstore::StoreError::ChecksumMismatch { chunk: id }) => {
                assert_eq!(id, chunk.id)
            }
            other => panic!("expected ChecksumMismatch, got {other:?}"),
        }
        chunkstore::delete(&m, &reg).unwrap();
        format!("10 MB round-trip at {} chunk sizes, node loss and CRC detection", SWEEP.len())
    });
}

#[test]
fn acceptance_6_benchmark_statistics() {
    criterion(6, "benchmark-statistics", None, || {
        let mut data = vec![0u8; 1024 * 1024];
        ChaCha8Rng::seed_from_u64(7).fill_bytes(&mut data);
        let dir = tempfile::tempdir().unwrap();
        let reg = dir_registry(dir.path(), 2);
        let report =
            chunkstore::bench_download(&data, "m.bin", &SWEEP, 10, 1, &reg, 0, None).unwrap();
        let csv = chunkstore::bench_csv(&report);

        // Recompute every summary row from the per-trial rows.
        let mut trials: Vec<(u64, f64)> = Vec::new();
        let mut means: Vec<(u64, f64)> = Vec::new();
        let mut stds: Vec<(u64, f64)> = Vec::new();
        let mut best_row = None;
        for line in csv.lines().skip(2) {
            let fields: Vec<&str> = line.split(',').collect();
            match (fields[0], fields[1]) {
                ("pooled", _) => {}
                ("best", "chunk_size_bytes") => best_row = Some(fields[2].parse::<u64>().unwrap()),
                (size, "mean") => means.push((size.parse().unwrap(), fields[2].parse().unwrap())),
                (size, "std") => stds.push((size.parse().unwrap(), fields[2].parse().unwrap())),
                (size, _) => trials.push((size.parse().unwrap(), fields[2].parse().unwrap())),
            }
        }
        assert_eq!(trials.len(), SWEEP.len() * 10);
        for &(size, mean_written) in &means {
            let group: Vec<f64> = trials
                .iter()
                .filter(|(s, _)| *s == size)
                .map(|&(_, v)| v)
                .collect();
            assert_eq!(group.len(), 10);
            let m = group.iter().sum::<f64>() / 10.0;
            assert!((m - mean_written).abs() < 1e-9, "mean at {size}");
            let ss: f64 = group.iter().map(|v| (v - m) * (v - m)).sum();
            let sd = (ss / 9.0).sqrt();
            let sd_written = stds.iter().find(|(s, _)| *s == size).unwrap().1;
            assert!((sd - sd_written).abs() < 1e-9, "std at {size}");
        }
        let argmin = means
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        assert_eq!(best_row.unwrap(), argmin);
        assert_eq!(report.best_chunk_size, argmin);
        format!(
            "{} sizes x 10 trials recomputed within 1e-9; argmin-mean = {argmin} bytes",
            SWEEP.len()
        )
    });
}

#[test]
fn acceptance_7_determinism() {
    criterion(7, "determinism", None, || {
        let bin = env!("CARGO_BIN_EXE_hyperfuse");
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for dir in &dirs {
            let out = Command::new(bin)
                .args(["gen", "--out-cube", "ref.hdr", "--seed", "5"])
                .arg("--out-dir")
                .arg(dir.path())
                .env_remove("HYPERFUSE_OUT")
                .output()
                .unwrap();
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            let ref_path = dir.path().join("ref.hdr");
            let out = Command::new(bin)
                .args([
                    "fuse",
                    "--ref",
                    ref_path.to_str().unwrap(),
                    "--epochs",
                    "40",
                    "--seed",
                    "5",
                    "--checkpoint",
                    "model.ckpt",
                ])
                .arg("--out-dir")
                .arg(dir.path())
                .env_remove("HYPERFUSE_OUT")
                .output()
                .unwrap();
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
        let mut compared = Vec::new();
        for name in ["fused.hdr", "fused.bin", "report.csv", "model.ckpt"] {
            let a = fs::read(dirs[0].path().join(name)).unwrap();
            let b = fs::read(dirs[1].path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
            compared.push(name);
        }
        format!("byte-identical across two runs: {}", compared.join(", "))
    });
}

#[test]
fn acceptance_8_simulation_contracts() {
    criterion(8, "simulation-contracts", None, || {
        // Factor-4 decimation of a 145x145x200 cube drops the ragged
        // edge and yields 36x36x200.
        let wavelengths: Vec<f64> = (0..200).map(|k| 400.0 + 10.0 * k as f64).collect();
        let big = HyperCube::from_fn(145, 145, 200, wavelengths, |r, c, b| {
            ((r * 7 + c * 13 + b * 3) % 100) as f32 / 10.0
        })
        .unwrap();
        let lo = simulate::decimate(&big, 4).unwrap();
        assert_eq!((lo.rows(), lo.cols(), lo.bands()), (36, 36, 200));
        // Spot-check one block mean by hand.
        let mut acc = 0.0f64;
        for r in 8..12 {
            for c in 4..8 {
                acc += big.get(r, c, 5) as f64;
            }
        }
        let want = (acc / 16.0) as f32;
        assert_eq!(lo.get(2, 1, 5), want);

        // Default MSI synthesis against hand-enumerated memberships.
        // Wavelengths straddle every band edge; the value of band k is
        // k, so each MSI band equals the mean of its member indices.
        let wl = vec![
            440.0, 445.0, 445.1, 506.0, 510.0, 516.0, 520.0, 595.0, 631.9, 632.0, 698.0,
            698.1, 757.0, 800.0, 853.0, 853.1,
        ];
        let cube = HyperCube::from_fn(2, 2, 16, wl, |_, _, b| b as f32).unwrap();
        let msi = simulate::synthesize_msi(&cube, &simulate::default_msi_ranges()).unwrap();
        assert_eq!(msi.bands(), 4);
        // blue 445..=516 -> bands {1,2,3,4,5}; green 506..=595 ->
        // {3,4,5,6,7}; red 632..=698 -> {9,10}; nir 757..=853 -> {12,13,14}.
        let expected = [3.0f32, 5.0, 9.5, 13.0];
        for (band, want) in expected.iter().enumerate() {
            for r in 0..2 {
                for c in 0..2 {
                    assert_eq!(msi.get(r, c, band), *want, "band {band}");
                }
            }
        }
        assert_eq!(msi.wavelengths_nm(), [480.5, 550.5, 665.0, 805.0]);

        // An input band on the edge itself is included on both sides:
        // 506 and 516 sit in blue and green alike.
        let blue = BandRange::new("blue", 445.0, 516.0).unwrap();
        let green = BandRange::new("green", 506.0, 595.0).unwrap();
        for edge in [506.0, 516.0] {
            assert!(blue.contains(edge) && green.contains(edge));
        }
        format!("145x145x200 -> 36x36x200; 4 MSI bands match hand-enumerated membership")
    });
}
