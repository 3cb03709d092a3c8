//! Execution of each subcommand: flag validation, artifact IO, and the
//! stdout `metric=<name> value=<v>` summary lines.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use hyperfuse::datacube::{self, HyperCube};
use hyperfuse::fusion::{self, FusionConfig};
use hyperfuse::lstm;
use hyperfuse::metrics::{self, QualityReport, SsimConfig, SsimMode};
use hyperfuse::simulate::{self, BandRange, DecimationMethod};

use crate::args::{
    Cli, Command, EvalArgs, FuseArgs, GenArgs, ReproArgs, SimulateArgs, StoreArgs, StoreBenchArgs,
    StoreDeleteArgs, StoreGetArgs, StoreOp, StorePutArgs, StoreServeArgs,
};
use crate::nodes::parse_nodes;
use crate::provenance::Provenance;

/// Usage problems exit 2; everything that went wrong while doing the
/// work exits 1.
pub enum CliError {
    Usage(String),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Domain(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn dom<E: std::error::Error + Send + Sync + 'static>(e: E) -> CliError {
    CliError::Domain(anyhow::Error::new(e))
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    verbose: u8,
}

impl Ctx {
    /// Artifact paths are interpreted under the output directory;
    /// absolute ones would escape it, so they are refused.
    fn out_path(&self, p: &Path, flag: &str) -> Result<PathBuf, CliError> {
        if p.as_os_str().is_empty() {
            return Err(usage(format!("--{flag} is empty")));
        }
        if p.is_absolute() {
            return Err(usage(format!(
                "--{flag} must be relative; artifacts land under the output directory {}",
                self.out_dir.display()
            )));
        }
        let full = self.out_dir.join(p);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(full)
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let out_dir = match cli.out_dir {
        Some(dir) => dir,
        None => match std::env::var_os("HYPERFUSE_OUT") {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from("."),
        },
    };
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let ctx = Ctx {
        seed: cli.seed,
        out_dir,
        verbose: cli.verbose,
    };
    match cli.command {
        Command::Gen(args) => cmd_gen(&ctx, args),
        Command::Simulate(args) => cmd_simulate(&ctx, args),
        Command::Fuse(args) => cmd_fuse(&ctx, args),
        Command::Eval(args) => cmd_eval(&ctx, args),
        Command::Store(StoreArgs { op }) => match op {
            StoreOp::Put(args) => cmd_store_put(&ctx, args),
            StoreOp::Get(args) => cmd_store_get(&ctx, args),
            StoreOp::Delete(args) => cmd_store_delete(&ctx, args),
            StoreOp::Bench(args) => cmd_store_bench(&ctx, args),
            StoreOp::Serve(args) => cmd_store_serve(&ctx, args),
        },
        Command::Repro(args) => cmd_repro(&ctx, args),
    }
}

fn load_input_cube(path: &Path, flag: &str) -> Result<HyperCube, CliError> {
    if !path.exists() {
        return Err(CliError::Domain(anyhow!(
            "--{flag}: {} does not exist",
            path.display()
        )));
    }
    datacube::load_cube(path).map_err(dom)
}

fn parse_lambda(spec: &str) -> Result<Vec<usize>, CliError> {
    let sizes: Vec<usize> = spec
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--lambda {spec:?} is not a comma-separated size list")))?;
    if sizes.is_empty() {
        return Err(usage("--lambda needs at least one size"));
    }
    for pair in sizes.windows(2) {
        if pair[1] >= pair[0] {
            return Err(usage("--lambda sizes must be strictly decreasing"));
        }
    }
    if sizes.iter().any(|&s| s < 2) {
        return Err(usage("--lambda sizes must be at least 2"));
    }
    Ok(sizes)
}

fn parse_ranges(spec: &str) -> Result<Vec<BandRange>, CliError> {
    let mut ranges = Vec::new();
    for entry in spec.split(',') {
        let (name, bounds) = entry
            .split_once('=')
            .ok_or_else(|| usage(format!("--ranges entry {entry:?} is missing `=`")))?;
        let (lo, hi) = bounds
            .split_once(':')
            .ok_or_else(|| usage(format!("--ranges entry {entry:?} is missing `:`")))?;
        let lo: f64 = lo
            .parse()
            .map_err(|_| usage(format!("--ranges entry {entry:?} has a bad lower bound")))?;
        let hi: f64 = hi
            .parse()
            .map_err(|_| usage(format!("--ranges entry {entry:?} has a bad upper bound")))?;
        let range = BandRange::new(name, lo, hi)
            .map_err(|e| usage(format!("--ranges entry {entry:?}: {e}")))?;
        ranges.push(range);
    }
    if ranges.is_empty() {
        return Err(usage("--ranges is empty"));
    }
    Ok(ranges)
}

fn ranges_flag_string(ranges: &[BandRange]) -> String {
    ranges
        .iter()
        .map(|r| format!("{}={}:{}", r.name, r.lo_nm, r.hi_nm))
        .collect::<Vec<_>>()
        .join(",")
}

fn lambda_flag_string(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn check_factor(factor: usize) -> Result<(), CliError> {
    if factor < 2 {
        return Err(usage("--factor must be at least 2"));
    }
    Ok(())
}

fn check_training_flags(train_frac: f64, epochs: usize, lr: f64, hidden: usize) -> Result<(), CliError> {
    if !(train_frac > 0.0 && train_frac <= 1.0) {
        return Err(usage("--train-frac must be in (0, 1]"));
    }
    if epochs == 0 {
        return Err(usage("--epochs must be at least 1"));
    }
    if !(lr > 0.0) {
        return Err(usage("--lr must be positive"));
    }
    if hidden == 0 {
        return Err(usage("--hidden must be at least 1"));
    }
    Ok(())
}

/// When `--count` is not given, take every available patch location up
/// to the stock 179.
fn resolve_count(
    requested: Option<usize>,
    reference: &HyperCube,
    factor: usize,
    sizes: &[usize],
) -> usize {
    if let Some(n) = requested {
        return n;
    }
    let canon = sizes.iter().copied().max().unwrap_or(2);
    let stack_rows = reference.rows() / factor;
    let stack_cols = reference.cols() / factor;
    if stack_rows < canon || stack_cols < canon {
        return 1;
    }
    let available = (stack_rows - canon + 1) * (stack_cols - canon + 1);
    available.clamp(1, 179)
}

fn print_metric(name: &str, value: impl std::fmt::Display) {
    println!("metric={name} value={value}");
}

fn print_report_metrics(report: &QualityReport) {
    print_metric("mean_ssim", report.mean_ssim);
    print_metric("mean_psnr", report.mean_psnr);
    print_metric("std_ssim", report.std_ssim);
    print_metric("std_psnr", report.std_psnr);
}

fn write_loss_csv(history: &[f64], path: &Path) -> Result<(), CliError> {
    let mut csv = String::from("epoch,loss\n");
    for (epoch, loss) in history.iter().enumerate() {
        csv.push_str(&format!("{epoch},{loss}\n"));
    }
    fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_gen(ctx: &Ctx, args: GenArgs) -> Result<(), CliError> {
    if args.rows == 0 || args.cols == 0 || args.bands == 0 {
        return Err(usage("--rows, --cols, and --bands must all be positive"));
    }
    let cube = simulate::synthetic_cube(args.rows, args.cols, args.bands, ctx.seed);
    let out = ctx.out_path(&args.out_cube, "out-cube")?;
    datacube::save_cube(&cube, &out).map_err(dom)?;
    ctx.note(format!(
        "wrote {}x{}x{} cube to {}",
        args.rows,
        args.cols,
        args.bands,
        out.display()
    ));
    Provenance::new("gen", ctx.seed)
        .flag("rows", args.rows)
        .flag("cols", args.cols)
        .flag("bands", args.bands)
        .flag("out-cube", args.out_cube.display())
        .write(&ctx.out_dir)?;
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, args: SimulateArgs) -> Result<(), CliError> {
    check_factor(args.factor)?;
    let ranges = match &args.ranges {
        Some(spec) => parse_ranges(spec)?,
        None => simulate::default_msi_ranges(),
    };
    let method = match args.decim.as_str() {
        "mean" => DecimationMethod::Mean,
        _ => DecimationMethod::Subsample,
    };
    let cube = load_input_cube(&args.input, "in")?;
    let hsi = simulate::decimate_with(&cube, args.factor, method).map_err(dom)?;
    let msi = simulate::synthesize_msi(&cube, &ranges).map_err(dom)?;
    let out_hsi = ctx.out_path(&args.out_hsi, "out-hsi")?;
    let out_msi = ctx.out_path(&args.out_msi, "out-msi")?;
    datacube::save_cube(&hsi, &out_hsi).map_err(dom)?;
    datacube::save_cube(&msi, &out_msi).map_err(dom)?;
    ctx.note(format!(
        "decimated to {}x{}x{}, synthesized {} MSI bands",
        hsi.rows(),
        hsi.cols(),
        hsi.bands(),
        msi.bands()
    ));
    Provenance::new("simulate", ctx.seed)
        .flag("in", args.input.display())
        .flag("factor", args.factor)
        .flag("out-hsi", args.out_hsi.display())
        .flag("out-msi", args.out_msi.display())
        .flag("ranges", ranges_flag_string(&ranges))
        .flag("decim", &args.decim)
        .write(&ctx.out_dir)?;
    Ok(())
}

fn cmd_fuse(ctx: &Ctx, args: FuseArgs) -> Result<(), CliError> {
    check_factor(args.factor)?;
    let sizes = parse_lambda(&args.lambda)?;
    check_training_flags(args.train_frac, args.epochs, args.lr, args.hidden)?;
    let reference = load_input_cube(&args.reference, "ref")?;
    let count = resolve_count(args.count, &reference, args.factor, &sizes);
    let cfg = FusionConfig {
        sizes: sizes.clone(),
        train_fraction: args.train_frac,
        epochs: args.epochs,
        learning_rate: args.lr,
        hidden_units: args.hidden,
        seed: ctx.seed,
        decimation_factor: args.factor,
        patch_count: count,
        clip_norm: args.clip,
        ..FusionConfig::default()
    };
    ctx.note(format!(
        "training on {count} patch sequences for {} epochs",
        args.epochs
    ));
    let output = fusion::fuse_pipeline(&reference, &cfg).map_err(dom)?;

    let out_cube = ctx.out_path(&args.out, "out")?;
    datacube::save_cube(&output.fused, &out_cube).map_err(dom)?;
    let report_path = ctx.out_path(&args.report, "report")?;
    metrics::write_report(&output.report, &report_path).map_err(dom)?;
    if let Some(ckpt) = &args.checkpoint {
        let path = ctx.out_path(ckpt, "checkpoint")?;
        lstm::save_checkpoint(&output.params, &path).map_err(dom)?;
    }
    if let Some(loss) = &args.loss {
        let path = ctx.out_path(loss, "loss")?;
        write_loss_csv(&output.loss_history, &path)?;
    }
    if let Some(band) = args.pgm_band {
        let plane = output.fused.band(band).map_err(dom)?;
        let stem = args
            .out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "fused".into());
        let pgm_rel = args.out.with_file_name(format!("{stem}_band{band}.pgm"));
        let path = ctx.out_path(&pgm_rel, "pgm-band")?;
        datacube::export_band_image(&plane, &path).map_err(dom)?;
    }

    Provenance::new("fuse", ctx.seed)
        .flag("ref", args.reference.display())
        .flag("lambda", lambda_flag_string(&sizes))
        .flag("train-frac", args.train_frac)
        .flag("epochs", args.epochs)
        .flag("lr", args.lr)
        .flag("hidden", args.hidden)
        .flag("factor", args.factor)
        .flag("count", count)
        .flag("out", args.out.display())
        .flag("report", args.report.display())
        .flag_opt("clip", args.clip)
        .flag_opt("checkpoint", args.checkpoint.as_ref().map(|p| p.display()))
        .flag_opt("loss", args.loss.as_ref().map(|p| p.display()))
        .flag_opt("pgm-band", args.pgm_band)
        .write(&ctx.out_dir)?;

    print_report_metrics(&output.report);
    if let Some(last) = output.loss_history.last() {
        print_metric("final_loss", last);
    }
    Ok(())
}

fn cmd_eval(ctx: &Ctx, args: EvalArgs) -> Result<(), CliError> {
    if args.window == 0 {
        return Err(usage("--window must be at least 1"));
    }
    let fused = load_input_cube(&args.fused, "fused")?;
    let reference = load_input_cube(&args.reference, "ref")?;
    let l = match args.l {
        Some(l) if l > 0.0 => l,
        Some(_) => return Err(usage("--l must be positive")),
        None => {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in reference.data() {
                lo = lo.min(v as f64);
                hi = hi.max(v as f64);
            }
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        }
    };
    let cfg = SsimConfig {
        l,
        window: args.window,
        mode: if args.mode == "windowed" {
            SsimMode::WindowedMean
        } else {
            SsimMode::Global
        },
        ..SsimConfig::default()
    };
    let report = metrics::evaluate_cube(&fused, &reference, &cfg).map_err(dom)?;
    let out = ctx.out_path(&args.out, "out")?;
    metrics::write_report(&report, &out).map_err(dom)?;
    Provenance::new("eval", ctx.seed)
        .flag("fused", args.fused.display())
        .flag("ref", args.reference.display())
        .flag("out", args.out.display())
        .flag("window", args.window)
        .flag("mode", &args.mode)
        .flag("l", l)
        .write(&ctx.out_dir)?;
    print_report_metrics(&report);
    Ok(())
}

fn cmd_store_put(ctx: &Ctx, args: StorePutArgs) -> Result<(), CliError> {
    if args.chunk_size == 0 {
        return Err(usage("--chunk-size must be positive"));
    }
    if args.replication == 0 {
        return Err(usage("--replication must be at least 1"));
    }
    let registry = parse_nodes(&args.nodes).map_err(usage)?;
    let data = fs::read(&args.file)
        .with_context(|| format!("reading --file {}", args.file.display()))?;
    let file_name = args
        .file
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| usage("--file has no filename component"))?;
    let manifest = chunkstore::put(
        &data,
        &file_name,
        args.chunk_size,
        args.replication,
        &registry,
        ctx.seed,
    )
    .map_err(dom)?;
    let manifest_path = ctx.out_path(&args.manifest, "manifest")?;
    manifest.save(&manifest_path).map_err(dom)?;
    Provenance::new("store put", ctx.seed)
        .flag("nodes", &args.nodes)
        .flag("file", args.file.display())
        .flag("chunk-size", args.chunk_size)
        .flag("replication", args.replication)
        .flag("manifest", args.manifest.display())
        .write(&ctx.out_dir)?;
    print_metric("chunk_count", manifest.chunks.len());
    print_metric("bytes_stored", manifest.file_size);
    Ok(())
}

fn cmd_store_get(ctx: &Ctx, args: StoreGetArgs) -> Result<(), CliError> {
    let registry = parse_nodes(&args.nodes).map_err(usage)?;
    let manifest = chunkstore::ChunkManifest::load(&args.manifest).map_err(dom)?;
    let data = chunkstore::get(&manifest, &registry).map_err(dom)?;
    let out = ctx.out_path(&args.out_file, "out-file")?;
    fs::write(&out, &data).with_context(|| format!("writing {}", out.display()))?;
    Provenance::new("store get", ctx.seed)
        .flag("nodes", &args.nodes)
        .flag("manifest", args.manifest.display())
        .flag("out-file", args.out_file.display())
        .write(&ctx.out_dir)?;
    print_metric("bytes_restored", data.len());
    Ok(())
}

fn cmd_store_delete(ctx: &Ctx, args: StoreDeleteArgs) -> Result<(), CliError> {
    let registry = parse_nodes(&args.nodes).map_err(usage)?;
    let manifest = chunkstore::ChunkManifest::load(&args.manifest).map_err(dom)?;
    chunkstore::delete(&manifest, &registry).map_err(dom)?;
    Provenance::new("store delete", ctx.seed)
        .flag("nodes", &args.nodes)
        .flag("manifest", args.manifest.display())
        .write(&ctx.out_dir)?;
    print_metric("chunks_deleted", manifest.chunks.len());
    Ok(())
}

fn cmd_store_bench(ctx: &Ctx, args: StoreBenchArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if args.replication == 0 {
        return Err(usage("--replication must be at least 1"));
    }
    let sizes: Vec<u64> = args
        .chunk_sizes
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--chunk-sizes {:?} is not a byte-size list", args.chunk_sizes)))?;
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(usage("--chunk-sizes entries must be positive"));
    }
    let registry = parse_nodes(&args.nodes).map_err(usage)?;

    // With --parse the stored bytes are a cube payload and each trial
    // re-parses them, so the timed region covers download plus decode.
    let (data, header) = if args.parse {
        let header_text = fs::read_to_string(&args.file)
            .with_context(|| format!("reading cube header {}", args.file.display()))?;
        let header = datacube::parse_header(&header_text).map_err(dom)?;
        let payload_path = args.file.with_extension("bin");
        let data = fs::read(&payload_path)
            .with_context(|| format!("reading cube payload {}", payload_path.display()))?;
        (data, Some(header))
    } else {
        let data = fs::read(&args.file)
            .with_context(|| format!("reading --file {}", args.file.display()))?;
        (data, None)
    };
    let file_name = args
        .file
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| usage("--file has no filename component"))?;

    let mut parse_hook = header.map(|h| {
        move |bytes: &[u8]| {
            datacube::cube_from_payload(&h, bytes)
                .map(|_| ())
                .map_err(|e| chunkstore::StoreError::Protocol(format!("payload is not a cube: {e}")))
        }
    });
    let report = chunkstore::bench_download(
        &data,
        &file_name,
        &sizes,
        args.trials,
        args.replication,
        &registry,
        ctx.seed,
        parse_hook
            .as_mut()
            .map(|h| h as &mut dyn FnMut(&[u8]) -> Result<(), chunkstore::StoreError>),
    )
    .map_err(dom)?;

    let csv = chunkstore::bench_csv(&report);
    let out = ctx.out_path(&args.out, "out")?;
    fs::write(&out, csv).with_context(|| format!("writing {}", out.display()))?;
    Provenance::new("store bench", ctx.seed)
        .flag("nodes", &args.nodes)
        .flag("file", args.file.display())
        .flag("chunk-sizes", {
            let strs: Vec<String> = sizes.iter().map(u64::to_string).collect();
            strs.join(",")
        })
        .flag("trials", args.trials)
        .flag("replication", args.replication)
        .flag("out", args.out.display())
        .flag("parse", args.parse)
        .write(&ctx.out_dir)?;
    let best = report
        .results
        .iter()
        .find(|r| r.chunk_size == report.best_chunk_size)
        .expect("best size comes from the results");
    print_metric("best_chunk_size", report.best_chunk_size);
    print_metric("best_mean_seconds", best.mean_seconds);
    Ok(())
}

fn cmd_store_serve(ctx: &Ctx, args: StoreServeArgs) -> Result<(), CliError> {
    let root = ctx.out_path(&args.root, "root")?;
    let server = chunkstore::BlockServer::bind(&args.addr, &root)
        .with_context(|| format!("binding {}", args.addr))?;
    let addr = server.local_addr().map_err(CliError::from_io)?;
    Provenance::new("store serve", ctx.seed)
        .flag("addr", &args.addr)
        .flag("root", args.root.display())
        .write(&ctx.out_dir)?;
    print_metric("listen_addr", addr);
    std::io::stdout().flush().ok();
    ctx.note(format!("serving chunks from {}", root.display()));
    server.run().map_err(CliError::from_io)?;
    Ok(())
}

impl CliError {
    fn from_io(e: std::io::Error) -> Self {
        CliError::Domain(anyhow::Error::new(e))
    }
}

fn cmd_repro(ctx: &Ctx, args: ReproArgs) -> Result<(), CliError> {
    check_factor(args.factor)?;
    let sizes = parse_lambda(&args.lambda)?;
    check_training_flags(args.train_frac, args.epochs, args.lr, args.hidden)?;
    if args.prefix.is_empty() || args.prefix.contains(std::path::is_separator) {
        return Err(usage("--prefix must be a bare filename prefix"));
    }
    let reference = load_input_cube(&args.reference, "ref")?;
    let count = resolve_count(args.count, &reference, args.factor, &sizes);
    let cfg = FusionConfig {
        sizes: sizes.clone(),
        train_fraction: args.train_frac,
        epochs: args.epochs,
        learning_rate: args.lr,
        hidden_units: args.hidden,
        seed: ctx.seed,
        decimation_factor: args.factor,
        patch_count: count,
        ..FusionConfig::default()
    };
    ctx.note(format!(
        "repro: {count} patches, {} epochs at factor {}",
        args.epochs, args.factor
    ));
    let output = fusion::fuse_pipeline(&reference, &cfg).map_err(dom)?;

    let p = |suffix: &str| PathBuf::from(format!("{}_{suffix}", args.prefix));
    let cropped = &output.reference_cropped;
    datacube::save_cube(cropped, &ctx.out_path(&p("ref_cropped.hdr"), "prefix")?).map_err(dom)?;
    let hsi = simulate::decimate(cropped, args.factor).map_err(dom)?;
    datacube::save_cube(&hsi, &ctx.out_path(&p("hsi_lo.hdr"), "prefix")?).map_err(dom)?;
    let msi = simulate::synthesize_msi(cropped, &simulate::default_msi_ranges()).map_err(dom)?;
    datacube::save_cube(&msi, &ctx.out_path(&p("msi.hdr"), "prefix")?).map_err(dom)?;
    datacube::save_cube(&output.fused, &ctx.out_path(&p("fused.hdr"), "prefix")?).map_err(dom)?;
    metrics::write_report(&output.report, &ctx.out_path(&p("report.csv"), "prefix")?)
        .map_err(dom)?;
    write_loss_csv(&output.loss_history, &ctx.out_path(&p("loss.csv"), "prefix")?)?;
    lstm::save_checkpoint(&output.params, &ctx.out_path(&p("lstm.ckpt"), "prefix")?)
        .map_err(dom)?;

    Provenance::new("repro", ctx.seed)
        .flag("ref", args.reference.display())
        .flag("factor", args.factor)
        .flag("lambda", lambda_flag_string(&sizes))
        .flag("train-frac", args.train_frac)
        .flag("epochs", args.epochs)
        .flag("lr", args.lr)
        .flag("hidden", args.hidden)
        .flag("count", count)
        .flag("prefix", &args.prefix)
        .write(&ctx.out_dir)?;

    print_report_metrics(&output.report);
    if let Some(last) = output.loss_history.last() {
        print_metric("final_loss", last);
    }
    Ok(())
}
