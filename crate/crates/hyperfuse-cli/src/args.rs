//! Command-line surface: one binary, one subcommand per workflow.

use clap::{ArgAction, Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "hyperfuse",
    version,
    about = "Hyperspectral/multispectral fusion toolkit with chunked storage",
    propagate_version = true
)]
pub struct Cli {
    /// Seed shared by every randomized stage.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory receiving all artifacts. Defaults to $HYPERFUSE_OUT,
    /// then the current directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Print progress notes to stderr (repeat for more).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a seeded synthetic reference cube (sum of smooth bumps per band).
    Gen(GenArgs),
    /// Degrade a reference cube into a low-resolution HSI and a 4-band MSI.
    Simulate(SimulateArgs),
    /// Run the full fusion pipeline against a reference cube.
    Fuse(FuseArgs),
    /// Score a fused cube against its reference.
    Eval(EvalArgs),
    /// Chunked replicated storage operations.
    Store(StoreArgs),
    /// Simulate, fuse, and evaluate in one run with standard defaults.
    Repro(ReproArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 32)]
    pub rows: usize,
    #[arg(long, default_value_t = 32)]
    pub cols: usize,
    #[arg(long, default_value_t = 8)]
    pub bands: usize,
    /// Output cube header path (a sibling .bin is written next to it).
    #[arg(long, default_value = "synthetic.hdr")]
    pub out_cube: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Reference cube header.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Spatial decimation factor (>= 2).
    #[arg(long, default_value_t = 4)]
    pub factor: usize,
    #[arg(long, default_value = "hsi_lo.hdr")]
    pub out_hsi: PathBuf,
    #[arg(long, default_value = "msi.hdr")]
    pub out_msi: PathBuf,
    /// Spectral bands as `name=lo:hi` nanometer pairs, comma-separated.
    /// Defaults to blue=445:516,green=506:595,red=632:698,nir=757:853.
    #[arg(long)]
    pub ranges: Option<String>,
    /// Block reduction: average the block, or keep its top-left sample.
    #[arg(long, default_value = "mean", value_parser = ["mean", "subsample"])]
    pub decim: String,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    /// Reference cube header.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Patch side lengths, strictly decreasing.
    #[arg(long, default_value = "8,6,4,2")]
    pub lambda: String,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 4)]
    pub factor: usize,
    /// Patch locations to sample; defaults to as many as fit, up to 179.
    #[arg(long)]
    pub count: Option<usize>,
    /// Global gradient-norm clip threshold.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Fused cube header path.
    #[arg(long, default_value = "fused.hdr")]
    pub out: PathBuf,
    #[arg(long, default_value = "report.csv")]
    pub report: PathBuf,
    /// Also save the trained parameters here.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also save per-epoch training loss here as CSV.
    #[arg(long)]
    pub loss: Option<PathBuf>,
    /// Also export this band of the fused cube as a PGM image.
    #[arg(long)]
    pub pgm_band: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub fused: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
    /// Window side for windowed mode.
    #[arg(long, default_value_t = 8)]
    pub window: usize,
    #[arg(long, default_value = "global", value_parser = ["global", "windowed"])]
    pub mode: String,
    /// Dynamic range override; defaults to the reference's max minus min.
    #[arg(long)]
    pub l: Option<f64>,
}

#[derive(Args, Debug)]
pub struct StoreArgs {
    #[command(subcommand)]
    pub op: StoreOp,
}

#[derive(Subcommand, Debug)]
pub enum StoreOp {
    /// Split a file into replicated chunks across the node set.
    Put(StorePutArgs),
    /// Reassemble a file from its manifest, verifying checksums.
    Get(StoreGetArgs),
    /// Remove every chunk replica listed in a manifest.
    Delete(StoreDeleteArgs),
    /// Time downloads over a sweep of chunk sizes.
    Bench(StoreBenchArgs),
    /// Run a TCP block server over a storage directory.
    Serve(StoreServeArgs),
}

/// Node set syntax shared by the store subcommands:
/// `id=dir:<path>` or `id=tcp:<host:port>`, comma-separated.
#[derive(Args, Debug)]
pub struct StorePutArgs {
    #[arg(long)]
    pub nodes: String,
    /// File to store.
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long, default_value_t = 1024 * 1024)]
    pub chunk_size: u64,
    #[arg(long, default_value_t = 2)]
    pub replication: usize,
    /// Manifest output path.
    #[arg(long, default_value = "file.manifest")]
    pub manifest: PathBuf,
}

#[derive(Args, Debug)]
pub struct StoreGetArgs {
    #[arg(long)]
    pub nodes: String,
    /// Manifest written by `store put`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the reassembled file.
    #[arg(long, default_value = "restored.bin")]
    pub out_file: PathBuf,
}

#[derive(Args, Debug)]
pub struct StoreDeleteArgs {
    #[arg(long)]
    pub nodes: String,
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Args, Debug)]
pub struct StoreBenchArgs {
    #[arg(long)]
    pub nodes: String,
    /// File to sweep. With --parse this must be a cube header; its
    /// payload (.bin) is what gets stored and re-parsed.
    #[arg(long)]
    pub file: PathBuf,
    /// Chunk sizes in bytes, comma-separated.
    #[arg(
        long,
        default_value = "4096,16384,32768,65536,131072,1048576,10485760,104857600"
    )]
    pub chunk_sizes: String,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub replication: usize,
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
    /// Parse the downloaded bytes as a cube inside the timed region.
    #[arg(long, action = ArgAction::SetTrue)]
    pub parse: bool,
}

#[derive(Args, Debug)]
pub struct StoreServeArgs {
    /// Listen address; port 0 picks a free port (printed on stdout).
    #[arg(long, default_value = "127.0.0.1:7070")]
    pub addr: String,
    /// Chunk storage directory.
    #[arg(long, default_value = "blocks")]
    pub root: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReproArgs {
    /// Reference cube header.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub factor: usize,
    #[arg(long, default_value = "8,6,4,2")]
    pub lambda: String,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    /// Patch locations to sample; defaults to as many as fit, up to 179.
    #[arg(long)]
    pub count: Option<usize>,
    /// Artifact filename prefix.
    #[arg(long, default_value = "repro")]
    pub prefix: String,
}
