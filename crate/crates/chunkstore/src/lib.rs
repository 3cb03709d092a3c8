//! Replicated chunk storage for large files.
//!
//! A file is split into fixed-size chunks, each chunk is written to
//! several distinct nodes, and a plain-text manifest records the
//! layout together with per-chunk CRC-32 checksums. Reads verify every
//! chunk and fail over between replicas; a node can be a plain local
//! directory or a TCP block server. [`bench::bench_download`] sweeps
//! chunk sizes to find the fastest one for a given file and node set.

pub mod bench;
pub mod manifest;
pub mod registry;
pub mod server;
pub mod store;
pub mod transport;
pub mod wire;

pub use bench::{bench_csv, bench_download, BenchReport, BenchResult};
pub use manifest::{ChunkManifest, ChunkRecord};
pub use registry::{Node, NodeRegistry, NodeTarget};
pub use server::BlockServer;
pub use store::{delete, get, put};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("chunk size must be positive")]
    ZeroChunkSize,
    #[error("replication factor {0} is not usable")]
    BadReplication(usize),
    #[error("file name {0:?} is empty or contains whitespace")]
    BadFileName(String),
    #[error("node id {0:?} is empty or contains separators")]
    BadNodeId(String),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("no node named {0:?} in the registry")]
    UnknownNode(String),
    #[error("no alive nodes to place chunks on")]
    NoAliveNodes,
    #[error("file is empty")]
    EmptyFile,
    #[error("trial count must be positive")]
    BadTrialCount,
    #[error("no chunk sizes to sweep")]
    NoChunkSizes,
    #[error("chunk {chunk:032x} unavailable; tried nodes {tried:?}")]
    ChunkUnavailable { chunk: u128, tried: Vec<String> },
    #[error("chunk {chunk:032x} failed checksum verification on every replica")]
    ChecksumMismatch { chunk: u128 },
    #[error("manifest line {line}: {message}")]
    ManifestParse { line: usize, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}
