//! File-to-chunk metadata records and their line-oriented text format.
//!
//! A manifest maps a stored file to its ordered chunks, per-chunk
//! CRC-32 checksums, and replica placements:
//!
//! ```text
//! file <name> <size> <chunk_size> <replication>
//! chunk <hex-id> <length> <crc32-hex> <node,node,...>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::StoreError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkRecord {
    pub id: u128,
    pub length: u64,
    pub crc32: u32,
    pub placements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkManifest {
    pub file_name: String,
    pub file_size: u64,
    pub chunk_size: u64,
    pub replication: usize,
    pub chunks: Vec<ChunkRecord>,
}

impl ChunkManifest {
    /// Checks the structural invariants: chunk lengths sum to the file
    /// size, every chunk except the last is full, the last is non-empty,
    /// and each chunk's placements are non-empty and distinct.
    pub fn validate(&self) -> Result<(), StoreError> {
        let total: u64 = self.chunks.iter().map(|c| c.length).sum();
        if total != self.file_size {
            return Err(StoreError::Protocol(format!(
                "chunk lengths sum to {total}, manifest says {}",
                self.file_size
            )));
        }
        for (i, chunk) in self.chunks.iter().enumerate() {
            let last = i + 1 == self.chunks.len();
            if !last && chunk.length != self.chunk_size {
                return Err(StoreError::Protocol(format!(
                    "chunk {i} has length {}, expected the full {}",
                    chunk.length, self.chunk_size
                )));
            }
            if last && (chunk.length == 0 || chunk.length > self.chunk_size) {
                return Err(StoreError::Protocol(format!(
                    "final chunk length {} outside (0, {}]",
                    chunk.length, self.chunk_size
                )));
            }
            if chunk.placements.is_empty() {
                return Err(StoreError::Protocol(format!("chunk {i} has no placements")));
            }
            let mut seen = chunk.placements.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != chunk.placements.len() {
                return Err(StoreError::Protocol(format!(
                    "chunk {i} lists a node more than once"
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "file {} {} {} {}",
            self.file_name, self.file_size, self.chunk_size, self.replication
        );
        for chunk in &self.chunks {
            let _ = writeln!(
                s,
                "chunk {:032x} {} {:08x} {}",
                chunk.id,
                chunk.length,
                chunk.crc32,
                chunk.placements.join(",")
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty manifest"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "file" {
            return Err(parse_err(1, "expected `file <name> <size> <chunk_size> <replication>`"));
        }
        let file_size: u64 = fields[2]
            .parse()
            .map_err(|_| parse_err(1, "bad file size"))?;
        let chunk_size: u64 = fields[3]
            .parse()
            .map_err(|_| parse_err(1, "bad chunk size"))?;
        let replication: usize = fields[4]
            .parse()
            .map_err(|_| parse_err(1, "bad replication count"))?;
        let mut chunks = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 || fields[0] != "chunk" {
                return Err(parse_err(
                    line_no,
                    "expected `chunk <hex-id> <length> <crc32-hex> <nodes>`",
                ));
            }
            let id = u128::from_str_radix(fields[1], 16)
                .map_err(|_| parse_err(line_no, "bad chunk id"))?;
            let length: u64 = fields[2]
                .parse()
                .map_err(|_| parse_err(line_no, "bad chunk length"))?;
            let crc32 = u32::from_str_radix(fields[3], 16)
                .map_err(|_| parse_err(line_no, "bad checksum"))?;
            let placements: Vec<String> = fields[4].split(',').map(str::to_string).collect();
            if placements.iter().any(|p| p.is_empty()) {
                return Err(parse_err(line_no, "empty node id in placement list"));
            }
            chunks.push(ChunkRecord {
                id,
                length,
                crc32,
                placements,
            });
        }
        let manifest = Self {
            file_name: fields_name(header),
            file_size,
            chunk_size,
            replication,
            chunks,
        };
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        fs::write(path.as_ref(), self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::parse(&fs::read_to_string(path.as_ref())?)
    }
}

fn fields_name(header: &str) -> String {
    header.split_whitespace().nth(1).unwrap_or_default().to_string()
}

fn parse_err(line: usize, message: &str) -> StoreError {
    StoreError::ManifestParse {
        line,
        message: message.to_string(),
    }
}
