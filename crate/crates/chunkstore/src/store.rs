//! File-level operations: split into chunks, place replicas across
//! nodes, reassemble with checksum verification and replica failover.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::manifest::{ChunkManifest, ChunkRecord};
use crate::registry::NodeRegistry;
use crate::transport::{self, FetchError};
use crate::StoreError;

/// Splits `data` into `chunk_size` pieces, writes each piece to
/// `min(replication, alive nodes)` distinct nodes, and returns the
/// manifest describing the layout.
///
/// Chunk ids are drawn from a ChaCha8 stream seeded with `seed`, and
/// the same stream picks the starting node for round-robin placement —
/// the whole layout is a pure function of `(data, parameters, seed,
/// alive-node order)`.
pub fn put(
    data: &[u8],
    file_name: &str,
    chunk_size: u64,
    replication: usize,
    registry: &NodeRegistry,
    seed: u64,
) -> Result<ChunkManifest, StoreError> {
    if chunk_size == 0 {
        return Err(StoreError::ZeroChunkSize);
    }
    if replication == 0 {
        return Err(StoreError::BadReplication(replication));
    }
    if file_name.is_empty() || file_name.chars().any(char::is_whitespace) {
        return Err(StoreError::BadFileName(file_name.to_string()));
    }
    let alive = registry.alive_nodes();
    if alive.is_empty() {
        return Err(StoreError::NoAliveNodes);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(0..alive.len());
    let copies = replication.min(alive.len());

    let mut chunks = Vec::new();
    for (k, piece) in data.chunks(chunk_size as usize).enumerate() {
        let id: u128 = rng.gen();
        let mut placements = Vec::with_capacity(copies);
        for j in 0..copies {
            let node = alive[(start + k + j) % alive.len()];
            transport::put_chunk(&node.target, id, piece)?;
            placements.push(node.id.clone());
        }
        chunks.push(ChunkRecord {
            id,
            length: piece.len() as u64,
            crc32: crc32fast::hash(piece),
            placements,
        });
    }

    let manifest = ChunkManifest {
        file_name: file_name.to_string(),
        file_size: data.len() as u64,
        chunk_size,
        replication,
        chunks,
    };
    debug_assert!(manifest.validate().is_ok());
    Ok(manifest)
}

/// Reassembles the file, trying each chunk's replicas in placement
/// order. A replica counts only if its bytes match the manifest's
/// length and CRC-32. When every replica of some chunk fails, the
/// error says why: [`StoreError::ChecksumMismatch`] if at least one
/// copy was readable but corrupt, otherwise
/// [`StoreError::ChunkUnavailable`] listing the nodes tried.
pub fn get(manifest: &ChunkManifest, registry: &NodeRegistry) -> Result<Vec<u8>, StoreError> {
    let mut out = Vec::with_capacity(manifest.file_size as usize);
    for chunk in &manifest.chunks {
        let bytes = fetch_chunk(chunk, registry)?;
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

fn fetch_chunk(chunk: &ChunkRecord, registry: &NodeRegistry) -> Result<Vec<u8>, StoreError> {
    let mut tried = Vec::new();
    let mut saw_corrupt = false;
    for node_id in &chunk.placements {
        tried.push(node_id.clone());
        let Some(node) = registry.node(node_id) else {
            continue;
        };
        if !node.alive {
            continue;
        }
        match transport::get_chunk(&node.target, chunk.id) {
            Ok(bytes) => {
                if bytes.len() as u64 == chunk.length && crc32fast::hash(&bytes) == chunk.crc32 {
                    return Ok(bytes);
                }
                saw_corrupt = true;
            }
            Err(FetchError::Corrupt) => saw_corrupt = true,
            Err(FetchError::Missing) | Err(FetchError::Io(_)) => {}
        }
    }
    if saw_corrupt {
        Err(StoreError::ChecksumMismatch { chunk: chunk.id })
    } else {
        Err(StoreError::ChunkUnavailable {
            chunk: chunk.id,
            tried,
        })
    }
}

/// Removes every replica of every chunk. Replicas already gone are
/// fine; nodes that are dead or unknown are skipped. Running it twice
/// is a no-op the second time.
pub fn delete(manifest: &ChunkManifest, registry: &NodeRegistry) -> Result<(), StoreError> {
    for chunk in &manifest.chunks {
        for node_id in &chunk.placements {
            let Some(node) = registry.node(node_id) else {
                continue;
            };
            if !node.alive {
                continue;
            }
            transport::delete_chunk(&node.target, chunk.id)?;
        }
    }
    Ok(())
}
