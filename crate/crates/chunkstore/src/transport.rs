//! Chunk-level operations against a single node, dispatched on the
//! node's target kind. Every operation opens whatever handle it needs
//! fresh — file or socket — and drops it when done.

use std::fs;
use std::io::{self, ErrorKind, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::registry::NodeTarget;
use crate::wire;

const TCP_IO_TIMEOUT: Duration = Duration::from_secs(10);

/// Why a replica could not produce usable bytes.
#[derive(Debug)]
pub enum FetchError {
    /// The node answered but does not hold the chunk.
    Missing,
    /// The node holds the chunk but its stored checksum no longer
    /// matches the data (reported by a block server).
    Corrupt,
    /// The node could not be reached or the transfer failed.
    Io(io::Error),
}

impl From<io::Error> for FetchError {
    fn from(e: io::Error) -> Self {
        FetchError::Io(e)
    }
}

pub fn chunk_file_name(chunk_id: u128) -> String {
    format!("{chunk_id:032x}.chunk")
}

fn chunk_path(root: &Path, chunk_id: u128) -> PathBuf {
    root.join(chunk_file_name(chunk_id))
}

pub fn put_chunk(target: &NodeTarget, chunk_id: u128, data: &[u8]) -> io::Result<()> {
    match target {
        NodeTarget::Dir(root) => {
            fs::create_dir_all(root)?;
            fs::write(chunk_path(root, chunk_id), data)
        }
        NodeTarget::Tcp(addr) => {
            let mut stream = connect(addr)?;
            wire::write_request_header(&mut stream, wire::OP_PUT_CHUNK, chunk_id)?;
            wire::write_payload(&mut stream, data)?;
            stream.flush()?;
            match read_status(&mut stream)? {
                wire::STATUS_OK => Ok(()),
                status => Err(status_error("put", status)),
            }
        }
    }
}

pub fn get_chunk(target: &NodeTarget, chunk_id: u128) -> Result<Vec<u8>, FetchError> {
    match target {
        NodeTarget::Dir(root) => match fs::read(chunk_path(root, chunk_id)) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == ErrorKind::NotFound => Err(FetchError::Missing),
            Err(e) => Err(FetchError::Io(e)),
        },
        NodeTarget::Tcp(addr) => {
            let mut stream = connect(addr)?;
            wire::write_request_header(&mut stream, wire::OP_GET_CHUNK, chunk_id)?;
            stream.flush()?;
            match read_status(&mut stream)? {
                wire::STATUS_OK => Ok(wire::read_payload(&mut stream)?),
                wire::STATUS_NOT_FOUND => Err(FetchError::Missing),
                wire::STATUS_CRC_FAIL => Err(FetchError::Corrupt),
                status => Err(FetchError::Io(status_error("get", status))),
            }
        }
    }
}

/// Removing a chunk that is already gone succeeds.
pub fn delete_chunk(target: &NodeTarget, chunk_id: u128) -> io::Result<()> {
    match target {
        NodeTarget::Dir(root) => match fs::remove_file(chunk_path(root, chunk_id)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(()),
            Err(e) => Err(e),
        },
        NodeTarget::Tcp(addr) => {
            let mut stream = connect(addr)?;
            wire::write_request_header(&mut stream, wire::OP_DELETE_CHUNK, chunk_id)?;
            stream.flush()?;
            match read_status(&mut stream)? {
                wire::STATUS_OK => Ok(()),
                status => Err(status_error("delete", status)),
            }
        }
    }
}

pub fn ping(target: &NodeTarget) -> bool {
    match target {
        NodeTarget::Dir(root) => root.is_dir(),
        NodeTarget::Tcp(addr) => {
            let Ok(mut stream) = connect(addr) else {
                return false;
            };
            if wire::write_request_header(&mut stream, wire::OP_PING, 0).is_err() {
                return false;
            }
            if stream.flush().is_err() {
                return false;
            }
            matches!(read_status(&mut stream), Ok(wire::STATUS_OK))
        }
    }
}

fn connect(addr: &str) -> io::Result<TcpStream> {
    let stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(TCP_IO_TIMEOUT))?;
    stream.set_write_timeout(Some(TCP_IO_TIMEOUT))?;
    Ok(stream)
}

fn read_status(stream: &mut TcpStream) -> io::Result<u8> {
    let mut status = [0u8; 1];
    stream.read_exact(&mut status)?;
    Ok(status[0])
}

fn status_error(op: &str, status: u8) -> io::Error {
    io::Error::other(format!("{op} rejected by node with status {status:#04x}"))
}
