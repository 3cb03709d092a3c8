//! TCP block server: stores chunks as files in a root directory and
//! speaks the wire protocol in [`crate::wire`].
//!
//! Each chunk lives as `<hex-id>.chunk` next to a `<hex-id>.crc`
//! sidecar holding the CRC-32 recorded at write time (4 bytes,
//! little-endian). A read recomputes the checksum and answers
//! `CRC_FAIL` when the data no longer matches — corruption is detected
//! at the node, before bytes ever reach a client.

use std::fs;
use std::io::{self, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::thread;

use crate::transport::chunk_file_name;
use crate::wire;

pub struct BlockServer {
    listener: TcpListener,
    root: PathBuf,
}

impl BlockServer {
    /// Binds the listening socket and prepares the storage root. Pass
    /// port 0 to let the OS pick a free port.
    pub fn bind(addr: &str, root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let listener = TcpListener::bind(addr)?;
        Ok(Self { listener, root })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until the listener fails, handling each on
    /// its own thread. A connection may carry any number of requests.
    pub fn run(self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            let stream = stream?;
            let root = self.root.clone();
            thread::spawn(move || {
                let _ = serve_connection(stream, &root);
            });
        }
        Ok(())
    }
}

fn serve_connection(mut stream: TcpStream, root: &Path) -> io::Result<()> {
    loop {
        let mut opcode = [0u8; 1];
        match stream.read_exact(&mut opcode) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        }
        let chunk_id = wire::read_u128(&mut stream)?;
        match opcode[0] {
            wire::OP_PUT_CHUNK => handle_put(&mut stream, root, chunk_id)?,
            wire::OP_GET_CHUNK => handle_get(&mut stream, root, chunk_id)?,
            wire::OP_DELETE_CHUNK => handle_delete(&mut stream, root, chunk_id)?,
            wire::OP_PING => stream.write_all(&[wire::STATUS_OK])?,
            _ => {
                stream.write_all(&[wire::STATUS_ERROR])?;
                return Ok(());
            }
        }
        stream.flush()?;
    }
}

fn handle_put(stream: &mut TcpStream, root: &Path, chunk_id: u128) -> io::Result<()> {
    let data = match wire::read_payload(stream) {
        Ok(data) => data,
        Err(e) if e.kind() == ErrorKind::InvalidData => {
            // Oversized length prefix: refuse without reading the body.
            stream.write_all(&[wire::STATUS_ERROR])?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let crc = crc32fast::hash(&data);
    let status = match write_chunk_files(root, chunk_id, &data, crc) {
        Ok(()) => wire::STATUS_OK,
        Err(_) => wire::STATUS_ERROR,
    };
    stream.write_all(&[status])
}

fn handle_get(stream: &mut TcpStream, root: &Path, chunk_id: u128) -> io::Result<()> {
    let chunk_path = root.join(chunk_file_name(chunk_id));
    let data = match fs::read(&chunk_path) {
        Ok(data) => data,
        Err(e) if e.kind() == ErrorKind::NotFound => {
            return stream.write_all(&[wire::STATUS_NOT_FOUND]);
        }
        Err(_) => return stream.write_all(&[wire::STATUS_ERROR]),
    };
    let stored_crc = match fs::read(crc_path(root, chunk_id)) {
        Ok(bytes) if bytes.len() == 4 => u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
        _ => return stream.write_all(&[wire::STATUS_ERROR]),
    };
    if crc32fast::hash(&data) != stored_crc {
        return stream.write_all(&[wire::STATUS_CRC_FAIL]);
    }
    stream.write_all(&[wire::STATUS_OK])?;
    wire::write_payload(stream, &data)
}

fn handle_delete(stream: &mut TcpStream, root: &Path, chunk_id: u128) -> io::Result<()> {
    let mut ok = true;
    for path in [root.join(chunk_file_name(chunk_id)), crc_path(root, chunk_id)] {
        match fs::remove_file(&path) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::NotFound => {}
            Err(_) => ok = false,
        }
    }
    stream.write_all(&[if ok { wire::STATUS_OK } else { wire::STATUS_ERROR }])
}

fn crc_path(root: &Path, chunk_id: u128) -> PathBuf {
    root.join(format!("{chunk_id:032x}.crc"))
}

fn write_chunk_files(root: &Path, chunk_id: u128, data: &[u8], crc: u32) -> io::Result<()> {
    fs::write(root.join(chunk_file_name(chunk_id)), data)?;
    fs::write(crc_path(root, chunk_id), crc.to_le_bytes())
}
