//! Byte layout of the block-server protocol.
//!
//! Request: 1-byte opcode, 16-byte chunk id (little-endian), and for
//! `PUT_CHUNK` an 8-byte little-endian payload length followed by the
//! payload. Response: 1-byte status, and for a successful `GET_CHUNK`
//! an 8-byte little-endian length followed by the payload.

use std::io::{self, Read, Write};

pub const OP_PUT_CHUNK: u8 = 0x01;
pub const OP_GET_CHUNK: u8 = 0x02;
pub const OP_DELETE_CHUNK: u8 = 0x03;
pub const OP_PING: u8 = 0x04;

pub const STATUS_OK: u8 = 0x00;
pub const STATUS_NOT_FOUND: u8 = 0x01;
pub const STATUS_CRC_FAIL: u8 = 0x02;
pub const STATUS_ERROR: u8 = 0x03;

/// Upper bound on a single chunk payload; anything larger is refused
/// before allocation.
pub const MAX_PAYLOAD: u64 = 1 << 30;

pub fn write_request_header(w: &mut impl Write, opcode: u8, chunk_id: u128) -> io::Result<()> {
    w.write_all(&[opcode])?;
    w.write_all(&chunk_id.to_le_bytes())
}

pub fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_u128(r: &mut impl Read) -> io::Result<u128> {
    let mut buf = [0u8; 16];
    r.read_exact(&mut buf)?;
    Ok(u128::from_le_bytes(buf))
}

pub fn read_payload(r: &mut impl Read) -> io::Result<Vec<u8>> {
    let len = read_u64(r)?;
    if len > MAX_PAYLOAD {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("payload length {len} exceeds limit"),
        ));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn write_payload(w: &mut impl Write, data: &[u8]) -> io::Result<()> {
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    w.write_all(data)
}
