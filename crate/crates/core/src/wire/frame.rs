//! Length-prefixed envelopes over byte streams.
//!
//! ```text
//! length          u32 big-endian: bytes that follow (kind + id + payload)
//! kind            u8
//! correlation_id  u64 big-endian
//! payload         length - 9 bytes
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use super::message::MessageKind;

/// Largest payload accepted by [`frame_read`].
pub const MAX_PAYLOAD: usize = 256 * 1024 * 1024;

const FIXED: usize = 1 + 8;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame of {0} bytes exceeds the 256 MiB limit")]
    FrameTooLarge(u64),
    #[error("connection closed")]
    ConnectionClosed,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub kind: MessageKind,
    pub correlation_id: u64,
    pub payload: Vec<u8>,
}

impl Envelope {
    /// Value of the length prefix for this envelope.
    pub fn frame_len(&self) -> usize {
        FIXED + self.payload.len()
    }
}

pub fn frame_write<W: Write + ?Sized>(
    stream: &mut W,
    envelope: &Envelope,
) -> Result<(), FrameError> {
    if envelope.payload.len() > MAX_PAYLOAD {
        return Err(FrameError::FrameTooLarge(envelope.payload.len() as u64));
    }
    let mut header = [0u8; 4 + FIXED];
    header[..4].copy_from_slice(&(envelope.frame_len() as u32).to_be_bytes());
    header[4] = envelope.kind as u8;
    header[5..].copy_from_slice(&envelope.correlation_id.to_be_bytes());
    stream.write_all(&header)?;
    stream.write_all(&envelope.payload)?;
    stream.flush()?;
    Ok(())
}

fn read_exact_or_closed<R: Read + ?Sized>(
    stream: &mut R,
    buf: &mut [u8],
) -> Result<(), FrameError> {
    stream.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::ConnectionClosed,
        _ => FrameError::Io(e),
    })
}

/// Reads exactly one envelope. Never consumes bytes past its end.
pub fn frame_read<R: Read + ?Sized>(stream: &mut R) -> Result<Envelope, FrameError> {
    let mut len = [0u8; 4];
    read_exact_or_closed(stream, &mut len)?;
    let len = u32::from_be_bytes(len) as u64;
    if len < FIXED as u64 {
        return Err(FrameError::MalformedHeader(format!(
            "length {len} below header size"
        )));
    }
    if len - FIXED as u64 > MAX_PAYLOAD as u64 {
        return Err(FrameError::FrameTooLarge(len));
    }
    let mut fixed = [0u8; FIXED];
    read_exact_or_closed(stream, &mut fixed)?;
    let kind = MessageKind::from_byte(fixed[0])
        .ok_or_else(|| FrameError::MalformedHeader(format!("unknown kind {:#04x}", fixed[0])))?;
    let correlation_id = u64::from_be_bytes(fixed[1..].try_into().unwrap());

    // Grow the buffer as bytes arrive rather than trusting the prefix.
    let want = len as usize - FIXED;
    let mut payload = Vec::with_capacity(want.min(1 << 20));
    stream.take(want as u64).read_to_end(&mut payload)?;
    if payload.len() != want {
        return Err(FrameError::ConnectionClosed);
    }
    Ok(Envelope {
        kind,
        correlation_id,
        payload,
    })
}
