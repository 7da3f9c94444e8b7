//! Frame transports between two sessions, plus link-rate emulation.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::time::{Duration, Instant};

use privmatch::protocol::message::{FRAME_HEADER_LEN, MAX_PAYLOAD_LEN};
use privmatch::protocol::{Frame, FrameError, ProtocolError, Session, TranscriptEntry};
use privmatch::Role;
use thiserror::Error;

/// Link rate of the reference Bluetooth channel, in kilobits per second.
pub const BLUETOOTH_KBPS: f64 = 900.0;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("stream I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Moves one frame from one party to the other.
pub trait Transport {
    /// Returns the frame as delivered and the number of bytes it occupied on the wire.
    fn carry(&mut self, frame: Frame) -> Result<(Frame, usize), TransportError>;
}

/// Hands the frame over directly; the byte count is its encoded length.
#[derive(Debug, Default, Clone, Copy)]
pub struct InProcess;

impl Transport for InProcess {
    fn carry(&mut self, frame: Frame) -> Result<(Frame, usize), TransportError> {
        let len = frame.encode().len();
        Ok((frame, len))
    }
}

/// Serializes every frame into a byte pipe and parses it back out.
#[derive(Debug, Default)]
pub struct ByteStream {
    pipe: VecDeque<u8>,
    truncate_next: Option<usize>,
}

impl ByteStream {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cuts the next frame to its first `len` bytes, then closes the stream.
    pub fn truncate_next(&mut self, len: usize) {
        self.truncate_next = Some(len);
    }
}

impl Transport for ByteStream {
    fn carry(&mut self, frame: Frame) -> Result<(Frame, usize), TransportError> {
        let mut bytes = frame.encode();
        if let Some(cut) = self.truncate_next.take() {
            bytes.truncate(cut);
        }
        self.pipe.write_all(&bytes)?;
        let delivered = read_frame(&mut self.pipe)?;
        Ok((delivered, bytes.len()))
    }
}

/// Reads up to `buf.len()` bytes, stopping early only at end of stream.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut have = 0;
    while have < buf.len() {
        match r.read(&mut buf[have..])? {
            0 => break,
            n => have += n,
        }
    }
    Ok(have)
}

/// Reads exactly one frame from a byte stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, TransportError> {
    let mut header = [0u8; FRAME_HEADER_LEN];
    let have = read_full(r, &mut header)?;
    if have < FRAME_HEADER_LEN {
        return Err(FrameError::Truncated {
            needed: FRAME_HEADER_LEN,
            have,
        }
        .into());
    }
    let len = u32::from_be_bytes(header[..4].try_into().expect("4-byte prefix")) as usize;
    if len > MAX_PAYLOAD_LEN {
        return Err(FrameError::Oversized(len).into());
    }
    let mut bytes = vec![0u8; FRAME_HEADER_LEN + len];
    bytes[..FRAME_HEADER_LEN].copy_from_slice(&header);
    let have = read_full(r, &mut bytes[FRAME_HEADER_LEN..])?;
    if have < len {
        return Err(FrameError::Truncated {
            needed: FRAME_HEADER_LEN + len,
            have: FRAME_HEADER_LEN + have,
        }
        .into());
    }
    Ok(Frame::decode_exact(&bytes)?)
}

/// Delivers a batch of frames through a fresh in-process transport.
pub fn transport_inprocess(frames: &[Frame]) -> Result<(Vec<Frame>, u64), TransportError> {
    carry_all(&mut InProcess, frames)
}

/// Delivers a batch of frames through a fresh byte-stream loopback.
pub fn transport_loopback(frames: &[Frame]) -> Result<(Vec<Frame>, u64), TransportError> {
    carry_all(&mut ByteStream::new(), frames)
}

fn carry_all(t: &mut dyn Transport, frames: &[Frame]) -> Result<(Vec<Frame>, u64), TransportError> {
    let mut out = Vec::with_capacity(frames.len());
    let mut bytes = 0u64;
    for f in frames {
        let (d, n) = t.carry(f.clone())?;
        out.push(d);
        bytes += n as u64;
    }
    Ok((out, bytes))
}

/// A fixed-rate link used to turn byte counts into transfer time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub kbps: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self { kbps: BLUETOOTH_KBPS }
    }
}

impl LinkModel {
    pub fn transfer_time_bits(&self, bits: u64) -> Duration {
        Duration::from_secs_f64(bits as f64 / (self.kbps * 1000.0))
    }

    pub fn transfer_time(&self, bytes: u64) -> Duration {
        self.transfer_time_bits(bytes * 8)
    }
}

#[derive(Debug, Error)]
pub enum DriveError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Per-session measurements collected while driving two sessions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DriveStats {
    pub initiator_online: Duration,
    pub responder_online: Duration,
    pub frames: u64,
    pub bytes: u64,
    pub transcript: Vec<TranscriptEntry>,
}

/// Runs two sessions to completion over `transport`, recording bytes on both
/// parties' counters and the compute time each spends in its steps.
pub fn drive(initiator: &mut dyn Session, responder: &mut dyn Session, transport: &mut dyn Transport) -> Result<DriveStats, DriveError> {
    let protocol = initiator.protocol();
    let mut stats = DriveStats::default();
    let started = Instant::now();
    let mut pending = initiator.step(None)?.outgoing;
    stats.initiator_online += started.elapsed();
    let mut from = Role::Initiator;
    while let Some(msg) = pending.take() {
        let (sender, receiver): (&mut dyn Session, &mut dyn Session) = match from {
            Role::Initiator => (&mut *initiator, &mut *responder),
            Role::Responder => (&mut *responder, &mut *initiator),
        };
        let (delivered, len) = transport.carry(Frame::new(protocol, msg))?;
        sender.counters_mut().record_sent(len as u64);
        receiver.counters_mut().record_received(len as u64);
        stats.frames += 1;
        stats.bytes += len as u64;
        stats.transcript.push(TranscriptEntry {
            from,
            message: delivered.message.clone(),
        });
        let started = Instant::now();
        let step = receiver.step(Some(delivered.message))?;
        let spent = started.elapsed();
        from = match from {
            Role::Initiator => {
                stats.responder_online += spent;
                Role::Responder
            }
            Role::Responder => {
                stats.initiator_online += spent;
                Role::Initiator
            }
        };
        pending = step.outgoing;
    }
    Ok(stats)
}
