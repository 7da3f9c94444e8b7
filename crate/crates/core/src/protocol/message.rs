//! Wire messages and framing.
//!
//! A frame is `u32 payload length ‖ u8 protocol id ‖ u8 step tag ‖ payload`,
//! all big-endian. Group elements are minimal big-endian byte strings with a
//! 2-byte length prefix, sequences carry a 4-byte count, and similarity
//! values are IEEE-754 doubles.
//!
//! Where a step answers a previous message element-by-element (PM3, PM4,
//! PM5 and the P-match⁺ reply), the first component of each pair is the
//! element already on the wire at the same position of the referenced
//! message, so only the new component is transmitted.

use num_bigint::BigUint;
use thiserror::Error;

use crate::bloom::{BloomError, IndexedBloomFilter};
use crate::cipher::GroupElement;

/// Bytes of framing before the payload.
pub const FRAME_HEADER_LEN: usize = 6;
/// Upper bound on accepted payloads.
pub const MAX_PAYLOAD_LEN: usize = 64 << 20;
/// Step tag of the decline frame, valid under every protocol.
pub const DECLINE_TAG: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolId {
    PMatch = 1,
    PMatchPlus = 2,
    EMatch = 3,
}

impl ProtocolId {
    pub fn from_byte(b: u8) -> Result<Self, FrameError> {
        match b {
            1 => Ok(Self::PMatch),
            2 => Ok(Self::PMatchPlus),
            3 => Ok(Self::EMatch),
            other => Err(FrameError::UnknownProtocol(other)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::PMatch => "pmatch",
            Self::PMatchPlus => "pmatch+",
            Self::EMatch => "ematch",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("truncated frame: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("unknown protocol id {0}")]
    UnknownProtocol(u8),
    #[error("step tag {step} is not valid for protocol {protocol:?}")]
    UnknownStep { protocol: ProtocolId, step: u8 },
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversized(usize),
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
    #[error("malformed filter: {0}")]
    Filter(#[from] BloomError),
}

/// Every message exchanged by the three protocols.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolMessage {
    /// Step (i): `⟨h(x_i)^{K_A}, a_i^{k_A}⟩` for each initiator attribute.
    Pm1 {
        pairs: Vec<(GroupElement, GroupElement)>,
    },
    /// Step (ii): `h(y_i)^{K_B}`.
    Pm2 {
        attributes: Vec<GroupElement>,
    },
    /// Step (iii): `(h(y_i)^{K_B})^{K_A}`, aligned with PM2.
    Pm3 {
        reencrypted: Vec<GroupElement>,
    },
    /// Step (iv): `(a_i^{k_A})^{k_B}`, aligned with PM1.
    Pm4 {
        priorities: Vec<GroupElement>,
    },
    /// Step (v): `a_i^{k_B}`, aligned with PM1.
    Pm5 {
        priorities: Vec<GroupElement>,
    },
    /// Step (vi), P-match: the Tanimoto coefficient.
    Pm6 {
        similarity: f64,
    },
    /// Step (vi), P-match⁺: `(h(x_i)^{K_A})^{K_B}` aligned with PM1, and the
    /// coefficient when it clears the responder's threshold.
    PlusReply {
        reencrypted: Vec<GroupElement>,
        similarity: Option<f64>,
    },
    /// The sender ends the session at `step` without a result.
    Decline {
        step: u8,
    },
    EmReq,
    EmAck,
    EmData {
        filter: IndexedBloomFilter,
    },
    EmResult {
        similarity: Option<f64>,
    },
}

impl ProtocolMessage {
    pub fn step_tag(&self) -> u8 {
        match self {
            Self::Pm1 { .. } | Self::EmReq => 1,
            Self::Pm2 { .. } | Self::EmAck => 2,
            Self::Pm3 { .. } | Self::EmData { .. } => 3,
            Self::Pm4 { .. } | Self::EmResult { .. } => 4,
            Self::Pm5 { .. } => 5,
            Self::Pm6 { .. } | Self::PlusReply { .. } => 6,
            Self::Decline { .. } => DECLINE_TAG,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Pm1 { .. } => "PM1",
            Self::Pm2 { .. } => "PM2",
            Self::Pm3 { .. } => "PM3",
            Self::Pm4 { .. } => "PM4",
            Self::Pm5 { .. } => "PM5",
            Self::Pm6 { .. } => "PM6",
            Self::PlusReply { .. } => "PM6+",
            Self::Decline { .. } => "DECLINE",
            Self::EmReq => "EM_REQ",
            Self::EmAck => "EM_ACK",
            Self::EmData { .. } => "EM_DATA",
            Self::EmResult { .. } => "EM_RESULT",
        }
    }

    /// Whether this message exists under `protocol`.
    pub fn valid_for(&self, protocol: ProtocolId) -> bool {
        match self {
            Self::Decline { .. } => true,
            Self::Pm1 { .. } | Self::Pm2 { .. } | Self::Pm3 { .. } | Self::Pm4 { .. } | Self::Pm5 { .. } => {
                matches!(protocol, ProtocolId::PMatch | ProtocolId::PMatchPlus)
            }
            Self::Pm6 { .. } => protocol == ProtocolId::PMatch,
            Self::PlusReply { .. } => protocol == ProtocolId::PMatchPlus,
            Self::EmReq | Self::EmAck | Self::EmData { .. } | Self::EmResult { .. } => protocol == ProtocolId::EMatch,
        }
    }

    /// Number of group elements carried.
    pub fn group_elements(&self) -> usize {
        match self {
            Self::Pm1 { pairs } => 2 * pairs.len(),
            Self::Pm2 { attributes: v } | Self::Pm3 { reencrypted: v } | Self::Pm4 { priorities: v } | Self::Pm5 { priorities: v } => {
                v.len()
            }
            Self::PlusReply { reencrypted, .. } => reencrypted.len(),
            _ => 0,
        }
    }

    fn encode_payload(&self, out: &mut Vec<u8>) {
        match self {
            Self::Pm1 { pairs } => {
                put_count(out, pairs.len());
                for (a, b) in pairs {
                    put_element(out, a);
                    put_element(out, b);
                }
            }
            Self::Pm2 { attributes: v } | Self::Pm3 { reencrypted: v } | Self::Pm4 { priorities: v } | Self::Pm5 { priorities: v } => {
                put_elements(out, v)
            }
            Self::Pm6 { similarity } => out.extend_from_slice(&similarity.to_bits().to_be_bytes()),
            Self::PlusReply { reencrypted, similarity } => {
                put_elements(out, reencrypted);
                put_optional(out, *similarity);
            }
            Self::Decline { step } => out.push(*step),
            Self::EmReq | Self::EmAck => {}
            Self::EmData { filter } => out.extend_from_slice(&filter.encode()),
            Self::EmResult { similarity } => put_optional(out, *similarity),
        }
    }

    fn decode_payload(protocol: ProtocolId, step: u8, payload: &[u8]) -> Result<Self, FrameError> {
        let mut r = Cursor(payload);
        let unknown = || FrameError::UnknownStep { protocol, step };
        let msg = match (protocol, step) {
            (_, DECLINE_TAG) => Self::Decline { step: r.u8()? },
            (ProtocolId::EMatch, 1) => Self::EmReq,
            (ProtocolId::EMatch, 2) => Self::EmAck,
            (ProtocolId::EMatch, 3) => {
                let filter = IndexedBloomFilter::decode(r.rest())?;
                Self::EmData { filter }
            }
            (ProtocolId::EMatch, 4) => Self::EmResult { similarity: r.optional()? },
            (ProtocolId::EMatch, _) => return Err(unknown()),
            (_, 1) => {
                let n = r.count()?;
                let mut pairs = Vec::with_capacity(n.min(1 << 16));
                for _ in 0..n {
                    let a = r.element()?;
                    let b = r.element()?;
                    pairs.push((a, b));
                }
                Self::Pm1 { pairs }
            }
            (_, 2) => Self::Pm2 { attributes: r.elements()? },
            (_, 3) => Self::Pm3 {
                reencrypted: r.elements()?,
            },
            (_, 4) => Self::Pm4 { priorities: r.elements()? },
            (_, 5) => Self::Pm5 { priorities: r.elements()? },
            (ProtocolId::PMatch, 6) => Self::Pm6 { similarity: r.f64()? },
            (ProtocolId::PMatchPlus, 6) => {
                let reencrypted = r.elements()?;
                let similarity = r.optional()?;
                Self::PlusReply { reencrypted, similarity }
            }
            _ => return Err(unknown()),
        };
        if !r.0.is_empty() {
            return Err(FrameError::Malformed("trailing bytes"));
        }
        Ok(msg)
    }
}

/// A message tagged with its protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub protocol: ProtocolId,
    pub message: ProtocolMessage,
}

impl Frame {
    pub fn new(protocol: ProtocolId, message: ProtocolMessage) -> Self {
        Self { protocol, message }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        self.message.encode_payload(&mut payload);
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.push(self.protocol as u8);
        out.push(self.message.step_tag());
        out.extend_from_slice(&payload);
        out
    }

    /// Decodes one frame from the front of `bytes`, returning it with the number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), FrameError> {
        if bytes.len() < FRAME_HEADER_LEN {
            return Err(FrameError::Truncated {
                needed: FRAME_HEADER_LEN,
                have: bytes.len(),
            });
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD_LEN {
            return Err(FrameError::Oversized(len));
        }
        let total = FRAME_HEADER_LEN + len;
        if bytes.len() < total {
            return Err(FrameError::Truncated {
                needed: total,
                have: bytes.len(),
            });
        }
        let protocol = ProtocolId::from_byte(bytes[4])?;
        let message = ProtocolMessage::decode_payload(protocol, bytes[5], &bytes[FRAME_HEADER_LEN..total])?;
        Ok((Self { protocol, message }, total))
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode_exact(bytes: &[u8]) -> Result<Self, FrameError> {
        let (frame, used) = Self::decode(bytes)?;
        if used != bytes.len() {
            return Err(FrameError::Malformed("bytes after frame"));
        }
        Ok(frame)
    }
}

fn put_count(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&(n as u32).to_be_bytes());
}

pub(crate) fn put_element(out: &mut Vec<u8>, e: &GroupElement) {
    let bytes = e.to_bytes_be();
    out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
    out.extend_from_slice(&bytes);
}

fn put_elements(out: &mut Vec<u8>, v: &[GroupElement]) {
    put_count(out, v.len());
    for e in v {
        put_element(out, e);
    }
}

fn put_optional(out: &mut Vec<u8>, v: Option<f64>) {
    match v {
        Some(x) => {
            out.push(1);
            out.extend_from_slice(&x.to_bits().to_be_bytes());
        }
        None => out.push(0),
    }
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.0.len() < n {
            return Err(FrameError::Malformed("payload truncated"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.0)
    }

    fn u8(&mut self) -> Result<u8, FrameError> {
        Ok(self.take(1)?[0])
    }

    fn count(&mut self) -> Result<usize, FrameError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64, FrameError> {
        Ok(f64::from_bits(u64::from_be_bytes(self.take(8)?.try_into().unwrap())))
    }

    fn optional(&mut self) -> Result<Option<f64>, FrameError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.f64()?)),
            _ => Err(FrameError::Malformed("bad option flag")),
        }
    }

    fn element(&mut self) -> Result<GroupElement, FrameError> {
        let len = u16::from_be_bytes(self.take(2)?.try_into().unwrap()) as usize;
        if len == 0 {
            return Err(FrameError::Malformed("empty group element"));
        }
        Ok(GroupElement::from_raw(BigUint::from_bytes_be(self.take(len)?)))
    }

    fn elements(&mut self) -> Result<Vec<GroupElement>, FrameError> {
        let n = self.count()?;
        let mut out = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            out.push(self.element()?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloom::choose_family;

    fn el(x: u64) -> GroupElement {
        GroupElement::from_raw(BigUint::from(x))
    }

    #[test]
    fn pm1_layout() {
        let frame = Frame::new(
            ProtocolId::PMatch,
            ProtocolMessage::Pm1 {
                pairs: vec![(el(0x0102), el(3))],
            },
        );
        let bytes = frame.encode();
        assert_eq!(bytes, vec![0, 0, 0, 11, 1, 1, 0, 0, 0, 1, 0, 2, 0x01, 0x02, 0, 1, 3]);
        assert_eq!(Frame::decode_exact(&bytes).unwrap(), frame);
    }

    #[test]
    fn every_message_roundtrips() {
        let filter = crate::bloom::IndexedBloomFilter::new(400, choose_family(b"p", 12, 11, b"s").unwrap()).unwrap();
        let cases = [
            (
                ProtocolId::PMatch,
                ProtocolMessage::Pm2 {
                    attributes: vec![el(5), el(700)],
                },
            ),
            (ProtocolId::PMatchPlus, ProtocolMessage::Pm3 { reencrypted: vec![el(9)] }),
            (ProtocolId::PMatch, ProtocolMessage::Pm4 { priorities: vec![] }),
            (ProtocolId::PMatch, ProtocolMessage::Pm5 { priorities: vec![el(1)] }),
            (ProtocolId::PMatch, ProtocolMessage::Pm6 { similarity: 0.9667 }),
            (
                ProtocolId::PMatchPlus,
                ProtocolMessage::PlusReply {
                    reencrypted: vec![el(4)],
                    similarity: Some(0.5),
                },
            ),
            (
                ProtocolId::PMatchPlus,
                ProtocolMessage::PlusReply {
                    reencrypted: vec![],
                    similarity: None,
                },
            ),
            (ProtocolId::PMatch, ProtocolMessage::Decline { step: 4 }),
            (ProtocolId::EMatch, ProtocolMessage::EmReq),
            (ProtocolId::EMatch, ProtocolMessage::EmAck),
            (ProtocolId::EMatch, ProtocolMessage::EmData { filter }),
            (ProtocolId::EMatch, ProtocolMessage::EmResult { similarity: None }),
            (ProtocolId::EMatch, ProtocolMessage::EmResult { similarity: Some(0.25) }),
        ];
        for (protocol, message) in cases {
            assert!(message.valid_for(protocol));
            let frame = Frame::new(protocol, message);
            assert_eq!(Frame::decode_exact(&frame.encode()).unwrap(), frame);
        }
    }

    #[test]
    fn ematch_data_frame_size() {
        let filter = crate::bloom::IndexedBloomFilter::new(400, choose_family(b"pool", 12, 11, b"s").unwrap()).unwrap();
        let bytes = Frame::new(ProtocolId::EMatch, ProtocolMessage::EmData { filter }).encode();
        // header + λ + 50 filter bytes + seed(2+4) + l + l′ + count + 12 indices
        assert_eq!(bytes.len(), 6 + 4 + 50 + 2 + 4 + 4 + 4 + 4 + 48);
    }

    #[test]
    fn framing_errors() {
        let bytes = Frame::new(ProtocolId::PMatch, ProtocolMessage::Pm2 { attributes: vec![el(5)] }).encode();
        assert!(matches!(Frame::decode(&bytes[..3]), Err(FrameError::Truncated { .. })));
        assert!(matches!(
            Frame::decode(&bytes[..bytes.len() - 1]),
            Err(FrameError::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert_eq!(Frame::decode(&bad), Err(FrameError::UnknownProtocol(9)));
        let mut bad = bytes.clone();
        bad[5] = 7;
        assert!(matches!(Frame::decode(&bad), Err(FrameError::UnknownStep { .. })));
        let em6 = [0u8, 0, 0, 0, 3, 6];
        assert!(matches!(Frame::decode(&em6), Err(FrameError::UnknownStep { .. })));
        let mut long = bytes.clone();
        long.extend_from_slice(&[1, 2]);
        assert!(Frame::decode_exact(&long).is_err());
        // the count claims one more element than present
        let mut short = bytes.clone();
        short[9] = 2;
        assert!(matches!(Frame::decode(&short), Err(FrameError::Malformed(_))));
    }

    #[test]
    fn message_validity() {
        assert!(!ProtocolMessage::Pm6 { similarity: 1.0 }.valid_for(ProtocolId::PMatchPlus));
        assert!(!ProtocolMessage::EmReq.valid_for(ProtocolId::PMatch));
        assert!(!ProtocolMessage::Pm1 { pairs: vec![] }.valid_for(ProtocolId::EMatch));
        assert_eq!(
            ProtocolMessage::Pm1 {
                pairs: vec![(el(1), el(2))]
            }
            .group_elements(),
            2
        );
    }
}
