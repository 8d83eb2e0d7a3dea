//! In-process wire format for weight exchange.
//!
//! ```text
//! b"RFEDMSG1" | version u16 | kind u8 | bytes_per_param u8 | sender u32
//! | round u32 | tensors u32 | values u64 | sha256(layout) [32]
//! | values (f32 or f64, little-endian)
//! ```
//!
//! The layout itself is not sent: both ends derive it from the shared
//! model config, and the digest guards against disagreement.

use radfed_autodiff::ParamId;
use sha2::{Digest, Sha256};

use super::FedError;
use crate::model::{LayoutEntry, WeightVector};

pub const HEADER_BYTES: usize = 64;
const MAGIC: &[u8; 8] = b"RFEDMSG1";
const VERSION: u16 = 1;
pub const SERVER_ID: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Broadcast = 1,
    Upload = 2,
}

/// An encoded message together with the layout it was encoded against.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    pub sender: u32,
    pub round: u32,
    pub layout: Vec<LayoutEntry>,
    pub bytes: Vec<u8>,
}

impl Message {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layout.iter().map(|e| e.id)
    }

    pub fn value_count(&self) -> usize {
        self.layout.iter().map(|e| e.len).sum()
    }
}

pub fn message_bytes(values: usize, bytes_per_param: usize) -> usize {
    HEADER_BYTES + values * bytes_per_param
}

pub fn layout_digest(layout: &[LayoutEntry]) -> [u8; 32] {
    let mut h = Sha256::new();
    for e in layout {
        h.update(e.id.0.to_le_bytes());
        h.update((e.offset as u64).to_le_bytes());
        h.update((e.len as u64).to_le_bytes());
    }
    h.finalize().into()
}

pub fn check_precision(bytes_per_param: usize) -> Result<(), FedError> {
    match bytes_per_param {
        4 | 8 => Ok(()),
        other => Err(FedError::Config(format!("bytes_per_param must be 4 or 8, got {other}"))),
    }
}

pub fn encode(
    kind: MessageKind,
    sender: u32,
    round: u32,
    wv: &WeightVector,
    bytes_per_param: usize,
) -> Result<Message, FedError> {
    check_precision(bytes_per_param)?;
    let mut bytes = Vec::with_capacity(message_bytes(wv.len(), bytes_per_param));
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.push(kind as u8);
    bytes.push(bytes_per_param as u8);
    bytes.extend_from_slice(&sender.to_le_bytes());
    bytes.extend_from_slice(&round.to_le_bytes());
    bytes.extend_from_slice(&(wv.layout.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(wv.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&layout_digest(&wv.layout));
    debug_assert_eq!(bytes.len(), HEADER_BYTES);
    if bytes_per_param == 4 {
        for v in &wv.values {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    } else {
        for v in &wv.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(Message { kind, sender, round, layout: wv.layout.clone(), bytes })
}

/// Decodes against the layout the receiver expects.
pub fn decode(bytes: &[u8], expected: &[LayoutEntry]) -> Result<WeightVector, FedError> {
    let bad = |m: &str| FedError::Message(m.to_string());
    if bytes.len() < HEADER_BYTES || &bytes[..8] != MAGIC {
        return Err(bad("not a weight message"));
    }
    if u16::from_le_bytes([bytes[8], bytes[9]]) != VERSION {
        return Err(bad("unsupported message version"));
    }
    let bpp = bytes[11] as usize;
    check_precision(bpp)?;
    let tensors = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
    let values = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
    let expected_values: usize = expected.iter().map(|e| e.len).sum();
    if tensors != expected.len() || values != expected_values || bytes[32..64] != layout_digest(expected) {
        return Err(FedError::LayoutMismatch("message layout differs from the receiver's".into()));
    }
    let payload = &bytes[HEADER_BYTES..];
    if payload.len() != values * bpp {
        return Err(bad("payload length disagrees with header"));
    }
    let values = if bpp == 4 {
        payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()
    } else {
        payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
    };
    Ok(WeightVector { values, layout: expected.to_vec() })
}

pub fn header_round(bytes: &[u8]) -> Option<u32> {
    (bytes.len() >= HEADER_BYTES).then(|| u32::from_le_bytes(bytes[16..20].try_into().unwrap()))
}
