//! Authenticated telemetry frames and the edge-side uploader.
//!
//! Frame layout (all integers little-endian):
//!
//! ```text
//! a5 5a | ver (1) | device_id (8) | seq (4) | len (2) | ciphertext (len) | tag (8)
//! ```
//!
//! The 17-byte header is the CCM associated data; the nonce is
//! `device_id ‖ seq` (12 bytes). The plaintext is the record's canonical JSON.

use std::path::Path;

use aes::Aes128;
use ccm::aead::{Aead, KeyInit, Payload};
use ccm::consts::{U12, U8};
use ccm::Ccm;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::arbitration::ModeId;

pub mod overheads;
pub mod uploader;

pub use overheads::{measure_encrypt_us, measure_overheads, measure_rtt_ms, LoopStats, Overheads, PAPER_OVERHEAD_MS};
pub use uploader::{
    FnTransport, HttpTransport, Transport, TransportError, UploadMetrics, UploadQueue, Uploader, BATCH_CADENCE_MS,
    DEFAULT_CADENCE_MS, QUEUE_CAPACITY,
};

pub const MAGIC: [u8; 2] = [0xA5, 0x5A];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 17;
pub const TAG_LEN: usize = 8;

type AesCcm = Ccm<Aes128, U8, U12>;

pub type Key = [u8; 16];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// One uploaded bundle of vitals, hazard flags, mode, and pose.
///
/// `fall` and `convulsion` travel as `0`/`1`; anything else fails to parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedRecord {
    /// Milliseconds (simulated or Unix time, depending on the producer).
    pub t: u64,
    pub hr: f64,
    pub spo2: f64,
    pub temp: f64,
    #[serde(serialize_with = "flag_out", deserialize_with = "flag_in")]
    pub fall: bool,
    #[serde(serialize_with = "flag_out", deserialize_with = "flag_in")]
    pub convulsion: bool,
    pub mode: ModeId,
    pub pose: Pose,
}

fn flag_out<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

fn flag_in<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    match u8::deserialize(d)? {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(serde::de::Error::custom(format!("flag must be 0 or 1, got {other}"))),
    }
}

impl FeedRecord {
    /// Compact JSON with lexicographically sorted keys.
    pub fn canonical_json(&self) -> Result<String, FrameError> {
        let finite = [self.hr, self.spo2, self.temp, self.pose.x, self.pose.y, self.pose.heading];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(FrameError::MalformedPayload("non-finite field".into()));
        }
        // serde_json's default map is a BTreeMap, so going through Value sorts keys
        let value = serde_json::to_value(self).map_err(|e| FrameError::MalformedPayload(e.to_string()))?;
        Ok(value.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("sequence number {seq} not above last used {last}")]
    SeqReuse { seq: u32, last: u32 },
    #[error("bad magic or version")]
    BadMagic,
    #[error("authentication failed")]
    AuthFailure,
    #[error("replayed frame: seq {seq} not above {last}")]
    Replay { seq: u32, last: u32 },
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("payload of {0} bytes exceeds the 16-bit length field")]
    PayloadTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub device_id: u64,
    pub seq: u32,
    pub payload_len: u16,
}

impl FrameHeader {
    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..2].copy_from_slice(&MAGIC);
        h[2] = VERSION;
        h[3..11].copy_from_slice(&self.device_id.to_le_bytes());
        h[11..15].copy_from_slice(&self.seq.to_le_bytes());
        h[15..17].copy_from_slice(&self.payload_len.to_le_bytes());
        h
    }

    fn nonce(self) -> [u8; 12] {
        let mut n = [0u8; 12];
        n[..8].copy_from_slice(&self.device_id.to_le_bytes());
        n[8..].copy_from_slice(&self.seq.to_le_bytes());
        n
    }
}

pub fn frame_len(payload_len: usize) -> usize {
    HEADER_LEN + payload_len + TAG_LEN
}

/// Parse the header without authenticating it. Only magic and version are checked.
pub fn peek_header(bytes: &[u8]) -> Result<FrameHeader, FrameError> {
    if bytes.len() < HEADER_LEN || bytes[..2] != MAGIC || bytes[2] != VERSION {
        return Err(FrameError::BadMagic);
    }
    Ok(FrameHeader {
        device_id: u64::from_le_bytes(bytes[3..11].try_into().expect("8 bytes")),
        seq: u32::from_le_bytes(bytes[11..15].try_into().expect("4 bytes")),
        payload_len: u16::from_le_bytes(bytes[15..17].try_into().expect("2 bytes")),
    })
}

/// Encrypt arbitrary plaintext into a frame. Callers own sequence discipline.
pub fn seal(plaintext: &[u8], key: &Key, device_id: u64, seq: u32) -> Result<Vec<u8>, FrameError> {
    let payload_len = u16::try_from(plaintext.len()).map_err(|_| FrameError::PayloadTooLarge(plaintext.len()))?;
    let header = FrameHeader { device_id, seq, payload_len };
    let aad = header.to_bytes();
    let cipher = AesCcm::new(key.into());
    let sealed = cipher
        .encrypt(&header.nonce().into(), Payload { msg: plaintext, aad: &aad })
        .expect("CCM encryption of a bounded payload cannot fail");
    let mut out = Vec::with_capacity(frame_len(plaintext.len()));
    out.extend_from_slice(&aad);
    out.extend_from_slice(&sealed);
    Ok(out)
}

/// Authenticate and decrypt a frame, returning its header and plaintext.
///
/// A length field that disagrees with the byte count is reported as an
/// authentication failure: the header is authenticated data, so a mismatch
/// means tampering or truncation.
pub fn open(bytes: &[u8], key: &Key) -> Result<(FrameHeader, Vec<u8>), FrameError> {
    let header = peek_header(bytes)?;
    if bytes.len() != frame_len(header.payload_len as usize) {
        return Err(FrameError::AuthFailure);
    }
    let cipher = AesCcm::new(key.into());
    let plain = cipher
        .decrypt(&header.nonce().into(), Payload { msg: &bytes[HEADER_LEN..], aad: &bytes[..HEADER_LEN] })
        .map_err(|_| FrameError::AuthFailure)?;
    Ok((header, plain))
}

/// Stateless encoding; see [`FrameEncoder`] for the sequence check.
pub fn encode_frame(record: &FeedRecord, key: &Key, device_id: u64, seq: u32) -> Result<Vec<u8>, FrameError> {
    seal(record.canonical_json()?.as_bytes(), key, device_id, seq)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrame {
    pub device_id: u64,
    pub seq: u32,
    pub record: FeedRecord,
}

/// Verify, decrypt, and check freshness against the last accepted `seq`.
pub fn decode_frame(bytes: &[u8], key: &Key, last_seq: Option<u32>) -> Result<DecodedFrame, FrameError> {
    let (header, plain) = open(bytes, key)?;
    if let Some(last) = last_seq {
        if header.seq <= last {
            return Err(FrameError::Replay { seq: header.seq, last });
        }
    }
    let record = serde_json::from_slice(&plain).map_err(|e| FrameError::MalformedPayload(e.to_string()))?;
    Ok(DecodedFrame { device_id: header.device_id, seq: header.seq, record })
}

/// Per-device encoder that refuses to reuse a nonce.
#[derive(Debug, Clone)]
pub struct FrameEncoder {
    key: Key,
    device_id: u64,
    last_seq: Option<u32>,
}

impl FrameEncoder {
    pub fn new(key: Key, device_id: u64) -> Self {
        Self { key, device_id, last_seq: None }
    }

    /// Continue after `last_seq`, e.g. when the receiver already holds frames from this device.
    pub fn resume(key: Key, device_id: u64, last_seq: Option<u32>) -> Self {
        Self { key, device_id, last_seq }
    }

    pub fn device_id(&self) -> u64 {
        self.device_id
    }

    pub fn last_seq(&self) -> Option<u32> {
        self.last_seq
    }

    pub fn encode(&mut self, record: &FeedRecord, seq: u32) -> Result<Vec<u8>, FrameError> {
        if let Some(last) = self.last_seq {
            if seq <= last {
                return Err(FrameError::SeqReuse { seq, last });
            }
        }
        let frame = encode_frame(record, &self.key, self.device_id, seq)?;
        self.last_seq = Some(seq);
        Ok(frame)
    }

    /// Encode with the next sequence number (starting at 1).
    pub fn encode_next(&mut self, record: &FeedRecord) -> Result<Vec<u8>, FrameError> {
        let seq = match self.last_seq {
            None => 1,
            Some(u32::MAX) => return Err(FrameError::SeqReuse { seq: u32::MAX, last: u32::MAX }),
            Some(s) => s + 1,
        };
        self.encode(record, seq)
    }
}

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("key must be 32 hex characters, got {0}")]
    Length(usize),
    #[error("key is not hex: {0}")]
    Hex(#[from] hex::FromHexError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn parse_key_hex(text: &str) -> Result<Key, KeyError> {
    let t = text.trim();
    if t.len() != 32 {
        return Err(KeyError::Length(t.len()));
    }
    let mut key = [0u8; 16];
    hex::decode_to_slice(t, &mut key)?;
    Ok(key)
}

pub fn read_key_file(path: &Path) -> Result<Key, KeyError> {
    parse_key_hex(&std::fs::read_to_string(path)?)
}

/// Known-answer vector as stored in the fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownAnswer {
    pub key: String,
    pub device_id: u64,
    pub seq: u32,
    /// UTF-8 plaintext.
    pub payload: String,
    pub frame_hex: String,
}

impl KnownAnswer {
    pub fn bundled() -> Vec<KnownAnswer> {
        serde_json::from_str(include_str!("../../fixtures/frame_vectors.json")).expect("bundled vectors parse")
    }

    pub fn key(&self) -> Result<Key, KeyError> {
        parse_key_hex(&self.key)
    }
}
