// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! On-disk log format.
//!
//! A store directory holds `MANIFEST.json` and numbered `NNNNNNNN.seg` files.
//! Each segment starts with the 8-byte magic `SFSEG001`, followed by frames:
//!
//! ```text
//! +------------+------------+------------------------+
//! | len: u32be | crc: u32be | payload (len bytes)    |
//! +------------+------------+------------------------+
//! ```
//!
//! `crc` is CRC-32 (IEEE) of the payload; the payload is a JSON [`LogEntry`].
//! Replay stops at the first torn or corrupt frame; everything before it is
//! kept.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::PostRecord;
use crate::polarity::Polarity;

pub const SEGMENT_MAGIC: &[u8; 8] = b"SFSEG001";
pub const MANIFEST_FILE: &str = "MANIFEST.json";
pub const FORMAT_VERSION: u32 = 1;
/// Frames larger than this are treated as corruption.
pub const MAX_FRAME_LEN: u32 = 16 << 20;
const FRAME_HEADER: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LogEntry {
    Put {
        record: PostRecord,
    },
    Polarity {
        post_id: String,
        created_at: u64,
        polarity: Polarity,
        classified_at: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub num_buckets: u32,
    pub segments: Vec<u64>,
}

impl Manifest {
    pub fn parse(bytes: &[u8]) -> Result<Manifest, String> {
        let m: Manifest = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        if m.format_version != FORMAT_VERSION {
            return Err(format!("unsupported format version {}", m.format_version));
        }
        if m.num_buckets == 0 || m.num_buckets > super::key::MAX_BUCKETS {
            return Err(format!("invalid bucket count {}", m.num_buckets));
        }
        Ok(m)
    }
}

pub fn segment_path(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("{id:08}.seg"))
}

pub fn encode_frame(entry: &LogEntry) -> Vec<u8> {
    let payload = serde_json::to_vec(entry).expect("log entries always serialize");
    let mut out = Vec::with_capacity(FRAME_HEADER + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&crc32fast::hash(&payload).to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Why replay of a segment stopped early.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tail {
    Clean,
    Torn { offset: usize },
    Corrupt { offset: usize, reason: String },
}

#[derive(Debug)]
pub struct Decoded {
    pub entries: Vec<LogEntry>,
    /// Length of the prefix made of the magic plus whole, valid frames.
    pub valid_len: usize,
    pub tail: Tail,
}

/// Decodes a whole segment file image. Never panics on arbitrary input.
pub fn decode_segment(bytes: &[u8]) -> Result<Decoded, String> {
    if bytes.len() < SEGMENT_MAGIC.len() || &bytes[..SEGMENT_MAGIC.len()] != SEGMENT_MAGIC {
        return Err("missing segment magic".into());
    }
    let mut entries = Vec::new();
    let mut pos = SEGMENT_MAGIC.len();
    let tail = loop {
        if pos == bytes.len() {
            break Tail::Clean;
        }
        if bytes.len() - pos < FRAME_HEADER {
            break Tail::Torn { offset: pos };
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap());
        let crc = u32::from_be_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
        if len > MAX_FRAME_LEN {
            break Tail::Corrupt {
                offset: pos,
                reason: format!("frame length {len} exceeds limit"),
            };
        }
        let start = pos + FRAME_HEADER;
        let end = start + len as usize;
        if end > bytes.len() {
            break Tail::Torn { offset: pos };
        }
        let payload = &bytes[start..end];
        if crc32fast::hash(payload) != crc {
            break Tail::Corrupt {
                offset: pos,
                reason: "checksum mismatch".into(),
            };
        }
        match serde_json::from_slice::<LogEntry>(payload) {
            Ok(entry) => entries.push(entry),
            Err(e) => {
                break Tail::Corrupt {
                    offset: pos,
                    reason: e.to_string(),
                }
            }
        }
        pos = end;
    };
    Ok(Decoded {
        entries,
        valid_len: pos,
        tail,
    })
}
