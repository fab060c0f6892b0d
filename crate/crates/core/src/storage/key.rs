// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Bucket-salted row keys.
//!
//! Layout: `HH TTTTTTTT id...` where `HH` is the bucket as two lowercase hex
//! characters, `T` is the creation time as an 8-byte big-endian millisecond
//! count and the remainder is the post id. Byte order of encoded keys equals
//! the `(bucket, timestamp_ms, post_id)` tuple order.
//!
//! The bucket is `xxh64(post_id, seed = 0) mod B`, so it never depends on
//! time and is reproducible on every platform.

use std::fmt;

use xxhash_rust::xxh64::xxh64;

/// Largest bucket count representable by the two-hex-char prefix.
pub const MAX_BUCKETS: u32 = 256;

const PREFIX_LEN: usize = 2;
const TS_LEN: usize = 8;
const HEADER_LEN: usize = PREFIX_LEN + TS_LEN;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("bucket {bucket} out of range for {num_buckets} buckets")]
    BucketOutOfRange { bucket: u32, num_buckets: u32 },
    #[error("bucket count {0} must be in 1..=256")]
    InvalidBucketCount(u32),
    #[error("post id must be non-empty")]
    EmptyPostId,
    #[error("encoded key too short ({0} bytes)")]
    Truncated(usize),
    #[error("bucket prefix is not two lowercase hex characters")]
    BadPrefix,
    #[error("post id is not valid UTF-8")]
    BadPostId,
}

/// Stable bucket for a post id. Total on non-empty ids and `num_buckets >= 1`.
pub fn assign_bucket(post_id: &str, num_buckets: u32) -> u32 {
    debug_assert!(num_buckets >= 1);
    if num_buckets <= 1 {
        return 0;
    }
    (xxh64(post_id.as_bytes(), 0) % u64::from(num_buckets)) as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub bucket: u32,
    pub timestamp_ms: u64,
    pub post_id: String,
}

impl RowKey {
    pub fn new(bucket: u32, timestamp_ms: u64, post_id: impl Into<String>) -> Self {
        Self {
            bucket,
            timestamp_ms,
            post_id: post_id.into(),
        }
    }

    /// Builds the key a post lives under in a store with `num_buckets` buckets.
    pub fn for_post(post_id: &str, created_at: u64, num_buckets: u32) -> Self {
        Self::new(assign_bucket(post_id, num_buckets), created_at, post_id)
    }

    pub fn encode(&self, num_buckets: u32) -> Result<Vec<u8>, KeyError> {
        if num_buckets == 0 || num_buckets > MAX_BUCKETS {
            return Err(KeyError::InvalidBucketCount(num_buckets));
        }
        if self.bucket >= num_buckets {
            return Err(KeyError::BucketOutOfRange {
                bucket: self.bucket,
                num_buckets,
            });
        }
        if self.post_id.is_empty() {
            return Err(KeyError::EmptyPostId);
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.post_id.len());
        out.extend_from_slice(&bucket_prefix(self.bucket));
        out.extend_from_slice(&self.timestamp_ms.to_be_bytes());
        out.extend_from_slice(self.post_id.as_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, KeyError> {
        if bytes.len() <= HEADER_LEN {
            return Err(KeyError::Truncated(bytes.len()));
        }
        let bucket = (hex_value(bytes[0])? << 4) | hex_value(bytes[1])?;
        let mut ts = [0u8; TS_LEN];
        ts.copy_from_slice(&bytes[PREFIX_LEN..HEADER_LEN]);
        let post_id = std::str::from_utf8(&bytes[HEADER_LEN..]).map_err(|_| KeyError::BadPostId)?;
        Ok(Self {
            bucket,
            timestamp_ms: u64::from_be_bytes(ts),
            post_id: post_id.to_owned(),
        })
    }
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02x}:{}:{}", self.bucket, self.timestamp_ms, self.post_id)
    }
}

/// Two-byte prefix of every key in `bucket`.
pub fn bucket_prefix(bucket: u32) -> [u8; 2] {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    [HEX[(bucket >> 4) as usize & 0xf], HEX[bucket as usize & 0xf]]
}

/// Smallest encoded key in `bucket` at or after `timestamp_ms`.
pub(crate) fn lower_bound(bucket: u32, timestamp_ms: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(&bucket_prefix(bucket));
    out.extend_from_slice(&timestamp_ms.to_be_bytes());
    out
}

fn hex_value(c: u8) -> Result<u32, KeyError> {
    match c {
        b'0'..=b'9' => Ok(u32::from(c - b'0')),
        b'a'..=b'f' => Ok(u32::from(c - b'a' + 10)),
        _ => Err(KeyError::BadPrefix),
    }
}
