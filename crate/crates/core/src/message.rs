// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Payloads exchanged through the input and output buffers. Both are JSON
//! objects keyed in the buffer by `post_id`.

use serde::{Deserialize, Serialize};

use crate::polarity::Polarity;

/// Written by ingestion into the input buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputMessage {
    pub post_id: String,
    pub lang: String,
    pub text: String,
    pub created_at: u64,
}

/// Written by the classifier into the output buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputMessage {
    pub post_id: String,
    pub created_at: u64,
    pub polarity: Polarity,
    pub classified_at: u64,
    /// Set when classification failed and the neutral default was written.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

macro_rules! json_codec {
    ($t:ty) => {
        impl $t {
            pub fn to_bytes(&self) -> Vec<u8> {
                serde_json::to_vec(self).expect("message serializes")
            }

            pub fn from_bytes(bytes: &[u8]) -> Result<Self, serde_json::Error> {
                serde_json::from_slice(bytes)
            }
        }
    };
}

json_codec!(InputMessage);
json_codec!(OutputMessage);
