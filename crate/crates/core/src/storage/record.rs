// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::polarity::Polarity;

/// A stored post and its metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    /// Internal, node-unique id.
    pub post_id: String,
    /// Identifier assigned by the upstream source.
    pub source_id: String,
    pub text: String,
    pub lang: String,
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classified_at: Option<u64>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("post id is empty")]
    EmptyPostId,
    #[error("post text is empty")]
    EmptyText,
    #[error("created_at must be positive")]
    ZeroTimestamp,
}

impl PostRecord {
    /// An unclassified post without author.
    pub fn new(
        post_id: impl Into<String>,
        source_id: impl Into<String>,
        text: impl Into<String>,
        lang: impl Into<String>,
        created_at: u64,
    ) -> Self {
        Self {
            post_id: post_id.into(),
            source_id: source_id.into(),
            text: text.into(),
            lang: lang.into(),
            created_at,
            author: None,
            polarity: None,
            classified_at: None,
        }
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.post_id.is_empty() {
            return Err(RecordError::EmptyPostId);
        }
        if self.text.is_empty() {
            return Err(RecordError::EmptyText);
        }
        if self.created_at == 0 {
            return Err(RecordError::ZeroTimestamp);
        }
        Ok(())
    }

    /// True when `other` describes the same post content, ignoring
    /// classification results.
    pub(crate) fn same_content(&self, other: &PostRecord) -> bool {
        self.post_id == other.post_id
            && self.source_id == other.source_id
            && self.text == other.text
            && self.lang == other.lang
            && self.created_at == other.created_at
            && self.author == other.author
    }
}
