// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

use super::resources::Gazetteer;

/// Joins gazetteer entries into single `_`-separated tokens, scanning left to
/// right and taking the longest entry that starts at each position.
pub fn merge_entities(tokens: &[String], gazetteer: &Gazetteer) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let len = gazetteer.match_lengths(&tokens[i..]).next().unwrap_or(1);
        if len > 1 {
            out.push(tokens[i..i + len].join("_"));
        } else {
            out.push(tokens[i].clone());
        }
        i += len.max(1);
    }
    out
}

/// True for tokens produced by [`merge_entities`].
pub fn is_entity(token: &str) -> bool {
    token.contains('_') && !token.starts_with("TAG_") && token.split('_').all(|p| !p.is_empty())
}
