// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Lexicon-plus-suffix part-of-speech tagger producing Penn tags.

use super::ner::is_entity;
use super::resources::TagLexicon;
use super::text::is_punctuation;

const SUFFIX_RULES: &[(&str, &str)] = &[
    ("ing", "VBG"),
    ("ed", "VBD"),
    ("ly", "RB"),
    ("ness", "NN"),
    ("ment", "NN"),
    ("tion", "NN"),
    ("ous", "JJ"),
    ("ful", "JJ"),
    ("able", "JJ"),
    ("ible", "JJ"),
    ("ive", "JJ"),
    ("less", "JJ"),
    ("est", "JJS"),
];

/// Tags one token; `sentence_initial` disables the capitalised-word rule.
pub fn tag_token(token: &str, lexicon: &TagLexicon, sentence_initial: bool) -> &'static str {
    if token.starts_with("TAG_") {
        return "SYM";
    }
    if is_punctuation(token) {
        return match token.chars().next() {
            Some('.' | '!' | '?') => ".",
            Some(',') => ",",
            Some(':' | ';') => ":",
            Some('(' | '[' | '{') => "(",
            Some(')' | ']' | '}') => ")",
            _ => "SYM",
        };
    }
    if is_entity(token) {
        return "NNP";
    }
    let lower = token.to_lowercase();
    if let Some(tag) = lexicon.get(&lower) {
        return intern(tag);
    }
    if token.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
        return "CD";
    }
    if !sentence_initial && is_title_case(token) {
        return "NNP";
    }
    if lower.len() > 4 {
        for (suffix, tag) in SUFFIX_RULES {
            if lower.ends_with(suffix) {
                return tag;
            }
        }
        if lower.ends_with('s') && !lower.ends_with("ss") {
            return "NNS";
        }
    }
    "NN"
}

/// `Zorbland` but not `ZORBLAND` or `zorbland`; shouting is not a name.
fn is_title_case(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next().is_some_and(char::is_uppercase) && chars.any(char::is_lowercase)
}

pub fn pos_tag(tokens: &[String], lexicon: &TagLexicon) -> Vec<(String, &'static str)> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), tag_token(t, lexicon, i == 0)))
        .collect()
}

pub fn is_proper_noun(tag: &str) -> bool {
    tag == "NNP" || tag == "NNPS"
}

fn intern(tag: &str) -> &'static str {
    const TAGS: &[&str] = &[
        "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS", "PDT", "POS",
        "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT",
        "WP", "WP$", "WRB",
    ];
    TAGS.iter().find(|t| **t == tag).copied().unwrap_or("NN")
}
