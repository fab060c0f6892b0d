// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Tab-separated language resources: polarity lexicon, named-entity
//! gazetteer and part-of-speech tag lexicon.
//!
//! Each file holds one entry per line, `tokens<TAB>label`. Blank lines and
//! lines starting with `#` are ignored.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

const BUNDLED_LEXICON: &str = include_str!("../../resources/lexicon.tsv");
const BUNDLED_GAZETTEER: &str = include_str!("../../resources/gazetteer.tsv");
const BUNDLED_TAGS: &str = include_str!("../../resources/tags.tsv");

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ResourceError {
    pub line: usize,
    pub message: String,
}

fn entries(text: &str) -> impl Iterator<Item = Result<(usize, &str, &str), ResourceError>> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            return None;
        }
        let mut parts = line.splitn(2, '\t');
        let tokens = parts.next().unwrap_or("").trim();
        let label = parts.next().map(str::trim);
        Some(match label {
            Some(label) if !tokens.is_empty() && !label.is_empty() => Ok((i + 1, tokens, label)),
            _ => Err(ResourceError {
                line: i + 1,
                message: "expected `tokens<TAB>label`".into(),
            }),
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexiconLabel {
    Positive,
    Negative,
}

impl FromStr for LexiconLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" | "pos" | "+" => Ok(LexiconLabel::Positive),
            "negative" | "neg" | "-" => Ok(LexiconLabel::Negative),
            other => Err(format!("unknown polarity label `{other}`")),
        }
    }
}

impl LexiconLabel {
    pub fn flipped(self) -> Self {
        match self {
            LexiconLabel::Positive => LexiconLabel::Negative,
            LexiconLabel::Negative => LexiconLabel::Positive,
        }
    }
}

/// Lowercase token to polarity label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lexicon {
    labels: BTreeMap<String, LexiconLabel>,
}

impl Lexicon {
    pub fn parse(text: &str) -> Result<Self, ResourceError> {
        let mut labels = BTreeMap::new();
        for entry in entries(text) {
            let (line, token, label) = entry?;
            let label: LexiconLabel = label.parse().map_err(|message| ResourceError { line, message })?;
            let token = token.to_lowercase();
            if token.contains(char::is_whitespace) {
                return Err(ResourceError {
                    line,
                    message: "lexicon entries are single tokens".into(),
                });
            }
            if let Some(prev) = labels.insert(token.clone(), label) {
                if prev != label {
                    return Err(ResourceError {
                        line,
                        message: format!("`{token}` listed as both positive and negative"),
                    });
                }
            }
        }
        Ok(Self { labels })
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, LexiconLabel)>,
        S: Into<String>,
    {
        Self {
            labels: pairs.into_iter().map(|(t, l)| (t.into().to_lowercase(), l)).collect(),
        }
    }

    /// Label of an already-lowercased token.
    pub fn label(&self, token: &str) -> Option<LexiconLabel> {
        self.labels.get(token).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, LexiconLabel)> {
        self.labels.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Multiword named entities, matched case-insensitively.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    /// First lowercase token to the token sequences starting with it,
    /// longest first.
    by_first: HashMap<String, Vec<Vec<String>>>,
    labels: HashMap<Vec<String>, String>,
}

impl Gazetteer {
    pub fn parse(text: &str) -> Result<Self, ResourceError> {
        let mut g = Gazetteer::default();
        for entry in entries(text) {
            let (_, tokens, label) = entry?;
            g.insert(tokens.split_whitespace().map(str::to_string).collect(), label);
        }
        Ok(g)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_GAZETTEER).expect("bundled gazetteer is valid")
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = &'a [&'a str]>) -> Self {
        let mut g = Gazetteer::default();
        for e in entries {
            g.insert(e.iter().map(|s| s.to_string()).collect(), "ENT");
        }
        g
    }

    fn insert(&mut self, tokens: Vec<String>, label: &str) {
        let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        if lower.is_empty() || self.labels.contains_key(&lower) {
            return;
        }
        let bucket = self.by_first.entry(lower[0].clone()).or_default();
        bucket.push(lower.clone());
        bucket.sort_by_key(|e| std::cmp::Reverse(e.len()));
        self.labels.insert(lower, label.to_string());
    }

    /// Lengths of entries matching `tokens` at its start, longest first.
    pub(crate) fn match_lengths<'a>(&'a self, tokens: &'a [String]) -> impl Iterator<Item = usize> + 'a {
        let first = tokens.first().map(|t| t.to_lowercase());
        first
            .and_then(|f| self.by_first.get(&f))
            .into_iter()
            .flatten()
            .filter(move |entry| {
                entry.len() <= tokens.len()
                    && entry.iter().zip(tokens).all(|(e, t)| t.to_lowercase() == *e)
            })
            .map(Vec::len)
    }

    pub fn label_of(&self, tokens: &[&str]) -> Option<&str> {
        let key: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        self.labels.get(&key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Most frequent Penn tag per lowercase token.
#[derive(Debug, Clone, Default)]
pub struct TagLexicon {
    tags: HashMap<String, String>,
}

impl TagLexicon {
    pub fn parse(text: &str) -> Result<Self, ResourceError> {
        let mut tags = HashMap::new();
        for entry in entries(text) {
            let (line, token, tag) = entry?;
            if !tag.chars().all(|c| c.is_ascii_uppercase() || c == '$') {
                return Err(ResourceError {
                    line,
                    message: format!("`{tag}` is not a Penn tag"),
                });
            }
            tags.insert(token.to_lowercase(), tag.to_string());
        }
        Ok(Self { tags })
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TAGS).expect("bundled tag lexicon is valid")
    }

    pub fn get(&self, lowercase_token: &str) -> Option<&str> {
        self.tags.get(lowercase_token).map(String::as_str)
    }
}
