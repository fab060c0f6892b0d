// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Multinomial Naive Bayes over unigrams plus two lexicon count features.
//!
//! A document contributes every non-punctuation token (lowercased, except
//! semantic `TAG_*` tokens) and, for each polarity-lexicon hit, one
//! occurrence of [`LEX_POS_FEATURE`] or [`LEX_NEG_FEATURE`]. A negator flips
//! the lexicon label of the next [`NEGATION_SCOPE`] word tokens; punctuation
//! closes the scope. Proper nouns and merged entities never count as
//! lexicon hits.
//!
//! Likelihoods use Laplace smoothing with alpha = 1:
//! `P(f | c) = (count(f, c) + 1) / (total(c) + |V|)`. Features outside the
//! vocabulary are ignored. Ties between class scores resolve to 0, then +1,
//! then -1.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::ner::is_entity;
use super::resources::{Lexicon, LexiconLabel};
use super::tagger::is_proper_noun;
use super::text::{is_punctuation, TAG_NEG, TAG_POS};
use crate::polarity::Polarity;

pub const LEX_POS_FEATURE: &str = "__lex_pos__";
pub const LEX_NEG_FEATURE: &str = "__lex_neg__";
pub const NEGATION_SCOPE: usize = 2;
const NEGATORS: &[&str] = &["not", "no", "never", "nor", "cannot"];

pub const MODEL_FORMAT: &str = "sentiflow-nb";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Preference order when class scores are equal.
const TIE_ORDER: [Polarity; 3] = [Polarity::Neutral, Polarity::Positive, Polarity::Negative];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Features {
    pub tokens: Vec<String>,
    pub lex_pos: u32,
    pub lex_neg: u32,
}

impl Features {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty() && self.lex_pos == 0 && self.lex_neg == 0
    }

    /// Feature name to count, including the lexicon pseudo-features.
    pub fn counts(&self) -> BTreeMap<&str, u32> {
        let mut out: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &self.tokens {
            *out.entry(t.as_str()).or_default() += 1;
        }
        if self.lex_pos > 0 {
            out.insert(LEX_POS_FEATURE, self.lex_pos);
        }
        if self.lex_neg > 0 {
            out.insert(LEX_NEG_FEATURE, self.lex_neg);
        }
        out
    }
}

/// Builds classifier features from tagged sentences.
pub fn extract_features<T: AsRef<str>>(tagged: &[Vec<(String, T)>], lexicon: &Lexicon) -> Features {
    let mut features = Features::default();
    for sentence in tagged {
        let mut negated_left = 0usize;
        for (token, tag) in sentence {
            if is_punctuation(token) {
                negated_left = 0;
                continue;
            }
            let lower = if token.starts_with("TAG_") {
                token.clone()
            } else {
                token.to_lowercase()
            };
            let label = if lower == TAG_POS {
                Some(LexiconLabel::Positive)
            } else if lower == TAG_NEG {
                Some(LexiconLabel::Negative)
            } else if is_proper_noun(tag.as_ref()) || is_entity(token) {
                None
            } else {
                lexicon.label(&lower)
            };
            let label = match label {
                Some(l) if negated_left > 0 => Some(l.flipped()),
                other => other,
            };
            match label {
                Some(LexiconLabel::Positive) => features.lex_pos += 1,
                Some(LexiconLabel::Negative) => features.lex_neg += 1,
                None => {}
            }
            negated_left = negated_left.saturating_sub(1);
            if NEGATORS.contains(&lower.as_str()) {
                negated_left = NEGATION_SCOPE;
            }
            features.tokens.push(lower);
        }
    }
    features
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("training corpus has no example of class {0}")]
    MissingClass(Polarity),
    #[error("malformed model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    version: String,
    /// Natural-log priors indexed by [`Polarity::index`].
    log_priors: [f64; 3],
    log_likelihoods: HashMap<String, [f64; 3]>,
    lexicon: Lexicon,
}

impl NbModel {
    /// Builds a model from explicit probabilities. `likelihoods` maps a
    /// feature to `P(f | c)` per class index.
    pub fn from_probabilities(
        version: impl Into<String>,
        priors: [f64; 3],
        likelihoods: impl IntoIterator<Item = (String, [f64; 3])>,
        lexicon: Lexicon,
    ) -> Result<Self, ModelError> {
        let model = Self {
            version: version.into(),
            log_priors: priors.map(f64::ln),
            log_likelihoods: likelihoods.into_iter().map(|(k, v)| (k, v.map(f64::ln))).collect(),
            lexicon,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let sum: f64 = self.log_priors.iter().map(|l| l.exp()).sum();
        if !self.log_priors.iter().all(|l| l.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::Format(format!("priors must be positive and sum to 1, got {sum}")));
        }
        if let Some((f, _)) = self
            .log_likelihoods
            .iter()
            .find(|(_, v)| !v.iter().all(|l| l.is_finite() && *l <= 0.0))
        {
            return Err(ModelError::Format(format!("likelihood of `{f}` is not a probability")));
        }
        Ok(())
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn vocabulary_size(&self) -> usize {
        self.log_likelihoods.len()
    }

    pub fn prior(&self, class: Polarity) -> f64 {
        self.log_priors[class.index()].exp()
    }

    /// `P(feature | class)`, if the feature is in the vocabulary.
    pub fn likelihood(&self, feature: &str, class: Polarity) -> Option<f64> {
        self.log_likelihoods.get(feature).map(|l| l[class.index()].exp())
    }

    /// Unnormalised log posterior per class index.
    pub fn log_scores(&self, features: &Features) -> [f64; 3] {
        let mut scores = self.log_priors;
        for (feature, count) in features.counts() {
            if let Some(ll) = self.log_likelihoods.get(feature) {
                for c in 0..3 {
                    scores[c] += f64::from(count) * ll[c];
                }
            }
        }
        scores
    }

    /// Normalised class posteriors per class index.
    pub fn posterior(&self, features: &Features) -> [f64; 3] {
        let scores = self.log_scores(features);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps = scores.map(|s| (s - max).exp());
        let z: f64 = exps.iter().sum();
        exps.map(|e| e / z)
    }

    pub fn classify(&self, features: &Features) -> Polarity {
        if features.is_empty() {
            return Polarity::Neutral;
        }
        let scores = self.log_scores(features);
        let mut best = TIE_ORDER[0];
        for &class in &TIE_ORDER[1..] {
            if scores[class.index()] > scores[best.index()] {
                best = class;
            }
        }
        best
    }

    /// Trains from pre-extracted features.
    pub fn train(examples: &[(Features, Polarity)], lexicon: Lexicon) -> Result<Self, ModelError> {
        let mut docs = [0usize; 3];
        let mut totals = [0u64; 3];
        let mut counts: BTreeMap<String, [u64; 3]> = BTreeMap::new();
        for (features, class) in examples {
            let c = class.index();
            docs[c] += 1;
            for (f, n) in features.counts() {
                counts.entry(f.to_string()).or_default()[c] += u64::from(n);
                totals[c] += u64::from(n);
            }
        }
        for class in Polarity::ALL {
            if docs[class.index()] == 0 {
                return Err(ModelError::MissingClass(class));
            }
        }
        let n = examples.len() as f64;
        let vocab = counts.len() as f64;
        let mut log_likelihoods = HashMap::with_capacity(counts.len());
        let mut checksum: u64 = 0xcbf2_9ce4_8422_2325;
        for (f, per_class) in &counts {
            let mut ll = [0.0; 3];
            for c in 0..3 {
                ll[c] = ((per_class[c] as f64 + 1.0) / (totals[c] as f64 + vocab)).ln();
            }
            for b in f.bytes().chain(per_class.iter().flat_map(|x| x.to_le_bytes())) {
                checksum = (checksum ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
            }
            log_likelihoods.insert(f.clone(), ll);
        }
        let model = Self {
            version: format!("nb1-{}d-{}v-{:016x}", examples.len(), counts.len(), checksum),
            log_priors: docs.map(|d| (d as f64 / n).ln()),
            log_likelihoods,
            lexicon,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            format_version: MODEL_FORMAT_VERSION,
            model_version: self.version.clone(),
            classes: Polarity::ALL.map(|p| p.value()),
            log_priors: self.log_priors,
            log_likelihoods: self.log_likelihoods.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            lexicon: self.lexicon.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(ModelError::Format(format!("unexpected format `{}`", file.format)));
        }
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Format(format!("unsupported version {}", file.format_version)));
        }
        if file.classes != [-1, 0, 1] {
            return Err(ModelError::Format("classes must be [-1, 0, 1]".into()));
        }
        let model = Self {
            version: file.model_version,
            log_priors: file.log_priors,
            log_likelihoods: file.log_likelihoods.into_iter().collect(),
            lexicon: file.lexicon,
        };
        model.validate()?;
        Ok(model)
    }
}

/// On-disk model layout. Arrays are ordered by class `[-1, 0, 1]`.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    format_version: u32,
    model_version: String,
    classes: [i8; 3],
    log_priors: [f64; 3],
    log_likelihoods: BTreeMap<String, [f64; 3]>,
    lexicon: Lexicon,
}
