// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Per-language text pipeline: seven stages from raw text to polarity.
//!
//! [`Stage::apply`] is the only place stage logic lives. The serial path
//! ([`LanguagePipeline::classify_text`]) and the threaded
//! [`topology`] both call it, so they agree on every post.

pub mod model;
pub mod ner;
pub mod resources;
pub mod tagger;
pub mod text;
pub mod topology;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use model::{extract_features, Features, ModelError, NbModel};
use resources::{Gazetteer, Lexicon, TagLexicon};

use crate::polarity::Polarity;

pub const DEFAULT_LANG: &str = "en";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Sentences,
    Normalizer,
    Tokens,
    Splits,
    Ner,
    Tagger,
    Polarity,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Sentences,
        Stage::Normalizer,
        Stage::Tokens,
        Stage::Splits,
        Stage::Ner,
        Stage::Tagger,
        Stage::Polarity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Sentences => "sentences",
            Stage::Normalizer => "normalizer",
            Stage::Tokens => "tokens",
            Stage::Splits => "splits",
            Stage::Ner => "ner",
            Stage::Tagger => "tagger",
            Stage::Polarity => "polarity",
        }
    }

    /// Runs this stage on `doc`.
    pub fn apply(self, doc: &mut PipelineDoc, pipeline: &LanguagePipeline) {
        if let Some(fault) = &pipeline.fault {
            if fault(self, doc) {
                panic!("injected fault in stage {} for {}", self.name(), doc.post_id);
            }
        }
        match self {
            Stage::Sentences => doc.sentence_text = text::split_sentences(&doc.text),
            Stage::Normalizer => {
                for s in &mut doc.sentence_text {
                    *s = text::normalize(s);
                }
            }
            Stage::Tokens => doc.sentences = doc.sentence_text.iter().map(|s| text::tokenize(s)).collect(),
            Stage::Splits => {
                for s in &mut doc.sentences {
                    *s = text::split_contractions(s);
                }
            }
            Stage::Ner => {
                for s in &mut doc.sentences {
                    *s = ner::merge_entities(s, &pipeline.gazetteer);
                }
                doc.entities = doc.sentences.iter().flatten().filter(|t| ner::is_entity(t)).cloned().collect();
            }
            Stage::Tagger => {
                doc.tagged = doc.sentences.iter().map(|s| tagger::pos_tag(s, &pipeline.tags)).collect();
            }
            Stage::Polarity => {
                let features = extract_features(&doc.tagged, pipeline.model.lexicon());
                doc.polarity = Some(pipeline.model.classify(&features));
            }
        }
    }
}

/// Intermediate artifacts of one post as it moves through the stages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineDoc {
    pub post_id: String,
    pub lang: String,
    pub created_at: u64,
    pub text: String,
    pub sentence_text: Vec<String>,
    /// Token lists, one per sentence.
    pub sentences: Vec<Vec<String>>,
    pub entities: Vec<String>,
    pub tagged: Vec<Vec<(String, &'static str)>>,
    pub polarity: Option<Polarity>,
}

impl PipelineDoc {
    pub fn new(post_id: impl Into<String>, lang: impl Into<String>, text: impl Into<String>, created_at: u64) -> Self {
        Self {
            post_id: post_id.into(),
            lang: lang.into(),
            text: text.into(),
            created_at,
            ..Default::default()
        }
    }
}

pub type FaultHook = Arc<dyn Fn(Stage, &PipelineDoc) -> bool + Send + Sync>;

/// Resources and model for one language stream.
#[derive(Clone)]
pub struct LanguagePipeline {
    lang: String,
    gazetteer: Arc<Gazetteer>,
    tags: Arc<TagLexicon>,
    model: Arc<NbModel>,
    fault: Option<FaultHook>,
}

impl fmt::Debug for LanguagePipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LanguagePipeline")
            .field("lang", &self.lang)
            .field("model", &self.model.version())
            .field("fault", &self.fault.is_some())
            .finish()
    }
}

impl LanguagePipeline {
    pub fn new(lang: impl Into<String>, gazetteer: Gazetteer, tags: TagLexicon, model: NbModel) -> Self {
        Self {
            lang: lang.into(),
            gazetteer: Arc::new(gazetteer),
            tags: Arc::new(tags),
            model: Arc::new(model),
            fault: None,
        }
    }

    /// English with the bundled gazetteer and tag lexicon.
    pub fn english(model: NbModel) -> Self {
        Self::new("en", Gazetteer::bundled(), TagLexicon::bundled(), model)
    }

    /// Makes [`Stage::apply`] panic whenever `hook` returns true. Test aid.
    pub fn with_fault(mut self, hook: FaultHook) -> Self {
        self.fault = Some(hook);
        self
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn model(&self) -> &NbModel {
        &self.model
    }

    /// Runs every stage but the last.
    pub fn preprocess(&self, doc: &mut PipelineDoc) {
        for stage in &Stage::ALL[..6] {
            stage.apply(doc, self);
        }
    }

    pub fn features(&self, text: &str) -> Features {
        let mut doc = PipelineDoc::new("", self.lang.clone(), text, 0);
        self.preprocess(&mut doc);
        extract_features(&doc.tagged, self.model.lexicon())
    }

    /// Serial reference path through all seven stages.
    pub fn classify_text(&self, text: &str) -> Polarity {
        let mut doc = PipelineDoc::new("", self.lang.clone(), text, 0);
        self.run(&mut doc);
        doc.polarity.expect("polarity stage ran")
    }

    pub fn run(&self, doc: &mut PipelineDoc) {
        for stage in Stage::ALL {
            stage.apply(doc, self);
        }
    }
}

/// Trains a model on `(text, label)` pairs using the same preprocessing as
/// classification.
pub fn train_nb(corpus: &[(String, Polarity)], lexicon: Lexicon) -> Result<NbModel, ModelError> {
    // Preprocessing only needs resources, so a placeholder model carries the
    // lexicon through stages one to six.
    let placeholder = NbModel::from_probabilities("untrained", [0.2, 0.3, 0.5], [], lexicon.clone())?;
    let pipeline = LanguagePipeline::english(placeholder);
    let examples: Vec<_> = corpus.iter().map(|(text, label)| (pipeline.features(text), *label)).collect();
    NbModel::train(&examples, lexicon)
}

/// Accuracy of `train_nb` under k-fold cross-validation. Fold `f` holds the
/// documents whose index is congruent to `f` mod `folds`.
pub fn cross_validated_accuracy(
    corpus: &[(String, Polarity)],
    folds: usize,
    lexicon: &Lexicon,
) -> Result<f64, ModelError> {
    let folds = folds.max(2);
    let mut correct = 0usize;
    for f in 0..folds {
        let train: Vec<_> = corpus.iter().enumerate().filter(|(i, _)| i % folds != f).map(|(_, d)| d.clone()).collect();
        let pipeline = LanguagePipeline::english(train_nb(&train, lexicon.clone())?);
        correct += corpus
            .iter()
            .enumerate()
            .filter(|(i, (text, label))| i % folds == f && pipeline.classify_text(text) == *label)
            .count();
    }
    Ok(correct as f64 / corpus.len() as f64)
}

/// Accuracy of always predicting the most frequent label.
pub fn majority_baseline(corpus: &[(String, Polarity)]) -> f64 {
    let mut counts = [0usize; 3];
    for (_, label) in corpus {
        counts[label.index()] += 1;
    }
    counts.into_iter().max().unwrap_or(0) as f64 / corpus.len().max(1) as f64
}

/// Parses the labeled fixture format: `label<TAB>text` per line, label in
/// {-1, 0, 1}. Blank lines and `#` comments are skipped.
pub fn parse_labeled(text: &str) -> Result<Vec<(String, Polarity)>, resources::ResourceError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: &str| resources::ResourceError {
            line: i + 1,
            message: message.to_string(),
        };
        let (label, body) = line.split_once('\t').ok_or_else(|| err("expected `label<TAB>text`"))?;
        let label: i64 = label.trim().parse().map_err(|_| err("label is not an integer"))?;
        let label = Polarity::try_from(label).map_err(|e| err(&e.to_string()))?;
        out.push((body.to_string(), label));
    }
    Ok(out)
}

const BUNDLED_LABELED: &str = include_str!("../../resources/labeled.tsv");

/// The bundled 300-document English training fixture.
pub fn bundled_labeled() -> Vec<(String, Polarity)> {
    parse_labeled(BUNDLED_LABELED).expect("bundled fixture parses")
}

/// Routes documents to a language stream, falling back to a default.
#[derive(Debug, Clone)]
pub struct Router {
    pipelines: BTreeMap<String, LanguagePipeline>,
    default_lang: String,
}

impl Router {
    pub fn new(default: LanguagePipeline) -> Self {
        let default_lang = default.lang.clone();
        let mut pipelines = BTreeMap::new();
        pipelines.insert(default_lang.clone(), default);
        Self { pipelines, default_lang }
    }

    pub fn with(mut self, pipeline: LanguagePipeline) -> Self {
        self.pipelines.insert(pipeline.lang.clone(), pipeline);
        self
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.pipelines.keys().map(String::as_str)
    }

    pub fn route(&self, lang: &str) -> &LanguagePipeline {
        self.pipelines.get(lang).unwrap_or(&self.pipelines[&self.default_lang])
    }

    pub fn get(&self, lang: &str) -> Option<&LanguagePipeline> {
        self.pipelines.get(lang)
    }
}
