// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Post sources the spiders pull from.
//!
//! A source answers per-term searches the way a rate-limited public search
//! endpoint does: at most `per_call_cap` posts per call, and the same sample
//! for every caller within one `min_recall_interval_s` window.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::SharedClock;
use crate::pipeline::resources::{Lexicon, LexiconLabel};

pub const DEFAULT_PER_CALL_CAP: usize = 20;
pub const DEFAULT_RECALL_INTERVAL_S: u64 = 20;

/// A post as delivered by a source, before it gets an internal id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub source_id: String,
    pub text: String,
    pub lang: String,
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RawPostError {
    #[error("source_id is empty")]
    EmptySourceId,
    #[error("text is empty")]
    EmptyText,
    #[error("lang `{0}` is not a two or three letter code")]
    BadLang(String),
    #[error("created_at must be positive")]
    ZeroTimestamp,
}

impl RawPost {
    pub fn validate(&self) -> Result<(), RawPostError> {
        if self.source_id.is_empty() {
            return Err(RawPostError::EmptySourceId);
        }
        if self.text.trim().is_empty() {
            return Err(RawPostError::EmptyText);
        }
        let lang_ok = (2..=3).contains(&self.lang.len()) && self.lang.bytes().all(|b| b.is_ascii_lowercase());
        if !lang_ok {
            return Err(RawPostError::BadLang(self.lang.clone()));
        }
        if self.created_at == 0 {
            return Err(RawPostError::ZeroTimestamp);
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("source unavailable: {0}")]
    Unavailable(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub trait PostSource: Send + Sync {
    /// Up to [`per_call_cap`](Self::per_call_cap) posts matching `term` in one
    /// of `langs` (any language when `langs` is empty).
    fn fetch(&self, term: &str, langs: &[String]) -> Result<Vec<RawPost>, SourceError>;

    fn per_call_cap(&self) -> usize {
        DEFAULT_PER_CALL_CAP
    }

    fn min_recall_interval_s(&self) -> u64 {
        DEFAULT_RECALL_INTERVAL_S
    }

    /// True once the source will never return anything again.
    fn is_exhausted(&self) -> bool {
        false
    }
}

fn lang_allowed(lang: &str, langs: &[String]) -> bool {
    langs.is_empty() || langs.iter().any(|l| l == lang)
}

/// Topic keywords the synthetic source talks about.
pub const DEFAULT_TOPICS: &[&str] = &[
    "super bowl",
    "trump",
    "travel ban",
    "weather",
    "coffee",
    "election",
    "netflix",
    "iphone",
    "football",
    "pizza",
    "stock market",
    "climate",
    "concert",
    "airline",
    "vaccine",
    "bitcoin",
];

const FILLER: &[&str] = &[
    "just", "today", "the", "this", "that", "about", "with", "my", "our", "new", "news", "people",
    "everyone", "again", "right", "now", "tonight", "morning", "week", "thing", "watching",
    "reading", "talking", "think", "really", "so", "at", "in", "on", "for", "from", "and", "update",
    "story", "time", "city", "friends", "work", "after", "before", "game", "photo", "video",
    "thread", "check", "out", "still", "here", "there", "what", "going",
];

const NEUTRAL_TAIL: &[&str] = &[
    "scheduled for monday",
    "report at noon",
    "details in the link",
    "according to the statement",
    "more information tomorrow",
    "live coverage starts at six",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticClass {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub rate_per_s: f64,
    pub topics: Vec<String>,
    /// In [-1, 1]. 1 makes every post positive, -1 every post negative and
    /// 0 splits evenly between positive, negative and neutral.
    pub sentiment_bias: f64,
    /// Publication time of the first post.
    pub start_ms: u64,
    pub lang: String,
    pub per_call_cap: usize,
    pub recall_interval_s: u64,
}

impl SyntheticConfig {
    pub fn new(seed: u64, rate_per_s: f64) -> Self {
        Self {
            seed,
            rate_per_s,
            topics: DEFAULT_TOPICS.iter().map(|s| s.to_string()).collect(),
            sentiment_bias: 0.0,
            start_ms: 1_486_000_000_000,
            lang: "en".into(),
            per_call_cap: DEFAULT_PER_CALL_CAP,
            recall_interval_s: DEFAULT_RECALL_INTERVAL_S,
        }
    }
}

/// Deterministic synthetic stream of posts published at a fixed rate.
///
/// Post `i` is published at `start_ms + floor(i * 1000 / rate)` and its
/// content is a pure function of `(seed, i)`. Posts are built from filler
/// words, one topic and, for opinionated posts, lexicon words of the post's
/// class, so a lexicon-aware classifier labels them predictably.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    config: Arc<SyntheticConfig>,
    positive: Arc<Vec<String>>,
    negative: Arc<Vec<String>>,
    clock: SharedClock,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SyntheticError {
    #[error("rate_per_s must be positive and finite")]
    BadRate,
    #[error("at least one topic is required")]
    NoTopics,
    #[error("sentiment_bias must lie in [-1, 1]")]
    BadBias,
}

impl SyntheticSource {
    pub fn new(config: SyntheticConfig, lexicon: &Lexicon, clock: SharedClock) -> Result<Self, SyntheticError> {
        if !(config.rate_per_s.is_finite() && config.rate_per_s > 0.0) {
            return Err(SyntheticError::BadRate);
        }
        if config.topics.is_empty() {
            return Err(SyntheticError::NoTopics);
        }
        if !(-1.0..=1.0).contains(&config.sentiment_bias) {
            return Err(SyntheticError::BadBias);
        }
        let pick = |label| {
            let mut words: Vec<String> = lexicon
                .entries()
                .filter(|(w, l)| *l == label && !w.contains('_'))
                .map(|(w, _)| w.to_string())
                .collect();
            words.sort();
            words
        };
        Ok(Self {
            positive: Arc::new(pick(LexiconLabel::Positive)),
            negative: Arc::new(pick(LexiconLabel::Negative)),
            config: Arc::new(config),
            clock,
        })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    /// Number of posts published strictly before `t_ms`.
    pub fn published_before(&self, t_ms: u64) -> u64 {
        if t_ms <= self.config.start_ms {
            return 0;
        }
        let elapsed = (t_ms - self.config.start_ms) as f64;
        (elapsed * self.config.rate_per_s / 1000.0).ceil() as u64
    }

    pub fn published_at(&self, index: u64) -> u64 {
        self.config.start_ms + ((index as f64) * 1000.0 / self.config.rate_per_s).floor() as u64
    }

    /// Every post published in `[from_ms, to_ms)`, in publication order.
    pub fn posts_between(&self, from_ms: u64, to_ms: u64) -> Vec<RawPost> {
        let lo = self.published_before(from_ms);
        let hi = self.published_before(to_ms);
        (lo..hi).map(|i| self.post(i)).collect()
    }

    pub fn topic_of(&self, index: u64) -> &str {
        let h = splitmix64(self.config.seed ^ splitmix64(index));
        &self.config.topics[(h % self.config.topics.len() as u64) as usize]
    }

    pub fn class_of(&self, index: u64) -> SyntheticClass {
        let mut rng = self.rng(index);
        self.draw_class(&mut rng)
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.config.seed.rotate_left(17) ^ index))
    }

    fn draw_class(&self, rng: &mut ChaCha8Rng) -> SyntheticClass {
        let bias = self.config.sentiment_bias;
        let u: f64 = rng.gen();
        let pos_forced = bias.max(0.0);
        let neg_forced = (-bias).max(0.0);
        if u < pos_forced {
            return SyntheticClass::Positive;
        }
        if u < pos_forced + neg_forced {
            return SyntheticClass::Negative;
        }
        match rng.gen_range(0..3) {
            0 => SyntheticClass::Positive,
            1 => SyntheticClass::Negative,
            _ => SyntheticClass::Neutral,
        }
    }

    /// The `index`-th published post.
    pub fn post(&self, index: u64) -> RawPost {
        let mut rng = self.rng(index);
        let class = self.draw_class(&mut rng);
        let topic = self.topic_of(index).to_string();
        let mut words: Vec<String> = Vec::with_capacity(16);
        for _ in 0..rng.gen_range(2..6) {
            words.push(FILLER.choose(&mut rng).unwrap().to_string());
        }
        words.push(topic);
        match class {
            SyntheticClass::Positive | SyntheticClass::Negative => {
                let pool = if class == SyntheticClass::Positive {
                    &self.positive
                } else {
                    &self.negative
                };
                words.push(["is", "was", "looks", "feels"].choose(&mut rng).unwrap().to_string());
                for _ in 0..rng.gen_range(1..3) {
                    words.push(pool.choose(&mut rng).unwrap().clone());
                }
                for _ in 0..rng.gen_range(0..3) {
                    words.push(FILLER.choose(&mut rng).unwrap().to_string());
                }
            }
            SyntheticClass::Neutral => {
                words.push(NEUTRAL_TAIL.choose(&mut rng).unwrap().to_string());
            }
        }
        let mut text = words.join(" ");
        text.push(if class == SyntheticClass::Neutral { '.' } else { '!' });
        RawPost {
            source_id: format!("syn-{:x}-{index}", self.config.seed),
            text,
            lang: self.config.lang.clone(),
            created_at: self.published_at(index),
            author: Some(format!("user{}", rng.gen_range(0..5000))),
        }
    }
}

impl PostSource for SyntheticSource {
    /// Returns the most recent posts about `term` published during the last
    /// complete recall window. Every call inside the same window sees the same
    /// sample.
    fn fetch(&self, term: &str, langs: &[String]) -> Result<Vec<RawPost>, SourceError> {
        if !lang_allowed(&self.config.lang, langs) {
            return Ok(Vec::new());
        }
        let interval_ms = self.config.recall_interval_s.max(1) * 1000;
        let window_end = self.clock.now_ms() / interval_ms * interval_ms;
        let window_start = window_end.saturating_sub(interval_ms);
        let lo = self.published_before(window_start);
        let hi = self.published_before(window_end);
        let mut out = Vec::new();
        let mut i = hi;
        while i > lo && out.len() < self.config.per_call_cap {
            i -= 1;
            if self.topic_of(i) == term {
                out.push(self.post(i));
            }
        }
        out.reverse();
        Ok(out)
    }

    fn per_call_cap(&self) -> usize {
        self.config.per_call_cap
    }

    fn min_recall_interval_s(&self) -> u64 {
        self.config.recall_interval_s
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReplayLineError {
    #[error("not a JSON record: {0}")]
    Syntax(String),
    #[error(transparent)]
    Invalid(#[from] RawPostError),
}

/// Parses one replay line: a JSON object with `source_id`, `text`, `lang`,
/// `created_at` (ms) and optional `author`.
pub fn parse_replay_line(line: &str) -> Result<RawPost, ReplayLineError> {
    let post: RawPost = serde_json::from_str(line).map_err(|e| ReplayLineError::Syntax(e.to_string()))?;
    post.validate()?;
    Ok(post)
}

/// Replays a line-delimited JSON corpus in file order, `per_call_cap`
/// records per fetch regardless of the term.
#[derive(Debug)]
pub struct ReplaySource {
    records: Vec<RawPost>,
    malformed: usize,
    cursor: Mutex<usize>,
    per_call_cap: usize,
}

impl ReplaySource {
    pub fn open(path: &Path) -> Result<Self, SourceError> {
        let text = fs::read_to_string(path)?;
        Ok(Self::from_text(&text))
    }

    pub fn from_text(text: &str) -> Self {
        let mut records = Vec::new();
        let mut malformed = 0;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match parse_replay_line(line) {
                Ok(post) => records.push(post),
                Err(e) => {
                    tracing::debug!(line = n + 1, error = %e, "skipping malformed replay line");
                    malformed += 1;
                }
            }
        }
        Self {
            records,
            malformed,
            cursor: Mutex::new(0),
            per_call_cap: DEFAULT_PER_CALL_CAP,
        }
    }

    pub fn with_per_call_cap(mut self, cap: usize) -> Self {
        self.per_call_cap = cap.max(1);
        self
    }

    pub fn records(&self) -> &[RawPost] {
        &self.records
    }

    pub fn malformed(&self) -> usize {
        self.malformed
    }
}

impl PostSource for ReplaySource {
    fn fetch(&self, _term: &str, langs: &[String]) -> Result<Vec<RawPost>, SourceError> {
        let mut cursor = self.cursor.lock();
        let mut out = Vec::new();
        while *cursor < self.records.len() && out.len() < self.per_call_cap {
            let post = &self.records[*cursor];
            *cursor += 1;
            if lang_allowed(&post.lang, langs) {
                out.push(post.clone());
            }
        }
        Ok(out)
    }

    fn per_call_cap(&self) -> usize {
        self.per_call_cap
    }

    fn min_recall_interval_s(&self) -> u64 {
        0
    }

    fn is_exhausted(&self) -> bool {
        *self.cursor.lock() >= self.records.len()
    }
}

/// Serializes posts in the replay format, one per line.
pub fn write_replay(posts: &[RawPost]) -> String {
    let mut out = String::new();
    for p in posts {
        out.push_str(&serde_json::to_string(p).expect("raw posts serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Clock, ManualClock};

    fn synthetic(seed: u64, rate: f64, bias: f64) -> (Arc<ManualClock>, SyntheticSource) {
        let clock = Arc::new(ManualClock::new(0));
        let mut cfg = SyntheticConfig::new(seed, rate);
        cfg.sentiment_bias = bias;
        let src = SyntheticSource::new(cfg, &Lexicon::bundled(), clock.clone()).unwrap();
        clock.set(src.config().start_ms);
        (clock, src)
    }

    #[test]
    fn same_seed_same_stream() {
        let (_, a) = synthetic(7, 50.0, 0.0);
        let (_, b) = synthetic(7, 50.0, 0.0);
        let t0 = a.config().start_ms;
        assert_eq!(a.posts_between(t0, t0 + 5_000), b.posts_between(t0, t0 + 5_000));
        let (_, c) = synthetic(8, 50.0, 0.0);
        assert_ne!(a.posts_between(t0, t0 + 5_000), c.posts_between(t0, t0 + 5_000));
    }

    #[test]
    fn rate_times_duration_posts() {
        let (clock, src) = synthetic(1, 100.0, 0.0);
        let t0 = clock.now_ms();
        clock.advance_secs(10);
        let n = src.posts_between(t0, clock.now_ms()).len() as i64;
        assert!((n - 1000).abs() <= 1, "got {n}");
        // Arbitrary offsets still tile without loss.
        let a = src.posts_between(t0 + 333, t0 + 4_777).len();
        let b = src.posts_between(t0 + 4_777, t0 + 9_001).len();
        assert_eq!(a + b, src.posts_between(t0 + 333, t0 + 9_001).len());
    }

    #[test]
    fn full_positive_bias_always_carries_positive_words() {
        let (_, src) = synthetic(3, 10.0, 1.0);
        let lex = Lexicon::bundled();
        for i in 0..500 {
            let p = src.post(i);
            let hit = p
                .text
                .split(|c: char| !c.is_alphanumeric())
                .any(|w| lex.label(&w.to_lowercase()) == Some(LexiconLabel::Positive));
            assert!(hit, "post {i} lacks positive words: {}", p.text);
        }
    }

    #[test]
    fn fetch_sample_is_stable_within_recall_window() {
        let (clock, src) = synthetic(5, 200.0, 0.0);
        clock.advance_secs(45);
        let a = src.fetch("coffee", &[]).unwrap();
        clock.advance_secs(5);
        let b = src.fetch("coffee", &[]).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty() && a.len() <= 20);
        assert!(a.iter().all(|p| p.text.contains("coffee")));
        clock.advance_secs(20);
        assert_ne!(src.fetch("coffee", &[]).unwrap(), a);
    }

    #[test]
    fn fetch_respects_lang_filter() {
        let (clock, src) = synthetic(5, 200.0, 0.0);
        clock.advance_secs(45);
        assert!(src.fetch("coffee", &["es".into()]).unwrap().is_empty());
        assert!(!src.fetch("coffee", &["en".into()]).unwrap().is_empty());
    }

    #[test]
    fn bad_synthetic_config_rejected() {
        let clock = crate::clock::system();
        let lex = Lexicon::bundled();
        assert_eq!(
            SyntheticSource::new(SyntheticConfig::new(1, 0.0), &lex, clock.clone()).unwrap_err(),
            SyntheticError::BadRate
        );
        let mut cfg = SyntheticConfig::new(1, 1.0);
        cfg.sentiment_bias = 1.5;
        assert_eq!(SyntheticSource::new(cfg, &lex, clock).unwrap_err(), SyntheticError::BadBias);
    }

    fn line(id: &str) -> String {
        format!(r#"{{"source_id":"{id}","text":"hello {id}","lang":"en","created_at":1000}}"#)
    }

    #[test]
    fn replay_three_lines() {
        let text = [line("a"), line("b"), line("c")].join("\n");
        let src = ReplaySource::from_text(&text);
        let got = src.fetch("ignored", &[]).unwrap();
        assert_eq!(got.iter().map(|p| p.source_id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert!(src.is_exhausted());
        assert!(src.fetch("ignored", &[]).unwrap().is_empty());
    }

    #[test]
    fn replay_empty_file_is_exhausted() {
        let src = ReplaySource::from_text("");
        assert!(src.is_exhausted());
        assert!(src.fetch("x", &[]).unwrap().is_empty());
    }

    #[test]
    fn replay_skips_and_counts_malformed() {
        let mut lines: Vec<String> = (0..9).map(|i| line(&format!("p{i}"))).collect();
        lines.insert(4, r#"{"source_id":"bad","text":"","lang":"en","created_at":5}"#.into());
        let src = ReplaySource::from_text(&lines.join("\n"));
        assert_eq!(src.records().len(), 9);
        assert_eq!(src.malformed(), 1);
    }

    #[test]
    fn replay_open_missing_file_is_io_error() {
        assert!(matches!(
            ReplaySource::open(Path::new("/definitely/not/here.jsonl")),
            Err(SourceError::Io(_))
        ));
    }

    #[test]
    fn replay_line_errors() {
        assert!(matches!(parse_replay_line("nope"), Err(ReplayLineError::Syntax(_))));
        assert_eq!(
            parse_replay_line(r#"{"source_id":"a","text":"x","lang":"EN","created_at":5}"#),
            Err(ReplayLineError::Invalid(RawPostError::BadLang("EN".into())))
        );
        assert_eq!(
            parse_replay_line(r#"{"source_id":"a","text":"x","lang":"en","created_at":0}"#),
            Err(ReplayLineError::Invalid(RawPostError::ZeroTimestamp))
        );
    }

    #[test]
    fn write_replay_round_trips() {
        let (_, src) = synthetic(9, 20.0, 0.0);
        let posts: Vec<_> = (0..25).map(|i| src.post(i)).collect();
        let replay = ReplaySource::from_text(&write_replay(&posts));
        assert_eq!(replay.records(), posts.as_slice());
    }
}
