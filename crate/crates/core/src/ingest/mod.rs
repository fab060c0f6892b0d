// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Crawler scheduling and post ingestion.
//!
//! Terms are split across spiders. Each spider walks its terms once per lap,
//! fetching from a [`PostSource`], and buffers what it gets until the buffer
//! reaches the spider's flush threshold
//! `min_buffer_size + buffer_step * spider_id`. The stagger spreads storage
//! writes of different spiders apart. A flush runs every buffered post
//! through [`Ingestor::ingest`], which drops source ids seen in the last
//! dedup TTL, stores new posts and queues them for classification.

mod source;

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

pub use source::{
    parse_replay_line, write_replay, PostSource, RawPost, RawPostError, ReplayLineError, ReplaySource,
    SourceError, SyntheticClass, SyntheticConfig, SyntheticError, SyntheticSource, DEFAULT_PER_CALL_CAP,
    DEFAULT_RECALL_INTERVAL_S, DEFAULT_TOPICS,
};

use crate::buffer::{BufferStore, DEDUP_SET, DEFAULT_DEDUP_TTL_S, INPUT_SET};
use crate::message::InputMessage;
use crate::storage::{PostRecord, StorageError, Store};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpiderConfig {
    pub num_spiders: usize,
    pub min_buffer_size: usize,
    pub buffer_step: usize,
    /// Passes over the term list; 0 runs until stopped or the source is
    /// exhausted.
    pub laps: u64,
    pub sleep_s: u64,
    pub langs: Vec<String>,
}

impl Default for SpiderConfig {
    fn default() -> Self {
        Self {
            num_spiders: 4,
            min_buffer_size: 100,
            buffer_step: 10,
            laps: 1,
            sleep_s: 0,
            langs: vec!["en".into()],
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("term list is empty")]
    NoTerms,
}

impl SpiderConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_spiders == 0 {
            return Err(ConfigError::NotPositive("num_spiders"));
        }
        if self.min_buffer_size == 0 {
            return Err(ConfigError::NotPositive("min_buffer_size"));
        }
        Ok(())
    }

    /// Buffer size at which spider `spider_id` flushes.
    pub fn flush_threshold(&self, spider_id: usize) -> usize {
        self.min_buffer_size + self.buffer_step * spider_id
    }
}

/// Splits `terms` into `num_spiders` contiguous chunks whose sizes differ by at
/// most one; earlier chunks get the extra terms.
pub fn partition_terms(terms: &[String], num_spiders: usize) -> Result<Vec<Vec<String>>, ConfigError> {
    if num_spiders == 0 {
        return Err(ConfigError::NotPositive("num_spiders"));
    }
    if terms.is_empty() {
        return Err(ConfigError::NoTerms);
    }
    let base = terms.len() / num_spiders;
    let extra = terms.len() % num_spiders;
    let mut out = Vec::with_capacity(num_spiders);
    let mut start = 0;
    for i in 0..num_spiders {
        let len = base + usize::from(i < extra);
        out.push(terms[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// Hands out internal post ids `{nonce}-{stream}-{counter}`.
#[derive(Debug)]
pub struct PostIdGenerator {
    prefix: String,
    next: AtomicU64,
}

impl PostIdGenerator {
    pub fn new(nonce: &str, stream: usize) -> Self {
        Self {
            prefix: format!("{nonce}-{stream}-"),
            next: AtomicU64::new(0),
        }
    }

    pub fn next_id(&self) -> String {
        let n = self.next.fetch_add(1, Ordering::Relaxed);
        format!("{}{n}", self.prefix)
    }
}

/// A random nonce distinguishing ids minted by different runs.
pub fn run_nonce() -> String {
    format!("{:08x}", rand::random::<u32>())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestOutcome {
    Ingested(String),
    Duplicate,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("invalid post: {0}")]
    Invalid(#[from] RawPostError),
    #[error("storage: {0}")]
    Storage(#[from] StorageError),
}

#[derive(Debug)]
pub struct Ingestor {
    store: Arc<Store>,
    buffers: Arc<BufferStore>,
    nonce: String,
    /// Id streams outlive single runs so repeated runs never reuse an id.
    streams: Mutex<HashMap<usize, Arc<PostIdGenerator>>>,
    dedup_ttl_s: u64,
}

impl Ingestor {
    pub fn new(store: Arc<Store>, buffers: Arc<BufferStore>, nonce: impl Into<String>) -> Self {
        let nonce = nonce.into();
        Self {
            streams: Mutex::new(HashMap::new()),
            nonce,
            store,
            buffers,
            dedup_ttl_s: DEFAULT_DEDUP_TTL_S,
        }
    }

    pub fn with_dedup_ttl(mut self, ttl_s: u64) -> Self {
        self.dedup_ttl_s = ttl_s;
        self
    }

    pub fn nonce(&self) -> &str {
        &self.nonce
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    /// The id generator for `stream`; spider `i` uses stream `i`.
    pub fn id_stream(&self, stream: usize) -> Arc<PostIdGenerator> {
        let mut streams = self.streams.lock();
        Arc::clone(
            streams
                .entry(stream)
                .or_insert_with(|| Arc::new(PostIdGenerator::new(&self.nonce, stream))),
        )
    }

    pub fn ingest(&self, raw: RawPost) -> Result<IngestOutcome, IngestError> {
        self.ingest_with(raw, &self.id_stream(0))
    }

    /// Ingests one post, minting its id from `ids`.
    pub fn ingest_with(&self, raw: RawPost, ids: &PostIdGenerator) -> Result<IngestOutcome, IngestError> {
        raw.validate()?;
        if !self
            .buffers
            .put_if_absent(DEDUP_SET, &raw.source_id, b"", self.dedup_ttl_s)
        {
            return Ok(IngestOutcome::Duplicate);
        }
        let post_id = ids.next_id();
        let record = PostRecord {
            post_id: post_id.clone(),
            source_id: raw.source_id.clone(),
            text: raw.text,
            lang: raw.lang,
            created_at: raw.created_at,
            author: raw.author,
            polarity: None,
            classified_at: None,
        };
        let message = InputMessage {
            post_id: post_id.clone(),
            lang: record.lang.clone(),
            text: record.text.clone(),
            created_at: record.created_at,
        };
        if let Err(e) = self.store.put_post(record) {
            // Forget the id so a retry is not mistaken for a duplicate.
            self.buffers.ack(DEDUP_SET, &[raw.source_id.as_str()]);
            return Err(e.into());
        }
        self.buffers.enqueue(INPUT_SET, &post_id, &message.to_bytes());
        Ok(IngestOutcome::Ingested(post_id))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub laps: u64,
    pub fetch_calls: u64,
    pub fetched: u64,
    pub ingested: u64,
    pub duplicates: u64,
    pub malformed: u64,
    pub source_errors: u64,
    pub storage_errors: u64,
    pub flushes: u64,
}

impl RunReport {
    pub fn merge(&mut self, other: &RunReport) {
        self.laps = self.laps.max(other.laps);
        self.fetch_calls += other.fetch_calls;
        self.fetched += other.fetched;
        self.ingested += other.ingested;
        self.duplicates += other.duplicates;
        self.malformed += other.malformed;
        self.source_errors += other.source_errors;
        self.storage_errors += other.storage_errors;
        self.flushes += other.flushes;
    }
}

/// One crawler worker.
pub struct Spider<'a> {
    pub id: usize,
    pub terms: &'a [String],
    pub source: &'a dyn PostSource,
    pub config: &'a SpiderConfig,
    pub ingestor: &'a Ingestor,
    pub stop: &'a AtomicBool,
}

impl Spider<'_> {
    pub fn run(&self) -> RunReport {
        let ids = self.ingestor.id_stream(self.id);
        let threshold = self.config.flush_threshold(self.id);
        let mut report = RunReport::default();
        let mut pending: Vec<RawPost> = Vec::with_capacity(threshold);
        let mut lap = 0;
        while !self.stop.load(Ordering::Relaxed) && (self.config.laps == 0 || lap < self.config.laps) {
            for term in self.terms {
                if self.stop.load(Ordering::Relaxed) {
                    break;
                }
                report.fetch_calls += 1;
                match self.source.fetch(term, &self.config.langs) {
                    Ok(posts) => {
                        report.fetched += posts.len() as u64;
                        pending.extend(posts);
                    }
                    Err(e) => {
                        tracing::warn!(spider = self.id, term, error = %e, "fetch failed, retrying next lap");
                        report.source_errors += 1;
                    }
                }
                if pending.len() >= threshold {
                    self.flush(&mut pending, &ids, &mut report);
                }
            }
            lap += 1;
            report.laps = lap;
            if self.source.is_exhausted() {
                break;
            }
            let more = self.config.laps == 0 || lap < self.config.laps;
            if more && self.config.sleep_s > 0 {
                sleep_unless_stopped(Duration::from_secs(self.config.sleep_s), self.stop);
            }
        }
        self.flush(&mut pending, &ids, &mut report);
        report
    }

    fn flush(&self, pending: &mut Vec<RawPost>, ids: &PostIdGenerator, report: &mut RunReport) {
        if pending.is_empty() {
            return;
        }
        report.flushes += 1;
        for raw in pending.drain(..) {
            match self.ingestor.ingest_with(raw, ids) {
                Ok(IngestOutcome::Ingested(_)) => report.ingested += 1,
                Ok(IngestOutcome::Duplicate) => report.duplicates += 1,
                Err(IngestError::Invalid(_)) => report.malformed += 1,
                Err(IngestError::Storage(e)) => {
                    tracing::error!(spider = self.id, error = %e, "storage write failed");
                    report.storage_errors += 1;
                }
            }
        }
    }
}

fn sleep_unless_stopped(total: Duration, stop: &AtomicBool) {
    let deadline = Instant::now() + total;
    while !stop.load(Ordering::Relaxed) {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        std::thread::sleep((deadline - now).min(Duration::from_millis(100)));
    }
}

/// Runs one spider.
pub fn run_spider(
    spider_id: usize,
    terms: &[String],
    source: &dyn PostSource,
    config: &SpiderConfig,
    ingestor: &Ingestor,
) -> RunReport {
    let stop = AtomicBool::new(false);
    Spider {
        id: spider_id,
        terms,
        source,
        config,
        ingestor,
        stop: &stop,
    }
    .run()
}

/// Partitions `terms`, runs `config.num_spiders` spiders on scoped threads and
/// merges their reports.
pub fn run_spiders(
    terms: &[String],
    source: &dyn PostSource,
    config: &SpiderConfig,
    ingestor: &Ingestor,
    stop: &AtomicBool,
) -> Result<RunReport, ConfigError> {
    config.validate()?;
    let parts = partition_terms(terms, config.num_spiders)?;
    let reports: Vec<RunReport> = std::thread::scope(|scope| {
        let handles: Vec<_> = parts
            .iter()
            .enumerate()
            .map(|(id, part)| {
                scope.spawn(move || {
                    Spider {
                        id,
                        terms: part,
                        source,
                        config,
                        ingestor,
                        stop,
                    }
                    .run()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("spider panicked")).collect()
    });
    let mut total = RunReport::default();
    for r in &reports {
        total.merge(r);
    }
    Ok(total)
}
