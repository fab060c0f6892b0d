// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Threaded streaming topology.
//!
//! One spout thread leases batches from the input buffer and routes each
//! document to its language stream. A stream is seven worker pools, one per
//! [`Stage`], joined by bounded channels so a slow stage blocks its
//! upstream. The last stage writes the result to the output buffer and only
//! then acks the input record.
//!
//! A stage panic marks the document as poisoned: it is written as neutral
//! with `flagged` set and acked, so one bad post cannot wedge the stream.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, Sender};
use serde::{Deserialize, Serialize};

use super::{LanguagePipeline, PipelineDoc, Router, Stage};
use crate::buffer::{BufferStore, INPUT_SET, OUTPUT_SET};
use crate::clock::SharedClock;
use crate::message::{InputMessage, OutputMessage};
use crate::polarity::Polarity;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Worker count per stage, in [`Stage::ALL`] order.
    pub hints: [usize; 7],
    pub queue_capacity: usize,
    pub batch_size: usize,
    pub lease_s: u64,
    /// How long the spout waits on an empty input buffer before re-checking
    /// the stop flag.
    pub idle_wait_ms: u64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            hints: [1, 1, 1, 1, 2, 6, 2],
            queue_capacity: 1024,
            batch_size: 256,
            lease_s: 30,
            idle_wait_ms: 50,
        }
    }
}

impl TopologyConfig {
    pub fn with_hints(hints: [usize; 7]) -> Self {
        Self {
            hints,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.hints.contains(&0) {
            return Err(TopologyError::Config("every parallelism hint must be at least 1".into()));
        }
        if self.queue_capacity == 0 || self.batch_size == 0 {
            return Err(TopologyError::Config("queue_capacity and batch_size must be positive".into()));
        }
        if self.lease_s == 0 {
            return Err(TopologyError::Config("lease_s must be positive".into()));
        }
        Ok(())
    }

    /// `1-1-1-1-2-6-2` style rendering.
    pub fn hint_string(&self) -> String {
        self.hints.map(|h| h.to_string()).join("-")
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("invalid topology config: {0}")]
    Config(String),
    #[error("failed to spawn worker: {0}")]
    Spawn(String),
}

#[derive(Debug, Default)]
pub struct TopologyStats {
    polled: AtomicU64,
    classified: AtomicU64,
    poisoned: AtomicU64,
    invalid: AtomicU64,
    dropped: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StatsSnapshot {
    pub polled: u64,
    pub classified: u64,
    pub poisoned: u64,
    pub invalid: u64,
    /// Documents discarded unacked by an abort.
    pub dropped: u64,
    pub in_flight: u64,
}

impl TopologyStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        // Read the finishing counters first so in_flight never underflows.
        let classified = self.classified.load(Ordering::Acquire);
        let poisoned = self.poisoned.load(Ordering::Acquire);
        let invalid = self.invalid.load(Ordering::Acquire);
        let dropped = self.dropped.load(Ordering::Acquire);
        let polled = self.polled.load(Ordering::Acquire);
        StatsSnapshot {
            polled,
            classified,
            poisoned,
            invalid,
            dropped,
            in_flight: polled.saturating_sub(classified + poisoned + invalid + dropped),
        }
    }
}

struct Envelope {
    key: String,
    doc: PipelineDoc,
}

/// Shared by the threaded and serial paths.
struct Sink {
    buffers: Arc<BufferStore>,
    clock: SharedClock,
    stats: Arc<TopologyStats>,
}

impl Sink {
    fn finish(&self, key: &str, doc: &PipelineDoc, polarity: Polarity, flagged: bool) {
        let out = OutputMessage {
            post_id: doc.post_id.clone(),
            created_at: doc.created_at,
            polarity,
            classified_at: self.clock.now_ms(),
            flagged,
        };
        self.buffers.enqueue(OUTPUT_SET, &out.post_id, &out.to_bytes());
        self.buffers.ack(INPUT_SET, &[key]);
        let counter = if flagged { &self.stats.poisoned } else { &self.stats.classified };
        counter.fetch_add(1, Ordering::AcqRel);
    }

    /// Decodes one leased input record; malformed payloads are acked and
    /// counted.
    fn admit(&self, key: String, value: &[u8]) -> Option<Envelope> {
        self.stats.polled.fetch_add(1, Ordering::AcqRel);
        match InputMessage::from_bytes(value) {
            Ok(msg) => Some(Envelope {
                key,
                doc: PipelineDoc::new(msg.post_id, msg.lang, msg.text, msg.created_at),
            }),
            Err(e) => {
                tracing::warn!(key = %key, error = %e, "dropping malformed input record");
                self.buffers.ack(INPUT_SET, &[key]);
                self.stats.invalid.fetch_add(1, Ordering::AcqRel);
                None
            }
        }
    }

    /// Applies one stage; on panic writes the poisoned default and returns
    /// false.
    fn step(&self, stage: Stage, env: &mut Envelope, pipeline: &LanguagePipeline) -> bool {
        match catch_unwind(AssertUnwindSafe(|| stage.apply(&mut env.doc, pipeline))) {
            Ok(()) => true,
            Err(_) => {
                tracing::error!(post_id = %env.doc.post_id, stage = stage.name(), "stage panicked, flagging post");
                self.finish(&env.key, &env.doc, Polarity::Neutral, true);
                false
            }
        }
    }
}

pub struct TopologyHandle {
    stop: Arc<AtomicBool>,
    abort: Arc<AtomicBool>,
    stats: Arc<TopologyStats>,
    threads: Vec<JoinHandle<()>>,
    hints: String,
}

impl TopologyHandle {
    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    pub fn hints(&self) -> &str {
        &self.hints
    }

    pub fn worker_count(&self) -> usize {
        self.threads.len()
    }

    /// Stops polling, lets in-flight documents finish, and joins.
    pub fn stop(mut self) -> StatsSnapshot {
        self.stop.store(true, Ordering::Release);
        self.join();
        self.stats.snapshot()
    }

    /// Simulates a crash: in-flight documents are discarded without writing
    /// output or acking, so their leases expire and they are redelivered.
    pub fn abort(mut self) -> StatsSnapshot {
        self.abort.store(true, Ordering::Release);
        self.stop.store(true, Ordering::Release);
        self.join();
        self.stats.snapshot()
    }

    fn join(&mut self) {
        for t in self.threads.drain(..) {
            if t.join().is_err() {
                tracing::error!("topology thread panicked outside a stage");
            }
        }
    }
}

impl Drop for TopologyHandle {
    fn drop(&mut self) {
        if !self.threads.is_empty() {
            self.stop.store(true, Ordering::Release);
            self.join();
        }
    }
}

pub fn run_topology(
    config: &TopologyConfig,
    router: Router,
    buffers: Arc<BufferStore>,
    clock: SharedClock,
) -> Result<TopologyHandle, TopologyError> {
    config.validate()?;
    let stats = Arc::new(TopologyStats::default());
    let stop = Arc::new(AtomicBool::new(false));
    let abort = Arc::new(AtomicBool::new(false));
    let sink = Arc::new(Sink {
        buffers: Arc::clone(&buffers),
        clock,
        stats: Arc::clone(&stats),
    });
    let mut threads = Vec::new();
    let mut entries: HashMap<String, Sender<Envelope>> = HashMap::new();

    for lang in router.languages() {
        let pipeline = router.get(lang).expect("listed language").clone();
        let (entry_tx, mut rx) = bounded::<Envelope>(config.queue_capacity);
        entries.insert(lang.to_string(), entry_tx);
        for (i, stage) in Stage::ALL.into_iter().enumerate() {
            let next = (i + 1 < Stage::ALL.len()).then(|| bounded::<Envelope>(config.queue_capacity));
            for w in 0..config.hints[i] {
                let worker = StageWorker {
                    stage,
                    rx: rx.clone(),
                    tx: next.as_ref().map(|(tx, _)| tx.clone()),
                    pipeline: pipeline.clone(),
                    sink: Arc::clone(&sink),
                    abort: Arc::clone(&abort),
                };
                let t = thread::Builder::new()
                    .name(format!("{lang}-{}-{w}", stage.name()))
                    .spawn(move || worker.run())
                    .map_err(|e| TopologyError::Spawn(e.to_string()))?;
                threads.push(t);
            }
            if let Some((_, next_rx)) = next {
                rx = next_rx;
            }
        }
    }

    let spout = Spout {
        router,
        entries,
        sink,
        stop: Arc::clone(&stop),
        batch_size: config.batch_size,
        lease_s: config.lease_s,
        idle_wait: Duration::from_millis(config.idle_wait_ms),
    };
    threads.push(
        thread::Builder::new()
            .name("spout".into())
            .spawn(move || spout.run())
            .map_err(|e| TopologyError::Spawn(e.to_string()))?,
    );

    Ok(TopologyHandle {
        stop,
        abort,
        stats,
        threads,
        hints: config.hint_string(),
    })
}

struct Spout {
    router: Router,
    entries: HashMap<String, Sender<Envelope>>,
    sink: Arc<Sink>,
    stop: Arc<AtomicBool>,
    batch_size: usize,
    lease_s: u64,
    idle_wait: Duration,
}

impl Spout {
    fn run(self) {
        while !self.stop.load(Ordering::Acquire) {
            let batch = self
                .sink
                .buffers
                .poll_batch_wait(INPUT_SET, self.batch_size, self.lease_s, self.idle_wait);
            for record in batch {
                let Some(env) = self.sink.admit(record.key, &record.value) else {
                    continue;
                };
                let lang = self.router.route(&env.doc.lang).lang();
                if self.entries[lang].send(env).is_err() {
                    return;
                }
            }
        }
        // Dropping the entry senders lets each stream drain and exit.
    }
}

struct StageWorker {
    stage: Stage,
    rx: Receiver<Envelope>,
    tx: Option<Sender<Envelope>>,
    pipeline: LanguagePipeline,
    sink: Arc<Sink>,
    abort: Arc<AtomicBool>,
}

impl StageWorker {
    fn run(self) {
        for mut env in self.rx.iter() {
            if self.abort.load(Ordering::Acquire) {
                self.sink.stats.dropped.fetch_add(1, Ordering::AcqRel);
                continue;
            }
            if !self.sink.step(self.stage, &mut env, &self.pipeline) {
                continue;
            }
            match &self.tx {
                Some(tx) => {
                    if tx.send(env).is_err() {
                        return;
                    }
                }
                None => {
                    let polarity = env.doc.polarity.expect("polarity stage sets polarity");
                    self.sink.finish(&env.key, &env.doc, polarity, false);
                }
            }
        }
    }
}

/// Single-threaded reference: drains the input buffer through all seven
/// stages on the calling thread, with the same output, ack and poison
/// handling as the topology.
pub fn drain_serial(
    router: &Router,
    buffers: Arc<BufferStore>,
    clock: SharedClock,
    batch_size: usize,
    lease_s: u64,
) -> StatsSnapshot {
    let stats = Arc::new(TopologyStats::default());
    let sink = Sink {
        buffers: Arc::clone(&buffers),
        clock,
        stats: Arc::clone(&stats),
    };
    loop {
        let batch = buffers.poll_batch(INPUT_SET, batch_size.max(1), lease_s);
        if batch.is_empty() {
            break;
        }
        for record in batch {
            let Some(mut env) = sink.admit(record.key, &record.value) else {
                continue;
            };
            let pipeline = router.route(&env.doc.lang);
            if Stage::ALL.into_iter().all(|stage| sink.step(stage, &mut env, pipeline)) {
                let polarity = env.doc.polarity.expect("polarity stage sets polarity");
                sink.finish(&env.key, &env.doc, polarity, false);
            }
        }
    }
    stats.snapshot()
}
