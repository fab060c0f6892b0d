// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Drains classifier results from the output buffer into storage.
//!
//! A record is acked only after its storage update succeeded. Transient
//! storage failures leave the record leased; it becomes pollable again when
//! the lease runs out. Records that can never be applied (undecodable
//! payload, post missing from storage) are acked and counted as failed.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::buffer::{BufferStore, OUTPUT_SET};
use crate::message::OutputMessage;
use crate::storage::{StorageError, Store};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorerConfig {
    pub batch_size: usize,
    pub poll_interval_ms: u64,
    pub lease_s: u64,
}

impl Default for StorerConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            poll_interval_ms: 200,
            lease_s: 30,
        }
    }
}

/// Where polarity updates go. [`Store`] is the production sink.
pub trait PolaritySink: Send + Sync {
    fn apply(&self, msg: &OutputMessage) -> Result<(), StorageError>;
}

impl PolaritySink for Store {
    fn apply(&self, msg: &OutputMessage) -> Result<(), StorageError> {
        let key = self.key_for(&msg.post_id, msg.created_at);
        self.update_polarity(&key, msg.polarity, msg.classified_at)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StorerStats {
    pub drained_total: u64,
    pub failed_total: u64,
}

#[derive(Debug, Default)]
struct Counters {
    drained: AtomicU64,
    failed: AtomicU64,
}

pub struct Storer {
    buffers: Arc<BufferStore>,
    sink: Arc<dyn PolaritySink>,
    config: StorerConfig,
    counters: Counters,
}

impl Storer {
    pub fn new(buffers: Arc<BufferStore>, sink: Arc<dyn PolaritySink>, config: StorerConfig) -> Self {
        Self {
            buffers,
            sink,
            config,
            counters: Counters::default(),
        }
    }

    pub fn stats(&self) -> StorerStats {
        StorerStats {
            drained_total: self.counters.drained.load(Ordering::Relaxed),
            failed_total: self.counters.failed.load(Ordering::Relaxed),
        }
    }

    /// Applies one batch; returns how many records were stored.
    pub fn drain_once(&self) -> usize {
        let batch = self
            .buffers
            .poll_batch(OUTPUT_SET, self.config.batch_size.max(1), self.config.lease_s);
        let mut done = Vec::with_capacity(batch.len());
        let mut updated = 0;
        for record in batch {
            let msg = match OutputMessage::from_bytes(&record.value) {
                Ok(msg) => msg,
                Err(e) => {
                    tracing::warn!(key = %record.key, error = %e, "discarding undecodable result");
                    self.counters.failed.fetch_add(1, Ordering::Relaxed);
                    done.push(record.key);
                    continue;
                }
            };
            match self.sink.apply(&msg) {
                Ok(()) => {
                    updated += 1;
                    done.push(record.key);
                }
                Err(StorageError::NotFound(key)) => {
                    tracing::warn!(post_id = %key.post_id, "result for unknown post");
                    self.counters.failed.fetch_add(1, Ordering::Relaxed);
                    done.push(record.key);
                }
                Err(e) => {
                    tracing::warn!(post_id = %msg.post_id, error = %e, "storage update failed, will retry");
                    self.counters.failed.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        self.buffers.ack(OUTPUT_SET, &done);
        self.counters.drained.fetch_add(updated as u64, Ordering::Relaxed);
        updated
    }

    /// Drains until the output buffer has nothing pollable.
    pub fn drain_all(&self) -> usize {
        let mut total = 0;
        loop {
            let n = self.drain_once();
            total += n;
            if n == 0 && self.buffers.stats(OUTPUT_SET).live == self.buffers.stats(OUTPUT_SET).leased {
                return total;
            }
        }
    }

    /// Runs [`drain_once`](Self::drain_once) every `poll_interval_ms`, or
    /// immediately again while batches come back full.
    pub fn run_loop(self: Arc<Self>) -> StorerHandle {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let storer = Arc::clone(&self);
        let thread = thread::Builder::new()
            .name("polarity-storer".into())
            .spawn(move || {
                let interval = Duration::from_millis(storer.config.poll_interval_ms);
                while !flag.load(Ordering::Acquire) {
                    let n = storer.drain_once();
                    if n < storer.config.batch_size {
                        park_until(&flag, interval);
                    }
                }
            })
            .expect("spawn storer thread");
        StorerHandle {
            stop,
            thread: Some(thread),
            storer: self,
        }
    }
}

fn park_until(flag: &AtomicBool, interval: Duration) {
    let deadline = std::time::Instant::now() + interval;
    while !flag.load(Ordering::Acquire) {
        let now = std::time::Instant::now();
        if now >= deadline {
            return;
        }
        thread::park_timeout(deadline - now);
    }
}

pub struct StorerHandle {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
    storer: Arc<Storer>,
}

impl StorerHandle {
    pub fn stats(&self) -> StorerStats {
        self.storer.stats()
    }

    pub fn stop(mut self) -> StorerStats {
        self.shutdown();
        self.storer.stats()
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(t) = self.thread.take() {
            t.thread().unpark();
            let _ = t.join();
        }
    }
}

impl Drop for StorerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}
