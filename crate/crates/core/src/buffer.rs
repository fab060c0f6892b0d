// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! In-memory named sets with per-record TTL and lease-based delivery.
//!
//! Three sets are used by the rest of the system: [`DEDUP_SET`] remembers
//! source ids, [`INPUT_SET`] feeds the classifier and [`OUTPUT_SET`] holds
//! classification results until they are written back to storage.
//!
//! Delivery is at-least-once: [`BufferStore::poll_batch`] leases records to
//! the caller, and a record that is not [`ack`](BufferStore::ack)ed before its
//! lease runs out becomes pollable again.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::clock::SharedClock;

pub const DEDUP_SET: &str = "dedup";
pub const INPUT_SET: &str = "input";
pub const OUTPUT_SET: &str = "output";

/// Source ids are remembered for two days.
pub const DEFAULT_DEDUP_TTL_S: u64 = 172_800;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferRecord {
    pub key: String,
    pub value: Vec<u8>,
    pub inserted_at: u64,
    /// Zero means the record never expires.
    pub ttl_s: u64,
}

impl BufferRecord {
    pub fn is_expired(&self, now_ms: u64) -> bool {
        self.ttl_s > 0 && self.inserted_at.saturating_add(self.ttl_s.saturating_mul(1000)) < now_ms
    }
}

#[derive(Debug)]
struct Slot {
    record: BufferRecord,
    seq: u64,
    leased_until: Option<u64>,
}

#[derive(Debug, Default)]
struct NamedSet {
    default_ttl_s: u64,
    records: HashMap<String, Slot>,
    /// Pollable keys in arrival order. Entries whose seq no longer matches
    /// the slot are stale and skipped.
    ready: VecDeque<(String, u64)>,
    leases: BTreeMap<(u64, u64), String>,
    next_seq: u64,
}

impl NamedSet {
    fn insert(&mut self, record: BufferRecord) {
        self.next_seq += 1;
        let seq = self.next_seq;
        self.ready.push_back((record.key.clone(), seq));
        self.records.insert(
            record.key.clone(),
            Slot {
                record,
                seq,
                leased_until: None,
            },
        );
    }

    fn is_live(&self, key: &str, now: u64) -> bool {
        self.records.get(key).is_some_and(|s| !s.record.is_expired(now))
    }

    fn release_expired_leases(&mut self, now: u64) {
        while let Some(entry) = self.leases.first_entry() {
            let (deadline, seq) = *entry.key();
            if deadline > now {
                break;
            }
            let key = entry.remove();
            if let Some(slot) = self.records.get_mut(&key) {
                if slot.seq == seq && slot.leased_until == Some(deadline) {
                    slot.leased_until = None;
                    self.ready.push_front((key, seq));
                }
            }
        }
    }

    fn poll(&mut self, max_n: usize, lease_ms: u64, now: u64) -> Vec<BufferRecord> {
        self.release_expired_leases(now);
        let mut out = Vec::new();
        while out.len() < max_n {
            let Some((key, seq)) = self.ready.pop_front() else {
                break;
            };
            let Some(slot) = self.records.get_mut(&key) else {
                continue;
            };
            if slot.seq != seq || slot.leased_until.is_some() {
                continue;
            }
            if slot.record.is_expired(now) {
                self.records.remove(&key);
                continue;
            }
            let deadline = now.saturating_add(lease_ms);
            slot.leased_until = Some(deadline);
            self.leases.insert((deadline, seq), key);
            out.push(slot.record.clone());
        }
        out
    }

    fn sweep(&mut self, now: u64) -> usize {
        let before = self.records.len();
        self.records.retain(|_, s| !s.record.is_expired(now));
        let removed = before - self.records.len();
        if self.ready.len() > 2 * self.records.len() + 64 {
            let records = &self.records;
            self.ready
                .retain(|(k, seq)| records.get(k).is_some_and(|s| s.seq == *seq));
        }
        removed
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetStats {
    pub live: usize,
    pub leased: usize,
}

pub struct BufferStore {
    clock: SharedClock,
    sets: RwLock<HashMap<String, Arc<Mutex<NamedSet>>>>,
    arrivals: Mutex<u64>,
    arrived: Condvar,
}

impl std::fmt::Debug for BufferStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BufferStore")
            .field("sets", &self.sets.read().keys().collect::<Vec<_>>())
            .finish()
    }
}

impl BufferStore {
    pub fn new(clock: SharedClock) -> Self {
        Self {
            clock,
            sets: RwLock::new(HashMap::new()),
            arrivals: Mutex::new(0),
            arrived: Condvar::new(),
        }
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    fn set(&self, name: &str) -> Arc<Mutex<NamedSet>> {
        if let Some(set) = self.sets.read().get(name) {
            return Arc::clone(set);
        }
        Arc::clone(self.sets.write().entry(name.to_owned()).or_default())
    }

    fn existing(&self, name: &str) -> Option<Arc<Mutex<NamedSet>>> {
        self.sets.read().get(name).cloned()
    }

    fn notify(&self) {
        *self.arrivals.lock() += 1;
        self.arrived.notify_all();
    }

    /// TTL applied by [`enqueue`](Self::enqueue) on `set`.
    pub fn set_default_ttl(&self, set: &str, ttl_s: u64) {
        self.set(set).lock().default_ttl_s = ttl_s;
    }

    /// Inserts unless a live record with `key` exists. Returns whether the
    /// record was inserted.
    pub fn put_if_absent(&self, set: &str, key: &str, value: &[u8], ttl_s: u64) -> bool {
        let now = self.clock.now_ms();
        let set = self.set(set);
        let mut set = set.lock();
        if set.is_live(key, now) {
            return false;
        }
        set.insert(BufferRecord {
            key: key.to_owned(),
            value: value.to_vec(),
            inserted_at: now,
            ttl_s,
        });
        true
    }

    /// Inserts or replaces `key` and makes it pollable.
    pub fn enqueue(&self, set: &str, key: &str, value: &[u8]) {
        let now = self.clock.now_ms();
        {
            let set = self.set(set);
            let mut set = set.lock();
            let ttl_s = set.default_ttl_s;
            set.insert(BufferRecord {
                key: key.to_owned(),
                value: value.to_vec(),
                inserted_at: now,
                ttl_s,
            });
        }
        self.notify();
    }

    /// Leases up to `max_n` pollable records for `lease_s` seconds.
    pub fn poll_batch(&self, set: &str, max_n: usize, lease_s: u64) -> Vec<BufferRecord> {
        self.poll_batch_ms(set, max_n, lease_s.saturating_mul(1000))
    }

    pub fn poll_batch_ms(&self, set: &str, max_n: usize, lease_ms: u64) -> Vec<BufferRecord> {
        let max_n = max_n.max(1);
        let now = self.clock.now_ms();
        match self.existing(set) {
            Some(s) => s.lock().poll(max_n, lease_ms, now),
            None => Vec::new(),
        }
    }

    /// Like [`poll_batch`](Self::poll_batch) but waits up to `timeout` (real
    /// time) for records to arrive when none are pollable.
    pub fn poll_batch_wait(
        &self,
        set: &str,
        max_n: usize,
        lease_s: u64,
        timeout: Duration,
    ) -> Vec<BufferRecord> {
        let deadline = Instant::now() + timeout;
        loop {
            let mut arrivals = self.arrivals.lock();
            let seen = *arrivals;
            let batch = self.poll_batch(set, max_n, lease_s);
            if !batch.is_empty() {
                return batch;
            }
            let now = Instant::now();
            if now >= deadline {
                return batch;
            }
            // Re-check periodically so expiring leases are noticed too.
            let wait = (deadline - now).min(Duration::from_millis(50));
            if *arrivals == seen {
                self.arrived.wait_for(&mut arrivals, wait);
            }
        }
    }

    /// Permanently removes `keys`; unknown keys are ignored.
    pub fn ack<S: AsRef<str>>(&self, set: &str, keys: &[S]) {
        let Some(set) = self.existing(set) else {
            return;
        };
        let mut set = set.lock();
        for key in keys {
            set.records.remove(key.as_ref());
        }
    }

    /// Live record for `key`, without leasing it.
    pub fn get(&self, set: &str, key: &str) -> Option<BufferRecord> {
        let now = self.clock.now_ms();
        let set = self.existing(set)?;
        let set = set.lock();
        set.records
            .get(key)
            .filter(|s| !s.record.is_expired(now))
            .map(|s| s.record.clone())
    }

    pub fn stats(&self, set: &str) -> SetStats {
        let now = self.clock.now_ms();
        let Some(set) = self.existing(set) else {
            return SetStats::default();
        };
        let set = set.lock();
        let mut stats = SetStats::default();
        for slot in set.records.values().filter(|s| !s.record.is_expired(now)) {
            stats.live += 1;
            if slot.leased_until.is_some_and(|d| d > now) {
                stats.leased += 1;
            }
        }
        stats
    }

    pub fn len(&self, set: &str) -> usize {
        self.stats(set).live
    }

    /// Removes every record whose TTL has passed at `now_ms`.
    pub fn sweep_expired(&self, now_ms: u64) -> usize {
        let sets: Vec<_> = self.sets.read().values().cloned().collect();
        sets.iter().map(|s| s.lock().sweep(now_ms)).sum()
    }

    /// Writes all live records to `path` as JSON. Leases are not persisted.
    pub fn save_snapshot(&self, path: &Path) -> std::io::Result<()> {
        let now = self.clock.now_ms();
        let mut snapshot: BTreeMap<String, SnapshotSet> = BTreeMap::new();
        for (name, set) in self.sets.read().iter() {
            let set = set.lock();
            let mut records: Vec<(u64, BufferRecord)> = set
                .records
                .values()
                .filter(|s| !s.record.is_expired(now))
                .map(|s| (s.seq, s.record.clone()))
                .collect();
            records.sort_by_key(|(seq, _)| *seq);
            snapshot.insert(
                name.clone(),
                SnapshotSet {
                    default_ttl_s: set.default_ttl_s,
                    records: records.into_iter().map(|(_, r)| r).collect(),
                },
            );
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(&snapshot)?)?;
        fs::rename(tmp, path)
    }

    /// Loads a snapshot written by [`save_snapshot`](Self::save_snapshot),
    /// replacing same-key records.
    pub fn load_snapshot(&self, path: &Path) -> std::io::Result<usize> {
        let bytes = fs::read(path)?;
        let snapshot: BTreeMap<String, SnapshotSet> = serde_json::from_slice(&bytes)?;
        let mut loaded = 0;
        for (name, saved) in snapshot {
            let set = self.set(&name);
            let mut set = set.lock();
            set.default_ttl_s = saved.default_ttl_s;
            for record in saved.records {
                set.insert(record);
                loaded += 1;
            }
        }
        self.notify();
        Ok(loaded)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotSet {
    default_ttl_s: u64,
    records: Vec<BufferRecord>,
}
