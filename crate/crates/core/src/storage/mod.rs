// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Embedded ordered post store.
//!
//! Every post lives under a bucket-salted [`RowKey`]. Each bucket keeps its
//! rows in an ordered map, so a time-range scan is a contiguous range read
//! per bucket and a global scan is a k-way merge of the bucket scans.
//! Mutations are appended to a segment log before they become visible; the
//! maps are rebuilt from the log on open.

mod key;
mod record;
pub mod segment;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

pub use key::{assign_bucket, bucket_prefix, KeyError, RowKey, MAX_BUCKETS};
pub use record::{PostRecord, RecordError};

use crate::polarity::Polarity;
use segment::{LogEntry, Manifest, Tail, FORMAT_VERSION, MANIFEST_FILE, SEGMENT_MAGIC};

pub const DEFAULT_BUCKETS: u32 = 16;
const DEFAULT_SEGMENT_BYTES: u64 = 64 << 20;

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error("invalid record: {0}")]
    Record(#[from] RecordError),
    #[error("no row for key {0}")]
    NotFound(RowKey),
    #[error("invalid time range [{start}, {end})")]
    Range { start: u64, end: u64 },
    #[error("configuration: {0}")]
    Config(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
}

pub type Result<T, E = StorageError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "ms")]
pub enum SyncPolicy {
    /// fsync after every mutation.
    Always,
    /// fsync at most once per interval (milliseconds); `flush` always syncs.
    Interval(u64),
    /// Only `flush` and segment rotation sync.
    Never,
}

impl Default for SyncPolicy {
    fn default() -> Self {
        SyncPolicy::Interval(1000)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageConfig {
    pub num_buckets: u32,
    pub data_dir: PathBuf,
    pub sync_policy: SyncPolicy,
    /// Active segment is rotated once it grows past this many bytes.
    pub segment_bytes: u64,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self {
            num_buckets: DEFAULT_BUCKETS,
            data_dir: PathBuf::from("data/posts"),
            sync_policy: SyncPolicy::default(),
            segment_bytes: DEFAULT_SEGMENT_BYTES,
        }
    }
}

impl StorageConfig {
    pub fn new(data_dir: impl Into<PathBuf>, num_buckets: u32) -> Self {
        Self {
            num_buckets,
            data_dir: data_dir.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_buckets == 0 || self.num_buckets > MAX_BUCKETS {
            return Err(KeyError::InvalidBucketCount(self.num_buckets).into());
        }
        if self.segment_bytes == 0 {
            return Err(StorageError::Config("segment_bytes must be positive".into()));
        }
        Ok(())
    }
}

type BucketMap = BTreeMap<Vec<u8>, Arc<PostRecord>>;

pub struct Store {
    num_buckets: u32,
    buckets: Vec<RwLock<BucketMap>>,
    wal: Option<Mutex<Wal>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("num_buckets", &self.num_buckets)
            .field("rows", &self.len())
            .field("durable", &self.wal.is_some())
            .finish()
    }
}

impl Store {
    /// A store without a log. Contents vanish on drop.
    pub fn in_memory(num_buckets: u32) -> Result<Self> {
        StorageConfig::new("", num_buckets).validate()?;
        Ok(Self {
            num_buckets,
            buckets: (0..num_buckets).map(|_| RwLock::new(BTreeMap::new())).collect(),
            wal: None,
        })
    }

    /// Opens (or creates) a durable store in `config.data_dir`.
    pub fn open(config: &StorageConfig) -> Result<Self> {
        config.validate()?;
        fs::create_dir_all(&config.data_dir)?;
        let manifest_path = config.data_dir.join(MANIFEST_FILE);
        let mut manifest = if manifest_path.exists() {
            let m = Manifest::parse(&fs::read(&manifest_path)?).map_err(StorageError::Corrupt)?;
            if m.num_buckets != config.num_buckets {
                return Err(StorageError::Config(format!(
                    "store was created with {} buckets, config asks for {}",
                    m.num_buckets, config.num_buckets
                )));
            }
            m
        } else {
            Manifest {
                format_version: FORMAT_VERSION,
                num_buckets: config.num_buckets,
                segments: Vec::new(),
            }
        };

        let mut store = Self::in_memory(config.num_buckets)?;
        for &id in &manifest.segments {
            let path = segment::segment_path(&config.data_dir, id);
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    return Err(StorageError::Corrupt(format!("segment {} missing", path.display())))
                }
                Err(e) => return Err(e.into()),
            };
            let decoded = segment::decode_segment(&bytes)
                .map_err(|e| StorageError::Corrupt(format!("{}: {e}", path.display())))?;
            if decoded.tail != Tail::Clean {
                tracing::warn!(segment = %path.display(), tail = ?decoded.tail, "truncating damaged segment tail");
                OpenOptions::new()
                    .write(true)
                    .open(&path)?
                    .set_len(decoded.valid_len as u64)?;
            }
            for entry in decoded.entries {
                store.apply(entry);
            }
        }

        let next_id = manifest.segments.last().map_or(1, |id| id + 1);
        let (writer, len) = Wal::create_segment(&config.data_dir, next_id)?;
        manifest.segments.push(next_id);
        write_manifest(&config.data_dir, &manifest)?;
        store.wal = Some(Mutex::new(Wal {
            dir: config.data_dir.clone(),
            manifest,
            writer,
            active_len: len,
            segment_bytes: config.segment_bytes,
            policy: config.sync_policy,
            last_sync: Instant::now(),
        }));
        Ok(store)
    }

    pub fn num_buckets(&self) -> u32 {
        self.num_buckets
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(|b| b.read().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bucket_len(&self, bucket: u32) -> usize {
        self.buckets.get(bucket as usize).map_or(0, |b| b.read().len())
    }

    pub fn key_for(&self, post_id: &str, created_at: u64) -> RowKey {
        RowKey::for_post(post_id, created_at, self.num_buckets)
    }

    /// Stores `record`. Re-putting an identical post is a no-op that keeps any
    /// polarity already recorded for it.
    pub fn put_post(&self, record: PostRecord) -> Result<RowKey> {
        record.validate()?;
        if let Some(p) = record.polarity {
            debug_assert!(Polarity::ALL.contains(&p));
        }
        let key = self.key_for(&record.post_id, record.created_at);
        let encoded = key.encode(self.num_buckets)?;
        let bucket = &self.buckets[key.bucket as usize];
        if let Some(existing) = bucket.read().get(&encoded) {
            if existing.same_content(&record) {
                return Ok(key);
            }
        }
        let record = Arc::new(record);
        match &self.wal {
            Some(wal) => {
                let mut wal = wal.lock();
                wal.append(&LogEntry::Put {
                    record: (*record).clone(),
                })?;
                bucket.write().insert(encoded, record);
            }
            None => {
                bucket.write().insert(encoded, record);
            }
        }
        Ok(key)
    }

    pub fn get(&self, key: &RowKey) -> Result<Option<Arc<PostRecord>>> {
        let encoded = key.encode(self.num_buckets)?;
        Ok(self.buckets[key.bucket as usize].read().get(&encoded).cloned())
    }

    /// Sets the polarity of an existing row; last write wins.
    pub fn update_polarity(&self, key: &RowKey, polarity: Polarity, classified_at: u64) -> Result<()> {
        let encoded = key.encode(self.num_buckets)?;
        let bucket = &self.buckets[key.bucket as usize];
        let update = |map: &mut BucketMap| -> Result<()> {
            let slot = map
                .get_mut(&encoded)
                .ok_or_else(|| StorageError::NotFound(key.clone()))?;
            let mut updated = (**slot).clone();
            updated.polarity = Some(polarity);
            updated.classified_at = Some(classified_at);
            *slot = Arc::new(updated);
            Ok(())
        };
        match &self.wal {
            Some(wal) => {
                let mut wal = wal.lock();
                if !bucket.read().contains_key(&encoded) {
                    return Err(StorageError::NotFound(key.clone()));
                }
                wal.append(&LogEntry::Polarity {
                    post_id: key.post_id.clone(),
                    created_at: key.timestamp_ms,
                    polarity,
                    classified_at,
                })?;
                update(&mut bucket.write())
            }
            None => update(&mut bucket.write()),
        }
    }

    /// Snapshot of the rows of one bucket with `created_at` in `[t_start, t_end)`,
    /// ordered by `(created_at, post_id)`.
    pub fn scan_bucket(&self, bucket: u32, t_start: u64, t_end: u64) -> Result<BucketScan> {
        check_range(t_start, t_end)?;
        if bucket >= self.num_buckets {
            return Err(KeyError::BucketOutOfRange {
                bucket,
                num_buckets: self.num_buckets,
            }
            .into());
        }
        let lo = key::lower_bound(bucket, t_start);
        let hi = key::lower_bound(bucket, t_end);
        let rows: Vec<Arc<PostRecord>> = if t_start == t_end {
            Vec::new()
        } else {
            self.buckets[bucket as usize]
                .read()
                .range(lo..hi)
                .map(|(_, v)| Arc::clone(v))
                .collect()
        };
        Ok(BucketScan {
            rows: rows.into_iter(),
        })
    }

    /// All rows with `created_at` in `[t_start, t_end)`, merged across buckets
    /// into `(created_at, post_id)` order.
    pub fn scan_range(&self, t_start: u64, t_end: u64) -> Result<MergeScan> {
        let scans = (0..self.num_buckets)
            .map(|b| self.scan_bucket(b, t_start, t_end))
            .collect::<Result<Vec<_>>>()?;
        Ok(MergeScan::new(scans))
    }

    /// Flushes buffered log writes and fsyncs the active segment.
    pub fn flush(&self) -> Result<()> {
        if let Some(wal) = &self.wal {
            wal.lock().sync()?;
        }
        Ok(())
    }

    /// Rewrites the live rows into a single fresh segment and drops the old
    /// ones.
    pub fn compact(&self) -> Result<()> {
        let Some(wal) = &self.wal else {
            return Ok(());
        };
        let mut wal = wal.lock();
        wal.sync()?;
        let old = wal.manifest.segments.clone();
        let new_id = old.last().map_or(1, |id| id + 1);
        let (mut writer, mut len) = Wal::create_segment(&wal.dir, new_id)?;
        for bucket in &self.buckets {
            for record in bucket.read().values() {
                let frame = segment::encode_frame(&LogEntry::Put {
                    record: (**record).clone(),
                });
                writer.write_all(&frame)?;
                len += frame.len() as u64;
            }
        }
        writer.flush()?;
        writer.get_ref().sync_data()?;
        wal.manifest.segments = vec![new_id];
        write_manifest(&wal.dir, &wal.manifest)?;
        wal.writer = writer;
        wal.active_len = len;
        for id in old {
            let _ = fs::remove_file(segment::segment_path(&wal.dir, id));
        }
        Ok(())
    }

    fn apply(&mut self, entry: LogEntry) {
        match entry {
            LogEntry::Put { record } => {
                let key = self.key_for(&record.post_id, record.created_at);
                if let Ok(encoded) = key.encode(self.num_buckets) {
                    self.buckets[key.bucket as usize]
                        .get_mut()
                        .insert(encoded, Arc::new(record));
                }
            }
            LogEntry::Polarity {
                post_id,
                created_at,
                polarity,
                classified_at,
            } => {
                let key = self.key_for(&post_id, created_at);
                if let Ok(encoded) = key.encode(self.num_buckets) {
                    if let Some(slot) = self.buckets[key.bucket as usize].get_mut().get_mut(&encoded) {
                        let mut updated = (**slot).clone();
                        updated.polarity = Some(polarity);
                        updated.classified_at = Some(classified_at);
                        *slot = Arc::new(updated);
                    }
                }
            }
        }
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        if let Some(wal) = &self.wal {
            if let Err(e) = wal.lock().sync() {
                tracing::error!(error = %e, "failed to sync store on close");
            }
        }
    }
}

fn check_range(t_start: u64, t_end: u64) -> Result<()> {
    if t_start > t_end {
        return Err(StorageError::Range {
            start: t_start,
            end: t_end,
        });
    }
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    let bytes = serde_json::to_vec_pretty(manifest).map_err(|e| StorageError::Corrupt(e.to_string()))?;
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(MANIFEST_FILE))?;
    Ok(())
}

struct Wal {
    dir: PathBuf,
    manifest: Manifest,
    writer: BufWriter<File>,
    active_len: u64,
    segment_bytes: u64,
    policy: SyncPolicy,
    last_sync: Instant,
}

impl Wal {
    fn create_segment(dir: &Path, id: u64) -> Result<(BufWriter<File>, u64)> {
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(true)
            .write(true)
            .open(segment::segment_path(dir, id))?;
        file.write_all(SEGMENT_MAGIC)?;
        file.sync_data()?;
        Ok((BufWriter::new(file), SEGMENT_MAGIC.len() as u64))
    }

    fn append(&mut self, entry: &LogEntry) -> Result<()> {
        if self.active_len >= self.segment_bytes {
            self.rotate()?;
        }
        let frame = segment::encode_frame(entry);
        self.writer.write_all(&frame)?;
        self.active_len += frame.len() as u64;
        match self.policy {
            SyncPolicy::Always => self.sync()?,
            SyncPolicy::Interval(ms) => {
                if self.last_sync.elapsed() >= Duration::from_millis(ms) {
                    self.sync()?;
                }
            }
            SyncPolicy::Never => {}
        }
        Ok(())
    }

    fn rotate(&mut self) -> Result<()> {
        self.sync()?;
        let id = self.manifest.segments.last().map_or(1, |id| id + 1);
        let (writer, len) = Self::create_segment(&self.dir, id)?;
        self.manifest.segments.push(id);
        write_manifest(&self.dir, &self.manifest)?;
        self.writer = writer;
        self.active_len = len;
        Ok(())
    }

    fn sync(&mut self) -> Result<()> {
        self.writer.flush()?;
        self.writer.get_ref().sync_data()?;
        self.last_sync = Instant::now();
        Ok(())
    }
}

/// Rows of one bucket captured when the scan was created.
#[derive(Debug)]
pub struct BucketScan {
    rows: std::vec::IntoIter<Arc<PostRecord>>,
}

impl Iterator for BucketScan {
    type Item = Arc<PostRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.rows.next()
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.rows.size_hint()
    }
}

impl ExactSizeIterator for BucketScan {}

/// K-way merge over per-bucket scans.
#[derive(Debug)]
pub struct MergeScan {
    scans: Vec<BucketScan>,
    heap: BinaryHeap<Reverse<HeapItem>>,
}

#[derive(Debug)]
struct HeapItem {
    record: Arc<PostRecord>,
    source: usize,
}

impl HeapItem {
    fn sort_key(&self) -> (u64, &str, usize) {
        (self.record.created_at, &self.record.post_id, self.source)
    }
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.sort_key() == other.sort_key()
    }
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl MergeScan {
    fn new(mut scans: Vec<BucketScan>) -> Self {
        let mut heap = BinaryHeap::with_capacity(scans.len());
        for (source, scan) in scans.iter_mut().enumerate() {
            if let Some(record) = scan.next() {
                heap.push(Reverse(HeapItem { record, source }));
            }
        }
        Self { scans, heap }
    }
}

impl Iterator for MergeScan {
    type Item = Arc<PostRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let Reverse(HeapItem { record, source }) = self.heap.pop()?;
        if let Some(next) = self.scans[source].next() {
            self.heap.push(Reverse(HeapItem { record: next, source }));
        }
        Some(record)
    }
}
