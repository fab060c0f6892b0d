// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! On-demand queries: submitted queries wait in a queue and run on a fixed
//! worker pool; status and results live in the results store.

use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crossbeam_channel::{unbounded, Receiver, Sender};

use super::results::{QueryRecord, QuerySummary, ResultsError, ResultsStore};
use super::{aggregate, Query, QueryError, QueryMode};
use crate::clock::SharedClock;
use crate::storage::Store;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error(transparent)]
    Invalid(#[from] QueryError),
    #[error(transparent)]
    Results(#[from] ResultsError),
}

struct Shared {
    store: Arc<Store>,
    results: Arc<ResultsStore>,
    clock: SharedClock,
    scanners: usize,
}

impl Shared {
    fn execute(&self, id: u64) {
        let record = match self.results.query_get(id) {
            Ok(Some(r)) => r,
            Ok(None) => return,
            Err(e) => {
                tracing::error!(query_id = id, error = %e, "cannot load query");
                return;
            }
        };
        if let Err(e) = self.results.query_set_running(id) {
            tracing::error!(query_id = id, error = %e, "cannot mark query running");
        }
        let outcome = aggregate(&self.store, &record.query, self.scanners);
        let now = self.clock.now_ms();
        let saved = match outcome {
            Ok(r) => self.results.query_complete(id, &r.windows, now),
            Err(e) => self.results.query_fail(id, &e.to_string(), now),
        };
        if let Err(e) = saved {
            tracing::error!(query_id = id, error = %e, "cannot persist query outcome");
        }
    }
}

pub struct QueryManager {
    shared: Arc<Shared>,
    queue: Option<Sender<u64>>,
    manual: Option<Receiver<u64>>,
    workers: Vec<JoinHandle<()>>,
}

impl QueryManager {
    /// Starts `workers` threads; queries left unfinished by an earlier
    /// process are queued again.
    pub fn new(
        store: Arc<Store>,
        results: Arc<ResultsStore>,
        clock: SharedClock,
        workers: usize,
        scanners: usize,
    ) -> Result<Self, ResultsError> {
        let mut m = Self::build(store, results, clock, scanners);
        let rx = m.manual.take().expect("fresh queue");
        for i in 0..workers.max(1) {
            let rx = rx.clone();
            let shared = Arc::clone(&m.shared);
            m.workers.push(
                thread::Builder::new()
                    .name(format!("query-worker-{i}"))
                    .spawn(move || {
                        for id in rx.iter() {
                            shared.execute(id);
                        }
                    })
                    .expect("spawn query worker"),
            );
        }
        m.requeue_unfinished()?;
        Ok(m)
    }

    /// No worker threads; queued queries run only in
    /// [`run_pending`](Self::run_pending).
    pub fn manual(store: Arc<Store>, results: Arc<ResultsStore>, clock: SharedClock, scanners: usize) -> Self {
        Self::build(store, results, clock, scanners)
    }

    fn build(store: Arc<Store>, results: Arc<ResultsStore>, clock: SharedClock, scanners: usize) -> Self {
        let (tx, rx) = unbounded();
        Self {
            shared: Arc::new(Shared {
                store,
                results,
                clock,
                scanners,
            }),
            queue: Some(tx),
            manual: Some(rx),
            workers: Vec::new(),
        }
    }

    fn requeue_unfinished(&self) -> Result<(), ResultsError> {
        for id in self.shared.results.unfinished_queries()? {
            self.enqueue(id);
        }
        Ok(())
    }

    fn enqueue(&self, id: u64) {
        if let Some(tx) = &self.queue {
            let _ = tx.send(id);
        }
    }

    pub fn submit(&self, mut query: Query) -> Result<u64, SubmitError> {
        query.validate()?;
        query.mode = QueryMode::Ondemand;
        let id = self.shared.results.query_insert(&query, self.shared.clock.now_ms())?;
        self.enqueue(id);
        Ok(id)
    }

    pub fn status(&self, id: u64) -> Result<Option<QueryRecord>, ResultsError> {
        self.shared.results.query_get(id)
    }

    pub fn search(&self, q: &str) -> Result<Vec<QuerySummary>, ResultsError> {
        self.shared.results.query_search(q)
    }

    /// Runs queued queries on the calling thread (manual mode only).
    pub fn run_pending(&self) -> usize {
        let Some(rx) = &self.manual else {
            return 0;
        };
        let mut n = 0;
        while let Ok(id) = rx.try_recv() {
            self.shared.execute(id);
            n += 1;
        }
        n
    }
}

impl Drop for QueryManager {
    fn drop(&mut self) {
        self.queue = None;
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
