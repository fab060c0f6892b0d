// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Periodic aggregation of the keywords on the automated processing list.
//!
//! Each cycle covers whole windows only. For an entry, a cycle aggregates
//! `[start, end)` where `end` is `now` rounded down to the window size and
//! `start` is the previous `end` (or the window containing `added_at` on
//! the first run), so successive successful cycles tile time.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::results::{AplEntry, ResultsStore};
use super::{aggregate, average_polarity, AggregateResult, Query, QueryMode};
use crate::clock::SharedClock;
use crate::storage::Store;

pub const HOUR_MS: u64 = 3_600_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AplConfig {
    pub period_s: u64,
    pub window_ms: u64,
    pub scanners: usize,
}

impl Default for AplConfig {
    fn default() -> Self {
        Self {
            period_s: 300,
            window_ms: 300_000,
            scanners: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeywordRun {
    pub keyword: String,
    pub t_start: u64,
    pub t_end: u64,
    pub windows: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CycleReport {
    pub ran: Vec<KeywordRun>,
    pub failed: Vec<(String, String)>,
    /// Entries disabled or with no complete window yet.
    pub idle: Vec<String>,
}

/// The interval the next cycle at `now_ms` would cover for `entry`.
pub fn next_interval(entry: &AplEntry, window_ms: u64, now_ms: u64) -> Option<(u64, u64)> {
    let end = now_ms / window_ms * window_ms;
    let start = entry.last_run_at.unwrap_or(entry.added_at / window_ms * window_ms);
    (start < end).then_some((start, end))
}

pub struct AplRunner {
    store: Arc<Store>,
    results: Arc<ResultsStore>,
    config: AplConfig,
}

impl AplRunner {
    pub fn new(store: Arc<Store>, results: Arc<ResultsStore>, config: AplConfig) -> Self {
        Self { store, results, config }
    }

    pub fn config(&self) -> &AplConfig {
        &self.config
    }

    pub fn run_cycle(&self, now_ms: u64) -> CycleReport {
        let scanners = self.config.scanners;
        self.run_cycle_with(now_ms, |q| aggregate(&self.store, q, scanners).map_err(|e| e.to_string()))
    }

    /// Like [`run_cycle`](Self::run_cycle) with a caller-supplied executor.
    /// A failing keyword does not affect the others.
    pub fn run_cycle_with<F>(&self, now_ms: u64, exec: F) -> CycleReport
    where
        F: Fn(&Query) -> Result<AggregateResult, String>,
    {
        let mut report = CycleReport::default();
        let entries = match self.results.apl_all() {
            Ok(e) => e,
            Err(e) => {
                report.failed.push(("*".into(), e.to_string()));
                return report;
            }
        };
        for entry in entries {
            let interval = if entry.enabled {
                next_interval(&entry, self.config.window_ms, now_ms)
            } else {
                None
            };
            let Some((t_start, t_end)) = interval else {
                report.idle.push(entry.keyword);
                continue;
            };
            let query = Query {
                keyword: entry.keyword.clone(),
                t_start,
                t_end,
                lang: entry.lang.clone(),
                window_ms: self.config.window_ms,
                mode: QueryMode::Automated,
            };
            let outcome = exec(&query).and_then(|r| {
                self.results
                    .record_automated_run(&entry.keyword, &r.windows, t_end)
                    .map(|()| r.windows.len())
                    .map_err(|e| e.to_string())
            });
            match outcome {
                Ok(windows) => report.ran.push(KeywordRun {
                    keyword: entry.keyword,
                    t_start,
                    t_end,
                    windows,
                }),
                Err(e) => {
                    tracing::warn!(keyword = %entry.keyword, error = %e, "automated aggregation failed");
                    report.failed.push((entry.keyword, e));
                }
            }
        }
        report
    }

    /// Runs a cycle every `period_s` seconds of wall time until stopped.
    pub fn spawn(self: Arc<Self>, clock: SharedClock) -> AplHandle {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let period = Duration::from_secs(self.config.period_s.max(1));
        let thread = thread::Builder::new()
            .name("apl-scheduler".into())
            .spawn(move || {
                while !flag.load(Ordering::Acquire) {
                    let report = self.run_cycle(clock.now_ms());
                    tracing::info!(ran = report.ran.len(), failed = report.failed.len(), "apl cycle");
                    let deadline = Instant::now() + period;
                    while !flag.load(Ordering::Acquire) && Instant::now() < deadline {
                        thread::park_timeout(deadline.saturating_duration_since(Instant::now()));
                    }
                }
            })
            .expect("spawn apl scheduler");
        AplHandle {
            stop,
            thread: Some(thread),
        }
    }
}

pub struct AplHandle {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl AplHandle {
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(t) = self.thread.take() {
            t.thread().unpark();
            let _ = t.join();
        }
    }
}

impl Drop for AplHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendingEntry {
    pub keyword: String,
    pub lang: String,
    pub matches: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap: Option<f64>,
}

/// Top `n` APL keywords by matches in windows starting within the last hour,
/// descending, ties broken by keyword.
pub fn trending(results: &ResultsStore, n: usize, now_ms: u64) -> super::results::Result<Vec<TrendingEntry>> {
    let activity = results.activity_since(now_ms.saturating_sub(HOUR_MS))?;
    let langs: std::collections::HashMap<String, String> =
        results.apl_all()?.into_iter().map(|e| (e.keyword, e.lang)).collect();
    let mut ranked: Vec<TrendingEntry> = activity
        .into_iter()
        .map(|(keyword, t)| TrendingEntry {
            lang: langs.get(&keyword).cloned().unwrap_or_default(),
            keyword,
            matches: t.matches,
            ap: average_polarity(t.polarity_sum, t.matches),
        })
        .collect();
    ranked.sort_by(|a, b| b.matches.cmp(&a.matches).then_with(|| a.keyword.cmp(&b.keyword)));
    ranked.truncate(n);
    Ok(ranked)
}
