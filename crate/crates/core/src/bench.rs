// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Desk-scale benchmark harnesses for ingestion, the classification
//! topology and aggregation.

use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::aggregate::{aggregate, Query};
use crate::buffer::{BufferStore, INPUT_SET, OUTPUT_SET};
use crate::clock::{ManualClock, SharedClock};
use crate::ingest::{
    run_spiders, Ingestor, PostSource, SpiderConfig, SyntheticClass, SyntheticConfig, SyntheticSource, DEFAULT_TOPICS,
};
use crate::message::InputMessage;
use crate::pipeline::resources::Lexicon;
use crate::pipeline::topology::{run_topology, TopologyConfig};
use crate::pipeline::Router;
use crate::polarity::Polarity;
use crate::storage::{PostRecord, Store};

#[derive(Debug, Clone, Serialize)]
pub struct IngestRow {
    pub threads: usize,
    pub posts: u64,
    /// Stored posts per simulated second.
    pub simulated_rate: f64,
    pub wall_secs: f64,
    /// Stored posts per wall-clock second.
    pub wall_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestBenchReport {
    pub configured_rate: f64,
    pub duration_s: u64,
    pub rows: Vec<IngestRow>,
}

/// Crawls a seeded synthetic stream for `duration_s` simulated seconds once
/// per thread count. The clock advances one recall interval per lap, so
/// every published post is eligible for exactly one lap.
pub fn bench_ingest(rate: f64, duration_s: u64, threads: &[usize], seed: u64) -> Result<IngestBenchReport, String> {
    let terms: Vec<String> = DEFAULT_TOPICS.iter().map(|s| s.to_string()).collect();
    let lexicon = Lexicon::bundled();
    let mut rows = Vec::new();
    for &t in threads {
        let config = SyntheticConfig::new(seed, rate);
        let clock = Arc::new(ManualClock::new(config.start_ms));
        let shared: SharedClock = clock.clone();
        let source = SyntheticSource::new(config, &lexicon, shared.clone()).map_err(|e| e.to_string())?;
        let interval = source.min_recall_interval_s().max(1);
        let store = Arc::new(Store::in_memory(16).map_err(|e| e.to_string())?);
        let buffers = Arc::new(BufferStore::new(shared));
        let ingestor = Ingestor::new(store.clone(), buffers, format!("bench{t}"));
        let spiders = SpiderConfig {
            num_spiders: t.max(1),
            laps: 1,
            sleep_s: 0,
            ..SpiderConfig::default()
        };
        let stop = AtomicBool::new(false);
        let started = Instant::now();
        let mut posts = 0;
        let mut elapsed = 0;
        while elapsed < duration_s {
            clock.advance_secs(interval);
            elapsed += interval;
            posts += run_spiders(&terms, &source, &spiders, &ingestor, &stop)
                .map_err(|e| e.to_string())?
                .ingested;
        }
        let wall = started.elapsed().as_secs_f64();
        rows.push(IngestRow {
            threads: t,
            posts,
            simulated_rate: posts as f64 / elapsed.max(1) as f64,
            wall_secs: wall,
            wall_rate: posts as f64 / wall.max(1e-9),
        });
    }
    Ok(IngestBenchReport {
        configured_rate: rate,
        duration_s,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineBenchReport {
    pub hints: String,
    pub enqueued: u64,
    pub processed: u64,
    pub completion_pct: f64,
    pub elapsed_secs: f64,
}

/// Enqueues `load` synthetic posts, runs the topology for at most
/// `duration`, and reports the share classified in that time.
pub fn bench_pipeline(
    config: &TopologyConfig,
    router: Router,
    load: usize,
    duration: Duration,
    seed: u64,
) -> Result<PipelineBenchReport, String> {
    let clock: SharedClock = crate::clock::system();
    let buffers = Arc::new(BufferStore::new(clock.clone()));
    let source = SyntheticSource::new(SyntheticConfig::new(seed, 1000.0), &Lexicon::bundled(), clock.clone())
        .map_err(|e| e.to_string())?;
    for i in 0..load as u64 {
        let raw = source.post(i);
        let msg = InputMessage {
            post_id: format!("b{i}"),
            lang: raw.lang,
            text: raw.text,
            created_at: raw.created_at,
        };
        buffers.enqueue(INPUT_SET, &msg.post_id, &msg.to_bytes());
    }
    let started = Instant::now();
    let handle = run_topology(config, router, buffers.clone(), clock).map_err(|e| e.to_string())?;
    while started.elapsed() < duration && buffers.len(OUTPUT_SET) < load {
        std::thread::sleep(Duration::from_millis(5));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let processed = buffers.len(OUTPUT_SET) as u64;
    handle.abort();
    Ok(PipelineBenchReport {
        hints: config.hint_string(),
        enqueued: load as u64,
        processed,
        completion_pct: if load == 0 { 100.0 } else { 100.0 * processed as f64 / load as f64 },
        elapsed_secs: elapsed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyPoint {
    pub x: usize,
    pub median_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateBenchReport {
    pub parallel_queries: usize,
    pub by_size: Vec<LatencyPoint>,
    pub fit: Option<LinearFit>,
    pub by_scanners: Vec<LatencyPoint>,
    pub scanners_monotone: bool,
}

#[derive(Debug, Clone)]
pub struct AggregateBenchParams {
    pub sizes: Vec<usize>,
    pub scanner_counts: Vec<usize>,
    pub parallel_queries: usize,
    pub repeats: usize,
    pub num_buckets: u32,
    pub seed: u64,
}

impl Default for AggregateBenchParams {
    fn default() -> Self {
        Self {
            sizes: vec![20_000, 40_000, 60_000, 80_000, 100_000],
            scanner_counts: (1..=physical_cores()).collect(),
            parallel_queries: 1,
            repeats: 5,
            num_buckets: 16,
            seed: 7,
        }
    }
}

pub fn physical_cores() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Median wall time of `parallel` concurrent identical queries.
fn time_queries(store: &Store, query: &Query, scanners: usize, parallel: usize, repeats: usize) -> f64 {
    // Untimed warm-up so the first sample does not pay for cold caches.
    aggregate(store, query, scanners).expect("valid bench query");
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        let started = Instant::now();
        std::thread::scope(|s| {
            for _ in 0..parallel.max(1) {
                s.spawn(|| aggregate(store, query, scanners).expect("valid bench query"));
            }
        });
        samples.push(started.elapsed().as_secs_f64() * 1000.0);
    }
    median(samples)
}

/// Measures query latency against dataset size (store grown in place) and
/// against scanner count at the largest size.
pub fn bench_aggregate(params: &AggregateBenchParams) -> Result<AggregateBenchReport, String> {
    let clock: SharedClock = Arc::new(ManualClock::new(0));
    let config = SyntheticConfig::new(params.seed, 50.0);
    let source = SyntheticSource::new(config.clone(), &Lexicon::bundled(), clock).map_err(|e| e.to_string())?;
    let store = Store::in_memory(params.num_buckets).map_err(|e| e.to_string())?;
    let mut sizes = params.sizes.clone();
    sizes.sort_unstable();
    let max = sizes.last().copied().unwrap_or(0) as u64;
    let query = Query::new(
        DEFAULT_TOPICS[0],
        config.start_ms,
        source.published_at(max.max(1)) + 1,
        3_600_000.min(source.published_at(max.max(1)) + 1 - config.start_ms),
    );
    let scanners = physical_cores();
    let mut loaded = 0u64;
    let mut by_size = Vec::new();
    for &n in &sizes {
        while loaded < n as u64 {
            let raw = source.post(loaded);
            let mut rec = PostRecord::new(format!("a{loaded}"), raw.source_id, raw.text, raw.lang, raw.created_at);
            rec.polarity = Some(match source.class_of(loaded) {
                SyntheticClass::Positive => Polarity::Positive,
                SyntheticClass::Negative => Polarity::Negative,
                SyntheticClass::Neutral => Polarity::Neutral,
            });
            store.put_post(rec).map_err(|e| e.to_string())?;
            loaded += 1;
        }
        by_size.push(LatencyPoint {
            x: n,
            median_ms: time_queries(&store, &query, scanners, params.parallel_queries, params.repeats),
        });
    }
    let xs: Vec<f64> = by_size.iter().map(|p| p.x as f64).collect();
    let ys: Vec<f64> = by_size.iter().map(|p| p.median_ms).collect();
    let fit = linear_fit(&xs, &ys);
    let by_scanners: Vec<LatencyPoint> = params
        .scanner_counts
        .iter()
        .map(|&s| LatencyPoint {
            x: s,
            median_ms: time_queries(&store, &query, s, params.parallel_queries, params.repeats),
        })
        .collect();
    let scanners_monotone = by_scanners.windows(2).all(|w| w[1].median_ms <= w[0].median_ms);
    Ok(AggregateBenchReport {
        parallel_queries: params.parallel_queries,
        by_size,
        fit,
        by_scanners,
        scanners_monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{bundled_labeled, train_nb, LanguagePipeline};

    #[test]
    fn linear_fit_exact_line() {
        let f = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
        assert!(linear_fit(&[2.0, 2.0], &[1.0, 3.0]).is_none());
    }

    #[test]
    fn ingest_measures_configured_rate() {
        let r = bench_ingest(5.0, 200, &[1, 4], 3).unwrap();
        for row in &r.rows {
            assert!((row.posts as i64 - 1_000).abs() <= 1, "{row:?}");
            assert!((row.simulated_rate - 5.0).abs() < 0.01);
        }
        let again = bench_ingest(5.0, 200, &[4], 3).unwrap();
        assert_eq!(again.rows[0].posts, r.rows[1].posts);
    }

    #[test]
    fn ingest_respects_per_call_cap() {
        // At 10 posts/s some topics exceed 20 posts in a recall window; the
        // oracle counts min(per-topic count, cap) per window.
        let config = SyntheticConfig::new(3, 10.0);
        let clock: SharedClock = Arc::new(ManualClock::new(0));
        let source = SyntheticSource::new(config.clone(), &Lexicon::bundled(), clock).unwrap();
        let mut expected = 0u64;
        for w in 0..10u64 {
            let from = config.start_ms + w * 20_000;
            let mut per_topic = std::collections::HashMap::new();
            for p in source.posts_between(from, from + 20_000) {
                let i = source.published_before(p.created_at + 1) - 1;
                *per_topic.entry(source.topic_of(i).to_string()).or_insert(0u64) += 1;
            }
            expected += per_topic.values().map(|&n| n.min(20)).sum::<u64>();
        }
        let r = bench_ingest(10.0, 200, &[2], 3).unwrap();
        assert_eq!(r.rows[0].posts, expected);
        assert!(expected < 2_000);
    }

    #[test]
    fn idle_pipeline_completes() {
        let model = train_nb(&bundled_labeled(), Lexicon::bundled()).unwrap();
        let router = Router::new(LanguagePipeline::english(model));
        let r = bench_pipeline(&TopologyConfig::default(), router, 50, Duration::from_secs(20), 1).unwrap();
        assert_eq!(r.completion_pct, 100.0);
        assert_eq!(r.hints, "1-1-1-1-2-6-2");
    }

    #[test]
    fn tiny_aggregate_bench_runs() {
        let r = bench_aggregate(&AggregateBenchParams {
            sizes: vec![0, 500, 1_000],
            scanner_counts: vec![1, 2],
            parallel_queries: 2,
            repeats: 1,
            num_buckets: 4,
            seed: 1,
        })
        .unwrap();
        assert_eq!(r.by_size.len(), 3);
        assert!(r.by_size[0].median_ms < 5.0, "empty store took {}ms", r.by_size[0].median_ms);
        assert_eq!(r.by_scanners.len(), 2);
        assert!(r.fit.is_some());
    }
}
