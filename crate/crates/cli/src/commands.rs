// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use serde::Serialize;

use sentiflow_core::aggregate::results::write_csv;
use sentiflow_core::aggregate::{aggregate, Query};
use sentiflow_core::bench::{
    bench_aggregate, bench_ingest, bench_pipeline, physical_cores, AggregateBenchParams, PipelineBenchReport,
};
use sentiflow_core::clock::{self, ManualClock, SharedClock};
use sentiflow_core::config::SystemConfig;
use sentiflow_core::ingest::{run_nonce, run_spiders, write_replay, ReplaySource, RunReport, SyntheticConfig, SyntheticSource};
use sentiflow_core::pipeline::resources::Lexicon;
use sentiflow_core::pipeline::topology::TopologyConfig;
use sentiflow_core::pipeline::{
    bundled_labeled, cross_validated_accuracy, majority_baseline, parse_labeled, train_nb, LanguagePipeline, Router,
};
use sentiflow_core::storage::Store;

use crate::cli::{
    BenchAggregateArgs, BenchIngestArgs, BenchPipelineArgs, ClassifyArgs, ExportArgs, GenerateArgs, QueryArgs,
    ReplayArgs, TrainArgs,
};
use crate::services::{load_model, Services};
use crate::CliError;

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p != Path::new("-") => {
            Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        _ => Box::new(io::stdout().lock()),
    })
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ReplayReport {
    #[serde(flatten)]
    pub crawl: RunReport,
    pub unparseable_lines: usize,
    pub classified: u64,
    pub failed: u64,
    pub posts_stored: usize,
}

pub fn replay(config: SystemConfig, args: &ReplayArgs) -> Result<ReplayReport, CliError> {
    let source = ReplaySource::open(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let mut spiders = config.spiders.clone();
    spiders.num_spiders = args.spiders.unwrap_or(spiders.num_spiders);
    spiders.laps = 0;
    spiders.sleep_s = 0;
    spiders.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let services = Services::open(config, clock::system())?;
    let ingestor = services.ingestor(run_nonce());
    let terms: Vec<String> = (0..spiders.num_spiders).map(|i| format!("replay-{i}")).collect();
    let crawl = run_spiders(&terms, &source, &spiders, &ingestor, &AtomicBool::new(false))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    tracing::info!(ingested = crawl.ingested, duplicates = crawl.duplicates, "corpus ingested");
    let stats = services.drain(Duration::from_secs(args.drain_timeout_s))?;
    services.persist()?;
    let report = ReplayReport {
        crawl,
        unparseable_lines: source.malformed(),
        classified: stats.drained_total,
        failed: stats.failed_total,
        posts_stored: services.store.len(),
    };
    print_json(&report)?;
    Ok(report)
}

pub fn generate(args: &GenerateArgs) -> Result<usize, CliError> {
    if !(args.rate > 0.0 && args.rate.is_finite()) {
        return Err(CliError::Usage("--rate must be positive".into()));
    }
    let mut config = SyntheticConfig::new(args.seed, args.rate);
    if let Some(start) = args.start_ms {
        config.start_ms = start;
    }
    let start = config.start_ms;
    let end = start + args.duration_s * 1000;
    let clock: SharedClock = Arc::new(ManualClock::new(end));
    let source = SyntheticSource::new(config, &Lexicon::bundled(), clock).map_err(|e| CliError::Usage(e.to_string()))?;
    let posts = source.posts_between(start, end);
    let mut out = output(args.out.as_deref())?;
    out.write_all(write_replay(&posts).as_bytes())?;
    out.flush()?;
    tracing::info!(posts = posts.len(), "corpus written");
    Ok(posts.len())
}

#[derive(Debug, Serialize)]
pub struct TrainReport {
    pub docs: usize,
    pub folds: usize,
    pub cv_accuracy: f64,
    pub majority_baseline: f64,
    pub model_version: String,
}

pub fn train_model(args: &TrainArgs) -> Result<TrainReport, CliError> {
    let corpus = match &args.input {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_labeled(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => bundled_labeled(),
    };
    if args.folds < 2 {
        return Err(CliError::Usage("--folds must be at least 2".into()));
    }
    let lexicon = Lexicon::bundled();
    let cv_accuracy = cross_validated_accuracy(&corpus, args.folds, &lexicon).map_err(anyhow::Error::from)?;
    let model = train_nb(&corpus, lexicon).map_err(anyhow::Error::from)?;
    std::fs::write(&args.out, model.to_json()).with_context(|| format!("writing {}", args.out.display()))?;
    let report = TrainReport {
        docs: corpus.len(),
        folds: args.folds,
        cv_accuracy,
        majority_baseline: majority_baseline(&corpus),
        model_version: model.version().to_string(),
    };
    print_json(&report)?;
    Ok(report)
}

#[derive(Debug, Serialize)]
struct Classified<'a> {
    text: &'a str,
    polarity: i8,
    /// Posterior over classes -1, 0, 1.
    posterior: [f64; 3],
}

pub fn classify(config: &SystemConfig, args: &ClassifyArgs) -> Result<(), CliError> {
    let model = load_model(args.model.as_deref().or(config.model.path.as_deref()))?;
    let pipeline = LanguagePipeline::english(model);
    let mut out = io::stdout().lock();
    let mut emit = |text: &str| -> anyhow::Result<()> {
        let features = pipeline.features(text);
        let row = Classified {
            text,
            polarity: pipeline.classify_text(text).value(),
            posterior: pipeline.model().posterior(&features),
        };
        serde_json::to_writer(&mut out, &row)?;
        writeln!(out)?;
        Ok(())
    };
    if args.texts.is_empty() {
        for line in io::stdin().lock().lines() {
            let line = line?;
            if !line.trim().is_empty() {
                emit(&line)?;
            }
        }
    } else {
        for t in &args.texts {
            emit(t)?;
        }
    }
    Ok(())
}

pub fn query(config: &SystemConfig, args: &QueryArgs) -> Result<(), CliError> {
    let mut q = Query::new(args.keyword.clone(), args.from, args.to, args.window_ms);
    q.lang = args.lang.clone();
    q.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let store = Store::open(&config.storage)
        .with_context(|| format!("opening storage at {}", config.storage.data_dir.display()))?;
    let scanners = args.scanners.unwrap_or(config.queries.scanners);
    let result = aggregate(&store, &q, scanners).map_err(anyhow::Error::from)?;
    match &args.csv {
        Some(path) => {
            let rows: Vec<_> = result
                .windows
                .iter()
                .map(|w| (q.keyword.clone(), q.lang.clone(), None, w.clone()))
                .collect();
            write_csv(output(Some(path))?, &rows).map_err(anyhow::Error::from)?;
        }
        None => print_json(&serde_json::json!({
            "query": q,
            "windows": result.windows,
            "totals": result.totals,
            "skipped": result.skipped,
        }))?,
    }
    Ok(())
}

pub fn export(config: &SystemConfig, args: &ExportArgs) -> Result<usize, CliError> {
    let results = sentiflow_core::aggregate::results::ResultsStore::open(&config.results_db)
        .with_context(|| format!("opening results db {}", config.results_db.display()))?;
    let out = output(args.out.as_deref())?;
    let n = match args.query_id {
        Some(id) => results.export_ondemand(id, out),
        None => results.export_automated(args.keyword.as_deref(), out),
    }
    .map_err(|e| match e {
        sentiflow_core::aggregate::results::ResultsError::NotFound(m) => CliError::Usage(format!("not found: {m}")),
        other => CliError::Internal(other.into()),
    })?;
    tracing::info!(rows = n, "exported");
    Ok(n)
}

pub fn bench_ingest_cmd(args: &BenchIngestArgs) -> Result<(), CliError> {
    if args.threads.iter().any(|&t| t == 0) || args.threads.is_empty() {
        return Err(CliError::Usage("--threads needs positive counts".into()));
    }
    let report = bench_ingest(args.rate, args.duration_s, &args.threads, args.seed).map_err(CliError::Usage)?;
    if args.json {
        return Ok(print_json(&report)?);
    }
    println!(
        "configured rate {:.1} posts/s over {} simulated s",
        report.configured_rate, report.duration_s
    );
    println!("{:>8} {:>10} {:>14} {:>10} {:>14}", "threads", "posts", "posts/sim-s", "wall s", "posts/wall-s");
    for r in &report.rows {
        println!(
            "{:>8} {:>10} {:>14.2} {:>10.3} {:>14.0}",
            r.threads, r.posts, r.simulated_rate, r.wall_secs, r.wall_rate
        );
    }
    Ok(())
}

pub fn parse_hints(s: &str) -> Result<[usize; 7], CliError> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad hint vector `{s}`")))?;
    let hints: [usize; 7] = parts
        .try_into()
        .map_err(|_| CliError::Usage(format!("hint vector `{s}` needs 7 entries")))?;
    TopologyConfig::with_hints(hints)
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(hints)
}

pub fn bench_pipeline_cmd(config: &SystemConfig, args: &BenchPipelineArgs) -> Result<Vec<PipelineBenchReport>, CliError> {
    let vectors = args.hints.iter().map(|h| parse_hints(h)).collect::<Result<Vec<_>, _>>()?;
    let router = Router::new(LanguagePipeline::english(load_model(config.model.path.as_deref())?));
    let mut reports = Vec::new();
    for hints in vectors {
        let topo = TopologyConfig {
            hints,
            ..config.topology.clone()
        };
        let r = bench_pipeline(&topo, router.clone(), args.load, Duration::from_secs(args.duration_s), args.seed)
            .map_err(|e| CliError::Internal(anyhow::anyhow!(e)))?;
        reports.push(r);
    }
    if args.json {
        print_json(&reports)?;
    } else {
        println!("load {} posts, budget {} s", args.load, args.duration_s);
        println!("{:<20} {:>10} {:>12} {:>10}", "hints", "processed", "completion %", "elapsed s");
        for r in &reports {
            println!("{:<20} {:>10} {:>12.1} {:>10.2}", r.hints, r.processed, r.completion_pct, r.elapsed_secs);
        }
    }
    Ok(reports)
}

pub fn bench_aggregate_cmd(args: &BenchAggregateArgs) -> Result<(), CliError> {
    if args.sizes.len() < 2 {
        return Err(CliError::Usage("--sizes needs at least two points".into()));
    }
    let mut params = AggregateBenchParams {
        sizes: args.sizes.clone(),
        parallel_queries: args.parallel_queries.max(1),
        repeats: args.repeats.max(1),
        seed: args.seed,
        ..AggregateBenchParams::default()
    };
    if !args.scanners.is_empty() {
        params.scanner_counts = args.scanners.clone();
    }
    let report = bench_aggregate(&params).map_err(|e| CliError::Internal(anyhow::anyhow!(e)))?;
    if args.json {
        return Ok(print_json(&report)?);
    }
    println!("parallel queries {}, cores {}", report.parallel_queries, physical_cores());
    println!("{:>10} {:>12}", "posts", "median ms");
    for p in &report.by_size {
        println!("{:>10} {:>12.3}", p.x, p.median_ms);
    }
    if let Some(fit) = &report.fit {
        println!(
            "linear fit: {:.6} ms/post + {:.3} ms, R^2 = {:.4}",
            fit.slope, fit.intercept, fit.r_squared
        );
    }
    println!("{:>10} {:>12}", "scanners", "median ms");
    for p in &report.by_scanners {
        println!("{:>10} {:>12.3}", p.x, p.median_ms);
    }
    println!("monotone in scanners: {}", report.scanners_monotone);
    Ok(())
}
