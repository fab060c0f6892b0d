// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sentiflow", version, about = "Real-time keyword sentiment analytics")]
pub struct Cli {
    /// TOML config file. Relative paths inside it resolve against its
    /// directory. Defaults apply when omitted.
    #[arg(long, short, global = true, env = "SENTIFLOW_CONFIG")]
    pub config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `sentiflow_core=debug`.
    #[arg(long, global = true, default_value = "info", env = "SENTIFLOW_LOG")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every service and the HTTP API until SIGINT/SIGTERM.
    Serve(ServeArgs),
    /// Ingest a line-delimited JSON corpus, classify and store it.
    #[command(alias = "ingest")]
    Replay(ReplayArgs),
    /// Write a seeded synthetic corpus in replay format.
    Generate(GenerateArgs),
    /// Train the classifier and report cross-validated accuracy.
    TrainModel(TrainArgs),
    /// Classify texts given as arguments or one per stdin line.
    Classify(ClassifyArgs),
    /// Run one aggregation query over stored posts.
    Query(QueryArgs),
    /// Export stored automated or custom-query results as CSV.
    Export(ExportArgs),
    /// Crawler throughput against a seeded synthetic source.
    BenchIngest(BenchIngestArgs),
    /// Share of a fixed load the topology classifies in a time budget.
    BenchPipeline(BenchPipelineArgs),
    /// Query latency against dataset size and scanner count.
    BenchAggregate(BenchAggregateArgs),
    /// Print the effective configuration.
    Config,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides `api.bind`.
    #[arg(long)]
    pub bind: Option<String>,
    /// Overrides `api.ui_dir`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Crawl a synthetic source publishing this many posts per second.
    #[arg(long, conflicts_with = "replay")]
    pub synthetic_rate: Option<f64>,
    /// Crawl a replay corpus once.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Seconds to wait for buffers to drain on shutdown.
    #[arg(long, default_value_t = 30)]
    pub drain_timeout_s: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Corpus with one JSON post per line.
    pub input: PathBuf,
    /// Overrides `spiders.num_spiders`.
    #[arg(long)]
    pub spiders: Option<usize>,
    #[arg(long, default_value_t = 600)]
    pub drain_timeout_s: u64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 10.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 600)]
    pub duration_s: u64,
    /// First publication time, UTC ms.
    #[arg(long)]
    pub start_ms: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `label<TAB>text` file; the bundled fixture when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Model file; overrides `model.path`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    pub texts: Vec<String>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub keyword: String,
    /// Interval start, UTC ms (inclusive).
    #[arg(long)]
    pub from: u64,
    /// Interval end, UTC ms (exclusive).
    #[arg(long)]
    pub to: u64,
    #[arg(long, default_value_t = 3_600_000)]
    pub window_ms: u64,
    #[arg(long, default_value = "en")]
    pub lang: String,
    /// Overrides `queries.scanners`.
    #[arg(long)]
    pub scanners: Option<usize>,
    /// Write CSV to this file (`-` for stdout) instead of JSON.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Only this APL keyword.
    #[arg(long, conflicts_with = "query_id")]
    pub keyword: Option<String>,
    /// A custom query's results instead of automated ones.
    #[arg(long)]
    pub query_id: Option<u64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchIngestArgs {
    /// Synthetic publication rate, posts per second.
    #[arg(long, default_value_t = 10.0)]
    pub rate: f64,
    /// Simulated seconds per run.
    #[arg(long, default_value_t = 600)]
    pub duration_s: u64,
    /// Spider counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub threads: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchPipelineArgs {
    /// Parallelism hints for the seven stages; repeat to compare vectors.
    #[arg(long = "hints", value_delimiter = ';', default_value = "1,1,1,1,1,1,1;1,1,1,1,2,6,2")]
    pub hints: Vec<String>,
    /// Posts enqueued before the topology starts.
    #[arg(long, default_value_t = 20_000)]
    pub load: usize,
    #[arg(long, default_value_t = 10)]
    pub duration_s: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchAggregateArgs {
    #[arg(long, value_delimiter = ',', default_value = "20000,40000,60000,80000,100000")]
    pub sizes: Vec<usize>,
    /// Scanner counts to sweep; 1..=cores when omitted.
    #[arg(long, value_delimiter = ',')]
    pub scanners: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub parallel_queries: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}
