// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Opening the engine's stores and running the classification path until
//! the buffers are empty.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};

use sentiflow_core::aggregate::results::ResultsStore;
use sentiflow_core::buffer::{BufferStore, DEDUP_SET, INPUT_SET, OUTPUT_SET};
use sentiflow_core::clock::SharedClock;
use sentiflow_core::config::SystemConfig;
use sentiflow_core::ingest::Ingestor;
use sentiflow_core::pipeline::model::NbModel;
use sentiflow_core::pipeline::resources::Lexicon;
use sentiflow_core::pipeline::topology::run_topology;
use sentiflow_core::pipeline::{bundled_labeled, train_nb, LanguagePipeline, Router};
use sentiflow_core::storage::Store;
use sentiflow_core::storer::{Storer, StorerStats};

/// Loads the config at `path` (defaults when `None`) and makes its relative
/// paths relative to the file's directory.
pub fn load_config(path: Option<&Path>) -> anyhow::Result<SystemConfig> {
    let Some(path) = path else {
        return Ok(SystemConfig::default());
    };
    let mut config = SystemConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    resolve_paths(&mut config, base);
    Ok(config)
}

fn rebase(p: &mut PathBuf, base: &Path) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

pub fn resolve_paths(config: &mut SystemConfig, base: &Path) {
    rebase(&mut config.storage.data_dir, base);
    rebase(&mut config.results_db, base);
    for p in [
        config.buffers.snapshot_path.as_mut(),
        config.api.ui_dir.as_mut(),
        config.model.path.as_mut(),
    ]
    .into_iter()
    .flatten()
    {
        rebase(p, base);
    }
}

/// The model file named by the config, or one trained on the bundled
/// labeled fixture.
pub fn load_model(path: Option<&Path>) -> anyhow::Result<NbModel> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading model {}", p.display()))?;
            Ok(NbModel::from_json(&text).with_context(|| format!("loading model {}", p.display()))?)
        }
        None => Ok(train_nb(&bundled_labeled(), Lexicon::bundled())?),
    }
}

pub struct Services {
    pub config: SystemConfig,
    pub clock: SharedClock,
    pub store: Arc<Store>,
    pub buffers: Arc<BufferStore>,
    pub results: Arc<ResultsStore>,
    pub pipeline: LanguagePipeline,
}

impl Services {
    pub fn open(config: SystemConfig, clock: SharedClock) -> anyhow::Result<Self> {
        let store = Arc::new(
            Store::open(&config.storage)
                .with_context(|| format!("opening storage at {}", config.storage.data_dir.display()))?,
        );
        let buffers = Arc::new(BufferStore::new(clock.clone()));
        buffers.set_default_ttl(INPUT_SET, config.buffers.input_ttl_s);
        buffers.set_default_ttl(OUTPUT_SET, config.buffers.output_ttl_s);
        if let Some(snap) = &config.buffers.snapshot_path {
            if snap.exists() {
                let n = buffers
                    .load_snapshot(snap)
                    .with_context(|| format!("loading buffer snapshot {}", snap.display()))?;
                tracing::info!(records = n, path = %snap.display(), "buffer snapshot loaded");
            }
        }
        if let Some(dir) = config.results_db.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let results = Arc::new(
            ResultsStore::open(&config.results_db)
                .with_context(|| format!("opening results db {}", config.results_db.display()))?,
        );
        let pipeline = LanguagePipeline::english(load_model(config.model.path.as_deref())?);
        Ok(Self {
            config,
            clock,
            store,
            buffers,
            results,
            pipeline,
        })
    }

    pub fn router(&self) -> Router {
        Router::new(self.pipeline.clone())
    }

    pub fn ingestor(&self, nonce: impl Into<String>) -> Ingestor {
        Ingestor::new(self.store.clone(), self.buffers.clone(), nonce).with_dedup_ttl(self.config.buffers.dedup_ttl_s)
    }

    pub fn pending(&self) -> usize {
        self.buffers.len(INPUT_SET) + self.buffers.len(OUTPUT_SET)
    }

    /// Runs topology and storer until both buffers are empty.
    pub fn drain(&self, timeout: Duration) -> anyhow::Result<StorerStats> {
        let topology = run_topology(&self.config.topology, self.router(), self.buffers.clone(), self.clock.clone())?;
        let storer = Arc::new(Storer::new(self.buffers.clone(), self.store.clone(), self.config.storer.clone()));
        let handle = Arc::clone(&storer).run_loop();
        let deadline = Instant::now() + timeout;
        while self.pending() > 0 && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(20));
        }
        topology.stop();
        let stats = handle.stop();
        if self.pending() > 0 {
            bail!("{} records still buffered after {:?}", self.pending(), timeout);
        }
        Ok(stats)
    }

    /// Flushes storage and writes the buffer snapshot when configured.
    pub fn persist(&self) -> anyhow::Result<()> {
        self.store.flush()?;
        if let Some(snap) = &self.config.buffers.snapshot_path {
            if let Some(dir) = snap.parent() {
                std::fs::create_dir_all(dir)?;
            }
            self.buffers
                .save_snapshot(snap)
                .with_context(|| format!("writing buffer snapshot {}", snap.display()))?;
            tracing::info!(path = %snap.display(), dedup = self.buffers.len(DEDUP_SET), "buffer snapshot saved");
        }
        Ok(())
    }
}
