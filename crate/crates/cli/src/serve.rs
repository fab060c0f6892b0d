// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! `serve`: every service in one process.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use anyhow::Context;
use serde::Serialize;

use sentiflow_api::{app, serve as serve_http, AppState, ServiceStats};
use sentiflow_core::aggregate::apl::AplRunner;
use sentiflow_core::aggregate::ondemand::QueryManager;
use sentiflow_core::buffer::{INPUT_SET, OUTPUT_SET};
use sentiflow_core::clock::SharedClock;
use sentiflow_core::config::SystemConfig;
use sentiflow_core::ingest::{run_nonce, run_spiders, PostSource, ReplaySource, RunReport, SyntheticConfig, SyntheticSource};
use sentiflow_core::pipeline::resources::Lexicon;
use sentiflow_core::pipeline::topology::run_topology;
use sentiflow_core::storer::Storer;

use crate::cli::ServeArgs;
use crate::services::Services;
use crate::CliError;

#[derive(Debug, Default, Serialize)]
pub struct ServeReport {
    pub crawl: RunReport,
    pub drained_total: u64,
    pub failed_total: u64,
    pub posts_stored: usize,
    pub left_in_buffers: usize,
}

fn source_for(args: &ServeArgs, clock: &SharedClock) -> anyhow::Result<Option<(Box<dyn PostSource>, Vec<String>)>> {
    if let Some(rate) = args.synthetic_rate {
        let mut config = SyntheticConfig::new(args.seed, rate);
        config.start_ms = clock.now_ms();
        let terms = config.topics.clone();
        let source = SyntheticSource::new(config, &Lexicon::bundled(), clock.clone())?;
        return Ok(Some((Box::new(source), terms)));
    }
    if let Some(path) = &args.replay {
        let source = ReplaySource::open(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(Some((Box::new(source), vec!["replay".to_string()])));
    }
    Ok(None)
}

/// Runs until `shutdown` resolves, then drains buffers and stops every
/// worker. `on_ready` receives the bound address.
pub fn serve<F>(
    mut config: SystemConfig,
    args: &ServeArgs,
    clock: SharedClock,
    shutdown: F,
    on_ready: impl FnOnce(SocketAddr),
) -> Result<ServeReport, CliError>
where
    F: Future<Output = ()> + Send + 'static,
{
    if let Some(b) = &args.bind {
        config.api.bind = b.clone();
    }
    if let Some(d) = &args.ui_dir {
        config.api.ui_dir = Some(d.clone());
    }
    let api_config = config.api.clone();
    let source = source_for(args, &clock).map_err(|e| CliError::Usage(e.to_string()))?;
    let services = Arc::new(Services::open(config, clock.clone())?);
    let cfg = &services.config;

    let topology = run_topology(&cfg.topology, services.router(), services.buffers.clone(), clock.clone())
        .map_err(anyhow::Error::from)?;
    let storer = Arc::new(Storer::new(services.buffers.clone(), services.store.clone(), cfg.storer.clone()));
    let storer_handle = Arc::clone(&storer).run_loop();
    let apl = Arc::new(AplRunner::new(services.store.clone(), services.results.clone(), cfg.apl.clone())).spawn(clock.clone());
    let queries = Arc::new(
        QueryManager::new(
            services.store.clone(),
            services.results.clone(),
            clock.clone(),
            cfg.queries.workers,
            cfg.queries.scanners,
        )
        .map_err(anyhow::Error::from)?,
    );

    let stop = Arc::new(AtomicBool::new(false));
    let crawler: Option<JoinHandle<RunReport>> = source.map(|(source, terms)| {
        let services = Arc::clone(&services);
        let stop = Arc::clone(&stop);
        let mut spiders = services.config.spiders.clone();
        spiders.laps = 0;
        spiders.sleep_s = spiders.sleep_s.max(source.min_recall_interval_s());
        spiders.num_spiders = spiders.num_spiders.min(terms.len());
        std::thread::spawn(move || {
            let ingestor = services.ingestor(run_nonce());
            match run_spiders(&terms, source.as_ref(), &spiders, &ingestor, &stop) {
                Ok(r) => r,
                Err(e) => {
                    tracing::error!(error = %e, "crawler did not start");
                    RunReport::default()
                }
            }
        })
    });

    let stats_services = Arc::clone(&services);
    let stats_storer = Arc::clone(&storer);
    let state = AppState::new(services.results.clone(), queries.clone(), clock.clone()).with_stats(Arc::new(move || {
        let s = stats_storer.stats();
        ServiceStats {
            posts_stored: stats_services.store.len() as u64,
            input_pending: stats_services.buffers.len(INPUT_SET) as u64,
            output_pending: stats_services.buffers.len(OUTPUT_SET) as u64,
            drained_total: s.drained_total,
            failed_total: s.failed_total,
        }
    }));
    let router = app(state, &api_config).map_err(|e| CliError::Usage(e.message))?;

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")?;
    let served = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&api_config.bind)
            .await
            .with_context(|| format!("binding {}", api_config.bind))?;
        let addr = listener.local_addr()?;
        tracing::info!(%addr, "api listening");
        on_ready(addr);
        serve_http(listener, router, shutdown).await?;
        anyhow::Ok(())
    });
    tracing::info!("shutting down");

    stop.store(true, Ordering::Relaxed);
    let crawl = crawler.map(|h| h.join().unwrap_or_default()).unwrap_or_default();
    let deadline = Instant::now() + Duration::from_secs(args.drain_timeout_s);
    while services.pending() > 0 && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(20));
    }
    topology.stop();
    let final_stats = storer_handle.stop();
    apl.stop();
    drop(queries);
    services.persist()?;
    served?;
    let report = ServeReport {
        crawl,
        drained_total: final_stats.drained_total,
        failed_total: final_stats.failed_total,
        posts_stored: services.store.len(),
        left_in_buffers: services.pending(),
    };
    tracing::info!(
        drained = report.drained_total,
        stored = report.posts_stored,
        left = report.left_in_buffers,
        "stopped"
    );
    Ok(report)
}

/// Resolves on SIGINT or SIGTERM.
pub async fn termination() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
