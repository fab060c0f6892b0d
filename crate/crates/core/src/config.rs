// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! System configuration, loaded from one TOML file. Every field has a
//! default, so an empty file is a valid configuration.
//!
//! ```toml
//! results_db = "data/results.db"
//!
//! [storage]
//! data_dir = "data/posts"
//! num_buckets = 16
//! sync_policy = { mode = "interval", ms = 1000 }
//! segment_bytes = 67108864
//!
//! [buffers]
//! dedup_ttl_s = 172800
//! input_ttl_s = 0          # 0 keeps records until acked
//! output_ttl_s = 0
//! snapshot_path = "data/buffers.json"   # optional
//!
//! [spiders]
//! num_spiders = 4
//! min_buffer_size = 100
//! buffer_step = 10
//! laps = 1
//! sleep_s = 0
//! langs = ["en"]
//!
//! [topology]
//! hints = [1, 1, 1, 1, 2, 6, 2]
//! queue_capacity = 1024
//! batch_size = 256
//! lease_s = 30
//!
//! [storer]
//! batch_size = 512
//! poll_interval_ms = 200
//! lease_s = 30
//!
//! [apl]
//! period_s = 300
//! window_ms = 300000
//! scanners = 4
//!
//! [queries]
//! workers = 2
//! scanners = 4
//!
//! [api]
//! bind = "127.0.0.1:8080"
//! ui_dir = "web/dist"      # optional
//! cors_origins = []        # empty allows any origin
//!
//! [model]
//! path = "model.json"      # optional; bundled fixture is used otherwise
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::apl::AplConfig;
use crate::buffer::DEFAULT_DEDUP_TTL_S;
use crate::ingest::SpiderConfig;
use crate::pipeline::topology::TopologyConfig;
use crate::storage::StorageConfig;
use crate::storer::StorerConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferConfig {
    pub dedup_ttl_s: u64,
    pub input_ttl_s: u64,
    pub output_ttl_s: u64,
    pub snapshot_path: Option<PathBuf>,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            dedup_ttl_s: DEFAULT_DEDUP_TTL_S,
            input_ttl_s: 0,
            output_ttl_s: 0,
            snapshot_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryPoolConfig {
    pub workers: usize,
    pub scanners: usize,
}

impl Default for QueryPoolConfig {
    fn default() -> Self {
        Self { workers: 2, scanners: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub bind: String,
    pub ui_dir: Option<PathBuf>,
    /// Origins allowed by CORS; empty allows any origin.
    pub cors_origins: Vec<String>,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            ui_dir: None,
            cors_origins: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub results_db: PathBuf,
    pub storage: StorageConfig,
    pub buffers: BufferConfig,
    pub spiders: SpiderConfig,
    pub topology: TopologyConfig,
    pub storer: StorerConfig,
    pub apl: AplConfig,
    pub queries: QueryPoolConfig,
    pub api: ApiConfig,
    pub model: ModelConfig,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            results_db: PathBuf::from("data/results.db"),
            storage: StorageConfig::default(),
            buffers: BufferConfig::default(),
            spiders: SpiderConfig::default(),
            topology: TopologyConfig::default(),
            storer: StorerConfig::default(),
            apl: AplConfig::default(),
            queries: QueryPoolConfig::default(),
            api: ApiConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
}

impl SystemConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigFileError> {
        let config: SystemConfig = toml::from_str(text).map_err(|e| ConfigFileError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigFileError> {
        let bad = |e: String| ConfigFileError::Parse(e);
        self.storage.validate().map_err(|e| bad(e.to_string()))?;
        self.spiders.validate().map_err(|e| bad(e.to_string()))?;
        self.topology.validate().map_err(|e| bad(e.to_string()))?;
        if self.storer.batch_size == 0 {
            return Err(bad("storer.batch_size must be positive".into()));
        }
        if self.apl.window_ms == 0 || self.apl.period_s == 0 {
            return Err(bad("apl.window_ms and apl.period_s must be positive".into()));
        }
        if self.queries.workers == 0 || self.queries.scanners == 0 || self.apl.scanners == 0 {
            return Err(bad("worker and scanner counts must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::SyncPolicy;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(SystemConfig::parse("").unwrap(), SystemConfig::default());
    }

    #[test]
    fn documented_example_parses() {
        let doc: String = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start_matches(' '))
            .collect::<Vec<_>>()
            .join("\n");
        let c = SystemConfig::parse(&doc).unwrap();
        assert_eq!(c.storage.sync_policy, SyncPolicy::Interval(1000));
        assert_eq!(c.topology.hints, [1, 1, 1, 1, 2, 6, 2]);
        assert_eq!(c.model.path, Some(PathBuf::from("model.json")));
        assert_eq!(c.buffers.dedup_ttl_s, 172_800);
    }

    #[test]
    fn round_trip_and_rejections() {
        let c = SystemConfig::default();
        assert_eq!(SystemConfig::parse(&c.to_toml()).unwrap(), c);
        assert!(SystemConfig::parse("[topology]\nhints = [1,1,1,0,1,1,1]").is_err());
        assert!(SystemConfig::parse("[storage]\nnum_buckets = 300").is_err());
        assert!(SystemConfig::parse("[api]\nbindd = 'x'").is_err());
        assert!(SystemConfig::parse("[spiders]\nnum_spiders = 0").is_err());
        assert!(SystemConfig::parse("[storage]\nbuckets = 3").is_err());
        assert!(SystemConfig::parse("[storer]\nbatch = 3").is_err());
    }
}
