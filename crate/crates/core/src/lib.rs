// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Real-time sentiment analytics over short text posts.
//!
//! Data flows through the modules in this order:
//!
//! - [`ingest`]: spiders pull posts from a [`ingest::PostSource`], drop
//!   already-seen source ids and write new posts to [`storage`] and to the
//!   classifier input buffer.
//! - [`pipeline`]: a staged topology classifies buffered posts as -1, 0 or 1
//!   and writes results to the output buffer.
//! - [`storer`]: drains the output buffer back into storage.
//! - [`aggregate`]: keyword/time-window aggregation, either periodic for the
//!   keywords on the automated processing list or on demand.

pub mod aggregate;
pub mod bench;
pub mod buffer;
pub mod clock;
pub mod config;
pub mod ingest;
pub mod message;
pub mod pipeline;
pub mod polarity;
pub mod storage;
pub mod storer;

pub use polarity::Polarity;
