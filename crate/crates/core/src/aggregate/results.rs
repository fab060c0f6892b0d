// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Embedded SQL store for the automated processing list (APL), automated
//! and on-demand results, and on-demand query bookkeeping.
//!
//! Schema:
//!
//! ```text
//! apl(keyword PK, lang, added_at, enabled, last_run_at NULL)
//! automated_results(keyword, lang, query_id NULL, window_start, <aggregate fields>)
//!     PK (keyword, window_start)
//! queries(query_id PK AUTOINCREMENT, keyword, lang, t_start, t_end, window_ms,
//!     mode, status, submitted_at, completed_at NULL, error NULL)
//! ondemand_results(keyword, lang, query_id, window_start, <aggregate fields>)
//!     PK (query_id, window_start)
//! ```
//!
//! `<aggregate fields>` are the [`WindowAggregate`] fields in declaration
//! order; timestamps are UTC milliseconds.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use parking_lot::Mutex;
use rusqlite::{params, Connection, OptionalExtension, Row};
use serde::{Deserialize, Serialize};

use super::{valid_lang, Matcher, Query, QueryMode, Tuple, WindowAggregate};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ResultsError {
    #[error("`{0}` is already on the APL")]
    Conflict(String),
    #[error("`{0}` not found")]
    NotFound(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("results database: {0}")]
    Db(String),
}

impl From<rusqlite::Error> for ResultsError {
    fn from(e: rusqlite::Error) -> Self {
        ResultsError::Db(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ResultsError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AplEntry {
    pub keyword: String,
    pub lang: String,
    pub added_at: u64,
    pub enabled: bool,
    pub last_run_at: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl QueryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryStatus::Pending => "pending",
            QueryStatus::Running => "running",
            QueryStatus::Done => "done",
            QueryStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "pending" => QueryStatus::Pending,
            "running" => QueryStatus::Running,
            "done" => QueryStatus::Done,
            "failed" => QueryStatus::Failed,
            other => return Err(ResultsError::Db(format!("unknown query status `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: u64,
    pub query: Query,
    pub status: QueryStatus,
    pub submitted_at: u64,
    pub completed_at: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub results: Vec<WindowAggregate>,
}

/// A query record without its result rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySummary {
    pub query_id: u64,
    pub query: Query,
    pub status: QueryStatus,
    pub submitted_at: u64,
    pub completed_at: Option<u64>,
    pub windows: u64,
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS apl (
    keyword TEXT PRIMARY KEY NOT NULL,
    lang TEXT NOT NULL,
    added_at INTEGER NOT NULL,
    enabled INTEGER NOT NULL,
    last_run_at INTEGER
);
CREATE TABLE IF NOT EXISTS automated_results (
    keyword TEXT NOT NULL,
    lang TEXT NOT NULL,
    query_id INTEGER,
    window_start INTEGER NOT NULL,
    polarity_sum INTEGER NOT NULL,
    matches INTEGER NOT NULL,
    positives INTEGER NOT NULL,
    negatives INTEGER NOT NULL,
    neutral INTEGER NOT NULL,
    ap REAL NOT NULL,
    pos_ratio REAL NOT NULL,
    neg_ratio REAL NOT NULL,
    neutral_ratio REAL NOT NULL,
    PRIMARY KEY (keyword, window_start)
);
CREATE TABLE IF NOT EXISTS queries (
    query_id INTEGER PRIMARY KEY AUTOINCREMENT,
    keyword TEXT NOT NULL,
    lang TEXT NOT NULL,
    t_start INTEGER NOT NULL,
    t_end INTEGER NOT NULL,
    window_ms INTEGER NOT NULL,
    mode TEXT NOT NULL,
    status TEXT NOT NULL,
    submitted_at INTEGER NOT NULL,
    completed_at INTEGER,
    error TEXT
);
CREATE TABLE IF NOT EXISTS ondemand_results (
    keyword TEXT NOT NULL,
    lang TEXT NOT NULL,
    query_id INTEGER NOT NULL,
    window_start INTEGER NOT NULL,
    polarity_sum INTEGER NOT NULL,
    matches INTEGER NOT NULL,
    positives INTEGER NOT NULL,
    negatives INTEGER NOT NULL,
    neutral INTEGER NOT NULL,
    ap REAL NOT NULL,
    pos_ratio REAL NOT NULL,
    neg_ratio REAL NOT NULL,
    neutral_ratio REAL NOT NULL,
    PRIMARY KEY (query_id, window_start)
);
";

const AGG_COLUMNS: &str =
    "window_start, polarity_sum, matches, positives, negatives, neutral, ap, pos_ratio, neg_ratio, neutral_ratio";

/// Header of exported CSV files.
pub const CSV_HEADER: [&str; 13] = [
    "keyword",
    "lang",
    "query_id",
    "window_start",
    "polarity_sum",
    "matches",
    "positives",
    "negatives",
    "neutral",
    "ap",
    "pos_ratio",
    "neg_ratio",
    "neutral_ratio",
];

fn agg_from_row(row: &Row<'_>, offset: usize) -> rusqlite::Result<WindowAggregate> {
    Ok(WindowAggregate {
        window_start: row.get::<_, i64>(offset)? as u64,
        polarity_sum: row.get(offset + 1)?,
        matches: row.get::<_, i64>(offset + 2)? as u64,
        positives: row.get::<_, i64>(offset + 3)? as u64,
        negatives: row.get::<_, i64>(offset + 4)? as u64,
        neutral: row.get::<_, i64>(offset + 5)? as u64,
        ap: row.get(offset + 6)?,
        pos_ratio: row.get(offset + 7)?,
        neg_ratio: row.get(offset + 8)?,
        neutral_ratio: row.get(offset + 9)?,
    })
}

fn apl_from_row(row: &Row<'_>) -> rusqlite::Result<AplEntry> {
    Ok(AplEntry {
        keyword: row.get(0)?,
        lang: row.get(1)?,
        added_at: row.get::<_, i64>(2)? as u64,
        enabled: row.get(3)?,
        last_run_at: row.get::<_, Option<i64>>(4)?.map(|t| t as u64),
    })
}

fn ms(t: u64) -> i64 {
    i64::try_from(t).unwrap_or(i64::MAX)
}

/// Thread-safe handle over one SQLite connection.
#[derive(Debug)]
pub struct ResultsStore {
    conn: Mutex<Connection>,
}

impl ResultsStore {
    pub fn in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    pub fn open(path: &Path) -> Result<Self> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "NORMAL")?;
        Self::init(conn)
    }

    fn init(conn: Connection) -> Result<Self> {
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn: Mutex::new(conn) })
    }

    // ---- APL ----------------------------------------------------------------

    pub fn apl_add(&self, keyword: &str, lang: &str, now_ms: u64) -> Result<AplEntry> {
        let keyword = keyword.trim();
        if Matcher::new(keyword).is_empty() {
            return Err(ResultsError::Invalid("keyword must contain a word".into()));
        }
        if !valid_lang(lang) {
            return Err(ResultsError::Invalid(format!("bad language code `{lang}`")));
        }
        let conn = self.conn.lock();
        let inserted = conn.execute(
            "INSERT OR IGNORE INTO apl (keyword, lang, added_at, enabled, last_run_at) VALUES (?1, ?2, ?3, 1, NULL)",
            params![keyword, lang, ms(now_ms)],
        )?;
        if inserted == 0 {
            return Err(ResultsError::Conflict(keyword.to_string()));
        }
        Ok(AplEntry {
            keyword: keyword.to_string(),
            lang: lang.to_string(),
            added_at: now_ms,
            enabled: true,
            last_run_at: None,
        })
    }

    /// Entries ordered by keyword.
    pub fn apl_list(&self, offset: usize, limit: usize) -> Result<Vec<AplEntry>> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare_cached(
            "SELECT keyword, lang, added_at, enabled, last_run_at FROM apl ORDER BY keyword LIMIT ?1 OFFSET ?2",
        )?;
        let rows = stmt.query_map(params![ms(limit as u64), ms(offset as u64)], apl_from_row)?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    pub fn apl_all(&self) -> Result<Vec<AplEntry>> {
        self.apl_list(0, usize::MAX >> 1)
    }

    pub fn apl_get(&self, keyword: &str) -> Result<Option<AplEntry>> {
        let conn = self.conn.lock();
        Ok(conn
            .query_row(
                "SELECT keyword, lang, added_at, enabled, last_run_at FROM apl WHERE keyword = ?1",
                params![keyword],
                apl_from_row,
            )
            .optional()?)
    }

    /// Case-insensitive substring search, ordered by keyword.
    pub fn apl_search(&self, q: &str) -> Result<Vec<AplEntry>> {
        let needle = q.to_lowercase();
        Ok(self
            .apl_all()?
            .into_iter()
            .filter(|e| e.keyword.to_lowercase().contains(&needle))
            .collect())
    }

    /// Removes the entry and its automated results.
    pub fn apl_delete(&self, keyword: &str) -> Result<()> {
        let mut conn = self.conn.lock();
        let tx = conn.transaction()?;
        let n = tx.execute("DELETE FROM apl WHERE keyword = ?1", params![keyword])?;
        if n == 0 {
            return Err(ResultsError::NotFound(keyword.to_string()));
        }
        tx.execute("DELETE FROM automated_results WHERE keyword = ?1", params![keyword])?;
        tx.commit()?;
        Ok(())
    }

    /// Stores the rows of one automated run and advances `last_run_at` in
    /// the same transaction.
    pub fn record_automated_run(&self, keyword: &str, rows: &[WindowAggregate], run_end: u64) -> Result<()> {
        let mut conn = self.conn.lock();
        let tx = conn.transaction()?;
        let lang: String = tx
            .query_row("SELECT lang FROM apl WHERE keyword = ?1", params![keyword], |r| r.get(0))
            .optional()?
            .ok_or_else(|| ResultsError::NotFound(keyword.to_string()))?;
        {
            let mut stmt = tx.prepare_cached(&format!(
                "INSERT OR REPLACE INTO automated_results (keyword, lang, query_id, {AGG_COLUMNS})
                 VALUES (?1, ?2, NULL, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12)"
            ))?;
            for w in rows {
                stmt.execute(params![
                    keyword,
                    lang,
                    ms(w.window_start),
                    w.polarity_sum,
                    ms(w.matches),
                    ms(w.positives),
                    ms(w.negatives),
                    ms(w.neutral),
                    w.ap,
                    w.pos_ratio,
                    w.neg_ratio,
                    w.neutral_ratio
                ])?;
            }
        }
        tx.execute(
            "UPDATE apl SET last_run_at = ?2 WHERE keyword = ?1",
            params![keyword, ms(run_end)],
        )?;
        tx.commit()?;
        Ok(())
    }

    /// Automated rows with `window_start` in `[from, to)`.
    pub fn evolution(&self, keyword: &str, from: u64, to: u64) -> Result<Vec<WindowAggregate>> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare_cached(&format!(
            "SELECT {AGG_COLUMNS} FROM automated_results
             WHERE keyword = ?1 AND window_start >= ?2 AND window_start < ?3 ORDER BY window_start"
        ))?;
        let rows = stmt.query_map(params![keyword, ms(from), ms(to)], |r| agg_from_row(r, 0))?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    /// First automated row with `window_start` strictly after `after`.
    pub fn next_after(&self, keyword: &str, after: u64) -> Result<Option<WindowAggregate>> {
        let conn = self.conn.lock();
        Ok(conn
            .query_row(
                &format!(
                    "SELECT {AGG_COLUMNS} FROM automated_results
                     WHERE keyword = ?1 AND window_start > ?2 ORDER BY window_start LIMIT 1"
                ),
                params![keyword, ms(after)],
                |r| agg_from_row(r, 0),
            )
            .optional()?)
    }

    /// Summed automated tuples per APL keyword over windows starting at or
    /// after `since`. Keywords without rows map to an empty tuple.
    pub fn activity_since(&self, since: u64) -> Result<BTreeMap<String, Tuple>> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare_cached(
            "SELECT a.keyword,
                    COALESCE(SUM(r.polarity_sum), 0), COALESCE(SUM(r.matches), 0),
                    COALESCE(SUM(r.positives), 0), COALESCE(SUM(r.negatives), 0)
             FROM apl a LEFT JOIN automated_results r
               ON r.keyword = a.keyword AND r.window_start >= ?1
             GROUP BY a.keyword",
        )?;
        let rows = stmt.query_map(params![ms(since)], |r| {
            Ok((
                r.get::<_, String>(0)?,
                Tuple {
                    polarity_sum: r.get(1)?,
                    matches: r.get::<_, i64>(2)? as u64,
                    positives: r.get::<_, i64>(3)? as u64,
                    negatives: r.get::<_, i64>(4)? as u64,
                },
            ))
        })?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    // ---- on-demand queries ----------------------------------------------------

    pub fn query_insert(&self, query: &Query, now_ms: u64) -> Result<u64> {
        let conn = self.conn.lock();
        conn.execute(
            "INSERT INTO queries (keyword, lang, t_start, t_end, window_ms, mode, status, submitted_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, 'pending', ?7)",
            params![
                query.keyword,
                query.lang,
                ms(query.t_start),
                ms(query.t_end),
                ms(query.window_ms),
                query.mode.as_str(),
                ms(now_ms)
            ],
        )?;
        Ok(conn.last_insert_rowid() as u64)
    }

    pub fn query_set_running(&self, id: u64) -> Result<()> {
        let conn = self.conn.lock();
        conn.execute(
            "UPDATE queries SET status = 'running' WHERE query_id = ?1",
            params![ms(id)],
        )?;
        Ok(())
    }

    pub fn query_complete(&self, id: u64, rows: &[WindowAggregate], now_ms: u64) -> Result<()> {
        let mut conn = self.conn.lock();
        let tx = conn.transaction()?;
        let (keyword, lang): (String, String) = tx
            .query_row(
                "SELECT keyword, lang FROM queries WHERE query_id = ?1",
                params![ms(id)],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?
            .ok_or_else(|| ResultsError::NotFound(format!("query {id}")))?;
        tx.execute("DELETE FROM ondemand_results WHERE query_id = ?1", params![ms(id)])?;
        {
            let mut stmt = tx.prepare_cached(&format!(
                "INSERT INTO ondemand_results (keyword, lang, query_id, {AGG_COLUMNS})
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13)"
            ))?;
            for w in rows {
                stmt.execute(params![
                    keyword,
                    lang,
                    ms(id),
                    ms(w.window_start),
                    w.polarity_sum,
                    ms(w.matches),
                    ms(w.positives),
                    ms(w.negatives),
                    ms(w.neutral),
                    w.ap,
                    w.pos_ratio,
                    w.neg_ratio,
                    w.neutral_ratio
                ])?;
            }
        }
        tx.execute(
            "UPDATE queries SET status = 'done', completed_at = ?2, error = NULL WHERE query_id = ?1",
            params![ms(id), ms(now_ms)],
        )?;
        tx.commit()?;
        Ok(())
    }

    pub fn query_fail(&self, id: u64, error: &str, now_ms: u64) -> Result<()> {
        let conn = self.conn.lock();
        conn.execute(
            "UPDATE queries SET status = 'failed', completed_at = ?2, error = ?3 WHERE query_id = ?1",
            params![ms(id), ms(now_ms), error],
        )?;
        Ok(())
    }

    pub fn query_get(&self, id: u64) -> Result<Option<QueryRecord>> {
        let conn = self.conn.lock();
        let head = conn
            .query_row(
                "SELECT query_id, keyword, lang, t_start, t_end, window_ms, mode, status, submitted_at,
                        completed_at, error
                 FROM queries WHERE query_id = ?1",
                params![ms(id)],
                |r| {
                    Ok((
                        r.get::<_, i64>(0)? as u64,
                        query_from_row(r)?,
                        r.get::<_, String>(7)?,
                        r.get::<_, i64>(8)? as u64,
                        r.get::<_, Option<i64>>(9)?.map(|t| t as u64),
                        r.get::<_, Option<String>>(10)?,
                    ))
                },
            )
            .optional()?;
        let Some((query_id, query, status, submitted_at, completed_at, error)) = head else {
            return Ok(None);
        };
        let status = QueryStatus::parse(&status)?;
        let results = if status == QueryStatus::Done {
            let mut stmt = conn.prepare_cached(&format!(
                "SELECT {AGG_COLUMNS} FROM ondemand_results WHERE query_id = ?1 ORDER BY window_start"
            ))?;
            let rows = stmt.query_map(params![ms(id)], |r| agg_from_row(r, 0))?;
            rows.collect::<rusqlite::Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Some(QueryRecord {
            query_id,
            query,
            status,
            submitted_at,
            completed_at,
            error,
            results,
        }))
    }

    /// Completed queries whose keyword contains `q` (case-insensitive),
    /// newest first.
    pub fn query_search(&self, q: &str) -> Result<Vec<QuerySummary>> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare_cached(
            "SELECT q.query_id, q.keyword, q.lang, q.t_start, q.t_end, q.window_ms, q.mode, q.status,
                    q.submitted_at, q.completed_at,
                    (SELECT COUNT(*) FROM ondemand_results r WHERE r.query_id = q.query_id)
             FROM queries q
             WHERE q.status = 'done'
             ORDER BY q.query_id DESC",
        )?;
        let needle = q.to_lowercase();
        let rows = stmt.query_map([], |r| {
            Ok(QuerySummary {
                query_id: r.get::<_, i64>(0)? as u64,
                query: query_from_row(r)?,
                status: QueryStatus::Done,
                submitted_at: r.get::<_, i64>(8)? as u64,
                completed_at: r.get::<_, Option<i64>>(9)?.map(|t| t as u64),
                windows: r.get::<_, i64>(10)? as u64,
            })
        })?;
        let mut out = Vec::new();
        for row in rows {
            let row = row?;
            if row.query.keyword.to_lowercase().contains(&needle) {
                out.push(row);
            }
        }
        Ok(out)
    }

    /// Ids of queries that never finished, oldest first.
    pub fn unfinished_queries(&self) -> Result<Vec<u64>> {
        let conn = self.conn.lock();
        let mut stmt =
            conn.prepare_cached("SELECT query_id FROM queries WHERE status IN ('pending', 'running') ORDER BY query_id")?;
        let rows = stmt.query_map([], |r| r.get::<_, i64>(0).map(|v| v as u64))?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    // ---- export -----------------------------------------------------------------

    /// Writes the automated rows of `keyword` (all keywords when `None`) as
    /// CSV.
    pub fn export_automated<W: Write>(&self, keyword: Option<&str>, out: W) -> Result<usize> {
        let rows: Vec<(String, String, Option<u64>, WindowAggregate)> = {
            let conn = self.conn.lock();
            let mut stmt = conn.prepare_cached(&format!(
                "SELECT keyword, lang, query_id, {AGG_COLUMNS} FROM automated_results
                 WHERE ?1 IS NULL OR keyword = ?1 ORDER BY keyword, window_start"
            ))?;
            let rows = stmt.query_map(params![keyword], |r| {
                Ok((
                    r.get(0)?,
                    r.get(1)?,
                    r.get::<_, Option<i64>>(2)?.map(|v| v as u64),
                    agg_from_row(r, 3)?,
                ))
            })?;
            rows.collect::<rusqlite::Result<_>>()?
        };
        write_csv(out, &rows)
    }

    pub fn export_ondemand<W: Write>(&self, query_id: u64, out: W) -> Result<usize> {
        let record = self
            .query_get(query_id)?
            .ok_or_else(|| ResultsError::NotFound(format!("query {query_id}")))?;
        let rows: Vec<_> = record
            .results
            .into_iter()
            .map(|w| (record.query.keyword.clone(), record.query.lang.clone(), Some(query_id), w))
            .collect();
        write_csv(out, &rows)
    }
}

fn query_from_row(r: &Row<'_>) -> rusqlite::Result<Query> {
    let mode: String = r.get(6)?;
    Ok(Query {
        keyword: r.get(1)?,
        lang: r.get(2)?,
        t_start: r.get::<_, i64>(3)? as u64,
        t_end: r.get::<_, i64>(4)? as u64,
        window_ms: r.get::<_, i64>(5)? as u64,
        mode: if mode == "automated" {
            QueryMode::Automated
        } else {
            QueryMode::Ondemand
        },
    })
}

/// Writes aggregate rows under [`CSV_HEADER`].
pub fn write_csv<W: Write>(out: W, rows: &[(String, String, Option<u64>, WindowAggregate)]) -> Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| ResultsError::Db(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for (keyword, lang, query_id, a) in rows {
        w.write_record([
            keyword.clone(),
            lang.clone(),
            query_id.map(|q| q.to_string()).unwrap_or_default(),
            a.window_start.to_string(),
            a.polarity_sum.to_string(),
            a.matches.to_string(),
            a.positives.to_string(),
            a.negatives.to_string(),
            a.neutral.to_string(),
            a.ap.to_string(),
            a.pos_ratio.to_string(),
            a.neg_ratio.to_string(),
            a.neutral_ratio.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ResultsError::Db(e.to_string()))?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarity::Polarity;

    fn agg(start: u64, ps: &[i64]) -> WindowAggregate {
        let mut t = Tuple::default();
        for p in ps {
            t.add(Tuple::of(Polarity::try_from(*p).unwrap()));
        }
        WindowAggregate::from_tuple(start, t).unwrap()
    }

    #[test]
    fn apl_lifecycle() {
        let s = ResultsStore::in_memory().unwrap();
        assert!(s.apl_all().unwrap().is_empty());
        let e = s.apl_add("  Super Bowl ", "en", 10).unwrap();
        assert_eq!(e.keyword, "Super Bowl");
        assert!(matches!(s.apl_add("Super Bowl", "en", 11), Err(ResultsError::Conflict(_))));
        assert!(matches!(s.apl_add(" ", "en", 11), Err(ResultsError::Invalid(_))));
        assert!(matches!(s.apl_add("x", "EN", 11), Err(ResultsError::Invalid(_))));
        s.apl_add("coffee", "en", 12).unwrap();
        assert_eq!(s.apl_list(0, 10).unwrap().len(), 2);
        assert_eq!(s.apl_list(1, 10).unwrap()[0].keyword, "coffee");
        assert!(s.apl_list(5, 10).unwrap().is_empty());
        assert_eq!(s.apl_search("BOWL").unwrap().len(), 1);
        assert!(s.apl_search("tea").unwrap().is_empty());
        s.apl_delete("coffee").unwrap();
        assert!(matches!(s.apl_delete("coffee"), Err(ResultsError::NotFound(_))));
        assert_eq!(s.apl_all().unwrap().len(), 1);
    }

    #[test]
    fn automated_rows_and_next() {
        let s = ResultsStore::in_memory().unwrap();
        s.apl_add("coffee", "en", 0).unwrap();
        let rows = vec![agg(100, &[1, 1, 0, -1]), agg(300, &[-1])];
        s.record_automated_run("coffee", &rows, 400).unwrap();
        assert_eq!(s.apl_get("coffee").unwrap().unwrap().last_run_at, Some(400));
        assert_eq!(s.evolution("coffee", 0, 1_000).unwrap(), rows);
        assert_eq!(s.evolution("coffee", 101, 1_000).unwrap(), rows[1..]);
        assert_eq!(s.next_after("coffee", 0).unwrap(), Some(rows[0].clone()));
        assert_eq!(s.next_after("coffee", 100).unwrap(), Some(rows[1].clone()));
        assert_eq!(s.next_after("coffee", 300).unwrap(), None);
        assert_eq!(s.evolution("coffee", 0, 1_000).unwrap()[0].ap, 0.625);
        assert!(matches!(
            s.record_automated_run("tea", &rows, 1),
            Err(ResultsError::NotFound(_))
        ));
        let act = s.activity_since(200).unwrap();
        assert_eq!(act["coffee"].matches, 1);
    }

    #[test]
    fn query_lifecycle() {
        let s = ResultsStore::in_memory().unwrap();
        let q = Query::new("travel ban", 0, 1_000, 100);
        let a = s.query_insert(&q, 5).unwrap();
        let b = s.query_insert(&q, 6).unwrap();
        assert_ne!(a, b);
        assert_eq!(s.query_get(a).unwrap().unwrap().status, QueryStatus::Pending);
        assert!(s.query_search("").unwrap().is_empty());
        s.query_set_running(a).unwrap();
        assert_eq!(s.unfinished_queries().unwrap(), vec![a, b]);
        s.query_complete(a, &[agg(0, &[1])], 9).unwrap();
        let rec = s.query_get(a).unwrap().unwrap();
        assert_eq!(rec.status, QueryStatus::Done);
        assert_eq!(rec.results.len(), 1);
        assert_eq!(rec.completed_at, Some(9));
        assert_eq!(rec.query, q);
        s.query_fail(b, "boom", 10).unwrap();
        assert_eq!(s.query_get(b).unwrap().unwrap().error.as_deref(), Some("boom"));
        assert_eq!(s.query_search("BAN").unwrap().len(), 1);
        assert!(s.query_search("coffee").unwrap().is_empty());
        assert!(s.query_get(99).unwrap().is_none());
    }

    #[test]
    fn csv_export_parses_back() {
        let s = ResultsStore::in_memory().unwrap();
        s.apl_add("coffee", "en", 0).unwrap();
        s.record_automated_run("coffee", &[agg(100, &[1, 0]), agg(200, &[-1])], 300).unwrap();
        let mut buf = Vec::new();
        assert_eq!(s.export_automated(None, &mut buf).unwrap(), 2);
        let mut r = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
        let rows: Vec<_> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(&rows[0][3], "100");
        assert_eq!(rows[0][9].parse::<f64>().unwrap(), 0.75);
    }

    #[test]
    fn file_backed_store_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.db");
        {
            let s = ResultsStore::open(&path).unwrap();
            s.apl_add("coffee", "en", 1).unwrap();
        }
        let s = ResultsStore::open(&path).unwrap();
        assert_eq!(s.apl_all().unwrap().len(), 1);
    }
}
