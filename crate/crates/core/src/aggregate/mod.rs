// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Keyword/time-window sentiment aggregation.
//!
//! Every classified post that matches the keyword contributes the tuple
//! `(p, 1, [p = 1], [p = -1])` to its window; tuples are summed per window.
//! A window's average polarity is `AP = (sum / m + 1) / 2`, which maps the
//! mean polarity from [-1, 1] onto [0, 1]. Windows without matches are not
//! emitted.

pub mod apl;
pub mod ondemand;
pub mod results;

use std::collections::BTreeMap;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::polarity::Polarity;
use crate::storage::{PostRecord, StorageError, Store};

/// Lowercased alphanumeric runs of `text`.
fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty())
}

/// Precompiled phrase matcher: the keyword's tokens must appear
/// consecutively among the text's tokens, ignoring case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matcher {
    phrase: Vec<String>,
}

impl Matcher {
    pub fn new(keyword: &str) -> Self {
        let lower = keyword.to_lowercase();
        Self {
            phrase: tokens(&lower).map(str::to_string).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.phrase.is_empty()
    }

    pub fn matches(&self, text: &str) -> bool {
        if self.phrase.is_empty() {
            return false;
        }
        let lower = text.to_lowercase();
        let toks: Vec<&str> = tokens(&lower).collect();
        toks.windows(self.phrase.len()).any(|w| w.iter().zip(&self.phrase).all(|(a, b)| a == b))
    }
}

/// Case-insensitive tokenized phrase containment.
pub fn matches(text: &str, keyword: &str) -> bool {
    Matcher::new(keyword).matches(text)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("keyword has no word characters")]
    EmptyKeyword,
    #[error("t_start must be before t_end")]
    EmptyInterval,
    #[error("window_ms must be positive and no larger than the interval")]
    BadWindow,
    #[error("lang must be a 2 or 3 letter lowercase code")]
    BadLang,
    #[error("{0} is outside the query interval")]
    OutOfRange(u64),
    #[error("storage: {0}")]
    Storage(String),
}

impl From<StorageError> for QueryError {
    fn from(e: StorageError) -> Self {
        QueryError::Storage(e.to_string())
    }
}

/// Start of the window containing `created_at`.
pub fn window_of(created_at: u64, t_start: u64, t_end: u64, window_ms: u64) -> Result<u64, QueryError> {
    if window_ms == 0 {
        return Err(QueryError::BadWindow);
    }
    if created_at < t_start || created_at >= t_end {
        return Err(QueryError::OutOfRange(created_at));
    }
    Ok(t_start + (created_at - t_start) / window_ms * window_ms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    Automated,
    Ondemand,
}

impl QueryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryMode::Automated => "automated",
            QueryMode::Ondemand => "ondemand",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub keyword: String,
    pub t_start: u64,
    pub t_end: u64,
    #[serde(default = "default_lang")]
    pub lang: String,
    pub window_ms: u64,
    #[serde(default = "default_mode")]
    pub mode: QueryMode,
}

fn default_lang() -> String {
    "en".into()
}

fn default_mode() -> QueryMode {
    QueryMode::Ondemand
}

pub(crate) fn valid_lang(lang: &str) -> bool {
    (2..=3).contains(&lang.len()) && lang.bytes().all(|b| b.is_ascii_lowercase())
}

impl Query {
    pub fn new(keyword: impl Into<String>, t_start: u64, t_end: u64, window_ms: u64) -> Self {
        Self {
            keyword: keyword.into(),
            t_start,
            t_end,
            lang: default_lang(),
            window_ms,
            mode: QueryMode::Ondemand,
        }
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if Matcher::new(&self.keyword).is_empty() {
            return Err(QueryError::EmptyKeyword);
        }
        if self.t_start >= self.t_end {
            return Err(QueryError::EmptyInterval);
        }
        if self.window_ms == 0 || self.window_ms > self.t_end - self.t_start {
            return Err(QueryError::BadWindow);
        }
        if !valid_lang(&self.lang) {
            return Err(QueryError::BadLang);
        }
        Ok(())
    }
}

/// Summed 4-tuple `(sum p, m, positives, negatives)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tuple {
    pub polarity_sum: i64,
    pub matches: u64,
    pub positives: u64,
    pub negatives: u64,
}

impl Tuple {
    pub fn of(p: Polarity) -> Self {
        Self {
            polarity_sum: i64::from(p.value()),
            matches: 1,
            positives: u64::from(p == Polarity::Positive),
            negatives: u64::from(p == Polarity::Negative),
        }
    }

    pub fn add(&mut self, other: Tuple) {
        self.polarity_sum += other.polarity_sum;
        self.matches += other.matches;
        self.positives += other.positives;
        self.negatives += other.negatives;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAggregate {
    pub window_start: u64,
    pub polarity_sum: i64,
    pub matches: u64,
    pub positives: u64,
    pub negatives: u64,
    pub neutral: u64,
    pub ap: f64,
    pub pos_ratio: f64,
    pub neg_ratio: f64,
    pub neutral_ratio: f64,
}

impl WindowAggregate {
    /// `None` when the tuple has no matches.
    pub fn from_tuple(window_start: u64, t: Tuple) -> Option<Self> {
        if t.matches == 0 {
            return None;
        }
        let m = t.matches as f64;
        let neutral = t.matches - t.positives - t.negatives;
        Some(Self {
            window_start,
            polarity_sum: t.polarity_sum,
            matches: t.matches,
            positives: t.positives,
            negatives: t.negatives,
            neutral,
            ap: average_polarity(t.polarity_sum, t.matches).expect("m > 0"),
            pos_ratio: t.positives as f64 / m,
            neg_ratio: t.negatives as f64 / m,
            neutral_ratio: neutral as f64 / m,
        })
    }

    pub fn tuple(&self) -> Tuple {
        Tuple {
            polarity_sum: self.polarity_sum,
            matches: self.matches,
            positives: self.positives,
            negatives: self.negatives,
        }
    }
}

/// `(sum / m + 1) / 2`, undefined for `m = 0`.
pub fn average_polarity(polarity_sum: i64, matches: u64) -> Option<f64> {
    (matches > 0).then(|| (polarity_sum as f64 / matches as f64 + 1.0) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub polarity_sum: i64,
    pub matches: u64,
    pub positives: u64,
    pub negatives: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub windows: Vec<WindowAggregate>,
    pub totals: Totals,
    /// Matching posts that were not yet classified.
    pub skipped: u64,
    /// Rows read from storage, matching or not.
    pub scanned: u64,
}

#[derive(Default)]
struct Partial {
    windows: BTreeMap<u64, Tuple>,
    skipped: u64,
    scanned: u64,
}

impl Partial {
    fn observe(&mut self, record: &PostRecord, query: &Query, matcher: &Matcher) {
        self.scanned += 1;
        if record.lang != query.lang || !matcher.matches(&record.text) {
            return;
        }
        match record.polarity {
            None => self.skipped += 1,
            Some(p) => {
                let w = query.t_start + (record.created_at - query.t_start) / query.window_ms * query.window_ms;
                self.windows.entry(w).or_default().add(Tuple::of(p));
            }
        }
    }

    fn merge(&mut self, other: Partial) {
        for (w, t) in other.windows {
            self.windows.entry(w).or_default().add(t);
        }
        self.skipped += other.skipped;
        self.scanned += other.scanned;
    }

    fn finish(self) -> AggregateResult {
        let mut total = Tuple::default();
        let windows: Vec<_> = self
            .windows
            .into_iter()
            .filter_map(|(w, t)| {
                total.add(t);
                WindowAggregate::from_tuple(w, t)
            })
            .collect();
        AggregateResult {
            windows,
            totals: Totals {
                polarity_sum: total.polarity_sum,
                matches: total.matches,
                positives: total.positives,
                negatives: total.negatives,
                ap: average_polarity(total.polarity_sum, total.matches),
            },
            skipped: self.skipped,
            scanned: self.scanned,
        }
    }
}

/// Aggregates `query` with `scanners` threads, each scanning a disjoint set
/// of buckets. The result does not depend on `scanners`.
pub fn aggregate(store: &Store, query: &Query, scanners: usize) -> Result<AggregateResult, QueryError> {
    query.validate()?;
    let matcher = Matcher::new(&query.keyword);
    let buckets = store.num_buckets() as usize;
    let scanners = scanners.clamp(1, buckets);
    let scan = |worker: usize| -> Result<Partial, QueryError> {
        let mut part = Partial::default();
        for b in (worker..buckets).step_by(scanners) {
            for record in store.scan_bucket(b as u32, query.t_start, query.t_end)? {
                part.observe(&record, query, &matcher);
            }
        }
        Ok(part)
    };
    let parts: Vec<Result<Partial, QueryError>> = if scanners == 1 {
        vec![scan(0)]
    } else {
        thread::scope(|s| {
            let handles: Vec<_> = (0..scanners).map(|w| s.spawn(move || scan(w))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scanner thread panicked"))
                .collect()
        })
    };
    let mut merged = Partial::default();
    for part in parts {
        merged.merge(part?);
    }
    Ok(merged.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use regex::Regex;

    #[test]
    fn match_examples() {
        assert!(matches("Travel ban stays", "travel ban"));
        assert!(!matches("bandana", "ban"));
        assert!(matches("the #TravelBan and travel-ban debate", "travel ban"));
        assert!(!matches("travel to ban", "travel ban"));
        assert!(!matches("anything", "  !! "));
        assert!(matches("Ça va, CAFÉ?", "café"));
    }

    /// Independent oracle: a regex over the lowercased text with explicit
    /// non-alphanumeric boundaries.
    fn regex_oracle(text: &str, keyword: &str) -> bool {
        let kw = keyword.to_lowercase();
        let words: Vec<String> = kw
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(regex::escape)
            .collect();
        if words.is_empty() {
            return false;
        }
        let sep = r"[^\p{Alphabetic}\p{N}]";
        let pattern = format!("(?:^|{sep}){}(?:{sep}|$)", words.join(&format!("{sep}+")));
        Regex::new(&pattern).unwrap().is_match(&text.to_lowercase())
    }

    #[test]
    fn matcher_agrees_with_regex_oracle_on_fixtures() {
        let texts = [
            "Super Bowl LI tonight!",
            "superbowl parties",
            "The super  bowl, finally",
            "no travel-ban here",
            "ban travel",
            "Coffee? COFFEE!",
            "decaf-coffee",
            "coffees",
            "",
        ];
        let keywords = ["super bowl", "coffee", "travel ban", "ban", "bowl li", "x"];
        for t in texts {
            for k in keywords {
                assert_eq!(matches(t, k), regex_oracle(t, k), "{t:?} / {k:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn matcher_agrees_with_regex_oracle(
            text in "[a-cA-C ,.!-]{0,30}",
            keyword in "[a-c]{1,3}( [a-c]{1,3}){0,2}",
        ) {
            prop_assert_eq!(matches(&text, &keyword), regex_oracle(&text, &keyword));
        }

        #[test]
        fn window_of_matches_floor_oracle(t_start in 0u64..1_000_000, offset in 0u64..1_000_000, window in 1u64..50_000) {
            let created = t_start + offset;
            let w = window_of(created, t_start, created + 1, window).unwrap();
            let expected = t_start + ((offset as f64 / window as f64).floor() as u64) * window;
            prop_assert_eq!(w, expected);
            prop_assert!(w <= created && created < w + window);
        }
    }

    #[test]
    fn window_of_examples() {
        assert_eq!(window_of(100, 100, 1_000, 60), Ok(100));
        assert_eq!(window_of(160, 100, 1_000, 60), Ok(160));
        assert_eq!(window_of(159, 100, 1_000, 60), Ok(100));
        assert_eq!(window_of(99, 100, 1_000, 60), Err(QueryError::OutOfRange(99)));
        assert_eq!(window_of(1_000, 100, 1_000, 60), Err(QueryError::OutOfRange(1_000)));
    }

    #[test]
    fn ap_reference_window() {
        let mut t = Tuple::default();
        for p in [1, 1, 0, -1] {
            t.add(Tuple::of(Polarity::try_from(p).unwrap()));
        }
        let w = WindowAggregate::from_tuple(0, t).unwrap();
        assert_eq!((w.polarity_sum, w.matches, w.positives, w.negatives, w.neutral), (1, 4, 2, 1, 1));
        assert_eq!(w.ap, 0.625);
        assert_eq!(w.pos_ratio + w.neg_ratio + w.neutral_ratio, 1.0);
        assert_eq!(average_polarity(3, 3), Some(1.0));
        assert_eq!(average_polarity(-3, 3), Some(0.0));
        assert_eq!(average_polarity(0, 0), None);
        assert!(WindowAggregate::from_tuple(0, Tuple::default()).is_none());
    }

    #[test]
    fn query_validation() {
        assert!(Query::new("coffee", 0, 100, 100).validate().is_ok());
        assert_eq!(Query::new("coffee", 0, 100, 101).validate(), Err(QueryError::BadWindow));
        assert_eq!(Query::new("coffee", 0, 100, 0).validate(), Err(QueryError::BadWindow));
        assert_eq!(Query::new("coffee", 100, 100, 1).validate(), Err(QueryError::EmptyInterval));
        assert_eq!(Query::new(" ,", 0, 100, 1).validate(), Err(QueryError::EmptyKeyword));
        let mut q = Query::new("coffee", 0, 100, 1);
        q.lang = "EN".into();
        assert_eq!(q.validate(), Err(QueryError::BadLang));
    }

    fn post(i: usize, text: &str, t: u64, p: Option<i64>, lang: &str) -> PostRecord {
        let mut r = PostRecord::new(format!("p{i}"), format!("s{i}"), text, lang, t);
        r.polarity = p.map(|p| Polarity::try_from(p).unwrap());
        r
    }

    #[test]
    fn aggregate_small_store() {
        let store = Store::in_memory(4).unwrap();
        let rows = [
            ("coffee is great", 1_000, Some(1)),
            ("Coffee again", 1_010, Some(1)),
            ("more coffee", 1_020, Some(0)),
            ("bad coffee", 1_030, Some(-1)),
            ("tea", 1_040, Some(1)),
            ("coffee later", 1_200, Some(-1)),
            ("coffee pending", 1_210, None),
            ("coffee too late", 1_300, Some(1)),
        ];
        for (i, (text, t, p)) in rows.iter().enumerate() {
            store.put_post(post(i, text, *t, *p, "en")).unwrap();
        }
        store.put_post(post(99, "coffee en español", 1_000, Some(1), "es")).unwrap();
        let r = aggregate(&store, &Query::new("coffee", 1_000, 1_300, 100), 3).unwrap();
        assert_eq!(r.windows.len(), 2, "empty middle window omitted");
        assert_eq!(r.windows[0].window_start, 1_000);
        assert_eq!(r.windows[0].ap, 0.625);
        assert_eq!(r.windows[1].window_start, 1_200);
        assert_eq!(r.windows[1].ap, 0.0);
        assert_eq!(r.skipped, 1);
        assert_eq!(r.totals.matches, 5);
        assert_eq!(r.scanned, 8);
    }
}
