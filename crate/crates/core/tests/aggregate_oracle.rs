// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentiflow_core::aggregate::{aggregate, AggregateResult, Query};
use sentiflow_core::storage::{PostRecord, Store};
use sentiflow_core::Polarity;

const WORDS: &[&str] = &["travel", "ban", "coffee", "super", "bowl", "the", "Travel", "BAN", "bandana"];

/// Single-threaded reference: filter, then group by floor window, with
/// matching re-derived as whole-word phrase search over lowercase words.
#[derive(Debug, PartialEq)]
struct OracleWindow {
    start: u64,
    sum: i64,
    m: u64,
    pos: u64,
    neg: u64,
    ap: f64,
}

fn oracle_matches(text: &str, keyword: &str) -> bool {
    let words: Vec<String> = text.split_whitespace().map(|w| w.to_lowercase()).collect();
    let kw: Vec<String> = keyword.split_whitespace().map(|w| w.to_lowercase()).collect();
    !kw.is_empty() && words.windows(kw.len()).any(|w| w == kw.as_slice())
}

fn oracle(records: &[PostRecord], q: &Query) -> (Vec<OracleWindow>, u64) {
    let mut windows: BTreeMap<u64, Vec<i64>> = BTreeMap::new();
    let mut skipped = 0;
    for r in records {
        if r.created_at < q.t_start || r.created_at >= q.t_end || r.lang != q.lang || !oracle_matches(&r.text, &q.keyword)
        {
            continue;
        }
        match r.polarity {
            None => skipped += 1,
            Some(p) => {
                let k = (r.created_at - q.t_start) / q.window_ms;
                windows.entry(q.t_start + k * q.window_ms).or_default().push(i64::from(p.value()));
            }
        }
    }
    let rows = windows
        .into_iter()
        .map(|(start, ps)| {
            let sum: i64 = ps.iter().sum();
            let m = ps.len() as u64;
            OracleWindow {
                start,
                sum,
                m,
                pos: ps.iter().filter(|&&p| p == 1).count() as u64,
                neg: ps.iter().filter(|&&p| p == -1).count() as u64,
                ap: (sum as f64 / m as f64 + 1.0) / 2.0,
            }
        })
        .collect();
    (rows, skipped)
}

fn check(result: &AggregateResult, expected: &[OracleWindow], skipped: u64) -> Result<(), String> {
    if result.skipped != skipped {
        return Err(format!("skipped {} vs {}", result.skipped, skipped));
    }
    if result.windows.len() != expected.len() {
        return Err(format!("{} windows vs {}", result.windows.len(), expected.len()));
    }
    for (w, o) in result.windows.iter().zip(expected) {
        let ints = (w.window_start, w.polarity_sum, w.matches, w.positives, w.negatives, w.neutral);
        let want = (o.start, o.sum, o.m, o.pos, o.neg, o.m - o.pos - o.neg);
        if ints != want {
            return Err(format!("{ints:?} vs {want:?}"));
        }
        if (w.ap - o.ap).abs() > 1e-12 {
            return Err(format!("ap {} vs {}", w.ap, o.ap));
        }
        if !(0.0..=1.0).contains(&w.ap) || (w.pos_ratio + w.neg_ratio + w.neutral_ratio - 1.0).abs() > 1e-12 {
            return Err(format!("bounds violated in {w:?}"));
        }
    }
    let total: u64 = result.windows.iter().map(|w| w.matches).sum();
    if total != result.totals.matches {
        return Err("window tiling broken".into());
    }
    Ok(())
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, span: u64) -> Vec<PostRecord> {
    (0..n)
        .map(|i| {
            let words: Vec<&str> = (0..rng.gen_range(1..6)).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
            let mut r = PostRecord::new(
                format!("p{i}"),
                format!("s{i}"),
                words.join(" "),
                if rng.gen_bool(0.9) { "en" } else { "es" },
                rng.gen_range(1..span),
            );
            r.polarity = if rng.gen_bool(0.9) {
                Some(Polarity::from_index(rng.gen_range(0..3)))
            } else {
                None
            };
            r
        })
        .collect()
}

fn random_query(rng: &mut ChaCha8Rng, span: u64) -> Query {
    let kw = ["travel ban", "coffee", "ban", "super bowl", "BOWL"][rng.gen_range(0..5)];
    let t_start = rng.gen_range(0..span / 2);
    let t_end = rng.gen_range(t_start + 1..=span);
    let window = rng.gen_range(1..=t_end - t_start);
    Query::new(kw, t_start, t_end, window)
}

#[test]
fn ap_reference_example() {
    let store = Store::in_memory(4).unwrap();
    for (i, p) in [1, 1, 0, -1].into_iter().enumerate() {
        let mut r = PostRecord::new(format!("p{i}"), format!("s{i}"), "travel ban", "en", 10 + i as u64);
        r.polarity = Some(Polarity::try_from(p).unwrap());
        store.put_post(r).unwrap();
    }
    let res = aggregate(&store, &Query::new("travel ban", 0, 100, 100), 2).unwrap();
    let w = &res.windows[0];
    assert_eq!((w.positives, w.negatives, w.neutral, w.matches), (2, 1, 1, 4));
    assert_eq!(w.ap, 0.625);
}

#[test]
fn ten_thousand_posts_match_oracle_for_any_scanner_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let records = random_dataset(&mut rng, 10_000, 1_000_000);
    let store = Store::in_memory(16).unwrap();
    for r in &records {
        store.put_post(r.clone()).unwrap();
    }
    for _ in 0..10 {
        let q = random_query(&mut rng, 1_000_000);
        let (expected, skipped) = oracle(&records, &q);
        for scanners in [1, 3, 16] {
            let got = aggregate(&store, &q, scanners).unwrap();
            check(&got, &expected, skipped).unwrap_or_else(|e| panic!("{q:?} scanners={scanners}: {e}"));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn aggregate_equals_brute_force(seed: u64, n in 0usize..40, buckets in 1u32..9, scanners in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = random_dataset(&mut rng, n, 1_000);
        let store = Store::in_memory(buckets).unwrap();
        for r in &records {
            store.put_post(r.clone()).unwrap();
        }
        let q = random_query(&mut rng, 1_000);
        let (expected, skipped) = oracle(&records, &q);
        let got = aggregate(&store, &q, scanners).unwrap();
        prop_assert!(check(&got, &expected, skipped).is_ok(), "{:?}", check(&got, &expected, skipped));
    }
}
