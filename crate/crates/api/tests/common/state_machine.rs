// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Randomized operation sequences against the HTTP API, checked step by
//! step against a plain in-memory model. The model aggregates by brute force
//! and never calls into the engine.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use sentiflow_api::{router, AppState};
use sentiflow_core::aggregate::apl::{AplConfig, AplRunner};
use sentiflow_core::aggregate::ondemand::QueryManager;
use sentiflow_core::aggregate::results::ResultsStore;
use sentiflow_core::clock::ManualClock;
use sentiflow_core::storage::{PostRecord, Store};
use sentiflow_core::Polarity;

const T0: u64 = 1_700_000_000_000;
const HOUR: u64 = 3_600_000;
const WINDOW: u64 = 60_000;

const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "omega", "search", "trending", "noise", "Beta", "GAMMA",
];
const SEPARATORS: &[&str] = &[" ", " ", ", ", "! ", " #", "-", "... "];
const ADD_KEYWORDS: &[&str] = &[
    "alpha", "beta", "gamma", "beta gamma", "Delta", "omega", "search", "trending", " alpha ", "", "   ", "!!",
    "alpha beta gamma", "zeta",
];
const PATH_KEYWORDS: &[&str] = &[
    "alpha", "beta", "gamma", "beta gamma", "Delta", "delta", "omega", "search", "trending", "zeta", "alpha beta gamma",
];
const LANGS: &[&str] = &["en", "en", "en", "es", "EN", "e1"];
const NEEDLES: &[&str] = &["", "a", "ALP", "gam", "zz", "ta", "beta g", "E"];

pub const OP_NAMES: [&str; 13] = [
    "list_apl",
    "search_apl",
    "trending",
    "evolution",
    "next",
    "delete_apl",
    "add_apl",
    "submit_query",
    "search_queries",
    "query_results",
    "advance_clock",
    "apl_cycle",
    "run_queries",
];

#[derive(Debug, Clone)]
struct Post {
    text: String,
    lang: &'static str,
    created_at: u64,
    polarity: Option<i64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Agg {
    sum: i64,
    m: u64,
    pos: u64,
    neg: u64,
}

#[derive(Debug, Clone)]
struct Entry {
    lang: String,
    added_at: u64,
    last_run_at: Option<u64>,
}

#[derive(Debug, Clone)]
struct QueryState {
    keyword: String,
    t_start: u64,
    t_end: u64,
    lang: String,
    window_ms: u64,
    submitted_at: u64,
    done: Option<(u64, Vec<(u64, Agg)>)>,
}

#[derive(Default)]
struct Model {
    now: u64,
    apl: BTreeMap<String, Entry>,
    rows: BTreeMap<String, BTreeMap<u64, Agg>>,
    queries: Vec<QueryState>,
}

fn words_of(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn phrase_in(text: &str, keyword: &str) -> bool {
    let k = words_of(keyword);
    let t = words_of(text);
    !k.is_empty() && t.windows(k.len()).any(|w| w == k.as_slice())
}

fn brute_force(posts: &[Post], keyword: &str, lang: &str, t0: u64, t1: u64, w: u64) -> Vec<(u64, Agg)> {
    let mut out: BTreeMap<u64, Agg> = BTreeMap::new();
    for p in posts {
        if p.created_at < t0 || p.created_at >= t1 || p.lang != lang || !phrase_in(&p.text, keyword) {
            continue;
        }
        let Some(v) = p.polarity else { continue };
        let a = out.entry(t0 + (p.created_at - t0) / w * w).or_default();
        a.sum += v;
        a.m += 1;
        a.pos += u64::from(v == 1);
        a.neg += u64::from(v == -1);
    }
    out.into_iter().collect()
}

fn valid_lang(l: &str) -> bool {
    (2..=3).contains(&l.len()) && l.bytes().all(|b| b.is_ascii_lowercase())
}

fn encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn ap_of(a: &Agg) -> f64 {
    (a.sum as f64 / a.m as f64 + 1.0) / 2.0
}

static WINDOWS_CHECKED: std::sync::atomic::AtomicUsize = std::sync::atomic::AtomicUsize::new(0);

fn check_window(got: &Value, start: u64, a: &Agg) -> Result<(), String> {
    WINDOWS_CHECKED.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let int = |k: &str| got[k].as_i64();
    let expect = [
        ("window_start", start as i64),
        ("polarity_sum", a.sum),
        ("matches", a.m as i64),
        ("positives", a.pos as i64),
        ("negatives", a.neg as i64),
        ("neutral", (a.m - a.pos - a.neg) as i64),
    ];
    for (k, v) in expect {
        if int(k) != Some(v) {
            return Err(format!("window field {k}: got {}, want {v}", got[k]));
        }
    }
    let m = a.m as f64;
    let floats = [
        ("ap", ap_of(a)),
        ("pos_ratio", a.pos as f64 / m),
        ("neg_ratio", a.neg as f64 / m),
        ("neutral_ratio", (a.m - a.pos - a.neg) as f64 / m),
    ];
    for (k, v) in floats {
        let g = got[k].as_f64().ok_or_else(|| format!("window field {k} missing"))?;
        if (g - v).abs() > 1e-12 {
            return Err(format!("window field {k}: got {g}, want {v}"));
        }
    }
    Ok(())
}

fn check_series(got: &Value, want: &[(u64, Agg)]) -> Result<(), String> {
    let arr = got.as_array().ok_or("series is not an array")?;
    if arr.len() != want.len() {
        return Err(format!("series length {} != {}", arr.len(), want.len()));
    }
    for (g, (s, a)) in arr.iter().zip(want) {
        check_window(g, *s, a)?;
    }
    Ok(())
}

fn entry_json(kw: &str, e: &Entry) -> Value {
    json!({
        "keyword": kw,
        "lang": e.lang,
        "added_at": e.added_at,
        "enabled": true,
        "last_run_at": e.last_run_at,
    })
}

struct Harness {
    app: Router,
    clock: Arc<ManualClock>,
    queries: Arc<QueryManager>,
    runner: AplRunner,
    posts: Vec<Post>,
}

impl Harness {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let store = Arc::new(Store::in_memory(8).expect("store"));
        let mut posts = Vec::new();
        for i in 0..600 {
            let n = rng.gen_range(2..=5);
            let mut text = String::new();
            for j in 0..n {
                if j > 0 {
                    text.push_str(SEPARATORS[rng.gen_range(0..SEPARATORS.len())]);
                }
                text.push_str(WORDS[rng.gen_range(0..WORDS.len())]);
            }
            let lang = if rng.gen_bool(0.1) { "es" } else { "en" };
            let created_at = T0 - HOUR + rng.gen_range(0..8 * HOUR);
            let polarity = (!rng.gen_bool(0.1)).then(|| rng.gen_range(-1..=1i64));
            let key = store
                .put_post(PostRecord::new(format!("p{i}"), format!("s{i}"), text.clone(), lang, created_at))
                .expect("put");
            if let Some(v) = polarity {
                let p = match v {
                    -1 => Polarity::Negative,
                    0 => Polarity::Neutral,
                    _ => Polarity::Positive,
                };
                store.update_polarity(&key, p, created_at).expect("classify");
            }
            posts.push(Post {
                text,
                lang,
                created_at,
                polarity,
            });
        }
        let clock = Arc::new(ManualClock::new(T0));
        let results = Arc::new(ResultsStore::in_memory().expect("results"));
        let queries = Arc::new(QueryManager::manual(store.clone(), results.clone(), clock.clone(), 2));
        let runner = AplRunner::new(
            store,
            results.clone(),
            AplConfig {
                window_ms: WINDOW,
                scanners: 2,
                ..AplConfig::default()
            },
        );
        let app = router(AppState::new(results, queries.clone(), clock.clone()));
        Self {
            app,
            clock,
            queries,
            runner,
            posts,
        }
    }

    async fn call(&self, method: Method, uri: &str, body: Option<String>) -> Result<(StatusCode, Option<Value>), String> {
        let mut req = Request::builder().method(method.clone()).uri(uri);
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).map_err(|e| e.to_string())?;
        let resp = self.app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
        let status = resp.status();
        let bytes = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
        let value = if bytes.is_empty() {
            None
        } else {
            Some(serde_json::from_slice::<Value>(&bytes).map_err(|e| format!("{method} {uri}: body is not JSON: {e}"))?)
        };
        if !status.is_success() {
            let v = value.as_ref().ok_or_else(|| format!("{method} {uri}: {status} without body"))?;
            let obj = v.as_object().ok_or("error body is not an object")?;
            let code = obj.get("code").and_then(Value::as_str).unwrap_or("");
            let want = match status.as_u16() {
                400 => "bad_request",
                404 => "not_found",
                409 => "conflict",
                _ => "internal",
            };
            if obj.len() != 2 || code != want || !obj.get("message").is_some_and(Value::is_string) {
                return Err(format!("{method} {uri}: malformed error body {v} for {status}"));
            }
        }
        Ok((status, value))
    }
}

fn expect_status(op: &str, got: StatusCode, want: u16) -> Result<(), String> {
    if got.as_u16() == want {
        Ok(())
    } else {
        Err(format!("{op}: status {got}, model expects {want}"))
    }
}

/// Operation counts per entry of [`OP_NAMES`].
#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub steps: usize,
    pub counts: [usize; 13],
    /// Window rows compared field by field.
    pub windows_checked: usize,
}

pub fn run(steps: usize, seed: u64) -> Result<Summary, String> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(run_async(steps, seed))
}

async fn run_async(steps: usize, seed: u64) -> Result<Summary, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = Harness::new(&mut rng);
    let mut model = Model {
        now: T0,
        ..Model::default()
    };
    let mut summary = Summary {
        steps,
        ..Summary::default()
    };
    let before = WINDOWS_CHECKED.load(std::sync::atomic::Ordering::Relaxed);
    for step in 0..steps {
        let op = rng.gen_range(0..OP_NAMES.len());
        summary.counts[op] += 1;
        step_once(&h, &mut model, &mut rng, op)
            .await
            .map_err(|e| format!("step {step} ({}): {e}", OP_NAMES[op]))?;
    }
    summary.windows_checked = WINDOWS_CHECKED.load(std::sync::atomic::Ordering::Relaxed) - before;
    Ok(summary)
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.gen_range(0..xs.len())]
}

async fn step_once(h: &Harness, model: &mut Model, rng: &mut ChaCha8Rng, op: usize) -> Result<(), String> {
    match op {
        0 => {
            let offset = rng.gen_bool(0.7).then(|| rng.gen_range(0..12usize));
            let limit = rng.gen_bool(0.7).then(|| rng.gen_range(0..6usize));
            let mut uri = "/v1/apl?".to_string();
            if let Some(o) = offset {
                uri.push_str(&format!("offset={o}&"));
            }
            if let Some(l) = limit {
                uri.push_str(&format!("limit={l}"));
            }
            let (status, body) = h.call(Method::GET, &uri, None).await?;
            expect_status("list", status, 200)?;
            let want: Vec<Value> = model
                .apl
                .iter()
                .skip(offset.unwrap_or(0))
                .take(limit.unwrap_or(100))
                .map(|(k, e)| entry_json(k, e))
                .collect();
            if body != Some(Value::Array(want.clone())) {
                return Err(format!("list: got {body:?}, want {want:?}"));
            }
        }
        1 => {
            let q = pick(rng, NEEDLES);
            let (status, body) = h.call(Method::GET, &format!("/v1/apl/search?q={}", encode(q)), None).await?;
            expect_status("search", status, 200)?;
            let needle = q.to_lowercase();
            let want: Vec<Value> = model
                .apl
                .iter()
                .filter(|(k, _)| k.to_lowercase().contains(&needle))
                .map(|(k, e)| entry_json(k, e))
                .collect();
            if body != Some(Value::Array(want.clone())) {
                return Err(format!("search `{q}`: got {body:?}, want {want:?}"));
            }
        }
        2 => {
            let n = rng.gen_range(0..8usize);
            let (status, body) = h.call(Method::GET, &format!("/v1/apl/trending?n={n}"), None).await?;
            if n == 0 {
                return expect_status("trending", status, 400);
            }
            expect_status("trending", status, 200)?;
            let since = model.now.saturating_sub(HOUR);
            let mut ranked: Vec<(String, String, Agg)> = model
                .apl
                .iter()
                .map(|(k, e)| {
                    let mut t = Agg::default();
                    for (_, a) in model.rows.get(k).into_iter().flat_map(|r| r.range(since..)) {
                        t.sum += a.sum;
                        t.m += a.m;
                    }
                    (k.clone(), e.lang.clone(), t)
                })
                .collect();
            ranked.sort_by(|a, b| b.2.m.cmp(&a.2.m).then_with(|| a.0.cmp(&b.0)));
            ranked.truncate(n);
            let got = body.as_ref().and_then(Value::as_array).ok_or("trending: not an array")?;
            if got.len() != ranked.len() {
                return Err(format!("trending: {} entries, want {}", got.len(), ranked.len()));
            }
            for (g, (kw, lang, t)) in got.iter().zip(&ranked) {
                if g["keyword"] != json!(kw) || g["lang"] != json!(lang) || g["matches"] != json!(t.m) {
                    return Err(format!("trending: got {g}, want {kw} {lang} {}", t.m));
                }
                let ap = g.get("ap").and_then(Value::as_f64);
                let want_ap = (t.m > 0).then(|| ap_of(t));
                match (ap, want_ap) {
                    (None, None) => {}
                    (Some(a), Some(b)) if (a - b).abs() <= 1e-12 => {}
                    _ => return Err(format!("trending ap: got {ap:?}, want {want_ap:?}")),
                }
            }
        }
        3 => {
            let kw = pick(rng, PATH_KEYWORDS);
            let from = rng.gen_bool(0.8).then(|| T0 - HOUR + rng.gen_range(0..9 * HOUR));
            let to = rng.gen_bool(0.8).then(|| T0 - HOUR + rng.gen_range(0..9 * HOUR));
            let mut uri = format!("/v1/apl/{}/evolution?", encode(kw));
            if let Some(f) = from {
                uri.push_str(&format!("from={f}&"));
            }
            if let Some(t) = to {
                uri.push_str(&format!("to={t}"));
            }
            let (status, body) = h.call(Method::GET, &uri, None).await?;
            let (f, t) = (from.unwrap_or(0), to.unwrap_or(u64::MAX));
            if f >= t {
                return expect_status("evolution", status, 400);
            }
            if !model.apl.contains_key(kw) {
                return expect_status("evolution", status, 404);
            }
            expect_status("evolution", status, 200)?;
            let want: Vec<(u64, Agg)> = model
                .rows
                .get(kw)
                .into_iter()
                .flat_map(|r| r.range(f..t))
                .map(|(s, a)| (*s, *a))
                .collect();
            check_series(body.as_ref().ok_or("evolution: empty body")?, &want)?;
        }
        4 => {
            let kw = pick(rng, PATH_KEYWORDS);
            let rows = model.rows.get(kw);
            let after = match (rng.gen_range(0..4), rows.and_then(|r| r.keys().nth(rng.gen_range(0..r.len().max(1))))) {
                (0, _) => None,
                (1 | 2, Some(s)) => Some(*s - u64::from(rng.gen_bool(0.5))),
                _ => Some(T0 - HOUR + rng.gen_range(0..9 * HOUR)),
            };
            let uri = match after {
                Some(a) => format!("/v1/apl/{}/next?after={a}", encode(kw)),
                None => format!("/v1/apl/{}/next", encode(kw)),
            };
            let (status, body) = h.call(Method::GET, &uri, None).await?;
            if !model.apl.contains_key(kw) {
                return expect_status("next", status, 404);
            }
            let a = after.unwrap_or(0);
            let next = rows.and_then(|r| r.range(a + 1..).next());
            match next {
                None => {
                    expect_status("next", status, 204)?;
                    if body.is_some() {
                        return Err("next: 204 with a body".into());
                    }
                }
                Some((s, agg)) => {
                    expect_status("next", status, 200)?;
                    check_window(body.as_ref().ok_or("next: empty body")?, *s, agg)?;
                }
            }
        }
        5 => {
            let kw = pick(rng, PATH_KEYWORDS);
            let (status, body) = h.call(Method::DELETE, &format!("/v1/apl/{}", encode(kw)), None).await?;
            if model.apl.remove(kw).is_some() {
                model.rows.remove(kw);
                expect_status("delete", status, 200)?;
                if body != Some(json!({ "deleted": kw })) {
                    return Err(format!("delete: body {body:?}"));
                }
            } else {
                expect_status("delete", status, 404)?;
            }
        }
        6 => {
            let kw = pick(rng, ADD_KEYWORDS);
            let lang = pick(rng, LANGS);
            let payload = if rng.gen_bool(0.03) {
                "{\"keyword\": ".to_string()
            } else if rng.gen_bool(0.2) {
                json!({ "keyword": kw }).to_string()
            } else {
                json!({ "keyword": kw, "lang": lang }).to_string()
            };
            let (status, body) = h.call(Method::POST, "/v1/apl", Some(payload.clone())).await?;
            let parsed: Option<Value> = serde_json::from_str(&payload).ok();
            let Some(parsed) = parsed else {
                return expect_status("add", status, 400);
            };
            let lang = parsed.get("lang").and_then(Value::as_str).unwrap_or("en");
            let trimmed = kw.trim();
            if words_of(trimmed).is_empty() || !valid_lang(lang) {
                return expect_status("add", status, 400);
            }
            if model.apl.contains_key(trimmed) {
                return expect_status("add", status, 409);
            }
            expect_status("add", status, 201)?;
            let e = Entry {
                lang: lang.to_string(),
                added_at: model.now,
                last_run_at: None,
            };
            if body != Some(entry_json(trimmed, &e)) {
                return Err(format!("add: body {body:?}"));
            }
            model.apl.insert(trimmed.to_string(), e);
        }
        7 => {
            let kw = pick(rng, ADD_KEYWORDS);
            let lang = pick(rng, LANGS);
            let t_start = T0 - 2 * HOUR + rng.gen_range(0..10 * HOUR);
            let t_end = (t_start + rng.gen_range(0..4 * HOUR)).saturating_sub(rng.gen_range(0..600_000));
            let window_ms = [0, 30_000, WINDOW, 600_000, HOUR, 4 * HOUR][rng.gen_range(0..6)];
            let payload = json!({
                "keyword": kw, "t_start": t_start, "t_end": t_end, "lang": lang, "window_ms": window_ms,
            });
            let (status, body) = h.call(Method::POST, "/v1/queries", Some(payload.to_string())).await?;
            let valid = !words_of(kw).is_empty()
                && t_start < t_end
                && window_ms > 0
                && window_ms <= t_end - t_start
                && valid_lang(lang);
            if !valid {
                return expect_status("submit", status, 400);
            }
            expect_status("submit", status, 202)?;
            let id = model.queries.len() as u64 + 1;
            if body != Some(json!({ "query_id": id })) {
                return Err(format!("submit: body {body:?}, want id {id}"));
            }
            model.queries.push(QueryState {
                keyword: kw.to_string(),
                t_start,
                t_end,
                lang: lang.to_string(),
                window_ms,
                submitted_at: model.now,
                done: None,
            });
        }
        8 => {
            let q = pick(rng, NEEDLES);
            let (status, body) = h.call(Method::GET, &format!("/v1/queries/search?q={}", encode(q)), None).await?;
            expect_status("query search", status, 200)?;
            let needle = q.to_lowercase();
            let want: Vec<(u64, &QueryState)> = model
                .queries
                .iter()
                .enumerate()
                .rev()
                .filter(|(_, s)| s.done.is_some() && s.keyword.to_lowercase().contains(&needle))
                .map(|(i, s)| (i as u64 + 1, s))
                .collect();
            let got = body.as_ref().and_then(Value::as_array).ok_or("query search: not an array")?;
            if got.len() != want.len() {
                return Err(format!("query search `{q}`: {} hits, want {}", got.len(), want.len()));
            }
            for (g, (id, s)) in got.iter().zip(want) {
                let (done_at, rows) = s.done.as_ref().expect("filtered on done");
                let expect = json!({
                    "query_id": id,
                    "query": query_json(s),
                    "status": "done",
                    "submitted_at": s.submitted_at,
                    "completed_at": done_at,
                    "windows": rows.len(),
                });
                if *g != expect {
                    return Err(format!("query search: got {g}, want {expect}"));
                }
            }
        }
        9 => {
            let id = rng.gen_range(0..model.queries.len() as u64 + 3);
            let (status, body) = h.call(Method::GET, &format!("/v1/queries/{id}/results"), None).await?;
            let Some(s) = id.checked_sub(1).and_then(|i| model.queries.get(i as usize)) else {
                return expect_status("results", status, 404);
            };
            expect_status("results", status, 200)?;
            let body = body.ok_or("results: empty body")?;
            let (status_str, completed, rows) = match &s.done {
                Some((t, rows)) => ("done", json!(t), rows.clone()),
                None => ("pending", Value::Null, Vec::new()),
            };
            if body["query_id"] != json!(id)
                || body["query"] != query_json(s)
                || body["status"] != json!(status_str)
                || body["submitted_at"] != json!(s.submitted_at)
                || body["completed_at"] != completed
                || body.get("error").is_some()
            {
                return Err(format!("results: got {body}"));
            }
            check_series(&body["results"], &rows)?;
        }
        10 => {
            let dt = rng.gen_range(0..60_000);
            if model.now + dt < T0 + 8 * HOUR {
                h.clock.advance_ms(dt);
                model.now += dt;
            }
        }
        11 => {
            let report = h.runner.run_cycle(model.now);
            if !report.failed.is_empty() {
                return Err(format!("cycle failures: {:?}", report.failed));
            }
            for (kw, e) in model.apl.iter_mut() {
                let end = model.now / WINDOW * WINDOW;
                let start = e.last_run_at.unwrap_or(e.added_at / WINDOW * WINDOW);
                if start >= end {
                    continue;
                }
                let rows = model.rows.entry(kw.clone()).or_default();
                rows.extend(brute_force(&h.posts, kw, &e.lang, start, end, WINDOW));
                e.last_run_at = Some(end);
            }
        }
        12 => {
            h.queries.run_pending();
            for s in model.queries.iter_mut().filter(|s| s.done.is_none()) {
                let rows = brute_force(&h.posts, &s.keyword, &s.lang, s.t_start, s.t_end, s.window_ms);
                s.done = Some((model.now, rows));
            }
        }
        _ => unreachable!(),
    }
    Ok(())
}

fn query_json(s: &QueryState) -> Value {
    json!({
        "keyword": s.keyword,
        "t_start": s.t_start,
        "t_end": s.t_end,
        "lang": s.lang,
        "window_ms": s.window_ms,
        "mode": "ondemand",
    })
}
