// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tempfile::TempDir;

use sentiflow_cli::cli::ServeArgs;
use sentiflow_cli::serve::serve;
use sentiflow_cli::services::load_config;
use sentiflow_core::aggregate::results::{ResultsStore, CSV_HEADER};
use sentiflow_core::aggregate::{Tuple, WindowAggregate};
use sentiflow_core::clock;
use sentiflow_core::Polarity;

const T: u64 = 1_500_000_000_000;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden() -> Vec<WindowAggregate> {
    serde_json::from_str(&std::fs::read_to_string(fixture("coffee_golden.json")).unwrap()).unwrap()
}

struct Node {
    dir: TempDir,
}

impl Node {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("sf.toml"),
            "results_db = \"results.db\"\n\n[storage]\ndata_dir = \"posts\"\nnum_buckets = 4\n\n\
             [buffers]\nsnapshot_path = \"buffers.json\"\n\n[api]\nbind = \"127.0.0.1:0\"\n",
        )
        .unwrap();
        Self { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("sf.toml")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_sentiflow"))
            .arg("--config")
            .arg(self.config())
            .args(["--log", "warn"])
            .args(args)
            .output()
            .unwrap()
    }

    fn run_ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn replay_fixture(&self) -> Value {
        serde_json::from_str(&self.run_ok(&["replay", fixture("coffee.jsonl").to_str().unwrap()])).unwrap()
    }

    fn query_json(&self) -> Value {
        let out = self.run_ok(&[
            "query",
            "coffee",
            "--from",
            &T.to_string(),
            "--to",
            &(T + 120_000).to_string(),
            "--window-ms",
            "60000",
        ]);
        serde_json::from_str(&out).unwrap()
    }
}

fn http(addr: SocketAddr, method: &str, path: &str, body: Option<&Value>) -> (u16, Value) {
    let mut stream = TcpStream::connect(addr).unwrap();
    let payload = body.map(Value::to_string).unwrap_or_default();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: test\r\nConnection: close\r\nContent-Type: application/json\r\n\
         Content-Length: {}\r\n\r\n{payload}",
        payload.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let status: u16 = raw.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = raw.split_once("\r\n\r\n").map(|(_, b)| b).unwrap_or("");
    let value = if body.is_empty() { Value::Null } else { serde_json::from_str(body).unwrap() };
    (status, value)
}

fn serve_args() -> ServeArgs {
    ServeArgs {
        bind: None,
        ui_dir: None,
        synthetic_rate: None,
        replay: None,
        seed: 1,
        drain_timeout_s: 30,
    }
}

#[test]
fn replay_then_query_reproduces_the_golden_series() {
    let node = Node::new();
    let report = node.replay_fixture();
    assert_eq!(report["ingested"], 10);
    assert_eq!(report["duplicates"], 1);
    assert_eq!(report["classified"], 10);
    assert_eq!(report["posts_stored"], 10);

    let q = node.query_json();
    let windows: Vec<WindowAggregate> = serde_json::from_value(q["windows"].clone()).unwrap();
    assert_eq!(windows, golden());
    assert_eq!(q["totals"]["matches"], 7);

    // The dedup set survives the restart through the buffer snapshot.
    let again = node.replay_fixture();
    assert_eq!(again["ingested"], 0);
    assert_eq!(again["duplicates"], 11);
}

#[test]
fn served_api_answers_like_the_query_command() {
    let node = Node::new();
    node.replay_fixture();
    let cli_windows = node.query_json()["windows"].clone();

    let config = load_config(Some(&node.config())).unwrap();
    let (tx_addr, rx_addr) = std::sync::mpsc::channel();
    let (tx_stop, rx_stop) = tokio::sync::oneshot::channel::<()>();
    let server = std::thread::spawn(move || {
        serve(
            config,
            &serve_args(),
            clock::system(),
            async move {
                let _ = rx_stop.await;
            },
            move |addr| tx_addr.send(addr).unwrap(),
        )
    });
    let addr = rx_addr.recv_timeout(Duration::from_secs(30)).unwrap();
    assert_eq!(http(addr, "GET", "/v1/health", None), (200, json!({"status": "ok"})));

    let q = json!({"keyword": "coffee", "t_start": T, "t_end": T + 120_000, "window_ms": 60_000});
    let (status, body) = http(addr, "POST", "/v1/queries", Some(&q));
    assert_eq!(status, 202);
    let path = format!("/v1/queries/{}/results", body["query_id"]);
    let deadline = Instant::now() + Duration::from_secs(30);
    let record = loop {
        let (_, r) = http(addr, "GET", &path, None);
        if r["status"] == "done" {
            break r;
        }
        assert!(Instant::now() < deadline, "query never finished: {r}");
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(record["results"], cli_windows);

    let (status, body) = http(addr, "GET", "/v1/nowhere", None);
    assert_eq!((status, body["code"].clone()), (404, json!("not_found")));

    tx_stop.send(()).unwrap();
    let report = server.join().unwrap().unwrap();
    assert_eq!(report.left_in_buffers, 0);
    assert_eq!(report.posts_stored, 10);
}

#[test]
fn serve_crawls_a_replay_source_and_drains_on_shutdown() {
    let node = Node::new();
    let config = load_config(Some(&node.config())).unwrap();
    let args = ServeArgs {
        replay: Some(fixture("coffee.jsonl")),
        ..serve_args()
    };
    let (tx_addr, rx_addr) = std::sync::mpsc::channel();
    let (tx_stop, rx_stop) = tokio::sync::oneshot::channel::<()>();
    let server = std::thread::spawn(move || {
        serve(
            config,
            &args,
            clock::system(),
            async move {
                let _ = rx_stop.await;
            },
            move |addr| tx_addr.send(addr).unwrap(),
        )
    });
    let addr = rx_addr.recv_timeout(Duration::from_secs(30)).unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    while http(addr, "GET", "/v1/stats", None).1["drained_total"] != 10 {
        assert!(Instant::now() < deadline, "replayed posts never stored");
        std::thread::sleep(Duration::from_millis(50));
    }
    tx_stop.send(()).unwrap();
    let report = server.join().unwrap().unwrap();
    assert_eq!(report.crawl.ingested, 10);
    assert_eq!(report.drained_total, 10);
    assert_eq!(report.left_in_buffers, 0);
    assert_eq!(node.query_json()["windows"], serde_json::to_value(golden()).unwrap());
}

#[test]
fn usage_errors_exit_with_2() {
    let node = Node::new();
    let bad_interval = node.run(&["query", "coffee", "--from", "10", "--to", "10"]);
    assert_eq!(bad_interval.status.code(), Some(2));
    let wide_window = node.run(&["query", "coffee", "--from", "0", "--to", "10", "--window-ms", "11"]);
    assert_eq!(wide_window.status.code(), Some(2));
    assert_eq!(node.run(&["no-such-command"]).status.code(), Some(2));

    std::fs::write(node.config(), "[storage]\nbuckets = 3\n").unwrap();
    assert_eq!(node.run(&["config"]).status.code(), Some(2));
}

#[test]
fn csv_flag_writes_a_parseable_file() {
    let node = Node::new();
    node.replay_fixture();
    let path = node.dir.path().join("out.csv");
    node.run_ok(&[
        "query",
        "coffee",
        "--from",
        &T.to_string(),
        "--to",
        &(T + 120_000).to_string(),
        "--window-ms",
        "60000",
        "--csv",
        path.to_str().unwrap(),
    ]);
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER.to_vec());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let want = golden();
    assert_eq!(rows.len(), want.len());
    for (r, w) in rows.iter().zip(&want) {
        assert_eq!(&r[0], "coffee");
        assert_eq!(r[3].parse::<u64>().unwrap(), w.window_start);
        assert_eq!(r[5].parse::<u64>().unwrap(), w.matches);
        assert_eq!(r[9].parse::<f64>().unwrap(), w.ap);
    }
}

#[test]
fn trained_model_file_drives_classify() {
    let node = Node::new();
    let model = node.dir.path().join("model.json");
    let report: Value =
        serde_json::from_str(&node.run_ok(&["train-model", "--out", model.to_str().unwrap()])).unwrap();
    assert_eq!(report["docs"], 300);
    assert!(report["cv_accuracy"].as_f64().unwrap() >= report["majority_baseline"].as_f64().unwrap() + 0.10);

    let out = node.run_ok(&[
        "classify",
        "--model",
        model.to_str().unwrap(),
        "i love this great coffee",
        "awful, terrible service",
        "meeting at noon",
    ]);
    let got: Vec<i64> = out
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["polarity"].as_i64().unwrap())
        .collect();
    assert_eq!(got, vec![1, -1, 0]);

    std::fs::write(&model, "{\"format\": \"nope\"}").unwrap();
    let broken = node.run(&["classify", "--model", model.to_str().unwrap(), "x"]);
    assert_eq!(broken.status.code(), Some(1));
}

#[test]
fn export_writes_automated_rows() {
    let node = Node::new();
    {
        let results = ResultsStore::open(&node.dir.path().join("results.db")).unwrap();
        results.apl_add("coffee", "en", T).unwrap();
        let mut t = Tuple::default();
        t.add(Tuple::of(Polarity::Positive));
        let row = WindowAggregate::from_tuple(T, t).unwrap();
        results.record_automated_run("coffee", &[row], T + 60_000).unwrap();
    }
    let out = node.run_ok(&["export", "--keyword", "coffee"]);
    let mut reader = csv::Reader::from_reader(out.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][3], T.to_string());
    assert_eq!(node.run(&["export", "--query-id", "42"]).status.code(), Some(2));
}

#[test]
fn generate_is_deterministic() {
    let node = Node::new();
    let a = node.run_ok(&["generate", "--rate", "5", "--duration-s", "60", "--seed", "9"]);
    let b = node.run_ok(&["generate", "--rate", "5", "--duration-s", "60", "--seed", "9"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 300);
}

#[test]
fn bench_commands_emit_reports() {
    let node = Node::new();
    let ingest: Value = serde_json::from_str(&node.run_ok(&[
        "bench-ingest", "--rate", "5", "--duration-s", "60", "--threads", "1,2", "--json",
    ]))
    .unwrap();
    let rows = ingest["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["posts"], rows[1]["posts"]);

    let pipeline: Value = serde_json::from_str(&node.run_ok(&[
        "bench-pipeline", "--load", "200", "--duration-s", "30", "--hints", "1,1,1,1,2,6,2", "--json",
    ]))
    .unwrap();
    assert_eq!(pipeline[0]["hints"], "1-1-1-1-2-6-2");
    assert_eq!(pipeline[0]["completion_pct"], 100.0);

    let agg: Value = serde_json::from_str(&node.run_ok(&[
        "bench-aggregate", "--sizes", "500,1000", "--scanners", "1", "--repeats", "1", "--json",
    ]))
    .unwrap();
    assert_eq!(agg["by_size"].as_array().unwrap().len(), 2);
}
