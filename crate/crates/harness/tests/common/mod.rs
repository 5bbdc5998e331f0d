#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Once};
use std::thread::JoinHandle;

use serde_json::{json, Value};
use tempfile::TempDir;
use xdialect_core::BenchmarkFormat;
use xdialect_engines::fixtures::{write_mini_benchmark, MINI_CASES, MINI_DB};
use xdialect_harness::{BenchmarkSource, HarnessConfig, ModelEndpoint};

pub const TOKEN_VAR: &str = "XDIALECT_TEST_TOKEN";
pub const MODEL: &str = "mock-model";

/// A local chat endpoint whose answers come from a closure over the
/// request number (from 0) and the parsed request body.
pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(usize, &Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind mock server"));
        let port = server.server_addr().to_ip().expect("tcp address").port();
        let hits = Arc::new(AtomicUsize::new(0));
        let thread = std::thread::spawn({
            let server = Arc::clone(&server);
            let hits = Arc::clone(&hits);
            move || {
                for mut req in server.incoming_requests() {
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let n = hits.fetch_add(1, Ordering::SeqCst);
                    let parsed: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
                    let (status, text) = handler(n, &parsed);
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                    let _ = req.respond(tiny_http::Response::from_string(text).with_status_code(status).with_header(header));
                }
            }
        });
        MockServer { url: format!("http://127.0.0.1:{port}/v1"), hits, server, thread: Some(thread) }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Chat-completion response carrying `content`.
pub fn chat_reply(content: &str) -> String {
    json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}).to_string()
}

/// The question text of a generation request.
pub fn question_of(body: &Value) -> String {
    let user = body["messages"]
        .as_array()
        .and_then(|m| m.iter().find(|m| m["role"] == "user"))
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default();
    user.lines().next().unwrap_or_default().trim_start_matches("Question: ").to_string()
}

/// Mini case id for a question.
pub fn case_of(body: &Value) -> Option<i64> {
    let q = question_of(body);
    MINI_CASES.iter().find(|c| c.question == q).map(|c| c.id)
}

/// Answers every question with its SQLite gold query, except the ids in
/// `wrong`, which get a query that runs but answers something else.
pub fn answering_model(wrong: &'static [i64]) -> impl Fn(usize, &Value) -> (u16, String) + Send + Sync {
    move |_, body| {
        let Some(id) = case_of(body) else { return (400, "{\"error\":\"unknown question\"}".into()) };
        let sql = if wrong.contains(&id) {
            "SELECT name FROM customers WHERE id = -1".to_string()
        } else {
            MINI_CASES[id as usize].sqlite.to_string()
        };
        (200, chat_reply(&format!("Here you go:\n```sql\n{sql};\n```")))
    }
}

pub struct Fixture {
    pub dir: TempDir,
    pub source: BenchmarkSource,
}

impl Fixture {
    /// The first `n` mini cases as a Spider-style file, plus the shop
    /// database under `db/`.
    pub fn new(n: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let db_root = dir.path().join("db");
        write_mini_benchmark(&db_root).unwrap();
        let items: Vec<Value> = MINI_CASES
            .iter()
            .take(n)
            .map(|c| json!({"question": c.question, "query": c.sqlite, "db_id": MINI_DB}))
            .collect();
        let path = dir.path().join("dev.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&items).unwrap()).unwrap();
        let source = BenchmarkSource { path, format: BenchmarkFormat::SpiderJson, db_root, name: Some("mini".into()) };
        Fixture { dir, source }
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.dir.path().join("runs")
    }

    /// Fast retries, one model endpoint at `url`.
    pub fn config(&self, url: &str) -> HarnessConfig {
        static TOKEN: Once = Once::new();
        TOKEN.call_once(|| std::env::set_var(TOKEN_VAR, "test-token"));
        let mut endpoint = ModelEndpoint::new(MODEL, url);
        endpoint.auth_env = Some(TOKEN_VAR.into());
        endpoint.request_timeout_s = 10;
        HarnessConfig {
            runs_dir: self.runs_dir(),
            endpoints: vec![endpoint],
            retry_backoff_ms: 1,
            parallelism: 4,
            pool_size: 4,
            ..HarnessConfig::default()
        }
    }
}
