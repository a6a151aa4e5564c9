// Local OpenAI-style chat server. It answers each game prompt with the
// closest presented link (or "0" without a graph) and records every request.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use wikirace_core::graph::{DistanceCache, PageGraph};

#[derive(Debug, Clone)]
pub struct Seen {
    pub auth: Option<String>,
    pub body: Value,
}

#[derive(Default)]
pub struct StubState {
    /// Status codes to return before answering normally.
    pub failures: Mutex<VecDeque<u16>>,
    pub always: Option<u16>,
    pub requests: Mutex<Vec<Seen>>,
    pub graph: Option<(Arc<PageGraph>, Arc<DistanceCache>)>,
    /// When set, usage carries this provider cost.
    pub cost: Option<f64>,
}

pub struct Stub {
    pub addr: SocketAddr,
    pub state: Arc<StubState>,
}

impl Stub {
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> Vec<Seen> {
        self.state.requests.lock().unwrap().clone()
    }
}

fn between<'a>(s: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let i = s.find(start)? + start.len();
    let j = s[i..].find(end)? + i;
    Some(&s[i..j])
}

fn answer(state: &StubState, prompt: &str) -> String {
    let Some((g, cache)) = &state.graph else {
        return "0".into();
    };
    let target = between(prompt, "want to reach page \"", "\" by clicking").unwrap();
    let field = cache.get(g.lookup(target).unwrap()).unwrap();
    let links = prompt.split("from the current page:\n\n").nth(1).unwrap();
    let best = links
        .lines()
        .take_while(|l| !l.is_empty())
        .filter_map(|l| {
            let (i, title) = l.split_once(". ")?;
            Some((field.get(g.lookup(title)?), i.parse::<usize>().ok()?))
        })
        .min()
        .unwrap();
    format!("The closest looks like option {}. \\boxed{{{}}}", best.1, best.1)
}

async fn chat(State(state): State<Arc<StubState>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let n = {
        let mut reqs = state.requests.lock().unwrap();
        reqs.push(Seen {
            auth: headers
                .get("authorization")
                .and_then(|v| v.to_str().ok())
                .map(str::to_owned),
            body: body.clone(),
        });
        reqs.len()
    };
    let fail = state.always.or_else(|| state.failures.lock().unwrap().pop_front());
    if let Some(code) = fail {
        let status = StatusCode::from_u16(code).unwrap();
        return (status, Json(json!({"error": {"message": "stub failure"}}))).into_response();
    }
    let prompt = body["messages"]
        .as_array()
        .and_then(|m| m.last())
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default()
        .to_owned();
    let mut usage = json!({"prompt_tokens": 100 + n as u64, "completion_tokens": 7, "total_tokens": 107 + n as u64});
    if let Some(c) = state.cost {
        usage["cost"] = json!(c);
    }
    Json(json!({
        "id": format!("chatcmpl-{n}"),
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": answer(&state, &prompt)}, "finish_reason": "stop"}],
        "usage": usage,
    }))
    .into_response()
}

/// Starts the stub on its own thread and runtime.
pub fn start(state: StubState) -> Stub {
    let state = Arc::new(state);
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .with_state(Arc::clone(&state));
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    Stub {
        addr: rx.recv().unwrap(),
        state,
    }
}
