//! Scripted chat-completion server for hermetic runs.
//!
//! A script maps sample id to an ordered list of responses:
//!
//! ```json
//! {
//!   "s1": ["no tags here", "<think>..</think><answer>correct</answer>"],
//!   "s2": [{"status": 503, "body": "overloaded"}, "<think>..</think><answer>wrong</answer>"]
//! }
//! ```
//!
//! The n-th request for an id gets the n-th entry. Once the list is used up
//! the last entry is repeated. Requests for unknown ids get 404, requests
//! without an `x-sample-id` header get 400.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::json;
use tiny_http::{Header, Method, Request, Response, Server};

use super::{COMPLETIONS_PATH, SAMPLE_ID_HEADER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockResponse {
    /// Served as `choices[0].message.content`.
    Content(String),
    /// Raw status and body, for error paths.
    Status { status: u16, body: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockScript {
    pub responses: BTreeMap<String, Vec<MockResponse>>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, id: impl Into<String>, responses: impl IntoIterator<Item = MockResponse>) -> Self {
        self.responses.insert(id.into(), responses.into_iter().collect());
        self
    }

    /// Shorthand for a list of plain-content responses.
    pub fn with_texts<S: Into<String>>(self, id: impl Into<String>, texts: impl IntoIterator<Item = S>) -> Self {
        self.with(id, texts.into_iter().map(|t| MockResponse::Content(t.into())))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let script: MockScript = serde_json::from_str(text)?;
        if let Some((id, _)) = script.responses.iter().find(|(_, r)| r.is_empty()) {
            return Err(Error::Config(format!("mock script entry `{id}` has no responses")));
        }
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

struct State {
    script: MockScript,
    served: Mutex<HashMap<String, usize>>,
}

impl State {
    fn next_for(&self, id: &str) -> Option<MockResponse> {
        let list = self.script.responses.get(id)?;
        let mut served = self.served.lock().unwrap_or_else(|p| p.into_inner());
        let n = served.entry(id.to_string()).or_insert(0);
        let resp = list[(*n).min(list.len() - 1)].clone();
        *n += 1;
        Some(resp)
    }
}

/// Mock server running on a background thread. Stops when dropped.
pub struct MockServer {
    server: Arc<Server>,
    addr: SocketAddr,
    state: Arc<State>,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `127.0.0.1:port`; port 0 picks a free port.
    pub fn start(script: MockScript, port: u16) -> Result<Self> {
        let server = Server::http(("127.0.0.1", port)).map_err(|e| Error::Transport(format!("mock bind: {e}")))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Transport("mock server has no ip address".into()))?;
        let server = Arc::new(server);
        let state = Arc::new(State {
            script,
            served: Mutex::new(HashMap::new()),
        });
        let worker = {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            std::thread::spawn(move || {
                for req in server.incoming_requests() {
                    handle(&state, req);
                }
            })
        };
        Ok(MockServer {
            server,
            addr,
            state,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests served so far for `id`.
    pub fn served(&self, id: &str) -> usize {
        let served = self.state.served.lock().unwrap_or_else(|p| p.into_inner());
        served.get(id).copied().unwrap_or(0)
    }

    /// Blocks until the serving thread exits.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn handle(state: &State, mut req: Request) {
    let (status, body) = route(state, &mut req);
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    let resp = Response::from_string(body).with_status_code(status).with_header(header);
    if let Err(e) = req.respond(resp) {
        tracing::debug!(error = %e, "mock client went away");
    }
}

fn route(state: &State, req: &mut Request) -> (u16, String) {
    if req.method() != &Method::Post || req.url() != COMPLETIONS_PATH {
        return (404, json!({"error": "not found"}).to_string());
    }
    let mut raw = String::new();
    if std::io::Read::read_to_string(req.as_reader(), &mut raw).is_err()
        || serde_json::from_str::<serde_json::Value>(&raw).map_or(true, |v| !v["messages"].is_array())
    {
        return (400, json!({"error": "expected a chat-completion request"}).to_string());
    }
    let id = req
        .headers()
        .iter()
        .find(|h| h.field.equiv(SAMPLE_ID_HEADER))
        .map(|h| h.value.as_str().to_string());
    let Some(id) = id else {
        return (400, json!({"error": format!("missing {SAMPLE_ID_HEADER} header")}).to_string());
    };
    match state.next_for(&id) {
        None => (404, json!({"error": format!("no script for sample `{id}`")}).to_string()),
        Some(MockResponse::Status { status, body }) => (status, body),
        Some(MockResponse::Content(text)) => (
            200,
            json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}).to_string(),
        ),
    }
}
