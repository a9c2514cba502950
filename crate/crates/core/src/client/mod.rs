//! Chat-completion client with retries and malformed-output resampling.
//!
//! Requests go to `POST {base_url}/v1/chat/completions` with body
//! `{"model", "messages": [{"role": "user", "content"}], "temperature", "max_tokens"}`.
//! Only `choices[0].message.content` of the response is read. Every request
//! also carries an `x-sample-id` header so the scripted [`mock`] server can
//! look up its response sequence.

pub mod mock;

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{PatchSample, Verdict};
use crate::error::{Error, Result};
use crate::parser::{self, ParsedResponse};
use crate::prompt::{build_prompt, PromptTemplate, RenderedPrompt};

pub use mock::{MockResponse, MockScript, MockServer};

pub const COMPLETIONS_PATH: &str = "/v1/chat/completions";
pub const SAMPLE_ID_HEADER: &str = "x-sample-id";

/// Longest response-body excerpt kept in an [`Error::Http`].
const BODY_EXCERPT: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key. Empty, or naming
    /// an unset variable, means anonymous requests.
    #[serde(default)]
    pub api_key_env_var: String,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
    /// Extra tries after the first on network errors and timeouts.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_resamples")]
    pub max_resamples: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// First retry delay; doubles on each further retry.
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    2
}
fn default_resamples() -> u32 {
    3
}
fn default_temperature() -> f64 {
    0.6
}
fn default_max_tokens() -> u32 {
    2048
}
fn default_backoff() -> u64 {
    250
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env_var: String::new(),
            timeout_seconds: default_timeout(),
            max_retries: default_retries(),
            max_resamples: default_resamples(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            retry_backoff_ms: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_seconds > 0.0 && self.timeout_seconds.is_finite()) {
            return Err(Error::Config("timeout_seconds must be positive".into()));
        }
        if self.max_resamples < 1 {
            return Err(Error::Config("max_resamples must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("temperature must be non-negative".into()));
        }
        if self.base_url.trim().is_empty() {
            return Err(Error::Config("base_url is empty".into()));
        }
        Ok(())
    }

    /// Reads TOML when the extension is `.toml`, JSON otherwise.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: EndpointConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn api_key(&self) -> Option<String> {
        if self.api_key_env_var.is_empty() {
            return None;
        }
        std::env::var(&self.api_key_env_var).ok().filter(|k| !k.is_empty())
    }

    pub fn completions_url(&self) -> String {
        format!("{}{COMPLETIONS_PATH}", self.base_url.trim_end_matches('/'))
    }
}

/// Anything that turns a rendered prompt into raw model text.
pub trait Completer: Sync {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<String>;

    fn max_resamples(&self) -> u32;
}

/// Blocking HTTP client for one endpoint. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct EndpointClient {
    cfg: EndpointConfig,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl EndpointClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        cfg.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_seconds))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let api_key = cfg.api_key();
        if api_key.is_none() && !cfg.api_key_env_var.is_empty() {
            tracing::warn!(var = %cfg.api_key_env_var, "api key variable unset, sending anonymous requests");
        }
        Ok(EndpointClient { cfg, http, api_key })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn send_once(&self, prompt: &RenderedPrompt) -> Result<String> {
        let body = json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        let mut req = self
            .http
            .post(self.cfg.completions_url())
            .header(SAMPLE_ID_HEADER, &prompt.sample_id)
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Http {
                status: status.as_u16(),
                body: excerpt(&text),
            });
        }
        extract_content(&text)
    }
}

impl Completer for EndpointClient {
    /// Network errors and timeouts are retried `max_retries` times with
    /// exponential backoff. HTTP error statuses are returned at once.
    fn complete(&self, prompt: &RenderedPrompt) -> Result<String> {
        let mut delay = Duration::from_millis(self.cfg.retry_backoff_ms);
        let mut tries = 0;
        loop {
            tries += 1;
            match self.send_once(prompt) {
                Err(Error::Transport(msg)) if tries <= self.cfg.max_retries => {
                    tracing::debug!(sample = %prompt.sample_id, tries, %msg, "retrying");
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(Error::Transport(msg)) => {
                    return Err(Error::Transport(format!("{msg} (after {tries} tries)")));
                }
                other => return other,
            }
        }
    }

    fn max_resamples(&self) -> u32 {
        self.cfg.max_resamples
    }
}

/// One-shot convenience wrapper around [`EndpointClient::complete`].
pub fn complete(cfg: &EndpointConfig, prompt: &RenderedPrompt) -> Result<String> {
    EndpointClient::new(cfg.clone())?.complete(prompt)
}

fn excerpt(body: &str) -> String {
    match body.char_indices().nth(BODY_EXCERPT) {
        Some((cut, _)) => format!("{}…", &body[..cut]),
        None => body.to_string(),
    }
}

/// Pulls `choices[0].message.content` out of a response body. A null content
/// reads as empty text.
pub fn extract_content(body: &str) -> Result<String> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| Error::Protocol(format!("response is not JSON: {e}")))?;
    let msg = v
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .ok_or_else(|| Error::Protocol("response has no choices[0].message".into()))?;
    match msg.get("content") {
        None | Some(serde_json::Value::Null) => Ok(String::new()),
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(Error::Protocol(format!("message content is not text: {other}"))),
    }
}

/// Everything that happened while assessing one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub sample_id: String,
    pub attempts: u32,
    /// Parse of the last attempt.
    #[serde(rename = "final")]
    pub final_response: ParsedResponse,
    /// One entry per attempt; empty text for attempts that failed in transport.
    pub raw_outputs: Vec<String>,
    pub verdict: Option<Verdict>,
    pub latencies_ms: Vec<f64>,
    /// One entry per attempt; `None` when the endpoint answered.
    pub errors: Vec<Option<String>>,
    pub unresolved: bool,
}

impl AssessmentRecord {
    /// True when no attempt reached the endpoint.
    pub fn transport_failed(&self) -> bool {
        self.attempts > 0 && self.errors.iter().all(Option::is_some)
    }

    pub fn validate(&self, max_resamples: u32) -> Result<()> {
        let n = self.attempts as usize;
        if self.attempts > max_resamples {
            return Err(Error::invalid(format!(
                "record `{}` has {} attempts, limit {max_resamples}",
                self.sample_id, self.attempts
            )));
        }
        for (what, len) in [
            ("raw_outputs", self.raw_outputs.len()),
            ("latencies_ms", self.latencies_ms.len()),
            ("errors", self.errors.len()),
        ] {
            if len != n {
                return Err(Error::LengthMismatch {
                    context: format!("record `{}` {what}", self.sample_id),
                    expected: n,
                    actual: len,
                });
            }
        }
        if self.verdict.is_some() != self.final_response.is_wellformed() || self.unresolved == self.verdict.is_some() {
            return Err(Error::invalid(format!(
                "record `{}` verdict disagrees with its final response",
                self.sample_id
            )));
        }
        Ok(())
    }
}

/// Sends the same rendered prompt up to `max_resamples` times, stopping at the
/// first well-formed response. The temperature is never changed between tries.
/// Transport errors count as failed attempts and never escape.
pub fn assess_prompt<C: Completer + ?Sized>(client: &C, prompt: &RenderedPrompt) -> AssessmentRecord {
    let mut rec = AssessmentRecord {
        sample_id: prompt.sample_id.clone(),
        attempts: 0,
        final_response: ParsedResponse::default(),
        raw_outputs: Vec::new(),
        verdict: None,
        latencies_ms: Vec::new(),
        errors: Vec::new(),
        unresolved: true,
    };
    for _ in 0..client.max_resamples() {
        let started = Instant::now();
        let outcome = client.complete(prompt);
        rec.latencies_ms.push(started.elapsed().as_secs_f64() * 1e3);
        rec.attempts += 1;
        let text = match outcome {
            Ok(text) => {
                rec.errors.push(None);
                text
            }
            Err(e) => {
                tracing::warn!(sample = %prompt.sample_id, error = %e, "attempt failed");
                rec.errors.push(Some(e.to_string()));
                String::new()
            }
        };
        rec.final_response = parser::parse(&text);
        rec.raw_outputs.push(text);
        if rec.final_response.is_wellformed() {
            rec.verdict = rec.final_response.verdict;
            rec.unresolved = false;
            break;
        }
    }
    rec
}

pub fn assess_with_resample<C: Completer + ?Sized>(
    client: &C,
    sample: &PatchSample,
    template: &PromptTemplate,
) -> AssessmentRecord {
    assess_prompt(client, &build_prompt(sample, template))
}

/// Assesses samples on at most `parallelism` threads. Output order matches
/// input order.
pub fn assess_batch<C: Completer + ?Sized>(
    client: &C,
    samples: &[PatchSample],
    template: &PromptTemplate,
    parallelism: usize,
) -> Result<Vec<AssessmentRecord>> {
    use rayon::prelude::*;
    if parallelism == 0 {
        return Err(Error::invalid("parallelism must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        samples
            .par_iter()
            .map(|s| assess_with_resample(client, s, template))
            .collect()
    }))
}

pub fn records_to_jsonl(records: &[AssessmentRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_records(text: &str) -> Result<Vec<AssessmentRecord>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AssessmentRecord = serde_json::from_str(line).map_err(|e| Error::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.sample_id.clone()) {
            return Err(Error::DuplicateId {
                id: rec.sample_id,
                line: i + 1,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<AssessmentRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Scripted {
        outputs: Mutex<Vec<Result<String>>>,
        max: u32,
    }

    impl Completer for Scripted {
        fn complete(&self, _: &RenderedPrompt) -> Result<String> {
            self.outputs.lock().unwrap().remove(0)
        }
        fn max_resamples(&self) -> u32 {
            self.max
        }
    }

    fn prompt() -> RenderedPrompt {
        RenderedPrompt {
            text: "p".into(),
            sample_id: "s1".into(),
        }
    }

    const GOOD_C: &str = "<think>ok</think><answer>correct</answer>";

    #[test]
    fn resample_stops_at_first_wellformed() {
        let c = Scripted {
            outputs: Mutex::new(vec![Ok("no tags".into()), Ok(GOOD_C.into()), Ok("unused".into())]),
            max: 3,
        };
        let r = assess_prompt(&c, &prompt());
        assert_eq!(r.attempts, 2);
        assert_eq!(r.verdict, Some(Verdict::Correct));
        assert_eq!(r.raw_outputs, vec!["no tags".to_string(), GOOD_C.to_string()]);
        r.validate(3).unwrap();
    }

    #[test]
    fn transport_errors_become_unresolved() {
        let c = Scripted {
            outputs: Mutex::new(vec![Err(Error::Transport("down".into())), Err(Error::Transport("down".into()))]),
            max: 2,
        };
        let r = assess_prompt(&c, &prompt());
        assert!(r.unresolved && r.transport_failed());
        assert_eq!(r.raw_outputs, vec![String::new(), String::new()]);
        r.validate(2).unwrap();
    }

    #[test]
    fn content_extraction() {
        assert_eq!(extract_content(r#"{"choices":[{"message":{"content":"hi"}}]}"#).unwrap(), "hi");
        assert_eq!(extract_content(r#"{"choices":[{"message":{"content":null}}]}"#).unwrap(), "");
        assert!(extract_content(r#"{"choices":[]}"#).is_err());
        assert!(extract_content("<html>").is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: EndpointConfig = serde_json::from_str(r#"{"base_url":"http://x/","model_name":"m"}"#).unwrap();
        assert_eq!(cfg.max_resamples, 3);
        assert_eq!(cfg.temperature, 0.6);
        assert_eq!(cfg.max_tokens, 2048);
        assert_eq!(cfg.completions_url(), "http://x/v1/chat/completions");
        let mut bad = cfg.clone();
        bad.max_resamples = 0;
        assert!(bad.validate().is_err());
        bad = cfg;
        bad.timeout_seconds = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn excerpt_truncates_on_char_boundary() {
        let long = "é".repeat(600);
        let e = excerpt(&long);
        assert_eq!(e.chars().count(), BODY_EXCERPT + 1);
    }
}
