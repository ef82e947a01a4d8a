//! Chat-completion client for a frozen model and decision parsing.
//!
//! The wire protocol is the OpenAI-compatible `POST {endpoint}/chat/completions`
//! with a single user message. Transport failures and 5xx answers are
//! retried with exponential backoff; 4xx answers are configuration errors
//! and are not retried.

pub mod mock;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::prompt_builder::{approx_tokens, RenderedPrompt};

pub const DEFAULT_API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub max_in_flight: usize,
    /// Prompts above this whitespace-token count are never sent.
    pub max_prompt_tokens: Option<usize>,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: String,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            endpoint: "http://localhost:11434/v1".to_string(),
            model: "llama3.1:70b".to_string(),
            temperature: 0.0,
            max_tokens: 512,
            timeout_secs: 120.0,
            max_retries: 3,
            retry_backoff_ms: 500,
            max_in_flight: 4,
            max_prompt_tokens: None,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
        }
    }
}

impl CompletionConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidConfig(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(LlmError::InvalidConfig("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn decoding(&self) -> Decoding {
        Decoding { model: self.model.clone(), temperature: self.temperature, max_tokens: self.max_tokens }
    }
}

/// Per-request decoding knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint rejected the request with HTTP {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("prompt has {tokens} tokens, budget is {limit}")]
    OverBudget { tokens: usize, limit: usize },
    #[error("invalid client configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
}

/// Anything that can answer a prompt: the HTTP client or an in-process mock.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &str, decoding: &Decoding) -> Result<Completion, LlmError>;
}

/// Request/response JSON shapes for one API dialect.
pub trait WireFormat: Send + Sync {
    fn path(&self) -> &str;
    fn request_body(&self, prompt: &str, decoding: &Decoding) -> Value;
    fn extract_text(&self, response: &Value) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OpenAiChat;

impl WireFormat for OpenAiChat {
    fn path(&self) -> &str {
        "/chat/completions"
    }

    fn request_body(&self, prompt: &str, decoding: &Decoding) -> Value {
        json!({
            "model": decoding.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_tokens,
        })
    }

    fn extract_text(&self, response: &Value) -> Result<String, LlmError> {
        response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| LlmError::Protocol("missing choices[0].message.content".into()))
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
    wire: Box<dyn WireFormat>,
}

impl HttpBackend {
    pub fn new(config: &CompletionConfig) -> Result<Self, LlmError> {
        Self::with_wire_format(config, Box::new(OpenAiChat))
    }

    pub fn with_wire_format(config: &CompletionConfig, wire: Box<dyn WireFormat>) -> Result<Self, LlmError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::InvalidConfig(e.to_string()))?;
        let url = format!("{}{}", config.endpoint.trim_end_matches('/'), wire.path());
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(HttpBackend {
            client,
            url,
            api_key,
            max_retries: config.max_retries,
            backoff: Duration::from_millis(config.retry_backoff_ms),
            wire,
        })
    }

    fn backoff_for(&self, attempt: u32) -> Duration {
        let factor = 1u32 << (attempt.saturating_sub(1)).min(10);
        (self.backoff * factor).min(Duration::from_secs(30))
    }

    fn attempt(&self, body: &Value) -> Result<Value, (bool, LlmError)> {
        let mut request = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response =
            request.send().map_err(|e| (true, LlmError::Transport { attempts: 0, message: e.to_string() }))?;
        let status = response.status();
        let text = response.text().map_err(|e| (true, LlmError::Transport { attempts: 0, message: e.to_string() }))?;
        if status.is_server_error() || status.as_u16() == 429 || status.as_u16() == 408 {
            return Err((true, LlmError::Transport { attempts: 0, message: format!("HTTP {status}: {text}") }));
        }
        if status.is_client_error() {
            return Err((false, LlmError::Rejected { status: status.as_u16(), message: text }));
        }
        serde_json::from_str(&text).map_err(|e| (false, LlmError::Protocol(e.to_string())))
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, prompt: &str, decoding: &Decoding) -> Result<Completion, LlmError> {
        let body = self.wire.request_body(prompt, decoding);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(value) => {
                    let text = self.wire.extract_text(&value)?;
                    return Ok(Completion { text, attempts });
                }
                Err((true, err)) if attempts <= self.max_retries => {
                    log::debug!("attempt {attempts} failed: {err}; retrying");
                    std::thread::sleep(self.backoff_for(attempts));
                }
                Err((_, LlmError::Transport { message, .. })) => {
                    return Err(LlmError::Transport { attempts, message });
                }
                Err((_, err)) => return Err(err),
            }
        }
    }
}

/// One round of [`ChatBackend::complete`], with the prompt left untouched.
pub fn complete(
    backend: &dyn ChatBackend,
    prompt: &RenderedPrompt,
    decoding: &Decoding,
) -> Result<Completion, LlmError> {
    backend.complete(&prompt.prompt, decoding)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Fake,
    Real,
    Abstain,
}

impl Decision {
    /// 1 for FAKE, 0 for REAL, 0.5 for an abstention.
    pub fn score(self) -> f64 {
        match self {
            Decision::Fake => 1.0,
            Decision::Real => 0.0,
            Decision::Abstain => 0.5,
        }
    }
}

fn word_at(lower: &str, start: usize, len: usize) -> bool {
    let bytes = lower.as_bytes();
    let before = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
    let end = start + len;
    let after = end >= bytes.len() || !bytes[end].is_ascii_alphanumeric();
    before && after
}

/// Extract the model's verdict.
///
/// The word after the last `Final Decision:` marker wins; failing that, the
/// last standalone `fake`/`real` anywhere; failing that, ABSTAIN.
pub fn parse_decision(response: &str) -> (Decision, f64) {
    let lower = response.to_ascii_lowercase();
    let from_word = |w: &str| match w {
        "fake" => Some(Decision::Fake),
        "real" => Some(Decision::Real),
        _ => None,
    };
    if let Some(pos) = lower.rfind("final decision:") {
        let rest = &lower[pos + "final decision:".len()..];
        let word: String = rest
            .trim_start_matches(|c: char| !c.is_ascii_alphanumeric())
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric())
            .collect();
        if let Some(d) = from_word(&word) {
            return (d, d.score());
        }
    }
    let last = |needle: &str| {
        lower.match_indices(needle).filter(|(i, _)| word_at(&lower, *i, needle.len())).map(|(i, _)| i).last()
    };
    let decision = match (last("fake"), last("real")) {
        (Some(f), Some(r)) => {
            if f > r {
                Decision::Fake
            } else {
                Decision::Real
            }
        }
        (Some(_), None) => Decision::Fake,
        (None, Some(_)) => Decision::Real,
        (None, None) => Decision::Abstain,
    };
    (decision, decision.score())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub cascade_id: String,
    pub decision: Decision,
    pub score: f64,
    pub raw_response: String,
    pub latency_secs: f64,
    pub attempt_count: u32,
    #[serde(default)]
    pub error: Option<String>,
}

/// Append-only JSONL log of prompts and answers.
pub struct TranscriptLog {
    writer: Mutex<BufWriter<File>>,
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    cascade_id: &'a str,
    request: Value,
    response: &'a str,
    attempts: u32,
    error: Option<&'a str>,
}

impl TranscriptLog {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(TranscriptLog { writer: Mutex::new(BufWriter::new(File::create(path)?)) })
    }

    fn record(&self, prompt: &RenderedPrompt, decoding: &Decoding, outcome: &PredictionOutcome) {
        let line = TranscriptLine {
            cascade_id: &prompt.cascade_id,
            request: OpenAiChat.request_body(&prompt.prompt, decoding),
            response: &outcome.raw_response,
            attempts: outcome.attempt_count,
            error: outcome.error.as_deref(),
        };
        let mut w = self.writer.lock().expect("transcript lock");
        let written =
            serde_json::to_writer(&mut *w, &line).map_err(std::io::Error::from).and_then(|_| w.write_all(b"\n"));
        if written.is_err() {
            log::warn!("failed to write transcript for {}", prompt.cascade_id);
        }
    }

    pub fn flush(&self) -> std::io::Result<()> {
        self.writer.lock().expect("transcript lock").flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub max_in_flight: usize,
    pub max_prompt_tokens: Option<usize>,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions { max_in_flight: 4, max_prompt_tokens: None }
    }
}

impl From<&CompletionConfig> for BatchOptions {
    fn from(c: &CompletionConfig) -> Self {
        BatchOptions { max_in_flight: c.max_in_flight, max_prompt_tokens: c.max_prompt_tokens }
    }
}

fn classify_one(
    backend: &dyn ChatBackend,
    prompt: &RenderedPrompt,
    decoding: &Decoding,
    options: &BatchOptions,
) -> PredictionOutcome {
    let started = Instant::now();
    let result = match options.max_prompt_tokens {
        Some(limit) if approx_tokens(&prompt.prompt) > limit => {
            Err(LlmError::OverBudget { tokens: approx_tokens(&prompt.prompt), limit })
        }
        _ => complete(backend, prompt, decoding),
    };
    let latency_secs = started.elapsed().as_secs_f64();
    match result {
        Ok(c) => {
            let (decision, score) = parse_decision(&c.text);
            PredictionOutcome {
                cascade_id: prompt.cascade_id.clone(),
                decision,
                score,
                raw_response: c.text,
                latency_secs,
                attempt_count: c.attempts,
                error: None,
            }
        }
        Err(e) => PredictionOutcome {
            cascade_id: prompt.cascade_id.clone(),
            decision: Decision::Abstain,
            score: Decision::Abstain.score(),
            raw_response: String::new(),
            latency_secs,
            attempt_count: match e {
                LlmError::Transport { attempts, .. } => attempts,
                LlmError::OverBudget { .. } | LlmError::InvalidConfig(_) => 0,
                _ => 1,
            },
            error: Some(e.to_string()),
        },
    }
}

/// Classify every prompt with at most `max_in_flight` requests open at a
/// time. Failures become ABSTAIN outcomes carrying the error. Output is
/// sorted by cascade id. `progress` is called with `(done, total)`.
pub fn classify_batch(
    backend: &dyn ChatBackend,
    prompts: &[RenderedPrompt],
    decoding: &Decoding,
    options: BatchOptions,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
    transcript: Option<&TranscriptLog>,
) -> Vec<PredictionOutcome> {
    let total = prompts.len();
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<PredictionOutcome>>> = (0..total).map(|_| Mutex::new(None)).collect();
    let workers = options.max_in_flight.max(1).min(total);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= total {
                    break;
                }
                let outcome = classify_one(backend, &prompts[i], decoding, &options);
                if let Some(log) = transcript {
                    log.record(&prompts[i], decoding, &outcome);
                }
                *slots[i].lock().expect("slot lock") = Some(outcome);
                let finished = done.fetch_add(1, Ordering::SeqCst) + 1;
                if let Some(report) = progress {
                    report(finished, total);
                }
            });
        }
    });
    let mut outcomes: Vec<PredictionOutcome> =
        slots.into_iter().map(|s| s.into_inner().expect("slot lock").expect("every prompt classified")).collect();
    outcomes.sort_by(|a, b| a.cascade_id.cmp(&b.cascade_id));
    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_parsing() {
        assert_eq!(parse_decision("Step 5: weigh it\nFinal Decision: Fake"), (Decision::Fake, 1.0));
        assert_eq!(parse_decision("final decision: \"REAL\"."), (Decision::Real, 0.0));
        assert_eq!(parse_decision("I cannot determine this."), (Decision::Abstain, 0.5));
        assert_eq!(parse_decision("**Final Decision:** [Fake]"), (Decision::Fake, 1.0));
        assert_eq!(parse_decision("Final Decision: Real\n...\nFinal Decision: Fake"), (Decision::Fake, 1.0));
    }

    #[test]
    fn decision_fallback_uses_last_standalone_word() {
        assert_eq!(parse_decision("Looks real at first, but it is fake."), (Decision::Fake, 1.0));
        assert_eq!(parse_decision("fake? no, real"), (Decision::Real, 0.0));
        assert_eq!(parse_decision("the realm of fakery"), (Decision::Abstain, 0.5));
        assert_eq!(parse_decision("Final Decision: unsure. Leaning Real"), (Decision::Real, 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(CompletionConfig::default().validate().is_ok());
        let hot = CompletionConfig { temperature: 2.5, ..CompletionConfig::default() };
        assert!(matches!(hot.validate(), Err(LlmError::InvalidConfig(_))));
        assert_eq!(CompletionConfig::default().temperature, 0.0);
    }

    #[test]
    fn openai_wire_shape() {
        let d = Decoding { model: "m".into(), temperature: 0.2, max_tokens: 9 };
        let body = OpenAiChat.request_body("hi", &d);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["temperature"], 0.2);
        assert_eq!(body["max_tokens"], 9);
        let resp = json!({"choices": [{"message": {"role": "assistant", "content": "Final Decision: Real"}}]});
        assert_eq!(OpenAiChat.extract_text(&resp).unwrap(), "Final Decision: Real");
        assert!(OpenAiChat.extract_text(&json!({})).is_err());
    }
}
