//! Deterministic stand-ins for a chat model.
//!
//! [`MockLlm`] answers in-process; [`MockServer`] serves the same rules over
//! a loopback OpenAI-compatible endpoint and can be scripted to fail.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, Completion, Decoding, LlmError};
use crate::domain::Label;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MockRule {
    /// Fake iff strictly more example stanzas are labeled Fake than Real.
    MajorityOfExamples,
    /// Fake iff the query tweet text contains `token` (case-insensitive).
    KeywordOracle {
        token: String,
    },
    Constant {
        label: Label,
    },
}

impl MockRule {
    /// Parse `majority`, `keyword:TOKEN`, `constant:fake|real`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let (name, arg) = spec.split_once(':').map_or((spec, None), |(a, b)| (a, Some(b)));
        match (name, arg) {
            ("majority", None) => Ok(MockRule::MajorityOfExamples),
            ("keyword", Some(token)) if !token.is_empty() => Ok(MockRule::KeywordOracle { token: token.to_string() }),
            ("constant", Some(l)) => match l.to_ascii_lowercase().as_str() {
                "fake" => Ok(MockRule::Constant { label: Label::Fake }),
                "real" => Ok(MockRule::Constant { label: Label::Real }),
                _ => Err(format!("unknown label {l:?}")),
            },
            _ => Err(format!("unknown mock rule {spec:?}; expected majority, keyword:TOKEN or constant:LABEL")),
        }
    }
}

/// Counts of `Label: Fake` / `Label: Real` lines.
pub fn example_label_counts(prompt: &str) -> (usize, usize) {
    prompt.lines().fold((0, 0), |(f, r), line| match line.trim_end() {
        "Label: Fake" => (f + 1, r),
        "Label: Real" => (f, r + 1),
        _ => (f, r),
    })
}

/// Text of the last `Tweet text: "..."` line, which is the query's.
pub fn query_text(prompt: &str) -> Option<&str> {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Tweet text: \""))
        .map(|rest| rest.strip_suffix('"').unwrap_or(rest))
}

#[derive(Debug, Clone)]
pub struct MockLlm {
    pub rule: MockRule,
}

impl MockLlm {
    pub fn new(rule: MockRule) -> Self {
        MockLlm { rule }
    }

    pub fn decide(&self, prompt: &str) -> Label {
        match &self.rule {
            MockRule::MajorityOfExamples => {
                let (fake, real) = example_label_counts(prompt);
                if fake > real {
                    Label::Fake
                } else {
                    Label::Real
                }
            }
            MockRule::KeywordOracle { token } => {
                let hit = query_text(prompt).is_some_and(|t| t.to_lowercase().contains(&token.to_lowercase()));
                if hit {
                    Label::Fake
                } else {
                    Label::Real
                }
            }
            MockRule::Constant { label } => *label,
        }
    }

    /// A response in the step-by-step output shape the prompt asks for.
    pub fn respond(&self, prompt: &str) -> String {
        let label = self.decide(prompt);
        format!(
            "Step 1: The language and tone were inspected.\n\
             Step 2: No further evidence was weighed.\n\
             Step 3: Network metrics were not considered.\n\
             Step 4: Examples were compared by rule.\n\
             Step 5: The rule settles the likelihood of coordination.\n\
             Final Decision: {label}"
        )
    }
}

impl ChatBackend for MockLlm {
    fn complete(&self, prompt: &str, _decoding: &Decoding) -> Result<Completion, LlmError> {
        Ok(Completion { text: self.respond(prompt), attempts: 1 })
    }
}

struct ServerState {
    mock: MockLlm,
    /// HTTP statuses to answer with before behaving normally.
    failures: Mutex<VecDeque<u16>>,
    requests: AtomicUsize,
    last_body: Mutex<Option<Value>>,
}

/// A loopback chat-completions endpoint.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    state: Arc<ServerState>,
    handle: Option<JoinHandle<()>>,
    base_url: String,
}

impl MockServer {
    pub fn start(rule: MockRule) -> std::io::Result<Self> {
        Self::start_with_failures(rule, Vec::new())
    }

    pub fn start_with_failures(rule: MockRule, failures: Vec<u16>) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let port =
            server.server_addr().to_ip().map(|a| a.port()).ok_or_else(|| std::io::Error::other("no ip address"))?;
        let server = Arc::new(server);
        let state = Arc::new(ServerState {
            mock: MockLlm::new(rule),
            failures: Mutex::new(failures.into()),
            requests: AtomicUsize::new(0),
            last_body: Mutex::new(None),
        });
        let handle = {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    serve(&state, request);
                }
            })
        };
        Ok(MockServer { server, state, handle: Some(handle), base_url: format!("http://127.0.0.1:{port}/v1") })
    }

    /// Value for `CompletionConfig::endpoint`.
    pub fn endpoint(&self) -> &str {
        &self.base_url
    }

    pub fn request_count(&self) -> usize {
        self.state.requests.load(Ordering::SeqCst)
    }

    pub fn last_request(&self) -> Option<Value> {
        self.state.last_body.lock().expect("body lock").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn json_response(status: u16, body: &Value) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    tiny_http::Response::from_string(body.to_string()).with_status_code(status).with_header(header)
}

fn serve(state: &ServerState, mut request: tiny_http::Request) {
    state.requests.fetch_add(1, Ordering::SeqCst);
    let mut raw = String::new();
    let _ = request.as_reader().read_to_string(&mut raw);
    let response = if request.method() != &tiny_http::Method::Post || !request.url().ends_with("/chat/completions") {
        json_response(404, &json!({"error": {"message": "not found"}}))
    } else if let Some(status) = state.failures.lock().expect("failure lock").pop_front() {
        json_response(status, &json!({"error": {"message": "scripted failure"}}))
    } else {
        match serde_json::from_str::<Value>(&raw) {
            Ok(body) => {
                let prompt =
                    body.pointer("/messages/0/content").and_then(Value::as_str).unwrap_or_default().to_string();
                let model = body.get("model").cloned().unwrap_or(Value::Null);
                *state.last_body.lock().expect("body lock") = Some(body);
                json_response(
                    200,
                    &json!({
                        "id": "chatcmpl-mock",
                        "object": "chat.completion",
                        "model": model,
                        "choices": [{
                            "index": 0,
                            "message": {"role": "assistant", "content": state.mock.respond(&prompt)},
                            "finish_reason": "stop"
                        }]
                    }),
                )
            }
            Err(e) => json_response(400, &json!({"error": {"message": e.to_string()}})),
        }
    };
    let _ = request.respond(response);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_client::parse_decision;
    use crate::llm_client::Decision;

    fn prompt(labels: &[&str], query: &str) -> String {
        let mut p = String::from("preamble\n\n");
        for (i, l) in labels.iter().enumerate() {
            p.push_str(&format!("Example {}:\nTweet text: \"ex {i}\"\nLabel: {l}\n\n", i + 1));
        }
        p.push_str(&format!("Now, analyze\n\nTweet text: \"{query}\"\n\nOutput:\n"));
        p
    }

    #[test]
    fn majority_tie_answers_real() {
        let mock = MockLlm::new(MockRule::MajorityOfExamples);
        let balanced = prompt(&["Fake", "Fake", "Fake", "Real", "Real", "Real"], "q");
        assert_eq!(mock.decide(&balanced), Label::Real);
        assert_eq!(mock.decide(&prompt(&["Fake", "Fake", "Real"], "q")), Label::Fake);
        assert_eq!(mock.decide(&prompt(&[], "q")), Label::Real);
    }

    #[test]
    fn keyword_oracle_reads_query_text_only() {
        let mock = MockLlm::new(MockRule::KeywordOracle { token: "zq".into() });
        assert_eq!(mock.decide(&prompt(&["Fake"], "some ZQ text")), Label::Fake);
        let mut p = prompt(&["Fake"], "clean text");
        p = p.replace("ex 0", "zq in example");
        assert_eq!(mock.decide(&p), Label::Real);
    }

    #[test]
    fn constant_and_round_trip() {
        for label in [Label::Fake, Label::Real] {
            let mock = MockLlm::new(MockRule::Constant { label });
            let (d, _) = parse_decision(&mock.respond("anything"));
            assert_eq!(d, if label.is_fake() { Decision::Fake } else { Decision::Real });
        }
    }

    #[test]
    fn rule_parsing() {
        assert_eq!(MockRule::parse("majority").unwrap(), MockRule::MajorityOfExamples);
        assert_eq!(MockRule::parse("keyword:abc").unwrap(), MockRule::KeywordOracle { token: "abc".into() });
        assert_eq!(MockRule::parse("constant:REAL").unwrap(), MockRule::Constant { label: Label::Real });
        assert!(MockRule::parse("keyword:").is_err());
        assert!(MockRule::parse("oracle").is_err());
    }
}
