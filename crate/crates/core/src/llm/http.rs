//! Live chat-completion endpoint over HTTP with bounded retries.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatRequest, Completion, LlmError, ResponseSource, Upstream, Usage};

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(16),
        }
    }
}

impl RetryPolicy {
    /// Only rate limiting and server errors are retried.
    pub fn retryable_status(status: u16) -> bool {
        status == 429 || (500..=599).contains(&status)
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

pub struct HttpUpstream {
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpUpstream {
    pub fn new(endpoint: &str, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self {
            endpoint: endpoint.to_string(),
            api_key,
            retry: RetryPolicy::default(),
            agent,
        }
    }

    /// Reads the bearer token from `var`.
    pub fn from_env(endpoint: &str, var: &str) -> Result<Self, LlmError> {
        let key = std::env::var(var)
            .map_err(|_| LlmError::Unavailable(format!("environment variable {var} is not set")))?;
        Ok(Self::new(endpoint, Some(key)))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn body(model: &str, req: &ChatRequest) -> Value {
        json!({
            "model": model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<Completion, LlmError> {
        let mut call = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Http { status, body: text });
        }
        parse_completion(&text)
    }
}

pub(crate) fn parse_completion(text: &str) -> Result<Completion, LlmError> {
    let v: Value = serde_json::from_str(text).map_err(|e| LlmError::Payload(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .or_else(|| v.pointer("/choices/0/text"))
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::Payload("no choices[0].message.content".into()))?;
    let usage = v.get("usage").map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    });
    Ok(Completion { text: content.to_string(), usage })
}

impl Upstream for HttpUpstream {
    fn call(&self, model: &str, req: &ChatRequest) -> Result<Completion, LlmError> {
        let body = Self::body(model, req);
        let mut attempt = 0;
        loop {
            let err = match self.attempt(&body) {
                Ok(c) => return Ok(c),
                Err(e) => e,
            };
            let retryable = match &err {
                LlmError::Http { status, .. } => RetryPolicy::retryable_status(*status),
                LlmError::Transport(_) => true,
                _ => false,
            };
            if !retryable || attempt >= self.retry.max_retries {
                return Err(err);
            }
            log::warn!("retrying after {err} (attempt {})", attempt + 1);
            std::thread::sleep(self.retry.delay(attempt));
            attempt += 1;
        }
    }

    fn source(&self) -> ResponseSource {
        ResponseSource::Live
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Message, TaskKind};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Minimal HTTP server answering with scripted (status, body) pairs and
    /// recording request bodies.
    fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen2 = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = line.trim().to_string();
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                seen2
                    .lock()
                    .unwrap()
                    .push(format!("{auth}\n{}", String::from_utf8(buf).unwrap()));
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1/chat/completions"), seen)
    }

    fn fast() -> RetryPolicy {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(4),
        }
    }

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#;

    #[test]
    fn retries_server_errors_then_succeeds() {
        let (url, seen) = serve(vec![(503, "busy".into()), (429, "slow".into()), (200, OK.into())]);
        let up = HttpUpstream::new(&url, Some("k".into())).with_retry(fast());
        let req = ChatRequest::new(TaskKind::Inference, vec![Message::system("s"), Message::user("u")]);
        let c = up.call("model-x", &req).unwrap();
        assert_eq!(c.text, "hi");
        assert_eq!(c.usage.unwrap().completion_tokens, 1);
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 3);
        assert!(seen[0].starts_with("Authorization: Bearer k") || seen[0].starts_with("authorization: Bearer k"));
        let body: Value = serde_json::from_str(seen[0].split_once('\n').unwrap().1).unwrap();
        assert_eq!(body["model"], "model-x");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 1024);
        assert_eq!(body["messages"][1]["role"], "user");
        assert_eq!(body["messages"][1]["content"], "u");
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, seen) = serve(vec![(400, "bad request body".into()), (200, OK.into())]);
        let up = HttpUpstream::new(&url, None).with_retry(fast());
        let req = ChatRequest::new(TaskKind::Inference, vec![Message::user("u")]);
        match up.call("m", &req) {
            Err(LlmError::Http { status, body }) => {
                assert_eq!(status, 400);
                assert_eq!(body, "bad request body");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn gives_up_after_bounded_retries() {
        let replies = (0..4).map(|_| (500u16, "down".to_string())).collect();
        let (url, seen) = serve(replies);
        let up = HttpUpstream::new(&url, None).with_retry(fast());
        let req = ChatRequest::new(TaskKind::Inference, vec![Message::user("u")]);
        assert!(matches!(up.call("m", &req), Err(LlmError::Http { status: 500, .. })));
        assert_eq!(seen.lock().unwrap().len(), 4);
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(0), Duration::from_millis(500));
        assert_eq!(p.delay(1), Duration::from_millis(1000));
        assert_eq!(p.delay(10), Duration::from_secs(16));
        assert!(!RetryPolicy::retryable_status(404));
        assert!(RetryPolicy::retryable_status(502));
    }

    #[test]
    fn payload_without_choices_is_an_error() {
        assert!(matches!(parse_completion("{}"), Err(LlmError::Payload(_))));
    }
}
