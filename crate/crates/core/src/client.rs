//! Text-completion clients used for question naturalization and judging.
//!
//! All nondeterminism in the pipeline lives behind [`LlmClient`] and
//! [`JudgeClient`]. The HTTP implementation speaks a minimal JSON contract:
//!
//! ```text
//! POST <endpoint>   {"prompt": "...", "max_tokens": 512, "temperature": 0.0}
//! 200 OK            {"completion": "..."}
//! ```
//!
//! Credentials are read from the environment only and sent as a bearer token.

use std::env;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: u32,
    pub temperature: f32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: 512,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("cannot decode response: {0}")]
    Decode(String),
}

impl ClientError {
    fn is_retryable(&self) -> bool {
        match self {
            Self::Timeout | Self::Transport(_) => true,
            Self::Status(code) => *code >= 500 || *code == 429,
            Self::Decode(_) => false,
        }
    }
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, ClientError>;
}

pub trait JudgeClient: Send + Sync {
    fn answer(&self, prompt: &str) -> Result<String, ClientError>;
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, ClientError> {
        (**self).complete(prompt, params)
    }
}

impl<T: JudgeClient + ?Sized> JudgeClient for &T {
    fn answer(&self, prompt: &str) -> Result<String, ClientError> {
        (**self).answer(prompt)
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    completion: String,
}

pub struct HttpClient {
    endpoint: String,
    api_key: Option<String>,
    retries: u32,
    judge_params: GenerationParams,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration, retries: u32) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            api_key,
            retries,
            judge_params: GenerationParams::default(),
            agent,
        }
    }

    /// Reads `<PREFIX>_ENDPOINT`, `<PREFIX>_API_KEY`, `<PREFIX>_TIMEOUT_SECS` and
    /// `<PREFIX>_RETRIES`. Returns `None` when no endpoint is configured.
    pub fn from_env(prefix: &str) -> Option<Self> {
        let endpoint = env::var(format!("{prefix}_ENDPOINT")).ok().filter(|s| !s.is_empty())?;
        let api_key = env::var(format!("{prefix}_API_KEY")).ok().filter(|s| !s.is_empty());
        let timeout = env::var(format!("{prefix}_TIMEOUT_SECS"))
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(60);
        let retries = env::var(format!("{prefix}_RETRIES"))
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(2);
        Some(Self::new(endpoint, api_key, Duration::from_secs(timeout), retries))
    }

    fn request_once(&self, body: &str) -> Result<String, ClientError> {
        tracing::trace!(target: "hcsp::client", endpoint = %self.endpoint, body, "request");
        let mut req = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(map_ureq_error)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_ureq_error)?;
        tracing::trace!(target: "hcsp::client", status, body = %text, "response");
        if !(200..300).contains(&status) {
            return Err(ClientError::Status(status));
        }
        let parsed: CompletionResponse = serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))?;
        Ok(parsed.completion)
    }
}

fn map_ureq_error(err: ureq::Error) -> ClientError {
    match err {
        ureq::Error::Timeout(_) => ClientError::Timeout,
        other => ClientError::Transport(other.to_string()),
    }
}

impl LlmClient for HttpClient {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, ClientError> {
        let body = serde_json::to_string(&CompletionRequest {
            prompt,
            max_tokens: params.max_tokens,
            temperature: params.temperature,
        })
        .expect("request serializes");
        let mut attempt = 0;
        loop {
            match self.request_once(&body) {
                Err(err) if err.is_retryable() && attempt < self.retries => {
                    attempt += 1;
                    tracing::debug!(target: "hcsp::client", %err, attempt, "retrying");
                }
                other => return other,
            }
        }
    }
}

impl JudgeClient for HttpClient {
    fn answer(&self, prompt: &str) -> Result<String, ClientError> {
        self.complete(prompt, &self.judge_params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Serves the given (status, body) responses in order, returning the raw requests.
    fn serve(responses: Vec<(u16, &'static str)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                head.push_str(&String::from_utf8(buf).unwrap());
                seen.push(head);
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (format!("http://{addr}/complete"), handle)
    }

    #[test]
    fn http_client_speaks_the_wire_contract() {
        let (url, handle) = serve(vec![(200, r#"{"completion":"England"}"#)]);
        let client = HttpClient::new(url, Some("secret".into()), Duration::from_secs(5), 0);
        let out = client
            .complete("Which country?", &GenerationParams { max_tokens: 8, temperature: 0.5 })
            .unwrap();
        assert_eq!(out, "England");
        let requests = handle.join().unwrap();
        let req = &requests[0];
        assert!(req.starts_with("POST /complete"));
        assert!(req.to_ascii_lowercase().contains("authorization: bearer secret"));
        assert!(req.contains(r#"{"prompt":"Which country?","max_tokens":8,"temperature":0.5}"#));
    }

    #[test]
    fn http_client_retries_server_errors() {
        let (url, handle) = serve(vec![(503, "{}"), (200, r#"{"completion":"ok"}"#)]);
        let client = HttpClient::new(url, None, Duration::from_secs(5), 1);
        assert_eq!(client.answer("q").unwrap(), "ok");
        assert_eq!(handle.join().unwrap().len(), 2);
    }

    #[test]
    fn http_client_reports_status_and_decode_errors() {
        let (url, handle) = serve(vec![(400, "{}")]);
        let client = HttpClient::new(url, None, Duration::from_secs(5), 3);
        assert_eq!(client.answer("q"), Err(ClientError::Status(400)));
        handle.join().unwrap();

        let (url, handle) = serve(vec![(200, "not json")]);
        let client = HttpClient::new(url, None, Duration::from_secs(5), 0);
        assert!(matches!(client.answer("q"), Err(ClientError::Decode(_))));
        handle.join().unwrap();
    }
}
