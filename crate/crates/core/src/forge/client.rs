//! Chat model clients. Clients are stateless; the pipeline owns history.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::ForgeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>, image_ref: Option<String>) -> Self {
        ChatMessage { role: Role::User, text: text.into(), image_ref }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, text: text.into(), image_ref: None }
    }
}

/// One call. `sample_id` is metadata; real endpoints ignore it.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub sample_id: &'a str,
    pub messages: &'a [ChatMessage],
}

impl ChatRequest<'_> {
    /// 1-based conversation turn: the number of user messages so far.
    pub fn turn(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::User).count()
    }
}

pub trait ChatClient: Send + Sync {
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, ForgeError>;

    /// Whether failures may succeed on retry.
    fn retryable(&self) -> bool {
        true
    }
}

/// Bounded retries with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub budget: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { budget: 3, base_delay_ms: 500 }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { budget: 0, base_delay_ms: 0 }
    }

    pub fn run<T>(&self, retryable: bool, mut op: impl FnMut() -> Result<T, ForgeError>) -> Result<T, ForgeError> {
        let mut attempt = 0u32;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if !retryable || attempt >= self.budget => return Err(e),
                Err(e) => {
                    log::debug!("attempt {} failed: {e}; retrying", attempt + 1);
                    let delay = self.base_delay_ms.saturating_mul(1u64 << attempt.min(16));
                    if delay > 0 {
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                    attempt += 1;
                }
            }
        }
    }
}

/// Replays recorded responses keyed by sample id and turn. Files are named
/// `<sample_id>.turn<N>.txt` inside the fixture directory.
#[derive(Debug, Clone, Default)]
pub struct CannedClient {
    responses: HashMap<(String, usize), String>,
    dir: Option<PathBuf>,
}

impl CannedClient {
    pub fn from_dir(dir: &Path) -> Result<Self, ForgeError> {
        if !dir.is_dir() {
            return Err(ForgeError::Config(format!("canned response directory {} does not exist", dir.display())));
        }
        Ok(CannedClient { responses: HashMap::new(), dir: Some(dir.to_path_buf()) })
    }

    pub fn from_map(responses: impl IntoIterator<Item = ((String, usize), String)>) -> Self {
        CannedClient { responses: responses.into_iter().collect(), dir: None }
    }

    pub fn fixture_path(dir: &Path, sample_id: &str, turn: usize) -> PathBuf {
        dir.join(format!("{sample_id}.turn{turn}.txt"))
    }
}

impl ChatClient for CannedClient {
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, ForgeError> {
        let turn = request.turn();
        if let Some(r) = self.responses.get(&(request.sample_id.to_string(), turn)) {
            return Ok(r.clone());
        }
        if let Some(dir) = &self.dir {
            let path = Self::fixture_path(dir, request.sample_id, turn);
            if let Ok(text) = std::fs::read_to_string(&path) {
                return Ok(text);
            }
        }
        Err(ForgeError::Client(format!("no canned response for sample {} turn {turn}", request.sample_id)))
    }

    fn retryable(&self) -> bool {
        false
    }
}

#[cfg(feature = "http")]
pub use http::{HttpChatClient, HttpChatConfig, ImageMode};

#[cfg(feature = "http")]
mod http {
    use std::path::Path;
    use std::time::Duration;

    use base64::Engine;
    use serde::{Deserialize, Serialize};
    use serde_json::{json, Value};

    use super::{ChatClient, ChatRequest, Role};
    use crate::error::ForgeError;

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
    #[serde(rename_all = "lowercase")]
    pub enum ImageMode {
        /// Pass `image_ref` through as a URL.
        #[default]
        Uri,
        /// Read `image_ref` from disk and inline it as a base64 data URL.
        Base64,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct HttpChatConfig {
        /// Full chat-completions URL.
        pub endpoint: String,
        pub model: String,
        #[serde(default)]
        pub temperature: f64,
        #[serde(default = "default_timeout")]
        pub timeout_secs: u64,
        #[serde(default)]
        pub image_mode: ImageMode,
    }

    fn default_timeout() -> u64 {
        120
    }

    /// Chat-completions style JSON-over-HTTP client.
    pub struct HttpChatClient {
        config: HttpChatConfig,
        api_key: Option<String>,
        http: reqwest::blocking::Client,
    }

    impl HttpChatClient {
        pub fn new(config: HttpChatConfig, api_key: Option<String>) -> Result<Self, ForgeError> {
            let http = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(config.timeout_secs))
                .build()
                .map_err(|e| ForgeError::Config(format!("http client: {e}")))?;
            Ok(HttpChatClient { config, api_key, http })
        }

        fn image_url(&self, image_ref: &str) -> Result<String, ForgeError> {
            match self.config.image_mode {
                ImageMode::Uri => Ok(image_ref.to_string()),
                ImageMode::Base64 => {
                    let path = Path::new(image_ref);
                    let bytes = std::fs::read(path)
                        .map_err(|source| ForgeError::Io { path: path.to_path_buf(), source })?;
                    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref()
                    {
                        Some("jpg" | "jpeg") => "image/jpeg",
                        Some("webp") => "image/webp",
                        Some("gif") => "image/gif",
                        _ => "image/png",
                    };
                    let data = base64::engine::general_purpose::STANDARD.encode(bytes);
                    Ok(format!("data:{mime};base64,{data}"))
                }
            }
        }

        pub fn request_body(&self, request: &ChatRequest<'_>) -> Result<Value, ForgeError> {
            let mut messages = Vec::with_capacity(request.messages.len());
            for m in request.messages {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                let content = match &m.image_ref {
                    Some(image) => json!([
                        {"type": "image_url", "image_url": {"url": self.image_url(image)?}},
                        {"type": "text", "text": m.text},
                    ]),
                    None => Value::String(m.text.clone()),
                };
                messages.push(json!({"role": role, "content": content}));
            }
            Ok(json!({
                "model": self.config.model,
                "temperature": self.config.temperature,
                "messages": messages,
            }))
        }
    }

    impl ChatClient for HttpChatClient {
        fn send(&self, request: &ChatRequest<'_>) -> Result<String, ForgeError> {
            let body = self.request_body(request)?;
            let mut req = self.http.post(&self.config.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| ForgeError::Client(e.to_string()))?;
            let status = resp.status();
            let value: Value = resp.json().map_err(|e| ForgeError::Client(format!("status {status}: {e}")))?;
            if !status.is_success() {
                return Err(ForgeError::Client(format!("status {status}: {value}")));
            }
            value["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| ForgeError::Client("response has no choices[0].message.content".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn turn_counts_user_messages() {
        let msgs = vec![ChatMessage::user("a", None), ChatMessage::assistant("b"), ChatMessage::user("c", None)];
        assert_eq!(ChatRequest { sample_id: "s", messages: &msgs[..1] }.turn(), 1);
        assert_eq!(ChatRequest { sample_id: "s", messages: &msgs }.turn(), 2);
    }

    #[test]
    fn canned_lookup() {
        let c = CannedClient::from_map([(("s1".to_string(), 1), "hello".to_string())]);
        let msgs = vec![ChatMessage::user("q", None)];
        assert_eq!(c.send(&ChatRequest { sample_id: "s1", messages: &msgs }).unwrap(), "hello");
        assert!(c.send(&ChatRequest { sample_id: "s2", messages: &msgs }).is_err());
    }

    #[test]
    fn retry_budget() {
        let calls = AtomicU32::new(0);
        let policy = RetryPolicy { budget: 3, base_delay_ms: 0 };
        let flaky = || {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(ForgeError::Client("503".into()))
            } else {
                Ok(7)
            }
        };
        assert_eq!(policy.run(true, flaky).unwrap(), 7);
        assert_eq!(calls.load(Ordering::SeqCst), 3);

        calls.store(0, Ordering::SeqCst);
        let r: Result<(), _> = policy.run(true, || {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(ForgeError::Client("down".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 4);

        calls.store(0, Ordering::SeqCst);
        let _ = policy.run::<()>(false, || {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(ForgeError::Client("down".into()))
        });
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }
}
