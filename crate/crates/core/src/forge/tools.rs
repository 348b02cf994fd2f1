//! Expert OCR tool adapters.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::ForgeError;
use crate::reward::TaskKind;

pub trait ToolAdapter: Send + Sync {
    fn name(&self) -> &str;
    fn recognize(&self, task: TaskKind, image_ref: &str) -> Result<String, ForgeError>;

    fn retryable(&self) -> bool {
        true
    }
}

/// Fixed outputs keyed by image locator.
#[derive(Debug, Clone)]
pub struct CannedTool {
    name: String,
    outputs: BTreeMap<String, String>,
}

impl CannedTool {
    pub fn new(name: impl Into<String>, outputs: impl IntoIterator<Item = (String, String)>) -> Self {
        CannedTool { name: name.into(), outputs: outputs.into_iter().collect() }
    }

    /// Loads a JSON object mapping image locator to recognized text.
    pub fn from_json_file(name: impl Into<String>, path: &Path) -> Result<Self, ForgeError> {
        let text = std::fs::read_to_string(path).map_err(|source| ForgeError::Io { path: path.to_path_buf(), source })?;
        let outputs: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| ForgeError::Config(format!("tool fixture {}: {e}", path.display())))?;
        Ok(CannedTool { name: name.into(), outputs })
    }
}

impl ToolAdapter for CannedTool {
    fn name(&self) -> &str {
        &self.name
    }

    fn recognize(&self, _task: TaskKind, image_ref: &str) -> Result<String, ForgeError> {
        self.outputs.get(image_ref).cloned().ok_or_else(|| ForgeError::Tool {
            tool: self.name.clone(),
            message: format!("no output for {image_ref}"),
        })
    }

    fn retryable(&self) -> bool {
        false
    }
}

#[cfg(feature = "http")]
pub use http::HttpTool;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use serde_json::{json, Value};

    use super::ToolAdapter;
    use crate::error::ForgeError;
    use crate::reward::TaskKind;

    /// Posts `{"task", "image_ref"}` and reads `{"text"}` back.
    pub struct HttpTool {
        name: String,
        endpoint: String,
        http: reqwest::blocking::Client,
    }

    impl HttpTool {
        pub fn new(name: impl Into<String>, endpoint: impl Into<String>, timeout_secs: u64) -> Result<Self, ForgeError> {
            let http = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(timeout_secs))
                .build()
                .map_err(|e| ForgeError::Config(format!("http client: {e}")))?;
            Ok(HttpTool { name: name.into(), endpoint: endpoint.into(), http })
        }
    }

    impl ToolAdapter for HttpTool {
        fn name(&self) -> &str {
            &self.name
        }

        fn recognize(&self, task: TaskKind, image_ref: &str) -> Result<String, ForgeError> {
            let fail = |message: String| ForgeError::Tool { tool: self.name.clone(), message };
            let resp = self
                .http
                .post(&self.endpoint)
                .json(&json!({"task": task, "image_ref": image_ref}))
                .send()
                .map_err(|e| fail(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(fail(format!("status {status}")));
            }
            let value: Value = resp.json().map_err(|e| fail(e.to_string()))?;
            value["text"].as_str().map(str::to_string).ok_or_else(|| fail("response has no `text` field".into()))
        }
    }
}
