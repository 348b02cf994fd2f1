use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::forge::{GateConfig, ImageMode, RetryPolicy};
use crate::reward::TaskKind;
use crate::split::DEFAULT_THRESHOLD;

/// Environment variable holding the chat endpoint credential. Never written
/// into reports.
pub const API_KEY_ENV: &str = "OCRCHAIN_API_KEY";

/// Everything a command needs. Loaded from TOML, then overridden by flags;
/// the resolved value is embedded in each report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Option<TaskKind>,
    /// Score accuracy only when the whole chain is well formed.
    pub strict_gating: bool,
    pub eval: EvalConfig,
    pub construct: ConstructConfig,
    pub split: SplitConfig,
    pub serve: ServeConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub predictions: Option<PathBuf>,
    pub references: Option<PathBuf>,
    /// JSON report path; the table goes to stdout either way.
    pub report: Option<PathBuf>,
    /// Score the `<answer>` body of each prediction instead of the raw text.
    pub extract_answer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructConfig {
    pub input: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub audit: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// Directory of `<task>.txt` templates overriding the shipped ones.
    pub templates_dir: Option<PathBuf>,
    pub concurrency: usize,
    pub tool_output_cap: usize,
    pub retry: RetryPolicy,
    pub gate: GateConfig,
    pub client: ClientConfig,
    pub tools: Vec<ToolConfig>,
}

impl Default for ConstructConfig {
    fn default() -> Self {
        ConstructConfig {
            input: None,
            dataset: None,
            audit: None,
            report: None,
            templates_dir: None,
            concurrency: 4,
            tool_output_cap: 8192,
            retry: RetryPolicy::default(),
            gate: GateConfig::default(),
            client: ClientConfig::default(),
            tools: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    #[default]
    Canned,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub kind: ClientKind,
    /// Canned mode: directory of `<id>.turn<N>.txt` responses.
    pub canned_dir: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub image_mode: ImageMode,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            kind: ClientKind::Canned,
            canned_dir: None,
            endpoint: None,
            model: None,
            temperature: 0.0,
            timeout_secs: 120,
            image_mode: ImageMode::Uri,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    pub name: String,
    #[serde(default)]
    pub kind: ClientKind,
    /// Canned mode: JSON object mapping image_ref to output.
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub input: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub threshold: f64,
    pub test_fraction: f64,
    pub seed: u64,
    /// Keyword lexicon TSV; the shipped one when unset.
    pub lexicon: Option<PathBuf>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            input: None,
            train: None,
            test: None,
            report: None,
            threshold: DEFAULT_THRESHOLD,
            test_fraction: 0.1,
            seed: 42,
            lexicon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub addr: String,
    pub payload_cap_bytes: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig { addr: "127.0.0.1:8080".into(), payload_cap_bytes: 4 << 20 }
    }
}

fn required<'a, T>(value: &'a Option<T>, field: &str) -> Result<&'a T, HarnessError> {
    value.as_ref().ok_or_else(|| HarnessError::Config(format!("{field}: required")))
}

impl RunConfig {
    /// Parses TOML; errors name the offending field.
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().to_string();
            HarnessError::Config(if path == "." { msg } else { format!("{path}: {msg}") })
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn require_task(&self) -> Result<TaskKind, HarnessError> {
        self.task.ok_or_else(|| HarnessError::Config("task: required".into()))
    }

    pub fn validate_eval(&self) -> Result<(), HarnessError> {
        self.require_task()?;
        required(&self.eval.predictions, "eval.predictions")?;
        required(&self.eval.references, "eval.references")?;
        Ok(())
    }

    pub fn validate_construct(&self) -> Result<(), HarnessError> {
        let c = &self.construct;
        required(&c.input, "construct.input")?;
        required(&c.dataset, "construct.dataset")?;
        required(&c.audit, "construct.audit")?;
        required(&c.report, "construct.report")?;
        if c.concurrency == 0 {
            return Err(HarnessError::Config("construct.concurrency: must be at least 1".into()));
        }
        if c.tool_output_cap == 0 {
            return Err(HarnessError::Config("construct.tool_output_cap: must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&c.gate.table_threshold) {
            return Err(HarnessError::Config("construct.gate.table_threshold: must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&c.gate.formula_threshold) {
            return Err(HarnessError::Config("construct.gate.formula_threshold: must be in [0, 1]".into()));
        }
        match c.client.kind {
            ClientKind::Canned => {
                required(&c.client.canned_dir, "construct.client.canned_dir")?;
            }
            ClientKind::Http => {
                required(&c.client.endpoint, "construct.client.endpoint")?;
                required(&c.client.model, "construct.client.model")?;
            }
        }
        if c.tools.is_empty() {
            return Err(HarnessError::Config("construct.tools: at least one tool is required".into()));
        }
        for (i, t) in c.tools.iter().enumerate() {
            if t.name.is_empty() {
                return Err(HarnessError::Config(format!("construct.tools[{i}].name: must not be empty")));
            }
            if c.tools[..i].iter().any(|o| o.name == t.name) {
                return Err(HarnessError::Config(format!("construct.tools[{i}].name: duplicate `{}`", t.name)));
            }
            match t.kind {
                ClientKind::Canned => required(&t.fixture, &format!("construct.tools[{i}].fixture")).map(|_| ())?,
                ClientKind::Http => required(&t.endpoint, &format!("construct.tools[{i}].endpoint")).map(|_| ())?,
            }
        }
        Ok(())
    }

    pub fn validate_split(&self) -> Result<(), HarnessError> {
        let s = &self.split;
        required(&s.input, "split.input")?;
        required(&s.train, "split.train")?;
        required(&s.test, "split.test")?;
        required(&s.report, "split.report")?;
        if !(s.threshold > 0.0 && s.threshold <= 1.0) {
            return Err(HarnessError::Config(format!("split.threshold: {} is outside (0, 1]", s.threshold)));
        }
        if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
            return Err(HarnessError::Config(format!("split.test_fraction: {} is outside (0, 1)", s.test_fraction)));
        }
        Ok(())
    }

    pub fn validate_serve(&self) -> Result<(), HarnessError> {
        if self.serve.payload_cap_bytes == 0 {
            return Err(HarnessError::Config("serve.payload_cap_bytes: must be at least 1".into()));
        }
        self.serve
            .addr
            .parse::<std::net::SocketAddr>()
            .map_err(|e| HarnessError::Config(format!("serve.addr: {e}")))?;
        Ok(())
    }
}
