//! Command implementations behind the `ocrchain` binary.
//!
//! Every command takes a resolved [`RunConfig`] and reports through
//! [`HarnessError`], whose [`exit_code`](HarnessError::exit_code) follows a
//! fixed contract: 0 success, 1 internal error, 2 config or input error,
//! 3 infeasible or negative result.

mod config;
mod construct;
mod eval;
mod reward;
mod split;

pub use config::*;
pub use construct::{cmd_construct, construct_with, ConstructPlan};
pub use eval::{cmd_eval, evaluate, read_predictions, read_references, render_table, EvalItem, EvalReport};
pub use reward::{
    cmd_reward, router, score_items, score_line, serve, serve_on, RewardItem, ScoreRequest, ScoreResponse, ServeState,
};
pub use split::{cmd_split, SplitFiles};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::error::{ForgeError, SplitError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{path}:{line}: malformed line: {message}")]
    MalformedLine { path: PathBuf, line: usize, message: String },
    #[error("predictions without a reference: {}", .0.join(", "))]
    MissingReference(Vec<String>),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Internal(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Internal(_) => 1,
            HarnessError::Config(_) | HarnessError::Input { .. } | HarnessError::MalformedLine { .. } => 2,
            HarnessError::MissingReference(_) | HarnessError::Infeasible(_) => 3,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Input { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Internal(format!("writing {}: {e}", path.display()))
    }
}

impl From<SplitError> for HarnessError {
    fn from(e: SplitError) -> Self {
        match e {
            SplitError::InfeasibleSplit(_) => HarnessError::Infeasible(e.to_string()),
            SplitError::InvalidParameter(_) | SplitError::Lexicon { .. } => HarnessError::Config(e.to_string()),
        }
    }
}

impl From<ForgeError> for HarnessError {
    fn from(e: ForgeError) -> Self {
        match e {
            ForgeError::Io { path, source } => HarnessError::Input { path, message: source.to_string() },
            ForgeError::Config(_) | ForgeError::Template(_) => HarnessError::Config(e.to_string()),
            ForgeError::Record { line, ref message } => {
                HarnessError::MalformedLine { path: PathBuf::from("<input>"), line, message: message.clone() }
            }
            ForgeError::Client(_) | ForgeError::Tool { .. } => HarnessError::Internal(e.to_string()),
        }
    }
}

/// Writes `value` as pretty JSON plus a trailing newline.
pub(crate) fn write_json_file<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Internal(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| HarnessError::write(path, e))
}
