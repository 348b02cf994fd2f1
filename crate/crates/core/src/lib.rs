//! Toolkit for tool-augmented OCR reasoning models.
//!
//! * [`chain`] parses and renders `<think>/<tool>/<rethink>/<answer>` chains
//!   and computes the binary format reward.
//! * [`text`], [`table`] and [`formula`] hold the OCR metrics: edit distance
//!   and NED, TEDS/STEDS over HTML tables, and a token-level CDM proxy with
//!   ExpRate.
//! * [`reward`] composes format and accuracy rewards for GRPO rollouts.
//! * [`forge`] builds reasoning datasets from a chat model plus expert OCR
//!   tools, with per-task retention gates.
//! * [`split`] produces leakage-isolated train/test splits of seal titles.
//! * [`harness`] backs the `ocrchain` command line tool.

pub mod chain;
pub mod error;
pub mod forge;
pub mod formula;
pub mod reward;
pub mod split;

#[cfg(feature = "harness")]
pub mod harness;
pub mod table;
pub mod text;

pub use chain::{format_reward, parse_chain, render_chain, FormatVerdict, ReasoningChain};
pub use reward::{RewardEngine, RewardScore, TaskKind};

/// Toolkit version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
