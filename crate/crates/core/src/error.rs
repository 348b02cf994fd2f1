use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("no <table> element found")]
    NoTableFound,
}

#[derive(Debug, Error)]
pub enum FormulaError {
    #[error("cannot compute ExpRate over an empty batch")]
    EmptyBatch,
    #[error("rewrite table line {line}: {message}")]
    RuleSyntax { line: usize, message: String },
    #[error("reading rewrite table {path}: {source}")]
    RuleIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("client failure: {0}")]
    Client(String),
    #[error("tool {tool} failed: {message}")]
    Tool { tool: String, message: String },
    #[error("template error: {0}")]
    Template(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record on line {line}: {message}")]
    Record { line: usize, message: String },
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("invalid split parameter: {0}")]
    InvalidParameter(String),
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
}
