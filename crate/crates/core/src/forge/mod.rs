//! Reasoning-data construction.
//!
//! For each sample the chat model first recognizes the image on its own
//! (turn 1, the `<think>` section). Expert tools then run and their outputs
//! are embedded in the turn 2 prompt (the `<tool>` section). The turn 2
//! reply supplies `<rethink>` and `<answer>`. A per-task gate decides which
//! chains are kept:
//!
//! * seal: the answer matches the ground truth exactly;
//! * table: TEDS of the answer beats the turn 1 recognition and is >= 0.98;
//! * formula: NED of the answer beats the turn 1 recognition and is <= 0.015.

mod client;
mod template;
mod tools;

pub use client::*;
pub use template::{PromptTemplate, TemplateSet};
pub use tools::*;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{extract_section, format_reward, render_chain, ReasoningChain, Tag};
use crate::error::ForgeError;
use crate::reward::TaskKind;
use crate::table::{steds, teds};
use crate::text::{exact_match, ned};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub task: TaskKind,
    pub image_ref: String,
    pub question: String,
    pub answer_gt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningRecord {
    pub sample: SampleRecord,
    pub chain: Option<ReasoningChain>,
    /// Raw tool outputs by tool name, as embedded in the tool section.
    #[serde(default)]
    pub tool_outputs: BTreeMap<String, String>,
    pub self_score: Option<f64>,
    #[serde(default)]
    pub tool_scores: BTreeMap<String, f64>,
    pub final_score: Option<f64>,
    pub retained: bool,
    pub reject_reason: Option<String>,
}

impl ReasoningRecord {
    fn rejected(sample: &SampleRecord, reason: String) -> Self {
        ReasoningRecord {
            sample: sample.clone(),
            chain: None,
            tool_outputs: BTreeMap::new(),
            self_score: None,
            tool_scores: BTreeMap::new(),
            final_score: None,
            retained: false,
            reject_reason: Some(reason),
        }
    }

    /// Reason category: the reject reason up to its first `:`.
    pub fn reject_category(&self) -> Option<&str> {
        self.reject_reason.as_deref().map(|r| r.split(':').next().unwrap_or(r).trim())
    }
}

/// A line of the emitted reasoning dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetLine {
    pub id: String,
    pub task: TaskKind,
    pub image_ref: String,
    pub question: String,
    /// The full rendered chain.
    pub reasoning: String,
    pub answer: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableGateMetric {
    #[default]
    Teds,
    Steds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Minimum TEDS (inclusive) for table chains.
    pub table_threshold: f64,
    /// Maximum NED (inclusive) for formula chains.
    pub formula_threshold: f64,
    pub table_metric: TableGateMetric,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig { table_threshold: 0.98, formula_threshold: 0.015, table_metric: TableGateMetric::Teds }
    }
}

/// Drops surrounding whitespace and a single markdown code fence.
pub fn clean_recognition(text: &str) -> &str {
    let t = text.trim();
    if let Some(inner) = t.strip_prefix("```").and_then(|s| s.strip_suffix("```")) {
        // skip the info string on the opening fence line
        let body = inner.split_once('\n').map_or("", |(_, rest)| rest);
        return body.trim();
    }
    t
}

/// The gate metric for a task: exact match for seals, TEDS (or STEDS) for
/// tables, NED for formulas.
pub fn task_metric(task: TaskKind, gate: &GateConfig, pred: &str, gt: &str) -> f64 {
    let pred = clean_recognition(pred);
    match task {
        TaskKind::Seal => exact_match(pred, gt),
        TaskKind::Table => {
            let score = match gate.table_metric {
                TableGateMetric::Teds => teds(pred, gt),
                TableGateMetric::Steds => steds(pred, gt),
            };
            score.map(|s| s.value).unwrap_or(0.0)
        }
        TaskKind::Formula => ned(pred, gt.trim()).value,
    }
}

/// Threshold and better-than-self rules. Seals are gated on exact match only.
pub fn gate_decision(task: TaskKind, final_score: f64, self_score: f64, gate: &GateConfig) -> Result<(), String> {
    match task {
        TaskKind::Seal if final_score == 1.0 => Ok(()),
        TaskKind::Seal => Err("gate-not-exact".into()),
        TaskKind::Table if final_score < gate.table_threshold => {
            Err(format!("gate-below-threshold: teds {final_score} < {}", gate.table_threshold))
        }
        TaskKind::Table if final_score <= self_score => {
            Err(format!("gate-not-better-than-self: teds {final_score} <= self {self_score}"))
        }
        TaskKind::Formula if final_score > gate.formula_threshold => {
            Err(format!("gate-above-threshold: ned {final_score} > {}", gate.formula_threshold))
        }
        TaskKind::Formula if final_score >= self_score => {
            Err(format!("gate-not-better-than-self: ned {final_score} >= self {self_score}"))
        }
        _ => Ok(()),
    }
}

/// Scores a built chain and applies the task gate. Records without a chain
/// pass through unchanged.
pub fn apply_gate(mut record: ReasoningRecord, gate: &GateConfig) -> ReasoningRecord {
    let Some(chain) = record.chain.as_ref() else {
        return record;
    };
    let task = record.sample.task;
    let gt = record.sample.answer_gt.as_str();
    let self_score = task_metric(task, gate, &chain.think, gt);
    let final_score = task_metric(task, gate, &chain.answer, gt);
    record.tool_scores = record
        .tool_outputs
        .iter()
        .map(|(name, out)| (name.clone(), task_metric(task, gate, out, gt)))
        .collect();
    record.self_score = Some(self_score);
    record.final_score = Some(final_score);

    let verdict = if format_reward(&render_chain(chain)) != 1.0 {
        Err("invalid-chain-format".to_string())
    } else {
        gate_decision(task, final_score, self_score, gate)
    };
    match verdict {
        Ok(()) => {
            record.retained = true;
            record.reject_reason = None;
        }
        Err(reason) => {
            record.retained = false;
            record.reject_reason = Some(reason);
        }
    }
    record
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub concurrency: usize,
    pub retry: RetryPolicy,
    /// Tool outputs longer than this many characters reject the sample.
    pub tool_output_cap: usize,
    pub gate: GateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { concurrency: 4, retry: RetryPolicy::default(), tool_output_cap: 8192, gate: GateConfig::default() }
    }
}

pub struct Pipeline<'a> {
    client: &'a dyn ChatClient,
    tools: Vec<&'a dyn ToolAdapter>,
    templates: TemplateSet,
    config: PipelineConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        client: &'a dyn ChatClient,
        tools: Vec<&'a dyn ToolAdapter>,
        templates: TemplateSet,
        config: PipelineConfig,
    ) -> Result<Self, ForgeError> {
        if tools.is_empty() {
            return Err(ForgeError::Config("at least one tool adapter is required".into()));
        }
        let mut names: Vec<&str> = tools.iter().map(|t| t.name()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(ForgeError::Config(format!("duplicate tool name `{}`", w[0])));
        }
        for task in TaskKind::ALL {
            if let Some(t) = templates.get(task) {
                if t.tool_slots != tools.len() {
                    return Err(ForgeError::Config(format!(
                        "{task} template has {} tool placeholders but {} tools are configured",
                        t.tool_slots,
                        tools.len()
                    )));
                }
            }
        }
        if config.concurrency == 0 {
            return Err(ForgeError::Config("concurrency must be at least 1".into()));
        }
        Ok(Pipeline { client, tools, templates, config })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn chat(&self, sample_id: &str, messages: &[ChatMessage]) -> Result<String, String> {
        let request = ChatRequest { sample_id, messages };
        self.config
            .retry
            .run(self.client.retryable(), || self.client.send(&request))
            .map_err(|e| format!("client-failure: {e}"))
    }

    /// Runs the two-turn conversation and assembles the chain. No gate.
    pub fn build_chain(&self, sample: &SampleRecord) -> ReasoningRecord {
        let Some(template) = self.templates.get(sample.task) else {
            return ReasoningRecord::rejected(sample, format!("no-template: {}", sample.task));
        };

        let mut messages = vec![ChatMessage::user(template.turn1.clone(), Some(sample.image_ref.clone()))];
        let turn1 = match self.chat(&sample.id, &messages) {
            Ok(r) => r,
            Err(reason) => return ReasoningRecord::rejected(sample, reason),
        };

        let mut tool_outputs = BTreeMap::new();
        let mut ordered = Vec::with_capacity(self.tools.len());
        for tool in &self.tools {
            let out = self
                .config
                .retry
                .run(tool.retryable(), || tool.recognize(sample.task, &sample.image_ref));
            let out = match out {
                Ok(o) => o,
                Err(e) => {
                    let msg = match e {
                        ForgeError::Tool { message, .. } => message,
                        other => other.to_string(),
                    };
                    return ReasoningRecord::rejected(sample, format!("tool-failure: {}: {msg}", tool.name()));
                }
            };
            if out.chars().count() > self.config.tool_output_cap {
                return ReasoningRecord::rejected(sample, format!("tool-output-overflow: {}", tool.name()));
            }
            tool_outputs.insert(tool.name().to_string(), out.clone());
            ordered.push(out);
        }

        let turn2_prompt = match template.render_turn2(&ordered) {
            Ok(p) => p,
            Err(e) => return ReasoningRecord::rejected(sample, format!("template: {e}")),
        };
        let tool_block = PromptTemplate::tool_block(&turn2_prompt).unwrap_or_default().to_string();

        messages.push(ChatMessage::assistant(turn1.clone()));
        messages.push(ChatMessage::user(turn2_prompt, None));
        let turn2 = match self.chat(&sample.id, &messages) {
            Ok(r) => r,
            Err(reason) => return ReasoningRecord::rejected(sample, reason),
        };

        let (Some(rethink), Some(answer)) = (extract_section(&turn2, Tag::Rethink), extract_section(&turn2, Tag::Answer))
        else {
            let mut r = ReasoningRecord::rejected(sample, "unparseable".into());
            r.tool_outputs = tool_outputs;
            return r;
        };

        let think = extract_named(&turn1, "recognition").unwrap_or(&turn1).to_string();
        ReasoningRecord {
            sample: sample.clone(),
            chain: Some(ReasoningChain {
                think,
                tool_blocks: vec![tool_block],
                rethink: rethink.to_string(),
                answer: answer.to_string(),
            }),
            tool_outputs,
            self_score: None,
            tool_scores: BTreeMap::new(),
            final_score: None,
            retained: false,
            reject_reason: None,
        }
    }

    pub fn process(&self, sample: &SampleRecord) -> ReasoningRecord {
        apply_gate(self.build_chain(sample), &self.config.gate)
    }

    /// Processes samples with bounded parallelism; output follows input order.
    pub fn run(&self, samples: &[SampleRecord]) -> Vec<ReasoningRecord> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.config.concurrency).build();
        match pool {
            Ok(pool) => pool.install(|| samples.par_iter().map(|s| self.process(s)).collect()),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); running sequentially");
                samples.iter().map(|s| self.process(s)).collect()
            }
        }
    }
}

/// Body of the first `<name>...</name>` pair.
fn extract_named<'t>(text: &'t str, name: &str) -> Option<&'t str> {
    let open = format!("<{name}>");
    let close = format!("</{name}>");
    let start = text.find(&open)? + open.len();
    let len = text[start..].find(&close)?;
    Some(&text[start..start + len])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    /// Ten equal-width bins over [0, 1]; 1.0 lands in the last bin.
    pub bins: Vec<usize>,
}

impl Histogram {
    const BINS: usize = 10;

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut bins = vec![0; Self::BINS];
        for v in values {
            let i = ((v.clamp(0.0, 1.0) * Self::BINS as f64) as usize).min(Self::BINS - 1);
            bins[i] += 1;
        }
        Histogram { bins }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub toolkit_version: String,
    pub config: serde_json::Value,
    pub submitted: usize,
    pub retained: usize,
    pub rejected: usize,
    pub rejected_by_reason: BTreeMap<String, usize>,
    /// Keyed `<task>.<score>`.
    pub histograms: BTreeMap<String, Histogram>,
}

impl RunReport {
    pub fn from_records(records: &[ReasoningRecord], config: serde_json::Value) -> Self {
        let retained = records.iter().filter(|r| r.retained).count();
        let mut rejected_by_reason = BTreeMap::new();
        for r in records.iter().filter(|r| !r.retained) {
            *rejected_by_reason.entry(r.reject_category().unwrap_or("unknown").to_string()).or_insert(0) += 1;
        }
        let mut histograms = BTreeMap::new();
        for task in TaskKind::ALL {
            let of_task: Vec<&ReasoningRecord> = records.iter().filter(|r| r.sample.task == task).collect();
            if of_task.is_empty() {
                continue;
            }
            histograms.insert(
                format!("{task}.final_score"),
                Histogram::from_values(of_task.iter().filter_map(|r| r.final_score)),
            );
            histograms.insert(
                format!("{task}.self_score"),
                Histogram::from_values(of_task.iter().filter_map(|r| r.self_score)),
            );
        }
        RunReport {
            toolkit_version: crate::VERSION.to_string(),
            config,
            submitted: records.len(),
            retained,
            rejected: records.len() - retained,
            rejected_by_reason,
            histograms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub dataset: PathBuf,
    pub audit: PathBuf,
    pub report: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ForgeError + '_ {
    move |source| ForgeError::Io { path: path.to_path_buf(), source }
}

/// Writes one JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), ForgeError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(&item).expect("records serialize");
        w.write_all(line.as_bytes()).map_err(io_err(path))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a SampleRecord JSONL dataset. Blank lines are skipped; ids must be
/// unique and ground truths non-empty.
pub fn read_samples(path: &Path) -> Result<Vec<SampleRecord>, ForgeError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord =
            serde_json::from_str(&line).map_err(|e| ForgeError::Record { line: n + 1, message: e.to_string() })?;
        if rec.answer_gt.is_empty() {
            return Err(ForgeError::Record { line: n + 1, message: "answer_gt is empty".into() });
        }
        if !seen.insert(rec.id.clone()) {
            return Err(ForgeError::Record { line: n + 1, message: format!("duplicate id `{}`", rec.id) });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn dataset_line(record: &ReasoningRecord) -> Option<DatasetLine> {
    let chain = record.chain.as_ref()?;
    Some(DatasetLine {
        id: record.sample.id.clone(),
        task: record.sample.task,
        image_ref: record.sample.image_ref.clone(),
        question: record.sample.question.clone(),
        reasoning: render_chain(chain),
        answer: chain.answer.clone(),
    })
}

/// Builds, gates and writes: retained lines to the dataset, every record to
/// the audit file, and the run report. Per-sample failures never abort.
pub fn run_pipeline(
    dataset: &[SampleRecord],
    pipeline: &Pipeline<'_>,
    outputs: &OutputPaths,
    resolved_config: serde_json::Value,
) -> Result<RunReport, ForgeError> {
    let records = pipeline.run(dataset);
    write_jsonl(&outputs.dataset, records.iter().filter(|r| r.retained).filter_map(dataset_line))?;
    write_jsonl(&outputs.audit, &records)?;
    let report = RunReport::from_records(&records, resolved_config);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&outputs.report, json + "\n").map_err(io_err(&outputs.report))?;
    Ok(report)
}
