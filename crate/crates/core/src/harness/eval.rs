use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_json_file, HarnessError, RunConfig};
use crate::chain::extract_answer;
use crate::formula::{cdm_proxy, exprate};
use crate::reward::TaskKind;
use crate::table::{steds, teds};
use crate::text::{exact_match, ned};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub toolkit_version: String,
    pub config: serde_json::Value,
    pub task: TaskKind,
    pub n: usize,
    /// Mean of each per-item metric.
    pub metrics: BTreeMap<String, f64>,
    pub per_item: Vec<EvalItem>,
}

#[derive(Deserialize)]
struct PredictionLine {
    id: String,
    prediction: String,
}

#[derive(Deserialize)]
struct ReferenceLine {
    id: String,
    #[serde(alias = "answer_gt")]
    answer: String,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| HarnessError::MalformedLine {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push((n + 1, v));
    }
    Ok(out)
}

/// `(id, prediction)` pairs in file order. Ids must be unique.
pub fn read_predictions(path: &Path) -> Result<Vec<(String, String)>, HarnessError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, p) in read_jsonl::<PredictionLine>(path)? {
        if !seen.insert(p.id.clone()) {
            return Err(HarnessError::MalformedLine {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate id `{}`", p.id),
            });
        }
        out.push((p.id, p.prediction));
    }
    Ok(out)
}

/// Reference answers by id. Accepts `answer` or `answer_gt`, so sample
/// datasets double as reference files.
pub fn read_references(path: &Path) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut out = BTreeMap::new();
    for (line, r) in read_jsonl::<ReferenceLine>(path)? {
        if out.insert(r.id.clone(), r.answer).is_some() {
            return Err(HarnessError::MalformedLine {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate id `{}`", r.id),
            });
        }
    }
    Ok(out)
}

fn item_metrics(task: TaskKind, id: &str, pred: &str, gt: &str) -> Result<BTreeMap<String, f64>, HarnessError> {
    let mut m = BTreeMap::new();
    match task {
        TaskKind::Seal => {
            m.insert("ACC".into(), exact_match(pred, gt));
        }
        TaskKind::Table => {
            let bad_ref = |e: crate::error::TableError| HarnessError::Input {
                path: "<references>".into(),
                message: format!("reference `{id}`: {e}"),
            };
            m.insert("TEDS".into(), teds(pred, gt).map_err(bad_ref)?.value);
            m.insert("STEDS".into(), steds(pred, gt).map_err(bad_ref)?.value);
            m.insert("NED".into(), ned(pred, gt).value);
        }
        TaskKind::Formula => {
            let cdm = cdm_proxy(pred, gt).value;
            m.insert("CDM_proxy".into(), cdm);
            m.insert("ExpRate".into(), if cdm == 1.0 { 1.0 } else { 0.0 });
            m.insert("NED".into(), ned(pred, gt).value);
        }
    }
    Ok(m)
}

/// Per-item metrics plus their means. Every prediction id must have a
/// reference; references without a prediction are ignored.
pub fn evaluate(
    task: TaskKind,
    predictions: &[(String, String)],
    references: &BTreeMap<String, String>,
    extract: bool,
    config: serde_json::Value,
) -> Result<EvalReport, HarnessError> {
    let missing: Vec<String> =
        predictions.iter().filter(|(id, _)| !references.contains_key(id)).map(|(id, _)| id.clone()).collect();
    if !missing.is_empty() {
        return Err(HarnessError::MissingReference(missing));
    }
    if predictions.is_empty() {
        return Err(HarnessError::Input { path: "<predictions>".into(), message: "no predictions to evaluate".into() });
    }
    let mut per_item = Vec::with_capacity(predictions.len());
    for (id, pred) in predictions {
        let pred = if extract { extract_answer(pred).unwrap_or("") } else { pred.as_str() };
        let metrics = item_metrics(task, id, pred, &references[id])?;
        per_item.push(EvalItem { id: id.clone(), metrics });
    }
    let mut metrics = BTreeMap::new();
    for name in per_item[0].metrics.keys() {
        let sum: f64 = per_item.iter().map(|i| i.metrics[name]).sum();
        metrics.insert(name.clone(), sum / per_item.len() as f64);
    }
    if task == TaskKind::Formula {
        let scores: Vec<_> = predictions
            .iter()
            .map(|(id, p)| cdm_proxy(if extract { extract_answer(p).unwrap_or("") } else { p }, &references[id]))
            .collect();
        let er = exprate(&scores).map_err(|e| HarnessError::Internal(e.to_string()))?;
        debug_assert_eq!(Some(&er), metrics.get("ExpRate"));
        metrics.insert("ExpRate".into(), er);
    }
    Ok(EvalReport {
        toolkit_version: crate::VERSION.to_string(),
        config,
        task,
        n: per_item.len(),
        metrics,
        per_item,
    })
}

/// Plain-text summary of the aggregate metrics.
pub fn render_table(report: &EvalReport) -> String {
    let width = report.metrics.keys().map(String::len).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "task: {}  n: {}", report.task, report.n);
    let _ = writeln!(out, "{:<width$}  value", "metric");
    let _ = writeln!(out, "{}  ------", "-".repeat(width));
    for (name, v) in &report.metrics {
        let _ = writeln!(out, "{name:<width$}  {v:.4}");
    }
    out
}

pub fn cmd_eval(config: &RunConfig) -> Result<EvalReport, HarnessError> {
    config.validate_eval()?;
    let task = config.require_task()?;
    let preds = read_predictions(config.eval.predictions.as_deref().expect("validated"))?;
    let refs = read_references(config.eval.references.as_deref().expect("validated"))?;
    let report = evaluate(task, &preds, &refs, config.eval.extract_answer, config.to_json())?;
    if let Some(path) = &config.eval.report {
        write_json_file(path, &report)?;
    }
    Ok(report)
}
