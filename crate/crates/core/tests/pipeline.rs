mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use ocrchain::error::ForgeError;
use ocrchain::forge::{
    apply_gate, read_samples, run_pipeline, CannedClient, CannedTool, ChatClient, ChatRequest, OutputPaths, Pipeline,
    PipelineConfig, ReasoningRecord, RetryPolicy, TemplateSet, ToolAdapter,
};
use ocrchain::harness::{construct_with, RunConfig};
use ocrchain::{format_reward, TaskKind};

use common::*;

struct Counting<'a> {
    inner: &'a dyn ChatClient,
    calls: AtomicUsize,
}

impl ChatClient for Counting<'_> {
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, ForgeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.send(request)
    }
    fn retryable(&self) -> bool {
        false
    }
}

struct Failing;

impl ToolAdapter for Failing {
    fn name(&self) -> &str {
        "broken"
    }
    fn recognize(&self, _: TaskKind, _: &str) -> Result<String, ForgeError> {
        Err(ForgeError::Tool { tool: "broken".into(), message: "timeout".into() })
    }
    fn retryable(&self) -> bool {
        false
    }
}

fn tools(f: &PipelineFixture) -> (CannedTool, CannedTool) {
    (CannedTool::from_json_file("ocr_a", &f.tool_a).unwrap(), CannedTool::from_json_file("ocr_b", &f.tool_b).unwrap())
}

fn config() -> PipelineConfig {
    PipelineConfig { retry: RetryPolicy::none(), ..PipelineConfig::default() }
}

#[test]
fn fixture_gate_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_pipeline_fixture(dir.path());
    let client = CannedClient::from_dir(&f.canned_dir).unwrap();
    let (a, b) = tools(&f);
    let pipeline = Pipeline::new(&client, vec![&a, &b], TemplateSet::default(), config()).unwrap();
    let samples = read_samples(&f.samples).unwrap();
    let records = pipeline.run(&samples);
    let kept: Vec<&str> = records.iter().filter(|r| r.retained).map(|r| r.sample.id.as_str()).collect();
    assert_eq!(kept, f.expected_retained);

    let reason = |id: &str| records.iter().find(|r| r.sample.id == id).unwrap().reject_category().map(str::to_string);
    assert_eq!(reason("s03").as_deref(), Some("gate-not-exact"));
    assert_eq!(reason("t02").as_deref(), Some("gate-not-better-than-self"));
    assert_eq!(reason("f03").as_deref(), Some("unparseable"));

    // the seal tool block is the template's JSON object holding both outputs
    let s01 = &records[0];
    let block = &s01.chain.as_ref().unwrap().tool_blocks;
    assert_eq!(block.len(), 1);
    let v: serde_json::Value = serde_json::from_str(&block[0]).unwrap();
    assert_eq!(v["ocr_tool_1"], "北川羌族自治县永安镇人民政府");
    assert_eq!(v["ocr_tool_2"], "北川羌族自治县永安镇人民政付");
    assert_eq!(s01.chain.as_ref().unwrap().think, "北川羌族自治县永安镇人民政");
}

#[test]
fn retained_records_survive_serialization() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_pipeline_fixture(dir.path());
    let client = CannedClient::from_dir(&f.canned_dir).unwrap();
    let (a, b) = tools(&f);
    let pipeline = Pipeline::new(&client, vec![&a, &b], TemplateSet::default(), config()).unwrap();
    let records = pipeline.run(&read_samples(&f.samples).unwrap());
    for r in records.iter().filter(|r| r.retained) {
        let json = serde_json::to_string(r).unwrap();
        let back: ReasoningRecord = serde_json::from_str(&json).unwrap();
        let regated = apply_gate(back, &config().gate);
        assert!(regated.retained, "{}", r.sample.id);
        assert_eq!(format_reward(&ocrchain::render_chain(r.chain.as_ref().unwrap())), 1.0);
    }
}

#[test]
fn failing_tool_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_pipeline_fixture(dir.path());
    let client = CannedClient::from_dir(&f.canned_dir).unwrap();
    let (a, _) = tools(&f);
    let broken = Failing;
    let pipeline = Pipeline::new(&client, vec![&a, &broken], TemplateSet::default(), config()).unwrap();
    let samples = read_samples(&f.samples).unwrap();
    let r = pipeline.process(&samples[0]);
    assert!(!r.retained);
    assert_eq!(r.reject_reason.as_deref(), Some("tool-failure: broken: timeout"));
}

#[test]
fn oversized_tool_output_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_pipeline_fixture(dir.path());
    let client = CannedClient::from_dir(&f.canned_dir).unwrap();
    let (a, b) = tools(&f);
    let cfg = PipelineConfig { tool_output_cap: 10, ..config() };
    let pipeline = Pipeline::new(&client, vec![&a, &b], TemplateSet::default(), cfg).unwrap();
    let r = pipeline.process(&read_samples(&f.samples).unwrap()[0]);
    assert_eq!(r.reject_reason.as_deref(), Some("tool-output-overflow: ocr_a"));
}

#[test]
fn empty_dataset_gives_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let client = CannedClient::from_map([]);
    let a = CannedTool::new("a", []);
    let b = CannedTool::new("b", []);
    let pipeline = Pipeline::new(&client, vec![&a, &b], TemplateSet::default(), config()).unwrap();
    let out = OutputPaths {
        dataset: dir.path().join("d.jsonl"),
        audit: dir.path().join("a.jsonl"),
        report: dir.path().join("r.json"),
    };
    let report = run_pipeline(&[], &pipeline, &out, serde_json::Value::Null).unwrap();
    assert_eq!((report.submitted, report.retained, report.rejected), (0, 0, 0));
    assert_eq!(std::fs::read_to_string(&out.dataset).unwrap(), "");
    assert_eq!(std::fs::read_to_string(&out.audit).unwrap(), "");
}

#[test]
fn config_mismatch_is_rejected() {
    let client = CannedClient::from_map([]);
    let a = CannedTool::new("a", []);
    assert!(Pipeline::new(&client, vec![&a], TemplateSet::default(), config()).is_err());
    let a2 = CannedTool::new("a", []);
    assert!(Pipeline::new(&client, vec![&a, &a2], TemplateSet::default(), config()).is_err());
    assert!(Pipeline::new(&client, vec![], TemplateSet::default(), config()).is_err());
}

#[test]
fn dry_run_never_calls_the_client() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_pipeline_fixture(dir.path());
    let out = dir.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = RunConfig::from_toml(&pipeline_config_toml(&f, &out)).unwrap();
    let canned = CannedClient::from_dir(&f.canned_dir).unwrap();
    let client = Counting { inner: &canned, calls: AtomicUsize::new(0) };
    let (a, b) = tools(&f);

    let (plan, report) = construct_with(&cfg, &client, vec![&a, &b], true).unwrap();
    assert!(report.is_none());
    assert_eq!(plan.samples, 10);
    assert_eq!(client.calls.load(Ordering::SeqCst), 0);
    assert!(!out.join("dataset.jsonl").exists());

    let (_, report) = construct_with(&cfg, &client, vec![&a, &b], false).unwrap();
    let report = report.unwrap();
    assert_eq!(report.retained, 7);
    assert_eq!(report.retained + report.rejected, report.submitted);
    // every fixture sample reaches turn 2
    assert_eq!(client.calls.load(Ordering::SeqCst), 20);
    assert_eq!(report.config, cfg.to_json());
}
