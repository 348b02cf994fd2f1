use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClientKind, HarnessError, RunConfig, API_KEY_ENV};
use crate::forge::{
    read_samples, run_pipeline, CannedClient, CannedTool, ChatClient, HttpChatClient, HttpChatConfig, HttpTool,
    OutputPaths, Pipeline, PipelineConfig, PromptTemplate, RunReport, SampleRecord, TemplateSet, ToolAdapter,
};
use crate::reward::TaskKind;

/// What a construct run would do. Printed by `--dry-run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructPlan {
    pub toolkit_version: String,
    pub config: serde_json::Value,
    pub samples: usize,
    pub samples_by_task: BTreeMap<TaskKind, usize>,
    pub tools: Vec<String>,
    /// task -> "builtin" or the template path
    pub templates: BTreeMap<TaskKind, String>,
    pub outputs: OutputPaths,
}

fn load_templates(config: &RunConfig) -> Result<(TemplateSet, BTreeMap<TaskKind, String>), HarnessError> {
    let mut set = TemplateSet::default();
    let mut sources: BTreeMap<TaskKind, String> = TaskKind::ALL.iter().map(|&t| (t, "builtin".to_string())).collect();
    if let Some(dir) = &config.construct.templates_dir {
        if !dir.is_dir() {
            return Err(HarnessError::Config(format!(
                "construct.templates_dir: {} is not a directory",
                dir.display()
            )));
        }
        for task in TaskKind::ALL {
            let path = dir.join(format!("{task}.txt"));
            if path.is_file() {
                set.insert(PromptTemplate::from_path(task, &path)?);
                sources.insert(task, path.display().to_string());
            }
        }
    }
    Ok((set, sources))
}

fn outputs(config: &RunConfig) -> OutputPaths {
    let c = &config.construct;
    OutputPaths {
        dataset: c.dataset.clone().expect("validated"),
        audit: c.audit.clone().expect("validated"),
        report: c.report.clone().expect("validated"),
    }
}

fn pipeline_config(config: &RunConfig) -> PipelineConfig {
    let c = &config.construct;
    PipelineConfig { concurrency: c.concurrency, retry: c.retry, tool_output_cap: c.tool_output_cap, gate: c.gate }
}

fn read_input(config: &RunConfig) -> Result<Vec<SampleRecord>, HarnessError> {
    let path = config.construct.input.as_deref().expect("validated");
    read_samples(path).map_err(|e| match e {
        crate::error::ForgeError::Record { line, message } => {
            HarnessError::MalformedLine { path: path.to_path_buf(), line, message }
        }
        other => HarnessError::from(other),
    })
}

fn plan(config: &RunConfig, samples: &[SampleRecord], sources: BTreeMap<TaskKind, String>) -> ConstructPlan {
    let mut by_task = BTreeMap::new();
    for s in samples {
        *by_task.entry(s.task).or_insert(0) += 1;
    }
    ConstructPlan {
        toolkit_version: crate::VERSION.to_string(),
        config: config.to_json(),
        samples: samples.len(),
        samples_by_task: by_task,
        tools: config.construct.tools.iter().map(|t| t.name.clone()).collect(),
        templates: sources,
        outputs: outputs(config),
    }
}

/// Runs construction with caller-supplied client and tools. With `dry_run`
/// the plan is returned and neither client nor tools are touched.
pub fn construct_with(
    config: &RunConfig,
    client: &dyn ChatClient,
    tools: Vec<&dyn ToolAdapter>,
    dry_run: bool,
) -> Result<(ConstructPlan, Option<RunReport>), HarnessError> {
    config.validate_construct()?;
    let samples = read_input(config)?;
    let (templates, sources) = load_templates(config)?;
    let plan = plan(config, &samples, sources);
    let pipeline = Pipeline::new(client, tools, templates, pipeline_config(config))?;
    if dry_run {
        return Ok((plan, None));
    }
    let report = run_pipeline(&samples, &pipeline, &plan.outputs, plan.config.clone()).map_err(|e| match e {
        crate::error::ForgeError::Io { path, source } => HarnessError::write(&path, source),
        other => HarnessError::from(other),
    })?;
    Ok((plan, Some(report)))
}

/// Builds client and tools from the config, then runs [`construct_with`].
pub fn cmd_construct(config: &RunConfig, dry_run: bool) -> Result<(ConstructPlan, Option<RunReport>), HarnessError> {
    config.validate_construct()?;
    let c = &config.construct;
    let client: Box<dyn ChatClient> = match c.client.kind {
        ClientKind::Canned => Box::new(CannedClient::from_dir(c.client.canned_dir.as_deref().expect("validated"))?),
        ClientKind::Http => {
            let http = HttpChatConfig {
                endpoint: c.client.endpoint.clone().expect("validated"),
                model: c.client.model.clone().expect("validated"),
                temperature: c.client.temperature,
                timeout_secs: c.client.timeout_secs,
                image_mode: c.client.image_mode,
            };
            Box::new(HttpChatClient::new(http, std::env::var(API_KEY_ENV).ok())?)
        }
    };
    let mut tools: Vec<Box<dyn ToolAdapter>> = Vec::new();
    for t in &c.tools {
        match t.kind {
            ClientKind::Canned => {
                let path = t.fixture.as_deref().expect("validated");
                tools.push(Box::new(CannedTool::from_json_file(t.name.clone(), path)?));
            }
            ClientKind::Http => {
                let endpoint = t.endpoint.clone().expect("validated");
                tools.push(Box::new(HttpTool::new(t.name.clone(), endpoint, t.timeout_secs)?));
            }
        }
    }
    construct_with(config, client.as_ref(), tools.iter().map(|t| t.as_ref()).collect(), dry_run)
}
