//! Two-turn prompt templates with `{toolN}` placeholders.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::chain::{extract_section, Tag};
use crate::error::ForgeError;
use crate::reward::TaskKind;

const SEAL: &str = include_str!("../../data/templates/seal.txt");
const TABLE: &str = include_str!("../../data/templates/table.txt");
const FORMULA: &str = include_str!("../../data/templates/formula.txt");

const TURN1: &str = "## Turn 1";
const TURN2: &str = "## Turn 2";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptTemplate {
    pub task: TaskKind,
    pub turn1: String,
    pub turn2: String,
    /// Number of `{toolN}` placeholders, N = 1..=tool_slots.
    pub tool_slots: usize,
}

/// Splits `s` into literal text and `{toolN}` slots.
fn segments(s: &str) -> Vec<Result<&str, usize>> {
    let mut out = Vec::new();
    let mut rest = s;
    while let Some(pos) = rest.find("{tool") {
        let after = &rest[pos + 5..];
        let digits = after.chars().take_while(char::is_ascii_digit).count();
        if digits > 0 && after[digits..].starts_with('}') {
            if pos > 0 {
                out.push(Ok(&rest[..pos]));
            }
            let n: usize = after[..digits].parse().unwrap_or(0);
            out.push(Err(n));
            rest = &after[digits + 1..];
        } else {
            out.push(Ok(&rest[..pos + 5]));
            rest = after;
        }
    }
    if !rest.is_empty() {
        out.push(Ok(rest));
    }
    out
}

impl PromptTemplate {
    pub fn parse(task: TaskKind, text: &str) -> Result<Self, ForgeError> {
        let t1 = text
            .find(TURN1)
            .ok_or_else(|| ForgeError::Template(format!("{task} template has no `{TURN1}` header")))?;
        let t2 = text
            .find(TURN2)
            .filter(|&p| p > t1)
            .ok_or_else(|| ForgeError::Template(format!("{task} template has no `{TURN2}` header after turn 1")))?;
        let turn1 = text[t1 + TURN1.len()..t2].trim().to_string();
        let turn2 = text[t2 + TURN2.len()..].trim().to_string();
        if extract_section(&turn2, Tag::Tool).is_none() {
            return Err(ForgeError::Template(format!("{task} template turn 2 has no <tool></tool> section")));
        }
        let slots: Vec<usize> = segments(&turn2).into_iter().filter_map(|s| s.err()).collect();
        let tool_slots = slots.iter().copied().max().unwrap_or(0);
        if tool_slots == 0 || slots.contains(&0) || (1..=tool_slots).any(|n| !slots.contains(&n)) {
            return Err(ForgeError::Template(format!(
                "{task} template must use placeholders {{tool1}}..{{toolN}} without gaps"
            )));
        }
        Ok(PromptTemplate { task, turn1, turn2, tool_slots })
    }

    pub fn from_path(task: TaskKind, path: &Path) -> Result<Self, ForgeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ForgeError::Io { path: path.to_path_buf(), source })?;
        Self::parse(task, &text)
    }

    pub fn builtin(task: TaskKind) -> Self {
        let text = match task {
            TaskKind::Seal => SEAL,
            TaskKind::Table => TABLE,
            TaskKind::Formula => FORMULA,
        };
        Self::parse(task, text).expect("builtin template parses")
    }

    /// Turn 2 prompt with tool outputs substituted verbatim, in one pass.
    pub fn render_turn2(&self, tool_outputs: &[String]) -> Result<String, ForgeError> {
        if tool_outputs.len() != self.tool_slots {
            return Err(ForgeError::Template(format!(
                "{} template expects {} tool outputs, got {}",
                self.task,
                self.tool_slots,
                tool_outputs.len()
            )));
        }
        let mut out = String::with_capacity(self.turn2.len() + tool_outputs.iter().map(String::len).sum::<usize>());
        for seg in segments(&self.turn2) {
            match seg {
                Ok(text) => out.push_str(text),
                Err(n) => out.push_str(&tool_outputs[n - 1]),
            }
        }
        Ok(out)
    }

    /// The `<tool>` section body of a rendered turn 2 prompt.
    pub fn tool_block(rendered_turn2: &str) -> Option<&str> {
        extract_section(rendered_turn2, Tag::Tool)
    }
}

/// One template per task.
#[derive(Debug, Clone, Serialize)]
pub struct TemplateSet {
    templates: BTreeMap<TaskKind, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet { templates: TaskKind::ALL.iter().map(|&t| (t, PromptTemplate::builtin(t))).collect() }
    }
}

impl TemplateSet {
    pub fn empty() -> Self {
        TemplateSet { templates: BTreeMap::new() }
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.task, template);
    }

    pub fn get(&self, task: TaskKind) -> Option<&PromptTemplate> {
        self.templates.get(&task)
    }
}
