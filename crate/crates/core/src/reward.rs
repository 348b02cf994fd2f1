//! Format + accuracy rewards for GRPO rollouts.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{extract_answer, format_reward};
use crate::formula::{cdm_proxy_with, RewriteTable};
use crate::table::teds;
use crate::text::exact_match;

/// Bonus added to the formula accuracy reward on a perfect CDM proxy score.
pub const FORMULA_EXACT_BONUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Seal,
    Table,
    Formula,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Seal, TaskKind::Table, TaskKind::Formula];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Seal => "seal",
            TaskKind::Table => "table",
            TaskKind::Formula => "formula",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "seal" => Ok(TaskKind::Seal),
            "table" => Ok(TaskKind::Table),
            "formula" => Ok(TaskKind::Formula),
            other => Err(format!("unknown task `{other}` (expected seal, table or formula)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScore {
    pub task: TaskKind,
    pub format_reward: f64,
    pub accuracy_reward: f64,
    pub total: f64,
}

/// Reward scorer. Cheap to clone.
#[derive(Debug, Clone)]
pub struct RewardEngine {
    rules: Arc<RewriteTable>,
    /// When set, an invalid chain earns no accuracy reward even if its
    /// `<answer>` pair can be extracted.
    strict_gating: bool,
}

impl Default for RewardEngine {
    fn default() -> Self {
        RewardEngine { rules: RewriteTable::builtin(), strict_gating: false }
    }
}

impl RewardEngine {
    pub fn new(rules: Arc<RewriteTable>, strict_gating: bool) -> Self {
        RewardEngine { rules, strict_gating }
    }

    pub fn strict(mut self, strict_gating: bool) -> Self {
        self.strict_gating = strict_gating;
        self
    }

    pub fn rules(&self) -> &RewriteTable {
        &self.rules
    }

    pub fn is_strict(&self) -> bool {
        self.strict_gating
    }

    pub fn accuracy_reward(&self, task: TaskKind, answer: &str, gt: &str) -> f64 {
        match task {
            TaskKind::Seal => exact_match(answer, gt),
            TaskKind::Table => teds(answer, gt).map(|s| s.value).unwrap_or(0.0),
            TaskKind::Formula => {
                let value = cdm_proxy_with(&self.rules, answer, gt).value;
                if value == 1.0 {
                    value + FORMULA_EXACT_BONUS
                } else {
                    value
                }
            }
        }
    }

    pub fn score_rollout(&self, task: TaskKind, raw: &str, gt: &str) -> RewardScore {
        let format = format_reward(raw);
        let accuracy = if self.strict_gating && format == 0.0 {
            0.0
        } else {
            // no extractable answer scores as an empty answer
            let answer = extract_answer(raw).unwrap_or("");
            self.accuracy_reward(task, answer, gt)
        };
        RewardScore { task, format_reward: format, accuracy_reward: accuracy, total: format + accuracy }
    }

    /// Scores rollouts in parallel; output order follows input order.
    pub fn score_batch<S: AsRef<str> + Sync>(&self, task: TaskKind, rollouts: &[(S, S)]) -> Vec<RewardScore> {
        rollouts
            .par_iter()
            .map(|(raw, gt)| self.score_rollout(task, raw.as_ref(), gt.as_ref()))
            .collect()
    }
}

/// Accuracy reward with the builtin rewrite table.
pub fn accuracy_reward(task: TaskKind, answer: &str, gt: &str) -> f64 {
    RewardEngine::default().accuracy_reward(task, answer, gt)
}

pub fn score_rollout(task: TaskKind, raw: &str, gt: &str) -> RewardScore {
    RewardEngine::default().score_rollout(task, raw, gt)
}

pub fn score_batch<S: AsRef<str> + Sync>(task: TaskKind, rollouts: &[(S, S)]) -> Vec<RewardScore> {
    RewardEngine::default().score_batch(task, rollouts)
}
