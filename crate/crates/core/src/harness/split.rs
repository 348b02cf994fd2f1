use std::collections::BTreeMap;
use std::path::PathBuf;

use super::{write_json_file, HarnessError, RunConfig};
use crate::forge::{read_samples, write_jsonl};
use crate::reward::TaskKind;
use crate::split::{split_titles, KeywordLexicon, SplitParams, SplitReport};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitFiles {
    pub train: PathBuf,
    pub test: PathBuf,
    pub report: PathBuf,
}

/// Splits a seal SampleRecord dataset on its ground-truth titles. Output
/// files keep input order.
pub fn cmd_split(config: &RunConfig) -> Result<SplitReport, HarnessError> {
    config.validate_split()?;
    let s = &config.split;
    let input = s.input.as_deref().expect("validated");
    let samples = read_samples(input).map_err(|e| match e {
        crate::error::ForgeError::Record { line, message } => {
            HarnessError::MalformedLine { path: input.to_path_buf(), line, message }
        }
        other => HarnessError::from(other),
    })?;
    let non_seal = samples.iter().filter(|r| r.task != TaskKind::Seal).count();
    if non_seal > 0 {
        log::warn!("{non_seal} non-seal records in split input; titles are taken from answer_gt regardless");
    }
    let titles: BTreeMap<String, String> = samples.iter().map(|r| (r.id.clone(), r.answer_gt.clone())).collect();
    let lexicon = match &s.lexicon {
        Some(path) => std::sync::Arc::new(KeywordLexicon::from_path(path)?),
        None => KeywordLexicon::builtin(),
    };
    let params = SplitParams { threshold: s.threshold, test_fraction: s.test_fraction, seed: s.seed };
    let (assignment, report) = split_titles(&titles, &lexicon, &params, config.to_json())?;

    let files = SplitFiles {
        train: s.train.clone().expect("validated"),
        test: s.test.clone().expect("validated"),
        report: s.report.clone().expect("validated"),
    };
    let write = |path: &PathBuf, keep: &dyn Fn(&str) -> bool| {
        write_jsonl(path, samples.iter().filter(|r| keep(&r.id))).map_err(|e| HarnessError::write(path, e))
    };
    write(&files.train, &|id| assignment.train.contains(id))?;
    write(&files.test, &|id| assignment.test.contains(id))?;
    write_json_file(&files.report, &report)?;
    if !report.cross_edge_check.passed {
        return Err(HarnessError::Internal(format!(
            "post-hoc check found {} train/test pairs above threshold",
            report.cross_edge_check.cross_pairs
        )));
    }
    Ok(report)
}
