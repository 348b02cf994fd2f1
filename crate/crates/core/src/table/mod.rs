//! HTML table trees and TEDS / structure-only TEDS.

mod html;
mod ted;

pub use html::parse_html_table;
pub use ted::{forest_edit_distance, tree_edit_distance, CostModel, TedsCost};

use serde::{Deserialize, Serialize};

use crate::error::TableError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableTag {
    Table,
    Thead,
    Tbody,
    Tr,
    Td,
}

/// A node of an ordered table tree. Only `Td` nodes carry text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableNode {
    pub tag: TableTag,
    pub colspan: u32,
    pub rowspan: u32,
    pub text: String,
    pub children: Vec<TableNode>,
}

impl TableNode {
    pub fn new(tag: TableTag) -> Self {
        TableNode { tag, colspan: 1, rowspan: 1, text: String::new(), children: Vec::new() }
    }

    pub fn cell(text: &str, colspan: u32, rowspan: u32) -> Self {
        TableNode { tag: TableTag::Td, colspan, rowspan, text: text.to_string(), children: Vec::new() }
    }

    pub fn with_children(mut self, children: Vec<TableNode>) -> Self {
        self.children = children;
        self
    }

    /// Number of nodes in the tree, root included.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TableNode::size).sum::<usize>()
    }

    /// Copy of the tree with every cell text erased.
    pub fn without_text(&self) -> TableNode {
        TableNode {
            tag: self.tag,
            colspan: self.colspan,
            rowspan: self.rowspan,
            text: String::new(),
            children: self.children.iter().map(TableNode::without_text).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TedsScore {
    pub value: f64,
    pub tree_size_pred: usize,
    pub tree_size_gt: usize,
    pub edit_distance: f64,
}

/// Similarity between two trees, `1 - distance / max(size)`, floored at 0.
pub fn teds_trees(pred: &TableNode, gt: &TableNode) -> TedsScore {
    let edit_distance = tree_edit_distance(pred, gt, &TedsCost);
    let (np, ng) = (pred.size(), gt.size());
    let denom = np.max(ng) as f64;
    let value = (1.0 - edit_distance / denom).clamp(0.0, 1.0);
    TedsScore { value, tree_size_pred: np, tree_size_gt: ng, edit_distance }
}

fn score(pred_html: &str, gt_html: &str, structure_only: bool) -> Result<TedsScore, TableError> {
    let mut gt = parse_html_table(gt_html)?;
    if structure_only {
        gt = gt.without_text();
    }
    let Ok(mut pred) = parse_html_table(pred_html) else {
        let size = gt.size();
        return Ok(TedsScore { value: 0.0, tree_size_pred: 0, tree_size_gt: size, edit_distance: size as f64 });
    };
    if structure_only {
        pred = pred.without_text();
    }
    Ok(teds_trees(&pred, &gt))
}

/// TEDS between two HTML tables. A prediction without a `<table>` scores
/// 0.0; a ground truth without one is an error.
pub fn teds(pred_html: &str, gt_html: &str) -> Result<TedsScore, TableError> {
    score(pred_html, gt_html, false)
}

/// TEDS with all cell texts erased first. Spans still count.
pub fn steds(pred_html: &str, gt_html: &str) -> Result<TedsScore, TableError> {
    score(pred_html, gt_html, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_vs_one_by_two() {
        let s = teds("<table><tr><td>a</td></tr></table>", "<table><tr><td>a</td><td>b</td></tr></table>").unwrap();
        assert_eq!((s.tree_size_pred, s.tree_size_gt), (4, 5));
        assert_eq!(s.edit_distance, 1.0);
        assert_eq!(s.value, 1.0 - 1.0 / 5.0);
    }

    #[test]
    fn identical_and_unparseable() {
        let gt = "<table><tr><td>a</td><td>b</td></tr></table>";
        assert_eq!(teds(gt, gt).unwrap().value, 1.0);
        assert_eq!(teds("no table here", gt).unwrap().value, 0.0);
        assert_eq!(teds(gt, "no table").unwrap_err(), TableError::NoTableFound);
    }

    #[test]
    fn steds_ignores_text_not_spans() {
        let a = "<table><tr><td>x</td><td>y</td></tr></table>";
        let b = "<table><tr><td>p</td><td>q</td></tr></table>";
        assert_eq!(steds(a, b).unwrap().value, 1.0);
        assert!(teds(a, b).unwrap().value < 1.0);
        let c = r#"<table><tr><td colspan="2">x</td><td>y</td></tr></table>"#;
        assert!(steds(a, c).unwrap().value < 1.0);
    }

    #[test]
    fn steds_equals_teds_on_stripped_trees() {
        let pred = "<table><tr><td>a</td></tr></table>";
        let gt = "<table><tr><td>a</td></tr><tr><td>b</td></tr></table>";
        let p = parse_html_table(pred).unwrap().without_text();
        let g = parse_html_table(gt).unwrap().without_text();
        assert_eq!(steds(pred, gt).unwrap(), teds_trees(&p, &g));
    }
}
