//! Ordered tree edit distance (Zhang & Shasha keyroot decomposition).

use super::{TableNode, TableTag};
use crate::text::ned;

/// Edit costs over table nodes. Only the node's own label is consulted,
/// never its children.
pub trait CostModel {
    fn insert(&self, node: &TableNode) -> f64;
    fn delete(&self, node: &TableNode) -> f64;
    fn relabel(&self, a: &TableNode, b: &TableNode) -> f64;
}

/// Unit insert/delete; relabel 1 on tag or span mismatch, otherwise the
/// normalized edit distance between cell texts.
#[derive(Debug, Clone, Copy, Default)]
pub struct TedsCost;

impl CostModel for TedsCost {
    fn insert(&self, _: &TableNode) -> f64 {
        1.0
    }

    fn delete(&self, _: &TableNode) -> f64 {
        1.0
    }

    fn relabel(&self, a: &TableNode, b: &TableNode) -> f64 {
        if a.tag != b.tag {
            return 1.0;
        }
        if a.tag != TableTag::Td {
            return 0.0;
        }
        if a.colspan != b.colspan || a.rowspan != b.rowspan {
            return 1.0;
        }
        if a.text == b.text {
            0.0
        } else {
            ned(&a.text, &b.text).value
        }
    }
}

/// Post-order view of a forest. Index 0 is unused padding so the DP can use
/// 1-based indices as in the original formulation.
struct Postorder<'a> {
    nodes: Vec<Option<&'a TableNode>>,
    /// leftmost leaf descendant of each node
    lmld: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> Postorder<'a> {
    /// Builds the post-order of `forest` under a virtual root. The virtual
    /// root is the last node and matches the other virtual root for free.
    fn new(forest: &'a [TableNode]) -> Self {
        let mut p = Postorder { nodes: vec![None], lmld: vec![0], keyroots: Vec::new() };
        let mut first_leaf = None;
        for child in forest {
            let l = p.visit(child);
            first_leaf.get_or_insert(l);
        }
        let root_index = p.nodes.len();
        p.nodes.push(None);
        p.lmld.push(first_leaf.unwrap_or(root_index));

        // keyroots: the highest node for each distinct leftmost leaf
        let n = p.nodes.len() - 1;
        let mut seen = vec![false; n + 1];
        for i in (1..=n).rev() {
            let l = p.lmld[i];
            if !seen[l] {
                seen[l] = true;
                p.keyroots.push(i);
            }
        }
        p.keyroots.sort_unstable();
        p
    }

    fn visit(&mut self, node: &'a TableNode) -> usize {
        let mut first_leaf = None;
        for child in &node.children {
            let l = self.visit(child);
            first_leaf.get_or_insert(l);
        }
        let index = self.nodes.len();
        self.nodes.push(Some(node));
        self.lmld.push(first_leaf.unwrap_or(index));
        first_leaf.unwrap_or(index)
    }

    fn len(&self) -> usize {
        self.nodes.len() - 1
    }
}

struct Costs<'c, C: CostModel + ?Sized>(&'c C);

impl<C: CostModel + ?Sized> Costs<'_, C> {
    fn insert(&self, n: Option<&TableNode>) -> f64 {
        n.map_or(0.0, |n| self.0.insert(n))
    }
    fn delete(&self, n: Option<&TableNode>) -> f64 {
        n.map_or(0.0, |n| self.0.delete(n))
    }
    fn relabel(&self, a: Option<&TableNode>, b: Option<&TableNode>) -> f64 {
        match (a, b) {
            (Some(a), Some(b)) => self.0.relabel(a, b),
            (None, None) => 0.0,
            // a virtual root never pairs with a real node
            _ => f64::INFINITY,
        }
    }
}

/// Edit distance between two ordered forests. An empty slice is the empty
#[allow(clippy::needless_range_loop)]
/// tree.
pub fn forest_edit_distance<C: CostModel + ?Sized>(a: &[TableNode], b: &[TableNode], cost: &C) -> f64 {
    let pa = Postorder::new(a);
    let pb = Postorder::new(b);
    let costs = Costs(cost);
    let (n, m) = (pa.len(), pb.len());
    let mut treedist = vec![vec![0.0f64; m + 1]; n + 1];
    let mut fd = vec![vec![0.0f64; m + 2]; n + 2];

    for &i in &pa.keyroots {
        for &j in &pb.keyroots {
            let li = pa.lmld[i];
            let lj = pb.lmld[j];
            // fd row/col offsets: index x maps to x - li + 1, 0 is the empty forest
            fd[0][0] = 0.0;
            for x in li..=i {
                let xi = x - li + 1;
                fd[xi][0] = fd[xi - 1][0] + costs.delete(pa.nodes[x]);
            }
            for y in lj..=j {
                let yj = y - lj + 1;
                fd[0][yj] = fd[0][yj - 1] + costs.insert(pb.nodes[y]);
            }
            for x in li..=i {
                let xi = x - li + 1;
                for y in lj..=j {
                    let yj = y - lj + 1;
                    let del = fd[xi - 1][yj] + costs.delete(pa.nodes[x]);
                    let ins = fd[xi][yj - 1] + costs.insert(pb.nodes[y]);
                    if pa.lmld[x] == li && pb.lmld[y] == lj {
                        let rel = fd[xi - 1][yj - 1] + costs.relabel(pa.nodes[x], pb.nodes[y]);
                        let best = del.min(ins).min(rel);
                        fd[xi][yj] = best;
                        treedist[x][y] = best;
                    } else {
                        let px = pa.lmld[x] - li;
                        let py = pb.lmld[y] - lj;
                        let rel = fd[px][py] + treedist[x][y];
                        fd[xi][yj] = del.min(ins).min(rel);
                    }
                }
            }
        }
    }
    treedist[n][m]
}

/// Edit distance between two trees.
pub fn tree_edit_distance<C: CostModel + ?Sized>(a: &TableNode, b: &TableNode, cost: &C) -> f64 {
    forest_edit_distance(std::slice::from_ref(a), std::slice::from_ref(b), cost)
}
