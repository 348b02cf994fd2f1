//! Oracles and fixtures shared by the integration tests. The oracles are
//! written from the definitions, not from the library code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ocrchain::table::{CostModel, TableNode, TableTag};
use rand::Rng;

// ---------------------------------------------------------------- trees

/// Tag, span and presence only; text is ignored.
pub struct StructureCost;

impl CostModel for StructureCost {
    fn insert(&self, _: &TableNode) -> f64 {
        1.0
    }
    fn delete(&self, _: &TableNode) -> f64 {
        1.0
    }
    fn relabel(&self, a: &TableNode, b: &TableNode) -> f64 {
        if a.tag != b.tag || a.colspan != b.colspan || a.rowspan != b.rowspan {
            1.0
        } else {
            0.0
        }
    }
}


struct Flat<'a> {
    nodes: Vec<&'a TableNode>,
    /// Preorder index of the last descendant.
    end: Vec<usize>,
}

fn flatten<'a>(forest: &'a [TableNode]) -> Flat<'a> {
    fn walk<'a>(n: &'a TableNode, f: &mut Flat<'a>) {
        let i = f.nodes.len();
        f.nodes.push(n);
        f.end.push(i);
        for c in &n.children {
            walk(c, f);
        }
        f.end[i] = f.nodes.len() - 1;
    }
    let mut f = Flat { nodes: Vec::new(), end: Vec::new() };
    for n in forest {
        walk(n, &mut f);
    }
    f
}

fn is_ancestor(f: &Flat, a: usize, d: usize) -> bool {
    a < d && d <= f.end[a]
}

fn is_left_of(f: &Flat, a: usize, b: usize) -> bool {
    f.end[a] < b
}

/// Minimum-cost edit mapping by exhaustive search over all one-to-one
/// mappings that preserve ancestry and sibling order.
pub fn ted_oracle(a: &[TableNode], b: &[TableNode], cost: &dyn CostModel) -> f64 {
    let fa = flatten(a);
    let fb = flatten(b);
    let mut best = f64::INFINITY;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut used = vec![false; fb.nodes.len()];
    search(&fa, &fb, cost, 0, &mut pairs, &mut used, &mut best);
    best
}

fn search(
    fa: &Flat,
    fb: &Flat,
    cost: &dyn CostModel,
    i: usize,
    pairs: &mut Vec<(usize, usize)>,
    used: &mut Vec<bool>,
    best: &mut f64,
) {
    if i == fa.nodes.len() {
        let mut total = 0.0;
        let mut mapped_a = vec![false; fa.nodes.len()];
        for &(x, y) in pairs.iter() {
            mapped_a[x] = true;
            total += cost.relabel(fa.nodes[x], fb.nodes[y]);
        }
        for (x, m) in mapped_a.iter().enumerate() {
            if !m {
                total += cost.delete(fa.nodes[x]);
            }
        }
        for (y, u) in used.iter().enumerate() {
            if !u {
                total += cost.insert(fb.nodes[y]);
            }
        }
        if total < *best {
            *best = total;
        }
        return;
    }
    search(fa, fb, cost, i + 1, pairs, used, best);
    for j in 0..fb.nodes.len() {
        if used[j] {
            continue;
        }
        let consistent = pairs.iter().all(|&(x, y)| {
            is_ancestor(fa, x, i) == is_ancestor(fb, y, j)
                && is_ancestor(fa, i, x) == is_ancestor(fb, j, y)
                && is_left_of(fa, x, i) == is_left_of(fb, y, j)
                && is_left_of(fa, i, x) == is_left_of(fb, j, y)
        });
        if consistent {
            used[j] = true;
            pairs.push((i, j));
            search(fa, fb, cost, i + 1, pairs, used, best);
            pairs.pop();
            used[j] = false;
        }
    }
}

const TAGS: [TableTag; 4] = [TableTag::Table, TableTag::Tbody, TableTag::Tr, TableTag::Td];

/// Random labeled tree of exactly `n` nodes (n >= 1). Labels mix tags,
/// spans and short texts so every branch of the cost model is exercised.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> TableNode {
    let mut labels: Vec<TableNode> = (0..n)
        .map(|_| {
            let tag = TAGS[rng.gen_range(0..TAGS.len())];
            let mut node = TableNode::new(tag);
            if tag == TableTag::Td {
                node.colspan = rng.gen_range(1..=2);
                let len = rng.gen_range(0..=3);
                node.text = (0..len).map(|_| ['a', 'b', 'c'][rng.gen_range(0..3)]).collect();
            }
            node
        })
        .collect();
    // parent[i] < i, attached in order, gives a random ordered tree
    let parents: Vec<usize> = (1..n).map(|i| rng.gen_range(0..i)).collect();
    for i in (1..n).rev() {
        let child = std::mem::replace(&mut labels[i], TableNode::new(TableTag::Td));
        labels[parents[i - 1]].children.insert(0, child);
    }
    labels.swap_remove(0)
}

/// Full table of `rows` x `cols` cells.
pub fn grid_tree(cells: &[Vec<String>]) -> TableNode {
    let rows = cells
        .iter()
        .map(|r| TableNode::new(TableTag::Tr).with_children(r.iter().map(|t| TableNode::cell(t, 1, 1)).collect()))
        .collect();
    TableNode::new(TableTag::Table).with_children(vec![TableNode::new(TableTag::Tbody).with_children(rows)])
}

pub fn grid_html(cells: &[Vec<String>]) -> String {
    let mut s = String::from("<table><tbody>");
    for r in cells {
        s.push_str("<tr>");
        for c in r {
            s.push_str("<td>");
            s.push_str(c);
            s.push_str("</td>");
        }
        s.push_str("</tr>");
    }
    s.push_str("</tbody></table>");
    s
}

/// 18 x 10 grid: 2 + 18 * 11 = 200 nodes. Cell texts are two lowercase
/// letters; replaced cells use uppercase so their NED to the original is 1.
pub fn grid_200(replaced: usize) -> Vec<Vec<String>> {
    let mut k = 0;
    (0..18)
        .map(|r| {
            (0..10)
                .map(|c| {
                    let i = r * 10 + c;
                    let text = format!("{}{}", (b'a' + (i / 26 % 26) as u8) as char, (b'a' + (i % 26) as u8) as char);
                    k += 1;
                    if k <= replaced {
                        text.to_uppercase()
                    } else {
                        text
                    }
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------- strings

/// Edit distance straight from the recursive definition.
pub fn levenshtein_oracle(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let sub = usize::from(a[0] != b[0]);
    (levenshtein_oracle(&a[1..], &b[1..]) + sub)
        .min(levenshtein_oracle(&a[1..], b) + 1)
        .min(levenshtein_oracle(a, &b[1..]) + 1)
}

/// Same recursion, memoized on suffix lengths, for longer inputs.
pub fn levenshtein_oracle_memo(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], memo: &mut BTreeMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(&v) = memo.get(&(a.len(), b.len())) {
            return v;
        }
        let sub = usize::from(a[0] != b[0]);
        let v = (go(&a[1..], &b[1..], memo) + sub).min(go(&a[1..], b, memo) + 1).min(go(a, &b[1..], memo) + 1);
        memo.insert((a.len(), b.len()), v);
        v
    }
    go(a, b, &mut BTreeMap::new())
}

/// Longest common subsequence length by plain recursion (short inputs).
pub fn lcs_oracle<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    if a[0] == b[0] {
        return 1 + lcs_oracle(&a[1..], &b[1..]);
    }
    lcs_oracle(&a[1..], b).max(lcs_oracle(a, &b[1..]))
}

// ---------------------------------------------------------------- graphs

/// Connected components by flood fill, as sorted sets of node indices.
pub fn components_oracle(n: usize, edges: &[(usize, usize)]) -> BTreeSet<BTreeSet<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut out = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(x) = stack.pop() {
            comp.insert(x);
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        out.insert(comp);
    }
    out
}

const SYLLABLES: &[&str] = &[
    "华", "鑫", "瑞", "泰", "恒", "盛", "博", "德", "嘉", "宏", "锦", "翔", "森", "源", "晟", "茂", "宇", "航", "达",
    "诚", "信", "和", "安", "康", "裕", "丰", "隆", "昌", "兴", "旺", "富", "贵", "祥", "福", "乐", "美", "新", "天",
    "金", "银", "海", "山", "江", "河", "湖", "星", "辰", "光", "明", "正", "远", "东", "西", "南", "北", "中",
];

const ORG_SUFFIXES: &[&str] = &["有限公司", "股份有限公司", "合作社", "委员会", "专业合作社", "财务专用章"];

/// Seal-title corpus with planted near-duplicate clusters: 40 distinct
/// organization heads, each spelled in 5 variants (suffix swaps and one
/// character edits). Ids are `t000`..`t199`.
pub fn split_corpus(rng: &mut impl Rng) -> BTreeMap<String, String> {
    let mut heads = BTreeSet::new();
    while heads.len() < 40 {
        let len = rng.gen_range(4..=6);
        let h: String = (0..len).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect();
        heads.insert(h);
    }
    let mut titles = Vec::new();
    for head in &heads {
        let suffix = ORG_SUFFIXES[rng.gen_range(0..ORG_SUFFIXES.len())];
        for v in 0..5 {
            let mut chars: Vec<char> = format!("{head}{suffix}").chars().collect();
            match v {
                0 => {}
                1 => {
                    let i = rng.gen_range(0..chars.len());
                    chars[i] = SYLLABLES[rng.gen_range(0..SYLLABLES.len())].chars().next().unwrap();
                }
                2 => {
                    let i = rng.gen_range(0..chars.len());
                    chars.remove(i);
                }
                3 => chars.push('章'),
                _ => {
                    let i = rng.gen_range(0..=chars.len());
                    chars.insert(i, '一');
                }
            }
            titles.push(chars.into_iter().collect::<String>());
        }
    }
    titles.into_iter().enumerate().map(|(i, t)| (format!("t{i:03}"), t)).collect()
}

// ---------------------------------------------------------------- pipeline

pub struct PipelineFixture {
    pub samples: PathBuf,
    pub canned_dir: PathBuf,
    pub tool_a: PathBuf,
    pub tool_b: PathBuf,
    pub expected_retained: Vec<&'static str>,
}

struct Case {
    id: &'static str,
    task: &'static str,
    gt: String,
    think: String,
    tool_a: String,
    tool_b: String,
    /// Turn 2 reply.
    reply: String,
}

fn reply(rethink: &str, answer: &str) -> String {
    format!("<rethink>{rethink}</rethink>\n<answer>{answer}</answer>")
}

fn table3(cells: [[&str; 3]; 3]) -> String {
    let v: Vec<Vec<String>> = cells.iter().map(|r| r.iter().map(|c| c.to_string()).collect()).collect();
    grid_html(&v)
}

/// Ten samples whose gate outcomes can be checked by hand:
///
/// | id  | outcome | why |
/// |-----|---------|-----|
/// | s01 | keep    | answer equals gt |
/// | s02 | keep    | answer equals gt after trimming |
/// | s03 | reject  | answer misses a character |
/// | t01 | keep    | answer equals gt, turn 1 had a wrong cell |
/// | t02 | reject  | turn 1 already equal to gt, answer not better |
/// | t03 | keep    | answer equals gt, turn 1 recognized nothing |
/// | f01 | keep    | answer equals gt, turn 1 off by a token |
/// | f02 | keep    | answer equals gt, turn 1 fenced and wrong |
/// | f03 | reject  | turn 2 has no `<answer>` |
/// | f04 | keep    | answer equals gt, turn 1 empty |
pub fn write_pipeline_fixture(dir: &Path) -> PipelineFixture {
    let gt_t = table3([["项目", "金额", "备注"], ["收入", "100", "无"], ["支出", "80", "无"]]);
    let off_t = table3([["项目", "金额", "备注"], ["收入", "10", "无"], ["支出", "80", "无"]]);
    let cases = vec![
        Case {
            id: "s01",
            task: "seal",
            gt: "北川羌族自治县永安镇人民政府".into(),
            think: "<recognition>北川羌族自治县永安镇人民政</recognition>".into(),
            tool_a: "北川羌族自治县永安镇人民政府".into(),
            tool_b: "北川羌族自治县永安镇人民政付".into(),
            reply: reply("工具一补全了最后一个字", "北川羌族自治县永安镇人民政府"),
        },
        Case {
            id: "s02",
            task: "seal",
            gt: "成都市武侯区晋阳街道办事处".into(),
            think: "<recognition>成都市武侯区晋阳街道办事处</recognition>".into(),
            tool_a: "成都市武侯区晋阳街道办事处".into(),
            tool_b: "成都市武候区晋阳街道办事处".into(),
            reply: reply("两者一致", " 成都市武侯区晋阳街道办事处 "),
        },
        Case {
            id: "s03",
            task: "seal",
            gt: "绵阳市涪城区农业农村局".into(),
            think: "<recognition>绵阳市涪城区农业农村</recognition>".into(),
            tool_a: "绵阳市涪城区农业农村局".into(),
            tool_b: "绵阳市涪城区农业农村局".into(),
            reply: reply("保持初步结果", "绵阳市涪城区农业农村"),
        },
        Case {
            id: "t01",
            task: "table",
            gt: gt_t.clone(),
            think: format!("<recognition>{off_t}</recognition>"),
            tool_a: gt_t.clone(),
            tool_b: off_t.clone(),
            reply: reply("第二行金额应为100", &gt_t),
        },
        Case {
            id: "t02",
            task: "table",
            gt: gt_t.clone(),
            think: format!("<recognition>{gt_t}</recognition>"),
            tool_a: gt_t.clone(),
            tool_b: gt_t.clone(),
            reply: reply("完全一致", &gt_t),
        },
        Case {
            id: "t03",
            task: "table",
            gt: gt_t.clone(),
            think: "<recognition></recognition>".into(),
            tool_a: gt_t.clone(),
            tool_b: off_t,
            reply: reply("采用工具一", &gt_t),
        },
        Case {
            id: "f01",
            task: "formula",
            gt: "\\frac{a+b}{c}=d".into(),
            think: "<recognition>\\frac{a+b}{c}=b</recognition>".into(),
            tool_a: "\\frac{a+b}{c}=d".into(),
            tool_b: "\\frac{a+b}{c} = d".into(),
            reply: reply("右侧应为d", "\\frac{a+b}{c}=d"),
        },
        Case {
            id: "f02",
            task: "formula",
            gt: "E=mc^{2}".into(),
            think: "<recognition>```latex\nE=mc\n```</recognition>".into(),
            tool_a: "E=mc^{2}".into(),
            tool_b: "E=mc^2".into(),
            reply: reply("漏掉了平方", "E=mc^{2}"),
        },
        Case {
            id: "f03",
            task: "formula",
            gt: "x_{1}+x_{2}".into(),
            think: "<recognition>x_1+x_2</recognition>".into(),
            tool_a: "x_{1}+x_{2}".into(),
            tool_b: "x_{1}+x_{2}".into(),
            reply: "<rethink>看不清</rethink>".into(),
        },
        Case {
            id: "f04",
            task: "formula",
            gt: "\\sqrt{2}".into(),
            think: "<recognition></recognition>".into(),
            tool_a: "\\sqrt{2}".into(),
            tool_b: "\\sqrt2".into(),
            reply: reply("采用工具一", "\\sqrt{2}"),
        },
    ];

    let canned_dir = dir.join("canned");
    std::fs::create_dir_all(&canned_dir).unwrap();
    let mut lines = String::new();
    let mut tool_a = BTreeMap::new();
    let mut tool_b = BTreeMap::new();
    for c in &cases {
        let image = format!("images/{}.png", c.id);
        let rec = serde_json::json!({
            "id": c.id, "task": c.task, "image_ref": image, "question": "识别图片内容", "answer_gt": c.gt,
        });
        lines.push_str(&rec.to_string());
        lines.push('\n');
        std::fs::write(canned_dir.join(format!("{}.turn1.txt", c.id)), &c.think).unwrap();
        std::fs::write(canned_dir.join(format!("{}.turn2.txt", c.id)), &c.reply).unwrap();
        tool_a.insert(image.clone(), c.tool_a.clone());
        tool_b.insert(image, c.tool_b.clone());
    }
    let samples = dir.join("samples.jsonl");
    std::fs::write(&samples, lines).unwrap();
    let tool_a_path = dir.join("tool_a.json");
    let tool_b_path = dir.join("tool_b.json");
    std::fs::write(&tool_a_path, serde_json::to_string_pretty(&tool_a).unwrap()).unwrap();
    std::fs::write(&tool_b_path, serde_json::to_string_pretty(&tool_b).unwrap()).unwrap();
    PipelineFixture {
        samples,
        canned_dir,
        tool_a: tool_a_path,
        tool_b: tool_b_path,
        expected_retained: vec!["s01", "s02", "t01", "t03", "f01", "f02", "f04"],
    }
}

/// TOML config for the fixture with outputs under `out`.
pub fn pipeline_config_toml(f: &PipelineFixture, out: &Path) -> String {
    let p = |x: &Path| x.display().to_string().replace('\\', "/");
    format!(
        r#"[construct]
input = "{input}"
dataset = "{dataset}"
audit = "{audit}"
report = "{report}"
concurrency = 3

[construct.retry]
budget = 0

[construct.client]
kind = "canned"
canned_dir = "{canned}"

[[construct.tools]]
name = "ocr_a"
fixture = "{a}"

[[construct.tools]]
name = "ocr_b"
fixture = "{b}"
"#,
        input = p(&f.samples),
        dataset = p(&out.join("dataset.jsonl")),
        audit = p(&out.join("audit.jsonl")),
        report = p(&out.join("report.json")),
        canned = p(&f.canned_dir),
        a = p(&f.tool_a),
        b = p(&f.tool_b),
    )
}

// ---------------------------------------------------------------- server

#[cfg(feature = "harness")]
pub struct TestServer {
    pub addr: std::net::SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

#[cfg(feature = "harness")]
impl TestServer {
    pub fn start(state: ocrchain::harness::ServeState) -> TestServer {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let handle = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                ocrchain::harness::serve_on(listener, state, async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        TestServer { addr, stop: Some(stop), handle: Some(handle) }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

#[cfg(feature = "harness")]
impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
