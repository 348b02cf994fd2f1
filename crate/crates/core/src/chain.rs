//! Tagged reasoning chains: `<think>`, one or more `<tool>`, `<rethink>`, `<answer>`.
//!
//! Parsing is strict. Only whitespace may appear between top-level sections,
//! tag names are exact ASCII (case-sensitive, no attributes) and a tag token
//! inside a section body invalidates the chain.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

/// The four section kinds, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Think,
    Tool,
    Rethink,
    Answer,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::Think, Tag::Tool, Tag::Rethink, Tag::Answer];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Think => "think",
            Tag::Tool => "tool",
            Tag::Rethink => "rethink",
            Tag::Answer => "answer",
        }
    }

    pub fn open(self) -> &'static str {
        match self {
            Tag::Think => "<think>",
            Tag::Tool => "<tool>",
            Tag::Rethink => "<rethink>",
            Tag::Answer => "<answer>",
        }
    }

    pub fn close(self) -> &'static str {
        match self {
            Tag::Think => "</think>",
            Tag::Tool => "</tool>",
            Tag::Rethink => "</rethink>",
            Tag::Answer => "</answer>",
        }
    }

    fn rank(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A well-formed reasoning chain. Bodies are stored verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub think: String,
    pub tool_blocks: Vec<String>,
    pub rethink: String,
    pub answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "tag")]
pub enum ViolationKind {
    MissingTag(Tag),
    DuplicateTag(Tag),
    OrderViolation(Tag),
    StrayContent,
    UnclosedTag(Tag),
}

/// One format problem. `span` is a range of character (not byte) offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(flatten)]
    pub kind: ViolationKind,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatVerdict {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl FormatVerdict {
    fn from_violations(violations: Vec<Violation>) -> Self {
        FormatVerdict { valid: violations.is_empty(), violations }
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TagToken {
    tag: Tag,
    closing: bool,
    /// Byte range in the source.
    start: usize,
    end: usize,
}

/// Finds every exact tag token in `raw`, left to right.
fn scan_tags(raw: &str) -> Vec<TagToken> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let rest = &raw[i..];
            let hit = Tag::ALL.iter().find_map(|&tag| {
                if rest.starts_with(tag.open()) {
                    Some((tag, false, tag.open().len()))
                } else if rest.starts_with(tag.close()) {
                    Some((tag, true, tag.close().len()))
                } else {
                    None
                }
            });
            if let Some((tag, closing, len)) = hit {
                out.push(TagToken { tag, closing, start: i, end: i + len });
                i += len;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Maps byte offsets to character offsets for violation spans.
struct CharIndex<'a> {
    raw: &'a str,
}

impl CharIndex<'_> {
    fn at(&self, byte: usize) -> usize {
        self.raw[..byte].chars().count()
    }

    fn span(&self, bytes: Range<usize>) -> Range<usize> {
        let start = self.at(bytes.start);
        start..start + self.raw[bytes].chars().count()
    }
}

struct Section<'a> {
    tag: Tag,
    body: &'a str,
    bytes: Range<usize>,
}

fn check_gap(raw: &str, gap: Range<usize>, idx: &CharIndex<'_>, out: &mut Vec<Violation>) {
    let text = &raw[gap.clone()];
    let trimmed_start = text.len() - text.trim_start().len();
    let trimmed = text.trim();
    if !trimmed.is_empty() {
        let s = gap.start + trimmed_start;
        out.push(Violation {
            kind: ViolationKind::StrayContent,
            span: idx.span(s..s + trimmed.len()),
        });
    }
}

fn split_sections(raw: &str) -> (Vec<Section<'_>>, Vec<Violation>) {
    let idx = CharIndex { raw };
    let mut violations = Vec::new();
    let mut sections = Vec::new();
    let mut cursor = 0;
    // (open token, any nested tag token seen)
    let mut open: Option<TagToken> = None;

    for tok in scan_tags(raw) {
        match open {
            None => {
                check_gap(raw, cursor..tok.start, &idx, &mut violations);
                if tok.closing {
                    // close without a matching open is content outside any section
                    violations.push(Violation {
                        kind: ViolationKind::StrayContent,
                        span: idx.span(tok.start..tok.end),
                    });
                    cursor = tok.end;
                } else {
                    open = Some(tok);
                }
            }
            Some(o) => {
                if tok.closing && tok.tag == o.tag {
                    sections.push(Section {
                        tag: o.tag,
                        body: &raw[o.end..tok.start],
                        bytes: o.start..tok.end,
                    });
                    open = None;
                    cursor = tok.end;
                } else {
                    // nested tag token inside a body
                    violations.push(Violation {
                        kind: ViolationKind::StrayContent,
                        span: idx.span(tok.start..tok.end),
                    });
                }
            }
        }
    }

    match open {
        Some(o) => violations.push(Violation {
            kind: ViolationKind::UnclosedTag(o.tag),
            span: idx.span(o.start..raw.len()),
        }),
        None => check_gap(raw, cursor..raw.len(), &idx, &mut violations),
    }

    // structural checks over the top-level sections
    let mut max_rank = 0u8;
    for tag in Tag::ALL {
        let hits: Vec<&Section<'_>> = sections.iter().filter(|s| s.tag == tag).collect();
        if hits.is_empty() {
            let end = idx.at(raw.len());
            violations.push(Violation { kind: ViolationKind::MissingTag(tag), span: end..end });
        } else if tag != Tag::Tool {
            for extra in &hits[1..] {
                violations.push(Violation {
                    kind: ViolationKind::DuplicateTag(tag),
                    span: idx.span(extra.bytes.clone()),
                });
            }
        }
    }
    for s in &sections {
        if s.tag.rank() < max_rank {
            violations.push(Violation {
                kind: ViolationKind::OrderViolation(s.tag),
                span: idx.span(s.bytes.clone()),
            });
        }
        max_rank = max_rank.max(s.tag.rank());
    }
    violations.sort_by_key(|v| (v.span.start, v.span.end));
    (sections, violations)
}

/// Parses model output into a chain, or returns every violation found.
pub fn parse_chain(raw: &str) -> Result<ReasoningChain, FormatVerdict> {
    let (sections, violations) = split_sections(raw);
    if !violations.is_empty() {
        return Err(FormatVerdict::from_violations(violations));
    }
    let body = |tag: Tag| {
        sections
            .iter()
            .find(|s| s.tag == tag)
            .map(|s| s.body.to_string())
            .unwrap_or_default()
    };
    Ok(ReasoningChain {
        think: body(Tag::Think),
        tool_blocks: sections
            .iter()
            .filter(|s| s.tag == Tag::Tool)
            .map(|s| s.body.to_string())
            .collect(),
        rethink: body(Tag::Rethink),
        answer: body(Tag::Answer),
    })
}

/// Validates without building the chain.
pub fn validate(raw: &str) -> FormatVerdict {
    match parse_chain(raw) {
        Ok(_) => FormatVerdict { valid: true, violations: Vec::new() },
        Err(v) => v,
    }
}

/// Canonical serialization: one newline between sections, bodies verbatim.
pub fn render_chain(chain: &ReasoningChain) -> String {
    let mut parts = Vec::with_capacity(chain.tool_blocks.len() + 3);
    parts.push(wrap(Tag::Think, &chain.think));
    parts.extend(chain.tool_blocks.iter().map(|b| wrap(Tag::Tool, b)));
    parts.push(wrap(Tag::Rethink, &chain.rethink));
    parts.push(wrap(Tag::Answer, &chain.answer));
    parts.join("\n")
}

fn wrap(tag: Tag, body: &str) -> String {
    format!("{}{}{}", tag.open(), body, tag.close())
}

/// 1.0 when `raw` is a well-formed chain, else 0.0.
pub fn format_reward(raw: &str) -> f64 {
    if parse_chain(raw).is_ok() {
        1.0
    } else {
        0.0
    }
}

/// Extracts the `<answer>` body when exactly one answer pair is present and
/// closed, regardless of the rest of the chain.
pub fn extract_answer(raw: &str) -> Option<&str> {
    let answers: Vec<TagToken> = scan_tags(raw).into_iter().filter(|t| t.tag == Tag::Answer).collect();
    match answers.as_slice() {
        [open, close] if !open.closing && close.closing => Some(&raw[open.end..close.start]),
        _ => None,
    }
}

/// Extracts the body of the first `tag` pair, if any. Used on free-form
/// model replies that are not full chains.
pub fn extract_section(raw: &str, tag: Tag) -> Option<&str> {
    let start = raw.find(tag.open())? + tag.open().len();
    let len = raw[start..].find(tag.close())?;
    Some(&raw[start..start + len])
}

/// True when `text` contains any exact tag token.
pub fn contains_tag_token(text: &str) -> bool {
    !scan_tags(text).is_empty()
}
