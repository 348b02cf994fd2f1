//! Lenient HTML table reader.
//!
//! Model output is often sloppy: unclosed cells, missing `<tbody>`, stray
//! markup inside cells. Only the first `<table>` is read. Everything that is
//! not table structure contributes at most whitespace-collapsed cell text.

use super::{TableNode, TableTag};
use crate::error::TableError;

#[derive(Debug)]
enum Token<'a> {
    Open { name: String, attrs: &'a str },
    Close { name: String },
    Text(&'a str),
}

fn tokenize(html: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut rest = html;
    while !rest.is_empty() {
        let Some(lt) = rest.find('<') else {
            out.push(Token::Text(rest));
            break;
        };
        if lt > 0 {
            out.push(Token::Text(&rest[..lt]));
        }
        rest = &rest[lt..];
        if let Some(body) = rest.strip_prefix("<!--") {
            rest = match body.find("-->") {
                Some(end) => &body[end + 3..],
                None => "",
            };
            continue;
        }
        let after = &rest[1..];
        let closing = after.starts_with('/');
        let name_src = if closing { &after[1..] } else { after };
        let name_len = name_src
            .find(|c: char| !c.is_ascii_alphanumeric())
            .unwrap_or(name_src.len());
        if name_len == 0 || !name_src.starts_with(|c: char| c.is_ascii_alphabetic()) {
            // a bare '<' is text
            out.push(Token::Text("<"));
            rest = after;
            continue;
        }
        let name = name_src[..name_len].to_ascii_lowercase();
        let tail = &name_src[name_len..];
        let gt = find_tag_end(tail);
        let attrs = &tail[..gt.min(tail.len())];
        rest = if gt < tail.len() { &tail[gt + 1..] } else { "" };
        if closing {
            out.push(Token::Close { name });
        } else {
            out.push(Token::Open { name, attrs });
        }
    }
    out
}

/// Byte offset of the `>` ending a tag, honoring quoted attribute values.
fn find_tag_end(s: &str) -> usize {
    let mut quote: Option<char> = None;
    for (i, c) in s.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '"' || c == '\'' => quote = Some(c),
            None if c == '>' => return i,
            None => {}
        }
    }
    s.len()
}

/// Reads `name` from an attribute string. Values may be quoted or bare.
fn attr_value<'a>(attrs: &'a str, name: &str) -> Option<&'a str> {
    let mut rest = attrs;
    loop {
        rest = rest.trim_start_matches(|c: char| c.is_whitespace() || c == '/');
        if rest.is_empty() {
            return None;
        }
        let key_len = rest
            .find(|c: char| c.is_whitespace() || c == '=' || c == '/')
            .unwrap_or(rest.len());
        let key = &rest[..key_len];
        rest = rest[key_len..].trim_start();
        let mut value = None;
        if let Some(v) = rest.strip_prefix('=') {
            let v = v.trim_start();
            let (val, remain) = match v.chars().next() {
                Some(q @ ('"' | '\'')) => {
                    let inner = &v[1..];
                    match inner.find(q) {
                        Some(end) => (&inner[..end], &inner[end + 1..]),
                        None => (inner, ""),
                    }
                }
                _ => {
                    let end = v.find(char::is_whitespace).unwrap_or(v.len());
                    (&v[..end], &v[end..])
                }
            };
            value = Some(val);
            rest = remain;
        }
        if key.eq_ignore_ascii_case(name) {
            return Some(value.unwrap_or(""));
        }
    }
}

/// Span attribute; anything but a positive integer falls back to 1.
fn span_attr(attrs: &str, name: &str) -> u32 {
    attr_value(attrs, name)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn collapse_text(raw: &str) -> String {
    let decoded = html_escape::decode_html_entities(raw);
    decoded.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Default)]
struct Builder {
    sections: Vec<TableNode>,
    section_open: bool,
    row_open: bool,
    cell: Option<(TableNode, String)>,
}

impl Builder {
    fn close_cell(&mut self) {
        if let Some((mut node, text)) = self.cell.take() {
            node.text = collapse_text(&text);
            self.current_row().children.push(node);
        }
    }

    fn close_row(&mut self) {
        self.close_cell();
        self.row_open = false;
    }

    fn close_section(&mut self) {
        self.close_row();
        self.section_open = false;
    }

    fn open_section(&mut self, tag: TableTag) {
        self.close_section();
        self.sections.push(TableNode::new(tag));
        self.section_open = true;
    }

    fn current_section(&mut self) -> &mut TableNode {
        if !self.section_open {
            self.open_section(TableTag::Tbody);
        }
        self.sections.last_mut().expect("section is open")
    }

    fn open_row(&mut self) {
        self.close_row();
        self.current_section().children.push(TableNode::new(TableTag::Tr));
        self.row_open = true;
    }

    fn current_row(&mut self) -> &mut TableNode {
        if !self.row_open {
            self.open_row();
        }
        self.current_section().children.last_mut().expect("row is open")
    }

    fn open_cell(&mut self, attrs: &str) {
        self.close_cell();
        // make sure a row exists before the cell is pending
        self.current_row();
        let mut node = TableNode::new(TableTag::Td);
        node.colspan = span_attr(attrs, "colspan");
        node.rowspan = span_attr(attrs, "rowspan");
        self.cell = Some((node, String::new()));
    }

    fn text(&mut self, s: &str) {
        if let Some((_, buf)) = self.cell.as_mut() {
            buf.push_str(s);
        }
    }

    fn finish(mut self) -> TableNode {
        self.close_section();
        let mut table = TableNode::new(TableTag::Table);
        table.children = self.sections;
        table
    }
}

/// Parses the first `<table>` in `html` into a normalized tree.
pub fn parse_html_table(html: &str) -> Result<TableNode, TableError> {
    let tokens = tokenize(html);
    let start = tokens
        .iter()
        .position(|t| matches!(t, Token::Open { name, .. } if name == "table"))
        .ok_or(TableError::NoTableFound)?;

    let mut b = Builder::default();
    // depth of nested tables inside a cell; their markup is flattened to text
    let mut nested = 0usize;
    for tok in &tokens[start + 1..] {
        match tok {
            Token::Text(s) => b.text(s),
            Token::Open { name, attrs } => {
                if nested > 0 {
                    if name == "table" {
                        nested += 1;
                    }
                    b.text(" ");
                    continue;
                }
                match name.as_str() {
                    "table" if b.cell.is_some() => {
                        nested += 1;
                        b.text(" ");
                    }
                    "table" => {}
                    "thead" => b.open_section(TableTag::Thead),
                    "tbody" | "tfoot" => b.open_section(TableTag::Tbody),
                    "tr" => b.open_row(),
                    "td" | "th" => b.open_cell(attrs),
                    "br" | "p" | "div" | "li" => b.text(" "),
                    _ => {}
                }
            }
            Token::Close { name } => {
                if nested > 0 {
                    if name == "table" {
                        nested -= 1;
                    }
                    b.text(" ");
                    continue;
                }
                match name.as_str() {
                    "table" => break,
                    "thead" | "tbody" | "tfoot" => b.close_section(),
                    "tr" => b.close_row(),
                    "td" | "th" => b.close_cell(),
                    "p" | "div" | "li" => b.text(" "),
                    _ => {}
                }
            }
        }
    }
    Ok(b.finish())
}
