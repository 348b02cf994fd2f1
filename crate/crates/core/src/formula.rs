//! LaTeX tokenization, rewrite-table normalization and the token-level CDM
//! proxy.
//!
//! Rendering-based CDM needs a TeX stack. The proxy here scores the longest
//! common subsequence of normalized token sequences instead, as an F-score:
//! `2 * matched / (len_pred + len_gt)`.

use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::FormulaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Command,
    Symbol,
    Digit,
    Letter,
    GroupOpen,
    GroupClose,
    Relation,
    Operator,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatexToken {
    pub kind: TokenKind,
    pub lexeme: String,
}

impl LatexToken {
    fn new(kind: TokenKind, lexeme: impl Into<String>) -> Self {
        LatexToken { kind, lexeme: lexeme.into() }
    }

    /// `\name` with an alphabetic name; such a token swallows following letters
    /// when sources are concatenated.
    fn is_word_command(&self) -> bool {
        self.kind == TokenKind::Command && self.lexeme.len() > 1 && self.lexeme[1..].chars().all(|c| c.is_ascii_alphabetic())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatexTokenSeq {
    pub tokens: Vec<LatexToken>,
}

impl LatexTokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Joins lexemes back into source. A space is inserted only where a word
    /// command is followed by a letter, so [`lex`] reproduces the sequence.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0
                && self.tokens[i - 1].is_word_command()
                && t.lexeme.starts_with(|c: char| c.is_ascii_alphabetic())
            {
                out.push(' ');
            }
            out.push_str(&t.lexeme);
        }
        out
    }
}

impl fmt::Display for LatexTokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_source())
    }
}

/// Removes one layer of `$$ $$`, `$ $`, `\[ \]` or `\( \)` around the source.
pub fn strip_math_delimiters(src: &str) -> &str {
    let s = src.trim();
    for (open, close) in [("$$", "$$"), ("\\[", "\\]"), ("\\(", "\\)"), ("$", "$")] {
        if s.len() >= open.len() + close.len() && s.starts_with(open) && s.ends_with(close) {
            return &s[open.len()..s.len() - close.len()];
        }
    }
    s
}

fn classify(c: char) -> TokenKind {
    match c {
        '{' => TokenKind::GroupOpen,
        '}' => TokenKind::GroupClose,
        '=' | '<' | '>' => TokenKind::Relation,
        '+' | '-' | '*' | '/' | '^' | '_' => TokenKind::Operator,
        c if c.is_ascii_digit() => TokenKind::Digit,
        c if c.is_alphabetic() => TokenKind::Letter,
        _ => TokenKind::Symbol,
    }
}

/// Lexes LaTeX math without touching delimiters. Total: never fails.
pub fn lex(src: &str) -> LatexTokenSeq {
    let mut tokens = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c.is_whitespace() {
            continue;
        }
        if c != '\\' {
            tokens.push(LatexToken::new(classify(c), c.to_string()));
            continue;
        }
        match chars.peek().copied() {
            None => tokens.push(LatexToken::new(TokenKind::Symbol, "\\")),
            Some((_, n)) if n.is_ascii_alphabetic() => {
                let mut end = i + 1;
                while let Some(&(j, n)) = chars.peek() {
                    if !n.is_ascii_alphabetic() {
                        break;
                    }
                    end = j + n.len_utf8();
                    chars.next();
                }
                tokens.push(LatexToken::new(TokenKind::Command, &src[i..end]));
            }
            Some((j, n)) => {
                chars.next();
                tokens.push(LatexToken::new(TokenKind::Command, &src[i..j + n.len_utf8()]));
            }
        }
    }
    LatexTokenSeq { tokens }
}

/// Strips math delimiters, then lexes.
pub fn tokenize_latex(src: &str) -> LatexTokenSeq {
    lex(strip_math_delimiters(src))
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Rule {
    pattern: Vec<LatexToken>,
    replacement: Vec<LatexToken>,
}

/// Versioned token rewrite rules, loaded from a tab-separated file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteTable {
    version: String,
    rules: Vec<Rule>,
}

const DEFAULT_TABLE: &str = include_str!("../data/latex_rewrite.tsv");
const MAX_PASSES: usize = 64;

impl RewriteTable {
    pub fn parse(text: &str) -> Result<Self, FormulaError> {
        let mut version = String::from("unversioned");
        let mut rules = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = v.trim().to_string();
                }
                continue;
            }
            let Some((pattern, replacement)) = line.split_once('\t') else {
                return Err(FormulaError::RuleSyntax { line: n + 1, message: "missing TAB separator".into() });
            };
            let pattern = lex(pattern).tokens;
            if pattern.is_empty() {
                return Err(FormulaError::RuleSyntax { line: n + 1, message: "empty pattern".into() });
            }
            rules.push(Rule { pattern, replacement: lex(replacement).tokens });
        }
        Ok(RewriteTable { version, rules })
    }

    pub fn from_path(path: &Path) -> Result<Self, FormulaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| FormulaError::RuleIo { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// The table shipped with the crate.
    pub fn builtin() -> Arc<RewriteTable> {
        static TABLE: OnceLock<Arc<RewriteTable>> = OnceLock::new();
        TABLE
            .get_or_init(|| Arc::new(RewriteTable::parse(DEFAULT_TABLE).expect("builtin rewrite table parses")))
            .clone()
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    fn rewrite_pass(&self, tokens: &[LatexToken]) -> Option<Vec<LatexToken>> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut changed = false;
        let mut i = 0;
        'outer: while i < tokens.len() {
            for rule in &self.rules {
                if tokens[i..].starts_with(&rule.pattern) {
                    out.extend(rule.replacement.iter().cloned());
                    i += rule.pattern.len();
                    changed = true;
                    continue 'outer;
                }
            }
            out.push(tokens[i].clone());
            i += 1;
        }
        changed.then_some(out)
    }

    /// Applies the rewrite rules and single-token brace removal until nothing
    /// changes.
    pub fn normalize(&self, seq: &LatexTokenSeq) -> LatexTokenSeq {
        let mut tokens = seq.tokens.clone();
        for _ in 0..MAX_PASSES {
            let mut changed = false;
            if let Some(next) = self.rewrite_pass(&tokens) {
                tokens = next;
                changed = true;
            }
            if let Some(next) = unwrap_single_groups(&tokens) {
                tokens = next;
                changed = true;
            }
            if !changed {
                break;
            }
        }
        LatexTokenSeq { tokens }
    }
}

/// `{ t }` → `t` for any single non-brace token.
fn unwrap_single_groups(tokens: &[LatexToken]) -> Option<Vec<LatexToken>> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut changed = false;
    let mut i = 0;
    while i < tokens.len() {
        if i + 2 < tokens.len()
            && tokens[i].kind == TokenKind::GroupOpen
            && !matches!(tokens[i + 1].kind, TokenKind::GroupOpen | TokenKind::GroupClose)
            && tokens[i + 2].kind == TokenKind::GroupClose
        {
            out.push(tokens[i + 1].clone());
            i += 3;
            changed = true;
        } else {
            out.push(tokens[i].clone());
            i += 1;
        }
    }
    changed.then_some(out)
}

/// Normalizes with the builtin rewrite table.
pub fn normalize_latex(seq: &LatexTokenSeq) -> LatexTokenSeq {
    RewriteTable::builtin().normalize(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdmScore {
    pub matched: usize,
    pub total_pred: usize,
    pub total_gt: usize,
    pub value: f64,
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Scores two already-normalized sequences.
pub fn cdm_from_tokens(pred: &LatexTokenSeq, gt: &LatexTokenSeq) -> CdmScore {
    let matched = lcs_len(&pred.tokens, &gt.tokens);
    let total = pred.len() + gt.len();
    let value = if total == 0 { 1.0 } else { (2 * matched) as f64 / total as f64 };
    CdmScore { matched, total_pred: pred.len(), total_gt: gt.len(), value }
}

/// CDM proxy with an explicit rewrite table.
pub fn cdm_proxy_with(table: &RewriteTable, pred: &str, gt: &str) -> CdmScore {
    let p = table.normalize(&tokenize_latex(pred));
    let g = table.normalize(&tokenize_latex(gt));
    cdm_from_tokens(&p, &g)
}

/// CDM proxy with the builtin rewrite table.
pub fn cdm_proxy(pred: &str, gt: &str) -> CdmScore {
    cdm_proxy_with(&RewriteTable::builtin(), pred, gt)
}

/// Fraction of scores equal to 1.0.
pub fn exprate(scores: &[CdmScore]) -> Result<f64, FormulaError> {
    if scores.is_empty() {
        return Err(FormulaError::EmptyBatch);
    }
    let exact = scores.iter().filter(|s| s.value == 1.0).count();
    Ok(exact as f64 / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use TokenKind::*;

    fn t(kind: TokenKind, s: &str) -> LatexToken {
        LatexToken::new(kind, s)
    }

    #[test]
    fn lex_superscript() {
        assert_eq!(
            tokenize_latex("x^{2}").tokens,
            vec![t(Letter, "x"), t(Operator, "^"), t(GroupOpen, "{"), t(Digit, "2"), t(GroupClose, "}")]
        );
    }

    #[test]
    fn lex_frac() {
        assert_eq!(
            tokenize_latex("\\frac{a}{b}").tokens,
            vec![
                t(Command, "\\frac"),
                t(GroupOpen, "{"),
                t(Letter, "a"),
                t(GroupClose, "}"),
                t(GroupOpen, "{"),
                t(Letter, "b"),
                t(GroupClose, "}"),
            ]
        );
    }

    #[test]
    fn lex_escapes_and_delimiters() {
        assert_eq!(tokenize_latex("$\\{ x \\}$").tokens, vec![t(Command, "\\{"), t(Letter, "x"), t(Command, "\\}")]);
        assert_eq!(tokenize_latex("\\[a=b\\]").tokens, vec![t(Letter, "a"), t(Relation, "="), t(Letter, "b")]);
        assert_eq!(tokenize_latex("a\\").tokens, vec![t(Letter, "a"), t(Symbol, "\\")]);
        assert_eq!(tokenize_latex("\\\\").tokens, vec![t(Command, "\\\\")]);
    }

    #[test]
    fn to_source_keeps_command_boundaries() {
        let seq = lex("\\alpha b");
        assert_eq!(seq.to_source(), "\\alpha b");
        assert_eq!(lex(&seq.to_source()), seq);
        assert_eq!(lex("\\alpha_1").to_source(), "\\alpha_1");
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_latex(&tokenize_latex("\\left( x \\right)")), tokenize_latex("(x)"));
        assert_eq!(normalize_latex(&tokenize_latex("x^{2}")), tokenize_latex("x^2"));
        assert_eq!(normalize_latex(&tokenize_latex("\\dfrac{a}{b}")), normalize_latex(&tokenize_latex("\\frac ab")));
        assert_eq!(normalize_latex(&tokenize_latex("a\\,b\\;c\\!d")), tokenize_latex("abcd"));
        assert_eq!(normalize_latex(&tokenize_latex("\\mathrm{d}x")), tokenize_latex("dx"));
        assert_eq!(normalize_latex(&tokenize_latex("\\left\\lbrace x \\right\\rbrace")), tokenize_latex("\\{x\\}"));
    }

    #[test]
    fn builtin_table_is_versioned() {
        let table = RewriteTable::builtin();
        assert_eq!(table.version(), "1");
        assert!(table.len() > 20);
    }

    #[test]
    fn table_syntax_errors() {
        assert!(matches!(RewriteTable::parse("\\dfrac \\frac"), Err(FormulaError::RuleSyntax { line: 1, .. })));
        assert!(matches!(RewriteTable::parse("# c\n \tx"), Err(FormulaError::RuleSyntax { line: 2, .. })));
        let t = RewriteTable::parse("# version: 7\n\\foo\t\\bar\r\n").unwrap();
        assert_eq!(t.version(), "7");
        assert_eq!(t.normalize(&lex("\\foo")), lex("\\bar"));
    }

    #[test]
    fn cdm_examples() {
        assert_eq!(cdm_proxy("\\frac{a}{b}", "\\frac{a}{b}").value, 1.0);
        let s = cdm_proxy("x+y", "x-y");
        assert_eq!(s.matched, 2);
        assert_eq!(s.value, 4.0 / 6.0);
        assert_eq!(cdm_proxy("", "x").value, 0.0);
        assert_eq!(cdm_proxy("", "").value, 1.0);
        assert_eq!(cdm_proxy("\\dfrac{1}{2}", "\\frac12").value, 1.0);
    }

    #[test]
    fn exprate_counts_exact() {
        let full = cdm_proxy("x", "x");
        let half = cdm_proxy("x+y", "x-y");
        assert_eq!(exprate(&[full, full]).unwrap(), 1.0);
        assert_eq!(exprate(&[full, half]).unwrap(), 0.5);
        assert!(matches!(exprate(&[]), Err(FormulaError::EmptyBatch)));
    }
}
