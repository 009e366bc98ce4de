//! Line-oriented block lexer shared by the DEFCAT and GTRUTH formats.
//!
//! A document is a sequence of `[header]` blocks, each followed by
//! `key = value` lines. `#` starts a comment unless it appears inside a
//! double-quoted value. Blank lines are ignored.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// A problem found while reading a document. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    pub fn error(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    pub fn warning(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            severity: Severity::Warning,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "line {}: {}: {}", self.line, sev, self.message)
    }
}

/// Whether unknown keys and unknown risk tokens are fatal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

/// A successfully parsed document together with any non-fatal warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Block {
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Block {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

#[derive(Debug, Default)]
pub(crate) struct Lexed {
    pub blocks: Vec<Block>,
    /// Value of the first `# provenance:` comment, if any.
    pub provenance: Option<String>,
}

pub(crate) const PROVENANCE_PREFIX: &str = "provenance:";

/// Strips a trailing comment, ignoring `#` inside double quotes.
fn strip_comment(line: &str) -> (&str, Option<&str>) {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return (&line[..i], Some(&line[i + 1..])),
            _ => {}
        }
    }
    (line, None)
}

/// Splits a document into blocks introduced by the exact line `[header]`.
/// Every structural problem is collected; lexing never stops early.
pub(crate) fn lex(text: &str, header: &str, diags: &mut Vec<Diagnostic>) -> Lexed {
    let marker = format!("[{header}]");
    let mut out = Lexed::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let (body, comment) = strip_comment(raw);
        if let Some(c) = comment {
            let c = c.trim();
            if out.provenance.is_none() && body.trim().is_empty() {
                if let Some(rest) = c.strip_prefix(PROVENANCE_PREFIX) {
                    out.provenance = Some(rest.trim().to_string());
                }
            }
        }
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        if body.starts_with('[') {
            if body == marker {
                out.blocks.push(Block {
                    line: line_no,
                    entries: Vec::new(),
                });
            } else {
                diags.push(Diagnostic::error(
                    line_no,
                    format!("unexpected section header `{body}`, expected `{marker}`"),
                ));
            }
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            diags.push(Diagnostic::error(line_no, "malformed line, expected `key = value`"));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            diags.push(Diagnostic::error(line_no, "malformed line, empty key"));
            continue;
        }
        if key.chars().any(char::is_whitespace) {
            diags.push(Diagnostic::error(line_no, format!("malformed key `{key}`")));
            continue;
        }
        let Some(block) = out.blocks.last_mut() else {
            diags.push(Diagnostic::error(
                line_no,
                format!("key `{key}` outside of a {marker} block"),
            ));
            continue;
        };
        if block.get(key).is_some() {
            diags.push(Diagnostic::error(line_no, format!("duplicate key `{key}` in block")));
            continue;
        }
        block.entries.push(Entry {
            line: line_no,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    out
}

/// Splits a comma-separated list, rejecting empty items.
pub(crate) fn split_list(value: &str) -> Result<Vec<&str>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(str::trim)
        .map(|t| {
            if t.is_empty() {
                Err("empty item in list".to_string())
            } else {
                Ok(t)
            }
        })
        .collect()
}

/// Unwraps a double-quoted free-text value.
pub(crate) fn unquote(value: &str) -> Result<&str, String> {
    let inner = value
        .strip_prefix('"')
        .and_then(|v| v.strip_suffix('"'))
        .filter(|_| value.len() >= 2)
        .ok_or_else(|| format!("expected a double-quoted value, found `{value}`"))?;
    if inner.contains('"') {
        return Err("quoted value may not contain `\"`".to_string());
    }
    Ok(inner)
}

/// Token charset used for ids, families, objectives and metric names.
pub(crate) fn is_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}
