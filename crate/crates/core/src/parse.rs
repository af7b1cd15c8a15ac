//! Parsers for the memo markdown format, skill documents, and verifier text.
//!
//! These are structural parsers, not a full Markdown AST: they extract
//! exactly the sections, bullets, fences, and counts the metrics need, and
//! they round-trip through the canonical memo template.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::model::{Memo, SkillDocument, SkillSection};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("input is empty")]
    EmptyInput,
    #[error("required memo section {0:?} is missing")]
    MissingSection(&'static str),
}

/// Warnings accumulated while parsing. In strict mode a missing required
/// section is promoted to [`ParseError::MissingSection`] instead.
#[derive(Debug, Clone, Default)]
pub struct ParseDiagnostics {
    /// (location, message) pairs; location is a line reference or section name.
    pub warnings: Vec<(String, String)>,
    pub strict_mode: bool,
}

impl ParseDiagnostics {
    fn warn(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.warnings.push((location.into(), message.into()));
    }
}

/// The five canonical memo section titles, in template order.
pub const MEMO_SECTIONS: [&str; 5] = [
    "Attempts Log",
    "Commands",
    "Verified Facts",
    "Current Error Pattern",
    "Next Strategy",
];

const MEMO_HEADER_TITLE: &str = "exploration memo";

fn header_count_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\((\d+)\s+failed").unwrap())
}

fn numbered_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\d+[.)]").unwrap())
}

/// Split a heading line into (level, title); `None` for non-heading lines.
/// A heading is a run of `#` followed by whitespace or end of line.
fn heading_of(line: &str) -> Option<(u8, &str)> {
    let trimmed = line.trim_start();
    let hashes = trimmed.chars().take_while(|&c| c == '#').count();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let rest = &trimmed[hashes..];
    if !(rest.is_empty() || rest.starts_with(' ') || rest.starts_with('\t')) {
        return None;
    }
    Some((hashes as u8, rest.trim()))
}

/// Strip a leading bullet (`- `, `* `) or numbered (`1. `, `1) `) marker.
fn strip_bullet(line: &str) -> &str {
    let t = line.trim();
    if let Some(rest) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")) {
        return rest.trim_start();
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let after = &t[digits..];
        if let Some(rest) = after.strip_prefix(". ").or_else(|| after.strip_prefix(") ")) {
            return rest.trim_start();
        }
    }
    t
}

fn bullet_items(lines: &[&str]) -> Vec<String> {
    lines
        .iter()
        .map(|l| strip_bullet(l))
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

fn text_block(lines: &[&str]) -> String {
    let joined = lines.join("\n");
    joined.trim().to_string()
}

/// Parse memo text into its five sections.
///
/// Heading matching is case-insensitive, requires heading level >= 2, and
/// tolerates trailing annotations ("Commands From Last Attempt" matches
/// "Commands"). Section order in the input does not matter. In non-strict
/// mode a missing section yields an empty value plus a warning.
pub fn parse_memo(text: &str, strict: bool) -> Result<(Memo, ParseDiagnostics), ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let mut diag = ParseDiagnostics {
        strict_mode: strict,
        ..Default::default()
    };

    let lines: Vec<&str> = text.lines().collect();
    // (canonical index, content-line range) for each recognized section.
    let mut found: [Option<Vec<&str>>; 5] = Default::default();
    let mut header_count: Option<u32> = None;

    let mut current: Option<usize> = None;
    for (lineno, line) in lines.iter().enumerate() {
        match heading_of(line) {
            Some((level, title)) if level >= 2 => {
                let lower = title.to_lowercase();
                if lower.starts_with(MEMO_HEADER_TITLE) {
                    if let Some(cap) = header_count_re().captures(title) {
                        header_count = cap[1].parse::<u32>().ok();
                    }
                    current = None;
                    continue;
                }
                let matched = MEMO_SECTIONS
                    .iter()
                    .position(|s| lower.starts_with(&s.to_lowercase()));
                match matched {
                    Some(idx) => {
                        if found[idx].is_some() {
                            diag.warn(
                                format!("line {}", lineno + 1),
                                format!("duplicate section {:?}; keeping the first", MEMO_SECTIONS[idx]),
                            );
                            current = None;
                        } else {
                            found[idx] = Some(Vec::new());
                            current = Some(idx);
                        }
                    }
                    None => {
                        diag.warn(
                            format!("line {}", lineno + 1),
                            format!("unrecognized memo heading {:?}", title),
                        );
                        current = None;
                    }
                }
            }
            _ => {
                if let Some(idx) = current {
                    found[idx].as_mut().unwrap().push(line);
                }
            }
        }
    }

    for (idx, slot) in found.iter().enumerate() {
        if slot.is_none() {
            if strict {
                return Err(ParseError::MissingSection(MEMO_SECTIONS[idx]));
            }
            diag.warn(
                MEMO_SECTIONS[idx].to_string(),
                "section missing; defaulting to empty",
            );
        }
    }

    let empty: Vec<&str> = Vec::new();
    let section = |i: usize| found[i].as_deref().unwrap_or(&empty);
    let attempts_log = bullet_items(section(0));
    let commands = bullet_items(section(1));
    let verified_facts = bullet_items(section(2));
    let current_error_pattern = text_block(section(3));
    let next_strategy = text_block(section(4));
    let attempt_count_header = header_count.unwrap_or(attempts_log.len() as u32);

    Ok((
        Memo {
            attempt_count_header,
            attempts_log,
            commands,
            verified_facts,
            current_error_pattern,
            next_strategy,
            raw_text: text.to_string(),
        },
        diag,
    ))
}

/// Render a memo through the canonical five-section template.
///
/// `parse_memo(render_memo(m))` reproduces every section of `m`.
pub fn render_memo(memo: &Memo) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "## Exploration Memo ({} failed attempts)\n\n",
        memo.attempt_count_header
    ));
    out.push_str("### Attempts Log\n");
    for item in &memo.attempts_log {
        out.push_str(&format!("- {}\n", item));
    }
    out.push_str("\n### Commands From Last Attempt\n");
    for cmd in &memo.commands {
        out.push_str(cmd);
        out.push('\n');
    }
    out.push_str("\n### Verified Facts\n");
    for fact in &memo.verified_facts {
        out.push_str(&format!("- {}\n", fact));
    }
    out.push_str("\n### Current Error Pattern\n");
    out.push_str(&memo.current_error_pattern);
    out.push_str("\n\n### Next Strategy\n");
    out.push_str(&memo.next_strategy);
    out.push('\n');
    out
}

/// Parse a skill document: frontmatter, fence-aware sections, code blocks,
/// and the numbered-step count.
pub fn parse_skill(text: &str) -> (SkillDocument, ParseDiagnostics) {
    let mut diag = ParseDiagnostics::default();

    let (frontmatter_text, body_text) = split_frontmatter(text, &mut diag);
    let frontmatter = parse_frontmatter_pairs(&frontmatter_text);

    let mut sections: Vec<SkillSection> = Vec::new();
    let mut code_blocks: Vec<String> = Vec::new();
    let mut numbered_step_count = 0usize;

    let mut in_fence = false;
    let mut fence_buf: Vec<&str> = Vec::new();
    let mut current: Option<(String, u8, Vec<&str>)> = None;

    for line in body_text.lines() {
        if line.trim_start().starts_with("```") {
            if in_fence {
                code_blocks.push(fence_buf.join("\n"));
                fence_buf.clear();
                in_fence = false;
            } else {
                in_fence = true;
            }
            if let Some((_, _, buf)) = current.as_mut() {
                buf.push(line);
            }
            continue;
        }
        if in_fence {
            fence_buf.push(line);
            if let Some((_, _, buf)) = current.as_mut() {
                buf.push(line);
            }
            continue;
        }
        if let Some((level, title)) = heading_of(line) {
            if let Some((heading, lvl, buf)) = current.take() {
                sections.push(SkillSection {
                    heading,
                    level: lvl,
                    text: buf.join("\n").trim().to_string(),
                });
            }
            current = Some((title.to_string(), level, Vec::new()));
            continue;
        }
        if numbered_line_re().is_match(line) {
            numbered_step_count += 1;
        }
        if let Some((_, _, buf)) = current.as_mut() {
            buf.push(line);
        }
    }
    if in_fence {
        diag.warn("end of input", "unterminated code fence");
        code_blocks.push(fence_buf.join("\n"));
    }
    if let Some((heading, lvl, buf)) = current.take() {
        sections.push(SkillSection {
            heading,
            level: lvl,
            text: buf.join("\n").trim().to_string(),
        });
    }

    (
        SkillDocument {
            frontmatter,
            frontmatter_text,
            body_text,
            sections,
            code_blocks,
            numbered_step_count,
        },
        diag,
    )
}

/// Split a leading `---` frontmatter block off the document. Returns
/// (frontmatter_text, body_text) whose concatenation is the input.
fn split_frontmatter(text: &str, diag: &mut ParseDiagnostics) -> (String, String) {
    let first_line_end = text.find('\n').map(|i| i + 1).unwrap_or(text.len());
    if text[..first_line_end].trim_end() != "---" {
        return (String::new(), text.to_string());
    }
    let mut offset = first_line_end;
    for line in text[first_line_end..].split_inclusive('\n') {
        let candidate_end = offset + line.len();
        if line.trim_end() == "---" {
            return (
                text[..candidate_end].to_string(),
                text[candidate_end..].to_string(),
            );
        }
        offset = candidate_end;
    }
    diag.warn("line 1", "unclosed frontmatter block; treating as body");
    (String::new(), text.to_string())
}

fn parse_frontmatter_pairs(frontmatter_text: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in frontmatter_text.lines() {
        let t = line.trim();
        if t == "---" || t.is_empty() {
            continue;
        }
        if let Some((key, value)) = t.split_once(':') {
            let key = key.trim();
            if key.is_empty() {
                continue;
            }
            let mut value = value.trim();
            if value.len() >= 2
                && ((value.starts_with('"') && value.ends_with('"'))
                    || (value.starts_with('\'') && value.ends_with('\'')))
            {
                value = &value[1..value.len() - 1];
            }
            map.insert(key.to_string(), value.to_string());
        }
    }
    map
}

const REDACTED: &str = "<REDACTED>";
const ASSERT_KEYWORDS: [&str; 2] = ["assert", "expect"];

/// Redact string and numeric literals on assertion lines of verifier source
/// text, preserving structure (names, operators, paths on other lines).
/// Total function: any input maps to a redacted output.
pub fn redact_answers(verifier_text: &str) -> String {
    let mut out = String::with_capacity(verifier_text.len());
    for (i, line) in verifier_text.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let lower = line.to_lowercase();
        if ASSERT_KEYWORDS.iter().any(|k| lower.contains(k)) {
            out.push_str(&redact_line(line));
        } else {
            out.push_str(line);
        }
    }
    out
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn redact_line(line: &str) -> String {
    let chars: Vec<char> = line.chars().collect();
    let mut out = String::with_capacity(line.len());
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let prev = if i == 0 { None } else { Some(chars[i - 1]) };
        if c == '"' || c == '\'' {
            // String literal: scan to the matching unescaped quote.
            let quote = c;
            let mut j = i + 1;
            while j < chars.len() {
                if chars[j] == '\\' {
                    j += 2;
                    continue;
                }
                if chars[j] == quote {
                    break;
                }
                j += 1;
            }
            out.push_str(REDACTED);
            i = if j < chars.len() { j + 1 } else { chars.len() };
            continue;
        }
        let starts_number = c.is_ascii_digit()
            && !prev.map_or(false, |p| is_ident_char(p) || p == '.');
        let starts_decimal = c == '.'
            && i + 1 < chars.len()
            && chars[i + 1].is_ascii_digit()
            && !prev.map_or(false, is_ident_char);
        if starts_number || starts_decimal {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j];
                if is_ident_char(cj) || cj == '.' {
                    j += 1;
                } else if (cj == '+' || cj == '-')
                    && matches!(chars[j - 1], 'e' | 'E')
                    && j + 1 < chars.len()
                    && chars[j + 1].is_ascii_digit()
                {
                    j += 1;
                } else {
                    break;
                }
            }
            out.push_str(REDACTED);
            i = j;
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}
