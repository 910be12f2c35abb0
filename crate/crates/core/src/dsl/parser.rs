//! Line-oriented parser for the YAML-flavoured policy language.
//!
//! The accepted surface is the block-style subset used by policy scripts:
//!
//! ```text
//! - f_tag:
//!   - workers:
//!       - local_w1
//!       - local_w2
//!     strategy: best_first
//!     invalidate:
//!       - capacity_used 80%
//!     affinity: g_tag,!h_tag
//!   - workers: *
//!   followup: fail
//! ```
//!
//! Lists may be written one `- item` per line or inline (`a, b` or `[a, b]`).
//! Scalars may be quoted. Top-level items are recognised by their dash column,
//! everything else by keyword, so the slightly irregular indentation found in
//! hand-written scripts is tolerated.

use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use super::ast::*;
use crate::ids::{is_identifier, TagId, WorkerId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    DuplicateTag,
    EmptyBlockList,
    BadThreshold,
    ConflictingAffinity,
    BadIdentifier,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Syntax => "syntax",
            Self::DuplicateTag => "duplicate-tag",
            Self::EmptyBlockList => "empty-block-list",
            Self::BadThreshold => "bad-threshold",
            Self::ConflictingAffinity => "conflicting-affinity",
            Self::BadIdentifier => "bad-identifier",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{}:{}: {kind}: {message}", location.line, location.column)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub location: Location,
    pub message: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, location: Location, message: impl Into<String>) -> Self {
        Self {
            kind,
            location,
            message: message.into(),
        }
    }
}

type Result<T> = std::result::Result<T, ParseError>;

fn syntax(at: Location, msg: impl Into<String>) -> ParseError {
    ParseError::new(ParseErrorKind::Syntax, at, msg)
}

/// A scalar token with the column it starts at.
#[derive(Debug, Clone)]
struct Token {
    text: String,
    at: Location,
}

#[derive(Debug)]
struct Line {
    indent: usize,
    dash: bool,
    key: Option<Token>,
    value: Option<Token>,
    at: Location,
}

fn strip_comment(raw: &str) -> &str {
    let bytes = raw.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &raw[..i];
        }
    }
    raw
}

fn unquote(s: &str) -> &str {
    let b = s.as_bytes();
    if b.len() >= 2 && (b[0] == b'"' || b[0] == b'\'') && b[b.len() - 1] == b[0] {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

fn lex_line(no: usize, raw: &str) -> Result<Option<Line>> {
    let text = strip_comment(raw.trim_end_matches('\r')).trim_end();
    if text.trim().is_empty() {
        return Ok(None);
    }
    let indent = text.len() - text.trim_start_matches(' ').len();
    if text[indent..].starts_with('\t') {
        return Err(syntax(
            Location::new(no, indent + 1),
            "tabs are not allowed in indentation",
        ));
    }
    let at = Location::new(no, indent + 1);
    let mut rest = &text[indent..];
    let mut col = indent;
    let mut dash = false;
    if rest == "-" || rest.starts_with("- ") {
        dash = true;
        let after = &rest[1..];
        let trimmed = after.trim_start();
        col += 1 + (after.len() - trimmed.len());
        rest = trimmed;
        if rest == "-" || rest.starts_with("- ") {
            return Err(syntax(
                Location::new(no, col + 1),
                "nested sequences are not supported",
            ));
        }
    }
    if rest.is_empty() {
        return Ok(Some(Line {
            indent,
            dash,
            key: None,
            value: None,
            at,
        }));
    }

    // `key:` or `key: value`; the colon must end the token.
    if let Some(pos) = rest.find(':') {
        let candidate = unquote(rest[..pos].trim_end());
        let after = &rest[pos + 1..];
        if is_identifier(candidate) && (after.is_empty() || after.starts_with(' ')) {
            let key = Token {
                text: candidate.to_owned(),
                at: Location::new(no, col + 1),
            };
            let value_trimmed = after.trim_start();
            let value = if value_trimmed.is_empty() {
                None
            } else {
                let vcol = col + pos + 1 + (after.len() - value_trimmed.len());
                Some(Token {
                    text: value_trimmed.to_owned(),
                    at: Location::new(no, vcol + 1),
                })
            };
            return Ok(Some(Line {
                indent,
                dash,
                key: Some(key),
                value,
                at,
            }));
        }
    }
    Ok(Some(Line {
        indent,
        dash,
        key: None,
        value: Some(Token {
            text: rest.to_owned(),
            at: Location::new(no, col + 1),
        }),
        at,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ListKey {
    Workers,
    Invalidate,
    Affinity,
}

#[derive(Default)]
struct BlockBuilder {
    at: Location,
    workers: Option<WorkerSet>,
    strategy: Option<Strategy>,
    invalidate: Option<Vec<InvalidateRule>>,
    affinity: Option<Vec<AffinityConstraint>>,
    open: Option<ListKey>,
}

struct TagBuilder {
    tag: TagId,
    at: Location,
    blocks: Vec<BlockBuilder>,
    followup: Option<Followup>,
}

const BLOCK_KEYS: [&str; 4] = ["workers", "strategy", "invalidate", "affinity"];

/// Splits an inline list (`a, b` or `[a, b]`) into tokens.
fn split_inline(tok: &Token) -> Vec<Token> {
    let mut text = tok.text.as_str();
    let mut offset = 0;
    if text.starts_with('[') && text.ends_with(']') {
        text = &text[1..text.len() - 1];
        offset = 1;
    }
    let mut out = Vec::new();
    let mut start = 0;
    for piece in text.split(',') {
        let lead = piece.len() - piece.trim_start().len();
        let item = piece.trim();
        if !item.is_empty() {
            out.push(Token {
                text: item.to_owned(),
                at: Location::new(tok.at.line, tok.at.column + offset + start + lead),
            });
        }
        start += piece.len() + 1;
    }
    out
}

impl BlockBuilder {
    fn apply(&mut self, key: &Token, value: Option<&Token>) -> Result<()> {
        self.open = None;
        let dup = |name: &str| syntax(key.at, format!("duplicate `{name}` in block"));
        match key.text.as_str() {
            "workers" => {
                if self.workers.is_some() {
                    return Err(dup("workers"));
                }
                match value {
                    None => {
                        self.workers = Some(WorkerSet::List(Vec::new()));
                        self.open = Some(ListKey::Workers);
                    }
                    Some(v) if unquote(&v.text) == "*" => self.workers = Some(WorkerSet::All),
                    Some(v) => {
                        self.workers = Some(WorkerSet::List(Vec::new()));
                        for item in split_inline(v) {
                            self.push_item(ListKey::Workers, &item)?;
                        }
                    }
                }
            }
            "strategy" => {
                if self.strategy.is_some() {
                    return Err(dup("strategy"));
                }
                let v = value.ok_or_else(|| syntax(key.at, "`strategy` needs a value"))?;
                self.strategy = Some(match unquote(&v.text) {
                    "any" => Strategy::Any,
                    "best_first" => Strategy::BestFirst,
                    other => {
                        return Err(syntax(
                            v.at,
                            format!("unknown strategy `{other}` (expected `any` or `best_first`)"),
                        ))
                    }
                });
            }
            "invalidate" | "affinity" => {
                let list = if key.text == "invalidate" {
                    ListKey::Invalidate
                } else {
                    ListKey::Affinity
                };
                let present = match list {
                    ListKey::Invalidate => self.invalidate.replace(Vec::new()).is_some(),
                    _ => self.affinity.replace(Vec::new()).is_some(),
                };
                if present {
                    return Err(dup(&key.text));
                }
                match value {
                    None => self.open = Some(list),
                    Some(v) => {
                        for item in split_inline(v) {
                            self.push_item(list, &item)?;
                        }
                    }
                }
            }
            other => return Err(syntax(key.at, format!("unknown block key `{other}`"))),
        }
        Ok(())
    }

    fn push_item(&mut self, list: ListKey, item: &Token) -> Result<()> {
        let text = unquote(item.text.trim());
        match list {
            ListKey::Workers => {
                if !is_identifier(text) {
                    return Err(ParseError::new(
                        ParseErrorKind::BadIdentifier,
                        item.at,
                        format!("`{text}` is not a valid worker id"),
                    ));
                }
                let Some(WorkerSet::List(ws)) = self.workers.as_mut() else {
                    unreachable!("worker list is open");
                };
                if ws.iter().any(|w| w.as_str() == text) {
                    return Err(ParseError::new(
                        ParseErrorKind::BadIdentifier,
                        item.at,
                        format!("worker `{text}` listed twice in one block"),
                    ));
                }
                ws.push(WorkerId::new(text));
            }
            ListKey::Invalidate => {
                let rule = parse_rule(text, item.at)?;
                let rules = self.invalidate.get_or_insert_with(Vec::new);
                if rules
                    .iter()
                    .any(|r| std::mem::discriminant(r) == std::mem::discriminant(&rule))
                {
                    return Err(syntax(
                        item.at,
                        "each invalidate rule may appear once per block",
                    ));
                }
                rules.push(rule);
            }
            ListKey::Affinity => {
                let (polarity, name) = match text.strip_prefix('!') {
                    Some(rest) => (Polarity::AntiAffine, rest),
                    None => (Polarity::Affine, text),
                };
                if !is_identifier(name) {
                    return Err(ParseError::new(
                        ParseErrorKind::BadIdentifier,
                        item.at,
                        format!("`{text}` is not a valid affinity tag"),
                    ));
                }
                let list = self.affinity.get_or_insert_with(Vec::new);
                if let Some(prev) = list.iter().find(|c| c.tag.as_str() == name) {
                    let msg = if prev.polarity == polarity {
                        format!("tag `{name}` repeated in affinity list")
                    } else {
                        format!("tag `{name}` is both affine and anti-affine")
                    };
                    return Err(ParseError::new(
                        ParseErrorKind::ConflictingAffinity,
                        item.at,
                        msg,
                    ));
                }
                list.push(AffinityConstraint {
                    tag: TagId::new(name),
                    polarity,
                });
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<Block> {
        let workers = self
            .workers
            .ok_or_else(|| syntax(self.at, "block is missing `workers`"))?;
        if matches!(&workers, WorkerSet::List(ws) if ws.is_empty()) {
            return Err(ParseError::new(
                ParseErrorKind::EmptyBlockList,
                self.at,
                "block lists no workers",
            ));
        }
        Ok(Block {
            workers,
            strategy: self.strategy.unwrap_or_default(),
            invalidate: self.invalidate.unwrap_or_default(),
            affinity: self.affinity.unwrap_or_default(),
            at: self.at,
        })
    }
}

fn parse_rule(text: &str, at: Location) -> Result<InvalidateRule> {
    let (name, arg) = match text.split_once(char::is_whitespace) {
        Some((n, a)) => (n, a.trim()),
        None => (text, ""),
    };
    let bad = |msg: String| ParseError::new(ParseErrorKind::BadThreshold, at, msg);
    match name {
        "capacity_used" => {
            let digits = arg
                .strip_suffix('%')
                .ok_or_else(|| syntax(at, "`capacity_used` expects a percentage such as `80%`"))?
                .trim_end();
            let n: u32 = digits
                .parse()
                .map_err(|_| bad(format!("`{arg}` is not a percentage")))?;
            if n == 0 || n > 100 {
                return Err(bad(format!("capacity threshold {n}% outside 1..=100")));
            }
            Ok(InvalidateRule::CapacityUsed(n as u8))
        }
        "max_concurrent_invocations" => {
            if arg.is_empty() {
                return Err(syntax(at, "`max_concurrent_invocations` expects a count"));
            }
            let n: u32 = arg
                .parse()
                .map_err(|_| bad(format!("`{arg}` is not a positive integer")))?;
            if n == 0 {
                return Err(bad("invocation limit must be at least 1".into()));
            }
            Ok(InvalidateRule::MaxConcurrentInvocations(n))
        }
        other => Err(syntax(at, format!("unknown invalidate rule `{other}`"))),
    }
}

impl TagBuilder {
    fn finish(self) -> Result<TagPolicy> {
        if self.blocks.is_empty() {
            return Err(ParseError::new(
                ParseErrorKind::EmptyBlockList,
                self.at,
                format!("tag `{}` has no blocks", self.tag),
            ));
        }
        let blocks = self
            .blocks
            .into_iter()
            .map(BlockBuilder::finish)
            .collect::<Result<Vec<_>>>()?;
        Ok(TagPolicy {
            tag: self.tag,
            blocks,
            followup: self.followup.unwrap_or(Followup::Default),
            followup_declared: self.followup.is_some(),
            at: self.at,
        })
    }
}

/// Parses a policy script.
pub fn parse_script(text: &str) -> Result<AappScript> {
    let mut policies: IndexMap<TagId, TagPolicy> = IndexMap::new();
    let mut top: Option<usize> = None;
    let mut current: Option<TagBuilder> = None;

    let close = |tag: Option<TagBuilder>, policies: &mut IndexMap<TagId, TagPolicy>| {
        if let Some(t) = tag {
            let p = t.finish()?;
            policies.insert(p.tag.clone(), p);
        }
        Ok::<_, ParseError>(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let Some(line) = lex_line(idx + 1, raw)? else {
            continue;
        };
        let is_top = line.dash && top.is_none_or(|c| line.indent == c);
        if is_top {
            top = Some(line.indent);
            let key = match (&line.key, &line.value) {
                (Some(k), None) => k,
                _ => return Err(syntax(line.at, "expected a tag entry of the form `- tag:`")),
            };
            close(current.take(), &mut policies)?;
            if policies.contains_key(key.text.as_str()) {
                return Err(ParseError::new(
                    ParseErrorKind::DuplicateTag,
                    key.at,
                    format!("tag `{}` defined more than once", key.text),
                ));
            }
            current = Some(TagBuilder {
                tag: TagId::new(key.text.clone()),
                at: key.at,
                blocks: Vec::new(),
                followup: None,
            });
            continue;
        }
        let Some(c0) = top else {
            return Err(syntax(line.at, "expected a tag entry of the form `- tag:`"));
        };
        if line.indent <= c0 {
            return Err(syntax(line.at, "line is not indented under a tag"));
        }
        let tag = current.as_mut().expect("a tag is open once `top` is set");

        match (line.dash, &line.key, &line.value) {
            (true, Some(key), value) => {
                if !BLOCK_KEYS.contains(&key.text.as_str()) {
                    return Err(syntax(key.at, format!("unknown block key `{}`", key.text)));
                }
                if tag.followup.is_some() {
                    return Err(syntax(line.at, "blocks must precede `followup`"));
                }
                let mut block = BlockBuilder {
                    at: line.at,
                    ..Default::default()
                };
                block.apply(key, value.as_ref())?;
                tag.blocks.push(block);
            }
            (false, Some(key), value) if key.text == "followup" => {
                if tag.followup.is_some() {
                    return Err(syntax(key.at, "duplicate `followup`"));
                }
                let v = value
                    .as_ref()
                    .ok_or_else(|| syntax(key.at, "`followup` needs a value"))?;
                tag.followup = Some(match unquote(&v.text) {
                    "default" => Followup::Default,
                    "fail" => Followup::Fail,
                    other => {
                        return Err(syntax(
                            v.at,
                            format!("unknown followup `{other}` (expected `default` or `fail`)"),
                        ))
                    }
                });
                if let Some(b) = tag.blocks.last_mut() {
                    b.open = None;
                }
            }
            (false, Some(key), value) => {
                if tag.followup.is_some() {
                    return Err(syntax(line.at, "blocks must precede `followup`"));
                }
                let block = tag
                    .blocks
                    .last_mut()
                    .ok_or_else(|| syntax(key.at, format!("`{}` outside of a block", key.text)))?;
                block.apply(key, value.as_ref())?;
            }
            (true, None, Some(item)) => {
                let block = tag
                    .blocks
                    .last_mut()
                    .filter(|b| b.open.is_some() && tag.followup.is_none())
                    .ok_or_else(|| syntax(item.at, "unexpected list item"))?;
                let list = block.open.expect("filtered on open list");
                block.push_item(list, item)?;
            }
            (true, None, None) => return Err(syntax(line.at, "empty list item")),
            (false, None, _) => return Err(syntax(line.at, "expected `key: value`")),
        }
    }
    close(current.take(), &mut policies)?;
    Ok(AappScript { policies })
}
