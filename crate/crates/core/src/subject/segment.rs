//! Brace-language segmentation into statements, methods, classes and members.
//!
//! A statement is a maximal segment ending in `;` at parenthesis depth zero, or
//! a block header ending in `{` inside a method body. Method declarations are
//! recognised by an identifier followed by a parenthesised parameter list and
//! `{`, at class (or file) nesting depth. Braces that open expressions (array
//! initialisers, lambda bodies, anonymous classes passed as arguments) stay
//! inside the enclosing statement.

use std::ops::Range;

use super::identifiers::{is_keyword, lex, strip_generics, Tok};
use super::mask::mask_source;
use super::{LineSpan, MemberKind, StatementKind};

#[derive(Debug, Clone)]
pub(crate) struct RawStatement {
    pub bytes: Range<usize>,
    pub kind: StatementKind,
    pub method: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct RawMethod {
    pub name: String,
    pub decl_start: usize,
    pub name_at: usize,
    pub body: Range<usize>,
    pub class: Option<usize>,
    pub signature: String,
    pub params: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub(crate) struct RawClass {
    pub name: String,
    pub header_at: usize,
    pub body: Range<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct RawMember {
    pub class: usize,
    pub kind: MemberKind,
    pub name: String,
    pub signature: String,
    pub at: usize,
    pub declared_type: Option<String>,
}

#[derive(Debug, Default)]
pub(crate) struct Segmentation {
    pub statements: Vec<RawStatement>,
    pub methods: Vec<RawMethod>,
    pub classes: Vec<RawClass>,
    pub members: Vec<RawMember>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub(crate) enum SegmentError {
    #[error("unmatched closing brace at byte {0}")]
    UnmatchedClose(usize),
    #[error("{0} unclosed brace(s) at end of file")]
    Unclosed(usize),
    #[error("unbalanced parentheses at byte {0}")]
    Parens(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Frame {
    Class(Option<usize>),
    Method(usize),
    Block,
    /// Expression braces; the saved parenthesis depth is restored on close.
    Expr(i32),
}

const CONTROL: &[&str] = &[
    "catch", "for", "foreach", "if", "lock", "switch", "synchronized", "try", "using", "while",
    "with",
];
const TYPE_KEYWORDS: &[&str] = &["class", "enum", "interface", "record", "struct", "union"];

pub(crate) fn segment(src: &str) -> Result<Segmentation, SegmentError> {
    let masked = mask_source(src);
    let mut seg = Segmentation::default();
    let mut stack: Vec<Frame> = Vec::new();
    let mut paren: i32 = 0;
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < masked.len() {
        let b = masked[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let in_expr = matches!(stack.last(), Some(Frame::Expr(_)));
        if start.is_none() {
            if b == b'#' && !in_expr {
                // preprocessor line
                while i < masked.len() && masked[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            if b != b'}' && b != b';' {
                start = Some(i);
            }
        }
        match b {
            b'(' | b'[' => paren += 1,
            b')' | b']' => {
                paren -= 1;
                if paren < 0 {
                    return Err(SegmentError::Parens(i));
                }
            }
            b';' if paren == 0 && !in_expr => {
                if let Some(s) = start.take() {
                    let method = innermost_method(&stack);
                    seg.statements.push(RawStatement {
                        bytes: s..i + 1,
                        kind: StatementKind::Simple,
                        method,
                    });
                    if let Some(Frame::Class(Some(c))) = stack.last() {
                        if let Some(m) = member_from_declaration(src, &masked, s..i, *c) {
                            seg.members.push(m);
                        }
                    }
                }
            }
            b'{' => {
                if in_expr || paren > 0 || opens_expression(&masked, start, i) {
                    stack.push(Frame::Expr(paren));
                    paren = 0;
                    if start.is_none() {
                        start = Some(i);
                    }
                } else {
                    let frame = open_block(src, &masked, &mut seg, &stack, start, i);
                    let header_is_statement =
                        matches!(frame, Frame::Block | Frame::Class(None));
                    if header_is_statement && innermost_method(&stack).is_some() {
                        if let Some(s) = start {
                            seg.statements.push(RawStatement {
                                bytes: s..i + 1,
                                kind: StatementKind::BlockHeader,
                                method: innermost_method(&stack),
                            });
                        }
                    }
                    stack.push(frame);
                    start = None;
                }
            }
            b'}' => match stack.pop() {
                None => return Err(SegmentError::UnmatchedClose(i)),
                Some(Frame::Expr(saved)) => {
                    if paren != 0 {
                        return Err(SegmentError::Parens(i));
                    }
                    paren = saved;
                }
                Some(frame) => {
                    if paren != 0 {
                        return Err(SegmentError::Parens(i));
                    }
                    if let Some(s) = start.take() {
                        let end = trim_end(&masked, s, i);
                        // the frame being closed still counts as enclosing
                        let mut enclosing = stack.clone();
                        enclosing.push(frame);
                        seg.statements.push(RawStatement {
                            bytes: s..end,
                            kind: StatementKind::Other,
                            method: innermost_method(&enclosing),
                        });
                    }
                    match frame {
                        Frame::Method(m) => seg.methods[m].body.end = i + 1,
                        Frame::Class(Some(c)) => seg.classes[c].body.end = i + 1,
                        _ => {}
                    }
                }
            },
            _ => {}
        }
        i += 1;
    }
    if !stack.is_empty() {
        return Err(SegmentError::Unclosed(stack.len()));
    }
    if paren != 0 {
        return Err(SegmentError::Parens(masked.len()));
    }
    if let Some(s) = start {
        let end = trim_end(&masked, s, masked.len());
        seg.statements.push(RawStatement {
            bytes: s..end,
            kind: StatementKind::Other,
            method: None,
        });
    }
    Ok(seg)
}

fn innermost_method(stack: &[Frame]) -> Option<usize> {
    stack.iter().rev().find_map(|f| match f {
        Frame::Method(m) => Some(*m),
        _ => None,
    })
}

fn innermost_class(stack: &[Frame]) -> Option<usize> {
    stack.iter().rev().find_map(|f| match f {
        Frame::Class(c) => *c,
        _ => None,
    })
}

fn trim_end(masked: &[u8], start: usize, end: usize) -> usize {
    let mut e = end;
    while e > start && masked[e - 1].is_ascii_whitespace() {
        e -= 1;
    }
    e
}

fn last_significant(masked: &[u8], start: usize, end: usize) -> Option<(usize, u8)> {
    (start..end)
        .rev()
        .find(|&k| !masked[k].is_ascii_whitespace())
        .map(|k| (k, masked[k]))
}

/// A `{` opens an expression when it follows an operator-like character.
fn opens_expression(masked: &[u8], start: Option<usize>, at: usize) -> bool {
    let Some(s) = start else { return false };
    match last_significant(masked, s, at) {
        Some((_, b'=' | b',' | b'(' | b'[' | b'{' | b'?' | b':' | b']' | b'+' | b'|' | b'&')) => {
            true
        }
        Some((k, b'>')) => k > s && masked[k - 1] == b'-',
        Some((k, b'n')) => {
            // `return {` in initializer-list languages
            k + 1 >= 6 && &masked[k + 1 - 6..=k] == b"return"
        }
        _ => false,
    }
}

fn open_block(
    src: &str,
    masked: &[u8],
    seg: &mut Segmentation,
    stack: &[Frame],
    start: Option<usize>,
    brace: usize,
) -> Frame {
    let Some(s) = start else { return Frame::Block };
    let header_masked = std::str::from_utf8(&masked[s..brace]).unwrap_or("");
    let toks = lex(header_masked);
    let at_class_level = matches!(stack.last(), None | Some(Frame::Class(_)));

    // type declarations
    for (k, t) in toks.iter().enumerate() {
        if let Tok::Ident(w) = t {
            let after_dot = k > 0 && toks[k - 1] == Tok::Punct('.');
            if TYPE_KEYWORDS.contains(w) && !after_dot {
                let name = toks[k + 1..].iter().find_map(|t| match t {
                    Tok::Ident(n) if !is_keyword(n) => Some(n.to_string()),
                    _ => None,
                });
                if let Some(name) = name {
                    seg.classes.push(RawClass {
                        name,
                        header_at: s,
                        body: brace..brace,
                    });
                    return Frame::Class(Some(seg.classes.len() - 1));
                }
                return Frame::Class(None);
            }
        }
    }

    // something(...) [throws X, Y | const | noexcept | override] {
    let Some(close) = closing_paren_before(masked, s, brace) else {
        return Frame::Block;
    };
    let Some(open) = matching_open(masked, s, close) else {
        return Frame::Block;
    };
    let before = &masked[s..open];
    let name_end = before
        .iter()
        .rposition(|c| !c.is_ascii_whitespace())
        .map(|p| s + p + 1);
    let Some(name_end) = name_end else { return Frame::Block };
    let mut name_start = name_end;
    while name_start > s && is_ident_byte(masked[name_start - 1]) {
        name_start -= 1;
    }
    if name_start == name_end {
        return Frame::Block;
    }
    let name = &src[name_start..name_end];
    if CONTROL.contains(&name) || name.as_bytes()[0].is_ascii_digit() {
        return Frame::Block;
    }
    let prev_word = word_before(masked, s, name_start);
    if prev_word.as_deref() == Some("new") {
        // anonymous class body
        return Frame::Class(None);
    }
    if is_keyword(name) || !at_class_level {
        return Frame::Block;
    }
    let signature = collapse_ws(&src[s..brace]);
    let params = parse_params(&src[open + 1..close]);
    seg.methods.push(RawMethod {
        name: name.to_string(),
        decl_start: s,
        name_at: name_start,
        body: brace..brace,
        class: innermost_class(stack),
        signature: signature.clone(),
        params,
    });
    let m = seg.methods.len() - 1;
    if let Some(c) = innermost_class(stack) {
        if matches!(stack.last(), Some(Frame::Class(Some(_)))) {
            seg.members.push(RawMember {
                class: c,
                kind: MemberKind::Method,
                name: name.to_string(),
                signature,
                at: name_start,
                declared_type: None,
            });
        }
    }
    Frame::Method(m)
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$' || b >= 0x80
}

fn word_before(masked: &[u8], floor: usize, at: usize) -> Option<String> {
    let mut e = at;
    while e > floor && masked[e - 1].is_ascii_whitespace() {
        e -= 1;
    }
    let mut b = e;
    while b > floor && is_ident_byte(masked[b - 1]) {
        b -= 1;
    }
    (b < e).then(|| String::from_utf8_lossy(&masked[b..e]).into_owned())
}

/// Position of the `)` that ends the parameter list, skipping trailing qualifiers.
fn closing_paren_before(masked: &[u8], start: usize, brace: usize) -> Option<usize> {
    let (k, c) = last_significant(masked, start, brace)?;
    if c == b')' {
        return Some(k);
    }
    // trailing `throws A, B`, `const`, `noexcept`, `override`, `-> T` clauses
    let text = std::str::from_utf8(&masked[start..brace]).ok()?;
    let close = text.rfind(')')?;
    let tail = text[close + 1..].trim();
    let qualifier = tail.starts_with("throws")
        || tail.starts_with("const")
        || tail.starts_with("noexcept")
        || tail.starts_with("override")
        || tail.starts_with("final")
        || tail.starts_with("->")
        || tail.starts_with(':');
    qualifier.then_some(start + close)
}

fn matching_open(masked: &[u8], floor: usize, close: usize) -> Option<usize> {
    let mut depth = 0i32;
    for k in (floor..=close).rev() {
        match masked[k] {
            b')' => depth += 1,
            b'(' => {
                depth -= 1;
                if depth == 0 {
                    return Some(k);
                }
            }
            _ => {}
        }
    }
    None
}

pub(crate) fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_params(list: &str) -> Vec<(String, String)> {
    let masked = String::from_utf8(mask_source(list)).unwrap_or_default();
    let stripped = strip_generics(&masked);
    stripped
        .split(',')
        .filter_map(|p| {
            let toks: Vec<&str> = lex(p)
                .into_iter()
                .filter_map(|t| match t {
                    Tok::Ident(w) if w != "final" && w != "const" => Some(w),
                    _ => None,
                })
                .collect();
            match toks.as_slice() {
                [.., ty, name] => Some((name.to_string(), ty.to_string())),
                _ => None,
            }
        })
        .collect()
}

fn member_from_declaration(
    src: &str,
    masked: &[u8],
    bytes: Range<usize>,
    class: usize,
) -> Option<RawMember> {
    let text = std::str::from_utf8(&masked[bytes.clone()]).ok()?;
    let eq = text.find('=');
    let paren = text.find('(');
    let signature = collapse_ws(&src[bytes.clone()]);
    let (kind, decl) = match (paren, eq) {
        (Some(p), None) => (MemberKind::Method, &text[..p]),
        (Some(p), Some(e)) if p < e => (MemberKind::Method, &text[..p]),
        (_, Some(e)) => (MemberKind::Field, &text[..e]),
        (None, None) => (MemberKind::Field, text),
    };
    let decl = strip_generics(decl.split(',').next().unwrap_or(decl));
    let toks: Vec<Tok> = lex(&decl);
    let idents: Vec<(usize, &str)> = toks
        .iter()
        .enumerate()
        .filter_map(|(k, t)| match t {
            Tok::Ident(w) => Some((k, *w)),
            _ => None,
        })
        .collect();
    let &(last_k, name) = idents.last()?;
    if is_keyword(name) || matches!(name, "import" | "package" | "using") {
        return None;
    }
    let declared_type = match kind {
        MemberKind::Field => idents
            .iter()
            .rev()
            .skip(1)
            .find(|(k, w)| *k < last_k && (!is_keyword(w) || is_primitive(w)))
            .map(|(_, w)| w.to_string()),
        MemberKind::Method => None,
    };
    let name_offset = text.find(name).unwrap_or(0);
    Some(RawMember {
        class,
        kind,
        name: name.to_string(),
        signature: signature.trim_end_matches(';').trim_end().to_string(),
        at: bytes.start + name_offset,
        declared_type,
    })
}

fn is_primitive(w: &str) -> bool {
    matches!(
        w,
        "int" | "long" | "double" | "float" | "boolean" | "bool" | "char" | "byte" | "short"
    )
}

/// Line-wise fallback: every non-blank line becomes one statement.
pub(crate) fn segment_linewise(src: &str) -> Segmentation {
    let mut seg = Segmentation::default();
    let mut offset = 0;
    for line in src.split_inclusive('\n') {
        let lead = line.len() - line.trim_start().len();
        let body = line.trim();
        if !body.is_empty() {
            let s = offset + lead;
            seg.statements.push(RawStatement {
                bytes: s..s + body.len(),
                kind: StatementKind::Other,
                method: None,
            });
        }
        offset += line.len();
    }
    seg
}

pub(crate) fn line_starts(src: &str) -> Vec<usize> {
    std::iter::once(0)
        .chain(src.match_indices('\n').map(|(k, _)| k + 1))
        .collect()
}

/// 1-based line containing byte offset `at`.
pub(crate) fn line_of(starts: &[usize], at: usize) -> u32 {
    match starts.binary_search(&at) {
        Ok(k) => k as u32 + 1,
        Err(k) => k as u32,
    }
}

pub(crate) fn span_of(starts: &[usize], bytes: &Range<usize>) -> LineSpan {
    let end = if bytes.end > bytes.start {
        bytes.end - 1
    } else {
        bytes.start
    };
    LineSpan::new(line_of(starts, bytes.start), line_of(starts, end))
}
