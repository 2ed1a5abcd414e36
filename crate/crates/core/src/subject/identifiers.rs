//! Identifier classification over statement text.

use serde::{Deserialize, Serialize};

use super::mask::mask_source;

/// How an identifier is used at a particular occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentifierKind {
    Variable,
    Call,
    FieldAccess,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Identifier {
    pub kind: IdentifierKind,
    pub name: String,
    /// Identifier immediately before the `.` that precedes this one, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub receiver: Option<String>,
}

/// Keywords and literal words of the supported brace languages (Java, C, C++, C#, JS).
const KEYWORDS: &[&str] = &[
    "abstract", "assert", "auto", "bool", "boolean", "break", "byte", "case", "catch", "char",
    "class", "const", "continue", "default", "delete", "do", "double", "else", "enum", "extends",
    "extern", "false", "final", "finally", "float", "for", "function", "goto", "if", "implements",
    "import", "inline", "instanceof", "int", "interface", "let", "long", "namespace", "native",
    "new", "null", "nullptr", "package", "private", "protected", "public", "record", "register",
    "return", "short", "signed", "sizeof", "static", "strictfp", "struct", "super", "switch",
    "synchronized", "template", "this", "throw", "throws", "transient", "true", "try", "typedef",
    "typeof", "union", "unsigned", "var", "void", "volatile", "while", "yield",
];

/// Keywords that name a type and may precede a declared variable.
const PRIMITIVE_TYPES: &[&str] = &[
    "auto", "bool", "boolean", "byte", "char", "double", "float", "int", "let", "long", "short",
    "signed", "unsigned", "var", "const",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.binary_search(&word).is_ok()
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphanumeric()
}

/// A lexical token of masked statement text.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok<'a> {
    Ident(&'a str),
    Number,
    Punct(char),
}

/// Splits masked text into identifiers, numbers and single punctuation characters.
pub(crate) fn lex(masked: &str) -> Vec<Tok<'_>> {
    let mut toks = Vec::new();
    let mut chars = masked.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c.is_whitespace() {
            continue;
        }
        if is_ident_start(c) {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if is_ident_continue(d) {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            toks.push(Tok::Ident(&masked[i..end]));
        } else if c.is_ascii_digit() {
            while let Some(&(_, d)) = chars.peek() {
                if d.is_alphanumeric() || d == '_' || d == '.' {
                    chars.next();
                } else {
                    break;
                }
            }
            toks.push(Tok::Number);
        } else {
            toks.push(Tok::Punct(c));
        }
    }
    toks
}

fn masked_string(text: &str) -> String {
    // masking only rewrites whole characters inside literals with ASCII spaces
    String::from_utf8(mask_source(text)).unwrap_or_else(|_| text.to_string())
}

/// Classifies every non-keyword identifier occurrence in `text`, in source order.
pub fn identifiers_in_text(text: &str) -> Vec<Identifier> {
    let masked = masked_string(text);
    let toks = lex(&masked);
    let mut out = Vec::new();
    for (i, tok) in toks.iter().enumerate() {
        let Tok::Ident(name) = tok else { continue };
        if is_keyword(name) {
            continue;
        }
        let after_dot = i > 0 && toks[i - 1] == Tok::Punct('.');
        let kind = if toks.get(i + 1) == Some(&Tok::Punct('(')) {
            IdentifierKind::Call
        } else if after_dot {
            IdentifierKind::FieldAccess
        } else {
            IdentifierKind::Variable
        };
        let receiver = if after_dot && i >= 2 {
            match toks[i - 2] {
                Tok::Ident(r) => Some(r.to_string()),
                _ => None,
            }
        } else {
            None
        };
        out.push(Identifier {
            kind,
            name: name.to_string(),
            receiver,
        });
    }
    out
}

/// Whether `text` assigns to or declares the variable `var`.
pub fn defines_variable(text: &str, var: &str) -> bool {
    let masked = masked_string(text);
    let toks = lex(&masked);
    let punct = |k: usize| match toks.get(k) {
        Some(Tok::Punct(c)) => Some(*c),
        _ => None,
    };
    for (i, tok) in toks.iter().enumerate() {
        if *tok != Tok::Ident(var) {
            continue;
        }
        if i > 0 && toks[i - 1] == Tok::Punct('.') {
            continue;
        }
        // prefix increment / decrement
        if i >= 2 {
            if let (Some(a), Some(b)) = (punct(i - 2), punct(i - 1)) {
                if a == b && (a == '+' || a == '-') {
                    return true;
                }
            }
        }
        match (punct(i + 1), punct(i + 2), punct(i + 3)) {
            (Some('='), next, _) if next != Some('=') => return true,
            (Some(a), Some('='), _) if "+-*/%&|^".contains(a) => return true,
            (Some('+'), Some('+'), _) | (Some('-'), Some('-'), _) => return true,
            (Some('<'), Some('<'), Some('=')) | (Some('>'), Some('>'), Some('=')) => return true,
            _ => {}
        }
        // declaration: a type-like token precedes the name
        let typed = i > 0
            && match &toks[i - 1] {
                Tok::Ident(prev) => !is_keyword(prev) || PRIMITIVE_TYPES.contains(prev),
                Tok::Punct(']') | Tok::Punct('>') | Tok::Punct('*') | Tok::Punct('&') => true,
                _ => false,
            };
        let ends_declarator = matches!(punct(i + 1), Some(';' | ',' | ':' | ')' | '[' | '='));
        if typed && ends_declarator {
            return true;
        }
    }
    false
}

/// Declared type of `var` in a declaration within `text`, if there is one.
///
/// Generic arguments are stripped, so `List<Foo> xs` yields `List`.
pub fn declared_type(text: &str, var: &str) -> Option<String> {
    let masked = strip_generics(&masked_string(text));
    let toks = lex(&masked);
    for (i, tok) in toks.iter().enumerate() {
        if *tok != Tok::Ident(var) || i == 0 {
            continue;
        }
        let mut j = i;
        // skip array brackets between the type and the name
        while j >= 2 && toks[j - 1] == Tok::Punct(']') && toks[j - 2] == Tok::Punct('[') {
            j -= 2;
        }
        if j == 0 {
            continue;
        }
        if let Tok::Ident(ty) = toks[j - 1] {
            if !is_keyword(ty) || PRIMITIVE_TYPES.contains(&ty) {
                return Some(ty.to_string());
            }
        }
    }
    None
}

/// Removes `<...>` generic argument lists (nested), keeping everything else.
///
/// A `<` counts as a generic bracket only when it directly follows an
/// identifier and a balanced `>` is reached through type-like characters.
pub(crate) fn strip_generics(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        if c == '<' && k > 0 && is_ident_continue(chars[k - 1]) {
            if let Some(end) = generic_close(&chars, k) {
                k = end + 1;
                continue;
            }
        }
        out.push(c);
        k += 1;
    }
    out
}

fn generic_close(chars: &[char], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (k, &c) in chars.iter().enumerate().skip(open) {
        match c {
            '<' => depth += 1,
            '>' => {
                depth -= 1;
                if depth == 0 {
                    return Some(k);
                }
            }
            c if is_ident_continue(c) || c.is_whitespace() || ",.?[]&".contains(c) => {}
            _ => return None,
        }
    }
    None
}
