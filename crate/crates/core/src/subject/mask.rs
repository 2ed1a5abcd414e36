//! Comment and literal masking for brace-language sources.
//!
//! The masked copy has the same byte length as the input. Every byte inside a
//! comment, string literal, or character literal is replaced with a space,
//! except newlines, which are kept so that line numbers stay aligned. Quote
//! characters themselves are kept so a masked literal still reads as a token.

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Code,
    LineComment,
    BlockComment,
    Str,
    Char,
}

/// Returns a masked copy of `src` suitable for structural scanning.
pub fn mask_source(src: &str) -> Vec<u8> {
    let bytes = src.as_bytes();
    let mut out = bytes.to_vec();
    let mut state = State::Code;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let next = bytes.get(i + 1).copied();
        match state {
            State::Code => match (b, next) {
                (b'/', Some(b'/')) => {
                    state = State::LineComment;
                    out[i] = b' ';
                    out[i + 1] = b' ';
                    i += 2;
                    continue;
                }
                (b'/', Some(b'*')) => {
                    state = State::BlockComment;
                    out[i] = b' ';
                    out[i + 1] = b' ';
                    i += 2;
                    continue;
                }
                (b'"', _) => state = State::Str,
                (b'\'', _) => state = State::Char,
                _ => {}
            },
            State::LineComment => {
                if b == b'\n' {
                    state = State::Code;
                } else {
                    out[i] = b' ';
                }
            }
            State::BlockComment => {
                if b == b'*' && next == Some(b'/') {
                    out[i] = b' ';
                    out[i + 1] = b' ';
                    state = State::Code;
                    i += 2;
                    continue;
                }
                if b != b'\n' {
                    out[i] = b' ';
                }
            }
            State::Str | State::Char => {
                let close = if state == State::Str { b'"' } else { b'\'' };
                if b == b'\\' {
                    out[i] = b' ';
                    if let Some(n) = next {
                        if n != b'\n' {
                            out[i + 1] = b' ';
                        }
                    }
                    i += 2;
                    continue;
                }
                if b == close {
                    state = State::Code;
                } else if b == b'\n' {
                    // unterminated literal; resynchronise at the line end
                    state = State::Code;
                } else {
                    out[i] = b' ';
                }
            }
        }
        i += 1;
    }
    out
}
