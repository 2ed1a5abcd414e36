//! Code tokenizer for lexical similarity.
//!
//! Operators and punctuation are dropped; identifier, keyword and number runs
//! are split on underscores, camel-case humps and letter/digit boundaries, and
//! lowercased.

/// Tokenizes `text` into lowercase sub-words, in source order.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut run = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            run.push(c);
        } else {
            split_run(&run, &mut out);
            run.clear();
        }
    }
    split_run(&run, &mut out);
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Lower,
    Upper,
    Digit,
}

fn class_of(c: char) -> Class {
    if c.is_numeric() {
        Class::Digit
    } else if c.is_uppercase() {
        Class::Upper
    } else {
        Class::Lower
    }
}

fn split_run(run: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = run.chars().collect();
    let mut start = 0;
    for k in 1..chars.len() {
        let (prev, cur) = (class_of(chars[k - 1]), class_of(chars[k]));
        let boundary = match (prev, cur) {
            (Class::Lower, Class::Upper) => true,
            (Class::Digit, Class::Lower | Class::Upper) => true,
            (Class::Lower | Class::Upper, Class::Digit) => true,
            // `HTTPServer`: the last capital starts the next word
            (Class::Upper, Class::Upper) => chars
                .get(k + 1)
                .map(|n| class_of(*n) == Class::Lower)
                .unwrap_or(false),
            _ => false,
        };
        if boundary {
            push_lower(&chars[start..k], out);
            start = k;
        }
    }
    if start < chars.len() {
        push_lower(&chars[start..], out);
    }
}

fn push_lower(word: &[char], out: &mut Vec<String>) {
    if !word.is_empty() {
        out.push(word.iter().flat_map(|c| c.to_lowercase()).collect());
    }
}
