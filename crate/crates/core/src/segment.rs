//! Sentence segmentation for short chat messages.
//!
//! Splits at `.`, `!` or `?` followed by whitespace, and at line breaks. A
//! period does not end a sentence when the word it closes is a known
//! abbreviation or when the next word starts with a lowercase letter.

/// Abbreviations common in German shop-floor chat. Compared lowercase,
/// including the trailing period.
pub const ABBREVIATIONS: &[&str] = &[
    "vllt.", "evtl.", "ggf.", "bzw.", "z.b.", "zb.", "d.h.", "u.a.", "usw.", "ca.", "nr.", "bzgl.",
    "inkl.", "max.", "min.", "mind.", "etc.", "vgl.", "sog.", "allg.", "tel.", "std.", "dr.", "hr.",
    "fr.", "abt.", "e.g.", "i.e.",
];

/// Split a message body into sentence texts.
///
/// Always returns at least one entry for a non-empty body. Sentences are
/// trimmed; joining them with single spaces reproduces the body up to
/// whitespace normalization.
pub fn segment(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in body.split('\n') {
        segment_line(line, &mut out);
    }
    if out.is_empty() {
        out.push(body.to_string());
    }
    out
}

fn segment_line(line: &str, out: &mut Vec<String>) {
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let mut start = 0;
    for (pos, &(byte, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let Some(&(_, next)) = chars.get(pos + 1) else {
            continue;
        };
        if !next.is_whitespace() {
            continue;
        }
        let end = byte + c.len_utf8();
        if c == '.' && is_continuation(&line[start..end], &line[end..]) {
            continue;
        }
        push_trimmed(&line[start..end], out);
        start = end;
    }
    push_trimmed(&line[start..], out);
}

fn is_continuation(before: &str, after: &str) -> bool {
    let word = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .to_lowercase();
    if ABBREVIATIONS.contains(&word.as_str()) {
        return true;
    }
    after
        .trim_start()
        .chars()
        .next()
        .is_some_and(char::is_lowercase)
}

fn push_trimmed(span: &str, out: &mut Vec<String>) {
    let t = span.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}
