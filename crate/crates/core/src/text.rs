//! Small string helpers shared by the pipeline stages.

use alloc::string::String;

/// Trims and collapses every run of whitespace into a single space.
pub fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// First line of `s` that is not blank, trimmed.
pub fn first_nonempty_line(s: &str) -> Option<&str> {
    s.lines().map(str::trim).find(|l| !l.is_empty())
}

/// The first paragraph of `s` (text up to the first blank line), with its
/// lines joined by single spaces.
pub fn first_paragraph(s: &str) -> String {
    let mut out = String::new();
    for line in s.trim().lines() {
        let line = line.trim();
        if line.is_empty() {
            break;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(line);
    }
    collapse_whitespace(&out)
}

/// Rough token count used by deterministic backends: whitespace-separated words.
pub fn word_count(s: &str) -> u32 {
    s.split_whitespace().count() as u32
}
