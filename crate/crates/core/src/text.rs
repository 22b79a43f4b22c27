//! Code-point based string helpers.
//!
//! Every offset exchanged by this crate counts Unicode scalar values
//! (`char`s), which is also what SQuAD's `answer_start` counts.

/// A whitespace-delimited word located inside some text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Word {
    pub char_start: usize,
    pub char_end: usize,
    pub byte_start: usize,
    pub byte_end: usize,
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Byte offset of the `char_idx`-th character, or `s.len()` when
/// `char_idx == char_len(s)`.
pub fn byte_offset(s: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut seen = 0;
    for (byte, _) in s.char_indices() {
        if seen == char_idx {
            return Some(byte);
        }
        seen += 1;
    }
    (seen == char_idx).then_some(s.len())
}

/// The substring of `len` chars starting at char `start`.
pub fn char_slice(s: &str, start: usize, len: usize) -> Option<&str> {
    let from = byte_offset(s, start)?;
    let to = from + byte_offset(&s[from..], len)?;
    Some(&s[from..to])
}

/// True when `needle` occurs in `haystack` at char offset `start`.
pub fn is_verbatim_at(haystack: &str, needle: &str, start: usize) -> bool {
    match byte_offset(haystack, start) {
        Some(from) => haystack[from..].starts_with(needle),
        None => false,
    }
}

/// Char offset of the first occurrence of `needle` in `haystack`.
pub fn find_char_offset(haystack: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    haystack
        .find(needle)
        .map(|byte| haystack[..byte].chars().count())
}

pub fn words(s: &str) -> Vec<Word> {
    let mut out = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut char_idx = 0;
    for (byte, ch) in s.char_indices() {
        if ch.is_whitespace() {
            if let Some((cs, bs)) = current.take() {
                out.push(Word {
                    char_start: cs,
                    char_end: char_idx,
                    byte_start: bs,
                    byte_end: byte,
                });
            }
        } else if current.is_none() {
            current = Some((char_idx, byte));
        }
        char_idx += 1;
    }
    if let Some((cs, bs)) = current {
        out.push(Word {
            char_start: cs,
            char_end: char_idx,
            byte_start: bs,
            byte_end: s.len(),
        });
    }
    out
}

pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}
