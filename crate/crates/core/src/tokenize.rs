//! Canonical tokenizer shared by the language model and the spotter.
//!
//! A token is either a maximal run of word characters (letters, digits and
//! combining marks) or a single other non-whitespace character. Whitespace
//! separates tokens and is never part of one. Case is preserved.

use std::ops::Range;

/// Bumped whenever token boundaries change; stored in language-model files.
pub const TOKENIZER_VERSION: u32 = 1;

fn is_combining_mark(c: char) -> bool {
    matches!(c as u32,
        0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F)
}

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Byte ranges of the tokens of `text`, in order.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            if word_start.is_none() {
                word_start = Some(i);
            }
            continue;
        }
        if let Some(s) = word_start.take() {
            spans.push(s..i);
        }
        if !c.is_whitespace() {
            spans.push(i..i + c.len_utf8());
        }
    }
    if let Some(s) = word_start {
        spans.push(s..text.len());
    }
    spans
}

pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
    token_spans(text).into_iter().map(move |r| &text[r])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_whitespace_and_punctuation() {
        let toks: Vec<_> = tokens("Apple Inc. (Cupertino)").collect();
        assert_eq!(toks, ["Apple", "Inc", ".", "(", "Cupertino", ")"]);
    }

    #[test]
    fn keeps_case_and_unicode_words() {
        let toks: Vec<_> = tokens("Zürich  Straße-Ωmega 東京").collect();
        assert_eq!(toks, ["Zürich", "Straße", "-", "Ωmega", "東京"]);
    }

    #[test]
    fn combining_marks_stay_in_the_word() {
        let s = "Cafe\u{301} noir";
        let toks: Vec<_> = tokens(s).collect();
        assert_eq!(toks, ["Cafe\u{301}", "noir"]);
    }

    #[test]
    fn empty_and_blank() {
        assert!(token_spans("").is_empty());
        assert!(token_spans(" \t\n").is_empty());
    }
}
