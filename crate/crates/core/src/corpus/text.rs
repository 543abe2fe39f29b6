//! Sentence segmentation and term normalization.

use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

/// Tokenizer settings shared by ingestion, query construction and feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub remove_stopwords: bool,
    pub stem: bool,
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "vs", "etc", "inc", "ltd", "co",
    "corp", "dept", "gen", "gov", "sen", "rep", "col", "lt", "sgt", "capt", "cmdr", "adm", "rev",
    "hon", "pres", "no", "vol", "fig", "approx", "est", "jan", "feb", "mar", "apr", "jun", "jul",
    "aug", "sep", "sept", "oct", "nov", "dec", "u.s", "u.k", "u.n", "e.g", "i.e", "a.m", "p.m",
];

const STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | '”' | '’' | ')' | ']' | '»')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '“' | '‘' | '(' | '[' | '«')
}

fn is_abbreviation(text: &str, dot: usize) -> bool {
    let word = text[..dot]
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Splits `text` into sentences.
///
/// A boundary is a run of `.`, `?` or `!` (plus any closing quotes or
/// brackets) followed by whitespace and then an uppercase letter, a digit or
/// an opening quote. A lone `.` after a known abbreviation is not a boundary.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    let push = |from: usize, to: usize, out: &mut Vec<String>| {
        let s = text[from..to].trim();
        if !s.is_empty() {
            out.push(s.to_string());
        }
    };

    while i < chars.len() {
        let (pos, c) = chars[i];
        if !matches!(c, '.' | '?' | '!') {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < chars.len() && matches!(chars[i].1, '.' | '?' | '!') {
            i += 1;
        }
        let single_dot = i - run_start == 1 && c == '.';
        while i < chars.len() && is_closing(chars[i].1) {
            i += 1;
        }
        let end = chars.get(i).map_or(text.len(), |&(p, _)| p);

        let mut j = i;
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        let boundary = if j == chars.len() {
            true
        } else if j == i {
            false
        } else {
            let next = chars[j].1;
            next.is_uppercase() || next.is_numeric() || is_opening(next)
        };
        if boundary && !(single_dot && is_abbreviation(text, pos)) {
            push(start, end, &mut sentences);
            start = end;
        }
    }
    push(start, text.len(), &mut sentences);
    sentences
}

// Combining marks and joiners stay inside a term.
fn is_word_joiner(c: char) -> bool {
    matches!(c as u32,
        0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F
        | 0x200C | 0x200D)
}

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

pub fn is_stopword(term: &str) -> bool {
    STOPWORDS.binary_search(&term).is_ok()
}

/// Lowercased terms on Unicode word boundaries. Punctuation inside a word
/// (apostrophes, periods in acronyms and numbers) splits it.
pub fn tokenize(text: &str, config: &IngestConfig) -> Vec<String> {
    let mut terms = Vec::new();
    for word in text.unicode_words() {
        for piece in word.split(|c: char| !(c.is_alphanumeric() || is_word_joiner(c))) {
            if piece.is_empty() {
                continue;
            }
            let term = piece.to_lowercase();
            if config.remove_stopwords && is_stopword(&term) {
                continue;
            }
            if config.stem {
                terms.push(stemmer().stem(&term).into_owned());
            } else {
                terms.push(term);
            }
        }
    }
    terms
}

/// Normalizes a multi-word phrase into one term, joining tokens with `_`.
pub fn normalize_phrase(text: &str, config: &IngestConfig) -> Option<String> {
    let tokens = tokenize(
        text,
        &IngestConfig {
            remove_stopwords: false,
            ..*config
        },
    );
    if tokens.is_empty() {
        None
    } else {
        Some(tokens.join("_"))
    }
}
