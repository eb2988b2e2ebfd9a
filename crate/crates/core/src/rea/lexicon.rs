//! Fixed anomaly cue keywords and negation patterns.
//!
//! The two lists are dataset-agnostic and never swapped per dataset: cue
//! keywords activate semantic anomaly evidence, negation patterns suppress
//! false positives. Cue phrases match as contiguous word sequences,
//! case-insensitive, with punctuation acting as a word boundary; negations
//! are word-boundary regexes. Both counters report the number of *distinct*
//! entries that fire at least once.

use std::sync::OnceLock;

use regex::RegexBuilder;
use thiserror::Error;

pub const CUE_KEYWORDS: [&str; 39] = [
    "fight",
    "fighting",
    "assault",
    "attack",
    "hit",
    "punch",
    "kick",
    "stab",
    "shoot",
    "gun",
    "weapon",
    "rob",
    "robbery",
    "steal",
    "stealing",
    "theft",
    "burglary",
    "break in",
    "breaking",
    "vandal",
    "vandalism",
    "arson",
    "fire",
    "explosion",
    "explode",
    "crash",
    "collision",
    "accident",
    "chase",
    "chasing",
    "running",
    "panic",
    "scream",
    "blood",
    "knife",
    "climbing over a fence",
    "climb over a fence",
    "trespass",
    "trespassing",
];

pub const NEGATION_PATTERNS: [&str; 5] = [
    r"\bno anomaly\b",
    r"\bthere is no anomaly\b",
    r"\bno unusual\b",
    r"\bno (visible )?damage\b",
    r"\bno (unusual|abnormal) (movement|events)\b",
];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("negation pattern {index} ({pattern:?}) failed to compile: {source}")]
    BadPattern {
        index: usize,
        pattern: String,
        source: regex::Error,
    },
    #[error("cue phrase {index} is empty")]
    EmptyCue { index: usize },
}

#[derive(Debug)]
pub struct Lexicon {
    cue_phrases: Vec<String>,
    cue_tokens: Vec<Vec<String>>,
    negation_sources: Vec<String>,
    negations: Vec<regex::Regex>,
}

impl Lexicon {
    /// Builds a lexicon from raw phrase and pattern lists, compiling the
    /// negation regexes case-insensitively. Pattern compilation failures are
    /// configuration errors surfaced at load time.
    pub fn new<S: AsRef<str>>(cues: &[S], negations: &[S]) -> Result<Self, LexiconError> {
        let mut cue_phrases = Vec::with_capacity(cues.len());
        let mut cue_tokens = Vec::with_capacity(cues.len());
        for (index, cue) in cues.iter().enumerate() {
            let tokens = tokenize(cue.as_ref());
            if tokens.is_empty() {
                return Err(LexiconError::EmptyCue { index });
            }
            cue_phrases.push(cue.as_ref().to_string());
            cue_tokens.push(tokens);
        }
        let mut negation_sources = Vec::with_capacity(negations.len());
        let mut compiled = Vec::with_capacity(negations.len());
        for (index, pattern) in negations.iter().enumerate() {
            let regex = RegexBuilder::new(pattern.as_ref())
                .case_insensitive(true)
                .build()
                .map_err(|source| LexiconError::BadPattern {
                    index,
                    pattern: pattern.as_ref().to_string(),
                    source,
                })?;
            negation_sources.push(pattern.as_ref().to_string());
            compiled.push(regex);
        }
        Ok(Self {
            cue_phrases,
            cue_tokens,
            negation_sources,
            negations: compiled,
        })
    }

    /// The fixed lexicon used everywhere in the engine.
    pub fn fixed() -> &'static Lexicon {
        static FIXED: OnceLock<Lexicon> = OnceLock::new();
        FIXED.get_or_init(|| {
            Lexicon::new(&CUE_KEYWORDS, &NEGATION_PATTERNS)
                .expect("built-in lexicon compiles")
        })
    }

    pub fn cue_phrases(&self) -> &[String] {
        &self.cue_phrases
    }

    pub fn negation_sources(&self) -> &[String] {
        &self.negation_sources
    }

    /// Number of distinct cue phrases present in `text`. Multi-word phrases
    /// must appear as contiguous word sequences.
    pub fn count_cues(&self, text: &str) -> usize {
        let words = tokenize(text);
        self.cue_tokens
            .iter()
            .filter(|phrase| contains_subsequence(&words, phrase))
            .count()
    }

    /// Number of distinct negation patterns that fire at least once in `text`.
    pub fn count_negations(&self, text: &str) -> usize {
        self.negations.iter().filter(|re| re.is_match(text)).count()
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

fn contains_subsequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || haystack.len() < needle.len() {
        return false;
    }
    haystack
        .windows(needle.len())
        .any(|window| window == needle)
}
