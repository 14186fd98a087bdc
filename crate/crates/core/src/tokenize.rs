//! Pluggable tokenizers for lexical matching.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Tokenizer {
    /// Lower-cased runs of alphanumeric characters.
    #[default]
    Whitespace,
    /// Overlapping character n-grams over non-whitespace characters, for
    /// scripts without word delimiters.
    CharNgram { n: usize },
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        match *self {
            Tokenizer::Whitespace => words(text),
            Tokenizer::CharNgram { n } => char_ngrams(text, n.max(1)),
        }
    }
}

pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn char_ngrams(text: &str, n: usize) -> Vec<String> {
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace() && !c.is_ascii_punctuation()).collect();
    if chars.len() < n {
        return if chars.is_empty() { Vec::new() } else { vec![chars.iter().collect()] };
    }
    chars.windows(n).map(|w| w.iter().collect()).collect()
}
