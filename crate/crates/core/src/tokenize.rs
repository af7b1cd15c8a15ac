//! Word-level tokenization shared by every text statistic in the crate.
//!
//! The rule is deliberately simple and versioned: split on non-alphanumeric
//! boundaries, keep tokens of length >= 1, and (by default) lowercase. All
//! downstream numbers depend on this segmentation, so the active variant is
//! carried in report fingerprints.

use serde::{Deserialize, Serialize};

/// Configuration for the word tokenizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    /// Case-fold tokens to lowercase before counting.
    pub lowercase: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { lowercase: true }
    }
}

impl TokenizerConfig {
    /// Stable identifier of the tokenization rule, for report provenance.
    pub fn version(&self) -> &'static str {
        if self.lowercase {
            "word-v1"
        } else {
            "word-v1-cased"
        }
    }
}

/// Split `text` into word tokens: maximal runs of alphanumeric characters.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            if config.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// Word n-grams of `text`, each rendered as a single joined string.
///
/// The joiner is a control character that the tokenizer can never emit, so
/// distinct n-grams never collide.
pub fn ngrams(text: &str, n: usize, config: &TokenizerConfig) -> Vec<String> {
    let tokens = tokenize(text, config);
    if n == 0 || tokens.len() < n {
        return Vec::new();
    }
    tokens.windows(n).map(|w| w.join("\u{1f}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_non_alphanumeric() {
        let cfg = TokenizerConfig::default();
        assert_eq!(tokenize("a-b c_d", &cfg), vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn lowercases_by_default() {
        let cfg = TokenizerConfig::default();
        assert_eq!(tokenize("A a", &cfg), vec!["a", "a"]);
    }

    #[test]
    fn cased_variant_preserves_case() {
        let cfg = TokenizerConfig { lowercase: false };
        assert_eq!(tokenize("A a", &cfg), vec!["A", "a"]);
    }

    #[test]
    fn keeps_single_char_tokens_and_digits() {
        let cfg = TokenizerConfig::default();
        assert_eq!(tokenize("x 1 y2", &cfg), vec!["x", "1", "y2"]);
    }

    #[test]
    fn ngrams_short_input_empty() {
        let cfg = TokenizerConfig::default();
        assert!(ngrams("a b", 3, &cfg).is_empty());
        assert_eq!(ngrams("a b c d", 3, &cfg).len(), 2);
    }
}
