//! Token distributions, divergences, and lexical statistics.
//!
//! This is the numeric kernel under the distillation index and the feature
//! extractor. All logarithms are base 2, so the Jensen–Shannon divergence of
//! two distributions lies in [0, 1] and `similarity = 1 - jsd` is a bounded
//! similarity. Sums accumulate with Neumaier compensation so that results
//! reproduce to 1e-12 across refactors.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::tokenize::{ngrams, tokenize, TokenizerConfig};

#[derive(Debug, Error)]
pub enum TextStatsError {
    #[error("empty corpus: no tokens survive tokenization")]
    EmptyCorpus,
    #[error("smoothing constant must be > 0, got {0}")]
    NonPositiveAlpha(f64),
    #[error("distributions are defined over different vocabularies")]
    VocabMismatch,
}

/// Compensated (Neumaier) summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A fixed, lexicographically ordered token vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from pre-tokenized segments. The union is deduplicated and
    /// ordered lexicographically.
    pub fn from_token_segments<S: AsRef<str>>(
        segments: &[Vec<S>],
    ) -> Result<Arc<Vocabulary>, TextStatsError> {
        let set: BTreeSet<&str> = segments
            .iter()
            .flat_map(|seg| seg.iter().map(|t| t.as_ref()))
            .collect();
        if set.is_empty() {
            return Err(TextStatsError::EmptyCorpus);
        }
        let tokens: Vec<String> = set.into_iter().map(str::to_string).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Arc::new(Vocabulary { tokens, index }))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

/// Union vocabulary of word-tokenized text segments.
pub fn build_vocab(
    segments: &[&str],
    config: &TokenizerConfig,
) -> Result<Arc<Vocabulary>, TextStatsError> {
    let tokenized: Vec<Vec<String>> = segments.iter().map(|s| tokenize(s, config)).collect();
    Vocabulary::from_token_segments(&tokenized)
}

/// Additively smoothed empirical token-frequency distribution over a fixed
/// vocabulary: `P(w) = (c(w) + alpha) / (sum_v c(v) + alpha * |V|)`.
///
/// Every entry is strictly positive, so divergences are always finite. An
/// empty segment yields the uniform distribution.
#[derive(Debug, Clone)]
pub struct TokenDistribution {
    vocab: Arc<Vocabulary>,
    probs: Vec<f64>,
    alpha: f64,
    total_raw_count: u64,
}

impl TokenDistribution {
    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn total_raw_count(&self) -> u64 {
        self.total_raw_count
    }

    fn same_vocab(&self, other: &TokenDistribution) -> bool {
        Arc::ptr_eq(&self.vocab, &other.vocab) || self.vocab == other.vocab
    }
}

/// Smoothed distribution of pre-tokenized input. Tokens outside the
/// vocabulary are ignored.
pub fn distribution_from_tokens<S: AsRef<str>>(
    tokens: &[S],
    vocab: &Arc<Vocabulary>,
    alpha: f64,
) -> Result<TokenDistribution, TextStatsError> {
    if !(alpha > 0.0) {
        return Err(TextStatsError::NonPositiveAlpha(alpha));
    }
    let mut counts = vec![0u64; vocab.size()];
    let mut total = 0u64;
    for t in tokens {
        if let Some(i) = vocab.index_of(t.as_ref()) {
            counts[i] += 1;
            total += 1;
        }
    }
    let denom = total as f64 + alpha * vocab.size() as f64;
    let probs = counts.iter().map(|&c| (c as f64 + alpha) / denom).collect();
    Ok(TokenDistribution {
        vocab: Arc::clone(vocab),
        probs,
        alpha,
        total_raw_count: total,
    })
}

/// Smoothed distribution of a word-tokenized text segment.
pub fn distribution(
    segment: &str,
    vocab: &Arc<Vocabulary>,
    alpha: f64,
    config: &TokenizerConfig,
) -> Result<TokenDistribution, TextStatsError> {
    let tokens = tokenize(segment, config);
    distribution_from_tokens(&tokens, vocab, alpha)
}

/// Kullback–Leibler divergence `KL(p || q)` in bits.
pub fn kl(p: &TokenDistribution, q: &TokenDistribution) -> Result<f64, TextStatsError> {
    if !p.same_vocab(q) {
        return Err(TextStatsError::VocabMismatch);
    }
    Ok(compensated_sum(
        p.probs
            .iter()
            .zip(&q.probs)
            .map(|(&pi, &qi)| pi * (pi / qi).log2()),
    ))
}

/// Jensen–Shannon divergence under base-2 logarithms; bounded in [0, 1] and
/// symmetric in its arguments.
pub fn jsd(p: &TokenDistribution, q: &TokenDistribution) -> Result<f64, TextStatsError> {
    if !p.same_vocab(q) {
        return Err(TextStatsError::VocabMismatch);
    }
    let kl_to_mid = |a: &[f64], b: &[f64]| {
        compensated_sum(a.iter().zip(b).map(|(&ai, &bi)| {
            let m = 0.5 * (ai + bi);
            ai * (ai / m).log2()
        }))
    };
    Ok(0.5 * kl_to_mid(&p.probs, &q.probs) + 0.5 * kl_to_mid(&q.probs, &p.probs))
}

/// Distributional similarity `psi = 1 - jsd`, in [0, 1].
pub fn similarity(p: &TokenDistribution, q: &TokenDistribution) -> Result<f64, TextStatsError> {
    Ok(1.0 - jsd(p, q)?)
}

/// Set-based Jaccard similarity over word tokens.
///
/// Two empty token sets are defined as maximally similar (1.0) so that
/// convergence trends over degenerate memos stay well-defined.
pub fn jaccard(a: &str, b: &str, config: &TokenizerConfig) -> f64 {
    let set_a: HashSet<String> = tokenize(a, config).into_iter().collect();
    let set_b: HashSet<String> = tokenize(b, config).into_iter().collect();
    jaccard_sets(&set_a, &set_b)
}

/// Jaccard similarity of two pre-built token sets. Both empty = 1.0.
pub fn jaccard_sets(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Shannon entropy (bits) of the raw, unsmoothed word-frequency distribution.
/// Empty input has zero entropy.
pub fn entropy(segment: &str, config: &TokenizerConfig) -> f64 {
    let tokens = tokenize(segment, config);
    if tokens.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for t in tokens {
        *counts.entry(t).or_insert(0) += 1;
    }
    let n = compensated_sum(counts.values().map(|&c| c as f64));
    -compensated_sum(counts.values().map(|&c| {
        let p = c as f64 / n;
        p * p.log2()
    }))
}

/// Fraction of `curr`'s distinct word n-grams that do not occur in `prev`.
/// If `curr` has no n-grams the novelty is 0.
pub fn ngram_novelty(prev: &str, curr: &str, n: usize, config: &TokenizerConfig) -> f64 {
    let curr_grams: HashSet<String> = ngrams(curr, n, config).into_iter().collect();
    if curr_grams.is_empty() {
        return 0.0;
    }
    let prev_grams: HashSet<String> = ngrams(prev, n, config).into_iter().collect();
    let new = curr_grams.iter().filter(|g| !prev_grams.contains(*g)).count();
    new as f64 / curr_grams.len() as f64
}
