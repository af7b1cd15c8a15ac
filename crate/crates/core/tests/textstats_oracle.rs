//! High-precision oracle checks for the divergence kernel.
//!
//! The oracle recomputes smoothed probabilities, KL, and JSD with 256-bit
//! arbitrary-precision floats (independent of the crate's f64 path) and
//! compares the f64 results against the rounded oracle values.

use astro_float::{BigFloat, Consts, RoundingMode};
use pdi_core::textstats::{build_vocab, distribution, jsd, kl, similarity};
use pdi_core::tokenize::{tokenize, TokenizerConfig};
use std::collections::HashMap;

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

fn big(x: f64) -> BigFloat {
    BigFloat::from_f64(x, PREC)
}

fn to_f64(x: &BigFloat) -> f64 {
    format!("{}", x).parse::<f64>().expect("parses")
}

struct Oracle {
    consts: Consts,
}

impl Oracle {
    fn new() -> Oracle {
        Oracle {
            consts: Consts::new().expect("constants cache"),
        }
    }

    /// Smoothed probabilities (c(w) + alpha) / (total + alpha * |V|) over a
    /// fixed vocabulary, in arbitrary precision.
    fn probs(&mut self, segment: &str, vocab: &[String], alpha: f64) -> Vec<BigFloat> {
        let cfg = TokenizerConfig::default();
        let mut counts: HashMap<&str, u64> = HashMap::new();
        let tokens = tokenize(segment, &cfg);
        let in_vocab: Vec<&str> = tokens
            .iter()
            .map(String::as_str)
            .filter(|t| vocab.iter().any(|v| v == t))
            .collect();
        for t in &in_vocab {
            *counts.entry(t).or_insert(0) += 1;
        }
        let total = big(in_vocab.len() as f64);
        let alpha_big = big(alpha);
        let denom = total.add(&alpha_big.mul(&big(vocab.len() as f64), PREC, RM), PREC, RM);
        vocab
            .iter()
            .map(|w| {
                let c = big(*counts.get(w.as_str()).unwrap_or(&0) as f64);
                c.add(&alpha_big, PREC, RM).div(&denom, PREC, RM)
            })
            .collect()
    }

    fn kl_bits(&mut self, p: &[BigFloat], q: &[BigFloat]) -> BigFloat {
        let mut acc = big(0.0);
        for (pi, qi) in p.iter().zip(q) {
            let ratio = pi.div(qi, PREC, RM);
            let term = pi.mul(&ratio.log2(PREC, RM, &mut self.consts), PREC, RM);
            acc = acc.add(&term, PREC, RM);
        }
        acc
    }

    fn jsd_bits(&mut self, p: &[BigFloat], q: &[BigFloat]) -> BigFloat {
        let half = big(0.5);
        let mid: Vec<BigFloat> = p
            .iter()
            .zip(q)
            .map(|(pi, qi)| pi.add(qi, PREC, RM).mul(&half, PREC, RM))
            .collect();
        let left = self.kl_bits(p, &mid);
        let right = self.kl_bits(q, &mid);
        left.mul(&half, PREC, RM).add(&right.mul(&half, PREC, RM), PREC, RM)
    }
}

#[test]
fn distribution_matches_oracle_at_paper_alpha() {
    // A 50-token fixture with a skewed count profile at alpha = 0.002.
    let cfg = TokenizerConfig::default();
    let counts: [usize; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 5];
    let words: Vec<String> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat(format!("w{i}")).take(c))
        .collect();
    let segment = words.join(" ");
    assert_eq!(tokenize(&segment, &cfg).len(), 50);

    let vocab = build_vocab(&[&segment], &cfg).unwrap();
    let dist = distribution(&segment, &vocab, 0.002, &cfg).unwrap();

    let mut oracle = Oracle::new();
    let expected = oracle.probs(&segment, vocab.tokens(), 0.002);
    for (got, want) in dist.probs().iter().zip(&expected) {
        assert!((got - to_f64(want)).abs() < 1e-12);
    }
}

#[test]
fn kl_matches_oracle_on_three_token_pair() {
    let cfg = TokenizerConfig::default();
    let a = "alpha alpha beta";
    let b = "beta gamma gamma gamma";
    let vocab = build_vocab(&[a, b], &cfg).unwrap();
    let alpha = 0.002;
    let p = distribution(a, &vocab, alpha, &cfg).unwrap();
    let q = distribution(b, &vocab, alpha, &cfg).unwrap();

    let mut oracle = Oracle::new();
    let pb = oracle.probs(a, vocab.tokens(), alpha);
    let qb = oracle.probs(b, vocab.tokens(), alpha);
    let expected = to_f64(&oracle.kl_bits(&pb, &qb));
    let got = kl(&p, &q).unwrap();
    assert!((got - expected).abs() < 1e-12, "kl {got} vs {expected}");
    assert!(got >= 0.0);
}

#[test]
fn jsd_matches_oracle_on_mixed_segments() {
    let cfg = TokenizerConfig::default();
    let cases = [
        ("the quick brown fox", "the slow brown turtle", 0.002),
        ("a a a b", "b c c c", 0.5),
        ("x y z", "x y z", 0.002),
        ("one two three four five", "five six seven", 1e-6),
    ];
    let mut oracle = Oracle::new();
    for (a, b, alpha) in cases {
        let vocab = build_vocab(&[a, b], &cfg).unwrap();
        let p = distribution(a, &vocab, alpha, &cfg).unwrap();
        let q = distribution(b, &vocab, alpha, &cfg).unwrap();
        let got = jsd(&p, &q).unwrap();
        let pb = oracle.probs(a, vocab.tokens(), alpha);
        let qb = oracle.probs(b, vocab.tokens(), alpha);
        let expected = to_f64(&oracle.jsd_bits(&pb, &qb));
        assert!(
            (got - expected).abs() < 1e-12,
            "jsd({a:?}, {b:?}) = {got}, oracle {expected}"
        );
        assert_eq!(similarity(&p, &q).unwrap(), 1.0 - got);
    }
}

#[test]
fn near_disjoint_segments_reach_the_bound() {
    let cfg = TokenizerConfig::default();
    let vocab = build_vocab(&["a", "b"], &cfg).unwrap();
    let p = distribution("a", &vocab, 1e-9, &cfg).unwrap();
    let q = distribution("b", &vocab, 1e-9, &cfg).unwrap();
    let got = jsd(&p, &q).unwrap();

    let mut oracle = Oracle::new();
    let pb = oracle.probs("a", vocab.tokens(), 1e-9);
    let qb = oracle.probs("b", vocab.tokens(), 1e-9);
    let expected = to_f64(&oracle.jsd_bits(&pb, &qb));
    assert!((got - expected).abs() < 1e-12);
    assert!((got - 1.0).abs() < 1e-6);
    assert!(similarity(&p, &q).unwrap() < 1e-6);
}
