//! The 23 trajectory-level features, extracted per bundle as a named,
//! partially defined vector.
//!
//! A feature whose precondition fails (no skill, a single attempt, too few
//! memos) is explicitly absent from the vector, never zero-filled. Features
//! whose formula ranges over consecutive pairs require at least two
//! elements. Lengths are character counts; token statistics share the
//! crate-wide word tokenizer.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::TrajectoryBundle;
use crate::textstats::{compensated_sum, entropy, jaccard, ngram_novelty};
use crate::tokenize::{tokenize, TokenizerConfig};

/// Feature grouping from the correlation analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    ExplorationDynamics,
    MemoQuality,
    SkillStructure,
    NonPredictive,
}

macro_rules! features {
    ($(($variant:ident, $id:literal, $group:ident)),+ $(,)?) => {
        /// Identifier of one of the 23 trajectory features.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum FeatureId {
            $($variant,)+
        }

        impl FeatureId {
            /// All feature ids in canonical (report column) order.
            pub const ALL: &'static [FeatureId] = &[$(FeatureId::$variant,)+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $(FeatureId::$variant => $id,)+
                }
            }

            pub fn group(&self) -> FeatureGroup {
                match self {
                    $(FeatureId::$variant => FeatureGroup::$group,)+
                }
            }
        }
    };
}

features![
    (CompressionRatio, "compression_ratio", ExplorationDynamics),
    (RewardVariance, "reward_variance", ExplorationDynamics),
    (FirstRetryRewardGain, "first_retry_reward_gain", ExplorationDynamics),
    (StrategyPivotCount, "strategy_pivot_count", ExplorationDynamics),
    (ErrorTypeShiftCount, "error_type_shift_count", ExplorationDynamics),
    (MemoLexicalEntropy, "memo_lexical_entropy", MemoQuality),
    (MemoLengthGrowthRate, "memo_length_growth_rate", MemoQuality),
    (NegationFactCount, "negation_fact_count", MemoQuality),
    (FinalVerifiedFactCount, "final_verified_fact_count", MemoQuality),
    (PerStepFactAccrual, "per_step_fact_accrual", MemoQuality),
    (ErrorDiagnosisSpecificity, "error_diagnosis_specificity", MemoQuality),
    (SkillSectionCount, "skill_section_count", SkillStructure),
    (SkillNumberedStepCount, "skill_numbered_step_count", SkillStructure),
    (SkillToCommandLengthRatio, "skill_to_command_length_ratio", SkillStructure),
    (SkillLexicalDensity, "skill_lexical_density", NonPredictive),
    (SkillCodeBlockRatio, "skill_code_block_ratio", NonPredictive),
    (FinalMemoPairSimilarity, "final_memo_pair_similarity", NonPredictive),
    (PerStep3GramNovelty, "per_step_3gram_novelty", NonPredictive),
    (CumulativeInfoGain, "cumulative_info_gain", NonPredictive),
    (TestStuckRatio, "test_stuck_ratio", NonPredictive),
    (MemoActionItemCount, "memo_action_item_count", NonPredictive),
    (SkillMemoOverlap, "skill_memo_overlap", NonPredictive),
    (SkillCmdOverlap, "skill_cmd_overlap", NonPredictive),
];

/// Jaccard threshold under which consecutive section texts count as a pivot.
pub const PIVOT_THRESHOLD: f64 = 0.15;

/// Extraction knobs that the feature definitions leave open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Keywords marking a Verified Facts item as a negation fact.
    pub negation_keywords: Vec<String>,
    pub tokenizer: TokenizerConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            negation_keywords: ["not", "never", "failed", "wrong"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            tokenizer: TokenizerConfig::default(),
        }
    }
}

/// A partially defined named feature vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    values: BTreeMap<FeatureId, f64>,
}

impl FeatureVector {
    pub fn get(&self, id: FeatureId) -> Option<f64> {
        self.values.get(&id).copied()
    }

    pub fn is_defined(&self, id: FeatureId) -> bool {
        self.values.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn set(&mut self, id: FeatureId, value: f64) {
        self.values.insert(id, value);
    }

    fn merge(&mut self, other: FeatureVector) {
        self.values.extend(other.values);
    }
}

fn chars_len(s: &str) -> usize {
    s.chars().count()
}

fn skill_source(bundle: &TrajectoryBundle) -> Option<String> {
    bundle.skill.as_ref().map(|s| s.source_text())
}

/// Compression ratio, reward variance, first-retry gain, and the pivot and
/// error-shift counts.
pub fn exploration_dynamics(bundle: &TrajectoryBundle, config: &FeatureConfig) -> FeatureVector {
    let mut out = FeatureVector::default();
    let tok = &config.tokenizer;

    if let Some(skill) = skill_source(bundle) {
        let skill_len = chars_len(&skill);
        if skill_len > 0 {
            let total_stdout: usize = bundle
                .attempts
                .iter()
                .map(|a| chars_len(&a.stdout_text))
                .sum();
            out.set(
                FeatureId::CompressionRatio,
                total_stdout as f64 / skill_len as f64,
            );
        }
    }

    let rewards: Vec<f64> = bundle.attempts.iter().map(|a| a.reward).collect();
    if rewards.len() >= 2 {
        let n = rewards.len() as f64;
        let mean = compensated_sum(rewards.iter().copied()) / n;
        let var = compensated_sum(rewards.iter().map(|&r| (r - mean) * (r - mean))) / n;
        out.set(FeatureId::RewardVariance, var);
        out.set(FeatureId::FirstRetryRewardGain, rewards[1] - rewards[0]);
    }

    let pivot_count = |texts: Vec<&str>| -> Option<f64> {
        if texts.len() < 2 {
            return None;
        }
        Some(
            texts
                .windows(2)
                .filter(|w| jaccard(w[0], w[1], tok) < PIVOT_THRESHOLD)
                .count() as f64,
        )
    };
    if let Some(v) = pivot_count(bundle.memos.iter().map(|m| m.next_strategy.as_str()).collect()) {
        out.set(FeatureId::StrategyPivotCount, v);
    }
    if let Some(v) = pivot_count(
        bundle
            .memos
            .iter()
            .map(|m| m.current_error_pattern.as_str())
            .collect(),
    ) {
        out.set(FeatureId::ErrorTypeShiftCount, v);
    }
    out
}

fn inline_code_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"`[^`]*`").unwrap())
}

fn path_like_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w[./]\w").unwrap())
}

/// Concrete-reference ratio of one error-pattern section: inline code spans
/// plus digit-bearing or path-like whitespace tokens, over the section's
/// whitespace token count. An empty section contributes zero.
fn specificity_of(section: &str) -> f64 {
    let total_words = section.split_whitespace().count();
    if total_words == 0 {
        return 0.0;
    }
    let code_spans = inline_code_re().find_iter(section).count();
    let stripped = inline_code_re().replace_all(section, " ");
    let concrete_tokens = stripped
        .split_whitespace()
        .filter(|t| t.chars().any(|c| c.is_ascii_digit()) || path_like_re().is_match(t))
        .count();
    (code_spans + concrete_tokens) as f64 / total_words as f64
}

/// Entropy, growth rate, negation/fact counts, accrual, and diagnosis
/// specificity over the memo history.
pub fn memo_quality(bundle: &TrajectoryBundle, config: &FeatureConfig) -> FeatureVector {
    let mut out = FeatureVector::default();
    let tok = &config.tokenizer;
    let memos = &bundle.memos;
    if memos.is_empty() {
        return out;
    }

    let entropies: Vec<f64> = memos.iter().map(|m| entropy(&m.raw_text, tok)).collect();
    out.set(
        FeatureId::MemoLexicalEntropy,
        compensated_sum(entropies.iter().copied()) / entropies.len() as f64,
    );

    if memos.len() >= 2 {
        let first = chars_len(&memos[0].raw_text);
        let last = chars_len(&memos[memos.len() - 1].raw_text);
        if first > 0 {
            out.set(
                FeatureId::MemoLengthGrowthRate,
                (last as f64 - first as f64) / first as f64,
            );
        }
    }

    let final_memo = &memos[memos.len() - 1];
    let keywords: Vec<String> = config
        .negation_keywords
        .iter()
        .map(|k| k.to_lowercase())
        .collect();
    let negations = final_memo
        .verified_facts
        .iter()
        .filter(|fact| {
            let tokens = tokenize(fact, tok);
            tokens.iter().any(|t| keywords.contains(t))
        })
        .count();
    out.set(FeatureId::NegationFactCount, negations as f64);
    out.set(
        FeatureId::FinalVerifiedFactCount,
        final_memo.verified_facts.len() as f64,
    );

    if memos.len() >= 2 {
        let counts: Vec<f64> = memos.iter().map(|m| m.verified_facts.len() as f64).collect();
        let increments: Vec<f64> = counts.windows(2).map(|w| w[1] - w[0]).collect();
        out.set(
            FeatureId::PerStepFactAccrual,
            compensated_sum(increments.iter().copied()) / increments.len() as f64,
        );
    }

    let ratios: Vec<f64> = memos
        .iter()
        .map(|m| specificity_of(&m.current_error_pattern))
        .collect();
    out.set(
        FeatureId::ErrorDiagnosisSpecificity,
        compensated_sum(ratios.iter().copied()) / ratios.len() as f64,
    );
    out
}

/// Heading count, numbered-step count, and the skill-to-command length
/// ratio.
pub fn skill_structure(bundle: &TrajectoryBundle, _config: &FeatureConfig) -> FeatureVector {
    let mut out = FeatureVector::default();
    let Some(skill) = &bundle.skill else {
        return out;
    };
    out.set(FeatureId::SkillSectionCount, skill.sections.len() as f64);
    out.set(
        FeatureId::SkillNumberedStepCount,
        skill.numbered_step_count as f64,
    );

    if let Some(attempt) = bundle.solved_attempt() {
        if !attempt.commands.is_empty() {
            let mean_len = attempt
                .commands
                .iter()
                .map(|c| chars_len(c) as f64)
                .sum::<f64>()
                / attempt.commands.len() as f64;
            if mean_len > 0.0 {
                out.set(
                    FeatureId::SkillToCommandLengthRatio,
                    chars_len(&skill.source_text()) as f64 / mean_len,
                );
            }
        }
    }
    out
}

fn is_bullet_line(line: &str) -> bool {
    let t = line.trim_start();
    if t.starts_with("- ") || t.starts_with("* ") {
        return true;
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return false;
    }
    let rest = &t[digits..];
    rest.starts_with(". ") || rest.starts_with(") ")
}

/// The negative-control block: lexical density, code ratio, memo pair
/// similarity, 3-gram novelty, info gain, test-stuck ratio, action items,
/// and the skill overlaps.
pub fn non_predictive_controls(
    bundle: &TrajectoryBundle,
    config: &FeatureConfig,
) -> FeatureVector {
    let mut out = FeatureVector::default();
    let tok = &config.tokenizer;
    let memos = &bundle.memos;

    if let Some(skill) = &bundle.skill {
        let source = skill.source_text();
        let tokens = tokenize(&source, tok);
        if !tokens.is_empty() {
            let unique: HashSet<&String> = tokens.iter().collect();
            out.set(
                FeatureId::SkillLexicalDensity,
                unique.len() as f64 / tokens.len() as f64,
            );
        }
        let source_len = chars_len(&source);
        if source_len > 0 {
            let fenced: usize = skill.code_blocks.iter().map(|b| chars_len(b)).sum();
            out.set(
                FeatureId::SkillCodeBlockRatio,
                fenced as f64 / source_len as f64,
            );
        }
        if let Some(last) = memos.last() {
            out.set(
                FeatureId::SkillMemoOverlap,
                jaccard(&source, &last.raw_text, tok),
            );
        }
        if let Some(attempt) = bundle.solved_attempt() {
            out.set(
                FeatureId::SkillCmdOverlap,
                jaccard(&source, &attempt.commands.join("\n"), tok),
            );
        }
    }

    if memos.len() >= 2 {
        out.set(
            FeatureId::FinalMemoPairSimilarity,
            jaccard(
                &memos[memos.len() - 2].raw_text,
                &memos[memos.len() - 1].raw_text,
                tok,
            ),
        );
        let novelties: Vec<f64> = memos
            .windows(2)
            .map(|w| ngram_novelty(&w[0].raw_text, &w[1].raw_text, 3, tok))
            .collect();
        let total = compensated_sum(novelties.iter().copied());
        out.set(
            FeatureId::PerStep3GramNovelty,
            total / novelties.len() as f64,
        );
        out.set(FeatureId::CumulativeInfoGain, total);
    }

    if bundle.attempts.len() >= 2 {
        let stuck = bundle
            .attempts
            .windows(2)
            .filter(|w| {
                let mut a = w[0].test_summary.clone();
                let mut b = w[1].test_summary.clone();
                a.sort_by(|x, y| (&x.name, x.passed).cmp(&(&y.name, y.passed)));
                b.sort_by(|x, y| (&x.name, x.passed).cmp(&(&y.name, y.passed)));
                a == b
            })
            .count();
        out.set(
            FeatureId::TestStuckRatio,
            stuck as f64 / (bundle.attempts.len() - 1) as f64,
        );
    }

    if !memos.is_empty() {
        let counts: Vec<f64> = memos
            .iter()
            .map(|m| m.raw_text.lines().filter(|l| is_bullet_line(l)).count() as f64)
            .collect();
        out.set(
            FeatureId::MemoActionItemCount,
            compensated_sum(counts.iter().copied()) / counts.len() as f64,
        );
    }
    out
}

/// Extract every defined feature for one bundle.
pub fn extract_features(bundle: &TrajectoryBundle, config: &FeatureConfig) -> FeatureVector {
    let mut out = exploration_dynamics(bundle, config);
    out.merge(memo_quality(bundle, config));
    out.merge(skill_structure(bundle, config));
    out.merge(non_predictive_controls(bundle, config));
    out
}
