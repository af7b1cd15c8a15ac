//! Trajectory-domain types shared by every other module.
//!
//! All types are immutable after construction and safe to share across
//! threads. Invariant checking lives in [`TrajectoryBundle::validate`]; the
//! bundle loader never hands out a partially valid bundle.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// One execution attempt: the commands issued, captured output, judged
/// reward, and per-test results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    /// 1-based attempt number.
    pub index: u32,
    /// Ordered commands issued by the agent during this attempt.
    pub commands: Vec<String>,
    /// Captured output. Non-UTF-8 capture bytes are escape-encoded so the
    /// original byte stream survives a save/load round trip losslessly
    /// (see [`crate::bundle::encode_stdout`]).
    pub stdout_text: String,
    /// Judged reward in [0, 1]; 1.0 means full completion.
    pub reward: f64,
    /// Per-test outcomes; names are unique within one attempt.
    pub test_summary: Vec<TestResult>,
    /// Wall-clock duration, when recorded.
    pub wall_time_sec: Option<f64>,
}

impl Attempt {
    /// Names of tests that failed in this attempt.
    pub fn failed_test_names(&self) -> Vec<String> {
        self.test_summary
            .iter()
            .filter(|t| !t.passed)
            .map(|t| t.name.clone())
            .collect()
    }

    /// Names of tests that passed in this attempt.
    pub fn passed_test_names(&self) -> Vec<String> {
        self.test_summary
            .iter()
            .filter(|t| t.passed)
            .map(|t| t.name.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub passed: bool,
}

/// Parsed five-section exploration memo. The memo is completely rewritten
/// after each failed attempt; `raw_text` preserves the verbatim source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Memo {
    /// Failed-attempt count parsed from the top heading, or the attempts-log
    /// length when the heading carries no count.
    pub attempt_count_header: u32,
    /// One-line summaries, one per attempt so far.
    pub attempts_log: Vec<String>,
    /// Key commands from the most recent attempt.
    pub commands: Vec<String>,
    /// Environment-confirmed outcomes, preserved across rewrites.
    pub verified_facts: Vec<String>,
    /// Description of the active failure mode.
    pub current_error_pattern: String,
    /// The actionable plan for the next attempt.
    pub next_strategy: String,
    /// Verbatim memo text as parsed.
    pub raw_text: String,
}

/// One heading-delimited region of a skill document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillSection {
    pub heading: String,
    pub level: u8,
    pub text: String,
}

/// A distilled skill document: frontmatter, body, and the structural
/// features the metrics consume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillDocument {
    /// Key/value pairs from the leading `---` frontmatter block.
    pub frontmatter: std::collections::BTreeMap<String, String>,
    /// Verbatim frontmatter block including delimiters; empty when absent.
    /// `frontmatter_text + body_text` reproduces the source exactly.
    pub frontmatter_text: String,
    /// Everything after the frontmatter block.
    pub body_text: String,
    /// Heading-delimited sections of the body (fence-aware).
    pub sections: Vec<SkillSection>,
    /// Contents of fenced ``` code blocks, in order.
    pub code_blocks: Vec<String>,
    /// Lines matching `^\s*\d+[.)]` outside code fences.
    pub numbered_step_count: usize,
}

impl SkillDocument {
    /// The full source text the document was parsed from.
    pub fn source_text(&self) -> String {
        format!("{}{}", self.frontmatter_text, self.body_text)
    }
}

/// Evaluation condition for a (model, task) reward record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    GeneratedSkill,
    HumanSkill,
}

impl Condition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::GeneratedSkill => "generated_skill",
            Condition::HumanSkill => "human_skill",
        }
    }
}

/// Reward obtained by a student model on a task under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub task_id: String,
    pub model_id: String,
    pub condition: Condition,
    pub reward: f64,
}

/// Derived trajectory mode: solved on the first attempt with no reflection
/// history, or iterative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    InteractionFree,
    Iterative,
}

/// One task's full exploration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBundle {
    pub task_id: String,
    /// Attempts in execution order, indices contiguous from 1.
    pub attempts: Vec<Attempt>,
    /// Memo `i` was produced after attempt `i` failed.
    pub memos: Vec<Memo>,
    /// The distilled skill, present when the trajectory produced one.
    pub skill: Option<SkillDocument>,
    /// 1-based index of the successful attempt, absent when unsolved.
    pub solved_at: Option<u32>,
    /// Student evaluation records attached to this task.
    pub evaluations: Vec<EvaluationRecord>,
}

impl TrajectoryBundle {
    /// Derived, never author-supplied: interaction-free iff the task was
    /// solved on attempt 1 with no reflection history.
    pub fn mode_label(&self) -> ModeLabel {
        if self.solved_at == Some(1) && self.memos.is_empty() {
            ModeLabel::InteractionFree
        } else {
            ModeLabel::Iterative
        }
    }

    /// The successful attempt, when one exists.
    pub fn solved_attempt(&self) -> Option<&Attempt> {
        self.solved_at
            .and_then(|k| self.attempts.get(k as usize - 1))
    }

    /// Check every structural invariant; returns the first violation found.
    pub fn validate(&self) -> Result<(), InvariantViolation> {
        for (i, a) in self.attempts.iter().enumerate() {
            if a.index != i as u32 + 1 {
                return Err(InvariantViolation::new(format!(
                    "attempt at position {} has index {}, expected {}",
                    i,
                    a.index,
                    i + 1
                )));
            }
            if !(0.0..=1.0).contains(&a.reward) {
                return Err(InvariantViolation::new(format!(
                    "attempt {} reward {} outside [0, 1]",
                    a.index, a.reward
                )));
            }
            if let Some(w) = a.wall_time_sec {
                if !(w >= 0.0) {
                    return Err(InvariantViolation::new(format!(
                        "attempt {} wall_time_sec {} is negative",
                        a.index, w
                    )));
                }
            }
            let mut seen = HashSet::new();
            for t in &a.test_summary {
                if !seen.insert(t.name.as_str()) {
                    return Err(InvariantViolation::new(format!(
                        "attempt {} has duplicate test name {:?}",
                        a.index, t.name
                    )));
                }
            }
        }
        if self.memos.len() > self.attempts.len() {
            return Err(InvariantViolation::new(format!(
                "{} memos exceed {} attempts",
                self.memos.len(),
                self.attempts.len()
            )));
        }
        if let Some(k) = self.solved_at {
            let attempt = self.attempts.get(k as usize - 1).ok_or_else(|| {
                InvariantViolation::new(format!(
                    "solved_at {} exceeds attempt count {}",
                    k,
                    self.attempts.len()
                ))
            })?;
            if attempt.reward < 1.0 {
                return Err(InvariantViolation::new(format!(
                    "solved_at {} but attempt reward is {}",
                    k, attempt.reward
                )));
            }
            if self.memos.len() >= k as usize {
                return Err(InvariantViolation::new(format!(
                    "memo exists for successful attempt {} ({} memos)",
                    k,
                    self.memos.len()
                )));
            }
        }
        let mut eval_keys = HashSet::new();
        for e in &self.evaluations {
            if !(0.0..=1.0).contains(&e.reward) {
                return Err(InvariantViolation::new(format!(
                    "evaluation ({}, {}) reward {} outside [0, 1]",
                    e.model_id,
                    e.condition.as_str(),
                    e.reward
                )));
            }
            if !eval_keys.insert((e.task_id.clone(), e.model_id.clone(), e.condition)) {
                return Err(InvariantViolation::new(format!(
                    "duplicate evaluation key ({}, {}, {})",
                    e.task_id,
                    e.model_id,
                    e.condition.as_str()
                )));
            }
        }
        Ok(())
    }
}

/// A structural invariant of the trajectory model does not hold.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invariant violation: {detail}")]
pub struct InvariantViolation {
    pub detail: String,
}

impl InvariantViolation {
    pub fn new(detail: impl Into<String>) -> Self {
        InvariantViolation {
            detail: detail.into(),
        }
    }
}
