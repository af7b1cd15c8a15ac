//! Cohort and multi-model statistics: skill gain, agreement, pass-gain,
//! quadrants, convergence classification, the facts–strategy gap, and the
//! nonparametric tests (Spearman, Mann–Whitney) everything is reported with.
//!
//! Exactness policy: Spearman p-values are computed by full permutation
//! enumeration for n <= 12 and by the t approximation beyond; Mann–Whitney
//! p-values by full assignment enumeration for n_a + n_b <= 16 and by the
//! tie- and continuity-corrected normal approximation beyond. The switch
//! points are fixed constants recorded in report metadata.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::model::{Condition, EvaluationRecord, Memo, ModeLabel, TrajectoryBundle};
use crate::textstats::{
    build_vocab, compensated_sum, distribution, jaccard, similarity, TextStatsError,
};
use crate::tokenize::TokenizerConfig;

/// Largest n for which the Spearman p-value is exact (full n! enumeration).
pub const SPEARMAN_EXACT_MAX_N: usize = 12;
/// Largest n_a + n_b for which the Mann–Whitney p-value is exact.
pub const MANN_WHITNEY_EXACT_MAX_N: usize = 16;

const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("no evaluation record for model {model_id:?}, task {task_id:?}, condition {condition}")]
    MissingRecord {
        model_id: String,
        task_id: String,
        condition: &'static str,
    },
    #[error("no tasks available for the requested aggregate")]
    EmptyCohort,
    #[error("no eligible tasks: agreement requires both models to fail the baseline")]
    EmptyEligibleSet,
    #[error("group has no baseline-unsolved tasks")]
    EmptyGroup,
    #[error("need at least {needed} memos, got {got}")]
    InsufficientMemos { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error(transparent)]
    Text(#[from] TextStatsError),
}

// ---------------------------------------------------------------------------
// Rank helpers
// ---------------------------------------------------------------------------

/// 1-based ranks with ties broken by averaging.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn check_finite(values: &[f64], what: &str) -> Result<(), CohortError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CohortError::DegenerateInput(format!(
            "{what} contains a non-finite value"
        )));
    }
    Ok(())
}

fn all_equal(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

// ---------------------------------------------------------------------------
// Spearman
// ---------------------------------------------------------------------------

/// Spearman rank correlation coefficient only (no p-value). Defined for
/// n >= 2; errors when either vector is constant.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, CohortError> {
    if x.len() != y.len() {
        return Err(CohortError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(CohortError::DegenerateInput(
            "need at least 2 observations".into(),
        ));
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    if all_equal(x) || all_equal(y) {
        return Err(CohortError::DegenerateInput(
            "a vector with all equal values has no ranks".into(),
        ));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    Ok(pearson_on_ranks(&rx, &ry))
}

fn pearson_on_ranks(rx: &[f64], ry: &[f64]) -> f64 {
    let n = rx.len() as f64;
    // The mean rank is (n + 1) / 2 regardless of ties.
    let m = (n + 1.0) / 2.0;
    let cov = compensated_sum(rx.iter().zip(ry).map(|(&a, &b)| (a - m) * (b - m)));
    let vx = compensated_sum(rx.iter().map(|&a| (a - m) * (a - m)));
    let vy = compensated_sum(ry.iter().map(|&b| (b - m) * (b - m)));
    cov / (vx.sqrt() * vy.sqrt())
}

/// Spearman correlation with a two-sided p-value.
///
/// Requires n >= 3 and at least two distinct values per vector. The p-value
/// is exact (full permutation enumeration, tie-aware) for
/// n <= [`SPEARMAN_EXACT_MAX_N`], and uses the t approximation with n - 2
/// degrees of freedom beyond.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64), CohortError> {
    if x.len() != y.len() {
        return Err(CohortError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(CohortError::DegenerateInput(
            "need at least 3 observations for a p-value".into(),
        ));
    }
    let rho = spearman_rho(x, y)?;
    let n = x.len();
    let p = if n <= SPEARMAN_EXACT_MAX_N {
        let rx = average_ranks(x);
        let ry = average_ranks(y);
        exact_spearman_p(&rx, &ry)
    } else {
        let nf = n as f64;
        let denom = 1.0 - rho * rho;
        if denom <= 0.0 {
            0.0
        } else {
            let t = rho * ((nf - 2.0) / denom).sqrt();
            let dist = StudentsT::new(0.0, 1.0, nf - 2.0).expect("valid dof");
            (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0)
        }
    };
    Ok((rho, p))
}

/// Two-sided exact permutation p-value for Spearman's statistic.
///
/// Uses Heap's algorithm with an O(1) incremental update of the rank
/// product sum per transposition. Ranks are quarter-integers, so the
/// running statistic stays exact in f64 across all n! permutations.
fn exact_spearman_p(rx: &[f64], ry: &[f64]) -> f64 {
    let n = rx.len();
    let sum_rx = compensated_sum(rx.iter().copied());
    let sum_ry = compensated_sum(ry.iter().copied());
    let mu = sum_rx * sum_ry / n as f64;
    let s_obs: f64 = rx.iter().zip(ry).map(|(&a, &b)| a * b).sum();
    let target = (s_obs - mu).abs() - TIE_EPS;

    let mut perm: Vec<f64> = ry.to_vec();
    let mut s: f64 = rx.iter().zip(&perm).map(|(&a, &b)| a * b).sum();
    let mut count: u64 = u64::from((s - mu).abs() >= target);
    let mut total: u64 = 1;

    let mut c = vec![0usize; n];
    let mut i = 0usize;
    while i < n {
        if c[i] < i {
            let a = if i % 2 == 0 { 0 } else { c[i] };
            s += (rx[a] - rx[i]) * (perm[i] - perm[a]);
            perm.swap(a, i);
            total += 1;
            if (s - mu).abs() >= target {
                count += 1;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    count as f64 / total as f64
}

// ---------------------------------------------------------------------------
// Mann–Whitney U
// ---------------------------------------------------------------------------

/// Mann–Whitney U statistic (for group `a`) and two-sided p-value.
///
/// Exact enumeration over all C(n_a + n_b, n_a) group assignments when the
/// pooled size is at most [`MANN_WHITNEY_EXACT_MAX_N`]; tie- and
/// continuity-corrected normal approximation beyond.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<(f64, f64), CohortError> {
    if a.is_empty() || b.is_empty() {
        return Err(CohortError::EmptyGroup);
    }
    check_finite(a, "a")?;
    check_finite(b, "b")?;
    let na = a.len();
    let nb = b.len();
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let ranks = average_ranks(&pooled);
    let r_a: f64 = compensated_sum(ranks[..na].iter().copied());
    let u_a = r_a - (na * (na + 1)) as f64 / 2.0;
    let mu = (na * nb) as f64 / 2.0;

    let p = if n <= MANN_WHITNEY_EXACT_MAX_N {
        let target = (u_a - mu).abs() - TIE_EPS;
        let offset = (na * (na + 1)) as f64 / 2.0;
        let mut count: u64 = 0;
        let mut total: u64 = 0;
        for mask in 0u32..(1u32 << n) {
            if mask.count_ones() as usize != na {
                continue;
            }
            total += 1;
            let mut rsum = 0.0f64;
            let mut m = mask;
            while m != 0 {
                let i = m.trailing_zeros() as usize;
                rsum += ranks[i];
                m &= m - 1;
            }
            let u = rsum - offset;
            if (u - mu).abs() >= target {
                count += 1;
            }
        }
        count as f64 / total as f64
    } else {
        // Tie correction over pooled value groups.
        let mut sorted = pooled.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut tie_term = 0.0f64;
        let mut i = 0usize;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let nf = n as f64;
        let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let z = ((u_a - mu).abs() - 0.5).max(0.0) / var.sqrt();
            let dist = Normal::new(0.0, 1.0).expect("unit normal");
            (2.0 * (1.0 - dist.cdf(z))).min(1.0)
        }
    };
    Ok((u_a, p))
}

// ---------------------------------------------------------------------------
// Linear trend / convergence classification
// ---------------------------------------------------------------------------

/// Least-squares line fit over (x, y) points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub intercept: f64,
    pub slope: f64,
    pub n_points: usize,
}

/// Closed-form OLS on centered coordinates.
pub fn ols_fit(points: &[(f64, f64)]) -> Result<TrendFit, CohortError> {
    if points.len() < 2 {
        return Err(CohortError::DegenerateInput(
            "need at least 2 points for a line".into(),
        ));
    }
    let n = points.len() as f64;
    let mean_x = compensated_sum(points.iter().map(|p| p.0)) / n;
    let mean_y = compensated_sum(points.iter().map(|p| p.1)) / n;
    let sxx = compensated_sum(points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)));
    if sxx == 0.0 {
        return Err(CohortError::DegenerateInput(
            "all x values equal; slope undefined".into(),
        ));
    }
    let sxy = compensated_sum(points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)));
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    Ok(TrendFit {
        intercept,
        slope,
        n_points: points.len(),
    })
}

/// Trajectory classification by the sign of the fitted Jaccard trend slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExplorationMode {
    /// Successive memos grow more similar (slope > 0).
    Convergent,
    /// Memos grow less similar, or the trend is flat (slope <= 0).
    Divergent,
}

impl ExplorationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExplorationMode::Convergent => "convergent",
            ExplorationMode::Divergent => "divergent",
        }
    }
}

/// Successive-memo Jaccard similarities J_i for i = 2..=K, paired with the
/// memo index i.
pub fn memo_jaccard_series(memos: &[Memo], config: &TokenizerConfig) -> Vec<(f64, f64)> {
    memos
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            (
                (i + 2) as f64,
                jaccard(&w[0].raw_text, &w[1].raw_text, config),
            )
        })
        .collect()
}

/// Fit a linear trend to successive-memo similarity and classify the
/// trajectory as convergent (slope > 0) or divergent (slope <= 0).
/// Requires at least 3 memos (2 similarity points).
pub fn classify_trajectory(
    memos: &[Memo],
    config: &TokenizerConfig,
) -> Result<(TrendFit, ExplorationMode), CohortError> {
    if memos.len() < 3 {
        return Err(CohortError::InsufficientMemos {
            needed: 3,
            got: memos.len(),
        });
    }
    let series = memo_jaccard_series(memos, config);
    let fit = ols_fit(&series)?;
    let mode = if fit.slope > 0.0 {
        ExplorationMode::Convergent
    } else {
        ExplorationMode::Divergent
    };
    Ok((fit, mode))
}

/// Stability of Verified Facts minus stability of Next Strategy across
/// consecutive memos, measured by the same smoothed distributional
/// similarity the distillation index uses. Large values indicate
/// pseudo-exploration: strategies churn while task understanding stalls.
pub fn facts_strategy_gap(
    memos: &[Memo],
    alpha: f64,
    config: &TokenizerConfig,
) -> Result<f64, CohortError> {
    if memos.len() < 2 {
        return Err(CohortError::InsufficientMemos {
            needed: 2,
            got: memos.len(),
        });
    }
    let facts: Vec<String> = memos.iter().map(|m| m.verified_facts.join("\n")).collect();
    let strategies: Vec<String> = memos.iter().map(|m| m.next_strategy.clone()).collect();
    let mut segments: Vec<&str> = facts.iter().map(String::as_str).collect();
    segments.extend(strategies.iter().map(String::as_str));
    let vocab = build_vocab(&segments, config)?;

    let pair_mean = |texts: &[String]| -> Result<f64, CohortError> {
        let sims: Vec<f64> = texts
            .windows(2)
            .map(|w| {
                let p = distribution(&w[0], &vocab, alpha, config)?;
                let q = distribution(&w[1], &vocab, alpha, config)?;
                similarity(&p, &q)
            })
            .collect::<Result<_, TextStatsError>>()?;
        Ok(compensated_sum(sims.iter().copied()) / sims.len() as f64)
    };
    Ok(pair_mean(&facts)? - pair_mean(&strategies)?)
}

// ---------------------------------------------------------------------------
// Cohort
// ---------------------------------------------------------------------------

/// Trajectory group label for pass-gain analysis: interaction-free tasks,
/// and iterative tasks split at the cohort median distillation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupLabel {
    InteractionFree,
    IterLowPdi,
    IterHighPdi,
}

impl GroupLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            GroupLabel::InteractionFree => "interaction_free",
            GroupLabel::IterLowPdi => "iter_low_pdi",
            GroupLabel::IterHighPdi => "iter_high_pdi",
        }
    }
}

/// A cohort of tasks: their bundles plus all student evaluation records.
#[derive(Debug, Clone, Default)]
pub struct Cohort {
    pub evaluations: Vec<EvaluationRecord>,
    pub bundles: BTreeMap<String, TrajectoryBundle>,
}

impl Cohort {
    /// Assemble a cohort from loaded bundles, lifting their evaluation
    /// records into the shared table.
    pub fn from_bundles(bundles: Vec<TrajectoryBundle>) -> Cohort {
        let mut evaluations = Vec::new();
        let mut map = BTreeMap::new();
        for b in bundles {
            evaluations.extend(b.evaluations.iter().cloned());
            map.insert(b.task_id.clone(), b);
        }
        Cohort {
            evaluations,
            bundles: map,
        }
    }

    pub fn reward(&self, model: &str, task: &str, condition: Condition) -> Option<f64> {
        self.evaluations
            .iter()
            .find(|e| e.model_id == model && e.task_id == task && e.condition == condition)
            .map(|e| e.reward)
    }

    fn require_reward(
        &self,
        model: &str,
        task: &str,
        condition: Condition,
    ) -> Result<f64, CohortError> {
        self.reward(model, task, condition)
            .ok_or_else(|| CohortError::MissingRecord {
                model_id: model.to_string(),
                task_id: task.to_string(),
                condition: condition.as_str(),
            })
    }

    /// Distinct model ids present in the evaluation table, sorted.
    pub fn model_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .evaluations
            .iter()
            .map(|e| e.model_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Distinct task ids in the evaluation table, sorted.
    pub fn task_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.evaluations.iter().map(|e| e.task_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Group labels per task: interaction-free tasks directly, iterative
    /// tasks split at the median of the supplied per-task index values
    /// (values equal to the median go to the low group).
    pub fn derive_groups(
        &self,
        pdi_by_task: &BTreeMap<String, f64>,
    ) -> BTreeMap<String, GroupLabel> {
        let mut labels = BTreeMap::new();
        let mut iter_values: Vec<f64> = Vec::new();
        for (task, bundle) in &self.bundles {
            if bundle.mode_label() == ModeLabel::InteractionFree {
                labels.insert(task.clone(), GroupLabel::InteractionFree);
            } else if let Some(&v) = pdi_by_task.get(task) {
                iter_values.push(v);
            }
        }
        if iter_values.is_empty() {
            return labels;
        }
        let med = median(&iter_values);
        for (task, bundle) in &self.bundles {
            if bundle.mode_label() == ModeLabel::Iterative {
                if let Some(&v) = pdi_by_task.get(task) {
                    let label = if v > med {
                        GroupLabel::IterHighPdi
                    } else {
                        GroupLabel::IterLowPdi
                    };
                    labels.insert(task.clone(), label);
                }
            }
        }
        labels
    }
}

/// Median of a nonempty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Skill gain for one (model, task, condition): reward under the condition
/// minus the baseline reward. Signed, in [-1, 1].
pub fn skill_gain(
    cohort: &Cohort,
    model: &str,
    task: &str,
    condition: Condition,
) -> Result<f64, CohortError> {
    let base = cohort.require_reward(model, task, Condition::Baseline)?;
    let with = cohort.require_reward(model, task, condition)?;
    Ok(with - base)
}

/// Mean reward for a model under a condition, with the task count.
pub fn mean_reward(
    cohort: &Cohort,
    model: &str,
    condition: Condition,
) -> Result<(f64, usize), CohortError> {
    let rewards: Vec<f64> = cohort
        .evaluations
        .iter()
        .filter(|e| e.model_id == model && e.condition == condition)
        .map(|e| e.reward)
        .collect();
    if rewards.is_empty() {
        return Err(CohortError::EmptyCohort);
    }
    Ok((
        compensated_sum(rewards.iter().copied()) / rewards.len() as f64,
        rewards.len(),
    ))
}

/// Mean skill gain for a model under a condition over tasks that carry both
/// the baseline and condition records, with the task count.
pub fn mean_gain(
    cohort: &Cohort,
    model: &str,
    condition: Condition,
) -> Result<(f64, usize), CohortError> {
    let mut gains = Vec::new();
    for task in cohort.task_ids() {
        if let (Some(base), Some(with)) = (
            cohort.reward(model, &task, Condition::Baseline),
            cohort.reward(model, &task, condition),
        ) {
            gains.push(with - base);
        }
    }
    if gains.is_empty() {
        return Err(CohortError::EmptyCohort);
    }
    Ok((
        compensated_sum(gains.iter().copied()) / gains.len() as f64,
        gains.len(),
    ))
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Cross-model agreement rate on generated-skill gains.
///
/// Restricted to tasks where both models fail the baseline (reward exactly
/// 0) and at least one shows a non-zero gain; counts the fraction whose
/// gains share a sign (sign(0) = 0, so a zero against a non-zero counts as
/// disagreement). Symmetric in its model arguments.
pub fn agreement_rate(cohort: &Cohort, model_i: &str, model_j: &str) -> Result<f64, CohortError> {
    let mut eligible = 0usize;
    let mut agree = 0usize;
    for task in cohort.task_ids() {
        let (Some(base_i), Some(base_j)) = (
            cohort.reward(model_i, &task, Condition::Baseline),
            cohort.reward(model_j, &task, Condition::Baseline),
        ) else {
            continue;
        };
        if base_i != 0.0 || base_j != 0.0 {
            continue;
        }
        let (Some(with_i), Some(with_j)) = (
            cohort.reward(model_i, &task, Condition::GeneratedSkill),
            cohort.reward(model_j, &task, Condition::GeneratedSkill),
        ) else {
            continue;
        };
        let d_i = with_i - base_i;
        let d_j = with_j - base_j;
        if d_i == 0.0 && d_j == 0.0 {
            continue;
        }
        eligible += 1;
        if sign(d_i) == sign(d_j) {
            agree += 1;
        }
    }
    if eligible == 0 {
        return Err(CohortError::EmptyEligibleSet);
    }
    Ok(agree as f64 / eligible as f64)
}

/// Pass-gain rate: among a group's baseline-unsolved tasks, the fraction
/// the student fully solves (reward exactly 1) with the generated skill.
pub fn pass_gain_rate(
    cohort: &Cohort,
    labels: &BTreeMap<String, GroupLabel>,
    group: GroupLabel,
    model: &str,
) -> Result<f64, CohortError> {
    let mut denom = 0usize;
    let mut numer = 0usize;
    for (task, label) in labels {
        if *label != group {
            continue;
        }
        let Some(base) = cohort.reward(model, task, Condition::Baseline) else {
            continue;
        };
        if base != 0.0 {
            continue;
        }
        denom += 1;
        if cohort.reward(model, task, Condition::GeneratedSkill) == Some(1.0) {
            numer += 1;
        }
    }
    if denom == 0 {
        return Err(CohortError::EmptyGroup);
    }
    Ok(numer as f64 / denom as f64)
}

/// Gap relative to human-written skills: generated-skill gain minus
/// human-skill gain for one (model, task) pair.
pub fn gap_to_human(cohort: &Cohort, model: &str, task: &str) -> Result<f64, CohortError> {
    let gen = skill_gain(cohort, model, task, Condition::GeneratedSkill)?;
    let hum = skill_gain(cohort, model, task, Condition::HumanSkill)?;
    Ok(gen - hum)
}

// ---------------------------------------------------------------------------
// Quadrant table
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadrantRow {
    pub plan_high: bool,
    pub exec_high: bool,
    pub mean_gain: Option<f64>,
    pub mean_gap: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadrantTable {
    /// Rows in fixed order: (Low, High), (Low, Low), (High, High), (High, Low)
    /// by (plan, exec) level.
    pub rows: [QuadrantRow; 4],
    pub plan_median: f64,
    pub exec_median: f64,
    /// More than half the values tie the median; the split is uninformative.
    pub degenerate_plan: bool,
    pub degenerate_exec: bool,
}

/// Partition tasks into four quadrants by the medians of plan copying and
/// execution grounding, reporting per-quadrant mean gain and mean gap to
/// human skills. Values equal to the median go to the Low side; empty
/// quadrants report empty means, never zero.
pub fn quadrant_table(
    plan: &[f64],
    exec: &[f64],
    gains: &[f64],
    gaps: &[f64],
) -> Result<QuadrantTable, CohortError> {
    let n = plan.len();
    for (len, _) in [(exec.len(), "exec"), (gains.len(), "gains"), (gaps.len(), "gaps")] {
        if len != n {
            return Err(CohortError::LengthMismatch { left: n, right: len });
        }
    }
    if n == 0 {
        return Err(CohortError::EmptyCohort);
    }
    let plan_median = median(plan);
    let exec_median = median(exec);
    let degenerate =
        |values: &[f64], med: f64| values.iter().filter(|&&v| v == med).count() * 2 > values.len();

    let quadrants = [(false, true), (false, false), (true, true), (true, false)];
    let rows = quadrants.map(|(plan_high, exec_high)| {
        let members: Vec<usize> = (0..n)
            .filter(|&i| {
                (plan[i] > plan_median) == plan_high && (exec[i] > exec_median) == exec_high
            })
            .collect();
        let mean_of = |values: &[f64]| {
            if members.is_empty() {
                None
            } else {
                Some(compensated_sum(members.iter().map(|&i| values[i])) / members.len() as f64)
            }
        };
        QuadrantRow {
            plan_high,
            exec_high,
            mean_gain: mean_of(gains),
            mean_gap: mean_of(gaps),
            n: members.len(),
        }
    });

    Ok(QuadrantTable {
        rows,
        plan_median,
        exec_median,
        degenerate_plan: degenerate(plan, plan_median),
        degenerate_exec: degenerate(exec, exec_median),
    })
}

// ---------------------------------------------------------------------------
// Attempt-budget bins
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptBinRow {
    pub model_id: String,
    pub attempts: usize,
    pub mean_gain: f64,
    pub n_tasks: usize,
}

/// Mean generated-skill gain per (model, attempt-count) bin over
/// baseline-unsolved tasks with a bundle. Empty bins are simply absent.
pub fn attempt_bins(cohort: &Cohort) -> Vec<AttemptBinRow> {
    let mut bins: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for model in cohort.model_ids() {
        for (task, bundle) in &cohort.bundles {
            let Some(base) = cohort.reward(&model, task, Condition::Baseline) else {
                continue;
            };
            if base != 0.0 {
                continue;
            }
            let Some(with) = cohort.reward(&model, task, Condition::GeneratedSkill) else {
                continue;
            };
            bins.entry((model.clone(), bundle.attempts.len()))
                .or_default()
                .push(with - base);
        }
    }
    bins.into_iter()
        .map(|((model_id, attempts), gains)| AttemptBinRow {
            model_id,
            attempts,
            mean_gain: compensated_sum(gains.iter().copied()) / gains.len() as f64,
            n_tasks: gains.len(),
        })
        .collect()
}
