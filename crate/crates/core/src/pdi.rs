//! The Posterior Distillation Index: per-trajectory components, cohort
//! z-scoring, the composite index, and the smoothing/weight sensitivity
//! analyses.
//!
//! Components for one solved trajectory:
//! - plan copying: similarity of all accumulated Next Strategy text to the
//!   skill body,
//! - execution grounding: similarity of the successful attempt's commands
//!   to the skill body,
//! - memo ossification: mean cross-attempt stability of Verified Facts and
//!   failed-test sets, averaged with equal weight.
//!
//! All similarities share one per-trajectory vocabulary (the union over
//! every segment being compared), so values are comparable across
//! components. Failed-test sets enter the vocabulary as whole test-name
//! tokens: the name is the identity of a set element.
//!
//! The composite is `PDI = z(exec) - z(plan) - z(oss)` with z-scores taken
//! over the iterative cohort using the population standard deviation. A
//! trajectory with fewer than two memos has no ossification component; it
//! contributes zero to the composite and is flagged.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TrajectoryBundle;
use crate::stats::{spearman, spearman_rho, CohortError};
use crate::textstats::{
    compensated_sum, distribution_from_tokens, similarity, TextStatsError, Vocabulary,
};
use crate::tokenize::{tokenize, TokenizerConfig};

/// Paper-default smoothing constant for token distributions.
pub const DEFAULT_ALPHA: f64 = 0.002;

#[derive(Debug, Error)]
pub enum PdiError {
    #[error("bundle has no skill document")]
    MissingSkill,
    #[error("bundle is unsolved; execution grounding needs a successful attempt")]
    Unsolved,
    #[error("no memo carries a nonempty Next Strategy section")]
    NoStrategyText,
    #[error("fewer than 2 memos; ossification component undefined")]
    InsufficientHistory,
    #[error("degenerate cohort: {0}")]
    DegenerateCohort(String),
    #[error("rejected weights: execution weight must be > 0, got {0}")]
    RejectedWeights(f64),
    #[error("fold configuration infeasible: {0}")]
    FoldTooSmall(String),
    #[error("cohort and outcome lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error(transparent)]
    Text(#[from] TextStatsError),
    #[error(transparent)]
    Stats(#[from] CohortError),
}

/// The text segments one trajectory's components are computed from.
#[derive(Debug, Clone)]
pub struct TrajectorySegments {
    /// Skill body text (prose after the frontmatter).
    pub skill_body: String,
    /// Next Strategy text per memo, in order.
    pub strategies: Vec<String>,
    /// Verified Facts text per memo (items newline-joined), in order.
    pub facts: Vec<String>,
    /// Failed test names per memo-producing attempt, as atomic tokens.
    pub failed_tests: Vec<Vec<String>>,
    /// Commands of the successful attempt, newline-joined.
    pub success_commands: Option<String>,
}

impl TrajectorySegments {
    /// Extract the comparison segments from a bundle. Failed-test sets are
    /// taken for attempts 1..=len(memos), the attempts that produced memos.
    pub fn from_bundle(bundle: &TrajectoryBundle) -> TrajectorySegments {
        let strategies = bundle
            .memos
            .iter()
            .map(|m| m.next_strategy.clone())
            .collect();
        let facts = bundle
            .memos
            .iter()
            .map(|m| m.verified_facts.join("\n"))
            .collect();
        let failed_tests = bundle
            .attempts
            .iter()
            .take(bundle.memos.len())
            .map(|a| a.failed_test_names())
            .collect();
        TrajectorySegments {
            skill_body: bundle
                .skill
                .as_ref()
                .map(|s| s.body_text.clone())
                .unwrap_or_default(),
            strategies,
            facts,
            failed_tests,
            success_commands: bundle.solved_attempt().map(|a| a.commands.join("\n")),
        }
    }

    /// Accumulated Next Strategy text, newline-joined across all memos.
    pub fn joined_strategies(&self) -> String {
        self.strategies.join("\n")
    }
}

/// The shared per-trajectory vocabulary: the union of word tokens from the
/// skill body, strategies, facts, and successful commands, plus the failed
/// test names as whole tokens.
pub fn trajectory_vocab(
    segments: &TrajectorySegments,
    config: &TokenizerConfig,
) -> Result<Arc<Vocabulary>, TextStatsError> {
    let mut token_segments: Vec<Vec<String>> = Vec::new();
    token_segments.push(tokenize(&segments.skill_body, config));
    for s in &segments.strategies {
        token_segments.push(tokenize(s, config));
    }
    for f in &segments.facts {
        token_segments.push(tokenize(f, config));
    }
    if let Some(c) = &segments.success_commands {
        token_segments.push(tokenize(c, config));
    }
    for names in &segments.failed_tests {
        token_segments.push(names.clone());
    }
    Vocabulary::from_token_segments(&token_segments)
}

fn psi_text(
    a: &str,
    b: &str,
    vocab: &Arc<Vocabulary>,
    alpha: f64,
    config: &TokenizerConfig,
) -> Result<f64, TextStatsError> {
    let p = distribution_from_tokens(&tokenize(a, config), vocab, alpha)?;
    let q = distribution_from_tokens(&tokenize(b, config), vocab, alpha)?;
    similarity(&p, &q)
}

fn psi_atoms(
    a: &[String],
    b: &[String],
    vocab: &Arc<Vocabulary>,
    alpha: f64,
) -> Result<f64, TextStatsError> {
    let p = distribution_from_tokens(a, vocab, alpha)?;
    let q = distribution_from_tokens(b, vocab, alpha)?;
    similarity(&p, &q)
}

fn require_skill_and_solved(bundle: &TrajectoryBundle) -> Result<(), PdiError> {
    if bundle.skill.is_none() {
        return Err(PdiError::MissingSkill);
    }
    if bundle.solved_at.is_none() {
        return Err(PdiError::Unsolved);
    }
    Ok(())
}

/// Plan copying: similarity of the concatenated Next Strategy sections to
/// the skill body.
pub fn phi_plan(
    bundle: &TrajectoryBundle,
    alpha: f64,
    config: &TokenizerConfig,
) -> Result<f64, PdiError> {
    if bundle.skill.is_none() {
        return Err(PdiError::MissingSkill);
    }
    if !bundle.memos.iter().any(|m| !m.next_strategy.is_empty()) {
        return Err(PdiError::NoStrategyText);
    }
    let segments = TrajectorySegments::from_bundle(bundle);
    let vocab = trajectory_vocab(&segments, config)?;
    Ok(psi_text(
        &segments.joined_strategies(),
        &segments.skill_body,
        &vocab,
        alpha,
        config,
    )?)
}

/// Execution grounding: similarity of the successful attempt's commands to
/// the skill body. An empty command list is legal; its distribution is the
/// smoothed uniform.
pub fn phi_exec(
    bundle: &TrajectoryBundle,
    alpha: f64,
    config: &TokenizerConfig,
) -> Result<f64, PdiError> {
    require_skill_and_solved(bundle)?;
    let segments = TrajectorySegments::from_bundle(bundle);
    let vocab = trajectory_vocab(&segments, config)?;
    let commands = segments.success_commands.clone().unwrap_or_default();
    Ok(psi_text(&commands, &segments.skill_body, &vocab, alpha, config)?)
}

/// Memo ossification: the equal-weight average of the mean consecutive
/// Verified-Facts similarity and the mean consecutive failed-test-set
/// similarity. Needs at least two memos.
pub fn phi_oss(
    bundle: &TrajectoryBundle,
    alpha: f64,
    config: &TokenizerConfig,
) -> Result<f64, PdiError> {
    if bundle.memos.len() < 2 {
        return Err(PdiError::InsufficientHistory);
    }
    let segments = TrajectorySegments::from_bundle(bundle);
    let vocab = trajectory_vocab(&segments, config)?;

    let fact_sims: Vec<f64> = segments
        .facts
        .windows(2)
        .map(|w| psi_text(&w[0], &w[1], &vocab, alpha, config))
        .collect::<Result<_, _>>()?;
    let fail_sims: Vec<f64> = segments
        .failed_tests
        .windows(2)
        .map(|w| psi_atoms(&w[0], &w[1], &vocab, alpha))
        .collect::<Result<_, _>>()?;
    let mean = |v: &[f64]| compensated_sum(v.iter().copied()) / v.len() as f64;
    Ok(0.5 * mean(&fact_sims) + 0.5 * mean(&fail_sims))
}

/// The three components of one trajectory's index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdiComponents {
    pub phi_plan: f64,
    pub phi_exec: f64,
    /// Absent when the trajectory has fewer than 2 memos.
    pub phi_oss: Option<f64>,
    /// Smoothing constant the components were computed with.
    pub alpha: f64,
}

/// Compute all components for one solved, skill-bearing trajectory.
pub fn components(
    bundle: &TrajectoryBundle,
    alpha: f64,
    config: &TokenizerConfig,
) -> Result<PdiComponents, PdiError> {
    require_skill_and_solved(bundle)?;
    let phi_oss = match phi_oss(bundle, alpha, config) {
        Ok(v) => Some(v),
        Err(PdiError::InsufficientHistory) => None,
        Err(e) => return Err(e),
    };
    Ok(PdiComponents {
        phi_plan: phi_plan(bundle, alpha, config)?,
        phi_exec: phi_exec(bundle, alpha, config)?,
        phi_oss,
        alpha,
    })
}

/// One trajectory's z-scored components and composite index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdiScore {
    pub components: PdiComponents,
    pub z_exec: f64,
    pub z_plan: f64,
    pub z_oss: f64,
    /// `z_exec - z_plan - z_oss`, exactly as computed.
    pub pdi: f64,
    pub cohort_id: String,
    /// Diagnostics: absent ossification, degenerate z columns.
    pub flags: Vec<String>,
}

/// Z-score a cohort column with the population standard deviation.
///
/// Errors when fewer than 2 values are present or all values are equal;
/// callers substitute zeros and record a diagnostic.
pub fn zscore_cohort(values: &[f64]) -> Result<Vec<f64>, PdiError> {
    if values.len() < 2 {
        return Err(PdiError::DegenerateCohort(format!(
            "need at least 2 values, got {}",
            values.len()
        )));
    }
    if values.windows(2).all(|w| w[0] == w[1]) {
        return Err(PdiError::DegenerateCohort("all values equal".into()));
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = compensated_sum(values.iter().map(|&v| (v - mean) * (v - mean))) / n;
    let std = var.sqrt();
    Ok(values.iter().map(|&v| (v - mean) / std).collect())
}

/// Assemble composite scores for a cohort of component triples.
///
/// Each column is z-scored over the cohort (the ossification column over
/// the trajectories where it is present). A degenerate column contributes
/// zeros and flags every score; an absent ossification value contributes
/// zero and flags that score.
pub fn pdi(cohort: &[PdiComponents], cohort_id: &str) -> Vec<PdiScore> {
    let n = cohort.len();
    let execs: Vec<f64> = cohort.iter().map(|c| c.phi_exec).collect();
    let plans: Vec<f64> = cohort.iter().map(|c| c.phi_plan).collect();
    let oss_present: Vec<(usize, f64)> = cohort
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.phi_oss.map(|v| (i, v)))
        .collect();

    let mut flags: Vec<Vec<String>> = vec![Vec::new(); n];

    let zcol = |values: &[f64], name: &str, flags: &mut Vec<Vec<String>>| match zscore_cohort(
        values,
    ) {
        Ok(z) => z,
        Err(_) => {
            for f in flags.iter_mut() {
                f.push(format!("{name}_degenerate"));
            }
            vec![0.0; values.len()]
        }
    };
    let z_exec = zcol(&execs, "exec", &mut flags);
    let z_plan = zcol(&plans, "plan", &mut flags);

    let mut z_oss = vec![0.0; n];
    let oss_values: Vec<f64> = oss_present.iter().map(|&(_, v)| v).collect();
    match zscore_cohort(&oss_values) {
        Ok(z) => {
            for (&(i, _), zi) in oss_present.iter().zip(z) {
                z_oss[i] = zi;
            }
        }
        Err(_) if !oss_present.is_empty() => {
            for f in flags.iter_mut() {
                f.push("oss_degenerate".into());
            }
        }
        Err(_) => {}
    }
    for (i, c) in cohort.iter().enumerate() {
        if c.phi_oss.is_none() {
            flags[i].push("oss_absent".into());
        }
    }

    cohort
        .iter()
        .enumerate()
        .map(|(i, c)| PdiScore {
            components: c.clone(),
            z_exec: z_exec[i],
            z_plan: z_plan[i],
            z_oss: z_oss[i],
            pdi: z_exec[i] - z_plan[i] - z_oss[i],
            cohort_id: cohort_id.to_string(),
            flags: flags[i].clone(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Sensitivity sweeps
// ---------------------------------------------------------------------------

/// Default smoothing sweep grid: one point per decade from 1e-10 to 10.
pub fn default_alpha_grid() -> Vec<f64> {
    (-10..=1).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSweepRow {
    pub alpha: f64,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    /// Set when the correlation is undefined at this alpha.
    pub note: Option<String>,
}

/// Recompute the composite index per smoothing constant and correlate it
/// with the outcomes. A degenerate correlation (constant outcomes or
/// constant index) is reported per row, not raised.
pub fn alpha_sweep(
    cohort: &[&TrajectoryBundle],
    alphas: &[f64],
    outcomes: &[f64],
    config: &TokenizerConfig,
) -> Result<Vec<AlphaSweepRow>, PdiError> {
    if cohort.len() != outcomes.len() {
        return Err(PdiError::LengthMismatch {
            left: cohort.len(),
            right: outcomes.len(),
        });
    }
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let comps: Vec<PdiComponents> = cohort
            .iter()
            .map(|b| components(b, alpha, config))
            .collect::<Result<_, _>>()?;
        let scores = pdi(&comps, "alpha-sweep");
        let values: Vec<f64> = scores.iter().map(|s| s.pdi).collect();
        match spearman(&values, outcomes) {
            Ok((rho, p)) => rows.push(AlphaSweepRow {
                alpha,
                rho: Some(rho),
                p_value: Some(p),
                note: None,
            }),
            Err(CohortError::DegenerateInput(msg)) => rows.push(AlphaSweepRow {
                alpha,
                rho: None,
                p_value: None,
                note: Some(format!("degenerate correlation: {msg}")),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(rows)
}

/// Component weights for the composite. The execution weight must be
/// positive; plan and ossification weights contribute with a negative sign
/// by convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    w_e: f64,
    w_p: f64,
    w_o: f64,
}

impl WeightVector {
    pub fn new(w_e: f64, w_p: f64, w_o: f64) -> Result<WeightVector, PdiError> {
        if !(w_e > 0.0) {
            return Err(PdiError::RejectedWeights(w_e));
        }
        Ok(WeightVector { w_e, w_p, w_o })
    }

    /// The shipped default: equal weights (1, 1, 1).
    pub fn equal() -> WeightVector {
        WeightVector {
            w_e: 1.0,
            w_p: 1.0,
            w_o: 1.0,
        }
    }

    pub fn as_tuple(&self) -> (f64, f64, f64) {
        (self.w_e, self.w_p, self.w_o)
    }

    /// `w_e * z_exec - w_p * z_plan - w_o * z_oss`. At (1, 1, 1) this is
    /// bit-identical to the default composite.
    pub fn composite(&self, z_exec: f64, z_plan: f64, z_oss: f64) -> f64 {
        self.w_e * z_exec - self.w_p * z_plan - self.w_o * z_oss
    }
}

/// The standard sweep grid over {0, 0.5, 1, 1.5} per weight, keeping only
/// vectors with a positive execution weight.
pub fn default_weight_grid() -> Vec<WeightVector> {
    let steps = [0.0, 0.5, 1.0, 1.5];
    let mut grid = Vec::new();
    for &w_e in &steps {
        for &w_p in &steps {
            for &w_o in &steps {
                if let Ok(w) = WeightVector::new(w_e, w_p, w_o) {
                    grid.push(w);
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSweepRow {
    pub weights: WeightVector,
    pub rho: Option<f64>,
}

/// Correlate every weighted composite with the outcomes.
pub fn weight_sweep(
    z_triples: &[(f64, f64, f64)],
    outcomes: &[f64],
    grid: &[WeightVector],
) -> Result<Vec<WeightSweepRow>, PdiError> {
    if z_triples.len() != outcomes.len() {
        return Err(PdiError::LengthMismatch {
            left: z_triples.len(),
            right: outcomes.len(),
        });
    }
    Ok(grid
        .iter()
        .map(|w| {
            let composite: Vec<f64> = z_triples
                .iter()
                .map(|&(e, p, o)| w.composite(e, p, o))
                .collect();
            WeightSweepRow {
                weights: *w,
                rho: spearman_rho(&composite, outcomes).ok(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvFoldResult {
    pub fold_index: usize,
    /// Indices of the held-out tasks.
    pub heldout: Vec<usize>,
    pub fitted: WeightVector,
    pub rho_fitted_heldout: Option<f64>,
    pub rho_equal_heldout: Option<f64>,
}

/// K-fold cross-validation of component weights: per fold, grid-search the
/// max-correlation weights on the training tasks, then evaluate the fitted
/// and the equal weights on the held-out tasks. Fold assignment is a
/// seeded shuffle; ties in the grid search keep the earliest grid entry.
pub fn weight_cv(
    z_triples: &[(f64, f64, f64)],
    outcomes: &[f64],
    k: usize,
    grid: &[WeightVector],
    seed: u64,
) -> Result<Vec<CvFoldResult>, PdiError> {
    let n = z_triples.len();
    if n != outcomes.len() {
        return Err(PdiError::LengthMismatch {
            left: n,
            right: outcomes.len(),
        });
    }
    if k < 2 {
        return Err(PdiError::FoldTooSmall(format!("k must be >= 2, got {k}")));
    }
    if n < 2 * k {
        return Err(PdiError::FoldTooSmall(format!(
            "need at least {} tasks for {k} folds of >= 2, got {n}",
            2 * k
        )));
    }
    if grid.is_empty() {
        return Err(PdiError::FoldTooSmall("empty weight grid".into()));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &idx) in indices.iter().enumerate() {
        folds[pos % k].push(idx);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }

    let eval_rho = |members: &[usize], w: &WeightVector| -> Option<f64> {
        let comp: Vec<f64> = members
            .iter()
            .map(|&i| {
                let (e, p, o) = z_triples[i];
                w.composite(e, p, o)
            })
            .collect();
        let out: Vec<f64> = members.iter().map(|&i| outcomes[i]).collect();
        spearman_rho(&comp, &out).ok()
    };

    let mut results = Vec::with_capacity(k);
    for (fold_index, heldout) in folds.iter().enumerate() {
        let train: Vec<usize> = (0..n).filter(|i| !heldout.contains(i)).collect();
        let mut fitted = grid[0];
        let mut best = f64::NEG_INFINITY;
        for w in grid {
            if let Some(rho) = eval_rho(&train, w) {
                if rho > best {
                    best = rho;
                    fitted = *w;
                }
            }
        }
        results.push(CvFoldResult {
            fold_index,
            heldout: heldout.clone(),
            fitted,
            rho_fitted_heldout: eval_rho(heldout, &fitted),
            rho_equal_heldout: eval_rho(heldout, &WeightVector::equal()),
        });
    }
    Ok(results)
}
