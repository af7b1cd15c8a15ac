//! Property tests for the numeric kernel, the bundle format, and the memo
//! template.

use proptest::prelude::*;

use pdi_core::bundle::{decode_stdout, encode_stdout, load_bundle, save_bundle};
use pdi_core::model::{Attempt, EvaluationRecord, Memo, TestResult, TrajectoryBundle};
use pdi_core::parse::{parse_memo, parse_skill, render_memo};
use pdi_core::stats::{average_ranks, mann_whitney_u, spearman};
use pdi_core::textstats::{build_vocab, distribution, jaccard, jsd, kl, similarity};
use pdi_core::tokenize::{tokenize, TokenizerConfig};

fn cfg() -> TokenizerConfig {
    TokenizerConfig::default()
}

/// Short lowercase word drawn from a pool small enough to force overlaps.
fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "alpha", "beta", "gamma", "delta", "run", "tests", "parse", "json", "csv", "fix",
        "error", "column", "path", "value", "x1", "y2",
    ])
    .prop_map(str::to_string)
}

fn segment() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 0..40).prop_map(|ws| ws.join(" "))
}

proptest! {
    #[test]
    fn jsd_bounded_symmetric_selfzero(a in segment(), b in segment(), alpha in 1e-6f64..1.0) {
        prop_assume!(!a.trim().is_empty() || !b.trim().is_empty());
        let vocab = build_vocab(&[a.as_str(), b.as_str()], &cfg()).unwrap();
        let p = distribution(&a, &vocab, alpha, &cfg()).unwrap();
        let q = distribution(&b, &vocab, alpha, &cfg()).unwrap();
        let d = jsd(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, jsd(&q, &p).unwrap());
        prop_assert_eq!(jsd(&p, &p).unwrap(), 0.0);
        prop_assert_eq!(similarity(&p, &q).unwrap(), 1.0 - d);
        prop_assert!(kl(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn distribution_simplex_and_floor(a in segment(), alpha in 1e-6f64..2.0) {
        prop_assume!(!a.trim().is_empty());
        let vocab = build_vocab(&[a.as_str()], &cfg()).unwrap();
        let d = distribution(&a, &vocab, alpha, &cfg()).unwrap();
        let sum: f64 = d.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12, "sum = {}", sum);
        let floor = alpha / (d.total_raw_count() as f64 + alpha * vocab.size() as f64);
        prop_assert!(d.probs().iter().all(|&p| p >= floor * (1.0 - 1e-12)));
    }

    #[test]
    fn jaccard_bounds_symmetry_identity(a in segment(), b in segment()) {
        let j = jaccard(&a, &b, &cfg());
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, jaccard(&b, &a, &cfg()));
        use std::collections::HashSet;
        let sa: HashSet<String> = tokenize(&a, &cfg()).into_iter().collect();
        let sb: HashSet<String> = tokenize(&b, &cfg()).into_iter().collect();
        prop_assert_eq!(j == 1.0, sa == sb);
    }

    #[test]
    fn stdout_escape_encoding_is_lossless(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        let encoded = encode_stdout(&bytes);
        prop_assert!(std::str::from_utf8(encoded.as_bytes()).is_ok());
        prop_assert_eq!(decode_stdout(&encoded), bytes);
    }

    #[test]
    fn spearman_invariant_under_increasing_transforms(
        xs in prop::collection::vec(-20.0f64..20.0, 4..12),
        ys in prop::collection::vec(-20.0f64..20.0, 4..12),
    ) {
        let n = xs.len().min(ys.len());
        let xs = &xs[..n];
        let ys = &ys[..n];
        prop_assume!(xs.windows(2).any(|w| w[0] != w[1]));
        prop_assume!(ys.windows(2).any(|w| w[0] != w[1]));
        let (rho, p) = spearman(xs, ys).unwrap();
        // exp is strictly increasing: identical ranks, identical statistic.
        let tx: Vec<f64> = xs.iter().map(|&v| v.exp()).collect();
        let ty: Vec<f64> = ys.iter().map(|&v| 3.0 * v + 7.0).collect();
        prop_assert_eq!(average_ranks(xs), average_ranks(&tx));
        let (rho_t, p_t) = spearman(&tx, &ty).unwrap();
        prop_assert!((rho - rho_t).abs() < 1e-12);
        prop_assert!((p - p_t).abs() < 1e-12);
    }

    #[test]
    fn mann_whitney_exact_matches_enumeration(
        a in prop::collection::vec(0u8..6, 1..6),
        b in prop::collection::vec(0u8..6, 1..6),
    ) {
        // Small integer-valued multisets force heavy ties.
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let (u, p) = mann_whitney_u(&a, &b).unwrap();

        // Oracle: enumerate every C(n, n_a) split of the pooled multiset by
        // index combination, computing U from scratch each time.
        let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        let n = pooled.len();
        let na = a.len();
        let u_of = |group: &[f64], rest: &[f64]| -> f64 {
            let mut u = 0.0;
            for x in group {
                for y in rest {
                    if x > y {
                        u += 1.0;
                    } else if x == y {
                        u += 0.5;
                    }
                }
            }
            u
        };
        let mu = (na * (n - na)) as f64 / 2.0;
        let u_obs = u_of(&a, &b);
        prop_assert!((u - u_obs).abs() < 1e-9, "u {} vs direct {}", u, u_obs);
        let mut hits = 0u64;
        let mut total = 0u64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != na {
                continue;
            }
            total += 1;
            let mut ga = Vec::with_capacity(na);
            let mut gb = Vec::with_capacity(n - na);
            for (i, &v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    ga.push(v);
                } else {
                    gb.push(v);
                }
            }
            if (u_of(&ga, &gb) - mu).abs() >= (u_obs - mu).abs() - 1e-9 {
                hits += 1;
            }
        }
        let oracle_p = hits as f64 / total as f64;
        prop_assert!((p - oracle_p).abs() < 1e-12, "p {} vs oracle {}", p, oracle_p);
    }
}

// ---------------------------------------------------------------------------
// Memo template round trip
// ---------------------------------------------------------------------------

fn line_item() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..6).prop_map(|ws| ws.join(" "))
}

fn text_block() -> impl Strategy<Value = String> {
    prop::collection::vec(line_item(), 0..3).prop_map(|ls| ls.join("\n"))
}

prop_compose! {
    fn memo_strategy()(
        count in 0u32..9,
        log in prop::collection::vec(line_item(), 0..5),
        commands in prop::collection::vec(line_item(), 0..5),
        facts in prop::collection::vec(line_item(), 0..5),
        error in text_block(),
        strategy in text_block(),
    ) -> Memo {
        let mut memo = Memo {
            attempt_count_header: count,
            attempts_log: log,
            commands,
            verified_facts: facts,
            current_error_pattern: error,
            next_strategy: strategy,
            raw_text: String::new(),
        };
        memo.raw_text = render_memo(&memo);
        memo
    }
}

proptest! {
    #[test]
    fn memo_template_round_trips(memo in memo_strategy()) {
        let (parsed, diag) = parse_memo(&memo.raw_text, true).unwrap();
        prop_assert!(diag.warnings.is_empty());
        prop_assert_eq!(parsed, memo);
    }

    #[test]
    fn skill_fence_exclusion_invariant(
        steps in prop::collection::vec(line_item(), 0..5),
        fenced in prop::collection::vec(line_item(), 0..5),
    ) {
        // Numbered steps outside fences count; an identical document with
        // the fences stripped counts the same.
        let with_fence = format!(
            "# Doc\n{}\n```\n{}\n```\n",
            steps.iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s)).collect::<Vec<_>>().join("\n"),
            fenced.iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s)).collect::<Vec<_>>().join("\n"),
        );
        let without_fence = format!(
            "# Doc\n{}\n",
            steps.iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s)).collect::<Vec<_>>().join("\n"),
        );
        let (a, _) = parse_skill(&with_fence);
        let (b, _) = parse_skill(&without_fence);
        prop_assert_eq!(a.numbered_step_count, steps.len());
        prop_assert_eq!(a.numbered_step_count, b.numbered_step_count);
    }
}

// ---------------------------------------------------------------------------
// Bundle round trip
// ---------------------------------------------------------------------------

fn reward() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        Just(1.0),
        (0u32..=100).prop_map(|n| n as f64 / 100.0),
        0.0f64..1.0,
    ]
}

prop_compose! {
    fn attempt_strategy(index: u32, force_reward: Option<f64>)(
        commands in prop::collection::vec(line_item(), 0..4),
        stdout_bytes in prop::collection::vec(any::<u8>(), 0..120),
        r in reward(),
        n_tests in 0usize..4,
        passes in prop::collection::vec(any::<bool>(), 4),
        wall in prop::option::of(0.0f64..500.0),
    ) -> Attempt {
        Attempt {
            index,
            commands,
            stdout_text: encode_stdout(&stdout_bytes),
            reward: force_reward.unwrap_or(r),
            test_summary: (0..n_tests)
                .map(|i| TestResult { name: format!("test_{i}"), passed: passes[i] })
                .collect(),
            wall_time_sec: wall,
        }
    }
}

fn bundle_strategy() -> impl Strategy<Value = TrajectoryBundle> {
    (1u32..6, any::<bool>(), any::<bool>()).prop_flat_map(|(n_attempts, solved, with_skill)| {
        let failed: Vec<_> = (1..n_attempts)
            .map(|i| {
                attempt_strategy(i, Some(0.25)).boxed()
            })
            .collect();
        let last = if solved {
            attempt_strategy(n_attempts, Some(1.0)).boxed()
        } else {
            attempt_strategy(n_attempts, Some(0.25)).boxed()
        };
        let memo_count = if solved { n_attempts - 1 } else { n_attempts } as usize;
        (
            failed,
            last,
            prop::collection::vec(memo_strategy(), memo_count..=memo_count),
            Just(solved),
            Just(with_skill),
        )
            .prop_map(move |(mut attempts, last, memos, solved, with_skill)| {
                attempts.push(last);
                let skill = with_skill.then(|| {
                    parse_skill("---\nname: s\n---\n# How\n\n1. do the thing\n").0
                });
                TrajectoryBundle {
                    task_id: "prop-task".into(),
                    attempts,
                    memos,
                    skill,
                    solved_at: solved.then_some(n_attempts),
                    evaluations: vec![EvaluationRecord {
                        task_id: "prop-task".into(),
                        model_id: "m1".into(),
                        condition: pdi_core::model::Condition::Baseline,
                        reward: 0.5,
                    }],
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn bundle_save_load_identity(bundle in bundle_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        prop_assert_eq!(loaded, bundle);
    }
}
