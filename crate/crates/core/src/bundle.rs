//! The canonical on-disk trajectory bundle format.
//!
//! A bundle is a directory:
//!
//! ```text
//! <bundle>/
//!   bundle.json            metadata: task_id, attempts, solved_at, evaluations
//!   memos/memo_<i>.md      verbatim memo text, i = 1..
//!   skill/SKILL.md         verbatim skill document (optional)
//!   attempts/<i>/stdout.txt
//!   attempts/<i>/commands.txt   one command per line
//! ```
//!
//! Rewards are stored as decimal strings and parsed exactly; tolerance
//! questions stay with consumers. Loading either returns a bundle satisfying
//! every model invariant or a structured error naming the offending
//! path/field — never a partially valid bundle.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

use crate::model::{
    Attempt, Condition, EvaluationRecord, InvariantViolation, TestResult, TrajectoryBundle,
};
use crate::parse::{parse_memo, parse_skill, ParseError};

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: missing required field {field:?}")]
    MissingField { path: String, field: String },
    #[error("{path}: malformed attempt: {detail}")]
    MalformedAttempt { path: String, detail: String },
    #[error("{path}: malformed bundle manifest: {detail}")]
    MalformedManifest { path: String, detail: String },
    #[error("{path}: memo failed to parse: {source}")]
    MemoParseFailure {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error("{path}: {source}")]
    Invariant {
        path: String,
        #[source]
        source: InvariantViolation,
    },
    #[error("{path}: io failure: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl BundleError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        BundleError::IoFailure {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Encode an arbitrary byte stream as valid UTF-8, losslessly.
///
/// Valid UTF-8 passes through verbatim except U+FFFD, which is doubled;
/// each invalid byte becomes U+FFFD followed by two lowercase hex digits.
/// [`decode_stdout`] inverts this exactly for every input.
pub fn encode_stdout(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    for chunk in bytes.utf8_chunks() {
        for c in chunk.valid().chars() {
            if c == '\u{FFFD}' {
                out.push('\u{FFFD}');
                out.push('\u{FFFD}');
            } else {
                out.push(c);
            }
        }
        for &b in chunk.invalid() {
            out.push('\u{FFFD}');
            out.push_str(&format!("{:02x}", b));
        }
    }
    out
}

/// Invert [`encode_stdout`], recovering the original byte stream.
pub fn decode_stdout(text: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(text.len());
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if c == '\u{FFFD}' {
            if i + 1 < chars.len() && chars[i + 1] == '\u{FFFD}' {
                out.extend_from_slice("\u{FFFD}".as_bytes());
                i += 2;
                continue;
            }
            if i + 2 < chars.len()
                && chars[i + 1].is_ascii_hexdigit()
                && chars[i + 2].is_ascii_hexdigit()
            {
                let hi = chars[i + 1].to_digit(16).unwrap() as u8;
                let lo = chars[i + 2].to_digit(16).unwrap() as u8;
                out.push(hi << 4 | lo);
                i += 3;
                continue;
            }
            // Lenient: a bare replacement character decodes as itself.
            out.extend_from_slice("\u{FFFD}".as_bytes());
            i += 1;
            continue;
        }
        let mut buf = [0u8; 4];
        out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
        i += 1;
    }
    out
}

fn format_reward(r: f64) -> String {
    // Shortest representation that parses back to the same f64.
    format!("{}", r)
}

fn parse_reward(v: &Value, path: &str, field: &str) -> Result<f64, BundleError> {
    let parsed = match v {
        Value::String(s) => s.trim().parse::<f64>().ok(),
        Value::Number(n) => n.as_f64(),
        _ => None,
    };
    parsed.ok_or_else(|| BundleError::MalformedManifest {
        path: path.to_string(),
        detail: format!("field {field:?} is not a decimal reward"),
    })
}

fn get_field<'a>(obj: &'a Value, path: &str, field: &str) -> Result<&'a Value, BundleError> {
    obj.get(field).ok_or_else(|| BundleError::MissingField {
        path: path.to_string(),
        field: field.to_string(),
    })
}

fn parse_manifest(
    value: &Value,
    manifest_path: &str,
) -> Result<(String, Vec<ManifestAttempt>, Option<u32>, Vec<EvaluationRecord>), BundleError> {
    let task_id = get_field(value, manifest_path, "task_id")?
        .as_str()
        .ok_or_else(|| BundleError::MalformedManifest {
            path: manifest_path.to_string(),
            detail: "task_id is not a string".into(),
        })?
        .to_string();

    let attempts_val = get_field(value, manifest_path, "attempts")?
        .as_array()
        .ok_or_else(|| BundleError::MalformedManifest {
            path: manifest_path.to_string(),
            detail: "attempts is not an array".into(),
        })?
        .clone();

    let mut attempts = Vec::with_capacity(attempts_val.len());
    for (i, a) in attempts_val.iter().enumerate() {
        let apath = format!("{manifest_path}:attempts[{i}]");
        let index = get_field(a, &apath, "index")?
            .as_u64()
            .ok_or_else(|| BundleError::MalformedAttempt {
                path: apath.clone(),
                detail: "index is not an unsigned integer".into(),
            })? as u32;
        let reward = parse_reward(get_field(a, &apath, "reward")?, &apath, "reward")?;
        let wall_time_sec = match a.get("wall_time_sec") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_f64().ok_or_else(|| BundleError::MalformedAttempt {
                path: apath.clone(),
                detail: "wall_time_sec is not a number".into(),
            })?),
        };
        let mut test_summary = Vec::new();
        if let Some(ts) = a.get("test_summary") {
            let arr = ts.as_array().ok_or_else(|| BundleError::MalformedAttempt {
                path: apath.clone(),
                detail: "test_summary is not an array".into(),
            })?;
            for (j, t) in arr.iter().enumerate() {
                let tpath = format!("{apath}.test_summary[{j}]");
                let name = get_field(t, &tpath, "name")?
                    .as_str()
                    .ok_or_else(|| BundleError::MalformedAttempt {
                        path: tpath.clone(),
                        detail: "name is not a string".into(),
                    })?
                    .to_string();
                let passed = get_field(t, &tpath, "passed")?.as_bool().ok_or_else(|| {
                    BundleError::MalformedAttempt {
                        path: tpath.clone(),
                        detail: "passed is not a boolean".into(),
                    }
                })?;
                test_summary.push(TestResult { name, passed });
            }
        }
        attempts.push(ManifestAttempt {
            index,
            reward,
            wall_time_sec,
            test_summary,
        });
    }

    let solved_at = match value.get("solved_at") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| BundleError::MalformedManifest {
            path: manifest_path.to_string(),
            detail: "solved_at is not an unsigned integer".into(),
        })? as u32),
    };

    let mut evaluations = Vec::new();
    if let Some(evs) = value.get("evaluations") {
        let arr = evs.as_array().ok_or_else(|| BundleError::MalformedManifest {
            path: manifest_path.to_string(),
            detail: "evaluations is not an array".into(),
        })?;
        for (i, e) in arr.iter().enumerate() {
            let epath = format!("{manifest_path}:evaluations[{i}]");
            let model_id = get_field(e, &epath, "model_id")?
                .as_str()
                .ok_or_else(|| BundleError::MalformedManifest {
                    path: epath.clone(),
                    detail: "model_id is not a string".into(),
                })?
                .to_string();
            let condition_str = get_field(e, &epath, "condition")?
                .as_str()
                .ok_or_else(|| BundleError::MalformedManifest {
                    path: epath.clone(),
                    detail: "condition is not a string".into(),
                })?;
            let condition = match condition_str {
                "baseline" => Condition::Baseline,
                "generated_skill" => Condition::GeneratedSkill,
                "human_skill" => Condition::HumanSkill,
                other => {
                    return Err(BundleError::MalformedManifest {
                        path: epath,
                        detail: format!("unknown condition {other:?}"),
                    })
                }
            };
            let reward = parse_reward(get_field(e, &epath, "reward")?, &epath, "reward")?;
            evaluations.push(EvaluationRecord {
                task_id: task_id.clone(),
                model_id,
                condition,
                reward,
            });
        }
    }

    Ok((task_id, attempts, solved_at, evaluations))
}

struct ManifestAttempt {
    index: u32,
    reward: f64,
    wall_time_sec: Option<f64>,
    test_summary: Vec<TestResult>,
}

fn read_lines_file(content: &str) -> Vec<String> {
    if content.is_empty() {
        return Vec::new();
    }
    let stripped = content.strip_suffix('\n').unwrap_or(content);
    stripped.split('\n').map(str::to_string).collect()
}

fn write_lines_file(lines: &[String]) -> String {
    if lines.is_empty() {
        String::new()
    } else {
        format!("{}\n", lines.join("\n"))
    }
}

/// Load and fully validate a trajectory bundle directory.
pub fn load_bundle(path: &Path) -> Result<TrajectoryBundle, BundleError> {
    let manifest_path = path.join("bundle.json");
    let manifest_str = fs::read_to_string(&manifest_path)
        .map_err(|e| BundleError::io(&manifest_path, e))?;
    let value: Value =
        serde_json::from_str(&manifest_str).map_err(|e| BundleError::MalformedManifest {
            path: manifest_path.display().to_string(),
            detail: e.to_string(),
        })?;
    let (task_id, manifest_attempts, solved_at, evaluations) =
        parse_manifest(&value, &manifest_path.display().to_string())?;

    let mut attempts = Vec::with_capacity(manifest_attempts.len());
    for ma in manifest_attempts {
        let dir = path.join("attempts").join(ma.index.to_string());
        let stdout_path = dir.join("stdout.txt");
        let stdout_bytes = fs::read(&stdout_path).map_err(|e| BundleError::io(&stdout_path, e))?;
        // Bundles written by this crate are already escape-encoded; raw
        // captures from external recorders may carry invalid bytes, which we
        // ingest through the same lossless encoding.
        let stdout_text = match String::from_utf8(stdout_bytes) {
            Ok(s) => s,
            Err(e) => encode_stdout(e.as_bytes()),
        };
        let commands_path = dir.join("commands.txt");
        let commands_str = fs::read_to_string(&commands_path)
            .map_err(|e| BundleError::io(&commands_path, e))?;
        attempts.push(Attempt {
            index: ma.index,
            commands: read_lines_file(&commands_str),
            stdout_text,
            reward: ma.reward,
            test_summary: ma.test_summary,
            wall_time_sec: ma.wall_time_sec,
        });
    }

    let memos_dir = path.join("memos");
    let mut memos = Vec::new();
    if memos_dir.is_dir() {
        let mut indices = Vec::new();
        for entry in fs::read_dir(&memos_dir).map_err(|e| BundleError::io(&memos_dir, e))? {
            let entry = entry.map_err(|e| BundleError::io(&memos_dir, e))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if let Some(num) = name
                .strip_prefix("memo_")
                .and_then(|s| s.strip_suffix(".md"))
                .and_then(|s| s.parse::<u32>().ok())
            {
                indices.push(num);
            }
        }
        indices.sort_unstable();
        for (pos, &idx) in indices.iter().enumerate() {
            if idx != pos as u32 + 1 {
                return Err(BundleError::Invariant {
                    path: memos_dir.display().to_string(),
                    source: InvariantViolation::new(format!(
                        "memo files are not contiguous from 1: found memo_{idx}.md at position {}",
                        pos + 1
                    )),
                });
            }
            let memo_path = memos_dir.join(format!("memo_{idx}.md"));
            let text = fs::read_to_string(&memo_path).map_err(|e| BundleError::io(&memo_path, e))?;
            let (memo, _) = parse_memo(&text, false).map_err(|e| BundleError::MemoParseFailure {
                path: memo_path.display().to_string(),
                source: e,
            })?;
            memos.push(memo);
        }
    }

    let skill_path = path.join("skill").join("SKILL.md");
    let skill = if skill_path.is_file() {
        let text = fs::read_to_string(&skill_path).map_err(|e| BundleError::io(&skill_path, e))?;
        Some(parse_skill(&text).0)
    } else {
        None
    };

    let bundle = TrajectoryBundle {
        task_id,
        attempts,
        memos,
        skill,
        solved_at,
        evaluations,
    };
    bundle.validate().map_err(|source| BundleError::Invariant {
        path: path.display().to_string(),
        source,
    })?;
    Ok(bundle)
}

/// Write a validated bundle to `path`, replacing any prior bundle contents.
/// `load_bundle(save_bundle(b)) == b` field for field.
pub fn save_bundle(bundle: &TrajectoryBundle, path: &Path) -> Result<(), BundleError> {
    bundle.validate().map_err(|source| BundleError::Invariant {
        path: path.display().to_string(),
        source,
    })?;
    for attempt in &bundle.attempts {
        if attempt.commands.iter().any(|c| c.contains('\n')) {
            return Err(BundleError::Invariant {
                path: path.display().to_string(),
                source: InvariantViolation::new(format!(
                    "attempt {} has a command containing a newline; one command per line",
                    attempt.index
                )),
            });
        }
    }

    fs::create_dir_all(path).map_err(|e| BundleError::io(path, e))?;
    // Stale subdirectories from a previous save would corrupt a reload.
    for sub in ["memos", "attempts", "skill"] {
        let dir = path.join(sub);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| BundleError::io(&dir, e))?;
        }
    }

    let manifest = manifest_value(bundle);
    let manifest_path = path.join("bundle.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| BundleError::io(&manifest_path, e))?;

    for attempt in &bundle.attempts {
        let dir = path.join("attempts").join(attempt.index.to_string());
        fs::create_dir_all(&dir).map_err(|e| BundleError::io(&dir, e))?;
        let stdout_path = dir.join("stdout.txt");
        fs::write(&stdout_path, attempt.stdout_text.as_bytes())
            .map_err(|e| BundleError::io(&stdout_path, e))?;
        let commands_path = dir.join("commands.txt");
        fs::write(&commands_path, write_lines_file(&attempt.commands))
            .map_err(|e| BundleError::io(&commands_path, e))?;
    }

    if !bundle.memos.is_empty() {
        let memos_dir = path.join("memos");
        fs::create_dir_all(&memos_dir).map_err(|e| BundleError::io(&memos_dir, e))?;
        for (i, memo) in bundle.memos.iter().enumerate() {
            let memo_path = memos_dir.join(format!("memo_{}.md", i + 1));
            fs::write(&memo_path, &memo.raw_text).map_err(|e| BundleError::io(&memo_path, e))?;
        }
    }

    if let Some(skill) = &bundle.skill {
        let skill_dir = path.join("skill");
        fs::create_dir_all(&skill_dir).map_err(|e| BundleError::io(&skill_dir, e))?;
        let skill_path = skill_dir.join("SKILL.md");
        fs::write(&skill_path, skill.source_text()).map_err(|e| BundleError::io(&skill_path, e))?;
    }

    Ok(())
}

fn manifest_value(bundle: &TrajectoryBundle) -> Value {
    let attempts: Vec<Value> = bundle
        .attempts
        .iter()
        .map(|a| {
            let mut obj = serde_json::Map::new();
            obj.insert("index".into(), Value::from(a.index));
            obj.insert("reward".into(), Value::from(format_reward(a.reward)));
            if let Some(w) = a.wall_time_sec {
                obj.insert("wall_time_sec".into(), Value::from(w));
            }
            obj.insert(
                "test_summary".into(),
                Value::from(
                    a.test_summary
                        .iter()
                        .map(|t| {
                            let mut to = serde_json::Map::new();
                            to.insert("name".into(), Value::from(t.name.clone()));
                            to.insert("passed".into(), Value::from(t.passed));
                            Value::Object(to)
                        })
                        .collect::<Vec<_>>(),
                ),
            );
            Value::Object(obj)
        })
        .collect();

    let evaluations: Vec<Value> = bundle
        .evaluations
        .iter()
        .map(|e| {
            let mut obj = serde_json::Map::new();
            obj.insert("model_id".into(), Value::from(e.model_id.clone()));
            obj.insert("condition".into(), Value::from(e.condition.as_str()));
            obj.insert("reward".into(), Value::from(format_reward(e.reward)));
            Value::Object(obj)
        })
        .collect();

    let mut root = serde_json::Map::new();
    root.insert("task_id".into(), Value::from(bundle.task_id.clone()));
    root.insert("attempts".into(), Value::from(attempts));
    if let Some(k) = bundle.solved_at {
        root.insert("solved_at".into(), Value::from(k));
    }
    root.insert("evaluations".into(), Value::from(evaluations));
    Value::Object(root)
}

/// Discover bundle directories directly under `corpus_dir` (any subdirectory
/// containing a `bundle.json`), in lexicographic order.
pub fn discover_bundles(corpus_dir: &Path) -> Result<Vec<PathBuf>, BundleError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(corpus_dir).map_err(|e| BundleError::io(corpus_dir, e))? {
        let entry = entry.map_err(|e| BundleError::io(corpus_dir, e))?;
        let p = entry.path();
        if p.is_dir() && p.join("bundle.json").is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::render_memo;
    use crate::model::Memo;

    fn memo(n: u32, strategy: &str) -> Memo {
        let template = Memo {
            attempt_count_header: n,
            attempts_log: (1..=n).map(|i| format!("#{i}: attempt summary")).collect(),
            commands: vec!["python solve.py".into(), "pytest -q".into()],
            verified_facts: vec!["input is csv".into(), "output path fixed".into()],
            current_error_pattern: "off-by-one in parser".into(),
            next_strategy: strategy.into(),
            raw_text: String::new(),
        };
        let raw = render_memo(&template);
        Memo {
            raw_text: raw,
            ..template
        }
    }

    fn skill_doc() -> crate::model::SkillDocument {
        parse_skill("---\nname: s\n---\n# How\n\n1. do the thing\n").0
    }

    fn attempt(index: u32, reward: f64, tests: &[(&str, bool)]) -> Attempt {
        Attempt {
            index,
            commands: vec![format!("cmd-{index}"), "pytest -q".into()],
            stdout_text: format!("output of attempt {index}\n"),
            reward,
            test_summary: tests
                .iter()
                .map(|(n, p)| TestResult { name: n.to_string(), passed: *p })
                .collect(),
            wall_time_sec: Some(1.5),
        }
    }

    fn solved_fixture() -> TrajectoryBundle {
        TrajectoryBundle {
            task_id: "fix-3".into(),
            attempts: vec![
                attempt(1, 0.0, &[("t1", false), ("t2", false)]),
                attempt(2, 0.5, &[("t1", true), ("t2", false)]),
                attempt(3, 1.0, &[("t1", true), ("t2", true)]),
            ],
            memos: vec![memo(1, "try pandas"), memo(2, "try csv module")],
            skill: Some(skill_doc()),
            solved_at: Some(3),
            evaluations: vec![
                EvaluationRecord {
                    task_id: "fix-3".into(),
                    model_id: "student-a".into(),
                    condition: Condition::Baseline,
                    reward: 0.0,
                },
                EvaluationRecord {
                    task_id: "fix-3".into(),
                    model_id: "student-a".into(),
                    condition: Condition::GeneratedSkill,
                    reward: 1.0,
                },
            ],
        }
    }

    #[test]
    fn solved_bundle_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let b = solved_fixture();
        save_bundle(&b, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        assert_eq!(loaded, b);
        assert_eq!(loaded.solved_at, Some(3));
    }

    #[test]
    fn interaction_free_bundle_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let b = TrajectoryBundle {
            task_id: "one-shot".into(),
            attempts: vec![attempt(1, 1.0, &[("t1", true)])],
            memos: vec![],
            skill: Some(skill_doc()),
            solved_at: Some(1),
            evaluations: vec![],
        };
        save_bundle(&b, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        assert_eq!(loaded.mode_label(), crate::model::ModeLabel::InteractionFree);
        assert_eq!(loaded, b);
    }

    #[test]
    fn unsolved_seven_attempt_bundle_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let attempts: Vec<Attempt> =
            (1..=7).map(|i| attempt(i, 0.1, &[("t1", false)])).collect();
        let memos: Vec<Memo> = (1..=7).map(|i| memo(i, "another angle")).collect();
        let b = TrajectoryBundle {
            task_id: "stuck".into(),
            attempts,
            memos,
            skill: None,
            solved_at: None,
            evaluations: vec![],
        };
        save_bundle(&b, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        assert_eq!(loaded.solved_at, None);
        assert_eq!(loaded, b);
        assert!(!dir.path().join("skill").exists());
    }

    #[test]
    fn non_utf8_stdout_round_trips_byte_exactly() {
        let raw: Vec<u8> = vec![0x68, 0x69, 0xff, 0xfe, 0x20, 0xef, 0xbf, 0xbd, 0x21, 0x80];
        let encoded = encode_stdout(&raw);
        assert_eq!(decode_stdout(&encoded), raw);

        let dir = tempfile::tempdir().unwrap();
        let mut b = solved_fixture();
        b.attempts[0].stdout_text = encoded.clone();
        save_bundle(&b, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        assert_eq!(loaded.attempts[0].stdout_text, encoded);
        assert_eq!(decode_stdout(&loaded.attempts[0].stdout_text), raw);
    }

    #[test]
    fn raw_invalid_bytes_on_disk_are_ingested_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        let b = solved_fixture();
        save_bundle(&b, dir.path()).unwrap();
        // Simulate an external recorder that wrote raw invalid bytes.
        let raw = vec![0x6f, 0x6b, 0xc3, 0x28, 0x0a];
        fs::write(dir.path().join("attempts/1/stdout.txt"), &raw).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        assert_eq!(decode_stdout(&loaded.attempts[0].stdout_text), raw);
    }

    #[test]
    fn missing_manifest_field_is_named() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&solved_fixture(), dir.path()).unwrap();
        fs::write(dir.path().join("bundle.json"), "{\"attempts\": []}\n").unwrap();
        match load_bundle(dir.path()) {
            Err(BundleError::MissingField { field, .. }) => assert_eq!(field, "task_id"),
            other => panic!("expected MissingField, got {other:?}"),
        }
    }

    #[test]
    fn malformed_attempt_is_located() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&solved_fixture(), dir.path()).unwrap();
        fs::write(
            dir.path().join("bundle.json"),
            "{\"task_id\": \"x\", \"attempts\": [{\"index\": 1, \"reward\": \"zero\"}]}\n",
        )
        .unwrap();
        match load_bundle(dir.path()) {
            Err(BundleError::MalformedManifest { path, .. }) => {
                assert!(path.contains("attempts[0]"), "path = {path}")
            }
            other => panic!("expected malformed reward, got {other:?}"),
        }
    }

    #[test]
    fn invariant_violations_surface_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let b = solved_fixture();
        save_bundle(&b, dir.path()).unwrap();
        // Claim success on an attempt whose reward is below 1.
        let manifest = fs::read_to_string(dir.path().join("bundle.json")).unwrap();
        let patched = manifest.replace("\"solved_at\": 3", "\"solved_at\": 2");
        fs::write(dir.path().join("bundle.json"), patched).unwrap();
        assert!(matches!(
            load_bundle(dir.path()),
            Err(BundleError::Invariant { .. })
        ));
    }

    #[test]
    fn empty_and_gapped_memo_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let b = solved_fixture();
        save_bundle(&b, dir.path()).unwrap();
        fs::remove_file(dir.path().join("memos/memo_1.md")).unwrap();
        assert!(matches!(
            load_bundle(dir.path()),
            Err(BundleError::Invariant { .. })
        ));
    }

    #[test]
    fn commands_with_interior_empty_lines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = solved_fixture();
        b.attempts[1].commands = vec!["a".into(), String::new(), "b".into()];
        save_bundle(&b, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        assert_eq!(loaded.attempts[1].commands, b.attempts[1].commands);
    }

    #[test]
    fn newline_in_command_rejected_at_save() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = solved_fixture();
        b.attempts[0].commands = vec!["bad\ncommand".into()];
        assert!(matches!(
            save_bundle(&b, dir.path()),
            Err(BundleError::Invariant { .. })
        ));
    }
}
