//! A deterministic, pluggable exploration loop.
//!
//! The loop drives four ports — agent, judge, reflector, distiller — for up
//! to `n_max` attempts per task: execute, judge, then either distill a
//! skill (on success) or rewrite the memo and, when the proxy monitor is
//! enabled, observe the step proxy and carry the resulting directive into
//! the next injection. Scripted ports replay scenario files, which makes
//! with/without-monitor arms exactly comparable and whole runs byte-stable
//! under a fixed seed.
//!
//! No prompt text is generated here: injections carry structured state
//! (memo, directive kind, anchor sections, urgency flag) and prompt
//! rendering is an adapter concern.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    apply_directive, observe_with_event, step_proxy_pdi_from_attempts, ControllerConfig,
    ControllerError, ControllerEvent, Directive, InterventionState,
};
use crate::model::{Attempt, Memo, TestResult, TrajectoryBundle};
use crate::parse::{parse_memo, parse_skill, render_memo, ParseError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("port contract violation: {detail}")]
    PortContractViolation { detail: String },
    #[error("task is unsolved; evidence assembly needs a successful attempt")]
    Unsolved,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn contract(detail: impl Into<String>) -> HarnessError {
    HarnessError::PortContractViolation {
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Ports
// ---------------------------------------------------------------------------

/// Static description of the task under exploration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    /// Condensed task instruction; becomes the Task Pattern evidence block.
    pub summary: String,
    /// Runtime context descriptor; becomes the Environment evidence block.
    pub environment: String,
}

/// Structured state injected into an attempt. Carries no metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    /// The previous memo, after directive application (strong directives
    /// withhold its Next Strategy section). Absent on the first attempt.
    pub memo: Option<Memo>,
    /// The directive emitted after the previous attempt.
    pub directive: Directive,
    /// Final-attempt warning flag, set on attempt n_max.
    pub urgency: bool,
}

/// Deterministic run context passed to every port call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunCtx {
    pub seed: u64,
    pub attempt_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentOutput {
    pub commands: Vec<String>,
    pub stdout_text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Judgement {
    pub reward: f64,
    pub test_summary: Vec<TestResult>,
}

/// Executes one attempt. Must be deterministic for a fixed seed and free of
/// side effects.
pub trait AgentPort {
    fn execute(&self, task: &TaskSpec, injection: &Injection, ctx: &RunCtx) -> AgentOutput;
}

/// Scores an attempt's output. Deterministic; reward in [0, 1].
pub trait JudgePort {
    fn judge(&self, task: &TaskSpec, output: &AgentOutput, ctx: &RunCtx) -> Judgement;
}

/// Rewrites the exploration memo after a failed attempt. The output must
/// parse under strict memo parsing; it is a rewrite, not an append.
pub trait ReflectorPort {
    fn reflect(
        &self,
        previous: Option<&Memo>,
        commands: &[String],
        test_summary: &[TestResult],
        directive: &Directive,
        ctx: &RunCtx,
    ) -> String;
}

/// Produces a skill document from the assembled evidence blocks.
pub trait DistillerPort {
    fn distill(&self, evidence: &EvidenceBlocks, ctx: &RunCtx) -> String;
}

/// The four ports a run needs.
pub struct PortSet<'a> {
    pub agent: &'a dyn AgentPort,
    pub judge: &'a dyn JudgePort,
    pub reflector: &'a dyn ReflectorPort,
    pub distiller: &'a dyn DistillerPort,
}

// ---------------------------------------------------------------------------
// Command chain
// ---------------------------------------------------------------------------

/// Semantic category of a command in the execution chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandCategory {
    Verify,
    Implement,
    Inspect,
    Prepare,
    Action,
}

impl CommandCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            CommandCategory::Verify => "verify",
            CommandCategory::Implement => "implement",
            CommandCategory::Inspect => "inspect",
            CommandCategory::Prepare => "prepare",
            CommandCategory::Action => "action",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRule {
    pub category: CommandCategory,
    pub keywords: Vec<String>,
    pub weight: f64,
}

/// Keyword table for command classification and importance scoring.
/// Verification and implementation actions score highest; `low_signal`
/// commands (matched on the first token) are dropped entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandTable {
    pub rules: Vec<CategoryRule>,
    pub low_signal: Vec<String>,
}

impl Default for CommandTable {
    fn default() -> Self {
        let rule = |category, keywords: &[&str], weight| CategoryRule {
            category,
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            weight,
        };
        CommandTable {
            rules: vec![
                rule(
                    CommandCategory::Verify,
                    &["pytest", "test", "assert", "verify", "validate", "check", "diff"],
                    3.0,
                ),
                rule(
                    CommandCategory::Implement,
                    &["python", "pip", "cargo", "make", "gcc", "install", "tee", "patch"],
                    2.5,
                ),
                rule(
                    CommandCategory::Inspect,
                    &["cat", "grep", "find", "head", "tail", "wc", "stat"],
                    1.5,
                ),
                rule(
                    CommandCategory::Prepare,
                    &["mkdir", "cp", "mv", "touch", "chmod", "export", "cd"],
                    1.2,
                ),
                rule(
                    CommandCategory::Action,
                    &["run", "bash", "sh", "git", "curl", "wget"],
                    1.0,
                ),
            ],
            low_signal: vec!["ls".into(), "pwd".into(), "echo".into()],
        }
    }
}

impl CommandTable {
    /// Classify one command and compute its importance score: the sum of
    /// matched keyword weights, with the category taken from the rule
    /// contributing the most (earlier rules win ties). Unmatched commands
    /// fall back to Action with score 0.
    pub fn classify(&self, command: &str) -> (CommandCategory, f64) {
        let mut total = 0.0;
        let mut best_category = CommandCategory::Action;
        let mut best_contribution = 0.0;
        for rule in &self.rules {
            let hits = rule.keywords.iter().filter(|k| command.contains(*k)).count();
            if hits == 0 {
                continue;
            }
            let contribution = rule.weight * hits as f64;
            total += contribution;
            if contribution > best_contribution {
                best_contribution = contribution;
                best_category = rule.category;
            }
        }
        (best_category, total)
    }

    /// True when the command's first token is a low-signal command.
    pub fn is_low_signal(&self, command: &str) -> bool {
        match command.split_whitespace().next() {
            Some(first) => self.low_signal.iter().any(|l| l == first),
            None => true,
        }
    }
}

/// Default chain length.
pub const DEFAULT_CHAIN_K: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub command: String,
    pub category: CommandCategory,
    pub score: f64,
}

/// Filter low-signal commands, score the rest, keep the top-k by score, and
/// return them in original execution order. May return fewer than k.
pub fn command_chain(commands: &[String], k: usize, table: &CommandTable) -> Vec<ChainEntry> {
    let mut scored: Vec<(usize, ChainEntry)> = commands
        .iter()
        .enumerate()
        .filter(|(_, c)| !table.is_low_signal(c))
        .map(|(i, c)| {
            let (category, score) = table.classify(c);
            (
                i,
                ChainEntry {
                    command: c.clone(),
                    category,
                    score,
                },
            )
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.score
            .partial_cmp(&a.1.score)
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored.sort_by_key(|(i, _)| *i);
    scored.into_iter().map(|(_, e)| e).collect()
}

// ---------------------------------------------------------------------------
// Evidence
// ---------------------------------------------------------------------------

/// Default length of the raw stdout tail carried as evidence.
pub const DEFAULT_TAIL_CHARS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub passed_tests: Vec<String>,
    pub final_reward: f64,
}

/// The six structured evidence blocks assembled from a solved trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBlocks {
    pub task_pattern: String,
    pub execution_chain: Vec<ChainEntry>,
    pub verification: Verification,
    pub lessons: String,
    pub environment: String,
    pub raw_support_tail: String,
}

/// Assemble the six evidence blocks from an in-progress trajectory whose
/// last attempt succeeded.
pub fn assemble_evidence(
    task: &TaskSpec,
    attempts: &[Attempt],
    memos: &[Memo],
    table: &CommandTable,
    chain_k: usize,
    tail_chars: usize,
) -> Result<EvidenceBlocks, HarnessError> {
    let success = attempts
        .iter()
        .find(|a| a.reward >= 1.0)
        .ok_or(HarnessError::Unsolved)?;

    // Lessons: every diagnosed error pattern, plus annotations for tests
    // that failed in more than one attempt.
    let mut lessons: Vec<String> = memos
        .iter()
        .filter(|m| !m.current_error_pattern.is_empty())
        .map(|m| m.current_error_pattern.clone())
        .collect();
    let mut failure_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for attempt in attempts {
        for t in &attempt.test_summary {
            if !t.passed {
                *failure_counts.entry(t.name.as_str()).or_insert(0) += 1;
            }
        }
    }
    for (name, count) in failure_counts {
        if count >= 2 {
            lessons.push(format!("repeated failure: {name} (failed in {count} attempts)"));
        }
    }

    let tail: String = {
        let chars: Vec<char> = success.stdout_text.chars().collect();
        let start = chars.len().saturating_sub(tail_chars);
        chars[start..].iter().collect()
    };

    Ok(EvidenceBlocks {
        task_pattern: task.summary.clone(),
        execution_chain: command_chain(&success.commands, chain_k, table),
        verification: Verification {
            passed_tests: success.passed_test_names(),
            final_reward: success.reward,
        },
        lessons: lessons.join("\n"),
        environment: task.environment.clone(),
        raw_support_tail: tail,
    })
}

// ---------------------------------------------------------------------------
// The loop
// ---------------------------------------------------------------------------

/// Configuration for one exploration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    /// Maximum attempt budget.
    pub n_max: u32,
    /// Drive the proxy monitor and carry its directives into injections.
    pub pdi_enabled: bool,
    pub controller: ControllerConfig,
    /// Length of the raw stdout tail evidence block, in characters.
    pub tail_chars: usize,
    /// Execution-chain length.
    pub chain_k: usize,
    pub command_table: CommandTable,
}

impl HarnessConfig {
    pub fn new(controller: ControllerConfig) -> HarnessConfig {
        HarnessConfig {
            n_max: 7,
            pdi_enabled: false,
            controller,
            tail_chars: DEFAULT_TAIL_CHARS,
            chain_k: DEFAULT_CHAIN_K,
            command_table: CommandTable::default(),
        }
    }
}

/// Result of one run: the trajectory bundle plus the controller event log
/// (empty when the monitor is disabled).
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub bundle: TrajectoryBundle,
    pub events: Vec<ControllerEvent>,
}

/// Run the exploration loop for one task.
///
/// Per attempt: execute, judge; on success assemble evidence, distill, and
/// stop; on failure reflect, then (when enabled) score the step proxy and
/// carry the directive into the next injection. The final attempt carries
/// the urgency flag. Unsolved tasks yield a bundle with no skill and the
/// full memo history.
pub fn run_task(
    task: &TaskSpec,
    ports: &PortSet<'_>,
    config: &HarnessConfig,
    seed: u64,
) -> Result<RunOutput, HarnessError> {
    if config.n_max < 1 {
        return Err(HarnessError::InvalidScenario("n_max must be >= 1".into()));
    }
    config.controller.validate()?;

    let mut attempts: Vec<Attempt> = Vec::new();
    let mut memos: Vec<Memo> = Vec::new();
    let mut skill = None;
    let mut solved_at = None;
    let mut events: Vec<ControllerEvent> = Vec::new();
    let mut state = InterventionState::new();
    let mut directive = Directive::none();

    for k in 1..=config.n_max {
        let ctx = RunCtx {
            seed,
            attempt_index: k,
        };
        let injection = Injection {
            memo: memos.last().map(|m| apply_directive(&directive, m)),
            directive: directive.clone(),
            urgency: k == config.n_max,
        };
        let output = ports.agent.execute(task, &injection, &ctx);
        let judgement = ports.judge.judge(task, &output, &ctx);
        if !(0.0..=1.0).contains(&judgement.reward) {
            return Err(contract(format!(
                "judge returned reward {} outside [0, 1] at attempt {k}",
                judgement.reward
            )));
        }
        attempts.push(Attempt {
            index: k,
            commands: output.commands,
            stdout_text: output.stdout_text,
            reward: judgement.reward,
            test_summary: judgement.test_summary,
            wall_time_sec: None,
        });
        let attempt = attempts.last().unwrap();

        if attempt.reward >= 1.0 {
            let evidence = assemble_evidence(
                task,
                &attempts,
                &memos,
                &config.command_table,
                config.chain_k,
                config.tail_chars,
            )?;
            let text = ports.distiller.distill(&evidence, &ctx);
            skill = Some(parse_skill(&text).0);
            solved_at = Some(k);
            break;
        }

        let memo_text = ports.reflector.reflect(
            memos.last(),
            &attempt.commands,
            &attempt.test_summary,
            &directive,
            &ctx,
        );
        let memo = match parse_memo(&memo_text, true) {
            Ok((m, _)) => m,
            Err(e @ (ParseError::EmptyInput | ParseError::MissingSection(_))) => {
                return Err(contract(format!(
                    "reflector emitted an unparseable memo at attempt {k}: {e}"
                )))
            }
        };
        memos.push(memo);

        if config.pdi_enabled {
            let memo_k = memos.last().unwrap();
            let memo_prev = memos.len().checked_sub(2).map(|i| &memos[i]);
            let attempt_prev = attempts.len().checked_sub(2).map(|i| &attempts[i]);
            let raw = step_proxy_pdi_from_attempts(
                memo_k,
                memo_prev,
                attempt,
                attempt_prev,
                &config.controller,
            )?;
            let (next_state, next_directive, event) =
                observe_with_event(&state, raw, &config.controller);
            state = next_state;
            directive = next_directive;
            events.push(event);
        }
    }

    let bundle = TrajectoryBundle {
        task_id: task.id.clone(),
        attempts,
        memos,
        skill,
        solved_at,
        evaluations: vec![],
    };
    bundle
        .validate()
        .map_err(|e| contract(format!("loop produced an invalid bundle: {e}")))?;
    Ok(RunOutput { bundle, events })
}

// ---------------------------------------------------------------------------
// Scripted ports and the scenario format
// ---------------------------------------------------------------------------

/// Scripted memo content for one failed attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMemo {
    /// One-line summary appended to the Attempts Log.
    pub log_entry: String,
    #[serde(default)]
    pub facts: Vec<String>,
    #[serde(default)]
    pub error_pattern: String,
    #[serde(default)]
    pub next_strategy: String,
}

/// One scripted attempt: what the agent does, what the judge returns, and
/// the memo content the reflector writes if the attempt fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAttempt {
    #[serde(default)]
    pub commands: Vec<String>,
    #[serde(default)]
    pub stdout: String,
    /// Decimal reward string, parsed exactly.
    pub reward: String,
    #[serde(default)]
    pub tests: Vec<ScenarioTest>,
    #[serde(default)]
    pub memo: Option<ScenarioMemo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTest {
    pub name: String,
    pub passed: bool,
}

/// A scripted exploration scenario. Attempts beyond the scripted list
/// repeat the last entry, which is how stale-agent behavior is modeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub task: TaskSpec,
    pub attempts: Vec<ScenarioAttempt>,
    /// Extra markdown appended to the distilled skill body.
    #[serde(default)]
    pub skill_body: String,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, HarnessError> {
        let scenario: Scenario = serde_json::from_str(text)
            .map_err(|e| HarnessError::InvalidScenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Scenario::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.attempts.is_empty() {
            return Err(HarnessError::InvalidScenario(
                "scenario needs at least one attempt".into(),
            ));
        }
        for (i, a) in self.attempts.iter().enumerate() {
            let reward: f64 = a.reward.trim().parse().map_err(|_| {
                HarnessError::InvalidScenario(format!(
                    "attempt {} reward {:?} is not a decimal",
                    i + 1,
                    a.reward
                ))
            })?;
            if !(0.0..=1.0).contains(&reward) {
                return Err(HarnessError::InvalidScenario(format!(
                    "attempt {} reward {} outside [0, 1]",
                    i + 1,
                    reward
                )));
            }
            if reward < 1.0 && a.memo.is_none() {
                return Err(HarnessError::InvalidScenario(format!(
                    "failed attempt {} has no scripted memo",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    fn attempt(&self, k: u32) -> &ScenarioAttempt {
        let idx = (k as usize - 1).min(self.attempts.len() - 1);
        &self.attempts[idx]
    }
}

/// All four ports, scripted from one scenario.
pub struct ScriptedPorts {
    scenario: Scenario,
}

impl ScriptedPorts {
    pub fn new(scenario: Scenario) -> ScriptedPorts {
        ScriptedPorts { scenario }
    }

    pub fn port_set(&self) -> PortSet<'_> {
        PortSet {
            agent: self,
            judge: self,
            reflector: self,
            distiller: self,
        }
    }
}

impl AgentPort for ScriptedPorts {
    fn execute(&self, _task: &TaskSpec, _injection: &Injection, ctx: &RunCtx) -> AgentOutput {
        let a = self.scenario.attempt(ctx.attempt_index);
        AgentOutput {
            commands: a.commands.clone(),
            stdout_text: a.stdout.clone(),
        }
    }
}

impl JudgePort for ScriptedPorts {
    fn judge(&self, _task: &TaskSpec, _output: &AgentOutput, ctx: &RunCtx) -> Judgement {
        let a = self.scenario.attempt(ctx.attempt_index);
        Judgement {
            reward: a.reward.trim().parse().expect("validated at load"),
            test_summary: a
                .tests
                .iter()
                .map(|t| TestResult {
                    name: t.name.clone(),
                    passed: t.passed,
                })
                .collect(),
        }
    }
}

impl ReflectorPort for ScriptedPorts {
    fn reflect(
        &self,
        _previous: Option<&Memo>,
        commands: &[String],
        _test_summary: &[TestResult],
        _directive: &Directive,
        ctx: &RunCtx,
    ) -> String {
        let k = ctx.attempt_index;
        let scripted = self
            .scenario
            .attempt(k)
            .memo
            .clone()
            .unwrap_or_else(|| ScenarioMemo {
                log_entry: format!("#{k}: attempt failed"),
                facts: vec![],
                error_pattern: String::new(),
                next_strategy: String::new(),
            });
        // A rewrite: the log covers every attempt so far, the rest reflects
        // only the current scripted state.
        let attempts_log = (1..=k)
            .map(|i| {
                let m = self.scenario.attempt(i).memo.clone();
                m.map(|m| m.log_entry)
                    .unwrap_or_else(|| format!("#{i}: attempt"))
            })
            .collect();
        let memo = Memo {
            attempt_count_header: k,
            attempts_log,
            commands: commands.to_vec(),
            verified_facts: scripted.facts,
            current_error_pattern: scripted.error_pattern,
            next_strategy: scripted.next_strategy,
            raw_text: String::new(),
        };
        render_memo(&memo)
    }
}

impl DistillerPort for ScriptedPorts {
    fn distill(&self, evidence: &EvidenceBlocks, _ctx: &RunCtx) -> String {
        let mut body = String::new();
        body.push_str(&format!(
            "---\nname: {}-skill\nversion: \"1\"\n---\n",
            self.scenario.task.id
        ));
        body.push_str(&format!("# Skill: {}\n\n", evidence.task_pattern));
        body.push_str("## Workflow\n");
        body.push_str("1. Reproduce the verified command chain in order.\n");
        body.push_str("2. Compare outputs against the verification signals.\n");
        body.push_str("3. Avoid the repeated failures listed under Lessons.\n\n");
        body.push_str("## Execution Chain\n```sh\n");
        for entry in &evidence.execution_chain {
            body.push_str(&entry.command);
            body.push('\n');
        }
        body.push_str("```\n\n## Verification\n");
        body.push_str(&format!(
            "Final reward {}; passing tests: {}\n",
            evidence.verification.final_reward,
            evidence.verification.passed_tests.join(", ")
        ));
        body.push_str(&format!("\n## Environment\n{}\n", evidence.environment));
        if !evidence.lessons.is_empty() {
            body.push_str(&format!("\n## Lessons\n{}\n", evidence.lessons));
        }
        if !self.scenario.skill_body.is_empty() {
            body.push('\n');
            body.push_str(&self.scenario.skill_body);
            if !self.scenario.skill_body.ends_with('\n') {
                body.push('\n');
            }
        }
        body
    }
}
