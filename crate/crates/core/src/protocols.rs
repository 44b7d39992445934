//! The four enforcement conditions as deterministic state machines.
//!
//! Incremental admits one feature at a time against a growing regression
//! suite; Whole-Project builds everything and then loops deploy-test-repair
//! over the full suite; Agentic hands the tools to the agent and enforces
//! nothing; the no-TDD baseline gets only the requirement text. All four
//! consume the identical approved suite and instruction, are evaluated with
//! the same validation agent, and append one outcome record per deploy-test
//! cycle to `<workdir>/.tddloop/outcomes.jsonl`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::agent::{
    implement_all_task, implement_feature_task, repair_task, run_agent, AgentError,
    AgenticConfig, AgentTranscript, ToolBelt, AGENT_SYSTEM_PROMPT, AGENT_TDD_SYSTEM_PROMPT,
};
use crate::deploy::{deploy, DeployError, DeployOptions};
use crate::gateway::Gateway;
use crate::model::{
    to_canonical_json, CaseVerdict, ClassifiedFailure, FailureClass, FailureReport, ModelError,
    OutcomeRecord, ProtocolKind, Scope, SuiteRunReport, TestCase, TestResult, TestSuite,
    TokenUsage, Trajectory, Verdict,
};
use crate::validate::{run_suite, EngineKind, ValidateError, ValidateOptions};

/// Subdirectory for run artifacts inside a workdir.
pub const RUN_STATE_DIR: &str = ".tddloop";
/// Append-only JSON-lines log of every deploy-test cycle.
pub const OUTCOME_LOG_NAME: &str = "outcomes.jsonl";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("attempt budget must be >= 1")]
    ZeroBudget,
    #[error("cannot run a protocol over an empty test suite")]
    EmptySuite,
    #[error("classify_failures requires a non-passing report")]
    AllPassing,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("validation: {0}")]
    Validate(#[from] ValidateError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("outcome log io: {0}")]
    Io(#[from] std::io::Error),
}

/// Shared plumbing for one protocol run. The gateway is shared between the
/// coding agent and the validation agent so a run records one cassette.
pub struct ProtocolDeps {
    pub workdir: PathBuf,
    pub gateway: Arc<Gateway>,
    pub engine: EngineKind,
    pub validate: ValidateOptions,
    pub deploy: DeployOptions,
    pub run_id: String,
}

/// A finished protocol run: the outcome log, the last evaluation, and the
/// agent transcripts, with token usage for this run alone.
#[derive(Debug)]
pub struct ProtocolRun {
    pub run_id: String,
    pub condition: ProtocolKind,
    pub workdir: PathBuf,
    pub outcomes: Vec<OutcomeRecord>,
    /// Results of the last deploy-test cycle (for Agentic and the baseline,
    /// the single external evaluation).
    pub final_report: SuiteRunReport,
    /// Admitted case ids in admission order; only Incremental populates it.
    pub regression_suite: Vec<String>,
    pub transcripts: Vec<AgentTranscript>,
    pub usage: TokenUsage,
    /// Whole-Project / Agentic / baseline: did the last evaluation pass
    /// everything. Incremental: was every feature admitted.
    pub all_pass: bool,
}

/// Whole-Project (Alg. 2): implement everything once, then at most `k`
/// deploy-test-repair cycles over the full suite, stopping early when all
/// tests pass. Repair follows every non-passing cycle, including the last.
pub fn run_whole_project(
    instruction: &str,
    suite: &TestSuite,
    k: u32,
    deps: &ProtocolDeps,
) -> Result<ProtocolRun, ProtocolError> {
    if k < 1 {
        return Err(ProtocolError::ZeroBudget);
    }
    let usage_start = deps.gateway.run_usage();
    let mut log = OutcomeLog::open(&deps.workdir)?;
    let mut transcripts = Vec::new();
    let mut belt = ToolBelt::baseline(&deps.workdir);

    let task = implement_all_task(suite)?;
    transcripts.push(run_agent(
        AGENT_SYSTEM_PROMPT,
        &task,
        &mut belt,
        &deps.workdir,
        &deps.gateway,
    )?);

    let mut last_report = None;
    for attempt in 1..=k {
        let report = evaluate_cycle(deps, &suite.cases, instruction)?;
        log.append(outcome(deps, ProtocolKind::WholeProject, Scope::Suite, attempt, &report))?;
        let failures = if report.all_pass { Vec::new() } else { classify_failures(&report)? };
        let done = report.all_pass;
        last_report = Some(report);
        if done {
            break;
        }
        transcripts.push(run_agent(
            AGENT_SYSTEM_PROMPT,
            &repair_task(&failures),
            &mut belt,
            &deps.workdir,
            &deps.gateway,
        )?);
    }

    let final_report = last_report.expect("k >= 1 guarantees at least one cycle");
    let all_pass = final_report.all_pass;
    Ok(ProtocolRun {
        run_id: deps.run_id.clone(),
        condition: ProtocolKind::WholeProject,
        workdir: deps.workdir.clone(),
        outcomes: log.records,
        final_report,
        regression_suite: Vec::new(),
        transcripts,
        usage: usage_since(usage_start, deps.gateway.run_usage()),
        all_pass,
    })
}

/// Incremental (Alg. 3): per feature, implement once, then at most `k`
/// cycles running the regression suite P plus the current case. All-pass
/// admits the case to P; an exhausted budget skips it (the outer loop
/// advances unconditionally, so later features are still attempted).
pub fn run_incremental(
    instruction: &str,
    suite: &TestSuite,
    k: u32,
    deps: &ProtocolDeps,
) -> Result<ProtocolRun, ProtocolError> {
    if k < 1 {
        return Err(ProtocolError::ZeroBudget);
    }
    if suite.cases.is_empty() {
        return Err(ProtocolError::EmptySuite);
    }
    let usage_start = deps.gateway.run_usage();
    let mut log = OutcomeLog::open(&deps.workdir)?;
    let mut transcripts = Vec::new();
    let mut belt = ToolBelt::baseline(&deps.workdir);
    let mut admitted: Vec<String> = Vec::new();
    let mut last_report = None;

    for case in &suite.cases {
        let task = implement_feature_task(instruction, suite, case);
        transcripts.push(run_agent(
            AGENT_SYSTEM_PROMPT,
            &task,
            &mut belt,
            &deps.workdir,
            &deps.gateway,
        )?);

        for attempt in 1..=k {
            let scope_cases: Vec<TestCase> = admitted
                .iter()
                .map(|id| suite.case(id).expect("admitted ids come from the suite").clone())
                .chain(std::iter::once(case.clone()))
                .collect();
            let report = evaluate_cycle(deps, &scope_cases, instruction)?;
            log.append(outcome(
                deps,
                ProtocolKind::Incremental,
                Scope::Feature { case_id: case.id.clone() },
                attempt,
                &report,
            ))?;
            let failures = if report.all_pass { Vec::new() } else { classify_failures(&report)? };
            let passed = report.all_pass;
            last_report = Some(report);
            if passed {
                admitted.push(case.id.clone());
                break;
            }
            transcripts.push(run_agent(
                AGENT_SYSTEM_PROMPT,
                &repair_task(&failures),
                &mut belt,
                &deps.workdir,
                &deps.gateway,
            )?);
        }
    }

    let all_pass = admitted.len() == suite.cases.len();
    Ok(ProtocolRun {
        run_id: deps.run_id.clone(),
        condition: ProtocolKind::Incremental,
        workdir: deps.workdir.clone(),
        outcomes: log.records,
        final_report: last_report.expect("non-empty suite ran at least one cycle"),
        regression_suite: admitted,
        transcripts,
        usage: usage_since(usage_start, deps.gateway.run_usage()),
        all_pass,
    })
}

/// Agentic: one agent invocation with the TDD tools and the workflow stated
/// as instruction; no enforcement. Anything the agent left running is
/// reclaimed, then the harness performs exactly one external evaluation.
pub fn run_agentic(
    instruction: &str,
    suite: &TestSuite,
    deps: &ProtocolDeps,
) -> Result<ProtocolRun, ProtocolError> {
    let usage_start = deps.gateway.run_usage();
    let mut log = OutcomeLog::open(&deps.workdir)?;
    let task = implement_all_task(suite)?;
    let mut belt = ToolBelt::agentic(
        &deps.workdir,
        AgenticConfig {
            gateway: Arc::clone(&deps.gateway),
            engine: deps.engine.clone(),
            validate: deps.validate.clone(),
            deploy: deps.deploy.clone(),
        },
    );
    let transcript =
        run_agent(AGENT_TDD_SYSTEM_PROMPT, &task, &mut belt, &deps.workdir, &deps.gateway)?;
    drop(belt); // stops any app the agent forgot

    let final_report = evaluate_cycle(deps, &suite.cases, instruction)?;
    log.append(outcome(deps, ProtocolKind::Agentic, Scope::Suite, 1, &final_report))?;
    let all_pass = final_report.all_pass;
    Ok(ProtocolRun {
        run_id: deps.run_id.clone(),
        condition: ProtocolKind::Agentic,
        workdir: deps.workdir.clone(),
        outcomes: log.records,
        final_report,
        regression_suite: Vec::new(),
        transcripts: vec![transcript],
        usage: usage_since(usage_start, deps.gateway.run_usage()),
        all_pass,
    })
}

/// The task the no-TDD baseline sees: the requirement and nothing else.
pub fn baseline_task(instruction: &str) -> String {
    format!("Build a web application that satisfies this requirement:\n\n{}\n", instruction.trim())
}

/// Non-TDD baseline: the agent receives only the requirements — the suite is
/// used exclusively for the single external evaluation afterwards.
pub fn run_baseline(
    instruction: &str,
    suite: &TestSuite,
    deps: &ProtocolDeps,
) -> Result<ProtocolRun, ProtocolError> {
    if suite.cases.is_empty() {
        return Err(ProtocolError::EmptySuite);
    }
    let usage_start = deps.gateway.run_usage();
    let mut log = OutcomeLog::open(&deps.workdir)?;
    let mut belt = ToolBelt::baseline(&deps.workdir);
    let transcript = run_agent(
        AGENT_SYSTEM_PROMPT,
        &baseline_task(instruction),
        &mut belt,
        &deps.workdir,
        &deps.gateway,
    )?;

    let final_report = evaluate_cycle(deps, &suite.cases, instruction)?;
    log.append(outcome(deps, ProtocolKind::None, Scope::Suite, 1, &final_report))?;
    let all_pass = final_report.all_pass;
    Ok(ProtocolRun {
        run_id: deps.run_id.clone(),
        condition: ProtocolKind::None,
        workdir: deps.workdir.clone(),
        outcomes: log.records,
        final_report,
        regression_suite: Vec::new(),
        transcripts: vec![transcript],
        usage: usage_since(usage_start, deps.gateway.run_usage()),
        all_pass,
    })
}

/// Maps every non-passing result to a failure class for the repair prompt.
pub fn classify_failures(
    report: &SuiteRunReport,
) -> Result<Vec<ClassifiedFailure>, ProtocolError> {
    if report.all_pass {
        return Err(ProtocolError::AllPassing);
    }
    Ok(report
        .results
        .iter()
        .filter(|result| result.verdict != Verdict::Pass)
        .map(|result| ClassifiedFailure {
            class: classify_result(result).expect("non-pass results carry a report"),
            report: result
                .failure_report
                .clone()
                .expect("non-pass results carry a report"),
        })
        .collect())
}

/// The classification rules, first match wins:
/// launch/readiness trouble, unmatched/ambiguous selectors, an unmet
/// expectation judged on a clean trajectory, timeouts, console errors (or
/// unparseable model output), navigation errors; anything left is an
/// assertion mismatch. Passing results map to nothing.
pub fn classify_result(result: &TestResult) -> Option<FailureClass> {
    let report = result.failure_report.as_ref()?;
    let errors: Vec<&str> = result
        .trajectory
        .records()
        .iter()
        .filter_map(|record| record.outcome.error_message())
        .collect();
    let console_errors = result
        .trajectory
        .records()
        .iter()
        .any(|record| record.post_state_digest.contains("console_errors="))
        || report.observation.contains("console_errors=")
        || report.observation.contains("console error");
    let rationale = report.rationale.as_str();

    if report.failed_at == "deployment"
        || report.observation.contains("did not become ready")
        || report.observation.contains("exited during startup")
    {
        return Some(FailureClass::DeploymentFailure);
    }
    if errors
        .iter()
        .any(|e| e.contains("no element matched") || e.contains("ambiguous selector"))
    {
        return Some(FailureClass::ElementNotFound);
    }
    if errors.is_empty()
        && !console_errors
        && !rationale.is_empty()
        && rationale != "max iterations reached"
        && !rationale.starts_with("malformed model output")
    {
        return Some(FailureClass::AssertionMismatch);
    }
    if errors.iter().any(|e| e.contains("timeout")) || rationale == "max iterations reached" {
        return Some(FailureClass::InteractionTimeout);
    }
    if console_errors || rationale.starts_with("malformed model output") {
        return Some(FailureClass::RuntimeError);
    }
    if errors.iter().any(|e| e.contains("navigation failed")) {
        return Some(FailureClass::NavigationFailure);
    }
    Some(FailureClass::AssertionMismatch)
}

/// One deploy-test cycle over the given cases: deploy fresh, run, stop. A
/// deployment error becomes a whole-scope failing report (one deployment
/// failure per case, launch log attached) so it is logged, classified, and
/// repaired like any other attempt.
fn evaluate_cycle(
    deps: &ProtocolDeps,
    cases: &[TestCase],
    instruction: &str,
) -> Result<SuiteRunReport, ProtocolError> {
    let scope = TestSuite::new(cases.to_vec(), instruction)?;
    match deploy(&deps.workdir, &deps.deploy) {
        Ok(mut app) => {
            let outcome = run_suite(&scope, app.url(), &deps.gateway, &deps.engine, &deps.validate);
            app.stop();
            Ok(outcome?)
        }
        Err(err) => Ok(deploy_failure_report(cases, &err)),
    }
}

pub(crate) fn deploy_failure_report(cases: &[TestCase], err: &DeployError) -> SuiteRunReport {
    let results = cases
        .iter()
        .map(|case| {
            TestResult::new(
                case.id.clone(),
                Verdict::Fail,
                Trajectory::new(),
                Some(FailureReport {
                    feature: case.feature.clone(),
                    failed_at: "deployment".into(),
                    observation: err.to_string(),
                    steps_completed: Vec::new(),
                    rationale: "the app could not be deployed".into(),
                }),
                0,
            )
            .expect("deployment failure report is well-formed")
        })
        .collect();
    SuiteRunReport::from_results(results)
}

fn outcome(
    deps: &ProtocolDeps,
    condition: ProtocolKind,
    scope: Scope,
    attempt: u32,
    report: &SuiteRunReport,
) -> OutcomeRecord {
    OutcomeRecord {
        run_id: deps.run_id.clone(),
        condition,
        scope,
        attempt,
        verdicts: report
            .results
            .iter()
            .map(|r| CaseVerdict { case_id: r.case_id.clone(), verdict: r.verdict })
            .collect(),
        cumulative_usage: deps.gateway.run_usage(),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_secs(),
    }
}

fn usage_since(start: TokenUsage, end: TokenUsage) -> TokenUsage {
    TokenUsage::new(
        end.input_tokens.saturating_sub(start.input_tokens),
        end.output_tokens.saturating_sub(start.output_tokens),
    )
}

struct OutcomeLog {
    path: PathBuf,
    records: Vec<OutcomeRecord>,
}

impl OutcomeLog {
    fn open(workdir: &Path) -> std::io::Result<OutcomeLog> {
        let dir = workdir.join(RUN_STATE_DIR);
        std::fs::create_dir_all(&dir)?;
        Ok(OutcomeLog { path: dir.join(OUTCOME_LOG_NAME), records: Vec::new() })
    }

    /// Appends to disk before the record is acted on, so the log always
    /// reflects every cycle that ran even if a later stage dies.
    fn append(&mut self, record: OutcomeRecord) -> std::io::Result<()> {
        use std::io::Write;
        let mut file =
            std::fs::OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(file, "{}", to_canonical_json(&record))?;
        self.records.push(record);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{
        BackendError, ChatBackend, ChatRequest, ChatResponse, Role, ToolCall,
    };
    use crate::model::{ActionOutcome, ActionRecord, BrowserAction};
    use crate::validate::{CASE_SECTION, PAGE_SECTION, VALIDATE_SYSTEM_PROMPT};
    use std::time::Duration;

    fn record(action: BrowserAction, outcome: ActionOutcome, digest: &str) -> ActionRecord {
        ActionRecord { action, outcome, post_state_digest: digest.into() }
    }

    fn failed(
        records: Vec<ActionRecord>,
        failed_at: &str,
        observation: &str,
        rationale: &str,
    ) -> TestResult {
        let mut trajectory = Trajectory::new();
        for r in records {
            trajectory.push(r);
        }
        TestResult::new(
            "case-x",
            Verdict::Fail,
            trajectory,
            Some(FailureReport {
                feature: "f".into(),
                failed_at: failed_at.into(),
                observation: observation.into(),
                steps_completed: vec![],
                rationale: rationale.into(),
            }),
            1,
        )
        .unwrap()
    }

    #[test]
    fn classification_rules_fire_in_order() {
        let nav = || BrowserAction::navigate("/x");
        let ok_digest = "url=/ title=\"T\" nodes=3";
        let console_digest = "url=/ title=\"T\" nodes=3 console_errors=[\"boom\"]";

        // Rule 1: deployment.
        let result = failed(vec![], "deployment", "app exited during startup (status 1)", "the app could not be deployed");
        assert_eq!(classify_result(&result), Some(FailureClass::DeploymentFailure));

        // Rule 2: unmatched selector, even when a timeout also occurred.
        let result = failed(
            vec![
                record(nav(), ActionOutcome::Error { message: "no element matched: Submit".into() }, ok_digest),
                record(nav(), ActionOutcome::Error { message: "timeout waiting for: Done".into() }, ok_digest),
            ],
            "clicking submit",
            "nothing matched",
            "could not find the button",
        );
        assert_eq!(classify_result(&result), Some(FailureClass::ElementNotFound));
        let result = failed(
            vec![record(nav(), ActionOutcome::Error { message: "ambiguous selector: Save matched 2 elements".into() }, ok_digest)],
            "clicking save",
            "two save buttons",
            "ambiguous",
        );
        assert_eq!(classify_result(&result), Some(FailureClass::ElementNotFound));

        // Rule 3: clean trajectory, explicit non-pass rationale.
        let result = failed(
            vec![record(nav(), ActionOutcome::Ok, ok_digest)],
            "expectation: the cart shows 2 items",
            "the cart shows 1 item",
            "only one item was added",
        );
        assert_eq!(classify_result(&result), Some(FailureClass::AssertionMismatch));

        // Rule 4 beats rule 5: timeout wins over console errors.
        let result = failed(
            vec![record(nav(), ActionOutcome::Error { message: "timeout waiting for: Results".into() }, console_digest)],
            "waiting for results",
            "spinner forever",
            "the results never appeared",
        );
        assert_eq!(classify_result(&result), Some(FailureClass::InteractionTimeout));
        // ... and budget exhaustion is a timeout too.
        let result = failed(
            vec![record(nav(), ActionOutcome::Ok, ok_digest)],
            "step 1",
            "looping",
            "max iterations reached",
        );
        assert_eq!(classify_result(&result), Some(FailureClass::InteractionTimeout));

        // Rule 5: console errors on an otherwise clean failure.
        let result = failed(
            vec![record(nav(), ActionOutcome::Ok, console_digest)],
            "loading the page",
            "page blank",
            "the page crashed",
        );
        assert_eq!(classify_result(&result), Some(FailureClass::RuntimeError));
        // ... and unparseable model output.
        let result = failed(
            vec![],
            "step 1",
            "no reply",
            "malformed model output: not json",
        );
        assert_eq!(classify_result(&result), Some(FailureClass::RuntimeError));

        // Rule 6: navigation.
        let result = failed(
            vec![record(nav(), ActionOutcome::Error { message: "navigation failed: /admin: HTTP 404".into() }, ok_digest)],
            "opening admin",
            "404",
            "", // degenerate rationale skips rule 3
        );
        assert_eq!(classify_result(&result), Some(FailureClass::NavigationFailure));

        // Pass results classify to nothing; all-pass reports are refused.
        let pass =
            TestResult::new("case-p", Verdict::Pass, Trajectory::new(), None, 1).unwrap();
        assert_eq!(classify_result(&pass), None);
        let report = SuiteRunReport::from_results(vec![pass]);
        assert!(matches!(classify_failures(&report), Err(ProtocolError::AllPassing)));
    }

    // --- scripted end-to-end machinery ------------------------------------

    /// One backend for both agents in a run, keyed off the system prompt.
    /// Validation verdicts come from looking at the rendered page section;
    /// coding replies are fixed scripts selected by task text and position.
    struct Brain {
        coding: fn(task: &str, turn: usize) -> ChatResponse,
    }

    impl ChatBackend for Brain {
        fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
            let system = &request.messages[0].content;
            if system == VALIDATE_SYSTEM_PROMPT {
                return Ok(validate_brain(request));
            }
            let task = &request.messages[1].content;
            let turn = request.messages.iter().filter(|m| m.role == Role::Assistant).count();
            Ok((self.coding)(task, turn))
        }
    }

    /// Passes a case iff the feature's key word is visible on the page.
    fn validate_brain(request: &ChatRequest) -> ChatResponse {
        let prompt = &request.messages.last().unwrap().content;
        let case = section(prompt, CASE_SECTION);
        let page = section(prompt, PAGE_SECTION);
        let word = ["alpha", "beta", "welcome", "featured", "recipe"]
            .iter()
            .find(|w| case.contains(*w))
            .expect("case names a known keyword");
        let reply = if page.contains(word) {
            format!(r#"{{"verdict": "pass", "explanation": "{word} is visible"}}"#)
        } else {
            format!(r#"{{"verdict": "fail", "explanation": "{word} is not shown anywhere"}}"#)
        };
        ChatResponse::text(reply, TokenUsage::new(10, 5))
    }

    fn section<'a>(prompt: &'a str, marker: &str) -> &'a str {
        prompt.split(marker).nth(1).unwrap_or("").split("\n## ").next().unwrap_or("")
    }

    fn write_call(turn: usize, path: &str, content: &str) -> ChatResponse {
        ChatResponse::tool_calls(
            vec![ToolCall {
                id: format!("call-{turn}"),
                name: "write_file".into(),
                arguments: serde_json::json!({ "path": path, "content": content }).to_string(),
            }],
            TokenUsage::new(10, 5),
        )
    }

    fn page(body: &str) -> String {
        format!("<html><head><title>App</title></head><body>{body}</body></html>")
    }

    fn suite(features: &[(&str, &str)]) -> TestSuite {
        let cases = features
            .iter()
            .map(|(feature, expect)| {
                TestCase::new(
                    *feature,
                    vec!["Open the home page".into()],
                    format!("the page shows {expect}"),
                )
                .unwrap()
            })
            .collect();
        TestSuite::new(cases, "a demo app").unwrap()
    }

    fn deps(workdir: &Path, brain: Brain) -> ProtocolDeps {
        ProtocolDeps {
            workdir: workdir.to_path_buf(),
            gateway: Arc::new(Gateway::live(Box::new(brain))),
            engine: EngineKind::Builtin,
            validate: ValidateOptions::default(),
            deploy: DeployOptions { port: None, ready_timeout: Duration::from_secs(10) },
            run_id: "test-run".into(),
        }
    }

    #[test]
    fn whole_project_repairs_once_then_passes() {
        let dir = tempfile::tempdir().unwrap();
        // Implement writes only alpha; the repair adds beta.
        let brain = Brain {
            coding: |task, turn| {
                if task.contains("failed") {
                    match turn {
                        0 => write_call(turn, "index.html", &page("<h1>alpha</h1><h2>beta</h2>")),
                        _ => ChatResponse::text("fixed", TokenUsage::new(10, 5)),
                    }
                } else {
                    match turn {
                        0 => write_call(turn, "index.html", &page("<h1>alpha</h1>")),
                        _ => ChatResponse::text("done", TokenUsage::new(10, 5)),
                    }
                }
            },
        };
        let suite = suite(&[("alpha panel", "alpha"), ("beta panel", "beta")]);
        let deps = deps(dir.path(), brain);
        let run = run_whole_project("a demo app", &suite, 5, &deps).unwrap();

        assert!(run.all_pass);
        assert_eq!(run.outcomes.len(), 2, "stopped at k=2");
        assert_eq!(run.outcomes[0].attempt, 1);
        let first: Vec<Verdict> = run.outcomes[0].verdicts.iter().map(|v| v.verdict).collect();
        assert_eq!(first, vec![Verdict::Pass, Verdict::Fail]);
        assert!(run.outcomes[1].verdicts.iter().all(|v| v.verdict == Verdict::Pass));
        assert_eq!(run.transcripts.len(), 2, "implement + one repair");

        // The log is on disk, one line per cycle.
        let log =
            std::fs::read_to_string(dir.path().join(RUN_STATE_DIR).join(OUTCOME_LOG_NAME))
                .unwrap();
        assert_eq!(log.lines().count(), 2);
        let parsed: OutcomeRecord = serde_json::from_str(log.lines().next().unwrap()).unwrap();
        assert_eq!(parsed.condition, ProtocolKind::WholeProject);
    }

    #[test]
    fn whole_project_exhausts_the_budget_when_never_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let brain = Brain {
            coding: |_task, turn| match turn {
                0 => write_call(turn, "index.html", &page("<h1>alpha</h1>")),
                _ => ChatResponse::text("best I can do", TokenUsage::new(10, 5)),
            },
        };
        let suite = suite(&[("alpha panel", "alpha"), ("beta panel", "beta")]);
        let deps = deps(dir.path(), brain);
        let run = run_whole_project("a demo app", &suite, 3, &deps).unwrap();

        assert!(!run.all_pass);
        assert_eq!(run.outcomes.len(), 3, "exactly K cycles");
        // Literal loop: a repair follows every non-passing attempt.
        assert_eq!(run.transcripts.len(), 4, "implement + K repairs");
        assert!(matches!(
            run_whole_project("x", &suite, 0, &deps),
            Err(ProtocolError::ZeroBudget)
        ));
    }

    #[test]
    fn incremental_surfaces_and_repairs_a_regression() {
        let dir = tempfile::tempdir().unwrap();
        // Implementing "featured" overwrites the welcome page (a regression);
        // the repair restores both.
        let brain = Brain {
            coding: |task, turn| {
                if turn > 0 {
                    return ChatResponse::text("ok", TokenUsage::new(10, 5));
                }
                if task.contains("failed") {
                    write_call(turn, "index.html", &page("<h1>welcome</h1><p>featured</p>"))
                } else if task.contains("now:\nFeature: featured list") {
                    write_call(turn, "index.html", &page("<p>featured</p>"))
                } else {
                    write_call(turn, "index.html", &page("<h1>welcome</h1>"))
                }
            },
        };
        let suite = suite(&[("welcome banner", "welcome"), ("featured list", "featured")]);
        let deps = deps(dir.path(), brain);
        let run = run_incremental("a demo app", &suite, 5, &deps).unwrap();

        assert!(run.all_pass);
        assert_eq!(run.regression_suite, vec![suite.cases[0].id.clone(), suite.cases[1].id.clone()]);
        assert_eq!(run.outcomes.len(), 3, "c1 admitted in 1, c2 in 2");

        // Cycle 2 (first attempt on c2) reran c1 and surfaced the regression.
        let regression = &run.outcomes[1];
        assert_eq!(regression.scope, Scope::Feature { case_id: suite.cases[1].id.clone() });
        assert_eq!(regression.attempt, 1);
        let c1 = regression.verdicts.iter().find(|v| v.case_id == suite.cases[0].id).unwrap();
        assert_eq!(c1.verdict, Verdict::Fail);
        let c2 = regression.verdicts.iter().find(|v| v.case_id == suite.cases[1].id).unwrap();
        assert_eq!(c2.verdict, Verdict::Pass);

        // Admission cycle reran both and passed.
        assert!(run.outcomes[2].verdicts.iter().all(|v| v.verdict == Verdict::Pass));
        assert_eq!(run.transcripts.len(), 3, "two implements + one repair");
    }

    #[test]
    fn incremental_skips_an_unfixable_feature_and_advances() {
        let dir = tempfile::tempdir().unwrap();
        // "alpha" is never satisfied; "beta" works immediately.
        let brain = Brain {
            coding: |task, turn| {
                if turn > 0 {
                    return ChatResponse::text("ok", TokenUsage::new(10, 5));
                }
                if task.contains("now:\nFeature: beta panel") {
                    write_call(turn, "index.html", &page("<p>beta</p>"))
                } else {
                    write_call(turn, "index.html", &page("<p>nothing useful</p>"))
                }
            },
        };
        let suite = suite(&[("alpha panel", "alpha"), ("beta panel", "beta")]);
        let deps = deps(dir.path(), brain);
        let run = run_incremental("a demo app", &suite, 2, &deps).unwrap();

        assert!(!run.all_pass);
        assert_eq!(run.regression_suite, vec![suite.cases[1].id.clone()], "only beta admitted");
        // alpha: 2 failed attempts; beta: 1 passing attempt. Regression runs
        // for beta exclude the skipped alpha.
        assert_eq!(run.outcomes.len(), 3);
        assert_eq!(run.outcomes[2].verdicts.len(), 1);
        // Literal Alg. 3: repair after both failed alpha attempts.
        assert_eq!(run.transcripts.len(), 4, "impl alpha + 2 repairs + impl beta");
    }

    #[test]
    fn agentic_runs_tests_itself_and_is_evaluated_externally() {
        let dir = tempfile::tempdir().unwrap();
        let brain = Brain {
            coding: |_task, turn| {
                let usage = TokenUsage::new(10, 5);
                let tool = |name: &str, args: serde_json::Value| {
                    ChatResponse::tool_calls(
                        vec![ToolCall {
                            id: format!("call-{turn}"),
                            name: name.into(),
                            arguments: args.to_string(),
                        }],
                        usage,
                    )
                };
                match turn {
                    0 => write_call(turn, "index.html", &page("<p>placeholder</p>")),
                    1 => tool("start_app", serde_json::json!({})),
                    2 => tool("run_tests", serde_json::json!({"handle_id": "h1"})),
                    3 => write_call(turn, "index.html", &page("<h1>recipe</h1>")),
                    4 => tool("stop_app", serde_json::json!({"handle_id": "h1"})),
                    5 => tool("start_app", serde_json::json!({})),
                    6 => tool("run_tests", serde_json::json!({"handle_id": "h2"})),
                    // Leaves h2 running: the harness must reclaim it.
                    _ => ChatResponse::text("all tests pass now", usage),
                }
            },
        };
        let suite = suite(&[("recipe page", "recipe")]);
        std::fs::write(
            dir.path().join(crate::testgen::SUITE_FILE_NAME),
            serde_json::to_string(&suite).unwrap(),
        )
        .unwrap();
        let deps = deps(dir.path(), brain);
        let run = run_agentic("a demo app", &suite, &deps).unwrap();

        assert!(run.all_pass, "external evaluation passes");
        assert_eq!(run.outcomes.len(), 1, "exactly one external evaluation");
        let transcript = &run.transcripts[0];
        let test_calls = transcript
            .turns
            .iter()
            .flat_map(|t| &t.tool_calls)
            .filter(|c| c.name == "run_tests")
            .count();
        assert!(test_calls >= 2, "agent re-tested after its fix");
        // First agent-run test failed, second passed.
        let results: Vec<&str> = transcript
            .turns
            .iter()
            .flat_map(|t| &t.tool_results)
            .filter(|r| r.name == "run_tests")
            .map(|r| r.content.lines().next().unwrap())
            .collect();
        assert_eq!(results, vec!["0/1 tests passed", "1/1 tests passed"]);
    }

    #[test]
    fn baseline_sees_only_requirements_and_is_evaluated_once() {
        let task = baseline_task("a recipe sharing site");
        assert!(task.contains("a recipe sharing site"));
        assert!(!task.contains("Acceptance tests"), "baseline never sees the suite");

        let dir = tempfile::tempdir().unwrap();
        let brain = Brain {
            coding: |task, turn| {
                assert!(
                    task.contains("satisfies this requirement"),
                    "baseline task only"
                );
                match turn {
                    0 => write_call(turn, "index.html", &page("<h1>alpha</h1><p>beta</p>")),
                    _ => ChatResponse::text("done", TokenUsage::new(10, 5)),
                }
            },
        };
        let suite = suite(&[("alpha panel", "alpha"), ("beta panel", "beta")]);
        let deps = deps(dir.path(), brain);
        let run = run_baseline("a demo app", &suite, &deps).unwrap();

        assert!(run.all_pass);
        assert_eq!(run.outcomes.len(), 1);
        assert_eq!(run.outcomes[0].verdicts.len(), 2, "one verdict per case");
        assert_eq!(run.transcripts.len(), 1);
    }

    #[test]
    fn baseline_that_builds_nothing_fails_as_deployment_failure() {
        let dir = tempfile::tempdir().unwrap();
        let brain = Brain {
            coding: |_task, _turn| {
                ChatResponse::text("I could not decide what to build.", TokenUsage::new(10, 5))
            },
        };
        let suite = suite(&[("alpha panel", "alpha")]);
        let deps = deps(dir.path(), brain);
        let run = run_baseline("a demo app", &suite, &deps).unwrap();

        assert!(!run.all_pass);
        let failures = classify_failures(&run.final_report).unwrap();
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].class, FailureClass::DeploymentFailure);
        assert!(failures[0].report.observation.contains("no entrypoint"));
    }
}
