//! Steers a browser session with an LLM to decide whether one acceptance
//! test passes against a live deployment. Each loop iteration shows the
//! model the test case, the trajectory so far, and a fresh page snapshot;
//! the model answers with either one browser action or a final verdict.
//! Failures are translated into structured reports a coding agent can act
//! on: what was attempted, where it failed, and what the page showed.

use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::browser::{BrowserError, Session};
use crate::gateway::{ChatRequest, Gateway, GatewayError, Message};
use crate::model::{
    to_canonical_json, ActionOutcome, BrowserAction, FailureReport, PageSnapshot, TestCase,
    TestResult, TestSuite, Trajectory, Verdict,
};

pub const VALIDATE_SYSTEM_PROMPT: &str = include_str!("prompts/validate_system.txt");

/// Section markers in the per-iteration prompt. Kept public so scripted
/// backends and prompt tests can parse the exact same shape.
pub const CASE_SECTION: &str = "## Test case";
pub const TRAJECTORY_SECTION: &str = "## Trajectory so far";
pub const PAGE_SECTION: &str = "## Current page";

/// Rendered trajectory budget; past this, the oldest records collapse to
/// one line each so recent context stays verbatim.
const TRAJECTORY_VERBATIM_TAIL: usize = 10;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("gateway: {0}")]
    Gateway(#[from] GatewayError),
    #[error("browser session: {0}")]
    Browser(#[from] BrowserError),
    #[error("result io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid result: {0}")]
    Model(#[from] crate::model::ModelError),
}

/// One decision from the model: act, or stop with a verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentStep {
    Act(BrowserAction),
    Verdict { verdict: Verdict, explanation: String },
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    /// Maximum loop iterations per case (each is one action or verdict).
    pub max_iterations: u32,
    /// How long `wait_for` polls before reporting a timeout.
    pub wait_timeout: Duration,
    pub wait_poll: Duration,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            max_iterations: 20,
            wait_timeout: Duration::from_secs(5),
            wait_poll: Duration::from_millis(250),
        }
    }
}

/// How validation sessions are opened: the built-in HTML engine, or a
/// DevTools-protocol browser at the given WebSocket endpoint.
#[derive(Debug, Clone, Default)]
pub enum EngineKind {
    #[default]
    Builtin,
    Cdp {
        ws_url: String,
    },
}

impl EngineKind {
    pub fn open(&self, base_url: &str) -> Result<Session, BrowserError> {
        match self {
            EngineKind::Builtin => Ok(Session::builtin(base_url)),
            EngineKind::Cdp { ws_url } => {
                let engine = crate::browser::CdpEngine::connect(ws_url)?;
                Ok(Session::new(Box::new(engine), base_url))
            }
        }
    }
}

/// Runs one test case to a verdict. The session must be fresh (no state
/// from earlier cases). Always terminates within `max_iterations`.
pub fn validate_case(
    case: &TestCase,
    session: &mut Session,
    gateway: &Gateway,
    options: &ValidateOptions,
) -> Result<TestResult, ValidateError> {
    session.set_wait_timeout(options.wait_timeout, options.wait_poll);
    let mut trajectory = Trajectory::new();

    // Open the app. A dead deployment is a verdict, not a crash: the
    // remaining cases still deserve their run.
    let opening = session.perform(&BrowserAction::navigate("/"));
    if let ActionOutcome::Error { message } = &opening.outcome {
        let report = FailureReport {
            feature: case.feature.clone(),
            failed_at: "deployment".into(),
            observation: message.clone(),
            steps_completed: Vec::new(),
            rationale: "the app could not be opened".into(),
        };
        return Ok(TestResult::new(&case.id, Verdict::Fail, trajectory, Some(report), 0)?);
    }

    for iteration in 1..=options.max_iterations {
        let snapshot = session.snapshot()?;
        let step = next_step(case, &trajectory, &snapshot, gateway)?;
        match step {
            Ok(AgentStep::Act(action)) => {
                let record = session.perform(&action);
                trajectory.push(record);
            }
            Ok(AgentStep::Verdict { verdict, explanation }) => {
                let report = match verdict {
                    Verdict::Pass => None,
                    _ => Some(build_failure_report(case, &trajectory, &explanation)),
                };
                return Ok(TestResult::new(&case.id, verdict, trajectory, report, iteration)?);
            }
            Err(parse_error) => {
                // Unparseable even after the reformat retry: a model
                // runtime fault, reported as such.
                let explanation = format!("malformed model output: {parse_error}");
                let report = build_failure_report(case, &trajectory, &explanation);
                return Ok(TestResult::new(
                    &case.id,
                    Verdict::Fail,
                    trajectory,
                    Some(report),
                    iteration,
                )?);
            }
        }
    }

    let explanation = "max iterations reached";
    let report = build_failure_report(case, &trajectory, explanation);
    let iterations = options.max_iterations;
    Ok(TestResult::new(&case.id, Verdict::Fail, trajectory, Some(report), iterations)?)
}

/// Asks the model for the next step; on a malformed reply, asks once more
/// with the parse error attached. Returns `Err(parse message)` in the
/// inner result when both replies were unusable.
fn next_step(
    case: &TestCase,
    trajectory: &Trajectory,
    snapshot: &PageSnapshot,
    gateway: &Gateway,
) -> Result<Result<AgentStep, String>, ValidateError> {
    let user = render_prompt(case, trajectory, snapshot);
    let mut messages =
        vec![Message::system(VALIDATE_SYSTEM_PROMPT), Message::user(user)];
    let response = gateway.complete(&ChatRequest::new(messages.clone()))?;
    let text = response.as_text().unwrap_or_default().to_string();
    match parse_step(&text) {
        Ok(step) => Ok(Ok(step)),
        Err(first_error) => {
            messages.push(Message::assistant(text));
            messages.push(Message::user(format!(
                "Your reply was not a valid step ({first_error}). Answer again with \
                 exactly one JSON object in the documented shape."
            )));
            let retry = gateway.complete(&ChatRequest::new(messages))?;
            let retry_text = retry.as_text().unwrap_or_default();
            Ok(parse_step(retry_text).map_err(|e| e.to_string()))
        }
    }
}

#[derive(Debug, Error)]
pub enum StepParseError {
    #[error("reply is not a JSON object: {0}")]
    NotJson(String),
    #[error("object has neither \"action\" nor \"verdict\"")]
    MissingDiscriminator,
    #[error("bad action: {0}")]
    BadAction(String),
    #[error("bad verdict: {0}")]
    BadVerdict(String),
    #[error("explanation required for fail/partial verdicts")]
    MissingExplanation,
}

/// Parses the model's JSON step. Tolerates surrounding prose and code
/// fences; the discriminator must still be unambiguous.
pub fn parse_step(text: &str) -> Result<AgentStep, StepParseError> {
    let body = extract_json_object(text)
        .ok_or_else(|| StepParseError::NotJson("no object found".into()))?;
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| StepParseError::NotJson(e.to_string()))?;
    let object = value
        .as_object()
        .ok_or_else(|| StepParseError::NotJson("top level is not an object".into()))?;

    if let Some(action_value) = object.get("action") {
        let action: BrowserAction = serde_json::from_value(action_value.clone())
            .map_err(|e| StepParseError::BadAction(e.to_string()))?;
        action.validate().map_err(|e| StepParseError::BadAction(e.to_string()))?;
        return Ok(AgentStep::Act(action));
    }
    if object.contains_key("verdict") {
        #[derive(Deserialize)]
        struct VerdictShape {
            verdict: Verdict,
            #[serde(default)]
            explanation: String,
        }
        let shape: VerdictShape = serde_json::from_value(value.clone())
            .map_err(|e| StepParseError::BadVerdict(e.to_string()))?;
        if shape.verdict != Verdict::Pass && shape.explanation.trim().is_empty() {
            return Err(StepParseError::MissingExplanation);
        }
        return Ok(AgentStep::Verdict {
            verdict: shape.verdict,
            explanation: shape.explanation,
        });
    }
    Err(StepParseError::MissingDiscriminator)
}

/// First balanced `{ ... }` span in the text, so fenced or prefixed replies
/// still parse.
pub(crate) fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, ch) in text[start..].char_indices() {
        if in_string {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + offset + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Renders the per-iteration prompt. URLs appear path-only and digests are
/// host-free, so the same run fingerprints identically across ports.
pub fn render_prompt(case: &TestCase, trajectory: &Trajectory, snapshot: &PageSnapshot) -> String {
    let mut out = String::new();
    out.push_str(CASE_SECTION);
    out.push('\n');
    out.push_str(&format!("feature: {}\n", case.feature));
    out.push_str("steps:\n");
    for (i, step) in case.steps.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, step));
    }
    out.push_str(&format!("expected: {}\n", case.expected));

    out.push('\n');
    out.push_str(TRAJECTORY_SECTION);
    out.push('\n');
    if trajectory.is_empty() {
        out.push_str("(no actions yet)\n");
    } else {
        let verbatim_from = trajectory.len().saturating_sub(TRAJECTORY_VERBATIM_TAIL);
        for (i, record) in trajectory.records().iter().enumerate() {
            let outcome = match &record.outcome {
                ActionOutcome::Ok => "ok".to_string(),
                ActionOutcome::Error { message } => format!("error: {message}"),
            };
            if i < verbatim_from {
                out.push_str(&format!("{}. {} -> {}\n", i + 1, record.action.describe(), outcome));
            } else {
                out.push_str(&format!(
                    "{}. {} -> {} [state: {}]\n",
                    i + 1,
                    record.action.describe(),
                    outcome,
                    record.post_state_digest
                ));
            }
        }
    }

    out.push('\n');
    out.push_str(PAGE_SECTION);
    out.push('\n');
    out.push_str(&format!("url: {}\n", snapshot.url));
    out.push_str(&format!("title: {}\n", snapshot.title));
    out.push_str("nodes:\n");
    if snapshot.nodes.is_empty() {
        out.push_str("(none)\n");
    }
    for node in &snapshot.nodes {
        out.push_str(&format!("- [{}] {} \"{}\"", node.ref_id, node.role, node.name));
        if let Some(value) = &node.value {
            out.push_str(&format!(" value={value:?}"));
        }
        if node.editable {
            out.push_str(" (editable)");
        }
        if !node.enabled {
            out.push_str(" (disabled)");
        }
        out.push('\n');
    }
    out.push_str("console errors:\n");
    if snapshot.console_errors.is_empty() {
        out.push_str("(none)\n");
    }
    for error in &snapshot.console_errors {
        out.push_str(&format!("- {error}\n"));
    }
    if snapshot.truncated {
        out.push_str("(node list truncated)\n");
    }
    out
}

/// Translates a finished trajectory plus the agent's explanation into the
/// structured failure report a repair prompt embeds.
pub fn build_failure_report(
    case: &TestCase,
    trajectory: &Trajectory,
    explanation: &str,
) -> FailureReport {
    let steps_completed: Vec<String> = trajectory
        .records()
        .iter()
        .filter(|r| r.outcome.is_ok())
        .map(|r| r.action.describe())
        .collect();
    let first_error = trajectory
        .records()
        .iter()
        .find(|r| !r.outcome.is_ok());

    let failed_at = match first_error {
        Some(record) => record.action.describe(),
        None if trajectory.is_empty() => case
            .steps
            .first()
            .cloned()
            .unwrap_or_else(|| format!("expectation: {}", case.expected)),
        None => format!("expectation: {}", case.expected),
    };
    let observation = match first_error {
        Some(record) => record
            .outcome
            .error_message()
            .unwrap_or_default()
            .to_string(),
        None => trajectory
            .last()
            .map(|r| r.post_state_digest.clone())
            .unwrap_or_else(|| explanation.to_string()),
    };
    FailureReport {
        feature: case.feature.clone(),
        failed_at,
        observation,
        steps_completed,
        rationale: explanation.to_string(),
    }
}

/// Validates every case in order, each in a fresh session so cookies and
/// storage cannot leak between cases.
pub fn run_suite(
    suite: &TestSuite,
    base_url: &str,
    gateway: &Gateway,
    engine: &EngineKind,
    options: &ValidateOptions,
) -> Result<crate::model::SuiteRunReport, ValidateError> {
    let mut results = Vec::with_capacity(suite.cases.len());
    for case in &suite.cases {
        let mut session = engine.open(base_url)?;
        results.push(validate_case(case, &mut session, gateway, options)?);
    }
    Ok(crate::model::SuiteRunReport::from_results(results))
}

/// Writes each result as `<case_id>.json` under the directory.
pub fn persist_results(
    report: &crate::model::SuiteRunReport,
    dir: &Path,
) -> Result<(), ValidateError> {
    std::fs::create_dir_all(dir)?;
    for result in &report.results {
        let path = dir.join(format!("{}.json", result.case_id));
        std::fs::write(path, to_canonical_json(result))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{BackendError, ChatBackend, ChatResponse};
    use crate::model::{ActionRecord, TokenUsage};

    fn case() -> TestCase {
        TestCase::new(
            "User login",
            vec![
                "Open the login page".into(),
                "Enter the email address".into(),
                "Submit the login form".into(),
            ],
            "the dashboard shows a welcome message",
        )
        .unwrap()
    }

    #[test]
    fn parses_action_verdict_and_fenced_replies() {
        let act = parse_step(r#"{"action": {"kind": "navigate", "value": "/"}}"#).unwrap();
        assert!(matches!(act, AgentStep::Act(_)));

        let verdict =
            parse_step("```json\n{\"verdict\": \"pass\"}\n```").unwrap();
        assert_eq!(
            verdict,
            AgentStep::Verdict { verdict: Verdict::Pass, explanation: String::new() }
        );

        let fail = parse_step(r#"{"verdict": "fail", "explanation": "button missing"}"#).unwrap();
        assert!(matches!(fail, AgentStep::Verdict { verdict: Verdict::Fail, .. }));

        assert!(matches!(
            parse_step(r#"{"verdict": "fail"}"#),
            Err(StepParseError::MissingExplanation)
        ));
        assert!(matches!(
            parse_step("just prose"),
            Err(StepParseError::NotJson(_))
        ));
        assert!(matches!(
            parse_step(r#"{"thought": "hm"}"#),
            Err(StepParseError::MissingDiscriminator)
        ));
        // Invalid action shape: fill without a value.
        assert!(matches!(
            parse_step(r##"{"action": {"kind": "fill", "target": {"strategy": "css", "query": "#x"}}}"##),
            Err(StepParseError::BadAction(_))
        ));
    }

    fn ok_record(action: BrowserAction, digest: &str) -> ActionRecord {
        ActionRecord {
            action,
            outcome: ActionOutcome::Ok,
            post_state_digest: digest.into(),
        }
    }

    fn err_record(action: BrowserAction, message: &str, digest: &str) -> ActionRecord {
        ActionRecord {
            action,
            outcome: ActionOutcome::Error { message: message.into() },
            post_state_digest: digest.into(),
        }
    }

    #[test]
    fn failure_report_pins_first_error_and_completed_steps() {
        let mut trajectory = Trajectory::new();
        trajectory.push(ok_record(BrowserAction::navigate("/login"), "url=/login title=\"Sign in\" nodes=5"));
        trajectory.push(ok_record(
            BrowserAction::fill(crate::model::SelectorSpec::role_and_name("textbox", "Email"), "a@b.c"),
            "url=/login title=\"Sign in\" nodes=5",
        ));
        trajectory.push(err_record(
            BrowserAction::click(crate::model::SelectorSpec::role_and_name("button", "Log in")),
            "no element matched: button \"Log in\"",
            "url=/login title=\"Sign in\" nodes=5",
        ));

        let report = build_failure_report(&case(), &trajectory, "no submit control was present");
        assert_eq!(report.failed_at, "click button \"Log in\"");
        assert_eq!(report.observation, "no element matched: button \"Log in\"");
        assert_eq!(report.steps_completed.len(), 2);
        assert_eq!(report.rationale, "no submit control was present");

        let rendered = report.render_human();
        let lines: Vec<&str> = rendered.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("Feature: "));
        assert!(lines[1].starts_with("Failed at: "));
        assert!(lines[2].starts_with("Observation: "));
        assert!(lines[3].starts_with("Steps completed: "));
    }

    #[test]
    fn failure_report_degenerate_and_expectation_forms() {
        let empty = Trajectory::new();
        let report = build_failure_report(&case(), &empty, "app did not render");
        assert_eq!(report.failed_at, "Open the login page");
        assert_eq!(report.observation, "app did not render");
        assert!(report.steps_completed.is_empty());

        let mut clean = Trajectory::new();
        clean.push(ok_record(BrowserAction::navigate("/"), "url=/ title=\"Home\" nodes=3"));
        let report = build_failure_report(&case(), &clean, "welcome text missing");
        assert_eq!(report.failed_at, "expectation: the dashboard shows a welcome message");
        assert_eq!(report.observation, "url=/ title=\"Home\" nodes=3");
    }

    /// Backend that scripts the decision loop without any fixture plumbing.
    struct ScriptedSteps {
        steps: Vec<&'static str>,
    }

    impl ChatBackend for ScriptedSteps {
        fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
            let prompt = &request.messages.last().unwrap().content;
            // One line per prior trajectory entry; pick the next step.
            let taken = prompt
                .split(TRAJECTORY_SECTION)
                .nth(1)
                .unwrap_or("")
                .split(PAGE_SECTION)
                .next()
                .unwrap_or("")
                .lines()
                .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
                .count();
            let reply = self.steps.get(taken).copied().unwrap_or(self.steps.last().unwrap());
            Ok(ChatResponse::text(reply, TokenUsage::new(10, 5)))
        }
    }

    fn fixture_server() -> (tiny_http::Server, u16) {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let port = server.server_addr().to_ip().unwrap().port();
        (server, port)
    }

    #[test]
    fn loop_terminates_with_max_iterations_reached() {
        let (server, port) = fixture_server();
        let thread = std::thread::spawn(move || {
            for request in server.incoming_requests() {
                let _ = request.respond(
                    tiny_http::Response::from_string("<html><title>T</title><body><p>hi</p></body></html>")
                        .with_header(
                            tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"text/html"[..])
                                .unwrap(),
                        ),
                );
            }
        });

        let backend = ScriptedSteps {
            steps: vec![r#"{"action": {"kind": "go_back"}}"#],
        };
        let gateway = Gateway::live(Box::new(backend));
        let options = ValidateOptions { max_iterations: 4, ..Default::default() };
        let mut session = Session::builtin(format!("http://127.0.0.1:{port}"));
        let result = validate_case(&case(), &mut session, &gateway, &options).unwrap();

        assert_eq!(result.verdict, Verdict::Fail);
        assert_eq!(result.iterations_used, 4);
        let report = result.failure_report.unwrap();
        assert_eq!(report.rationale, "max iterations reached");

        drop(session);
        // Server thread exits when the test's server handle drops.
        drop(thread);
    }

    #[test]
    fn verdict_counts_iterations_as_actions_plus_one() {
        let (server, port) = fixture_server();
        std::thread::spawn(move || {
            for request in server.incoming_requests() {
                let _ = request.respond(
                    tiny_http::Response::from_string(
                        "<html><title>Dash</title><body><h1>Welcome back</h1></body></html>",
                    )
                    .with_header(
                        tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"text/html"[..])
                            .unwrap(),
                    ),
                );
            }
        });

        let backend = ScriptedSteps {
            steps: vec![
                r#"{"action": {"kind": "navigate", "value": "/"}}"#,
                r#"{"action": {"kind": "assert_visible", "target": {"strategy": "role_and_name", "query": "heading Welcome back"}}}"#,
                r#"{"verdict": "pass"}"#,
            ],
        };
        let gateway = Gateway::live(Box::new(backend));
        let mut session = Session::builtin(format!("http://127.0.0.1:{port}"));
        let result =
            validate_case(&case(), &mut session, &gateway, &ValidateOptions::default()).unwrap();

        assert_eq!(result.verdict, Verdict::Pass);
        assert_eq!(result.trajectory.len(), 2);
        assert_eq!(result.iterations_used, 3);
        assert!(result.failure_report.is_none());
    }

    #[test]
    fn malformed_output_gets_one_retry_then_fails_as_runtime_fault() {
        let (server, port) = fixture_server();
        std::thread::spawn(move || {
            for request in server.incoming_requests() {
                let _ = request.respond(tiny_http::Response::from_string(
                    "<html><title>T</title><body></body></html>",
                ));
            }
        });

        struct AlwaysProse;
        impl ChatBackend for AlwaysProse {
            fn complete(&self, _request: &ChatRequest) -> Result<ChatResponse, BackendError> {
                Ok(ChatResponse::text("I think we should click around", TokenUsage::ZERO))
            }
        }
        let gateway = Gateway::live(Box::new(AlwaysProse));
        let mut session = Session::builtin(format!("http://127.0.0.1:{port}"));
        let result =
            validate_case(&case(), &mut session, &gateway, &ValidateOptions::default()).unwrap();

        assert_eq!(result.verdict, Verdict::Fail);
        let report = result.failure_report.unwrap();
        assert!(report.rationale.starts_with("malformed model output:"), "{}", report.rationale);
        assert_eq!(result.iterations_used, 1);
    }

    #[test]
    fn dead_deployment_fails_without_reaching_the_model() {
        struct Unreachable;
        impl ChatBackend for Unreachable {
            fn complete(&self, _request: &ChatRequest) -> Result<ChatResponse, BackendError> {
                panic!("model must not be consulted when the app is down");
            }
        }
        let gateway = Gateway::live(Box::new(Unreachable));
        // Nothing listens on this port.
        let port = crate::deploy::find_free_port().unwrap();
        let mut session = Session::builtin(format!("http://127.0.0.1:{port}"));
        let result =
            validate_case(&case(), &mut session, &gateway, &ValidateOptions::default()).unwrap();

        assert_eq!(result.verdict, Verdict::Fail);
        let report = result.failure_report.unwrap();
        assert_eq!(report.failed_at, "deployment");
        assert!(!report.observation.is_empty());
    }
}
