//! Shared domain types and their invariants.
//!
//! Everything here is an immutable value object with a canonical JSON form
//! (snake_case field names, compact encoding); that serialization is the wire
//! and file format used by every other module. This module performs no I/O
//! and knows nothing about LLMs.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, AddAssign};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{field} must be non-empty")]
    EmptyField { field: &'static str },
    #[error("a test case needs at least one step")]
    NoSteps,
    #[error("duplicate case id {0}")]
    DuplicateCaseId(String),
    #[error("best_verdict_within requires a non-empty attempt list")]
    NoAttempts,
    #[error("k must be >= 1")]
    ZeroK,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("a passing result must not carry a failure report, a non-passing one must")]
    VerdictReportMismatch,
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
}

/// Three-valued test outcome. Variant order gives `Fail < Partial < Pass`,
/// which is the ordering used for best-verdict selection.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Fail,
    Partial,
    Pass,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Partial => write!(f, "partial"),
            Verdict::Fail => write!(f, "fail"),
        }
    }
}

/// Best verdict over the first `min(k, len)` attempts.
pub fn best_verdict_within(attempts: &[Verdict], k: usize) -> Result<Verdict, ModelError> {
    if attempts.is_empty() {
        return Err(ModelError::NoAttempts);
    }
    if k == 0 {
        return Err(ModelError::ZeroK);
    }
    let upto = k.min(attempts.len());
    Ok(*attempts[..upto].iter().max().expect("non-empty slice"))
}

/// Deterministic, collision-resistant content id over the case fields.
///
/// Fields are hashed with length prefixes so that moving text between fields
/// or between steps always changes the digest. Stable across platforms.
pub fn case_id(feature: &str, steps: &[String], expected: &str) -> Result<String, ModelError> {
    if feature.trim().is_empty() {
        return Err(ModelError::EmptyField { field: "feature" });
    }
    if expected.trim().is_empty() {
        return Err(ModelError::EmptyField { field: "expected" });
    }
    if steps.is_empty() {
        return Err(ModelError::NoSteps);
    }
    if steps.iter().any(|s| s.trim().is_empty()) {
        return Err(ModelError::EmptyField { field: "steps" });
    }
    let mut hasher = Sha256::new();
    let mut feed = |bytes: &[u8]| {
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    };
    feed(feature.trim().as_bytes());
    feed(&(steps.len() as u64).to_le_bytes());
    for step in steps {
        feed(step.trim().as_bytes());
    }
    feed(expected.trim().as_bytes());
    let digest = hasher.finalize();
    Ok(hex::encode(&digest[..16]))
}

/// One acceptance test: a feature, ordered interaction steps, and an
/// expected browser-observable outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub feature: String,
    pub steps: Vec<String>,
    pub expected: String,
}

impl TestCase {
    /// Builds a case, trimming fields and deriving the content id.
    pub fn new(
        feature: impl Into<String>,
        steps: Vec<String>,
        expected: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let feature = feature.into().trim().to_string();
        let expected = expected.into().trim().to_string();
        let steps: Vec<String> = steps.into_iter().map(|s| s.trim().to_string()).collect();
        let id = case_id(&feature, &steps, &expected)?;
        Ok(TestCase { id, feature, steps, expected })
    }

    /// Re-checks the invariants on a deserialized case and recomputes its id.
    pub fn revalidate(&self) -> Result<TestCase, ModelError> {
        TestCase::new(self.feature.clone(), self.steps.clone(), self.expected.clone())
    }
}

/// Ordered collection of test cases; order is significant and consumed by the
/// incremental protocol as c1..cn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub cases: Vec<TestCase>,
    pub source_instruction: String,
}

impl TestSuite {
    pub fn new(cases: Vec<TestCase>, source_instruction: impl Into<String>) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for case in &cases {
            if !seen.insert(case.id.clone()) {
                return Err(ModelError::DuplicateCaseId(case.id.clone()));
            }
        }
        Ok(TestSuite { cases, source_instruction: source_instruction.into() })
    }

    pub fn case(&self, id: &str) -> Option<&TestCase> {
        self.cases.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub role: String,
    pub goal: String,
}

impl Persona {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.goal.trim().is_empty() {
            return Err(ModelError::EmptyField { field: "goal" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorStrategy {
    Css,
    VisibleText,
    RoleAndName,
}

/// How the driver locates an element. For `role_and_name` the query is
/// `role` followed by the accessible name, e.g. `button Log in`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorSpec {
    pub strategy: SelectorStrategy,
    pub query: String,
}

impl SelectorSpec {
    pub fn css(query: impl Into<String>) -> Self {
        SelectorSpec { strategy: SelectorStrategy::Css, query: query.into() }
    }

    pub fn visible_text(query: impl Into<String>) -> Self {
        SelectorSpec { strategy: SelectorStrategy::VisibleText, query: query.into() }
    }

    pub fn role_and_name(role: &str, name: &str) -> Self {
        SelectorSpec {
            strategy: SelectorStrategy::RoleAndName,
            query: format!("{role} {name}"),
        }
    }

    /// Splits a `role_and_name` query into its role and name parts.
    pub fn role_name_parts(&self) -> (&str, &str) {
        match self.query.split_once(' ') {
            Some((role, name)) => (role, name),
            None => (self.query.as_str(), ""),
        }
    }

    /// Short human rendering used in digests and failure reports.
    pub fn describe(&self) -> String {
        match self.strategy {
            SelectorStrategy::Css => format!("css `{}`", self.query),
            SelectorStrategy::VisibleText => format!("text \"{}\"", self.query),
            SelectorStrategy::RoleAndName => {
                let (role, name) = self.role_name_parts();
                format!("{role} \"{name}\"")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Navigate,
    Click,
    Fill,
    PressKey,
    SelectOption,
    WaitFor,
    Scroll,
    GoBack,
    AssertVisible,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ActionKind::Navigate => "navigate",
            ActionKind::Click => "click",
            ActionKind::Fill => "fill",
            ActionKind::PressKey => "press_key",
            ActionKind::SelectOption => "select_option",
            ActionKind::WaitFor => "wait_for",
            ActionKind::Scroll => "scroll",
            ActionKind::GoBack => "go_back",
            ActionKind::AssertVisible => "assert_visible",
        };
        write!(f, "{s}")
    }
}

/// A structured browser interaction. Replaces free-form generated scripts so
/// that actions are replayable and sandbox-safe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowserAction {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<SelectorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl BrowserAction {
    pub fn navigate(url: impl Into<String>) -> Self {
        BrowserAction { kind: ActionKind::Navigate, target: None, value: Some(url.into()) }
    }

    pub fn click(target: SelectorSpec) -> Self {
        BrowserAction { kind: ActionKind::Click, target: Some(target), value: None }
    }

    pub fn fill(target: SelectorSpec, value: impl Into<String>) -> Self {
        BrowserAction { kind: ActionKind::Fill, target: Some(target), value: Some(value.into()) }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        use ActionKind::*;
        let need_value = |what: &str| {
            self.value
                .as_deref()
                .filter(|v| !v.trim().is_empty())
                .map(|_| ())
                .ok_or_else(|| ModelError::InvalidAction(format!("{} requires a value", what)))
        };
        let need_target = |what: &str| {
            self.target
                .as_ref()
                .map(|_| ())
                .ok_or_else(|| ModelError::InvalidAction(format!("{} requires a target", what)))
        };
        match self.kind {
            Navigate => {
                need_value("navigate")?;
                if self.target.is_some() {
                    return Err(ModelError::InvalidAction("navigate takes no target".into()));
                }
            }
            GoBack => {
                if self.target.is_some() {
                    return Err(ModelError::InvalidAction("go_back takes no target".into()));
                }
            }
            Click => need_target("click")?,
            Fill => {
                need_target("fill")?;
                need_value("fill")?;
            }
            PressKey => need_value("press_key")?,
            SelectOption => need_value("select_option")?,
            WaitFor => need_target("wait_for")?,
            AssertVisible => need_target("assert_visible")?,
            Scroll => {}
        }
        if let Some(target) = &self.target {
            if target.query.trim().is_empty() {
                return Err(ModelError::InvalidAction("selector query must be non-empty".into()));
            }
        }
        Ok(())
    }

    /// Short human rendering: `click button "Log in"`, `fill textbox "Email" = "x"`.
    pub fn describe(&self) -> String {
        let mut out = self.kind.to_string();
        if let Some(t) = &self.target {
            out.push(' ');
            out.push_str(&t.describe());
        }
        if let Some(v) = &self.value {
            match self.kind {
                ActionKind::Navigate => out.push_str(&format!(" {v}")),
                _ => out.push_str(&format!(" = \"{v}\"")),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ActionOutcome {
    Ok,
    Error { message: String },
}

impl ActionOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, ActionOutcome::Ok)
    }

    pub fn error_message(&self) -> Option<&str> {
        match self {
            ActionOutcome::Ok => None,
            ActionOutcome::Error { message } => Some(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub action: BrowserAction,
    pub outcome: ActionOutcome,
    /// Short summary of the observable change (may be empty).
    pub post_state_digest: String,
}

/// Append-only record of (action, outcome) pairs from one browser session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    records: Vec<ActionRecord>,
}

impl Trajectory {
    pub fn new() -> Self {
        Trajectory::default()
    }

    pub fn push(&mut self, record: ActionRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[ActionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&ActionRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessibilityNode {
    /// Session-unique id the agent can refer to.
    #[serde(rename = "ref")]
    pub ref_id: String,
    pub role: String,
    /// Accessible name.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub enabled: bool,
    pub editable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSnapshot {
    pub url: String,
    pub title: String,
    pub nodes: Vec<AccessibilityNode>,
    pub console_errors: Vec<String>,
    pub truncated: bool,
}

/// Structured repair feedback translated from a non-passing trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    pub feature: String,
    /// The step or action where failure occurred.
    pub failed_at: String,
    /// What was actually seen.
    pub observation: String,
    pub steps_completed: Vec<String>,
    /// The validation agent's explanation.
    pub rationale: String,
}

impl FailureReport {
    /// The four-line human rendering used in repair prompts and on disk.
    pub fn render_human(&self) -> String {
        format!(
            "Feature: {}\nFailed at: {}\nObservation: {}\nSteps completed: {}",
            self.feature,
            self.failed_at,
            self.observation,
            if self.steps_completed.is_empty() {
                "none".to_string()
            } else {
                self.steps_completed.join("; ")
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub case_id: String,
    pub verdict: Verdict,
    pub trajectory: Trajectory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_report: Option<FailureReport>,
    pub iterations_used: u32,
}

impl TestResult {
    pub fn new(
        case_id: impl Into<String>,
        verdict: Verdict,
        trajectory: Trajectory,
        failure_report: Option<FailureReport>,
        iterations_used: u32,
    ) -> Result<Self, ModelError> {
        if (verdict == Verdict::Pass) != failure_report.is_none() {
            return Err(ModelError::VerdictReportMismatch);
        }
        if let Some(report) = &failure_report {
            if report.failed_at.trim().is_empty() || report.observation.trim().is_empty() {
                return Err(ModelError::EmptyField { field: "failed_at/observation" });
            }
        }
        Ok(TestResult {
            case_id: case_id.into(),
            verdict,
            trajectory,
            failure_report,
            iterations_used,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteRunReport {
    pub results: Vec<TestResult>,
    pub all_pass: bool,
}

impl SuiteRunReport {
    /// `all_pass` is true only when every verdict is Pass; Partial does not
    /// count. An empty result list is vacuously passing.
    pub fn from_results(results: Vec<TestResult>) -> Self {
        let all_pass = results.iter().all(|r| r.verdict == Verdict::Pass);
        SuiteRunReport { results, all_pass }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    DeploymentFailure,
    ElementNotFound,
    AssertionMismatch,
    InteractionTimeout,
    RuntimeError,
    NavigationFailure,
}

impl fmt::Display for FailureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FailureClass::DeploymentFailure => "deployment_failure",
            FailureClass::ElementNotFound => "element_not_found",
            FailureClass::AssertionMismatch => "assertion_mismatch",
            FailureClass::InteractionTimeout => "interaction_timeout",
            FailureClass::RuntimeError => "runtime_error",
            FailureClass::NavigationFailure => "navigation_failure",
        };
        write!(f, "{s}")
    }
}

/// A failure class with the report it was derived from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedFailure {
    pub class: FailureClass,
    pub report: FailureReport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub const ZERO: TokenUsage = TokenUsage { input_tokens: 0, output_tokens: 0 };

    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        TokenUsage { input_tokens, output_tokens }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Incremental,
    WholeProject,
    Agentic,
    /// The no-TDD baseline: one shot, evaluated once.
    None,
}

impl ProtocolKind {
    pub fn parse(name: &str) -> Option<ProtocolKind> {
        match name.trim().to_ascii_lowercase().as_str() {
            "incremental" | "incr" => Some(ProtocolKind::Incremental),
            "whole" | "whole_project" | "whole-project" => Some(ProtocolKind::WholeProject),
            "agentic" => Some(ProtocolKind::Agentic),
            "none" | "baseline" | "non_tdd" | "non-tdd" => Some(ProtocolKind::None),
            _ => None,
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProtocolKind::Incremental => "incremental",
            ProtocolKind::WholeProject => "whole_project",
            ProtocolKind::Agentic => "agentic",
            ProtocolKind::None => "none",
        };
        write!(f, "{s}")
    }
}

fn default_attempt_budget() -> u32 {
    5
}

fn default_max_iterations() -> u32 {
    20
}

fn default_max_generated_cases() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub protocol: ProtocolKind,
    /// Attempt budget K.
    #[serde(default = "default_attempt_budget")]
    pub attempt_budget: u32,
    /// Max validation iterations T per case.
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    #[serde(default = "default_max_generated_cases")]
    pub max_generated_cases: usize,
    #[serde(default)]
    pub seed: u64,
    pub workdir: PathBuf,
    pub model: String,
}

impl RunConfig {
    pub fn new(protocol: ProtocolKind, workdir: impl Into<PathBuf>) -> Self {
        RunConfig {
            protocol,
            attempt_budget: default_attempt_budget(),
            max_iterations: default_max_iterations(),
            max_generated_cases: default_max_generated_cases(),
            seed: 0,
            workdir: workdir.into(),
            model: "unspecified".into(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.attempt_budget < 1 {
            return Err(ModelError::InvalidConfig("attempt_budget must be >= 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(ModelError::InvalidConfig("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// What a logged outcome covers: the whole suite or one feature case.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scope {
    Suite,
    Feature { case_id: String },
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Suite => write!(f, "suite"),
            Scope::Feature { case_id } => write!(f, "feature:{case_id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub case_id: String,
    pub verdict: Verdict,
}

/// One logged deploy-test attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub run_id: String,
    pub condition: ProtocolKind,
    pub scope: Scope,
    pub attempt: u32,
    pub verdicts: Vec<CaseVerdict>,
    pub cumulative_usage: TokenUsage,
    /// Unix epoch seconds.
    pub timestamp: u64,
}

/// Compact canonical JSON used as the wire and file format everywhere.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("domain types serialize infallibly")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_order_is_pass_over_partial_over_fail() {
        assert!(Verdict::Pass > Verdict::Partial);
        assert!(Verdict::Partial > Verdict::Fail);
    }

    #[test]
    fn best_verdict_examples() {
        use Verdict::*;
        assert_eq!(best_verdict_within(&[Fail, Partial, Pass], 2).unwrap(), Partial);
        assert_eq!(best_verdict_within(&[Pass], 5).unwrap(), Pass);
        assert_eq!(best_verdict_within(&[Fail, Fail, Fail], 3).unwrap(), Fail);
        assert!(best_verdict_within(&[], 1).is_err());
        assert!(best_verdict_within(&[Pass], 0).is_err());
    }

    #[test]
    fn case_id_is_deterministic_and_content_sensitive() {
        let steps = vec!["open the page".to_string(), "click post".to_string()];
        let a = case_id("posting product", &steps, "product visible").unwrap();
        let b = case_id("posting product", &steps, "product visible").unwrap();
        assert_eq!(a, b);

        let mut other = steps.clone();
        other[1] = "click submit".to_string();
        let c = case_id("posting product", &other, "product visible").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn case_id_field_boundaries_matter() {
        // Same concatenated text, different field split.
        let a = case_id("ab", &["c".into()], "d").unwrap();
        let b = case_id("a", &["bc".into()], "d").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn whitespace_only_feature_is_rejected() {
        assert!(matches!(
            case_id("   ", &["x".into()], "y"),
            Err(ModelError::EmptyField { field: "feature" })
        ));
    }

    #[test]
    fn suite_rejects_duplicate_ids() {
        let case = TestCase::new("f", vec!["s".into()], "e").unwrap();
        let err = TestSuite::new(vec![case.clone(), case], "instr").unwrap_err();
        assert!(matches!(err, ModelError::DuplicateCaseId(_)));
    }

    #[test]
    fn action_invariants() {
        assert!(BrowserAction::navigate("/").validate().is_ok());
        let bad = BrowserAction { kind: ActionKind::Navigate, target: None, value: None };
        assert!(bad.validate().is_err());
        let bad = BrowserAction { kind: ActionKind::Click, target: None, value: None };
        assert!(bad.validate().is_err());
        let bad = BrowserAction {
            kind: ActionKind::Fill,
            target: Some(SelectorSpec::css("input")),
            value: None,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn all_pass_requires_every_pass() {
        let pass = TestResult::new("a", Verdict::Pass, Trajectory::new(), None, 1).unwrap();
        let partial = TestResult::new(
            "b",
            Verdict::Partial,
            Trajectory::new(),
            Some(FailureReport {
                feature: "f".into(),
                failed_at: "step 1".into(),
                observation: "wording differs".into(),
                steps_completed: vec![],
                rationale: "partially met".into(),
            }),
            1,
        )
        .unwrap();
        assert!(SuiteRunReport::from_results(vec![pass.clone()]).all_pass);
        assert!(!SuiteRunReport::from_results(vec![pass, partial]).all_pass);
        assert!(SuiteRunReport::from_results(vec![]).all_pass);
    }

    #[test]
    fn pass_with_report_is_rejected() {
        let report = FailureReport {
            feature: "f".into(),
            failed_at: "x".into(),
            observation: "y".into(),
            steps_completed: vec![],
            rationale: "r".into(),
        };
        assert!(TestResult::new("a", Verdict::Pass, Trajectory::new(), Some(report), 1).is_err());
        assert!(TestResult::new("a", Verdict::Fail, Trajectory::new(), None, 1).is_err());
    }

    #[test]
    fn token_usage_adds_componentwise() {
        let total = TokenUsage::new(100, 20) + TokenUsage::new(50, 30);
        assert_eq!(total, TokenUsage::new(150, 50));
        assert_eq!(TokenUsage::ZERO + total, total);
    }

    #[test]
    fn canonical_json_field_names() {
        let case = TestCase::new("login", vec!["fill email".into()], "dashboard shown").unwrap();
        let json = to_canonical_json(&case);
        assert!(json.contains("\"feature\":\"login\""));
        assert!(json.contains("\"steps\":["));
        assert!(json.contains("\"expected\":"));
        let verdict = to_canonical_json(&Verdict::Partial);
        assert_eq!(verdict, "\"partial\"");
        let class = to_canonical_json(&FailureClass::ElementNotFound);
        assert_eq!(class, "\"element_not_found\"");
    }
}
