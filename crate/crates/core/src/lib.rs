//! Closed-loop test-driven development for agent-generated web applications.
//!
//! The pipeline has three stages: derive acceptance tests from a natural
//! language requirement ([`testgen`]), deploy the generated application and
//! validate it through browser interaction ([`deploy`], [`browser`],
//! [`validate`]), and translate failures into structured repair reports that
//! are fed back to a coding agent ([`agent`]). The [`protocols`] module
//! composes those stages into four enforcement conditions, [`eval`] computes
//! accuracy and cost metrics over the logged outcomes, and [`mcp`] exposes
//! the deploy/test tools to external agents over stdio JSON-RPC.
//!
//! Every LLM interaction goes through the [`gateway`], which supports
//! deterministic record/replay cassettes so the entire loop can be exercised
//! offline against the bundled [`fixtures`] corpus.

pub mod agent;
pub mod browser;
pub mod deploy;
pub mod eval;
pub mod fixtures;
pub mod gateway;
pub mod mcp;
pub mod model;
pub mod protocols;
pub mod testgen;
pub mod validate;

pub use model::{
    ActionKind, ActionOutcome, ActionRecord, AccessibilityNode, BrowserAction, ClassifiedFailure,
    FailureClass, FailureReport, PageSnapshot, Persona, ProtocolKind, RunConfig, Scope,
    SelectorSpec, SelectorStrategy, SuiteRunReport, TestCase, TestResult, TestSuite, TokenUsage,
    Trajectory, Verdict,
};
