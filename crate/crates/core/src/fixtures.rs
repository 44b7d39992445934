//! Bundled demo apps with known-good and known-broken variants, plus a
//! deterministic scripted model backend.
//!
//! The apps serve two jobs. As a corpus, each broken variant carries one
//! injected defect that must surface as a specific failure class, giving
//! verdict accuracy a ground truth to score against. As scenario material,
//! the scripted backend walks the enforcement protocols over them end to
//! end — generation, coding, validation, coverage judging — without a live
//! model. Every scripted reply is a pure function of the request, so runs
//! are identical in live, record, and replay modes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde_json::json;
use thiserror::Error;

use crate::agent::{AGENT_SYSTEM_PROMPT, AGENT_TDD_SYSTEM_PROMPT};
use crate::deploy::{deploy, DeployOptions};
use crate::eval::COVERAGE_SYSTEM_PROMPT;
use crate::gateway::{
    BackendError, ChatBackend, ChatRequest, ChatResponse, Gateway, Role, ToolCall,
};
use crate::model::{FailureClass, SuiteRunReport, TestCase, TestSuite, TokenUsage, Verdict};
use crate::protocols::deploy_failure_report;
use crate::testgen::{ELABORATE_SYSTEM_PROMPT, PERSONA_SYSTEM_PROMPT};
use crate::validate::{
    run_suite, EngineKind, ValidateError, ValidateOptions, PAGE_SECTION, TRAJECTORY_SECTION,
    VALIDATE_SYSTEM_PROMPT,
};

/// Token usage attributed to every scripted reply, so usage accounting has
/// nonzero numbers to aggregate.
const SCRIPTED_USAGE: TokenUsage = TokenUsage { input_tokens: 420, output_tokens: 80 };

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture {0} has no broken variant")]
    NoBrokenVariant(&'static str),
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error("fixture io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Correct,
    Broken,
}

impl Variant {
    pub fn parse(name: &str) -> Option<Variant> {
        match name.trim().to_ascii_lowercase().as_str() {
            "correct" => Some(Variant::Correct),
            "broken" => Some(Variant::Broken),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Correct => "correct",
            Variant::Broken => "broken",
        })
    }
}

/// The injected defect of a fixture's broken variant.
#[derive(Debug, Clone, Copy)]
pub struct BrokenVariant {
    /// One line on what was broken.
    pub defect: &'static str,
    /// Failure class a validation run over this variant must report.
    pub class: FailureClass,
    files: &'static [(&'static str, &'static str)],
}

/// A bundled app: sources for the correct variant, optionally a broken
/// variant, and the acceptance cases that exercise it.
#[derive(Debug, Clone, Copy)]
pub struct FixtureApp {
    pub name: &'static str,
    /// One line on what the app does.
    pub summary: &'static str,
    files: &'static [(&'static str, &'static str)],
    features: &'static [&'static str],
    pub broken: Option<BrokenVariant>,
}

impl FixtureApp {
    /// Relative path / content pairs for one variant.
    pub fn files(
        &self,
        variant: Variant,
    ) -> Result<&'static [(&'static str, &'static str)], FixtureError> {
        match variant {
            Variant::Correct => Ok(self.files),
            Variant::Broken => self
                .broken
                .as_ref()
                .map(|b| b.files)
                .ok_or(FixtureError::NoBrokenVariant(self.name)),
        }
    }

    /// Writes one variant's sources into `dir`, creating it as needed.
    pub fn materialize(&self, variant: Variant, dir: &Path) -> Result<(), FixtureError> {
        for (rel, content) in self.files(variant)? {
            let target = dir.join(rel);
            if let Some(parent) = target.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(target, content)?;
        }
        Ok(())
    }

    /// The acceptance suite for this app. Empty for deploy-behavior-only
    /// fixtures such as `slow` and `stubborn`.
    pub fn suite(&self) -> TestSuite {
        suite_from_features(self.features, self.summary)
    }
}

/// Every bundled app, verdict corpus and auxiliary alike.
pub fn all() -> &'static [FixtureApp] {
    APPS
}

/// The apps with a broken variant: the ground-truth corpus for verdict
/// accuracy.
pub fn corpus() -> Vec<&'static FixtureApp> {
    APPS.iter().filter(|app| app.broken.is_some()).collect()
}

pub fn find(name: &str) -> Option<&'static FixtureApp> {
    APPS.iter().find(|app| app.name == name)
}

/// Expected verdict per corpus entry, keyed `name/variant`: correct variants
/// must pass, broken ones must not.
pub fn corpus_ground_truth() -> BTreeMap<String, Verdict> {
    let mut truth = BTreeMap::new();
    for app in corpus() {
        truth.insert(format!("{}/{}", app.name, Variant::Correct), Verdict::Pass);
        truth.insert(format!("{}/{}", app.name, Variant::Broken), Verdict::Fail);
    }
    truth
}

/// A corpus sweep: one overall verdict per app variant plus the full suite
/// report behind it.
#[derive(Debug)]
pub struct CorpusOutcome {
    /// Worst case verdict per `name/variant`.
    pub observed: BTreeMap<String, Verdict>,
    pub reports: BTreeMap<String, SuiteRunReport>,
}

/// The suite-level verdict: the worst individual case verdict, or pass for
/// an empty report.
pub fn observed_verdict(report: &SuiteRunReport) -> Verdict {
    report.results.iter().map(|r| r.verdict).min().unwrap_or(Verdict::Pass)
}

/// Deploys and validates both variants of every corpus app. Each variant is
/// materialized under `scratch`, deployed, validated, and stopped; a variant
/// that will not deploy is scored through its deployment-failure report
/// rather than aborting the sweep.
pub fn run_corpus(
    scratch: &Path,
    gateway: &Gateway,
    engine: &EngineKind,
    validate: &ValidateOptions,
    deploy_options: &DeployOptions,
) -> Result<CorpusOutcome, FixtureError> {
    let mut observed = BTreeMap::new();
    let mut reports = BTreeMap::new();
    for app in corpus() {
        for variant in [Variant::Correct, Variant::Broken] {
            let dir = scratch.join(format!("{}-{variant}", app.name));
            std::fs::create_dir_all(&dir)?;
            app.materialize(variant, &dir)?;
            let suite = app.suite();
            let report = match deploy(&dir, deploy_options) {
                Ok(mut handle) => {
                    let report = run_suite(&suite, handle.url(), gateway, engine, validate);
                    handle.stop();
                    report?
                }
                Err(err) => deploy_failure_report(&suite.cases, &err),
            };
            let key = format!("{}/{variant}", app.name);
            observed.insert(key.clone(), observed_verdict(&report));
            reports.insert(key, report);
        }
    }
    Ok(CorpusOutcome { observed, reports })
}

// ---------------------------------------------------------------------------
// Case scripts: the single source of truth binding a feature to its prose
// steps, the browser actions the scripted validator takes, and the page
// marker that decides its verdict.
// ---------------------------------------------------------------------------

struct CaseScript {
    /// Globally unique; doubles as the dispatch key in prompts.
    feature: &'static str,
    steps: &'static [&'static str],
    expected: &'static str,
    /// Raw JSON replies for the validation agent, in order.
    actions: &'static [&'static str],
    /// Must appear in the final page section for a pass verdict.
    success_marker: &'static str,
    /// Verdict issued when the marker is absent after a clean trajectory.
    fail_verdict: Verdict,
    fail_explanation: &'static str,
    /// Explanation issued when an action in the trajectory errored.
    error_explanation: &'static str,
}

const FILL_EMAIL: &str = r#"{"action": {"kind": "fill", "target": {"strategy": "role_and_name", "query": "textbox Email"}, "value": "ada@example.com"}}"#;

static SCRIPTS: &[CaseScript] = &[
    CaseScript {
        feature: "user login",
        steps: &[
            "Open the login page",
            "Enter the email address",
            "Enter the password",
            "Submit the login form",
        ],
        expected: "the dashboard shows a welcome message",
        actions: &[
            FILL_EMAIL,
            r#"{"action": {"kind": "fill", "target": {"strategy": "role_and_name", "query": "textbox Password"}, "value": "correct horse"}}"#,
            r#"{"action": {"kind": "click", "target": {"strategy": "role_and_name", "query": "button Log in"}}}"#,
        ],
        success_marker: "Welcome back",
        fail_verdict: Verdict::Fail,
        fail_explanation: "the dashboard never showed a welcome message",
        error_explanation: "no submit control was present on the page",
    },
    CaseScript {
        feature: "saving a note",
        steps: &["Open the notes page", "Type a note", "Save it"],
        expected: "the saved note appears in the list",
        actions: &[
            r#"{"action": {"kind": "fill", "target": {"strategy": "role_and_name", "query": "textbox Note"}, "value": "Remember the milk"}}"#,
            r#"{"action": {"kind": "click", "target": {"strategy": "role_and_name", "query": "button Save"}}}"#,
            r#"{"action": {"kind": "wait_for", "target": {"strategy": "role_and_name", "query": "listitem Remember the milk"}}}"#,
        ],
        success_marker: "Remember the milk",
        fail_verdict: Verdict::Fail,
        fail_explanation: "the saved note never appeared in the list",
        error_explanation: "the note was submitted but the list never showed it",
    },
    CaseScript {
        feature: "the storefront title is shown",
        steps: &["Open the shop home page"],
        expected: "the page greets visitors with the shop name",
        actions: &[],
        success_marker: "Corner Shop",
        fail_verdict: Verdict::Fail,
        fail_explanation: "the shop name is missing from the page",
        error_explanation: "the home page could not be checked",
    },
    CaseScript {
        feature: "posting a product",
        steps: &["Open the shop home page", "Enter the product name", "Post it"],
        expected: "the new product appears in the listing",
        actions: &[
            r#"{"action": {"kind": "fill", "target": {"strategy": "role_and_name", "query": "textbox Product name"}, "value": "Wireless Mouse"}}"#,
            r#"{"action": {"kind": "click", "target": {"strategy": "role_and_name", "query": "button Post"}}}"#,
        ],
        success_marker: "Wireless Mouse",
        fail_verdict: Verdict::Fail,
        fail_explanation: "the posted product never appeared in the listing",
        error_explanation: "the posting form could not be submitted",
    },
    CaseScript {
        feature: "searching the site",
        steps: &["Open the search page", "Follow the link to the results"],
        expected: "the results page lists the matches",
        actions: &[
            r#"{"action": {"kind": "click", "target": {"strategy": "role_and_name", "query": "link Results"}}}"#,
        ],
        success_marker: "Search results",
        fail_verdict: Verdict::Fail,
        fail_explanation: "no results were shown",
        error_explanation: "the results link leads nowhere",
    },
    CaseScript {
        feature: "status page shows system health",
        steps: &["Open the status page"],
        expected: "the page reports that all systems are operational",
        actions: &[r#"{"action": {"kind": "navigate", "value": "/"}}"#],
        success_marker: "All systems operational",
        fail_verdict: Verdict::Fail,
        fail_explanation: "the page never reported an operational status",
        error_explanation: "the status page failed to load cleanly",
    },
    CaseScript {
        feature: "creating an account",
        steps: &[
            "Open the signup page",
            "Fill in the name",
            "Fill in the email",
            "Create the account",
        ],
        expected: "the page confirms the account was created",
        actions: &[
            r#"{"action": {"kind": "fill", "target": {"strategy": "role_and_name", "query": "textbox Name"}, "value": "Ada Lovelace"}}"#,
            FILL_EMAIL,
            r#"{"action": {"kind": "click", "target": {"strategy": "role_and_name", "query": "button Create account"}}}"#,
        ],
        success_marker: "Account created",
        fail_verdict: Verdict::Partial,
        fail_explanation: "the form was accepted but no account confirmation appeared",
        error_explanation: "the signup form could not be submitted",
    },
    CaseScript {
        feature: "publishing a notice",
        steps: &["Open the board", "Write a message", "Publish it"],
        expected: "the published message appears on the board",
        actions: &[
            r#"{"action": {"kind": "fill", "target": {"strategy": "role_and_name", "query": "textbox Message"}, "value": "Meeting at noon"}}"#,
            r#"{"action": {"kind": "click", "target": {"strategy": "role_and_name", "query": "button Publish"}}}"#,
        ],
        success_marker: "Meeting at noon",
        fail_verdict: Verdict::Fail,
        fail_explanation: "the published message never appeared",
        error_explanation: "the board rejected the message",
    },
    CaseScript {
        feature: "a new visitor sees a fresh counter",
        steps: &["Open the page for the first time"],
        expected: "the visit counter reads 1",
        actions: &[],
        success_marker: "Visit count: 1",
        fail_verdict: Verdict::Fail,
        fail_explanation: "the counter did not start at 1",
        error_explanation: "the page could not be opened",
    },
    CaseScript {
        feature: "a second case starts from a clean session",
        steps: &["Open the page again in a fresh test case"],
        expected: "the visit counter reads 1 again because no cookies carry over",
        actions: &[],
        success_marker: "Visit count: 1",
        fail_verdict: Verdict::Fail,
        fail_explanation: "session state leaked between test cases",
        error_explanation: "the page could not be opened",
    },
    CaseScript {
        feature: "every product shows a featured badge",
        steps: &["Open the catalog"],
        expected: "each product carries a featured badge",
        actions: &[],
        success_marker: "Featured",
        fail_verdict: Verdict::Fail,
        fail_explanation: "no featured badge was rendered",
        error_explanation: "the catalog could not be opened",
    },
    CaseScript {
        feature: "home page shows the alpha panel",
        steps: &["Open the home page"],
        expected: "the alpha panel is visible",
        actions: &[],
        success_marker: "Alpha panel",
        fail_verdict: Verdict::Fail,
        fail_explanation: "the alpha panel is missing",
        error_explanation: "the home page failed to open",
    },
    CaseScript {
        feature: "about page shows the beta panel",
        steps: &["Open the home page", "Follow the link to the about page"],
        expected: "the beta panel is visible",
        actions: &[
            r#"{"action": {"kind": "click", "target": {"strategy": "role_and_name", "query": "link About"}}}"#,
        ],
        success_marker: "Beta panel",
        fail_verdict: Verdict::Fail,
        fail_explanation: "the beta panel is missing",
        error_explanation: "the about page is unreachable",
    },
    CaseScript {
        feature: "the welcome note is shown on the home page",
        steps: &["Open the home page"],
        expected: "a welcome note greets the visitor",
        actions: &[],
        success_marker: "Welcome to the launch",
        fail_verdict: Verdict::Fail,
        fail_explanation: "no welcome note was shown",
        error_explanation: "the home page failed to open",
    },
];

fn script_for(feature: &str) -> Option<&'static CaseScript> {
    SCRIPTS.iter().find(|s| s.feature == feature)
}

fn suite_from_features(features: &[&str], instruction: &str) -> TestSuite {
    let cases = features
        .iter()
        .map(|feature| {
            let script = script_for(feature).expect("every fixture feature has a script");
            TestCase::new(
                script.feature,
                script.steps.iter().map(|s| s.to_string()).collect(),
                script.expected,
            )
            .expect("fixture scripts are well-formed")
        })
        .collect();
    TestSuite::new(cases, instruction).expect("fixture features are unique")
}

// ---------------------------------------------------------------------------
// App registry
// ---------------------------------------------------------------------------

macro_rules! fixture_file {
    ($path:literal) => {
        include_str!(concat!("../fixtures/", $path))
    };
}

static APPS: &[FixtureApp] = &[
    FixtureApp {
        name: "login",
        summary: "email and password login that lands on a dashboard",
        files: &[
            ("package.json", fixture_file!("login/package.json")),
            ("server.js", fixture_file!("login/server.js")),
        ],
        features: &["user login"],
        broken: Some(BrokenVariant {
            defect: "the login form has no submit button",
            class: FailureClass::ElementNotFound,
            files: &[
                ("package.json", fixture_file!("login/package.json")),
                ("server.js", fixture_file!("login/server.broken.js")),
            ],
        }),
    },
    FixtureApp {
        name: "notes",
        summary: "note pad that lists saved notes",
        files: &[
            ("package.json", fixture_file!("notes/package.json")),
            ("server.js", fixture_file!("notes/server.js")),
        ],
        features: &["saving a note"],
        broken: Some(BrokenVariant {
            defect: "submitted notes are never stored",
            class: FailureClass::InteractionTimeout,
            files: &[
                ("package.json", fixture_file!("notes/package.json")),
                ("server.js", fixture_file!("notes/server.broken.js")),
            ],
        }),
    },
    FixtureApp {
        name: "shop",
        summary: "storefront with a product posting form",
        files: &[
            ("package.json", fixture_file!("shop/package.json")),
            ("server.js", fixture_file!("shop/server.js")),
        ],
        features: &["posting a product"],
        broken: Some(BrokenVariant {
            defect: "posted products never render in the listing",
            class: FailureClass::AssertionMismatch,
            files: &[
                ("package.json", fixture_file!("shop/package.json")),
                ("server.js", fixture_file!("shop/server.broken.js")),
            ],
        }),
    },
    FixtureApp {
        name: "search",
        summary: "static search page linking to a results page",
        files: &[
            ("index.html", fixture_file!("search/index.html")),
            ("results.html", fixture_file!("search/results.html")),
        ],
        features: &["searching the site"],
        broken: Some(BrokenVariant {
            defect: "the results page is missing, so the link dead-ends",
            class: FailureClass::NavigationFailure,
            files: &[("index.html", fixture_file!("search/index.html"))],
        }),
    },
    FixtureApp {
        name: "status",
        summary: "static status page reporting system health",
        files: &[
            ("index.html", fixture_file!("status/index.html")),
            ("app.js", fixture_file!("status/app.js")),
        ],
        features: &["status page shows system health"],
        broken: Some(BrokenVariant {
            defect: "the page script is missing and the health line never renders",
            class: FailureClass::RuntimeError,
            files: &[("index.html", fixture_file!("status/index.broken.html"))],
        }),
    },
    FixtureApp {
        name: "signup",
        summary: "account signup form with a confirmation page",
        files: &[
            ("package.json", fixture_file!("signup/package.json")),
            ("server.js", fixture_file!("signup/server.js")),
        ],
        features: &["creating an account"],
        broken: Some(BrokenVariant {
            defect: "submissions are acknowledged without any account confirmation",
            class: FailureClass::AssertionMismatch,
            files: &[
                ("package.json", fixture_file!("signup/package.json")),
                ("server.js", fixture_file!("signup/server.broken.js")),
            ],
        }),
    },
    FixtureApp {
        name: "board",
        summary: "notice board where messages are published to a list",
        files: &[
            ("package.json", fixture_file!("board/package.json")),
            ("server.js", fixture_file!("board/server.js")),
        ],
        features: &["publishing a notice"],
        broken: Some(BrokenVariant {
            defect: "the server exits at startup over missing configuration",
            class: FailureClass::DeploymentFailure,
            files: &[
                ("package.json", fixture_file!("board/package.json")),
                ("server.js", fixture_file!("board/server.broken.js")),
            ],
        }),
    },
    FixtureApp {
        name: "slow",
        summary: "serves one page after a two-second boot delay",
        files: &[
            ("package.json", fixture_file!("slow/package.json")),
            ("server.js", fixture_file!("slow/server.js")),
        ],
        features: &[],
        broken: None,
    },
    FixtureApp {
        name: "stubborn",
        summary: "ignores polite termination signals",
        files: &[
            ("package.json", fixture_file!("stubborn/package.json")),
            ("server.js", fixture_file!("stubborn/server.js")),
        ],
        features: &[],
        broken: None,
    },
    FixtureApp {
        name: "visits",
        summary: "cookie-based visit counter",
        files: &[
            ("package.json", fixture_file!("visits/package.json")),
            ("server.js", fixture_file!("visits/server.js")),
        ],
        features: &[
            "a new visitor sees a fresh counter",
            "a second case starts from a clean session",
        ],
        broken: None,
    },
];

// ---------------------------------------------------------------------------
// Scenarios: instructions the scripted backend knows how to build apps for,
// walking each protocol through a characteristic shape (converging repair,
// budget exhaustion, a regression mid-sequence, voluntary TDD, no TDD).
// ---------------------------------------------------------------------------

pub mod scenarios {
    use super::suite_from_features;
    use crate::model::TestSuite;

    /// Whole-project shape: first build fails one of two cases, one repair
    /// converges.
    pub const STOREFRONT: &str =
        "a small storefront where sellers post a product and shoppers see it listed";

    /// Whole-project shape: the defect survives every repair, exhausting the
    /// attempt budget.
    pub const CATALOG_BADGES: &str =
        "a catalog page where every product carries a featured badge";

    /// Incremental shape: implementing the second feature breaks the first,
    /// and the regression is caught by the admitted suite.
    pub const TWO_PANEL_SITE: &str =
        "a two-page site: the home page shows the alpha panel and the about page shows the beta panel";

    /// Agentic and passing-baseline shape: one page, built correctly (the
    /// agentic walk first ships a broken page, then tests, fixes, and retests
    /// on its own initiative).
    pub const WELCOME_LANDING: &str =
        "a landing page that greets visitors with a welcome note";

    /// Failing-baseline shape: the build stops at a placeholder page.
    pub const STARTER_TEMPLATE: &str =
        "a landing page assembled from the plain starter template";

    /// The acceptance suite the scripted generator produces for a scenario
    /// instruction.
    pub fn suite_for(instruction: &str) -> Option<TestSuite> {
        let features: &[&str] = match instruction {
            STOREFRONT => &["the storefront title is shown", "posting a product"],
            CATALOG_BADGES => &["every product shows a featured badge"],
            TWO_PANEL_SITE => {
                &["home page shows the alpha panel", "about page shows the beta panel"]
            }
            WELCOME_LANDING | STARTER_TEMPLATE => {
                &["the welcome note is shown on the home page"]
            }
            _ => return None,
        };
        Some(suite_from_features(features, instruction))
    }
}

// Pages the scripted coder writes for scenario apps.

const CATALOG_MISSING_BADGES: &str = r#"<!doctype html>
<html>
<head><title>Catalog</title></head>
<body>
<h1>Catalog</h1>
<ul>
  <li>Wireless Mouse</li>
  <li>USB Hub</li>
</ul>
</body>
</html>
"#;

const PANEL_INDEX_ALPHA: &str = r#"<!doctype html>
<html>
<head><title>Home</title></head>
<body>
<h1>Home</h1>
<p>Alpha panel</p>
</body>
</html>
"#;

const PANEL_ABOUT: &str = r#"<!doctype html>
<html>
<head><title>About</title></head>
<body>
<h1>About</h1>
<p>Beta panel</p>
</body>
</html>
"#;

const PANEL_INDEX_REGRESSED: &str = r#"<!doctype html>
<html>
<head><title>Home</title></head>
<body>
<h1>Home</h1>
<a href="about.html">About</a>
</body>
</html>
"#;

const PANEL_INDEX_RESTORED: &str = r#"<!doctype html>
<html>
<head><title>Home</title></head>
<body>
<h1>Home</h1>
<p>Alpha panel</p>
<a href="about.html">About</a>
</body>
</html>
"#;

const WELCOME_PAGE: &str = r#"<!doctype html>
<html>
<head><title>Launch</title></head>
<body>
<h1>Welcome to the launch</h1>
<p>We are glad you made it.</p>
</body>
</html>
"#;

const STARTER_PAGE: &str = r#"<!doctype html>
<html>
<head><title>Launch</title></head>
<body>
<h1>Coming soon</h1>
</body>
</html>
"#;

type FileWrites = &'static [(&'static str, &'static str)];

/// Initial whole-project builds, keyed by scenario instruction.
static IMPLEMENT_ALL: &[(&str, FileWrites)] = &[
    (
        scenarios::STOREFRONT,
        &[
            ("package.json", fixture_file!("shop/package.json")),
            ("server.js", fixture_file!("shop/server.broken.js")),
        ],
    ),
    (scenarios::CATALOG_BADGES, &[("index.html", CATALOG_MISSING_BADGES)]),
];

/// Per-feature incremental builds. Implementing the beta panel rewrites the
/// home page and drops the alpha panel — the planted regression.
static FEATURE_IMPLEMENTS: &[(&str, FileWrites)] = &[
    ("home page shows the alpha panel", &[("index.html", PANEL_INDEX_ALPHA)]),
    (
        "about page shows the beta panel",
        &[("about.html", PANEL_ABOUT), ("index.html", PANEL_INDEX_REGRESSED)],
    ),
];

/// Repairs keyed by the failing feature named in the repair task. The
/// catalog repair rewrites the same defective page, so that scenario never
/// converges.
static REPAIRS: &[(&str, FileWrites)] = &[
    ("posting a product", &[("server.js", fixture_file!("shop/server.js"))]),
    ("every product shows a featured badge", &[("index.html", CATALOG_MISSING_BADGES)]),
    ("home page shows the alpha panel", &[("index.html", PANEL_INDEX_RESTORED)]),
];

/// One-shot baseline builds, keyed by instruction.
static BASELINES: &[(&str, FileWrites)] = &[
    (scenarios::WELCOME_LANDING, &[("index.html", WELCOME_PAGE)]),
    (scenarios::STARTER_TEMPLATE, &[("index.html", STARTER_PAGE)]),
];

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// A model stand-in that answers every prompt the pipeline can produce:
/// persona generation, case elaboration, validation stepping, coverage
/// judging, and the coding agent for the scenario instructions. Replies
/// depend only on the request, never on call order.
#[derive(Debug, Default, Clone, Copy)]
pub struct ScriptedBackend;

impl ScriptedBackend {
    pub fn new() -> ScriptedBackend {
        ScriptedBackend
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let system = request
            .messages
            .first()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .ok_or_else(|| BackendError::fatal("scripted backend: no system message"))?;
        let user = request
            .messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .ok_or_else(|| BackendError::fatal("scripted backend: no user message"))?;

        match system {
            VALIDATE_SYSTEM_PROMPT => validation_reply(latest_user(request)),
            PERSONA_SYSTEM_PROMPT => Ok(text(persona_reply(user))),
            ELABORATE_SYSTEM_PROMPT => elaboration_reply(user).map(text),
            COVERAGE_SYSTEM_PROMPT => Ok(text(coverage_reply(user))),
            AGENT_SYSTEM_PROMPT => coding_reply(user, assistant_turns(request)),
            AGENT_TDD_SYSTEM_PROMPT => agentic_reply(user, assistant_turns(request)),
            _ => Err(BackendError::fatal("scripted backend: unrecognized system prompt")),
        }
    }
}

fn text(content: String) -> ChatResponse {
    ChatResponse::text(content, SCRIPTED_USAGE)
}

fn assistant_turns(request: &ChatRequest) -> usize {
    request.messages.iter().filter(|m| m.role == Role::Assistant).count()
}

/// The newest user message: validation re-prompts append to the
/// conversation, and only the latest prompt reflects the current page.
fn latest_user(request: &ChatRequest) -> &str {
    request
        .messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or_default()
}

/// Walks a test case: replay the script's actions in order, then decide the
/// verdict from the success marker. Any errored action fails immediately
/// with the script's error explanation.
fn validation_reply(prompt: &str) -> Result<ChatResponse, BackendError> {
    let feature = prompt
        .lines()
        .find_map(|line| line.strip_prefix("feature: "))
        .ok_or_else(|| BackendError::fatal("scripted validator: prompt names no feature"))?;
    let script = script_for(feature).ok_or_else(|| {
        BackendError::fatal(format!("scripted validator: no script for feature {feature:?}"))
    })?;
    let (_, rest) = prompt
        .split_once(TRAJECTORY_SECTION)
        .ok_or_else(|| BackendError::fatal("scripted validator: no trajectory section"))?;
    let (trajectory, page) = rest
        .split_once(PAGE_SECTION)
        .ok_or_else(|| BackendError::fatal("scripted validator: no page section"))?;

    if trajectory.contains(" -> error: ") {
        return Ok(text(
            json!({ "verdict": "fail", "explanation": script.error_explanation }).to_string(),
        ));
    }
    let taken = trajectory.lines().filter(|line| is_trajectory_record(line)).count();
    if taken < script.actions.len() {
        return Ok(text(script.actions[taken].to_string()));
    }
    if page.contains(script.success_marker) {
        return Ok(text(json!({ "verdict": "pass" }).to_string()));
    }
    let verdict = match script.fail_verdict {
        Verdict::Partial => "partial",
        _ => "fail",
    };
    Ok(text(json!({ "verdict": verdict, "explanation": script.fail_explanation }).to_string()))
}

fn is_trajectory_record(line: &str) -> bool {
    line.split_once(". ")
        .is_some_and(|(n, _)| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
}

fn persona_reply(instruction: &str) -> String {
    let personas = if instruction == scenarios::STOREFRONT {
        json!([
            {
                "name": "Dana",
                "role": "shopper",
                "goal": "recognize the shop by name when arriving"
            },
            {
                "name": "Priya",
                "role": "seller",
                "goal": "post a product and see it listed"
            }
        ])
    } else {
        json!([
            {
                "name": "Priya",
                "role": "first-time visitor",
                "goal": "complete the core task on a first visit"
            },
            {
                "name": "Marco",
                "role": "returning user",
                "goal": "find earlier work still in place when returning"
            }
        ])
    };
    json!({ "personas": personas }).to_string()
}

fn elaboration_reply(prompt: &str) -> Result<String, BackendError> {
    let goal = prompt
        .lines()
        .find_map(|line| line.strip_prefix("Goal: "))
        .ok_or_else(|| BackendError::fatal("scripted elaboration: prompt names no goal"))?;
    let cases = match goal {
        "recognize the shop by name when arriving" => {
            vec![script_case_json("the storefront title is shown")]
        }
        "post a product and see it listed" => vec![script_case_json("posting a product")],
        "complete the core task on a first visit" => vec![json!({
            "feature": "the core task works on a first visit",
            "steps": ["Open the app", "Complete the core task"],
            "expected": "the result of the task is visible"
        })],
        "find earlier work still in place when returning" => vec![json!({
            "feature": "earlier work survives a return visit",
            "steps": ["Open the app after prior use"],
            "expected": "previously saved work is still shown"
        })],
        other => {
            return Err(BackendError::fatal(format!(
                "scripted elaboration: unscripted goal {other:?}"
            )))
        }
    };
    Ok(json!({ "cases": cases }).to_string())
}

fn script_case_json(feature: &str) -> serde_json::Value {
    let script = script_for(feature).expect("scenario features have scripts");
    json!({
        "feature": script.feature,
        "steps": script.steps,
        "expected": script.expected
    })
}

/// Deterministic stand-in for the semantic coverage judge: a check counts as
/// covered when at least half of its significant words reappear in the
/// rendered suite.
fn coverage_reply(prompt: &str) -> String {
    let (required, suite_text) =
        prompt.split_once("\n\nGenerated test cases:\n").unwrap_or((prompt, ""));
    let haystack = suite_text.to_lowercase();
    let words: std::collections::BTreeSet<String> = required
        .split(|c: char| !c.is_alphanumeric())
        .filter(|word| word.len() >= 4)
        .map(|word| word.to_lowercase())
        .filter(|word| !matches!(word.as_str(), "task" | "expected" | "required" | "behavior"))
        .collect();
    let covered = !words.is_empty()
        && words.iter().filter(|word| haystack.contains(word.as_str())).count() * 2
            >= words.len();
    json!({ "covered": covered }).to_string()
}

fn write_calls(turn: usize, files: &[(&str, &str)]) -> Vec<ToolCall> {
    files
        .iter()
        .enumerate()
        .map(|(i, (path, content))| ToolCall {
            id: format!("call-{turn}-{i}"),
            name: "write_file".into(),
            arguments: json!({ "path": path, "content": content }).to_string(),
        })
        .collect()
}

fn tool_reply(turn: usize, files: &[(&str, &str)]) -> ChatResponse {
    ChatResponse::tool_calls(write_calls(turn, files), SCRIPTED_USAGE)
}

/// The plain coding agent: resolve the task to a scripted file set, write it
/// on the first turn, and sign off on the next.
fn coding_reply(task: &str, turn: usize) -> Result<ChatResponse, BackendError> {
    if turn >= 1 {
        return Ok(text("the files are in place".into()));
    }
    if task.contains("acceptance test(s) failed") {
        let mut files: Vec<(&str, &str)> = Vec::new();
        for (feature, writes) in REPAIRS {
            if task.contains(&format!("Feature: {feature}\n")) {
                files.extend_from_slice(writes);
            }
        }
        if files.is_empty() {
            return Err(BackendError::fatal("scripted coder: repair task names no known feature"));
        }
        return Ok(tool_reply(turn, &files));
    }
    if let Some((_, rest)) = task.split_once("Implement the current feature now:\nFeature: ") {
        let feature = rest.lines().next().unwrap_or_default();
        let writes = FEATURE_IMPLEMENTS
            .iter()
            .find(|(key, _)| *key == feature)
            .map(|(_, writes)| *writes)
            .ok_or_else(|| {
                BackendError::fatal(format!("scripted coder: unscripted feature {feature:?}"))
            })?;
        return Ok(tool_reply(turn, writes));
    }
    if task.starts_with("Build a web application that passes") {
        let writes = IMPLEMENT_ALL
            .iter()
            .find(|(instruction, _)| task.contains(&format!("\nGoal:\n{instruction}\n")))
            .map(|(_, writes)| *writes)
            .ok_or_else(|| {
                BackendError::fatal("scripted coder: unscripted whole-project instruction")
            })?;
        return Ok(tool_reply(turn, writes));
    }
    if let Some(rest) = task.strip_prefix("Build a web application that satisfies this requirement:\n\n")
    {
        let instruction = rest.trim_end_matches('\n');
        let writes = BASELINES
            .iter()
            .find(|(key, _)| *key == instruction)
            .map(|(_, writes)| *writes)
            .ok_or_else(|| {
                BackendError::fatal("scripted coder: unscripted baseline instruction")
            })?;
        return Ok(tool_reply(turn, writes));
    }
    Err(BackendError::fatal("scripted coder: unrecognized task"))
}

/// The agentic walk for the welcome landing page: ship a broken page, start
/// the app, run the tests, fix the page, rerun, stop, sign off. The harness
/// enforces nothing here — the workflow is the agent's own.
fn agentic_reply(task: &str, turn: usize) -> Result<ChatResponse, BackendError> {
    if !task.contains(&format!("\nGoal:\n{}\n", scenarios::WELCOME_LANDING)) {
        return Err(BackendError::fatal("scripted coder: unscripted agentic instruction"));
    }
    let call = |name: &str, arguments: serde_json::Value| {
        ChatResponse::tool_calls(
            vec![ToolCall {
                id: format!("call-{turn}-0"),
                name: name.into(),
                arguments: arguments.to_string(),
            }],
            SCRIPTED_USAGE,
        )
    };
    Ok(match turn {
        0 => tool_reply(turn, &[("index.html", STARTER_PAGE)]),
        1 => call("start_app", json!({})),
        2 => call("run_tests", json!({ "handle_id": "h1" })),
        3 => tool_reply(turn, &[("index.html", WELCOME_PAGE)]),
        4 => call("run_tests", json!({ "handle_id": "h1" })),
        5 => call("stop_app", json!({ "handle_id": "h1" })),
        _ => text("the welcome page passes its test".into()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;
    use crate::model::{
        ActionOutcome, ActionRecord, BrowserAction, PageSnapshot, SelectorSpec, Trajectory,
    };
    use crate::protocols::{
        classify_result, run_agentic, run_baseline, run_incremental, run_whole_project,
        ProtocolDeps,
    };
    use crate::validate::render_prompt;
    use std::sync::Arc;
    use std::time::Duration;

    fn scripted_gateway() -> Gateway {
        Gateway::live(Box::new(ScriptedBackend::new()))
    }

    fn fast_validate() -> ValidateOptions {
        ValidateOptions {
            wait_timeout: Duration::from_millis(400),
            wait_poll: Duration::from_millis(50),
            ..ValidateOptions::default()
        }
    }

    fn deps(workdir: &Path) -> ProtocolDeps {
        ProtocolDeps {
            workdir: workdir.to_path_buf(),
            gateway: Arc::new(scripted_gateway()),
            engine: EngineKind::Builtin,
            validate: fast_validate(),
            deploy: DeployOptions::default(),
            run_id: "fixture-test".into(),
        }
    }

    #[test]
    fn registry_is_well_formed() {
        let mut names = std::collections::BTreeSet::new();
        for app in all() {
            assert!(names.insert(app.name), "duplicate fixture name {}", app.name);
            let suite = app.suite();
            assert_eq!(suite.cases.len(), app.features.len());
            for feature in app.features {
                assert!(script_for(feature).is_some(), "no script for {feature}");
            }
            assert!(!app.files(Variant::Correct).unwrap().is_empty());
        }
        let corpus = corpus();
        assert!(corpus.len() >= 6, "verdict corpus needs at least 6 apps");
        let classes: std::collections::BTreeSet<String> = corpus
            .iter()
            .map(|app| {
                serde_json::to_string(&app.broken.as_ref().unwrap().class).unwrap()
            })
            .collect();
        assert_eq!(classes.len(), 6, "broken variants must cover all six failure classes");
    }

    #[test]
    fn scenario_suites_resolve() {
        for instruction in [
            scenarios::STOREFRONT,
            scenarios::CATALOG_BADGES,
            scenarios::TWO_PANEL_SITE,
            scenarios::WELCOME_LANDING,
            scenarios::STARTER_TEMPLATE,
        ] {
            let suite = scenarios::suite_for(instruction).expect("scenario suite");
            assert!(!suite.cases.is_empty());
            assert_eq!(suite.source_instruction, instruction);
        }
        assert!(scenarios::suite_for("anything else").is_none());
    }

    #[test]
    fn materialized_variants_differ_by_the_injected_defect() {
        let dir = tempfile::tempdir().unwrap();
        let app = find("login").unwrap();
        let correct = dir.path().join("correct");
        let broken = dir.path().join("broken");
        app.materialize(Variant::Correct, &correct).unwrap();
        app.materialize(Variant::Broken, &broken).unwrap();
        let good = std::fs::read_to_string(correct.join("server.js")).unwrap();
        let bad = std::fs::read_to_string(broken.join("server.js")).unwrap();
        assert!(good.contains("Log in"));
        assert!(!bad.contains("Log in"));

        let search = find("search").unwrap();
        let search_dir = dir.path().join("search-broken");
        search.materialize(Variant::Broken, &search_dir).unwrap();
        assert!(!search_dir.join("results.html").exists());

        assert!(matches!(
            find("visits").unwrap().materialize(Variant::Broken, dir.path()),
            Err(FixtureError::NoBrokenVariant("visits"))
        ));
    }

    fn login_case() -> TestCase {
        let script = script_for("user login").unwrap();
        TestCase::new(
            script.feature,
            script.steps.iter().map(|s| s.to_string()).collect(),
            script.expected,
        )
        .unwrap()
    }

    fn snapshot(nodes_from_marker: &str) -> PageSnapshot {
        PageSnapshot {
            url: "/".into(),
            title: "Team Portal".into(),
            nodes: vec![crate::model::AccessibilityNode {
                ref_id: "e1".into(),
                role: "heading".into(),
                name: nodes_from_marker.into(),
                value: None,
                enabled: true,
                editable: false,
            }],
            console_errors: Vec::new(),
            truncated: false,
        }
    }

    fn complete_validation(prompt: String) -> String {
        let gateway = scripted_gateway();
        let response = gateway
            .complete(&ChatRequest::new(vec![
                Message::system(VALIDATE_SYSTEM_PROMPT),
                Message::user(prompt),
            ]))
            .unwrap();
        response.as_text().unwrap().to_string()
    }

    #[test]
    fn scripted_validator_replays_actions_then_judges_the_marker() {
        let case = login_case();
        let first = complete_validation(render_prompt(
            &case,
            &Trajectory::new(),
            &snapshot("Sign in"),
        ));
        assert!(first.contains("textbox Email"), "first reply was {first}");

        let mut trajectory = Trajectory::new();
        for action in [
            BrowserAction::fill(SelectorSpec::role_and_name("textbox", "Email"), "a@b.c"),
            BrowserAction::fill(SelectorSpec::role_and_name("textbox", "Password"), "pw"),
            BrowserAction::click(SelectorSpec::role_and_name("button", "Log in")),
        ] {
            trajectory.push(ActionRecord {
                action,
                outcome: ActionOutcome::Ok,
                post_state_digest: "url=/ title=\"x\" nodes=1".into(),
            });
        }
        let verdict =
            complete_validation(render_prompt(&case, &trajectory, &snapshot("Welcome back")));
        assert_eq!(verdict, r#"{"verdict":"pass"}"#);

        let missed =
            complete_validation(render_prompt(&case, &trajectory, &snapshot("Sign in")));
        assert!(missed.contains(r#""verdict":"fail""#));
        assert!(missed.contains("never showed a welcome message"));
    }

    #[test]
    fn scripted_validator_fails_fast_on_errored_actions() {
        let case = login_case();
        let mut trajectory = Trajectory::new();
        trajectory.push(ActionRecord {
            action: BrowserAction::click(SelectorSpec::role_and_name("button", "Log in")),
            outcome: ActionOutcome::Error {
                message: "no element matched: button \"Log in\"".into(),
            },
            post_state_digest: "url=/ title=\"x\" nodes=1".into(),
        });
        let reply = complete_validation(render_prompt(&case, &trajectory, &snapshot("Sign in")));
        assert!(reply.contains(r#""verdict":"fail""#));
        assert!(reply.contains("no submit control was present"));
    }

    #[test]
    fn scripted_testgen_builds_the_storefront_suite() {
        let gateway = scripted_gateway();
        let artifact =
            crate::testgen::generate_suite(scenarios::STOREFRONT, &gateway, 10, "scripted")
                .unwrap();
        let features: Vec<&str> =
            artifact.suite.cases.iter().map(|c| c.feature.as_str()).collect();
        assert_eq!(features, ["the storefront title is shown", "posting a product"]);
        assert_eq!(artifact.personas.len(), 2);
    }

    #[test]
    fn scripted_testgen_covers_unknown_instructions() {
        let gateway = scripted_gateway();
        let artifact =
            crate::testgen::generate_suite("a recipe box for weeknight cooks", &gateway, 10, "scripted")
                .unwrap();
        assert_eq!(artifact.suite.cases.len(), 2);
    }

    #[test]
    fn scripted_coverage_judge_scores_overlap() {
        let gateway = scripted_gateway();
        let suite = scenarios::suite_for(scenarios::STOREFRONT).unwrap();
        let truth = vec![
            crate::eval::GroundTruthCheck {
                task: "post a new product in the shop".into(),
                expected: "the product appears in the listing".into(),
            },
            crate::eval::GroundTruthCheck {
                task: "export the monthly ledger".into(),
                expected: "a csv download begins".into(),
            },
        ];
        let coverage = crate::eval::measure_coverage(&suite, &truth, &gateway).unwrap();
        assert_eq!(coverage.matched, 1);
        assert_eq!(coverage.percent, 50.0);
    }

    #[test]
    fn corpus_broken_variants_surface_their_failure_class() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = scripted_gateway();
        let outcome = run_corpus(
            dir.path(),
            &gateway,
            &EngineKind::Builtin,
            &fast_validate(),
            &DeployOptions::default(),
        )
        .unwrap();

        let truth = corpus_ground_truth();
        assert_eq!(
            outcome.observed.keys().collect::<Vec<_>>(),
            truth.keys().collect::<Vec<_>>()
        );
        for app in corpus() {
            let correct = outcome.observed[&format!("{}/correct", app.name)];
            assert_eq!(correct, Verdict::Pass, "{} correct variant", app.name);
            let broken = outcome.observed[&format!("{}/broken", app.name)];
            assert_ne!(broken, Verdict::Pass, "{} broken variant", app.name);

            let report = &outcome.reports[&format!("{}/broken", app.name)];
            let failing = report
                .results
                .iter()
                .find(|r| r.verdict != Verdict::Pass)
                .expect("broken variant has a failing case");
            assert_eq!(
                classify_result(failing),
                Some(app.broken.as_ref().unwrap().class),
                "{} failure class",
                app.name
            );
        }
    }

    #[test]
    fn visit_counter_proves_session_isolation() {
        let dir = tempfile::tempdir().unwrap();
        let app = find("visits").unwrap();
        app.materialize(Variant::Correct, dir.path()).unwrap();
        let mut handle = deploy(dir.path(), &DeployOptions::default()).unwrap();
        let gateway = scripted_gateway();
        let report = run_suite(
            &app.suite(),
            handle.url(),
            &gateway,
            &EngineKind::Builtin,
            &fast_validate(),
        )
        .unwrap();
        handle.stop();
        assert!(report.all_pass, "both cases must see a fresh counter");
    }

    #[test]
    fn storefront_scenario_converges_on_the_second_attempt() {
        let dir = tempfile::tempdir().unwrap();
        let deps = deps(dir.path());
        let suite = scenarios::suite_for(scenarios::STOREFRONT).unwrap();
        let run = run_whole_project(scenarios::STOREFRONT, &suite, 5, &deps).unwrap();

        assert!(run.all_pass);
        assert_eq!(run.outcomes.len(), 2);
        let pass_counts: Vec<usize> = run
            .outcomes
            .iter()
            .map(|record| {
                record.verdicts.iter().filter(|v| v.verdict == Verdict::Pass).count()
            })
            .collect();
        assert_eq!(pass_counts, [1, 2], "one case passes before repair, both after");
        assert!(run.usage.total() > 0);
    }

    #[test]
    fn catalog_scenario_exhausts_the_attempt_budget() {
        let dir = tempfile::tempdir().unwrap();
        let deps = deps(dir.path());
        let suite = scenarios::suite_for(scenarios::CATALOG_BADGES).unwrap();
        let run = run_whole_project(scenarios::CATALOG_BADGES, &suite, 5, &deps).unwrap();

        assert!(!run.all_pass);
        assert_eq!(run.outcomes.len(), 5, "every attempt is logged");
        assert!(run
            .outcomes
            .iter()
            .all(|record| record.verdicts.iter().all(|v| v.verdict != Verdict::Pass)));
    }

    #[test]
    fn two_panel_scenario_catches_the_regression() {
        let dir = tempfile::tempdir().unwrap();
        let deps = deps(dir.path());
        let suite = scenarios::suite_for(scenarios::TWO_PANEL_SITE).unwrap();
        let run = run_incremental(scenarios::TWO_PANEL_SITE, &suite, 5, &deps).unwrap();

        assert!(run.all_pass);
        assert_eq!(run.regression_suite.len(), 2, "both features admitted");
        assert_eq!(run.outcomes.len(), 3, "one pass, one regression, one repair pass");
        let regression = &run.outcomes[1];
        let alpha_id = &suite.cases[0].id;
        assert!(
            regression
                .verdicts
                .iter()
                .any(|v| v.case_id == *alpha_id && v.verdict != Verdict::Pass),
            "the admitted alpha case must fail during the beta cycle"
        );
    }

    #[test]
    fn agentic_scenario_tests_voluntarily_and_passes() {
        let dir = tempfile::tempdir().unwrap();
        let deps = deps(dir.path());
        let suite = scenarios::suite_for(scenarios::WELCOME_LANDING).unwrap();
        std::fs::write(
            dir.path().join(crate::testgen::SUITE_FILE_NAME),
            serde_json::to_string(&suite).unwrap(),
        )
        .unwrap();
        let run = run_agentic(scenarios::WELCOME_LANDING, &suite, &deps).unwrap();

        assert!(run.all_pass);
        assert_eq!(run.outcomes.len(), 1, "one external evaluation");
        let transcript = &run.transcripts[0];
        let test_runs = transcript
            .turns
            .iter()
            .flat_map(|turn| &turn.tool_calls)
            .filter(|call| call.name == "run_tests")
            .count();
        assert_eq!(test_runs, 2, "the agent runs the suite before and after its fix");
        let failing_run = transcript
            .turns
            .iter()
            .flat_map(|turn| &turn.tool_results)
            .find(|result| result.name == "run_tests")
            .expect("first run_tests result");
        assert!(failing_run.content.contains("0/1 tests passed"), "{}", failing_run.content);
    }

    #[test]
    fn baseline_scenarios_split_into_pass_and_fail() {
        let pass_dir = tempfile::tempdir().unwrap();
        let deps_pass = deps(pass_dir.path());
        let suite = scenarios::suite_for(scenarios::WELCOME_LANDING).unwrap();
        let run = run_baseline(scenarios::WELCOME_LANDING, &suite, &deps_pass).unwrap();
        assert!(run.all_pass);

        let fail_dir = tempfile::tempdir().unwrap();
        let deps_fail = deps(fail_dir.path());
        let suite = scenarios::suite_for(scenarios::STARTER_TEMPLATE).unwrap();
        let run = run_baseline(scenarios::STARTER_TEMPLATE, &suite, &deps_fail).unwrap();
        assert!(!run.all_pass);
        assert_eq!(run.outcomes.len(), 1);
    }
}
