//! Acceptance-test generation from a natural-language requirement.
//!
//! Two prompting stages: first imagine the people who will use the app and
//! what they want from it, then elaborate each goal into structured test
//! cases (feature, ordered steps, expected outcome). The result is written
//! to a suite file and gated on review before any code is generated.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, ChatResponse, Gateway, GatewayError, Message};
use crate::model::{Persona, TestCase, TestSuite};
use crate::validate::extract_json_object;

/// Canonical on-disk name for a generated suite inside a workdir.
pub const SUITE_FILE_NAME: &str = "acceptance_tests.json";

pub const PERSONA_SYSTEM_PROMPT: &str = include_str!("prompts/persona_system.txt");
pub const ELABORATE_SYSTEM_PROMPT: &str = include_str!("prompts/elaborate_system.txt");

#[derive(Debug, Error)]
pub enum TestgenError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("at least one persona is required")]
    NoPersonas,
    #[error("case cap must be at least 1")]
    ZeroCap,
    #[error("suite has no cases to review")]
    EmptySuite,
    #[error("malformed model output during {stage}: {detail}")]
    MalformedLLMOutput { stage: &'static str, detail: String },
    #[error("review rejected the suite file:\n{}", problems.join("\n"))]
    ReviewValidation { problems: Vec<String> },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("suite file io: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything stage 1 produces, exposed before development begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationArtifact {
    pub instruction: String,
    pub personas: Vec<Persona>,
    pub suite: TestSuite,
    /// Which persona goal produced each case, keyed by case id.
    pub persona_goals: BTreeMap<String, String>,
    /// Model id that generated the suite, recorded in the file's provenance.
    pub generator: String,
    /// Set only by [`review_gate`].
    pub approved: bool,
}

/// The suite file layout. Deliberately a superset of [`TestSuite`]'s own
/// JSON: readers that only care about the cases can parse it as a plain
/// `TestSuite` and ignore the audit fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteFile {
    pub cases: Vec<AttributedCase>,
    pub source_instruction: String,
    pub provenance: Provenance,
}

/// A test case plus the persona goal it traces back to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributedCase {
    #[serde(flatten)]
    pub case: TestCase,
    #[serde(default)]
    pub persona_goal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub instruction: String,
    pub personas: Vec<Persona>,
    pub generator: String,
}

/// Asks the model who will use the app. Requires at least two personas with
/// distinct roles; each goal is a candidate requirement.
pub fn generate_personas(
    instruction: &str,
    gateway: &Gateway,
) -> Result<Vec<Persona>, TestgenError> {
    if instruction.trim().is_empty() {
        return Err(TestgenError::EmptyInstruction);
    }
    let messages = vec![
        Message::system(PERSONA_SYSTEM_PROMPT),
        Message::user(instruction.trim()),
    ];
    structured(gateway, messages, "persona generation", |text| {
        #[derive(Deserialize)]
        struct Shape {
            personas: Vec<Persona>,
        }
        let shape: Shape = parse_object(text)?;
        if shape.personas.len() < 2 {
            return Err(format!("need at least 2 personas, got {}", shape.personas.len()));
        }
        let mut roles = std::collections::BTreeSet::new();
        for persona in &shape.personas {
            persona.validate().map_err(|e| e.to_string())?;
            if !roles.insert(persona.role.trim().to_lowercase()) {
                return Err(format!("duplicate persona role: {}", persona.role));
            }
        }
        Ok(shape.personas)
    })
}

/// A generated suite plus its persona audit trail.
#[derive(Debug, Clone, PartialEq)]
pub struct ElaboratedCases {
    pub suite: TestSuite,
    pub persona_goals: BTreeMap<String, String>,
}

/// Elaborates each persona goal into test cases, one model call per persona.
/// Case order follows persona order; raw cases that violate the test-case
/// invariants (or duplicate an earlier case) are dropped with a warning, and
/// at most `cap` cases are kept overall.
pub fn elaborate_cases(
    personas: &[Persona],
    instruction: &str,
    gateway: &Gateway,
    cap: usize,
) -> Result<ElaboratedCases, TestgenError> {
    if personas.is_empty() {
        return Err(TestgenError::NoPersonas);
    }
    if cap == 0 {
        return Err(TestgenError::ZeroCap);
    }

    #[derive(Deserialize)]
    struct RawCase {
        feature: String,
        steps: Vec<String>,
        expected: String,
    }
    #[derive(Deserialize)]
    struct Shape {
        cases: Vec<RawCase>,
    }

    let mut cases: Vec<TestCase> = Vec::new();
    let mut persona_goals = BTreeMap::new();
    'personas: for persona in personas {
        let user = format!(
            "Requirement:\n{}\n\nPersona: {} — {}\nGoal: {}\n\nWrite the acceptance test \
             cases for this persona's goal.",
            instruction.trim(),
            persona.name,
            persona.role,
            persona.goal
        );
        let messages = vec![Message::system(ELABORATE_SYSTEM_PROMPT), Message::user(user)];
        let raw = structured(gateway, messages, "case elaboration", |text| {
            let shape: Shape = parse_object(text)?;
            if shape.cases.is_empty() {
                return Err("no cases produced".into());
            }
            Ok(shape.cases)
        })?;
        for raw_case in raw {
            let case = match TestCase::new(raw_case.feature, raw_case.steps, raw_case.expected) {
                Ok(case) => case,
                Err(err) => {
                    log::warn!("dropping generated case ({err})");
                    continue;
                }
            };
            if cases.iter().any(|existing| existing.id == case.id) {
                log::warn!("dropping duplicate generated case {}", case.id);
                continue;
            }
            persona_goals.insert(case.id.clone(), persona.goal.clone());
            cases.push(case);
            if cases.len() == cap {
                break 'personas;
            }
        }
    }

    let suite = TestSuite::new(cases, instruction.trim())
        .expect("duplicates were filtered during collection");
    persona_goals.retain(|id, _| suite.case(id).is_some());
    Ok(ElaboratedCases { suite, persona_goals })
}

/// The whole stage-1 pipeline: personas, then elaboration. The artifact is
/// not yet approved.
pub fn generate_suite(
    instruction: &str,
    gateway: &Gateway,
    cap: usize,
    generator: &str,
) -> Result<GenerationArtifact, TestgenError> {
    let personas = generate_personas(instruction, gateway)?;
    let elaborated = elaborate_cases(&personas, instruction, gateway, cap)?;
    Ok(GenerationArtifact {
        instruction: instruction.trim().to_string(),
        personas,
        suite: elaborated.suite,
        persona_goals: elaborated.persona_goals,
        generator: generator.to_string(),
        approved: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReviewMode {
    /// Write the suite file for audit and approve immediately.
    Auto,
    /// Write the suite file, wait for one confirmation line on stdin, then
    /// re-read the (possibly edited) file and re-validate it.
    Interactive,
}

/// Gate between generation and development: the suite becomes an on-disk
/// artifact the user can inspect (and, interactively, edit) before any code
/// is written. Only this function sets `approved`.
pub fn review_gate(
    artifact: GenerationArtifact,
    mode: ReviewMode,
    workdir: &Path,
) -> Result<GenerationArtifact, TestgenError> {
    if artifact.suite.cases.is_empty() {
        return Err(TestgenError::EmptySuite);
    }
    let path = workdir.join(SUITE_FILE_NAME);
    write_suite_file(&path, &artifact)?;
    match mode {
        ReviewMode::Auto => Ok(GenerationArtifact { approved: true, ..artifact }),
        ReviewMode::Interactive => {
            eprintln!(
                "Review the acceptance tests in {} (edit the file if needed), then press \
                 enter to continue.",
                path.display()
            );
            let mut line = String::new();
            std::io::stdin().lock().read_line(&mut line)?;
            finish_review(artifact, &path)
        }
    }
}

/// Re-reads the suite file after the user had a chance to edit it. Every
/// case is re-validated and its id recomputed from the (possibly changed)
/// content; an empty or invalid file is rejected with the offending cases.
pub fn finish_review(
    artifact: GenerationArtifact,
    path: &Path,
) -> Result<GenerationArtifact, TestgenError> {
    let file = read_suite_file(path)?;
    let mut problems = Vec::new();
    let mut cases = Vec::new();
    let mut persona_goals = BTreeMap::new();
    for (index, attributed) in file.cases.iter().enumerate() {
        match attributed.case.revalidate() {
            Ok(case) => {
                persona_goals.insert(case.id.clone(), attributed.persona_goal.clone());
                cases.push(case);
            }
            Err(err) => problems.push(format!(
                "case {} ({:?}): {err}",
                index + 1,
                attributed.case.feature
            )),
        }
    }
    if cases.is_empty() {
        problems.push("suite has no cases".into());
    }
    if !problems.is_empty() {
        return Err(TestgenError::ReviewValidation { problems });
    }
    let suite = TestSuite::new(cases, file.source_instruction)
        .map_err(|err| TestgenError::ReviewValidation { problems: vec![err.to_string()] })?;
    Ok(GenerationArtifact { suite, persona_goals, approved: true, ..artifact })
}

/// Writes the suite with its provenance block, pretty-printed so it can be
/// reviewed and edited by hand. Byte-deterministic for a fixed artifact.
pub fn write_suite_file(path: &Path, artifact: &GenerationArtifact) -> Result<(), TestgenError> {
    let file = SuiteFile {
        cases: artifact
            .suite
            .cases
            .iter()
            .map(|case| AttributedCase {
                case: case.clone(),
                persona_goal: artifact.persona_goals.get(&case.id).cloned().unwrap_or_default(),
            })
            .collect(),
        source_instruction: artifact.suite.source_instruction.clone(),
        provenance: Provenance {
            instruction: artifact.instruction.clone(),
            personas: artifact.personas.clone(),
            generator: artifact.generator.clone(),
        },
    };
    let mut text = serde_json::to_string_pretty(&file).expect("suite file serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_suite_file(path: &Path) -> Result<SuiteFile, TestgenError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|err| TestgenError::ReviewValidation {
        problems: vec![format!("suite file does not parse: {err}")],
    })
}

/// One model call with a single "reformat as valid JSON" retry. Parse and
/// semantic checks share the retry: a reply that parses but violates the
/// schema's rules gets the same second chance.
fn structured<T>(
    gateway: &Gateway,
    mut messages: Vec<Message>,
    stage: &'static str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<T, TestgenError> {
    let response = gateway.complete(&ChatRequest::new(messages.clone()))?;
    let text = reply_text(&response);
    let first_problem = match parse(&text) {
        Ok(value) => return Ok(value),
        Err(problem) => problem,
    };
    messages.push(Message::assistant(text));
    messages.push(Message::user(format!(
        "Reformat your answer as a single valid JSON object matching the required schema. \
         Problem: {first_problem}"
    )));
    let response = gateway.complete(&ChatRequest::new(messages))?;
    parse(&reply_text(&response))
        .map_err(|detail| TestgenError::MalformedLLMOutput { stage, detail })
}

pub(crate) fn reply_text(response: &ChatResponse) -> String {
    response.as_text().unwrap_or("[model replied with tool calls]").to_string()
}

pub(crate) fn parse_object<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, String> {
    let object = extract_json_object(text).ok_or("no JSON object in reply")?;
    serde_json::from_str(object).map_err(|err| err.to_string())
}
