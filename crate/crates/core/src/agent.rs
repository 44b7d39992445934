//! Coding agent: a minimal prompt-plus-tools loop.
//!
//! One system prompt, one task, and sequential tool dispatch until the model
//! answers in plain text or a hard iteration cap fires. There is deliberately
//! no planning module, memory, or multi-file context selection. Three task
//! templates cover building a whole app, building one feature, and repairing
//! classified failures.

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::rc::Rc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::deploy::{deploy, AppHandle, DeployError, DeployOptions};
use crate::gateway::{
    encode_tool_call_content, ChatRequest, Gateway, GatewayError, Message, ResponseKind, ToolCall,
    ToolSchema,
};
use crate::model::{ClassifiedFailure, SuiteRunReport, TestCase, TestSuite, TokenUsage, Verdict};
use crate::testgen::SUITE_FILE_NAME;
use crate::validate::{run_suite, EngineKind, ValidateOptions};

/// System prompt for the plain coding agent (write_file / read_file / bash).
pub const AGENT_SYSTEM_PROMPT: &str = include_str!("prompts/agent_system.txt");

/// System prompt for the agentic-TDD variant: same agent, three extra tools,
/// and the workflow order stated as instruction rather than enforcement.
pub const AGENT_TDD_SYSTEM_PROMPT: &str = include_str!("prompts/agent_tdd_system.txt");

/// Hard stop for the tool loop. The loop normally ends when the model stops
/// calling tools; the cap only guards against a model that never does.
pub const ITERATION_CAP: u32 = 100;

/// Terminal text recorded when the cap fires instead of a model reply.
pub const ITERATION_CAP_MARKER: &str = "[stopped: agent iteration cap reached]";

const BASH_TIMEOUT: Duration = Duration::from_secs(120);
const BASH_OUTPUT_LIMIT: usize = 10_000;
const READ_FILE_LIMIT: usize = 50_000;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("workdir does not exist: {0}")]
    MissingWorkdir(PathBuf),
    #[error("cannot build an app from an empty test suite")]
    EmptySuite,
    #[error("gateway: {source}")]
    Gateway {
        source: GatewayError,
        /// Turns completed before the gateway gave out.
        partial: AgentTranscript,
    },
}

/// One tool invocation's outcome, as echoed back to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub call_id: String,
    pub name: String,
    pub content: String,
}

/// One model response plus the results of every tool call it made. Exactly
/// one of `text` / `tool_calls` is populated; results pair 1:1 with calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_results: Vec<ToolResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub turns: Vec<AgentTurn>,
    /// The model's closing text, or [`ITERATION_CAP_MARKER`].
    pub terminal_text: String,
    pub hit_iteration_cap: bool,
    pub usage: TokenUsage,
}

pub type ToolHandler = Box<dyn FnMut(&serde_json::Value) -> Result<String, String>>;

/// Named tools available to one agent invocation. Dispatch errors are turned
/// into result text for the model; they never abort the loop.
pub struct ToolBelt {
    entries: Vec<(ToolSchema, ToolHandler)>,
}

impl ToolBelt {
    pub fn new() -> ToolBelt {
        ToolBelt { entries: Vec::new() }
    }

    /// Adds a tool. Names must be unique within a belt.
    pub fn register(&mut self, schema: ToolSchema, handler: ToolHandler) {
        assert!(
            self.entries.iter().all(|(s, _)| s.name != schema.name),
            "duplicate tool name: {}",
            schema.name
        );
        self.entries.push((schema, handler));
    }

    pub fn schemas(&self) -> Vec<ToolSchema> {
        self.entries.iter().map(|(s, _)| s.clone()).collect()
    }

    /// Runs one tool call. Unknown tools, bad arguments, and handler errors
    /// all come back as `error: ...` result text.
    pub fn dispatch(&mut self, call: &ToolCall) -> String {
        let args: serde_json::Value = if call.arguments.trim().is_empty() {
            json!({})
        } else {
            match serde_json::from_str(&call.arguments) {
                Ok(value) => value,
                Err(err) => return format!("error: malformed tool arguments: {err}"),
            }
        };
        let Some((_, handler)) = self.entries.iter_mut().find(|(s, _)| s.name == call.name) else {
            return format!("error: unknown tool: {}", call.name);
        };
        match handler(&args) {
            Ok(text) => text,
            Err(err) => format!("error: {err}"),
        }
    }

    /// The baseline set: write_file, read_file, bash, all confined to
    /// `workdir` (bash by cwd only — it is otherwise OS-level unconfined).
    pub fn baseline(workdir: &Path) -> ToolBelt {
        ToolBelt::baseline_with(workdir, BASH_TIMEOUT)
    }

    pub fn baseline_with(workdir: &Path, bash_timeout: Duration) -> ToolBelt {
        let mut belt = ToolBelt::new();

        let dir = workdir.to_path_buf();
        belt.register(
            ToolSchema {
                name: "write_file".into(),
                description: "Create or overwrite a file under the working directory.".into(),
                parameters: json!({
                    "type": "object",
                    "properties": {
                        "path": { "type": "string", "description": "Path relative to the working directory" },
                        "content": { "type": "string" }
                    },
                    "required": ["path", "content"]
                }),
            },
            Box::new(move |args| {
                let path = str_arg(args, "path")?;
                let content = str_arg(args, "content")?;
                let resolved = resolve_sandboxed(&dir, path)?;
                if let Some(parent) = resolved.parent() {
                    std::fs::create_dir_all(parent)
                        .map_err(|e| format!("create directories for {path}: {e}"))?;
                }
                write_atomically(&resolved, content.as_bytes())
                    .map_err(|e| format!("write {path}: {e}"))?;
                Ok(format!("wrote {} bytes to {}", content.len(), path.trim()))
            }),
        );

        let dir = workdir.to_path_buf();
        belt.register(
            ToolSchema {
                name: "read_file".into(),
                description: "Read a file under the working directory.".into(),
                parameters: json!({
                    "type": "object",
                    "properties": {
                        "path": { "type": "string", "description": "Path relative to the working directory" }
                    },
                    "required": ["path"]
                }),
            },
            Box::new(move |args| {
                let path = str_arg(args, "path")?;
                let resolved = resolve_sandboxed(&dir, path)?;
                let text =
                    std::fs::read_to_string(&resolved).map_err(|e| format!("read {path}: {e}"))?;
                Ok(truncate_chars(
                    text,
                    READ_FILE_LIMIT,
                    "\n[truncated: file longer than 50000 characters]",
                ))
            }),
        );

        let dir = workdir.to_path_buf();
        belt.register(
            ToolSchema {
                name: "bash".into(),
                description: "Run a shell command in the working directory.".into(),
                parameters: json!({
                    "type": "object",
                    "properties": {
                        "command": { "type": "string" }
                    },
                    "required": ["command"]
                }),
            },
            Box::new(move |args| {
                let command = str_arg(args, "command")?;
                run_bash(&dir, command, bash_timeout)
            }),
        );

        belt
    }

    /// Baseline plus start_app / run_tests / stop_app. Apps are addressed by
    /// opaque handles (`h1`, `h2`, ...) and tool results never mention URLs,
    /// so transcripts replay identically across ports. Any app still running
    /// when the belt is dropped is stopped.
    pub fn agentic(workdir: &Path, config: AgenticConfig) -> ToolBelt {
        let mut belt = ToolBelt::baseline(workdir);
        let registry = Rc::new(RefCell::new(AppRegistry { next: 0, apps: HashMap::new() }));

        let dir = workdir.to_path_buf();
        let reg = Rc::clone(&registry);
        let deploy_options = config.deploy.clone();
        belt.register(
            ToolSchema {
                name: "start_app".into(),
                description: "Deploy the working directory; returns an app handle.".into(),
                parameters: json!({ "type": "object", "properties": {} }),
            },
            Box::new(move |_args| {
                let handle =
                    deploy(&dir, &deploy_options).map_err(|e| describe_deploy_error(&e))?;
                let mut reg = reg.borrow_mut();
                reg.next += 1;
                let alias = format!("h{}", reg.next);
                reg.apps.insert(alias.clone(), handle);
                Ok(format!("app started: handle {alias}"))
            }),
        );

        let dir = workdir.to_path_buf();
        let reg = Rc::clone(&registry);
        let gateway = Arc::clone(&config.gateway);
        let engine = config.engine.clone();
        let validate_options = config.validate.clone();
        belt.register(
            ToolSchema {
                name: "run_tests".into(),
                description: "Run the acceptance test suite against a running app.".into(),
                parameters: json!({
                    "type": "object",
                    "properties": {
                        "handle_id": { "type": "string" }
                    },
                    "required": ["handle_id"]
                }),
            },
            Box::new(move |args| {
                let handle_id = str_arg(args, "handle_id")?;
                let reg = reg.borrow();
                let handle = reg
                    .apps
                    .get(handle_id)
                    .ok_or_else(|| format!("unknown app handle: {handle_id}"))?;
                let text = std::fs::read_to_string(dir.join(SUITE_FILE_NAME))
                    .map_err(|_| format!("no acceptance test suite found ({SUITE_FILE_NAME})"))?;
                let suite: TestSuite = serde_json::from_str(&text)
                    .map_err(|e| format!("acceptance test suite is invalid: {e}"))?;
                let report = run_suite(&suite, handle.url(), &gateway, &engine, &validate_options)
                    .map_err(|e| format!("test run failed: {e}"))?;
                Ok(render_suite_outcome(&suite, &report))
            }),
        );

        let reg = Rc::clone(&registry);
        belt.register(
            ToolSchema {
                name: "stop_app".into(),
                description: "Stop a running app.".into(),
                parameters: json!({
                    "type": "object",
                    "properties": {
                        "handle_id": { "type": "string" }
                    },
                    "required": ["handle_id"]
                }),
            },
            Box::new(move |args| {
                let handle_id = str_arg(args, "handle_id")?;
                match reg.borrow_mut().apps.remove(handle_id) {
                    Some(mut handle) => {
                        handle.stop();
                        Ok(format!("app stopped: handle {handle_id}"))
                    }
                    None => Err(format!("unknown app handle: {handle_id}")),
                }
            }),
        );

        belt
    }
}

impl Default for ToolBelt {
    fn default() -> Self {
        ToolBelt::new()
    }
}

/// Everything the agentic tools need besides the workdir.
pub struct AgenticConfig {
    /// Gateway consulted by the validation agent inside run_tests. Sharing
    /// the coding agent's gateway keeps one cassette per run.
    pub gateway: Arc<Gateway>,
    pub engine: EngineKind,
    pub validate: ValidateOptions,
    pub deploy: DeployOptions,
}

struct AppRegistry {
    next: u32,
    apps: HashMap<String, AppHandle>,
}

/// Deploy errors rendered for the model without absolute paths, so that
/// recorded conversations stay stable across workdir locations.
fn describe_deploy_error(err: &DeployError) -> String {
    match err {
        DeployError::NoEntrypoint { .. } => {
            "app failed to start: no entrypoint (expected package.json with a dev/start \
             script or an index.html)"
                .to_string()
        }
        other => format!("app failed to start: {other}"),
    }
}

fn render_suite_outcome(suite: &TestSuite, report: &SuiteRunReport) -> String {
    let passed = report.results.iter().filter(|r| r.verdict == Verdict::Pass).count();
    let mut text = format!("{passed}/{} tests passed\n", report.results.len());
    for result in &report.results {
        let feature = suite
            .case(&result.case_id)
            .map(|c| c.feature.as_str())
            .unwrap_or(result.case_id.as_str());
        text.push_str(&format!("[{}] {feature}\n", result.verdict));
        if let Some(failure) = &result.failure_report {
            for line in failure.render_human().lines() {
                text.push_str("  ");
                text.push_str(line);
                text.push('\n');
            }
        }
    }
    text
}

/// Runs the tool loop to completion: query the model, dispatch every tool
/// call sequentially, feed results back, repeat. A plain-text reply ends the
/// loop; [`ITERATION_CAP`] model turns end it forcibly. Tool errors are
/// reported to the model, never to the caller; gateway errors abort with the
/// partial transcript.
pub fn run_agent(
    system_prompt: &str,
    task: &str,
    tools: &mut ToolBelt,
    workdir: &Path,
    gateway: &Gateway,
) -> Result<AgentTranscript, AgentError> {
    if !workdir.is_dir() {
        return Err(AgentError::MissingWorkdir(workdir.to_path_buf()));
    }
    let schemas = tools.schemas();
    let mut messages = vec![Message::system(system_prompt), Message::user(task)];
    let mut turns: Vec<AgentTurn> = Vec::new();
    let mut usage = TokenUsage::ZERO;

    for _ in 0..ITERATION_CAP {
        let request = ChatRequest::new(messages.clone()).with_tools(schemas.clone());
        let response = match gateway.complete(&request) {
            Ok(response) => response,
            Err(source) => {
                return Err(AgentError::Gateway {
                    source,
                    partial: AgentTranscript {
                        turns,
                        terminal_text: String::new(),
                        hit_iteration_cap: false,
                        usage,
                    },
                })
            }
        };
        usage += response.usage;
        match response.kind {
            ResponseKind::Text { content } => {
                turns.push(AgentTurn {
                    text: Some(content.clone()),
                    tool_calls: Vec::new(),
                    tool_results: Vec::new(),
                });
                return Ok(AgentTranscript {
                    turns,
                    terminal_text: content,
                    hit_iteration_cap: false,
                    usage,
                });
            }
            ResponseKind::ToolCalls { calls } => {
                messages.push(Message::assistant(encode_tool_call_content(&calls)));
                let mut results = Vec::with_capacity(calls.len());
                for call in &calls {
                    let content = tools.dispatch(call);
                    messages.push(Message::tool_result(&call.id, &content));
                    results.push(ToolResult {
                        call_id: call.id.clone(),
                        name: call.name.clone(),
                        content,
                    });
                }
                turns.push(AgentTurn { text: None, tool_calls: calls, tool_results: results });
            }
        }
    }

    Ok(AgentTranscript {
        turns,
        terminal_text: ITERATION_CAP_MARKER.into(),
        hit_iteration_cap: true,
        usage,
    })
}

/// Task for building the whole application in one pass.
pub fn implement_all_task(suite: &TestSuite) -> Result<String, AgentError> {
    if suite.cases.is_empty() {
        return Err(AgentError::EmptySuite);
    }
    let mut task = String::from("Build a web application that passes every acceptance test below.\n");
    task.push_str(&format!("\nGoal:\n{}\n", suite.source_instruction));
    task.push_str("\nAcceptance tests:\n");
    for (i, case) in suite.cases.iter().enumerate() {
        task.push_str(&render_case(i + 1, case));
    }
    Ok(task)
}

/// Task for one feature: the overall goal, the full suite for context, and
/// the current case spelled out.
pub fn implement_feature_task(goal: &str, suite: &TestSuite, current: &TestCase) -> String {
    let mut task = format!("Overall goal:\n{goal}\n\nAll acceptance tests:\n");
    for (i, case) in suite.cases.iter().enumerate() {
        let marker = if case.id == current.id { "  <- current" } else { "" };
        task.push_str(&format!("{}. {} [{}]{}\n", i + 1, case.feature, case.id, marker));
    }
    task.push_str(&format!(
        "\nImplement the current feature now:\n{}",
        render_case_detail(current)
    ));
    task.push_str("\nKeep previously implemented features working.\n");
    task
}

/// Task for repairing classified failures; embeds each four-field report.
pub fn repair_task(failures: &[ClassifiedFailure]) -> String {
    let mut task = format!(
        "{} acceptance test(s) failed. Repair the application so they pass.\n",
        failures.len()
    );
    for (i, failure) in failures.iter().enumerate() {
        task.push_str(&format!(
            "\nFailure {} [{}]:\n{}\n",
            i + 1,
            failure.class,
            failure.report.render_human()
        ));
    }
    task.push_str("\nFix the code, keeping previously passing behavior intact.\n");
    task
}

fn render_case(n: usize, case: &TestCase) -> String {
    let mut text = format!("{n}. {} [{}]\n", case.feature, case.id);
    for step in &case.steps {
        text.push_str(&format!("   - {step}\n"));
    }
    text.push_str(&format!("   expected: {}\n", case.expected));
    text
}

fn render_case_detail(case: &TestCase) -> String {
    let mut text = format!("Feature: {}\nSteps:\n", case.feature);
    for step in &case.steps {
        text.push_str(&format!("- {step}\n"));
    }
    text.push_str(&format!("Expected: {}\n", case.expected));
    text
}

fn str_arg<'a>(args: &'a serde_json::Value, key: &str) -> Result<&'a str, String> {
    args.get(key)
        .and_then(|v| v.as_str())
        .ok_or_else(|| format!("missing string argument: {key}"))
}

/// Resolves a model-supplied path to a location inside `workdir`, or refuses.
/// Normalization is lexical (`.`/`..` handling, no root escapes); on top of
/// that, the deepest existing ancestor is canonicalized so a symlink planted
/// inside the tree cannot point writes elsewhere.
pub fn resolve_sandboxed(workdir: &Path, raw: &str) -> Result<PathBuf, String> {
    let escape = || format!("path escapes the working directory: {raw}");
    if raw.trim().is_empty() {
        return Err("empty path".into());
    }
    let requested = Path::new(raw);
    let relative = if requested.is_absolute() {
        requested.strip_prefix(workdir).map_err(|_| escape())?.to_path_buf()
    } else {
        requested.to_path_buf()
    };

    let mut stack: Vec<std::ffi::OsString> = Vec::new();
    for component in relative.components() {
        match component {
            Component::Normal(part) => stack.push(part.to_os_string()),
            Component::CurDir => {}
            Component::ParentDir => {
                if stack.pop().is_none() {
                    return Err(escape());
                }
            }
            Component::RootDir | Component::Prefix(_) => return Err(escape()),
        }
    }
    let candidate = stack.iter().fold(workdir.to_path_buf(), |path, part| path.join(part));

    let canonical_root =
        workdir.canonicalize().map_err(|e| format!("working directory: {e}"))?;
    let mut probe = candidate.clone();
    while !probe.exists() {
        match probe.parent() {
            Some(parent) if parent.starts_with(workdir) => probe = parent.to_path_buf(),
            _ => {
                probe = workdir.to_path_buf();
                break;
            }
        }
    }
    let canonical_probe = probe.canonicalize().map_err(|e| format!("resolve {raw}: {e}"))?;
    if !canonical_probe.starts_with(&canonical_root) {
        return Err(escape());
    }
    Ok(candidate)
}

/// Write-then-rename so a crash mid-write never leaves a torn file.
fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "tmp.{}.{}",
        std::process::id(),
        Instant::now().elapsed().subsec_nanos()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn truncate_chars(text: String, limit: usize, notice: &str) -> String {
    if text.chars().count() <= limit {
        return text;
    }
    let mut kept: String = text.chars().take(limit).collect();
    kept.push_str(notice);
    kept
}

/// Runs `sh -c command` in its own process group so a timeout can kill the
/// whole tree. Stdout and stderr are drained concurrently (a chatty child
/// must not deadlock on a full pipe) and concatenated stdout-then-stderr for
/// deterministic transcripts.
fn run_bash(workdir: &Path, command: &str, timeout: Duration) -> Result<String, String> {
    use std::os::unix::process::CommandExt;
    use std::process::{Command, Stdio};

    let mut builder = Command::new("/bin/sh");
    builder
        .arg("-c")
        .arg(command)
        .current_dir(workdir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    unsafe {
        builder.pre_exec(|| {
            libc::setsid();
            Ok(())
        });
    }
    let mut child = builder.spawn().map_err(|e| format!("spawn shell: {e}"))?;
    let pid = child.id() as i32;

    let drain = |stream: Option<Box<dyn std::io::Read + Send>>| {
        std::thread::spawn(move || {
            let mut buffer = Vec::new();
            if let Some(mut stream) = stream {
                let _ = std::io::copy(&mut stream, &mut buffer);
            }
            buffer
        })
    };
    let stdout = drain(child.stdout.take().map(|s| Box::new(s) as _));
    let stderr = drain(child.stderr.take().map(|s| Box::new(s) as _));

    let deadline = Instant::now() + timeout;
    let timed_out = loop {
        match child.try_wait().map_err(|e| format!("wait: {e}"))? {
            Some(_) => break false,
            None if Instant::now() >= deadline => {
                unsafe {
                    libc::kill(-pid, libc::SIGKILL);
                }
                let _ = child.wait();
                break true;
            }
            None => std::thread::sleep(Duration::from_millis(20)),
        }
    };
    let status = if timed_out { None } else { Some(child.wait().map_err(|e| format!("wait: {e}"))?) };

    let out = stdout.join().unwrap_or_default();
    let err = stderr.join().unwrap_or_default();
    if timed_out {
        return Ok("command timed out".into());
    }

    let mut text = String::from_utf8_lossy(&out).into_owned();
    let err_text = String::from_utf8_lossy(&err);
    if !err_text.is_empty() {
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        text.push_str(&err_text);
    }
    let status = status.expect("status present when not timed out");
    if !status.success() {
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        match status.code() {
            Some(code) => text.push_str(&format!("[exit code {code}]")),
            None => text.push_str("[killed by signal]"),
        }
    }
    Ok(truncate_chars(text, BASH_OUTPUT_LIMIT, "\n[truncated: output longer than 10000 characters]"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{BackendError, ChatBackend, ChatResponse, Role};
    use crate::model::FailureClass;
    use proptest::prelude::*;

    fn call(id: &str, name: &str, arguments: serde_json::Value) -> ToolCall {
        ToolCall { id: id.into(), name: name.into(), arguments: arguments.to_string() }
    }

    /// Replies by position: the nth assistant turn gets `replies[n]`,
    /// repeating the last reply forever. Pure in the request, so it behaves
    /// identically under live, record, and replay.
    struct Script {
        replies: Vec<ChatResponse>,
    }

    impl Script {
        fn new(replies: Vec<ChatResponse>) -> Script {
            Script { replies }
        }
    }

    impl ChatBackend for Script {
        fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
            let turn =
                request.messages.iter().filter(|m| m.role == Role::Assistant).count();
            let reply = self.replies.get(turn).or(self.replies.last()).expect("script not empty");
            Ok(reply.clone())
        }
    }

    fn usage() -> TokenUsage {
        TokenUsage::new(10, 5)
    }

    #[test]
    fn immediate_text_reply_means_no_dispatches() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = Gateway::live(Box::new(Script::new(vec![ChatResponse::text("done", usage())])));
        let mut belt = ToolBelt::baseline(dir.path());
        let transcript =
            run_agent("you build apps", "build it", &mut belt, dir.path(), &gateway).unwrap();
        assert_eq!(transcript.turns.len(), 1);
        assert_eq!(transcript.terminal_text, "done");
        assert!(!transcript.hit_iteration_cap);
        assert!(transcript.turns[0].tool_calls.is_empty());
        assert_eq!(transcript.usage, usage());
    }

    #[test]
    fn file_and_shell_tools_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut belt = ToolBelt::baseline(dir.path());

        let wrote = belt.dispatch(&call(
            "c1",
            "write_file",
            json!({"path": "src/app.js", "content": "let x=1;\n"}),
        ));
        assert_eq!(wrote, "wrote 9 bytes to src/app.js");
        assert_eq!(std::fs::read_to_string(dir.path().join("src/app.js")).unwrap(), "let x=1;\n");

        // Overwrite: new content wins.
        belt.dispatch(&call("c2", "write_file", json!({"path": "src/app.js", "content": "2"})));
        let read = belt.dispatch(&call("c3", "read_file", json!({"path": "src/app.js"})));
        assert_eq!(read, "2");

        let missing = belt.dispatch(&call("c4", "read_file", json!({"path": "nope.txt"})));
        assert!(missing.starts_with("error: read nope.txt:"), "{missing}");

        let echoed = belt.dispatch(&call("c5", "bash", json!({"command": "echo hi"})));
        assert_eq!(echoed, "hi\n");
        let failed = belt.dispatch(&call("c6", "bash", json!({"command": "exit 3"})));
        assert_eq!(failed, "[exit code 3]");
        let merged =
            belt.dispatch(&call("c7", "bash", json!({"command": "echo out; echo err >&2"})));
        assert_eq!(merged, "out\nerr\n");

        let unknown = belt.dispatch(&call("c8", "screenshot", json!({})));
        assert_eq!(unknown, "error: unknown tool: screenshot");
        let bad_args = belt.dispatch(&call("c9", "bash", json!({"cmd": "ls"})));
        assert_eq!(bad_args, "error: missing string argument: command");
    }

    #[test]
    fn sandbox_rejects_escapes_and_symlink_tricks() {
        let dir = tempfile::tempdir().unwrap();
        let outside = tempfile::tempdir().unwrap();
        let mut belt = ToolBelt::baseline(dir.path());

        for path in ["../x", "/etc/passwd", "a/../../b", "..", "/"] {
            let result = belt.dispatch(&call("c", "write_file", json!({"path": path, "content": "x"})));
            assert!(
                result.starts_with("error:") && result.contains("escapes") || result.contains("empty"),
                "{path} -> {result}"
            );
        }

        // Interior `..` that stays inside is fine.
        let ok = belt.dispatch(&call(
            "c",
            "write_file",
            json!({"path": "a/../ok.txt", "content": "x"}),
        ));
        assert_eq!(ok, "wrote 1 bytes to a/../ok.txt");
        assert!(dir.path().join("ok.txt").is_file());

        // Absolute path inside the workdir is allowed.
        let abs = dir.path().join("abs.txt");
        let ok = belt.dispatch(&call(
            "c",
            "write_file",
            json!({"path": abs.to_str().unwrap(), "content": "y"}),
        ));
        assert!(ok.starts_with("wrote 1 bytes"), "{ok}");

        // A symlink to an outside directory must not be followed.
        std::os::unix::fs::symlink(outside.path(), dir.path().join("link")).unwrap();
        let sneaky = belt.dispatch(&call(
            "c",
            "write_file",
            json!({"path": "link/evil.txt", "content": "z"}),
        ));
        assert!(sneaky.starts_with("error:"), "{sneaky}");
        assert!(!outside.path().join("evil.txt").exists());
    }

    proptest! {
        /// No component soup ever resolves outside the workdir.
        #[test]
        fn adversarial_paths_stay_inside(
            parts in proptest::collection::vec(
                prop_oneof![
                    Just(".."), Just("."), Just("a"), Just("b"), Just("etc"),
                    Just("passwd"), Just("..."), Just("a b"), Just("..a"),
                ],
                1..8,
            ),
            absolute in any::<bool>(),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let raw = format!("{}{}", if absolute { "/" } else { "" }, parts.join("/"));
            if let Ok(resolved) = resolve_sandboxed(dir.path(), &raw) {
                prop_assert!(resolved.starts_with(dir.path()), "{raw} -> {}", resolved.display());
            }
        }
    }

    #[test]
    fn bash_times_out_and_reports_it() {
        let dir = tempfile::tempdir().unwrap();
        let mut belt = ToolBelt::baseline_with(dir.path(), Duration::from_millis(300));
        let started = Instant::now();
        let result = belt.dispatch(&call("c", "bash", json!({"command": "sleep 30"})));
        assert_eq!(result, "command timed out");
        assert!(started.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn bash_output_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let mut belt = ToolBelt::baseline(dir.path());
        let result =
            belt.dispatch(&call("c", "bash", json!({"command": "yes x | head -c 20000"})));
        assert!(result.len() < 11_000, "{}", result.len());
        assert!(result.contains("[truncated: output longer than 10000 characters]"));
    }

    #[test]
    fn tool_loop_writes_files_and_echoes_every_call() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = Gateway::live(Box::new(Script::new(vec![
            ChatResponse::tool_calls(
                vec![
                    call("c1", "write_file", json!({"path": "index.html", "content": "<h1>hi</h1>"})),
                    call("c2", "write_file", json!({"path": "app.js", "content": "x"})),
                ],
                usage(),
            ),
            ChatResponse::tool_calls(vec![call("c3", "read_file", json!({"path": "index.html"}))], usage()),
            ChatResponse::text("built", usage()),
        ])));
        let mut belt = ToolBelt::baseline(dir.path());
        let transcript = run_agent("sys", "task", &mut belt, dir.path(), &gateway).unwrap();

        assert_eq!(std::fs::read_to_string(dir.path().join("index.html")).unwrap(), "<h1>hi</h1>");
        assert_eq!(transcript.terminal_text, "built");
        assert_eq!(transcript.turns.len(), 3);
        assert_eq!(transcript.usage, TokenUsage::new(30, 15));
        // Tool-result echo: results pair 1:1 with calls, same ids, in order.
        for turn in &transcript.turns {
            let call_ids: Vec<_> = turn.tool_calls.iter().map(|c| c.id.as_str()).collect();
            let result_ids: Vec<_> = turn.tool_results.iter().map(|r| r.call_id.as_str()).collect();
            assert_eq!(call_ids, result_ids);
        }
        assert_eq!(transcript.turns[1].tool_results[0].content, "<h1>hi</h1>");
    }

    #[test]
    fn endless_tool_calls_hit_the_cap() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("f.txt"), "x").unwrap();
        let gateway = Gateway::live(Box::new(Script::new(vec![ChatResponse::tool_calls(
            vec![call("c", "read_file", json!({"path": "f.txt"}))],
            usage(),
        )])));
        let mut belt = ToolBelt::baseline(dir.path());
        let transcript = run_agent("sys", "task", &mut belt, dir.path(), &gateway).unwrap();
        assert!(transcript.hit_iteration_cap);
        assert_eq!(transcript.turns.len(), ITERATION_CAP as usize);
        assert_eq!(transcript.terminal_text, ITERATION_CAP_MARKER);
        // The final tool-call turn still got its result echoed.
        let last = transcript.turns.last().unwrap();
        assert_eq!(last.tool_results.len(), last.tool_calls.len());
    }

    #[test]
    fn missing_workdir_is_refused() {
        let gateway = Gateway::live(Box::new(Script::new(vec![ChatResponse::text("x", usage())])));
        let mut belt = ToolBelt::new();
        let err = run_agent("s", "t", &mut belt, Path::new("/nonexistent/xyz"), &gateway);
        assert!(matches!(err, Err(AgentError::MissingWorkdir(_))));
    }

    fn tree_digest(root: &Path) -> String {
        use sha2::{Digest, Sha256};
        let mut paths: Vec<PathBuf> = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    paths.push(path);
                }
            }
        }
        paths.sort();
        let mut hasher = Sha256::new();
        for path in paths {
            hasher.update(path.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
            hasher.update([0]);
            hasher.update(std::fs::read(&path).unwrap());
            hasher.update([0xff]);
        }
        hex::encode(hasher.finalize())
    }

    #[test]
    fn replay_reproduces_transcript_and_workdir_tree() {
        let cassette_dir = tempfile::tempdir().unwrap();
        let cassette = cassette_dir.path().join("run.jsonl");
        let script = || {
            Script::new(vec![
                ChatResponse::tool_calls(
                    vec![call("c1", "write_file", json!({"path": "index.html", "content": "<p>a</p>"}))],
                    usage(),
                ),
                ChatResponse::tool_calls(
                    vec![call("c2", "write_file", json!({"path": "style.css", "content": "p{}"}))],
                    usage(),
                ),
                ChatResponse::text("done", usage()),
            ])
        };

        let dir_a = tempfile::tempdir().unwrap();
        let recorded = {
            let gateway = Gateway::record(Box::new(script()), &cassette).unwrap();
            let mut belt = ToolBelt::baseline(dir_a.path());
            run_agent("sys", "task", &mut belt, dir_a.path(), &gateway).unwrap()
        };

        let dir_b = tempfile::tempdir().unwrap();
        let replayed = {
            let gateway = Gateway::replay(&cassette).unwrap();
            let mut belt = ToolBelt::baseline(dir_b.path());
            run_agent("sys", "task", &mut belt, dir_b.path(), &gateway).unwrap()
        };

        assert_eq!(recorded, replayed);
        assert_eq!(tree_digest(dir_a.path()), tree_digest(dir_b.path()));
    }

    #[test]
    fn task_templates_cover_goal_suite_and_failures() {
        let suite = TestSuite::new(
            vec![
                TestCase::new(
                    "User login",
                    vec!["Open /login".into(), "Submit credentials".into()],
                    "the dashboard greets the user",
                )
                .unwrap(),
                TestCase::new(
                    "Password reset",
                    vec!["Open /reset".into()],
                    "a confirmation message appears",
                )
                .unwrap(),
            ],
            "Build me a portal",
        )
        .unwrap();

        let empty = TestSuite::new(vec![], "nothing").unwrap();
        assert!(matches!(implement_all_task(&empty), Err(AgentError::EmptySuite)));

        let all = implement_all_task(&suite).unwrap();
        assert!(all.contains("Build me a portal"));
        assert!(all.contains("User login") && all.contains("Password reset"));
        assert!(all.contains(&suite.cases[0].id));
        assert!(all.contains("expected: the dashboard greets the user"));

        let feature = implement_feature_task("Build me a portal", &suite, &suite.cases[1]);
        assert!(feature.contains("Overall goal:\nBuild me a portal"));
        assert!(feature.contains("User login")); // full suite listed
        assert!(feature.contains(&format!("Password reset [{}]  <- current", suite.cases[1].id)));
        assert!(feature.contains("Implement the current feature now:\nFeature: Password reset"));

        let failures = vec![ClassifiedFailure {
            class: FailureClass::ElementNotFound,
            report: crate::model::FailureReport {
                feature: "User login.".into(),
                failed_at: "Submitting the login form—no submit button found.".into(),
                observation: "The login form rendered with email and password fields, but no \
                              submit control was present."
                    .into(),
                steps_completed: vec![
                    "Navigated to /login".into(),
                    "filled in the email and password fields".into(),
                ],
                rationale: "no submit button".into(),
            },
        }];
        let repair = repair_task(&failures);
        assert!(repair.contains("Failure 1 [element_not_found]:"));
        assert!(repair.contains("Feature: User login."));
        assert!(repair.contains("Failed at: Submitting the login form—no submit button found."));
        assert!(repair.contains("but no submit control was present."));
        assert!(repair.contains(
            "Steps completed: Navigated to /login; filled in the email and password fields"
        ));
    }

    /// Always returns a passing verdict; the validation loop consults the
    /// model once per case right after the initial navigation.
    struct AlwaysPass;

    impl ChatBackend for AlwaysPass {
        fn complete(&self, _request: &ChatRequest) -> Result<ChatResponse, BackendError> {
            Ok(ChatResponse::text(
                r#"{"verdict": "pass", "explanation": "the welcome text is shown"}"#,
                usage(),
            ))
        }
    }

    #[test]
    fn agentic_tools_run_the_suite_without_leaking_urls() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("index.html"),
            "<html><head><title>Home</title></head><body><h1>Welcome</h1></body></html>",
        )
        .unwrap();
        let suite = TestSuite::new(
            vec![TestCase::new(
                "welcome page",
                vec!["Open the home page".into()],
                "the page shows Welcome",
            )
            .unwrap()],
            "a welcome page",
        )
        .unwrap();
        std::fs::write(
            dir.path().join(SUITE_FILE_NAME),
            serde_json::to_string(&suite).unwrap(),
        )
        .unwrap();

        let config = AgenticConfig {
            gateway: Arc::new(Gateway::live(Box::new(AlwaysPass))),
            engine: EngineKind::Builtin,
            validate: ValidateOptions::default(),
            deploy: DeployOptions { port: None, ready_timeout: Duration::from_secs(10) },
        };
        let mut belt = ToolBelt::agentic(dir.path(), config);

        let orphan = belt.dispatch(&call("c", "run_tests", json!({"handle_id": "h1"})));
        assert_eq!(orphan, "error: unknown app handle: h1");

        let started = belt.dispatch(&call("c", "start_app", json!({})));
        assert_eq!(started, "app started: handle h1");

        let tested = belt.dispatch(&call("c", "run_tests", json!({"handle_id": "h1"})));
        assert!(tested.starts_with("1/1 tests passed"), "{tested}");
        assert!(tested.contains("[pass] welcome page"));
        assert!(!tested.contains("http"), "URL leaked: {tested}");
        assert!(!tested.contains("127.0.0.1"), "host leaked: {tested}");

        let stopped = belt.dispatch(&call("c", "stop_app", json!({"handle_id": "h1"})));
        assert_eq!(stopped, "app stopped: handle h1");
        let again = belt.dispatch(&call("c", "stop_app", json!({"handle_id": "h1"})));
        assert_eq!(again, "error: unknown app handle: h1");

        // A second start gets a fresh alias; dropping the belt stops it.
        let restarted = belt.dispatch(&call("c", "start_app", json!({})));
        assert_eq!(restarted, "app started: handle h2");
    }
}
