//! Model Context Protocol server: `start_app`, `run_tests`, and `stop_app`
//! exposed to external coding agents over line-delimited JSON-RPC 2.0 on
//! stdio.
//!
//! Unlike the in-process agent tools, which hide deployment details behind
//! opaque handles, this surface returns real URLs: the caller is a separate
//! process that must reach the app over the network. Requests are handled
//! strictly in arrival order, and closing stdin stops every app the session
//! started.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::deploy::{deploy, AppHandle, DeployOptions};
use crate::gateway::Gateway;
use crate::model::{to_canonical_json, TestSuite};
use crate::testgen::SUITE_FILE_NAME;
use crate::validate::{run_suite, EngineKind, ValidateOptions};

/// MCP revision this server negotiates.
pub const PROTOCOL_VERSION: &str = "2024-11-05";

/// Ceiling on concurrently running apps per session.
pub const MAX_HANDLES: usize = 4;

const PARSE_ERROR: i64 = -32700;
const METHOD_NOT_FOUND: i64 = -32601;
const INVALID_PARAMS: i64 = -32602;

/// Everything tool execution needs; the gateway powers `run_tests`.
pub struct McpDeps {
    pub gateway: Arc<Gateway>,
    pub engine: EngineKind,
    pub validate: ValidateOptions,
    pub deploy: DeployOptions,
}

struct Session<'a> {
    workdir: &'a Path,
    deps: &'a McpDeps,
    handles: BTreeMap<String, AppHandle>,
    next_handle: usize,
}

/// Serves MCP until `input` reaches end of file, then stops all live apps.
/// Only transport-level write failures abort; every request-level problem is
/// answered in-band as a JSON-RPC error or an `isError` tool result.
pub fn serve(
    input: impl BufRead,
    mut output: impl Write,
    workdir: &Path,
    deps: &McpDeps,
) -> io::Result<()> {
    let mut session =
        Session { workdir, deps, handles: BTreeMap::new(), next_handle: 1 };
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(response) = handle_line(&mut session, &line) {
            let mut text = to_canonical_json(&response);
            text.push('\n');
            output.write_all(text.as_bytes())?;
            output.flush()?;
        }
    }
    for (_, mut handle) in std::mem::take(&mut session.handles) {
        handle.stop();
    }
    Ok(())
}

/// One request line to at most one response. Notifications (no `id`) are
/// processed silently per JSON-RPC 2.0.
fn handle_line(session: &mut Session, line: &str) -> Option<Value> {
    let request: Value = match serde_json::from_str(line) {
        Ok(value) => value,
        Err(err) => {
            return Some(error_response(&Value::Null, PARSE_ERROR, format!("parse error: {err}")))
        }
    };
    let id = request.get("id").cloned();
    let method = request.get("method").and_then(|m| m.as_str()).unwrap_or_default().to_string();
    let params = request.get("params").cloned().unwrap_or(Value::Null);

    let reply = match method.as_str() {
        "initialize" => response(
            json!({
                "protocolVersion": PROTOCOL_VERSION,
                "capabilities": { "tools": {} },
                "serverInfo": {
                    "name": "tddloop",
                    "version": env!("CARGO_PKG_VERSION")
                }
            }),
        ),
        "tools/list" => response(json!({ "tools": tool_schemas() })),
        "tools/call" => call_tool(session, params),
        other => Err((METHOD_NOT_FOUND, format!("method not found: {other}"))),
    };

    let id = id?; // a notification gets no response, success or not
    Some(match reply {
        Ok(result) => json!({ "jsonrpc": "2.0", "id": id, "result": result }),
        Err((code, message)) => error_response(&id, code, message),
    })
}

type RpcResult = Result<Value, (i64, String)>;

fn response(result: Value) -> RpcResult {
    Ok(result)
}

fn error_response(id: &Value, code: i64, message: String) -> Value {
    json!({
        "jsonrpc": "2.0",
        "id": id,
        "error": { "code": code, "message": message }
    })
}

fn tool_schemas() -> Value {
    json!([
        {
            "name": "start_app",
            "description": "Deploy the app in a directory and return its handle and URL.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "path": {
                        "type": "string",
                        "description": "App directory relative to the server working directory; defaults to the working directory itself"
                    }
                }
            }
        },
        {
            "name": "run_tests",
            "description": "Run the acceptance test suite against a URL and return the full report.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "url": { "type": "string", "description": "Base URL of the running app" },
                    "suite_path": {
                        "type": "string",
                        "description": "Suite file relative to the server working directory; defaults to acceptance_tests.json"
                    }
                },
                "required": ["url"]
            }
        },
        {
            "name": "stop_app",
            "description": "Stop a previously started app.",
            "inputSchema": {
                "type": "object",
                "properties": {
                    "handle_id": { "type": "string" }
                },
                "required": ["handle_id"]
            }
        }
    ])
}

/// Dispatches tools/call. Unknown tools and malformed arguments are protocol
/// errors; failures while actually running a tool are data, reported in a
/// successful response with `isError`.
fn call_tool(session: &mut Session, params: Value) -> RpcResult {
    #[derive(Deserialize)]
    struct CallParams {
        name: String,
        #[serde(default)]
        arguments: Value,
    }
    let call: CallParams = serde_json::from_value(params)
        .map_err(|err| (INVALID_PARAMS, format!("bad params: {err}")))?;
    let args = if call.arguments.is_null() { json!({}) } else { call.arguments };

    let outcome = match call.name.as_str() {
        "start_app" => {
            let args: StartArgs = parse_args(args)?;
            start_app(session, args)
        }
        "run_tests" => {
            let args: RunArgs = parse_args(args)?;
            run_tests(session, args)
        }
        "stop_app" => {
            let args: StopArgs = parse_args(args)?;
            stop_app(session, args)
        }
        other => return Err((INVALID_PARAMS, format!("unknown tool: {other}"))),
    };

    Ok(match outcome {
        Ok(text) => json!({ "content": [{ "type": "text", "text": text }] }),
        Err(message) => json!({
            "content": [{ "type": "text", "text": message }],
            "isError": true
        }),
    })
}

fn parse_args<T: serde::de::DeserializeOwned>(args: Value) -> Result<T, (i64, String)> {
    serde_json::from_value(args).map_err(|err| (INVALID_PARAMS, format!("bad params: {err}")))
}

#[derive(Deserialize)]
struct StartArgs {
    #[serde(default)]
    path: Option<String>,
}

#[derive(Deserialize)]
struct RunArgs {
    url: String,
    #[serde(default)]
    suite_path: Option<String>,
}

#[derive(Deserialize)]
struct StopArgs {
    handle_id: String,
}

/// Joins a request path onto the workdir and refuses escapes. The target
/// must already exist — canonicalization doubles as the existence check.
fn resolve_under(workdir: &Path, path: Option<&str>) -> Result<PathBuf, String> {
    let joined = match path {
        None | Some("") | Some(".") => workdir.to_path_buf(),
        Some(rel) => workdir.join(rel),
    };
    let root = workdir.canonicalize().map_err(|e| format!("working directory: {e}"))?;
    let resolved = joined.canonicalize().map_err(|e| format!("{}: {e}", joined.display()))?;
    if !resolved.starts_with(&root) {
        return Err(format!("path escapes the working directory: {}", path.unwrap_or_default()));
    }
    Ok(resolved)
}

fn start_app(session: &mut Session, args: StartArgs) -> Result<String, String> {
    if session.handles.len() >= MAX_HANDLES {
        return Err(format!("handle limit reached ({MAX_HANDLES} concurrent apps)"));
    }
    let dir = resolve_under(session.workdir, args.path.as_deref())?;
    let handle = deploy(&dir, &session.deps.deploy).map_err(|e| e.to_string())?;
    let id = format!("h{}", session.next_handle);
    session.next_handle += 1;
    let reply = json!({ "handle_id": id, "url": handle.url() }).to_string();
    session.handles.insert(id, handle);
    Ok(reply)
}

fn run_tests(session: &mut Session, args: RunArgs) -> Result<String, String> {
    let suite_path =
        resolve_under(session.workdir, Some(args.suite_path.as_deref().unwrap_or(SUITE_FILE_NAME)))?;
    let text = std::fs::read_to_string(&suite_path).map_err(|e| format!("read suite: {e}"))?;
    let suite: TestSuite =
        serde_json::from_str(&text).map_err(|e| format!("parse suite: {e}"))?;
    let report = run_suite(
        &suite,
        args.url.trim_end_matches('/'),
        &session.deps.gateway,
        &session.deps.engine,
        &session.deps.validate,
    )
    .map_err(|e| format!("validation: {e}"))?;
    Ok(to_canonical_json(&report))
}

fn stop_app(session: &mut Session, args: StopArgs) -> Result<String, String> {
    match session.handles.remove(&args.handle_id) {
        Some(mut handle) => {
            handle.stop();
            Ok(format!("stopped {}", args.handle_id))
        }
        None => Err(format!("unknown app handle: {}", args.handle_id)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, ScriptedBackend, Variant};
    use crate::model::SuiteRunReport;
    use std::io::Cursor;

    fn deps() -> McpDeps {
        McpDeps {
            gateway: Arc::new(Gateway::live(Box::new(ScriptedBackend::new()))),
            engine: EngineKind::Builtin,
            validate: ValidateOptions::default(),
            deploy: DeployOptions::default(),
        }
    }

    fn serve_lines(workdir: &Path, lines: &[String]) -> Vec<Value> {
        let input = lines.join("\n");
        let mut output = Vec::new();
        serve(Cursor::new(input), &mut output, workdir, &deps()).unwrap();
        String::from_utf8(output)
            .unwrap()
            .lines()
            .map(|line| serde_json::from_str(line).unwrap())
            .collect()
    }

    fn call(id: u64, name: &str, arguments: Value) -> String {
        json!({
            "jsonrpc": "2.0",
            "id": id,
            "method": "tools/call",
            "params": { "name": name, "arguments": arguments }
        })
        .to_string()
    }

    fn result_text(response: &Value) -> &str {
        response["result"]["content"][0]["text"].as_str().unwrap()
    }

    #[test]
    fn lists_exactly_the_three_tools() {
        let dir = tempfile::tempdir().unwrap();
        let responses = serve_lines(
            dir.path(),
            &[
                json!({"jsonrpc": "2.0", "id": 1, "method": "initialize", "params": {}})
                    .to_string(),
                json!({"jsonrpc": "2.0", "method": "notifications/initialized"}).to_string(),
                json!({"jsonrpc": "2.0", "id": 2, "method": "tools/list"}).to_string(),
            ],
        );
        assert_eq!(responses.len(), 2, "the notification draws no response");
        assert_eq!(responses[0]["result"]["protocolVersion"], PROTOCOL_VERSION);
        let names: Vec<&str> = responses[1]["result"]["tools"]
            .as_array()
            .unwrap()
            .iter()
            .map(|tool| tool["name"].as_str().unwrap())
            .collect();
        assert_eq!(names, ["start_app", "run_tests", "stop_app"]);
    }

    #[test]
    fn malformed_and_unknown_requests_map_to_the_right_codes() {
        let dir = tempfile::tempdir().unwrap();
        let responses = serve_lines(
            dir.path(),
            &[
                "this is not json".into(),
                json!({"jsonrpc": "2.0", "id": 7, "method": "resources/list"}).to_string(),
                call(8, "format_disk", json!({})),
                call(9, "run_tests", json!({})), // missing required url
            ],
        );
        assert_eq!(responses[0]["error"]["code"], PARSE_ERROR);
        assert!(responses[0]["id"].is_null());
        assert_eq!(responses[1]["error"]["code"], METHOD_NOT_FOUND);
        assert_eq!(responses[1]["id"], 7);
        assert_eq!(responses[2]["error"]["code"], INVALID_PARAMS);
        assert_eq!(responses[3]["error"]["code"], INVALID_PARAMS);
    }

    #[test]
    fn start_run_stop_lifecycle_against_a_static_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let app = fixtures::find("search").unwrap();
        let app_dir = dir.path().join("app");
        app.materialize(Variant::Correct, &app_dir).unwrap();
        std::fs::write(
            dir.path().join(SUITE_FILE_NAME),
            serde_json::to_string(&app.suite()).unwrap(),
        )
        .unwrap();

        let started = serve_lines(dir.path(), &[call(1, "start_app", json!({"path": "app"}))]);
        let info: Value = serde_json::from_str(result_text(&started[0])).unwrap();
        assert_eq!(info["handle_id"], "h1");
        let url = info["url"].as_str().unwrap().to_string();
        assert!(url.starts_with("http://127.0.0.1:"), "real URL, got {url}");

        // One session: start, test against the returned URL, stop.
        let responses = serve_lines(
            dir.path(),
            &[
                call(1, "start_app", json!({"path": "app"})),
                call(2, "stop_app", json!({"handle_id": "h1"})),
                call(3, "stop_app", json!({"handle_id": "h1"})),
            ],
        );
        assert_eq!(result_text(&responses[1]), "stopped h1");
        assert_eq!(responses[2]["result"]["isError"], true);
        assert!(result_text(&responses[2]).contains("unknown app handle"));
    }

    #[test]
    fn run_tests_returns_a_full_report_for_a_live_app() {
        let dir = tempfile::tempdir().unwrap();
        let app = fixtures::find("search").unwrap();
        app.materialize(Variant::Correct, dir.path()).unwrap();
        std::fs::write(
            dir.path().join(SUITE_FILE_NAME),
            serde_json::to_string(&app.suite()).unwrap(),
        )
        .unwrap();
        let mut handle = deploy(dir.path(), &DeployOptions::default()).unwrap();
        let url = handle.url().to_string();

        let responses = serve_lines(dir.path(), &[call(1, "run_tests", json!({"url": url}))]);
        handle.stop();
        let report: SuiteRunReport = serde_json::from_str(result_text(&responses[0])).unwrap();
        assert!(report.all_pass);

        let missing = serve_lines(
            dir.path(),
            &[call(1, "run_tests", json!({"url": "http://127.0.0.1:1", "suite_path": "nope.json"}))],
        );
        assert_eq!(missing[0]["result"]["isError"], true);
    }

    #[test]
    fn start_app_rejects_escapes_and_enforces_the_handle_limit() {
        let dir = tempfile::tempdir().unwrap();
        let app = fixtures::find("search").unwrap();
        app.materialize(Variant::Correct, &dir.path().join("app")).unwrap();

        let escape = serve_lines(dir.path(), &[call(1, "start_app", json!({"path": "../../"}))]);
        assert_eq!(escape[0]["result"]["isError"], true);

        let mut lines: Vec<String> = (0..5)
            .map(|i| call(i as u64 + 1, "start_app", json!({"path": "app"})))
            .collect();
        lines.push(call(9, "stop_app", json!({"handle_id": "h4"})));
        let responses = serve_lines(dir.path(), &lines);
        for response in &responses[..4] {
            assert!(response["result"].get("isError").is_none());
        }
        assert_eq!(responses[4]["result"]["isError"], true);
        assert!(result_text(&responses[4]).contains("handle limit"));
        assert_eq!(result_text(&responses[5]), "stopped h4");
    }
}
