//! OpenAI-compatible HTTP chat backend.

use serde::Deserialize;
use serde_json::json;

use super::{
    BackendError, ChatBackend, ChatRequest, ChatResponse, Message, ResponseKind, Role, ToolCall,
};
use crate::model::TokenUsage;

/// POSTs to `{base}/chat/completions` with a bearer key. Configure via
/// `TDDLOOP_API_BASE`, `TDDLOOP_API_KEY`, and `TDDLOOP_MODEL`.
pub struct HttpBackend {
    base: String,
    api_key: String,
    model: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(base: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(std::time::Duration::from_secs(300))
            .build();
        HttpBackend {
            base: base.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            model: model.into(),
            agent,
        }
    }

    pub fn from_env() -> Result<Self, BackendError> {
        let base = std::env::var("TDDLOOP_API_BASE")
            .map_err(|_| BackendError::fatal("TDDLOOP_API_BASE is not set"))?;
        let api_key = std::env::var("TDDLOOP_API_KEY").unwrap_or_default();
        let model = std::env::var("TDDLOOP_MODEL")
            .map_err(|_| BackendError::fatal("TDDLOOP_MODEL is not set"))?;
        Ok(HttpBackend::new(base, api_key, model))
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    fn wire_messages(messages: &[Message]) -> Vec<serde_json::Value> {
        messages
            .iter()
            .map(|m| match m.role {
                Role::System => json!({"role": "system", "content": m.content}),
                Role::User => json!({"role": "user", "content": m.content}),
                Role::Assistant => {
                    // Assistant turns that carried tool calls are kept in
                    // history as their canonical JSON encoding; reconstitute
                    // the wire shape so the API sees real tool_calls.
                    if let Some(calls) = decode_tool_call_content(&m.content) {
                        json!({
                            "role": "assistant",
                            "content": serde_json::Value::Null,
                            "tool_calls": calls.iter().map(|c| json!({
                                "id": c.id,
                                "type": "function",
                                "function": {"name": c.name, "arguments": c.arguments},
                            })).collect::<Vec<_>>(),
                        })
                    } else {
                        json!({"role": "assistant", "content": m.content})
                    }
                }
                Role::Tool => json!({
                    "role": "tool",
                    "tool_call_id": m.tool_call_id.clone().unwrap_or_default(),
                    "content": m.content,
                }),
            })
            .collect()
    }
}

/// Canonical in-history encoding for an assistant turn that issued tool
/// calls. Kept as plain JSON text so transcripts and cassettes stay readable.
pub fn encode_tool_call_content(calls: &[ToolCall]) -> String {
    serde_json::to_string(&json!({ "tool_calls": calls })).expect("tool calls serialize")
}

pub fn decode_tool_call_content(content: &str) -> Option<Vec<ToolCall>> {
    #[derive(Deserialize)]
    struct Carrier {
        tool_calls: Vec<ToolCall>,
    }
    let trimmed = content.trim_start();
    if !trimmed.starts_with("{\"tool_calls\"") {
        return None;
    }
    serde_json::from_str::<Carrier>(trimmed).ok().map(|c| c.tool_calls)
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    tool_calls: Option<Vec<WireToolCall>>,
}

#[derive(Deserialize)]
struct WireToolCall {
    id: String,
    function: WireFunction,
}

#[derive(Deserialize)]
struct WireFunction {
    name: String,
    arguments: String,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let mut body = json!({
            "model": self.model,
            "messages": Self::wire_messages(&request.messages),
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        });
        if let Some(tools) = &request.tool_declarations {
            body["tools"] = tools
                .iter()
                .map(|t| {
                    json!({
                        "type": "function",
                        "function": {
                            "name": t.name,
                            "description": t.description,
                            "parameters": t.parameters,
                        },
                    })
                })
                .collect();
        }

        let url = format!("{}/chat/completions", self.base);
        let mut call = self.agent.post(&url).set("content-type", "application/json");
        if !self.api_key.is_empty() {
            call = call.set("authorization", &format!("Bearer {}", self.api_key));
        }
        let response = match call.send_string(&body.to_string()) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let text = r.into_string().unwrap_or_default();
                let transient = status == 429 || status >= 500;
                return Err(BackendError {
                    status: Some(status),
                    message: format!("chat completion failed: {text}"),
                    transient,
                });
            }
            Err(ureq::Error::Transport(t)) => {
                return Err(BackendError::transient(format!("transport: {t}")));
            }
        };

        let wire: WireResponse = response
            .into_json()
            .map_err(|e| BackendError::fatal(format!("unparseable response: {e}")))?;
        let usage = wire
            .usage
            .map(|u| TokenUsage::new(u.prompt_tokens, u.completion_tokens))
            .unwrap_or(TokenUsage::ZERO);
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::fatal("response had no choices"))?;

        if let Some(calls) = choice.message.tool_calls {
            if !calls.is_empty() {
                let calls = calls
                    .into_iter()
                    .map(|c| ToolCall {
                        id: c.id,
                        name: c.function.name,
                        arguments: c.function.arguments,
                    })
                    .collect();
                return Ok(ChatResponse { kind: ResponseKind::ToolCalls { calls }, usage });
            }
        }
        let content = choice.message.content.unwrap_or_default();
        Ok(ChatResponse { kind: ResponseKind::Text { content }, usage })
    }
}
