//! Chrome DevTools Protocol engine. Attaches to a running browser over its
//! WebSocket endpoint, creates a fresh tab, and drives the page by
//! injecting small JavaScript helpers. Console and log errors streamed by
//! the browser are folded into snapshots.
//!
//! The wire protocol is exercised against a scripted server in tests; any
//! CDP-speaking browser (Chrome, Chromium, Edge) works at runtime via e.g.
//! `chromium --headless --remote-debugging-port=9222`.

use std::net::TcpStream;
use std::time::Duration;

use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::WebSocket;

use super::{BrowserError, NodeEntry};
use crate::model::AccessibilityNode;

/// Walks the DOM, tags interesting elements with `data-tddref`, and returns
/// them as JSON in document order with their depth.
const WALKER_JS: &str = r#"
(() => {
  const out = [];
  let counter = 0;
  const collapse = (s) => (s || "").replace(/\s+/g, " ").trim().slice(0, 240);
  const labelText = (el) => {
    if (el.getAttribute("aria-label")) return el.getAttribute("aria-label");
    if (el.id) {
      const l = document.querySelector(`label[for="${el.id}"]`);
      if (l) return collapse(l.textContent);
    }
    const wrap = el.closest("label");
    if (wrap) return collapse(wrap.textContent);
    return el.getAttribute("placeholder") || el.getAttribute("name") || "";
  };
  const visible = (el) => {
    const style = getComputedStyle(el);
    return style.display !== "none" && style.visibility !== "hidden" &&
      !el.closest("[hidden]") && el.getAttribute("aria-hidden") !== "true";
  };
  const emit = (el, depth, role, name, value, editable) => {
    counter += 1;
    const ref = "e" + counter;
    el.setAttribute("data-tddref", ref);
    out.push({ ref, depth, role, name: collapse(name), value,
      enabled: !el.disabled, editable: !!editable });
  };
  const walk = (el, depth) => {
    if (!(el instanceof Element)) return;
    const tag = el.tagName.toLowerCase();
    if (["script", "style", "template", "noscript", "head"].includes(tag)) return;
    if (!visible(el)) return;
    const role = el.getAttribute("role");
    if (tag === "a" && el.hasAttribute("href")) {
      emit(el, depth, role || "link", el.textContent, null, false);
    } else if (tag === "button" || (tag === "input" && ["submit", "button"].includes(el.type))) {
      emit(el, depth, role || "button", el.value || el.textContent, null, false);
    } else if (tag === "input" && el.type === "hidden") {
      // not visible
    } else if (tag === "input" && ["checkbox", "radio"].includes(el.type)) {
      emit(el, depth, el.type, labelText(el), el.checked ? "checked" : "unchecked", false);
    } else if (tag === "input" || tag === "textarea") {
      emit(el, depth, role || "textbox", labelText(el), el.value, !el.disabled);
    } else if (tag === "select") {
      const shown = el.selectedIndex >= 0 ? el.options[el.selectedIndex].textContent : "";
      emit(el, depth, role || "combobox", labelText(el), collapse(shown), false);
      return;
    } else if (/^h[1-6]$/.test(tag)) {
      emit(el, depth, role || "heading", el.textContent, null, false);
    } else if (tag === "li") {
      emit(el, depth, role || "listitem", el.textContent, null, false);
    } else if (tag === "img" && el.getAttribute("alt")) {
      emit(el, depth, "img", el.getAttribute("alt"), null, false);
    } else if (["p", "td", "th", "blockquote", "figcaption", "pre", "caption"].includes(tag)) {
      if (collapse(el.textContent)) emit(el, depth, role || "text", el.textContent, null, false);
    } else if (["div", "span", "strong", "em", "small", "code", "output"].includes(tag)) {
      if (el.children.length === 0 && collapse(el.textContent)) {
        emit(el, depth, role || "text", el.textContent, null, false);
      }
    } else if (role) {
      emit(el, depth, role, el.getAttribute("aria-label") || el.textContent, null, false);
    }
    for (const child of el.children) walk(child, depth + 1);
  };
  walk(document.documentElement, 0);
  return JSON.stringify(out);
})()
"#;

pub struct CdpEngine {
    socket: WebSocket<MaybeTlsStream<TcpStream>>,
    next_id: u64,
    session_id: Option<String>,
    console: Vec<String>,
    cached_url: String,
    cached_title: String,
}

impl CdpEngine {
    /// Connects to a browser's DevTools WebSocket and opens a blank tab.
    pub fn connect(ws_url: &str) -> Result<CdpEngine, BrowserError> {
        let (socket, _) = tungstenite::connect(ws_url)
            .map_err(|e| BrowserError::Engine(format!("connect {ws_url}: {e}")))?;
        if let MaybeTlsStream::Plain(stream) = socket.get_ref() {
            let _ = stream.set_read_timeout(Some(Duration::from_secs(30)));
        }
        let mut engine = CdpEngine {
            socket,
            next_id: 0,
            session_id: None,
            console: Vec::new(),
            cached_url: String::new(),
            cached_title: String::new(),
        };
        let created = engine.command("Target.createTarget", json!({"url": "about:blank"}))?;
        let target_id = created["targetId"]
            .as_str()
            .ok_or_else(|| BrowserError::Engine("createTarget returned no targetId".into()))?
            .to_string();
        let attached = engine.command(
            "Target.attachToTarget",
            json!({"targetId": target_id, "flatten": true}),
        )?;
        let session_id = attached["sessionId"]
            .as_str()
            .ok_or_else(|| BrowserError::Engine("attachToTarget returned no sessionId".into()))?
            .to_string();
        engine.session_id = Some(session_id);
        engine.command("Page.enable", json!({}))?;
        engine.command("Runtime.enable", json!({}))?;
        engine.command("Log.enable", json!({}))?;
        Ok(engine)
    }

    fn command(&mut self, method: &str, params: Value) -> Result<Value, BrowserError> {
        self.next_id += 1;
        let id = self.next_id;
        let mut message = json!({"id": id, "method": method, "params": params});
        if let Some(session) = &self.session_id {
            message["sessionId"] = json!(session);
        }
        self.socket
            .send(tungstenite::Message::Text(message.to_string().into()))
            .map_err(|e| BrowserError::Engine(format!("send {method}: {e}")))?;
        loop {
            let incoming = self
                .socket
                .read()
                .map_err(|e| BrowserError::Engine(format!("read for {method}: {e}")))?;
            let text = match incoming {
                tungstenite::Message::Text(t) => t.to_string(),
                tungstenite::Message::Close(_) => {
                    return Err(BrowserError::Engine("browser closed the connection".into()))
                }
                _ => continue,
            };
            let parsed: Value = match serde_json::from_str(&text) {
                Ok(v) => v,
                Err(_) => continue,
            };
            if parsed["id"].as_u64() == Some(id) {
                if let Some(error) = parsed.get("error") {
                    return Err(BrowserError::Engine(format!(
                        "{method}: {}",
                        error["message"].as_str().unwrap_or("unknown error")
                    )));
                }
                return Ok(parsed["result"].clone());
            }
            self.handle_event(&parsed);
        }
    }

    fn handle_event(&mut self, event: &Value) {
        match event["method"].as_str() {
            Some("Runtime.consoleAPICalled")
                if event["params"]["type"].as_str() == Some("error") =>
            {
                let text = event["params"]["args"]
                    .as_array()
                    .map(|args| {
                        args.iter()
                            .filter_map(|a| {
                                a["value"]
                                    .as_str()
                                    .map(str::to_string)
                                    .or_else(|| a["description"].as_str().map(str::to_string))
                            })
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .unwrap_or_default();
                self.console.push(format!("console error: {text}"));
            }
            Some("Log.entryAdded") if event["params"]["entry"]["level"].as_str() == Some("error") => {
                let text = event["params"]["entry"]["text"].as_str().unwrap_or("");
                self.console.push(format!("console error: {text}"));
            }
            _ => {}
        }
    }

    /// Evaluates an expression and returns its JSON value.
    fn evaluate(&mut self, expression: &str) -> Result<Value, BrowserError> {
        let result = self.command(
            "Runtime.evaluate",
            json!({"expression": expression, "returnByValue": true}),
        )?;
        if let Some(details) = result.get("exceptionDetails") {
            return Err(BrowserError::Engine(format!(
                "page script threw: {}",
                details["exception"]["description"]
                    .as_str()
                    .or(details["text"].as_str())
                    .unwrap_or("unknown exception")
            )));
        }
        Ok(result["result"]["value"].clone())
    }

    fn wait_loaded(&mut self) -> Result<(), BrowserError> {
        for _ in 0..120 {
            let state = self.evaluate("document.readyState")?;
            if state.as_str() == Some("complete") {
                self.refresh_location()?;
                return Ok(());
            }
            std::thread::sleep(Duration::from_millis(250));
        }
        Err(BrowserError::Engine("page never finished loading".into()))
    }

    fn refresh_location(&mut self) -> Result<(), BrowserError> {
        let info = self.evaluate("JSON.stringify({url: location.href, title: document.title})")?;
        if let Some(text) = info.as_str() {
            if let Ok(parsed) = serde_json::from_str::<Value>(text) {
                self.cached_url = parsed["url"].as_str().unwrap_or("").to_string();
                self.cached_title = parsed["title"].as_str().unwrap_or("").to_string();
            }
        }
        Ok(())
    }

    fn by_ref(node_ref: &str) -> String {
        format!("document.querySelector('[data-tddref=\"{node_ref}\"]')")
    }
}

impl super::BrowserEngine for CdpEngine {
    fn navigate(&mut self, url: &str) -> Result<(), BrowserError> {
        self.console.clear();
        let result = self.command("Page.navigate", json!({"url": url}))?;
        if let Some(error_text) = result["errorText"].as_str() {
            if !error_text.is_empty() {
                return Err(BrowserError::NavigationFailed {
                    url: super::path_of(url),
                    message: error_text.to_string(),
                });
            }
        }
        self.wait_loaded()
    }

    fn go_back(&mut self) -> Result<(), BrowserError> {
        self.evaluate("history.back()")?;
        std::thread::sleep(Duration::from_millis(100));
        self.wait_loaded()
    }

    fn url(&self) -> String {
        self.cached_url.clone()
    }

    fn title(&self) -> String {
        self.cached_title.clone()
    }

    fn nodes(&mut self) -> Result<Vec<NodeEntry>, BrowserError> {
        let raw = self.evaluate(WALKER_JS)?;
        let text = raw
            .as_str()
            .ok_or_else(|| BrowserError::Engine("walker returned a non-string".into()))?;
        let parsed: Vec<Value> = serde_json::from_str(text)
            .map_err(|e| BrowserError::Engine(format!("walker JSON: {e}")))?;
        Ok(parsed
            .into_iter()
            .map(|v| NodeEntry {
                node: AccessibilityNode {
                    ref_id: v["ref"].as_str().unwrap_or("").to_string(),
                    role: v["role"].as_str().unwrap_or("").to_string(),
                    name: v["name"].as_str().unwrap_or("").to_string(),
                    value: v["value"].as_str().map(str::to_string),
                    enabled: v["enabled"].as_bool().unwrap_or(true),
                    editable: v["editable"].as_bool().unwrap_or(false),
                },
                depth: v["depth"].as_u64().unwrap_or(0) as usize,
            })
            .collect())
    }

    fn console_errors(&mut self) -> Vec<String> {
        self.console.clone()
    }

    fn query_css(&mut self, css: &str) -> Result<Vec<String>, BrowserError> {
        let escaped = serde_json::to_string(css).expect("string serializes");
        let value = self.evaluate(&format!(
            "JSON.stringify([...document.querySelectorAll({escaped})]\
             .map(el => el.getAttribute('data-tddref')).filter(Boolean))"
        ))?;
        let text = value
            .as_str()
            .ok_or_else(|| BrowserError::Engine("css query returned a non-string".into()))?;
        serde_json::from_str(text).map_err(|e| BrowserError::Engine(format!("css JSON: {e}")))
    }

    fn click(&mut self, node_ref: &str) -> Result<(), BrowserError> {
        let el = Self::by_ref(node_ref);
        let status = self.evaluate(&format!(
            "(() => {{ const el = {el}; if (!el) return 'missing'; el.click(); return 'ok'; }})()"
        ))?;
        if status.as_str() != Some("ok") {
            return Err(BrowserError::NoElementMatched { query: node_ref.to_string() });
        }
        std::thread::sleep(Duration::from_millis(100));
        self.wait_loaded()
    }

    fn fill(&mut self, node_ref: &str, value: &str) -> Result<(), BrowserError> {
        let el = Self::by_ref(node_ref);
        let escaped = serde_json::to_string(value).expect("string serializes");
        let status = self.evaluate(&format!(
            "(() => {{ const el = {el}; if (!el) return 'missing'; \
             if (el.disabled || !('value' in el)) return 'not-editable'; \
             el.value = {escaped}; \
             el.dispatchEvent(new Event('input', {{bubbles: true}})); \
             el.dispatchEvent(new Event('change', {{bubbles: true}})); \
             return 'ok'; }})()"
        ))?;
        match status.as_str() {
            Some("ok") => Ok(()),
            Some("not-editable") => {
                Err(BrowserError::NotEditable { query: node_ref.to_string() })
            }
            _ => Err(BrowserError::NoElementMatched { query: node_ref.to_string() }),
        }
    }

    fn select_option(&mut self, node_ref: &str, value: &str) -> Result<(), BrowserError> {
        let el = Self::by_ref(node_ref);
        let escaped = serde_json::to_string(value).expect("string serializes");
        let status = self.evaluate(&format!(
            "(() => {{ const el = {el}; if (!el) return 'missing'; \
             const wanted = {escaped}; \
             const opt = [...el.options].find(o => o.textContent.trim() === wanted) \
                 || [...el.options].find(o => o.value === wanted); \
             if (!opt) return 'no-option'; \
             el.value = opt.value; \
             el.dispatchEvent(new Event('change', {{bubbles: true}})); \
             return 'ok'; }})()"
        ))?;
        match status.as_str() {
            Some("ok") => Ok(()),
            Some("no-option") => Err(BrowserError::NoElementMatched {
                query: format!("option {value:?} in {node_ref}"),
            }),
            _ => Err(BrowserError::NoElementMatched { query: node_ref.to_string() }),
        }
    }

    fn scroll(&mut self) -> Result<(), BrowserError> {
        self.evaluate("window.scrollBy(0, window.innerHeight)").map(|_| ())
    }

    fn press_key(&mut self, node_ref: Option<&str>, key: &str) -> Result<(), BrowserError> {
        if let Some(node_ref) = node_ref {
            let el = Self::by_ref(node_ref);
            self.evaluate(&format!("(() => {{ const el = {el}; if (el) el.focus(); }})()"))?;
        }
        for (event_type, method) in [("rawKeyDown", "keyDown"), ("keyUp", "keyUp")] {
            let _ = event_type;
            self.command(
                "Input.dispatchKeyEvent",
                json!({
                    "type": method,
                    "key": key,
                    "text": if key.eq_ignore_ascii_case("enter") { "\r" } else { "" },
                }),
            )?;
        }
        std::thread::sleep(Duration::from_millis(100));
        self.wait_loaded()
    }
}

#[cfg(test)]
mod tests {
    use super::super::BrowserEngine;
    use super::*;
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Scripted CDP endpoint: answers every command by method name and can
    /// interleave events before responses. Records the method sequence.
    fn start_mock(
        nodes_json: &'static str,
    ) -> (String, mpsc::Receiver<String>, std::thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let (tx, rx) = mpsc::channel();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut ws = tungstenite::accept(stream).unwrap();
            loop {
                let message = match ws.read() {
                    Ok(tungstenite::Message::Text(t)) => t.to_string(),
                    Ok(tungstenite::Message::Close(_)) | Err(_) => break,
                    _ => continue,
                };
                let parsed: Value = serde_json::from_str(&message).unwrap();
                let id = parsed["id"].as_u64().unwrap();
                let method = parsed["method"].as_str().unwrap().to_string();
                tx.send(method.clone()).unwrap();
                let result = match method.as_str() {
                    "Target.createTarget" => json!({"targetId": "T1"}),
                    "Target.attachToTarget" => json!({"sessionId": "S1"}),
                    "Page.navigate" => {
                        // A console error arrives while the command is in
                        // flight; the client must buffer it as an event.
                        let event = json!({
                            "method": "Runtime.consoleAPICalled",
                            "params": {"type": "error",
                                "args": [{"type": "string", "value": "boom on load"}]},
                            "sessionId": "S1",
                        });
                        ws.send(tungstenite::Message::Text(event.to_string().into())).unwrap();
                        json!({"frameId": "F1"})
                    }
                    "Runtime.evaluate" => {
                        let expression = parsed["params"]["expression"].as_str().unwrap();
                        if expression == "document.readyState" {
                            json!({"result": {"type": "string", "value": "complete"}})
                        } else if expression.contains("location.href") {
                            json!({"result": {"type": "string",
                                "value": "{\"url\":\"http://x/\",\"title\":\"Mock\"}"}})
                        } else if expression.contains("data-tddref") && expression.contains("el.click") {
                            json!({"result": {"type": "string", "value": "ok"}})
                        } else {
                            json!({"result": {"type": "string", "value": nodes_json}})
                        }
                    }
                    _ => json!({}),
                };
                let reply = json!({"id": id, "result": result, "sessionId": "S1"});
                ws.send(tungstenite::Message::Text(reply.to_string().into())).unwrap();
            }
        });
        (format!("ws://127.0.0.1:{port}"), rx, handle)
    }

    #[test]
    fn handshake_navigation_and_node_parsing() {
        let nodes = r#"[{"ref":"e1","depth":1,"role":"heading","name":"Mock","value":null,
            "enabled":true,"editable":false}]"#;
        let (url, methods, _server) = start_mock(nodes);
        let mut engine = CdpEngine::connect(&url).unwrap();

        let seen: Vec<String> = methods.try_iter().collect();
        assert_eq!(
            seen,
            vec![
                "Target.createTarget",
                "Target.attachToTarget",
                "Page.enable",
                "Runtime.enable",
                "Log.enable"
            ]
        );

        engine.navigate("http://x/").unwrap();
        assert_eq!(engine.url(), "http://x/");
        assert_eq!(engine.title(), "Mock");
        assert_eq!(engine.console_errors(), vec!["console error: boom on load"]);

        let parsed = engine.nodes().unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].node.role, "heading");
        assert_eq!(parsed[0].node.name, "Mock");
        assert_eq!(parsed[0].depth, 1);

        engine.click("e1").unwrap();
        let after: Vec<String> = methods.try_iter().collect();
        assert!(after.iter().all(|m| m == "Page.navigate" || m == "Runtime.evaluate"));
    }
}
