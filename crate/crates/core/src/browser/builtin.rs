//! HTML engine with no JavaScript execution. Pages are fetched over HTTP,
//! parsed, and exposed as accessibility-style nodes; links, forms, and
//! form controls are fully interactive. Apps whose behavior lives in
//! server-rendered HTML (static sites, classic form handlers) work
//! end-to-end; script-driven UI changes do not, by design.
//!
//! Two fidelity notes. Navigations that answer with HTTP >= 400 are
//! reported as navigation failures rather than rendered as error pages,
//! which is what a test harness wants to hear. Subresources referenced by
//! `<script src>` and stylesheet `<link>` tags are fetched eagerly; a
//! failing fetch becomes a console error on the page, mirroring what a
//! devtools console would show.

use std::collections::HashMap;

use scraper::{ElementRef, Html, Selector};

use super::{path_of, BrowserError, NodeEntry};
use crate::model::AccessibilityNode;

pub struct BuiltinEngine {
    agent: ureq::Agent,
    base_url: String,
    current: Option<PageState>,
    history: Vec<PageState>,
    overrides: Overrides,
}

struct PageState {
    url: String,
    html: String,
    title: String,
    console_errors: Vec<String>,
}

#[derive(Default)]
struct Overrides {
    values: HashMap<String, String>,
    checks: HashMap<String, bool>,
    /// Selected option *submit value* per combobox ref.
    selects: HashMap<String, String>,
}

impl Overrides {
    fn clear(&mut self) {
        self.values.clear();
        self.checks.clear();
        self.selects.clear();
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Control {
    Textbox,
    Checkbox,
    Select { options: Vec<(String, String)> },
}

#[derive(Debug, Clone)]
struct Extracted {
    node: AccessibilityNode,
    depth: usize,
    href: Option<String>,
    submit_form: Option<usize>,
    control: Option<Control>,
}

#[derive(Debug, Clone)]
enum FieldControl {
    Text { value: String },
    Checkbox { submit_value: String, checked: bool },
    Select { options: Vec<(String, String)>, selected: String },
}

#[derive(Debug, Clone)]
struct FieldState {
    ref_id: String,
    name: Option<String>,
    control: FieldControl,
}

#[derive(Debug, Clone)]
struct FormSpec {
    method: String,
    action: Option<String>,
    fields: Vec<FieldState>,
}

struct Document {
    entries: Vec<Extracted>,
    forms: Vec<FormSpec>,
    refs_by_node: HashMap<ego_tree::NodeId, String>,
}

impl Document {
    fn entry(&self, node_ref: &str) -> Result<&Extracted, BrowserError> {
        self.entries
            .iter()
            .find(|e| e.node.ref_id == node_ref)
            .ok_or_else(|| BrowserError::NoElementMatched { query: node_ref.to_string() })
    }

    fn form_of(&self, node_ref: &str) -> Option<usize> {
        self.forms.iter().position(|form| {
            form.fields.iter().any(|field| field.ref_id == node_ref)
        })
    }
}

impl BuiltinEngine {
    pub fn new(base_url: &str) -> BuiltinEngine {
        BuiltinEngine {
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(10))
                .redirects(8)
                .build(),
            base_url: base_url.trim_end_matches('/').to_string(),
            current: None,
            history: Vec::new(),
            overrides: Overrides::default(),
        }
    }

    fn state(&self) -> Result<&PageState, BrowserError> {
        self.current
            .as_ref()
            .ok_or_else(|| BrowserError::Engine("no page loaded yet".into()))
    }

    fn document(&self) -> Result<Document, BrowserError> {
        let state = self.state()?;
        let html = Html::parse_document(&state.html);
        Ok(extract_document(&html, &self.overrides))
    }

    fn fetch_get(&self, url: &str) -> Result<(String, String), BrowserError> {
        match self.agent.get(url).call() {
            Ok(resp) => {
                let final_url = resp.get_url().to_string();
                let body = resp.into_string().map_err(|e| BrowserError::NavigationFailed {
                    url: path_of(url),
                    message: format!("unreadable body: {e}"),
                })?;
                Ok((final_url, body))
            }
            Err(ureq::Error::Status(code, _)) => Err(BrowserError::NavigationFailed {
                url: path_of(url),
                message: format!("HTTP {code}"),
            }),
            Err(ureq::Error::Transport(t)) => Err(BrowserError::NavigationFailed {
                url: path_of(url),
                message: t.to_string(),
            }),
        }
    }

    fn fetch_post(&self, url: &str, body: &str) -> Result<(String, String), BrowserError> {
        let result = self
            .agent
            .post(url)
            .set("content-type", "application/x-www-form-urlencoded")
            .send_string(body);
        match result {
            Ok(resp) => {
                let final_url = resp.get_url().to_string();
                let body = resp.into_string().map_err(|e| BrowserError::NavigationFailed {
                    url: path_of(url),
                    message: format!("unreadable body: {e}"),
                })?;
                Ok((final_url, body))
            }
            Err(ureq::Error::Status(code, _)) => Err(BrowserError::NavigationFailed {
                url: path_of(url),
                message: format!("HTTP {code}"),
            }),
            Err(ureq::Error::Transport(t)) => Err(BrowserError::NavigationFailed {
                url: path_of(url),
                message: t.to_string(),
            }),
        }
    }

    fn load(&mut self, final_url: String, html: String) {
        let parsed = Html::parse_document(&html);
        let title = parsed
            .select(&selector("title"))
            .next()
            .map(|el| collapse_ws(&el.text().collect::<String>()))
            .unwrap_or_default();
        let console_errors = self.scan_subresources(&parsed, &final_url);
        if let Some(previous) = self.current.take() {
            self.history.push(previous);
        }
        self.current = Some(PageState { url: final_url, html, title, console_errors });
        self.overrides.clear();
    }

    /// Fetch scripts and stylesheets the page references; turn failures
    /// into console errors, the signal a real browser would emit.
    fn scan_subresources(&self, parsed: &Html, page_url: &str) -> Vec<String> {
        let mut errors = Vec::new();
        let mut check = |src: &str| {
            if src.starts_with("data:") {
                return;
            }
            let absolute = resolve_url(page_url, src);
            match self.agent.get(&absolute).call() {
                Ok(_) => {}
                Err(ureq::Error::Status(code, _)) => {
                    errors.push(format!("console error: failed to load {src}: HTTP {code}"));
                }
                Err(ureq::Error::Transport(t)) => {
                    errors.push(format!("console error: failed to load {src}: {t}"));
                }
            }
        };
        for el in parsed.select(&selector("script[src]")) {
            if let Some(src) = el.value().attr("src") {
                check(src);
            }
        }
        for el in parsed.select(&selector("link[href]")) {
            let rel = el.value().attr("rel").unwrap_or("");
            if rel.eq_ignore_ascii_case("stylesheet") {
                if let Some(href) = el.value().attr("href") {
                    check(href);
                }
            }
        }
        errors
    }

    fn submit_form(&mut self, form_index: usize, doc: &Document) -> Result<(), BrowserError> {
        let form = &doc.forms[form_index];
        let pairs = form_pairs(form, &self.overrides);
        let current_url = self.state()?.url.clone();
        let action = form.action.clone().unwrap_or_else(|| path_of(&current_url));
        let target = resolve_url(&current_url, &action);
        if form.method == "post" {
            let body = encode_pairs(&pairs);
            let (final_url, html) = self.fetch_post(&target, &body)?;
            self.load(final_url, html);
        } else {
            let base = target.split('?').next().unwrap_or(&target).to_string();
            let query = encode_pairs(&pairs);
            let full = if query.is_empty() { base } else { format!("{base}?{query}") };
            let (final_url, html) = self.fetch_get(&full)?;
            self.load(final_url, html);
        }
        Ok(())
    }
}

impl super::BrowserEngine for BuiltinEngine {
    fn navigate(&mut self, url: &str) -> Result<(), BrowserError> {
        let (final_url, html) = self.fetch_get(url)?;
        self.load(final_url, html);
        Ok(())
    }

    fn go_back(&mut self) -> Result<(), BrowserError> {
        let previous = self
            .history
            .pop()
            .ok_or_else(|| BrowserError::Engine("history is empty".into()))?;
        self.current = Some(previous);
        self.overrides.clear();
        Ok(())
    }

    fn url(&self) -> String {
        self.current
            .as_ref()
            .map(|s| s.url.clone())
            .unwrap_or_else(|| format!("{}/", self.base_url))
    }

    fn title(&self) -> String {
        self.current.as_ref().map(|s| s.title.clone()).unwrap_or_default()
    }

    fn nodes(&mut self) -> Result<Vec<NodeEntry>, BrowserError> {
        if self.current.is_none() {
            return Ok(Vec::new());
        }
        let doc = self.document()?;
        Ok(doc
            .entries
            .into_iter()
            .map(|e| NodeEntry { node: e.node, depth: e.depth })
            .collect())
    }

    fn console_errors(&mut self) -> Vec<String> {
        self.current
            .as_ref()
            .map(|s| s.console_errors.clone())
            .unwrap_or_default()
    }

    fn query_css(&mut self, css: &str) -> Result<Vec<String>, BrowserError> {
        let state = self.state()?;
        let html = Html::parse_document(&state.html);
        let doc = extract_document(&html, &self.overrides);
        let sel = Selector::parse(css)
            .map_err(|e| BrowserError::InvalidAction(format!("bad css selector {css:?}: {e}")))?;
        let visible: std::collections::HashSet<&str> =
            doc.entries.iter().map(|e| e.node.ref_id.as_str()).collect();
        Ok(html
            .select(&sel)
            .filter_map(|el| doc.refs_by_node.get(&el.id()))
            .filter(|r| visible.contains(r.as_str()))
            .cloned()
            .collect())
    }

    fn click(&mut self, node_ref: &str) -> Result<(), BrowserError> {
        let doc = self.document()?;
        let entry = doc.entry(node_ref)?.clone();
        if !entry.node.enabled {
            return Err(BrowserError::Engine(format!(
                "element is disabled: {} {:?}",
                entry.node.role, entry.node.name
            )));
        }
        if let Some(form_index) = entry.submit_form {
            return self.submit_form(form_index, &doc);
        }
        if let Some(href) = &entry.href {
            if href.starts_with('#') || href.starts_with("javascript:") {
                return Ok(());
            }
            let current = self.state()?.url.clone();
            let target = resolve_url(&current, href);
            return self.navigate(&target);
        }
        if matches!(entry.control, Some(Control::Checkbox)) {
            let now = !self
                .overrides
                .checks
                .get(node_ref)
                .copied()
                .unwrap_or(entry.node.value.as_deref() == Some("checked"));
            self.overrides.checks.insert(node_ref.to_string(), now);
            return Ok(());
        }
        // A plain button with no form and no script backing it: the click
        // lands but nothing observable changes.
        Ok(())
    }

    fn fill(&mut self, node_ref: &str, value: &str) -> Result<(), BrowserError> {
        let doc = self.document()?;
        let entry = doc.entry(node_ref)?;
        if !entry.node.editable || !matches!(entry.control, Some(Control::Textbox)) {
            return Err(BrowserError::NotEditable {
                query: format!("{} {:?}", entry.node.role, entry.node.name),
            });
        }
        self.overrides.values.insert(node_ref.to_string(), value.to_string());
        Ok(())
    }

    fn select_option(&mut self, node_ref: &str, value: &str) -> Result<(), BrowserError> {
        let doc = self.document()?;
        let entry = doc.entry(node_ref)?;
        let Some(Control::Select { options }) = &entry.control else {
            return Err(BrowserError::NotEditable {
                query: format!("{} {:?}", entry.node.role, entry.node.name),
            });
        };
        let wanted = value.trim();
        let found = options
            .iter()
            .find(|(_, label)| label.trim() == wanted)
            .or_else(|| options.iter().find(|(v, _)| v == wanted))
            .or_else(|| {
                options
                    .iter()
                    .find(|(_, label)| label.trim().eq_ignore_ascii_case(wanted))
            });
        match found {
            Some((option_value, _)) => {
                self.overrides
                    .selects
                    .insert(node_ref.to_string(), option_value.clone());
                Ok(())
            }
            None => Err(BrowserError::NoElementMatched {
                query: format!("option {wanted:?} in {} {:?}", entry.node.role, entry.node.name),
            }),
        }
    }

    fn press_key(&mut self, node_ref: Option<&str>, key: &str) -> Result<(), BrowserError> {
        if !key.eq_ignore_ascii_case("enter") {
            return Ok(());
        }
        // Enter inside a form field triggers implicit submission.
        if let Some(node_ref) = node_ref {
            let doc = self.document()?;
            if let Some(form_index) = doc.form_of(node_ref) {
                return self.submit_form(form_index, &doc);
            }
        }
        Ok(())
    }
}

fn selector(css: &str) -> Selector {
    Selector::parse(css).expect("static selector parses")
}

fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn clamp_chars(text: &str, max: usize) -> String {
    if text.chars().count() <= max {
        return text.to_string();
    }
    let clipped: String = text.chars().take(max).collect();
    format!("{clipped}…")
}

fn style_hidden(style: Option<&str>) -> bool {
    style
        .map(|s| {
            let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
            compact.contains("display:none") || compact.contains("visibility:hidden")
        })
        .unwrap_or(false)
}

/// Joins `href` against the absolute `base` URL; handles absolute URLs,
/// root-relative, and directory-relative forms (with `.`/`..` collapsed).
pub fn resolve_url(base: &str, href: &str) -> String {
    if href.starts_with("http://") || href.starts_with("https://") {
        return href.to_string();
    }
    let (origin, base_path) = split_origin(base);
    if href.starts_with('/') {
        return format!("{origin}{href}");
    }
    let dir_path = base_path.split(['?', '#']).next().unwrap_or("/");
    let dir = &dir_path[..dir_path.rfind('/').map(|i| i + 1).unwrap_or(1)];
    let mut segments: Vec<&str> = Vec::new();
    for segment in dir.split('/').chain(href.split('/')) {
        match segment {
            "" | "." => {}
            ".." => {
                segments.pop();
            }
            s => segments.push(s),
        }
    }
    format!("{origin}/{}", segments.join("/"))
}

fn split_origin(url: &str) -> (&str, &str) {
    let scheme_end = url.find("://").map(|i| i + 3).unwrap_or(0);
    match url[scheme_end..].find('/') {
        Some(idx) => url.split_at(scheme_end + idx),
        None => (url, "/"),
    }
}

fn encode_component(value: &str) -> String {
    let mut out = String::new();
    for byte in value.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            _ => out.push_str(&format!("%{byte:02X}")),
        }
    }
    out
}

fn encode_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{}={}", encode_component(k), encode_component(v)))
        .collect::<Vec<_>>()
        .join("&")
}

fn form_pairs(form: &FormSpec, overrides: &Overrides) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for field in &form.fields {
        let Some(name) = &field.name else { continue };
        match &field.control {
            FieldControl::Text { value } => {
                let value = overrides
                    .values
                    .get(&field.ref_id)
                    .cloned()
                    .unwrap_or_else(|| value.clone());
                pairs.push((name.clone(), value));
            }
            FieldControl::Checkbox { submit_value, checked } => {
                let checked = overrides.checks.get(&field.ref_id).copied().unwrap_or(*checked);
                if checked {
                    pairs.push((name.clone(), submit_value.clone()));
                }
            }
            FieldControl::Select { options, selected } => {
                let value = overrides
                    .selects
                    .get(&field.ref_id)
                    .cloned()
                    .unwrap_or_else(|| selected.clone());
                if options.iter().any(|(v, _)| *v == value) || !options.is_empty() {
                    pairs.push((name.clone(), value));
                }
            }
        }
    }
    pairs
}

struct Walker<'a> {
    counter: usize,
    entries: Vec<Extracted>,
    forms: Vec<FormSpec>,
    refs_by_node: HashMap<ego_tree::NodeId, String>,
    label_for: &'a HashMap<String, String>,
    overrides: &'a Overrides,
}

fn extract_document(html: &Html, overrides: &Overrides) -> Document {
    // Map label[for] → collapsed label text, for input naming.
    let mut label_for = HashMap::new();
    for label in html.select(&selector("label[for]")) {
        if let Some(target) = label.value().attr("for") {
            label_for.insert(
                target.to_string(),
                collapse_ws(&label.text().collect::<String>()),
            );
        }
    }
    let mut walker = Walker {
        counter: 0,
        entries: Vec::new(),
        forms: Vec::new(),
        refs_by_node: HashMap::new(),
        label_for: &label_for,
        overrides,
    };
    for child in html.tree.root().children() {
        walker.walk(child, 0, None, None, false);
    }
    Document {
        entries: walker.entries,
        forms: walker.forms,
        refs_by_node: walker.refs_by_node,
    }
}

impl Walker<'_> {
    fn walk(
        &mut self,
        node: ego_tree::NodeRef<'_, scraper::Node>,
        depth: usize,
        form: Option<usize>,
        label_ctx: Option<&str>,
        suppressed: bool,
    ) {
        let Some(el) = ElementRef::wrap(node) else {
            return;
        };
        self.counter += 1;
        let ref_id = format!("e{}", self.counter);
        self.refs_by_node.insert(node.id(), ref_id.clone());

        let tag = el.value().name().to_ascii_lowercase();
        let attr = |name: &str| el.value().attr(name);
        let suppressed = suppressed
            || matches!(tag.as_str(), "script" | "style" | "head" | "template" | "noscript")
            || attr("hidden").is_some()
            || attr("aria-hidden") == Some("true")
            || style_hidden(attr("style"));

        let mut form = form;
        if tag == "form" && !suppressed {
            self.forms.push(FormSpec {
                method: attr("method").unwrap_or("get").to_ascii_lowercase(),
                action: attr("action").map(str::to_string),
                fields: Vec::new(),
            });
            form = Some(self.forms.len() - 1);
        }

        let mut label_ctx = label_ctx.map(str::to_string);
        if tag == "label" {
            label_ctx = Some(collapse_ws(&el.text().collect::<String>()));
        }

        if !suppressed {
            self.emit(&el, &ref_id, &tag, depth, form, label_ctx.as_deref());
        }

        // Options render inside their combobox, never as standalone nodes.
        let children_suppressed = suppressed || tag == "select";
        for child in node.children() {
            self.walk(child, depth + 1, form, label_ctx.as_deref(), children_suppressed);
        }
    }

    fn emit(
        &mut self,
        el: &ElementRef<'_>,
        ref_id: &str,
        tag: &str,
        depth: usize,
        form: Option<usize>,
        label_ctx: Option<&str>,
    ) {
        let attr = |name: &str| el.value().attr(name);
        let text = || collapse_ws(&el.text().collect::<String>());
        let enabled = attr("disabled").is_none();
        let explicit_role = attr("role").map(str::to_string);
        let aria_label = attr("aria-label").map(str::to_string);
        let control_name = |fallback: &dyn Fn() -> String| -> String {
            aria_label
                .clone()
                .or_else(|| attr("id").and_then(|id| self.label_for.get(id).cloned()))
                .or_else(|| label_ctx.map(str::to_string))
                .or_else(|| attr("placeholder").map(str::to_string))
                .unwrap_or_else(fallback)
        };

        let mut push = |node: AccessibilityNode, href, submit_form, control| {
            self.entries.push(Extracted { node, depth, href, submit_form, control });
        };

        match tag {
            "a" => {
                if let Some(href) = attr("href") {
                    push(
                        AccessibilityNode {
                            ref_id: ref_id.into(),
                            role: explicit_role.unwrap_or_else(|| "link".into()),
                            name: aria_label.unwrap_or_else(text),
                            value: None,
                            enabled,
                            editable: false,
                        },
                        Some(href.to_string()),
                        None,
                        None,
                    );
                }
            }
            "button" => {
                let is_submit = attr("type").map(|t| t == "submit").unwrap_or(true);
                push(
                    AccessibilityNode {
                        ref_id: ref_id.into(),
                        role: explicit_role.unwrap_or_else(|| "button".into()),
                        name: aria_label.unwrap_or_else(text),
                        value: None,
                        enabled,
                        editable: false,
                    },
                    None,
                    form.filter(|_| is_submit && enabled),
                    None,
                );
            }
            "input" => {
                let input_type = attr("type").unwrap_or("text").to_ascii_lowercase();
                let field_name = attr("name").map(str::to_string);
                match input_type.as_str() {
                    "hidden" => {
                        // Invisible, but still part of the form payload.
                        if let (Some(form_index), Some(name)) = (form, field_name) {
                            self.forms[form_index].fields.push(FieldState {
                                ref_id: ref_id.into(),
                                name: Some(name),
                                control: FieldControl::Text {
                                    value: attr("value").unwrap_or("").to_string(),
                                },
                            });
                        }
                    }
                    "submit" | "button" | "image" => {
                        push(
                            AccessibilityNode {
                                ref_id: ref_id.into(),
                                role: "button".into(),
                                name: attr("value").unwrap_or("Submit").to_string(),
                                value: None,
                                enabled,
                                editable: false,
                            },
                            None,
                            form.filter(|_| input_type == "submit" && enabled),
                            None,
                        );
                    }
                    "checkbox" | "radio" => {
                        let checked_initially = attr("checked").is_some();
                        let checked = self
                            .overrides
                            .checks
                            .get(ref_id)
                            .copied()
                            .unwrap_or(checked_initially);
                        let name = control_name(&|| field_name.clone().unwrap_or_default());
                        push(
                            AccessibilityNode {
                                ref_id: ref_id.into(),
                                role: if input_type == "radio" { "radio" } else { "checkbox" }
                                    .into(),
                                name,
                                value: Some(if checked { "checked" } else { "unchecked" }.into()),
                                enabled,
                                editable: false,
                            },
                            None,
                            None,
                            Some(Control::Checkbox),
                        );
                        if let (Some(form_index), Some(name)) = (form, field_name) {
                            self.forms[form_index].fields.push(FieldState {
                                ref_id: ref_id.into(),
                                name: Some(name),
                                control: FieldControl::Checkbox {
                                    submit_value: attr("value").unwrap_or("on").to_string(),
                                    checked,
                                },
                            });
                        }
                    }
                    _ => {
                        let initial = attr("value").unwrap_or("").to_string();
                        let value = self
                            .overrides
                            .values
                            .get(ref_id)
                            .cloned()
                            .unwrap_or_else(|| initial.clone());
                        let name = control_name(&|| field_name.clone().unwrap_or_default());
                        push(
                            AccessibilityNode {
                                ref_id: ref_id.into(),
                                role: "textbox".into(),
                                name,
                                value: Some(value.clone()),
                                enabled,
                                editable: enabled,
                            },
                            None,
                            None,
                            Some(Control::Textbox),
                        );
                        if let (Some(form_index), Some(name)) = (form, field_name) {
                            self.forms[form_index].fields.push(FieldState {
                                ref_id: ref_id.into(),
                                name: Some(name),
                                control: FieldControl::Text { value },
                            });
                        }
                    }
                }
            }
            "textarea" => {
                let initial = text();
                let value = self
                    .overrides
                    .values
                    .get(ref_id)
                    .cloned()
                    .unwrap_or_else(|| initial.clone());
                let field_name = attr("name").map(str::to_string);
                let name = control_name(&|| field_name.clone().unwrap_or_default());
                push(
                    AccessibilityNode {
                        ref_id: ref_id.into(),
                        role: "textbox".into(),
                        name,
                        value: Some(value.clone()),
                        enabled,
                        editable: enabled,
                    },
                    None,
                    None,
                    Some(Control::Textbox),
                );
                if let (Some(form_index), Some(name)) = (form, field_name) {
                    self.forms[form_index].fields.push(FieldState {
                        ref_id: ref_id.into(),
                        name: Some(name),
                        control: FieldControl::Text { value },
                    });
                }
            }
            "select" => {
                let mut options: Vec<(String, String)> = Vec::new();
                let mut selected: Option<String> = None;
                for option in el.select(&selector("option")) {
                    let label = collapse_ws(&option.text().collect::<String>());
                    let value = option
                        .value()
                        .attr("value")
                        .map(str::to_string)
                        .unwrap_or_else(|| label.clone());
                    if option.value().attr("selected").is_some() {
                        selected = Some(value.clone());
                    }
                    options.push((value, label));
                }
                let default = selected
                    .or_else(|| options.first().map(|(v, _)| v.clone()))
                    .unwrap_or_default();
                let chosen = self
                    .overrides
                    .selects
                    .get(ref_id)
                    .cloned()
                    .unwrap_or_else(|| default.clone());
                let shown = options
                    .iter()
                    .find(|(v, _)| *v == chosen)
                    .map(|(_, label)| label.clone())
                    .unwrap_or_default();
                let field_name = attr("name").map(str::to_string);
                let name = control_name(&|| field_name.clone().unwrap_or_default());
                push(
                    AccessibilityNode {
                        ref_id: ref_id.into(),
                        role: "combobox".into(),
                        name,
                        value: Some(shown),
                        enabled,
                        editable: false,
                    },
                    None,
                    None,
                    Some(Control::Select { options: options.clone() }),
                );
                if let (Some(form_index), Some(name)) = (form, field_name) {
                    self.forms[form_index].fields.push(FieldState {
                        ref_id: ref_id.into(),
                        name: Some(name),
                        control: FieldControl::Select { options, selected: chosen },
                    });
                }
            }
            "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
                push(
                    AccessibilityNode {
                        ref_id: ref_id.into(),
                        role: "heading".into(),
                        name: clamp_chars(&text(), 240),
                        value: None,
                        enabled: true,
                        editable: false,
                    },
                    None,
                    None,
                    None,
                );
            }
            "li" => {
                let name = clamp_chars(&text(), 240);
                if !name.is_empty() {
                    push(
                        AccessibilityNode {
                            ref_id: ref_id.into(),
                            role: explicit_role.unwrap_or_else(|| "listitem".into()),
                            name,
                            value: None,
                            enabled: true,
                            editable: false,
                        },
                        None,
                        None,
                        None,
                    );
                }
            }
            "img" => {
                if let Some(alt) = attr("alt") {
                    if !alt.trim().is_empty() {
                        push(
                            AccessibilityNode {
                                ref_id: ref_id.into(),
                                role: "img".into(),
                                name: collapse_ws(alt),
                                value: None,
                                enabled: true,
                                editable: false,
                            },
                            None,
                            None,
                            None,
                        );
                    }
                }
            }
            "p" | "td" | "th" | "blockquote" | "figcaption" | "pre" | "caption" => {
                let name = clamp_chars(&text(), 240);
                if !name.is_empty() {
                    push(
                        AccessibilityNode {
                            ref_id: ref_id.into(),
                            role: explicit_role.unwrap_or_else(|| "text".into()),
                            name,
                            value: None,
                            enabled: true,
                            editable: false,
                        },
                        None,
                        None,
                        None,
                    );
                }
            }
            "div" | "span" | "strong" | "em" | "small" | "code" | "output" => {
                // Only leaf containers, so prose shows up once, not at
                // every nesting level.
                let has_element_children = el.children().any(|c| c.value().is_element());
                if !has_element_children {
                    let name = clamp_chars(&text(), 240);
                    if !name.is_empty() {
                        push(
                            AccessibilityNode {
                                ref_id: ref_id.into(),
                                role: explicit_role.unwrap_or_else(|| "text".into()),
                                name,
                                value: None,
                                enabled: true,
                                editable: false,
                            },
                            None,
                            None,
                            None,
                        );
                    }
                }
            }
            _ => {
                if let Some(role) = explicit_role {
                    let name = aria_label.unwrap_or_else(|| clamp_chars(&text(), 240));
                    push(
                        AccessibilityNode {
                            ref_id: ref_id.into(),
                            role,
                            name,
                            value: None,
                            enabled,
                            editable: false,
                        },
                        None,
                        None,
                        None,
                    );
                }
            }
        }
    }
}
