//! Drives a deployed app the way a tester would: snapshot the page as an
//! accessibility-style node list, resolve human-oriented selectors, perform
//! actions, and record what happened.
//!
//! The engine behind a [`Session`] is pluggable. [`BuiltinEngine`] is a
//! dependency-free HTML engine (no JavaScript execution) that covers
//! link/form-driven apps and is what the bundled fixtures run on;
//! [`CdpEngine`] speaks the Chrome DevTools Protocol to a real browser when
//! one is available. All selector resolution and snapshot shaping is shared,
//! so trajectories look identical regardless of engine.

mod builtin;
mod cdp;

use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    AccessibilityNode, ActionKind, ActionOutcome, ActionRecord, BrowserAction, PageSnapshot,
    SelectorSpec, SelectorStrategy,
};

pub use builtin::BuiltinEngine;
pub use cdp::CdpEngine;

#[derive(Debug, Error)]
pub enum BrowserError {
    #[error("navigation failed: {url}: {message}")]
    NavigationFailed { url: String, message: String },
    #[error("no element matched: {query}")]
    NoElementMatched { query: String },
    #[error("ambiguous selector: {query} matched {count} elements")]
    AmbiguousSelector { query: String, count: usize },
    #[error("element is not editable: {query}")]
    NotEditable { query: String },
    #[error("timeout waiting for: {query}")]
    Timeout { query: String },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("engine error: {0}")]
    Engine(String),
    #[error("{0} is not supported by this engine")]
    Unsupported(&'static str),
}

/// A node plus its depth in the DOM, used for truncation ordering.
#[derive(Debug, Clone)]
pub struct NodeEntry {
    pub node: AccessibilityNode,
    pub depth: usize,
}

/// The operations an engine must provide. Refs are engine-assigned element
/// ids (`e<n>`) that stay stable between a snapshot and the next action.
pub trait BrowserEngine {
    fn navigate(&mut self, url: &str) -> Result<(), BrowserError>;
    fn go_back(&mut self) -> Result<(), BrowserError>;
    /// Absolute URL of the current page.
    fn url(&self) -> String;
    fn title(&self) -> String;
    fn nodes(&mut self) -> Result<Vec<NodeEntry>, BrowserError>;
    /// Console errors accumulated on the current page.
    fn console_errors(&mut self) -> Vec<String>;
    /// Refs of elements matching a CSS selector, in document order.
    fn query_css(&mut self, css: &str) -> Result<Vec<String>, BrowserError>;
    fn click(&mut self, node_ref: &str) -> Result<(), BrowserError>;
    fn fill(&mut self, node_ref: &str, value: &str) -> Result<(), BrowserError>;
    fn select_option(&mut self, node_ref: &str, value: &str) -> Result<(), BrowserError>;
    fn press_key(&mut self, node_ref: Option<&str>, key: &str) -> Result<(), BrowserError>;
    /// Scroll one viewport down. Engines without a viewport expose the
    /// whole page in every snapshot, so the default is a no-op.
    fn scroll(&mut self) -> Result<(), BrowserError> {
        Ok(())
    }
}

/// Total characters of node text a snapshot may carry before deep nodes are
/// dropped. Keeps prompts bounded on pathological pages.
pub const SNAPSHOT_BUDGET: usize = 16_000;

/// Drops the deepest (then latest) nodes until the rendered size of the
/// list fits the budget. Returns the surviving nodes in document order and
/// whether anything was dropped.
pub fn truncate_nodes(entries: &[NodeEntry], budget: usize) -> (Vec<AccessibilityNode>, bool) {
    let cost = |node: &AccessibilityNode| {
        node.ref_id.len()
            + node.role.len()
            + node.name.len()
            + node.value.as_deref().map(|v| v.len()).unwrap_or(0)
            + 12
    };
    let total: usize = entries.iter().map(|e| cost(&e.node)).sum();
    if total <= budget {
        return (entries.iter().map(|e| e.node.clone()).collect(), false);
    }
    // Candidates ordered deepest-first, later-first, so shallow structure
    // (headings, nav, forms) survives longest.
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        entries[b]
            .depth
            .cmp(&entries[a].depth)
            .then_with(|| b.cmp(&a))
    });
    let mut dropped = vec![false; entries.len()];
    let mut size = total;
    for idx in order {
        if size <= budget {
            break;
        }
        size -= cost(&entries[idx].node);
        dropped[idx] = true;
    }
    let kept = entries
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped[*i])
        .map(|(_, e)| e.node.clone())
        .collect();
    (kept, true)
}

/// One browsing session against one app. Owns cookie/auth state via its
/// engine; two sessions never share state.
pub struct Session {
    engine: Box<dyn BrowserEngine>,
    base_url: String,
    snapshot_budget: usize,
    wait_timeout: Duration,
    wait_poll: Duration,
}

impl Session {
    pub fn new(engine: Box<dyn BrowserEngine>, base_url: impl Into<String>) -> Session {
        Session {
            engine,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            snapshot_budget: SNAPSHOT_BUDGET,
            wait_timeout: Duration::from_secs(5),
            wait_poll: Duration::from_millis(250),
        }
    }

    /// Session backed by the built-in HTML engine.
    pub fn builtin(base_url: impl Into<String>) -> Session {
        let base = base_url.into();
        Session::new(Box::new(BuiltinEngine::new(&base)), base)
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn set_wait_timeout(&mut self, timeout: Duration, poll: Duration) {
        self.wait_timeout = timeout;
        self.wait_poll = poll;
    }

    /// Path-and-query of the current page, with the ephemeral host stripped.
    pub fn current_path(&self) -> String {
        path_of(&self.engine.url())
    }

    pub fn snapshot(&mut self) -> Result<PageSnapshot, BrowserError> {
        let entries = self.engine.nodes()?;
        let (nodes, truncated) = truncate_nodes(&entries, self.snapshot_budget);
        Ok(PageSnapshot {
            url: path_of(&self.engine.url()),
            title: self.engine.title(),
            nodes,
            console_errors: self.engine.console_errors(),
            truncated,
        })
    }

    /// Resolves a selector to exactly one element ref. Zero matches and
    /// ambiguity are both hard errors so tests fail loudly, not flakily.
    pub fn resolve(&mut self, spec: &SelectorSpec) -> Result<String, BrowserError> {
        let query = spec.describe();
        match &spec.strategy {
            SelectorStrategy::Css => {
                let matches = self.engine.query_css(&spec.query)?;
                match matches.len() {
                    0 => Err(BrowserError::NoElementMatched { query }),
                    1 => Ok(matches.into_iter().next().unwrap()),
                    n => Err(BrowserError::AmbiguousSelector { query, count: n }),
                }
            }
            SelectorStrategy::VisibleText => {
                let entries = self.engine.nodes()?;
                resolve_by_name(&entries, None, &spec.query, &query)
            }
            SelectorStrategy::RoleAndName => {
                let (role, name) = spec.role_name_parts();
                let (role, name) = (role.to_string(), name.to_string());
                let entries = self.engine.nodes()?;
                resolve_by_name(&entries, Some(&role), &name, &query)
            }
        }
    }

    /// Executes one action and returns the record for the trajectory.
    /// Failures become `ActionOutcome::Error`; the session stays usable.
    pub fn perform(&mut self, action: &BrowserAction) -> ActionRecord {
        let outcome = match self.execute(action) {
            Ok(()) => ActionOutcome::Ok,
            Err(err) => ActionOutcome::Error { message: err.to_string() },
        };
        ActionRecord {
            action: action.clone(),
            outcome,
            post_state_digest: self.state_digest(),
        }
    }

    fn execute(&mut self, action: &BrowserAction) -> Result<(), BrowserError> {
        action
            .validate()
            .map_err(|e| BrowserError::InvalidAction(e.to_string()))?;
        match action.kind {
            ActionKind::Navigate => {
                let target = action.value.as_deref().unwrap();
                let url = if target.starts_with("http://") || target.starts_with("https://") {
                    target.to_string()
                } else if target.starts_with('/') {
                    format!("{}{}", self.base_url, target)
                } else {
                    format!("{}/{}", self.base_url, target)
                };
                self.engine.navigate(&url)
            }
            ActionKind::GoBack => self.engine.go_back(),
            ActionKind::Click => {
                let node_ref = self.resolve(action.target.as_ref().unwrap())?;
                self.engine.click(&node_ref)
            }
            ActionKind::Fill => {
                let node_ref = self.resolve(action.target.as_ref().unwrap())?;
                self.engine.fill(&node_ref, action.value.as_deref().unwrap())
            }
            ActionKind::SelectOption => {
                let node_ref = self.resolve(action.target.as_ref().unwrap())?;
                self.engine
                    .select_option(&node_ref, action.value.as_deref().unwrap())
            }
            ActionKind::PressKey => {
                let node_ref = match &action.target {
                    Some(spec) => Some(self.resolve(spec)?),
                    None => None,
                };
                self.engine
                    .press_key(node_ref.as_deref(), action.value.as_deref().unwrap())
            }
            ActionKind::WaitFor => {
                let spec = action.target.as_ref().unwrap();
                let deadline = Instant::now() + self.wait_timeout;
                loop {
                    match self.resolve(spec) {
                        Ok(_) => return Ok(()),
                        Err(
                            BrowserError::NoElementMatched { .. }
                            | BrowserError::AmbiguousSelector { .. },
                        ) if Instant::now() < deadline => {
                            std::thread::sleep(self.wait_poll);
                        }
                        Err(BrowserError::NoElementMatched { query })
                        | Err(BrowserError::AmbiguousSelector { query, .. }) => {
                            return Err(BrowserError::Timeout { query });
                        }
                        Err(other) => return Err(other),
                    }
                }
            }
            ActionKind::AssertVisible => {
                self.resolve(action.target.as_ref().unwrap())?;
                Ok(())
            }
            ActionKind::Scroll => self.engine.scroll(),
        }
    }

    /// Compact, host-independent description of the page after an action.
    /// Console errors are folded in so downstream failure analysis can see
    /// runtime breakage without a full snapshot.
    fn state_digest(&mut self) -> String {
        let path = path_of(&self.engine.url());
        let title = self.engine.title();
        let node_count = self.engine.nodes().map(|n| n.len()).unwrap_or(0);
        let errors = self.engine.console_errors();
        let mut digest = format!("url={path} title={title:?} nodes={node_count}");
        if !errors.is_empty() {
            digest.push_str(&format!(
                " console_errors={}",
                serde_json::to_string(&errors).unwrap_or_default()
            ));
        }
        digest
    }
}

fn resolve_by_name(
    entries: &[NodeEntry],
    role: Option<&str>,
    name: &str,
    query: &str,
) -> Result<String, BrowserError> {
    let pool: Vec<&NodeEntry> = entries
        .iter()
        .filter(|e| role.is_none_or(|r| e.node.role == r))
        .collect();
    let wanted = name.trim();
    let tiers: [&dyn Fn(&str) -> bool; 3] = [
        &|candidate| candidate.trim() == wanted,
        &|candidate| candidate.trim().eq_ignore_ascii_case(wanted),
        &|candidate| {
            candidate
                .to_ascii_lowercase()
                .contains(&wanted.to_ascii_lowercase())
        },
    ];
    for tier in tiers {
        let hits: Vec<&&NodeEntry> = pool.iter().filter(|e| tier(&e.node.name)).collect();
        match hits.len() {
            0 => continue,
            1 => return Ok(hits[0].node.ref_id.clone()),
            n => {
                return Err(BrowserError::AmbiguousSelector { query: query.to_string(), count: n })
            }
        }
    }
    Err(BrowserError::NoElementMatched { query: query.to_string() })
}

/// `http://127.0.0.1:4173/items?q=1` → `/items?q=1`. Keeps prompts and
/// digests independent of ephemeral ports.
pub fn path_of(url: &str) -> String {
    let without_scheme = url
        .strip_prefix("http://")
        .or_else(|| url.strip_prefix("https://"))
        .unwrap_or(url);
    match without_scheme.find('/') {
        Some(idx) => without_scheme[idx..].to_string(),
        None => "/".to_string(),
    }
}

/// Short stable hash of a page state, used where a full digest is too long.
pub fn short_hash(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hex::encode(&hasher.finalize()[..6])
}
