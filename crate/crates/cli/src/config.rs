//! Flag resolution: built-in defaults, overridden by a config file,
//! overridden by explicit flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tddloop_core::deploy::DeployOptions;
use tddloop_core::fixtures::ScriptedBackend;
use tddloop_core::gateway::{ChatBackend, Gateway, GatewayMode, HttpBackend};
use tddloop_core::validate::{EngineKind, ValidateOptions};

/// Keys accepted in `tddloop.toml`. The same document is accepted as JSON
/// (`tddloop.json`, or any `--config` path whose content starts with `{`).
/// Unknown keys are rejected so typos surface as config errors.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<String>,
    pub cassette: Option<PathBuf>,
    pub protocol: Option<String>,
    pub budget: Option<u32>,
    pub max_iter: Option<u32>,
    pub cap: Option<usize>,
    pub jobs: Option<usize>,
    pub engine: Option<String>,
    pub wait_timeout_ms: Option<u64>,
    pub wait_poll_ms: Option<u64>,
    pub ready_timeout_ms: Option<u64>,
}

/// Loads `--config` when given (the file must exist), otherwise looks for
/// `tddloop.toml` then `tddloop.json` in the working directory.
pub fn load_file_config(explicit: Option<&Path>) -> Result<FileConfig> {
    let path = match explicit {
        Some(path) => path.to_path_buf(),
        None => {
            let candidates = [Path::new("tddloop.toml"), Path::new("tddloop.json")];
            match candidates.iter().find(|p| p.exists()) {
                Some(found) => found.to_path_buf(),
                None => return Ok(FileConfig::default()),
            }
        }
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("config file {}", path.display()))?;
    let is_json = path.extension().is_some_and(|ext| ext == "json")
        || text.trim_start().starts_with('{');
    let config = if is_json {
        serde_json::from_str(&text).with_context(|| format!("config file {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("config file {}", path.display()))?
    };
    Ok(config)
}

/// Everything the pipeline commands need, fully resolved.
pub struct Settings {
    pub mode: GatewayMode,
    pub cassette: Option<PathBuf>,
    pub engine: EngineKind,
    pub budget: u32,
    pub cap: usize,
    pub jobs: usize,
    pub validate: ValidateOptions,
    pub deploy: DeployOptions,
}

/// Flags shared by commands that talk to the model or deploy apps. Each
/// field overrides the config file when present.
pub struct Overrides {
    pub mode: Option<String>,
    pub cassette: Option<PathBuf>,
    pub engine: Option<String>,
    pub budget: Option<u32>,
    pub max_iter: Option<u32>,
    pub cap: Option<usize>,
    pub jobs: Option<usize>,
}

pub fn resolve(file: &FileConfig, flags: &Overrides) -> Result<Settings> {
    let mode_name = flags.mode.clone().or_else(|| file.mode.clone());
    let mode = match mode_name.as_deref() {
        None => GatewayMode::ReplayStrict,
        Some(name) => match GatewayMode::parse(name) {
            Some(mode) => mode,
            None => bail!("unknown mode {name:?} (expected live, record, or replay)"),
        },
    };
    let engine_name = flags.engine.clone().or_else(|| file.engine.clone());
    let engine = match engine_name.as_deref() {
        None | Some("builtin") => EngineKind::Builtin,
        Some(url) if url.starts_with("ws://") || url.starts_with("wss://") => {
            EngineKind::Cdp { ws_url: url.to_string() }
        }
        Some(other) => bail!("unknown engine {other:?} (expected builtin or a ws:// endpoint)"),
    };

    let defaults = ValidateOptions::default();
    let wait_timeout = file.wait_timeout_ms.map(Duration::from_millis);
    let wait_poll = file.wait_poll_ms.map(Duration::from_millis);
    let validate = ValidateOptions {
        max_iterations: flags.max_iter.or(file.max_iter).unwrap_or(defaults.max_iterations),
        wait_timeout: wait_timeout.unwrap_or(defaults.wait_timeout),
        wait_poll: wait_poll.unwrap_or(defaults.wait_poll),
    };
    let mut deploy = DeployOptions::default();
    if let Some(ms) = file.ready_timeout_ms {
        deploy.ready_timeout = Duration::from_millis(ms);
    }

    let budget = flags.budget.or(file.budget).unwrap_or(5);
    if budget < 1 {
        bail!("budget must be >= 1");
    }
    let jobs = flags.jobs.or(file.jobs).unwrap_or(1);
    if jobs < 1 {
        bail!("jobs must be >= 1");
    }

    Ok(Settings {
        mode,
        cassette: flags.cassette.clone().or_else(|| file.cassette.clone()),
        engine,
        budget,
        cap: flags.cap.or(file.cap).unwrap_or(12),
        jobs,
        validate,
        deploy,
    })
}

impl Settings {
    /// Builds the gateway for this invocation. Record and replay need the
    /// cassette path; live and record need a backend. Set
    /// `TDDLOOP_BACKEND=scripted` to use the bundled deterministic backend
    /// instead of the HTTP one configured through `TDDLOOP_API_*`.
    pub fn gateway(&self) -> Result<Gateway> {
        self.gateway_with_cassette(self.cassette.as_deref())
    }

    /// Same, with the cassette path swapped out (benchmark runs give every
    /// case its own cassette under one directory).
    pub fn gateway_with_cassette(&self, cassette: Option<&Path>) -> Result<Gateway> {
        let need = |path: Option<&Path>| -> Result<PathBuf> {
            path.map(Path::to_path_buf)
                .ok_or_else(|| anyhow::anyhow!("this mode needs --cassette"))
        };
        let gateway = match self.mode {
            GatewayMode::ReplayStrict => Gateway::replay(need(cassette)?)?,
            GatewayMode::Record => Gateway::record(live_backend()?, need(cassette)?)?,
            GatewayMode::Live => Gateway::live(live_backend()?),
        };
        Ok(gateway)
    }

    /// A label for suite-file provenance: which model (or stand-in)
    /// generated the cases.
    pub fn generator_label(&self) -> String {
        match self.mode {
            GatewayMode::ReplayStrict => "cassette-replay".to_string(),
            _ if scripted_selected() => "scripted".to_string(),
            _ => std::env::var("TDDLOOP_MODEL").unwrap_or_else(|_| "unknown-model".to_string()),
        }
    }
}

fn scripted_selected() -> bool {
    std::env::var("TDDLOOP_BACKEND").is_ok_and(|v| v.eq_ignore_ascii_case("scripted"))
}

fn live_backend() -> Result<Box<dyn ChatBackend>> {
    if scripted_selected() {
        return Ok(Box::new(ScriptedBackend::new()));
    }
    let backend = HttpBackend::from_env()
        .context("no backend: set TDDLOOP_API_BASE and TDDLOOP_MODEL, or TDDLOOP_BACKEND=scripted")?;
    Ok(Box::new(backend))
}
