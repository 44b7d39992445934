//! Deploys a generated app into a locally reachable URL and guarantees
//! teardown. Two runtimes are supported: a Node dev script supervised as a
//! process group, and a static-site server for plain HTML directories.
//!
//! Every spawned process goes into its own session (`setsid`) so that
//! `npm run dev`-style trees can be terminated as a unit: SIGTERM first,
//! then SIGKILL after a grace period. Handles also stop on drop, so a
//! panicking test cannot leak servers.

use std::fs::File;
use std::net::TcpListener;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeployError {
    #[error("no entrypoint in {workdir}: expected package.json with a dev/start script or an index.html")]
    NoEntrypoint { workdir: PathBuf },
    #[error("failed to spawn {command}: {source}")]
    SpawnFailed { command: String, source: std::io::Error },
    #[error("dependency install failed:\n{log_tail}")]
    InstallFailed { log_tail: String },
    #[error("app exited during startup (status {status}):\n{log_tail}")]
    CrashedOnStart { status: i32, log_tail: String },
    #[error("app did not become ready within {}s:\n{log_tail}", timeout.as_secs())]
    NotReady { timeout: Duration, log_tail: String },
    #[error("deploy io: {0}")]
    Io(#[from] std::io::Error),
}

/// How a workdir should be brought up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Framework {
    /// Run a package.json script (`npm run <script>`) with PORT injected.
    NodeDev { script: String, has_dependencies: bool },
    /// Serve the directory itself; `index.html` is the root document.
    StaticSite,
}

/// Inspects a workdir and picks a runtime. A `dev` script wins over `start`;
/// a bare `index.html` makes a static site; anything else is undeployable.
pub fn detect_framework(workdir: &Path) -> Result<Framework, DeployError> {
    let manifest = workdir.join("package.json");
    if manifest.is_file() {
        let text = std::fs::read_to_string(&manifest)?;
        if let Ok(parsed) = serde_json::from_str::<serde_json::Value>(&text) {
            let has_dependencies = ["dependencies", "devDependencies"]
                .iter()
                .filter_map(|k| parsed.get(*k))
                .filter_map(|v| v.as_object())
                .any(|m| !m.is_empty());
            let scripts = parsed.get("scripts").and_then(|s| s.as_object());
            if let Some(scripts) = scripts {
                for name in ["dev", "start"] {
                    if scripts.contains_key(name) {
                        return Ok(Framework::NodeDev {
                            script: name.to_string(),
                            has_dependencies,
                        });
                    }
                }
            }
        }
    }
    if workdir.join("index.html").is_file() {
        return Ok(Framework::StaticSite);
    }
    Err(DeployError::NoEntrypoint { workdir: workdir.to_path_buf() })
}

#[derive(Debug, Clone)]
pub struct DeployOptions {
    /// Fixed port; picked automatically when absent.
    pub port: Option<u16>,
    /// How long to wait for the first sub-500 response on `/`.
    pub ready_timeout: Duration,
}

impl Default for DeployOptions {
    fn default() -> Self {
        DeployOptions { port: None, ready_timeout: Duration::from_secs(60) }
    }
}

/// Binds port 0 to let the kernel pick, then frees it for the app.
pub fn find_free_port() -> std::io::Result<u16> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    Ok(listener.local_addr()?.port())
}

static HANDLE_SEQ: AtomicU64 = AtomicU64::new(1);

enum Runtime {
    Process(ProcessGroup),
    Static(StaticServer),
    Stopped,
}

/// A running app. Stopping is idempotent and also happens on drop.
pub struct AppHandle {
    id: String,
    url: String,
    port: u16,
    workdir: PathBuf,
    runtime: Runtime,
}

impl AppHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    /// Pid of the process-group leader, when this is a supervised process.
    pub fn pid(&self) -> Option<u32> {
        match &self.runtime {
            Runtime::Process(group) => Some(group.pid),
            _ => None,
        }
    }

    pub fn is_running(&mut self) -> bool {
        match &mut self.runtime {
            Runtime::Process(group) => group.is_running(),
            Runtime::Static(server) => !server.stopped.load(Ordering::SeqCst),
            Runtime::Stopped => false,
        }
    }

    /// Last lines of the app's captured stdout/stderr, for failure reports.
    pub fn log_tail(&self, max_lines: usize) -> String {
        log_tail(&self.workdir, max_lines)
    }

    pub fn stop(&mut self) {
        match std::mem::replace(&mut self.runtime, Runtime::Stopped) {
            Runtime::Process(mut group) => group.terminate(),
            Runtime::Static(server) => server.shutdown(),
            Runtime::Stopped => {}
        }
    }
}

impl Drop for AppHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn logs_dir(workdir: &Path) -> PathBuf {
    workdir.join(".tddloop")
}

fn log_tail(workdir: &Path, max_lines: usize) -> String {
    let mut combined = String::new();
    for name in ["app.err.log", "app.out.log"] {
        if let Ok(text) = std::fs::read_to_string(logs_dir(workdir).join(name)) {
            let lines: Vec<&str> = text.lines().collect();
            let start = lines.len().saturating_sub(max_lines);
            for line in &lines[start..] {
                combined.push_str(line);
                combined.push('\n');
            }
        }
    }
    if combined.is_empty() {
        combined.push_str("(no app output captured)");
    }
    combined.trim_end().to_string()
}

/// Brings the app in `workdir` up and waits until it answers on `/`.
pub fn deploy(workdir: &Path, options: &DeployOptions) -> Result<AppHandle, DeployError> {
    let framework = detect_framework(workdir)?;
    let port = match options.port {
        Some(p) => p,
        None => find_free_port()?,
    };
    let id = format!("app-{}", HANDLE_SEQ.fetch_add(1, Ordering::SeqCst));
    let url = format!("http://127.0.0.1:{port}");
    std::fs::create_dir_all(logs_dir(workdir))?;

    let runtime = match framework {
        Framework::StaticSite => Runtime::Static(StaticServer::start(workdir, port)?),
        Framework::NodeDev { script, has_dependencies } => {
            if has_dependencies && !workdir.join("node_modules").is_dir() {
                npm_install(workdir)?;
            }
            let group = ProcessGroup::spawn(workdir, &["npm", "run", &script], port)?;
            Runtime::Process(group)
        }
    };

    let mut handle = AppHandle { id, url, port, workdir: workdir.to_path_buf(), runtime };
    wait_ready(&mut handle, options.ready_timeout)?;
    Ok(handle)
}

fn npm_install(workdir: &Path) -> Result<(), DeployError> {
    let log_path = logs_dir(workdir).join("npm-install.log");
    let log = File::create(&log_path)?;
    let status = Command::new("npm")
        .arg("install")
        .current_dir(workdir)
        .stdin(Stdio::null())
        .stdout(Stdio::from(log.try_clone()?))
        .stderr(Stdio::from(log))
        .status()
        .map_err(|source| DeployError::SpawnFailed { command: "npm install".into(), source })?;
    if !status.success() {
        let tail = std::fs::read_to_string(&log_path).unwrap_or_default();
        let tail: Vec<&str> = tail.lines().rev().take(20).collect();
        return Err(DeployError::InstallFailed {
            log_tail: tail.into_iter().rev().collect::<Vec<_>>().join("\n"),
        });
    }
    Ok(())
}

fn wait_ready(handle: &mut AppHandle, timeout: Duration) -> Result<(), DeployError> {
    let agent = ureq::AgentBuilder::new()
        .timeout_connect(Duration::from_millis(500))
        .timeout(Duration::from_secs(2))
        .build();
    let url = format!("{}/", handle.url());
    let deadline = Instant::now() + timeout;
    loop {
        if let Runtime::Process(group) = &mut handle.runtime {
            if let Some(status) = group.exit_status() {
                let log_tail = handle.log_tail(20);
                handle.stop();
                return Err(DeployError::CrashedOnStart { status, log_tail });
            }
        }
        match agent.get(&url).call() {
            Ok(_) => return Ok(()),
            Err(ureq::Error::Status(code, _)) if code < 500 => return Ok(()),
            Err(_) => {}
        }
        if Instant::now() >= deadline {
            let log_tail = handle.log_tail(20);
            handle.stop();
            return Err(DeployError::NotReady { timeout, log_tail });
        }
        std::thread::sleep(Duration::from_millis(500).min(deadline - Instant::now()));
    }
}

/// A child process that is the leader of its own session, so the whole
/// tree can be signalled via its process group.
struct ProcessGroup {
    pid: u32,
    child: Child,
}

impl ProcessGroup {
    fn spawn(workdir: &Path, argv: &[&str], port: u16) -> Result<ProcessGroup, DeployError> {
        let out = File::create(logs_dir(workdir).join("app.out.log"))?;
        let err = File::create(logs_dir(workdir).join("app.err.log"))?;
        let mut command = Command::new(argv[0]);
        command
            .args(&argv[1..])
            .current_dir(workdir)
            .env("PORT", port.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::from(out))
            .stderr(Stdio::from(err));
        unsafe {
            command.pre_exec(|| {
                if libc::setsid() == -1 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            });
        }
        let child = command.spawn().map_err(|source| DeployError::SpawnFailed {
            command: argv.join(" "),
            source,
        })?;
        Ok(ProcessGroup { pid: child.id(), child })
    }

    fn exit_status(&mut self) -> Option<i32> {
        match self.child.try_wait() {
            Ok(Some(status)) => Some(status.code().unwrap_or(-1)),
            _ => None,
        }
    }

    fn is_running(&mut self) -> bool {
        matches!(self.child.try_wait(), Ok(None))
    }

    fn signal_group(&self, signal: i32) {
        unsafe {
            libc::kill(-(self.pid as i32), signal);
        }
    }

    /// SIGTERM the group, give it five seconds, then SIGKILL stragglers.
    fn terminate(&mut self) {
        if self.is_running() {
            self.signal_group(libc::SIGTERM);
            let deadline = Instant::now() + Duration::from_secs(5);
            while self.is_running() && Instant::now() < deadline {
                std::thread::sleep(Duration::from_millis(100));
            }
        }
        // Sweep the whole group: grandchildren may have outlived (or
        // ignored the signal sent to) the leader.
        self.signal_group(libc::SIGKILL);
        let _ = self.child.wait();
    }
}

/// Serves a directory over HTTP on a background thread.
struct StaticServer {
    server: Arc<tiny_http::Server>,
    stopped: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl StaticServer {
    fn start(root: &Path, port: u16) -> Result<StaticServer, DeployError> {
        let root = root.canonicalize()?;
        let server = tiny_http::Server::http(("127.0.0.1", port))
            .map_err(|e| DeployError::SpawnFailed {
                command: format!("static server on port {port}"),
                source: std::io::Error::other(e.to_string()),
            })?;
        let server = Arc::new(server);
        let stopped = Arc::new(AtomicBool::new(false));
        let thread = {
            let server = Arc::clone(&server);
            let stopped = Arc::clone(&stopped);
            std::thread::spawn(move || {
                while !stopped.load(Ordering::SeqCst) {
                    let request = match server.recv() {
                        Ok(r) => r,
                        Err(_) => break,
                    };
                    serve_file(&root, request);
                }
            })
        };
        Ok(StaticServer { server, stopped, thread: Some(thread) })
    }

    fn shutdown(mut self) {
        self.stopped.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" | "htm" => "text/html; charset=utf-8",
        "css" => "text/css",
        "js" | "mjs" => "text/javascript",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

fn percent_decode(input: &str) -> String {
    let bytes = input.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(byte) = u8::from_str_radix(&input[i + 1..i + 3], 16) {
                out.push(byte);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn serve_file(root: &Path, request: tiny_http::Request) {
    let raw_path = request.url().split(['?', '#']).next().unwrap_or("/");
    let decoded = percent_decode(raw_path);
    let mut target = root.to_path_buf();
    for segment in decoded.split('/') {
        if segment.is_empty() || segment == "." {
            continue;
        }
        if segment == ".." {
            let _ = request.respond(
                tiny_http::Response::from_string("forbidden").with_status_code(403),
            );
            return;
        }
        target.push(segment);
    }
    if target.is_dir() {
        target.push("index.html");
    }
    let ok_header = tiny_http::Header::from_bytes(
        &b"Content-Type"[..],
        content_type(&target).as_bytes(),
    )
    .expect("header is ascii");
    match File::open(&target) {
        Ok(file) => {
            let _ = request.respond(tiny_http::Response::from_file(file).with_header(ok_header));
        }
        Err(_) => {
            let _ = request.respond(
                tiny_http::Response::from_string("not found").with_status_code(404),
            );
        }
    }
}
