//! The `run` command: execute one enforcement protocol over an instruction
//! or a prebuilt suite — or a whole benchmark of independent cases — and
//! leave a self-describing run directory behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tddloop_core::eval::{parse_benchmark, render_report, sample_benchmark, BenchmarkCase};
use tddloop_core::model::{to_canonical_json, OutcomeRecord, ProtocolKind, TestSuite, Verdict};
use tddloop_core::protocols::{
    run_agentic, run_baseline, run_incremental, run_whole_project, ProtocolDeps, ProtocolRun,
    OUTCOME_LOG_NAME, RUN_STATE_DIR,
};
use tddloop_core::testgen::{generate_suite, review_gate, ReviewMode, SUITE_FILE_NAME};
use tddloop_core::validate::persist_results;

use crate::config::Settings;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// The stable contract between a run directory and `report`: everything a
/// reader needs to interpret the artifacts next to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: String,
    pub run_id: String,
    pub protocol: String,
    pub mode: String,
    pub instruction: String,
    pub budget: u32,
    pub max_iterations: u32,
    pub created_unix: u64,
    /// Absent until the run finishes; rewritten in place afterwards.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all_pass: Option<bool>,
    /// Benchmark runs only: the sampled case ids, in execution order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<String>,
    /// Incremental runs only: admitted case ids in admission order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub admitted: Vec<String>,
}

pub struct RunArgs {
    pub instruction: Option<String>,
    pub suite: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub sample: Option<usize>,
    pub seed: u64,
    pub protocol: String,
    pub run_dir: Option<PathBuf>,
    pub run_id: Option<String>,
    pub yes: bool,
}

pub fn cmd_run(args: RunArgs, settings: &Settings) -> Result<bool> {
    let protocol = ProtocolKind::parse(&args.protocol)
        .ok_or_else(|| anyhow::anyhow!("unknown protocol {:?}", args.protocol))?;
    if args.benchmark.is_some() && (args.instruction.is_some() || args.suite.is_some()) {
        bail!("--benchmark cannot be combined with an instruction or --suite");
    }
    if args.instruction.is_some() && args.suite.is_some() {
        bail!("give either an instruction or --suite, not both");
    }

    let run_id = args.run_id.unwrap_or_else(|| format!("{protocol}-{}", unix_now()));
    let run_dir = args.run_dir.unwrap_or_else(|| PathBuf::from("runs").join(&run_id));

    match args.benchmark {
        Some(path) => run_benchmark(
            &path,
            args.sample,
            args.seed,
            protocol,
            &run_dir,
            &run_id,
            args.yes,
            settings,
        ),
        None => {
            let spec = SingleRun {
                instruction: args.instruction,
                suite_path: args.suite,
                protocol,
                run_dir,
                run_id,
                yes: args.yes,
                cassette: settings.cassette.clone(),
                quiet: false,
            };
            run_single(&spec, settings)
        }
    }
}

/// One full pipeline: resolve the suite, run the protocol, persist the run
/// directory. Returns whether the run ended with everything passing.
struct SingleRun {
    instruction: Option<String>,
    suite_path: Option<PathBuf>,
    protocol: ProtocolKind,
    run_dir: PathBuf,
    run_id: String,
    yes: bool,
    cassette: Option<PathBuf>,
    quiet: bool,
}

fn run_single(spec: &SingleRun, settings: &Settings) -> Result<bool> {
    fs::create_dir_all(&spec.run_dir)
        .with_context(|| format!("create run dir {}", spec.run_dir.display()))?;
    let app_dir = spec.run_dir.join("app");
    fs::create_dir_all(&app_dir)?;
    let gateway = Arc::new(settings.gateway_with_cassette(spec.cassette.as_deref())?);

    let (suite, instruction) = match (&spec.suite_path, &spec.instruction) {
        (Some(path), None) => {
            let suite = load_suite(path)?;
            // Preserve the approved suite verbatim inside the run directory.
            fs::copy(path, spec.run_dir.join(SUITE_FILE_NAME))
                .with_context(|| format!("copy suite {}", path.display()))?;
            let instruction = suite.source_instruction.clone();
            (suite, instruction)
        }
        (None, Some(instruction)) => {
            if !spec.yes {
                bail!("inline test generation needs --yes (or pass an approved --suite)");
            }
            let artifact =
                generate_suite(instruction, &gateway, settings.cap, &settings.generator_label())?;
            let approved = review_gate(artifact, ReviewMode::Auto, &spec.run_dir)?;
            (approved.suite, instruction.clone())
        }
        _ => bail!("nothing to run: give an instruction, --suite, or --benchmark"),
    };

    let mut manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        kind: "single".to_string(),
        run_id: spec.run_id.clone(),
        protocol: spec.protocol.to_string(),
        mode: mode_name(settings),
        instruction: instruction.clone(),
        budget: settings.budget,
        max_iterations: settings.validate.max_iterations,
        created_unix: unix_now(),
        all_pass: None,
        cases: Vec::new(),
        admitted: Vec::new(),
    };
    write_manifest(&spec.run_dir, &manifest)?;

    // The agentic condition's run_tests tool reads the suite from the app
    // workdir; the other protocols never let the agent see the tests.
    if spec.protocol == ProtocolKind::Agentic {
        fs::write(app_dir.join(SUITE_FILE_NAME), to_canonical_json(&suite))?;
    }

    let deps = ProtocolDeps {
        workdir: app_dir,
        gateway,
        engine: settings.engine.clone(),
        validate: settings.validate.clone(),
        deploy: settings.deploy.clone(),
        run_id: spec.run_id.clone(),
    };
    let run = match spec.protocol {
        ProtocolKind::Incremental => run_incremental(&instruction, &suite, settings.budget, &deps),
        ProtocolKind::WholeProject => {
            run_whole_project(&instruction, &suite, settings.budget, &deps)
        }
        ProtocolKind::Agentic => run_agentic(&instruction, &suite, &deps),
        ProtocolKind::None => run_baseline(&instruction, &suite, &deps),
    }?;

    persist_run(&spec.run_dir, &run)?;
    manifest.all_pass = Some(run.all_pass);
    manifest.admitted = run.regression_suite.clone();
    write_manifest(&spec.run_dir, &manifest)?;

    if !spec.quiet {
        print!("{}", summarize(&run, &suite));
        println!("artifacts: {}", spec.run_dir.display());
    }
    Ok(run.all_pass)
}

/// Copies the protocol's artifacts up to the run directory root so readers
/// never have to know where the workdir kept its state.
fn persist_run(run_dir: &Path, run: &ProtocolRun) -> Result<()> {
    let log = run.workdir.join(RUN_STATE_DIR).join(OUTCOME_LOG_NAME);
    if log.exists() {
        fs::copy(&log, run_dir.join(OUTCOME_LOG_NAME))?;
    } else {
        let mut text = String::new();
        for record in &run.outcomes {
            text.push_str(&to_canonical_json(record));
            text.push('\n');
        }
        fs::write(run_dir.join(OUTCOME_LOG_NAME), text)?;
    }

    persist_results(&run.final_report, &run_dir.join("results"))?;

    let transcripts = run_dir.join("transcripts");
    fs::create_dir_all(&transcripts)?;
    for (index, transcript) in run.transcripts.iter().enumerate() {
        let mut text = serde_json::to_string_pretty(transcript)?;
        text.push('\n');
        fs::write(transcripts.join(format!("agent-{index:02}.json")), text)?;
    }

    let mut report = to_canonical_json(&run.final_report);
    report.push('\n');
    fs::write(run_dir.join("report.json"), report)?;
    Ok(())
}

fn summarize(run: &ProtocolRun, suite: &TestSuite) -> String {
    let mut out = String::new();
    for result in &run.final_report.results {
        let feature = suite
            .cases
            .iter()
            .find(|case| case.id == result.case_id)
            .map(|case| case.feature.as_str())
            .unwrap_or(result.case_id.as_str());
        out.push_str(&format!("[{}] {}\n", result.verdict, feature));
    }
    let passed =
        run.final_report.results.iter().filter(|r| r.verdict == Verdict::Pass).count();
    out.push_str(&format!(
        "{passed}/{} tests passed ({} deploy-test cycles)\n",
        run.final_report.results.len(),
        run.outcomes.len(),
    ));
    if run.condition == ProtocolKind::Incremental {
        out.push_str(&format!("admitted: {}\n", run.regression_suite.join(", ")));
    }
    out
}

/// Loads a suite file: the reviewed artifact layout, or a plain serialized
/// suite. Case ids are recomputed so hand edits cannot leave stale ids.
pub fn load_suite(path: &Path) -> Result<TestSuite> {
    let bytes =
        fs::read(path).with_context(|| format!("read suite {}", path.display()))?;
    let (cases, instruction) = match tddloop_core::testgen::read_suite_file(path) {
        Ok(file) => {
            (file.cases.into_iter().map(|c| c.case).collect::<Vec<_>>(), file.source_instruction)
        }
        Err(_) => {
            let suite: TestSuite = serde_json::from_slice(&bytes)
                .with_context(|| format!("parse suite {}", path.display()))?;
            (suite.cases, suite.source_instruction)
        }
    };
    let mut revalidated = Vec::with_capacity(cases.len());
    for case in cases {
        revalidated.push(case.revalidate().with_context(|| format!("suite {}", path.display()))?);
    }
    Ok(TestSuite::new(revalidated, instruction)?)
}

#[allow(clippy::too_many_arguments)]
fn run_benchmark(
    path: &Path,
    sample: Option<usize>,
    seed: u64,
    protocol: ProtocolKind,
    run_dir: &Path,
    run_id: &str,
    yes: bool,
    settings: &Settings,
) -> Result<bool> {
    let cases = match sample {
        Some(n) => sample_benchmark(path, n, seed)?,
        None => {
            let bytes =
                fs::read(path).with_context(|| format!("read benchmark {}", path.display()))?;
            parse_benchmark(&bytes)?
        }
    };
    if cases.is_empty() {
        bail!("benchmark {} has no cases", path.display());
    }
    fs::create_dir_all(run_dir)?;
    if let Some(dir) = &settings.cassette {
        fs::create_dir_all(dir)
            .with_context(|| format!("cassette directory {}", dir.display()))?;
    }

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        kind: "benchmark".to_string(),
        run_id: run_id.to_string(),
        protocol: protocol.to_string(),
        mode: mode_name(settings),
        instruction: format!("benchmark: {}", path.display()),
        budget: settings.budget,
        max_iterations: settings.validate.max_iterations,
        created_unix: unix_now(),
        all_pass: None,
        cases: cases.iter().map(|c| c.id.clone()).collect(),
        admitted: Vec::new(),
    };
    write_manifest(run_dir, &manifest)?;

    let outcomes = run_cases(&cases, protocol, run_dir, yes, settings)?;

    let mut merged: Vec<OutcomeRecord> = Vec::new();
    let mut all_pass = true;
    for (case, passed) in cases.iter().zip(&outcomes) {
        println!("case {}: {}", case.id, if *passed { "pass" } else { "fail" });
        all_pass &= passed;
        merged.extend(read_outcome_log(&run_dir.join("cases").join(&case.id))?);
    }
    let mut text = String::new();
    for record in &merged {
        text.push_str(&to_canonical_json(record));
        text.push('\n');
    }
    fs::write(run_dir.join(OUTCOME_LOG_NAME), text)?;

    let mut finished = manifest;
    finished.all_pass = Some(all_pass);
    write_manifest(run_dir, &finished)?;

    print!("{}", render_report(&merged)?.render_text());
    Ok(all_pass)
}

/// Runs every case through its own pipeline, `jobs` at a time. Each case
/// gets an isolated run directory and (when recording or replaying) its own
/// cassette file under the cassette directory.
fn run_cases(
    cases: &[BenchmarkCase],
    protocol: ProtocolKind,
    run_dir: &Path,
    yes: bool,
    settings: &Settings,
) -> Result<Vec<bool>> {
    let next = AtomicUsize::new(0);
    let outcomes: Mutex<Vec<Option<Result<bool>>>> =
        Mutex::new((0..cases.len()).map(|_| None).collect());
    let workers = settings.jobs.min(cases.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                let Some(case) = cases.get(index) else { break };
                let spec = SingleRun {
                    instruction: Some(case.instruction.clone()),
                    suite_path: None,
                    protocol,
                    run_dir: run_dir.join("cases").join(&case.id),
                    run_id: case.id.clone(),
                    yes,
                    cassette: settings
                        .cassette
                        .as_ref()
                        .map(|dir| dir.join(format!("{}.jsonl", case.id))),
                    quiet: true,
                };
                let result = run_single(&spec, settings);
                outcomes.lock().expect("no poisoned lock")[index] = Some(result);
            });
        }
    });
    let collected = outcomes.into_inner().expect("no poisoned lock");
    collected
        .into_iter()
        .enumerate()
        .map(|(i, slot)| {
            slot.unwrap_or_else(|| bail!("case {} was never run", cases[i].id))
                .with_context(|| format!("case {}", cases[i].id))
        })
        .collect()
}

/// Reads a run directory's outcome log, wherever this version kept it.
pub fn read_outcome_log(run_dir: &Path) -> Result<Vec<OutcomeRecord>> {
    let candidates = [
        run_dir.join(OUTCOME_LOG_NAME),
        run_dir.join("app").join(RUN_STATE_DIR).join(OUTCOME_LOG_NAME),
    ];
    let Some(path) = candidates.iter().find(|p| p.exists()) else {
        bail!("{} has no {}", run_dir.display(), OUTCOME_LOG_NAME);
    };
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (number, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: OutcomeRecord = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), number + 1))?;
        records.push(record);
    }
    Ok(records)
}

fn write_manifest(run_dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(run_dir.join(MANIFEST_NAME), text)?;
    Ok(())
}

fn mode_name(settings: &Settings) -> String {
    use tddloop_core::gateway::GatewayMode;
    match settings.mode {
        GatewayMode::Live => "live",
        GatewayMode::Record => "record",
        GatewayMode::ReplayStrict => "replay",
    }
    .to_string()
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}
