//! Closed-loop TDD for agent-generated web apps: generate acceptance tests
//! from a requirement, drive a coding agent against them, and validate the
//! deployed result through browser interaction.
//!
//! Exit codes: 0 when everything passed, 1 when an evaluation ran and
//! something failed, 2 for usage or configuration errors.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tddloop_core::eval::{measure_coverage, render_report, BenchmarkCase, GroundTruthCheck};
use tddloop_core::fixtures::{self, Variant};
use tddloop_core::mcp::McpDeps;
use tddloop_core::model::OutcomeRecord;
use tddloop_core::testgen::{finish_review, generate_suite, write_suite_file};

use config::{load_file_config, resolve, Overrides, Settings};
use run::RunArgs;

#[derive(Parser)]
#[command(name = "tddloop", version, about = "Closed-loop TDD for agent-generated web apps")]
struct Cli {
    /// Config file (default: ./tddloop.toml or ./tddloop.json when present).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Gateway mode: live, record, or replay (the default).
    #[arg(long, global = true, value_name = "MODE")]
    mode: Option<String>,

    /// Cassette file for record/replay (a directory for benchmark runs).
    #[arg(long, global = true, value_name = "PATH")]
    cassette: Option<PathBuf>,

    /// Validation engine: builtin (the default) or a CDP ws:// endpoint.
    #[arg(long, global = true, value_name = "ENGINE")]
    engine: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive acceptance tests from a natural-language requirement.
    GenTests {
        /// The requirement text.
        instruction: Option<String>,
        /// Read the requirement from a file instead.
        #[arg(long, value_name = "PATH", conflicts_with = "instruction")]
        instruction_file: Option<PathBuf>,
        /// Where to write the suite file.
        #[arg(long, value_name = "PATH", default_value = "acceptance_tests.json")]
        out: PathBuf,
        /// Keep at most this many cases.
        #[arg(long, value_name = "N")]
        cap: Option<usize>,
        /// Approve the generated suite without the interactive review pause.
        #[arg(long)]
        yes: bool,
    },

    /// Run an enforcement protocol over an instruction, suite, or benchmark.
    Run {
        /// The requirement text (tests are generated inline; needs --yes).
        instruction: Option<String>,
        /// An approved suite file to run instead of generating one.
        #[arg(long, value_name = "PATH")]
        suite: Option<PathBuf>,
        /// A benchmark case file: every case runs as its own pipeline.
        #[arg(long, value_name = "PATH")]
        benchmark: Option<PathBuf>,
        /// Sample this many benchmark cases (deterministic, see --seed).
        #[arg(long, value_name = "N", requires = "benchmark")]
        sample: Option<usize>,
        /// Seed for benchmark sampling.
        #[arg(long, value_name = "SEED", default_value_t = 42)]
        seed: u64,
        /// incremental (default), whole, agentic, or none.
        #[arg(long, value_name = "NAME")]
        protocol: Option<String>,
        /// Deploy-test-repair attempts per scope.
        #[arg(long, value_name = "K")]
        budget: Option<u32>,
        /// Validation-agent iterations per test case.
        #[arg(long, value_name = "N")]
        max_iter: Option<u32>,
        /// Parallel pipelines for independent benchmark cases.
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
        /// Case cap for inline test generation.
        #[arg(long, value_name = "N")]
        cap: Option<usize>,
        /// Where to put the run directory (default: runs/<run-id>).
        #[arg(long, value_name = "PATH")]
        run_dir: Option<PathBuf>,
        /// Run id recorded in the outcome log (default: <protocol>-<unix>).
        #[arg(long, value_name = "ID")]
        run_id: Option<String>,
        /// Approve inline-generated tests without the review pause.
        #[arg(long)]
        yes: bool,
    },

    /// Summarize one or more run directories into a comparative table.
    Report {
        /// Run directories produced by `run`.
        #[arg(value_name = "RUN_DIR", required = true)]
        dirs: Vec<PathBuf>,
        /// Emit the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },

    /// Score a generated suite against ground-truth behavior checks.
    Coverage {
        /// The suite file to score.
        #[arg(long, value_name = "PATH")]
        suite: PathBuf,
        /// Ground truth: a JSON array of {task, expected} checks.
        #[arg(long, value_name = "PATH")]
        truth: PathBuf,
        /// Emit the result as JSON instead of a summary line.
        #[arg(long)]
        json: bool,
    },

    /// Inspect or deploy the bundled fixture applications.
    Fixtures {
        #[command(subcommand)]
        action: FixturesAction,
    },

    /// Serve the deploy/test tools over stdio JSON-RPC.
    McpServe {
        /// Directory the tools may read and write app sources under.
        #[arg(long, value_name = "PATH", default_value = ".")]
        workdir: PathBuf,
    },
}

#[derive(Subcommand)]
enum FixturesAction {
    /// One line per bundled app: variants and the planted defect.
    List,
    /// Materialize a fixture app and serve it until stdin closes.
    Serve {
        /// Fixture name from `fixtures list`.
        name: String,
        /// correct (the default) or broken.
        #[arg(long, default_value = "correct")]
        variant: String,
        /// Fixed port instead of an automatic one.
        #[arg(long)]
        port: Option<u16>,
        /// Materialize here instead of a temp directory.
        #[arg(long, value_name = "PATH")]
        dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether the command's evaluation passed; commands that do not
/// evaluate anything return true. Errors are usage or configuration
/// problems and exit 2.
fn dispatch(cli: Cli) -> Result<bool> {
    let file = load_file_config(cli.config.as_deref())?;
    let mut overrides = Overrides {
        mode: cli.mode,
        cassette: cli.cassette,
        engine: cli.engine,
        budget: None,
        max_iter: None,
        cap: None,
        jobs: None,
    };

    match cli.command {
        Command::GenTests { instruction, instruction_file, out, cap, yes } => {
            overrides.cap = cap;
            let settings = resolve(&file, &overrides)?;
            cmd_gen_tests(instruction, instruction_file, out, yes, &settings)
        }
        Command::Run {
            instruction,
            suite,
            benchmark,
            sample,
            seed,
            protocol,
            budget,
            max_iter,
            jobs,
            cap,
            run_dir,
            run_id,
            yes,
        } => {
            overrides.budget = budget;
            overrides.max_iter = max_iter;
            overrides.cap = cap;
            overrides.jobs = jobs;
            let settings = resolve(&file, &overrides)?;
            let protocol = protocol
                .or_else(|| file.protocol.clone())
                .unwrap_or_else(|| "incremental".to_string());
            let args = RunArgs {
                instruction,
                suite,
                benchmark,
                sample,
                seed,
                protocol,
                run_dir,
                run_id,
                yes,
            };
            run::cmd_run(args, &settings)
        }
        Command::Report { dirs, json } => cmd_report(&dirs, json),
        Command::Coverage { suite, truth, json } => {
            let settings = resolve(&file, &overrides)?;
            cmd_coverage(&suite, &truth, json, &settings)
        }
        Command::Fixtures { action } => match action {
            FixturesAction::List => cmd_fixtures_list(),
            FixturesAction::Serve { name, variant, port, dir } => {
                let settings = resolve(&file, &overrides)?;
                cmd_fixtures_serve(&name, &variant, port, dir, &settings)
            }
        },
        Command::McpServe { workdir } => {
            let settings = resolve(&file, &overrides)?;
            cmd_mcp_serve(&workdir, &settings)
        }
    }
}

fn cmd_gen_tests(
    instruction: Option<String>,
    instruction_file: Option<PathBuf>,
    out: PathBuf,
    yes: bool,
    settings: &Settings,
) -> Result<bool> {
    let instruction = match (instruction, instruction_file) {
        (Some(text), None) => text,
        (None, Some(path)) => std::fs::read_to_string(&path)
            .with_context(|| format!("instruction file {}", path.display()))?
            .trim()
            .to_string(),
        (None, None) => bail!("missing instruction (pass it as an argument or --instruction-file)"),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if instruction.is_empty() {
        bail!("the instruction is empty");
    }

    let gateway = settings.gateway()?;
    let artifact =
        generate_suite(&instruction, &gateway, settings.cap, &settings.generator_label())?;
    write_suite_file(&out, &artifact)?;
    let approved = if yes {
        artifact
    } else {
        eprintln!(
            "Review the acceptance tests in {} (edit the file if needed), then press enter \
             to continue.",
            out.display()
        );
        let mut line = String::new();
        std::io::stdin().read_line(&mut line)?;
        let approved = finish_review(artifact, &out)?;
        // Ids are recomputed from edited content; keep the file in step.
        write_suite_file(&out, &approved)?;
        approved
    };

    for case in &approved.suite.cases {
        println!("- {}", case.feature);
    }
    println!("wrote {} acceptance tests to {}", approved.suite.cases.len(), out.display());
    Ok(true)
}

fn cmd_report(dirs: &[PathBuf], json: bool) -> Result<bool> {
    let mut records: Vec<OutcomeRecord> = Vec::new();
    for dir in dirs {
        records.extend(run::read_outcome_log(dir)?);
    }
    let report = render_report(&records)?;
    if json {
        print!("{}", report.to_json());
    } else {
        print!("{}", report.render_text());
    }
    Ok(true)
}

fn cmd_coverage(suite: &PathBuf, truth: &PathBuf, json: bool, settings: &Settings) -> Result<bool> {
    let suite = run::load_suite(suite)?;
    let checks = load_truth(truth)?;
    let gateway = settings.gateway()?;
    let result = measure_coverage(&suite, &checks, &gateway)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&result)?);
    } else {
        println!(
            "coverage: {:.1}% ({}/{} checks matched; {} cases generated)",
            result.percent, result.matched, result.ground_truth, result.generated
        );
    }
    Ok(true)
}

/// Accepts a bare array of checks or a benchmark case carrying them.
fn load_truth(path: &PathBuf) -> Result<Vec<GroundTruthCheck>> {
    let bytes =
        std::fs::read(path).with_context(|| format!("truth file {}", path.display()))?;
    serde_json::from_slice::<Vec<GroundTruthCheck>>(&bytes)
        .or_else(|_| serde_json::from_slice::<BenchmarkCase>(&bytes).map(|case| case.checks))
        .with_context(|| format!("truth file {}: expected [{{task, expected}}]", path.display()))
}

fn cmd_fixtures_list() -> Result<bool> {
    for app in fixtures::all() {
        match &app.broken {
            Some(broken) => println!(
                "{:<10} correct,broken  [{}] {} — {}",
                app.name, broken.class, broken.defect, app.summary
            ),
            None => println!("{:<10} correct         {}", app.name, app.summary),
        }
    }
    Ok(true)
}

fn cmd_fixtures_serve(
    name: &str,
    variant: &str,
    port: Option<u16>,
    dir: Option<PathBuf>,
    settings: &Settings,
) -> Result<bool> {
    let app = fixtures::find(name)
        .ok_or_else(|| anyhow::anyhow!("unknown fixture {name:?} (see `fixtures list`)"))?;
    let variant = Variant::parse(variant)
        .ok_or_else(|| anyhow::anyhow!("unknown variant {variant:?} (correct or broken)"))?;
    if variant == Variant::Broken && app.broken.is_none() {
        bail!("fixture {name} has no broken variant");
    }

    let target = dir.unwrap_or_else(|| {
        std::env::temp_dir().join(format!("tddloop-{name}-{variant}-{}", std::process::id()))
    });
    std::fs::create_dir_all(&target)?;
    app.materialize(variant, &target)?;

    let mut options = settings.deploy.clone();
    if port.is_some() {
        options.port = port;
    }
    let mut handle = tddloop_core::deploy::deploy(&target, &options)?;
    println!("{}", handle.url());
    eprintln!(
        "serving {name} ({variant}) from {} — press enter (or close stdin) to stop",
        target.display()
    );
    let mut line = String::new();
    std::io::stdin().read_line(&mut line)?;
    handle.stop();
    Ok(true)
}

fn cmd_mcp_serve(workdir: &PathBuf, settings: &Settings) -> Result<bool> {
    let workdir = workdir
        .canonicalize()
        .with_context(|| format!("workdir {}", workdir.display()))?;
    let deps = McpDeps {
        gateway: Arc::new(settings.gateway()?),
        engine: settings.engine.clone(),
        validate: settings.validate.clone(),
        deploy: settings.deploy.clone(),
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    tddloop_core::mcp::serve(stdin.lock(), stdout.lock(), &workdir, &deps)?;
    Ok(true)
}
