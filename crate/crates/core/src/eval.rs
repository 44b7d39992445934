//! Run metrics: accuracy-at-k over outcome logs, generated-suite coverage
//! against ground-truth checks, fixture verdict accuracy, token economics,
//! fixed-seed benchmark sampling, and the rendered run report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError, Message};
use crate::model::{best_verdict_within, OutcomeRecord, ProtocolKind, TestSuite, Verdict};
use crate::testgen::{parse_object, reply_text};

pub const COVERAGE_SYSTEM_PROMPT: &str = include_str!("prompts/coverage_system.txt");

/// Report schema version, bumped on any breaking change to the JSON shape.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// The pinned sampling recipe, quoted in report headers: a seed alone only
/// reproduces a sample if the generator is fixed too.
pub const SAMPLING_NOTE: &str = "sampling: ChaCha20 keyed with seed (LE bytes) \
     followed by the corpus file's SHA-256, partial Fisher-Yates over case order";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty verdict matrix")]
    EmptyMatrix,
    #[error("case {0} has no attempts")]
    NoAttempts(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no ground-truth checks to cover")]
    EmptyTruth,
    #[error("empty fixture corpus")]
    EmptyCorpus,
    #[error("fixture ids and results do not line up; unmatched: {}", .0.join(", "))]
    FixtureMismatch(Vec<String>),
    #[error("fixture {id} has ground truth {verdict}; must be pass or fail")]
    BadGroundTruth { id: String, verdict: Verdict },
    #[error("sample of {wanted} exceeds the corpus size {have}")]
    SampleTooLarge { wanted: usize, have: usize },
    #[error("malformed benchmark file: {0}")]
    BadBenchmark(String),
    #[error("no outcome records to report on")]
    NoRecords,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("benchmark io: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-case verdict history across attempts, aligned to a common attempt
/// count. A shorter history inherits its last verdict for the remaining
/// attempts: a case stops being re-run precisely because its result stood
/// (the run exited early on all-pass, or the case was admitted late), so the
/// last observation is the correct value for every later k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictMatrix {
    rows: BTreeMap<String, Vec<Verdict>>,
    attempts: usize,
}

impl VerdictMatrix {
    pub fn new(mut rows: BTreeMap<String, Vec<Verdict>>) -> Result<Self, EvalError> {
        if rows.is_empty() {
            return Err(EvalError::EmptyMatrix);
        }
        if let Some(id) = rows.iter().find(|(_, history)| history.is_empty()).map(|(id, _)| id) {
            return Err(EvalError::NoAttempts(id.clone()));
        }
        let attempts = rows.values().map(Vec::len).max().expect("non-empty map");
        for history in rows.values_mut() {
            let last = *history.last().expect("checked non-empty");
            history.resize(attempts, last);
        }
        Ok(VerdictMatrix { rows, attempts })
    }

    /// Collects verdicts out of outcome logs: each appearance of a case in a
    /// record, in log order, is its next attempt.
    pub fn from_outcomes<'a>(
        records: impl IntoIterator<Item = &'a OutcomeRecord>,
    ) -> Result<Self, EvalError> {
        let mut rows: BTreeMap<String, Vec<Verdict>> = BTreeMap::new();
        for record in records {
            for entry in &record.verdicts {
                rows.entry(entry.case_id.clone()).or_default().push(entry.verdict);
            }
        }
        Self::new(rows)
    }

    pub fn attempts(&self) -> usize {
        self.attempts
    }

    pub fn case_count(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &BTreeMap<String, Vec<Verdict>> {
        &self.rows
    }
}

/// Accuracy at k: every case takes its best verdict within its first k
/// attempts; passes score 1, partials 0.5, fails 0. Returned as an exact
/// percent — rounding happens at render time.
pub fn acc_at_k(matrix: &VerdictMatrix, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let mut score = 0.0;
    for history in matrix.rows.values() {
        let best = best_verdict_within(history, k).expect("matrix rows are non-empty");
        score += match best {
            Verdict::Pass => 1.0,
            Verdict::Partial => 0.5,
            Verdict::Fail => 0.0,
        };
    }
    Ok(score / matrix.rows.len() as f64 * 100.0)
}

/// Round half-up to one decimal, the precision of every rendered percent.
pub fn round1(value: f64) -> f64 {
    (value * 10.0).round() / 10.0
}

/// One required behavior from a benchmark case: a user-facing task and the
/// outcome that must be visible afterwards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthCheck {
    pub task: String,
    #[serde(alias = "expected_outcome")]
    pub expected: String,
}

/// A benchmark entry: the instruction handed to the system under test plus
/// the ground-truth checks used to score generated suites. Accepts the
/// upstream field name `ui_instruct` for the checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub id: String,
    pub instruction: String,
    #[serde(default, alias = "ui_instruct")]
    pub checks: Vec<GroundTruthCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub ground_truth: usize,
    pub generated: usize,
    pub matched: usize,
    /// matched / ground_truth × 100, rounded half-up to one decimal.
    pub percent: f64,
}

/// Scores a generated suite against ground-truth checks with one model
/// judgment per check: does at least one generated case exercise the task and
/// verify the outcome? Semantic matching tolerates paraphrase, so the judge is
/// a model call (replayable through the gateway), not string comparison. A
/// judgment that stays malformed after one reformat retry counts the check as
/// unmatched — unresolved never inflates coverage.
pub fn measure_coverage(
    generated: &TestSuite,
    truth: &[GroundTruthCheck],
    gateway: &Gateway,
) -> Result<CoverageResult, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyTruth);
    }
    let rendered = render_suite_for_matching(generated);
    let mut matched = 0usize;
    for check in truth {
        let prompt = format!(
            "Required behavior:\ntask: {}\nexpected: {}\n\n{rendered}",
            check.task, check.expected
        );
        match judge_covered(gateway, prompt)? {
            Some(true) => matched += 1,
            Some(false) => {}
            None => log::warn!(
                "coverage judgment for task {:?} stayed malformed; counting it as unmatched",
                check.task
            ),
        }
    }
    Ok(CoverageResult {
        ground_truth: truth.len(),
        generated: generated.cases.len(),
        matched,
        percent: round1(matched as f64 / truth.len() as f64 * 100.0),
    })
}

/// One judgment with a single reformat retry. None means the reply never
/// parsed; the caller decides what unresolved costs.
fn judge_covered(gateway: &Gateway, prompt: String) -> Result<Option<bool>, EvalError> {
    #[derive(Deserialize)]
    struct Judgment {
        covered: bool,
    }
    let parse = |text: &str| parse_object::<Judgment>(text).map(|j| j.covered);
    let mut messages = vec![Message::system(COVERAGE_SYSTEM_PROMPT), Message::user(prompt)];
    let reply = reply_text(&gateway.complete(&ChatRequest::new(messages.clone()))?);
    if let Ok(covered) = parse(&reply) {
        return Ok(Some(covered));
    }
    messages.push(Message::assistant(reply));
    messages.push(Message::user(
        "Reformat your answer as exactly {\"covered\": true} or {\"covered\": false}.",
    ));
    let reply = reply_text(&gateway.complete(&ChatRequest::new(messages))?);
    Ok(parse(&reply).ok())
}

fn render_suite_for_matching(suite: &TestSuite) -> String {
    let mut out = String::from("Generated test cases:\n");
    for (index, case) in suite.cases.iter().enumerate() {
        out.push_str(&format!(
            "{}. {}\n   steps: {}\n   expected: {}\n",
            index + 1,
            case.feature,
            case.steps.join(" -> "),
            case.expected
        ));
    }
    out
}

/// Agreement between validation verdicts and a fixture corpus whose apps have
/// known ground truth: correct variants must pass, broken variants must not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictAccuracy {
    /// Percent of all fixtures where the verdict agrees with ground truth.
    pub overall: f64,
    /// Percent of correct variants judged pass.
    pub correct_variant: f64,
    /// Percent of broken variants judged non-pass.
    pub broken_variant: f64,
    /// Broken variants judged pass — the verdict error that silently ships a bug.
    pub false_positives: usize,
    /// Correct variants judged partial or fail.
    pub false_negatives: usize,
}

/// `truth` maps fixture id to its ground-truth verdict (pass for the correct
/// variant, fail for the broken one); `observed` maps the same ids to the
/// verdicts the validation run produced.
pub fn fixture_verdict_accuracy(
    truth: &BTreeMap<String, Verdict>,
    observed: &BTreeMap<String, Verdict>,
) -> Result<VerdictAccuracy, EvalError> {
    let unmatched: Vec<String> = truth
        .keys()
        .filter(|id| !observed.contains_key(*id))
        .chain(observed.keys().filter(|id| !truth.contains_key(*id)))
        .cloned()
        .collect();
    if !unmatched.is_empty() {
        return Err(EvalError::FixtureMismatch(unmatched));
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut correct_total = 0usize;
    let mut broken_total = 0usize;
    let mut false_positives = 0usize;
    let mut false_negatives = 0usize;
    for (id, expected) in truth {
        let got = observed[id];
        match expected {
            Verdict::Pass => {
                correct_total += 1;
                if got != Verdict::Pass {
                    false_negatives += 1;
                }
            }
            Verdict::Fail => {
                broken_total += 1;
                if got == Verdict::Pass {
                    false_positives += 1;
                }
            }
            Verdict::Partial => {
                return Err(EvalError::BadGroundTruth { id: id.clone(), verdict: *expected })
            }
        }
    }
    let percent = |agree: usize, total: usize| {
        if total == 0 {
            100.0
        } else {
            round1(agree as f64 / total as f64 * 100.0)
        }
    };
    Ok(VerdictAccuracy {
        overall: percent(
            (correct_total - false_negatives) + (broken_total - false_positives),
            correct_total + broken_total,
        ),
        correct_variant: percent(correct_total - false_negatives, correct_total),
        broken_variant: percent(broken_total - false_positives, broken_total),
        false_positives,
        false_negatives,
    })
}

/// Marginal token cost per percentage point of accuracy gained over the
/// baseline, in thousands of tokens. None when nothing was gained — a ratio
/// over a zero or negative gain is meaningless and renders as "—".
pub fn tokens_per_pp(condition_tokens: u64, baseline_tokens: u64, delta_pp: f64) -> Option<f64> {
    if delta_pp <= 0.0 {
        return None;
    }
    let diff = condition_tokens as i128 - baseline_tokens as i128;
    Some(diff as f64 / 1000.0 / delta_pp)
}

/// Parses a benchmark corpus: either a bare JSON array of cases or an object
/// with a top-level `cases` array. Ids must be unique and instructions
/// non-empty.
pub fn parse_benchmark(bytes: &[u8]) -> Result<Vec<BenchmarkCase>, EvalError> {
    #[derive(Deserialize)]
    struct Wrapper {
        cases: Vec<BenchmarkCase>,
    }
    let cases = match serde_json::from_slice::<Vec<BenchmarkCase>>(bytes) {
        Ok(cases) => cases,
        Err(as_array) => serde_json::from_slice::<Wrapper>(bytes)
            .map(|w| w.cases)
            .map_err(|_| EvalError::BadBenchmark(as_array.to_string()))?,
    };
    if cases.is_empty() {
        return Err(EvalError::BadBenchmark("no cases".into()));
    }
    let mut seen = BTreeSet::new();
    for case in &cases {
        if case.id.trim().is_empty() {
            return Err(EvalError::BadBenchmark("case with an empty id".into()));
        }
        if case.instruction.trim().is_empty() {
            return Err(EvalError::BadBenchmark(format!(
                "case {} has an empty instruction",
                case.id
            )));
        }
        if !seen.insert(case.id.clone()) {
            return Err(EvalError::BadBenchmark(format!("duplicate case id {}", case.id)));
        }
    }
    Ok(cases)
}

/// Draws `n` cases with a pinned, portable PRNG: the key mixes the seed with
/// the corpus file's digest, so the same (file bytes, n, seed) triple selects
/// the same ids on every platform and a changed corpus never silently reuses
/// an old sample. The recipe is quoted in `SAMPLING_NOTE` and report headers.
pub fn sample_benchmark(path: &Path, n: usize, seed: u64) -> Result<Vec<BenchmarkCase>, EvalError> {
    let bytes = std::fs::read(path)?;
    let cases = parse_benchmark(&bytes)?;
    if n > cases.len() {
        return Err(EvalError::SampleTooLarge { wanted: n, have: cases.len() });
    }
    let digest = Sha256::digest(&bytes);
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..].copy_from_slice(&digest[..24]);
    let mut rng = ChaCha20Rng::from_seed(key);
    let mut order: Vec<usize> = (0..cases.len()).collect();
    for slot in 0..n {
        let pick = slot + rng.gen_range(0..order.len() - slot);
        order.swap(slot, pick);
    }
    Ok(order[..n].iter().map(|&index| cases[index].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: ProtocolKind,
    pub cases: usize,
    /// acc@k for k = 1..=max_k, rounded to one decimal.
    pub acc_at: Vec<f64>,
    pub total_tokens: u64,
    /// Thousands of tokens per percentage point gained over the baseline
    /// condition at max k, rounded to one decimal. None renders as "—".
    pub tokens_per_pp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub sampling: String,
    pub max_k: usize,
    pub conditions: Vec<ConditionSummary>,
    pub footnotes: Vec<String>,
}

/// Summarizes outcome logs into the per-condition accuracy/cost table. Token
/// totals sum the final cumulative usage of each run id; cost per point is
/// measured against the `none` condition (the baseline) at the largest k
/// present. Without a baseline in the logs the column is omitted with a note.
pub fn render_report(records: &[OutcomeRecord]) -> Result<RunReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let presentation = [
        ProtocolKind::Incremental,
        ProtocolKind::WholeProject,
        ProtocolKind::Agentic,
        ProtocolKind::None,
    ];
    let mut grouped: Vec<(ProtocolKind, Vec<&OutcomeRecord>)> = Vec::new();
    for kind in presentation {
        let slice: Vec<&OutcomeRecord> =
            records.iter().filter(|record| record.condition == kind).collect();
        if !slice.is_empty() {
            grouped.push((kind, slice));
        }
    }

    let mut matrices = Vec::new();
    for (kind, slice) in &grouped {
        matrices.push((*kind, VerdictMatrix::from_outcomes(slice.iter().copied())?));
    }
    let max_k = matrices.iter().map(|(_, m)| m.attempts()).max().expect("non-empty");

    let total_tokens = |slice: &[&OutcomeRecord]| -> u64 {
        let mut per_run: BTreeMap<&str, u64> = BTreeMap::new();
        for record in slice {
            let total = record.cumulative_usage.total();
            let entry = per_run.entry(record.run_id.as_str()).or_insert(0);
            *entry = (*entry).max(total);
        }
        per_run.values().sum()
    };

    let baseline = matrices.iter().position(|(kind, _)| *kind == ProtocolKind::None);
    let baseline_stats = baseline.map(|index| {
        let (_, matrix) = &matrices[index];
        let tokens = total_tokens(&grouped[index].1);
        let acc = acc_at_k(matrix, max_k).expect("max_k >= 1");
        (tokens, acc)
    });

    let mut conditions = Vec::new();
    for (index, (kind, matrix)) in matrices.iter().enumerate() {
        let tokens = total_tokens(&grouped[index].1);
        let acc_at: Vec<f64> = (1..=max_k)
            .map(|k| round1(acc_at_k(matrix, k).expect("k >= 1")))
            .collect();
        let cost = match (baseline_stats, *kind) {
            (_, ProtocolKind::None) | (None, _) => None,
            (Some((baseline_tokens, baseline_acc)), _) => {
                let gain = acc_at_k(matrix, max_k).expect("max_k >= 1") - baseline_acc;
                tokens_per_pp(tokens, baseline_tokens, gain).map(round1)
            }
        };
        conditions.push(ConditionSummary {
            condition: *kind,
            cases: matrix.case_count(),
            acc_at,
            total_tokens: tokens,
            tokens_per_pp: cost,
        });
    }

    let mut footnotes = vec![format!(
        "tokens/pp is marginal: (condition tokens - baseline tokens) / accuracy points gained \
         at k={max_k}, in thousands; a zero or negative gain renders as \"—\". Cost per point \
         is sometimes quoted as total tokens / points instead; this report never does."
    )];
    if baseline_stats.is_none() {
        footnotes.push("no baseline (none) condition in the logs; tokens/pp is omitted".into());
    }

    Ok(RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        sampling: SAMPLING_NOTE.into(),
        max_k,
        conditions,
        footnotes,
    })
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes infallibly");
        out.push('\n');
        out
    }

    /// Fixed-width table for terminals; one row per condition, one acc column
    /// per k.
    pub fn render_text(&self) -> String {
        let mut out = format!("run report (schema v{})\n{}\n\n", self.schema_version, self.sampling);
        out.push_str(&format!("{:<14} {:>5}", "condition", "cases"));
        for k in 1..=self.max_k {
            out.push_str(&format!(" {:>7}", format!("acc@{k}")));
        }
        out.push_str(&format!(" {:>12} {:>9}\n", "tokens", "ktok/pp"));
        for summary in &self.conditions {
            out.push_str(&format!("{:<14} {:>5}", summary.condition.to_string(), summary.cases));
            for acc in &summary.acc_at {
                out.push_str(&format!(" {:>7}", format!("{acc:.1}")));
            }
            let cost = match summary.tokens_per_pp {
                Some(value) => format!("{value:.1}"),
                None => "—".to_string(),
            };
            out.push_str(&format!(" {:>12} {:>9}\n", summary.total_tokens, cost));
        }
        out.push_str("\nnotes:\n");
        for note in &self.footnotes {
            out.push_str(&format!("  - {note}\n"));
        }
        out
    }
}
