//! pass@1 harness: each benchmark question is answered once by the full
//! pipeline and scored by string match on the required API literals.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use jarvis_core::agents::{refine, transcript_jsonl, RunConfig, Toolbox};
use jarvis_core::api_graph::ApiGraph;
use jarvis_core::llm::{Clock, LlmClient, StepClock, SystemClock};
use jarvis_core::retrieval::HybridIndex;
use jarvis_core::rules::RuleStore;
use serde::{Deserialize, Serialize};

pub const CAVEAT: &str = "Medium and hard cases are scored by required-API string match only; judging whether they answer the question needs human review.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Easy,
    Medium,
    Hard,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Easy, Tier::Medium, Tier::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Easy => "easy",
            Tier::Medium => "medium",
            Tier::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCase {
    pub id: String,
    pub question: String,
    pub required_apis: Vec<String>,
    pub tier: Tier,
}

/// Parses a JSON Lines benchmark; blank lines are skipped.
pub fn parse_bench(text: &str) -> Result<Vec<BenchmarkCase>> {
    let mut cases = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: BenchmarkCase = serde_json::from_str(line).with_context(|| format!("benchmark line {}", i + 1))?;
        if case.required_apis.iter().all(|a| a.trim().is_empty()) {
            bail!("benchmark line {}: case {} has no required_apis", i + 1, case.id);
        }
        if !ids.insert(case.id.clone()) {
            bail!("benchmark line {}: duplicate case id {}", i + 1, case.id);
        }
        cases.push(case);
    }
    Ok(cases)
}

/// Whitespace runs collapse to one space on both sides before matching.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Required literals that do not occur in `code`.
pub fn missing_apis(code: &str, required: &[String]) -> Vec<String> {
    let code = normalize(code);
    required.iter().filter(|api| !code.contains(&normalize(api))).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub id: String,
    pub tier: Tier,
    pub passed: bool,
    pub accepted: bool,
    pub missing_apis: Vec<String>,
    pub iterations: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TierSummary {
    pub cases: usize,
    pub passes: usize,
    /// `None` (null) when the tier has no cases.
    pub pass_at_1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub cases: usize,
    pub passes: usize,
    pub pass_at_1: Option<f64>,
    pub tiers: BTreeMap<Tier, TierSummary>,
    pub results: Vec<CaseResult>,
    pub caveat: String,
}

fn rate(passes: usize, cases: usize) -> Option<f64> {
    (cases > 0).then(|| passes as f64 / cases as f64)
}

impl EvalReport {
    pub fn from_results(results: Vec<CaseResult>) -> Self {
        let tiers = Tier::ALL
            .iter()
            .map(|&t| {
                let cases = results.iter().filter(|r| r.tier == t).count();
                let passes = results.iter().filter(|r| r.tier == t && r.passed).count();
                (t, TierSummary { cases, passes, pass_at_1: rate(passes, cases) })
            })
            .collect();
        let passes = results.iter().filter(|r| r.passed).count();
        Self { cases: results.len(), passes, pass_at_1: rate(passes, results.len()), tiers, results, caveat: CAVEAT.to_string() }
    }

    pub fn table(&self) -> String {
        let fmt = |r: Option<f64>| r.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
        let width = self.results.iter().map(|r| r.id.len()).max().unwrap_or(2).max(2);
        let mut out = format!("{:<width$}  {:<6}  {:<4}  iterations\n", "id", "tier", "pass");
        for r in &self.results {
            let mut its: Vec<String> = r.iterations.iter().map(|i| i.to_string()).collect();
            if its.is_empty() {
                its.push("-".into());
            }
            let verdict = if r.passed { "yes" } else { "no" };
            out.push_str(&format!("{:<width$}  {:<6}  {:<4}  {}\n", r.id, r.tier.as_str(), verdict, its.join(",")));
        }
        out.push_str(&format!("\n{:<7} {:>5} {:>6}  pass@1\n", "tier", "cases", "passes"));
        for (tier, s) in &self.tiers {
            out.push_str(&format!("{:<7} {:>5} {:>6}  {}\n", tier.as_str(), s.cases, s.passes, fmt(s.pass_at_1)));
        }
        out.push_str(&format!("{:<7} {:>5} {:>6}  {}\n", "all", self.cases, self.passes, fmt(self.pass_at_1)));
        out
    }
}

/// Shared, immutable resources for an evaluation.
pub struct Pipeline<'a> {
    pub graph: &'a ApiGraph,
    pub rules: &'a RuleStore,
    pub retriever: Option<&'a HybridIndex>,
    pub generator: &'a dyn LlmClient,
    pub assistant: &'a dyn LlmClient,
    pub config: RunConfig,
    /// Per-case step clocks instead of wall time, for reproducible transcripts.
    pub step_clock: bool,
}

pub fn run_case(case: &BenchmarkCase, pipeline: &Pipeline, transcript_dir: Option<&Path>) -> Result<CaseResult> {
    let step = StepClock::new(1);
    let wall = SystemClock::default();
    let clock: &dyn Clock = if pipeline.step_clock { &step } else { &wall };
    let tools = Toolbox {
        graph: pipeline.graph,
        rules: pipeline.rules,
        retriever: pipeline.retriever,
        generator: pipeline.generator,
        assistant: pipeline.assistant,
        clock,
    };
    let mut result = CaseResult {
        id: case.id.clone(),
        tier: case.tier,
        passed: false,
        accepted: false,
        missing_apis: case.required_apis.clone(),
        iterations: Vec::new(),
        note: None,
        transcript: None,
    };
    let outcome = match refine(&case.question, &pipeline.config, &tools) {
        Ok(o) => o,
        Err(e) => {
            result.note = Some(e.to_string());
            return Ok(result);
        }
    };
    if let Some(dir) = transcript_dir {
        let path = dir.join(format!("{}.jsonl", case.id));
        std::fs::write(&path, transcript_jsonl(&outcome.transcript)).with_context(|| format!("writing {}", path.display()))?;
        result.transcript = Some(path.display().to_string());
    }
    result.accepted = outcome.accepted;
    result.iterations = outcome.iterations;
    if outcome.accepted {
        result.missing_apis = missing_apis(&outcome.answer, &case.required_apis);
        result.passed = result.missing_apis.is_empty();
    } else if !outcome.notes.is_empty() {
        result.note = Some(outcome.notes.join("; "));
    }
    Ok(result)
}

/// Runs every case once, up to `jobs` at a time. Results keep input order.
pub fn run_eval(cases: &[BenchmarkCase], pipeline: &Pipeline, jobs: usize, transcript_dir: Option<&Path>) -> Result<EvalReport> {
    pipeline.config.validate()?;
    if let Some(dir) = transcript_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<CaseResult>>>> = Mutex::new((0..cases.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, cases.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(case) = cases.get(i) else { break };
                let r = run_case(case, pipeline, transcript_dir);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let results = slots.into_inner().unwrap().into_iter().map(|r| r.expect("every case ran")).collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_results(results))
}
