//! Regenerates fixtures/bench/{cases,replay}.jsonl from the scripted models
//! in tests/support. Run from the workspace root:
//! `cargo run -p jarvis-cli --example record_bench`

#[path = "../tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::io::Write;

use jarvis_cli::eval::{run_eval, Pipeline};
use jarvis_core::agents::RunConfig;
use jarvis_core::api_graph::load_graph;
use jarvis_core::llm::{RecordingLlm, ReplayRecord};
use jarvis_core::rules::load_rules;
use support::bench::{entries, BENCH_FILE, REPLAY_FILE};
use support::scenarios::scenario_llm;

fn main() -> anyhow::Result<()> {
    let graph = load_graph(&std::fs::read_to_string("fixtures/eda_tool.json")?)?;
    let rules = load_rules("fixtures/rules_manual.json".as_ref())?;
    let mut replies: BTreeMap<String, (String, String)> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut bench = std::fs::File::create(BENCH_FILE)?;

    for e in entries() {
        writeln!(bench, "{}", serde_json::to_string(&e.case)?)?;
        let llm = RecordingLlm::new(scenario_llm(e.model));
        let pipeline = Pipeline {
            graph: &graph,
            rules: &rules,
            retriever: None,
            generator: &llm,
            assistant: &llm,
            config: RunConfig::default(),
            step_clock: true,
        };
        let report = run_eval(std::slice::from_ref(&e.case), &pipeline, 1, None)?;
        let got = report.results[0].passed;
        anyhow::ensure!(got == e.passes, "{}: expected pass={} got {got}", e.case.id, e.passes);
        for ReplayRecord { fingerprint, reply } in llm.records() {
            match replies.get(&fingerprint) {
                Some((_, prev)) if prev != &reply => anyhow::bail!("{}: prompt collides with {fingerprint}", e.case.id),
                Some(_) => {}
                None => {
                    order.push(fingerprint.clone());
                    replies.insert(fingerprint, (e.case.id.clone(), reply));
                }
            }
        }
    }

    let mut replay = std::fs::File::create(REPLAY_FILE)?;
    for fp in &order {
        let record = ReplayRecord { fingerprint: fp.clone(), reply: replies[fp].1.clone() };
        writeln!(replay, "{}", serde_json::to_string(&record)?)?;
    }
    println!("{} cases, {} replies", entries().len(), order.len());
    Ok(())
}
