use std::sync::atomic::{AtomicUsize, Ordering};

use jarvis_core::api_graph::{load_graph, ApiGraph};
use jarvis_core::checker::simulate;
use jarvis_core::llm::{FnLlm, LlmError, Message, ScriptedLlm};
use jarvis_core::rules::*;
use jarvis_core::script_lang::{parse, unparse};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RULES: &str = include_str!("../../../fixtures/rules_manual.json");
const LEAKAGE_ATTR: &str = include_str!("../../../fixtures/scripts/leakage_attr.esl");
const LEAKAGE_FLAG: &str = include_str!("../../../fixtures/scripts/leakage_flag.esl");
const POWER_QUERY: &str = "Write a code to compute the total leakage power of sequential cells";

fn graph() -> ApiGraph {
    load_graph(include_str!("../../../fixtures/eda_tool.json")).unwrap()
}

fn auto_rule(id: &str, title: &str, body: &str) -> Rule {
    Rule {
        id: id.into(),
        title: title.into(),
        body: body.into(),
        trigger_terms: vec![],
        source: RuleSource::Auto,
        validation: None,
    }
}

#[test]
fn fixture_ships_power_rule() {
    let store = parse_rules(RULES).unwrap();
    let power = store.get("power-computation").unwrap();
    assert_eq!(power.trigger_terms, ["power", "leakage"]);
    assert!(power.body.starts_with(
        "You can compute power of a cell as below:\n    + First use Cell.calculate_power() to compute power values."
    ));
    assert!(power.body.contains("          switching = cell.power(\"is_switching\")"));
}

#[test]
fn load_edge_cases() {
    assert!(parse_rules("").unwrap().is_empty());
    assert!(parse_rules("[]").unwrap().is_empty());
    let dup = r#"[{"id": "a", "title": "t", "body": "b", "trigger_terms": ["x"], "source": "manual"},
                  {"id": "a", "title": "t", "body": "c", "trigger_terms": ["y"], "source": "manual"}]"#;
    assert!(matches!(parse_rules(dup), Err(RulesError::DuplicateId(id)) if id == "a"));
    assert!(matches!(parse_rules("{not json"), Err(RulesError::RuleSyntax(_))));
    let no_terms = r#"[{"id": "a", "title": "t", "body": "b", "source": "manual"}]"#;
    assert!(matches!(parse_rules(no_terms), Err(RulesError::InvalidRule(..))));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rules.json");
    std::fs::write(&path, RULES).unwrap();
    assert_eq!(load_rules(&path).unwrap().len(), 2);
}

#[test]
fn power_query_ranks_power_rule_first() {
    let store = parse_rules(RULES).unwrap();
    let ranked = rank_rules(&store, "total leakage power of sequential cells", 10).unwrap();
    assert_eq!(ranked[0].id, "power-computation");
    assert_eq!(ranked.len(), 1);
    assert!(rank_rules(&store, "route length of nets", 10).unwrap().is_empty());
}

#[test]
fn planted_auto_rule_is_found() {
    let vocab = [
        "cell",
        "pin",
        "net",
        "fanout",
        "arrival",
        "port",
        "hierarchy",
        "pattern",
        "clock",
        "setup",
        "hold",
        "buffer",
        "library",
        "corner",
        "scenario",
        "instance",
        "module",
        "design",
        "report",
        "delay",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rules: Vec<Rule> = (0..50)
        .map(|i| {
            let words: Vec<&str> = (0..8).map(|_| *vocab.choose(&mut rng).unwrap()).collect();
            auto_rule(&format!("auto-{i:02}"), &words[..3].join(" "), &words.join(" "))
        })
        .collect();
    rules.push(auto_rule(
        "planted",
        "Route length of a net",
        "Use Pin.net() and then Net.route_length() to read the routed wire length.",
    ));
    let mut all = parse_rules(RULES).unwrap().rules().cloned().collect::<Vec<_>>();
    all.extend(rules);
    let store = RuleStore::new(all).unwrap();
    let ranked = rank_rules(&store, "get the route length of each net", 10).unwrap();
    let auto: Vec<&str> = ranked.iter().filter(|r| r.source == RuleSource::Auto).map(|r| r.id.as_str()).collect();
    assert!(auto.len() <= 10);
    assert!(auto[..3].contains(&"planted"), "{auto:?}");
}

#[test]
fn enforce_rewrites_leakage_attribute_to_flag() {
    let store = parse_rules(RULES).unwrap();
    let rules = rank_rules(&store, POWER_QUERY, 10).unwrap();
    let mut llm = ScriptedLlm::strict("assistant", []);
    llm.insert(&enforce_prompt(LEAKAGE_ATTR, &rules), format!("Here is the script:\n```python\n{LEAKAGE_FLAG}```"));
    let out = enforce(LEAKAGE_ATTR, &rules, &llm).unwrap();
    assert_eq!(out.code, LEAKAGE_FLAG);
    assert!(out.rejected.is_none());
}

#[test]
fn enforce_without_rules_is_identity() {
    let llm = FnLlm::new("never", |_m: &[Message]| Err(LlmError::Unavailable("not expected".into())));
    let out = enforce(LEAKAGE_ATTR, &[], &llm).unwrap();
    assert_eq!(out.code, LEAKAGE_ATTR);
}

#[test]
fn enforce_keeps_original_on_garbage() {
    let store = parse_rules(RULES).unwrap();
    let rules: Vec<&Rule> = store.rules().collect();
    let llm = FnLlm::new("bad", |_m: &[Message]| Ok("Sure! I would use ((( for this".to_string()));
    let out = enforce(LEAKAGE_ATTR, &rules, &llm).unwrap();
    assert_eq!(out.code, LEAKAGE_ATTR);
    assert!(out.rejected.unwrap().contains("RuleRewriteRejected"));
}

fn power_rule_json() -> String {
    let store = parse_rules(RULES).unwrap();
    let r = store.get("power-computation").unwrap();
    serde_json::json!([{ "title": r.title, "body": r.body, "trigger_terms": r.trigger_terms }]).to_string()
}

#[test]
fn degraded_flag_script_is_hallucinated() {
    let g = graph();
    let (degraded, target, fake) = degrade(&g, &parse(LEAKAGE_FLAG).unwrap()).unwrap();
    assert_eq!(target, "Cell.power");
    // first non-stopword of the doc "Power value selected by flag" other than the member itself
    assert_eq!(fake, "value_power");
    let report = simulate(&g, &degraded);
    assert_eq!(report.diagnostics.len(), 1);
    assert_eq!(report.diagnostics[0].member, "value_power");
}

#[test]
fn extraction_accepts_rule_that_repairs_degraded_code() {
    let g = graph();
    let rule_json = power_rule_json();
    let llm = FnLlm::new("assistant", move |m: &[Message]| {
        Ok(if m[0].content == EXTRACT_SYSTEM { format!("```json\n{rule_json}\n```") } else { format!("```\n{LEAKAGE_FLAG}```") })
    });
    let qna = vec![(POWER_QUERY.to_string(), LEAKAGE_FLAG.to_string())];
    let ex = extract_rules_offline(&qna, &llm, &g, 3).unwrap();
    assert_eq!((ex.proposed, ex.accepted), (1, 1));
    let rule = &ex.rules[0];
    assert_eq!(rule.source, RuleSource::Auto);
    assert!(rule.body.contains("Cell.calculate_power()"));
    // the stored acceptance probe replays clean
    let store = RuleStore::new(ex.rules.clone()).unwrap();
    assert!(store.revalidate(&g).is_empty());
    let reloaded = parse_rules(&rules_to_json(&ex.rules)).unwrap();
    assert_eq!(reloaded.len(), 1);
}

#[test]
fn extraction_rejects_rule_that_does_not_repair() {
    let g = graph();
    let rule_json = power_rule_json();
    let llm = FnLlm::new("assistant", move |m: &[Message]| {
        Ok(if m[0].content == EXTRACT_SYSTEM {
            rule_json.clone()
        } else {
            // echoes the degraded script back
            let script = m[1].content.split("```\n").nth(1).unwrap().to_string();
            format!("```\n{script}```")
        })
    });
    let qna = vec![(POWER_QUERY.to_string(), LEAKAGE_FLAG.to_string())];
    let ex = extract_rules_offline(&qna, &llm, &g, 3).unwrap();
    assert_eq!((ex.proposed, ex.accepted), (1, 0));
    assert_eq!(ex.acceptance_rate(), 0.0);
}

#[test]
fn extraction_edge_cases() {
    let g = graph();
    let calls = AtomicUsize::new(0);
    let llm = FnLlm::new("count", move |_m: &[Message]| {
        calls.fetch_add(1, Ordering::SeqCst);
        Ok("[]".into())
    });
    assert!(extract_rules_offline(&[], &llm, &g, 3).unwrap().rules.is_empty());
    let bad = vec![(POWER_QUERY.to_string(), LEAKAGE_ATTR.to_string())];
    assert!(matches!(extract_rules_offline(&bad, &llm, &g, 3), Err(RulesError::InvalidQna { index: 0, .. })));
}

proptest! {
    #[test]
    fn enforce_output_always_parses(reply in ".{0,200}") {
        let store = parse_rules(RULES).unwrap();
        let rules: Vec<&Rule> = store.rules().collect();
        let llm = FnLlm::new("fuzz", move |_m: &[Message]| Ok(reply.clone()));
        let out = enforce(LEAKAGE_ATTR, &rules, &llm).unwrap();
        prop_assert!(parse(&out.code).is_ok());
    }

    #[test]
    fn manual_rules_precede_auto(query in "(power|leakage|route|net|cell|slack|worst| ){1,12}", k in 1usize..6) {
        let mut all: Vec<Rule> = parse_rules(RULES).unwrap().rules().cloned().collect();
        all.push(auto_rule("a1", "net route", "route length of nets"));
        all.push(auto_rule("a2", "cell power", "leakage power of cells"));
        all.push(auto_rule("a3", "slack", "worst slack violation"));
        let store = RuleStore::new(all).unwrap();
        let ranked = rank_rules(&store, &query, k).unwrap();
        let manual = ranked.iter().take_while(|r| r.source == RuleSource::Manual).count();
        prop_assert!(ranked[manual..].iter().all(|r| r.source == RuleSource::Auto));
        prop_assert!(ranked.len() <= manual + k);
        let again = rank_rules(&store, &query, k).unwrap();
        prop_assert_eq!(ranked.iter().map(|r| &r.id).collect::<Vec<_>>(), again.iter().map(|r| &r.id).collect::<Vec<_>>());
    }
}

#[test]
fn unparse_of_degraded_keeps_comments() {
    let src =
        "# total\ntotal = 0\nfor cell in get_cells():\n    cell.calculate_power()\n    total += cell.power(\"is_leakage\")\n";
    let (degraded, _, _) = degrade(&graph(), &parse(src).unwrap()).unwrap();
    assert!(unparse(&degraded).starts_with("# total\n"));
}
