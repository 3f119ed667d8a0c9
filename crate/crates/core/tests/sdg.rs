use std::collections::{BTreeMap, HashSet};

use jarvis_core::api_graph::{load_graph, ApiGraph, GLOBAL_SCOPE};
use jarvis_core::checker::simulate;
use jarvis_core::llm::{FnLlm, LlmError, Message, ScriptedLlm};
use jarvis_core::script_lang::{parse, unparse, ExprKind, StmtKind};
use jarvis_core::sdg::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph() -> ApiGraph {
    load_graph(include_str!("../../../fixtures/eda_tool.json")).unwrap()
}

fn float_graph() -> ApiGraph {
    load_graph(r#"{"objects": {}, "globals": {"total_power": {"returns": "Float", "doc": "Total design power"}}}"#).unwrap()
}

fn only(kind: OpKind) -> GenConfig {
    GenConfig { op_kind_weights: BTreeMap::from([(kind, 1.0)]), ..GenConfig::default() }
}

#[test]
fn first_hundred_seeds_simulate_clean() {
    let g = graph();
    for seed in 0..100 {
        let s = generate_sample(&g, &GenConfig::default(), seed).unwrap();
        let m = parse(&s.code).unwrap();
        assert!(simulate(&g, &m).clean, "seed {seed}:\n{}", s.code);
        assert_eq!(unparse(&m), s.code);
    }
}

fn max_delay_shaped(code: &str) -> bool {
    let m = parse(code).unwrap();
    m.body.windows(2).any(|w| {
        let (StmtKind::Assign { target, value }, StmtKind::For { iter, body, .. }) = (&w[0].kind, &w[1].kind) else {
            return false;
        };
        let acc = unparse_expr(target);
        matches!(value.kind, ExprKind::Constant(_))
            && unparse_expr(iter).contains("violations")
            && body.iter().any(|s| match &s.kind {
                StmtKind::If { cond, .. } => matches!(&cond.kind, ExprKind::Compare { rhs, .. } if unparse_expr(rhs) == acc),
                _ => false,
            })
    })
}

fn unparse_expr(e: &jarvis_core::script_lang::Expr) -> String {
    jarvis_core::script_lang::expr_to_string(e)
}

#[test]
fn seed_42_dataset_contains_running_max_shape() {
    // loop over a violations collection, comparison against an accumulator
    // initialized just before the loop
    let g = graph();
    let cfg = GenConfig::with_seed(42);
    let hits: Vec<u64> =
        (0..50).filter(|&i| max_delay_shaped(&generate_sample(&g, &cfg, derive_seed(42, i)).unwrap().code)).collect();
    assert!(!hits.is_empty());
}

#[test]
fn degenerate_graph_gives_straight_line_math() {
    let g = float_graph();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = generate_ast(&g, &only(OpKind::Math), &mut rng).unwrap();
    assert!(m.body.iter().all(|s| matches!(s.kind, StmtKind::Assign { .. })));
    let r = simulate(&g, &m);
    assert!(r.clean);
    assert!(r.accesses.iter().all(|(owner, member)| owner == GLOBAL_SCOPE && member == "total_power"));
}

#[test]
fn impossible_operation_exhausts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = generate_ast(&float_graph(), &only(OpKind::Iterator), &mut rng).unwrap_err();
    assert!(matches!(err, SdgError::ExhaustedGraph(_)), "{err}");
    let empty = load_graph(r#"{"objects": {}, "globals": {}}"#).unwrap();
    assert!(matches!(generate_ast(&empty, &GenConfig::default(), &mut rng), Err(SdgError::ExhaustedGraph(_))));
}

#[test]
fn config_validation() {
    let mut c = GenConfig::default();
    c.op_kind_weights.values_mut().for_each(|w| *w = 0.0);
    assert!(c.validate().is_err());
    let c = GenConfig { iteration_range: (4, 2), ..GenConfig::default() };
    assert!(c.validate().is_err());
    let c = GenConfig { max_chain_depth: 0, ..GenConfig::default() };
    assert!(c.validate().is_err());
}

const MAX_DELAY: &str = include_str!("../../../fixtures/scripts/max_logic_delay.esl");
const MAX_DELAY_QUESTION: &str = "Write a code to find the largest logic delay among a set of violations.";

fn max_delay_sample() -> GeneratedSample {
    GeneratedSample {
        code: unparse(&jarvis_core::script_lang::ScriptModule::new(parse(MAX_DELAY).unwrap().body)),
        commented_code: None,
        question: None,
        apis_used: Default::default(),
        seed: 0,
    }
}

#[test]
fn annotate_replays_running_max_comments() {
    let sample = max_delay_sample();
    assert!(!sample.code.contains('#'));
    let mut llm = ScriptedLlm::strict("assistant", []);
    llm.insert(
        &[Message::system(ANNOTATE_SYSTEM), Message::user(sample.code.clone())],
        format!("```python\n{MAX_DELAY}```\nQuestion: {MAX_DELAY_QUESTION}\n"),
    );
    let out = annotate(&sample, &llm).unwrap();
    assert_eq!(out.code, sample.code);
    assert_eq!(out.question.as_deref(), Some(MAX_DELAY_QUESTION));
    let commented = parse(out.commented_code.as_deref().unwrap()).unwrap();
    assert_eq!(commented.comments.len(), 6);
    assert_eq!(commented.comment_texts()[0], "Get the set of violations");
}

#[test]
fn annotation_that_edits_code_is_rejected() {
    let sample = max_delay_sample();
    let llm =
        FnLlm::new("drift", |_m: &[Message]| Ok("```\n# changed\nvios = get_all_violations()\n```\nQuestion: What?".to_string()));
    assert!(matches!(annotate(&sample, &llm), Err(SdgError::AnnotationDrift)));
}

#[test]
fn empty_sample_is_left_alone() {
    let sample =
        GeneratedSample { code: String::new(), commented_code: None, question: None, apis_used: Default::default(), seed: 0 };
    let llm = FnLlm::new("unused", |_m: &[Message]| Err(LlmError::Unavailable("should not be called".into())));
    assert_eq!(annotate(&sample, &llm).unwrap(), sample);
    assert_eq!(annotate_with_template(&sample, &graph()).unwrap(), sample);
}

#[test]
fn template_comments_one_per_statement() {
    let g = graph();
    for seed in 0..50 {
        let s = annotate_with_template(&generate_sample(&g, &GenConfig::default(), seed).unwrap(), &g).unwrap();
        let commented = parse(s.commented_code.as_deref().unwrap()).unwrap();
        let plain = parse(&s.code).unwrap();
        assert!(commented.same_structure(&plain));
        assert_eq!(commented.comments.len(), plain.statements().len(), "{}", s.commented_code.unwrap());
        assert!(s.question.unwrap().starts_with("Write a code to "));
    }
}

fn dataset(n: usize, seed: u64) -> (Vec<u8>, DatasetSummary) {
    let mut buf = Vec::new();
    let summary = generate_dataset(&graph(), &GenConfig::with_seed(seed), n, None, &mut buf).unwrap();
    (buf, summary)
}

#[test]
fn dataset_is_unique_covering_and_reproducible() {
    let g = graph();
    let (a, summary) = dataset(1000, 7);
    let (b, _) = dataset(1000, 7);
    assert_eq!(a, b);
    let records: Vec<DatasetRecord> = String::from_utf8(a).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 1000);
    let unique: HashSet<&str> = records.iter().map(|r| r.code.as_str()).collect();
    assert_eq!(unique.len(), 1000);
    assert!(summary.coverage >= 0.9, "{summary:?}");
    // recomputed independently from the emitted records
    assert_eq!(coverage(&g, &records), summary.coverage);
    let (_, small) = dataset(100, 7);
    assert!(small.coverage <= summary.coverage);
    let (one, s1) = dataset(1, 7);
    assert_eq!((String::from_utf8(one).unwrap().lines().count(), s1.records), (1, 1));
}

#[test]
fn llm_failure_truncates_with_marker() {
    let calls = std::sync::atomic::AtomicUsize::new(0);
    let llm = FnLlm::new("flaky", move |m: &[Message]| {
        if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) >= 2 {
            return Err(LlmError::Unavailable("connection reset".into()));
        }
        Ok(format!("```\n{}```\nQuestion: What does it do?", m[1].content))
    });
    let mut buf = Vec::new();
    let err = generate_dataset(&graph(), &GenConfig::default(), 5, Some(&llm), &mut buf).unwrap_err();
    assert!(matches!(err, SdgError::Llm(_)));
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].contains("\"truncated\":true"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn any_seed_is_clean_and_round_trips(seed in any::<u64>(), depth in 1usize..5) {
        let g = graph();
        let cfg = GenConfig { max_chain_depth: depth, ..GenConfig::default() };
        let s = generate_sample(&g, &cfg, seed).unwrap();
        let m = parse(&s.code).unwrap();
        let r = simulate(&g, &m);
        prop_assert!(r.clean);
        prop_assert_eq!(&r.accesses, &s.apis_used);
        prop_assert_eq!(unparse(&m), s.code);
    }
}
