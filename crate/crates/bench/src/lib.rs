//! Fixture loading shared by the criterion benches.

use jarvis_core::api_graph::{load_graph, ApiGraph};
use jarvis_core::retrieval::{api_doc_corpus, FeatureHashEmbedder, HybridIndex};
use jarvis_core::rules::{parse_rules, RuleStore};

pub const MANIFEST: &str = include_str!("../../../fixtures/eda_tool.json");
pub const RULES: &str = include_str!("../../../fixtures/rules_manual.json");
pub const ROUTE_LENGTH_BAD: &str = include_str!("../../../fixtures/scripts/route_length_bad.esl");
pub const ROUTE_LENGTH_FIXED: &str = include_str!("../../../fixtures/scripts/route_length_fixed.esl");
pub const WORST_SLACK_SORTED: &str = include_str!("../../../fixtures/scripts/worst_slack_sorted.esl");

pub fn graph() -> ApiGraph {
    load_graph(MANIFEST).expect("fixture manifest loads")
}

pub fn rules() -> RuleStore {
    parse_rules(RULES).expect("fixture rules load")
}

pub fn api_index(graph: &ApiGraph) -> HybridIndex {
    HybridIndex::build(api_doc_corpus(graph), Box::new(FeatureHashEmbedder::default())).expect("non-empty corpus")
}
