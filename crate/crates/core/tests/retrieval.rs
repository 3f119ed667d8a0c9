mod support;

use jarvis_core::api_graph::load_graph;
use jarvis_core::retrieval::*;
use proptest::prelude::*;
use support::retrieval::*;

#[test]
fn lexical_scores_match_okapi() {
    for seed in [7, 8, 9] {
        let err = okapi_max_error(seed).expect("hit sets agree");
        assert!(err < 1e-9, "seed {seed}: {err}");
    }
    let docs = random_corpus(7, 20);
    let idx = index(docs.clone());
    let hits = idx.lexical_search("worst slack", 100);
    assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
    assert!(hits.iter().all(|h| okapi(&docs, "worst slack").contains_key(&h.doc.id)));
}

#[test]
fn dense_search_is_brute_force_cosine() {
    for seed in [11, 12] {
        assert_eq!(dense_mismatches(seed), 0, "seed {seed}");
    }
}

#[test]
fn document_is_its_own_nearest_neighbour() {
    let docs = vec![
        Document::new("a", "Net.route_length: Routed wire length", DocKind::ApiDoc),
        Document::new("b", "Cell.power: Power of the cell", DocKind::ApiDoc),
    ];
    let idx = index(docs);
    let top = idx.dense_search("Cell.power: Power of the cell", 1).unwrap();
    assert_eq!(top[0].doc.id, "b");
    assert!((top[0].score - 1.0).abs() < 1e-6);
}

#[test]
fn rrf_closed_form() {
    let fused = reciprocal_rank_fusion(&[vec!["a".into(), "b".into()], vec!["b".into(), "c".into()]], 60.0);
    let want = [("b", 1.0 / 62.0 + 1.0 / 61.0), ("a", 1.0 / 61.0), ("c", 1.0 / 62.0)];
    assert_eq!(fused.len(), 3);
    for ((id, s), (wid, ws)) in fused.iter().zip(want) {
        assert_eq!(id, wid);
        assert!((s - ws).abs() < 1e-15);
    }
}

#[test]
fn fusion_respects_dominance() {
    // ranked no lower in both lists means fused strictly higher
    assert_eq!(fusion_dominance_violations(3, 1000), 0);
}

#[test]
fn planted_recall_of_hybrid_is_at_least_each_method() {
    let r = planted_recall(5, 20);
    assert!(r.hybrid >= r.lexical && r.hybrid >= r.dense, "{r:?}");
    assert!(r.hybrid >= 0.9, "{r:?}");
}

#[test]
fn api_corpus_index() {
    let graph = load_graph(include_str!("../../../fixtures/eda_tool.json")).unwrap();
    let docs = api_doc_corpus(&graph);
    assert_eq!(docs.len(), graph.member_count());
    let idx = index(docs);
    assert_eq!(idx.len(), graph.member_count());
    let top = idx.lexical_search("route_length", 3);
    assert_eq!(top[0].doc.id, "Net.route_length");
    let top = idx.hybrid_search("route length of a net", 3).unwrap();
    assert_eq!(top[0].doc.id, "Net.route_length");
}

#[test]
fn save_is_byte_stable_and_reloads() {
    let graph = load_graph(include_str!("../../../fixtures/eda_tool.json")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    index(api_doc_corpus(&graph)).save(a.path()).unwrap();
    index(api_doc_corpus(&graph)).save(b.path()).unwrap();
    for f in ["documents.jsonl", "lexical.json", "vectors.bin"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let back = HybridIndex::load(a.path()).unwrap();
    let fresh = index(api_doc_corpus(&graph));
    let ids = |hits: Vec<Hit<'_>>| hits.iter().map(|h| h.doc.id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(back.hybrid_search("worst slack", 5).unwrap()), ids(fresh.hybrid_search("worst slack", 5).unwrap()));
    assert!(HybridIndex::load_with(a.path(), Box::new(FeatureHashEmbedder::new(64))).is_err());
}

#[test]
fn build_errors() {
    assert!(matches!(HybridIndex::build(vec![], Box::new(FeatureHashEmbedder::default())), Err(RetrievalError::EmptyCorpus)));
    let dup = vec![Document::new("a", "x", DocKind::Rule), Document::new("a", "y", DocKind::Rule)];
    assert!(
        matches!(HybridIndex::build(dup, Box::new(FeatureHashEmbedder::default())), Err(RetrievalError::DuplicateDocId(id)) if id == "a")
    );
}

proptest! {
    #[test]
    fn embeddings_are_unit_length(text in "[a-z_ ]{0,40}") {
        let emb = FeatureHashEmbedder::default();
        if tokenize(&text).is_empty() {
            prop_assert!(emb.embed(&text).is_err());
            return Ok(());
        }
        let v = emb.embed(&text).unwrap();
        prop_assert_eq!(v.len(), DEFAULT_DIMENSION);
        let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        // colliding tokens can cancel to zero
        prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-5);
    }
}
