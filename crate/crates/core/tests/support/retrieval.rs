//! Independent retrieval oracles: Okapi BM25 and cosine computed from
//! scratch, plus seeded corpora with planted relevant documents.

use std::collections::HashMap;

use jarvis_core::retrieval::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: &[&str] = &[
    "slack",
    "pin",
    "net",
    "route",
    "length",
    "cell",
    "power",
    "leakage",
    "violation",
    "setup",
    "hold",
    "ram",
    "clock",
    "delay",
    "logic",
    "port",
    "report",
    "sort",
    "worst",
    "path",
];

pub fn random_corpus(seed: u64, n: usize) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(3..12);
            let text: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
            Document::new(format!("d{i:03}"), text.join(" "), DocKind::CodeLine)
        })
        .collect()
}

pub fn index(docs: Vec<Document>) -> HybridIndex {
    HybridIndex::build(docs, Box::new(FeatureHashEmbedder::default())).unwrap()
}

/// k1 = 1.2, b = 0.75, idf = ln((N - df + 0.5)/(df + 0.5) + 1). Only documents
/// sharing a query token are scored.
pub fn okapi(docs: &[Document], query: &str) -> HashMap<String, f64> {
    let toks: Vec<Vec<String>> = docs.iter().map(|d| tokenize(&d.text)).collect();
    let n = docs.len() as f64;
    let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut out = HashMap::new();
    for (d, t) in docs.iter().zip(&toks) {
        let mut score = 0.0;
        let mut hit = false;
        for q in tokenize(query) {
            let df = toks.iter().filter(|t| t.contains(&q)).count() as f64;
            let tf = t.iter().filter(|x| **x == q).count() as f64;
            if tf == 0.0 {
                continue;
            }
            hit = true;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            score += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * t.len() as f64 / avg));
        }
        if hit {
            out.insert(d.id.clone(), score);
        }
    }
    out
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Largest difference between the index's lexical scores and [`okapi`] over a
/// 20-document corpus, or `None` if the hit sets differ.
pub fn okapi_max_error(seed: u64) -> Option<f64> {
    let docs = random_corpus(seed, 20);
    let idx = index(docs.clone());
    let mut worst = 0f64;
    for query in ["worst slack", "route length net", "power power leakage", "ram clock delay path"] {
        let want = okapi(&docs, query);
        let hits = idx.lexical_search(query, 100);
        if hits.len() != want.len() {
            return None;
        }
        for h in &hits {
            worst = worst.max((h.score - *want.get(&h.doc.id)?).abs());
        }
    }
    Some(worst)
}

/// Queries whose dense top 10 differs from exhaustive cosine ranking.
pub fn dense_mismatches(seed: u64) -> usize {
    let docs = random_corpus(seed, 60);
    let idx = index(docs.clone());
    let emb = FeatureHashEmbedder::default();
    let mut bad = 0;
    for query in ["worst slack of ram paths", "leakage power", "pin net", "clock delay report"] {
        let q = emb.embed(query).unwrap();
        let mut want: Vec<(String, f64)> =
            docs.iter().map(|d| (d.id.clone(), cosine(&q, &emb.embed(&d.text).unwrap()))).collect();
        want.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let got = idx.dense_search(query, 10).unwrap();
        let same = got.len() == 10 && got.iter().zip(&want).all(|(h, (id, s))| &h.doc.id == id && (h.score - s).abs() < 1e-9);
        if !same {
            bad += 1;
        }
    }
    bad
}

/// Randomized pairs where one document is ranked no lower than another in both
/// lists; returns how many of `pairs` violated strict fused dominance.
pub fn fusion_dominance_violations(seed: u64, pairs: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..30).map(|i| format!("x{i}")).collect();
    let (mut checked, mut bad) = (0, 0);
    while checked < pairs {
        let mut l1 = ids.clone();
        let mut l2 = ids.clone();
        l1.shuffle(&mut rng);
        l2.shuffle(&mut rng);
        let fused: HashMap<String, f64> = reciprocal_rank_fusion(&[l1.clone(), l2.clone()], RRF_K).into_iter().collect();
        let pos = |l: &[String], id: &str| l.iter().position(|x| x == id).unwrap();
        let (a, b) = (&ids[rng.gen_range(0..30)], &ids[rng.gen_range(0..30)]);
        if a == b {
            continue;
        }
        let (a1, a2, b1, b2) = (pos(&l1, a), pos(&l2, a), pos(&l1, b), pos(&l2, b));
        let (hi, lo) = if a1 <= b1 && a2 <= b2 {
            (a, b)
        } else if b1 <= a1 && b2 <= a2 {
            (b, a)
        } else {
            continue;
        };
        checked += 1;
        if fused[hi] <= fused[lo] {
            bad += 1;
        }
    }
    bad
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recall {
    pub lexical: f64,
    pub dense: f64,
    pub hybrid: f64,
}

/// recall@10 over `queries` seeded queries. Each query is three vocabulary
/// words; one document per query is rewritten to contain them, among 200
/// random documents that share the vocabulary.
pub fn planted_recall(seed: u64, queries: u64) -> Recall {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = [0usize; 3];
    for q in 0..queries {
        let mut docs = random_corpus(seed.wrapping_mul(1000) + q, 200);
        let words: Vec<&str> = WORDS.choose_multiple(&mut rng, 3).copied().collect();
        let query = words.join(" ");
        let target = rng.gen_range(0..docs.len());
        let noise: Vec<&str> = (0..3).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
        docs[target].text = format!("{query} {}", noise.join(" "));
        let id = docs[target].id.clone();
        let idx = index(docs);
        for (slot, mode) in [SearchMode::Lexical, SearchMode::Dense, SearchMode::Hybrid].into_iter().enumerate() {
            if idx.search(&query, 10, mode).unwrap().iter().any(|h| h.doc.id == id) {
                found[slot] += 1;
            }
        }
    }
    let r = |n: usize| n as f64 / queries as f64;
    Recall { lexical: r(found[0]), dense: r(found[1]), hybrid: r(found[2]) }
}
