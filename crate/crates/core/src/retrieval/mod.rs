//! Hybrid retrieval: Okapi BM25 over identifier-aware tokens, exact dense
//! cosine search behind a pluggable [`Embedder`], merged by reciprocal rank
//! fusion.

pub mod tokenize;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api_graph::{ApiGraph, GLOBAL_SCOPE};
pub use tokenize::tokenize;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
pub const RRF_K: f64 = 60.0;
pub const DEFAULT_DIMENSION: usize = 256;

const VECTORS_MAGIC: &[u8; 4] = b"JVEC";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),
    #[error("embedder failure: {0}")]
    EmbedderFailure(String),
    #[error("cannot build an index over zero documents")]
    EmptyCorpus,
    #[error("index format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DocKind {
    ApiDoc,
    CodeLine,
    Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub kind: DocKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, kind: DocKind) -> Self {
        Self { id: id.into(), text: text.into(), kind, metadata: BTreeMap::new() }
    }
}

/// One document per graph member, text `T.member: doc`.
pub fn api_doc_corpus(graph: &ApiGraph) -> Vec<Document> {
    let mut docs = Vec::new();
    for obj in graph.objects.values() {
        for m in obj.members.values() {
            let mut d =
                Document::new(format!("{}.{}", obj.name, m.name), format!("{}.{}: {}", obj.name, m.name, m.doc), DocKind::ApiDoc);
            d.metadata.insert("object".into(), obj.name.clone());
            d.metadata.insert("member".into(), m.name.clone());
            docs.push(d);
        }
    }
    for g in graph.globals.values() {
        let mut d = Document::new(g.name.clone(), format!("{}(): {}", g.name, g.doc), DocKind::ApiDoc);
        d.metadata.insert("object".into(), GLOBAL_SCOPE.into());
        d.metadata.insert("member".into(), g.name.clone());
        docs.push(d);
    }
    docs
}

/// Text → unit-norm vector of fixed dimension. Must be deterministic per text.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>, RetrievalError>;
    /// Stable identifier persisted with an index so queries use a matching embedder.
    fn id(&self) -> String;
}

/// Signed feature hashing of tokens into a fixed-width vector.
#[derive(Debug, Clone)]
pub struct FeatureHashEmbedder {
    dimension: usize,
}

impl FeatureHashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Default for FeatureHashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

// FNV-1a, 64 bit. Fixed so persisted vectors are stable across toolchains.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for FeatureHashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, RetrievalError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(RetrievalError::EmbedderFailure(format!("no tokens in {text:?}")));
        }
        let mut acc = vec![0f64; self.dimension];
        for t in &tokens {
            let h = fnv1a(t.as_bytes());
            let slot = (h % self.dimension as u64) as usize;
            acc[slot] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // every token cancelled out; fall back to the first token's slot
            let slot = (fnv1a(tokens[0].as_bytes()) % self.dimension as u64) as usize;
            acc[slot] = 1.0;
            return Ok(acc.into_iter().map(|v| v as f32).collect());
        }
        Ok(acc.into_iter().map(|v| (v / norm) as f32).collect())
    }

    fn id(&self) -> String {
        format!("feature-hash-{}", self.dimension)
    }
}

/// Resolve an embedder from a persisted identifier.
pub fn embedder_from_id(id: &str) -> Option<Box<dyn Embedder>> {
    let dim = id.strip_prefix("feature-hash-")?.parse().ok()?;
    (dim > 0).then(|| Box::new(FeatureHashEmbedder::new(dim)) as Box<dyn Embedder>)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LexicalStats {
    k1: f64,
    b: f64,
    rrf_k: f64,
    embedder: String,
    avg_len: f64,
    doc_len: Vec<u32>,
    /// term → (doc index, term frequency), doc-index ascending
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

pub struct HybridIndex {
    docs: Vec<Document>,
    lexical: LexicalStats,
    dimension: usize,
    vectors: Vec<f32>,
    embedder: Box<dyn Embedder>,
}

impl std::fmt::Debug for HybridIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HybridIndex")
            .field("docs", &self.docs.len())
            .field("dimension", &self.dimension)
            .field("embedder", &self.lexical.embedder)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<'a> {
    pub doc: &'a Document,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Lexical,
    Dense,
    Hybrid,
}

impl std::str::FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lexical" => Ok(Self::Lexical),
            "dense" => Ok(Self::Dense),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(format!("unknown search mode `{other}` (expected lexical, dense or hybrid)")),
        }
    }
}

fn top_k<'a>(docs: &'a [Document], scored: impl Iterator<Item = (usize, f64)>, k: usize) -> Vec<Hit<'a>> {
    let mut all: Vec<(usize, f64)> = scored.collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| docs[a.0].id.cmp(&docs[b.0].id)));
    all.truncate(k);
    all.into_iter().map(|(i, score)| Hit { doc: &docs[i], score }).collect()
}

impl HybridIndex {
    pub fn build(docs: Vec<Document>, embedder: Box<dyn Embedder>) -> Result<Self, RetrievalError> {
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        for d in &docs {
            if !seen.insert(d.id.as_str()) {
                return Err(RetrievalError::DuplicateDocId(d.id.clone()));
            }
        }

        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            let tokens = tokenize(&d.text);
            doc_len.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i as u32, n));
            }
        }
        let avg_len = doc_len.iter().map(|&l| f64::from(l)).sum::<f64>() / docs.len() as f64;

        let dimension = embedder.dimension();
        let mut vectors = Vec::with_capacity(dimension * docs.len());
        for d in &docs {
            let v = embedder.embed(&d.text)?;
            if v.len() != dimension {
                return Err(RetrievalError::EmbedderFailure(format!("embedder returned {} dims, expected {dimension}", v.len())));
            }
            vectors.extend(v);
        }

        Ok(Self {
            lexical: LexicalStats { k1: BM25_K1, b: BM25_B, rrf_k: RRF_K, embedder: embedder.id(), avg_len, doc_len, postings },
            docs,
            dimension,
            vectors,
            embedder,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn vector(&self, doc_index: usize) -> &[f32] {
        &self.vectors[doc_index * self.dimension..(doc_index + 1) * self.dimension]
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    /// Okapi BM25 with `idf = ln((N - df + 0.5) / (df + 0.5) + 1)`.
    pub fn lexical_search(&self, query: &str, k: usize) -> Vec<Hit<'_>> {
        let n = self.docs.len() as f64;
        let LexicalStats { k1, b, avg_len, .. } = self.lexical;
        let mut scores = vec![0f64; self.docs.len()];
        let mut matched = vec![false; self.docs.len()];
        for term in tokenize(query) {
            let Some(list) = self.lexical.postings.get(&term) else {
                continue;
            };
            let df = list.len() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let dl = f64::from(self.lexical.doc_len[doc as usize]);
                let denom = tf + k1 * (1.0 - b + b * dl / avg_len);
                scores[doc as usize] += idf * tf * (k1 + 1.0) / denom;
                matched[doc as usize] = true;
            }
        }
        top_k(&self.docs, scores.into_iter().enumerate().filter(|(i, _)| matched[*i]), k)
    }

    /// Exhaustive cosine similarity against every stored vector.
    pub fn dense_search(&self, query: &str, k: usize) -> Result<Vec<Hit<'_>>, RetrievalError> {
        let q = self.embedder.embed(query)?;
        let q_norm = q.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        let scored = (0..self.docs.len()).map(|i| {
            let d = self.vector(i);
            let dot: f64 = q.iter().zip(d).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            let d_norm = d.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            let cos = if q_norm == 0.0 || d_norm == 0.0 { 0.0 } else { dot / (q_norm * d_norm) };
            (i, cos)
        });
        Ok(top_k(&self.docs, scored, k))
    }

    /// Reciprocal rank fusion of the lexical and dense top-2k lists.
    pub fn hybrid_search(&self, query: &str, k: usize) -> Result<Vec<Hit<'_>>, RetrievalError> {
        let depth = 2 * k.max(1);
        let lexical = self.lexical_search(query, depth);
        let dense = self.dense_search(query, depth)?;
        let fused = reciprocal_rank_fusion(&[ids(&lexical), ids(&dense)], self.lexical.rrf_k);
        let index_of: BTreeMap<&str, usize> = self.docs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
        Ok(fused.into_iter().take(k).map(|(id, score)| Hit { doc: &self.docs[index_of[id.as_str()]], score }).collect())
    }

    pub fn search(&self, query: &str, k: usize, mode: SearchMode) -> Result<Vec<Hit<'_>>, RetrievalError> {
        match mode {
            SearchMode::Lexical => Ok(self.lexical_search(query, k)),
            SearchMode::Dense => self.dense_search(query, k),
            SearchMode::Hybrid => self.hybrid_search(query, k),
        }
    }

    /// Writes `documents.jsonl`, `lexical.json` and `vectors.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        fs::create_dir_all(dir)?;
        let mut docs = fs::File::create(dir.join("documents.jsonl"))?;
        for d in &self.docs {
            let line = serde_json::to_string(d).map_err(|e| RetrievalError::Format(e.to_string()))?;
            writeln!(docs, "{line}")?;
        }
        let lexical = serde_json::to_string(&self.lexical).map_err(|e| RetrievalError::Format(e.to_string()))?;
        fs::write(dir.join("lexical.json"), lexical)?;

        let mut bytes = Vec::with_capacity(12 + 4 * self.vectors.len());
        bytes.extend_from_slice(VECTORS_MAGIC);
        bytes.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.docs.len() as u32).to_le_bytes());
        for v in &self.vectors {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join("vectors.bin"), bytes)?;
        Ok(())
    }

    /// Reloads an index, resolving the query embedder from its persisted id.
    pub fn load(dir: &Path) -> Result<Self, RetrievalError> {
        let lexical: LexicalStats = serde_json::from_str(&fs::read_to_string(dir.join("lexical.json"))?)
            .map_err(|e| RetrievalError::Format(format!("lexical.json: {e}")))?;
        let embedder = embedder_from_id(&lexical.embedder)
            .ok_or_else(|| RetrievalError::Format(format!("unknown embedder `{}`", lexical.embedder)))?;
        Self::load_with(dir, embedder)
    }

    pub fn load_with(dir: &Path, embedder: Box<dyn Embedder>) -> Result<Self, RetrievalError> {
        let lexical: LexicalStats = serde_json::from_str(&fs::read_to_string(dir.join("lexical.json"))?)
            .map_err(|e| RetrievalError::Format(format!("lexical.json: {e}")))?;
        if lexical.embedder != embedder.id() {
            return Err(RetrievalError::Format(format!(
                "index built with `{}`, query embedder is `{}`",
                lexical.embedder,
                embedder.id()
            )));
        }
        let mut docs = Vec::new();
        for line in BufReader::new(fs::File::open(dir.join("documents.jsonl"))?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            docs.push(serde_json::from_str(&line).map_err(|e| RetrievalError::Format(format!("documents.jsonl: {e}")))?);
        }

        let bytes = fs::read(dir.join("vectors.bin"))?;
        if bytes.len() < 12 || &bytes[..4] != VECTORS_MAGIC {
            return Err(RetrievalError::Format("vectors.bin: bad header".into()));
        }
        let dimension = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if count != docs.len() || dimension != embedder.dimension() || bytes.len() != 12 + 4 * dimension * count {
            return Err(RetrievalError::Format("vectors.bin: size does not match documents".into()));
        }
        let vectors = bytes[12..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if lexical.doc_len.len() != docs.len() {
            return Err(RetrievalError::Format("lexical.json: document count mismatch".into()));
        }
        Ok(Self { docs, lexical, dimension, vectors, embedder })
    }
}

fn ids(hits: &[Hit<'_>]) -> Vec<String> {
    hits.iter().map(|h| h.doc.id.clone()).collect()
}

/// `score(d) = Σ 1 / (c + rank_i(d))` with 1-based ranks; score-descending, id-ascending.
pub fn reciprocal_rank_fusion(rankings: &[Vec<String>], c: f64) -> Vec<(String, f64)> {
    let mut scores: BTreeMap<String, f64> = BTreeMap::new();
    for ranking in rankings {
        for (rank, id) in ranking.iter().enumerate() {
            *scores.entry(id.clone()).or_default() += 1.0 / (c + (rank + 1) as f64);
        }
    }
    let mut fused: Vec<(String, f64)> = scores.into_iter().collect();
    fused.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    fused
}
