//! Natural-language rules: manual hints keyed by trigger terms, and
//! auto-extracted rules ranked by hybrid retrieval. Rules are applied by an
//! LLM rewrite that must produce parsing code.

use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api_graph::{ApiGraph, GLOBAL_SCOPE};
use crate::checker::simulate;
use crate::llm::{extract_code, LlmClient, LlmError, Message};
use crate::retrieval::{tokenize, DocKind, Document, FeatureHashEmbedder, HybridIndex, RetrievalError, DEFAULT_DIMENSION};
use crate::script_lang::{parse, unparse, Expr, ExprKind, ScriptModule, Stmt, StmtKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleSource {
    Manual,
    Auto,
}

/// The probe an auto rule passed when it was accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleValidation {
    pub degraded: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub trigger_terms: Vec<String>,
    pub source: RuleSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<RuleValidation>,
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("rule file: {0}")]
    RuleSyntax(String),
    #[error("duplicate rule id {0}")]
    DuplicateId(String),
    #[error("rule {0}: {1}")]
    InvalidRule(String, String),
    #[error("qna pair {index}: {reason}")]
    InvalidQna { index: usize, reason: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
pub struct RuleStore {
    rules: IndexMap<String, Rule>,
    auto_index: Option<HybridIndex>,
}

impl RuleStore {
    pub fn new(rules: Vec<Rule>) -> Result<Self, RulesError> {
        let mut map = IndexMap::new();
        for r in rules {
            if r.body.trim().is_empty() {
                return Err(RulesError::InvalidRule(r.id, "empty body".into()));
            }
            if r.source == RuleSource::Manual && r.trigger_terms.iter().all(|t| t.trim().is_empty()) {
                return Err(RulesError::InvalidRule(r.id, "manual rules need at least one trigger term".into()));
            }
            if let Some(v) = &r.validation {
                if parse(&v.output).is_err() {
                    return Err(RulesError::InvalidRule(r.id, "validation output does not parse".into()));
                }
            }
            if map.contains_key(&r.id) {
                return Err(RulesError::DuplicateId(r.id));
            }
            map.insert(r.id.clone(), r);
        }
        let docs: Vec<Document> = map
            .values()
            .filter(|r| r.source == RuleSource::Auto)
            .map(|r| Document::new(r.id.clone(), format!("{}\n{}", r.title, r.body), DocKind::Rule))
            .collect();
        let auto_index = if docs.is_empty() {
            None
        } else {
            Some(HybridIndex::build(docs, Box::new(FeatureHashEmbedder::new(DEFAULT_DIMENSION)))?)
        };
        Ok(Self { rules: map, auto_index })
    }

    pub fn empty() -> Self {
        Self { rules: IndexMap::new(), auto_index: None }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.get(id)
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.values()
    }

    /// Auto rules whose recorded acceptance output no longer simulates clean.
    pub fn revalidate(&self, graph: &ApiGraph) -> Vec<String> {
        self.rules
            .values()
            .filter(|r| r.validation.as_ref().is_some_and(|v| parse(&v.output).map_or(true, |m| !simulate(graph, &m).clean)))
            .map(|r| r.id.clone())
            .collect()
    }
}

pub fn parse_rules(text: &str) -> Result<RuleStore, RulesError> {
    if text.trim().is_empty() {
        return Ok(RuleStore::empty());
    }
    let rules: Vec<Rule> = serde_json::from_str(text).map_err(|e| RulesError::RuleSyntax(e.to_string()))?;
    RuleStore::new(rules)
}

pub fn load_rules(path: &Path) -> Result<RuleStore, RulesError> {
    parse_rules(&std::fs::read_to_string(path)?)
}

pub fn rules_to_json(rules: &[Rule]) -> String {
    serde_json::to_string_pretty(rules).expect("rules serialize")
}

fn term_matches(term: &str, query_tokens: &HashSet<String>) -> bool {
    let toks = tokenize(term);
    !toks.is_empty() && toks.iter().all(|t| query_tokens.contains(t))
}

/// Manual rules whose trigger terms occur in `query` (most matched terms
/// first, then file order), followed by the top `k` auto rules by hybrid score.
pub fn rank_rules<'s>(store: &'s RuleStore, query: &str, k: usize) -> Result<Vec<&'s Rule>, RulesError> {
    let q: HashSet<String> = tokenize(query).into_iter().collect();
    let mut manual: Vec<(usize, usize, &Rule)> = store
        .rules
        .values()
        .enumerate()
        .filter(|(_, r)| r.source == RuleSource::Manual)
        .map(|(i, r)| (r.trigger_terms.iter().filter(|t| term_matches(t, &q)).count(), i, r))
        .filter(|(n, _, _)| *n > 0)
        .collect();
    manual.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<&Rule> = manual.into_iter().map(|(_, _, r)| r).collect();
    if let Some(index) = &store.auto_index {
        if !q.is_empty() {
            for hit in index.hybrid_search(query, k.max(1))? {
                if let Some(r) = store.rules.get(&hit.doc.id) {
                    out.push(r);
                }
            }
        }
    }
    let mut seen = HashSet::new();
    out.retain(|r| seen.insert(r.id.clone()));
    Ok(out)
}

pub const ENFORCE_SYSTEM: &str = "You rewrite EDA tool scripts so they follow the given rules. Keep everything the rules do not concern. Reply with the complete rewritten script in one fenced code block.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnforceOutcome {
    pub code: String,
    /// Set when the rewrite was rejected and the input kept.
    pub rejected: Option<String>,
}

pub fn enforce_prompt(code: &str, rules: &[&Rule]) -> Vec<Message> {
    let mut user = String::from("# Rules\n");
    for r in rules {
        user.push_str(&format!("## {}\n{}\n", r.title, r.body.trim_end()));
    }
    user.push_str(&format!("\n# Script\n```\n{}```\n", with_newline(code)));
    vec![Message::system(ENFORCE_SYSTEM), Message::user(user)]
}

fn with_newline(code: &str) -> String {
    if code.ends_with('\n') || code.is_empty() {
        code.to_string()
    } else {
        format!("{code}\n")
    }
}

/// First candidate block of `reply` that parses and contains real code.
pub fn first_parsing_block(reply: &str) -> Option<(String, ScriptModule)> {
    extract_code(reply).into_iter().find_map(|b| {
        let m = parse(&b).ok()?;
        is_code_like(&m).then_some((b, m))
    })
}

// a paragraph of prose like "Sure" parses as a bare name; demand something
// that does work
fn is_code_like(m: &ScriptModule) -> bool {
    m.statements().iter().any(|s| match &s.kind {
        StmtKind::Expr(e) => matches!(e.kind, ExprKind::Call { .. }),
        _ => true,
    })
}

/// Rule-grounded rewrite. With no rules the code comes back untouched and
/// the LLM is not called; a reply without parsing code keeps the original.
pub fn enforce(code: &str, rules: &[&Rule], llm: &dyn LlmClient) -> Result<EnforceOutcome, LlmError> {
    if rules.is_empty() {
        return Ok(EnforceOutcome { code: code.to_string(), rejected: None });
    }
    let reply = llm.complete(&enforce_prompt(code, rules), 0.0)?;
    Ok(match first_parsing_block(&reply) {
        Some((block, _)) => EnforceOutcome { code: block, rejected: None },
        None => EnforceOutcome {
            code: code.to_string(),
            rejected: Some("RuleRewriteRejected: reply contained no parsing script".into()),
        },
    })
}

const STOPWORDS: &[&str] =
    &["a", "an", "the", "of", "to", "in", "on", "for", "if", "is", "and", "or", "by", "at", "given", "true", "that"];

/// Renames the last object member the script uses to a plausible
/// hallucination built from its doc string (e.g. `power` -> `power_value`).
pub fn degrade(graph: &ApiGraph, module: &ScriptModule) -> Option<(ScriptModule, String, String)> {
    let report = simulate(graph, module);
    let mut used: Vec<(usize, String, String)> = Vec::new();
    for s in module.statements() {
        for_each_expr(s, &mut |e| {
            if let ExprKind::AttributeRef { name, .. } = &e.kind {
                if let Some((owner, _)) = report.accesses.iter().find(|(o, m)| m == name && o != GLOBAL_SCOPE) {
                    used.push((s.line, owner.clone(), name.clone()));
                }
            }
        });
    }
    let (_, owner, member) = used.into_iter().max_by_key(|(line, _, _)| *line)?;
    let obj = graph.objects.get(&owner)?;
    let doc = obj.members.get(&member).map(|m| m.doc.as_str()).unwrap_or("");
    let words: Vec<String> = tokenize(doc).into_iter().filter(|w| !STOPWORDS.contains(&w.as_str())).collect();
    let mut candidates: Vec<String> = words
        .iter()
        .filter(|w| **w != member)
        .map(|w| if member.contains(w.as_str()) { format!("{member}_value") } else { format!("{w}_{member}") })
        .collect();
    candidates.push(format!("{member}_value"));
    candidates.push(format!("get_{member}"));
    let fake = candidates.into_iter().find(|c| !obj.members.contains_key(c))?;

    let mut degraded = module.clone();
    rename_attr(&mut degraded.body, &member, &fake);
    Some((degraded, format!("{owner}.{member}"), fake))
}

fn for_each_expr(s: &Stmt, f: &mut dyn FnMut(&Expr)) {
    fn walk(e: &Expr, f: &mut dyn FnMut(&Expr)) {
        f(e);
        match &e.kind {
            ExprKind::Call { func, args } => {
                walk(func, f);
                args.iter().for_each(|a| walk(a, f));
            }
            ExprKind::AttributeRef { base, .. } | ExprKind::UnaryNot(base) => walk(base, f),
            ExprKind::Subscript { base, index } => {
                walk(base, f);
                walk(index, f);
            }
            ExprKind::Compare { lhs, rhs, .. } | ExprKind::BinOp { lhs, rhs, .. } => {
                walk(lhs, f);
                walk(rhs, f);
            }
            ExprKind::ListDisplay(items) => items.iter().for_each(|i| walk(i, f)),
            ExprKind::ListComp { elt, iter, cond, .. } => {
                walk(elt, f);
                walk(iter, f);
                if let Some(c) = cond {
                    walk(c, f);
                }
            }
            _ => {}
        }
    }
    match &s.kind {
        StmtKind::Assign { target, value } | StmtKind::AugAssign { target, value, .. } => {
            walk(target, f);
            walk(value, f);
        }
        StmtKind::For { iter, .. } => walk(iter, f),
        StmtKind::If { cond, .. } => walk(cond, f),
        StmtKind::Return(Some(e)) | StmtKind::Expr(e) => walk(e, f),
        _ => {}
    }
}

fn rename_attr(body: &mut [Stmt], from: &str, to: &str) {
    fn expr(e: &mut Expr, from: &str, to: &str) {
        match &mut e.kind {
            ExprKind::AttributeRef { base, name } => {
                if name == from {
                    *name = to.to_string();
                }
                expr(base, from, to);
            }
            ExprKind::Call { func, args } => {
                expr(func, from, to);
                args.iter_mut().for_each(|a| expr(a, from, to));
            }
            ExprKind::UnaryNot(b) => expr(b, from, to),
            ExprKind::Subscript { base, index } => {
                expr(base, from, to);
                expr(index, from, to);
            }
            ExprKind::Compare { lhs, rhs, .. } | ExprKind::BinOp { lhs, rhs, .. } => {
                expr(lhs, from, to);
                expr(rhs, from, to);
            }
            ExprKind::ListDisplay(items) => items.iter_mut().for_each(|i| expr(i, from, to)),
            ExprKind::ListComp { elt, iter, cond, .. } => {
                expr(elt, from, to);
                expr(iter, from, to);
                if let Some(c) = cond {
                    expr(c, from, to);
                }
            }
            _ => {}
        }
    }
    for s in body {
        match &mut s.kind {
            StmtKind::Assign { target, value } | StmtKind::AugAssign { target, value, .. } => {
                expr(target, from, to);
                expr(value, from, to);
            }
            StmtKind::For { iter, body, .. } => {
                expr(iter, from, to);
                rename_attr(body, from, to);
            }
            StmtKind::If { cond, then, orelse } => {
                expr(cond, from, to);
                rename_attr(then, from, to);
                rename_attr(orelse, from, to);
            }
            StmtKind::FunctionDef { body, .. } => rename_attr(body, from, to),
            StmtKind::Return(Some(e)) | StmtKind::Expr(e) => expr(e, from, to),
            StmtKind::Return(None) => {}
        }
    }
}

pub const EXTRACT_SYSTEM: &str = "You study a question and its correct EDA tool script and write rules that would steer a code writer to that script. Reply with a JSON array of objects with fields title, body and trigger_terms.";

#[derive(Debug, Deserialize)]
struct Candidate {
    title: String,
    body: String,
    #[serde(default)]
    trigger_terms: Vec<String>,
}

fn parse_candidates(reply: &str) -> Vec<Candidate> {
    let mut texts: Vec<String> = extract_code(reply);
    texts.push(reply.to_string());
    for t in texts {
        let t = t.trim();
        let (Some(start), Some(end)) = (t.find('['), t.rfind(']')) else {
            continue;
        };
        if let Ok(c) = serde_json::from_str::<Vec<Candidate>>(&t[start..=end]) {
            return c;
        }
    }
    Vec::new()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Extraction {
    pub rules: Vec<Rule>,
    pub proposed: usize,
    pub accepted: usize,
}

impl Extraction {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

pub fn extract_prompt(query: &str, golden: &str) -> Vec<Message> {
    vec![
        Message::system(EXTRACT_SYSTEM),
        Message::user(format!("Question: {query}\n\nCorrect script:\n```\n{}```\n", with_newline(golden))),
    ]
}

/// For each (query, golden code) pair, asks the LLM for candidate rules and
/// keeps those that repair a degraded copy of the golden code: the degraded
/// code is rewritten with the candidate alone and must simulate clean.
pub fn extract_rules_offline(
    qna: &[(String, String)],
    llm: &dyn LlmClient,
    graph: &ApiGraph,
    max_rules_per_pair: usize,
) -> Result<Extraction, RulesError> {
    let mut out = Extraction::default();
    for (index, (query, golden)) in qna.iter().enumerate() {
        let module = parse(golden).map_err(|e| RulesError::InvalidQna { index, reason: e.to_string() })?;
        if !simulate(graph, &module).clean {
            return Err(RulesError::InvalidQna { index, reason: "golden code does not simulate clean".into() });
        }
        let Some((degraded, _, _)) = degrade(graph, &module) else {
            continue;
        };
        let degraded_code = unparse(&degraded);
        let reply = llm.complete(&extract_prompt(query, golden), 0.0)?;
        let mut kept = 0;
        for cand in parse_candidates(&reply) {
            if kept >= max_rules_per_pair {
                break;
            }
            out.proposed += 1;
            let rule = Rule {
                id: format!("auto-{index}-{kept}"),
                title: cand.title,
                body: cand.body,
                trigger_terms: cand.trigger_terms,
                source: RuleSource::Auto,
                validation: None,
            };
            if rule.body.trim().is_empty() {
                continue;
            }
            let result = enforce(&degraded_code, &[&rule], llm)?;
            let clean = result.rejected.is_none() && parse(&result.code).is_ok_and(|m| simulate(graph, &m).clean);
            if clean {
                kept += 1;
                out.accepted += 1;
                out.rules.push(Rule {
                    validation: Some(RuleValidation { degraded: degraded_code.clone(), output: result.code }),
                    ..rule
                });
            }
        }
    }
    Ok(out)
}
