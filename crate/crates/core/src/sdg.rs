//! Random, seed-deterministic script generation over an [`ApiGraph`], with
//! comment/question annotation and JSON Lines dataset output.
//!
//! Every generated module is built from typed API edges only, so it
//! simulates clean by construction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api_graph::{ApiGraph, ApiMember, TypeRef, GLOBAL_SCOPE};
use crate::checker::simulate;
use crate::llm::{extract_code, LlmClient, LlmError, Message};
use crate::script_lang::{
    expr_to_string, parse, unparse, BinOpKind, CmpOp, Comment, Constant, Expr, ExprKind, ScriptModule, Stmt, StmtKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    Condition,
    Math,
    Iterator,
    OopChain,
}

impl OpKind {
    pub const ALL: [OpKind; 4] = [OpKind::Condition, OpKind::Math, OpKind::Iterator, OpKind::OopChain];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub op_kind_weights: BTreeMap<OpKind, f64>,
    /// Inclusive bounds on top-level statement-building rounds.
    pub iteration_range: (usize, usize),
    pub max_chain_depth: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            op_kind_weights: OpKind::ALL.iter().map(|k| (*k, 1.0)).collect(),
            iteration_range: (2, 5),
            max_chain_depth: 3,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SdgError> {
        let bad = |m: &str| Err(SdgError::InvalidConfig(m.to_string()));
        if self.op_kind_weights.values().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("weights must be finite and non-negative");
        }
        if !self.op_kind_weights.values().any(|w| *w > 0.0) {
            return bad("at least one operation weight must be positive");
        }
        if self.iteration_range.0 > self.iteration_range.1 {
            return bad("iteration range min exceeds max");
        }
        if self.iteration_range.1 == 0 {
            return bad("iteration range max must be at least 1");
        }
        if self.max_chain_depth == 0 {
            return bad("max_chain_depth must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SdgError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("graph exhausted: {0}")]
    ExhaustedGraph(String),
    #[error("annotation changed code statements")]
    AnnotationDrift,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("generated code failed validation: {0}")]
    Internal(String),
    #[error("dataset write failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub code: String,
    pub commented_code: Option<String>,
    pub question: Option<String>,
    pub apis_used: BTreeSet<(String, String)>,
    pub seed: u64,
}

/// Per-sample generator seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

// retry seeds for duplicates move into the high bits so they never collide
// with the seed ^ index family
fn retry_seed(seed: u64, index: u64, attempt: u64) -> u64 {
    derive_seed(seed, index) ^ attempt.rotate_right(16)
}

const MAX_OP_ATTEMPTS: usize = 64;
const STR_POOL: &[&str] = &["*", "hierarchical"];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Want {
    Any,
    Numeric,
    Bool,
    Object,
    Collection,
    Effect,
}

impl Want {
    fn accepts(self, graph: &ApiGraph, ty: &TypeRef) -> bool {
        match self {
            Want::Any => !matches!(ty, TypeRef::None | TypeRef::Unknown),
            Want::Numeric => ty.is_numeric(),
            Want::Bool => *ty == TypeRef::Bool,
            Want::Object => ty.object_name().is_some_and(|n| graph.objects.get(n).is_some_and(|o| !o.members.is_empty())),
            Want::Collection => element_type(graph, ty).is_some(),
            Want::Effect => *ty == TypeRef::None,
        }
    }
}

fn element_type(graph: &ApiGraph, ty: &TypeRef) -> Option<TypeRef> {
    match ty {
        TypeRef::List(inner) if **inner != TypeRef::Unknown => Some((**inner).clone()),
        TypeRef::Object(n) => graph.objects.get(n).and_then(|o| o.element.clone()),
        _ => None,
    }
}

struct Gen<'g, 'r> {
    graph: &'g ApiGraph,
    cfg: &'g GenConfig,
    rng: &'r mut ChaCha8Rng,
    vars: Vec<(String, TypeRef)>,
    names: HashMap<String, usize>,
    line: usize,
}

/// Builds one module per the graph-driven random flow: draw an operation
/// kind, pick start objects via globals, walk member edges of a compatible
/// type, fill parameters with literals or in-scope objects, repeat.
pub fn generate_ast(graph: &ApiGraph, config: &GenConfig, rng: &mut ChaCha8Rng) -> Result<ScriptModule, SdgError> {
    config.validate()?;
    if !graph.globals.values().any(|g| !matches!(g.returns, TypeRef::None | TypeRef::Unknown)) {
        return Err(SdgError::ExhaustedGraph("no global function returns a value".into()));
    }
    let mut g = Gen {
        graph,
        cfg: config,
        rng,
        // context variables are start objects alongside the globals
        vars: graph.context.iter().map(|(n, t)| (n.clone(), t.clone())).collect(),
        names: graph.context.keys().map(|n| (n.clone(), 1)).collect(),
        line: 0,
    };
    let kinds: Vec<(OpKind, f64)> = config.op_kind_weights.iter().map(|(k, w)| (*k, *w)).filter(|(_, w)| *w > 0.0).collect();
    let dist = WeightedIndex::new(kinds.iter().map(|(_, w)| *w)).map_err(|e| SdgError::InvalidConfig(e.to_string()))?;
    let (lo, hi) = config.iteration_range;
    let rounds = g.rng.gen_range(lo.max(1)..=hi.max(1));

    let mut body = Vec::new();
    let mut failures = 0;
    while body.len() < rounds {
        let kind = kinds[dist.sample(g.rng)].0;
        match g.op(kind, 0) {
            Some(stmts) => body.extend(stmts),
            None => {
                failures += 1;
                if failures >= MAX_OP_ATTEMPTS {
                    return Err(SdgError::ExhaustedGraph(format!(
                        "no realizable operation among {:?} after {MAX_OP_ATTEMPTS} attempts",
                        kinds.iter().map(|(k, _)| *k).collect::<Vec<_>>()
                    )));
                }
            }
        }
    }
    // re-derive line numbers from the rendered text
    parse(&unparse(&ScriptModule::new(body))).map_err(|e| SdgError::Internal(e.to_string()))
}

impl Gen<'_, '_> {
    fn next_line(&mut self) -> usize {
        self.line += 1;
        self.line
    }

    fn fresh(&mut self, base: &str) -> String {
        let base = if base.is_empty() { "value" } else { base };
        let n = self.names.entry(base.to_string()).or_insert(0);
        *n += 1;
        if *n == 1 {
            base.to_string()
        } else {
            format!("{base}_{}", *n - 1)
        }
    }

    fn vars_where(&self, want: Want) -> Vec<(String, TypeRef)> {
        self.vars.iter().filter(|(_, t)| want.accepts(self.graph, t)).cloned().collect()
    }

    fn op(&mut self, kind: OpKind, depth: usize) -> Option<Vec<Stmt>> {
        let mark = (self.vars.len(), self.line);
        let out = match kind {
            OpKind::OopChain => self.oop_op(),
            OpKind::Math => self.math_op(),
            OpKind::Iterator if depth < 2 => self.iter_op(depth),
            OpKind::Condition if depth < 2 => self.cond_op(depth),
            _ => None,
        };
        if out.is_none() {
            self.vars.truncate(mark.0);
            self.line = mark.1;
        }
        out
    }

    fn literal(&mut self, ty: &TypeRef, flags: &[String]) -> Option<Expr> {
        let l = self.line;
        let kind = match ty {
            _ if !flags.is_empty() => ExprKind::StringLiteral(flags.choose(self.rng)?.clone()),
            TypeRef::Str => ExprKind::StringLiteral(STR_POOL.choose(self.rng)?.to_string()),
            TypeRef::Int | TypeRef::Unknown => ExprKind::Constant(Constant::Int(self.rng.gen_range(0..10))),
            TypeRef::Float => ExprKind::Constant(Constant::Float(self.rng.gen_range(0..100) as f64 / 10.0)),
            TypeRef::Bool => ExprKind::Constant(Constant::Bool(self.rng.gen_bool(0.5))),
            _ => {
                let candidates: Vec<String> = self.vars.iter().filter(|(_, t)| t == ty).map(|(n, _)| n.clone()).collect();
                ExprKind::Name(candidates.choose(self.rng)?.clone())
            }
        };
        Some(Expr::new(l, kind))
    }

    fn args(&mut self, member: &ApiMember) -> Option<Vec<Expr>> {
        let mut args = Vec::new();
        for p in &member.params {
            if p.default.is_some() && !self.rng.gen_bool(0.5) {
                break;
            }
            args.push(self.literal(&p.ty, &p.flags)?);
        }
        if args.len() < member.required_params() {
            return None;
        }
        Some(args)
    }

    fn satisfiable(&self, member: &ApiMember) -> bool {
        member.params.iter().filter(|p| p.default.is_none()).all(|p| match &p.ty {
            TypeRef::Object(_) | TypeRef::List(_) => self.vars.iter().any(|(_, t)| *t == p.ty),
            _ => true,
        })
    }

    fn global_call(&mut self, want: Want) -> Option<(Expr, TypeRef)> {
        let graph = self.graph;
        let candidates: Vec<&ApiMember> =
            graph.globals.values().filter(|g| want.accepts(graph, &g.returns) && self.satisfiable(g)).collect();
        let member = *candidates.choose(self.rng)?;
        let args = self.args(member)?;
        let l = self.line;
        Some((Expr::call(l, Expr::name(l, &member.name), args), member.returns.clone()))
    }

    /// Random walk over member edges from `base`, ending on a value `want` accepts.
    fn chain(&mut self, base: Expr, base_ty: TypeRef, want: Want) -> Option<(Expr, TypeRef, String)> {
        let graph = self.graph;
        let max = self.rng.gen_range(1..=self.cfg.max_chain_depth);
        let (mut expr, mut ty, mut last) = (base, base_ty, String::new());
        for step in 0..max {
            let final_step = step + 1 == max;
            let l = self.line;
            let mut options: Vec<(Option<&ApiMember>, TypeRef)> = Vec::new();
            if let Some(obj) = ty.object_name().and_then(|n| graph.objects.get(n)) {
                for m in obj.members.values() {
                    if !self.satisfiable(m) {
                        continue;
                    }
                    let ok = want.accepts(graph, &m.returns) || (!final_step && Want::Object.accepts(graph, &m.returns));
                    if ok {
                        options.push((Some(m), m.returns.clone()));
                    }
                }
            }
            if let Some(elem) = element_type(graph, &ty) {
                if want.accepts(graph, &elem) || (!final_step && Want::Object.accepts(graph, &elem)) {
                    options.push((None, elem));
                }
            }
            let (member, next) = options.choose(self.rng)?.clone();
            expr = match member {
                Some(m) => {
                    last = m.name.clone();
                    let args = self.args(m)?;
                    Expr::method_call(l, expr, &m.name, args)
                }
                None => Expr::new(
                    l,
                    ExprKind::Subscript {
                        base: Box::new(expr),
                        index: Box::new(Expr::new(l, ExprKind::Constant(Constant::Int(0)))),
                    },
                ),
            };
            ty = next;
            if want.accepts(graph, &ty) && (final_step || self.rng.gen_bool(0.5)) {
                return Some((expr, ty, last));
            }
        }
        None
    }

    /// A chain starting from an in-scope object or a fresh global call.
    fn value(&mut self, want: Want) -> Option<(Expr, TypeRef, String)> {
        let mut bases = self.vars_where(Want::Object);
        bases.extend(self.vars_where(Want::Collection));
        if bases.is_empty() || self.rng.gen_bool(0.2) {
            if want != Want::Effect && self.rng.gen_bool(0.5) {
                if let Some((e, t)) = self.global_call(want) {
                    let name = call_name(&e);
                    return Some((e, t, name));
                }
            }
            let (e, t) = self.global_call(Want::Object).or_else(|| self.global_call(Want::Collection))?;
            return self.chain(e, t, want);
        }
        let (name, ty) = bases.choose(self.rng)?.clone();
        let l = self.line;
        self.chain(Expr::name(l, name), ty, want)
    }

    fn assign(&mut self, name: &str, value: Expr, ty: TypeRef) -> Stmt {
        let l = value.line;
        self.vars.push((name.to_string(), ty));
        Stmt::new(l, StmtKind::Assign { target: Expr::name(l, name), value })
    }

    fn oop_op(&mut self) -> Option<Vec<Stmt>> {
        self.next_line();
        let want = *[Want::Object, Want::Collection, Want::Any, Want::Effect].choose(self.rng)?;
        let (expr, ty, last) = self.value(want).or_else(|| self.value(Want::Any))?;
        if ty == TypeRef::None {
            return Some(vec![Stmt::new(expr.line, StmtKind::Expr(expr))]);
        }
        let name = self.fresh(&var_base(&last, &ty));
        Some(vec![self.assign(&name, expr, ty)])
    }

    fn numeric_operand(&mut self) -> Option<(Expr, TypeRef)> {
        let nums = self.vars_where(Want::Numeric);
        let l = self.line;
        if !nums.is_empty() && self.rng.gen_bool(0.5) {
            let (n, t) = nums.choose(self.rng)?.clone();
            return Some((Expr::name(l, n), t));
        }
        self.value(Want::Numeric).map(|(e, t, _)| (e, t))
    }

    fn math_op(&mut self) -> Option<Vec<Stmt>> {
        let l = self.next_line();
        let (lhs, lt) = self.numeric_operand()?;
        let op = *[BinOpKind::Add, BinOpKind::Sub, BinOpKind::Mul, BinOpKind::Div].choose(self.rng)?;
        let (rhs, rt) = if self.rng.gen_bool(0.5) {
            let ty = if self.rng.gen_bool(0.5) { TypeRef::Int } else { TypeRef::Float };
            let mut lit = self.literal(&ty, &[])?;
            if op == BinOpKind::Div {
                lit = Expr::new(l, ExprKind::Constant(Constant::Int(self.rng.gen_range(1..10))));
            }
            let t = lit_type(&lit);
            (lit, t)
        } else {
            self.numeric_operand()?
        };
        let ty = if lt == TypeRef::Int && rt == TypeRef::Int && op != BinOpKind::Div { TypeRef::Int } else { TypeRef::Float };
        let value = Expr::new(l, ExprKind::BinOp { lhs: Box::new(lhs), op, rhs: Box::new(rhs) });
        let name = self.fresh("result");
        Some(vec![self.assign(&name, value, ty)])
    }

    fn condition(&mut self) -> Option<Expr> {
        let l = self.line;
        if self.rng.gen_bool(0.5) {
            let (e, _, _) = self.value(Want::Bool)?;
            return Some(if self.rng.gen_bool(0.3) { Expr::new(l, ExprKind::UnaryNot(Box::new(e))) } else { e });
        }
        let (lhs, ty) = self.numeric_operand()?;
        let rhs = self.literal(&ty, &[])?;
        let op = *[CmpOp::Gt, CmpOp::Lt, CmpOp::Ge, CmpOp::Le].choose(self.rng)?;
        Some(Expr::new(l, ExprKind::Compare { lhs: Box::new(lhs), op, rhs: Box::new(rhs) }))
    }

    fn inner_block(&mut self, depth: usize) -> Option<Vec<Stmt>> {
        let kinds = [OpKind::OopChain, OpKind::Math, OpKind::Condition, OpKind::Iterator];
        for _ in 0..8 {
            let k = *kinds[..if depth + 1 < 2 { 4 } else { 2 }].choose(self.rng)?;
            if let Some(s) = self.op(k, depth + 1) {
                return Some(s);
            }
        }
        None
    }

    fn cond_op(&mut self, depth: usize) -> Option<Vec<Stmt>> {
        let l = self.next_line();
        let cond = self.condition()?;
        let mark = self.vars.len();
        let then = self.inner_block(depth)?;
        self.vars.truncate(mark);
        Some(vec![Stmt::new(l, StmtKind::If { cond, then, orelse: Vec::new() })])
    }

    fn collection(&mut self) -> Option<(Expr, TypeRef)> {
        let l = self.line;
        let colls = self.vars_where(Want::Collection);
        if !colls.is_empty() && self.rng.gen_bool(0.6) {
            let (n, t) = colls.choose(self.rng)?.clone();
            return Some((Expr::name(l, n), t));
        }
        self.global_call(Want::Collection).or_else(|| self.value(Want::Collection).map(|(e, t, _)| (e, t)))
    }

    fn iter_op(&mut self, depth: usize) -> Option<Vec<Stmt>> {
        let (iter, coll_ty) = {
            self.next_line();
            self.collection()?
        };
        let elem = element_type(self.graph, &coll_ty)?;
        let var = self.fresh(&var_base("", &elem));
        let mut pre = Vec::new();
        let for_line;
        let body;
        let mark = self.vars.len();

        let template = self.rng.gen_range(0..3);
        if template < 2 && Want::Object.accepts(self.graph, &elem) {
            // reduction over a numeric member: running max or running total
            let acc_line = iter.line;
            for_line = self.next_line();
            self.vars.push((var.clone(), elem.clone()));
            let l = self.next_line();
            let Some((num, _, member)) = self.chain(Expr::name(l, &var), elem.clone(), Want::Numeric) else {
                self.vars.truncate(mark);
                return None;
            };
            let acc = self.fresh(&format!("{}_{member}", if template == 0 { "largest" } else { "total" }));
            let init = Expr::new(acc_line, ExprKind::Constant(Constant::Int(0)));
            let update = if template == 0 {
                let assign_line = self.next_line();
                let num2 = num.clone();
                Stmt::new(
                    l,
                    StmtKind::If {
                        cond: Expr::new(
                            l,
                            ExprKind::Compare { lhs: Box::new(num), op: CmpOp::Gt, rhs: Box::new(Expr::name(l, &acc)) },
                        ),
                        then: vec![Stmt::new(
                            assign_line,
                            StmtKind::Assign { target: Expr::name(assign_line, &acc), value: num2 },
                        )],
                        orelse: Vec::new(),
                    },
                )
            } else {
                Stmt::new(l, StmtKind::AugAssign { target: Expr::name(l, &acc), op: BinOpKind::Add, value: num })
            };
            self.vars.truncate(mark);
            pre.push(Stmt::new(acc_line, StmtKind::Assign { target: Expr::name(acc_line, &acc), value: init }));
            body = vec![update];
            self.vars.push((acc, TypeRef::Float));
        } else {
            for_line = self.next_line();
            self.vars.push((var.clone(), elem));
            let inner = self.inner_block(depth);
            self.vars.truncate(mark);
            body = inner?;
        }
        pre.push(Stmt::new(for_line, StmtKind::For { var, iter, body }));
        Some(pre)
    }
}

fn lit_type(e: &Expr) -> TypeRef {
    match &e.kind {
        ExprKind::Constant(Constant::Float(_)) => TypeRef::Float,
        _ => TypeRef::Int,
    }
}

fn call_name(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Call { func, .. } => match &func.kind {
            ExprKind::Name(n) => n.trim_start_matches("get_").to_string(),
            ExprKind::AttributeRef { name, .. } => name.clone(),
            _ => String::new(),
        },
        _ => String::new(),
    }
}

fn var_base(member: &str, ty: &TypeRef) -> String {
    let raw = match ty {
        TypeRef::List(inner) => format!("{}s", inner.object_name().unwrap_or(if member.is_empty() { "item" } else { member })),
        TypeRef::Object(n) if member.is_empty() || member.starts_with("get_") => n.clone(),
        _ if member.is_empty() => "value".to_string(),
        _ => member.to_string(),
    };
    raw.trim_start_matches("get_").to_lowercase()
}

/// Generates, renders and validates one sample from `seed`.
pub fn generate_sample(graph: &ApiGraph, config: &GenConfig, seed: u64) -> Result<GeneratedSample, SdgError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let module = generate_ast(graph, config, &mut rng)?;
    let code = unparse(&module);
    let report = simulate(graph, &module);
    if !report.clean {
        return Err(SdgError::Internal(format!("{}\n{code}", report.render())));
    }
    Ok(GeneratedSample { code, commented_code: None, question: None, apis_used: report.accesses, seed })
}

pub const ANNOTATE_SYSTEM: &str = "You document EDA tool scripts. Return the script with one comment line above every statement and no other change, inside a fenced code block. After the block write one line starting with 'Question:' holding the single question this script answers.";

/// Comments and a question from an LLM. The reply's code must match the
/// sample structurally; anything else is rejected as drift.
pub fn annotate(sample: &GeneratedSample, llm: &dyn LlmClient) -> Result<GeneratedSample, SdgError> {
    let module = parse(&sample.code).map_err(|e| SdgError::Internal(e.to_string()))?;
    if module.body.is_empty() {
        return Ok(sample.clone());
    }
    let prompt = [Message::system(ANNOTATE_SYSTEM), Message::user(sample.code.clone())];
    let reply = llm.complete(&prompt, 0.0)?;
    let commented = extract_code(&reply)
        .into_iter()
        .find_map(|block| parse(&block).ok().filter(|m| m.same_structure(&module)).map(|_| block))
        .ok_or(SdgError::AnnotationDrift)?;
    let question =
        reply.lines().find_map(|l| l.trim().strip_prefix("Question:")).map(|q| q.trim().to_string()).filter(|q| !q.is_empty());
    Ok(GeneratedSample { commented_code: Some(ensure_newline(commented)), question, ..sample.clone() })
}

fn ensure_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

/// The offline annotator: one comment per statement built from member doc
/// strings, and a question derived from the last top-level statement.
pub fn annotate_with_template(sample: &GeneratedSample, graph: &ApiGraph) -> Result<GeneratedSample, SdgError> {
    let mut module = parse(&sample.code).map_err(|e| SdgError::Internal(e.to_string()))?;
    if module.body.is_empty() {
        return Ok(sample.clone());
    }
    let docs = doc_index(graph);
    let mut comments = BTreeMap::new();
    for s in module.statements() {
        comments.insert(s.line, Comment { text: describe(s, &docs), column: 0, trailing: false });
    }
    let last = module.body.last().map(|s| describe(s, &docs)).unwrap_or_default();
    module.comments = comments;
    module.source_lines.clear();
    Ok(GeneratedSample {
        commented_code: Some(unparse(&module)),
        question: Some(format!("Write a code to {}.", lower_first(&last))),
        ..sample.clone()
    })
}

fn doc_index(graph: &ApiGraph) -> HashMap<String, String> {
    let mut docs = HashMap::new();
    for g in graph.globals.values() {
        docs.entry(g.name.clone()).or_insert_with(|| g.doc.clone());
    }
    for o in graph.objects.values() {
        for m in o.members.values() {
            docs.entry(m.name.clone()).or_insert_with(|| m.doc.clone());
        }
    }
    docs
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

fn last_member(e: &Expr) -> Option<&str> {
    match &e.kind {
        ExprKind::Call { func, .. } => match &func.kind {
            ExprKind::Name(n) => Some(n),
            ExprKind::AttributeRef { name, .. } => Some(name),
            _ => None,
        },
        ExprKind::AttributeRef { name, .. } => Some(name),
        ExprKind::Subscript { base, .. } => last_member(base),
        _ => None,
    }
}

fn describe(s: &Stmt, docs: &HashMap<String, String>) -> String {
    let doc_of = |e: &Expr| last_member(e).and_then(|m| docs.get(m)).filter(|d| !d.is_empty()).map(|d| lower_first(d));
    match &s.kind {
        StmtKind::Assign { target, value } => {
            let t = expr_to_string(target);
            match &value.kind {
                ExprKind::Constant(_) => format!("Initialize {t} to {}", expr_to_string(value)),
                ExprKind::BinOp { .. } => format!("Compute {t} as {}", expr_to_string(value)),
                _ => match doc_of(value) {
                    Some(d) => format!("Store the {d} in {t}"),
                    None => format!("Set {t} to {}", expr_to_string(value)),
                },
            }
        }
        StmtKind::AugAssign { target, value, .. } => match doc_of(value) {
            Some(d) => format!("Add the {d} to {}", expr_to_string(target)),
            None => format!("Add {} to {}", expr_to_string(value), expr_to_string(target)),
        },
        StmtKind::For { var, iter, .. } => match doc_of(iter) {
            Some(d) => format!("Iterate over each {var} in the {d}"),
            None => format!("Iterate over each {var} in {}", expr_to_string(iter)),
        },
        StmtKind::If { cond, .. } => format!("Check whether {}", expr_to_string(cond)),
        StmtKind::Return(Some(v)) => format!("Return {}", expr_to_string(v)),
        StmtKind::Return(None) => "Return".into(),
        StmtKind::FunctionDef { name, .. } => format!("Define {name}"),
        StmtKind::Expr(e) => match doc_of(e) {
            Some(d) => format!("Call {} to {}", expr_to_string(e), d),
            None => format!("Call {}", expr_to_string(e)),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub seed: u64,
    pub code: String,
    pub commented_code: Option<String>,
    pub question: Option<String>,
    pub apis_used: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub records: usize,
    /// Exact-code duplicates that were dropped and regenerated.
    pub duplicates_dropped: usize,
    /// Duplicates kept because the retry bound ran out.
    pub duplicates_kept: usize,
    pub members_covered: usize,
    pub members_total: usize,
    pub coverage: f64,
    pub uncovered: Vec<String>,
}

const DEDUP_RETRIES: u64 = 16;

/// Writes `n` JSON Lines records to `out`. On failure the records written so
/// far are followed by a `{"truncated": true, ...}` line and the error is returned.
pub fn generate_dataset(
    graph: &ApiGraph,
    config: &GenConfig,
    n: usize,
    llm: Option<&dyn LlmClient>,
    out: &mut dyn Write,
) -> Result<DatasetSummary, SdgError> {
    config.validate()?;
    if n == 0 {
        return Err(SdgError::InvalidConfig("n must be at least 1".into()));
    }
    let mut seen: HashSet<String> = HashSet::new();
    let mut covered: BTreeSet<(String, String)> = BTreeSet::new();
    let (mut dropped, mut kept) = (0, 0);

    let result = (|| -> Result<(), SdgError> {
        for index in 0..n as u64 {
            let mut attempt = 0;
            let sample = loop {
                let seed = if attempt == 0 { derive_seed(config.seed, index) } else { retry_seed(config.seed, index, attempt) };
                let sample = generate_sample(graph, config, seed)?;
                if seen.insert(sample.code.clone()) {
                    break sample;
                }
                attempt += 1;
                if attempt > DEDUP_RETRIES {
                    kept += 1;
                    break sample;
                }
                dropped += 1;
            };
            let sample = match llm {
                Some(llm) => annotate(&sample, llm)?,
                None => annotate_with_template(&sample, graph)?,
            };
            covered.extend(sample.apis_used.iter().cloned());
            let record = DatasetRecord {
                id: format!("sdg-{}-{index:06}", config.seed),
                seed: sample.seed,
                code: sample.code,
                commented_code: sample.commented_code,
                question: sample.question,
                apis_used: sample.apis_used.into_iter().collect(),
            };
            serde_json::to_writer(&mut *out, &record).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    })();

    if let Err(e) = result {
        let marker = serde_json::json!({ "truncated": true, "error": e.to_string() });
        let _ = writeln!(out, "{marker}");
        let _ = out.flush();
        return Err(e);
    }
    out.flush()?;

    let all = graph.all_member_keys();
    let members_covered = all.intersection(&covered).count();
    let uncovered =
        all.difference(&covered).map(|(o, m)| if o == GLOBAL_SCOPE { m.clone() } else { format!("{o}.{m}") }).collect();
    Ok(DatasetSummary {
        records: n,
        duplicates_dropped: dropped,
        duplicates_kept: kept,
        members_covered,
        members_total: all.len(),
        coverage: if all.is_empty() { 0.0 } else { members_covered as f64 / all.len() as f64 },
        uncovered,
    })
}

/// Member coverage of a set of records: fraction of graph members used at least once.
pub fn coverage(graph: &ApiGraph, records: &[DatasetRecord]) -> f64 {
    let all = graph.all_member_keys();
    if all.is_empty() {
        return 0.0;
    }
    let used: BTreeSet<(String, String)> = records.iter().flat_map(|r| r.apis_used.iter().cloned()).collect();
    all.intersection(&used).count() as f64 / all.len() as f64
}
