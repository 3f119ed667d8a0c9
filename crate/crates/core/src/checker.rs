//! Static simulation of a script against the API graph.
//!
//! Types flow through assignments, loop variables and call returns. Every
//! member access on a known object type is checked against the graph; an
//! access that fails yields `Unknown`, and nothing is reported on `Unknown`
//! values, so one mistake produces one diagnostic.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use serde::Serialize;

use crate::api_graph::{
    render_path, shortest_path, valid_globals, valid_members, ApiGraph, ApiMember, GraphPath, TypeRef, GLOBAL_SCOPE,
};
use crate::script_lang::{expr_to_string, BinOpKind, Constant, Expr, ExprKind, ScriptModule, Stmt, StmtKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DiagnosticKind {
    UnknownMember,
    IncompatibleChain,
    UnknownGlobal,
    ArityMismatch,
    InvalidFlag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub object_type: String,
    pub member: String,
    pub kind: DiagnosticKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SimReport {
    pub diagnostics: Vec<Diagnostic>,
    pub clean: bool,
    pub checked_calls: usize,
    pub valid_calls: usize,
    /// `(object type, member)` pairs accessed validly; globals under [`GLOBAL_SCOPE`].
    pub accesses: BTreeSet<(String, String)>,
}

impl SimReport {
    pub fn score(&self) -> f64 {
        if self.checked_calls == 0 {
            1.0
        } else {
            self.valid_calls as f64 / self.checked_calls as f64
        }
    }

    /// `Line No. N: ...` lines, one per diagnostic.
    pub fn render(&self) -> String {
        self.diagnostics.iter().map(|d| format!("{}\n", d.message)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttrHint {
    pub owner: String,
    pub name: String,
    pub doc: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeedbackItem {
    pub line: usize,
    pub object_type: String,
    pub member: String,
    pub valid_attrs: Vec<AttrHint>,
    #[serde(serialize_with = "serialize_path")]
    pub short_path: Option<GraphPath>,
}

fn serialize_path<S: serde::Serializer>(path: &Option<GraphPath>, s: S) -> Result<S::Ok, S::Error> {
    match path {
        Some(p) => s.serialize_some(&render_path(p)),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Feedback {
    pub items: Vec<FeedbackItem>,
}

impl Feedback {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

const LIST_METHODS: &[&str] =
    &["append", "extend", "insert", "remove", "pop", "index", "count", "sort", "reverse", "clear", "copy"];
const STR_METHODS: &[&str] = &["lower", "upper", "strip", "startswith", "endswith", "split", "replace", "find", "format", "join"];
const BUILTINS: &[&str] = &["print", "len", "range", "min", "max", "sum", "sorted", "abs", "str", "int", "float", "bool", "list"];

#[derive(Clone)]
enum FnState<'m> {
    Unchecked(&'m [String], &'m [Stmt]),
    InProgress,
    Done(TypeRef),
}

type Env = HashMap<String, TypeRef>;

struct Simulator<'g, 'm> {
    graph: &'g ApiGraph,
    report: SimReport,
    functions: HashMap<String, FnState<'m>>,
    returns: Vec<Vec<TypeRef>>,
}

/// Walks `module` against `graph` and reports every invalid API usage.
pub fn simulate(graph: &ApiGraph, module: &ScriptModule) -> SimReport {
    let mut sim = Simulator { graph, report: SimReport::default(), functions: HashMap::new(), returns: Vec::new() };
    let mut env: Env = graph.context.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    sim.register_functions(&module.body);
    sim.block(&module.body, &mut env);

    // functions never called are still checked, with unknown parameters
    let pending: Vec<(String, &[String], &[Stmt])> = sim
        .functions
        .iter()
        .filter_map(|(name, st)| match st {
            FnState::Unchecked(p, b) => Some((name.clone(), *p, *b)),
            _ => None,
        })
        .collect();
    let mut pending = pending;
    pending.sort_by_key(|(_, _, body)| body.first().map_or(0, |s| s.line));
    for (name, params, body) in pending {
        if matches!(sim.functions.get(&name), Some(FnState::Unchecked(..))) {
            let args = vec![TypeRef::Unknown; params.len()];
            sim.check_function(&name, params, body, &args, &env);
        }
    }

    let mut report = sim.report;
    report.diagnostics.sort_by_key(|d| d.line);
    report.clean = report.diagnostics.is_empty();
    report
}

/// Fraction of checked API accesses that are valid; 1.0 when nothing was checked.
pub fn structural_score(graph: &ApiGraph, module: &ScriptModule) -> f64 {
    simulate(graph, module).score()
}

impl<'g, 'm> Simulator<'g, 'm> {
    fn register_functions(&mut self, body: &'m [Stmt]) {
        for s in body {
            if let StmtKind::FunctionDef { name, params, body } = &s.kind {
                self.functions.insert(name.clone(), FnState::Unchecked(params, body));
            }
        }
    }

    fn diag(&mut self, line: usize, object_type: &str, member: &str, kind: DiagnosticKind, message: String) {
        self.report.diagnostics.push(Diagnostic {
            line,
            object_type: object_type.to_string(),
            member: member.to_string(),
            kind,
            message: format!("Line No. {line}: {message}"),
        });
    }

    fn block(&mut self, body: &'m [Stmt], env: &mut Env) {
        for s in body {
            self.stmt(s, env);
        }
    }

    fn stmt(&mut self, s: &'m Stmt, env: &mut Env) {
        match &s.kind {
            StmtKind::FunctionDef { name, params, body } => {
                self.functions.entry(name.clone()).or_insert(FnState::Unchecked(params, body));
                env.remove(name);
            }
            StmtKind::Assign { target, value } => {
                let ty = self.expr(value, env);
                self.assign(target, ty, env);
            }
            StmtKind::AugAssign { target, op, value } => {
                let current = self.expr(target, env);
                let rhs = self.expr(value, env);
                let ty = arith_type(&current, *op, &rhs);
                self.assign_name_only(target, ty, env);
            }
            StmtKind::For { var, iter, body } => {
                let iter_ty = self.expr(iter, env);
                let elem = self.element_of(&iter_ty, iter, s.line);
                env.insert(var.clone(), elem);
                self.block(body, env);
            }
            StmtKind::If { cond, then, orelse } => {
                self.expr(cond, env);
                self.block(then, env);
                self.block(orelse, env);
            }
            StmtKind::Return(value) => {
                let ty = value.as_ref().map_or(TypeRef::None, |v| self.expr(v, env));
                if let Some(frame) = self.returns.last_mut() {
                    frame.push(ty);
                }
            }
            StmtKind::Expr(e) => {
                self.expr(e, env);
            }
        }
    }

    fn assign(&mut self, target: &Expr, ty: TypeRef, env: &mut Env) {
        match &target.kind {
            ExprKind::Name(n) => {
                env.insert(n.clone(), ty);
            }
            _ => {
                self.expr(target, env);
            }
        }
    }

    fn assign_name_only(&mut self, target: &Expr, ty: TypeRef, env: &mut Env) {
        if let ExprKind::Name(n) = &target.kind {
            env.insert(n.clone(), ty);
        }
    }

    fn element_of(&mut self, ty: &TypeRef, subject: &Expr, line: usize) -> TypeRef {
        match ty {
            TypeRef::Unknown => TypeRef::Unknown,
            TypeRef::List(inner) => (**inner).clone(),
            TypeRef::Str => TypeRef::Str,
            TypeRef::Object(name) => match self.graph.objects.get(name).and_then(|o| o.element.clone()) {
                Some(elem) => elem,
                None => {
                    self.not_iterable(ty, subject, line);
                    TypeRef::Unknown
                }
            },
            _ => {
                self.not_iterable(ty, subject, line);
                TypeRef::Unknown
            }
        }
    }

    fn not_iterable(&mut self, ty: &TypeRef, subject: &Expr, line: usize) {
        self.report.checked_calls += 1;
        let text = expr_to_string(subject);
        self.diag(
            line,
            &ty.to_string(),
            "[]",
            DiagnosticKind::IncompatibleChain,
            format!("{text} of datatype {ty} is not iterable"),
        );
    }

    fn expr(&mut self, e: &Expr, env: &mut Env) -> TypeRef {
        match &e.kind {
            ExprKind::Name(n) => env.get(n).cloned().unwrap_or(TypeRef::Unknown),
            ExprKind::Constant(c) => match c {
                Constant::Int(_) => TypeRef::Int,
                Constant::Float(_) => TypeRef::Float,
                Constant::Bool(_) => TypeRef::Bool,
                Constant::None => TypeRef::None,
            },
            ExprKind::StringLiteral(_) => TypeRef::Str,
            ExprKind::AttributeRef { base, name } => {
                let base_ty = self.expr(base, env);
                self.member_access(&base_ty, base, name, e.line, None)
            }
            ExprKind::Call { func, args } => self.call(func, args, e.line, env),
            ExprKind::Subscript { base, index } => {
                let base_ty = self.expr(base, env);
                self.expr(index, env);
                match &base_ty {
                    TypeRef::Unknown => TypeRef::Unknown,
                    TypeRef::List(inner) => (**inner).clone(),
                    TypeRef::Str => TypeRef::Str,
                    TypeRef::Object(name) if self.graph.objects.get(name).is_some_and(|o| o.element.is_some()) => {
                        self.graph.objects[name].element.clone().unwrap()
                    }
                    other => {
                        self.report.checked_calls += 1;
                        let text = expr_to_string(base);
                        self.diag(
                            e.line,
                            &other.to_string(),
                            "[]",
                            DiagnosticKind::IncompatibleChain,
                            format!("{text} of datatype {other} cannot be indexed"),
                        );
                        TypeRef::Unknown
                    }
                }
            }
            ExprKind::Compare { lhs, rhs, .. } => {
                self.expr(lhs, env);
                self.expr(rhs, env);
                TypeRef::Bool
            }
            ExprKind::BinOp { lhs, op, rhs } => {
                let l = self.expr(lhs, env);
                let r = self.expr(rhs, env);
                arith_type(&l, *op, &r)
            }
            ExprKind::UnaryNot(inner) => {
                self.expr(inner, env);
                TypeRef::Bool
            }
            ExprKind::ListDisplay(items) => {
                let mut elem = TypeRef::Unknown;
                for item in items {
                    let t = self.expr(item, env);
                    if elem == TypeRef::Unknown {
                        elem = t;
                    }
                }
                TypeRef::List(Box::new(elem))
            }
            ExprKind::ListComp { elt, var, iter, cond } => {
                let iter_ty = self.expr(iter, env);
                let elem = self.element_of(&iter_ty, iter, e.line);
                let mut inner = env.clone();
                inner.insert(var.clone(), elem);
                if let Some(c) = cond {
                    self.expr(c, &mut inner);
                }
                let t = self.expr(elt, &mut inner);
                TypeRef::List(Box::new(t))
            }
        }
    }

    fn call(&mut self, func: &Expr, args: &[Expr], line: usize, env: &mut Env) -> TypeRef {
        match &func.kind {
            ExprKind::AttributeRef { base, name } => {
                let base_ty = self.expr(base, env);
                let arg_types: Vec<TypeRef> = args.iter().map(|a| self.expr(a, env)).collect();
                self.member_access(&base_ty, base, name, line, Some((args, &arg_types)))
            }
            ExprKind::Name(name) => {
                let arg_types: Vec<TypeRef> = args.iter().map(|a| self.expr(a, env)).collect();
                if env.contains_key(name) {
                    return TypeRef::Unknown;
                }
                if let Some(state) = self.functions.get(name).cloned() {
                    return match state {
                        FnState::Unchecked(params, body) => self.check_function(name, params, body, &arg_types, env),
                        FnState::InProgress => TypeRef::Unknown,
                        FnState::Done(t) => t,
                    };
                }
                if BUILTINS.contains(&name.as_str()) {
                    return builtin_type(name, &arg_types);
                }
                if self.graph.objects.contains_key(name) {
                    return TypeRef::Object(name.clone());
                }
                self.report.checked_calls += 1;
                match self.graph.global(name) {
                    Some(member) => {
                        if self.check_signature(member, GLOBAL_SCOPE, name, name, args, line) {
                            self.report.valid_calls += 1;
                            self.report.accesses.insert((GLOBAL_SCOPE.to_string(), name.clone()));
                        }
                        member.returns.clone()
                    }
                    None => {
                        self.diag(
                            line,
                            GLOBAL_SCOPE,
                            name,
                            DiagnosticKind::UnknownGlobal,
                            format!("{name} is not a known global function"),
                        );
                        TypeRef::Unknown
                    }
                }
            }
            _ => TypeRef::Unknown,
        }
    }

    fn check_function(&mut self, name: &str, params: &'m [String], body: &'m [Stmt], args: &[TypeRef], env: &Env) -> TypeRef {
        self.functions.insert(name.to_string(), FnState::InProgress);
        let mut local = env.clone();
        for (i, p) in params.iter().enumerate() {
            local.insert(p.clone(), args.get(i).cloned().unwrap_or(TypeRef::Unknown));
        }
        self.register_functions(body);
        self.returns.push(Vec::new());
        self.block(body, &mut local);
        let returns = self.returns.pop().unwrap_or_default();
        let ty = returns.into_iter().find(|t| *t != TypeRef::Unknown).unwrap_or(TypeRef::Unknown);
        self.functions.insert(name.to_string(), FnState::Done(ty.clone()));
        ty
    }

    /// Arity and flag checks; returns true when the call is valid.
    fn check_signature(
        &mut self,
        member: &ApiMember,
        owner: &str,
        subject: &str,
        name: &str,
        args: &[Expr],
        line: usize,
    ) -> bool {
        if !member.accepts_arity(args.len()) {
            let (lo, hi) = (member.required_params(), member.params.len());
            let expected = if lo == hi { lo.to_string() } else { format!("{lo} to {hi}") };
            self.diag(
                line,
                owner,
                name,
                DiagnosticKind::ArityMismatch,
                format!("{subject} takes {expected} arguments but {} were given", args.len()),
            );
            return false;
        }
        for (arg, param) in args.iter().zip(&member.params) {
            if let ExprKind::StringLiteral(value) = &arg.kind {
                if !param.flags.is_empty() && !param.flags.iter().any(|f| f == value) {
                    self.diag(
                        line,
                        owner,
                        name,
                        DiagnosticKind::InvalidFlag,
                        format!("{subject} does not accept flag \"{value}\" (expected one of {})", param.flags.join(", ")),
                    );
                    return false;
                }
            }
        }
        true
    }

    fn member_access(
        &mut self,
        base_ty: &TypeRef,
        base: &Expr,
        name: &str,
        line: usize,
        call: Option<(&[Expr], &[TypeRef])>,
    ) -> TypeRef {
        let subject = expr_to_string(base);
        match base_ty {
            TypeRef::Unknown => TypeRef::Unknown,
            TypeRef::Object(obj_name) => {
                let graph = self.graph;
                let obj = &graph.objects[obj_name];
                self.report.checked_calls += 1;
                match obj.members.get(name) {
                    Some(member) => {
                        let ok = match call {
                            Some((args, _)) => {
                                self.check_signature(member, obj_name, &format!("{subject}.{name}"), name, args, line)
                            }
                            None => true,
                        };
                        if ok {
                            self.report.valid_calls += 1;
                            self.report.accesses.insert((obj_name.clone(), name.to_string()));
                        }
                        member.returns.clone()
                    }
                    None => {
                        self.diag(
                            line,
                            obj_name,
                            name,
                            DiagnosticKind::UnknownMember,
                            format!("{subject} of datatype {obj_name} has no attribute {name}"),
                        );
                        TypeRef::Unknown
                    }
                }
            }
            TypeRef::List(inner) if LIST_METHODS.contains(&name) => match name {
                "pop" => (**inner).clone(),
                "index" | "count" => TypeRef::Int,
                "copy" => base_ty.clone(),
                _ => TypeRef::None,
            },
            TypeRef::Str if STR_METHODS.contains(&name) => match name {
                "startswith" | "endswith" => TypeRef::Bool,
                "split" => TypeRef::List(Box::new(TypeRef::Str)),
                "find" => TypeRef::Int,
                _ => TypeRef::Str,
            },
            other => {
                self.report.checked_calls += 1;
                let _ = call;
                self.diag(
                    line,
                    &other.to_string(),
                    name,
                    DiagnosticKind::IncompatibleChain,
                    format!("{subject} of datatype {other} has no attribute {name}"),
                );
                TypeRef::Unknown
            }
        }
    }
}

fn arith_type(l: &TypeRef, op: BinOpKind, r: &TypeRef) -> TypeRef {
    use TypeRef::*;
    if !op.is_arithmetic() {
        return if l == r { l.clone() } else { Unknown };
    }
    match (l, r) {
        (Int, Int) if op != BinOpKind::Div => Int,
        (Int | Float, Int | Float) => Float,
        (Str, Str) if op == BinOpKind::Add => Str,
        (List(a), List(b)) if op == BinOpKind::Add && a == b => l.clone(),
        _ => Unknown,
    }
}

fn builtin_type(name: &str, args: &[TypeRef]) -> TypeRef {
    let first = args.first().cloned().unwrap_or(TypeRef::Unknown);
    match name {
        "print" => TypeRef::None,
        "len" | "int" => TypeRef::Int,
        "float" => TypeRef::Float,
        "str" => TypeRef::Str,
        "bool" => TypeRef::Bool,
        "range" => TypeRef::List(Box::new(TypeRef::Int)),
        "abs" => first,
        "sorted" | "list" => match first {
            TypeRef::List(_) => first,
            _ => TypeRef::List(Box::new(TypeRef::Unknown)),
        },
        "min" | "max" | "sum" => match (&first, args.len()) {
            (TypeRef::List(inner), 1) => (**inner).clone(),
            (t, n) if n > 1 && t.is_numeric() => t.clone(),
            _ => TypeRef::Unknown,
        },
        _ => TypeRef::Unknown,
    }
}

/// Valid-attribute lists and shortest paths for every diagnostic in `report`.
pub fn process_sim(graph: &ApiGraph, report: &SimReport, attr_limit: usize) -> Feedback {
    let hints = |members: Vec<&ApiMember>, owner: &str| -> Vec<AttrHint> {
        members.into_iter().map(|m| AttrHint { owner: owner.to_string(), name: m.name.clone(), doc: m.doc.clone() }).collect()
    };
    let items = report
        .diagnostics
        .iter()
        .map(|d| {
            let (valid_attrs, short_path) = if d.object_type == GLOBAL_SCOPE {
                (hints(valid_globals(graph, &d.member, attr_limit), GLOBAL_SCOPE), None)
            } else if graph.objects.contains_key(&d.object_type) {
                let attrs = valid_members(graph, &d.object_type, &d.member, attr_limit).unwrap_or_default();
                let path = match d.kind {
                    DiagnosticKind::UnknownMember => shortest_path(graph, &d.object_type, &d.member).ok().flatten(),
                    _ => None,
                };
                (hints(attrs, &d.object_type), path)
            } else {
                (Vec::new(), None)
            };
            FeedbackItem { line: d.line, object_type: d.object_type.clone(), member: d.member.clone(), valid_attrs, short_path }
        })
        .collect();
    Feedback { items }
}

/// Compiler feedback block: simulation results, then valid attributes and
/// shortest paths per diagnostic. Empty for a clean report.
pub fn render_feedback(report: &SimReport, feedback: &Feedback) -> String {
    if report.clean {
        return String::new();
    }
    let mut out = String::from("# Simulation results:\n");
    out.push_str(&report.render());
    out.push_str("# Valid attributes and shortest paths:\n");
    for item in &feedback.items {
        if !item.valid_attrs.is_empty() {
            if item.object_type == GLOBAL_SCOPE {
                out.push_str("Here are a few valid global functions:\n");
                for a in &item.valid_attrs {
                    writeln!(out, "  {} => {}", a.name, a.doc).unwrap();
                }
            } else {
                writeln!(out, "Here are a few valid attributes on {}:", item.object_type).unwrap();
                for a in &item.valid_attrs {
                    writeln!(out, "  {}.{} => {}", a.owner, a.name, a.doc).unwrap();
                }
            }
        }
        if let Some(path) = &item.short_path {
            writeln!(out, "Here is how to get to {} from {}:", item.member, item.object_type).unwrap();
            writeln!(out, "  {}", render_path(path)).unwrap();
        }
    }
    out
}
