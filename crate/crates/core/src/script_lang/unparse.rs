//! Source rendering (`unparse`) and the node-per-line tree dump.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::ast::*;

const INDENT: &str = "    ";

// binding strength, loosest first
const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_NOT: u8 = 3;
const PREC_CMP: u8 = 4;
const PREC_ARITH: u8 = 5;
const PREC_TERM: u8 = 6;
const PREC_ATOM: u8 = 8;

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::BinOp { op, .. } => binop_prec(*op),
        ExprKind::Compare { .. } => PREC_CMP,
        ExprKind::UnaryNot(_) => PREC_NOT,
        // `-1` binds like a factor: fine as an operand, parenthesized as a postfix base
        ExprKind::Constant(Constant::Int(v)) if *v < 0 => PREC_TERM + 1,
        ExprKind::Constant(Constant::Float(v)) if v.is_sign_negative() => PREC_TERM + 1,
        _ => PREC_ATOM,
    }
}

fn binop_prec(op: BinOpKind) -> u8 {
    match op {
        BinOpKind::Or => PREC_OR,
        BinOpKind::And => PREC_AND,
        BinOpKind::Add | BinOpKind::Sub => PREC_ARITH,
        BinOpKind::Mul | BinOpKind::Div | BinOpKind::Mod => PREC_TERM,
    }
}

fn wrap(e: &Expr, min: u8) -> String {
    let s = expr_to_string(e);
    if precedence(e) < min {
        format!("({s})")
    } else {
        s
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn constant_to_string(c: &Constant) -> String {
    match c {
        Constant::Int(v) => v.to_string(),
        Constant::Float(v) => format!("{v:?}"),
        Constant::Bool(true) => "True".into(),
        Constant::Bool(false) => "False".into(),
        Constant::None => "None".into(),
    }
}

/// Renders one expression as ESL source.
pub fn expr_to_string(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Name(n) => n.clone(),
        ExprKind::Constant(c) => constant_to_string(c),
        ExprKind::StringLiteral(s) => quote(s),
        ExprKind::Call { func, args } => {
            let args: Vec<String> = args.iter().map(expr_to_string).collect();
            format!("{}({})", wrap(func, PREC_ATOM), args.join(", "))
        }
        ExprKind::AttributeRef { base, name } => format!("{}.{name}", wrap(base, PREC_ATOM)),
        ExprKind::Subscript { base, index } => format!("{}[{}]", wrap(base, PREC_ATOM), expr_to_string(index)),
        ExprKind::Compare { lhs, op, rhs } => {
            format!("{} {} {}", wrap(lhs, PREC_CMP + 1), op.symbol(), wrap(rhs, PREC_CMP + 1))
        }
        ExprKind::BinOp { lhs, op, rhs } => {
            let p = binop_prec(*op);
            format!("{} {} {}", wrap(lhs, p), op.symbol(), wrap(rhs, p + 1))
        }
        ExprKind::UnaryNot(inner) => format!("not {}", wrap(inner, PREC_NOT)),
        ExprKind::ListDisplay(items) => {
            let items: Vec<String> = items.iter().map(expr_to_string).collect();
            format!("[{}]", items.join(", "))
        }
        ExprKind::ListComp { elt, var, iter, cond } => {
            let mut s = format!("[{} for {var} in {}", expr_to_string(elt), wrap(iter, PREC_OR));
            if let Some(c) = cond {
                write!(s, " if {}", wrap(c, PREC_OR)).unwrap();
            }
            s.push(']');
            s
        }
    }
}

/// Single-line header of a statement (`for v in vios`, `x = y`), without the trailing colon.
pub fn stmt_header(s: &Stmt) -> String {
    match &s.kind {
        StmtKind::FunctionDef { name, params, .. } => format!("def {name}({})", params.join(", ")),
        StmtKind::Assign { target, value } => format!("{} = {}", expr_to_string(target), expr_to_string(value)),
        StmtKind::AugAssign { target, op, value } => {
            format!("{} {}= {}", expr_to_string(target), op.symbol(), expr_to_string(value))
        }
        StmtKind::For { var, iter, .. } => format!("for {var} in {}", expr_to_string(iter)),
        StmtKind::If { cond, .. } => format!("if {}", expr_to_string(cond)),
        StmtKind::Return(Some(v)) => format!("return {}", expr_to_string(v)),
        StmtKind::Return(None) => "return".into(),
        StmtKind::Expr(e) => expr_to_string(e),
    }
}

struct Unparser<'m> {
    out: String,
    anchored: BTreeMap<usize, Vec<&'m str>>,
}

impl<'m> Unparser<'m> {
    fn comments_for(&mut self, line: usize, depth: usize) {
        if let Some(list) = self.anchored.remove(&line) {
            for text in list {
                self.emit_comment(text, depth);
            }
        }
    }

    fn emit_comment(&mut self, text: &str, depth: usize) {
        for _ in 0..depth {
            self.out.push_str(INDENT);
        }
        if text.is_empty() {
            self.out.push_str("#\n");
        } else {
            writeln!(self.out, "# {text}").unwrap();
        }
    }

    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str(INDENT);
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn body(&mut self, stmts: &[Stmt], depth: usize) {
        for s in stmts {
            self.stmt(s, depth);
        }
    }

    fn stmt(&mut self, s: &Stmt, depth: usize) {
        self.comments_for(s.line, depth);
        match &s.kind {
            StmtKind::FunctionDef { body, .. } | StmtKind::For { body, .. } => {
                self.line(depth, &format!("{}:", stmt_header(s)));
                self.body(body, depth + 1);
            }
            StmtKind::If { .. } => self.if_chain(s, depth, "if"),
            _ => self.line(depth, &stmt_header(s)),
        }
    }

    fn if_chain(&mut self, s: &Stmt, depth: usize, keyword: &str) {
        let StmtKind::If { cond, then, orelse } = &s.kind else { unreachable!() };
        self.line(depth, &format!("{keyword} {}:", expr_to_string(cond)));
        self.body(then, depth + 1);
        match orelse.as_slice() {
            [] => {}
            [nested @ Stmt { kind: StmtKind::If { .. }, .. }] if !self.anchored.contains_key(&nested.line) => {
                self.if_chain(nested, depth, "elif")
            }
            _ => {
                self.line(depth, "else:");
                self.body(orelse, depth + 1);
            }
        }
    }
}

/// Renders a module as ESL source. Comments are re-emitted on their own
/// lines directly above the statement they are anchored to.
pub fn unparse(module: &ScriptModule) -> String {
    let stmt_lines: Vec<usize> = {
        let mut v: Vec<usize> = module.statements().iter().map(|s| s.line).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut anchored: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    let mut trailing_orphans = Vec::new();
    for (&line, c) in &module.comments {
        // a comment belongs to the first statement at or after its line
        match stmt_lines.iter().find(|&&l| l >= line) {
            Some(&anchor) => anchored.entry(anchor).or_default().push(c.text.as_str()),
            None => trailing_orphans.push(c.text.as_str()),
        }
    }
    let mut u = Unparser { out: String::new(), anchored };
    u.body(&module.body, 0);
    for text in trailing_orphans {
        u.emit_comment(text, 0);
    }
    u.out
}

// ---- tree dump ------------------------------------------------------------

struct Dumper {
    out: String,
}

impl Dumper {
    fn node(&mut self, depth: usize, kind: &str, label: &str) {
        for _ in 0..depth {
            self.out.push_str(INDENT);
        }
        writeln!(self.out, "{kind}: {label}").unwrap();
    }

    fn stmt(&mut self, s: &Stmt, depth: usize) {
        match &s.kind {
            StmtKind::FunctionDef { name, params, body } => {
                self.node(depth, "FunctionDef", &format!("{name}({})", params.join(", ")));
                body.iter().for_each(|b| self.stmt(b, depth + 1));
            }
            StmtKind::Assign { target, value } => {
                self.node(depth, "Assign", &format!("{}={}", expr_to_string(target), expr_to_string(value)));
                self.expr(target, depth + 1);
                self.expr(value, depth + 1);
            }
            StmtKind::AugAssign { target, op, value } => {
                self.node(depth, "AugAssign", &format!("{}{}={}", expr_to_string(target), op.symbol(), expr_to_string(value)));
                self.expr(target, depth + 1);
                self.expr(value, depth + 1);
            }
            StmtKind::For { var, iter, body } => {
                self.node(depth, "For", &stmt_header(s));
                self.node(depth + 1, "Name", var);
                self.expr(iter, depth + 1);
                body.iter().for_each(|b| self.stmt(b, depth + 1));
            }
            StmtKind::If { cond, then, orelse } => {
                self.node(depth, "If", &stmt_header(s));
                self.expr(cond, depth + 1);
                then.iter().for_each(|b| self.stmt(b, depth + 1));
                if !orelse.is_empty() {
                    self.node(depth + 1, "Else", "else");
                    orelse.iter().for_each(|b| self.stmt(b, depth + 2));
                }
            }
            StmtKind::Return(value) => {
                self.node(depth, "Return", &stmt_header(s));
                if let Some(v) = value {
                    self.expr(v, depth + 1);
                }
            }
            StmtKind::Expr(e) => {
                self.node(depth, "Expr", &expr_to_string(e));
                self.expr(e, depth + 1);
            }
        }
    }

    fn expr(&mut self, e: &Expr, depth: usize) {
        let text = expr_to_string(e);
        match &e.kind {
            ExprKind::Name(n) => self.node(depth, "Name", n),
            ExprKind::Constant(_) => self.node(depth, "Constant", &text),
            ExprKind::StringLiteral(_) => self.node(depth, "StringLiteral", &text),
            ExprKind::Call { func, args } => {
                self.node(depth, "Call", &text);
                // a plain callee name is already visible in the label
                if !matches!(func.kind, ExprKind::Name(_)) {
                    self.expr(func, depth + 1);
                }
                args.iter().for_each(|a| self.expr(a, depth + 1));
            }
            ExprKind::AttributeRef { base, .. } => {
                self.node(depth, "AttributeRef", &text);
                self.expr(base, depth + 1);
            }
            ExprKind::Subscript { base, index } => {
                self.node(depth, "Subscript", &text);
                self.expr(base, depth + 1);
                self.expr(index, depth + 1);
            }
            ExprKind::Compare { lhs, rhs, .. } => {
                self.node(depth, "Compare", &text);
                self.expr(lhs, depth + 1);
                self.expr(rhs, depth + 1);
            }
            ExprKind::BinOp { lhs, rhs, .. } => {
                self.node(depth, "BinOp", &text);
                self.expr(lhs, depth + 1);
                self.expr(rhs, depth + 1);
            }
            ExprKind::UnaryNot(inner) => {
                self.node(depth, "UnaryNot", &text);
                self.expr(inner, depth + 1);
            }
            ExprKind::ListDisplay(items) => {
                self.node(depth, "ListDisplay", &text);
                items.iter().for_each(|i| self.expr(i, depth + 1));
            }
            ExprKind::ListComp { elt, var, iter, cond } => {
                self.node(depth, "ListComp", &text);
                self.expr(elt, depth + 1);
                self.node(depth + 1, "Name", var);
                self.expr(iter, depth + 1);
                if let Some(c) = cond {
                    self.expr(c, depth + 1);
                }
            }
        }
    }
}

/// Indented node-per-line tree, rooted at `Module: entire code`.
pub fn ast_dump(module: &ScriptModule) -> String {
    let mut d = Dumper { out: String::new() };
    d.node(0, "Module", "entire code");
    for s in &module.body {
        d.stmt(s, 1);
    }
    d.out
}
