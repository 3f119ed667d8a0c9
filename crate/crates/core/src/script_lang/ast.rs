use std::collections::BTreeMap;

/// Root of a parsed script.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScriptModule {
    pub body: Vec<Stmt>,
    /// Comment text (without `#`) keyed by the line it appears on.
    pub comments: BTreeMap<usize, Comment>,
    /// Original source lines, if the module was parsed from text.
    pub source_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    pub text: String,
    /// 0-based column of the `#`.
    pub column: usize,
    /// True when the comment follows code on the same line.
    pub trailing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub line: usize,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    FunctionDef { name: String, params: Vec<String>, body: Vec<Stmt> },
    Assign { target: Expr, value: Expr },
    AugAssign { target: Expr, op: BinOpKind, value: Expr },
    For { var: String, iter: Expr, body: Vec<Stmt> },
    If { cond: Expr, then: Vec<Stmt>, orelse: Vec<Stmt> },
    Return(Option<Expr>),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub line: usize,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constant {
    Int(i64),
    Float(f64),
    Bool(bool),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Name(String),
    Constant(Constant),
    StringLiteral(String),
    Call { func: Box<Expr>, args: Vec<Expr> },
    AttributeRef { base: Box<Expr>, name: String },
    Subscript { base: Box<Expr>, index: Box<Expr> },
    Compare { lhs: Box<Expr>, op: CmpOp, rhs: Box<Expr> },
    BinOp { lhs: Box<Expr>, op: BinOpKind, rhs: Box<Expr> },
    UnaryNot(Box<Expr>),
    ListDisplay(Vec<Expr>),
    ListComp { elt: Box<Expr>, var: String, iter: Box<Expr>, cond: Option<Box<Expr>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOpKind {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    And,
    Or,
}

impl BinOpKind {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOpKind::Add => "+",
            BinOpKind::Sub => "-",
            BinOpKind::Mul => "*",
            BinOpKind::Div => "/",
            BinOpKind::Mod => "%",
            BinOpKind::And => "and",
            BinOpKind::Or => "or",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        !matches!(self, BinOpKind::And | BinOpKind::Or)
    }
}

impl Expr {
    pub fn new(line: usize, kind: ExprKind) -> Self {
        Self { line, kind }
    }

    pub fn name(line: usize, id: impl Into<String>) -> Self {
        Self::new(line, ExprKind::Name(id.into()))
    }

    pub fn call(line: usize, func: Expr, args: Vec<Expr>) -> Self {
        Self::new(line, ExprKind::Call { func: Box::new(func), args })
    }

    pub fn attr(line: usize, base: Expr, name: impl Into<String>) -> Self {
        Self::new(line, ExprKind::AttributeRef { base: Box::new(base), name: name.into() })
    }

    /// `base.name(args)`
    pub fn method_call(line: usize, base: Expr, name: impl Into<String>, args: Vec<Expr>) -> Self {
        Self::call(line, Self::attr(line, base, name), args)
    }

    fn strip_lines(&mut self) {
        self.line = 0;
        match &mut self.kind {
            ExprKind::Name(_) | ExprKind::Constant(_) | ExprKind::StringLiteral(_) => {}
            ExprKind::Call { func, args } => {
                func.strip_lines();
                args.iter_mut().for_each(Expr::strip_lines);
            }
            ExprKind::AttributeRef { base, .. } | ExprKind::UnaryNot(base) => base.strip_lines(),
            ExprKind::Subscript { base, index } => {
                base.strip_lines();
                index.strip_lines();
            }
            ExprKind::Compare { lhs, rhs, .. } | ExprKind::BinOp { lhs, rhs, .. } => {
                lhs.strip_lines();
                rhs.strip_lines();
            }
            ExprKind::ListDisplay(items) => items.iter_mut().for_each(Expr::strip_lines),
            ExprKind::ListComp { elt, iter, cond, .. } => {
                elt.strip_lines();
                iter.strip_lines();
                if let Some(c) = cond {
                    c.strip_lines();
                }
            }
        }
    }
}

impl Stmt {
    pub fn new(line: usize, kind: StmtKind) -> Self {
        Self { line, kind }
    }

    /// Nested statement bodies, in source order.
    pub fn children(&self) -> Vec<&Stmt> {
        match &self.kind {
            StmtKind::FunctionDef { body, .. } | StmtKind::For { body, .. } => body.iter().collect(),
            StmtKind::If { then, orelse, .. } => then.iter().chain(orelse).collect(),
            _ => Vec::new(),
        }
    }

    fn strip_lines(&mut self) {
        self.line = 0;
        match &mut self.kind {
            StmtKind::FunctionDef { body, .. } => body.iter_mut().for_each(Stmt::strip_lines),
            StmtKind::Assign { target, value } | StmtKind::AugAssign { target, value, .. } => {
                target.strip_lines();
                value.strip_lines();
            }
            StmtKind::For { iter, body, .. } => {
                iter.strip_lines();
                body.iter_mut().for_each(Stmt::strip_lines);
            }
            StmtKind::If { cond, then, orelse } => {
                cond.strip_lines();
                then.iter_mut().for_each(Stmt::strip_lines);
                orelse.iter_mut().for_each(Stmt::strip_lines);
            }
            StmtKind::Return(value) => {
                if let Some(v) = value {
                    v.strip_lines();
                }
            }
            StmtKind::Expr(e) => e.strip_lines(),
        }
    }
}

impl ScriptModule {
    pub fn new(body: Vec<Stmt>) -> Self {
        Self { body, ..Default::default() }
    }

    /// Statement tree with every line number zeroed; comments and source dropped.
    pub fn structure(&self) -> Vec<Stmt> {
        let mut body = self.body.clone();
        body.iter_mut().for_each(Stmt::strip_lines);
        body
    }

    /// Structural equality, ignoring line numbers, comments and source text.
    pub fn same_structure(&self, other: &ScriptModule) -> bool {
        self.structure() == other.structure()
    }

    /// All statements, depth-first in source order.
    pub fn statements(&self) -> Vec<&Stmt> {
        fn walk<'a>(stmts: &'a [Stmt], out: &mut Vec<&'a Stmt>) {
            for s in stmts {
                out.push(s);
                walk_children(s, out);
            }
        }
        fn walk_children<'a>(s: &'a Stmt, out: &mut Vec<&'a Stmt>) {
            match &s.kind {
                StmtKind::FunctionDef { body, .. } | StmtKind::For { body, .. } => walk(body, out),
                StmtKind::If { then, orelse, .. } => {
                    walk(then, out);
                    walk(orelse, out);
                }
                _ => {}
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }

    pub fn statement_at(&self, line: usize) -> Option<&Stmt> {
        self.statements().into_iter().find(|s| s.line == line)
    }

    pub fn comment_texts(&self) -> Vec<&str> {
        self.comments.values().map(|c| c.text.as_str()).collect()
    }
}
