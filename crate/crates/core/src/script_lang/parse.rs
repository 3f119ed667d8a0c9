//! Indentation-aware lexer and recursive-descent parser.

use std::collections::BTreeMap;

use super::ast::*;
use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    Op(&'static str),
    Kw(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const KEYWORDS: &[&str] = &["def", "for", "in", "if", "elif", "else", "return", "not", "and", "or", "True", "False", "None"];

// longest first so `<=` wins over `<`
const OPERATORS: &[&str] =
    &["+=", "-=", "*=", "/=", "==", "!=", "<=", ">=", "<", ">", "=", "+", "-", "*", "/", "%", "(", ")", "[", "]", ",", ":", "."];

fn err(line: usize, column: usize, message: impl Into<String>) -> SyntaxError {
    SyntaxError { line, column, message: message.into(), expected: None }
}

struct Lexer {
    tokens: Vec<Token>,
    comments: BTreeMap<usize, Comment>,
    indent_stack: Vec<usize>,
    indent_width: Option<usize>,
    depth: usize,
}

fn lex(src: &str) -> Result<(Vec<Token>, BTreeMap<usize, Comment>), SyntaxError> {
    let mut lx = Lexer { tokens: Vec::new(), comments: BTreeMap::new(), indent_stack: vec![0], indent_width: None, depth: 0 };
    let mut last_line = 0;
    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        lx.line(raw, line)?;
    }
    if lx.depth > 0 {
        return Err(err(last_line, 0, "unexpected end of input inside brackets"));
    }
    let end = last_line + 1;
    while lx.indent_stack.len() > 1 {
        lx.indent_stack.pop();
        lx.push(Tok::Dedent, end, 0);
    }
    lx.push(Tok::Eof, end, 0);
    Ok((lx.tokens, lx.comments))
}

impl Lexer {
    fn push(&mut self, tok: Tok, line: usize, col: usize) {
        self.tokens.push(Token { tok, line, col });
    }

    fn line(&mut self, raw: &str, line: usize) -> Result<(), SyntaxError> {
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;

        if self.depth == 0 {
            while i < chars.len() && chars[i] == ' ' {
                i += 1;
            }
            if i < chars.len() && chars[i] == '\t' {
                return Err(err(line, i, "tabs are not allowed in indentation"));
            }
            if i == chars.len() {
                return Ok(());
            }
            if chars[i] == '#' {
                let text: String = chars[i + 1..].iter().collect();
                self.comments.insert(line, Comment { text: text.trim().to_string(), column: i, trailing: false });
                return Ok(());
            }
            self.indentation(i, line)?;
        }

        let mut emitted = false;
        while i < chars.len() {
            let c = chars[i];
            if c == ' ' || c == '\t' {
                i += 1;
                continue;
            }
            if c == '#' {
                let text: String = chars[i + 1..].iter().collect();
                self.comments.insert(line, Comment { text: text.trim().to_string(), column: i, trailing: true });
                break;
            }
            let start = i;
            if c.is_ascii_alphabetic() || c == '_' {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                match KEYWORDS.iter().find(|k| **k == word) {
                    Some(k) => self.push(Tok::Kw(k), line, start),
                    None => self.push(Tok::Name(word), line, start),
                }
            } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let mut is_float = false;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    if chars[i] == '.' {
                        if is_float {
                            break;
                        }
                        is_float = true;
                    }
                    i += 1;
                }
                if i < chars.len() && (chars[i].is_ascii_alphabetic() || chars[i] == '_') {
                    return Err(err(line, i, "invalid numeric literal"));
                }
                let text: String = chars[start..i].iter().collect();
                let tok = if is_float {
                    Tok::Float(text.parse().map_err(|_| err(line, start, "invalid float literal"))?)
                } else {
                    Tok::Int(text.parse().map_err(|_| err(line, start, "integer literal out of range"))?)
                };
                self.push(tok, line, start);
            } else if c == '"' || c == '\'' {
                i += 1;
                let mut value = String::new();
                loop {
                    match chars.get(i) {
                        None => return Err(err(line, start, "unterminated string literal")),
                        Some(&q) if q == c => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            let esc = chars.get(i + 1).ok_or_else(|| err(line, i, "unterminated string literal"))?;
                            value.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                other => *other,
                            });
                            i += 2;
                        }
                        Some(&ch) => {
                            value.push(ch);
                            i += 1;
                        }
                    }
                }
                self.push(Tok::Str(value), line, start);
            } else {
                let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
                let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) else {
                    return Err(err(line, i, format!("unexpected character `{c}`")));
                };
                match *op {
                    "(" | "[" => self.depth += 1,
                    ")" | "]" => {
                        if self.depth == 0 {
                            return Err(err(line, i, format!("unmatched `{op}`")));
                        }
                        self.depth -= 1;
                    }
                    _ => {}
                }
                i += op.len();
                self.push(Tok::Op(op), line, start);
            }
            emitted = true;
        }
        if emitted && self.depth == 0 {
            self.push(Tok::Newline, line, chars.len());
        }
        Ok(())
    }

    fn indentation(&mut self, width: usize, line: usize) -> Result<(), SyntaxError> {
        let current = *self.indent_stack.last().unwrap();
        if width > current {
            let unit = *self.indent_width.get_or_insert(width - current);
            if width - current != unit {
                return Err(err(
                    line,
                    width,
                    format!("inconsistent indentation: expected {} spaces, found {width}", current + unit),
                ));
            }
            self.indent_stack.push(width);
            self.push(Tok::Indent, line, 0);
        } else if width < current {
            while *self.indent_stack.last().unwrap() > width {
                self.indent_stack.pop();
                self.push(Tok::Dedent, line, 0);
            }
            if *self.indent_stack.last().unwrap() != width {
                return Err(err(line, width, "dedent does not match any outer indentation level"));
            }
        }
        Ok(())
    }
}

pub(super) fn parse_module(src: &str) -> Result<ScriptModule, SyntaxError> {
    let (tokens, comments) = lex(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut body = Vec::new();
    while !p.at(&Tok::Eof) {
        if p.at(&Tok::Indent) {
            return Err(p.error("unexpected indentation", None));
        }
        body.push(p.statement()?);
    }
    Ok(ScriptModule { body, comments, source_lines: src.lines().map(str::to_string).collect() })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Name(n) => format!("name `{n}`"),
        Tok::Int(v) => format!("number `{v}`"),
        Tok::Float(v) => format!("number `{v:?}`"),
        Tok::Str(_) => "string literal".into(),
        Tok::Op(o) => format!("`{o}`"),
        Tok::Kw(k) => format!("keyword `{k}`"),
        Tok::Newline => "end of line".into(),
        Tok::Indent => "indentation".into(),
        Tok::Dedent => "dedent".into(),
        Tok::Eof => "end of input".into(),
    }
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn at(&self, tok: &Tok) -> bool {
        &self.peek().tok == tok
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(self.peek().tok, Tok::Op(o) if o == op)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek().tok, Tok::Kw(k) if k == kw)
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: &str, expected: Option<&str>) -> SyntaxError {
        let t = self.peek();
        SyntaxError {
            line: t.line,
            column: t.col,
            message: format!("{message}, found {}", describe(&t.tok)),
            expected: expected.map(str::to_string),
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<Token, SyntaxError> {
        if self.at_op(op) {
            Ok(self.bump())
        } else {
            Err(self.error(&format!("expected `{op}`"), Some(op)))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<Token, SyntaxError> {
        if self.at_kw(kw) {
            Ok(self.bump())
        } else {
            Err(self.error(&format!("expected `{kw}`"), Some(kw)))
        }
    }

    fn expect_name(&mut self) -> Result<String, SyntaxError> {
        match self.peek().tok.clone() {
            Tok::Name(n) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.error("expected identifier", Some("identifier"))),
        }
    }

    fn expect_newline(&mut self) -> Result<(), SyntaxError> {
        if self.at(&Tok::Newline) {
            self.bump();
            Ok(())
        } else {
            Err(self.error("expected end of statement", Some("newline")))
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.expect_op(":")?;
        self.expect_newline()?;
        if !self.at(&Tok::Indent) {
            return Err(self.error("expected an indented block", Some("indent")));
        }
        self.bump();
        let mut body = Vec::new();
        while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
            body.push(self.statement()?);
        }
        if self.at(&Tok::Dedent) {
            self.bump();
        }
        Ok(body)
    }

    fn statement(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.peek().line;
        if self.at_kw("def") {
            self.bump();
            let name = self.expect_name()?;
            self.expect_op("(")?;
            let mut params = Vec::new();
            while !self.at_op(")") {
                params.push(self.expect_name()?);
                if !self.at_op(")") {
                    self.expect_op(",")?;
                }
            }
            self.expect_op(")")?;
            let body = self.block()?;
            return Ok(Stmt::new(line, StmtKind::FunctionDef { name, params, body }));
        }
        if self.at_kw("for") {
            self.bump();
            let var = self.expect_name()?;
            self.expect_kw("in")?;
            let iter = self.expr()?;
            let body = self.block()?;
            return Ok(Stmt::new(line, StmtKind::For { var, iter, body }));
        }
        if self.at_kw("if") {
            self.bump();
            return self.if_rest(line);
        }
        if self.at_kw("return") {
            self.bump();
            let value = if self.at(&Tok::Newline) { None } else { Some(self.expr()?) };
            self.expect_newline()?;
            return Ok(Stmt::new(line, StmtKind::Return(value)));
        }
        if matches!(self.peek().tok, Tok::Kw("elif" | "else")) {
            return Err(self.error("`elif`/`else` without a matching `if`", None));
        }

        let lhs = self.expr()?;
        let aug = match self.peek().tok {
            Tok::Op("+=") => Some(BinOpKind::Add),
            Tok::Op("-=") => Some(BinOpKind::Sub),
            Tok::Op("*=") => Some(BinOpKind::Mul),
            Tok::Op("/=") => Some(BinOpKind::Div),
            _ => None,
        };
        let kind = if self.at_op("=") || aug.is_some() {
            if !matches!(lhs.kind, ExprKind::Name(_) | ExprKind::AttributeRef { .. } | ExprKind::Subscript { .. }) {
                return Err(err(lhs.line, self.peek().col, "cannot assign to this expression"));
            }
            self.bump();
            let value = self.expr()?;
            match aug {
                Some(op) => StmtKind::AugAssign { target: lhs, op, value },
                None => StmtKind::Assign { target: lhs, value },
            }
        } else {
            StmtKind::Expr(lhs)
        };
        self.expect_newline()?;
        Ok(Stmt::new(line, kind))
    }

    fn if_rest(&mut self, line: usize) -> Result<Stmt, SyntaxError> {
        let cond = self.expr()?;
        let then = self.block()?;
        let orelse = if self.at_kw("elif") {
            let l = self.bump().line;
            vec![self.if_rest(l)?]
        } else if self.at_kw("else") {
            self.bump();
            self.block()?
        } else {
            Vec::new()
        };
        Ok(Stmt::new(line, StmtKind::If { cond, then, orelse }))
    }

    pub(super) fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while self.at_kw("or") {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = binop(lhs, BinOpKind::Or, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.not_expr()?;
        while self.at_kw("and") {
            self.bump();
            let rhs = self.not_expr()?;
            lhs = binop(lhs, BinOpKind::And, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.at_kw("not") {
            let line = self.bump().line;
            let inner = self.not_expr()?;
            return Ok(Expr::new(line, ExprKind::UnaryNot(Box::new(inner))));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.arith()?;
        let op = match self.peek().tok {
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op(">=") => CmpOp::Ge,
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::Ne,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.arith()?;
        if matches!(self.peek().tok, Tok::Op("<" | ">" | "<=" | ">=" | "==" | "!=")) {
            return Err(self.error("chained comparisons are not supported", None));
        }
        Ok(Expr::new(lhs.line, ExprKind::Compare { lhs: Box::new(lhs), op, rhs: Box::new(rhs) }))
    }

    fn arith(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Op("+") => BinOpKind::Add,
                Tok::Op("-") => BinOpKind::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = binop(lhs, op, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().tok {
                Tok::Op("*") => BinOpKind::Mul,
                Tok::Op("/") => BinOpKind::Div,
                Tok::Op("%") => BinOpKind::Mod,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = binop(lhs, op, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, SyntaxError> {
        if self.at_op("-") {
            let t = self.bump();
            return match self.peek().tok {
                Tok::Int(v) => {
                    self.bump();
                    Ok(Expr::new(t.line, ExprKind::Constant(Constant::Int(-v))))
                }
                Tok::Float(v) => {
                    self.bump();
                    Ok(Expr::new(t.line, ExprKind::Constant(Constant::Float(-v))))
                }
                _ => Err(self.error("unary minus is only supported on numeric literals", Some("number"))),
            };
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.atom()?;
        loop {
            if self.at_op("(") {
                if !matches!(e.kind, ExprKind::Name(_) | ExprKind::AttributeRef { .. }) {
                    return Err(self.error("only names and attributes can be called", None));
                }
                self.bump();
                let mut args = Vec::new();
                while !self.at_op(")") {
                    args.push(self.expr()?);
                    if !self.at_op(")") {
                        self.expect_op(",")?;
                    }
                }
                self.expect_op(")")?;
                e = Expr::call(e.line, e, args);
            } else if self.at_op(".") {
                self.bump();
                let name = self.expect_name()?;
                e = Expr::attr(e.line, e, name);
            } else if self.at_op("[") {
                self.bump();
                let index = self.expr()?;
                self.expect_op("]")?;
                e = Expr::new(e.line, ExprKind::Subscript { base: Box::new(e), index: Box::new(index) });
            } else {
                return Ok(e);
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let t = self.peek().clone();
        let line = t.line;
        let kind = match t.tok {
            Tok::Name(n) => ExprKind::Name(n),
            Tok::Int(v) => ExprKind::Constant(Constant::Int(v)),
            Tok::Float(v) => ExprKind::Constant(Constant::Float(v)),
            Tok::Str(s) => ExprKind::StringLiteral(s),
            Tok::Kw("True") => ExprKind::Constant(Constant::Bool(true)),
            Tok::Kw("False") => ExprKind::Constant(Constant::Bool(false)),
            Tok::Kw("None") => ExprKind::Constant(Constant::None),
            Tok::Op("(") => {
                self.bump();
                let inner = self.expr()?;
                self.expect_op(")")?;
                return Ok(inner);
            }
            Tok::Op("[") => {
                self.bump();
                return self.list_rest(line);
            }
            _ => return Err(self.error("expected an expression", Some("expression"))),
        };
        self.bump();
        Ok(Expr::new(line, kind))
    }

    fn list_rest(&mut self, line: usize) -> Result<Expr, SyntaxError> {
        if self.at_op("]") {
            self.bump();
            return Ok(Expr::new(line, ExprKind::ListDisplay(Vec::new())));
        }
        let first = self.expr()?;
        if self.at_kw("for") {
            self.bump();
            let var = self.expect_name()?;
            self.expect_kw("in")?;
            let iter = self.or_expr()?;
            let cond = if self.at_kw("if") {
                self.bump();
                Some(Box::new(self.or_expr()?))
            } else {
                None
            };
            self.expect_op("]")?;
            return Ok(Expr::new(line, ExprKind::ListComp { elt: Box::new(first), var, iter: Box::new(iter), cond }));
        }
        let mut items = vec![first];
        while self.at_op(",") {
            self.bump();
            if self.at_op("]") {
                break;
            }
            items.push(self.expr()?);
        }
        self.expect_op("]")?;
        Ok(Expr::new(line, ExprKind::ListDisplay(items)))
    }
}

fn binop(lhs: Expr, op: BinOpKind, rhs: Expr) -> Expr {
    Expr::new(lhs.line, ExprKind::BinOp { lhs: Box::new(lhs), op, rhs: Box::new(rhs) })
}

pub(super) fn parse_expression(src: &str) -> Result<Expr, SyntaxError> {
    let (tokens, _) = lex(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    if p.at(&Tok::Newline) {
        p.bump();
    }
    if !p.at(&Tok::Eof) {
        return Err(p.error("unexpected trailing input", None));
    }
    Ok(e)
}
