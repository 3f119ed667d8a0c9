//! ESL: the small indentation-block scripting dialect that tool scripts are
//! written in. Function definitions, `for`/`if`/`else`, (augmented)
//! assignment, calls, attribute chains, subscripts, comparisons, boolean
//! operators, list displays and comprehensions. Nothing is executed here.

mod ast;
mod parse;
mod unparse;

use thiserror::Error;

pub use ast::*;
pub use unparse::{ast_dump, expr_to_string, stmt_header, unparse};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    /// What the parser was looking for, when that is a single token class.
    pub expected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line} is outside the script (1..={last})")]
pub struct LineOutOfRange {
    pub line: usize,
    pub last: usize,
}

pub fn parse(source: &str) -> Result<ScriptModule, SyntaxError> {
    parse::parse_module(source)
}

pub fn parse_expr(source: &str) -> Result<Expr, SyntaxError> {
    parse::parse_expression(source)
}

/// Comments from the `window` lines above `line` (plus a trailing comment on
/// `line` itself), one per line, followed by the statement's own text.
pub fn comment_context(module: &ScriptModule, line: usize, window: usize) -> Result<String, LineOutOfRange> {
    let last = module.source_lines.len().max(module.statements().iter().map(|s| s.line).max().unwrap_or(0));
    if line == 0 || line > last {
        return Err(LineOutOfRange { line, last });
    }

    let mut parts: Vec<String> = module
        .comments
        .range(line.saturating_sub(window).max(1)..=line)
        .map(|(_, c)| c.text.clone())
        .filter(|t| !t.is_empty())
        .collect();
    parts.push(statement_text(module, line));
    Ok(parts.join("\n"))
}

/// Source text of `line` without indentation or trailing comment; falls
/// back to the rendered statement header for generated modules.
pub fn statement_text(module: &ScriptModule, line: usize) -> String {
    if let Some(raw) = module.source_lines.get(line.wrapping_sub(1)) {
        let code = match module.comments.get(&line) {
            Some(c) if c.trailing => raw.chars().take(c.column).collect::<String>(),
            Some(_) => String::new(),
            None => raw.clone(),
        };
        return code.trim().to_string();
    }
    module.statement_at(line).map(stmt_header).unwrap_or_default()
}
