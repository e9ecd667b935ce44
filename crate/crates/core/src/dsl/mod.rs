//! The rule language: lexer, parser, pretty printer and type checker.

pub mod ast;
mod lexer;
mod parser;
pub mod pretty;
pub mod schema;
pub mod typeck;

use std::fmt;

pub use ast::RuleFile;
pub use parser::{parse, parse_expr};
pub use pretty::{expr_to_string, pretty};
pub use schema::{Schema, Type, Unit};
pub use typeck::{list_trainables, typecheck, TrainableDescr, TrainableKind, TypeError, TypedRuleFile};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: syntax error: found {}", self.line, self.col, self.found)?;
        if !self.expected.is_empty() {
            write!(f, ", expected one of {}", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

/// Either kind of front-end diagnostic.
#[derive(Clone, Debug)]
pub enum Diagnostic {
    Parse(ParseError),
    Type(TypeError),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Parse(e) => e.fmt(f),
            Diagnostic::Type(e) => write!(f, "{e}"),
        }
    }
}

/// Parses and type-checks `src` against `schema`.
pub fn compile(src: &str, schema: &Schema) -> Result<TypedRuleFile, Vec<Diagnostic>> {
    let file = parse(src).map_err(|e| vec![Diagnostic::Parse(e)])?;
    typecheck(&file, schema).map_err(|es| es.into_iter().map(Diagnostic::Type).collect())
}
