//! Front end for the `.space` definition language.

mod lexer;
mod parser;
mod printer;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::parse;
pub use printer::pretty_print;
pub use validate::validate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagCode {
    Syntax,
    DuplicateDecl,
    UnknownSet,
    UnknownChoice,
    UnknownValue,
    SetCycle,
    ArityMismatch,
    UnboundVariable,
    ShadowedVariable,
    TypeMismatch,
    BadAntisymmetry,
    BadQuotient,
    BadCounter,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::Syntax => "SYNTAX",
            DiagCode::DuplicateDecl => "DUPLICATE_DECL",
            DiagCode::UnknownSet => "UNKNOWN_SET",
            DiagCode::UnknownChoice => "UNKNOWN_CHOICE",
            DiagCode::UnknownValue => "UNKNOWN_VALUE",
            DiagCode::SetCycle => "SET_CYCLE",
            DiagCode::ArityMismatch => "ARITY_MISMATCH",
            DiagCode::UnboundVariable => "UNBOUND_VARIABLE",
            DiagCode::ShadowedVariable => "SHADOWED_VARIABLE",
            DiagCode::TypeMismatch => "TYPE_MISMATCH",
            DiagCode::BadAntisymmetry => "BAD_ANTISYMMETRY",
            DiagCode::BadQuotient => "BAD_QUOTIENT",
            DiagCode::BadCounter => "BAD_COUNTER",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A located message. Validation diagnostics carry line 0 since the IR keeps
/// no source positions; their message names the offending declaration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub code: DiagCode,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, col: usize, code: DiagCode, message: impl Into<String>) -> Self {
        Diagnostic { line, col, code, message: message.into() }
    }

    pub fn unlocated(code: DiagCode, message: impl Into<String>) -> Self {
        Self::new(0, 0, code, message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.col, self.code, self.message)
    }
}

impl std::error::Error for Diagnostic {}

/// Parses and validates in one step.
pub fn load(src: &str) -> Result<crate::ir::SpaceDefinition, Vec<Diagnostic>> {
    let def = parse(src)?;
    let diags = validate(&def);
    if diags.is_empty() {
        Ok(def)
    } else {
        Err(diags)
    }
}
