//! Column-expression language for feature operations.
//!
//! Every proposed feature is an expression in this language rather than
//! executable code. The grammar (see `docs/dsl.md`) covers column references,
//! numeric literals, a fixed set of unary functions, arithmetic, comparisons,
//! categorical equality indicators and row-wise n-ary aggregates. There is no
//! way to reference other rows or the target column's values in aggregate, so
//! label leakage through an expression is structurally impossible.

mod ast;
mod eval;
mod parser;
mod validate;

pub use ast::{AggFn, BinOp, CmpOp, Expr, UnaryFn};
pub use eval::{evaluate, EvalDiagnostics, EvaluatedColumn};
pub use parser::{parse, ParseError};
pub use validate::{validate, ValidationError};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DslError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("validation failed: {}", join_errors(.0))]
    Invalid(Vec<ValidationError>),
    #[error("invalid operation name {0:?}: expected a snake_case identifier")]
    BadName(String),
}

fn join_errors(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Distinct column names referenced anywhere in the expression.
pub fn columns_used(expr: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    expr.visit(&mut |e| {
        if let Expr::Col(name) = e {
            out.insert(name.clone());
        }
    });
    out
}

/// `[a-z_][a-z0-9_]*`
pub fn is_snake_case_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// One proposed transformation: a named expression plus the proposer's
/// free-text rationale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOperation {
    pub name: String,
    pub expression: Expr,
    #[serde(default)]
    pub explanation: String,
    #[serde(default)]
    pub reasoning: String,
    #[serde(default)]
    pub expected_benefit: String,
    #[serde(default)]
    pub source_text: String,
}

impl FeatureOperation {
    /// Parses `code` and checks the name; schema validation is separate.
    pub fn new(
        name: impl Into<String>,
        code: &str,
        explanation: impl Into<String>,
    ) -> Result<Self, DslError> {
        let name = name.into();
        if !is_snake_case_identifier(&name) {
            return Err(DslError::BadName(name));
        }
        Ok(Self {
            name,
            expression: parse(code)?,
            explanation: explanation.into(),
            reasoning: String::new(),
            expected_benefit: String::new(),
            source_text: code.to_string(),
        })
    }

    /// Canonical pretty-printed expression text.
    pub fn canonical(&self) -> String {
        self.expression.to_string()
    }

    pub fn columns_used(&self) -> BTreeSet<String> {
        columns_used(&self.expression)
    }
}
