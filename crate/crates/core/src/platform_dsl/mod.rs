//! Platform description language.
//!
//! A description is a list of modules; the last one is the platform root.
//! Modules declare nodes, configurable nodes and instances of other
//! modules. Instances are expanded like macros: every name an instance
//! declares is prefixed with `<instance>.`.
//!
//! ```text
//! # comments run to end of line; `;` and newlines both separate statements
//! module card(host) {
//!     node core { map [0x0..0x10000) -> mem @ 0x0 ; map [0x10000..0x20000) -> host @ 0x0 }
//!     node mem { accept [0x0..0x10000) }
//! }
//!
//! module board {
//!     node cpu { map [0x0..0x10000) -> dram @ 0x0 ; overlay bus }
//!     node bus { map [0x8000_0000..0x8001_0000) -> card0.mem @ 0x0 }
//!     configurable iommu { granularity 0x1000 ; targets bus }
//!     node dram { accept [0x0..0x10000) }
//!     instance card0 = card(dram)
//! }
//! ```
//!
//! Numbers are hex (`0x`, `_` allowed) or decimal. Expressions may use
//! module parameters with `+`, `-`, `*` and parentheses. A parameter bound
//! to an identifier argument stands for a node of the instantiating scope.
//! Configurable nodes are empty nodes software may program, restricted to
//! segments pointing into their `targets`.

mod ast;
mod codegen;
mod compile;
mod lexer;
mod parser;
mod topology;

use std::fmt;

use thiserror::Error;

use crate::decoding_net::{NetError, Platform};

pub use ast::{ConfDecl, Expr, Ident, InstanceDecl, Item, Module, NodeDecl, NodeStmt, Op, PlatformAst, RangeExpr};
pub use codegen::{emit_facts, emit_simulator_config, emit_translation_table, TableEntry, TranslationTable};
pub use compile::compile;
pub use topology::{builtin_topology, Topology};

/// A source position, 1-based. Positions never take part in equality, so
/// ASTs compare by structure alone.
#[derive(Clone, Copy, Debug, Default, Eq)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl PartialOrd for Span {
    fn partial_cmp(&self, other: &Span) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Span {
    fn cmp(&self, _: &Span) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("{}:{}: expected {expected}, found {found}", span.line, span.col)]
    SyntaxError {
        span: Span,
        expected: String,
        found: String,
    },
    #[error("{}:{}: unbound name `{name}`", span.line, span.col)]
    UnboundName { name: String, span: Span },
    #[error("{}:{}: `{name}` is defined twice", span.line, span.col)]
    DuplicateDefinition { name: String, span: Span },
    #[error("{}:{}: {msg}", span.line, span.col)]
    Invalid { msg: String, span: Span },
    #[error("{}:{}: {source}", span.line, span.col)]
    Net { source: NetError, span: Span },
    #[error("bad topology parameters: {0}")]
    BadParams(String),
}

impl DslError {
    pub fn span(&self) -> Option<Span> {
        match self {
            DslError::SyntaxError { span, .. }
            | DslError::UnboundName { span, .. }
            | DslError::DuplicateDefinition { span, .. }
            | DslError::Invalid { span, .. }
            | DslError::Net { span, .. } => Some(*span),
            DslError::BadParams(_) => None,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>, span: Span) -> Self {
        DslError::Invalid { msg: msg.into(), span }
    }
}

pub fn parse(text: &str) -> Result<PlatformAst, DslError> {
    parser::Parser::new(lexer::lex(text)?).file()
}

/// Parses and compiles in one step.
pub fn compile_str(text: &str) -> Result<Platform, DslError> {
    compile(&parse(text)?)
}
