//! The affinity-aware policy language: AST, parser, canonical printer and
//! linter.

mod ast;
mod check;
mod parser;
mod serialize;

pub use ast::*;
pub use check::{check_script, check_script_standalone, Diagnostic, Level};
pub use parser::{parse_script, ParseError, ParseErrorKind};
pub use serialize::serialize_script;
