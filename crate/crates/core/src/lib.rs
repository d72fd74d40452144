//! Core library for the ANT language and its call-anticipation analysis:
//! parser, type system, small-step interpreter, runtime anticipation oracle,
//! effect inference, symbolic execution, constraint engine, static analysis,
//! and the anticipation-table service with a replica simulator.

pub mod analysis;
pub mod ast;
pub mod domain;
pub mod effect;
pub mod formula;
pub mod interp;
pub mod lexer;
pub mod oracle;
pub mod parser;
pub mod pretty;
pub mod simulate;
pub mod symbolic;
pub mod table;
pub mod types;

pub use ast::*;
pub use parser::{desugar, parse_expr, parse_program, parse_program_with_spans, ParseError};
pub use pretty::pretty_print;
