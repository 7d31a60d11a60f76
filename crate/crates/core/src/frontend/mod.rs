//! B0-lite: the restricted modelling language a user function is written in.
//!
//! A model declares inputs, outputs and state (BOOL, bounded INT, arrays of
//! either) and exactly one operation, `user_logic`, executed once per cycle.
//! There is no WHILE construct and FOR bounds are constants, so every
//! accepted model has a finite per-cycle work bound.

pub mod ast;
pub mod cost;
pub mod diag;
pub mod exhaustive;
pub mod interp;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod typeck;

pub use ast::{Model, Span};
pub use cost::{complexity_check, CycleBound};
pub use diag::{DiagCode, Diagnostic};
pub use exhaustive::{check_exhaustive, InvariantReport, Violation};
pub use interp::{validate_inputs, Interpreter, Trap};
pub use parser::parse;
pub use printer::print_model;
pub use typeck::{typecheck, TypedModel, VarId, VarKind};

/// Parses and typechecks in one step.
pub fn compile(source: &str) -> Result<TypedModel, Vec<Diagnostic>> {
    typecheck(&parse(source)?)
}
