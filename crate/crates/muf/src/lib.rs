//! μF: a probabilistic stream language with delayed-sampling inference and
//! a static bounded-memory analysis.

pub mod ast;
pub mod builtins;
mod chunked;
pub mod corpus;
pub mod distributions;
pub mod ds_graph;
pub mod dynamic_checker;
pub mod error;
pub mod interpreter;
pub mod lexer;
pub mod parser;
pub mod static_analysis;
pub mod types;
pub mod value;

pub use error::MufError;
pub use parser::parse;
pub use types::typecheck_core;
