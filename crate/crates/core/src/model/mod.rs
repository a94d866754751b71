//! Schema, program AST, effects and system state shared by every stage.

mod ast;
mod state;
mod unroll;
mod validate;

pub use ast::*;
pub use state::*;
pub use unroll::*;
pub use validate::*;

#[cfg(test)]
mod tests;
