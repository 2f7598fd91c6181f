//! Text format, prelude and command-line driver for the microrelay IR.

pub mod prelude;
pub mod text;

pub use prelude::{load_prelude, PRELUDE_SOURCE};
pub use text::{parse_expr, parse_inputs, parse_module, parse_module_named, print_expr, print_module, ParseError};
pub mod cli;
pub mod gen;
