//! Human-readable text format: lexer, parser and printer.

mod lexer;
mod parser;
mod printer;

pub use lexer::{LexError, Tok, Token};
pub use parser::ParseError;
pub use printer::{const_literal, print_expr, print_module, INLINE_LIMIT};

use microrelay_core::wellformed::check_expr;
use microrelay_core::{check_well_formed, Expr, Module};

use crate::prelude::load_prelude;
use parser::Parser;

/// Parses a module with the prelude loaded and checks it is well formed.
pub fn parse_module(text: &str) -> Result<Module, ParseError> {
    parse_module_named(text, "<input>")
}

/// Like [`parse_module`], with `file` used in spans.
pub fn parse_module_named(text: &str, file: &str) -> Result<Module, ParseError> {
    let mut m = Module::new();
    load_prelude(&mut m)?;
    parse_into(&mut m, text, file)?;
    Ok(m)
}

/// Parses a module without loading the prelude.
pub fn parse_module_bare(text: &str, file: &str) -> Result<Module, ParseError> {
    let mut m = Module::new();
    parse_into(&mut m, text, file)?;
    Ok(m)
}

fn parse_into(m: &mut Module, text: &str, file: &str) -> Result<(), ParseError> {
    Parser::new(text, file)?.module(m)?;
    check_well_formed(m)?;
    Ok(())
}

/// Parses a closed expression against the globals, ADTs and operators of `m`.
pub fn parse_expr(text: &str, m: &Module) -> Result<Expr, ParseError> {
    let mut p = Parser::new(text, "<expr>")?;
    let e = p.seq()?;
    p.expect_eof()?;
    check_expr(m, &e)?;
    Ok(e)
}

/// Parses an inputs file: a list of `%name = expr` bindings.
pub fn parse_inputs(text: &str, file: &str, m: &Module) -> Result<Vec<(String, Expr)>, ParseError> {
    let mut p = Parser::new(text, file)?;
    let mut out = Vec::new();
    while !p.at_eof() {
        let name = p.local_name()?;
        p.expect_punct("=")?;
        let e = p.expr()?;
        p.eat_punct(";");
        check_expr(m, &e)?;
        out.push((name, e));
    }
    Ok(out)
}
