#![allow(dead_code)]

pub mod gen;

use std::path::PathBuf;

use microrelay::gen::random_args;
use microrelay::parse_module_named;
use microrelay_core::infer::infer_full;
use microrelay_core::{alpha_equal_fn, Module, Type, Value};
use rand_chacha::ChaCha8Rng;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

/// Every corpus program as (file name, source), sorted by name.
pub fn corpus() -> Vec<(String, String)> {
    let mut files: Vec<_> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "rly"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect()
}

pub fn parse(name: &str, src: &str) -> Module {
    parse_module_named(src, name).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn same_user_globals(a: &Module, b: &Module) -> bool {
    let names_a: Vec<_> = a.user_globals().map(|(n, _)| n.clone()).collect();
    let names_b: Vec<_> = b.user_globals().map(|(n, _)| n.clone()).collect();
    names_a == names_b && a.user_globals().all(|(n, f)| alpha_equal_fn(f, &b.globals[n]))
}

/// Random arguments for `entry` drawn from its inferred signature.
pub fn random_inputs(m: &Module, entry: &str, rng: &mut ChaCha8Rng) -> Vec<Value> {
    let inferred = infer_full(m).expect("typechecks");
    let sig = inferred.signatures[entry].clone();
    random_args(&Type::Func(sig), rng).expect("concrete parameter types")
}

/// Integer results must agree bit for bit, float results within `tol`
/// relative error.
pub fn values_agree(a: &Value, b: &Value, tol: f64) -> bool {
    a.bit_eq(b) || a.approx_eq(b, tol)
}
