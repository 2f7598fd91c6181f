//! Standard library of ADTs and combinators written in the text format.

use std::sync::OnceLock;

use microrelay_core::module::ModuleError;
use microrelay_core::Module;

use crate::text::parse_module_bare;

pub const PRELUDE_SOURCE: &str = include_str!("prelude.rly");

fn parsed() -> &'static Module {
    static PRELUDE: OnceLock<Module> = OnceLock::new();
    PRELUDE.get_or_init(|| parse_module_bare(PRELUDE_SOURCE, "<prelude>").expect("prelude parses"))
}

/// Adds the prelude's ADTs and functions to `m`. Loading twice is a no-op;
/// a user definition with a prelude name is a collision.
pub fn load_prelude(m: &mut Module) -> Result<(), ModuleError> {
    let p = parsed();
    let loaded = p.adts.keys().chain(p.globals.keys()).all(|n| m.prelude_names.contains(n));
    if loaded {
        return Ok(());
    }
    for adt in p.adts.values() {
        m.add_adt(adt.clone())?;
        m.prelude_names.insert(adt.name.clone());
    }
    for (name, f) in &p.globals {
        m.add_global(name, f.clone())?;
        m.prelude_names.insert(name.clone());
    }
    Ok(())
}
