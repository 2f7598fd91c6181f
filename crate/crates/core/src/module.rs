//! Module environment: global functions, ADT declarations and the operator
//! registry they are resolved against.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::expr::Function;
use crate::op::OpRegistry;
use crate::ty::Type;

#[derive(Debug, Clone, PartialEq)]
pub struct Constructor {
    pub name: String,
    pub fields: Vec<Type>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdtDef {
    pub name: String,
    pub type_params: Vec<String>,
    pub constructors: Vec<Constructor>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModuleError {
    #[error("NameCollision: `{0}` is already defined")]
    NameCollision(String),
}

#[derive(Debug, Clone)]
pub struct Module {
    pub globals: BTreeMap<String, Function>,
    pub adts: BTreeMap<String, AdtDef>,
    pub registry: Arc<OpRegistry>,
    /// Globals and ADTs that came from the prelude; printers omit them.
    pub prelude_names: BTreeSet<String>,
}

impl Default for Module {
    fn default() -> Self {
        Module::new()
    }
}

impl Module {
    /// Empty module over the builtin operators.
    pub fn new() -> Module {
        Module::with_registry(Arc::new(OpRegistry::builtin()))
    }

    pub fn with_registry(registry: Arc<OpRegistry>) -> Module {
        Module { globals: BTreeMap::new(), adts: BTreeMap::new(), registry, prelude_names: BTreeSet::new() }
    }

    pub fn registry(&self) -> &OpRegistry {
        &self.registry
    }

    pub fn add_global(&mut self, name: &str, f: Function) -> Result<(), ModuleError> {
        if self.globals.contains_key(name) {
            return Err(ModuleError::NameCollision(String::from(name)));
        }
        self.globals.insert(String::from(name), f);
        Ok(())
    }

    pub fn add_adt(&mut self, adt: AdtDef) -> Result<(), ModuleError> {
        if self.adts.contains_key(&adt.name) {
            return Err(ModuleError::NameCollision(adt.name));
        }
        for c in &adt.constructors {
            if self.constructor(&c.name).is_some() {
                return Err(ModuleError::NameCollision(c.name.clone()));
            }
        }
        self.adts.insert(adt.name.clone(), adt);
        Ok(())
    }

    /// The ADT declaring constructor `name`, and the constructor itself.
    pub fn constructor(&self, name: &str) -> Option<(&AdtDef, &Constructor)> {
        self.adts.values().find_map(|adt| adt.constructors.iter().find(|c| c.name == name).map(|c| (adt, c)))
    }

    /// Globals defined by the user rather than the prelude.
    pub fn user_globals(&self) -> impl Iterator<Item = (&String, &Function)> {
        self.globals.iter().filter(|(n, _)| !self.prelude_names.contains(*n))
    }

    /// Same module with every global body rewritten by `f`.
    pub fn map_globals(&self, mut f: impl FnMut(&str, &Function) -> Function) -> Module {
        let mut out = self.clone();
        for (name, func) in out.globals.iter_mut() {
            *func = f(name, func);
        }
        out
    }
}
