//! Operator registry: each operator's attributes, type relation, fusion
//! class and reference kernel.

mod kernels;
mod relations;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::attrs::{AttrValue, Attrs};
use crate::exec::{Trap, Value};
use crate::ty::Type;

pub use relations::{dims_compatible, types_compatible};
pub(crate) use relations::conv_params;

/// Fusion class of an operator. The derived order is the one the fusion
/// grouping rules compare against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FusionPattern {
    Elementwise,
    Broadcast,
    Injective,
    Reduction,
    ComplexOutFusable,
    Opaque,
}

/// Expected shape of an attribute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrKind {
    Int,
    Ints,
    IntOrInts,
    Float,
    Str,
    Bool,
}

impl AttrKind {
    pub fn accepts(self, v: &AttrValue) -> bool {
        match self {
            AttrKind::Int => matches!(v, AttrValue::Int(_)),
            AttrKind::Ints => matches!(v, AttrValue::List(items) if items.iter().all(|i| matches!(i, AttrValue::Int(_)))),
            AttrKind::IntOrInts => AttrKind::Int.accepts(v) || AttrKind::Ints.accepts(v),
            AttrKind::Float => matches!(v, AttrValue::Float(_) | AttrValue::Int(_)),
            AttrKind::Str => matches!(v, AttrValue::Str(_)),
            AttrKind::Bool => matches!(v, AttrValue::Bool(_) | AttrValue::Int(_)),
        }
    }
}

/// Deduces types for some relation slots from the others. Returning an
/// empty list means "not enough information yet"; `Err` means the types
/// can never satisfy the relation.
pub type RelationFn = dyn Fn(&[Type], &Attrs) -> Result<Vec<(usize, Type)>, String> + Send + Sync;

pub type KernelFn = dyn Fn(&[Value], &Attrs) -> Result<Value, Trap> + Send + Sync;

pub struct Relation {
    pub name: String,
    pub func: Arc<RelationFn>,
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Relation").field("name", &self.name).finish()
    }
}

#[derive(Clone)]
pub struct OperatorDecl {
    pub name: String,
    pub arity: usize,
    pub attrs_schema: BTreeMap<String, AttrKind>,
    pub relation: String,
    pub pattern: FusionPattern,
    pub eval: Arc<KernelFn>,
}

impl fmt::Debug for OperatorDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorDecl")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("relation", &self.relation)
            .field("pattern", &self.pattern)
            .finish()
    }
}

impl OperatorDecl {
    pub fn new(
        name: &str,
        arity: usize,
        relation: &str,
        pattern: FusionPattern,
        eval: impl Fn(&[Value], &Attrs) -> Result<Value, Trap> + Send + Sync + 'static,
    ) -> OperatorDecl {
        OperatorDecl {
            name: String::from(name),
            arity,
            attrs_schema: BTreeMap::new(),
            relation: String::from(relation),
            pattern,
            eval: Arc::new(eval),
        }
    }

    pub fn attr(mut self, name: &str, kind: AttrKind) -> OperatorDecl {
        self.attrs_schema.insert(String::from(name), kind);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("operator `{0}` is already registered")]
    DuplicateOperator(String),
    #[error("relation `{0}` is already registered")]
    DuplicateRelation(String),
    #[error("operator `{op}` refers to unknown relation `{relation}`")]
    UnknownRelation { op: String, relation: String },
}

/// Result of running a relation over (partially known) types.
#[derive(Debug, Clone, PartialEq)]
pub enum RelationOutcome {
    Holds,
    Fails(String),
    /// Slot unifications implied by what is known so far (possibly none).
    Progress(Vec<(usize, Type)>),
}

#[derive(Debug, Clone, Default)]
pub struct OpRegistry {
    ops: BTreeMap<String, Arc<OperatorDecl>>,
    relations: BTreeMap<String, Arc<Relation>>,
}

impl OpRegistry {
    pub fn empty() -> OpRegistry {
        OpRegistry::default()
    }

    /// Registry with every builtin relation and operator.
    pub fn builtin() -> OpRegistry {
        let mut reg = OpRegistry::empty();
        relations::register_builtin(&mut reg);
        kernels::register_builtin(&mut reg);
        reg
    }

    pub fn register_relation(
        &mut self,
        name: &str,
        func: impl Fn(&[Type], &Attrs) -> Result<Vec<(usize, Type)>, String> + Send + Sync + 'static,
    ) -> Result<(), RegistryError> {
        if self.relations.contains_key(name) {
            return Err(RegistryError::DuplicateRelation(String::from(name)));
        }
        self.relations.insert(String::from(name), Arc::new(Relation { name: String::from(name), func: Arc::new(func) }));
        Ok(())
    }

    pub fn register_op(&mut self, decl: OperatorDecl) -> Result<(), RegistryError> {
        if self.ops.contains_key(&decl.name) {
            return Err(RegistryError::DuplicateOperator(decl.name));
        }
        if !self.relations.contains_key(&decl.relation) {
            return Err(RegistryError::UnknownRelation { op: decl.name, relation: decl.relation });
        }
        self.ops.insert(decl.name.clone(), Arc::new(decl));
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<&Arc<OperatorDecl>> {
        self.ops.get(name)
    }

    pub fn relation(&self, name: &str) -> Option<&Arc<Relation>> {
        self.relations.get(name)
    }

    pub fn op_names(&self) -> impl Iterator<Item = &str> {
        self.ops.keys().map(String::as_str)
    }
}

/// Runs a relation and classifies the result.
///
/// When every slot is free of solver unknowns, the deductions are checked
/// against the actual slot types and the relation either holds or fails.
/// Otherwise the deductions are returned for the solver to unify.
pub fn apply_relation(rel: &Relation, types: &[Type], attrs: &Attrs) -> RelationOutcome {
    let deduced = match (rel.func)(types, attrs) {
        Ok(d) => d,
        Err(msg) => return RelationOutcome::Fails(msg),
    };
    if types.iter().all(Type::is_resolved) {
        for (slot, t) in &deduced {
            match types.get(*slot) {
                Some(actual) if types_compatible(actual, t) => {}
                Some(actual) => {
                    return RelationOutcome::Fails(alloc::format!("expected {t} in position {slot}, found {actual}"))
                }
                None => return RelationOutcome::Fails(alloc::format!("relation deduced out-of-range slot {slot}")),
            }
        }
        RelationOutcome::Holds
    } else {
        RelationOutcome::Progress(deduced)
    }
}
