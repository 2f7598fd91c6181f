//! Types: tensor types with symbolic shapes, tuples, functions, references
//! and algebraic data types.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::dtype::BaseType;

/// One tensor dimension.
///
/// `Infer` is a solver-internal unknown; it never survives a successful
/// type inference run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dim {
    Const(u64),
    Var(String),
    Any,
    Infer(u32),
}

impl Dim {
    pub fn as_const(&self) -> Option<u64> {
        match self {
            Dim::Const(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Const(v) => write!(f, "{v}"),
            Dim::Var(n) => f.write_str(n),
            Dim::Any => f.write_str("?"),
            Dim::Infer(id) => write!(f, "?d{id}"),
        }
    }
}

pub type Shape = Vec<Dim>;

/// Shape made only of constant dimensions.
pub fn const_shape(dims: &[usize]) -> Shape {
    dims.iter().map(|&d| Dim::Const(d as u64)).collect()
}

/// Returns the concrete extents if every dimension is a constant.
pub fn shape_extents(shape: &[Dim]) -> Option<Vec<usize>> {
    shape.iter().map(|d| d.as_const().map(|v| v as usize)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TensorType {
    pub shape: Shape,
    pub dtype: BaseType,
}

/// An occurrence of a named relation over a list of types (arguments first,
/// result last).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationInstance {
    pub relation: String,
    pub types: Vec<Type>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FuncType {
    pub type_params: Vec<String>,
    pub args: Vec<Type>,
    pub ret: Type,
    pub relations: Vec<RelationInstance>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Type {
    Tensor(TensorType),
    Tuple(Vec<Type>),
    Func(Arc<FuncType>),
    Ref(Box<Type>),
    /// A named type parameter.
    Var(String),
    /// Application of an ADT name to arguments; nullary ADTs have no args.
    Call { head: String, args: Vec<Type> },
    /// Solver-internal unknown.
    Infer(u32),
}

impl Type {
    pub fn tensor(shape: Shape, dtype: BaseType) -> Type {
        Type::Tensor(TensorType { shape, dtype })
    }

    pub fn scalar(dtype: BaseType) -> Type {
        Type::tensor(Vec::new(), dtype)
    }

    pub fn unit() -> Type {
        Type::Tuple(Vec::new())
    }

    pub fn func(args: Vec<Type>, ret: Type) -> Type {
        Type::Func(Arc::new(FuncType { type_params: Vec::new(), args, ret, relations: Vec::new() }))
    }

    pub fn as_tensor(&self) -> Option<&TensorType> {
        match self {
            Type::Tensor(t) => Some(t),
            _ => None,
        }
    }

    /// True when no solver unknowns remain anywhere inside.
    pub fn is_resolved(&self) -> bool {
        let mut types_ok = true;
        let mut dims_ok = true;
        self.visit(
            &mut |t| {
                if let Type::Infer(_) = t {
                    types_ok = false;
                }
            },
            &mut |d| {
                if let Dim::Infer(_) = d {
                    dims_ok = false;
                }
            },
        );
        types_ok && dims_ok
    }

    /// True when the type mentions a ref anywhere.
    pub fn contains_ref(&self) -> bool {
        let mut found = false;
        self.visit(&mut |t| {
            if let Type::Ref(_) = t {
                found = true;
            }
        }, &mut |_| {});
        found
    }

    /// Pre-order walk over every nested type and dimension.
    pub fn visit(&self, on_type: &mut dyn FnMut(&Type), on_dim: &mut dyn FnMut(&Dim)) {
        on_type(self);
        match self {
            Type::Tensor(t) => t.shape.iter().for_each(|d| on_dim(d)),
            Type::Tuple(fields) => fields.iter().for_each(|f| f.visit(on_type, on_dim)),
            Type::Func(ft) => {
                for a in &ft.args {
                    a.visit(on_type, on_dim);
                }
                ft.ret.visit(on_type, on_dim);
                for rel in &ft.relations {
                    for t in &rel.types {
                        t.visit(on_type, on_dim);
                    }
                }
            }
            Type::Ref(inner) => inner.visit(on_type, on_dim),
            Type::Call { args, .. } => args.iter().for_each(|a| a.visit(on_type, on_dim)),
            Type::Var(_) | Type::Infer(_) => {}
        }
    }

    /// Rebuilds the type bottom-up, letting `on_type` replace leaves and
    /// `on_dim` replace dimensions.
    pub fn map(&self, on_type: &mut dyn FnMut(&Type) -> Option<Type>, on_dim: &mut dyn FnMut(&Dim) -> Dim) -> Type {
        if let Some(t) = on_type(self) {
            return t;
        }
        match self {
            Type::Tensor(t) => Type::Tensor(TensorType {
                shape: t.shape.iter().map(|d| on_dim(d)).collect(),
                dtype: t.dtype,
            }),
            Type::Tuple(fields) => Type::Tuple(fields.iter().map(|f| f.map(on_type, on_dim)).collect()),
            Type::Func(ft) => Type::Func(Arc::new(FuncType {
                type_params: ft.type_params.clone(),
                args: ft.args.iter().map(|a| a.map(on_type, on_dim)).collect(),
                ret: ft.ret.map(on_type, on_dim),
                relations: ft
                    .relations
                    .iter()
                    .map(|r| RelationInstance {
                        relation: r.relation.clone(),
                        types: r.types.iter().map(|t| t.map(on_type, on_dim)).collect(),
                    })
                    .collect(),
            })),
            Type::Ref(inner) => Type::Ref(Box::new(inner.map(on_type, on_dim))),
            Type::Call { head, args } => Type::Call {
                head: head.clone(),
                args: args.iter().map(|a| a.map(on_type, on_dim)).collect(),
            },
            Type::Var(_) | Type::Infer(_) => self.clone(),
        }
    }

    /// Substitutes named type variables and named dimensions.
    pub fn subst(&self, types: &BTreeMap<String, Type>, dims: &BTreeMap<String, Dim>) -> Type {
        self.map(
            &mut |t| match t {
                Type::Var(n) => types.get(n).cloned(),
                _ => None,
            },
            &mut |d| match d {
                Dim::Var(n) => dims.get(n).cloned().unwrap_or_else(|| d.clone()),
                _ => d.clone(),
            },
        )
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Tensor(t) if t.shape.is_empty() => write!(f, "{}", t.dtype),
            Type::Tensor(t) => {
                f.write_str("Tensor[(")?;
                for (i, d) in t.shape.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{d}")?;
                }
                if t.shape.len() == 1 {
                    f.write_str(",")?;
                }
                write!(f, "), {}]", t.dtype)
            }
            Type::Tuple(fields) => {
                f.write_str("(")?;
                for (i, t) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                if fields.len() == 1 {
                    f.write_str(",")?;
                }
                f.write_str(")")
            }
            Type::Func(ft) => {
                f.write_str("fn ")?;
                if !ft.type_params.is_empty() {
                    write!(f, "<{}>", ft.type_params.join(", "))?;
                }
                f.write_str("(")?;
                for (i, t) in ft.args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ") -> {}", ft.ret)?;
                if !ft.relations.is_empty() {
                    f.write_str(" where ")?;
                    for (i, r) in ft.relations.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{}(", r.relation)?;
                        for (j, t) in r.types.iter().enumerate() {
                            if j > 0 {
                                f.write_str(", ")?;
                            }
                            write!(f, "{t}")?;
                        }
                        f.write_str(")")?;
                    }
                }
                Ok(())
            }
            Type::Ref(inner) => write!(f, "Ref[{inner}]"),
            Type::Var(n) => f.write_str(n),
            Type::Call { head, args } => {
                f.write_str(head)?;
                if !args.is_empty() {
                    f.write_str("[")?;
                    for (i, t) in args.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{t}")?;
                    }
                    f.write_str("]")?;
                }
                Ok(())
            }
            Type::Infer(id) => write!(f, "?t{id}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn display_forms() {
        let t = Type::tensor(vec![Dim::Const(2), Dim::Var("n".into()), Dim::Any], BaseType::F32);
        assert_eq!(t.to_string(), "Tensor[(2, n, ?), float32]");
        assert_eq!(Type::scalar(BaseType::I32).to_string(), "int32");
        assert_eq!(Type::tensor(vec![Dim::Const(4)], BaseType::F32).to_string(), "Tensor[(4,), float32]");
        assert_eq!(Type::unit().to_string(), "()");
    }

    #[test]
    fn resolved_detects_unknowns() {
        let t = Type::Tuple(vec![Type::scalar(BaseType::I32), Type::tensor(vec![Dim::Infer(3)], BaseType::F32)]);
        assert!(!t.is_resolved());
        assert!(Type::scalar(BaseType::I32).is_resolved());
    }
}
