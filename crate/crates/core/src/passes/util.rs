//! Helpers shared by the passes.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::exec::Value;
use crate::expr::{Expr, ExprKind, Var};
use crate::infer::{infer, TypeError};
use crate::module::Module;
use crate::passes::to_anf_module;
use crate::tensor::Tensor;

/// True for expressions whose evaluation has no effect besides producing a
/// value. `callee_pure` decides calls through variables.
pub(crate) fn is_pure(e: &Expr, callee_pure: &dyn Fn(&Var) -> bool) -> bool {
    let pure = |x: &Expr| is_pure(x, callee_pure);
    match e.kind() {
        ExprKind::Var(_)
        | ExprKind::Global(_)
        | ExprKind::Constant(_)
        | ExprKind::Op(_)
        | ExprKind::Constructor(_)
        | ExprKind::Function(_) => true,
        ExprKind::Call(c) => {
            let callee_ok = match c.callee.kind() {
                ExprKind::Op(_) | ExprKind::Constructor(_) => true,
                ExprKind::Function(f) => f.is_primitive() && pure(&f.body),
                ExprKind::Var(v) => callee_pure(v),
                _ => false,
            };
            callee_ok && c.args.iter().all(pure)
        }
        ExprKind::Tuple(fields) => fields.iter().all(pure),
        ExprKind::Proj(t, _) => pure(t),
        ExprKind::If(c, t, f) => pure(c) && pure(t) && pure(f),
        ExprKind::Let(l) => pure(&l.value) && pure(&l.body),
        ExprKind::Match(..) | ExprKind::RefNew(_) | ExprKind::RefRead(_) | ExprKind::RefWrite(..) => false,
    }
}

/// Replaces free occurrences of the mapped variables.
pub(crate) fn subst(e: &Expr, map: &BTreeMap<usize, Expr>) -> Expr {
    if map.is_empty() {
        return e.clone();
    }
    match e.kind() {
        ExprKind::Var(v) => map.get(&v.id()).cloned().unwrap_or_else(|| e.clone()),
        _ => e.map_children(&mut |c| subst(c, map)),
    }
}

/// Number of occurrences of every variable in `e`.
pub(crate) fn use_counts(e: &Expr, out: &mut BTreeMap<usize, usize>) {
    if let ExprKind::Var(v) = e.kind() {
        *out.entry(v.id()).or_default() += 1;
        return;
    }
    let _ = e.try_map_children::<()>(&mut |c| {
        use_counts(c, out);
        Ok(c.clone())
    });
}

/// Constant tensor or tuple of such, as an expression.
pub(crate) fn is_const_like(e: &Expr) -> bool {
    match e.kind() {
        ExprKind::Constant(_) => true,
        ExprKind::Tuple(fields) => fields.iter().all(is_const_like),
        _ => false,
    }
}

pub(crate) fn const_value(e: &Expr) -> Option<Value> {
    match e.kind() {
        ExprKind::Constant(t) => Some(Value::Tensor(t.clone())),
        ExprKind::Tuple(fields) => fields.iter().map(const_value).collect::<Option<Vec<_>>>().map(Value::Tuple),
        _ => None,
    }
}

pub(crate) fn value_expr(v: &Value) -> Option<Expr> {
    match v {
        Value::Tensor(t) => Some(Expr::new(ExprKind::Constant(t.clone()))),
        Value::Tuple(fields) => fields.iter().map(value_expr).collect::<Option<Vec<_>>>().map(Expr::tuple),
        _ => None,
    }
}

pub(crate) fn constant(t: Tensor) -> Expr {
    Expr::new(ExprKind::Constant(Arc::new(t)))
}

/// ANF conversion followed by inference, so every atom carries its type.
pub(crate) fn typed_anf(m: &Module) -> Result<Module, TypeError> {
    infer(&to_anf_module(m))
}
