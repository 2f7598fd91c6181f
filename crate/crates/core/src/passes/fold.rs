//! Constant folding.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::analysis::free_vars;
use crate::exec::{eval_kernel, Interpreter};
use crate::expr::{Call, Expr, ExprKind, Function, Let};
use crate::module::Module;

use super::util::{const_value, is_const_like, value_expr};

/// Replaces operator calls (and calls of closed primitive functions) whose
/// arguments are all constants with their value, propagates let-bound
/// constants, and resolves projections and conditionals on constants.
pub fn constant_fold(m: &Module) -> Module {
    m.map_globals(|_, f| {
        let mut folder = Folder { m, known: BTreeMap::new() };
        Function { body: folder.expr(&f.body), ..f.clone() }
    })
}

struct Folder<'m> {
    m: &'m Module,
    known: BTreeMap<usize, Expr>,
}

impl Folder<'_> {
    fn call(&mut self, e: &Expr, c: &Call) -> Expr {
        let callee = self.expr(&c.callee);
        let args: Vec<Expr> = c.args.iter().map(|a| self.expr(a)).collect();
        if args.iter().all(is_const_like) {
            let values: Vec<_> = args.iter().filter_map(const_value).collect();
            let folded = match callee.kind() {
                ExprKind::Op(name) => eval_kernel(self.m, name, &values, &c.attrs).ok(),
                ExprKind::Function(f) if f.is_primitive() && free_vars(&callee).is_empty() => {
                    let call = Expr::call(callee.clone(), args.clone());
                    Interpreter::new(self.m).eval_closed(&call).ok()
                }
                _ => None,
            };
            if let Some(v) = folded.as_ref().and_then(value_expr) {
                return v;
            }
        }
        e.rebuild(ExprKind::Call(Call { callee, type_args: c.type_args.clone(), args, attrs: c.attrs.clone() }))
    }

    fn expr(&mut self, e: &Expr) -> Expr {
        match e.kind() {
            ExprKind::Var(v) => self.known.get(&v.id()).cloned().unwrap_or_else(|| e.clone()),
            ExprKind::Call(c) => self.call(e, c),
            ExprKind::Let(l) => {
                let value = self.expr(&l.value);
                if is_const_like(&value) {
                    self.known.insert(l.var.id(), value);
                    return self.expr(&l.body);
                }
                let body = self.expr(&l.body);
                e.rebuild(ExprKind::Let(Let { var: l.var.clone(), annotation: l.annotation.clone(), value, body }))
            }
            ExprKind::Proj(t, i) => {
                let t = self.expr(t);
                match t.kind() {
                    ExprKind::Tuple(fields) if is_const_like(&t) && *i < fields.len() => fields[*i].clone(),
                    _ => e.rebuild(ExprKind::Proj(t, *i)),
                }
            }
            ExprKind::If(c, t, f) => {
                let c = self.expr(c);
                match c.as_constant().and_then(|k| k.as_bool_scalar()) {
                    Some(true) => self.expr(t),
                    Some(false) => self.expr(f),
                    None => {
                        let t = self.expr(t);
                        let f = self.expr(f);
                        e.rebuild(ExprKind::If(c, t, f))
                    }
                }
            }
            _ => e.map_children(&mut |c| self.expr(c)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs::{AttrValue, Attrs};
    use crate::dtype::BaseType;
    use crate::expr::Var;
    use crate::tensor::Tensor;
    use alloc::vec;

    fn fold_expr(e: Expr) -> Expr {
        let mut m = Module::new();
        m.add_global("main", Function::new(vec![], e)).unwrap();
        constant_fold(&m).globals["main"].body.clone()
    }

    #[test]
    fn folds_constant_add() {
        let e = Expr::call_op("add", vec![Expr::constant(Tensor::scalar_i32(1)), Expr::constant(Tensor::scalar_i32(2))], Attrs::new());
        let out = fold_expr(e);
        assert_eq!(**out.as_constant().unwrap(), Tensor::scalar_i32(3));
    }

    #[test]
    fn leaves_non_constant_calls() {
        let x = Var::fresh("x");
        let mut m = Module::new();
        let body = Expr::call_op("add", vec![Expr::var(&x), Expr::constant(Tensor::scalar_f32(0.0))], Attrs::new());
        m.add_global("main", Function::new(vec![crate::expr::Param { var: x, annotation: None }], body.clone())).unwrap();
        let out = constant_fold(&m);
        assert!(crate::analysis::alpha_equal(&out.globals["main"].body, &body));
    }

    #[test]
    fn folds_reshape_like_the_interpreter() {
        let data = Tensor::from_f64(vec![4], BaseType::F32, vec![1.0, 2.0, 3.0, 4.0]);
        let attrs = Attrs::new().with("newshape", AttrValue::List(vec![AttrValue::Int(2), AttrValue::Int(2)]));
        let e = Expr::call_op("reshape", vec![Expr::constant(data.clone())], attrs.clone());
        let out = fold_expr(e.clone());
        let mut m = Module::new();
        m.add_global("main", Function::new(vec![], e)).unwrap();
        let oracle = crate::exec::interp(&m, "main", vec![]).unwrap();
        assert_eq!(**out.as_constant().unwrap(), *oracle.as_tensor().unwrap());
        assert_eq!(out.as_constant().unwrap().shape, vec![2, 2]);
    }

    #[test]
    fn propagates_through_lets_and_ifs() {
        let a = Var::fresh("a");
        let e = Expr::let_(
            a.clone(),
            Expr::constant(Tensor::scalar_bool(true)),
            Expr::if_(Expr::var(&a), Expr::constant(Tensor::scalar_i32(1)), Expr::constant(Tensor::scalar_i32(2))),
        );
        assert_eq!(**fold_expr(e).as_constant().unwrap(), Tensor::scalar_i32(1));
    }
}
