//! Common subexpression elimination over A-normal form.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::analysis::{alpha_equal, structural_hash};
use crate::anf::function_to_anf;
use crate::expr::{Clause, Expr, ExprKind, Function, Let, Var};
use crate::module::Module;

/// Merges alpha-equal pure bindings. A binding is reused only where it is
/// in scope: entries made inside a branch or function body are dropped on
/// leaving it.
pub fn common_subexpr_elim(m: &Module) -> Module {
    m.map_globals(|_, f| {
        let f = function_to_anf(f);
        let mut cse = Cse { scopes: alloc::vec![Vec::new()], subst: BTreeMap::new() };
        Function { body: cse.expr(&f.body), ..f }
    })
}

struct Cse {
    scopes: Vec<Vec<(u64, Expr, Var)>>,
    subst: BTreeMap<usize, Expr>,
}

fn mergeable(e: &Expr) -> bool {
    match e.kind() {
        ExprKind::Call(c) => matches!(c.callee.kind(), ExprKind::Op(_) | ExprKind::Constructor(_)),
        ExprKind::Tuple(_) | ExprKind::Proj(..) => true,
        _ => false,
    }
}

impl Cse {
    fn scoped(&mut self, e: &Expr) -> Expr {
        self.scopes.push(Vec::new());
        let out = self.expr(e);
        self.scopes.pop();
        out
    }

    fn lookup(&self, h: u64, e: &Expr) -> Option<&Var> {
        self.scopes.iter().rev().flat_map(|s| s.iter()).find(|(k, x, _)| *k == h && alpha_equal(x, e)).map(|(_, _, v)| v)
    }

    fn expr(&mut self, e: &Expr) -> Expr {
        match e.kind() {
            ExprKind::Var(v) => self.subst.get(&v.id()).cloned().unwrap_or_else(|| e.clone()),
            ExprKind::Let(l) => {
                let value = self.expr(&l.value);
                if mergeable(&value) && l.annotation.is_none() {
                    let h = structural_hash(&value);
                    if let Some(prev) = self.lookup(h, &value) {
                        let prev = Expr::var(prev);
                        self.subst.insert(l.var.id(), prev);
                        return self.expr(&l.body);
                    }
                    self.scopes.last_mut().expect("scope").push((h, value.clone(), l.var.clone()));
                }
                let body = self.expr(&l.body);
                e.rebuild(ExprKind::Let(Let { var: l.var.clone(), annotation: l.annotation.clone(), value, body }))
            }
            ExprKind::If(c, t, f) => {
                let c = self.expr(c);
                let t = self.scoped(t);
                let f = self.scoped(f);
                e.rebuild(ExprKind::If(c, t, f))
            }
            ExprKind::Match(s, clauses) => {
                let s = self.expr(s);
                let clauses = clauses.iter().map(|cl| Clause { pattern: cl.pattern.clone(), body: self.scoped(&cl.body) }).collect();
                e.rebuild(ExprKind::Match(s, clauses))
            }
            ExprKind::Function(f) => e.rebuild(ExprKind::Function(Function { body: self.scoped(&f.body), ..f.clone() })),
            _ => e.map_children(&mut |c| self.expr(c)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::alpha_equal;
    use crate::attrs::Attrs;
    use crate::expr::Param;
    use crate::tensor::Tensor;
    use alloc::vec;

    fn run(params: &[Var], body: Expr) -> Expr {
        let mut m = Module::new();
        let params = params.iter().map(|v| Param { var: v.clone(), annotation: None }).collect();
        m.add_global("main", Function::new(params, body)).unwrap();
        common_subexpr_elim(&m).globals["main"].body.clone()
    }

    fn add(a: &Var, b: &Var) -> Expr {
        Expr::call_op("add", vec![Expr::var(a), Expr::var(b)], Attrs::new())
    }

    #[test]
    fn merges_duplicate_calls() {
        let (x, y, a, b) = (Var::fresh("x"), Var::fresh("y"), Var::fresh("a"), Var::fresh("b"));
        let e = Expr::let_(a.clone(), add(&x, &y), Expr::let_(b.clone(), add(&x, &y), Expr::call_op("multiply", vec![Expr::var(&a), Expr::var(&b)], Attrs::new())));
        let t = Var::fresh("t");
        let expected = Expr::let_(
            a.clone(),
            add(&x, &y),
            Expr::let_(t.clone(), Expr::call_op("multiply", vec![Expr::var(&a), Expr::var(&a)], Attrs::new()), Expr::var(&t)),
        );
        assert!(alpha_equal(&run(&[x, y], e), &expected));
    }

    #[test]
    fn keeps_reads_apart() {
        let (r, a, b) = (Var::fresh("r"), Var::fresh("a"), Var::fresh("b"));
        let read = || Expr::new(ExprKind::RefRead(Expr::var(&r)));
        let e = Expr::let_(
            r.clone(),
            Expr::new(ExprKind::RefNew(Expr::constant(Tensor::scalar_i32(0)))),
            Expr::let_(a.clone(), read(), Expr::let_(b.clone(), read(), Expr::tuple(vec![Expr::var(&a), Expr::var(&b)]))),
        );
        let out = run(&[], e);
        let mut reads = 0;
        fn count(e: &Expr, n: &mut usize) {
            if let ExprKind::RefRead(_) = e.kind() {
                *n += 1;
            }
            let _ = e.try_map_children::<()>(&mut |c| {
                count(c, n);
                Ok(c.clone())
            });
        }
        count(&out, &mut reads);
        assert_eq!(reads, 2);
    }

    #[test]
    fn respects_branch_scopes() {
        // if (c) { add(x, y) } else { add(x, y) }: the arms do not share.
        let (c, x, y) = (Var::fresh("c"), Var::fresh("x"), Var::fresh("y"));
        let e = Expr::if_(Expr::var(&c), add(&x, &y), add(&x, &y));
        let out = run(&[c, x, y], e);
        let ExprKind::Let(l) = out.kind() else { panic!("{out:?}") };
        let ExprKind::If(_, t, f) = l.value.kind() else { panic!() };
        for arm in [t, f] {
            let ExprKind::Let(inner) = arm.kind() else { panic!("arm lost its binding") };
            assert!(inner.value.as_op_call().is_some());
        }
    }
}
