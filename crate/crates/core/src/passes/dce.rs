//! Dead code elimination.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::expr::{Clause, Expr, ExprKind, Function, Let};
use crate::module::Module;

use super::util::is_pure;

/// Removes let-bindings whose variable is unused and whose value has no
/// effect. Runs inside out, so chains of dead bindings go at once.
pub fn dead_code_elim(m: &Module) -> Module {
    m.map_globals(|_, f| {
        let mut d = Dce { primitive: BTreeSet::new() };
        Function { body: d.expr(&f.body).0, ..f.clone() }
    })
}

struct Dce {
    /// Variables bound to primitive functions; calling them is pure.
    primitive: BTreeSet<usize>,
}

type Free = BTreeSet<usize>;

impl Dce {
    fn expr(&mut self, e: &Expr) -> (Expr, Free) {
        match e.kind() {
            ExprKind::Var(v) => (e.clone(), [v.id()].into_iter().collect()),
            ExprKind::Let(l) => {
                if let ExprKind::Function(f) = l.value.kind() {
                    if f.is_primitive() {
                        self.primitive.insert(l.var.id());
                    }
                }
                let (body, mut free) = self.expr(&l.body);
                let prim = &self.primitive;
                if !free.contains(&l.var.id()) && is_pure(&l.value, &|v| prim.contains(&v.id())) {
                    return (body, free);
                }
                let (value, vfree) = self.expr(&l.value);
                free.extend(vfree);
                free.remove(&l.var.id());
                (e.rebuild(ExprKind::Let(Let { var: l.var.clone(), annotation: l.annotation.clone(), value, body })), free)
            }
            ExprKind::Function(f) => {
                let (body, mut free) = self.expr(&f.body);
                for p in &f.params {
                    free.remove(&p.var.id());
                }
                (e.rebuild(ExprKind::Function(Function { body, ..f.clone() })), free)
            }
            ExprKind::Match(s, clauses) => {
                let (s, mut free) = self.expr(s);
                let mut out = Vec::new();
                for cl in clauses {
                    let (body, mut cf) = self.expr(&cl.body);
                    let mut bound = Vec::new();
                    cl.pattern.bound_vars(&mut bound);
                    for v in bound {
                        cf.remove(&v.id());
                    }
                    free.extend(cf);
                    out.push(Clause { pattern: cl.pattern.clone(), body });
                }
                (e.rebuild(ExprKind::Match(s, out)), free)
            }
            _ => {
                let mut free = Free::new();
                let kind = e
                    .try_map_children::<()>(&mut |c| {
                        let (c, f) = self.expr(c);
                        free.extend(f);
                        Ok(c)
                    })
                    .unwrap_or_else(|()| unreachable!());
                (e.rebuild(kind), free)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::alpha_equal;
    use crate::attrs::Attrs;
    use crate::expr::{Param, Var};
    use alloc::vec;

    fn run(params: Vec<Var>, body: Expr) -> Expr {
        let mut m = Module::new();
        let params = params.into_iter().map(|v| Param { var: v, annotation: None }).collect();
        m.add_global("main", Function::new(params, body)).unwrap();
        dead_code_elim(&m).globals["main"].body.clone()
    }

    #[test]
    fn drops_unused_pure_binding() {
        let (x, y, a) = (Var::fresh("x"), Var::fresh("y"), Var::fresh("a"));
        let e = Expr::let_(a, Expr::call_op("add", vec![Expr::var(&x), Expr::var(&y)], Attrs::new()), Expr::var(&x));
        assert!(alpha_equal(&run(vec![x.clone(), y], e), &Expr::var(&x)));
    }

    #[test]
    fn keeps_allocation() {
        let (x, r) = (Var::fresh("x"), Var::fresh("r"));
        let e = Expr::let_(r, Expr::new(ExprKind::RefNew(Expr::var(&x))), Expr::var(&x));
        assert!(alpha_equal(&run(vec![x], e.clone()), &e));
    }

    #[test]
    fn removes_dead_chains() {
        let (x, a, b, c) = (Var::fresh("x"), Var::fresh("a"), Var::fresh("b"), Var::fresh("c"));
        let e = Expr::let_(
            a.clone(),
            Expr::call_op("relu", vec![Expr::var(&x)], Attrs::new()),
            Expr::let_(
                b.clone(),
                Expr::call_op("exp", vec![Expr::var(&a)], Attrs::new()),
                Expr::let_(c, Expr::call_op("negative", vec![Expr::var(&b)], Attrs::new()), Expr::var(&x)),
            ),
        );
        assert!(alpha_equal(&run(vec![x.clone()], e), &Expr::var(&x)));
    }
}
