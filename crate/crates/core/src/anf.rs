//! Conversion to A-normal form.

use alloc::vec::Vec;

use crate::expr::{build_lets, Call, Clause, Expr, ExprKind, Function, Var};
use crate::ty::Type;

type Bindings = Vec<(Var, Option<Type>, Expr)>;

/// Let-binds every call, tuple, projection, `if`, `match` and reference
/// operation to a fresh variable, keeping left-to-right evaluation order.
pub fn to_anf(e: &Expr) -> Expr {
    block(e)
}

/// Same, for a function's body.
pub fn function_to_anf(f: &Function) -> Function {
    Function { body: block(&f.body), ..f.clone() }
}

fn block(e: &Expr) -> Expr {
    let mut binds = Vec::new();
    let tail = atom(e, &mut binds);
    build_lets(binds, tail)
}

fn bind(value: Expr, binds: &mut Bindings) -> Expr {
    let v = Var::fresh("t");
    binds.push((v.clone(), None, value));
    Expr::var(&v)
}

fn atoms(es: &[Expr], binds: &mut Bindings) -> Vec<Expr> {
    es.iter().map(|e| atom(e, binds)).collect()
}

/// Normalizes `e` to an atom, emitting bindings for everything compound.
fn atom(e: &Expr, binds: &mut Bindings) -> Expr {
    match e.kind() {
        ExprKind::Var(_) | ExprKind::Global(_) | ExprKind::Constant(_) | ExprKind::Op(_) | ExprKind::Constructor(_) => e.clone(),
        ExprKind::Function(f) => e.rebuild(ExprKind::Function(function_to_anf(f))),
        ExprKind::Let(l) => {
            let value = match l.value.kind() {
                ExprKind::Function(f) => l.value.rebuild(ExprKind::Function(function_to_anf(f))),
                _ => value(&l.value, binds),
            };
            binds.push((l.var.clone(), l.annotation.clone(), value));
            atom(&l.body, binds)
        }
        _ => {
            let v = value(e, binds);
            bind(v, binds)
        }
    }
}

/// Normalizes `e` to something that may appear on the right of a let.
fn value(e: &Expr, binds: &mut Bindings) -> Expr {
    let kind = match e.kind() {
        ExprKind::Call(c) => {
            let callee = atom(&c.callee, binds);
            let args = atoms(&c.args, binds);
            ExprKind::Call(Call { callee, type_args: c.type_args.clone(), args, attrs: c.attrs.clone() })
        }
        ExprKind::Tuple(fields) => ExprKind::Tuple(atoms(fields, binds)),
        ExprKind::Proj(t, i) => ExprKind::Proj(atom(t, binds), *i),
        ExprKind::If(c, t, f) => ExprKind::If(atom(c, binds), block(t), block(f)),
        ExprKind::Match(s, clauses) => ExprKind::Match(
            atom(s, binds),
            clauses.iter().map(|cl| Clause { pattern: cl.pattern.clone(), body: block(&cl.body) }).collect(),
        ),
        ExprKind::RefNew(x) => ExprKind::RefNew(atom(x, binds)),
        ExprKind::RefRead(x) => ExprKind::RefRead(atom(x, binds)),
        ExprKind::RefWrite(r, v) => {
            let r = atom(r, binds);
            ExprKind::RefWrite(r, atom(v, binds))
        }
        _ => return atom(e, binds),
    };
    e.rebuild(kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{alpha_equal, is_anf};
    use crate::attrs::Attrs;
    use alloc::vec;

    #[test]
    fn nested_call() {
        let (a, b, c) = (Var::fresh("a"), Var::fresh("b"), Var::fresh("c"));
        let e = Expr::call_op(
            "add",
            vec![Expr::call_op("multiply", vec![Expr::var(&a), Expr::var(&b)], Attrs::new()), Expr::var(&c)],
            Attrs::new(),
        );
        let out = to_anf(&e);
        let (t0, t1) = (Var::fresh("t0"), Var::fresh("t1"));
        let expected = Expr::let_(
            t0.clone(),
            Expr::call_op("multiply", vec![Expr::var(&a), Expr::var(&b)], Attrs::new()),
            Expr::let_(t1.clone(), Expr::call_op("add", vec![Expr::var(&t0), Expr::var(&c)], Attrs::new()), Expr::var(&t1)),
        );
        assert!(alpha_equal(&out, &expected));
        assert!(is_anf(&out));
        let x = Expr::var(&a);
        assert!(alpha_equal(&to_anf(&x), &x));
    }
}
