//! Structural utilities over expressions: free variables, alpha-equivalence,
//! alpha-invariant hashing and the A-normal form predicate.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::hash::{Hash, Hasher};

use crate::attrs::{AttrValue, Attrs};
use crate::expr::{Expr, ExprKind, Function, Pattern, Var};
use crate::ty::Type;

/// Variables occurring free in `e`, in order of first use.
pub fn free_vars(e: &Expr) -> Vec<Var> {
    let mut fv = FreeVars { bound: Vec::new(), seen: BTreeSet::new(), out: Vec::new() };
    fv.expr(e);
    fv.out
}

struct FreeVars {
    bound: Vec<Var>,
    seen: BTreeSet<Var>,
    out: Vec<Var>,
}

impl FreeVars {
    fn expr(&mut self, e: &Expr) {
        match e.kind() {
            ExprKind::Var(v) => {
                if !self.bound.contains(v) && self.seen.insert(v.clone()) {
                    self.out.push(v.clone());
                }
            }
            ExprKind::Global(_) | ExprKind::Constant(_) | ExprKind::Op(_) | ExprKind::Constructor(_) => {}
            ExprKind::Call(c) => {
                self.expr(&c.callee);
                c.args.iter().for_each(|a| self.expr(a));
            }
            ExprKind::Let(l) => {
                let rec = matches!(l.value.kind(), ExprKind::Function(_));
                if rec {
                    self.bound.push(l.var.clone());
                    self.expr(&l.value);
                } else {
                    self.expr(&l.value);
                    self.bound.push(l.var.clone());
                }
                self.expr(&l.body);
                self.bound.pop();
            }
            ExprKind::Function(f) => {
                let n = f.params.len();
                self.bound.extend(f.params.iter().map(|p| p.var.clone()));
                self.expr(&f.body);
                self.bound.truncate(self.bound.len() - n);
            }
            ExprKind::Tuple(fields) => fields.iter().for_each(|f| self.expr(f)),
            ExprKind::Proj(t, _) | ExprKind::RefNew(t) | ExprKind::RefRead(t) => self.expr(t),
            ExprKind::If(c, t, f) => {
                self.expr(c);
                self.expr(t);
                self.expr(f);
            }
            ExprKind::Match(s, clauses) => {
                self.expr(s);
                for cl in clauses {
                    let mut vars = Vec::new();
                    cl.pattern.bound_vars(&mut vars);
                    let n = vars.len();
                    self.bound.extend(vars);
                    self.expr(&cl.body);
                    self.bound.truncate(self.bound.len() - n);
                }
            }
            ExprKind::RefWrite(r, v) => {
                self.expr(r);
                self.expr(v);
            }
        }
    }
}

/// Equality up to consistent renaming of bound variables. Types carried by
/// nodes and source spans are ignored; annotations and attributes are not.
pub fn alpha_equal(a: &Expr, b: &Expr) -> bool {
    Alpha { pairs: Vec::new() }.expr(a, b)
}

/// Alpha-equivalence of two functions (parameters are binders).
pub fn alpha_equal_fn(a: &Function, b: &Function) -> bool {
    Alpha { pairs: Vec::new() }.function(a, b)
}

struct Alpha {
    pairs: Vec<(Var, Var)>,
}

impl Alpha {
    fn var(&self, a: &Var, b: &Var) -> bool {
        let ia = self.pairs.iter().rposition(|(x, _)| x == a);
        let ib = self.pairs.iter().rposition(|(_, y)| y == b);
        match (ia, ib) {
            (None, None) => a == b,
            (x, y) => x == y,
        }
    }

    fn function(&mut self, f: &Function, g: &Function) -> bool {
        if f.params.len() != g.params.len()
            || f.type_params != g.type_params
            || f.ret_type != g.ret_type
            || f.attrs != g.attrs
            || f.params.iter().zip(&g.params).any(|(p, q)| p.annotation != q.annotation)
        {
            return false;
        }
        let n = self.pairs.len();
        self.pairs.extend(f.params.iter().zip(&g.params).map(|(p, q)| (p.var.clone(), q.var.clone())));
        let ok = self.expr(&f.body, &g.body);
        self.pairs.truncate(n);
        ok
    }

    fn pattern(&mut self, p: &Pattern, q: &Pattern) -> bool {
        match (p, q) {
            (Pattern::Wildcard, Pattern::Wildcard) => true,
            (Pattern::Var(x), Pattern::Var(y)) => {
                self.pairs.push((x.clone(), y.clone()));
                true
            }
            (Pattern::Constructor { name: n1, fields: f1 }, Pattern::Constructor { name: n2, fields: f2 }) => {
                n1 == n2 && f1.len() == f2.len() && f1.iter().zip(f2).all(|(x, y)| self.pattern(x, y))
            }
            (Pattern::Tuple(f1), Pattern::Tuple(f2)) => f1.len() == f2.len() && f1.iter().zip(f2).all(|(x, y)| self.pattern(x, y)),
            _ => false,
        }
    }

    fn exprs(&mut self, a: &[Expr], b: &[Expr]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| self.expr(x, y))
    }

    fn expr(&mut self, a: &Expr, b: &Expr) -> bool {
        if a.ptr_eq(b) && self.pairs.is_empty() {
            return true;
        }
        match (a.kind(), b.kind()) {
            (ExprKind::Var(x), ExprKind::Var(y)) => self.var(x, y),
            (ExprKind::Global(x), ExprKind::Global(y)) => x == y,
            (ExprKind::Constant(x), ExprKind::Constant(y)) => x == y,
            (ExprKind::Op(x), ExprKind::Op(y)) => x == y,
            (ExprKind::Constructor(x), ExprKind::Constructor(y)) => x == y,
            (ExprKind::Call(c), ExprKind::Call(d)) => {
                c.type_args == d.type_args && c.attrs == d.attrs && self.expr(&c.callee, &d.callee) && self.exprs(&c.args, &d.args)
            }
            (ExprKind::Let(l), ExprKind::Let(m)) => {
                if l.annotation != m.annotation {
                    return false;
                }
                let rec_l = matches!(l.value.kind(), ExprKind::Function(_));
                let rec_m = matches!(m.value.kind(), ExprKind::Function(_));
                if rec_l != rec_m {
                    return false;
                }
                let n = self.pairs.len();
                let ok = if rec_l {
                    self.pairs.push((l.var.clone(), m.var.clone()));
                    self.expr(&l.value, &m.value) && self.expr(&l.body, &m.body)
                } else {
                    self.expr(&l.value, &m.value) && {
                        self.pairs.push((l.var.clone(), m.var.clone()));
                        self.expr(&l.body, &m.body)
                    }
                };
                self.pairs.truncate(n);
                ok
            }
            (ExprKind::Function(f), ExprKind::Function(g)) => self.function(f, g),
            (ExprKind::Tuple(x), ExprKind::Tuple(y)) => self.exprs(x, y),
            (ExprKind::Proj(x, i), ExprKind::Proj(y, j)) => i == j && self.expr(x, y),
            (ExprKind::If(c1, t1, f1), ExprKind::If(c2, t2, f2)) => self.expr(c1, c2) && self.expr(t1, t2) && self.expr(f1, f2),
            (ExprKind::Match(s1, c1), ExprKind::Match(s2, c2)) => {
                if c1.len() != c2.len() || !self.expr(s1, s2) {
                    return false;
                }
                c1.iter().zip(c2).all(|(x, y)| {
                    let n = self.pairs.len();
                    let ok = self.pattern(&x.pattern, &y.pattern) && self.expr(&x.body, &y.body);
                    self.pairs.truncate(n);
                    ok
                })
            }
            (ExprKind::RefNew(x), ExprKind::RefNew(y)) | (ExprKind::RefRead(x), ExprKind::RefRead(y)) => self.expr(x, y),
            (ExprKind::RefWrite(r1, v1), ExprKind::RefWrite(r2, v2)) => self.expr(r1, r2) && self.expr(v1, v2),
            _ => false,
        }
    }
}

/// 64-bit FNV-1a.
pub struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Hash that agrees with [`alpha_equal`]: alpha-equal expressions hash
/// equally. Bound variables hash by binder depth, free ones by identity.
pub fn structural_hash(e: &Expr) -> u64 {
    let mut h = StructHash { bound: Vec::new(), h: Fnv::default() };
    h.expr(e);
    h.h.finish()
}

struct StructHash {
    bound: Vec<Var>,
    h: Fnv,
}

impl StructHash {
    fn tag(&mut self, t: u8) {
        self.h.write_u8(t);
    }

    fn ty(&mut self, t: &Option<Type>) {
        t.hash(&mut self.h);
    }

    fn attrs(&mut self, a: &Attrs) {
        self.h.write_usize(a.0.len());
        for (k, v) in a.iter() {
            k.hash(&mut self.h);
            self.attr(v);
        }
    }

    fn attr(&mut self, v: &AttrValue) {
        match v {
            AttrValue::Int(i) => {
                self.tag(0);
                self.h.write_i64(*i);
            }
            AttrValue::Float(f) => {
                self.tag(1);
                self.h.write_u64(f.to_bits());
            }
            AttrValue::Str(s) => {
                self.tag(2);
                s.hash(&mut self.h);
            }
            AttrValue::Bool(b) => {
                self.tag(3);
                self.h.write_u8(*b as u8);
            }
            AttrValue::List(items) => {
                self.tag(4);
                self.h.write_usize(items.len());
                items.iter().for_each(|i| self.attr(i));
            }
        }
    }

    fn pattern(&mut self, p: &Pattern) {
        match p {
            Pattern::Wildcard => self.tag(0),
            Pattern::Var(v) => {
                self.tag(1);
                self.bound.push(v.clone());
            }
            Pattern::Constructor { name, fields } => {
                self.tag(2);
                name.hash(&mut self.h);
                self.h.write_usize(fields.len());
                fields.iter().for_each(|f| self.pattern(f));
            }
            Pattern::Tuple(fields) => {
                self.tag(3);
                self.h.write_usize(fields.len());
                fields.iter().for_each(|f| self.pattern(f));
            }
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e.kind() {
            ExprKind::Var(v) => match self.bound.iter().rposition(|b| b == v) {
                Some(i) => {
                    self.tag(1);
                    self.h.write_usize(self.bound.len() - i);
                }
                None => {
                    self.tag(2);
                    self.h.write_usize(v.id());
                }
            },
            ExprKind::Global(g) => {
                self.tag(3);
                g.hash(&mut self.h);
            }
            ExprKind::Constant(t) => {
                self.tag(4);
                t.shape.hash(&mut self.h);
                t.dtype.hash(&mut self.h);
                for i in 0..t.data.len() {
                    self.h.write_u64(t.data.get_f64(i).to_bits());
                }
            }
            ExprKind::Op(o) => {
                self.tag(5);
                o.hash(&mut self.h);
            }
            ExprKind::Constructor(c) => {
                self.tag(6);
                c.hash(&mut self.h);
            }
            ExprKind::Call(c) => {
                self.tag(7);
                c.type_args.hash(&mut self.h);
                self.attrs(&c.attrs);
                self.expr(&c.callee);
                self.h.write_usize(c.args.len());
                c.args.iter().for_each(|a| self.expr(a));
            }
            ExprKind::Let(l) => {
                self.tag(8);
                self.ty(&l.annotation);
                if matches!(l.value.kind(), ExprKind::Function(_)) {
                    self.bound.push(l.var.clone());
                    self.expr(&l.value);
                } else {
                    self.expr(&l.value);
                    self.bound.push(l.var.clone());
                }
                self.expr(&l.body);
                self.bound.pop();
            }
            ExprKind::Function(f) => {
                self.tag(9);
                f.type_params.hash(&mut self.h);
                self.ty(&f.ret_type);
                self.attrs(&f.attrs);
                self.h.write_usize(f.params.len());
                for p in &f.params {
                    self.ty(&p.annotation);
                    self.bound.push(p.var.clone());
                }
                self.expr(&f.body);
                self.bound.truncate(self.bound.len() - f.params.len());
            }
            ExprKind::Tuple(fields) => {
                self.tag(10);
                self.h.write_usize(fields.len());
                fields.iter().for_each(|f| self.expr(f));
            }
            ExprKind::Proj(t, i) => {
                self.tag(11);
                self.h.write_usize(*i);
                self.expr(t);
            }
            ExprKind::If(c, t, f) => {
                self.tag(12);
                self.expr(c);
                self.expr(t);
                self.expr(f);
            }
            ExprKind::Match(s, clauses) => {
                self.tag(13);
                self.expr(s);
                self.h.write_usize(clauses.len());
                for cl in clauses {
                    let n = self.bound.len();
                    self.pattern(&cl.pattern);
                    self.expr(&cl.body);
                    self.bound.truncate(n);
                }
            }
            ExprKind::RefNew(x) => {
                self.tag(14);
                self.expr(x);
            }
            ExprKind::RefRead(x) => {
                self.tag(15);
                self.expr(x);
            }
            ExprKind::RefWrite(r, v) => {
                self.tag(16);
                self.expr(r);
                self.expr(v);
            }
        }
    }
}

/// True when `e` is an A-normal-form block: a chain of lets whose values
/// have only atomic operands, ending in an atom. Branches of `if` and
/// `match` and function bodies must themselves be blocks.
pub fn is_anf(e: &Expr) -> bool {
    match e.kind() {
        ExprKind::Let(l) => anf_value(&l.value) && is_anf(&l.body),
        _ => anf_atom(e),
    }
}

fn anf_atom(e: &Expr) -> bool {
    match e.kind() {
        ExprKind::Var(_) | ExprKind::Global(_) | ExprKind::Constant(_) | ExprKind::Op(_) | ExprKind::Constructor(_) => true,
        ExprKind::Function(f) => is_anf(&f.body),
        _ => false,
    }
}

fn anf_value(e: &Expr) -> bool {
    match e.kind() {
        ExprKind::Call(c) => anf_atom(&c.callee) && c.args.iter().all(anf_atom),
        ExprKind::Tuple(fields) => fields.iter().all(anf_atom),
        ExprKind::Proj(x, _) | ExprKind::RefNew(x) | ExprKind::RefRead(x) => anf_atom(x),
        ExprKind::RefWrite(r, v) => anf_atom(r) && anf_atom(v),
        ExprKind::If(c, t, f) => anf_atom(c) && is_anf(t) && is_anf(f),
        ExprKind::Match(s, clauses) => anf_atom(s) && clauses.iter().all(|c| is_anf(&c.body)),
        ExprKind::Let(_) => false,
        _ => anf_atom(e),
    }
}
