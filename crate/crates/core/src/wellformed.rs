//! Well-formedness: every name resolves and every literal is consistent.

use alloc::string::String;
use alloc::vec::Vec;

use crate::expr::{Expr, ExprKind, Function, Loc, Pattern, Var};
use crate::module::Module;
use crate::ty::{Dim, Type};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IrError {
    #[error("UnboundVariable: %{name}{loc}")]
    UnboundVariable { name: String, loc: Loc },
    #[error("UnknownOperator: {name}{loc}")]
    UnknownOperator { name: String, loc: Loc },
    #[error("UnknownConstructor: {name}{loc}")]
    UnknownConstructor { name: String, loc: Loc },
    #[error("UnknownGlobal: @{name}{loc}")]
    UnknownGlobal { name: String, loc: Loc },
    #[error("UnknownType: {name}{loc}")]
    UnknownType { name: String, loc: Loc },
    #[error("MalformedLiteral: {detail}{loc}")]
    MalformedLiteral { detail: String, loc: Loc },
    #[error("BadAttribute: {op}.{name}{loc}")]
    BadAttribute { op: String, name: String, loc: Loc },
    #[error("ArityMismatch: {name} expects {expected} arguments, got {found}{loc}")]
    ArityMismatch { name: String, expected: usize, found: usize, loc: Loc },
}

pub fn check_well_formed(m: &Module) -> Result<(), IrError> {
    for adt in m.adts.values() {
        for c in &adt.constructors {
            for t in &c.fields {
                check_type(m, t, &Loc::default())?;
            }
        }
    }
    for f in m.globals.values() {
        let mut cx = Checker { m, bound: Vec::new() };
        cx.function(f, &Loc::default())?;
    }
    Ok(())
}

/// Checks a single closed expression against `m`.
pub fn check_expr(m: &Module, e: &Expr) -> Result<(), IrError> {
    Checker { m, bound: Vec::new() }.expr(e)
}

fn check_type(m: &Module, t: &Type, loc: &Loc) -> Result<(), IrError> {
    let mut err = None;
    t.visit(
        &mut |t| {
            if err.is_some() {
                return;
            }
            match t {
                Type::Call { head, args } => match m.adts.get(head) {
                    Some(adt) if adt.type_params.len() == args.len() => {}
                    _ => err = Some(IrError::UnknownType { name: head.clone(), loc: loc.clone() }),
                },
                Type::Func(ft) => {
                    for r in &ft.relations {
                        if m.registry().relation(&r.relation).is_none() {
                            err = Some(IrError::UnknownType { name: r.relation.clone(), loc: loc.clone() });
                        }
                    }
                }
                _ => {}
            }
        },
        &mut |_: &Dim| {},
    );
    err.map_or(Ok(()), Err)
}

struct Checker<'a> {
    m: &'a Module,
    bound: Vec<Var>,
}

impl Checker<'_> {
    fn ty(&self, t: &Option<Type>, loc: &Loc) -> Result<(), IrError> {
        match t {
            Some(t) => check_type(self.m, t, loc),
            None => Ok(()),
        }
    }

    fn function(&mut self, f: &Function, loc: &Loc) -> Result<(), IrError> {
        for p in &f.params {
            self.ty(&p.annotation, loc)?;
        }
        self.ty(&f.ret_type, loc)?;
        let nb = self.bound.len();
        self.bound.extend(f.params.iter().map(|p| p.var.clone()));
        let r = self.expr(&f.body);
        self.bound.truncate(nb);
        r
    }

    fn pattern(&mut self, p: &Pattern, loc: &Loc) -> Result<(), IrError> {
        match p {
            Pattern::Wildcard => Ok(()),
            Pattern::Var(v) => {
                self.bound.push(v.clone());
                Ok(())
            }
            Pattern::Constructor { name, fields } => {
                let Some((_, c)) = self.m.constructor(name) else {
                    return Err(IrError::UnknownConstructor { name: name.clone(), loc: loc.clone() });
                };
                if c.fields.len() != fields.len() {
                    return Err(IrError::ArityMismatch { name: name.clone(), expected: c.fields.len(), found: fields.len(), loc: loc.clone() });
                }
                fields.iter().try_for_each(|f| self.pattern(f, loc))
            }
            Pattern::Tuple(fields) => fields.iter().try_for_each(|f| self.pattern(f, loc)),
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<(), IrError> {
        let loc = e.loc();
        match e.kind() {
            ExprKind::Var(v) => {
                if self.bound.contains(v) {
                    Ok(())
                } else {
                    Err(IrError::UnboundVariable { name: String::from(v.name()), loc })
                }
            }
            ExprKind::Global(g) => {
                if self.m.globals.contains_key(g) {
                    Ok(())
                } else {
                    Err(IrError::UnknownGlobal { name: g.clone(), loc })
                }
            }
            ExprKind::Constant(t) => {
                if t.is_consistent() {
                    Ok(())
                } else {
                    Err(IrError::MalformedLiteral {
                        detail: alloc::format!("shape {:?} needs {} elements, found {}", t.shape, t.num_elements(), t.data.len()),
                        loc,
                    })
                }
            }
            ExprKind::Op(name) => {
                if self.m.registry().lookup(name).is_some() {
                    Ok(())
                } else {
                    Err(IrError::UnknownOperator { name: name.clone(), loc })
                }
            }
            ExprKind::Constructor(name) => {
                if self.m.constructor(name).is_some() {
                    Ok(())
                } else {
                    Err(IrError::UnknownConstructor { name: name.clone(), loc })
                }
            }
            ExprKind::Call(c) => {
                self.expr(&c.callee)?;
                for t in &c.type_args {
                    self.ty(&Some(t.clone()), &loc)?;
                }
                match c.callee.kind() {
                    ExprKind::Op(name) => {
                        let decl = self.m.registry().lookup(name).expect("checked above");
                        if decl.arity != c.args.len() {
                            return Err(IrError::ArityMismatch { name: name.clone(), expected: decl.arity, found: c.args.len(), loc });
                        }
                        for (k, v) in c.attrs.iter() {
                            match decl.attrs_schema.get(k) {
                                Some(kind) if kind.accepts(v) => {}
                                _ => return Err(IrError::BadAttribute { op: name.clone(), name: k.clone(), loc }),
                            }
                        }
                    }
                    ExprKind::Constructor(name) => {
                        let (_, ctor) = self.m.constructor(name).expect("checked above");
                        if ctor.fields.len() != c.args.len() {
                            return Err(IrError::ArityMismatch { name: name.clone(), expected: ctor.fields.len(), found: c.args.len(), loc });
                        }
                    }
                    _ => {}
                }
                c.args.iter().try_for_each(|a| self.expr(a))
            }
            ExprKind::Let(l) => {
                self.ty(&l.annotation, &loc)?;
                if matches!(l.value.kind(), ExprKind::Function(_)) {
                    self.bound.push(l.var.clone());
                    self.expr(&l.value)?;
                } else {
                    self.expr(&l.value)?;
                    self.bound.push(l.var.clone());
                }
                let r = self.expr(&l.body);
                self.bound.pop();
                r
            }
            ExprKind::Function(f) => self.function(f, &loc),
            ExprKind::Tuple(fields) => fields.iter().try_for_each(|f| self.expr(f)),
            ExprKind::Proj(t, _) | ExprKind::RefNew(t) | ExprKind::RefRead(t) => self.expr(t),
            ExprKind::If(c, t, f) => {
                self.expr(c)?;
                self.expr(t)?;
                self.expr(f)
            }
            ExprKind::Match(s, clauses) => {
                self.expr(s)?;
                for cl in clauses {
                    let n = self.bound.len();
                    self.pattern(&cl.pattern, &loc)?;
                    self.expr(&cl.body)?;
                    self.bound.truncate(n);
                }
                Ok(())
            }
            ExprKind::RefWrite(r, v) => {
                self.expr(r)?;
                self.expr(v)
            }
        }
    }
}
