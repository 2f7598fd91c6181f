//! Type inference: constraint generation over the AST, relation solving, and
//! final annotation of every node.
//!
//! Globals are inferred one strongly connected component at a time, callees
//! first. Named type and dimension variables in a global's parameter and
//! result annotations are generalized; every other unknown must be fixed by
//! the end of its component or inference reports it as underconstrained.

mod solver;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::attrs::Attrs;
use crate::dtype::BaseType;
use crate::expr::{Clause, Expr, ExprKind, ExprNode, Function, Loc, Pattern, Var};
use crate::module::Module;
use crate::op::OpRegistry;
use crate::ty::{Dim, FuncType, Type};
use crate::wellformed::{check_expr, check_well_formed, IrError};

pub use solver::{Conflict, Promotion, RelationNode, SolveError, Solver, SolverTrace, VarKey};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TypeError {
    #[error("TypeMismatch{loc}: expected {expected}, found {found}{}", detail_suffix(.detail))]
    TypeMismatch { loc: Loc, expected: Type, found: Type, detail: String },
    #[error("RelationFailed{loc}: {relation}({}) from {origin}: {reason}", TypeList(.types))]
    RelationFailed { loc: Loc, relation: String, origin: String, types: Vec<Type>, reason: String },
    #[error("Underconstrained{loc}: cannot determine {}", vars.join(", "))]
    Underconstrained { loc: Loc, vars: Vec<String> },
    #[error("UnificationError: {0}")]
    UnificationError(Conflict),
    #[error("RefPattern{loc}: cannot match on a value of type {ty}")]
    RefPattern { loc: Loc, ty: Type },
    #[error(transparent)]
    IllFormed(#[from] IrError),
}

fn detail_suffix(d: &str) -> String {
    if d.is_empty() {
        String::new()
    } else {
        format!(" ({d})")
    }
}

struct TypeList<'a>(&'a [Type]);

impl fmt::Display for TypeList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Result of [`infer_full`].
#[derive(Debug, Clone)]
pub struct Inferred {
    pub module: Module,
    /// Generalized signature of every global.
    pub signatures: BTreeMap<String, Arc<FuncType>>,
    pub trace: SolverTrace,
}

/// Annotates every node of every global with its type.
pub fn infer(m: &Module) -> Result<Module, TypeError> {
    infer_full(m).map(|i| i.module)
}

pub fn infer_full(m: &Module) -> Result<Inferred, TypeError> {
    check_well_formed(m)?;
    let registry = m.registry.clone();
    let mut cx = Cx {
        m,
        s: Solver::new(&registry),
        signatures: BTreeMap::new(),
        current: BTreeMap::new(),
        scrutinees: Vec::new(),
    };
    let mut out = m.clone();
    for scc in global_sccs(m) {
        let bodies = cx.component(&scc)?;
        for (name, f) in bodies {
            out.globals.insert(name, f);
        }
    }
    Ok(Inferred { module: out, signatures: cx.signatures, trace: cx.s.trace })
}

/// Infers a closed expression against the globals of `m`; returns it
/// annotated.
pub fn infer_expr(m: &Module, e: &Expr) -> Result<Expr, TypeError> {
    check_expr(m, e)?;
    let inferred = infer_full(m)?;
    let registry = m.registry.clone();
    let mut cx = Cx {
        m,
        s: Solver::new(&registry),
        signatures: inferred.signatures,
        current: BTreeMap::new(),
        scrutinees: Vec::new(),
    };
    let mut g = Gen::new(BTreeSet::new(), BTreeSet::new());
    let typed = g.expr(&mut cx, e)?;
    cx.solve()?;
    cx.check_scrutinees()?;
    cx.finalize(&typed)
}

/// Unifies two types in isolation and returns the merged type; `Any`
/// dimensions are kept.
pub fn unify(a: &Type, b: &Type) -> Result<Type, TypeError> {
    let registry = OpRegistry::empty();
    let mut s = Solver::new(&registry);
    s.reserve(a);
    s.reserve(b);
    s.unify(a, b).map_err(TypeError::UnificationError)?;
    Ok(solver::merge_any(&s.resolve(a), &s.resolve(b)))
}

/// Names of globals referenced anywhere inside `e`.
fn global_refs(e: &Expr, out: &mut BTreeSet<String>) {
    if let ExprKind::Global(g) = e.kind() {
        out.insert(g.clone());
    }
    let _ = e.try_map_children::<()>(&mut |c| {
        global_refs(c, out);
        Ok(c.clone())
    });
}

/// Strongly connected components of the global call graph, callees first.
pub fn global_sccs(m: &Module) -> Vec<Vec<String>> {
    let names: Vec<&String> = m.globals.keys().collect();
    let index_of: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let edges: Vec<Vec<usize>> = names
        .iter()
        .map(|n| {
            let mut refs = BTreeSet::new();
            global_refs(&m.globals[*n].body, &mut refs);
            refs.iter().filter_map(|r| index_of.get(r.as_str()).copied()).collect()
        })
        .collect();

    struct Tarjan<'a> {
        edges: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for &w in &self.edges[v] {
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    _ => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = self.stack.pop().expect("non-empty stack");
                    self.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                self.out.push(comp);
            }
        }
    }
    let n = names.len();
    let mut t = Tarjan {
        edges: &edges,
        index: alloc::vec![None; n],
        low: alloc::vec![0; n],
        on_stack: alloc::vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.out.into_iter().map(|c| c.into_iter().map(|i| names[i].clone()).collect()).collect()
}

/// Named type variables and named dimensions occurring in `t`.
fn named_vars(t: &Type, types: &mut Vec<String>, dims: &mut Vec<String>) {
    t.visit(
        &mut |t| {
            if let Type::Var(n) = t {
                if !types.contains(n) {
                    types.push(n.clone());
                }
            }
        },
        &mut |_| {},
    );
    let mut found = Vec::new();
    t.visit(&mut |_| {}, &mut |d| {
        if let Dim::Var(n) = d {
            found.push(n.clone());
        }
    });
    for n in found {
        if !dims.contains(&n) {
            dims.push(n);
        }
    }
}

/// Signature of a global as declared: named variables in its annotations,
/// declared type parameters first.
fn declared_signature(f: &Function) -> (Vec<String>, Vec<String>) {
    let mut types = f.type_params.clone();
    let mut dims = Vec::new();
    for p in &f.params {
        if let Some(a) = &p.annotation {
            named_vars(a, &mut types, &mut dims);
        }
    }
    if let Some(r) = &f.ret_type {
        named_vars(r, &mut types, &mut dims);
    }
    (types, dims)
}

/// Solver state shared across all globals of a module.
struct Cx<'m, 'r> {
    m: &'m Module,
    s: Solver<'r>,
    /// Finished, generalized signatures.
    signatures: BTreeMap<String, Arc<FuncType>>,
    /// Members of the component being inferred: monomorphic type, and the
    /// declared signature if fully annotated.
    current: BTreeMap<String, (Type, Option<Arc<FuncType>>)>,
    scrutinees: Vec<(Type, Loc)>,
}

impl Cx<'_, '_> {
    fn mismatch(&mut self, expected: &Type, found: &Type, loc: &Loc, detail: &str) -> Result<(), TypeError> {
        self.s.unify(expected, found).map_err(|c| TypeError::TypeMismatch {
            loc: loc.clone(),
            expected: self.s.resolve(expected),
            found: self.s.resolve(found),
            detail: if detail.is_empty() { conflict_detail(&c) } else { format!("{detail}; {}", conflict_detail(&c)) },
        })
    }

    /// Replaces every named variable of `sig` with a fresh unknown;
    /// `type_args` fill the declared type parameters in order. Relations
    /// carried by the signature are instantiated and queued.
    fn instantiate(&mut self, sig: &FuncType, type_args: &[Type], loc: &Loc) -> Type {
        let whole = Type::Func(Arc::new(FuncType {
            type_params: Vec::new(),
            args: sig.args.clone(),
            ret: sig.ret.clone(),
            relations: Vec::new(),
        }));
        let mut tnames = sig.type_params.clone();
        let mut dnames = Vec::new();
        named_vars(&whole, &mut tnames, &mut dnames);
        for rel in &sig.relations {
            for t in &rel.types {
                named_vars(t, &mut tnames, &mut dnames);
            }
        }
        let mut tmap = BTreeMap::new();
        for (i, n) in tnames.iter().enumerate() {
            let t = match type_args.get(i) {
                Some(a) if i < sig.type_params.len() => a.clone(),
                _ => self.s.fresh_type(),
            };
            tmap.insert(n.clone(), t);
        }
        let dmap: BTreeMap<String, Dim> = dnames.iter().map(|n| (n.clone(), self.s.fresh_dim())).collect();
        for rel in &sig.relations {
            let types: Vec<Type> = rel.types.iter().map(|t| t.subst(&tmap, &dmap)).collect();
            self.s.add_relation(&rel.relation, "signature", types, Attrs::new(), loc.clone());
        }
        whole.subst(&tmap, &dmap)
    }

    fn solve(&mut self) -> Result<(), TypeError> {
        self.s.solve().map_err(|e| match e {
            SolveError::RelationFailed { relation, reason } => {
                let node = &self.s.relations[relation];
                TypeError::RelationFailed {
                    loc: node.loc.clone(),
                    relation: node.relation.clone(),
                    origin: node.origin.clone(),
                    types: node.types.iter().map(|t| self.s.resolve(t)).collect(),
                    reason,
                }
            }
            SolveError::Underconstrained { relations, vars } => TypeError::Underconstrained {
                loc: relations.first().map(|&r| self.s.relations[r].loc.clone()).unwrap_or_default(),
                vars: vars.iter().map(|v| v.to_string()).collect(),
            },
        })
    }

    fn check_scrutinees(&mut self) -> Result<(), TypeError> {
        for (t, loc) in core::mem::take(&mut self.scrutinees) {
            let t = self.s.resolve(&t);
            if t.contains_ref() {
                return Err(TypeError::RefPattern { loc, ty: t });
            }
        }
        Ok(())
    }

    fn resolved(&self, t: &Type, loc: &Loc) -> Result<Type, TypeError> {
        let r = self.s.resolve(t);
        if r.is_resolved() {
            Ok(r)
        } else {
            Err(TypeError::Underconstrained { loc: loc.clone(), vars: self.s.vars_of(&r).iter().map(|v| v.to_string()).collect() })
        }
    }

    /// Replaces every node type with its solution.
    fn finalize(&self, e: &Expr) -> Result<Expr, TypeError> {
        let kind = e.try_map_children(&mut |c| self.finalize(c))?;
        let ty = match e.ty() {
            Some(t) => Some(self.resolved(t, &e.loc())?),
            None => None,
        };
        Ok(Expr::from_node(ExprNode { kind, span: e.span().cloned(), ty }))
    }

    fn component(&mut self, scc: &[String]) -> Result<Vec<(String, Function)>, TypeError> {
        let m = self.m;
        let mut gens = Vec::new();
        self.current.clear();
        for name in scc {
            let f = &m.globals[name];
            let (tnames, dnames) = declared_signature(f);
            let g = Gen::new(tnames.iter().cloned().collect(), dnames.iter().cloned().collect());
            let args: Vec<Type> =
                f.params.iter().map(|p| p.annotation.clone().unwrap_or_else(|| self.s.fresh_type())).collect();
            let ret = f.ret_type.clone().unwrap_or_else(|| self.s.fresh_type());
            let declared = f.is_fully_annotated().then(|| {
                Arc::new(FuncType { type_params: tnames.clone(), args: args.clone(), ret: ret.clone(), relations: Vec::new() })
            });
            self.current.insert(name.clone(), (Type::func(args, ret), declared));
            gens.push((name.clone(), g, tnames));
        }
        let mut bodies = Vec::new();
        for (name, g, _) in gens.iter_mut() {
            let f = &m.globals[name.as_str()];
            let mono = self.current[name.as_str()].0.clone();
            let Type::Func(ft) = &mono else { unreachable!() };
            let body = g.function_body(self, f, &ft.args, &ft.ret)?;
            bodies.push(body);
        }
        self.solve()?;
        self.check_scrutinees()?;
        let mut out = Vec::new();
        for ((name, _, tnames), body) in gens.into_iter().zip(bodies) {
            let f = &m.globals[name.as_str()];
            let loc = f.body.loc();
            let mono = self.resolved(&self.current[name.as_str()].0, &loc)?;
            let Type::Func(ft) = mono else { unreachable!() };
            let mut all_types = tnames;
            let mut dims = Vec::new();
            named_vars(&Type::Func(ft.clone()), &mut all_types, &mut dims);
            self.signatures.insert(
                name.clone(),
                Arc::new(FuncType { type_params: all_types, args: ft.args.clone(), ret: ft.ret.clone(), relations: Vec::new() }),
            );
            let body = self.finalize(&body)?;
            out.push((name, Function { body, ..f.clone() }));
        }
        self.current.clear();
        Ok(out)
    }

    fn global_type(&mut self, name: &str, type_args: &[Type], loc: &Loc) -> Type {
        if let Some(sig) = self.signatures.get(name).cloned() {
            return self.instantiate(&sig, type_args, loc);
        }
        let (mono, declared) = self.current.get(name).cloned().expect("global checked by well-formedness");
        match declared {
            Some(sig) => self.instantiate(&sig, type_args, loc),
            None => mono,
        }
    }

    fn op_type(&mut self, name: &str, attrs: &Attrs, loc: &Loc) -> Type {
        let decl = self.m.registry().lookup(name).expect("operator checked by well-formedness").clone();
        let args: Vec<Type> = (0..decl.arity).map(|_| self.s.fresh_type()).collect();
        let ret = self.s.fresh_type();
        let mut slots = args.clone();
        slots.push(ret.clone());
        self.s.add_relation(&decl.relation, name, slots, attrs.clone(), loc.clone());
        Type::func(args, ret)
    }

    /// Constructor type with the ADT's parameters instantiated.
    fn constructor_type(&mut self, name: &str, type_args: &[Type], loc: &Loc) -> Result<Type, TypeError> {
        let (adt, ctor) = self.m.constructor(name).expect("constructor checked by well-formedness");
        let (adt, ctor) = (adt.clone(), ctor.clone());
        if !type_args.is_empty() && type_args.len() != adt.type_params.len() {
            return Err(IrError::ArityMismatch {
                name: adt.name.clone(),
                expected: adt.type_params.len(),
                found: type_args.len(),
                loc: loc.clone(),
            }
            .into());
        }
        let mut tmap = BTreeMap::new();
        let mut args = Vec::new();
        for (i, p) in adt.type_params.iter().enumerate() {
            let t = type_args.get(i).cloned().unwrap_or_else(|| self.s.fresh_type());
            tmap.insert(p.clone(), t.clone());
            args.push(t);
        }
        let dims = BTreeMap::new();
        let fields = ctor.fields.iter().map(|f| f.subst(&tmap, &dims)).collect();
        Ok(Type::func(fields, Type::Call { head: adt.name.clone(), args }))
    }
}

fn conflict_detail(c: &Conflict) -> String {
    format!("{c}")
}

/// Per-global generation state: the variable environment and the mapping
/// of named variables in local annotations.
struct Gen {
    env: Vec<(Var, Type)>,
    rigid_types: BTreeSet<String>,
    rigid_dims: BTreeSet<String>,
    local_types: BTreeMap<String, Type>,
    local_dims: BTreeMap<String, Dim>,
}

fn typed(e: &Expr, kind: ExprKind, ty: Type) -> Expr {
    Expr::from_node(ExprNode { kind, span: e.span().cloned(), ty: Some(ty) })
}

impl Gen {
    fn new(rigid_types: BTreeSet<String>, rigid_dims: BTreeSet<String>) -> Gen {
        Gen { env: Vec::new(), rigid_types, rigid_dims, local_types: BTreeMap::new(), local_dims: BTreeMap::new() }
    }

    /// A local annotation with its non-rigid named variables replaced by
    /// unknowns shared across the global.
    fn annotation(&mut self, cx: &mut Cx, t: &Type) -> Type {
        let mut tn = Vec::new();
        let mut dn = Vec::new();
        named_vars(t, &mut tn, &mut dn);
        for n in tn {
            if !self.rigid_types.contains(&n) && !self.local_types.contains_key(&n) {
                let v = cx.s.fresh_type();
                self.local_types.insert(n, v);
            }
        }
        for n in dn {
            if !self.rigid_dims.contains(&n) && !self.local_dims.contains_key(&n) {
                let v = cx.s.fresh_dim();
                self.local_dims.insert(n, v);
            }
        }
        t.subst(&self.local_types, &self.local_dims)
    }

    fn lookup(&self, v: &Var) -> Type {
        self.env.iter().rev().find(|(w, _)| w == v).map(|(_, t)| t.clone()).expect("variable checked by well-formedness")
    }

    fn function_body(&mut self, cx: &mut Cx, f: &Function, args: &[Type], ret: &Type) -> Result<Expr, TypeError> {
        let n = self.env.len();
        for (p, t) in f.params.iter().zip(args) {
            self.env.push((p.var.clone(), t.clone()));
        }
        let body = self.expr(cx, &f.body)?;
        cx.mismatch(ret, body.ty().expect("typed"), &f.body.loc(), "function result")?;
        self.env.truncate(n);
        Ok(body)
    }

    fn pattern(&mut self, cx: &mut Cx, p: &Pattern, t: &Type, loc: &Loc) -> Result<(), TypeError> {
        match p {
            Pattern::Wildcard => Ok(()),
            Pattern::Var(v) => {
                self.env.push((v.clone(), t.clone()));
                Ok(())
            }
            Pattern::Constructor { name, fields } => {
                let ct = cx.constructor_type(name, &[], loc)?;
                let Type::Func(ft) = ct else { unreachable!() };
                cx.mismatch(&ft.ret, t, loc, name)?;
                for (fp, fty) in fields.iter().zip(&ft.args) {
                    self.pattern(cx, fp, fty, loc)?;
                }
                Ok(())
            }
            Pattern::Tuple(fields) => {
                let tys: Vec<Type> = fields.iter().map(|_| cx.s.fresh_type()).collect();
                cx.mismatch(&Type::Tuple(tys.clone()), t, loc, "tuple pattern")?;
                for (fp, fty) in fields.iter().zip(&tys) {
                    self.pattern(cx, fp, fty, loc)?;
                }
                Ok(())
            }
        }
    }

    fn exprs(&mut self, cx: &mut Cx, es: &[Expr]) -> Result<Vec<Expr>, TypeError> {
        es.iter().map(|e| self.expr(cx, e)).collect()
    }

    fn expr(&mut self, cx: &mut Cx, e: &Expr) -> Result<Expr, TypeError> {
        let loc = e.loc();
        let (kind, ty) = match e.kind() {
            ExprKind::Var(v) => (e.kind().clone(), self.lookup(v)),
            ExprKind::Global(g) => (e.kind().clone(), cx.global_type(g, &[], &loc)),
            ExprKind::Constant(t) => (e.kind().clone(), t.ty()),
            ExprKind::Op(name) => (e.kind().clone(), cx.op_type(name, &Attrs::new(), &loc)),
            ExprKind::Constructor(name) => (e.kind().clone(), cx.constructor_type(name, &[], &loc)?),
            ExprKind::Call(c) => {
                let type_args: Vec<Type> = c.type_args.iter().map(|t| self.annotation(cx, t)).collect();
                let callee = match c.callee.kind() {
                    ExprKind::Op(name) => {
                        let t = cx.op_type(name, &c.attrs, &loc);
                        typed(&c.callee, c.callee.kind().clone(), t)
                    }
                    ExprKind::Constructor(name) => {
                        let t = cx.constructor_type(name, &type_args, &loc)?;
                        typed(&c.callee, c.callee.kind().clone(), t)
                    }
                    ExprKind::Global(g) => {
                        let t = cx.global_type(g, &type_args, &c.callee.loc());
                        typed(&c.callee, c.callee.kind().clone(), t)
                    }
                    _ => self.expr(cx, &c.callee)?,
                };
                let args = self.exprs(cx, &c.args)?;
                let arg_tys: Vec<Type> = args.iter().map(|a| a.ty().expect("typed").clone()).collect();
                let ret = cx.s.fresh_type();
                let ct = cx.s.resolve(callee.ty().expect("typed"));
                let ct = match &ct {
                    Type::Func(ft) if !ft.relations.is_empty() || !ft.type_params.is_empty() => cx.instantiate(ft, &[], &loc),
                    _ => ct,
                };
                match &ct {
                    Type::Func(ft) if ft.args.len() == arg_tys.len() => {
                        for (i, (p, a)) in ft.args.iter().zip(&arg_tys).enumerate() {
                            cx.mismatch(p, a, &args[i].loc().0.clone().map_or(loc.clone(), |s| Loc(Some(s))), &format!("argument {i}"))?;
                        }
                        cx.mismatch(&ret, &ft.ret, &loc, "call result")?;
                    }
                    _ => {
                        let expected = Type::func(arg_tys, ret.clone());
                        cx.mismatch(&expected, &ct, &loc, "callee")?;
                    }
                }
                let call = crate::expr::Call { callee, type_args: c.type_args.clone(), args, attrs: c.attrs.clone() };
                (ExprKind::Call(call), ret)
            }
            ExprKind::Let(l) => {
                let n = self.env.len();
                let value = if matches!(l.value.kind(), ExprKind::Function(_)) {
                    let t = match &l.annotation {
                        Some(a) => self.annotation(cx, a),
                        None => cx.s.fresh_type(),
                    };
                    self.env.push((l.var.clone(), t.clone()));
                    let v = self.expr(cx, &l.value)?;
                    cx.mismatch(&t, v.ty().expect("typed"), &l.value.loc(), "let binding")?;
                    v
                } else {
                    let v = self.expr(cx, &l.value)?;
                    let vt = v.ty().expect("typed").clone();
                    let t = match &l.annotation {
                        Some(a) => {
                            let a = self.annotation(cx, a);
                            cx.mismatch(&a, &vt, &l.value.loc(), "let binding")?;
                            a
                        }
                        None => vt,
                    };
                    self.env.push((l.var.clone(), t));
                    v
                };
                let body = self.expr(cx, &l.body)?;
                self.env.truncate(n);
                let ty = body.ty().expect("typed").clone();
                let kind = ExprKind::Let(crate::expr::Let { var: l.var.clone(), annotation: l.annotation.clone(), value, body });
                (kind, ty)
            }
            ExprKind::Function(f) => {
                let args: Vec<Type> = f
                    .params
                    .iter()
                    .map(|p| match &p.annotation {
                        Some(a) => self.annotation(cx, a),
                        None => cx.s.fresh_type(),
                    })
                    .collect();
                let ret = match &f.ret_type {
                    Some(r) => self.annotation(cx, r),
                    None => cx.s.fresh_type(),
                };
                let body = self.function_body(cx, f, &args, &ret)?;
                (ExprKind::Function(Function { body, ..f.clone() }), Type::func(args, ret))
            }
            ExprKind::Tuple(fields) => {
                let fields = self.exprs(cx, fields)?;
                let ty = Type::Tuple(fields.iter().map(|f| f.ty().expect("typed").clone()).collect());
                (ExprKind::Tuple(fields), ty)
            }
            ExprKind::Proj(t, i) => {
                let t = self.expr(cx, t)?;
                let tt = cx.s.resolve(t.ty().expect("typed"));
                let ty = match &tt {
                    Type::Tuple(fields) => match fields.get(*i) {
                        Some(f) => f.clone(),
                        None => {
                            return Err(TypeError::TypeMismatch {
                                loc,
                                expected: Type::Tuple(Vec::new()),
                                found: tt.clone(),
                                detail: format!("tuple has no field {i}"),
                            })
                        }
                    },
                    _ => {
                        let r = cx.s.fresh_type();
                        let attrs = Attrs::new().with("index", crate::attrs::AttrValue::Int(*i as i64));
                        cx.s.add_relation("TupleGetItem", "projection", alloc::vec![tt, r.clone()], attrs, loc.clone());
                        r
                    }
                };
                (ExprKind::Proj(t, *i), ty)
            }
            ExprKind::If(c, t, f) => {
                let c = self.expr(cx, c)?;
                cx.mismatch(&Type::scalar(BaseType::BOOL), c.ty().expect("typed"), &c.loc(), "condition")?;
                let t = self.expr(cx, t)?;
                let f = self.expr(cx, f)?;
                let ty = t.ty().expect("typed").clone();
                cx.mismatch(&ty, f.ty().expect("typed"), &f.loc(), "if branches")?;
                (ExprKind::If(c, t, f), ty)
            }
            ExprKind::Match(s, clauses) => {
                let s = self.expr(cx, s)?;
                let st = s.ty().expect("typed").clone();
                cx.scrutinees.push((st.clone(), s.loc()));
                let ty = cx.s.fresh_type();
                let mut out = Vec::new();
                for cl in clauses {
                    let n = self.env.len();
                    self.pattern(cx, &cl.pattern, &st, &loc)?;
                    let body = self.expr(cx, &cl.body)?;
                    cx.mismatch(&ty, body.ty().expect("typed"), &body.loc(), "match clause")?;
                    self.env.truncate(n);
                    out.push(Clause { pattern: cl.pattern.clone(), body });
                }
                (ExprKind::Match(s, out), ty)
            }
            ExprKind::RefNew(x) => {
                let x = self.expr(cx, x)?;
                let ty = Type::Ref(alloc::boxed::Box::new(x.ty().expect("typed").clone()));
                (ExprKind::RefNew(x), ty)
            }
            ExprKind::RefRead(x) => {
                let x = self.expr(cx, x)?;
                let inner = cx.s.fresh_type();
                cx.mismatch(&Type::Ref(alloc::boxed::Box::new(inner.clone())), x.ty().expect("typed"), &x.loc(), "reference read")?;
                (ExprKind::RefRead(x), inner)
            }
            ExprKind::RefWrite(r, v) => {
                let r = self.expr(cx, r)?;
                let v = self.expr(cx, v)?;
                let want = Type::Ref(alloc::boxed::Box::new(v.ty().expect("typed").clone()));
                cx.mismatch(&want, r.ty().expect("typed"), &r.loc(), "reference write")?;
                (ExprKind::RefWrite(r, v), Type::unit())
            }
        };
        Ok(typed(e, kind, ty))
    }
}
