//! Online partial evaluation over partially static values.
//!
//! The evaluator interprets each global with its parameters unknown. Known
//! values are computed at compile time; everything else is emitted as
//! residual A-normal-form bindings. References are tracked in a simulated
//! store, so reads of cells with known contents disappear.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::exec::{eval_kernel, Value};
use crate::expr::{build_lets, flatten_lets, Call, Clause, Expr, ExprKind, Function, Param, Pattern, Var};
use crate::module::Module;
use crate::tensor::Tensor;
use crate::ty::{Dim, Type};

use super::dce::dead_code_elim;
use super::util::use_counts;
use super::PassError;

pub const DEFAULT_PE_FUEL: u64 = 10_000;

#[derive(Clone)]
enum PV {
    /// Unknown value, named by an atom of the residual program.
    Dyn(Expr),
    Tensor(Arc<Tensor>),
    Tuple(Vec<PV>),
    Closure(Arc<Clo>),
    Adt(String, Vec<PV>),
    /// Store cell and the residual variable holding the reference.
    Ref(usize, Expr),
    Op(String),
    Global(String),
    Ctor(String),
}

struct Clo {
    func: Function,
    env: PEnv,
    rec: Option<Var>,
}

#[derive(Clone, Default)]
struct PEnv(Option<Arc<(usize, PV, PEnv)>>);

impl PEnv {
    fn bind(&self, v: &Var, pv: PV) -> PEnv {
        PEnv(Some(Arc::new((v.id(), pv, self.clone()))))
    }

    fn lookup(&self, v: &Var) -> Option<&PV> {
        let mut cur = self;
        while let Some(node) = &cur.0 {
            if node.0 == v.id() {
                return Some(&node.1);
            }
            cur = &node.2;
        }
        None
    }
}

type Block = Vec<(Var, Option<Type>, Expr)>;

struct Pe<'m> {
    m: &'m Module,
    budget: u64,
    fuel: u64,
    /// Contents of every simulated cell; `None` once unknown.
    store: Vec<Option<PV>>,
    /// Set while evaluating under a condition that is not known; recursive
    /// calls are not unfolded there.
    dynamic: bool,
    blocks: Vec<Block>,
}

/// Partially evaluates every global. `fuel` bounds the number of function
/// unfoldings per global.
pub fn partial_eval(m: &Module, fuel: u64) -> Result<Module, PassError> {
    let mut out = m.clone();
    for (name, f) in &m.globals {
        let mut pe = Pe { m, budget: fuel, fuel, store: Vec::new(), dynamic: false, blocks: alloc::vec![Vec::new()] };
        let mut env = PEnv::default();
        for p in &f.params {
            env = env.bind(&p.var, PV::Dyn(Expr::var(&p.var)));
        }
        let body = pe.block(&f.body, &env)?;
        out.globals.insert(name.clone(), Function { body, ..f.clone() });
    }
    let mut out = dead_code_elim(&out);
    loop {
        let (next, changed) = drop_dead_refs(&out);
        out = dead_code_elim(&next);
        if !changed {
            return Ok(out);
        }
    }
}

/// True if `t` mentions a named type or dimension variable.
fn has_named(t: &Type) -> bool {
    let mut named = false;
    t.visit(
        &mut |t| {
            if let Type::Var(_) = t {
                named = true;
            }
        },
        &mut |_| {},
    );
    let mut dims = false;
    t.visit(&mut |_| {}, &mut |d| {
        if let Dim::Var(_) = d {
            dims = true;
        }
    });
    named || dims
}

fn concrete(t: &Option<Type>) -> Option<Type> {
    t.clone().filter(|t| !has_named(t))
}

fn static_value(pv: &PV) -> Option<Value> {
    match pv {
        PV::Tensor(t) => Some(Value::Tensor(t.clone())),
        PV::Tuple(fields) => fields.iter().map(static_value).collect::<Option<Vec<_>>>().map(Value::Tuple),
        _ => None,
    }
}

fn from_value(v: Value) -> Option<PV> {
    match v {
        Value::Tensor(t) => Some(PV::Tensor(t)),
        Value::Tuple(fields) => fields.into_iter().map(from_value).collect::<Option<Vec<_>>>().map(PV::Tuple),
        _ => None,
    }
}

/// Matches a pattern against a partially known value: `Some(true)` on a
/// definite match, `Some(false)` on a definite mismatch.
fn static_match(p: &Pattern, pv: &PV, binds: &mut Vec<(Var, PV)>) -> Option<bool> {
    match p {
        Pattern::Wildcard => Some(true),
        Pattern::Var(v) => {
            binds.push((v.clone(), pv.clone()));
            Some(true)
        }
        Pattern::Constructor { name, fields } => match pv {
            PV::Adt(c, values) if c != name => Some(false),
            PV::Adt(_, values) if values.len() == fields.len() => all_match(fields, values, binds),
            _ => None,
        },
        Pattern::Tuple(fields) => match pv {
            PV::Tuple(values) if values.len() == fields.len() => all_match(fields, values, binds),
            _ => None,
        },
    }
}

fn all_match(ps: &[Pattern], values: &[PV], binds: &mut Vec<(Var, PV)>) -> Option<bool> {
    let mut unknown = false;
    for (p, v) in ps.iter().zip(values) {
        match static_match(p, v, binds) {
            Some(false) => return Some(false),
            None => unknown = true,
            Some(true) => {}
        }
    }
    if unknown {
        None
    } else {
        Some(true)
    }
}

/// Copy of `p` with fresh variables, and the renaming.
fn freshen(p: &Pattern, env: &mut Vec<(Var, Var)>) -> Pattern {
    match p {
        Pattern::Wildcard => Pattern::Wildcard,
        Pattern::Var(v) => {
            let n = Var::fresh(v.name());
            env.push((v.clone(), n.clone()));
            Pattern::Var(n)
        }
        Pattern::Constructor { name, fields } => {
            Pattern::Constructor { name: name.clone(), fields: fields.iter().map(|f| freshen(f, env)).collect() }
        }
        Pattern::Tuple(fields) => Pattern::Tuple(fields.iter().map(|f| freshen(f, env)).collect()),
    }
}

impl Pe<'_> {
    fn emit(&mut self, value: Expr) -> Expr {
        let v = Var::fresh("x");
        self.blocks.last_mut().expect("open block").push((v.clone(), None, value));
        Expr::var(&v)
    }

    fn tick(&mut self) -> Result<(), PassError> {
        if self.fuel == 0 {
            return Err(PassError::FuelExhausted(self.budget));
        }
        self.fuel -= 1;
        Ok(())
    }

    fn invalidate(&mut self) {
        self.store.iter_mut().for_each(|c| *c = None);
    }

    /// Evaluates `e` into a fresh residual block.
    fn block(&mut self, e: &Expr, env: &PEnv) -> Result<Expr, PassError> {
        self.blocks.push(Vec::new());
        let v = self.expr(e, env);
        let tail = v.and_then(|v| self.atom(&v));
        let bindings = self.blocks.pop().expect("open block");
        Ok(build_lets(bindings, tail?))
    }

    /// Residual atom naming `pv`, emitting whatever is needed to build it.
    fn atom(&mut self, pv: &PV) -> Result<Expr, PassError> {
        Ok(match pv {
            PV::Dyn(a) | PV::Ref(_, a) => a.clone(),
            PV::Tensor(t) => Expr::new(ExprKind::Constant(t.clone())),
            PV::Tuple(fields) => {
                let atoms = fields.iter().map(|f| self.atom(f)).collect::<Result<Vec<_>, _>>()?;
                self.emit(Expr::tuple(atoms))
            }
            PV::Adt(c, fields) => {
                let atoms = fields.iter().map(|f| self.atom(f)).collect::<Result<Vec<_>, _>>()?;
                self.emit(Expr::call(Expr::new(ExprKind::Constructor(c.clone())), atoms))
            }
            PV::Op(name) => Expr::op(name),
            PV::Global(g) => Expr::global(g),
            PV::Ctor(c) => Expr::new(ExprKind::Constructor(c.clone())),
            PV::Closure(clo) => self.reify(clo)?,
        })
    }

    /// Emits a residual function for a closure, its body specialized with
    /// unknown parameters.
    fn reify(&mut self, clo: &Clo) -> Result<Expr, PassError> {
        let mut env = clo.env.clone();
        let rec_var = clo.rec.as_ref().map(|r| Var::fresh(r.name()));
        if let (Some(r), Some(rv)) = (&clo.rec, &rec_var) {
            env = env.bind(r, PV::Dyn(Expr::var(rv)));
        }
        let mut params = Vec::new();
        for p in &clo.func.params {
            let np = Var::fresh(p.var.name());
            env = env.bind(&p.var, PV::Dyn(Expr::var(&np)));
            params.push(Param { var: np, annotation: concrete(&p.annotation) });
        }
        let saved_store = self.store.clone();
        let saved_dynamic = self.dynamic;
        self.invalidate();
        self.dynamic = true;
        let body = self.block(&clo.func.body, &env);
        self.store = saved_store;
        self.dynamic = saved_dynamic;
        let func = Function {
            type_params: Vec::new(),
            params,
            ret_type: concrete(&clo.func.ret_type),
            body: body?,
            attrs: clo.func.attrs.clone(),
        };
        let var = rec_var.unwrap_or_else(|| Var::fresh("f"));
        self.blocks.last_mut().expect("open block").push((var.clone(), None, Expr::function(func)));
        Ok(Expr::var(&var))
    }

    fn unfold(&self, args: &[PV], recursive: bool) -> bool {
        if recursive && self.dynamic {
            return false;
        }
        args.is_empty() || args.iter().any(|a| !matches!(a, PV::Dyn(_)))
    }

    fn residual_call(&mut self, callee: &PV, args: &[PV], call: &Call) -> Result<Expr, PassError> {
        let callee = self.atom(callee)?;
        let atoms = args.iter().map(|a| self.atom(a)).collect::<Result<Vec<_>, _>>()?;
        let type_args = call.type_args.iter().filter(|t| !has_named(t)).cloned().collect::<Vec<_>>();
        let type_args = if type_args.len() == call.type_args.len() { type_args } else { Vec::new() };
        let r = self.emit(Expr::new(ExprKind::Call(Call { callee, type_args, args: atoms, attrs: call.attrs.clone() })));
        Ok(r)
    }

    fn apply(&mut self, callee: PV, args: Vec<PV>, call: &Call) -> Result<PV, PassError> {
        match &callee {
            PV::Op(name) => {
                if let Some(values) = args.iter().map(static_value).collect::<Option<Vec<_>>>() {
                    if let Some(pv) = eval_kernel(self.m, name, &values, &call.attrs).ok().and_then(from_value) {
                        return Ok(pv);
                    }
                }
                Ok(PV::Dyn(self.residual_call(&callee, &args, call)?))
            }
            PV::Ctor(name) => Ok(PV::Adt(name.clone(), args)),
            PV::Closure(clo) if self.unfold(&args, clo.rec.is_some()) => {
                self.tick()?;
                let mut env = clo.env.clone();
                if let Some(r) = &clo.rec {
                    env = env.bind(r, callee.clone());
                }
                for (p, a) in clo.func.params.iter().zip(args) {
                    env = env.bind(&p.var, a);
                }
                self.expr(&clo.func.body, &env)
            }
            PV::Global(g) if self.unfold(&args, true) => {
                self.tick()?;
                let f = &self.m.globals[g.as_str()];
                let mut env = PEnv::default();
                for (p, a) in f.params.iter().zip(args) {
                    env = env.bind(&p.var, a);
                }
                self.expr(&f.body, &env)
            }
            _ => {
                let r = self.residual_call(&callee, &args, call)?;
                self.invalidate();
                Ok(PV::Dyn(r))
            }
        }
    }

    fn expr(&mut self, e: &Expr, env: &PEnv) -> Result<PV, PassError> {
        Ok(match e.kind() {
            ExprKind::Var(v) => env.lookup(v).cloned().unwrap_or_else(|| PV::Dyn(e.clone())),
            ExprKind::Global(g) => PV::Global(g.clone()),
            ExprKind::Constant(t) => PV::Tensor(t.clone()),
            ExprKind::Op(name) => PV::Op(name.clone()),
            ExprKind::Constructor(c) => PV::Ctor(c.clone()),
            ExprKind::Function(f) => PV::Closure(Arc::new(Clo { func: f.clone(), env: env.clone(), rec: None })),
            ExprKind::Call(c) => {
                let callee = self.expr(&c.callee, env)?;
                let args = c.args.iter().map(|a| self.expr(a, env)).collect::<Result<Vec<_>, _>>()?;
                self.apply(callee, args, c)?
            }
            ExprKind::Let(l) => {
                let value = match l.value.kind() {
                    ExprKind::Function(f) => {
                        PV::Closure(Arc::new(Clo { func: f.clone(), env: env.clone(), rec: Some(l.var.clone()) }))
                    }
                    _ => self.expr(&l.value, env)?,
                };
                let env = env.bind(&l.var, value);
                self.expr(&l.body, &env)?
            }
            ExprKind::Tuple(fields) => PV::Tuple(fields.iter().map(|f| self.expr(f, env)).collect::<Result<_, _>>()?),
            ExprKind::Proj(t, i) => match self.expr(t, env)? {
                PV::Tuple(mut fields) if *i < fields.len() => fields.swap_remove(*i),
                other => {
                    let a = self.atom(&other)?;
                    PV::Dyn(self.emit(Expr::proj(a, *i)))
                }
            },
            ExprKind::If(c, t, f) => {
                let cond = self.expr(c, env)?;
                if let PV::Tensor(k) = &cond {
                    if let Some(b) = k.as_bool_scalar() {
                        return self.expr(if b { t } else { f }, env);
                    }
                }
                let a = self.atom(&cond)?;
                let saved_store = self.store.clone();
                let saved_dynamic = self.dynamic;
                self.dynamic = true;
                let then = self.block(t, env);
                self.store = saved_store;
                let else_ = self.block(f, env);
                self.invalidate();
                self.dynamic = saved_dynamic;
                PV::Dyn(self.emit(Expr::if_(a, then?, else_?)))
            }
            ExprKind::Match(s, clauses) => {
                let scrutinee = self.expr(s, env)?;
                for cl in clauses {
                    let mut binds = Vec::new();
                    match static_match(&cl.pattern, &scrutinee, &mut binds) {
                        Some(true) => {
                            let env = binds.into_iter().fold(env.clone(), |env, (v, pv)| env.bind(&v, pv));
                            return self.expr(&cl.body, &env);
                        }
                        Some(false) => continue,
                        None => break,
                    }
                }
                let a = self.atom(&scrutinee)?;
                let saved_store = self.store.clone();
                let saved_dynamic = self.dynamic;
                self.dynamic = true;
                let mut out = Vec::new();
                for cl in clauses {
                    let mut renaming = Vec::new();
                    let pattern = freshen(&cl.pattern, &mut renaming);
                    let env = renaming.iter().fold(env.clone(), |env, (old, new)| env.bind(old, PV::Dyn(Expr::var(new))));
                    self.store = saved_store.clone();
                    let body = self.block(&cl.body, &env);
                    out.push(Clause { pattern, body: body? });
                }
                self.invalidate();
                self.dynamic = saved_dynamic;
                PV::Dyn(self.emit(e.rebuild(ExprKind::Match(a, out))))
            }
            ExprKind::RefNew(x) => {
                let pv = self.expr(x, env)?;
                let a = self.atom(&pv)?;
                let r = self.emit(Expr::new(ExprKind::RefNew(a)));
                self.store.push(Some(pv));
                PV::Ref(self.store.len() - 1, r)
            }
            ExprKind::RefRead(x) => {
                let pv = self.expr(x, env)?;
                match &pv {
                    PV::Ref(cell, _) if self.store[*cell].is_some() => self.store[*cell].clone().expect("known cell"),
                    _ => {
                        let a = self.atom(&pv)?;
                        PV::Dyn(self.emit(Expr::new(ExprKind::RefRead(a))))
                    }
                }
            }
            ExprKind::RefWrite(r, v) => {
                let target = self.expr(r, env)?;
                let value = self.expr(v, env)?;
                let ra = self.atom(&target)?;
                let va = self.atom(&value)?;
                self.emit(Expr::new(ExprKind::RefWrite(ra, va)));
                match target {
                    PV::Ref(cell, _) => self.store[cell] = Some(value),
                    _ => self.invalidate(),
                }
                PV::Tuple(Vec::new())
            }
        })
    }
}

/// Removes reference cells that are only ever written, with their writes.
fn drop_dead_refs(m: &Module) -> (Module, bool) {
    let mut changed = false;
    let out = m.map_globals(|_, f| {
        let mut uses = BTreeMap::new();
        use_counts(&f.body, &mut uses);
        let mut writes: BTreeMap<usize, usize> = BTreeMap::new();
        let mut allocs = Vec::new();
        collect_refs(&f.body, &uses, &mut writes, &mut allocs);
        let dead: Vec<usize> =
            allocs.into_iter().filter(|r| uses.get(r).copied().unwrap_or(0) == writes.get(r).copied().unwrap_or(0)).collect();
        if dead.is_empty() {
            return f.clone();
        }
        changed = true;
        Function { body: remove_refs(&f.body, &dead, &uses), ..f.clone() }
    });
    (out, changed)
}

fn write_target(value: &Expr) -> Option<usize> {
    match value.kind() {
        ExprKind::RefWrite(r, _) => r.as_var().map(Var::id),
        _ => None,
    }
}

fn collect_refs(e: &Expr, uses: &BTreeMap<usize, usize>, writes: &mut BTreeMap<usize, usize>, allocs: &mut Vec<usize>) {
    if let ExprKind::Let(l) = e.kind() {
        match l.value.kind() {
            ExprKind::RefNew(_) => allocs.push(l.var.id()),
            _ => {
                if let Some(r) = write_target(&l.value) {
                    if !uses.contains_key(&l.var.id()) {
                        *writes.entry(r).or_default() += 1;
                    }
                }
            }
        }
    }
    let _ = e.try_map_children::<()>(&mut |c| {
        collect_refs(c, uses, writes, allocs);
        Ok(c.clone())
    });
}

fn remove_refs(e: &Expr, dead: &[usize], uses: &BTreeMap<usize, usize>) -> Expr {
    let (bindings, tail) = flatten_lets(e);
    if bindings.is_empty() {
        return e.map_children(&mut |c| remove_refs(c, dead, uses));
    }
    let kept = bindings
        .into_iter()
        .filter(|(v, _, value)| {
            let alloc = matches!(value.kind(), ExprKind::RefNew(_)) && dead.contains(&v.id());
            let write = write_target(value).is_some_and(|r| dead.contains(&r)) && !uses.contains_key(&v.id());
            !(alloc || write)
        })
        .map(|(v, a, value)| (v, a, remove_refs(&value, dead, uses)))
        .collect();
    build_lets(kept, remove_refs(&tail, dead, uses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::is_anf;
    use crate::attrs::Attrs;
    use crate::dtype::BaseType;
    use alloc::vec;

    fn i32c(v: i32) -> Expr {
        Expr::constant(Tensor::scalar_i32(v))
    }

    #[test]
    fn folds_static_prefix() {
        let (x, y) = (Var::fresh("x"), Var::fresh("y"));
        let body = Expr::let_(
            x.clone(),
            Expr::call_op("add", vec![i32c(1), i32c(2)], Attrs::new()),
            Expr::call_op("multiply", vec![Expr::var(&x), Expr::var(&y)], Attrs::new()),
        );
        let mut m = Module::new();
        let p = Param { var: y.clone(), annotation: Some(Type::scalar(BaseType::I32)) };
        m.add_global("main", Function::new(vec![p], body)).unwrap();
        let out = partial_eval(&m, DEFAULT_PE_FUEL).unwrap();
        let t = Var::fresh("t");
        let expected =
            Expr::let_(t.clone(), Expr::call_op("multiply", vec![i32c(3), Expr::var(&y)], Attrs::new()), Expr::var(&t));
        assert!(crate::analysis::alpha_equal(&out.globals["main"].body, &expected));
    }

    #[test]
    fn store_resolves_reads() {
        let (r, u) = (Var::fresh("r"), Var::fresh("u"));
        let body = Expr::let_(
            r.clone(),
            Expr::new(ExprKind::RefNew(i32c(0))),
            Expr::let_(
                u,
                Expr::new(ExprKind::RefWrite(Expr::var(&r), i32c(1))),
                Expr::new(ExprKind::RefRead(Expr::var(&r))),
            ),
        );
        let mut m = Module::new();
        m.add_global("main", Function::new(vec![], body)).unwrap();
        let out = partial_eval(&m, DEFAULT_PE_FUEL).unwrap();
        let result = &out.globals["main"].body;
        assert_eq!(**result.as_constant().expect("constant result"), Tensor::scalar_i32(1));
    }

    #[test]
    fn fuel_bounds_static_recursion() {
        // def @spin(%n) { @spin(add(%n, 1)) } def @main() { @spin(0) }
        let n = Var::fresh("n");
        let spin = Function::new(
            vec![Param { var: n.clone(), annotation: None }],
            Expr::call(Expr::global("spin"), vec![Expr::call_op("add", vec![Expr::var(&n), i32c(1)], Attrs::new())]),
        );
        let mut m = Module::new();
        m.add_global("spin", spin).unwrap();
        m.add_global("main", Function::new(vec![], Expr::call(Expr::global("spin"), vec![i32c(0)]))).unwrap();
        assert_eq!(partial_eval(&m, 50).unwrap_err(), PassError::FuelExhausted(50));
    }

    #[test]
    fn dynamic_branches_stay_residual() {
        // def @f(%c) { if (%c) { 1 } else { 2 } }
        let c = Var::fresh("c");
        let body = Expr::if_(Expr::var(&c), i32c(1), i32c(2));
        let mut m = Module::new();
        m.add_global("f", Function::new(vec![Param { var: c, annotation: Some(Type::scalar(BaseType::BOOL)) }], body)).unwrap();
        let out = partial_eval(&m, DEFAULT_PE_FUEL).unwrap();
        assert!(is_anf(&out.globals["f"].body));
        assert!(crate::infer::infer(&out).is_ok());
    }
}
