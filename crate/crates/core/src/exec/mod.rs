//! Reference tree-walking interpreter.
//!
//! Call-by-value, left-to-right. This is the semantic oracle every pass is
//! checked against, so it favors determinism over speed.

mod value;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

pub use value::{fmt_element, AdtValue, Closure, Env, Value};

use crate::attrs::Attrs;
use crate::expr::{Expr, ExprKind, Loc, Pattern};
use crate::module::Module;

pub const DEFAULT_FUEL: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Trap {
    #[error("MatchFailure: no clause matched{0}")]
    MatchFailure(Loc),
    #[error("TrapDivideByZero: integer division by zero")]
    DivideByZero,
    #[error("OutOfFuel: step budget exhausted")]
    OutOfFuel,
    #[error("Uncalibrated: simulated_quantize has no scale")]
    Uncalibrated,
    #[error("runtime error: {0}")]
    Runtime(String),
}

pub(crate) fn runtime(msg: impl Into<String>) -> Trap {
    Trap::Runtime(msg.into())
}

/// Called after every operator evaluation with the operator name, its
/// arguments, call attributes and result.
pub type OpObserver<'a> = dyn FnMut(&str, &[Value], &Attrs, &Value) -> Result<(), Trap> + 'a;

pub struct Interpreter<'a> {
    module: &'a Module,
    store: Vec<Value>,
    fuel: u64,
    observer: Option<Box<OpObserver<'a>>>,
    call_trace: Option<Vec<(String, Vec<Value>)>>,
}

impl<'a> Interpreter<'a> {
    pub fn new(module: &'a Module) -> Interpreter<'a> {
        Interpreter { module, store: Vec::new(), fuel: DEFAULT_FUEL, observer: None, call_trace: None }
    }

    pub fn with_fuel(mut self, fuel: u64) -> Self {
        self.fuel = fuel;
        self
    }

    pub fn with_observer(mut self, observer: impl FnMut(&str, &[Value], &Attrs, &Value) -> Result<(), Trap> + 'a) -> Self {
        self.observer = Some(Box::new(observer));
        self
    }

    /// Records every call to a global function with its arguments.
    pub fn with_call_trace(mut self) -> Self {
        self.call_trace = Some(Vec::new());
        self
    }

    pub fn call_trace(&self) -> &[(String, Vec<Value>)] {
        self.call_trace.as_deref().unwrap_or(&[])
    }

    pub fn store(&self) -> &[Value] {
        &self.store
    }

    /// Calls global `entry` with `args`.
    pub fn run(&mut self, entry: &str, args: Vec<Value>) -> Result<Value, Trap> {
        self.apply(Value::Global(String::from(entry)), args, &Attrs::new())
    }

    pub fn eval_closed(&mut self, e: &Expr) -> Result<Value, Trap> {
        self.eval(e, &Env::new())
    }

    fn tick(&mut self) -> Result<(), Trap> {
        if self.fuel == 0 {
            return Err(Trap::OutOfFuel);
        }
        self.fuel -= 1;
        Ok(())
    }

    pub fn eval(&mut self, e: &Expr, env: &Env) -> Result<Value, Trap> {
        self.tick()?;
        match e.kind() {
            ExprKind::Var(v) => env.lookup(v).cloned().ok_or_else(|| runtime(alloc::format!("unbound variable {v}"))),
            ExprKind::Global(g) => Ok(Value::Global(g.clone())),
            ExprKind::Constant(t) => Ok(Value::Tensor(t.clone())),
            ExprKind::Op(name) => Ok(Value::Op(name.clone())),
            ExprKind::Constructor(name) => Ok(Value::Constructor(name.clone())),
            ExprKind::Function(_) => Ok(self.make_closure(e, env, None)),
            ExprKind::Call(call) => {
                let callee = self.eval(&call.callee, env)?;
                let mut args = Vec::with_capacity(call.args.len());
                for a in &call.args {
                    args.push(self.eval(a, env)?);
                }
                self.apply(callee, args, &call.attrs)
            }
            ExprKind::Let(l) => {
                let value = match l.value.kind() {
                    ExprKind::Function(_) => self.make_closure(&l.value, env, Some(l.var.clone())),
                    _ => self.eval(&l.value, env)?,
                };
                let env = env.bind(l.var.clone(), value);
                self.eval(&l.body, &env)
            }
            ExprKind::Tuple(fields) => {
                let mut out = Vec::with_capacity(fields.len());
                for f in fields {
                    out.push(self.eval(f, env)?);
                }
                Ok(Value::Tuple(out))
            }
            ExprKind::Proj(t, i) => match self.eval(t, env)? {
                Value::Tuple(mut fields) if *i < fields.len() => Ok(fields.swap_remove(*i)),
                other => Err(runtime(alloc::format!("cannot project .{i} from {other}"))),
            },
            ExprKind::If(c, t, f) => {
                let cond = self.eval(c, env)?;
                let b = cond
                    .as_tensor()
                    .and_then(|t| t.as_bool_scalar())
                    .ok_or_else(|| runtime("if condition must be a scalar bool"))?;
                self.eval(if b { t } else { f }, env)
            }
            ExprKind::Match(scrutinee, clauses) => {
                let v = self.eval(scrutinee, env)?;
                for clause in clauses {
                    let mut bound = env.clone();
                    if bind_pattern(&clause.pattern, &v, &mut bound) {
                        return self.eval(&clause.body, &bound);
                    }
                }
                Err(Trap::MatchFailure(e.loc()))
            }
            ExprKind::RefNew(init) => {
                let v = self.eval(init, env)?;
                self.store.push(v);
                Ok(Value::Ref(self.store.len() - 1))
            }
            ExprKind::RefRead(r) => match self.eval(r, env)? {
                Value::Ref(id) => Ok(self.store[id].clone()),
                other => Err(runtime(alloc::format!("cannot read non-ref {other}"))),
            },
            ExprKind::RefWrite(r, v) => {
                let target = self.eval(r, env)?;
                let v = self.eval(v, env)?;
                match target {
                    Value::Ref(id) => {
                        self.store[id] = v;
                        Ok(Value::unit())
                    }
                    other => Err(runtime(alloc::format!("cannot write non-ref {other}"))),
                }
            }
        }
    }

    fn make_closure(&self, func_expr: &Expr, env: &Env, rec: Option<crate::expr::Var>) -> Value {
        // Capture exactly the free variables.
        let mut captured = Env::new();
        for v in crate::analysis::free_vars(func_expr) {
            if Some(&v) == rec.as_ref() {
                continue;
            }
            if let Some(val) = env.lookup(&v) {
                captured = captured.bind(v, val.clone());
            }
        }
        Value::Closure(Arc::new(Closure { func: func_expr.clone(), env: captured, rec }))
    }

    /// Applies a function value to arguments.
    pub fn apply(&mut self, callee: Value, args: Vec<Value>, attrs: &Attrs) -> Result<Value, Trap> {
        match callee {
            Value::Op(name) => {
                let decl = self
                    .module
                    .registry()
                    .lookup(&name)
                    .ok_or_else(|| runtime(alloc::format!("unknown operator {name}")))?
                    .clone();
                let out = (decl.eval)(&args, attrs)?;
                if let Some(obs) = self.observer.as_mut() {
                    obs(&name, &args, attrs, &out)?;
                }
                Ok(out)
            }
            Value::Constructor(name) => Ok(Value::adt(&name, args)),
            Value::Global(name) => {
                let f = self
                    .module
                    .globals
                    .get(&name)
                    .ok_or_else(|| runtime(alloc::format!("unknown global @{name}")))?;
                if let Some(trace) = self.call_trace.as_mut() {
                    trace.push((name.clone(), args.clone()));
                }
                if f.params.len() != args.len() {
                    return Err(runtime(alloc::format!("@{name} expects {} arguments, got {}", f.params.len(), args.len())));
                }
                let mut env = Env::new();
                for (p, a) in f.params.iter().zip(args) {
                    env = env.bind(p.var.clone(), a);
                }
                let body = f.body.clone();
                self.eval(&body, &env)
            }
            Value::Closure(c) => {
                let ExprKind::Function(f) = c.func.kind() else { unreachable!() };
                if f.params.len() != args.len() {
                    return Err(runtime(alloc::format!("closure expects {} arguments, got {}", f.params.len(), args.len())));
                }
                let mut env = c.env.clone();
                if let Some(rec) = &c.rec {
                    env = env.bind(rec.clone(), Value::Closure(c.clone()));
                }
                for (p, a) in f.params.iter().zip(args) {
                    env = env.bind(p.var.clone(), a);
                }
                self.eval(&f.body, &env)
            }
            other => Err(runtime(alloc::format!("cannot call {other}"))),
        }
    }
}

fn bind_pattern(p: &Pattern, v: &Value, env: &mut Env) -> bool {
    match (p, v) {
        (Pattern::Wildcard, _) => true,
        (Pattern::Var(var), _) => {
            *env = env.bind(var.clone(), v.clone());
            true
        }
        (Pattern::Constructor { name, fields }, Value::Adt(adt)) => {
            adt.constructor == *name
                && fields.len() == adt.fields.len()
                && fields.iter().zip(&adt.fields).all(|(fp, fv)| bind_pattern(fp, fv, env))
        }
        (Pattern::Tuple(ps), Value::Tuple(vs)) => {
            ps.len() == vs.len() && ps.iter().zip(vs).all(|(fp, fv)| bind_pattern(fp, fv, env))
        }
        _ => false,
    }
}

/// Runs `entry` with the default step budget.
pub fn interp(module: &Module, entry: &str, args: Vec<Value>) -> Result<Value, Trap> {
    Interpreter::new(module).run(entry, args)
}

/// Evaluates one operator on concrete arguments.
pub fn eval_kernel(module: &Module, op: &str, args: &[Value], attrs: &Attrs) -> Result<Value, Trap> {
    let decl = module.registry().lookup(op).ok_or_else(|| runtime(alloc::format!("unknown operator {op}")))?;
    (decl.eval)(args, attrs)
}
