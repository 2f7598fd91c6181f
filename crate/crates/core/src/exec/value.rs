use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::expr::{Expr, Var};
use crate::tensor::{Buffer, Tensor};
use crate::ty::{Dim, Type};

/// Runtime value.
#[derive(Debug, Clone)]
pub enum Value {
    Tensor(Arc<Tensor>),
    Tuple(Vec<Value>),
    Closure(Arc<Closure>),
    Adt(Arc<AdtValue>),
    Ref(usize),
    /// An operator used as a first-class function.
    Op(String),
    Global(String),
    Constructor(String),
}

#[derive(Debug)]
pub struct Closure {
    /// A `Function` expression.
    pub func: Expr,
    pub env: Env,
    /// Name the closure is bound to inside its own body, for recursive lets.
    pub rec: Option<Var>,
}

#[derive(Debug)]
pub struct AdtValue {
    pub constructor: String,
    pub fields: Vec<Value>,
}

impl Value {
    pub fn tensor(t: Tensor) -> Value {
        Value::Tensor(Arc::new(t))
    }

    pub fn unit() -> Value {
        Value::Tuple(Vec::new())
    }

    pub fn adt(constructor: &str, fields: Vec<Value>) -> Value {
        Value::Adt(Arc::new(AdtValue { constructor: String::from(constructor), fields }))
    }

    pub fn as_tensor(&self) -> Option<&Tensor> {
        match self {
            Value::Tensor(t) => Some(t),
            _ => None,
        }
    }

    /// Exact equality: bitwise for tensors, structural for aggregates,
    /// identity for closures and refs.
    pub fn bit_eq(&self, other: &Value) -> bool {
        self.approx_eq(other, 0.0)
    }

    /// Float tensors compare within `rel_tol` relative error (with the same
    /// value used as an absolute floor near zero); every other element type
    /// compares exactly.
    pub fn approx_eq(&self, other: &Value, rel_tol: f64) -> bool {
        match (self, other) {
            (Value::Tensor(a), Value::Tensor(b)) => tensors_close(a, b, rel_tol),
            (Value::Tuple(a), Value::Tuple(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.approx_eq(y, rel_tol)),
            (Value::Adt(a), Value::Adt(b)) => {
                a.constructor == b.constructor
                    && a.fields.len() == b.fields.len()
                    && a.fields.iter().zip(&b.fields).all(|(x, y)| x.approx_eq(y, rel_tol))
            }
            (Value::Closure(a), Value::Closure(b)) => Arc::ptr_eq(a, b),
            (Value::Ref(a), Value::Ref(b)) => a == b,
            (Value::Op(a), Value::Op(b)) | (Value::Global(a), Value::Global(b)) | (Value::Constructor(a), Value::Constructor(b)) => a == b,
            _ => false,
        }
    }

    /// Checks a first-order value against a type. Functions and refs are
    /// accepted by shape only.
    pub fn matches_type(&self, ty: &Type) -> bool {
        match (self, ty) {
            (Value::Tensor(t), Type::Tensor(tt)) => {
                t.dtype == tt.dtype
                    && t.shape.len() == tt.shape.len()
                    && t.shape.iter().zip(&tt.shape).all(|(&n, d)| match d {
                        Dim::Const(c) => *c as usize == n,
                        _ => true,
                    })
            }
            (Value::Tuple(vs), Type::Tuple(ts)) => vs.len() == ts.len() && vs.iter().zip(ts).all(|(v, t)| v.matches_type(t)),
            (Value::Adt(_), Type::Call { .. }) => true,
            (Value::Closure(_) | Value::Op(_) | Value::Global(_) | Value::Constructor(_), Type::Func(_)) => true,
            (Value::Ref(_), Type::Ref(_)) => true,
            (_, Type::Var(_)) => true,
            _ => false,
        }
    }
}

fn tensors_close(a: &Tensor, b: &Tensor, rel_tol: f64) -> bool {
    if a.dtype != b.dtype || a.shape != b.shape {
        return false;
    }
    match (&a.data, &b.data) {
        (Buffer::Float(x), Buffer::Float(y)) => x.iter().zip(y).all(|(&p, &q)| {
            if p.to_bits() == q.to_bits() || (p.is_nan() && q.is_nan()) {
                return true;
            }
            let scale = p.abs().max(q.abs()).max(1.0);
            (p - q).abs() <= rel_tol * scale
        }),
        _ => a.data == b.data,
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Tensor(t) => fmt_tensor(t, f),
            Value::Tuple(vs) => {
                f.write_str("(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                if vs.len() == 1 {
                    f.write_str(",")?;
                }
                f.write_str(")")
            }
            Value::Adt(a) => {
                f.write_str(&a.constructor)?;
                if !a.fields.is_empty() {
                    f.write_str("(")?;
                    for (i, v) in a.fields.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{v}")?;
                    }
                    f.write_str(")")?;
                }
                Ok(())
            }
            Value::Closure(_) => f.write_str("<closure>"),
            Value::Ref(id) => write!(f, "<ref {id}>"),
            Value::Op(n) => f.write_str(n),
            Value::Global(n) => write!(f, "@{n}"),
            Value::Constructor(n) => f.write_str(n),
        }
    }
}

/// Formats one element in the text format's literal syntax.
pub fn fmt_element(data: &Buffer, i: usize, bits: u32, f: &mut dyn fmt::Write) -> fmt::Result {
    match data {
        Buffer::Float(v) => {
            let x = v[i];
            if bits < 64 {
                fmt_float(x as f32 as f64, true, f)
            } else {
                fmt_float(x, false, f)
            }
        }
        Buffer::Int(v) => write!(f, "{}", v[i]),
        Buffer::Bool(v) => f.write_str(if v[i] { "True" } else { "False" }),
    }
}

fn fmt_float(x: f64, single: bool, f: &mut dyn fmt::Write) -> fmt::Result {
    if x.is_nan() {
        f.write_str("nan")
    } else if x.is_infinite() {
        f.write_str(if x > 0.0 { "inf" } else { "-inf" })
    } else if single {
        write!(f, "{:?}", x as f32)
    } else {
        write!(f, "{x:?}")
    }
}

fn fmt_tensor(t: &Tensor, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    fn rec(t: &Tensor, dim: usize, offset: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if dim == t.shape.len() {
            return fmt_element(&t.data, offset, t.dtype.bits(), f);
        }
        let inner: usize = t.shape[dim + 1..].iter().product();
        f.write_str("[")?;
        for i in 0..t.shape[dim] {
            if i > 0 {
                f.write_str(", ")?;
            }
            rec(t, dim + 1, offset + i * inner, f)?;
        }
        f.write_str("]")
    }
    rec(t, 0, 0, f)
}

/// Persistent environment mapping variables to values.
#[derive(Debug, Clone, Default)]
pub struct Env(Option<Arc<EnvNode>>);

#[derive(Debug)]
struct EnvNode {
    var: Var,
    value: Value,
    next: Env,
}

impl Env {
    pub fn new() -> Env {
        Env(None)
    }

    pub fn bind(&self, var: Var, value: Value) -> Env {
        Env(Some(Arc::new(EnvNode { var, value, next: self.clone() })))
    }

    pub fn lookup(&self, var: &Var) -> Option<&Value> {
        let mut cur = &self.0;
        while let Some(node) = cur {
            if node.var == *var {
                return Some(&node.value);
            }
            cur = &node.next.0;
        }
        None
    }
}
