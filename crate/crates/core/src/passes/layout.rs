//! Rewrites convolutions to a target data layout.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::attrs::{AttrValue, Attrs};
use crate::expr::{build_lets, flatten_lets, Call, Expr, ExprKind, Function, Var};
use crate::module::Module;
use crate::op::conv_params;
use crate::ty::Type;

use super::dce::dead_code_elim;
use super::fold::constant_fold;
use super::util::{subst, typed_anf};
use super::PassError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Nchw,
    Nhwc,
}

impl Layout {
    pub fn data(self) -> &'static str {
        match self {
            Layout::Nchw => "NCHW",
            Layout::Nhwc => "NHWC",
        }
    }

    pub fn kernel(self) -> &'static str {
        match self {
            Layout::Nchw => "OIHW",
            Layout::Nhwc => "HWIO",
        }
    }
}

impl FromStr for Layout {
    type Err = PassError;

    fn from_str(s: &str) -> Result<Layout, PassError> {
        match s {
            "NCHW" => Ok(Layout::Nchw),
            "NHWC" => Ok(Layout::Nhwc),
            other => Err(PassError::UnsupportedLayout(other.to_string())),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.data())
    }
}

/// Axis permutation taking a tensor in layout `src` to layout `tgt`.
pub fn permutation(src: &str, tgt: &str) -> Vec<i64> {
    tgt.chars().map(|c| src.chars().position(|s| s == c).expect("layouts share axes") as i64).collect()
}

fn transpose(x: Expr, perm: &[i64]) -> Expr {
    let axes = AttrValue::List(perm.iter().map(|&a| AttrValue::Int(a)).collect());
    Expr::call_op("transpose", vec![x], Attrs::new().with("axes", axes))
}

type Binding = (Var, Option<Type>, Expr);

/// Converts every `conv2d` to `target`, transposing its operands in and
/// its result back, then cancels transpose pairs that compose to the
/// identity and folds transposed constant weights.
pub fn alter_op_layout(m: &Module, target: Layout) -> Result<Module, PassError> {
    let typed = typed_anf(m)?;
    let out = typed.map_globals(|name, f| {
        if m.prelude_names.contains(name) {
            return f.clone();
        }
        let body = convert(&f.body, target);
        let mut defs = BTreeMap::new();
        let body = cancel(&body, &mut defs);
        Function { body, ..f.clone() }
    });
    Ok(dead_code_elim(&constant_fold(&dead_code_elim(&out))))
}

fn convert(e: &Expr, target: Layout) -> Expr {
    let (bindings, tail) = flatten_lets(e);
    if bindings.is_empty() {
        return e.map_children(&mut |c| convert(c, target));
    }
    let mut out: Vec<Binding> = Vec::new();
    for (v, ann, value) in bindings {
        let value = value.map_children(&mut |c| convert(c, target));
        let Some(("conv2d", call)) = value.as_op_call() else {
            out.push((v, ann, value));
            continue;
        };
        let Ok(p) = conv_params(&call.attrs) else {
            out.push((v, ann, value));
            continue;
        };
        let (src_data, src_kernel) = (if p.nhwc { "NHWC" } else { "NCHW" }, if p.hwio { "HWIO" } else { "OIHW" });
        if src_data == target.data() && src_kernel == target.kernel() {
            out.push((v, ann, value));
            continue;
        }
        let mut operand = |x: &Expr, src: &str, tgt: &str| {
            if src == tgt {
                return x.clone();
            }
            let t = Var::fresh("t");
            out.push((t.clone(), None, transpose(x.clone(), &permutation(src, tgt))));
            Expr::var(&t)
        };
        let data = operand(&call.args[0], src_data, target.data());
        let weight = operand(&call.args[1], src_kernel, target.kernel());
        let mut attrs = call.attrs.clone();
        attrs.set("data_layout", AttrValue::Str(target.data().to_string()));
        attrs.set("kernel_layout", AttrValue::Str(target.kernel().to_string()));
        let y = Var::fresh("y");
        out.push((y.clone(), None, value.rebuild(ExprKind::Call(Call { args: vec![data, weight], attrs, ..call.clone() }))));
        if src_data == target.data() {
            out.push((v, ann, Expr::var(&y)));
        } else {
            out.push((v, ann, transpose(Expr::var(&y), &permutation(target.data(), src_data))));
        }
    }
    build_lets(out, convert(&tail, target))
}

fn axes_of(call: &Call, rank: usize) -> Vec<i64> {
    call.attrs.ints("axes").unwrap_or_else(|| (0..rank as i64).rev().collect())
}

/// Drops `transpose(transpose(x, p), q)` when `p[q[i]] == i` for all `i`,
/// and bindings that only rename a variable.
fn cancel(e: &Expr, defs: &mut BTreeMap<usize, Expr>) -> Expr {
    let (bindings, tail) = flatten_lets(e);
    if bindings.is_empty() {
        return e.map_children(&mut |c| cancel(c, defs));
    }
    let mut renames: BTreeMap<usize, Expr> = BTreeMap::new();
    let mut out = Vec::new();
    for (v, ann, value) in bindings {
        let value = subst(&value, &renames).map_children(&mut |c| cancel(c, defs));
        if ann.is_none() {
            if value.as_var().is_some() {
                renames.insert(v.id(), value);
                continue;
            }
            if let Some(inner) = identity_pair(&value, defs) {
                renames.insert(v.id(), inner);
                continue;
            }
        }
        defs.insert(v.id(), value.clone());
        out.push((v, ann, value));
    }
    let tail = subst(&tail, &renames);
    build_lets(out, cancel(&tail, defs))
}

fn identity_pair(value: &Expr, defs: &BTreeMap<usize, Expr>) -> Option<Expr> {
    let ("transpose", outer) = value.as_op_call()? else { return None };
    let def = defs.get(&outer.args[0].as_var()?.id())?;
    let ("transpose", inner) = def.as_op_call()? else { return None };
    let q = outer.attrs.ints("axes")?;
    let p = axes_of(inner, q.len());
    if p.len() != q.len() {
        return None;
    }
    q.iter().enumerate().all(|(i, &qi)| p.get(qi as usize) == Some(&(i as i64))).then(|| inner.args[0].clone())
}
