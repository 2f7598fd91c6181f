//! Moves constant scaling through convolutions into their weights.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::expr::{build_lets, flatten_lets, Call, Expr, ExprKind, Function, Var};
use crate::module::Module;
use crate::op::conv_params;
use crate::tensor::Tensor;

use super::dce::dead_code_elim;
use super::fold::constant_fold;
use super::util::{constant, typed_anf, use_counts};
use super::PassError;

/// Rewrites `conv2d(multiply(x, c), w)` to `conv2d(x, multiply(w, c'))` and
/// `multiply(conv2d(x, w), c)` to `conv2d(x, multiply(w, c''))`, where `c`
/// is a scalar or a per-channel constant, then folds the new weights.
pub fn fold_axis_scale(m: &Module) -> Result<Module, PassError> {
    let mut cur = typed_anf(m)?;
    loop {
        let mut changed = false;
        let next = cur.map_globals(|name, f| {
            if m.prelude_names.contains(name) {
                return f.clone();
            }
            let mut defs = BTreeMap::new();
            collect_defs(&f.body, &mut defs);
            let mut uses = BTreeMap::new();
            use_counts(&f.body, &mut uses);
            let cx = Cx { defs, uses };
            let body = cx.block(&f.body, &mut changed);
            Function { body, ..f.clone() }
        });
        if !changed {
            return Ok(dead_code_elim(&constant_fold(&cur)));
        }
        cur = typed_anf(&dead_code_elim(&next))?;
    }
}

fn collect_defs(e: &Expr, defs: &mut BTreeMap<usize, Expr>) {
    if let ExprKind::Let(l) = e.kind() {
        defs.insert(l.var.id(), l.value.clone());
    }
    let _ = e.try_map_children::<()>(&mut |c| {
        collect_defs(c, defs);
        Ok(c.clone())
    });
}

struct Cx {
    defs: BTreeMap<usize, Expr>,
    uses: BTreeMap<usize, usize>,
}

/// Where the channel axis sits in a layout, and the rank-4 weight shape
/// that scales a given channel count along the matching weight axis.
fn channel_axis(nhwc: bool) -> usize {
    if nhwc {
        3
    } else {
        1
    }
}

fn weight_shape(n: usize, hwio: bool, input_side: bool) -> Vec<usize> {
    let axis = match (hwio, input_side) {
        (false, true) => 1,
        (false, false) => 0,
        (true, true) => 2,
        (true, false) => 3,
    };
    let mut s = vec![1; 4];
    s[axis] = n;
    s
}

/// Extent of `c` along the channel axis if it scales whole channels only.
fn per_channel(c: &Tensor, axis: usize) -> Option<usize> {
    if c.rank() > 4 {
        return None;
    }
    let mut shape = vec![1; 4 - c.rank()];
    shape.extend(&c.shape);
    shape.iter().enumerate().all(|(i, &d)| d == 1 || i == axis).then_some(shape[axis])
}

fn channels_of(e: &Expr, axis: usize) -> Option<usize> {
    let t = e.ty()?.as_tensor()?;
    if t.shape.len() != 4 {
        return None;
    }
    t.shape[axis].as_const().map(|d| d as usize)
}

impl Cx {
    fn resolve<'a>(&'a self, e: &'a Expr) -> &'a Expr {
        match e.as_var().and_then(|v| self.defs.get(&v.id())) {
            Some(d) if d.as_constant().is_some() => d,
            _ => e,
        }
    }

    /// `(x, c)` if `e` names a multiplication of something by a constant.
    fn scaled<'a>(&'a self, e: &'a Expr) -> Option<(&'a Expr, &'a Tensor)> {
        let def = self.defs.get(&e.as_var()?.id())?;
        let ("multiply", call) = def.as_op_call()? else { return None };
        let (a, b) = (&call.args[0], &call.args[1]);
        if let Some(c) = self.resolve(b).as_constant() {
            return Some((a, c));
        }
        self.resolve(a).as_constant().map(|c| (b, &**c))
    }

    fn block(&self, e: &Expr, changed: &mut bool) -> Expr {
        let (bindings, tail) = flatten_lets(e);
        if bindings.is_empty() {
            return e.map_children(&mut |c| self.block(c, changed));
        }
        let mut out = Vec::new();
        for (v, ann, value) in bindings {
            let value = value.map_children(&mut |c| self.block(c, changed));
            match self.rewrite(&value, &mut out) {
                Some(new) => {
                    *changed = true;
                    out.push((v, ann, new));
                }
                None => out.push((v, ann, value)),
            }
        }
        build_lets(out, self.block(&tail, changed))
    }

    fn scale_weight(&self, w: &Expr, c: &Tensor, shape: Vec<usize>, out: &mut Vec<(Var, Option<crate::ty::Type>, Expr)>) -> Expr {
        let c = if c.rank() == 0 { c.clone() } else { c.reshape(shape) };
        let nw = Var::fresh("w");
        out.push((nw.clone(), None, Expr::call_op("multiply", vec![w.clone(), constant(c)], Default::default())));
        Expr::var(&nw)
    }

    fn rewrite(&self, value: &Expr, out: &mut Vec<(Var, Option<crate::ty::Type>, Expr)>) -> Option<Expr> {
        let (name, call) = value.as_op_call()?;
        match name {
            "conv2d" if call.attrs.get("out_dtype").is_none() => {
                let p = conv_params(&call.attrs).ok()?;
                let (x, c) = self.scaled(&call.args[0])?;
                let axis = channel_axis(p.nhwc);
                let n = per_channel(c, axis)?;
                if n != 1 && channels_of(x, axis) != Some(n) {
                    return None;
                }
                let w = self.scale_weight(&call.args[1], c, weight_shape(n, p.hwio, true), out);
                Some(conv(value, call, x.clone(), w))
            }
            "multiply" => {
                let (y, c) = self.scaled_conv(call)?;
                let def = self.defs.get(&y.as_var()?.id())?;
                let ("conv2d", cc) = def.as_op_call()? else { return None };
                if cc.attrs.get("out_dtype").is_some() || self.uses.get(&y.as_var()?.id()) != Some(&1) {
                    return None;
                }
                let p = conv_params(&cc.attrs).ok()?;
                let axis = channel_axis(p.nhwc);
                let n = per_channel(c, axis)?;
                if n != 1 && channels_of(y, axis) != Some(n) {
                    return None;
                }
                let w = self.scale_weight(&cc.args[1], c, weight_shape(n, p.hwio, false), out);
                Some(conv(def, cc, cc.args[0].clone(), w))
            }
            _ => None,
        }
    }

    fn scaled_conv<'a>(&'a self, call: &'a Call) -> Option<(&'a Expr, &'a Tensor)> {
        let (a, b) = (&call.args[0], &call.args[1]);
        if let Some(c) = self.resolve(b).as_constant() {
            return Some((a, c));
        }
        self.resolve(a).as_constant().map(|c| (b, &**c))
    }
}

fn conv(site: &Expr, call: &Call, x: Expr, w: Expr) -> Expr {
    site.rebuild(ExprKind::Call(Call { args: vec![x, w], ..call.clone() }))
}
