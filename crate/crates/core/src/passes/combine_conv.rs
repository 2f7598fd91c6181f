//! Combines parallel convolutions over one input into a single wider one.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::attrs::{AttrValue, Attrs};
use crate::dtype::BaseType;
use crate::expr::{build_lets, flatten_lets, Expr, Function, Var};
use crate::module::Module;
use crate::op::conv_params;
use crate::ty::Type;

use super::dce::dead_code_elim;
use super::fold::constant_fold;
use super::util::typed_anf;
use super::PassError;

/// Replaces each group of two or more compatible `conv2d` calls that share
/// their data operand with one convolution over the concatenated weights and
/// a `split` of its output.
pub fn combine_parallel_conv2d(m: &Module) -> Result<Module, PassError> {
    let typed = typed_anf(m)?;
    let out = typed.map_globals(|name, f| {
        if m.prelude_names.contains(name) {
            return f.clone();
        }
        Function { body: block(&f.body), ..f.clone() }
    });
    Ok(dead_code_elim(&constant_fold(&out)))
}

type Binding = (Var, Option<Type>, Expr);

struct Conv {
    index: usize,
    data: usize,
    weight: Expr,
    attrs: Attrs,
    /// Kernel height and width, weight dtype, output channels.
    kernel: (u64, u64, BaseType),
    out_channels: u64,
    hwio: bool,
    nhwc: bool,
}

fn conv_of(index: usize, value: &Expr) -> Option<Conv> {
    let ("conv2d", call) = value.as_op_call()? else { return None };
    let data = call.args[0].as_var()?.id();
    let p = conv_params(&call.attrs).ok()?;
    let wt = call.args[1].ty()?.as_tensor()?;
    let dims: Vec<u64> = wt.shape.iter().map(|d| d.as_const()).collect::<Option<_>>()?;
    if dims.len() != 4 {
        return None;
    }
    let (kernel, out_channels) =
        if p.hwio { ((dims[0], dims[1], wt.dtype), dims[3]) } else { ((dims[2], dims[3], wt.dtype), dims[0]) };
    Some(Conv {
        index,
        data,
        weight: call.args[1].clone(),
        attrs: call.attrs.clone(),
        kernel,
        out_channels,
        hwio: p.hwio,
        nhwc: p.nhwc,
    })
}

fn block(e: &Expr) -> Expr {
    let (bindings, tail) = flatten_lets(e);
    if bindings.is_empty() {
        return e.map_children(&mut block);
    }
    let bindings: Vec<Binding> =
        bindings.into_iter().map(|(v, a, value)| (v, a, value.map_children(&mut block))).collect();
    let defined: BTreeMap<usize, usize> = bindings.iter().enumerate().map(|(i, (v, _, _))| (v.id(), i)).collect();
    let convs: Vec<Conv> = bindings.iter().enumerate().filter_map(|(i, (_, _, value))| conv_of(i, value)).collect();

    let mut groups: Vec<Vec<&Conv>> = Vec::new();
    for c in &convs {
        match groups.iter_mut().find(|g| g[0].data == c.data && g[0].attrs == c.attrs && g[0].kernel == c.kernel) {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }
    groups.retain(|g| g.len() > 1);
    for g in &mut groups {
        let first = g[0].index;
        g.retain(|c| c.index == first || c.weight.as_var().and_then(|w| defined.get(&w.id())).is_none_or(|&i| i < first));
    }
    groups.retain(|g| g.len() > 1);
    if groups.is_empty() {
        return build_lets(bindings, block(&tail));
    }

    let mut at: BTreeMap<usize, Vec<Binding>> = BTreeMap::new();
    let mut removed = Vec::new();
    for g in &groups {
        let first = g[0];
        let data = bindings[first.index].2.as_op_call().expect("conv call").1.args[0].clone();
        let ws = Var::fresh("ws");
        let wc = Var::fresh("wc");
        let y = Var::fresh("y");
        let parts = Var::fresh("parts");
        let weight_axis = if first.hwio { 3 } else { 0 };
        let out_axis = if first.nhwc { 3 } else { 1 };
        let mut cuts = Vec::new();
        let mut acc = 0;
        for c in &g[..g.len() - 1] {
            acc += c.out_channels as i64;
            cuts.push(AttrValue::Int(acc));
        }
        let mut emitted = vec![
            (ws.clone(), None, Expr::tuple(g.iter().map(|c| c.weight.clone()).collect())),
            (wc.clone(), None, Expr::call_op("concat", vec![Expr::var(&ws)], Attrs::new().with("axis", AttrValue::Int(weight_axis)))),
            (y.clone(), None, Expr::call_op("conv2d", vec![data, Expr::var(&wc)], first.attrs.clone())),
            (
                parts.clone(),
                None,
                Expr::call_op(
                    "split",
                    vec![Expr::var(&y)],
                    Attrs::new()
                        .with("indices_or_sections", AttrValue::List(cuts))
                        .with("axis", AttrValue::Int(out_axis)),
                ),
            ),
        ];
        for (i, c) in g.iter().enumerate() {
            let (v, a, _) = &bindings[c.index];
            emitted.push((v.clone(), a.clone(), Expr::proj(Expr::var(&parts), i)));
            removed.push(c.index);
        }
        at.insert(first.index, emitted);
    }
    let mut out = Vec::new();
    for (i, b) in bindings.into_iter().enumerate() {
        if let Some(new) = at.remove(&i) {
            out.extend(new);
        } else if !removed.contains(&i) {
            out.push(b);
        }
    }
    build_lets(out, block(&tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{Interpreter, Value};
    use crate::expr::Param;
    use crate::infer::infer;
    use crate::passes::util::constant;
    use crate::tensor::Tensor;
    use crate::ty::const_shape;

    fn count(e: &Expr, op: &str) -> usize {
        let mut n = usize::from(e.as_op_call().is_some_and(|(name, _)| name == op));
        let _ = e.try_map_children::<()>(&mut |c| {
            n += count(c, op);
            Ok(c.clone())
        });
        n
    }

    fn weight(o: usize, c: usize, k: usize, seed: f64) -> Expr {
        let n = o * c * k * k;
        constant(Tensor::from_f64(vec![o, c, k, k], BaseType::F32, (0..n).map(|i| libm::sin((i as f64 + seed) * 0.37)).collect()))
    }

    fn program(convs: &[(usize, usize, Attrs)]) -> Module {
        let x = Var::fresh("x");
        let outs: Vec<Expr> =
            convs.iter().enumerate().map(|(i, (o, k, a))| Expr::call_op("conv2d", vec![Expr::var(&x), weight(*o, 3, *k, i as f64)], a.clone())).collect();
        let mut m = Module::new();
        let p = Param { var: x, annotation: Some(Type::tensor(const_shape(&[1, 3, 4, 4]), BaseType::F32)) };
        m.add_global("main", Function::new(vec![p], Expr::tuple(outs))).unwrap();
        m
    }

    fn input() -> Vec<Value> {
        vec![Value::tensor(Tensor::from_f64(vec![1, 3, 4, 4], BaseType::F32, (0..48).map(|i| libm::cos(i as f64 * 0.11)).collect()))]
    }

    #[test]
    fn two_convs_become_one_and_a_split() {
        let m = program(&[(4, 1, Attrs::new()), (8, 1, Attrs::new())]);
        let out = infer(&combine_parallel_conv2d(&infer(&m).unwrap()).unwrap()).unwrap();
        let body = &out.globals["main"].body;
        assert_eq!((count(body, "conv2d"), count(body, "split")), (1, 1));
        let a = Interpreter::new(&m).run("main", input()).unwrap();
        let b = Interpreter::new(&out).run("main", input()).unwrap();
        assert!(a.approx_eq(&b, 1e-5));
    }

    #[test]
    fn incompatible_convs_are_kept() {
        let strided = Attrs::new().with("strides", AttrValue::List(vec![AttrValue::Int(2), AttrValue::Int(2)]));
        for m in [program(&[(4, 1, Attrs::new())]), program(&[(4, 1, Attrs::new()), (4, 1, strided)]), program(&[(4, 1, Attrs::new()), (4, 3, Attrs::new())])] {
            let out = combine_parallel_conv2d(&infer(&m).unwrap()).unwrap();
            let body = &out.globals["main"].body;
            assert_eq!(count(body, "split"), 0);
            assert_eq!(count(body, "conv2d"), count(&m.globals["main"].body, "conv2d"));
        }
    }
}
