//! Reference kernels for the builtin operators.
//!
//! Every kernel is the direct dense row-major definition. Float math runs in
//! f64 and is rounded to the output precision once per element; reductions
//! accumulate in row-major order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::relations::{conv_params, reduce_axes, split_bounds};
use super::{AttrKind, FusionPattern, OpRegistry, OperatorDecl};
use crate::attrs::Attrs;
use crate::dtype::{BaseType, TypeCode};
use crate::exec::{runtime, Trap, Value};
use crate::quant;
use crate::tensor::{broadcast_index_map, broadcast_shapes, round_half_even, strides, Buffer, Tensor};

type KResult = Result<Value, Trap>;

fn tensor_arg<'a>(args: &'a [Value], i: usize) -> Result<&'a Tensor, Trap> {
    match args.get(i) {
        Some(Value::Tensor(t)) => Ok(t),
        Some(other) => Err(runtime(format!("argument {i} must be a tensor, found {other}"))),
        None => Err(runtime(format!("missing argument {i}"))),
    }
}

fn out(t: Tensor) -> KResult {
    Ok(Value::tensor(t))
}

fn normalize_axis(axis: i64, rank: usize) -> Result<usize, Trap> {
    let a = if axis < 0 { axis + rank as i64 } else { axis };
    if a < 0 || a >= rank as i64 {
        return Err(runtime(format!("axis {axis} out of range for rank {rank}")));
    }
    Ok(a as usize)
}

/// Picks elements of `buf` by flat index.
fn gather(buf: &Buffer, idx: &[usize]) -> Buffer {
    match buf {
        Buffer::Float(v) => Buffer::Float(idx.iter().map(|&i| v[i]).collect()),
        Buffer::Int(v) => Buffer::Int(idx.iter().map(|&i| v[i]).collect()),
        Buffer::Bool(v) => Buffer::Bool(idx.iter().map(|&i| v[i]).collect()),
    }
}

// Elementwise unary.

fn map_float(x: &Tensor, f: impl Fn(f64) -> f64) -> KResult {
    match &x.data {
        Buffer::Float(v) => out(Tensor::from_f64(x.shape.clone(), x.dtype, v.iter().map(|&a| f(a)).collect())),
        _ => Err(runtime(format!("expected a float tensor, found {}", x.dtype))),
    }
}

fn map_numeric(x: &Tensor, ff: impl Fn(f64) -> f64, fi: impl Fn(i64) -> i64) -> KResult {
    let data = match &x.data {
        Buffer::Float(v) => Buffer::Float(v.iter().map(|&a| ff(a)).collect()),
        Buffer::Int(v) => Buffer::Int(v.iter().map(|&a| fi(a)).collect()),
        Buffer::Bool(_) => return Err(runtime("numeric operator applied to bool tensor")),
    };
    out(Tensor::new(x.shape.clone(), x.dtype, data))
}

fn unary(name: &'static str) -> impl Fn(&[Value], &Attrs) -> KResult + Send + Sync {
    move |args, attrs| {
        let x = tensor_arg(args, 0)?;
        match name {
            "negative" => map_numeric(x, |a| -a, i64::wrapping_neg),
            "abs" => map_numeric(x, f64::abs, i64::wrapping_abs),
            "relu" => map_numeric(x, |a| if a > 0.0 { a } else { 0.0 }, |a| a.max(0)),
            "round" => map_numeric(x, round_half_even, |a| a),
            "exp" => map_float(x, libm::exp),
            "tanh" => map_float(x, libm::tanh),
            "sigmoid" => map_float(x, |a| 1.0 / (1.0 + libm::exp(-a))),
            "logical_not" => match &x.data {
                Buffer::Bool(v) => out(Tensor::from_bool(x.shape.clone(), v.iter().map(|b| !b).collect())),
                _ => Err(runtime("logical_not needs a bool tensor")),
            },
            "clip" => {
                let lo = attrs.float("a_min").ok_or_else(|| runtime("clip requires a_min"))?;
                let hi = attrs.float("a_max").ok_or_else(|| runtime("clip requires a_max"))?;
                map_numeric(x, |a| a.max(lo).min(hi), |a| a.max(libm::ceil(lo) as i64).min(libm::floor(hi) as i64))
            }
            "cast" => {
                let dtype = super::relations::parse_dtype_attr(attrs, "dtype")
                    .map_err(runtime)?
                    .ok_or_else(|| runtime("cast requires dtype"))?;
                out(x.cast(dtype))
            }
            "simulated_quantize" => {
                let bits = attrs.int("bits").unwrap_or(8) as u32;
                let sign = attrs.int("sign").unwrap_or(1) as u32;
                let scale = attrs.float("scale").ok_or(Trap::Uncalibrated)?;
                map_float(x, |a| quant::simulated_quantize(a, bits, sign, scale))
            }
            _ => unreachable!("unknown unary kernel {name}"),
        }
    }
}

// Broadcasting binary operators.

#[derive(Clone, Copy)]
enum Bin {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    And,
    Or,
}

fn zip<T: Copy, U>(
    a: &[T],
    ashape: &[usize],
    b: &[T],
    bshape: &[usize],
    shape: &[usize],
    mut f: impl FnMut(T, T) -> Result<U, Trap>,
) -> Result<Vec<U>, Trap> {
    let ia = broadcast_index_map(ashape, shape);
    let ib = broadcast_index_map(bshape, shape);
    ia.iter().zip(&ib).map(|(&i, &j)| f(a[i], b[j])).collect()
}

fn compare<T: PartialOrd>(op: Bin, x: T, y: T) -> bool {
    match op {
        Bin::Eq => x == y,
        Bin::Ne => x != y,
        Bin::Lt => x < y,
        Bin::Gt => x > y,
        Bin::Le => x <= y,
        Bin::Ge => x >= y,
        _ => unreachable!(),
    }
}

fn binary(op: Bin) -> impl Fn(&[Value], &Attrs) -> KResult + Send + Sync {
    move |args, _| {
        let a = tensor_arg(args, 0)?;
        let b = tensor_arg(args, 1)?;
        if a.dtype != b.dtype {
            return Err(runtime(format!("operand data types differ: {} vs {}", a.dtype, b.dtype)));
        }
        let shape = broadcast_shapes(&a.shape, &b.shape)
            .ok_or_else(|| runtime(format!("cannot broadcast {:?} with {:?}", a.shape, b.shape)))?;
        let is_cmp = matches!(op, Bin::Eq | Bin::Ne | Bin::Lt | Bin::Gt | Bin::Le | Bin::Ge);
        let data = match (&a.data, &b.data) {
            (Buffer::Float(x), Buffer::Float(y)) if is_cmp => {
                Buffer::Bool(zip(x, &a.shape, y, &b.shape, &shape, |p, q| Ok(compare(op, p, q)))?)
            }
            (Buffer::Int(x), Buffer::Int(y)) if is_cmp => {
                Buffer::Bool(zip(x, &a.shape, y, &b.shape, &shape, |p, q| Ok(compare(op, p, q)))?)
            }
            (Buffer::Bool(x), Buffer::Bool(y)) if is_cmp => {
                Buffer::Bool(zip(x, &a.shape, y, &b.shape, &shape, |p, q| Ok(compare(op, p, q)))?)
            }
            (Buffer::Bool(x), Buffer::Bool(y)) => Buffer::Bool(zip(x, &a.shape, y, &b.shape, &shape, |p, q| match op {
                Bin::And => Ok(p && q),
                Bin::Or => Ok(p || q),
                Bin::Min => Ok(p && q),
                Bin::Max => Ok(p || q),
                _ => Err(runtime("arithmetic on bool tensors")),
            })?),
            (Buffer::Float(x), Buffer::Float(y)) => Buffer::Float(zip(x, &a.shape, y, &b.shape, &shape, |p, q| match op {
                Bin::Add => Ok(p + q),
                Bin::Sub => Ok(p - q),
                Bin::Mul => Ok(p * q),
                Bin::Div => Ok(p / q),
                Bin::Min => Ok(if p.is_nan() || q.is_nan() { f64::NAN } else { p.min(q) }),
                Bin::Max => Ok(if p.is_nan() || q.is_nan() { f64::NAN } else { p.max(q) }),
                _ => Err(runtime("logical operator on float tensors")),
            })?),
            (Buffer::Int(x), Buffer::Int(y)) => Buffer::Int(zip(x, &a.shape, y, &b.shape, &shape, |p, q| match op {
                Bin::Add => Ok(p.wrapping_add(q)),
                Bin::Sub => Ok(p.wrapping_sub(q)),
                Bin::Mul => Ok(p.wrapping_mul(q)),
                Bin::Div if q == 0 => Err(Trap::DivideByZero),
                Bin::Div => Ok(p.wrapping_div(q)),
                Bin::Min => Ok(p.min(q)),
                Bin::Max => Ok(p.max(q)),
                _ => Err(runtime("logical operator on integer tensors")),
            })?),
            _ => return Err(runtime("mismatched tensor storage")),
        };
        let dtype = if is_cmp { BaseType::BOOL } else { a.dtype };
        out(Tensor::new(shape, dtype, data))
    }
}

// Shape manipulation.

fn reshape(args: &[Value], attrs: &Attrs) -> KResult {
    let x = tensor_arg(args, 0)?;
    let newshape = attrs.ints("newshape").ok_or_else(|| runtime("reshape requires newshape"))?;
    let total = x.num_elements();
    let known: usize = newshape.iter().filter(|&&d| d != -1).map(|&d| d as usize).product();
    let shape: Vec<usize> = newshape
        .iter()
        .map(|&d| if d == -1 { if known == 0 { 0 } else { total / known } } else { d as usize })
        .collect();
    if shape.iter().product::<usize>() != total {
        return Err(runtime(format!("cannot reshape {:?} into {newshape:?}", x.shape)));
    }
    out(x.reshape(shape))
}

fn transpose(args: &[Value], attrs: &Attrs) -> KResult {
    let x = tensor_arg(args, 0)?;
    let rank = x.rank();
    let axes: Vec<usize> = match attrs.ints("axes") {
        Some(a) => a.iter().map(|&v| normalize_axis(v, rank)).collect::<Result<_, _>>()?,
        None => (0..rank).rev().collect(),
    };
    if axes.len() != rank {
        return Err(runtime("transpose axes do not match rank"));
    }
    out(permute(x, &axes))
}

/// Output axis `i` is input axis `axes[i]`.
pub(crate) fn permute(x: &Tensor, axes: &[usize]) -> Tensor {
    let shape: Vec<usize> = axes.iter().map(|&a| x.shape[a]).collect();
    let in_strides = strides(&x.shape);
    let total = x.num_elements();
    let mut idx = vec![0usize; shape.len()];
    let mut map = Vec::with_capacity(total);
    for _ in 0..total {
        map.push(idx.iter().zip(axes).map(|(&i, &a)| i * in_strides[a]).sum());
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor { shape, dtype: x.dtype, data: gather(&x.data, &map) }
}

fn squeeze(args: &[Value], attrs: &Attrs) -> KResult {
    let x = tensor_arg(args, 0)?;
    let shape = match attrs.ints("axis") {
        Some(axes) => {
            let axes: Vec<usize> = axes.iter().map(|&a| normalize_axis(a, x.rank())).collect::<Result<_, _>>()?;
            if axes.iter().any(|&a| x.shape[a] != 1) {
                return Err(runtime("cannot squeeze an axis whose extent is not 1"));
            }
            x.shape.iter().enumerate().filter(|(i, _)| !axes.contains(i)).map(|(_, &d)| d).collect()
        }
        None => x.shape.iter().copied().filter(|&d| d != 1).collect(),
    };
    out(x.reshape(shape))
}

fn expand_dims(args: &[Value], attrs: &Attrs) -> KResult {
    let x = tensor_arg(args, 0)?;
    let axis = normalize_axis(attrs.int("axis").ok_or_else(|| runtime("expand_dims requires axis"))?, x.rank() + 1)?;
    let mut shape = x.shape.clone();
    for _ in 0..attrs.int("num_newaxis").unwrap_or(1) {
        shape.insert(axis, 1);
    }
    out(x.reshape(shape))
}

// Reductions.

/// Output shape (with kept unit axes) and, for every input element in
/// row-major order, the flat index of the output element it reduces into.
fn reduction_map(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let kept: Vec<usize> = shape.iter().enumerate().map(|(i, &d)| if axes.contains(&i) { 1 } else { d }).collect();
    (kept.clone(), broadcast_index_map(&kept, shape))
}

fn drop_axes(kept: &[usize], axes: &[usize], keepdims: bool) -> Vec<usize> {
    if keepdims {
        return kept.to_vec();
    }
    kept.iter().enumerate().filter(|(i, _)| !axes.contains(i)).map(|(_, &d)| d).collect()
}

#[derive(Clone, Copy)]
enum Red {
    Sum,
    Max,
    Min,
}

fn reduce(kind: Red) -> impl Fn(&[Value], &Attrs) -> KResult + Send + Sync {
    move |args, attrs| {
        let x = tensor_arg(args, 0)?;
        let axes = reduce_axes(attrs, x.rank()).map_err(runtime)?;
        let (kept, map) = reduction_map(&x.shape, &axes);
        let n: usize = kept.iter().product();
        let shape = drop_axes(&kept, &axes, attrs.flag("keepdims"));
        let data = match &x.data {
            Buffer::Float(v) => {
                let init = match kind {
                    Red::Sum => 0.0,
                    Red::Max => f64::NEG_INFINITY,
                    Red::Min => f64::INFINITY,
                };
                let mut acc = vec![init; n];
                for (i, &o) in map.iter().enumerate() {
                    acc[o] = match kind {
                        Red::Sum => acc[o] + v[i],
                        Red::Max if v[i].is_nan() || acc[o].is_nan() => f64::NAN,
                        Red::Max => acc[o].max(v[i]),
                        Red::Min if v[i].is_nan() || acc[o].is_nan() => f64::NAN,
                        Red::Min => acc[o].min(v[i]),
                    };
                }
                Buffer::Float(acc)
            }
            Buffer::Int(v) => {
                let init = match kind {
                    Red::Sum => 0,
                    Red::Max => i64::MIN,
                    Red::Min => i64::MAX,
                };
                let mut acc = vec![init; n];
                for (i, &o) in map.iter().enumerate() {
                    acc[o] = match kind {
                        Red::Sum => acc[o].wrapping_add(v[i]),
                        Red::Max => acc[o].max(v[i]),
                        Red::Min => acc[o].min(v[i]),
                    };
                }
                Buffer::Int(acc)
            }
            Buffer::Bool(v) => {
                let mut acc = match kind {
                    Red::Sum => return Err(runtime("sum of a bool tensor")),
                    Red::Max => vec![false; n],
                    Red::Min => vec![true; n],
                };
                for (i, &o) in map.iter().enumerate() {
                    acc[o] = match kind {
                        Red::Max => acc[o] || v[i],
                        _ => acc[o] && v[i],
                    };
                }
                Buffer::Bool(acc)
            }
        };
        out(Tensor::new(shape, x.dtype, data))
    }
}

fn argmax(args: &[Value], attrs: &Attrs) -> KResult {
    let x = tensor_arg(args, 0)?;
    let axes = match attrs.int("axis") {
        Some(a) => vec![normalize_axis(a, x.rank())?],
        None => (0..x.rank()).collect(),
    };
    let (kept, map) = reduction_map(&x.shape, &axes);
    let n: usize = kept.iter().product();
    let shape = drop_axes(&kept, &axes, attrs.flag("keepdims"));
    // Position of each input element along the reduced axes, flattened.
    let red_shape: Vec<usize> = axes.iter().map(|&a| x.shape[a]).collect();
    let red_strides = strides(&red_shape);
    let in_strides = strides(&x.shape);
    let mut best: Vec<Option<(f64, i64)>> = vec![None; n];
    for (i, &o) in map.iter().enumerate() {
        let pos: usize = axes.iter().enumerate().map(|(k, &a)| (i / in_strides[a]) % x.shape[a] * red_strides[k]).sum();
        let v = x.data.get_f64(i);
        match best[o] {
            Some((b, _)) if !(v > b) => {}
            _ => best[o] = Some((v, pos as i64)),
        }
    }
    let data = best.into_iter().map(|b| b.map_or(0, |(_, p)| p)).collect();
    out(Tensor::from_i64(shape, BaseType::I32, data))
}

// Complex operators.

fn out_dtype(attrs: &Attrs, default: BaseType) -> Result<BaseType, Trap> {
    Ok(super::relations::parse_dtype_attr(attrs, "out_dtype").map_err(runtime)?.unwrap_or(default))
}

/// Accumulates products of element pairs in order and produces one output
/// element of `dtype`.
struct Acc {
    float: bool,
    f: f64,
    i: i64,
}

impl Acc {
    fn new(float: bool) -> Acc {
        Acc { float, f: 0.0, i: 0 }
    }

    fn add_product(&mut self, a: &Buffer, ai: usize, b: &Buffer, bi: usize) {
        match (a, b) {
            (Buffer::Int(x), Buffer::Int(y)) if !self.float => self.i = self.i.wrapping_add(x[ai].wrapping_mul(y[bi])),
            _ => self.f += a.get_f64(ai) * b.get_f64(bi),
        }
    }
}

fn finish(accs: Vec<Acc>, shape: Vec<usize>, dtype: BaseType) -> Tensor {
    match dtype.code() {
        TypeCode::Float => Tensor::from_f64(shape, dtype, accs.into_iter().map(|a| if a.float { a.f } else { a.i as f64 }).collect()),
        _ => Tensor::from_i64(shape, dtype, accs.into_iter().map(|a| if a.float { a.f as i64 } else { a.i }).collect()),
    }
}

fn dense(args: &[Value], attrs: &Attrs) -> KResult {
    let x = tensor_arg(args, 0)?;
    let w = tensor_arg(args, 1)?;
    if x.rank() == 0 || w.rank() != 2 || *x.shape.last().unwrap() != w.shape[1] {
        return Err(runtime(format!("dense shape mismatch {:?} x {:?}", x.shape, w.shape)));
    }
    let k = w.shape[1];
    let units = w.shape[0];
    let rows = x.num_elements() / k.max(1);
    let dtype = out_dtype(attrs, x.dtype)?;
    let float = x.dtype.is_float();
    let mut accs = Vec::with_capacity(rows * units);
    for r in 0..rows {
        for u in 0..units {
            let mut acc = Acc::new(float);
            for j in 0..k {
                acc.add_product(&x.data, r * k + j, &w.data, u * k + j);
            }
            accs.push(acc);
        }
    }
    let mut shape = x.shape[..x.rank() - 1].to_vec();
    shape.push(units);
    out(finish(accs, shape, dtype))
}

fn conv2d(args: &[Value], attrs: &Attrs) -> KResult {
    let x = tensor_arg(args, 0)?;
    let w = tensor_arg(args, 1)?;
    let p = conv_params(attrs).map_err(runtime)?;
    if x.rank() != 4 || w.rank() != 4 {
        return Err(runtime("conv2d expects rank-4 data and weight"));
    }
    let [n, c, h, wd] = if p.nhwc {
        [x.shape[0], x.shape[3], x.shape[1], x.shape[2]]
    } else {
        [x.shape[0], x.shape[1], x.shape[2], x.shape[3]]
    };
    let [o, ci, kh, kw] = if p.hwio {
        [w.shape[3], w.shape[2], w.shape[0], w.shape[1]]
    } else {
        [w.shape[0], w.shape[1], w.shape[2], w.shape[3]]
    };
    if c != ci {
        return Err(runtime(format!("conv2d channel mismatch {c} vs {ci}")));
    }
    let [pt, pl, pb, pr] = p.padding.map(|v| v as usize);
    let [sh, sw] = p.strides.map(|v| v as usize);
    if h + pt + pb < kh || wd + pl + pr < kw {
        return Err(runtime("conv2d kernel larger than padded input"));
    }
    let oh = (h + pt + pb - kh) / sh + 1;
    let ow = (wd + pl + pr - kw) / sw + 1;
    let xi = |b: usize, ch: usize, y: usize, z: usize| {
        if p.nhwc {
            ((b * h + y) * wd + z) * c + ch
        } else {
            ((b * c + ch) * h + y) * wd + z
        }
    };
    let wi = |oc: usize, ch: usize, y: usize, z: usize| {
        if p.hwio {
            ((y * kw + z) * c + ch) * o + oc
        } else {
            ((oc * c + ch) * kh + y) * kw + z
        }
    };
    let float = x.dtype.is_float();
    let dtype = out_dtype(attrs, x.dtype)?;
    let out_shape = if p.nhwc { vec![n, oh, ow, o] } else { vec![n, o, oh, ow] };
    let mut accs: Vec<Acc> = (0..n * o * oh * ow).map(|_| Acc::new(float)).collect();
    for b in 0..n {
        for oc in 0..o {
            for y in 0..oh {
                for z in 0..ow {
                    let mut acc = Acc::new(float);
                    for ch in 0..c {
                        for ky in 0..kh {
                            let iy = (y * sh + ky) as isize - pt as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (z * sw + kx) as isize - pl as isize;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                acc.add_product(&x.data, xi(b, ch, iy as usize, ix as usize), &w.data, wi(oc, ch, ky, kx));
                            }
                        }
                    }
                    let flat = if p.nhwc { ((b * oh + y) * ow + z) * o + oc } else { ((b * o + oc) * oh + y) * ow + z };
                    accs[flat] = acc;
                }
            }
        }
    }
    out(finish(accs, out_shape, dtype))
}

fn bias_add(args: &[Value], attrs: &Attrs) -> KResult {
    let x = tensor_arg(args, 0)?;
    let bias = tensor_arg(args, 1)?;
    let axis = normalize_axis(attrs.int("axis").unwrap_or(1), x.rank())?;
    if bias.rank() != 1 || bias.shape[0] != x.shape[axis] {
        return Err(runtime("bias length does not match the bias axis"));
    }
    let mut bshape = vec![1; x.rank() - axis];
    bshape[0] = bias.shape[0];
    let b = Value::tensor(bias.reshape(bshape));
    binary(Bin::Add)(&[args[0].clone(), b], &Attrs::new())
}

/// Splits `shape` around `axis` into (outer, extent, inner) element counts.
fn around(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (shape[..axis].iter().product(), shape[axis], shape[axis + 1..].iter().product())
}

fn concat(args: &[Value], attrs: &Attrs) -> KResult {
    let fields = match args.first() {
        Some(Value::Tuple(f)) if !f.is_empty() => f,
        _ => return Err(runtime("concat expects a non-empty tuple of tensors")),
    };
    let tensors: Vec<&Tensor> = fields
        .iter()
        .map(|v| v.as_tensor().ok_or_else(|| runtime("concat field must be a tensor")))
        .collect::<Result<_, _>>()?;
    let first = tensors[0];
    let axis = normalize_axis(attrs.int("axis").unwrap_or(0), first.rank())?;
    let mut shape = first.shape.clone();
    shape[axis] = tensors.iter().map(|t| t.shape[axis]).sum();
    for t in &tensors {
        let mut s = t.shape.clone();
        s[axis] = shape[axis];
        if s != shape || t.dtype != first.dtype {
            return Err(runtime("concat fields disagree in shape or data type"));
        }
    }
    let (outer, _, inner) = around(&shape, axis);
    // Interleave source (tensor, flat index) pairs in output order.
    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for (ti, t) in tensors.iter().enumerate() {
            let len = t.shape[axis] * inner;
            picks.extend((0..len).map(|k| (ti, o * len + k)));
        }
    }
    let data = match &first.data {
        Buffer::Float(_) => Buffer::Float(picks.iter().map(|&(t, i)| tensors[t].data.get_f64(i)).collect()),
        Buffer::Int(_) => Buffer::Int(
            picks
                .iter()
                .map(|&(t, i)| match &tensors[t].data {
                    Buffer::Int(v) => v[i],
                    _ => 0,
                })
                .collect(),
        ),
        Buffer::Bool(_) => Buffer::Bool(
            picks
                .iter()
                .map(|&(t, i)| match &tensors[t].data {
                    Buffer::Bool(v) => v[i],
                    _ => false,
                })
                .collect(),
        ),
    };
    out(Tensor { shape, dtype: first.dtype, data })
}

fn split(args: &[Value], attrs: &Attrs) -> KResult {
    let x = tensor_arg(args, 0)?;
    let axis = normalize_axis(attrs.int("axis").unwrap_or(0), x.rank())?;
    let (outer, extent, inner) = around(&x.shape, axis);
    let bounds = split_bounds(attrs, extent as u64).map_err(runtime)?;
    let mut parts = Vec::with_capacity(bounds.len());
    for (s, e) in bounds {
        let (s, e) = (s as usize, e as usize);
        let mut idx = Vec::with_capacity(outer * (e - s) * inner);
        for o in 0..outer {
            idx.extend((o * extent + s) * inner..(o * extent + e) * inner);
        }
        let mut shape = x.shape.clone();
        shape[axis] = e - s;
        parts.push(Value::tensor(Tensor { shape, dtype: x.dtype, data: gather(&x.data, &idx) }));
    }
    Ok(Value::Tuple(parts))
}

pub(super) fn register_builtin(reg: &mut OpRegistry) {
    use AttrKind as K;
    use FusionPattern as P;
    let mut decls: Vec<OperatorDecl> = Vec::new();
    for (name, op) in [("add", Bin::Add), ("subtract", Bin::Sub), ("multiply", Bin::Mul), ("divide", Bin::Div), ("min", Bin::Min), ("max", Bin::Max)] {
        decls.push(OperatorDecl::new(name, 2, "Broadcast", P::Broadcast, binary(op)));
    }
    for (name, op) in [
        ("equal", Bin::Eq),
        ("not_equal", Bin::Ne),
        ("less", Bin::Lt),
        ("greater", Bin::Gt),
        ("less_equal", Bin::Le),
        ("greater_equal", Bin::Ge),
    ] {
        decls.push(OperatorDecl::new(name, 2, "BroadcastCompare", P::Broadcast, binary(op)));
    }
    decls.push(OperatorDecl::new("logical_and", 2, "Logical", P::Broadcast, binary(Bin::And)));
    decls.push(OperatorDecl::new("logical_or", 2, "Logical", P::Broadcast, binary(Bin::Or)));
    decls.push(OperatorDecl::new("logical_not", 1, "LogicalNot", P::Elementwise, unary("logical_not")));
    for name in ["negative", "relu", "abs", "round"] {
        decls.push(OperatorDecl::new(name, 1, "Identity", P::Elementwise, unary(name)));
    }
    for name in ["exp", "tanh", "sigmoid"] {
        decls.push(OperatorDecl::new(name, 1, "FloatIdentity", P::Elementwise, unary(name)));
    }
    decls.push(OperatorDecl::new("clip", 1, "Clip", P::Elementwise, unary("clip")).attr("a_min", K::Float).attr("a_max", K::Float));
    decls.push(OperatorDecl::new("cast", 1, "Cast", P::Elementwise, unary("cast")).attr("dtype", K::Str));
    decls.push(
        OperatorDecl::new("simulated_quantize", 1, "SimulatedQuantize", P::Elementwise, unary("simulated_quantize"))
            .attr("bits", K::Int)
            .attr("sign", K::Int)
            .attr("scale", K::Float),
    );
    decls.push(OperatorDecl::new("reshape", 1, "Reshape", P::Injective, reshape).attr("newshape", K::Ints));
    decls.push(OperatorDecl::new("transpose", 1, "Transpose", P::Injective, transpose).attr("axes", K::Ints));
    decls.push(OperatorDecl::new("squeeze", 1, "Squeeze", P::Injective, squeeze).attr("axis", K::Ints));
    decls.push(
        OperatorDecl::new("expand_dims", 1, "ExpandDims", P::Injective, expand_dims)
            .attr("axis", K::Int)
            .attr("num_newaxis", K::Int),
    );
    for (name, kind) in [("sum", Red::Sum), ("max_reduce", Red::Max), ("min_reduce", Red::Min)] {
        decls.push(
            OperatorDecl::new(name, 1, "Reduce", P::Reduction, reduce(kind))
                .attr("axis", K::IntOrInts)
                .attr("keepdims", K::Bool),
        );
    }
    decls.push(OperatorDecl::new("argmax", 1, "ArgReduce", P::Reduction, argmax).attr("axis", K::Int).attr("keepdims", K::Bool));
    decls.push(OperatorDecl::new("dense", 2, "Dense", P::ComplexOutFusable, dense).attr("out_dtype", K::Str));
    decls.push(
        OperatorDecl::new("conv2d", 2, "Conv2D", P::ComplexOutFusable, conv2d)
            .attr("strides", K::IntOrInts)
            .attr("padding", K::IntOrInts)
            .attr("dilation", K::IntOrInts)
            .attr("groups", K::Int)
            .attr("data_layout", K::Str)
            .attr("kernel_layout", K::Str)
            .attr("out_dtype", K::Str),
    );
    decls.push(OperatorDecl::new("bias_add", 2, "BiasAdd", P::Broadcast, bias_add).attr("axis", K::Int));
    decls.push(OperatorDecl::new("concat", 1, "Concat", P::Injective, concat).attr("axis", K::Int));
    decls.push(
        OperatorDecl::new("split", 1, "Split", P::Opaque, split)
            .attr("indices_or_sections", K::IntOrInts)
            .attr("axis", K::Int),
    );
    for d in decls {
        reg.register_op(d).expect("builtin operators are unique");
    }
}
