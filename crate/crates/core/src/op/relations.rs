//! Builtin type relations.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::OpRegistry;
use crate::attrs::Attrs;
use crate::dtype::BaseType;
use crate::ty::{Dim, TensorType, Type};

type Deduced = Result<Vec<(usize, Type)>, String>;

/// Structural type equality where `Any` matches every dimension.
pub fn types_compatible(a: &Type, b: &Type) -> bool {
    match (a, b) {
        (Type::Tensor(x), Type::Tensor(y)) => {
            x.dtype == y.dtype
                && x.shape.len() == y.shape.len()
                && x.shape.iter().zip(&y.shape).all(|(p, q)| dims_compatible(p, q))
        }
        (Type::Tuple(xs), Type::Tuple(ys)) => xs.len() == ys.len() && xs.iter().zip(ys).all(|(p, q)| types_compatible(p, q)),
        (Type::Func(f), Type::Func(g)) => {
            f.args.len() == g.args.len()
                && f.args.iter().zip(&g.args).all(|(p, q)| types_compatible(p, q))
                && types_compatible(&f.ret, &g.ret)
        }
        (Type::Ref(x), Type::Ref(y)) => types_compatible(x, y),
        (Type::Call { head: h1, args: a1 }, Type::Call { head: h2, args: a2 }) => {
            h1 == h2 && a1.len() == a2.len() && a1.iter().zip(a2).all(|(p, q)| types_compatible(p, q))
        }
        _ => a == b,
    }
}

pub fn dims_compatible(a: &Dim, b: &Dim) -> bool {
    matches!(a, Dim::Any) || matches!(b, Dim::Any) || a == b
}

/// The tensor type in slot `i`, `None` while it is still unknown.
fn tensor_slot<'a>(types: &'a [Type], i: usize, what: &str) -> Result<Option<&'a TensorType>, String> {
    match types.get(i) {
        Some(Type::Tensor(t)) => Ok(Some(t)),
        Some(Type::Infer(_)) => Ok(None),
        Some(other) => Err(format!("{what} must be a tensor, found {other}")),
        None => Err(format!("missing argument {i}")),
    }
}

fn has_unknown_dim(t: &TensorType) -> bool {
    t.shape.iter().any(|d| matches!(d, Dim::Infer(_)))
}

/// Right-aligned broadcast of one aligned dimension pair. `Ok(None)` means
/// the answer depends on unresolved dimensions.
fn broadcast_dim(a: &Dim, b: &Dim) -> Result<Option<Dim>, String> {
    Ok(Some(match (a, b) {
        (Dim::Const(1), other) | (other, Dim::Const(1)) => {
            if matches!(other, Dim::Infer(_)) {
                return Ok(None);
            }
            other.clone()
        }
        (Dim::Infer(_), _) | (_, Dim::Infer(_)) => return Ok(None),
        (Dim::Any, _) | (_, Dim::Any) => Dim::Any,
        (x, y) if x == y => x.clone(),
        (x, y) => return Err(format!("incompatible broadcast dimensions {x} and {y}")),
    }))
}

pub(crate) fn broadcast_shape(a: &[Dim], b: &[Dim]) -> Result<Option<Vec<Dim>>, String> {
    let rank = a.len().max(b.len());
    let one = Dim::Const(1);
    let mut out = Vec::with_capacity(rank);
    let mut known = true;
    for i in 0..rank {
        let da = if i < rank - a.len() { &one } else { &a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { &one } else { &b[i - (rank - b.len())] };
        match broadcast_dim(da, db)? {
            Some(d) => out.push(d),
            None => known = false,
        }
    }
    Ok(known.then_some(out))
}

fn broadcast_rel(types: &[Type], out_dtype: Option<BaseType>, need_bool: bool) -> Deduced {
    let (Some(a), Some(b)) = (tensor_slot(types, 0, "lhs")?, tensor_slot(types, 1, "rhs")?) else {
        return Ok(Vec::new());
    };
    if a.dtype != b.dtype {
        return Err(format!("operand data types differ: {} vs {}", a.dtype, b.dtype));
    }
    if need_bool && !a.dtype.is_bool() {
        return Err(format!("logical operator needs bool operands, found {}", a.dtype));
    }
    match broadcast_shape(&a.shape, &b.shape)? {
        Some(shape) => Ok(vec![(2, Type::tensor(shape, out_dtype.unwrap_or(a.dtype)))]),
        None => Ok(Vec::new()),
    }
}

fn identity_rel(types: &[Type], float_only: bool) -> Deduced {
    let Some(x) = tensor_slot(types, 0, "input")? else { return Ok(Vec::new()) };
    if float_only && !x.dtype.is_float() {
        return Err(format!("operator requires a float input, found {}", x.dtype));
    }
    Ok(vec![(1, Type::Tensor(x.clone()))])
}

fn normalize_axis(axis: i64, rank: usize) -> Result<usize, String> {
    let r = rank as i64;
    let a = if axis < 0 { axis + r } else { axis };
    if a < 0 || a >= r {
        Err(format!("axis {axis} out of range for rank {rank}"))
    } else {
        Ok(a as usize)
    }
}

fn cast_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let Some(x) = tensor_slot(types, 0, "input")? else { return Ok(Vec::new()) };
    let dtype = parse_dtype_attr(attrs, "dtype")?.ok_or_else(|| String::from("cast requires a `dtype` attribute"))?;
    Ok(vec![(1, Type::tensor(x.shape.clone(), dtype))])
}

pub(crate) fn parse_dtype_attr(attrs: &Attrs, key: &str) -> Result<Option<BaseType>, String> {
    match attrs.str(key) {
        Some(s) => s.parse::<BaseType>().map(Some).map_err(|e| format!("{e}")),
        None => Ok(None),
    }
}

fn reshape_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let Some(x) = tensor_slot(types, 0, "input")? else { return Ok(Vec::new()) };
    if has_unknown_dim(x) {
        return Ok(Vec::new());
    }
    let newshape = attrs.ints("newshape").ok_or_else(|| String::from("reshape requires `newshape`"))?;
    if newshape.iter().filter(|&&d| d == -1).count() > 1 || newshape.iter().any(|&d| d < -1) {
        return Err(format!("invalid newshape {newshape:?}"));
    }
    let extents: Option<Vec<u64>> = x.shape.iter().map(Dim::as_const).collect();
    let out: Vec<Dim> = match extents {
        Some(ext) => {
            let total: u64 = ext.iter().product();
            let known: u64 = newshape.iter().filter(|&&d| d != -1).map(|&d| d as u64).product();
            let mut dims = Vec::new();
            for &d in &newshape {
                if d == -1 {
                    if known == 0 || total % known != 0 {
                        return Err(format!("cannot infer -1 in newshape {newshape:?} for {total} elements"));
                    }
                    dims.push(Dim::Const(total / known));
                } else {
                    dims.push(Dim::Const(d as u64));
                }
            }
            let new_total: u64 = dims.iter().filter_map(Dim::as_const).product();
            if new_total != total {
                return Err(format!("cannot reshape {total} elements into {newshape:?}"));
            }
            dims
        }
        None => newshape.iter().map(|&d| if d == -1 { Dim::Any } else { Dim::Const(d as u64) }).collect(),
    };
    Ok(vec![(1, Type::tensor(out, x.dtype))])
}

fn transpose_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let Some(x) = tensor_slot(types, 0, "input")? else { return Ok(Vec::new()) };
    let rank = x.shape.len();
    let axes: Vec<usize> = match attrs.ints("axes") {
        Some(a) => a.iter().map(|&v| normalize_axis(v, rank)).collect::<Result<_, _>>()?,
        None => (0..rank).rev().collect(),
    };
    let mut seen = vec![false; rank];
    if axes.len() != rank {
        return Err(format!("transpose axes {axes:?} do not match rank {rank}"));
    }
    for &a in &axes {
        if seen[a] {
            return Err(format!("transpose axes {axes:?} repeat an axis"));
        }
        seen[a] = true;
    }
    let shape = axes.iter().map(|&a| x.shape[a].clone()).collect();
    Ok(vec![(1, Type::tensor(shape, x.dtype))])
}

fn squeeze_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let Some(x) = tensor_slot(types, 0, "input")? else { return Ok(Vec::new()) };
    let rank = x.shape.len();
    let shape = match attrs.ints("axis") {
        Some(axes) => {
            let axes: Vec<usize> = axes.iter().map(|&a| normalize_axis(a, rank)).collect::<Result<_, _>>()?;
            for &a in &axes {
                match &x.shape[a] {
                    Dim::Const(1) | Dim::Any => {}
                    Dim::Infer(_) => return Ok(Vec::new()),
                    d => return Err(format!("cannot squeeze axis {a} of extent {d}")),
                }
            }
            x.shape.iter().enumerate().filter(|(i, _)| !axes.contains(i)).map(|(_, d)| d.clone()).collect()
        }
        None => {
            if has_unknown_dim(x) {
                return Ok(Vec::new());
            }
            x.shape.iter().filter(|d| **d != Dim::Const(1)).cloned().collect()
        }
    };
    Ok(vec![(1, Type::tensor(shape, x.dtype))])
}

fn expand_dims_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let Some(x) = tensor_slot(types, 0, "input")? else { return Ok(Vec::new()) };
    let rank = x.shape.len();
    let axis = attrs.int("axis").ok_or_else(|| String::from("expand_dims requires `axis`"))?;
    let axis = normalize_axis(axis, rank + 1)?;
    let n = attrs.int("num_newaxis").unwrap_or(1);
    if n < 0 {
        return Err(String::from("num_newaxis must be non-negative"));
    }
    let mut shape = x.shape.clone();
    for _ in 0..n {
        shape.insert(axis, Dim::Const(1));
    }
    Ok(vec![(1, Type::tensor(shape, x.dtype))])
}

/// Axes reduced by a reduction, given optional `axis` attribute.
pub(crate) fn reduce_axes(attrs: &Attrs, rank: usize) -> Result<Vec<usize>, String> {
    match attrs.ints("axis") {
        Some(axes) => {
            let mut out: Vec<usize> = axes.iter().map(|&a| normalize_axis(a, rank)).collect::<Result<_, _>>()?;
            out.sort_unstable();
            out.dedup();
            Ok(out)
        }
        None => Ok((0..rank).collect()),
    }
}

fn reduce_shape(x: &TensorType, axes: &[usize], keepdims: bool) -> Vec<Dim> {
    let mut shape = Vec::new();
    for (i, d) in x.shape.iter().enumerate() {
        if axes.contains(&i) {
            if keepdims {
                shape.push(Dim::Const(1));
            }
        } else {
            shape.push(d.clone());
        }
    }
    shape
}

fn reduce_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let Some(x) = tensor_slot(types, 0, "input")? else { return Ok(Vec::new()) };
    let axes = reduce_axes(attrs, x.shape.len())?;
    let shape = reduce_shape(x, &axes, attrs.flag("keepdims"));
    Ok(vec![(1, Type::tensor(shape, x.dtype))])
}

fn arg_reduce_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let Some(x) = tensor_slot(types, 0, "input")? else { return Ok(Vec::new()) };
    let axes = match attrs.int("axis") {
        Some(a) => vec![normalize_axis(a, x.shape.len())?],
        None => (0..x.shape.len()).collect(),
    };
    let shape = reduce_shape(x, &axes, attrs.flag("keepdims"));
    Ok(vec![(1, Type::tensor(shape, BaseType::I32))])
}

fn dims_must_match(a: &Dim, b: &Dim, what: &str) -> Result<bool, String> {
    match (a, b) {
        (Dim::Infer(_), _) | (_, Dim::Infer(_)) => Ok(false),
        (x, y) if dims_compatible(x, y) => Ok(true),
        (x, y) => Err(format!("{what} mismatch: {x} vs {y}")),
    }
}

fn dense_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let (Some(data), Some(weight)) = (tensor_slot(types, 0, "data")?, tensor_slot(types, 1, "weight")?) else {
        return Ok(Vec::new());
    };
    if data.shape.is_empty() || weight.shape.len() != 2 {
        return Err(format!("dense expects data of rank >= 1 and a rank-2 weight, found {} and {}", Type::Tensor(data.clone()), Type::Tensor(weight.clone())));
    }
    if data.dtype != weight.dtype {
        return Err(format!("dense operand data types differ: {} vs {}", data.dtype, weight.dtype));
    }
    if !dims_must_match(data.shape.last().unwrap(), &weight.shape[1], "dense reduction dimension")? {
        return Ok(Vec::new());
    }
    let mut shape = data.shape[..data.shape.len() - 1].to_vec();
    shape.push(weight.shape[0].clone());
    let dtype = parse_dtype_attr(attrs, "out_dtype")?.unwrap_or(data.dtype);
    Ok(vec![(2, Type::tensor(shape, dtype))])
}

/// Normalized conv2d attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ConvParams {
    pub strides: [u64; 2],
    /// top, left, bottom, right
    pub padding: [u64; 4],
    pub nhwc: bool,
    pub hwio: bool,
}

pub(crate) fn conv_params(attrs: &Attrs) -> Result<ConvParams, String> {
    let pair = |key: &str| -> Result<[u64; 2], String> {
        match attrs.ints(key) {
            None => Ok([1, 1]),
            Some(v) if v.len() == 1 && v[0] > 0 => Ok([v[0] as u64, v[0] as u64]),
            Some(v) if v.len() == 2 && v.iter().all(|&x| x > 0) => Ok([v[0] as u64, v[1] as u64]),
            Some(v) => Err(format!("invalid {key} {v:?}")),
        }
    };
    let strides = pair("strides")?;
    if pair("dilation")? != [1, 1] {
        return Err(String::from("only dilation (1, 1) is supported"));
    }
    if attrs.int("groups").unwrap_or(1) != 1 {
        return Err(String::from("only groups = 1 is supported"));
    }
    let padding = match attrs.ints("padding") {
        None => [0; 4],
        Some(v) if v.iter().any(|&x| x < 0) => return Err(format!("negative padding {v:?}")),
        Some(v) if v.len() == 1 => [v[0] as u64; 4],
        Some(v) if v.len() == 2 => [v[0] as u64, v[1] as u64, v[0] as u64, v[1] as u64],
        Some(v) if v.len() == 4 => [v[0] as u64, v[1] as u64, v[2] as u64, v[3] as u64],
        Some(v) => return Err(format!("invalid padding {v:?}")),
    };
    let nhwc = match attrs.str("data_layout").unwrap_or("NCHW") {
        "NCHW" => false,
        "NHWC" => true,
        other => return Err(format!("unsupported data layout {other}")),
    };
    let hwio = match attrs.str("kernel_layout").unwrap_or(if nhwc { "HWIO" } else { "OIHW" }) {
        "OIHW" => false,
        "HWIO" => true,
        other => return Err(format!("unsupported kernel layout {other}")),
    };
    Ok(ConvParams { strides, padding, nhwc, hwio })
}

fn conv_out_dim(input: &Dim, kernel: &Dim, pad: u64, stride: u64) -> Result<Option<Dim>, String> {
    Ok(Some(match (input, kernel) {
        (Dim::Infer(_), _) | (_, Dim::Infer(_)) => return Ok(None),
        (Dim::Const(h), Dim::Const(k)) => {
            let padded = h + pad;
            if padded < *k {
                return Err(format!("kernel extent {k} exceeds padded input extent {padded}"));
            }
            Dim::Const((padded - k) / stride + 1)
        }
        // Arithmetic on symbolic extents is not representable.
        _ => Dim::Any,
    }))
}

fn conv2d_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let (Some(data), Some(weight)) = (tensor_slot(types, 0, "data")?, tensor_slot(types, 1, "weight")?) else {
        return Ok(Vec::new());
    };
    if data.shape.len() != 4 || weight.shape.len() != 4 {
        return Err(String::from("conv2d expects rank-4 data and weight"));
    }
    if data.dtype != weight.dtype {
        return Err(format!("conv2d operand data types differ: {} vs {}", data.dtype, weight.dtype));
    }
    let p = conv_params(attrs)?;
    let (n, c, h, w) = if p.nhwc {
        (&data.shape[0], &data.shape[3], &data.shape[1], &data.shape[2])
    } else {
        (&data.shape[0], &data.shape[1], &data.shape[2], &data.shape[3])
    };
    let (o, i, kh, kw) = if p.hwio {
        (&weight.shape[3], &weight.shape[2], &weight.shape[0], &weight.shape[1])
    } else {
        (&weight.shape[0], &weight.shape[1], &weight.shape[2], &weight.shape[3])
    };
    if !dims_must_match(c, i, "conv2d input channels")? {
        return Ok(Vec::new());
    }
    let (Some(oh), Some(ow)) = (
        conv_out_dim(h, kh, p.padding[0] + p.padding[2], p.strides[0])?,
        conv_out_dim(w, kw, p.padding[1] + p.padding[3], p.strides[1])?,
    ) else {
        return Ok(Vec::new());
    };
    let shape = if p.nhwc {
        vec![n.clone(), oh, ow, o.clone()]
    } else {
        vec![n.clone(), o.clone(), oh, ow]
    };
    let dtype = parse_dtype_attr(attrs, "out_dtype")?.unwrap_or(data.dtype);
    Ok(vec![(2, Type::tensor(shape, dtype))])
}

fn bias_add_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let (Some(data), Some(bias)) = (tensor_slot(types, 0, "data")?, tensor_slot(types, 1, "bias")?) else {
        return Ok(Vec::new());
    };
    if data.dtype != bias.dtype {
        return Err(format!("bias_add operand data types differ: {} vs {}", data.dtype, bias.dtype));
    }
    if bias.shape.len() != 1 {
        return Err(String::from("bias must be rank 1"));
    }
    let axis = normalize_axis(attrs.int("axis").unwrap_or(1), data.shape.len())?;
    if !dims_must_match(&data.shape[axis], &bias.shape[0], "bias length")? {
        return Ok(Vec::new());
    }
    Ok(vec![(2, Type::Tensor(data.clone()))])
}

fn concat_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let fields = match &types[0] {
        Type::Tuple(f) => f,
        Type::Infer(_) => return Ok(Vec::new()),
        other => return Err(format!("concat expects a tuple of tensors, found {other}")),
    };
    if fields.is_empty() {
        return Err(String::from("concat of an empty tuple"));
    }
    let mut tensors = Vec::new();
    for f in fields {
        match f {
            Type::Tensor(t) => tensors.push(t),
            Type::Infer(_) => return Ok(Vec::new()),
            other => return Err(format!("concat field must be a tensor, found {other}")),
        }
    }
    let first = tensors[0];
    let rank = first.shape.len();
    let axis = normalize_axis(attrs.int("axis").unwrap_or(0), rank)?;
    let mut total = Some(0u64);
    let mut any = false;
    for t in &tensors {
        if t.shape.len() != rank || t.dtype != first.dtype {
            return Err(String::from("concat fields must share rank and data type"));
        }
        for (i, (a, b)) in t.shape.iter().zip(&first.shape).enumerate() {
            if i != axis && !dims_must_match(a, b, "concat non-axis dimension")? {
                return Ok(Vec::new());
            }
        }
        match &t.shape[axis] {
            Dim::Const(v) => total = total.map(|s| s + v),
            Dim::Infer(_) => return Ok(Vec::new()),
            _ => any = true,
        }
    }
    let mut shape = first.shape.clone();
    shape[axis] = if any { Dim::Any } else { Dim::Const(total.unwrap_or(0)) };
    Ok(vec![(1, Type::tensor(shape, first.dtype))])
}

/// Boundaries of split sections along an axis of extent `extent`.
pub(crate) fn split_bounds(attrs: &Attrs, extent: u64) -> Result<Vec<(u64, u64)>, String> {
    let spec = attrs.get("indices_or_sections").ok_or_else(|| String::from("split requires `indices_or_sections`"))?;
    let mut cuts = Vec::new();
    match spec {
        crate::attrs::AttrValue::Int(n) => {
            let n = *n as u64;
            if n == 0 || extent % n != 0 {
                return Err(format!("cannot split extent {extent} into {n} equal sections"));
            }
            for k in 1..n {
                cuts.push(k * extent / n);
            }
        }
        other => {
            let idx = other.as_ints().ok_or_else(|| String::from("invalid indices_or_sections"))?;
            let mut prev = 0;
            for &i in &idx {
                if i < prev as i64 || i as u64 > extent {
                    return Err(format!("invalid split indices {idx:?} for extent {extent}"));
                }
                prev = i as u64;
                cuts.push(i as u64);
            }
        }
    }
    let mut bounds = Vec::new();
    let mut start = 0;
    for c in cuts {
        bounds.push((start, c));
        start = c;
    }
    bounds.push((start, extent));
    Ok(bounds)
}

fn split_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let Some(x) = tensor_slot(types, 0, "input")? else { return Ok(Vec::new()) };
    let axis = normalize_axis(attrs.int("axis").unwrap_or(0), x.shape.len())?;
    let extent = match &x.shape[axis] {
        Dim::Const(v) => *v,
        Dim::Infer(_) => return Ok(Vec::new()),
        _ => return Err(String::from("split axis must have a static extent")),
    };
    let fields = split_bounds(attrs, extent)?
        .into_iter()
        .map(|(s, e)| {
            let mut shape = x.shape.clone();
            shape[axis] = Dim::Const(e - s);
            Type::tensor(shape, x.dtype)
        })
        .collect();
    Ok(vec![(1, Type::Tuple(fields))])
}

fn tuple_get_item_rel(types: &[Type], attrs: &Attrs) -> Deduced {
    let index = attrs.int("index").unwrap_or(0) as usize;
    match &types[0] {
        Type::Tuple(fields) => match fields.get(index) {
            Some(t) => Ok(vec![(1, t.clone())]),
            None => Err(format!("projection .{index} out of range for {}-tuple", fields.len())),
        },
        Type::Infer(_) => Ok(Vec::new()),
        other => Err(format!("projection from non-tuple {other}")),
    }
}

fn simq_rel(types: &[Type], _attrs: &Attrs) -> Deduced {
    identity_rel(types, true)
}

pub(super) fn register_builtin(reg: &mut OpRegistry) {
    let rels: [(&str, fn(&[Type], &Attrs) -> Deduced); 21] = [
        ("Identity", |t, _| identity_rel(t, false)),
        ("FloatIdentity", |t, _| identity_rel(t, true)),
        ("Broadcast", |t, _| broadcast_rel(t, None, false)),
        ("BroadcastCompare", |t, _| broadcast_rel(t, Some(BaseType::BOOL), false)),
        ("Logical", |t, _| broadcast_rel(t, Some(BaseType::BOOL), true)),
        ("LogicalNot", |t, _| {
            let Some(x) = tensor_slot(t, 0, "input")? else { return Ok(Vec::new()) };
            if !x.dtype.is_bool() {
                return Err(format!("logical_not needs a bool input, found {}", x.dtype));
            }
            Ok(vec![(1, Type::Tensor(x.clone()))])
        }),
        ("Cast", cast_rel),
        ("Reshape", reshape_rel),
        ("Transpose", transpose_rel),
        ("Squeeze", squeeze_rel),
        ("ExpandDims", expand_dims_rel),
        ("Reduce", reduce_rel),
        ("ArgReduce", arg_reduce_rel),
        ("Dense", dense_rel),
        ("Conv2D", conv2d_rel),
        ("BiasAdd", bias_add_rel),
        ("Concat", concat_rel),
        ("Split", split_rel),
        ("TupleGetItem", tuple_get_item_rel),
        ("SimulatedQuantize", simq_rel),
        ("Clip", |t, a| {
            if a.float("a_min").is_none() || a.float("a_max").is_none() {
                return Err(String::from("clip requires `a_min` and `a_max`"));
            }
            identity_rel(t, false)
        }),
    ];
    for (name, f) in rels {
        reg.register_relation(name, f).expect("builtin relation names are unique");
    }
}
