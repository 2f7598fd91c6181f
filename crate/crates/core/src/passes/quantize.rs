//! Quantization in three steps: annotate with simulated quantization,
//! calibrate one global scale, realize into integer arithmetic.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::attrs::{AttrValue, Attrs};
use crate::dtype::{BaseType, TypeCode};
use crate::exec::Interpreter;
use crate::expr::{Call, Expr, ExprKind, Function};
use crate::module::Module;
use crate::quant::{clip_bounds, overflows, step_count};
use crate::tensor::Tensor;

use super::util::constant;
use super::PassError;
use crate::exec::Value;

pub const SIMQ: &str = "simulated_quantize";

/// Which operators to quantize and which of their arguments to annotate.
#[derive(Debug, Clone)]
pub struct QuantConfig {
    pub bits: u32,
    pub sign: u32,
    /// Operators to quantize; each needs an entry in `rules`.
    pub ops: Vec<String>,
    /// Argument positions wrapped in simulated quantization, per operator.
    pub rules: BTreeMap<String, Vec<usize>>,
}

impl Default for QuantConfig {
    fn default() -> Self {
        let ops = vec![String::from("conv2d"), String::from("dense")];
        let rules = ops.iter().map(|o| (o.clone(), vec![0, 1])).collect();
        QuantConfig { bits: 8, sign: 1, ops, rules }
    }
}

fn is_simq(e: &Expr) -> bool {
    e.as_op_call().is_some_and(|(name, _)| name == SIMQ)
}

fn rewrite_user(m: &Module, f: &mut dyn FnMut(&Expr) -> Result<Expr, PassError>) -> Result<Module, PassError> {
    let mut out = m.clone();
    for (name, func) in out.globals.iter_mut() {
        if m.prelude_names.contains(name) {
            continue;
        }
        *func = Function { body: f(&func.body)?, ..func.clone() };
    }
    Ok(out)
}

/// Wraps the configured operator arguments in `simulated_quantize` without a
/// scale.
pub fn quant_annotate(m: &Module, cfg: &QuantConfig) -> Result<Module, PassError> {
    fn go(e: &Expr, cfg: &QuantConfig) -> Result<Expr, PassError> {
        let kind = e.try_map_children(&mut |c| go(c, cfg))?;
        let e = e.rebuild(kind);
        let Some((name, call)) = e.as_op_call() else { return Ok(e) };
        if !cfg.ops.iter().any(|o| o == name) {
            return Ok(e);
        }
        let rule = cfg.rules.get(name).ok_or_else(|| PassError::MissingRule(name.to_string()))?;
        let attrs = Attrs::new().with("bits", AttrValue::Int(cfg.bits as i64)).with("sign", AttrValue::Int(cfg.sign as i64));
        let mut call = call.clone();
        for &i in rule {
            if let Some(a) = call.args.get_mut(i) {
                if !is_simq(a) {
                    *a = Expr::call_op(SIMQ, vec![a.clone()], attrs.clone());
                }
            }
        }
        Ok(e.rebuild(ExprKind::Call(call)))
    }
    rewrite_user(m, &mut |e| go(e, cfg))
}

fn set_scale(m: &Module, scale: f64) -> Module {
    fn go(e: &Expr, scale: f64) -> Expr {
        let e = e.map_children(&mut |c| go(c, scale));
        match e.as_op_call() {
            Some((SIMQ, call)) => {
                let mut call = call.clone();
                call.attrs.set("scale", AttrValue::Float(scale));
                e.rebuild(ExprKind::Call(call))
            }
            _ => e,
        }
    }
    rewrite_user(m, &mut |e| Ok(go(e, scale))).expect("scale rewrite is infallible")
}

/// Chooses the smallest power-of-two scale in `2^-16..=2^16` for which no
/// simulated-quantization input on any calibration run rounds outside the
/// integer range, and writes it into every site.
pub fn quant_calibrate(m: &Module, entry: &str, inputs: &[Vec<Value>]) -> Result<Module, PassError> {
    if inputs.is_empty() {
        return Err(PassError::EmptyCalibration);
    }
    for k in -16..=16 {
        let scale = libm::exp2(k as f64);
        let candidate = set_scale(m, scale);
        let mut overflow = false;
        for args in inputs {
            let mut interp = Interpreter::new(&candidate).with_observer(|name, args, attrs, _| {
                if name == SIMQ {
                    let bits = attrs.int("bits").unwrap_or(8) as u32;
                    let sign = attrs.int("sign").unwrap_or(1) as u32;
                    if let Some(t) = args[0].as_tensor() {
                        overflow |= t.as_f64().iter().any(|&x| overflows(x, bits, sign, scale));
                    }
                }
                Ok(())
            });
            interp.run(entry, args.clone())?;
            drop(interp);
            if overflow {
                break;
            }
        }
        if !overflow {
            return Ok(candidate);
        }
    }
    Err(PassError::CalibrationFailed)
}

struct SimQ {
    bits: u32,
    sign: u32,
    scale: f64,
    float: BaseType,
}

fn simq_params(e: &Expr) -> Result<Option<(SimQ, Expr)>, PassError> {
    let Some((SIMQ, call)) = e.as_op_call() else { return Ok(None) };
    let scale = call.attrs.float("scale").ok_or(PassError::Uncalibrated(e.loc()))?;
    let float = call.args[0]
        .ty()
        .or(e.ty())
        .and_then(|t| t.as_tensor())
        .map(|t| t.dtype)
        .filter(|d| d.is_float())
        .unwrap_or(BaseType::F32);
    let p = SimQ {
        bits: call.attrs.int("bits").unwrap_or(8) as u32,
        sign: call.attrs.int("sign").unwrap_or(1) as u32,
        scale,
        float,
    };
    Ok(Some((p, call.args[0].clone())))
}

fn scalar(v: f64, dtype: BaseType) -> Expr {
    constant(Tensor::from_f64(vec![], dtype, vec![v]))
}

fn dtype_attr(d: BaseType) -> AttrValue {
    AttrValue::Str(d.to_string())
}

impl SimQ {
    fn qtype(&self) -> BaseType {
        let code = if self.sign == 1 { TypeCode::Int } else { TypeCode::UInt };
        match self.bits {
            8 | 16 | 32 => BaseType::new(code, self.bits, 1).unwrap_or(BaseType::I32),
            _ => BaseType::I32,
        }
    }

    /// Integer lattice point of `x`: cast(clip(round(x * 2^(bits-sign) / scale))).
    fn quantize(&self, x: Expr) -> Expr {
        let (lo, hi) = clip_bounds(self.bits, self.sign);
        let scaled = Expr::call_op("multiply", vec![x, scalar(step_count(self.bits, self.sign) / self.scale, self.float)], Attrs::new());
        let rounded = Expr::call_op("round", vec![scaled], Attrs::new());
        let clipped = Expr::call_op(
            "clip",
            vec![rounded],
            Attrs::new().with("a_min", AttrValue::Float(lo)).with("a_max", AttrValue::Float(hi)),
        );
        Expr::call_op("cast", vec![clipped], Attrs::new().with("dtype", dtype_attr(self.qtype())))
    }

    fn step(&self) -> f64 {
        self.scale / step_count(self.bits, self.sign)
    }
}

/// Replaces simulated quantization with integer operators. Quantized
/// `dense` and `conv2d` calls accumulate in int32 and are rescaled after.
pub fn quant_realize(m: &Module) -> Result<Module, PassError> {
    fn go(e: &Expr) -> Result<Expr, PassError> {
        if let Some((name @ ("dense" | "conv2d"), call)) = e.as_op_call() {
            if call.args.len() == 2 {
                if let (Some((pa, a)), Some((pb, b))) = (simq_params(&call.args[0])?, simq_params(&call.args[1])?) {
                    let (a, b) = (go(&a)?, go(&b)?);
                    let mut attrs = call.attrs.clone();
                    attrs.set("out_dtype", dtype_attr(BaseType::I32));
                    let acc = Expr::new(ExprKind::Call(Call {
                        callee: Expr::op(name),
                        type_args: Vec::new(),
                        args: vec![pa.quantize(a), pb.quantize(b)],
                        attrs,
                    }));
                    let wide = Expr::call_op("cast", vec![acc], Attrs::new().with("dtype", dtype_attr(pa.float)));
                    return Ok(Expr::with_span(
                        Expr::call_op("multiply", vec![wide, scalar(pa.step() * pb.step(), pa.float)], Attrs::new()).kind().clone(),
                        e.span().cloned(),
                    ));
                }
            }
        }
        if let Some((p, x)) = simq_params(e)? {
            let q = p.quantize(go(&x)?);
            let back = Expr::call_op("cast", vec![q], Attrs::new().with("dtype", dtype_attr(p.float)));
            return Ok(Expr::call_op("multiply", vec![back, scalar(p.step(), p.float)], Attrs::new()));
        }
        Ok(e.rebuild(e.try_map_children(&mut go)?))
    }
    rewrite_user(m, &mut go)
}
