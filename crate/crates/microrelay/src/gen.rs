//! Random runtime values for typed parameters.

use microrelay_core::ty::shape_extents;
use microrelay_core::{Tensor, Type, Value};
use rand::Rng;

/// A random value of type `ty`, or `None` when the type has no concrete
/// tensor shape. Floats are uniform in [-1, 1), integers in [-5, 5].
pub fn random_value(ty: &Type, rng: &mut impl Rng) -> Option<Value> {
    match ty {
        Type::Tensor(tt) => {
            let shape = shape_extents(&tt.shape)?;
            let n: usize = shape.iter().product();
            let t = if tt.dtype.is_float() {
                Tensor::from_f64(shape, tt.dtype, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            } else if tt.dtype.is_bool() {
                Tensor::from_bool(shape, (0..n).map(|_| rng.gen_bool(0.5)).collect())
            } else {
                let lo = if tt.dtype.is_signed() { -5 } else { 0 };
                Tensor::from_i64(shape, tt.dtype, (0..n).map(|_| rng.gen_range(lo..=5)).collect())
            };
            Some(Value::tensor(t))
        }
        Type::Tuple(fields) => fields.iter().map(|f| random_value(f, rng)).collect::<Option<Vec<_>>>().map(Value::Tuple),
        _ => None,
    }
}

/// Random arguments for every parameter of `fn_ty`.
pub fn random_args(fn_ty: &Type, rng: &mut impl Rng) -> Option<Vec<Value>> {
    match fn_ty {
        Type::Func(ft) => ft.args.iter().map(|a| random_value(a, rng)).collect(),
        _ => None,
    }
}
