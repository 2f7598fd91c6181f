//! Dense row-major tensors used both as IR constants and runtime values.

use alloc::vec;
use alloc::vec::Vec;

use crate::dtype::{BaseType, TypeCode};
use crate::ty::{const_shape, Type};

/// Element storage. Integers of every width live in `Int` (wrapped to their
/// declared width); every float width lives in `Float`.
#[derive(Debug, Clone)]
pub enum Buffer {
    Float(Vec<f64>),
    Int(Vec<i64>),
    Bool(Vec<bool>),
}

impl Buffer {
    pub fn len(&self) -> usize {
        match self {
            Buffer::Float(v) => v.len(),
            Buffer::Int(v) => v.len(),
            Buffer::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value of element `i` widened to f64.
    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            Buffer::Float(v) => v[i],
            Buffer::Int(v) => v[i] as f64,
            Buffer::Bool(v) => v[i] as u8 as f64,
        }
    }
}

/// Bitwise equality: floats compare by bit pattern so NaN payloads and
/// signed zeros are distinguished.
impl PartialEq for Buffer {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Buffer::Float(a), Buffer::Float(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Buffer::Int(a), Buffer::Int(b)) => a == b,
            (Buffer::Bool(a), Buffer::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Buffer {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub dtype: BaseType,
    pub data: Buffer,
}

/// Rounds a float to the precision of `dtype`.
pub fn normalize_float(v: f64, dtype: BaseType) -> f64 {
    if dtype.bits() >= 64 {
        v
    } else {
        v as f32 as f64
    }
}

/// Wraps an integer to the width and signedness of `dtype`.
pub fn normalize_int(v: i64, dtype: BaseType) -> i64 {
    let bits = dtype.bits();
    if bits >= 64 {
        return v;
    }
    match dtype.code() {
        TypeCode::UInt => v & ((1i64 << bits) - 1),
        _ => {
            let shift = 64 - bits;
            (v << shift) >> shift
        }
    }
}

/// Round half to even.
pub fn round_half_even(v: f64) -> f64 {
    libm::rint(v)
}

impl Tensor {
    /// Builds a tensor, normalizing the buffer to `dtype`. The caller is
    /// responsible for the length matching the shape; see [`Tensor::is_consistent`].
    pub fn new(shape: Vec<usize>, dtype: BaseType, data: Buffer) -> Tensor {
        let data = match (dtype.code(), data) {
            (TypeCode::Float, Buffer::Float(v)) => Buffer::Float(v.into_iter().map(|x| normalize_float(x, dtype)).collect()),
            (TypeCode::Float, other) => Buffer::Float((0..other.len()).map(|i| normalize_float(other.get_f64(i), dtype)).collect()),
            (TypeCode::Int | TypeCode::UInt, Buffer::Int(v)) => Buffer::Int(v.into_iter().map(|x| normalize_int(x, dtype)).collect()),
            (TypeCode::Int | TypeCode::UInt, Buffer::Float(v)) => {
                Buffer::Int(v.into_iter().map(|x| normalize_int(float_to_int(x), dtype)).collect())
            }
            (TypeCode::Int | TypeCode::UInt, Buffer::Bool(v)) => Buffer::Int(v.into_iter().map(|b| b as i64).collect()),
            (TypeCode::Bool, Buffer::Bool(v)) => Buffer::Bool(v),
            (TypeCode::Bool, Buffer::Int(v)) => Buffer::Bool(v.into_iter().map(|x| x != 0).collect()),
            (TypeCode::Bool, Buffer::Float(v)) => Buffer::Bool(v.into_iter().map(|x| x != 0.0).collect()),
        };
        Tensor { shape, dtype, data }
    }

    pub fn from_f64(shape: Vec<usize>, dtype: BaseType, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, dtype, Buffer::Float(data))
    }

    pub fn from_i64(shape: Vec<usize>, dtype: BaseType, data: Vec<i64>) -> Tensor {
        Tensor::new(shape, dtype, Buffer::Int(data))
    }

    pub fn from_bool(shape: Vec<usize>, data: Vec<bool>) -> Tensor {
        Tensor::new(shape, BaseType::BOOL, Buffer::Bool(data))
    }

    pub fn scalar_f32(v: f32) -> Tensor {
        Tensor::from_f64(Vec::new(), BaseType::F32, vec![v as f64])
    }

    pub fn scalar_i32(v: i32) -> Tensor {
        Tensor::from_i64(Vec::new(), BaseType::I32, vec![v as i64])
    }

    pub fn scalar_bool(v: bool) -> Tensor {
        Tensor::from_bool(Vec::new(), vec![v])
    }

    pub fn zeros(shape: Vec<usize>, dtype: BaseType) -> Tensor {
        let n = shape.iter().product();
        let data = match dtype.code() {
            TypeCode::Float => Buffer::Float(vec![0.0; n]),
            TypeCode::Int | TypeCode::UInt => Buffer::Int(vec![0; n]),
            TypeCode::Bool => Buffer::Bool(vec![false; n]),
        };
        Tensor { shape, dtype, data }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn num_elements(&self) -> usize {
        self.shape.iter().product()
    }

    /// Length invariant plus storage/dtype agreement.
    pub fn is_consistent(&self) -> bool {
        let storage_ok = matches!(
            (self.dtype.code(), &self.data),
            (TypeCode::Float, Buffer::Float(_))
                | (TypeCode::Int | TypeCode::UInt, Buffer::Int(_))
                | (TypeCode::Bool, Buffer::Bool(_))
        );
        storage_ok && self.dtype.lanes() == 1 && self.data.len() == self.num_elements()
    }

    pub fn ty(&self) -> Type {
        Type::tensor(const_shape(&self.shape), self.dtype)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        (0..self.data.len()).map(|i| self.data.get_f64(i)).collect()
    }

    /// Scalar truth value of a 0-d or 1-element bool tensor.
    pub fn as_bool_scalar(&self) -> Option<bool> {
        match &self.data {
            Buffer::Bool(v) if v.len() == 1 => Some(v[0]),
            _ => None,
        }
    }

    pub fn as_i64_scalar(&self) -> Option<i64> {
        match &self.data {
            Buffer::Int(v) if v.len() == 1 => Some(v[0]),
            _ => None,
        }
    }

    pub fn cast(&self, dtype: BaseType) -> Tensor {
        let data = match (&self.data, dtype.code()) {
            (Buffer::Float(v), TypeCode::Int | TypeCode::UInt) => {
                Buffer::Int(v.iter().map(|&x| float_to_int(x)).collect())
            }
            (d, _) => d.clone(),
        };
        Tensor::new(self.shape.clone(), dtype, data)
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Tensor {
        Tensor { shape, dtype: self.dtype, data: self.data.clone() }
    }
}

/// Saturating float to integer conversion (truncates toward zero, NaN → 0).
pub fn float_to_int(x: f64) -> i64 {
    if x.is_nan() {
        0
    } else {
        x as i64
    }
}

/// Row-major strides of a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        out[i] = acc;
        acc *= shape[i];
    }
    out
}

/// Right-aligned numpy broadcasting of two concrete shapes.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return None;
        };
    }
    Some(out)
}

/// Maps every flat index of `out_shape` to the flat index of a tensor with
/// shape `in_shape` broadcast against it.
pub fn broadcast_index_map(in_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let total: usize = out_shape.iter().product();
    let offset = out_shape.len() - in_shape.len();
    let in_strides = strides(in_shape);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..total {
        let mut flat = 0;
        for (k, &s) in in_strides.iter().enumerate() {
            if in_shape[k] != 1 {
                flat += idx[k + offset] * s;
            }
        }
        map.push(flat);
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_wrapping() {
        assert_eq!(normalize_int(128, BaseType::I8), -128);
        assert_eq!(normalize_int(-1, BaseType::U8), 255);
        assert_eq!(normalize_int(300, BaseType::I32), 300);
    }

    #[test]
    fn broadcasting() {
        assert_eq!(broadcast_shapes(&[2, 3], &[1, 3]), Some(vec![2, 3]));
        assert_eq!(broadcast_shapes(&[2, 3], &[4, 3]), None);
        assert_eq!(broadcast_shapes(&[3], &[2, 1]), Some(vec![2, 3]));
        assert_eq!(broadcast_index_map(&[3], &[2, 3]), vec![0, 1, 2, 0, 1, 2]);
        assert_eq!(broadcast_index_map(&[2, 1], &[2, 3]), vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn rounding_is_half_even() {
        assert_eq!(round_half_even(2.5), 2.0);
        assert_eq!(round_half_even(3.5), 4.0);
        assert_eq!(round_half_even(-2.5), -2.0);
        assert_eq!(round_half_even(38.4), 38.0);
    }

    #[test]
    fn length_invariant() {
        let mut t = Tensor::from_i64(vec![2, 2], BaseType::I32, vec![1, 2, 3, 4]);
        assert!(t.is_consistent());
        t.data = Buffer::Int(vec![1, 2, 3]);
        assert!(!t.is_consistent());
    }
}
