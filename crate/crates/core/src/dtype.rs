//! Element types of tensors.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

/// Numeric class of a base type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeCode {
    Int,
    UInt,
    Float,
    Bool,
}

/// Scalar element type: class, bit width and vector lanes.
///
/// Tensors may only hold base types, so this is the full set of things a
/// tensor element can be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BaseType {
    code: TypeCode,
    bits: u8,
    lanes: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DTypeError {
    #[error("invalid bit width {0} (expected 1, 8, 16, 32 or 64)")]
    Bits(u32),
    #[error("bool must be 1 bit wide")]
    BoolBits,
    #[error("lanes must be at least 1")]
    Lanes,
    #[error("unknown data type `{0}`")]
    Unknown(String),
}

impl BaseType {
    pub const BOOL: BaseType = BaseType { code: TypeCode::Bool, bits: 1, lanes: 1 };
    pub const I8: BaseType = BaseType { code: TypeCode::Int, bits: 8, lanes: 1 };
    pub const I16: BaseType = BaseType { code: TypeCode::Int, bits: 16, lanes: 1 };
    pub const I32: BaseType = BaseType { code: TypeCode::Int, bits: 32, lanes: 1 };
    pub const I64: BaseType = BaseType { code: TypeCode::Int, bits: 64, lanes: 1 };
    pub const U8: BaseType = BaseType { code: TypeCode::UInt, bits: 8, lanes: 1 };
    pub const U16: BaseType = BaseType { code: TypeCode::UInt, bits: 16, lanes: 1 };
    pub const U32: BaseType = BaseType { code: TypeCode::UInt, bits: 32, lanes: 1 };
    pub const F16: BaseType = BaseType { code: TypeCode::Float, bits: 16, lanes: 1 };
    pub const F32: BaseType = BaseType { code: TypeCode::Float, bits: 32, lanes: 1 };
    pub const F64: BaseType = BaseType { code: TypeCode::Float, bits: 64, lanes: 1 };

    pub fn new(code: TypeCode, bits: u32, lanes: u32) -> Result<Self, DTypeError> {
        if !matches!(bits, 1 | 8 | 16 | 32 | 64) {
            return Err(DTypeError::Bits(bits));
        }
        if (code == TypeCode::Bool) != (bits == 1) {
            return Err(DTypeError::BoolBits);
        }
        if lanes == 0 || lanes > u16::MAX as u32 {
            return Err(DTypeError::Lanes);
        }
        Ok(BaseType { code, bits: bits as u8, lanes: lanes as u16 })
    }

    pub fn code(self) -> TypeCode {
        self.code
    }

    pub fn bits(self) -> u32 {
        self.bits as u32
    }

    pub fn lanes(self) -> u32 {
        self.lanes as u32
    }

    pub fn is_float(self) -> bool {
        self.code == TypeCode::Float
    }

    pub fn is_int(self) -> bool {
        matches!(self.code, TypeCode::Int | TypeCode::UInt)
    }

    pub fn is_bool(self) -> bool {
        self.code == TypeCode::Bool
    }

    pub fn is_signed(self) -> bool {
        matches!(self.code, TypeCode::Int | TypeCode::Float)
    }
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.code {
            TypeCode::Bool => f.write_str("bool")?,
            TypeCode::Int => write!(f, "int{}", self.bits)?,
            TypeCode::UInt => write!(f, "uint{}", self.bits)?,
            TypeCode::Float => write!(f, "float{}", self.bits)?,
        }
        if self.lanes != 1 {
            write!(f, "x{}", self.lanes)?;
        }
        Ok(())
    }
}

impl FromStr for BaseType {
    type Err = DTypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || DTypeError::Unknown(String::from(s));
        let (head, lanes) = match s.rfind('x') {
            Some(pos) if pos > 0 && s[pos + 1..].bytes().all(|b| b.is_ascii_digit()) && pos + 1 < s.len() => {
                (&s[..pos], s[pos + 1..].parse::<u32>().map_err(|_| unknown())?)
            }
            _ => (s, 1),
        };
        if head == "bool" {
            return BaseType::new(TypeCode::Bool, 1, lanes);
        }
        let (code, digits) = if let Some(rest) = head.strip_prefix("uint") {
            (TypeCode::UInt, rest)
        } else if let Some(rest) = head.strip_prefix("int") {
            (TypeCode::Int, rest)
        } else if let Some(rest) = head.strip_prefix("float") {
            (TypeCode::Float, rest)
        } else {
            return Err(unknown());
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(unknown());
        }
        let bits = digits.parse::<u32>().map_err(|_| unknown())?;
        if bits == 1 {
            return Err(DTypeError::Bits(1));
        }
        BaseType::new(code, bits, lanes)
    }
}
