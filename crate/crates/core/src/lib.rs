//! Core of a functional tensor IR: expressions and types, the operator
//! registry, type inference, optimization passes and a reference
//! interpreter. `no_std` with `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod anf;
pub mod attrs;
pub mod dtype;
pub mod exec;
pub mod expr;
pub mod infer;
pub mod module;
pub mod op;
pub mod passes;
pub mod quant;
pub mod tensor;
pub mod ty;
pub mod wellformed;

pub use analysis::{alpha_equal, alpha_equal_fn, free_vars, is_anf, structural_hash};
pub use anf::to_anf;
pub use attrs::{AttrValue, Attrs};
pub use dtype::{BaseType, TypeCode};
pub use exec::{interp, Interpreter, Trap, Value};
pub use expr::{Clause, Expr, ExprKind, Function, Param, Pattern, Span, Var};
pub use module::{AdtDef, Constructor, Module};
pub use op::{FusionPattern, OpRegistry, OperatorDecl};
pub use tensor::{Buffer, Tensor};
pub use ty::{Dim, TensorType, Type};
pub use wellformed::{check_well_formed, IrError};
pub use infer::{infer, infer_full, unify, Inferred, TypeError};
pub use passes::{parse_passes, run_pass, run_pipeline, Pass, PassContext, PassError, PipelineError};
