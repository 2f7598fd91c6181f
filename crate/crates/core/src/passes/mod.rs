//! Module-to-module optimization passes and the pipeline that runs them.
//!
//! Every pass takes a well-formed module and returns a new one; the pipeline
//! re-runs type inference after each step.

pub mod combine_conv;
pub mod cse;
pub mod dce;
pub mod fold;
pub mod fold_scale;
pub mod fuse;
pub mod layout;
pub mod pe;
pub mod quantize;
mod util;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::anf::function_to_anf;
use crate::exec::{Trap, Value};
use crate::infer::{infer, TypeError};
use crate::module::Module;

pub use combine_conv::combine_parallel_conv2d;
pub use cse::common_subexpr_elim;
pub use dce::dead_code_elim;
pub use fold::constant_fold;
pub use fold_scale::fold_axis_scale;
pub use fuse::{fuse_ops, DataflowDag};
pub use layout::{alter_op_layout, Layout};
pub use pe::{partial_eval, DEFAULT_PE_FUEL};
pub use quantize::{quant_annotate, quant_calibrate, quant_realize, QuantConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PassError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("FuelExhausted: partial evaluation exceeded {0} steps")]
    FuelExhausted(u64),
    #[error("MissingRule: no annotation rule for operator {0}")]
    MissingRule(String),
    #[error("CalibrationFailed: no scale in 2^-16..2^16 avoids overflow")]
    CalibrationFailed,
    #[error("calibration needs at least one input")]
    EmptyCalibration,
    #[error("Uncalibrated: simulated_quantize{0} has no scale")]
    Uncalibrated(crate::expr::Loc),
    #[error("UnsupportedLayout: {0}")]
    UnsupportedLayout(String),
    #[error("unknown pass `{0}`")]
    UnknownPass(String),
    #[error("bad value `{value}` for option {option}")]
    BadOption { option: String, value: String },
    #[error("evaluation failed: {0}")]
    Trap(#[from] Trap),
}

/// A named pass, as written on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pass {
    Fuse,
    Fold,
    Dce,
    Cse,
    Anf,
    Pe,
    Quantize,
    FoldScale,
    CombineConv,
    Layout(Layout),
}

impl FromStr for Pass {
    type Err = PassError;

    fn from_str(s: &str) -> Result<Pass, PassError> {
        Ok(match s.trim() {
            "fuse" => Pass::Fuse,
            "fold" => Pass::Fold,
            "dce" => Pass::Dce,
            "cse" => Pass::Cse,
            "anf" => Pass::Anf,
            "pe" => Pass::Pe,
            "quantize" => Pass::Quantize,
            "fold-scale" => Pass::FoldScale,
            "combine-conv" => Pass::CombineConv,
            other => match other.strip_prefix("layout=") {
                Some(l) => Pass::Layout(l.parse()?),
                None => return Err(PassError::UnknownPass(other.to_string())),
            },
        })
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pass::Fuse => f.write_str("fuse"),
            Pass::Fold => f.write_str("fold"),
            Pass::Dce => f.write_str("dce"),
            Pass::Cse => f.write_str("cse"),
            Pass::Anf => f.write_str("anf"),
            Pass::Pe => f.write_str("pe"),
            Pass::Quantize => f.write_str("quantize"),
            Pass::FoldScale => f.write_str("fold-scale"),
            Pass::CombineConv => f.write_str("combine-conv"),
            Pass::Layout(l) => write!(f, "layout={l}"),
        }
    }
}

/// Parses a comma-separated pass list.
pub fn parse_passes(s: &str) -> Result<Vec<Pass>, PassError> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

/// Pipeline configuration.
#[derive(Debug, Clone, Default)]
pub struct PassContext {
    pub passes: Vec<Pass>,
    /// Free-form options such as `fuse.max_depth`, `quant.bits`, `pe.fuel`.
    pub options: BTreeMap<String, String>,
    /// Entry point and argument lists used to calibrate quantization.
    pub entry: String,
    pub calibration: Vec<Vec<Value>>,
}

impl PassContext {
    pub fn new(passes: Vec<Pass>) -> PassContext {
        PassContext { passes, entry: String::from("main"), ..PassContext::default() }
    }

    pub fn option<T: FromStr>(&self, name: &str) -> Result<Option<T>, PassError> {
        match self.options.get(name) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| PassError::BadOption { option: name.to_string(), value: v.clone() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("pass {pass}: {error}")]
pub struct PipelineError {
    pub pass: String,
    pub error: PassError,
}

/// Every global converted to A-normal form.
pub fn to_anf_module(m: &Module) -> Module {
    m.map_globals(|_, f| function_to_anf(f))
}

/// Runs one pass on a typechecked module.
pub fn run_pass(m: &Module, pass: &Pass, ctx: &PassContext) -> Result<Module, PassError> {
    match pass {
        Pass::Fuse => fuse_ops(m, ctx.option("fuse.max_depth")?),
        Pass::Fold => Ok(constant_fold(m)),
        Pass::Dce => Ok(dead_code_elim(m)),
        Pass::Cse => Ok(common_subexpr_elim(m)),
        Pass::Anf => Ok(to_anf_module(m)),
        Pass::Pe => partial_eval(m, ctx.option("pe.fuel")?.unwrap_or(DEFAULT_PE_FUEL)),
        Pass::Quantize => {
            let mut cfg = QuantConfig::default();
            if let Some(bits) = ctx.option("quant.bits")? {
                cfg.bits = bits;
            }
            let annotated = infer(&quant_annotate(m, &cfg)?)?;
            let calibrated = quant_calibrate(&annotated, &ctx.entry, &ctx.calibration)?;
            quant_realize(&infer(&calibrated)?)
        }
        Pass::FoldScale => fold_axis_scale(m),
        Pass::CombineConv => combine_parallel_conv2d(m),
        Pass::Layout(l) => alter_op_layout(m, *l),
    }
}

/// Applies the passes in order, re-inferring types after each one.
pub fn run_pipeline(m: &Module, ctx: &PassContext) -> Result<Module, PipelineError> {
    let tag = |pass: &str, e: PassError| PipelineError { pass: pass.to_string(), error: e };
    let mut cur = infer(m).map_err(|e| tag("infer", e.into()))?;
    for pass in &ctx.passes {
        let name = pass.to_string();
        let next = run_pass(&cur, pass, ctx).map_err(|e| tag(&name, e))?;
        cur = infer(&next).map_err(|e| tag(&name, e.into()))?;
    }
    Ok(cur)
}
