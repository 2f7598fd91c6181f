//! Command-line driver.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use microrelay_core::expr::Call;
use microrelay_core::{
    infer, infer_full, parse_passes, run_pipeline, Attrs, Expr, ExprKind, Function, Interpreter, Module, PassContext,
    Type,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gen::random_args;
use crate::text::{parse_inputs, parse_module_named};
use crate::PRELUDE_SOURCE;

pub const VALID_PASSES: &str = "fuse, fold, dce, cse, anf, pe, quantize, fold-scale, combine-conv, layout=NCHW, layout=NHWC";

/// Number of random calibration vectors `opt` draws when none are given.
const CALIBRATION_SAMPLES: usize = 16;

#[derive(Debug, Parser)]
#[command(name = "microrelay", version, about = "Parse, check, optimize and run microrelay programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Typecheck a program and print the type of each global.
    Check { file: PathBuf },
    /// Run a pass pipeline and print the optimized program.
    Opt {
        file: PathBuf,
        /// Comma-separated pass names, applied in order.
        #[arg(long, default_value = "")]
        passes: String,
        /// Pass option as `key=value`, e.g. `pe.fuel=500`.
        #[arg(long = "option", value_name = "KEY=VALUE")]
        options: Vec<String>,
        #[arg(long, default_value = "main")]
        entry: String,
        /// Inputs file used as a calibration vector; may be repeated.
        #[arg(long = "calibrate", value_name = "FILE")]
        calibrate: Vec<PathBuf>,
        /// Seed for random calibration inputs when no file is given.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a global on the inputs in a file.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "main")]
        entry: String,
        /// File of `%param = expr` lines.
        #[arg(long)]
        inputs: Option<PathBuf>,
    },
    /// Reprint a program in canonical form.
    Fmt { file: PathBuf },
    /// Print the prelude source.
    Prelude,
}

/// Exit codes.
pub const OK: i32 = 0;
pub const DIAGNOSTIC: i32 = 1;
pub const IO_ERROR: i32 = 2;

pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn diag(e: impl Display) -> Failure {
    Failure { code: DIAGNOSTIC, message: format!("error: {e}") }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure { code: IO_ERROR, message: format!("error: cannot read {}: {e}", path.display()) })
}

fn load(path: &Path) -> Result<Module, Failure> {
    let text = read(path)?;
    parse_module_named(&text, &path.display().to_string()).map_err(diag)
}

fn fuel() -> Result<Option<u64>, Failure> {
    match std::env::var("MICRORELAY_FUEL") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Failure {
            code: IO_ERROR,
            message: format!("error: MICRORELAY_FUEL must be a non-negative integer, got `{v}`"),
        }),
        Err(_) => Ok(None),
    }
}

/// Runs a parsed command, writing its normal output to `out`.
pub fn execute(cmd: &Command, out: &mut dyn Write) -> Result<(), Failure> {
    let text = match cmd {
        Command::Check { file } => check(file)?,
        Command::Opt { file, passes, options, entry, calibrate, seed } => {
            opt(file, passes, options, entry, calibrate, *seed)?
        }
        Command::Run { file, entry, inputs } => run(file, entry, inputs.as_deref())?,
        Command::Fmt { file } => crate::print_module(&load(file)?),
        Command::Prelude => PRELUDE_SOURCE.to_string(),
    };
    writeln!(out, "{}", text.trim_end())
        .map_err(|e| Failure { code: IO_ERROR, message: format!("error: cannot write output: {e}") })
}

fn check(file: &Path) -> Result<String, Failure> {
    let m = load(file)?;
    let inferred = infer_full(&m).map_err(diag)?;
    let lines: Vec<String> = m
        .user_globals()
        .map(|(name, _)| format!("@{name}: {}", Type::Func(inferred.signatures[name].clone())))
        .collect();
    Ok(lines.join("\n"))
}

fn opt(
    file: &Path,
    passes: &str,
    options: &[String],
    entry: &str,
    calibrate: &[PathBuf],
    seed: u64,
) -> Result<String, Failure> {
    let passes = parse_passes(passes).map_err(|e| diag(format!("{e}; valid passes: {VALID_PASSES}")))?;
    let m = load(file)?;
    let mut ctx = PassContext::new(passes);
    ctx.entry = entry.to_string();
    for o in options {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure { code: IO_ERROR, message: format!("error: option `{o}` is not KEY=VALUE") })?;
        ctx.options.insert(k.to_string(), v.to_string());
    }
    if ctx.passes.contains(&microrelay_core::Pass::Quantize) {
        let typed = infer_full(&m).map_err(diag)?;
        if calibrate.is_empty() {
            let sig = typed.signatures.get(entry).ok_or_else(|| diag(format!("no global @{entry}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..CALIBRATION_SAMPLES {
                let args = random_args(&Type::Func(sig.clone()), &mut rng)
                    .ok_or_else(|| diag(format!("@{entry} needs concrete tensor parameters for calibration")))?;
                ctx.calibration.push(args);
            }
        } else {
            for path in calibrate {
                let (_, args) = evaluate_inputs(&m, entry, path)?;
                ctx.calibration.push(args);
            }
        }
    }
    let out = run_pipeline(&m, &ctx).map_err(diag)?;
    Ok(crate::print_module(&out))
}

/// Evaluates an inputs file and orders the values by `entry`'s parameters.
fn evaluate_inputs(m: &Module, entry: &str, path: &Path) -> Result<(Vec<Expr>, Vec<microrelay_core::Value>), Failure> {
    let f = m.globals.get(entry).ok_or_else(|| diag(format!("no global @{entry}")))?;
    let text = read(path)?;
    let parsed = parse_inputs(&text, &path.display().to_string(), m).map_err(diag)?;
    let by_name: BTreeMap<String, Expr> = parsed.into_iter().collect();
    let mut exprs = Vec::new();
    for p in &f.params {
        let e = by_name.get(p.var.name()).ok_or_else(|| diag(format!("missing input %{}", p.var.name())))?;
        exprs.push(e.clone());
    }
    let mut interp = Interpreter::new(m);
    let values = exprs.iter().map(|e| interp.eval_closed(e)).collect::<Result<Vec<_>, _>>().map_err(diag)?;
    Ok((exprs, values))
}

fn run(file: &Path, entry: &str, inputs: Option<&Path>) -> Result<String, Failure> {
    let mut m = load(file)?;
    let f: &Function = m.globals.get(entry).ok_or_else(|| diag(format!("no global @{entry}")))?;
    let args = match inputs {
        Some(path) => evaluate_inputs(&m, entry, path)?.0,
        None if f.params.is_empty() => Vec::new(),
        None => return Err(diag(format!("@{entry} takes {} parameters; pass them with --inputs", f.params.len()))),
    };
    // Typecheck the call itself so ill-shaped inputs fail before evaluation.
    let mut wrapper = String::from("__run");
    while m.globals.contains_key(&wrapper) {
        wrapper.push('_');
    }
    let call = Expr::new(ExprKind::Call(Call {
        callee: Expr::global(entry),
        type_args: Vec::new(),
        args,
        attrs: Attrs::new(),
    }));
    m.add_global(&wrapper, Function::new(Vec::new(), call)).map_err(diag)?;
    let typed = infer(&m).map_err(diag)?;
    let mut interp = Interpreter::new(&typed);
    if let Some(n) = fuel()? {
        interp = interp.with_fuel(n);
    }
    let v = interp.run(&wrapper, Vec::new()).map_err(diag)?;
    Ok(v.to_string())
}
