//! The expression language.
//!
//! Expressions are immutable trees of reference-counted nodes. Every node may
//! carry a source span (for diagnostics) and, after type inference, its type.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::attrs::{Attrs, PRIMITIVE};
use crate::tensor::Tensor;
use crate::ty::Type;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub file: Arc<str>,
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.start_line, self.start_col)
    }
}

/// Optional span rendered as ` at file:line:col` (or nothing).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Loc(pub Option<Span>);

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Some(span) => write!(f, " at {span}"),
            None => Ok(()),
        }
    }
}

static NEXT_VAR: AtomicUsize = AtomicUsize::new(1);

/// A local variable. Identity is the numeric id; the name is only a hint
/// for printing.
#[derive(Debug, Clone)]
pub struct Var {
    id: usize,
    name: Arc<str>,
}

impl Var {
    pub fn fresh(name: &str) -> Var {
        Var { id: NEXT_VAR.fetch_add(1, Ordering::Relaxed), name: Arc::from(name) }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl PartialEq for Var {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for Var {}

impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Var {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.id.cmp(&other.id)
    }
}

impl core::hash::Hash for Var {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.name)
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub var: Var,
    pub annotation: Option<Type>,
}

#[derive(Debug, Clone)]
pub struct Function {
    pub type_params: Vec<String>,
    pub params: Vec<Param>,
    pub ret_type: Option<Type>,
    pub body: Expr,
    pub attrs: Attrs,
}

impl Function {
    pub fn new(params: Vec<Param>, body: Expr) -> Function {
        Function { type_params: Vec::new(), params, ret_type: None, body, attrs: Attrs::new() }
    }

    pub fn is_primitive(&self) -> bool {
        self.attrs.flag(PRIMITIVE)
    }

    /// True when every parameter and the result carry annotations.
    pub fn is_fully_annotated(&self) -> bool {
        self.ret_type.is_some() && self.params.iter().all(|p| p.annotation.is_some())
    }
}

#[derive(Debug, Clone)]
pub struct Call {
    pub callee: Expr,
    pub type_args: Vec<Type>,
    pub args: Vec<Expr>,
    pub attrs: Attrs,
}

#[derive(Debug, Clone)]
pub struct Let {
    pub var: Var,
    pub annotation: Option<Type>,
    pub value: Expr,
    pub body: Expr,
}

#[derive(Debug, Clone)]
pub enum Pattern {
    Wildcard,
    Var(Var),
    Constructor { name: String, fields: Vec<Pattern> },
    Tuple(Vec<Pattern>),
}

impl Pattern {
    /// Variables bound by the pattern, left to right.
    pub fn bound_vars(&self, out: &mut Vec<Var>) {
        match self {
            Pattern::Wildcard => {}
            Pattern::Var(v) => out.push(v.clone()),
            Pattern::Constructor { fields, .. } | Pattern::Tuple(fields) => {
                fields.iter().for_each(|p| p.bound_vars(out))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Clause {
    pub pattern: Pattern,
    pub body: Expr,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Var(Var),
    Global(String),
    Constant(Arc<Tensor>),
    Call(Call),
    Let(Let),
    Function(Function),
    Tuple(Vec<Expr>),
    Proj(Expr, usize),
    If(Expr, Expr, Expr),
    Match(Expr, Vec<Clause>),
    Op(String),
    Constructor(String),
    RefNew(Expr),
    RefRead(Expr),
    RefWrite(Expr, Expr),
}

#[derive(Debug)]
pub struct ExprNode {
    pub kind: ExprKind,
    pub span: Option<Span>,
    pub ty: Option<Type>,
}

#[derive(Debug, Clone)]
pub struct Expr(Arc<ExprNode>);

impl Expr {
    pub fn new(kind: ExprKind) -> Expr {
        Expr(Arc::new(ExprNode { kind, span: None, ty: None }))
    }

    pub fn with_span(kind: ExprKind, span: Option<Span>) -> Expr {
        Expr(Arc::new(ExprNode { kind, span, ty: None }))
    }

    pub fn from_node(node: ExprNode) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn kind(&self) -> &ExprKind {
        &self.0.kind
    }

    pub fn span(&self) -> Option<&Span> {
        self.0.span.as_ref()
    }

    pub fn loc(&self) -> crate::expr::Loc {
        Loc(self.0.span.clone())
    }

    /// Type assigned by the last inference run, if any.
    pub fn ty(&self) -> Option<&Type> {
        self.0.ty.as_ref()
    }

    /// Same node with a different kind; span is kept, type is dropped.
    pub fn rebuild(&self, kind: ExprKind) -> Expr {
        Expr::with_span(kind, self.0.span.clone())
    }

    pub fn with_type(&self, ty: Option<Type>) -> Expr {
        Expr(Arc::new(ExprNode { kind: self.0.kind.clone(), span: self.0.span.clone(), ty }))
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Rebuilds the node's kind with every direct subexpression replaced by
    /// `f`, visiting children left to right.
    pub fn try_map_children<E>(&self, f: &mut dyn FnMut(&Expr) -> Result<Expr, E>) -> Result<ExprKind, E> {
        Ok(match self.kind() {
            ExprKind::Var(_) | ExprKind::Global(_) | ExprKind::Constant(_) | ExprKind::Op(_) | ExprKind::Constructor(_) => {
                self.kind().clone()
            }
            ExprKind::Call(c) => {
                let callee = f(&c.callee)?;
                let args = c.args.iter().map(|a| f(a)).collect::<Result<_, _>>()?;
                ExprKind::Call(Call { callee, type_args: c.type_args.clone(), args, attrs: c.attrs.clone() })
            }
            ExprKind::Let(l) => {
                let value = f(&l.value)?;
                ExprKind::Let(Let { var: l.var.clone(), annotation: l.annotation.clone(), value, body: f(&l.body)? })
            }
            ExprKind::Function(func) => ExprKind::Function(Function { body: f(&func.body)?, ..func.clone() }),
            ExprKind::Tuple(fields) => ExprKind::Tuple(fields.iter().map(|x| f(x)).collect::<Result<_, _>>()?),
            ExprKind::Proj(t, i) => ExprKind::Proj(f(t)?, *i),
            ExprKind::If(c, t, e) => {
                let c = f(c)?;
                let t = f(t)?;
                ExprKind::If(c, t, f(e)?)
            }
            ExprKind::Match(s, clauses) => {
                let s = f(s)?;
                let clauses = clauses
                    .iter()
                    .map(|cl| Ok(Clause { pattern: cl.pattern.clone(), body: f(&cl.body)? }))
                    .collect::<Result<_, E>>()?;
                ExprKind::Match(s, clauses)
            }
            ExprKind::RefNew(x) => ExprKind::RefNew(f(x)?),
            ExprKind::RefRead(x) => ExprKind::RefRead(f(x)?),
            ExprKind::RefWrite(r, v) => {
                let r = f(r)?;
                ExprKind::RefWrite(r, f(v)?)
            }
        })
    }

    /// Infallible form of [`Expr::try_map_children`], returning a rebuilt
    /// node (span kept, type dropped). A node whose children all come back
    /// unchanged is returned as is, type included.
    pub fn map_children(&self, f: &mut dyn FnMut(&Expr) -> Expr) -> Expr {
        let mut same = true;
        let kind = self
            .try_map_children::<core::convert::Infallible>(&mut |e| {
                let out = f(e);
                same &= out.ptr_eq(e);
                Ok(out)
            })
            .unwrap_or_else(|e| match e {});
        if same {
            return self.clone();
        }
        self.rebuild(kind)
    }

    // Construction helpers.

    pub fn var(v: &Var) -> Expr {
        Expr::new(ExprKind::Var(v.clone()))
    }

    pub fn global(name: &str) -> Expr {
        Expr::new(ExprKind::Global(String::from(name)))
    }

    pub fn constant(t: Tensor) -> Expr {
        Expr::new(ExprKind::Constant(Arc::new(t)))
    }

    pub fn op(name: &str) -> Expr {
        Expr::new(ExprKind::Op(String::from(name)))
    }

    pub fn call(callee: Expr, args: Vec<Expr>) -> Expr {
        Expr::new(ExprKind::Call(Call { callee, type_args: Vec::new(), args, attrs: Attrs::new() }))
    }

    pub fn call_op(name: &str, args: Vec<Expr>, attrs: Attrs) -> Expr {
        Expr::new(ExprKind::Call(Call { callee: Expr::op(name), type_args: Vec::new(), args, attrs }))
    }

    pub fn let_(var: Var, value: Expr, body: Expr) -> Expr {
        Expr::new(ExprKind::Let(Let { var, annotation: None, value, body }))
    }

    pub fn function(f: Function) -> Expr {
        Expr::new(ExprKind::Function(f))
    }

    pub fn tuple(fields: Vec<Expr>) -> Expr {
        Expr::new(ExprKind::Tuple(fields))
    }

    pub fn proj(tuple: Expr, index: usize) -> Expr {
        Expr::new(ExprKind::Proj(tuple, index))
    }

    pub fn if_(cond: Expr, then: Expr, else_: Expr) -> Expr {
        Expr::new(ExprKind::If(cond, then, else_))
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self.kind() {
            ExprKind::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_constant(&self) -> Option<&Arc<Tensor>> {
        match self.kind() {
            ExprKind::Constant(t) => Some(t),
            _ => None,
        }
    }

    /// Operator name and call if this is a direct operator call.
    pub fn as_op_call(&self) -> Option<(&str, &Call)> {
        match self.kind() {
            ExprKind::Call(call) => match call.callee.kind() {
                ExprKind::Op(name) => Some((name.as_str(), call)),
                _ => None,
            },
            _ => None,
        }
    }

    /// Variables, globals, constants, operator and constructor references,
    /// and function literals need no evaluation step of their own.
    pub fn is_atom(&self) -> bool {
        matches!(
            self.kind(),
            ExprKind::Var(_)
                | ExprKind::Global(_)
                | ExprKind::Constant(_)
                | ExprKind::Op(_)
                | ExprKind::Constructor(_)
                | ExprKind::Function(_)
        )
    }
}

/// Collects a chain of nested lets into `(bindings, tail)`.
pub fn flatten_lets(e: &Expr) -> (Vec<(Var, Option<Type>, Expr)>, Expr) {
    let mut bindings = Vec::new();
    let mut cur = e.clone();
    loop {
        let next = match cur.kind() {
            ExprKind::Let(l) => {
                bindings.push((l.var.clone(), l.annotation.clone(), l.value.clone()));
                l.body.clone()
            }
            _ => break,
        };
        cur = next;
    }
    (bindings, cur)
}

/// Inverse of [`flatten_lets`].
pub fn build_lets(bindings: Vec<(Var, Option<Type>, Expr)>, tail: Expr) -> Expr {
    bindings.into_iter().rev().fold(tail, |body, (var, annotation, value)| {
        Expr::new(ExprKind::Let(Let { var, annotation, value, body }))
    })
}
